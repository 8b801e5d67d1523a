#include "conceptscope/bundle_io.hpp"

#include "conceptscope/digest.hpp"
#include "conceptscope/error.hpp"
#include "conceptscope/textio.hpp"

#include <json.hpp>

namespace cscope {

using nlohmann::json;

std::string bundle_to_json(const ProjectionBundle& b) {
    b.validate();
    json j;
    j["format"] = "conceptscope-bundle/1";
    j["classes"] = b.class_names;
    const Eigen::Index k = b.dim();
    json points = json::array();
    for (Eigen::Index i = 0; i < b.size(); ++i) {
        json z = json::array();
        for (Eigen::Index c = 0; c < k; ++c) z.push_back(b.points(i, c));
        json p = {{"id", b.ids[static_cast<std::size_t>(i)]}, {"z", std::move(z)}, {"label", b.labels[static_cast<std::size_t>(i)]}};
        if (!b.thumbnails.empty() && !b.thumbnails[static_cast<std::size_t>(i)].empty()) {
            p["thumbnail"] = b.thumbnails[static_cast<std::size_t>(i)];
        }
        points.push_back(std::move(p));
    }
    j["points"] = std::move(points);
    json grads = json::array();
    for (Eigen::Index i = 0; i < b.size(); ++i) {
        json per_class = json::array();
        for (Eigen::Index c = 0; c < b.num_classes(); ++c) {
            const auto g = b.gradients.at(i, c);
            per_class.push_back(std::vector<double>(g.data(), g.data() + g.size()));
        }
        grads.push_back(std::move(per_class));
    }
    j["gradients"] = std::move(grads);
    j["variance_ratios"] = std::vector<double>(b.pca.variance_ratio.data(), b.pca.variance_ratio.data() + k);
    j["gradient_kind"] = std::string(to_string(b.gradient_kind));
    json comps = json::array();
    for (Eigen::Index c = 0; c < k; ++c) {
        const Vector col = b.pca.components.col(c);
        comps.push_back(std::vector<double>(col.data(), col.data() + col.size()));
    }
    j["pca"] = {{"mean", std::vector<double>(b.pca.mean.data(), b.pca.mean.data() + b.pca.mean.size())},
                {"components", std::move(comps)},
                {"explained_variance",
                 std::vector<double>(b.pca.explained_variance.data(), b.pca.explained_variance.data() + k)},
                {"total_variance", b.pca.total_variance}};
    return j.dump();
}

namespace {

Vector to_vector(const json& j, const char* what) {
    if (!j.is_array()) throw IoError(std::string("bundle: '") + what + "' must be an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

} // namespace

ProjectionBundle bundle_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("bundle JSON: ") + e.what());
    }
    try {
        ProjectionBundle b;
        b.class_names = j.at("classes").get<std::vector<std::string>>();
        const auto& points = j.at("points");
        const auto m = static_cast<Eigen::Index>(points.size());
        const auto& pca = j.at("pca");
        const auto& comps = pca.at("components");
        const auto k = static_cast<Eigen::Index>(comps.size());
        b.pca.mean = to_vector(pca.at("mean"), "pca.mean");
        const Eigen::Index n = b.pca.mean.size();
        b.pca.components.resize(n, k);
        for (Eigen::Index c = 0; c < k; ++c) {
            const Vector col = to_vector(comps[static_cast<std::size_t>(c)], "pca.components");
            if (col.size() != n) throw ShapeError("bundle: component length differs from the mean length");
            b.pca.components.col(c) = col;
        }
        b.pca.variance_ratio = to_vector(j.at("variance_ratios"), "variance_ratios");
        b.pca.explained_variance = to_vector(pca.at("explained_variance"), "pca.explained_variance");
        b.pca.total_variance = pca.at("total_variance").get<double>();

        b.points.resize(m, k);
        bool any_thumb = false;
        std::vector<std::string> thumbs(static_cast<std::size_t>(m));
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto& p = points[static_cast<std::size_t>(i)];
            b.ids.push_back(p.at("id").get<std::string>());
            b.labels.push_back(p.at("label").get<int>());
            const auto& z = p.at("z");
            if (static_cast<Eigen::Index>(z.size()) != k) {
                throw ShapeError("bundle: point " + std::to_string(i) + " has " + std::to_string(z.size()) +
                                 " coordinates, expected " + std::to_string(k));
            }
            for (Eigen::Index c = 0; c < k; ++c) b.points(i, c) = z[static_cast<std::size_t>(c)].get<double>();
            if (p.contains("thumbnail")) {
                thumbs[static_cast<std::size_t>(i)] = p["thumbnail"].get<std::string>();
                any_thumb = true;
            }
        }
        if (any_thumb) b.thumbnails = std::move(thumbs);

        const auto K = b.num_classes();
        const auto& grads = j.at("gradients");
        if (static_cast<Eigen::Index>(grads.size()) != m) throw ShapeError("bundle: gradient rows differ from point count");
        b.gradients = GradientTensor(m, K, k);
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto& per_class = grads[static_cast<std::size_t>(i)];
            if (static_cast<Eigen::Index>(per_class.size()) != K) {
                throw ShapeError("bundle: point " + std::to_string(i) + " has gradients for " +
                                 std::to_string(per_class.size()) + " classes, expected " + std::to_string(K));
            }
            for (Eigen::Index c = 0; c < K; ++c) {
                const auto& g = per_class[static_cast<std::size_t>(c)];
                if (static_cast<Eigen::Index>(g.size()) != k) throw ShapeError("bundle: gradient length differs from k");
                auto dst = b.gradients.at(i, c);
                for (Eigen::Index t = 0; t < k; ++t) dst(t) = g[static_cast<std::size_t>(t)].get<double>();
            }
        }
        b.gradient_kind = parse_gradient_kind(j.at("gradient_kind").get<std::string>());
        b.validate();
        return b;
    } catch (const json::exception& e) {
        throw IoError(std::string("bundle JSON: ") + e.what());
    }
}

ProjectionBundle load_bundle(const std::filesystem::path& path) {
    try {
        return bundle_from_json(read_file(path));
    } catch (const Error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void static_export(const ProjectionBundle& bundle, const std::filesystem::path& out_dir) {
    const std::string body = bundle_to_json(bundle);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    write_file(out_dir / kBundleFile, body);
    std::vector<std::size_t> counts(static_cast<std::size_t>(bundle.num_classes()), 0);
    for (int y : bundle.labels) ++counts[static_cast<std::size_t>(y)];
    json index = {{"format", "conceptscope-static/1"},
                  {"bundle", kBundleFile},
                  {"bundle_bytes", body.size()},
                  {"bundle_sha256", sha256_hex(body)},
                  {"points", bundle.size()},
                  {"components", bundle.dim()},
                  {"classes", bundle.class_names},
                  {"class_counts", counts},
                  {"gradient_kind", std::string(to_string(bundle.gradient_kind))},
                  {"thumbnails", !bundle.thumbnails.empty()}};
    write_file(out_dir / kIndexFile, index.dump(2) + "\n");
}

} // namespace cscope
