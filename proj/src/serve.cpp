#include "conceptscope/serve.hpp"

#include "conceptscope/error.hpp"
#include "conceptscope/textio.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace cscope {

using nlohmann::json;

namespace {

HttpReply json_reply(int status, const json& body) { return {status, body.dump(), "application/json; charset=utf-8"}; }

HttpReply bad_request(const std::string& message) { return json_reply(400, {{"error", message}}); }

} // namespace

std::vector<double> parse_vector(std::string_view text) {
    if (trim(text).empty()) throw ConfigError("vector is empty");
    std::vector<double> v;
    for (const auto& tok : split(text, ',')) {
        const double x = parse_real(trim(tok), "vector component");
        if (!std::isfinite(x)) throw ConfigError("vector component is not finite");
        v.push_back(x);
    }
    return v;
}

std::vector<std::size_t> cone_members(const ProjectionBundle& bundle, std::span<const double> v, double angle_deg) {
    if (static_cast<Eigen::Index>(v.size()) != bundle.dim()) {
        throw ShapeError("concept vector has length " + std::to_string(v.size()) + ", bundle has " +
                         std::to_string(bundle.dim()) + " components");
    }
    if (!(angle_deg > 0.0 && angle_deg <= 180.0)) throw ConfigError("angle must be in (0, 180]");
    double vn = 0.0;
    for (double x : v) vn += x * x;
    vn = std::sqrt(vn);
    if (vn == 0.0) throw DegenerateError("concept vector must be nonzero");

    const double cos_limit = angle_deg >= 180.0 ? -2.0 : std::cos(angle_deg * std::numbers::pi / 180.0);
    std::vector<double> align(static_cast<std::size_t>(bundle.size()));
    std::vector<std::size_t> members;
    for (Eigen::Index i = 0; i < bundle.size(); ++i) {
        double dot = 0.0, zn = 0.0;
        for (Eigen::Index c = 0; c < bundle.dim(); ++c) {
            const double z = bundle.points(i, c);
            dot += z * v[static_cast<std::size_t>(c)];
            zn += z * z;
        }
        zn = std::sqrt(zn);
        const double cosine = zn == 0.0 ? 0.0 : std::clamp(dot / (zn * vn), -1.0, 1.0);
        align[static_cast<std::size_t>(i)] = cosine;
        if (cosine >= cos_limit) members.push_back(static_cast<std::size_t>(i));
    }
    std::stable_sort(members.begin(), members.end(),
                     [&](std::size_t a, std::size_t b) { return align[a] > align[b]; });
    return members;
}

BundleService::BundleService(ProjectionBundle bundle, std::filesystem::path thumbnail_root)
    : bundle_(std::move(bundle)), thumbnail_root_(std::move(thumbnail_root)) {
    bundle_.validate();
    std::vector<std::size_t> counts(static_cast<std::size_t>(bundle_.num_classes()), 0);
    for (int y : bundle_.labels) ++counts[static_cast<std::size_t>(y)];
    const auto& r = bundle_.pca.variance_ratio;
    meta_body_ = json{{"classes", bundle_.class_names},
                      {"counts", counts},
                      {"n_points", bundle_.size()},
                      {"components", bundle_.dim()},
                      {"variance_ratios", std::vector<double>(r.data(), r.data() + r.size())},
                      {"gradient_kind", std::string(to_string(bundle_.gradient_kind))},
                      {"thumbnails", !bundle_.thumbnails.empty()}}
                     .dump();
    json pts = json::array();
    for (Eigen::Index i = 0; i < bundle_.size(); ++i) {
        json z = json::array();
        for (Eigen::Index c = 0; c < bundle_.dim(); ++c) z.push_back(bundle_.points(i, c));
        pts.push_back({{"id", bundle_.ids[static_cast<std::size_t>(i)]},
                       {"z", std::move(z)},
                       {"label", bundle_.labels[static_cast<std::size_t>(i)]}});
    }
    points_body_ = json{{"points", std::move(pts)}}.dump();
}

HttpReply BundleService::meta() const { return {200, meta_body_}; }

HttpReply BundleService::points() const { return {200, points_body_}; }

int BundleService::resolve_class(const std::string& text) const {
    const auto& names = bundle_.class_names;
    if (const auto it = std::find(names.begin(), names.end(), text); it != names.end()) {
        return static_cast<int>(it - names.begin());
    }
    long long k = -1;
    try {
        k = parse_int(trim(text), "class");
    } catch (const ConfigError&) {
        throw ConfigError("unknown class '" + text + "'");
    }
    if (k < 0 || k >= bundle_.num_classes()) throw ConfigError("unknown class '" + text + "'");
    return static_cast<int>(k);
}

HttpReply BundleService::score(const std::optional<std::string>& cls, const std::optional<std::string>& v) const {
    if (!cls) return bad_request("missing parameter 'class'");
    if (!v) return bad_request("missing parameter 'v'");
    try {
        const int k = resolve_class(*cls);
        const auto vec = parse_vector(*v);
        const auto s = projected_tcav(bundle_, vec, k);
        json ids = json::array();
        for (auto i : s.point_index) ids.push_back(bundle_.ids[i]);
        return json_reply(200, {{"class", k},
                                {"class_name", bundle_.class_names[static_cast<std::size_t>(k)]},
                                {"score", s.score},
                                {"n", s.per_point.size()},
                                {"ids", std::move(ids)},
                                {"scores", s.per_point}});
    } catch (const Error& e) {
        return bad_request(e.what());
    }
}

HttpReply BundleService::cone(const std::optional<std::string>& v, const std::optional<std::string>& angle,
                              const std::optional<std::string>& cls) const {
    if (!v) return bad_request("missing parameter 'v'");
    if (!angle) return bad_request("missing parameter 'angle'");
    try {
        const auto vec = parse_vector(*v);
        const double deg = parse_real(trim(*angle), "angle");
        const std::optional<int> only = cls ? std::optional<int>(resolve_class(*cls)) : std::nullopt;
        json ids = json::array();
        for (auto i : cone_members(bundle_, vec, deg)) {
            if (only && bundle_.labels[i] != *only) continue;
            ids.push_back(bundle_.ids[i]);
        }
        return json_reply(200, {{"angle", deg}, {"count", ids.size()}, {"ids", std::move(ids)}});
    } catch (const Error& e) {
        return bad_request(e.what());
    }
}

HttpReply BundleService::thumbnail(const std::string& id) const {
    const auto not_found = [&] { return json_reply(404, {{"error", "no thumbnail for '" + id + "'"}}); };
    if (bundle_.thumbnails.empty()) return not_found();
    const auto it = std::find(bundle_.ids.begin(), bundle_.ids.end(), id);
    if (it == bundle_.ids.end()) return not_found();
    const auto& rel = bundle_.thumbnails[static_cast<std::size_t>(it - bundle_.ids.begin())];
    if (rel.empty()) return not_found();
    const std::filesystem::path rel_path(rel);
    // Only paths below the thumbnail root are served.
    if (rel_path.is_absolute() || std::any_of(rel_path.begin(), rel_path.end(), [](const auto& p) { return p == ".."; })) {
        return not_found();
    }
    const auto path = thumbnail_root_ / rel_path;
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) return not_found();
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    std::string type = "application/octet-stream";
    if (ext == ".png") type = "image/png";
    else if (ext == ".jpg" || ext == ".jpeg") type = "image/jpeg";
    else if (ext == ".gif") type = "image/gif";
    else if (ext == ".svg") type = "image/svg+xml";
    else if (ext == ".webp") type = "image/webp";
    try {
        return {200, read_file(path), type};
    } catch (const IoError&) {
        return not_found();
    }
}

struct BundleServer::Impl {
    const BundleService& service;
    httplib::Server server;
    explicit Impl(const BundleService& s) : service(s) {}
};

namespace {

std::optional<std::string> param(const httplib::Request& req, const char* name) {
    if (!req.has_param(name)) return std::nullopt;
    return req.get_param_value(name);
}

void send(httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
}

} // namespace

BundleServer::BundleServer(const BundleService& service) : impl_(std::make_unique<Impl>(service)) {
    auto& srv = impl_->server;
    const auto& svc = impl_->service;
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Methods", "GET, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});
    srv.Get("/meta", [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.meta()); });
    srv.Get("/points", [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.points()); });
    srv.Get("/score", [&svc](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.score(param(req, "class"), param(req, "v")));
    });
    srv.Get("/cone", [&svc](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.cone(param(req, "v"), param(req, "angle"), param(req, "class")));
    });
    srv.Get(R"(/thumbnails/(.+))", [&svc](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.thumbnail(req.matches[1]));
    });
    srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            if (ep) std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(json{{"error", what}}.dump(), "application/json; charset=utf-8");
    });
}

BundleServer::~BundleServer() { stop(); }

int BundleServer::bind(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void BundleServer::listen() { impl_->server.listen_after_bind(); }

void BundleServer::stop() {
    if (impl_) impl_->server.stop();
}

} // namespace cscope
