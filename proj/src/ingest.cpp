#include "conceptscope/ingest.hpp"

#include "conceptscope/error.hpp"
#include "conceptscope/textio.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cscope {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string shape_str(std::initializer_list<Eigen::Index> dims) {
    std::string s;
    for (auto d : dims) s += (s.empty() ? "" : "x") + std::to_string(d);
    return s;
}

float load_le_float(const char* p) {
    std::uint32_t u = 0;
    std::memcpy(&u, p, 4);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    return std::bit_cast<float>(u);
}

void store_le_float(char* p, double x) {
    auto u = std::bit_cast<std::uint32_t>(static_cast<float>(x));
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    std::memcpy(p, &u, 4);
}

json read_sidecar(const fs::path& binary) {
    const auto side = sidecar_path(binary);
    try {
        return json::parse(read_file(side));
    } catch (const json::exception& e) {
        throw IoError(side.string() + ": " + e.what());
    }
}

Eigen::Index sidecar_dim(const json& j, const char* key, const fs::path& binary) {
    if (!j.contains(key) || !j[key].is_number_integer() || j[key].get<long long>() < 0) {
        throw IoError(sidecar_path(binary).string() + ": missing or invalid '" + key + "'");
    }
    return static_cast<Eigen::Index>(j[key].get<long long>());
}

void check_file_size(const fs::path& path, std::uintmax_t expected_values, const std::string& shape) {
    std::error_code ec;
    const auto bytes = fs::file_size(path, ec);
    if (ec) throw IoError("cannot stat " + path.string() + ": " + ec.message());
    if (bytes != expected_values * 4) {
        throw ShapeError(path.string() + ": sidecar declares " + shape + " (" + std::to_string(expected_values * 4) +
                         " bytes) but file has " + std::to_string(bytes) + " bytes");
    }
}

bool looks_numeric(std::string_view tok) {
    try {
        parse_real(trim(tok), "value");
        return true;
    } catch (const ConfigError&) {
        return false;
    }
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        lines.push_back(line);
    }
    return lines;
}

} // namespace

fs::path sidecar_path(const fs::path& binary) { return fs::path(binary.string() + ".json"); }

Matrix read_matrix_csv(const fs::path& path) {
    const auto lines = read_lines(path);
    std::size_t first = 0;
    if (!lines.empty() && !looks_numeric(split(lines[0], ',').front())) first = 1;
    const auto rows = static_cast<Eigen::Index>(lines.size() - first);
    Eigen::Index cols = -1;
    Matrix X;
    for (std::size_t l = first; l < lines.size(); ++l) {
        const auto toks = split(lines[l], ',');
        if (cols < 0) {
            cols = static_cast<Eigen::Index>(toks.size());
            X.resize(rows, cols);
        } else if (static_cast<Eigen::Index>(toks.size()) != cols) {
            throw ShapeError(path.string() + ":" + std::to_string(l + 1) + ": expected " + std::to_string(cols) +
                             " columns, found " + std::to_string(toks.size()));
        }
        const auto r = static_cast<Eigen::Index>(l - first);
        for (Eigen::Index c = 0; c < cols; ++c) {
            try {
                X(r, c) = parse_real(trim(toks[static_cast<std::size_t>(c)]), "value");
            } catch (const ConfigError& e) {
                throw IoError(path.string() + ":" + std::to_string(l + 1) + ": " + e.what());
            }
        }
    }
    if (rows == 0) throw IoError(path.string() + ": no data rows");
    return X;
}

void write_matrix_csv(const fs::path& path, const Matrix& X) {
    std::string out;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            if (j) out += ',';
            out += format_real17(X(i, j));
        }
        out += '\n';
    }
    write_file(path, out);
}

Matrix read_f32_matrix(const fs::path& path) {
    const auto side = read_sidecar(path);
    const auto rows = sidecar_dim(side, "rows", path);
    const auto cols = sidecar_dim(side, "cols", path);
    check_file_size(path, static_cast<std::uintmax_t>(rows * cols), shape_str({rows, cols}));
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    Matrix X(rows, cols);
    std::vector<char> buf(static_cast<std::size_t>(cols) * 4);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (!in.read(buf.data(), static_cast<std::streamsize>(buf.size()))) throw IoError(path.string() + ": truncated");
        for (Eigen::Index j = 0; j < cols; ++j) X(i, j) = load_le_float(buf.data() + 4 * j);
    }
    return X;
}

void write_f32_matrix(const fs::path& path, const Matrix& X) {
    std::string bytes(static_cast<std::size_t>(X.size()) * 4, '\0');
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < X.cols(); ++j) store_le_float(bytes.data() + 4 * (i * X.cols() + j), X(i, j));
    write_file(path, bytes);
    write_file(sidecar_path(path), json{{"rows", X.rows()}, {"cols", X.cols()}}.dump() + "\n");
}

void write_f32_gradients(const fs::path& path, const GradientTensor& g) {
    const auto data = g.data();
    std::string bytes(data.size() * 4, '\0');
    for (std::size_t i = 0; i < data.size(); ++i) store_le_float(bytes.data() + 4 * i, data[i]);
    write_file(path, bytes);
    write_file(sidecar_path(path),
               json{{"rows", g.rows()}, {"classes", g.classes()}, {"cols", g.cols()}}.dump() + "\n");
}

MatrixHeader read_gradient_header(const fs::path& binary) {
    const auto side = read_sidecar(binary);
    MatrixHeader h{sidecar_dim(side, "rows", binary), sidecar_dim(side, "classes", binary),
                   sidecar_dim(side, "cols", binary)};
    check_file_size(binary, static_cast<std::uintmax_t>(h.rows * h.classes * h.cols),
                    shape_str({h.rows, h.classes, h.cols}));
    return h;
}

Matrix read_features(const fs::path& path) {
    if (path.extension() == ".csv" || !fs::exists(sidecar_path(path))) return read_matrix_csv(path);
    return read_f32_matrix(path);
}

std::vector<int> read_labels(const fs::path& path) {
    const auto lines = read_lines(path);
    std::vector<int> labels;
    for (std::size_t l = 0; l < lines.size(); ++l) {
        const auto tok = trim(split(lines[l], ',').front());
        if (l == 0 && !looks_numeric(tok)) continue;
        try {
            const auto y = parse_int(tok, "label");
            if (y < 0) throw ConfigError("label must be nonnegative");
            labels.push_back(static_cast<int>(y));
        } catch (const ConfigError& e) {
            throw IoError(path.string() + ":" + std::to_string(l + 1) + ": " + e.what());
        }
    }
    return labels;
}

ProjectionBundle ingest(const IngestSpec& spec) {
    const Matrix X = read_features(spec.features);
    const Eigen::Index m = X.rows(), n = X.cols();
    auto labels = read_labels(spec.labels);
    if (static_cast<Eigen::Index>(labels.size()) != m) {
        throw ShapeError("labels: expected " + std::to_string(m) + " rows (from features), found " +
                         std::to_string(labels.size()));
    }

    const bool csv_grads = spec.gradients.extension() == ".csv" || !fs::exists(sidecar_path(spec.gradients));
    Eigen::Index K = static_cast<Eigen::Index>(spec.class_names.size());
    MatrixHeader h;
    Matrix grad_csv;
    if (csv_grads) {
        if (K == 0) throw ConfigError("class names are required when gradients are given as CSV");
        grad_csv = read_matrix_csv(spec.gradients);
        h = {grad_csv.rows(), K, K ? grad_csv.cols() / K : 0};
        if (grad_csv.rows() != m || grad_csv.cols() != K * n) {
            throw ShapeError("gradients: expected " + shape_str({m, K * n}) + " (m x K*n), found " +
                             shape_str({grad_csv.rows(), grad_csv.cols()}));
        }
    } else {
        h = read_gradient_header(spec.gradients);
        if (K == 0) K = h.classes;
        if (h.rows != m || h.classes != K || h.cols != n) {
            throw ShapeError("gradients: expected " + shape_str({m, K, n}) + " (m x K x n), found " +
                             shape_str({h.rows, h.classes, h.cols}));
        }
    }
    auto names = spec.class_names;
    if (names.empty())
        for (Eigen::Index k = 0; k < K; ++k) names.push_back(std::to_string(k));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= K) {
            throw ShapeError("labels: row " + std::to_string(i + 1) + " has label " + std::to_string(labels[i]) +
                             " but only " + std::to_string(K) + " classes are declared");
        }
    }

    std::vector<std::string> thumbs;
    if (!spec.thumbnails.empty()) {
        thumbs = read_lines(spec.thumbnails);
        if (!thumbs.empty() && trim(thumbs.front()) == "thumbnail") thumbs.erase(thumbs.begin());
        if (static_cast<Eigen::Index>(thumbs.size()) != m) {
            throw ShapeError("thumbnails: expected " + std::to_string(m) + " rows, found " +
                             std::to_string(thumbs.size()));
        }
        for (auto& t : thumbs) t = std::string(trim(t));
    }

    PcaModel pca = fit_bundle_pca(X, spec.options);
    GradientTensor projected(m, K, pca.dim());
    Vector g(n);
    if (csv_grads) {
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index k = 0; k < K; ++k) {
                g = grad_csv.row(i).segment(k * n, n).transpose();
                projected.at(i, k) = project_gradient(pca, g);
            }
    } else {
        std::ifstream in(spec.gradients, std::ios::binary);
        if (!in) throw IoError("cannot open " + spec.gradients.string());
        std::vector<char> buf(static_cast<std::size_t>(K * n) * 4);
        for (Eigen::Index i = 0; i < m; ++i) {
            if (!in.read(buf.data(), static_cast<std::streamsize>(buf.size())))
                throw IoError(spec.gradients.string() + ": truncated at sample " + std::to_string(i));
            for (Eigen::Index k = 0; k < K; ++k) {
                for (Eigen::Index j = 0; j < n; ++j) g(j) = load_le_float(buf.data() + 4 * (k * n + j));
                projected.at(i, k) = project_gradient(pca, g);
            }
        }
    }
    auto bundle = assemble_bundle(std::move(pca), X, std::move(projected), std::move(labels), std::move(names),
                                  spec.options.gradient_kind);
    bundle.thumbnails = std::move(thumbs);
    bundle.validate();
    return bundle;
}

} // namespace cscope
