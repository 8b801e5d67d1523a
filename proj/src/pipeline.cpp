#include "conceptscope/pipeline.hpp"

#include "conceptscope/bundle_io.hpp"
#include "conceptscope/digest.hpp"
#include "conceptscope/log.hpp"
#include "conceptscope/reduce.hpp"
#include "conceptscope/rng.hpp"
#include "conceptscope/textio.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <ctime>
#include <sstream>

namespace cscope {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

void PipelineConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
    if (samples < 10) fail("samples", "must be at least 10");
    if (hidden < 1) fail("hidden", "must be positive");
    if (epochs < 1) fail("epochs", "must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate", "must be a positive real");
    if (directions < 1) fail("directions", "must be positive");
    try {
        parse_statistic(statistic);
    } catch (const Error&) {
        fail("statistic", "expected 'sd' or 'tcav', got '" + statistic + "'");
    }
    if (scope != "all" && scope != "class") fail("scope", "expected 'all' or 'class', got '" + scope + "'");
    for (const auto& [field, value] : {std::pair{"score_kind", score_kind}, std::pair{"bundle_kind", bundle_kind}}) {
        try {
            parse_gradient_kind(value);
        } catch (const Error&) {
            fail(field, "expected 'probability' or 'logit', got '" + value + "'");
        }
    }
    if (!(alpha >= 0.0 && alpha < 1.0)) fail("alpha", "must be in [0, 1)");
    if (statistic == "sd" && directions < 50) fail("directions", "the local FDR screen needs at least 50 directions");
    if (null_directions < 1) fail("null_directions", "must be positive");
    if (clusters < 1 || static_cast<std::size_t>(clusters) > samples) fail("clusters", "must be in [1, samples]");
    if (cluster_feature < 0 || cluster_feature >= hidden) fail("cluster_feature", "must be in [0, hidden)");
    if (components < 1 || components > hidden) fail("components", "must be in [1, hidden]");
    if (fit_sample != 0 && fit_sample <= static_cast<std::size_t>(components))
        fail("fit_sample", "must be 0 (all rows) or exceed components");
}

namespace {

template <class T>
void take(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    const auto& v = j[key];
    try {
        if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError("expected a string");
            out = v.get<std::string>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError("expected a number");
            out = v.get<T>();
        } else {
            if (!v.is_number_integer()) throw ConfigError("expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (!v.is_number_unsigned()) throw ConfigError("expected a nonnegative integer");
            }
            out = v.get<T>();
        }
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "seed",  "samples",         "hidden",   "epochs",          "learning_rate", "directions",
        "statistic", "scope",       "score_kind", "alpha",         "null_directions", "clusters",
        "cluster_feature", "components", "fit_sample", "bundle_kind"};
    return keys;
}

} // namespace

void apply_config_json(PipelineConfig& c, const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        // byte offset -> line/column
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError("config: syntax error at line " + std::to_string(line) + ", column " + std::to_string(col));
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    for (const auto& [key, _] : j.items()) {
        const auto& keys = config_keys();
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            throw ConfigError("config field '" + key + "': unknown field");
    }
    take(j, "seed", c.seed);
    take(j, "samples", c.samples);
    take(j, "hidden", c.hidden);
    take(j, "epochs", c.epochs);
    take(j, "learning_rate", c.learning_rate);
    take(j, "directions", c.directions);
    take(j, "statistic", c.statistic);
    take(j, "scope", c.scope);
    take(j, "score_kind", c.score_kind);
    take(j, "alpha", c.alpha);
    take(j, "null_directions", c.null_directions);
    take(j, "clusters", c.clusters);
    take(j, "cluster_feature", c.cluster_feature);
    take(j, "components", c.components);
    take(j, "fit_sample", c.fit_sample);
    take(j, "bundle_kind", c.bundle_kind);
}

namespace {

json config_json(const PipelineConfig& c) {
    return {{"seed", c.seed},
            {"samples", c.samples},
            {"hidden", c.hidden},
            {"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"directions", c.directions},
            {"statistic", c.statistic},
            {"scope", c.scope},
            {"score_kind", c.score_kind},
            {"alpha", c.alpha},
            {"null_directions", c.null_directions},
            {"clusters", c.clusters},
            {"cluster_feature", c.cluster_feature},
            {"components", c.components},
            {"fit_sample", c.fit_sample},
            {"bundle_kind", c.bundle_kind}};
}

} // namespace

std::string config_to_json(const PipelineConfig& c) { return config_json(c).dump(2); }

PipelineConfig config_from_json(const std::string& text) {
    PipelineConfig c;
    apply_config_json(c, text);
    return c;
}

ScreenOptions screen_options(const PipelineConfig& c) {
    ScreenOptions o;
    o.directions = c.directions;
    o.seed = c.seed;
    o.statistic = parse_statistic(c.statistic);
    o.scope = c.scope == "class" ? SdScope::ClassOnly : SdScope::AllSamples;
    o.kind = parse_gradient_kind(c.score_kind);
    o.alpha = c.alpha;
    o.null_directions = c.null_directions;
    return o;
}

TrainOptions train_options(const PipelineConfig& c) { return {c.hidden, c.epochs, c.learning_rate, c.seed}; }

// -------------------------------------------------------------- manifest

std::string manifest_to_json(const RunManifest& m) {
    json j = {{"tool", "conceptscope"},
              {"tool_version", m.tool_version},
              {"config", config_json(m.config)},
              {"stages", m.stages},
              {"seeds", m.seeds},
              {"files", m.files},
              {"started", m.started},
              {"finished", m.finished}};
    return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        RunManifest m;
        m.tool_version = j.at("tool_version").get<std::string>();
        apply_config_json(m.config, j.at("config").dump());
        m.stages = j.at("stages").get<decltype(m.stages)>();
        m.seeds = j.at("seeds").get<decltype(m.seeds)>();
        m.files = j.at("files").get<decltype(m.files)>();
        m.started = j.value("started", "");
        m.finished = j.value("finished", "");
        return m;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("manifest: ") + e.what());
    }
}

RunManifest load_manifest(const fs::path& path) {
    try {
        return manifest_from_json(read_file(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::map<std::string, std::string> digest_tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    if (!fs::exists(dir)) return out;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), dir).generic_string();
        if (rel == layout::manifest || rel == layout::lock) continue;
        out[rel] = sha256_file(entry.path());
    }
    return out;
}

// ------------------------------------------------------------------ lock

RunLock::RunLock(const fs::path& dir) : path_(dir / layout::lock) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        throw IoError("another run holds " + path_.string() + " (remove it if no run is active)");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto w = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

RunLock::~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

// ---------------------------------------------------------------- stages

namespace {

const std::vector<std::string>& layout_entries() {
    static const std::vector<std::string> entries = {"data",     "model",   "screening",          "clusters",
                                                     "projection", "figures", layout::manifest};
    return entries;
}

void clear_layout(const fs::path& dir) {
    for (const auto& e : layout_entries()) {
        std::error_code ec;
        fs::remove_all(dir / e, ec);
    }
}

template <class F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
    log_info(std::string("stage ") + name);
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

std::vector<std::string> simulation_class_names() { return {"class0", "class1", "class2"}; }

Dataset load_data(const fs::path& dir) {
    if (!fs::exists(dir / layout::data)) throw StageError("simulate", "missing " + (dir / layout::data).string());
    return read_dataset_csv(dir / layout::data);
}

MlpModel load_trained(const fs::path& dir) {
    if (!fs::exists(dir / layout::model)) throw StageError("train", "missing " + (dir / layout::model).string());
    return load_model(dir / layout::model);
}

std::string csv_row(std::initializer_list<std::string> cells) {
    std::string out;
    for (const auto& c : cells) {
        if (!out.empty()) out += ',';
        out += c;
    }
    out += '\n';
    return out;
}

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

Dataset stage_simulate(const PipelineConfig& c, const fs::path& dir) {
    return stage("simulate", [&] {
        Dataset d = generate_simulation(c.samples, c.seed);
        write_dataset_csv(d, dir / layout::data);
        return d;
    });
}

TrainResult stage_train(const PipelineConfig& c, const fs::path& dir) {
    const Dataset data = load_data(dir);
    return stage("train", [&] {
        TrainResult r = train(data, train_options(c));
        save_model(r.model, dir / layout::model);
        const json summary = {{"final_loss", r.final_loss},
                              {"accuracy", r.accuracy},
                              {"epochs", r.epochs},
                              {"hidden", c.hidden},
                              {"learning_rate", c.learning_rate}};
        write_file(dir / layout::training, summary.dump(2) + "\n");
        log_info("training accuracy " + format_real(r.accuracy));
        return r;
    });
}

ScreenReport stage_screen(const PipelineConfig& c, const fs::path& dir) {
    const Dataset data = load_data(dir);
    const MlpModel model = load_trained(dir);
    return stage("screen", [&] {
        ScreenReport rep = screen(model, data, screen_options(c));
        write_screening_csv(rep, dir / layout::screening);
        json classes = json::array();
        for (std::size_t s = 0; s < rep.classes.size(); ++s) {
            std::vector<std::size_t> found;
            for (std::size_t j = 0; j < rep.directions.size(); ++j)
                if (rep.at(j, s).discovered) found.push_back(j);
            json entry = {{"class", rep.classes[s]}, {"count", found.size()}, {"directions", found}};
            if (rep.nulls[s]) {
                entry["null"] = {{"delta", rep.nulls[s]->delta()},
                                 {"sigma0", rep.nulls[s]->sigma0()},
                                 {"pi0", rep.nulls[s]->pi0()}};
            }
            classes.push_back(std::move(entry));
        }
        const json summary = {{"method", to_string(rep.method)},
                              {"statistic", c.statistic},
                              {"alpha", c.alpha},
                              {"directions", rep.directions.size()},
                              {"inferential", rep.inferential},
                              {"classes", std::move(classes)}};
        write_file(dir / layout::discoveries, summary.dump(2) + "\n");
        return rep;
    });
}

double downward_orientation(const MlpModel& m, Eigen::Index j) {
    const HalfSpace h = feature_halfspace(m, j);
    return h.normal.size() > 1 && h.normal(1) > 0.0 ? -1.0 : 1.0;
}

ClusterStage stage_clusters(const PipelineConfig& c, const fs::path& dir) {
    const Dataset data = load_data(dir);
    const MlpModel model = load_trained(dir);
    return stage("clusters", [&] {
        ClusterStage out;
        out.kmeans = kmeans(data.samples, c.clusters, derive_seed(c.seed, streams::kmeans));
        const FeatureBatch batch = make_feature_batch(model, feature_matrix(model, data.samples));
        out.orientation = downward_orientation(model, c.cluster_feature);
        Vector e = Vector::Zero(model.hidden());
        e(c.cluster_feature) = out.orientation;
        const ConceptDirection v(e);
        out.direction = v.vector();
        const ScoreMatrix scores = activation_scores(model, batch, v, parse_gradient_kind(c.score_kind));

        out.summaries = cluster_activation_summary(out.kmeans, scores, 0);
        std::sort(out.summaries.begin(), out.summaries.end(),
                  [](const ClusterSummary& a, const ClusterSummary& b) { return a.cluster < b.cluster; });
        std::vector<double> neg_dist;
        for (const auto& s : out.summaries) {
            const double d = distance_to_boundary(s.centroid(0), s.centroid(1));
            out.boundary_distance.push_back(d);
            neg_dist.push_back(-d);
        }
        const auto K = scores.classes();
        for (Eigen::Index k = 0; k < K; ++k) {
            std::vector<double> sd;
            for (const auto& s : out.summaries) sd.push_back(s.sd(k));
            out.spearman.push_back(spearman(sd, neg_dist));
            out.class_mean.push_back(scores.values.col(k).mean());
        }

        std::ostringstream csv;
        csv << "cluster,centroid_x1,centroid_x2,size,boundary_distance";
        for (Eigen::Index k = 0; k < K; ++k) csv << ",mean_" << k;
        for (Eigen::Index k = 0; k < K; ++k) csv << ",sd_" << k;
        csv << '\n';
        for (std::size_t i = 0; i < out.summaries.size(); ++i) {
            const auto& s = out.summaries[i];
            csv << s.cluster << ',' << format_real17(s.centroid(0)) << ',' << format_real17(s.centroid(1)) << ','
                << s.members.size() << ',' << format_real17(out.boundary_distance[i]);
            for (Eigen::Index k = 0; k < K; ++k) csv << ',' << format_real17(s.mean(k));
            for (Eigen::Index k = 0; k < K; ++k) csv << ',' << format_real17(s.sd(k));
            csv << '\n';
        }
        write_file(dir / layout::clusters, csv.str());

        std::ostringstream assign;
        assign << "sample,cluster\n";
        for (std::size_t i = 0; i < out.kmeans.assignment.size(); ++i) assign << i << ',' << out.kmeans.assignment[i] << '\n';
        write_file(dir / layout::assignment, assign.str());

        const json summary = {{"clusters", c.clusters},
                              {"feature", c.cluster_feature},
                              {"orientation", out.orientation},
                              {"direction", std::vector<double>(out.direction.data(), out.direction.data() + out.direction.size())},
                              {"score_kind", c.score_kind},
                              {"spearman_sd_vs_negative_distance", out.spearman},
                              {"class_mean_score", out.class_mean},
                              {"iterations", out.kmeans.iterations},
                              {"converged", out.kmeans.converged},
                              {"reseeded", out.kmeans.reseeded},
                              {"inertia", out.kmeans.inertia()}};
        write_file(dir / layout::cluster_summary, summary.dump(2) + "\n");
        return out;
    });
}

ProjectionBundle stage_project(const PipelineConfig& c, const fs::path& dir) {
    const Dataset data = load_data(dir);
    const MlpModel model = load_trained(dir);
    return stage("project", [&] {
        const FeatureBatch batch = make_feature_batch(model, feature_matrix(model, data.samples));
        const GradientKind kind = parse_gradient_kind(c.bundle_kind);
        const GradientTensor grads = model_gradients(model, batch, kind);
        BundleOptions opts;
        opts.components = c.components;
        opts.fit_sample = c.fit_sample;
        opts.seed = c.seed;
        opts.gradient_kind = kind;
        ProjectionBundle b = build_bundle(batch.features, grads, data.labels, simulation_class_names(), opts);
        static_export(b, dir / layout::projection_dir);
        return b;
    });
}

// --------------------------------------------------------------- figures

namespace {

struct ScreenRow {
    std::size_t direction;
    int cls;
    double statistic;
    std::string lfdr;
    std::string dx, dy;
};

std::vector<ScreenRow> read_screening(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::getline(in, line); // header
    std::vector<ScreenRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto t = split(line, ',');
        if (t.size() != 8) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 8 columns");
        rows.push_back({static_cast<std::size_t>(parse_int(t[0], "direction_id")), static_cast<int>(parse_int(t[1], "class")),
                        parse_real(t[2], "statistic"), t[4], t[6], t[7]});
    }
    return rows;
}

} // namespace

std::vector<std::string> export_figures_data(const fs::path& dir, const PipelineConfig& c) {
    const auto require = [&](const char* rel, const char* producer) {
        if (!fs::exists(dir / rel)) throw StageError("export", "missing pipeline stage '" + std::string(producer) + "' (" + rel + ")");
    };
    require(layout::data, "simulate");
    require(layout::model, "train");
    require(layout::screening, "screen");
    require(layout::clusters, "clusters");
    require(layout::assignment, "clusters");
    require(layout::cluster_summary, "clusters");

    return stage("export", [&] {
        std::vector<std::string> written;
        const auto emit = [&](const std::string& rel, const std::string& body) {
            write_file(dir / rel, body);
            written.push_back(rel);
        };
        const Dataset data = read_dataset_csv(dir / layout::data);
        const MlpModel model = load_model(dir / layout::model);
        const auto rows = read_screening(dir / layout::screening);

        // Null fit and histogram per class.
        std::map<int, std::vector<double>> by_class;
        for (const auto& r : rows) by_class[r.cls].push_back(r.statistic);
        for (const auto& [cls, stats] : by_class) {
            try {
                emit(std::string(layout::null_fit_prefix) + std::to_string(cls) + ".json",
                     null_fit_json(fit_empirical_null(stats)) + "\n");
            } catch (const DegenerateError& e) {
                log_warn("no null fit for class " + std::to_string(cls) + ": " + e.what());
            }
        }

        // Input-space directions with lfdr, one row per (direction, class).
        {
            std::string out = "dx,dy,lfdr,class\n";
            for (const auto& r : rows) out += csv_row({r.dx, r.dy, r.lfdr, std::to_string(r.cls)});
            emit(layout::direction_lfdr, out);
        }

        // Cluster SD map.
        {
            std::istringstream in(read_file(dir / layout::clusters));
            std::string header, line, out;
            std::getline(in, header);
            const auto cols = split(header, ',');
            std::vector<std::size_t> keep;
            for (std::size_t i = 0; i < cols.size(); ++i)
                if (i < 5 || cols[i].rfind("sd_", 0) == 0) keep.push_back(i);
            const auto pick = [&](const std::vector<std::string>& t) {
                std::string s;
                for (auto i : keep) s += (s.empty() ? "" : ",") + t[i];
                return s + "\n";
            };
            out = pick(cols);
            while (std::getline(in, line))
                if (!trim(line).empty()) out += pick(split(line, ','));
            emit(layout::cluster_sd, out);
        }

        // Per-cluster activation strips, clusters ordered by SD within each class panel.
        const FeatureBatch batch = make_feature_batch(model, feature_matrix(model, data.samples));
        const GradientKind kind = parse_gradient_kind(c.score_kind);
        {
            const json summary = json::parse(read_file(dir / layout::cluster_summary));
            const auto dvec = summary.at("direction").get<std::vector<double>>();
            const ConceptDirection v(Eigen::Map<const Vector>(dvec.data(), static_cast<Eigen::Index>(dvec.size())));
            const ScoreMatrix scores = activation_scores(model, batch, v, kind);
            KMeansResult km;
            {
                std::istringstream in(read_file(dir / layout::assignment));
                std::string line;
                std::getline(in, line);
                while (std::getline(in, line))
                    if (!trim(line).empty()) km.assignment.push_back(static_cast<int>(parse_int(split(line, ',')[1], "cluster")));
            }
            if (static_cast<Eigen::Index>(km.assignment.size()) != data.size())
                throw ShapeError("cluster assignment has " + std::to_string(km.assignment.size()) + " rows, data has " +
                                 std::to_string(data.size()));
            const int k = *std::max_element(km.assignment.begin(), km.assignment.end()) + 1;
            km.centroids = Matrix::Zero(k, data.dim());
            {
                std::vector<int> counts(static_cast<std::size_t>(k), 0);
                for (Eigen::Index i = 0; i < data.size(); ++i) {
                    const int a = km.assignment[static_cast<std::size_t>(i)];
                    km.centroids.row(a) += data.samples.row(i);
                    ++counts[static_cast<std::size_t>(a)];
                }
                for (int a = 0; a < k; ++a)
                    if (counts[static_cast<std::size_t>(a)]) km.centroids.row(a) /= counts[static_cast<std::size_t>(a)];
            }
            std::string out = "class,rank,cluster,cluster_sd,sample,x1,x2,score\n";
            for (Eigen::Index cls = 0; cls < scores.classes(); ++cls) {
                const auto ordered = cluster_activation_summary(km, scores, static_cast<int>(cls));
                for (std::size_t rank = 0; rank < ordered.size(); ++rank) {
                    const auto& s = ordered[rank];
                    for (int i : s.members) {
                        out += csv_row({std::to_string(cls), std::to_string(rank), std::to_string(s.cluster),
                                        format_real(s.sd(cls)), std::to_string(i), format_real(data.samples(i, 0)),
                                        format_real(data.samples(i, 1)), format_real(scores.values(i, cls))});
                    }
                }
            }
            emit(layout::strips, out);
        }

        // One panel group per hidden feature: half-space plus scores for v = e_j.
        {
            std::string hs = "feature,w1,w2,b,orientation,active_fraction\n";
            std::string out = "feature,sample,x1,x2,label,activation";
            for (Eigen::Index k = 0; k < model.num_classes(); ++k) out += ",score_" + std::to_string(k);
            out += '\n';
            for (Eigen::Index j = 0; j < model.hidden(); ++j) {
                const HalfSpace h = feature_halfspace(model, j);
                const double active = (batch.features.col(j).array() > 0.0).cast<double>().mean();
                hs += csv_row({std::to_string(j), format_real17(h.normal(0)), format_real17(h.normal(1)),
                               format_real17(h.offset), format_real(downward_orientation(model, j)), format_real(active)});
                const Matrix s = activation_scores_raw(model, batch, ConceptDirection::basis(model.hidden(), j).vector(), kind);
                for (Eigen::Index i = 0; i < data.size(); ++i) {
                    out += std::to_string(j) + ',' + std::to_string(i) + ',' + format_real(data.samples(i, 0)) + ',' +
                           format_real(data.samples(i, 1)) + ',' + std::to_string(data.labels[static_cast<std::size_t>(i)]) +
                           ',' + format_real(batch.features(i, j));
                    for (Eigen::Index k = 0; k < s.cols(); ++k) out += ',' + format_real(s(i, k));
                    out += '\n';
                }
            }
            emit(layout::halfspaces, hs);
            emit(layout::panels, out);
        }
        return written;
    });
}

// -------------------------------------------------------------- pipeline

RunManifest run_pipeline(const PipelineConfig& c, const fs::path& dir) {
    c.validate();
    RunLock lock(dir);
    RunManifest m;
    m.tool_version = kToolVersion;
    m.config = c;
    m.started = utc_now();
    clear_layout(dir);
    try {
        const Dataset data = stage_simulate(c, dir);
        const TrainResult tr = stage_train(c, dir);
        const ScreenReport rep = stage_screen(c, dir);
        const ClusterStage cl = stage_clusters(c, dir);
        const ProjectionBundle bundle = stage_project(c, dir);
        export_figures_data(dir, c);

        m.stages["simulate"] = {{"samples", std::to_string(c.samples)}};
        m.stages["train"] = {{"hidden", std::to_string(c.hidden)},
                             {"epochs", std::to_string(c.epochs)},
                             {"learning_rate", format_real(c.learning_rate)},
                             {"accuracy", format_real(tr.accuracy)},
                             {"final_loss", format_real(tr.final_loss)}};
        m.stages["screen"] = {{"directions", std::to_string(c.directions)},
                              {"statistic", c.statistic},
                              {"scope", c.scope},
                              {"score_kind", c.score_kind},
                              {"alpha", format_real(c.alpha)},
                              {"method", to_string(rep.method)},
                              {"null_directions", std::to_string(c.null_directions)}};
        m.stages["clusters"] = {{"clusters", std::to_string(c.clusters)},
                                {"feature", std::to_string(c.cluster_feature)},
                                {"orientation", format_real(cl.orientation)}};
        m.stages["project"] = {{"components", std::to_string(c.components)},
                               {"fit_sample", std::to_string(c.fit_sample)},
                               {"gradient_kind", c.bundle_kind},
                               {"first_variance_ratio", format_real(bundle.pca.variance_ratio(0))}};
        m.seeds = {{"seed", c.seed},
                   {"stream.simulation", streams::simulation},
                   {"stream.init_weights", streams::init_weights},
                   {"stream.directions", streams::directions},
                   {"stream.null_directions", streams::null_directions},
                   {"stream.kmeans", streams::kmeans},
                   {"stream.pca_subsample", streams::pca_subsample},
                   {"derived.directions", derive_seed(c.seed, streams::directions)},
                   {"derived.null_directions", derive_seed(c.seed, streams::null_directions)},
                   {"derived.kmeans", derive_seed(c.seed, streams::kmeans)}};
        m.files = digest_tree(dir);
        m.finished = utc_now();
        write_file(dir / layout::manifest, manifest_to_json(m));
    } catch (...) {
        clear_layout(dir);
        throw;
    }
    return m;
}

std::vector<std::string> replay_manifest(const RunManifest& m, const fs::path& dir) {
    if (m.tool_version != kToolVersion)
        log_warn("manifest written by version " + m.tool_version + ", replaying with " + kToolVersion);
    const RunManifest again = run_pipeline(m.config, dir);
    std::vector<std::string> mismatched;
    for (const auto& [path, digest] : m.files) {
        const auto it = again.files.find(path);
        if (it == again.files.end() || it->second != digest) mismatched.push_back(path);
    }
    for (const auto& [path, _] : again.files)
        if (!m.files.count(path)) mismatched.push_back(path);
    return mismatched;
}

} // namespace cscope
