// conceptscope: command-line front end for the simulation pipeline, the
// bundle exporter and the explorer service.

#include "conceptscope/bundle_io.hpp"
#include "conceptscope/ingest.hpp"
#include "conceptscope/log.hpp"
#include "conceptscope/pipeline.hpp"
#include "conceptscope/serve.hpp"
#include "conceptscope/textio.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <optional>

using namespace cscope;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

/// Flags that override the optional config file.
struct Flags {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> samples;
    std::optional<int> hidden, epochs;
    std::optional<double> learning_rate;
    std::optional<std::size_t> directions;
    std::optional<std::string> statistic, scope, score_kind;
    std::optional<double> alpha;
    std::optional<std::size_t> null_directions;
    std::optional<int> clusters, cluster_feature, components;
    std::optional<std::size_t> fit_sample;
    std::optional<std::string> bundle_kind;
    std::string config_file;
};

enum Group : unsigned { kSim = 1, kTrain = 2, kScreen = 4, kCluster = 8, kProject = 16, kAll = 31 };

void add_flags(CLI::App* app, Flags& f, unsigned groups) {
    app->add_option("--config", f.config_file, "JSON config file; flags win on conflict");
    app->add_option("--seed", f.seed, "top-level seed");
    if (groups & kSim) app->add_option("--samples", f.samples, "simulation size");
    if (groups & kTrain) {
        app->add_option("--hidden", f.hidden, "hidden units");
        app->add_option("--epochs", f.epochs, "gradient-descent epochs");
        app->add_option("--learning-rate", f.learning_rate, "step size");
    }
    if (groups & (kScreen | kCluster)) app->add_option("--score-kind", f.score_kind, "probability|logit");
    if (groups & kScreen) {
        app->add_option("--directions", f.directions, "random candidate directions");
        app->add_option("--statistic", f.statistic, "sd|tcav");
        app->add_option("--scope", f.scope, "SD over all samples or the class only (all|class)");
        app->add_option("--alpha", f.alpha, "discovery level");
        app->add_option("--null-directions", f.null_directions, "random directions per randomization test");
    }
    if (groups & kCluster) {
        app->add_option("--clusters", f.clusters, "k for k-means");
        app->add_option("--feature", f.cluster_feature, "hidden feature tested on the clusters");
    }
    if (groups & kProject) {
        app->add_option("--components", f.components, "PCA components kept");
        app->add_option("--fit-sample", f.fit_sample, "rows used to fit PCA (0 = all)");
        app->add_option("--bundle-kind", f.bundle_kind, "gradient kind stored in the bundle (probability|logit)");
    }
}

PipelineConfig resolve(const Flags& f) {
    PipelineConfig c;
    if (!f.config_file.empty()) {
        std::string text;
        try {
            text = read_file(f.config_file);
        } catch (const IoError& e) {
            throw ConfigError(e.what());
        }
        try {
            apply_config_json(c, text);
        } catch (const ConfigError& e) {
            throw ConfigError(f.config_file + ": " + e.what());
        }
    }
    auto set = [](auto& dst, const auto& src) {
        if (src) dst = *src;
    };
    set(c.seed, f.seed);
    set(c.samples, f.samples);
    set(c.hidden, f.hidden);
    set(c.epochs, f.epochs);
    set(c.learning_rate, f.learning_rate);
    set(c.directions, f.directions);
    set(c.statistic, f.statistic);
    set(c.scope, f.scope);
    set(c.score_kind, f.score_kind);
    set(c.alpha, f.alpha);
    set(c.null_directions, f.null_directions);
    set(c.clusters, f.clusters);
    set(c.cluster_feature, f.cluster_feature);
    set(c.components, f.components);
    set(c.fit_sample, f.fit_sample);
    set(c.bundle_kind, f.bundle_kind);
    c.validate();
    return c;
}

BundleServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

ProjectionBundle load_bundle_arg(const fs::path& p) {
    return load_bundle(fs::is_directory(p) ? p / kBundleFile : p);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"conceptscope: concept-direction screening for a small MLP"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    Flags flags;
    fs::path out = "run";

    auto* sim = app.add_subcommand("simulate", "draw the three-class simulation");
    auto* trn = app.add_subcommand("train", "train the MLP on the run's simulation");
    auto* scr = app.add_subcommand("screen", "screen random concept directions");
    auto* clu = app.add_subcommand("clusters", "k-means cluster summaries for one feature direction");
    auto* prj = app.add_subcommand("project", "PCA bundle from the run's model, or ingest external matrices");
    auto* exp = app.add_subcommand("export", "figure data for a completed run");
    auto* srv = app.add_subcommand("serve", "serve a bundle over HTTP");
    auto* pip = app.add_subcommand("pipeline", "full run: simulate, train, screen, clusters, project, export");

    for (auto* sub : {sim, trn, scr, clu, prj, exp, pip}) sub->add_option("--out,-o", out, "run directory");
    add_flags(sim, flags, kSim);
    add_flags(trn, flags, kTrain);
    add_flags(scr, flags, kScreen);
    add_flags(clu, flags, kCluster);
    add_flags(prj, flags, kProject);
    add_flags(exp, flags, kScreen | kCluster);
    add_flags(pip, flags, kAll);

    IngestSpec ingest_spec;
    std::string class_list;
    fs::path bundle_out;
    prj->add_option("--features", ingest_spec.features, "external features (CSV, or f32 binary with <file>.json sidecar)");
    prj->add_option("--gradients", ingest_spec.gradients, "external gradients (f32 binary with sidecar, or CSV)");
    prj->add_option("--labels", ingest_spec.labels, "labels CSV");
    prj->add_option("--classes", class_list, "comma-separated class names");
    prj->add_option("--thumbnails", ingest_spec.thumbnails, "CSV of thumbnail paths, one per sample");
    prj->add_option("--bundle-out", bundle_out, "static export directory (default <out>/projection)");

    fs::path replay;
    pip->add_option("--replay", replay, "manifest to replay; exits 3 if any digest differs");

    fs::path bundle_path, thumb_root;
    std::string host = "127.0.0.1";
    int port = 8765;
    srv->add_option("--bundle", bundle_path, "bundle.json or a static export directory")->required();
    srv->add_option("--thumbnail-root", thumb_root, "directory thumbnail paths are relative to");
    srv->add_option("--host", host, "bind address");
    srv->add_option("--port", port, "port (0 picks a free one)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*srv) {
            ProjectionBundle b = load_bundle_arg(bundle_path);
            if (thumb_root.empty()) thumb_root = fs::is_directory(bundle_path) ? bundle_path : bundle_path.parent_path();
            BundleService service(std::move(b), thumb_root);
            BundleServer server(service);
            const int bound = server.bind(host, port);
            std::cout << "serving " << service.bundle().size() << " points on http://" << host << ":" << bound << "\n"
                      << std::flush;
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            server.listen();
            g_server = nullptr;
            return 0;
        }

        const PipelineConfig config = resolve(flags);

        if (*pip) {
            if (!replay.empty()) {
                const RunManifest m = load_manifest(replay);
                const auto bad = replay_manifest(m, out);
                for (const auto& p : bad) std::cerr << "digest mismatch: " << p << "\n";
                std::cout << (bad.empty() ? "replay reproduced " : "replay differs in ") << (bad.empty() ? m.files.size() : bad.size())
                          << " files\n";
                return bad.empty() ? 0 : kExitStage;
            }
            const RunManifest m = run_pipeline(config, out);
            std::cout << "wrote " << m.files.size() << " files to " << out.string() << "\n";
            return 0;
        }

        RunLock lock(out);
        if (*sim) {
            const Dataset d = stage_simulate(config, out);
            std::cout << "simulated " << d.size() << " samples\n";
        } else if (*trn) {
            const TrainResult r = stage_train(config, out);
            std::cout << "accuracy " << format_real(r.accuracy) << " loss " << format_real(r.final_loss) << "\n";
        } else if (*scr) {
            const ScreenReport r = stage_screen(config, out);
            for (std::size_t s = 0; s < r.classes.size(); ++s) {
                std::size_t n = 0;
                for (std::size_t j = 0; j < r.directions.size(); ++j) n += r.at(j, s).discovered;
                std::cout << "class " << r.classes[s] << ": " << n << " discoveries\n";
            }
        } else if (*clu) {
            const ClusterStage r = stage_clusters(config, out);
            for (std::size_t k = 0; k < r.spearman.size(); ++k)
                std::cout << "class " << k << ": spearman " << format_real(r.spearman[k]) << "\n";
        } else if (*prj) {
            if (!ingest_spec.features.empty() || !ingest_spec.gradients.empty()) {
                if (ingest_spec.features.empty() || ingest_spec.gradients.empty() || ingest_spec.labels.empty())
                    throw ConfigError("ingest needs --features, --gradients and --labels");
                if (!class_list.empty())
                    for (const auto& name : split(class_list, ',')) ingest_spec.class_names.emplace_back(trim(name));
                ingest_spec.options.components = config.components;
                ingest_spec.options.fit_sample = config.fit_sample;
                ingest_spec.options.seed = config.seed;
                ingest_spec.options.gradient_kind = parse_gradient_kind(config.bundle_kind);
                const ProjectionBundle b = ingest(ingest_spec);
                const fs::path dest = bundle_out.empty() ? out / layout::projection_dir : bundle_out;
                static_export(b, dest);
                std::cout << "ingested " << b.size() << " samples; first variance ratio "
                          << format_real(b.pca.variance_ratio(0)) << "\n";
            } else {
                const ProjectionBundle b = stage_project(config, out);
                std::cout << "projected " << b.size() << " samples onto " << b.dim() << " components\n";
            }
        } else if (*exp) {
            for (const auto& f : export_figures_data(out, config)) std::cout << f << "\n";
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStage;
    }
}
