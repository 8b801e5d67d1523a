#pragma once

#include "conceptscope/clusters.hpp"
#include "conceptscope/error.hpp"
#include "conceptscope/reduce.hpp"
#include "conceptscope/screening.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cscope {

inline constexpr const char* kToolVersion = "0.3.0";

/// A pipeline stage failed; the message carries the stage name.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Every parameter of an end-to-end run. All randomness derives from `seed`.
struct PipelineConfig {
    std::uint64_t seed = 0;
    // simulate
    std::size_t samples = 2000;
    // train
    int hidden = 20;
    int epochs = 3000;
    double learning_rate = 0.5;
    // screen
    std::size_t directions = 500;
    std::string statistic = "sd";
    std::string scope = "all";
    std::string score_kind = "probability";
    double alpha = 0.1;
    std::size_t null_directions = 100;
    // clusters
    int clusters = 25;
    int cluster_feature = 0;
    // project
    int components = 2;
    std::size_t fit_sample = 0;
    std::string bundle_kind = "probability";

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Overlays fields from a JSON object; unknown fields and wrong types are
/// ConfigErrors that name the field (parse errors name line and column).
void apply_config_json(PipelineConfig& config, const std::string& text);
std::string config_to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const std::string& text);

ScreenOptions screen_options(const PipelineConfig& c);
TrainOptions train_options(const PipelineConfig& c);

/// Output layout, relative to the run directory.
namespace layout {
inline constexpr const char* data = "data/simulation.csv";
inline constexpr const char* model = "model/model.json";
inline constexpr const char* training = "model/training.json";
inline constexpr const char* screening = "screening/screening.csv";
inline constexpr const char* discoveries = "screening/discoveries.json";
inline constexpr const char* clusters = "clusters/clusters.csv";
inline constexpr const char* assignment = "clusters/assignment.csv";
inline constexpr const char* cluster_summary = "clusters/summary.json";
inline constexpr const char* projection_dir = "projection";
inline constexpr const char* figures_dir = "figures";
inline constexpr const char* null_fit_prefix = "figures/null_fit_class";
inline constexpr const char* direction_lfdr = "figures/direction_lfdr.csv";
inline constexpr const char* cluster_sd = "figures/cluster_sd.csv";
inline constexpr const char* strips = "figures/cluster_strips.csv";
inline constexpr const char* panels = "figures/feature_panels.csv";
inline constexpr const char* halfspaces = "figures/halfspaces.csv";
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* lock = ".conceptscope.lock";
} // namespace layout

struct RunManifest {
    std::string tool_version;
    PipelineConfig config;
    std::map<std::string, std::map<std::string, std::string>> stages; // stage -> parameter map
    std::map<std::string, std::uint64_t> seeds;                      // name -> seed / stream id
    std::map<std::string, std::string> files;                        // relative path -> sha256
    std::string started, finished;                                   // UTC, ISO 8601
};

std::string manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const std::string& text);
RunManifest load_manifest(const std::filesystem::path& path);

/// Holds <dir>/.conceptscope.lock for its lifetime; throws IoError if another
/// run holds it.
class RunLock {
public:
    explicit RunLock(const std::filesystem::path& dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::filesystem::path path_;
};

// Individual stages. Each reads its inputs from and writes its outputs to
// the run directory, so the CLI subcommands can run them one at a time.
Dataset stage_simulate(const PipelineConfig& c, const std::filesystem::path& dir);
TrainResult stage_train(const PipelineConfig& c, const std::filesystem::path& dir);
ScreenReport stage_screen(const PipelineConfig& c, const std::filesystem::path& dir);

struct ClusterStage {
    KMeansResult kmeans;
    std::vector<ClusterSummary> summaries; // cluster order
    Vector direction;                      // oriented feature direction in feature space
    double orientation = 1.0;              // +1 or -1
    std::vector<double> spearman;          // per class: SD vs negative boundary distance
    std::vector<double> class_mean;        // per class: mean score over all samples
    std::vector<double> boundary_distance; // per cluster centroid
};
ClusterStage stage_clusters(const PipelineConfig& c, const std::filesystem::path& dir);
ProjectionBundle stage_project(const PipelineConfig& c, const std::filesystem::path& dir);

/// Sign that orients hidden feature j downward (its input-space normal has a
/// negative vertical component after the flip).
double downward_orientation(const MlpModel& m, Eigen::Index j);

/// Plottable data for the screening, clustering and feature figures, built
/// from the artifacts of a completed run. Returns the files written
/// (relative paths). Throws StageError when an upstream artifact is missing.
std::vector<std::string> export_figures_data(const std::filesystem::path& dir, const PipelineConfig& c);

/// Full run: simulate, train, screen, clusters, project, figures, manifest.
/// The lock file prevents concurrent runs in one directory; on failure the
/// layout directories and the manifest are removed.
RunManifest run_pipeline(const PipelineConfig& c, const std::filesystem::path& dir);

/// Re-runs the manifest's configuration into `dir` and returns the paths whose
/// digests differ from (or are missing relative to) the manifest.
std::vector<std::string> replay_manifest(const RunManifest& m, const std::filesystem::path& dir);

/// Digests of every regular file below `dir` except the manifest and lock.
std::map<std::string, std::string> digest_tree(const std::filesystem::path& dir);

} // namespace cscope
