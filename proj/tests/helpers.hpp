#pragma once

#include "conceptscope/model.hpp"
#include "conceptscope/reduce.hpp"
#include "conceptscope/rng.hpp"

#include <filesystem>
#include <string>

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

/// Random network with N(0, scale^2) weights.
cscope::MlpModel random_model(cscope::Rng& rng, int d, int h, int k, double scale = 1.0);

cscope::Matrix random_matrix(cscope::Rng& rng, Eigen::Index rows, Eigen::Index cols);

/// A small model trained once per test binary on a 600-point simulation (seed 3).
const cscope::MlpModel& small_trained_model();
const cscope::Dataset& small_dataset();

/// Synthetic bundle with Gaussian points and gradients.
cscope::ProjectionBundle synthetic_bundle(Eigen::Index m, Eigen::Index classes, Eigen::Index k, std::uint64_t seed);

} // namespace testutil
