#pragma once

#include "conceptscope/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cscope {

/// Labelled samples: one row of `samples` per observation.
struct Dataset {
    Matrix samples;          // n x d
    std::vector<int> labels; // values in [0, num_classes)
    int num_classes = 0;

    Eigen::Index size() const noexcept { return samples.rows(); }
    Eigen::Index dim() const noexcept { return samples.cols(); }

    /// Number of samples carrying each label.
    std::vector<std::size_t> class_counts() const;

    /// Throws ShapeError/ConfigError when the invariants do not hold.
    void validate() const;
};

/// Geometric class rule of the three-class simulation:
/// 1 inside the closed disc of radius 0.25, otherwise 0 below the x-axis
/// and 2 on or above it.
int simulation_class(double x1, double x2) noexcept;

inline constexpr int kSimulationClasses = 3;
inline constexpr double kSimulationRadius = 0.25;

/// n points uniform on [-1, 1]^2 labelled by `simulation_class`.
/// Coordinates are drawn x1 then x2 per point from the simulation stream.
Dataset generate_simulation(std::size_t n, std::uint64_t seed);

/// Euclidean distance to the class boundary: the circle of radius 0.25
/// together with the x-axis segments 0.25 <= |x1| <= 1.
double distance_to_boundary(double x1, double x2) noexcept;

/// CSV with header `x1,x2,...,label`; reals written with 17 significant digits.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path);

} // namespace cscope
