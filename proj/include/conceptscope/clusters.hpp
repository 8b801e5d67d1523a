#pragma once

#include "conceptscope/concepts.hpp"
#include "conceptscope/linalg.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace cscope {

struct KMeansResult {
    Matrix centroids;                  // k x d
    std::vector<int> assignment;       // cluster index per point
    std::vector<double> inertia_trace; // inertia after each assignment step
    int iterations = 0;
    bool converged = false;
    int reseeded = 0; // empty clusters moved to the farthest point

    double inertia() const noexcept { return inertia_trace.empty() ? 0.0 : inertia_trace.back(); }
};

/// Lloyd's algorithm with k-means++ seeding.
///
/// Stops when an assignment step changes no membership or after
/// `max_iters` steps. A cluster that loses all members is re-seeded at the
/// point farthest from its current centroid.
KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iters = 300);

struct ClusterSummary {
    int cluster = 0;
    Vector centroid;
    std::vector<int> members;
    Vector mean; // per class
    Vector sd;   // per class, population SD over members
    bool singleton = false;
};

/// Per-cluster mean and SD of the scores. Summaries are ordered by the SD
/// of column `sort_class`, largest first (ties keep cluster order).
std::vector<ClusterSummary> cluster_activation_summary(const KMeansResult& clusters, const ScoreMatrix& scores,
                                                       int sort_class);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

} // namespace cscope
