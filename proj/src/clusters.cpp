#include "conceptscope/clusters.hpp"

#include "conceptscope/error.hpp"
#include "conceptscope/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cscope {

namespace {

// Nearest centroid for every point; returns the inertia. Ties go to the lower index.
double assign(const Matrix& points, const Matrix& centroids, std::vector<int>& assignment, std::vector<double>& dist2,
              bool& changed) {
    changed = false;
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
            const double d = (points.row(i) - centroids.row(c)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        const auto slot = static_cast<std::size_t>(i);
        if (assignment[slot] != best) changed = true;
        assignment[slot] = best;
        dist2[slot] = best_d;
        inertia += best_d;
    }
    return inertia;
}

Matrix kmeanspp_init(const Matrix& points, int k, Rng& rng) {
    const Eigen::Index n = points.rows();
    Matrix centroids(k, points.cols());
    std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    std::vector<bool> chosen(static_cast<std::size_t>(n), false);
    auto take = [&](Eigen::Index idx, int c) {
        centroids.row(c) = points.row(idx);
        chosen[static_cast<std::size_t>(idx)] = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& d = d2[static_cast<std::size_t>(i)];
            d = std::min(d, (points.row(i) - points.row(idx)).squaredNorm());
        }
    };
    take(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))), 0);
    for (int c = 1; c < k; ++c) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        Eigen::Index pick = -1;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            for (Eigen::Index i = 0; i < n; ++i) {
                target -= d2[static_cast<std::size_t>(i)];
                if (target < 0.0 && d2[static_cast<std::size_t>(i)] > 0.0) {
                    pick = i;
                    break;
                }
            }
            if (pick < 0) {
                // Rounding left target >= 0: take the last point with positive weight.
                for (Eigen::Index i = n - 1; i >= 0; --i)
                    if (d2[static_cast<std::size_t>(i)] > 0.0) {
                        pick = i;
                        break;
                    }
            }
        } else {
            // Every point coincides with a chosen centroid; fall back to the first unchosen index.
            for (Eigen::Index i = 0; i < n; ++i)
                if (!chosen[static_cast<std::size_t>(i)]) {
                    pick = i;
                    break;
                }
        }
        take(pick, c);
    }
    return centroids;
}

} // namespace

KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iters) {
    const Eigen::Index n = points.rows();
    if (n == 0) throw ConfigError("k-means needs at least one point");
    if (k < 1 || k > n) {
        throw ConfigError("k-means needs 1 <= k <= n (k = " + std::to_string(k) + ", n = " + std::to_string(n) + ")");
    }
    if (max_iters < 0) throw ConfigError("max_iters must be non-negative");

    Rng rng(seed);
    KMeansResult out;
    out.centroids = kmeanspp_init(points, k, rng);
    out.assignment.assign(static_cast<std::size_t>(n), -1);
    std::vector<double> dist2(static_cast<std::size_t>(n), 0.0);
    bool changed = false;
    out.inertia_trace.push_back(assign(points, out.centroids, out.assignment, dist2, changed));

    for (int it = 0; it < max_iters; ++it) {
        Matrix sums = Matrix::Zero(k, points.cols());
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int c = out.assignment[static_cast<std::size_t>(i)];
            sums.row(c) += points.row(i);
            ++counts[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                out.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
                continue;
            }
            // Empty cluster: move its centroid onto the point farthest from its own centroid.
            const auto far = static_cast<Eigen::Index>(std::max_element(dist2.begin(), dist2.end()) - dist2.begin());
            out.centroids.row(c) = points.row(far);
            dist2[static_cast<std::size_t>(far)] = 0.0;
            ++out.reseeded;
        }
        out.inertia_trace.push_back(assign(points, out.centroids, out.assignment, dist2, changed));
        out.iterations = it + 1;
        if (!changed) {
            out.converged = true;
            break;
        }
    }
    return out;
}

std::vector<ClusterSummary> cluster_activation_summary(const KMeansResult& clusters, const ScoreMatrix& scores,
                                                       int sort_class) {
    if (static_cast<Eigen::Index>(clusters.assignment.size()) != scores.rows()) {
        throw ShapeError("cluster membership covers " + std::to_string(clusters.assignment.size()) +
                         " rows but the score matrix has " + std::to_string(scores.rows()));
    }
    if (sort_class < 0 || sort_class >= scores.classes()) throw ConfigError("sort class out of range");
    const auto k = clusters.centroids.rows();
    std::vector<ClusterSummary> out(static_cast<std::size_t>(k));
    for (Eigen::Index c = 0; c < k; ++c) {
        out[static_cast<std::size_t>(c)].cluster = static_cast<int>(c);
        out[static_cast<std::size_t>(c)].centroid = clusters.centroids.row(c).transpose();
    }
    for (std::size_t i = 0; i < clusters.assignment.size(); ++i)
        out[static_cast<std::size_t>(clusters.assignment[i])].members.push_back(static_cast<int>(i));

    const auto K = scores.classes();
    for (auto& s : out) {
        s.mean = Vector::Zero(K);
        s.sd = Vector::Zero(K);
        if (s.members.empty()) continue;
        s.singleton = s.members.size() == 1;
        const double count = static_cast<double>(s.members.size());
        for (int i : s.members) s.mean += scores.values.row(i).transpose();
        s.mean /= count;
        for (int i : s.members) s.sd += (scores.values.row(i).transpose() - s.mean).cwiseAbs2();
        s.sd = (s.sd / count).cwiseSqrt();
    }
    std::stable_sort(out.begin(), out.end(), [sort_class](const ClusterSummary& a, const ClusterSummary& b) {
        return a.sd(sort_class) > b.sd(sort_class);
    });
    return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("spearman: inputs differ in length");
    if (a.size() < 2) throw DegenerateError("spearman: need at least two observations");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const Eigen::Map<const Vector> va(ra.data(), static_cast<Eigen::Index>(ra.size()));
    const Eigen::Map<const Vector> vb(rb.data(), static_cast<Eigen::Index>(rb.size()));
    const Vector ca = va.array() - va.mean();
    const Vector cb = vb.array() - vb.mean();
    const double denom = ca.norm() * cb.norm();
    if (!(denom > 0.0)) throw DegenerateError("spearman: constant input");
    return ca.dot(cb) / denom;
}

} // namespace cscope
