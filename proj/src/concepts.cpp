#include "conceptscope/concepts.hpp"

#include "conceptscope/error.hpp"
#include "conceptscope/rng.hpp"

#include <cmath>

namespace cscope {

std::string_view to_string(GradientKind kind) noexcept {
    return kind == GradientKind::Probability ? "probability" : "logit";
}

GradientKind parse_gradient_kind(std::string_view s) {
    if (s == "probability") return GradientKind::Probability;
    if (s == "logit") return GradientKind::Logit;
    throw ConfigError("unknown gradient kind '" + std::string(s) + "' (expected probability or logit)");
}

ConceptDirection::ConceptDirection(Vector v, Space space) : v_(std::move(v)), space_(space) {
    const double norm = v_.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw DegenerateError("concept direction must be a nonzero finite vector");
    v_ /= norm;
}

ConceptDirection ConceptDirection::basis(Eigen::Index dim, Eigen::Index j, Space space) {
    if (j < 0 || j >= dim) throw ConfigError("basis index " + std::to_string(j) + " out of range");
    return ConceptDirection(Vector::Unit(dim, j), space);
}

ConceptDirection ConceptDirection::operator-() const {
    ConceptDirection out = *this;
    out.v_ = -out.v_;
    return out;
}

ConceptDirection sample_sphere_at(Eigen::Index dim, std::uint64_t index, std::uint64_t seed) {
    if (dim < 1) throw ConfigError("sphere dimension must be at least 1");
    Rng rng = Rng::stream(seed, index);
    Vector v(dim);
    while (true) {
        for (Eigen::Index j = 0; j < dim; ++j) v(j) = rng.normal();
        if (v.squaredNorm() > 0.0) return ConceptDirection(v);
    }
}

std::vector<ConceptDirection> sample_sphere(Eigen::Index dim, std::size_t count, std::uint64_t seed) {
    if (count < 1) throw ConfigError("direction count must be at least 1");
    std::vector<ConceptDirection> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(sample_sphere_at(dim, i, seed));
    return out;
}

FeatureBatch make_feature_batch(const MlpModel& m, Matrix features) {
    FeatureBatch batch;
    batch.probs = class_prob_matrix(m, features);
    batch.features = std::move(features);
    return batch;
}

Matrix activation_scores_raw(const MlpModel& m, const FeatureBatch& batch, const Eigen::Ref<const Vector>& v,
                             GradientKind kind) {
    if (v.size() != m.hidden()) {
        throw ShapeError("direction has length " + std::to_string(v.size()) + ", feature space has " +
                         std::to_string(m.hidden()) + " dimensions");
    }
    const Vector u = m.W2 * v; // logit change per unit step along v
    const Eigen::Index n = batch.probs.rows();
    if (kind == GradientKind::Logit) return Matrix(u.transpose().replicate(n, 1));
    // S_ik = p_ik (u_k - p_i . u)
    const Vector mixed = batch.probs * u;
    Matrix s = batch.probs;
    for (Eigen::Index i = 0; i < n; ++i) s.row(i).array() *= (u.transpose().array() - mixed(i));
    return s;
}

ScoreMatrix activation_scores(const MlpModel& m, const FeatureBatch& batch, const ConceptDirection& v,
                              GradientKind kind) {
    if (v.space() != Space::Feature) {
        throw ShapeError("activation scores need a feature-space direction; got a projected-space direction");
    }
    return {activation_scores_raw(m, batch, v.vector(), kind), v.vector(), kind};
}

double tcav_fraction(std::span<const double> class_scores) {
    if (class_scores.empty()) throw DegenerateError("TCAV score of an empty class is undefined");
    std::size_t positive = 0;
    for (double s : class_scores) positive += s > 0.0 ? 1 : 0;
    return static_cast<double>(positive) / static_cast<double>(class_scores.size());
}

double tcav_score(const ScoreMatrix& scores, std::span<const int> labels, int k) {
    if (static_cast<Eigen::Index>(labels.size()) != scores.rows()) {
        throw ShapeError("labels and score rows differ in length");
    }
    if (k < 0 || k >= scores.classes()) throw ConfigError("class " + std::to_string(k) + " out of range");
    std::size_t positive = 0, total = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != k) continue;
        ++total;
        if (scores.values(static_cast<Eigen::Index>(i), k) > 0.0) ++positive;
    }
    if (total == 0) throw DegenerateError("class " + std::to_string(k) + " has no samples");
    return static_cast<double>(positive) / static_cast<double>(total);
}

double population_sd(std::span<const double> values) {
    if (values.empty()) throw DegenerateError("standard deviation of an empty set");
    double mean = 0.0;
    for (double x : values) mean += x;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double x : values) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(values.size()));
}

double sd_statistic(const ScoreMatrix& scores, std::span<const int> labels, int k, SdScope scope) {
    if (k < 0 || k >= scores.classes()) throw ConfigError("class " + std::to_string(k) + " out of range");
    const auto col = scores.values.col(k);
    if (scope == SdScope::AllSamples) return population_sd({col.data(), static_cast<std::size_t>(col.size())});
    if (static_cast<Eigen::Index>(labels.size()) != scores.rows()) {
        throw ShapeError("labels and score rows differ in length");
    }
    std::vector<double> in_class;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == k) in_class.push_back(col(static_cast<Eigen::Index>(i)));
    if (in_class.empty()) throw DegenerateError("class " + std::to_string(k) + " has no samples");
    return population_sd(in_class);
}

Vector direction_to_input_space(const MlpModel& m, const ConceptDirection& v) {
    if (v.space() != Space::Feature) throw ShapeError("input-space mapping needs a feature-space direction");
    if (v.dim() != m.hidden()) throw ShapeError("direction length does not match the hidden width");
    Vector x = m.W1.transpose() * v.vector();
    const double norm = x.norm();
    if (!(norm > 0.0)) throw DegenerateError("W1^T v vanishes; the direction has no input-space image");
    return x / norm;
}

} // namespace cscope
