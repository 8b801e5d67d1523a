#pragma once

#include "conceptscope/linalg.hpp"
#include "conceptscope/model.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace cscope {

enum class Space { Feature, Projected };
enum class GradientKind { Probability, Logit };

std::string_view to_string(GradientKind kind) noexcept;
GradientKind parse_gradient_kind(std::string_view s);

/// Unit-norm direction tagged with the space it lives in.
class ConceptDirection {
public:
    /// Normalizes `v`; throws DegenerateError for a zero or non-finite vector.
    ConceptDirection(Vector v, Space space = Space::Feature);

    /// Unit basis vector e_j.
    static ConceptDirection basis(Eigen::Index dim, Eigen::Index j, Space space = Space::Feature);

    const Vector& vector() const noexcept { return v_; }
    Space space() const noexcept { return space_; }
    Eigen::Index dim() const noexcept { return v_.size(); }
    ConceptDirection operator-() const;

private:
    Vector v_;
    Space space_;
};

/// `count` i.i.d. directions uniform on the unit sphere in R^dim
/// (normalized standard-normal draws). Direction i is drawn from its own
/// substream of `seed`, so any slice of the batch can be regenerated alone.
std::vector<ConceptDirection> sample_sphere(Eigen::Index dim, std::size_t count, std::uint64_t seed);

/// Direction `index` of the batch produced by `sample_sphere(dim, *, seed)`.
ConceptDirection sample_sphere_at(Eigen::Index dim, std::uint64_t index, std::uint64_t seed);

/// S_v(x_i) for every sample: row i is Jacobian(z_i) v.  n x K.
struct ScoreMatrix {
    Matrix values;
    Vector direction;
    GradientKind kind = GradientKind::Probability;

    Eigen::Index rows() const noexcept { return values.rows(); }
    Eigen::Index classes() const noexcept { return values.cols(); }
};

/// Feature rows plus their class probabilities, computed once and shared
/// across every direction scored against the same samples.
struct FeatureBatch {
    Matrix features; // n x h
    Matrix probs;    // n x K
};

FeatureBatch make_feature_batch(const MlpModel& m, Matrix features);

/// Directional derivative of the class outputs along a feature-space
/// direction. Throws ShapeError for projected-space or wrong-length directions.
ScoreMatrix activation_scores(const MlpModel& m, const FeatureBatch& batch, const ConceptDirection& v,
                              GradientKind kind);

/// Unnormalized variant, linear in v.
Matrix activation_scores_raw(const MlpModel& m, const FeatureBatch& batch, const Eigen::Ref<const Vector>& v,
                             GradientKind kind);

/// Fraction of class-k rows with score strictly above zero.
double tcav_score(const ScoreMatrix& scores, std::span<const int> labels, int k);
double tcav_fraction(std::span<const double> class_scores);

enum class SdScope { AllSamples, ClassOnly };

/// Population standard deviation of column k over the scope.
double sd_statistic(const ScoreMatrix& scores, std::span<const int> labels, int k,
                    SdScope scope = SdScope::AllSamples);
double population_sd(std::span<const double> values);

/// W1^T v normalized to unit length: the input-space picture of a concept.
Vector direction_to_input_space(const MlpModel& m, const ConceptDirection& v);

} // namespace cscope
