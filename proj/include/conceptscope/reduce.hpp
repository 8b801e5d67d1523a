#pragma once

#include "conceptscope/concepts.hpp"
#include "conceptscope/linalg.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cscope {

/// Principal components of a feature matrix.
struct PcaModel {
    Vector mean;                  // n
    Matrix components;            // n x k, orthonormal columns, descending eigenvalue
    Vector explained_variance;    // k eigenvalues of the sample covariance
    Vector variance_ratio;        // k shares of the total variance
    double total_variance = 0.0;

    Eigen::Index input_dim() const noexcept { return components.rows(); }
    Eigen::Index dim() const noexcept { return components.cols(); }

    /// Orthonormality (1e-8) and ratio monotonicity; throws DegenerateError.
    void check_invariants() const;
};

/// Fits PCA by SVD of the centered data. Each component is signed so that
/// its largest-magnitude entry is positive.
PcaModel pca_fit(const Matrix& X, Eigen::Index k);

Matrix pca_transform(const PcaModel& p, const Matrix& X);
Matrix pca_inverse(const PcaModel& p, const Matrix& Z);

/// m x K x n tensor of per-sample, per-class gradients (row-major, sample
/// outermost). Also used for the projected m x K x k tensor.
class GradientTensor {
public:
    GradientTensor() = default;
    GradientTensor(Eigen::Index rows, Eigen::Index classes, Eigen::Index cols);

    Eigen::Index rows() const noexcept { return rows_; }
    Eigen::Index classes() const noexcept { return classes_; }
    Eigen::Index cols() const noexcept { return cols_; }

    /// Gradient of sample i, class k.
    Eigen::Map<Vector> at(Eigen::Index i, Eigen::Index k);
    Eigen::Map<const Vector> at(Eigen::Index i, Eigen::Index k) const;

    /// K x cols block of sample i (row-major).
    Eigen::Map<RowMatrix> sample(Eigen::Index i);
    Eigen::Map<const RowMatrix> sample(Eigen::Index i) const;

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    bool operator==(const GradientTensor&) const = default;

private:
    Eigen::Index rows_ = 0, classes_ = 0, cols_ = 0;
    std::vector<double> data_;
};

/// Per-sample Jacobians of the chosen kind: entry (i, k) is row k of the
/// Jacobian at feature row i.
GradientTensor model_gradients(const MlpModel& m, const FeatureBatch& batch, GradientKind kind);

/// V^T g for every gradient vector; no centering.
GradientTensor project_gradients(const PcaModel& p, const GradientTensor& grads);
Vector project_gradient(const PcaModel& p, const Eigen::Ref<const Vector>& g);

/// Everything the explorer needs: projected points and gradients.
struct ProjectionBundle {
    std::vector<std::string> class_names;
    std::vector<std::string> ids;
    Matrix points; // m x k
    std::vector<int> labels;
    GradientTensor gradients; // m x K x k
    GradientKind gradient_kind = GradientKind::Probability;
    PcaModel pca;
    std::vector<std::string> thumbnails; // empty, or one relative path per sample ("" for none)

    Eigen::Index size() const noexcept { return points.rows(); }
    Eigen::Index dim() const noexcept { return points.cols(); }
    Eigen::Index num_classes() const noexcept { return static_cast<Eigen::Index>(class_names.size()); }

    /// Row alignment and shape agreement; throws ShapeError.
    void validate() const;
};

struct ProjectedScore {
    double score = 0.0;
    std::vector<double> per_point; // one entry per sample of the class, in bundle order
    std::vector<std::size_t> point_index;
};

/// TCAV in the projected space: s_i = G[i, cls] . v over class members.
/// Throws DegenerateError for a zero v or an empty class, ShapeError for a
/// wrong-length v, ConfigError for an unknown class.
ProjectedScore projected_tcav(const ProjectionBundle& bundle, std::span<const double> v, int cls);

struct BundleOptions {
    Eigen::Index components = 2;
    std::size_t fit_sample = 0; // 0 fits on every row
    std::uint64_t seed = 0;
    GradientKind gradient_kind = GradientKind::Probability;
};

/// Fits PCA on `features` (optionally on a seeded subsample of rows) and
/// projects features and gradients. Projected gradients are rounded to
/// single precision so the exported JSON stays compact and round-trips exactly.
ProjectionBundle build_bundle(const Matrix& features, const GradientTensor& grads, std::vector<int> labels,
                              std::vector<std::string> class_names, const BundleOptions& options);

/// PCA used by `build_bundle`: all rows, or `fit_sample` rows drawn without replacement.
PcaModel fit_bundle_pca(const Matrix& features, const BundleOptions& options);

/// Bundle from an already fitted PCA and already projected gradients.
ProjectionBundle assemble_bundle(PcaModel pca, const Matrix& features, GradientTensor projected,
                                 std::vector<int> labels, std::vector<std::string> class_names, GradientKind kind);

/// Nearest double to the shortest single-precision decimal of x.
double round_to_float_decimal(double x);

} // namespace cscope
