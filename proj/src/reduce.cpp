#include "conceptscope/reduce.hpp"

#include "conceptscope/error.hpp"
#include "conceptscope/rng.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>

namespace cscope {

void PcaModel::check_invariants() const {
    const Eigen::Index k = dim();
    const Matrix gram = components.transpose() * components;
    if ((gram - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-8) {
        throw DegenerateError("PCA components are not orthonormal");
    }
    for (Eigen::Index i = 0; i < variance_ratio.size(); ++i) {
        const double r = variance_ratio(i);
        if (!(r >= -1e-12 && r <= 1.0 + 1e-12)) throw DegenerateError("variance ratio outside [0, 1]");
        if (i > 0 && r > variance_ratio(i - 1) + 1e-12) throw DegenerateError("variance ratios are not nonincreasing");
    }
    if (variance_ratio.sum() > 1.0 + 1e-8) throw DegenerateError("variance ratios sum above 1");
}

PcaModel pca_fit(const Matrix& X, Eigen::Index k) {
    const Eigen::Index m = X.rows(), n = X.cols();
    if (m < 2) throw ConfigError("PCA needs at least two rows");
    if (k < 1 || k > std::min(m, n)) {
        throw ConfigError("PCA component count " + std::to_string(k) + " must lie in [1, " +
                          std::to_string(std::min(m, n)) + "]");
    }
    PcaModel p;
    p.mean = X.colwise().mean().transpose();
    Matrix centered = X.rowwise() - p.mean.transpose();
    const double scale = 1.0 / static_cast<double>(m - 1);
    p.total_variance = centered.squaredNorm() * scale;
    if (!(p.total_variance > 0.0)) throw DegenerateError("PCA input has zero variance");

    Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    p.components = svd.matrixV().leftCols(k);
    p.explained_variance = s.head(k).cwiseAbs2() * scale;
    p.variance_ratio = p.explained_variance / p.total_variance;

    for (Eigen::Index c = 0; c < k; ++c) {
        Eigen::Index idx = 0;
        p.components.col(c).cwiseAbs().maxCoeff(&idx);
        if (p.components(idx, c) < 0.0) p.components.col(c) *= -1.0;
    }
    p.check_invariants();
    return p;
}

Matrix pca_transform(const PcaModel& p, const Matrix& X) {
    if (X.cols() != p.input_dim()) {
        throw ShapeError("PCA transform: input has " + std::to_string(X.cols()) + " columns, model expects " +
                         std::to_string(p.input_dim()));
    }
    return (X.rowwise() - p.mean.transpose()) * p.components;
}

Matrix pca_inverse(const PcaModel& p, const Matrix& Z) {
    if (Z.cols() != p.dim()) {
        throw ShapeError("PCA inverse: scores have " + std::to_string(Z.cols()) + " columns, model has " +
                         std::to_string(p.dim()) + " components");
    }
    Matrix out = Z * p.components.transpose();
    out.rowwise() += p.mean.transpose();
    return out;
}

GradientTensor::GradientTensor(Eigen::Index rows, Eigen::Index classes, Eigen::Index cols)
    : rows_(rows), classes_(classes), cols_(cols), data_(static_cast<std::size_t>(rows * classes * cols), 0.0) {
    if (rows < 0 || classes < 0 || cols < 0) throw ShapeError("negative tensor dimension");
}

Eigen::Map<Vector> GradientTensor::at(Eigen::Index i, Eigen::Index k) {
    return {data_.data() + (i * classes_ + k) * cols_, cols_};
}

Eigen::Map<const Vector> GradientTensor::at(Eigen::Index i, Eigen::Index k) const {
    return {data_.data() + (i * classes_ + k) * cols_, cols_};
}

Eigen::Map<RowMatrix> GradientTensor::sample(Eigen::Index i) {
    return {data_.data() + i * classes_ * cols_, classes_, cols_};
}

Eigen::Map<const RowMatrix> GradientTensor::sample(Eigen::Index i) const {
    return {data_.data() + i * classes_ * cols_, classes_, cols_};
}

GradientTensor model_gradients(const MlpModel& m, const FeatureBatch& batch, GradientKind kind) {
    const Eigen::Index n = batch.features.rows();
    GradientTensor out(n, m.num_classes(), m.hidden());
    for (Eigen::Index i = 0; i < n; ++i) {
        if (kind == GradientKind::Logit) {
            out.sample(i) = m.W2;
            continue;
        }
        const Vector p = batch.probs.row(i).transpose();
        Matrix jac = m.W2;
        jac.rowwise() -= p.transpose() * m.W2;
        out.sample(i) = p.asDiagonal() * jac;
    }
    return out;
}

Vector project_gradient(const PcaModel& p, const Eigen::Ref<const Vector>& g) {
    if (g.size() != p.input_dim()) {
        throw ShapeError("gradient has length " + std::to_string(g.size()) + ", PCA expects " +
                         std::to_string(p.input_dim()));
    }
    // Copy into an owned vector so that the product does not depend on the
    // alignment of the caller's buffer.
    const Vector owned = g;
    return p.components.transpose() * owned;
}

GradientTensor project_gradients(const PcaModel& p, const GradientTensor& grads) {
    if (grads.cols() != p.input_dim()) {
        throw ShapeError("gradient tensor has trailing dimension " + std::to_string(grads.cols()) +
                         ", PCA expects " + std::to_string(p.input_dim()));
    }
    GradientTensor out(grads.rows(), grads.classes(), p.dim());
    for (Eigen::Index i = 0; i < grads.rows(); ++i)
        for (Eigen::Index k = 0; k < grads.classes(); ++k) out.at(i, k) = project_gradient(p, grads.at(i, k));
    return out;
}

void ProjectionBundle::validate() const {
    const Eigen::Index m = points.rows();
    const auto fail = [](const std::string& what) { throw ShapeError("projection bundle: " + what); };
    if (static_cast<Eigen::Index>(labels.size()) != m) fail("labels do not match the point count");
    if (static_cast<Eigen::Index>(ids.size()) != m) fail("ids do not match the point count");
    if (gradients.rows() != m) fail("gradient rows do not match the point count");
    if (gradients.classes() != num_classes()) fail("gradient class count does not match the class names");
    if (gradients.cols() != points.cols()) fail("gradient and point dimensions differ");
    if (pca.dim() != points.cols()) fail("PCA component count differs from the point dimension");
    if (pca.mean.size() != pca.input_dim()) fail("PCA mean length differs from the component rows");
    if (pca.variance_ratio.size() != pca.dim()) fail("variance ratio count differs from the component count");
    if (!thumbnails.empty() && static_cast<Eigen::Index>(thumbnails.size()) != m) {
        fail("thumbnail list does not match the point count");
    }
    for (int y : labels)
        if (y < 0 || y >= num_classes()) fail("label " + std::to_string(y) + " out of range");
}

ProjectedScore projected_tcav(const ProjectionBundle& bundle, std::span<const double> v, int cls) {
    if (cls < 0 || cls >= bundle.num_classes()) {
        throw ConfigError("unknown class " + std::to_string(cls));
    }
    if (static_cast<Eigen::Index>(v.size()) != bundle.dim()) {
        throw ShapeError("concept vector has length " + std::to_string(v.size()) + ", bundle has " +
                         std::to_string(bundle.dim()) + " components");
    }
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) {
        throw DegenerateError("concept vector must be nonzero");
    }
    ProjectedScore out;
    std::size_t positive = 0;
    const auto k = static_cast<std::size_t>(bundle.dim());
    for (Eigen::Index i = 0; i < bundle.size(); ++i) {
        if (bundle.labels[static_cast<std::size_t>(i)] != cls) continue;
        const auto g = bundle.gradients.at(i, cls);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += g(static_cast<Eigen::Index>(j)) * v[j];
        out.per_point.push_back(s);
        out.point_index.push_back(static_cast<std::size_t>(i));
        if (s > 0.0) ++positive;
    }
    if (out.per_point.empty()) throw DegenerateError("class " + std::to_string(cls) + " has no samples");
    out.score = static_cast<double>(positive) / static_cast<double>(out.per_point.size());
    return out;
}

double round_to_float_decimal(double x) {
    if (!std::isfinite(x)) return x;
    std::array<char, 48> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), static_cast<float>(x));
    double out = 0.0;
    std::from_chars(buf.data(), end, out);
    return out;
}

namespace {

std::vector<Eigen::Index> subsample_rows(Eigen::Index m, std::size_t count, std::uint64_t seed) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) idx[static_cast<std::size_t>(i)] = i;
    Rng rng = Rng::stream(seed, streams::pca_subsample);
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(idx.size() - i)));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

} // namespace

PcaModel fit_bundle_pca(const Matrix& features, const BundleOptions& options) {
    const Eigen::Index m = features.rows();
    if (options.fit_sample > 0 && static_cast<Eigen::Index>(options.fit_sample) < m) {
        const auto rows = subsample_rows(m, options.fit_sample, options.seed);
        return pca_fit(features(rows, Eigen::all), options.components);
    }
    return pca_fit(features, options.components);
}

ProjectionBundle assemble_bundle(PcaModel pca, const Matrix& features, GradientTensor projected,
                                 std::vector<int> labels, std::vector<std::string> class_names, GradientKind kind) {
    const Eigen::Index m = features.rows();
    if (static_cast<Eigen::Index>(labels.size()) != m) {
        throw ShapeError("found " + std::to_string(labels.size()) + " labels for " + std::to_string(m) + " rows");
    }
    ProjectionBundle b;
    b.points = pca_transform(pca, features);
    b.pca = std::move(pca);
    b.gradients = std::move(projected);
    for (double& g : b.gradients.data()) g = round_to_float_decimal(g);
    b.labels = std::move(labels);
    b.class_names = std::move(class_names);
    b.gradient_kind = kind;
    b.ids.reserve(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) b.ids.push_back(std::to_string(i));
    b.validate();
    return b;
}

ProjectionBundle build_bundle(const Matrix& features, const GradientTensor& grads, std::vector<int> labels,
                              std::vector<std::string> class_names, const BundleOptions& options) {
    const Eigen::Index m = features.rows();
    if (grads.rows() != m || grads.cols() != features.cols() ||
        grads.classes() != static_cast<Eigen::Index>(class_names.size())) {
        throw ShapeError("gradient tensor shape (" + std::to_string(grads.rows()) + " x " +
                         std::to_string(grads.classes()) + " x " + std::to_string(grads.cols()) +
                         ") does not match expected (" + std::to_string(m) + " x " +
                         std::to_string(class_names.size()) + " x " + std::to_string(features.cols()) + ")");
    }
    PcaModel pca = fit_bundle_pca(features, options);
    GradientTensor projected = project_gradients(pca, grads);
    return assemble_bundle(std::move(pca), features, std::move(projected), std::move(labels), std::move(class_names),
                           options.gradient_kind);
}

} // namespace cscope
