#pragma once

#include "conceptscope/linalg.hpp"
#include "conceptscope/simdata.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace cscope {

/// One-hidden-layer ReLU network with a softmax head.
///
///   z(x) = ReLU(W1 x + b1)          learned features, J = hidden width
///   p(x) = softmax(W2 z(x) + b2)    class probabilities
struct MlpModel {
    Matrix W1; // h x d
    Vector b1; // h
    Matrix W2; // K x h
    Vector b2; // K

    Eigen::Index input_dim() const noexcept { return W1.cols(); }
    Eigen::Index hidden() const noexcept { return W1.rows(); }
    Eigen::Index num_classes() const noexcept { return W2.rows(); }

    /// Throws ShapeError on inconsistent shapes, DegenerateError on non-finite entries.
    void validate() const;
};

Vector features(const MlpModel& m, const Eigen::Ref<const Vector>& x);

/// Feature rows for every sample (n x h).
Matrix feature_matrix(const MlpModel& m, const Matrix& samples);

Vector logits(const MlpModel& m, const Eigen::Ref<const Vector>& z);

/// Softmax of the logits, computed with max-subtraction.
Vector class_probs(const MlpModel& m, const Eigen::Ref<const Vector>& z);

/// Probability rows for every feature row (n x K).
Matrix class_prob_matrix(const MlpModel& m, const Matrix& feats);

/// dp_k/dz_j = p_k (W2[k, j] - sum_m p_m W2[m, j]).  K x h.
Matrix prob_jacobian(const MlpModel& m, const Eigen::Ref<const Vector>& z);

/// Logits are affine in z, so their Jacobian is W2 everywhere.
const Matrix& logit_jacobian(const MlpModel& m) noexcept;

struct HalfSpace {
    Vector normal;
    double offset = 0.0;
};

/// Feature j is ReLU(normal . x + offset).
HalfSpace feature_halfspace(const MlpModel& m, Eigen::Index j);

struct TrainOptions {
    int hidden = 20;
    int epochs = 3000;
    double learning_rate = 0.5;
    std::uint64_t seed = 0;
};

struct TrainResult {
    MlpModel model;
    double final_loss = 0.0;
    double accuracy = 0.0;
    int epochs = 0;
};

/// Full-batch gradient descent on mean cross-entropy.
/// Weights start uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)); biases at zero.
/// Throws TrainingError naming the epoch when the loss becomes non-finite.
TrainResult train(const Dataset& data, const TrainOptions& options);

double mean_cross_entropy(const MlpModel& m, const Dataset& data);
double accuracy(const MlpModel& m, const Dataset& data);
int predict(const MlpModel& m, const Eigen::Ref<const Vector>& x);

std::string model_to_json(const MlpModel& m, int indent = 2);
MlpModel model_from_json(const std::string& text);
void save_model(const MlpModel& m, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

} // namespace cscope
