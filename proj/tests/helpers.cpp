#include "helpers.hpp"

#include "conceptscope/simdata.hpp"

#include <atomic>
#include <unistd.h>

namespace testutil {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("cscope-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

cscope::Matrix random_matrix(cscope::Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    cscope::Matrix M(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) M(i, j) = rng.normal();
    return M;
}

cscope::MlpModel random_model(cscope::Rng& rng, int d, int h, int k, double scale) {
    cscope::MlpModel m;
    m.W1 = scale * random_matrix(rng, h, d);
    m.b1 = scale * random_matrix(rng, h, 1);
    m.W2 = scale * random_matrix(rng, k, h);
    m.b2 = scale * random_matrix(rng, k, 1);
    return m;
}

const cscope::Dataset& small_dataset() {
    static const cscope::Dataset d = cscope::generate_simulation(600, 3);
    return d;
}

const cscope::MlpModel& small_trained_model() {
    static const cscope::MlpModel m = cscope::train(small_dataset(), {20, 1500, 0.5, 3}).model;
    return m;
}

cscope::ProjectionBundle synthetic_bundle(Eigen::Index m, Eigen::Index classes, Eigen::Index k, std::uint64_t seed) {
    cscope::Rng rng(seed);
    cscope::ProjectionBundle b;
    for (Eigen::Index c = 0; c < classes; ++c) b.class_names.push_back("c" + std::to_string(c));
    b.points = random_matrix(rng, m, k);
    b.gradients = cscope::GradientTensor(m, classes, k);
    for (double& g : b.gradients.data()) g = cscope::round_to_float_decimal(rng.normal());
    for (Eigen::Index i = 0; i < m; ++i) {
        b.ids.push_back("s" + std::to_string(i));
        b.labels.push_back(static_cast<int>(i % classes));
    }
    b.pca.mean = cscope::Vector::Zero(k + 1);
    b.pca.components = cscope::Matrix::Identity(k + 1, k);
    b.pca.explained_variance = cscope::Vector::LinSpaced(k, static_cast<double>(k), 1.0);
    b.pca.total_variance = b.pca.explained_variance.sum() + 0.5;
    b.pca.variance_ratio = b.pca.explained_variance / b.pca.total_variance;
    b.validate();
    return b;
}

} // namespace testutil
