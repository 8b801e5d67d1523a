#include <doctest.h>

#include "conceptscope/error.hpp"
#include "conceptscope/ingest.hpp"
#include "conceptscope/textio.hpp"
#include "helpers.hpp"

#include <chrono>

using namespace cscope;

namespace {

struct SimulationInputs {
    Matrix features;
    GradientTensor grads;
    std::vector<int> labels;
};

SimulationInputs simulation_inputs() {
    const MlpModel& m = testutil::small_trained_model();
    const Dataset& d = testutil::small_dataset();
    const FeatureBatch batch = make_feature_batch(m, feature_matrix(m, d.samples));
    return {batch.features, model_gradients(m, batch, GradientKind::Probability), d.labels};
}

void write_labels(const std::filesystem::path& p, const std::vector<int>& labels) {
    std::string s = "label\n";
    for (int y : labels) s += std::to_string(y) + "\n";
    write_file(p, s);
}

void write_gradient_csv(const std::filesystem::path& p, const GradientTensor& g) {
    std::string s;
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (Eigen::Index k = 0; k < g.classes(); ++k)
            for (Eigen::Index j = 0; j < g.cols(); ++j) s += (k || j ? "," : "") + format_real17(g.at(i, k)(j));
        s += "\n";
    }
    write_file(p, s);
}

} // namespace

TEST_CASE("simulation features through ingest give the native bundle") {
    const auto in = simulation_inputs();
    const std::vector<std::string> names = {"class0", "class1", "class2"};
    BundleOptions o;
    const ProjectionBundle native = build_bundle(in.features, in.grads, in.labels, names, o);

    testutil::TempDir dir("ingest-native");
    write_matrix_csv(dir / "features.csv", in.features);
    write_gradient_csv(dir / "gradients.csv", in.grads);
    write_labels(dir / "labels.csv", in.labels);
    IngestSpec spec;
    spec.features = dir / "features.csv";
    spec.gradients = dir / "gradients.csv";
    spec.labels = dir / "labels.csv";
    spec.class_names = names;
    const ProjectionBundle got = ingest(spec);
    CHECK(got.points == native.points);
    CHECK(got.gradients == native.gradients);
    CHECK(got.pca.components == native.pca.components);
    CHECK(got.pca.variance_ratio == native.pca.variance_ratio);
    CHECK(got.labels == native.labels);
    CHECK(got.ids == native.ids);
}

TEST_CASE("binary float32 formats") {
    Rng r(81);
    testutil::TempDir dir("ingest-bin");
    const Matrix X = testutil::random_matrix(r, 40, 6);
    write_f32_matrix(dir / "f.bin", X);
    CHECK(read_file(dir / "f.bin.json").find("\"rows\":40") != std::string::npos);
    const Matrix back = read_f32_matrix(dir / "f.bin");
    CHECK((back - X.cast<float>().cast<double>()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(read_features(dir / "f.bin") == back);
    // little-endian layout: 1.0f is 00 00 80 3f
    write_f32_matrix(dir / "one.bin", Matrix::Ones(1, 1));
    CHECK(read_file(dir / "one.bin") == std::string("\x00\x00\x80\x3f", 4));

    // size disagreement with the sidecar
    write_file(dir / "f.bin.json", "{\"rows\": 41, \"cols\": 6}");
    CHECK_THROWS_AS(read_f32_matrix(dir / "f.bin"), ShapeError);
    write_file(dir / "f.bin.json", "{\"rows\": 40}");
    CHECK_THROWS_AS(read_f32_matrix(dir / "f.bin"), IoError);
}

TEST_CASE("binary ingest streams gradients and matches the in-memory projection") {
    Rng r(82);
    testutil::TempDir dir("ingest-stream");
    const Eigen::Index m = 200, K = 4, n = 12;
    const Matrix X = testutil::random_matrix(r, m, n).cast<float>().cast<double>();
    GradientTensor G(m, K, n);
    for (double& g : G.data()) g = static_cast<float>(r.normal());
    std::vector<int> labels;
    for (Eigen::Index i = 0; i < m; ++i) labels.push_back(static_cast<int>(i % K));
    write_f32_matrix(dir / "f.bin", X);
    write_f32_gradients(dir / "g.bin", G);
    write_labels(dir / "y.csv", labels);
    write_file(dir / "thumbs.csv", [&] {
        std::string s = "thumbnail\n";
        for (Eigen::Index i = 0; i < m; ++i) s += "t/" + std::to_string(i) + ".png\n";
        return s;
    }());

    IngestSpec spec{dir / "f.bin", dir / "g.bin", dir / "y.csv", {}, dir / "thumbs.csv", {}};
    spec.options.components = 3;
    const ProjectionBundle b = ingest(spec);
    CHECK(b.num_classes() == K);
    CHECK(b.class_names[3] == "3");
    CHECK(b.thumbnails[7] == "t/7.png");
    const ProjectionBundle ref = build_bundle(X, G, labels, b.class_names, spec.options);
    CHECK(b.gradients == ref.gradients);
    CHECK(b.points == ref.points);
}

TEST_CASE("transposed gradient file names both shapes") {
    Rng r(83);
    testutil::TempDir dir("ingest-transposed");
    const Eigen::Index m = 30, K = 3, n = 5;
    write_f32_matrix(dir / "f.bin", testutil::random_matrix(r, m, n));
    // same bytes, dimensions swapped: n x K x m instead of m x K x n
    write_f32_gradients(dir / "g.bin", GradientTensor(n, K, m));
    write_labels(dir / "y.csv", std::vector<int>(m, 0));
    IngestSpec spec{dir / "f.bin", dir / "g.bin", dir / "y.csv", {"a", "b", "c"}, {}, {}};
    try {
        ingest(spec);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("expected 30x3x5") != std::string::npos);
        CHECK(msg.find("found 5x3x30") != std::string::npos);
    }
}

TEST_CASE("ingest shape checks") {
    Rng r(84);
    testutil::TempDir dir("ingest-shapes");
    write_f32_matrix(dir / "f.bin", testutil::random_matrix(r, 10, 4));
    write_f32_gradients(dir / "g.bin", GradientTensor(10, 2, 4));
    write_labels(dir / "short.csv", std::vector<int>(9, 0));
    write_labels(dir / "y.csv", std::vector<int>(10, 1));
    write_labels(dir / "bad.csv", std::vector<int>(10, 5));

    IngestSpec spec{dir / "f.bin", dir / "g.bin", dir / "short.csv", {}, {}, {}};
    CHECK_THROWS_AS(ingest(spec), ShapeError);
    spec.labels = dir / "bad.csv";
    CHECK_THROWS_AS(ingest(spec), ShapeError);
    spec.labels = dir / "y.csv";
    spec.class_names = {"a", "b", "c"}; // sidecar says 2 classes
    CHECK_THROWS_AS(ingest(spec), ShapeError);
    spec.class_names = {"a", "b"};
    CHECK(ingest(spec).size() == 10);

    write_file(dir / "g.csv", "1,2,3\n");
    spec.gradients = dir / "g.csv";
    CHECK_THROWS_AS(ingest(spec), ShapeError);
    spec.class_names.clear();
    CHECK_THROWS_AS(ingest(spec), ConfigError);
}

TEST_CASE("CSV readers report line numbers") {
    testutil::TempDir dir("ingest-csv");
    write_file(dir / "f.csv", "a,b\n1,2\n3\n");
    try {
        read_matrix_csv(dir / "f.csv");
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
    write_file(dir / "y.csv", "label\n0\nx\n");
    CHECK_THROWS_AS(read_labels(dir / "y.csv"), IoError);
}

TEST_CASE("ingest at moderate scale") {
    // Desk-sized stand-in for the full benchmark tool (tools/ingest_bench).
    Rng r(85);
    testutil::TempDir dir("ingest-scale");
    const Eigen::Index m = 4000, K = 10, n = 128;
    write_f32_matrix(dir / "f.bin", testutil::random_matrix(r, m, n));
    GradientTensor G(m, K, n);
    for (double& g : G.data()) g = r.normal();
    write_f32_gradients(dir / "g.bin", G);
    std::vector<int> labels;
    for (Eigen::Index i = 0; i < m; ++i) labels.push_back(static_cast<int>(i % K));
    write_labels(dir / "y.csv", labels);
    const auto t0 = std::chrono::steady_clock::now();
    const ProjectionBundle b = ingest({dir / "f.bin", dir / "g.bin", dir / "y.csv", {}, {}, {}});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    MESSAGE("ingest " << m << "x" << n << " K=" << K << ": " << secs << " s, first ratio " << b.pca.variance_ratio(0));
    CHECK(b.pca.variance_ratio(0) < 0.05);
    CHECK(secs < 20.0);
}
