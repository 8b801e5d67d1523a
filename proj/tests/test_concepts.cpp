#include <doctest.h>

#include "conceptscope/concepts.hpp"
#include "conceptscope/error.hpp"
#include "helpers.hpp"

using namespace cscope;

TEST_CASE("concept directions are unit vectors") {
    const ConceptDirection v(Vector::Constant(4, 2.0));
    CHECK(v.vector().norm() == doctest::Approx(1.0));
    CHECK((-v).vector() == -v.vector());
    CHECK_THROWS_AS(ConceptDirection(Vector::Zero(3)), DegenerateError);
    CHECK(ConceptDirection::basis(5, 2).vector() == Vector::Unit(5, 2));
}

TEST_CASE("sphere sampling") {
    const auto dirs = sample_sphere(20, 4000, 5);
    REQUIRE(dirs.size() == 4000);
    Vector mean = Vector::Zero(20);
    double second = 0;
    for (const auto& d : dirs) {
        CHECK(d.vector().norm() == doctest::Approx(1.0));
        mean += d.vector();
        second += d.vector()(3) * d.vector()(3);
    }
    mean /= 4000.0;
    CHECK(mean.cwiseAbs().maxCoeff() < 0.015);
    CHECK(second / 4000 == doctest::Approx(1.0 / 20).epsilon(0.1));
    CHECK(sample_sphere_at(20, 1234, 5).vector() == dirs[1234].vector());
    CHECK(sample_sphere(20, 10, 6)[0].vector() != dirs[0].vector());
}

TEST_CASE("activation scores are Jacobian-vector products") {
    Rng r(31);
    const MlpModel m = testutil::random_model(r, 2, 8, 3);
    const Matrix X = testutil::random_matrix(r, 50, 2);
    const FeatureBatch batch = make_feature_batch(m, feature_matrix(m, X));
    const ConceptDirection v(testutil::random_matrix(r, 8, 1));
    const ScoreMatrix s = activation_scores(m, batch, v, GradientKind::Probability);
    for (Eigen::Index i = 0; i < 50; ++i) {
        const Vector expected = prob_jacobian(m, batch.features.row(i).transpose()) * v.vector();
        CHECK((s.values.row(i).transpose() - expected).cwiseAbs().maxCoeff() < 1e-14);
    }
    const ScoreMatrix lg = activation_scores(m, batch, v, GradientKind::Logit);
    for (Eigen::Index i = 0; i < 50; ++i) CHECK((lg.values.row(i).transpose() - m.W2 * v.vector()).norm() < 1e-14);
}

TEST_CASE("scores are linear in the direction and flip under negation") {
    Rng r(32);
    const MlpModel m = testutil::random_model(r, 2, 6, 3);
    const FeatureBatch batch = make_feature_batch(m, feature_matrix(m, testutil::random_matrix(r, 30, 2)));
    const Vector a = testutil::random_matrix(r, 6, 1), b = testutil::random_matrix(r, 6, 1);
    const Matrix lhs = activation_scores_raw(m, batch, 2.0 * a - 3.0 * b, GradientKind::Probability);
    const Matrix rhs = 2.0 * activation_scores_raw(m, batch, a, GradientKind::Probability) -
                       3.0 * activation_scores_raw(m, batch, b, GradientKind::Probability);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);

    const ConceptDirection v(a);
    const auto s = activation_scores(m, batch, v, GradientKind::Probability);
    const auto t = activation_scores(m, batch, -v, GradientKind::Probability);
    CHECK((s.values + t.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("projected-space directions are rejected") {
    Rng r(33);
    const MlpModel m = testutil::random_model(r, 2, 4, 3);
    const FeatureBatch batch = make_feature_batch(m, feature_matrix(m, testutil::random_matrix(r, 5, 2)));
    CHECK_THROWS_AS(activation_scores(m, batch, ConceptDirection(Vector::Ones(4), Space::Projected), GradientKind::Logit),
                    ShapeError);
    CHECK_THROWS_AS(activation_scores(m, batch, ConceptDirection(Vector::Ones(5)), GradientKind::Logit), ShapeError);
}

TEST_CASE("TCAV counts strictly positive scores") {
    ScoreMatrix s;
    s.values.resize(6, 2);
    s.values << 1, 0, 0, 0, -1, 0, 2, 0, 0, 5, 0, -5;
    const std::vector<int> labels = {0, 0, 0, 0, 1, 1};
    CHECK(tcav_score(s, labels, 0) == doctest::Approx(0.5));
    CHECK(tcav_score(s, labels, 1) == doctest::Approx(0.5));
    CHECK(tcav_fraction(std::vector<double>{0.0, 0.0}) == 0.0);
}

TEST_CASE("TCAV of -v complements TCAV of v when no score is zero") {
    Rng r(34);
    const MlpModel& m = testutil::small_trained_model();
    const Dataset& d = testutil::small_dataset();
    const FeatureBatch batch = make_feature_batch(m, feature_matrix(m, d.samples));
    for (int t = 0; t < 10; ++t) {
        const ConceptDirection v(testutil::random_matrix(r, m.hidden(), 1));
        const auto s = activation_scores(m, batch, v, GradientKind::Probability);
        const auto n = activation_scores(m, batch, -v, GradientKind::Probability);
        for (int k = 0; k < 3; ++k) {
            double zeros = 0, members = 0;
            for (Eigen::Index i = 0; i < d.size(); ++i)
                if (d.labels[i] == k) {
                    ++members;
                    zeros += s.values(i, k) == 0.0;
                }
            CHECK(tcav_score(s, d.labels, k) + tcav_score(n, d.labels, k) == doctest::Approx(1.0 - zeros / members));
        }
    }
}

TEST_CASE("SD statistic") {
    ScoreMatrix s;
    s.values.resize(4, 1);
    s.values << 1, 3, 5, 7;
    const std::vector<int> labels = {0, 0, 1, 1};
    CHECK(population_sd(std::vector<double>{1, 3, 5, 7}) == doctest::Approx(std::sqrt(5.0)));
    CHECK(sd_statistic(s, labels, 0, SdScope::AllSamples) == doctest::Approx(std::sqrt(5.0)));
    CHECK(sd_statistic(s, labels, 0, SdScope::ClassOnly) == doctest::Approx(1.0));
}

TEST_CASE("input-space image of a direction") {
    Rng r(35);
    const MlpModel m = testutil::random_model(r, 2, 6, 3);
    const ConceptDirection v(testutil::random_matrix(r, 6, 1));
    const Vector u = direction_to_input_space(m, v);
    CHECK(u.norm() == doctest::Approx(1.0));
    CHECK((u - (m.W1.transpose() * v.vector()).normalized()).norm() < 1e-14);

    MlpModel flat = m;
    flat.W1.setZero();
    CHECK_THROWS_AS(direction_to_input_space(flat, v), DegenerateError);
}
