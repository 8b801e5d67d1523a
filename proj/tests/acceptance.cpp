// Acceptance gate: one PASS/FAIL line per criterion. Criteria 1-4 and 10 are
// judged from the files written by full pipeline runs; 5-9 from oracles.

#include "conceptscope/bundle_io.hpp"
#include "conceptscope/inference.hpp"
#include "conceptscope/pipeline.hpp"
#include "conceptscope/textio.hpp"
#include "helpers.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

using namespace cscope;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSeeds = 10;
constexpr int kRequiredSeeds = 8;

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
    std::fflush(stdout);
    failures += !pass;
}

std::string fmt(double x, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

struct SeedRun {
    fs::path dir;
    double seconds = 0;
    RunManifest manifest;
};

// ---- per-seed evaluations from run outputs

double training_accuracy(const fs::path& dir) {
    return json::parse(read_file(dir / layout::training)).at("accuracy").get<double>();
}

/// Mean |dy| of discovered input-space directions per class (NaN when none).
std::vector<double> mean_vertical(const fs::path& dir, std::vector<int>& counts) {
    std::istringstream in(read_file(dir / layout::screening));
    std::string line;
    std::getline(in, line);
    std::vector<double> sum(3, 0.0);
    counts.assign(3, 0);
    while (std::getline(in, line)) {
        const auto t = split(line, ',');
        if (t[5] != "1") continue;
        const int cls = static_cast<int>(parse_int(t[1], "class"));
        sum[cls] += std::abs(parse_real(t[7], "dy"));
        ++counts[cls];
    }
    std::vector<double> out(3);
    for (int k = 0; k < 3; ++k) out[k] = counts[k] ? sum[k] / counts[k] : std::nan("");
    return out;
}

} // namespace

int main() {
    testutil::TempDir root("acceptance");

    // ---------------------------------------------------------------- runs
    std::vector<SeedRun> runs;
    for (int s = 0; s < kSeeds; ++s) {
        PipelineConfig c;
        c.seed = static_cast<std::uint64_t>(s);
        SeedRun r;
        r.dir = root / ("seed" + std::to_string(s));
        const auto t0 = std::chrono::steady_clock::now();
        r.manifest = run_pipeline(c, r.dir);
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        runs.push_back(std::move(r));
    }
    double slowest = 0;
    for (const auto& r : runs) slowest = std::max(slowest, r.seconds);

    // 1. training accuracy
    {
        int ok = 0;
        std::string accs;
        for (const auto& r : runs) {
            const double a = training_accuracy(r.dir);
            ok += a >= 0.99;
            accs += (accs.empty() ? "" : " ") + fmt(a, 4);
        }
        report(1, ok >= kRequiredSeeds && slowest < 60.0,
               std::to_string(ok) + "/10 seeds reach accuracy >= 0.99 [" + accs + "]; slowest full pipeline " +
                   fmt(slowest, 1) + " s (< 60 s)");
    }

    // 2. direction geometry
    {
        int ok = 0;
        std::string detail;
        for (const auto& r : runs) {
            std::vector<int> n;
            const auto v = mean_vertical(r.dir, n);
            const bool pass = !std::isnan(v[0]) && !std::isnan(v[1]) && !std::isnan(v[2]) && v[0] - v[1] >= 0.15 &&
                              v[2] - v[1] >= 0.15;
            ok += pass;
            detail += " (" + std::to_string(n[0]) + "," + std::to_string(n[1]) + "," + std::to_string(n[2]) + " found";
            for (int k = 0; k < 3; ++k) detail += std::string(k ? "," : ": |dy| ") + (std::isnan(v[k]) ? "-" : fmt(v[k], 2));
            detail += ")";
        }
        report(2, ok >= kRequiredSeeds,
               std::to_string(ok) + "/10 seeds with mean |dy| of classes 0 and 2 each >= class 1 + 0.15;" + detail);
    }

    // 3. cluster screening
    {
        int ok = 0;
        std::string detail;
        for (const auto& r : runs) {
            const auto rho = json::parse(read_file(r.dir / layout::cluster_summary))
                                 .at("spearman_sd_vs_negative_distance")
                                 .get<std::vector<double>>();
            int panels = 0;
            for (double x : rho) panels += x >= 0.4;
            ok += panels * 2 > static_cast<int>(rho.size());
            detail += " [" + fmt(rho[0], 2) + "," + fmt(rho[1], 2) + "," + fmt(rho[2], 2) + "]";
        }
        report(3, ok >= kRequiredSeeds,
               std::to_string(ok) + "/10 seeds with Spearman >= 0.4 on a majority of class panels;" + detail);
    }

    // 4. sign structure
    {
        int ok = 0;
        std::string detail;
        for (const auto& r : runs) {
            const auto mean = json::parse(read_file(r.dir / layout::cluster_summary)).at("class_mean_score").get<std::vector<double>>();
            ok += mean[0] > 0 && mean[1] > 0 && mean[2] < 0;
            detail += " ";
            for (double m : mean) detail += m > 0 ? '+' : (m < 0 ? '-' : '0');
        }
        report(4, ok >= kRequiredSeeds,
               std::to_string(ok) + "/10 seeds with per-class mean score signs (+,+,-) for the downward-oriented feature;" +
                   detail);
    }

    // 5. BH FDR control
    {
        bool pass = true;
        std::string detail;
        for (double alpha : {0.05, 0.1}) {
            for (int scenario = 0; scenario < 2; ++scenario) {
                // scenario 0: all 200 null; scenario 1: 180 null + 20 shifted alternatives
                Rng rng(derive_seed(static_cast<std::uint64_t>(alpha * 1000) + scenario, 99));
                double fdp_sum = 0;
                for (int trial = 0; trial < 1000; ++trial) {
                    std::vector<double> p(200);
                    for (std::size_t j = 0; j < p.size(); ++j) {
                        if (scenario == 1 && j < 20) {
                            p[j] = 1.0 - normal_cdf(rng.normal() + 3.0);
                        } else {
                            p[j] = rng.uniform();
                        }
                    }
                    const auto res = bh_procedure(p, alpha);
                    std::size_t rejected = 0, false_rej = 0;
                    for (std::size_t j = 0; j < p.size(); ++j) {
                        rejected += res.rejected[j];
                        false_rej += res.rejected[j] && !(scenario == 1 && j < 20);
                    }
                    if (rejected) fdp_sum += static_cast<double>(false_rej) / rejected;
                }
                const double fdr = fdp_sum / 1000;
                pass = pass && fdr <= alpha + 0.02;
                detail += std::string(" alpha=") + fmt(alpha, 2) + (scenario ? " mixed" : " null") + ": FDR " + fmt(fdr, 4) + ";";
            }
        }
        report(5, pass, "J=200, 1000 trials, empirical FDR <= alpha + 0.02;" + detail);
    }

    // 6. lFDR calibration
    {
        double hits = 0, false_hits = 0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            Rng rng(derive_seed(seed, 77));
            std::vector<double> t(1000);
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal() + (i < 20 ? 6.0 : 0.0);
            const Discovery d = discover(t, 0.1);
            for (std::size_t i = 0; i < t.size(); ++i)
                if (d.results[i].discovered) (i < 20 ? hits : false_hits) += 1;
        }
        hits /= 100;
        false_hits /= 100;
        report(6, hits >= 15 && false_hits <= 5,
               "980 null + 20 at +6 sigma, alpha=0.1, 100 seeds: mean true discoveries " + fmt(hits, 2) +
                   " (>= 15), mean false discoveries " + fmt(false_hits, 2) + " (<= 5)");
    }

    // 7. gradient correctness
    {
        Rng rng(7007);
        double worst = 0;
        for (int pair = 0; pair < 100; ++pair) {
            const MlpModel m = testutil::random_model(rng, 2, 20, 3);
            const Vector x(Vector::Random(2));
            const Vector z = features(m, Vector{{rng.uniform(-1, 1), rng.uniform(-1, 1)}});
            const Matrix J = prob_jacobian(m, z);
            const double h = 1e-5;
            for (Eigen::Index j = 0; j < z.size(); ++j) {
                Vector zp = z, zm = z;
                zp(j) += h;
                zm(j) -= h;
                const Vector fd = (class_probs(m, zp) - class_probs(m, zm)) / (2 * h);
                worst = std::max(worst, (J.col(j) - fd).cwiseAbs().maxCoeff());
            }
        }
        report(7, worst <= 1e-5, "100 random (model, point) pairs: max |analytic - central difference| = " +
                                     [&] { std::ostringstream o; o << worst; return o.str(); }() + " (<= 1e-5)");
    }

    // 8. PCA
    {
        const MlpModel model = load_model(runs[0].dir / layout::model);
        const Dataset data = read_dataset_csv(runs[0].dir / layout::data);
        Rng rng(8008);
        std::vector<Matrix> inputs = {feature_matrix(model, data.samples), testutil::random_matrix(rng, 300, 12)};
        double ortho = 0, round_trip = 0, ratio_err = 0;
        bool monotone = true;
        for (const Matrix& X : inputs) {
            const Eigen::Index n = X.cols();
            const PcaModel full = pca_fit(X, n);
            ortho = std::max(ortho, (full.components.transpose() * full.components - Matrix::Identity(n, n)).cwiseAbs().maxCoeff());
            round_trip = std::max(round_trip, (pca_inverse(full, pca_transform(full, X)) - X).cwiseAbs().maxCoeff());
            const Matrix C = X.rowwise() - X.colwise().mean();
            Eigen::SelfAdjointEigenSolver<Matrix> eig(C.transpose() * C / static_cast<double>(X.rows() - 1));
            const Vector vals = eig.eigenvalues().reverse().cwiseMax(0.0);
            ratio_err = std::max(ratio_err, (full.variance_ratio - vals / vals.sum()).cwiseAbs().maxCoeff());
            double prev = std::numeric_limits<double>::infinity();
            for (Eigen::Index k = 1; k <= n; ++k) {
                const PcaModel p = pca_fit(X, k);
                const double e = (pca_inverse(p, pca_transform(p, X)) - X).squaredNorm();
                monotone = monotone && e <= prev * (1 + 1e-12) + 1e-12;
                prev = e;
            }
        }
        std::ostringstream o;
        o << "orthonormality " << ortho << ", full-k round trip " << round_trip << ", ratio vs eigendecomposition "
          << ratio_err << " (all <= 1e-8); reconstruction error nonincreasing in k: " << (monotone ? "yes" : "no");
        report(8, ortho <= 1e-8 && round_trip <= 1e-8 && ratio_err <= 1e-8 && monotone, o.str());
    }

    // 9. projected scoring fidelity
    {
        const MlpModel model = load_model(runs[0].dir / layout::model);
        const Dataset data = read_dataset_csv(runs[0].dir / layout::data);
        const ProjectionBundle b = load_bundle(runs[0].dir / "projection" / kBundleFile);
        const FeatureBatch batch = make_feature_batch(model, feature_matrix(model, data.samples));
        Rng rng(9009);
        double worst = 0;
        for (int t = 0; t < 200; ++t) {
            const Vector c = testutil::random_matrix(rng, b.dim(), 1);
            const Vector v = b.pca.components * c;
            const std::vector<double> cv(c.data(), c.data() + c.size());
            const ScoreMatrix full = activation_scores(model, batch, ConceptDirection(v), b.gradient_kind);
            for (int k = 0; k < 3; ++k)
                worst = std::max(worst, std::abs(projected_tcav(b, cv, k).score - tcav_score(full, data.labels, k)));
        }
        report(9, worst <= 0.1, "200 in-span directions x 3 classes on the simulation bundle: max |projected - full TCAV| = " +
                                    fmt(worst, 6) + " (<= 0.1)");
    }

    // 10. determinism
    {
        const fs::path again = root / "replay";
        const auto mismatched = replay_manifest(runs[0].manifest, again);
        std::string names;
        for (const auto& m : mismatched) names += " " + m;
        report(10, mismatched.empty() && !runs[0].manifest.files.empty(),
               "manifest replay reproduced " + std::to_string(runs[0].manifest.files.size() - mismatched.size()) + "/" +
                   std::to_string(runs[0].manifest.files.size()) + " output digests bitwise" +
                   (names.empty() ? "" : "; differing:" + names));
    }

    std::printf("acceptance: %d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
