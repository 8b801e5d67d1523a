#include "conceptscope/inference.hpp"

#include "conceptscope/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace cscope {

namespace {

// sqrt(1 - 2 c phi(c) / (2 Phi(c) - 1)) with c the upper quartile of N(0, 1).
const double kCentralHalfSdFactor = [] {
    const double c = 0.6744897501960817;
    const double phi = std::exp(-0.5 * c * c) / std::sqrt(2.0 * std::numbers::pi);
    return std::sqrt(1.0 - 2.0 * c * phi / 0.5);
}();

} // namespace

double normal_pdf(double x) noexcept { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw DegenerateError("quantile of an empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double randomization_pvalue(double observed, std::span<const double> null_stats) {
    if (null_stats.empty()) throw ConfigError("randomization p-value needs at least one null statistic");
    const auto at_least = std::count_if(null_stats.begin(), null_stats.end(), [&](double t) { return t >= observed; });
    return static_cast<double>(at_least) / static_cast<double>(null_stats.size());
}

BhResult bh_procedure(std::span<const double> p_values, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("BH level alpha must lie in (0, 1)");
    for (double p : p_values)
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p-value " + std::to_string(p) + " outside [0, 1]");

    const std::size_t J = p_values.size();
    std::vector<std::size_t> order(J);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });

    BhResult out;
    out.rejected.assign(J, false);
    for (std::size_t j = J; j >= 1; --j) {
        const double threshold = static_cast<double>(j) * alpha / static_cast<double>(J);
        if (p_values[order[j - 1]] <= threshold) {
            out.cutoff_rank = j;
            out.threshold = threshold;
            break;
        }
    }
    for (std::size_t r = 0; r < out.cutoff_rank; ++r) out.rejected[order[r]] = true;
    return out;
}

EmpiricalNull::EmpiricalNull(double delta, double sigma0, double pi0, std::vector<double> sample, double bandwidth)
    : delta_(delta), sigma0_(sigma0), pi0_(pi0), sample_(std::move(sample)), bandwidth_(bandwidth) {
    if (!(sigma0_ > 0.0)) throw DegenerateError("null SD must be positive");
    if (!(pi0_ > 0.0 && pi0_ <= 1.0)) throw DegenerateError("null proportion must lie in (0, 1]");
    if (!(bandwidth_ > 0.0)) throw DegenerateError("kernel bandwidth must be positive");
}

double EmpiricalNull::null_density(double t) const noexcept { return normal_pdf((t - delta_) / sigma0_) / sigma0_; }

double EmpiricalNull::density(double t) const noexcept {
    double acc = 0.0;
    for (double x : sample_) acc += normal_pdf((t - x) / bandwidth_);
    const double f = acc / (static_cast<double>(sample_.size()) * bandwidth_);
    return std::max(f, kDensityFloor);
}

double EmpiricalNull::lfdr(double t) const noexcept {
    const double value = pi0_ * null_density(t) / density(t);
    // Kept strictly positive so that alpha = 0 never rejects.
    return std::clamp(value, std::numeric_limits<double>::min(), 1.0);
}

EmpiricalNull fit_empirical_null(std::span<const double> statistics) {
    const std::size_t n = statistics.size();
    if (n < kMinNullFitSize) {
        throw ConfigError("empirical null fit needs at least " + std::to_string(kMinNullFitSize) + " statistics, got " +
                          std::to_string(n));
    }
    for (double t : statistics)
        if (!std::isfinite(t)) throw DegenerateError("statistics must be finite");

    std::vector<double> sorted(statistics.begin(), statistics.end());
    std::sort(sorted.begin(), sorted.end());
    const double lo = quantile_sorted(sorted, 0.25);
    const double hi = quantile_sorted(sorted, 0.75);
    if (!(hi > lo)) throw DegenerateError("statistics have zero interquartile range");

    double sum = 0.0, count = 0.0;
    for (double t : sorted)
        if (t >= lo && t <= hi) {
            sum += t;
            count += 1.0;
        }
    const double mean = sum / count;
    double ss = 0.0;
    for (double t : sorted)
        if (t >= lo && t <= hi) ss += (t - mean) * (t - mean);
    const double sd = std::sqrt(ss / count);
    if (!(sd > 0.0)) throw DegenerateError("statistics inside the interquartile range are constant");

    // A normal restricted to its central half has SD 0.3777 sigma and an
    // unchanged mean; undo that shrinkage.
    const double delta = mean;
    const double sigma = sd / kCentralHalfSdFactor;
    const double mass = normal_cdf((hi - delta) / sigma) - normal_cdf((lo - delta) / sigma);
    const double pi0 = std::min(1.0, count / (static_cast<double>(n) * mass));

    // Silverman's rule of thumb.
    double all_mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
    double all_ss = 0.0;
    for (double t : sorted) all_ss += (t - all_mean) * (t - all_mean);
    const double all_sd = std::sqrt(all_ss / static_cast<double>(n - 1));
    const double spread = std::min(all_sd, (hi - lo) / 1.34);
    const double bandwidth = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);

    return EmpiricalNull(delta, sigma, pi0, std::vector<double>(statistics.begin(), statistics.end()), bandwidth);
}

std::vector<double> lfdr(std::span<const double> statistics, const EmpiricalNull& null) {
    std::vector<double> out;
    out.reserve(statistics.size());
    for (double t : statistics) out.push_back(null.lfdr(t));
    return out;
}

std::string to_string(Method m) { return m == Method::Lfdr ? "lfdr" : "bh-randomization"; }

Discovery discover(std::span<const double> statistics, double alpha, int cls) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("lFDR level alpha must lie in [0, 1]");
    EmpiricalNull null = fit_empirical_null(statistics);
    std::vector<ScreeningResult> results;
    results.reserve(statistics.size());
    for (std::size_t i = 0; i < statistics.size(); ++i) {
        ScreeningResult r;
        r.direction = i;
        r.cls = cls;
        r.statistic = statistics[i];
        r.lfdr = null.lfdr(statistics[i]);
        r.discovered = *r.lfdr <= alpha && statistics[i] > null.delta();
        r.method = Method::Lfdr;
        results.push_back(r);
    }
    return {std::move(results), std::move(null)};
}

std::string null_fit_json(const EmpiricalNull& null, std::size_t bins, std::size_t grid) {
    const auto sample = null.sample();
    const auto [mn_it, mx_it] = std::minmax_element(sample.begin(), sample.end());
    const double mn = *mn_it, mx = *mx_it;
    const double width = mx > mn ? (mx - mn) / static_cast<double>(bins) : 1.0;
    std::vector<std::size_t> counts(bins, 0);
    for (double t : sample) {
        auto b = static_cast<std::size_t>((t - mn) / width);
        counts[std::min(b, bins - 1)]++;
    }
    nlohmann::json j;
    j["delta"] = null.delta();
    j["sigma0"] = null.sigma0();
    j["pi0"] = null.pi0();
    j["bandwidth"] = null.bandwidth();
    j["n"] = sample.size();
    j["histogram"] = nlohmann::json::array();
    for (std::size_t b = 0; b < bins; ++b) j["histogram"].push_back({mn + width * static_cast<double>(b), counts[b]});
    j["density_grid"] = nlohmann::json::array();
    const double g_lo = std::min(mn, null.delta() - 3.0 * null.sigma0()) - 3.0 * null.bandwidth();
    const double g_hi = mx + 3.0 * null.bandwidth();
    for (std::size_t g = 0; g < grid; ++g) {
        const double t = g_lo + (g_hi - g_lo) * static_cast<double>(g) / static_cast<double>(grid - 1);
        j["density_grid"].push_back({t, null.density(t), null.null_density(t), null.lfdr(t)});
    }
    return j.dump(1);
}

} // namespace cscope
