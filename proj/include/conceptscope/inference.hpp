#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cscope {

/// Fraction of null statistics at or above `observed` (no +1 correction,
/// so an observation beyond every null yields exactly zero).
double randomization_pvalue(double observed, std::span<const double> null_stats);

struct BhResult {
    std::vector<bool> rejected; // original order
    std::size_t cutoff_rank = 0; // j*, zero when nothing is rejected
    double threshold = 0.0;      // j* alpha / J
};

/// Benjamini-Hochberg step-up at level alpha.
BhResult bh_procedure(std::span<const double> p_values, double alpha);

inline constexpr std::size_t kMinNullFitSize = 50;
inline constexpr double kDensityFloor = 1e-12;

/// Gaussian null fitted by central matching plus a kernel estimate of the
/// marginal density of the statistics.
class EmpiricalNull {
public:
    EmpiricalNull(double delta, double sigma0, double pi0, std::vector<double> sample, double bandwidth);

    double delta() const noexcept { return delta_; }
    double sigma0() const noexcept { return sigma0_; }
    double pi0() const noexcept { return pi0_; }
    double bandwidth() const noexcept { return bandwidth_; }
    std::span<const double> sample() const noexcept { return sample_; }

    double null_density(double t) const noexcept;
    /// Marginal kernel density, floored at kDensityFloor.
    double density(double t) const noexcept;
    double lfdr(double t) const noexcept;

private:
    double delta_;
    double sigma0_;
    double pi0_;
    std::vector<double> sample_;
    double bandwidth_;
};

/// Central matching: the statistics between the quartiles are treated as a
/// doubly truncated normal sample and its mean and SD are matched to obtain
/// (delta, sigma0). pi0 = min(1, #in-IQR / (n * null mass of the IQR)).
/// Requires at least kMinNullFitSize values; throws DegenerateError when the IQR is zero.
EmpiricalNull fit_empirical_null(std::span<const double> statistics);

std::vector<double> lfdr(std::span<const double> statistics, const EmpiricalNull& null);

enum class Method { BhRandomization, Lfdr };

std::string to_string(Method m);

struct ScreeningResult {
    std::size_t direction = 0;
    int cls = 0;
    double statistic = 0.0;
    std::optional<double> p_value;
    std::optional<double> lfdr;
    bool discovered = false;
    Method method = Method::Lfdr;
};

struct Discovery {
    std::vector<ScreeningResult> results; // one per statistic, input order
    EmpiricalNull null;
};

/// Right-tail lFDR discovery: a statistic is discovered when its lFDR is at
/// most alpha and it lies above the fitted null mean.
Discovery discover(std::span<const double> statistics, double alpha, int cls = 0);

/// Null-fit export for histogram rendering:
/// {delta, sigma0, pi0, histogram: [[bin_left, count]...], density_grid: [[t, f, f0, lfdr]...]}
std::string null_fit_json(const EmpiricalNull& null, std::size_t bins = 30, std::size_t grid = 200);

double normal_pdf(double x) noexcept;
double normal_cdf(double x) noexcept;
/// Linear-interpolation quantile (type 7) of an already sorted sample.
double quantile_sorted(std::span<const double> sorted, double q);

} // namespace cscope
