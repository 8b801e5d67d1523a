#include "conceptscope/screening.hpp"

#include "conceptscope/error.hpp"
#include "conceptscope/parallel.hpp"
#include "conceptscope/rng.hpp"
#include "conceptscope/textio.hpp"

#include <sstream>

namespace cscope {

Statistic parse_statistic(std::string_view s) {
    if (s == "sd") return Statistic::Sd;
    if (s == "tcav") return Statistic::Tcav;
    throw ConfigError("unknown statistic '" + std::string(s) + "' (expected sd or tcav)");
}

std::string_view to_string(Statistic s) noexcept { return s == Statistic::Sd ? "sd" : "tcav"; }

namespace {

std::vector<int> screened_classes(const ScreenOptions& options, int num_classes) {
    if (options.classes.empty()) {
        std::vector<int> all(static_cast<std::size_t>(num_classes));
        for (int k = 0; k < num_classes; ++k) all[static_cast<std::size_t>(k)] = k;
        return all;
    }
    for (int k : options.classes)
        if (k < 0 || k >= num_classes) {
            throw ConfigError("class " + std::to_string(k) + " out of range [0, " + std::to_string(num_classes) + ")");
        }
    return options.classes;
}

// Per-class TCAV scores of one raw direction.
void tcav_per_class(const Matrix& scores, std::span<const int> labels, std::span<const int> classes,
                    std::span<const std::size_t> class_sizes, std::span<double> out) {
    for (std::size_t c = 0; c < classes.size(); ++c) {
        std::size_t positive = 0;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == classes[c] && scores(static_cast<Eigen::Index>(i), classes[c]) > 0.0) ++positive;
        out[c] = static_cast<double>(positive) / static_cast<double>(class_sizes[c]);
    }
}

} // namespace

ScreenReport screen(const MlpModel& m, const Dataset& data, const ScreenOptions& options) {
    m.validate();
    data.validate();
    if (data.dim() != m.input_dim()) {
        throw ShapeError("data has " + std::to_string(data.dim()) + " columns, model expects " +
                         std::to_string(m.input_dim()));
    }
    if (m.num_classes() < data.num_classes) throw ShapeError("data has more classes than the model outputs");
    if (options.directions < 1) throw ConfigError("need at least one direction");
    if (options.statistic == Statistic::Tcav && options.null_directions < 1) {
        throw ConfigError("randomization test needs at least one null direction");
    }

    ScreenReport report;
    report.options = options;
    report.classes = screened_classes(options, static_cast<int>(m.num_classes()));
    const auto counts = data.class_counts();
    std::vector<std::size_t> class_sizes;
    for (int k : report.classes) {
        const std::size_t size = static_cast<std::size_t>(k) < counts.size() ? counts[static_cast<std::size_t>(k)] : 0;
        if (size == 0) throw DegenerateError("class " + std::to_string(k) + " has no samples");
        class_sizes.push_back(size);
    }

    const FeatureBatch batch = make_feature_batch(m, feature_matrix(m, data.samples));
    const std::size_t D = options.directions;
    const std::size_t C = report.classes.size();
    report.directions = sample_sphere(m.hidden(), D, derive_seed(options.seed, streams::directions));

    report.input_space = Matrix::Zero(static_cast<Eigen::Index>(D), m.input_dim());
    for (std::size_t j = 0; j < D; ++j) {
        try {
            report.input_space.row(static_cast<Eigen::Index>(j)) =
                direction_to_input_space(m, report.directions[j]).transpose();
        } catch (const DegenerateError&) {
            // leave the zero row
        }
    }

    std::vector<double> stats(D * C);
    const std::span<const int> labels = data.labels;
    parallel_for(D, [&](std::size_t j) {
        const Matrix s = activation_scores_raw(m, batch, report.directions[j].vector(), options.kind);
        if (options.statistic == Statistic::Tcav) {
            tcav_per_class(s, labels, report.classes, class_sizes, std::span(stats).subspan(j * C, C));
            return;
        }
        const ScoreMatrix sm{s, report.directions[j].vector(), options.kind};
        for (std::size_t c = 0; c < C; ++c) stats[j * C + c] = sd_statistic(sm, labels, report.classes[c], options.scope);
    });

    report.results.resize(D * C);
    report.nulls.assign(C, std::nullopt);

    if (options.statistic == Statistic::Sd) {
        report.method = Method::Lfdr;
        for (std::size_t c = 0; c < C; ++c) {
            std::vector<double> column(D);
            for (std::size_t j = 0; j < D; ++j) column[j] = stats[j * C + c];
            Discovery found = discover(column, options.alpha, report.classes[c]);
            for (std::size_t j = 0; j < D; ++j) report.results[j * C + c] = found.results[j];
            report.nulls[c] = std::move(found.null);
        }
        return report;
    }

    // Randomization test on the TCAV score, then BH per class.
    report.method = Method::BhRandomization;
    report.inferential = options.fresh_nulls;
    const std::uint64_t null_seed = derive_seed(options.seed, streams::null_directions);
    const std::size_t Jp = options.null_directions;
    auto null_scores = [&](std::uint64_t batch_seed) {
        std::vector<double> out(Jp * C);
        for (std::size_t r = 0; r < Jp; ++r) {
            const auto v = sample_sphere_at(m.hidden(), r, batch_seed);
            const Matrix s = activation_scores_raw(m, batch, v.vector(), options.kind);
            tcav_per_class(s, labels, report.classes, class_sizes, std::span(out).subspan(r * C, C));
        }
        return out;
    };
    std::vector<double> pvals(D * C);
    auto fill_pvalues = [&](std::size_t j, const std::vector<double>& nulls) {
        std::vector<double> column(Jp);
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t r = 0; r < Jp; ++r) column[r] = nulls[r * C + c];
            pvals[j * C + c] = randomization_pvalue(stats[j * C + c], column);
        }
    };
    if (options.fresh_nulls) {
        parallel_for(D, [&](std::size_t j) { fill_pvalues(j, null_scores(derive_seed(null_seed, j))); });
    } else {
        const auto shared = null_scores(null_seed);
        for (std::size_t j = 0; j < D; ++j) fill_pvalues(j, shared);
    }
    for (std::size_t c = 0; c < C; ++c) {
        std::vector<double> column(D);
        for (std::size_t j = 0; j < D; ++j) column[j] = pvals[j * C + c];
        const BhResult bh = bh_procedure(column, options.alpha);
        for (std::size_t j = 0; j < D; ++j) {
            ScreeningResult& r = report.results[j * C + c];
            r.direction = j;
            r.cls = report.classes[c];
            r.statistic = stats[j * C + c];
            r.p_value = column[j];
            r.discovered = bh.rejected[j];
            r.method = Method::BhRandomization;
        }
    }
    return report;
}

void write_screening_csv(const ScreenReport& report, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "direction_id,class,statistic,p_value,lfdr,discovery_flag,input_space_dx,input_space_dy\n";
    const auto d = report.input_space.cols();
    for (const auto& r : report.results) {
        const auto row = static_cast<Eigen::Index>(r.direction);
        out << r.direction << ',' << r.cls << ',' << format_real17(r.statistic) << ','
            << (r.p_value ? format_real17(*r.p_value) : "") << ',' << (r.lfdr ? format_real17(*r.lfdr) : "") << ','
            << (r.discovered ? 1 : 0) << ',' << (d > 0 ? format_real17(report.input_space(row, 0)) : "") << ','
            << (d > 1 ? format_real17(report.input_space(row, 1)) : "") << '\n';
    }
    write_file(path, out.str());
}

} // namespace cscope
