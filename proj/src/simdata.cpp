#include "conceptscope/simdata.hpp"

#include "conceptscope/error.hpp"
#include "conceptscope/rng.hpp"
#include "conceptscope/textio.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cscope {

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
    for (int y : labels) {
        if (y >= 0 && y < num_classes) ++counts[static_cast<std::size_t>(y)];
    }
    return counts;
}

void Dataset::validate() const {
    if (static_cast<std::size_t>(samples.rows()) != labels.size()) {
        throw ShapeError("dataset has " + std::to_string(samples.rows()) + " samples but " +
                         std::to_string(labels.size()) + " labels");
    }
    if (num_classes < 1) throw ConfigError("dataset must declare at least one class");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) {
            throw ConfigError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                              " is outside [0, " + std::to_string(num_classes) + ")");
        }
    }
    if (!samples.allFinite()) throw DegenerateError("dataset contains non-finite values");
}

int simulation_class(double x1, double x2) noexcept {
    if (std::hypot(x1, x2) <= kSimulationRadius) return 1;
    return x2 < 0.0 ? 0 : 2;
}

Dataset generate_simulation(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ConfigError("simulation needs at least one point");
    Rng rng = Rng::stream(seed, streams::simulation);
    Dataset data;
    data.samples.resize(static_cast<Eigen::Index>(n), 2);
    data.labels.resize(n);
    data.num_classes = kSimulationClasses;
    for (std::size_t i = 0; i < n; ++i) {
        const double x1 = rng.uniform(-1.0, 1.0);
        const double x2 = rng.uniform(-1.0, 1.0);
        const auto row = static_cast<Eigen::Index>(i);
        data.samples(row, 0) = x1;
        data.samples(row, 1) = x2;
        data.labels[i] = simulation_class(x1, x2);
    }
    return data;
}

double distance_to_boundary(double x1, double x2) noexcept {
    const double to_circle = std::abs(std::hypot(x1, x2) - kSimulationRadius);
    // Nearest point of the segments {x2 = 0, 0.25 <= |x1| <= 1}.
    const double ax = std::clamp(std::abs(x1), kSimulationRadius, 1.0);
    const double to_axis = std::hypot(std::abs(x1) - ax, x2);
    return std::min(to_circle, to_axis);
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
    data.validate();
    std::ostringstream out;
    for (Eigen::Index j = 0; j < data.dim(); ++j) out << 'x' << (j + 1) << ',';
    out << "label\n";
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        for (Eigen::Index j = 0; j < data.dim(); ++j) out << format_real17(data.samples(i, j)) << ',';
        out << data.labels[static_cast<std::size_t>(i)] << '\n';
    }
    write_file(path, out.str());
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
    const auto header = split(trim(line), ',');
    if (header.size() < 2 || trim(header.back()) != "label") {
        throw IoError(path.string() + ":1: header must end with a 'label' column");
    }
    const std::size_t d = header.size() - 1;
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(trim(line), ',');
        if (fields.size() != d + 1) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(d + 1) +
                          " fields, found " + std::to_string(fields.size()));
        }
        try {
            for (std::size_t j = 0; j < d; ++j) values.push_back(parse_real(fields[j], header[j]));
            labels.push_back(static_cast<int>(parse_int(fields[d], "label")));
        } catch (const ConfigError& e) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    Dataset data;
    data.samples = Eigen::Map<const RowMatrix>(values.data(), static_cast<Eigen::Index>(labels.size()),
                                               static_cast<Eigen::Index>(d));
    data.labels = std::move(labels);
    data.num_classes = data.labels.empty() ? 0 : *std::max_element(data.labels.begin(), data.labels.end()) + 1;
    data.validate();
    return data;
}

} // namespace cscope
