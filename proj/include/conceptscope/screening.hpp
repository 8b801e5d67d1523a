#pragma once

#include "conceptscope/concepts.hpp"
#include "conceptscope/inference.hpp"
#include "conceptscope/model.hpp"
#include "conceptscope/simdata.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

namespace cscope {

enum class Statistic { Sd, Tcav };

Statistic parse_statistic(std::string_view s);
std::string_view to_string(Statistic s) noexcept;

struct ScreenOptions {
    std::size_t directions = 500;
    std::uint64_t seed = 0;
    Statistic statistic = Statistic::Sd;
    SdScope scope = SdScope::AllSamples;
    GradientKind kind = GradientKind::Probability;
    double alpha = 0.1;
    std::vector<int> classes;         // empty screens every class
    std::size_t null_directions = 100; // J' for the randomization test
    bool fresh_nulls = true;
};

/// Outcome of screening random concept directions against a trained model.
struct ScreenReport {
    std::vector<ConceptDirection> directions;
    Matrix input_space;                 // directions x d, unit rows (zero when degenerate)
    std::vector<int> classes;
    std::vector<ScreeningResult> results; // direction-major, then class in `classes` order
    std::vector<std::optional<EmpiricalNull>> nulls; // per screened class, lFDR path only
    Method method = Method::Lfdr;
    bool inferential = true; // false for the shared-null randomization shortcut
    ScreenOptions options;

    const ScreeningResult& at(std::size_t direction, std::size_t class_slot) const {
        return results[direction * classes.size() + class_slot];
    }
};

/// Draws the candidate directions and tests each (direction, class) pair.
///
/// Statistic::Sd uses the SD of the activation scores and local FDR per
/// class. Statistic::Tcav uses the TCAV score with randomization p-values
/// from `null_directions` random directions (a fresh batch per candidate
/// unless `fresh_nulls` is off) and Benjamini-Hochberg per class.
ScreenReport screen(const MlpModel& m, const Dataset& data, const ScreenOptions& options);

/// direction_id,class,statistic,p_value,lfdr,discovery_flag,input_space_dx,input_space_dy
/// (absent optional values are left empty).
void write_screening_csv(const ScreenReport& report, const std::filesystem::path& path);

} // namespace cscope
