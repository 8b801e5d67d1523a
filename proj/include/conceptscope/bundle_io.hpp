#pragma once

#include "conceptscope/reduce.hpp"

#include <filesystem>
#include <string>

namespace cscope {

/// Explorer bundle JSON:
///   {classes, points: [{id, z, label[, thumbnail]}], gradients: [m][K][k],
///    variance_ratios, gradient_kind, pca: {mean, components: [k][n], explained_variance, total_variance}}
/// Numbers are written as the shortest decimal that round-trips.
std::string bundle_to_json(const ProjectionBundle& bundle);
ProjectionBundle bundle_from_json(const std::string& text);

ProjectionBundle load_bundle(const std::filesystem::path& path);

inline constexpr const char* kBundleFile = "bundle.json";
inline constexpr const char* kIndexFile = "index.json";

/// Writes bundle.json and index.json (file names, sizes, shape summary and
/// the bundle digest) into out_dir, creating it if needed.
void static_export(const ProjectionBundle& bundle, const std::filesystem::path& out_dir);

} // namespace cscope
