#pragma once

#include "conceptscope/reduce.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cscope {

/// Externally produced features and gradients.
///
/// features:  CSV (one row per sample, optional non-numeric header) or raw
///            little-endian float32 with a sidecar `<file>.json` {rows, cols}.
/// gradients: raw little-endian float32, sample-major m x K x n, with a
///            sidecar {rows, classes, cols}; or CSV with K*n values per row
///            (class-major), in which case K comes from the class names.
/// labels:    CSV, one integer per line, optional header.
/// thumbnails: optional CSV, one path per line relative to thumbnail_root.
struct IngestSpec {
    std::filesystem::path features;
    std::filesystem::path gradients;
    std::filesystem::path labels;
    std::vector<std::string> class_names; // empty: "0".."K-1" from the gradient sidecar
    std::filesystem::path thumbnails;
    BundleOptions options;
};

struct MatrixHeader {
    Eigen::Index rows = 0, classes = 0, cols = 0;
};

std::filesystem::path sidecar_path(const std::filesystem::path& binary);

Matrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& X);

Matrix read_f32_matrix(const std::filesystem::path& path);
void write_f32_matrix(const std::filesystem::path& path, const Matrix& X);
void write_f32_gradients(const std::filesystem::path& path, const GradientTensor& g);
MatrixHeader read_gradient_header(const std::filesystem::path& binary);

/// CSV or binary, chosen by extension (.csv) or the presence of a sidecar.
Matrix read_features(const std::filesystem::path& path);
std::vector<int> read_labels(const std::filesystem::path& path);

/// Validates all shapes before any projection work; binary gradients are
/// streamed one sample at a time, so the full m x K x n tensor is never
/// held in memory.
ProjectionBundle ingest(const IngestSpec& spec);

} // namespace cscope
