#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace asof::kernels {

/// Row-major `rows x dim` matrix with precomputed row L2 norms.
struct MatrixView {
  std::span<const double> data;
  std::size_t dim = 0;
  std::span<const double> norms;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

/// out[i] = cos(matrix[rows[i]], query). OpenMP-parallel over `rows`.
void cosine_scores(MatrixView m, std::span<const double> query, double query_norm,
                   std::span<const std::uint32_t> rows, std::span<double> out);

/// Single-threaded reference with identical per-element arithmetic, so its
/// output is bit-identical to cosine_scores.
void cosine_scores_serial(MatrixView m, std::span<const double> query, double query_norm,
                          std::span<const std::uint32_t> rows, std::span<double> out);

/// Row norms for a row-major matrix. OpenMP-parallel.
void row_norms(std::span<const double> data, std::size_t dim, std::span<double> out);

}  // namespace asof::kernels
