#include "asof/kernels.hpp"

#include <cmath>

namespace asof::kernels {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

namespace {

inline double score_row(const MatrixView& m, std::span<const double> query, double query_norm, std::uint32_t row) {
  auto vec = m.data.subspan(static_cast<std::size_t>(row) * m.dim, m.dim);
  return dot(vec, query) / (m.norms[row] * query_norm);
}

}  // namespace

void cosine_scores(MatrixView m, std::span<const double> query, double query_norm,
                   std::span<const std::uint32_t> rows, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(rows.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = score_row(m, query, query_norm, rows[static_cast<std::size_t>(i)]);
  }
}

void cosine_scores_serial(MatrixView m, std::span<const double> query, double query_norm,
                          std::span<const std::uint32_t> rows, std::span<double> out) {
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = score_row(m, query, query_norm, rows[i]);
}

void row_norms(std::span<const double> data, std::size_t dim, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = l2_norm(data.subspan(static_cast<std::size_t>(i) * dim, dim));
  }
}

}  // namespace asof::kernels
