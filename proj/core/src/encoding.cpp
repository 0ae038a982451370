#include "part/encoding.hpp"

#include <cmath>
#include <stdexcept>

namespace part {

PosMode parse_pos_mode(const std::string& name) {
  if (name == "none") return PosMode::none;
  if (name == "absolute") return PosMode::absolute;
  if (name == "relative") return PosMode::relative;
  throw std::invalid_argument("unknown positional mode '" + name + "'");
}

std::string to_string(PosMode mode) {
  switch (mode) {
    case PosMode::none: return "none";
    case PosMode::absolute: return "absolute";
    case PosMode::relative: return "relative";
  }
  return "none";
}

double sinusoid_value(double delta, std::size_t k, std::size_t d) {
  const double i2 = static_cast<double>(2 * (k / 2));
  const double f = delta / std::pow(10000.0, i2 / static_cast<double>(d));
  return (k % 2 == 0) ? std::sin(f) : std::cos(f);
}

Tensor sinusoid_table(std::size_t L, std::size_t d) {
  if (L == 0) throw std::invalid_argument("sinusoid_table: L must be positive");
  if (d == 0 || d % 2 != 0) throw std::invalid_argument("sinusoid_table: d must be even and positive");
  Tensor out({2 * L - 1, d});
  for (std::size_t r = 0; r < 2 * L - 1; ++r) {
    const double delta = static_cast<double>(r) - static_cast<double>(L - 1);
    for (std::size_t k = 0; k < d; ++k) out.at(r, k) = sinusoid_value(delta, k, d);
  }
  return out;
}

Tensor absolute_encoding(std::size_t width, std::size_t height, std::size_t C) {
  if (C == 0 || C % 2 != 0) throw std::invalid_argument("absolute encoding needs an even channel count");
  const std::size_t half = C / 2;
  Tensor E({width * height, C});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t i = y * width + x;
      for (std::size_t k = 0; k < half; ++k) {
        E.at(i, k) = sinusoid_value(static_cast<double>(x), k, half);
        E.at(i, half + k) = sinusoid_value(static_cast<double>(y), k, half);
      }
    }
  }
  return E;
}

OffsetTable::OffsetTable(std::size_t width, std::size_t height, Tensor rows)
    : width_(width), height_(height), rows_(std::move(rows)) {
  const std::size_t n = width * height;
  pair_index_.resize(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const long dx = static_cast<long>(i % width) - static_cast<long>(j % width);
      const long dy = static_cast<long>(i / width) - static_cast<long>(j / width);
      pair_index_[i * n + j] = index(dx, dy);
    }
  }
}

OffsetTable OffsetTable::sinusoid(std::size_t width, std::size_t height, std::size_t d) {
  if (width == 0 || height == 0) throw std::invalid_argument("offset table needs a nonempty grid");
  if (d == 0 || d % 2 != 0) throw std::invalid_argument("relative encoding dimension must be even");
  const std::size_t half = d / 2;
  const std::size_t span_x = 2 * width - 1, span_y = 2 * height - 1;
  Tensor rows({span_x * span_y, d});
  for (std::size_t ry = 0; ry < span_y; ++ry) {
    const double dy = static_cast<double>(ry) - static_cast<double>(height - 1);
    for (std::size_t rx = 0; rx < span_x; ++rx) {
      const double dx = static_cast<double>(rx) - static_cast<double>(width - 1);
      const std::size_t r = ry * span_x + rx;
      for (std::size_t k = 0; k < half; ++k) {
        rows.at(r, k) = sinusoid_value(dx, k, half);
        rows.at(r, half + k) = sinusoid_value(dy, k, half);
      }
    }
  }
  return OffsetTable(width, height, std::move(rows));
}

OffsetTable OffsetTable::quadratic(std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw std::invalid_argument("offset table needs a nonempty grid");
  const std::size_t span_x = 2 * width - 1, span_y = 2 * height - 1;
  Tensor rows({span_x * span_y, 4});
  for (std::size_t ry = 0; ry < span_y; ++ry) {
    const double dy = static_cast<double>(ry) - static_cast<double>(height - 1);
    for (std::size_t rx = 0; rx < span_x; ++rx) {
      const double dx = static_cast<double>(rx) - static_cast<double>(width - 1);
      const std::size_t r = ry * span_x + rx;
      rows.at(r, 0) = dx * dx + dy * dy;
      rows.at(r, 1) = dx;
      rows.at(r, 2) = dy;
      rows.at(r, 3) = 1.0;
    }
  }
  return OffsetTable(width, height, std::move(rows));
}

std::size_t OffsetTable::index(long dx, long dy) const {
  const long w = static_cast<long>(width_), h = static_cast<long>(height_);
  if (dx <= -w || dx >= w || dy <= -h || dy >= h) {
    throw std::out_of_range("displacement (" + std::to_string(dx) + ", " + std::to_string(dy) +
                            ") outside the offset table");
  }
  return static_cast<std::size_t>((dy + h - 1) * (2 * w - 1) + (dx + w - 1));
}

std::vector<double> OffsetTable::row(long dx, long dy) const {
  const std::size_t r = index(dx, dy), d = dim();
  const auto v = rows_.values();
  return {v.begin() + static_cast<long>(r * d), v.begin() + static_cast<long>((r + 1) * d)};
}

Var relative_logit_terms(const Var& X, const Var& w_qry, const Var& w_key, const RelativeVars& rel,
                         const OffsetTable& table) {
  const std::size_t n = X.rows();
  if (n != table.width() * table.height()) {
    throw DimensionError("relative logits: " + std::to_string(n) + " pixels but the offset table covers " +
                         std::to_string(table.width()) + "x" + std::to_string(table.height()));
  }
  if (rel.w_rel.rows() != table.dim()) {
    throw DimensionError("relative key projection has " + std::to_string(rel.w_rel.rows()) +
                         " rows, table dimension is " + std::to_string(table.dim()));
  }
  Tape& tape = *X.tape();
  const Var Q = matmul(X, w_qry);
  const Var K = matmul(X, w_key);

  // Project every table row once, score all queries against all offsets, then
  // pick out the (i, j) entries: n x T work instead of n x n x d_R.
  const Var projected = matmul(tape.constant(table.rows()), rel.w_rel);
  const Var scores = matmul_nt(add_row_bias(Q, rel.v), projected);
  const Var positional = gather_rows(scores, table.pair_index(), n);

  const Var key_bias = matmul_nt(rel.u, K);
  return add_row_bias(positional, key_bias);
}

}  // namespace part
