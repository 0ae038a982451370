#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "part/autodiff.hpp"
#include "part/tensor.hpp"

namespace part {

enum class PosMode { none, absolute, relative };

PosMode parse_pos_mode(const std::string& name);
std::string to_string(PosMode mode);

/// entry(delta, 2i) = sin(delta / 10000^(2i/d)), entry(delta, 2i+1) = cos(...).
double sinusoid_value(double delta, std::size_t k, std::size_t d);

/// (2L-1) x d table; row delta + L - 1 holds the encoding of offset delta.
/// Throws std::invalid_argument for odd d or L == 0.
Tensor sinusoid_table(std::size_t L, std::size_t d);

/// Fixed 2-D encoding, (W*H) x C. Row y*W + x holds the sinusoid of x in the
/// first C/2 dims and the sinusoid of y in the last C/2. C must be even.
Tensor absolute_encoding(std::size_t width, std::size_t height, std::size_t C);

/// Rows indexed by 2-D displacement (dx, dy) between a query and a key pixel
/// on a width x height grid.
class OffsetTable {
 public:
  /// Column displacement in the first d/2 dims, row displacement in the last d/2.
  static OffsetTable sinusoid(std::size_t width, std::size_t height, std::size_t d);
  /// Rows (dx^2 + dy^2, dx, dy, 1); lets a linear read-out express any
  /// quadratic function of the displacement.
  static OffsetTable quadratic(std::size_t width, std::size_t height);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t dim() const { return rows_.cols(); }
  const Tensor& rows() const noexcept { return rows_; }

  /// Row of displacement (dx, dy); throws std::out_of_range outside the grid.
  std::size_t index(long dx, long dy) const;
  std::vector<double> row(long dx, long dy) const;

  /// n x n lookup (n = W*H): entry (i, j) is the row of the displacement
  /// pixel(i) - pixel(j).
  const std::vector<std::size_t>& pair_index() const noexcept { return pair_index_; }

 private:
  OffsetTable(std::size_t width, std::size_t height, Tensor rows);

  std::size_t width_ = 0;
  std::size_t height_ = 0;
  Tensor rows_;
  std::vector<std::size_t> pair_index_;
};

/// Relative-position parameters of one head, bound to a tape.
/// w_rel: d_R x C_h, u and v: 1 x C_h.
struct RelativeVars {
  Var w_rel;
  Var u;
  Var v;
};

/// Position-dependent part of the relative logits for one head:
///   q_i . (R_ij w_rel) + u . k_j + v . (R_ij w_rel)
/// with q = X w_qry, k = X w_key and R_ij the table row of pixel(i) - pixel(j).
Var relative_logit_terms(const Var& X, const Var& w_qry, const Var& w_key, const RelativeVars& rel,
                         const OffsetTable& table);

}  // namespace part
