#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "part/autodiff.hpp"
#include "part/grad_check.hpp"
#include "part/transformer.hpp"
#include "test_support.hpp"

using namespace part;
using part::test::max_abs_diff;
using part::test::naive_matmul;
using part::test::naive_softmax;
using part::test::random_tensor;

namespace {

// softmax(A / sqrt(C)) X Wv, row by row.
Tensor head_oracle(const Tensor& X, const Tensor& A, const Tensor& Wv) {
  const std::size_t n = X.rows(), C = X.cols();
  Tensor P({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(n);
    for (std::size_t j = 0; j < n; ++j) row[j] = A.at(i, j);
    const auto p = naive_softmax(row, std::sqrt(static_cast<double>(C)));
    for (std::size_t j = 0; j < n; ++j) P.at(i, j) = p[j];
  }
  return naive_matmul(naive_matmul(P, X), Wv);
}

Tensor content_logits(const Tensor& X, const Tensor& wq, const Tensor& wk) {
  return naive_matmul(naive_matmul(X, wq), transpose(naive_matmul(X, wk)));
}

LayerShape shape_of(std::size_t C, std::size_t m, PosMode mode, std::size_t W, std::size_t H) {
  LayerShape s;
  s.channels = C;
  s.heads = m;
  s.mode = mode;
  s.grid_w = W;
  s.grid_h = H;
  return s;
}

HeadVars constant_head(Tape& tape, const HeadParams& h) {
  HeadVars v{tape.constant(h.w_qry), tape.constant(h.w_key), tape.constant(h.w_val), {}};
  if (!h.w_rel.empty()) v.rel = {tape.constant(h.w_rel), tape.constant(h.u), tape.constant(h.v)};
  return v;
}

Tensor run_layer(LayerParams& layer, const Tensor& X, PosMode mode, const OffsetTable* table,
                 std::span<const double> mask = {}, Activation act = Activation::relu) {
  Tape tape;
  const LayerVars vars = bind(tape, layer, mode);
  AttentionOptions opts;
  opts.mode = mode;
  opts.table = table;
  opts.activation = act;
  return transformer_layer(tape.constant(X), vars, opts, mask).value();
}

Tensor relu_of(Tensor t) {
  for (auto& v : t.values()) v = std::max(v, 0.0);
  return t;
}

Tensor add_bias(Tensor t, const Tensor& b) {
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) t.at(i, j) += b[j];
  return t;
}

Tensor add_t(Tensor a, const Tensor& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

// Full layer from its written definition, unmasked, no positional terms.
Tensor layer_oracle(const LayerParams& L, const Tensor& X) {
  const std::size_t n = X.rows();
  std::size_t total = 0;
  for (const auto& h : L.heads) total += h.w_val.cols();
  Tensor joined({n, total});
  std::size_t off = 0;
  for (const auto& h : L.heads) {
    const Tensor Y = head_oracle(X, content_logits(X, h.w_qry, h.w_key), h.w_val);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < Y.cols(); ++c) joined.at(i, off + c) = Y.at(i, c);
    off += Y.cols();
  }
  const Tensor O = relu_of(add_bias(naive_matmul(joined, L.w_o), L.b_o));
  return add_bias(naive_matmul(O, L.w_f), L.b_f);
}

}  // namespace

TEST_SUITE("attention head") {
  TEST_CASE("zero logits average the values") {
    std::mt19937_64 rng(30);
    const Tensor X = random_tensor({6, 4}, rng), Wv = random_tensor({4, 3}, rng);
    Tape tape;
    const Tensor Y = attention_head(tape.constant(X), tape.constant(Tensor({6, 6})), tape.constant(Wv)).value();
    Tensor mean({1, 4});
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t c = 0; c < 4; ++c) mean[c] += X.at(i, c) / 6.0;
    const Tensor want = naive_matmul(mean, Wv);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(Y.at(i, c) - want[c]) < 1e-14);
  }

  TEST_CASE("single pixel returns X Wv") {
    std::mt19937_64 rng(31);
    const Tensor X = random_tensor({1, 5}, rng), Wv = random_tensor({5, 2}, rng), A = random_tensor({1, 1}, rng);
    Tape tape;
    const Tensor Y = attention_head(tape.constant(X), tape.constant(A), tape.constant(Wv)).value();
    CHECK(max_abs_diff(Y, naive_matmul(X, Wv)) < 1e-15);
  }

  TEST_CASE("matches the row-wise oracle on random input") {
    std::mt19937_64 rng(32);
    for (int t = 0; t < 20; ++t) {
      const Tensor X = random_tensor({9, 6}, rng), A = random_tensor({9, 9}, rng, -5.0, 5.0),
                   Wv = random_tensor({6, 4}, rng);
      Tape tape;
      const Tensor Y = attention_head(tape.constant(X), tape.constant(A), tape.constant(Wv)).value();
      CHECK(max_abs_diff(Y, head_oracle(X, A, Wv)) < 1e-13);
    }
  }

  TEST_CASE("attention rows are convex weights") {
    // With the identity as W_val every output row lies in the per-column range of X.
    std::mt19937_64 rng(33);
    const Tensor X = random_tensor({8, 3}, rng), A = random_tensor({8, 8}, rng, -20.0, 20.0);
    Tape tape;
    const Tensor Y = attention_head(tape.constant(X), tape.constant(A), tape.constant(Tensor::identity(3))).value();
    for (std::size_t c = 0; c < 3; ++c) {
      double lo = 1e9, hi = -1e9;
      for (std::size_t i = 0; i < 8; ++i) lo = std::min(lo, X.at(i, c)), hi = std::max(hi, X.at(i, c));
      for (std::size_t i = 0; i < 8; ++i) {
        CHECK(Y.at(i, c) >= lo - 1e-12);
        CHECK(Y.at(i, c) <= hi + 1e-12);
      }
    }
  }

  TEST_CASE("absolute mode with a zero table equals mode none") {
    std::mt19937_64 rng(34);
    const Tensor X = random_tensor({4, 4}, rng);
    HeadParams h{random_tensor({4, 2}, rng), random_tensor({4, 2}, rng), random_tensor({4, 2}, rng), {}, {}, {}};
    Tape tape;
    const HeadVars hv = constant_head(tape, h);
    AttentionOptions none, abs;
    abs.mode = PosMode::absolute;
    const Tensor a = attention_logits(tape.constant(X), Var{}, hv, none).value();
    const Tensor b = attention_logits(tape.constant(X), tape.constant(Tensor({4, 4})), hv, abs).value();
    CHECK(a == b);
    CHECK(max_abs_diff(a, content_logits(X, h.w_qry, h.w_key)) < 1e-14);
  }

  TEST_CASE("absolute mode adds the encoding on both sides") {
    std::mt19937_64 rng(35);
    const Tensor X = random_tensor({4, 4}, rng), E = random_tensor({4, 4}, rng);
    HeadParams h{random_tensor({4, 3}, rng), random_tensor({4, 3}, rng), random_tensor({4, 3}, rng), {}, {}, {}};
    Tape tape;
    AttentionOptions abs;
    abs.mode = PosMode::absolute;
    const Tensor A = attention_logits(tape.constant(X), tape.constant(E), constant_head(tape, h), abs).value();
    CHECK(max_abs_diff(A, content_logits(add_t(X, E), h.w_qry, h.w_key)) < 1e-13);
  }

  TEST_CASE("mode and encoding mismatches are rejected") {
    std::mt19937_64 rng(36);
    HeadParams h{random_tensor({4, 2}, rng), random_tensor({4, 2}, rng), random_tensor({4, 2}, rng), {}, {}, {}};
    Tape tape;
    const HeadVars hv = constant_head(tape, h);
    const Var X = tape.constant(random_tensor({4, 4}, rng));
    AttentionOptions opts;
    CHECK_THROWS_AS(attention_logits(X, X, hv, opts), std::invalid_argument);
    opts.mode = PosMode::absolute;
    CHECK_THROWS_AS(attention_logits(X, Var{}, hv, opts), std::invalid_argument);
    opts.mode = PosMode::relative;
    CHECK_THROWS_AS(attention_logits(X, Var{}, hv, opts), std::invalid_argument);
  }
}

TEST_SUITE("multi head") {
  TEST_CASE("single head with identity projection and zero bias passes through") {
    std::mt19937_64 rng(37);
    const Tensor Y = random_tensor({5, 4}, rng);
    Tape tape;
    const Var h = tape.constant(Y);
    const Tensor out = multi_head(std::span<const Var>(&h, 1), tape.constant(Tensor::identity(4)),
                                  tape.constant(Tensor({1, 4})))
                           .value();
    CHECK(out == Y);
  }

  TEST_CASE("zero projection leaves the bias on every row") {
    std::mt19937_64 rng(38);
    const Tensor b = random_tensor({1, 3}, rng);
    Tape tape;
    std::vector<Var> heads{tape.constant(random_tensor({4, 2}, rng)), tape.constant(random_tensor({4, 2}, rng))};
    const Tensor out = multi_head(heads, tape.constant(Tensor({4, 3})), tape.constant(b)).value();
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t c = 0; c < 3; ++c) CHECK(out.at(i, c) == b[c]);
  }

  TEST_CASE("four heads of width 8 equal the sum of per-head block products") {
    std::mt19937_64 rng(39);
    const std::size_t n = 6, m = 4, ch = 8, C = 32;
    std::vector<Tensor> Y;
    Tape tape;
    std::vector<Var> heads;
    for (std::size_t h = 0; h < m; ++h) {
      Y.push_back(random_tensor({n, ch}, rng));
      heads.push_back(tape.constant(Y.back()));
    }
    const Tensor Wo = random_tensor({m * ch, C}, rng), bo = random_tensor({1, C}, rng);
    const Tensor out = multi_head(heads, tape.constant(Wo), tape.constant(bo)).value();
    Tensor want({n, C});
    for (std::size_t h = 0; h < m; ++h) {
      Tensor block({ch, C});
      for (std::size_t r = 0; r < ch; ++r)
        for (std::size_t c = 0; c < C; ++c) block.at(r, c) = Wo.at(h * ch + r, c);
      want = add_t(want, naive_matmul(Y[h], block));
    }
    CHECK(max_abs_diff(out, add_bias(want, bo)) < 1e-13);
  }

  TEST_CASE("no heads is rejected") {
    Tape tape;
    CHECK_THROWS_AS(multi_head({}, tape.constant(Tensor({1, 1})), tape.constant(Tensor({1, 1}))), std::invalid_argument);
  }
}

TEST_SUITE("masked head") {
  HeadParams random_head(std::size_t C, std::size_t ch, std::mt19937_64& rng) {
    return {random_tensor({C, ch}, rng), random_tensor({C, ch}, rng), random_tensor({C, ch}, rng), {}, {}, {}};
  }

  TEST_CASE("all-ones mask is bit-identical to the unmasked head") {
    std::mt19937_64 rng(40);
    const Tensor X = random_tensor({9, 4}, rng);
    const HeadParams h = random_head(4, 4, rng);
    const std::vector<double> ones(9, 1.0);
    for (bool logits : {false, true}) {
      Tape tape;
      const HeadVars hv = constant_head(tape, h);
      AttentionOptions opts;
      opts.mask_logits = logits;
      const Var Xv = tape.constant(X);
      const Tensor a = masked_head(Xv, Var{}, ones, hv, opts).value();
      const Tensor b = attention_head(Xv, attention_logits(Xv, Var{}, hv, opts), hv.w_val).value();
      CHECK(a == b);
    }
  }

  TEST_CASE("zero mask output does not depend on X") {
    std::mt19937_64 rng(41);
    const HeadParams h = random_head(4, 3, rng);
    const std::vector<double> zero(6, 0.0);
    Tape tape;
    const HeadVars hv = constant_head(tape, h);
    const AttentionOptions opts;
    const Tensor a = masked_head(tape.constant(random_tensor({6, 4}, rng)), Var{}, zero, hv, opts).value();
    const Tensor b = masked_head(tape.constant(random_tensor({6, 4}, rng)), Var{}, zero, hv, opts).value();
    CHECK(a == b);
    for (double v : a.values()) CHECK(v == 0.0);
  }

  TEST_CASE("partial mask equals the head applied to the masked features") {
    std::mt19937_64 rng(42);
    const Tensor X = random_tensor({9, 4}, rng);
    const HeadParams h = random_head(4, 4, rng);
    std::vector<double> mask{1, 0, 1, 1, 0, 0, 1, 0, 1};
    Tensor Xm = X;
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t c = 0; c < 4; ++c) Xm.at(i, c) *= mask[i];
    Tape tape;
    const Tensor got = masked_head(tape.constant(X), Var{}, mask, constant_head(tape, h), {}).value();
    CHECK(max_abs_diff(got, head_oracle(Xm, content_logits(Xm, h.w_qry, h.w_key), h.w_val)) < 1e-13);
  }

  TEST_CASE("logit masking removes the influence of pixels outside the mask") {
    std::mt19937_64 rng(43);
    const HeadParams h = random_head(4, 4, rng);
    std::vector<double> mask{1, 1, 0, 0, 1, 0};
    Tensor X = random_tensor({6, 4}, rng);
    AttentionOptions opts;
    opts.mask_logits = true;
    Tape tape;
    const HeadVars hv = constant_head(tape, h);
    const Tensor a = masked_head(tape.constant(X), Var{}, mask, hv, opts).value();
    // Drop the masked pixels entirely and run the plain head on the remainder.
    Tensor Xk({3, 4});
    std::size_t r = 0;
    for (std::size_t i = 0; i < 6; ++i)
      if (mask[i] != 0.0) {
        for (std::size_t c = 0; c < 4; ++c) Xk.at(r, c) = X.at(i, c);
        ++r;
      }
    const Tensor k = head_oracle(Xk, content_logits(Xk, h.w_qry, h.w_key), h.w_val);
    r = 0;
    for (std::size_t i = 0; i < 6; ++i)
      if (mask[i] != 0.0) {
        for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(a.at(i, c) - k.at(r, c)) < 1e-12);
        ++r;
      }
  }

  TEST_CASE("mask length must match the pixel count") {
    std::mt19937_64 rng(44);
    const HeadParams h = random_head(4, 4, rng);
    Tape tape;
    const std::vector<double> mask(5, 1.0);
    CHECK_THROWS_AS(masked_head(tape.constant(random_tensor({6, 4}, rng)), Var{}, mask, constant_head(tape, h), {}),
                    DimensionError);
  }
}

TEST_SUITE("transformer layer") {
  TEST_CASE("matches the oracle composition with four heads") {
    std::mt19937_64 rng(45);
    LayerParams L = init_layer(shape_of(16, 4, PosMode::none, 3, 3), rng, 1.0);
    for (auto* b : {&L.b_o, &L.b_f}) *b = random_tensor({1, 16}, rng);
    const Tensor X = random_tensor({9, 16}, rng);
    CHECK(max_abs_diff(run_layer(L, X, PosMode::none, nullptr), layer_oracle(L, X)) < 1e-12);
  }

  TEST_CASE("zero value projections reduce the layer to its biases") {
    std::mt19937_64 rng(46);
    LayerParams L = init_layer(shape_of(8, 2, PosMode::none, 2, 2), rng, 1.0);
    for (auto& h : L.heads) h.w_val = Tensor(h.w_val.shape());
    L.b_o = random_tensor({1, 8}, rng);
    L.b_f = random_tensor({1, 8}, rng);
    const Tensor Y = run_layer(L, random_tensor({4, 8}, rng), PosMode::none, nullptr);
    const Tensor row = add_bias(naive_matmul(relu_of(L.b_o), L.w_f), L.b_f);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(Y.at(i, c) - row[c]) < 1e-14);
  }

  TEST_CASE("without positions the layer is permutation equivariant") {
    std::mt19937_64 rng(47);
    LayerParams L = init_layer(shape_of(8, 2, PosMode::none, 3, 3), rng, 1.0);
    const Tensor X = random_tensor({9, 8}, rng);
    std::vector<std::size_t> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor Xp(X.shape());
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t c = 0; c < 8; ++c) Xp.at(i, c) = X.at(perm[i], c);
    const Tensor Y = run_layer(L, X, PosMode::none, nullptr), Yp = run_layer(L, Xp, PosMode::none, nullptr);
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(Yp.at(i, c) - Y.at(perm[i], c)) < 1e-12);
  }

  TEST_CASE("relative positions break permutation equivariance") {
    std::mt19937_64 rng(48);
    LayerParams L = init_layer(shape_of(8, 1, PosMode::relative, 3, 3), rng, 3.0);
    const auto table = OffsetTable::sinusoid(3, 3, 8);
    const Tensor X = random_tensor({9, 8}, rng);
    // Swap two pixels: their contents trade places but their neighbourhoods do not.
    Tensor Xp = X;
    for (std::size_t c = 0; c < 8; ++c) std::swap(Xp.at(0, c), Xp.at(8, c));
    const Tensor Y = run_layer(L, X, PosMode::relative, &table), Yp = run_layer(L, Xp, PosMode::relative, &table);
    double spread = 0.0;
    for (std::size_t c = 0; c < 8; ++c) spread = std::max(spread, std::abs(Yp.at(0, c) - Y.at(8, c)));
    CHECK(spread > 1e-6);
  }

  TEST_CASE("identity activation skips the rectifier") {
    std::mt19937_64 rng(49);
    LayerParams L = init_layer(shape_of(4, 1, PosMode::none, 2, 2), rng, 1.0);
    L.w_f = Tensor::identity(4);
    L.b_o = Tensor({1, 4}, -100.0);
    const Tensor X = random_tensor({4, 4}, rng);
    const Tensor a = run_layer(L, X, PosMode::none, nullptr, {}, Activation::relu);
    const Tensor b = run_layer(L, X, PosMode::none, nullptr, {}, Activation::identity);
    for (double v : a.values()) CHECK(v == 0.0);
    for (double v : b.values()) CHECK(v < -50.0);
  }
}

TEST_SUITE("stack") {
  TEST_CASE("one layer sees X") {
    std::mt19937_64 rng(50);
    LayerParams L = init_layer(shape_of(8, 2, PosMode::none, 2, 2), rng, 1.0);
    const Tensor X = random_tensor({4, 8}, rng);
    Tape tape;
    const LayerVars v = bind(tape, L, PosMode::none);
    const Tensor Y = stack_forward(tape.constant(X), std::span<const LayerVars>(&v, 1), {}).value();
    CHECK(max_abs_diff(Y, layer_oracle(L, add_t(X, X))) < 1e-12);
  }

  TEST_CASE("two layers feed the first output plus X into the second") {
    std::mt19937_64 rng(51);
    LayerParams L1 = init_layer(shape_of(8, 2, PosMode::none, 2, 2), rng, 1.0);
    LayerParams L2 = init_layer(shape_of(8, 2, PosMode::none, 2, 2), rng, 1.0);
    const Tensor X = random_tensor({4, 8}, rng);
    Tape tape;
    std::vector<LayerVars> vars{bind(tape, L1, PosMode::none), bind(tape, L2, PosMode::none)};
    const Tensor Y = stack_forward(tape.constant(X), vars, {}).value();
    const Tensor O1 = layer_oracle(L1, add_t(X, X));
    CHECK(max_abs_diff(Y, layer_oracle(L2, add_t(O1, X))) < 1e-12);
  }

  TEST_CASE("empty stack is rejected") {
    Tape tape;
    CHECK_THROWS_AS(stack_forward(tape.constant(Tensor({2, 2})), {}, {}), std::invalid_argument);
  }
}

TEST_SUITE("layer gradients") {
  void check_layer_gradients(PosMode mode, bool masked, bool mask_logits) {
    std::mt19937_64 rng(52);
    const std::size_t W = 3, H = 2, n = W * H, C = 6;
    LayerShape s = shape_of(C, 2, mode, W, H);
    s.learnable_encoding = mode == PosMode::absolute;
    LayerParams L = init_layer(s, rng, 1.0);
    if (mode == PosMode::absolute) {
      const Tensor e = random_tensor({n, C}, rng, -0.5, 0.5);
      std::copy(e.values().begin(), e.values().end(), L.encoding.values().begin());
    }
    for (auto& h : L.heads)
      if (!h.u.empty()) h.u = random_tensor({1, h.u.cols()}, rng), h.v = random_tensor({1, h.v.cols()}, rng);
    L.b_o = random_tensor({1, C}, rng);
    L.b_f = random_tensor({1, C}, rng);
    Tensor X = random_tensor({n, C}, rng);
    const Tensor probe = random_tensor({n, C}, rng);
    const auto table = OffsetTable::sinusoid(W, H, C);
    const std::vector<double> mask = masked ? std::vector<double>{1, 0, 1, 1, 1, 0} : std::vector<double>{};

    std::vector<std::pair<std::string, Tensor*>> named;
    collect(L, "l", named);
    std::vector<Tensor*> params{&X};
    for (auto& [name, t] : named) params.push_back(t);

    ScalarFn fn = [&](Tape& tape, std::span<const Var> p) {
      // Rebind from the perturbed tensors through the leaves grad_check supplies.
      LayerVars v;
      std::size_t k = 1;
      for (auto& h : L.heads) {
        HeadVars hv{p[k], p[k + 1], p[k + 2], {}};
        k += 3;
        if (mode == PosMode::relative) {
          hv.rel = {p[k], p[k + 1], p[k + 2]};
          k += 3;
        }
        v.heads.push_back(hv);
        (void)h;
      }
      v.w_o = p[k++];
      v.b_o = p[k++];
      v.w_f = p[k++];
      v.b_f = p[k++];
      if (mode == PosMode::absolute) v.encoding = p[k++];
      AttentionOptions opts;
      opts.mode = mode;
      opts.table = &table;
      opts.mask_logits = mask_logits;
      const Var Y = transformer_layer(p[0], v, opts, mask);
      return sum(hadamard(Y, tape.constant(probe)));
    };
    const auto report = grad_check(fn, params, 1e-4);
    INFO("param " << report.worst_param << " index " << report.worst_index << " analytic " << report.analytic
                  << " numeric " << report.numeric);
    CHECK(report.max_rel_error < 1e-3);
  }

  TEST_CASE("mode none") { check_layer_gradients(PosMode::none, false, false); }
  TEST_CASE("absolute mode with a learnable table") { check_layer_gradients(PosMode::absolute, false, false); }
  TEST_CASE("relative mode") { check_layer_gradients(PosMode::relative, false, false); }
  TEST_CASE("relative mode under a feature mask") { check_layer_gradients(PosMode::relative, true, false); }
  TEST_CASE("relative mode under a logit mask") { check_layer_gradients(PosMode::relative, true, true); }
}

TEST_SUITE("initialization") {
  TEST_CASE("shapes, bounds and zero biases") {
    std::mt19937_64 rng(53);
    LayerShape s = shape_of(32, 4, PosMode::relative, 6, 6);
    const LayerParams L = init_layer(s, rng, 2.0);
    REQUIRE(L.heads.size() == 4);
    for (const auto& h : L.heads) {
      CHECK(h.w_qry.shape() == Shape{32, 8});
      CHECK(h.w_rel.shape() == Shape{32, 8});
      for (double v : h.w_qry.values()) CHECK(std::abs(v) <= 2.0 / std::sqrt(32.0));
      for (double v : h.u.values()) CHECK(v == 0.0);
    }
    CHECK(L.w_o.shape() == Shape{32, 32});
    for (double v : L.b_o.values()) CHECK(v == 0.0);
  }

  TEST_CASE("same seed gives identical parameters") {
    std::mt19937_64 a(54), b(54);
    const LayerShape s = shape_of(8, 2, PosMode::relative, 2, 2);
    const LayerParams x = init_layer(s, a, 1.0), y = init_layer(s, b, 1.0);
    CHECK(x.heads[1].w_rel == y.heads[1].w_rel);
    CHECK(x.w_f == y.w_f);
  }

  TEST_CASE("indivisible head count needs an explicit head width") {
    std::mt19937_64 rng(55);
    LayerShape s = shape_of(10, 3, PosMode::none, 2, 2);
    CHECK_THROWS_AS(init_layer(s, rng, 1.0), std::invalid_argument);
    s.head_dim = 4;
    CHECK(init_layer(s, rng, 1.0).w_o.shape() == Shape{12, 10});
  }
}
