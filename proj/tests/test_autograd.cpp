#include <cmath>
#include <vector>

#include "dietgraph/autograd.hpp"
#include "dietgraph/gradcheck.hpp"
#include "dietgraph/optim.hpp"
#include "dietgraph/rng.hpp"
#include "doctest.h"

using namespace dietgraph;

namespace {

Tensor<double> rand_tensor(RngStream& rng, int r, int c, double lo = -1.0,
                           double hi = 1.0) {
  Tensor<double> t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i)
    t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Keeps entries away from 0 so FD never straddles a relu kink.
Tensor<double> rand_tensor_no_kink(RngStream& rng, int r, int c) {
  Tensor<double> t = rand_tensor(rng, r, c);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (std::abs(t.data()[i]) < 0.05)
      t.data()[i] = t.data()[i] < 0 ? t.data()[i] - 0.05 : t.data()[i] + 0.05;
  }
  return t;
}

// Reduces x to a scalar with fixed random per-entry weights so gradient
// errors cannot cancel.
Var pin(Tape<double>& t, Var x, unsigned tag) {
  RngStream rng(424242, "pin-" + std::to_string(tag));
  const Tensor<double>& v = t.val(x);
  Tensor<double> w = rand_tensor(rng, v.rows(), v.cols(), 0.1, 1.0);
  return t.sum_all(t.mul(x, t.constant(std::move(w))));
}

double fd_check(const std::function<Var(Tape<double>&, const std::vector<Var>&)>& build,
                std::vector<Tensor<double>> inputs) {
  RngStream rng(7, "fd");
  const auto rep = grad_check<double>(build, std::move(inputs), 1e-5, 64, rng);
  return rep.max_rel_err;
}

}  // namespace

TEST_CASE("matmul forward and gradient") {
  RngStream rng(1, "mm");
  auto a = rand_tensor(rng, 4, 6);
  auto b = rand_tensor(rng, 6, 3);
  auto build = [](Tape<double>& t, const std::vector<Var>& in) {
    return pin(t, t.matmul(in[0], in[1]), 0);
  };
  CHECK(fd_check(build, {a, b}) < 1e-7);
}

TEST_CASE("binary elementwise gradients") {
  RngStream rng(2, "bin");
  auto a = rand_tensor(rng, 3, 5);
  auto b = rand_tensor(rng, 3, 5);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.add(in[0], in[1]), 1);
        }, {a, b}) < 1e-7);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.sub(in[0], in[1]), 2);
        }, {a, b}) < 1e-7);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.mul(in[0], in[1]), 3);
        }, {a, b}) < 1e-7);
}

TEST_CASE("add_bias gradient") {
  RngStream rng(3, "bias");
  auto a = rand_tensor(rng, 5, 4);
  auto b = rand_tensor(rng, 1, 4);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.add_bias(in[0], in[1]), 4);
        }, {a, b}) < 1e-7);
}

TEST_CASE("concat and slice gradients") {
  RngStream rng(4, "cat");
  auto a = rand_tensor(rng, 3, 4);
  auto b = rand_tensor(rng, 3, 2);
  auto c = rand_tensor(rng, 2, 4);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.concat_cols(in[0], in[1]), 5);
        }, {a, b}) < 1e-7);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.concat_rows({in[0], in[1], in[0]}), 6);
        }, {a, c}) < 1e-7);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.slice_cols(in[0], 1, 3), 7);
        }, {a}) < 1e-7);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.slice_rows(in[0], 1, 3), 8);
        }, {a}) < 1e-7);
}

TEST_CASE("gather and scatter gradients with repeats") {
  RngStream rng(5, "gs");
  auto a = rand_tensor(rng, 4, 3);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.gather_rows(in[0], {2, 0, 2, 3, 2}), 9);
        }, {a}) < 1e-7);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.scatter_rows(in[0], {1, 1, 0, 4}, 5), 10);
        }, {a}) < 1e-7);
}

TEST_CASE("scatter_rows accumulates colliding rows") {
  Tape<double> t;
  auto a = Tensor<double>::from_rows(3, 2, {1, 2, 10, 20, 100, 200});
  const Var out = t.scatter_rows(t.constant(a), {1, 1, 0}, 2);
  CHECK(t.val(out).at(0, 0) == 100.0);
  CHECK(t.val(out).at(1, 0) == 11.0);
  CHECK(t.val(out).at(1, 1) == 22.0);
}

TEST_CASE("reduction and scaling gradients") {
  RngStream rng(6, "red");
  auto a = rand_tensor(rng, 4, 5);
  auto s = rand_tensor(rng, 1, 1, 0.5, 1.5);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.row_sum(in[0]), 11);
        }, {a}) < 1e-7);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return t.sum_all(in[0]);
        }, {a}) < 1e-7);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.scalar_scale(in[0], -0.7), 12);
        }, {a}) < 1e-7);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.row_scale(in[0], {0.5, -1.0, 2.0, 0.25}), 13);
        }, {a}) < 1e-7);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.scalar_mul(in[1], in[0]), 14);
        }, {a, s}) < 1e-7);
}

TEST_CASE("activation gradients") {
  RngStream rng(7, "act");
  auto a = rand_tensor_no_kink(rng, 4, 5);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.relu(in[0]), 15);
        }, {a}) < 1e-7);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.leaky_relu(in[0], 0.2), 16);
        }, {a}) < 1e-7);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.elu(in[0]), 17);
        }, {a}) < 1e-7);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.tanh_(in[0]), 18);
        }, {a}) < 1e-7);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.sigmoid(in[0]), 19);
        }, {a}) < 1e-7);
}

TEST_CASE("softmax gradients") {
  RngStream rng(8, "sm");
  auto a = rand_tensor(rng, 5, 4, -2.0, 2.0);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.row_softmax(in[0]), 20);
        }, {a}) < 1e-7);
  auto scores = rand_tensor(rng, 9, 2, -2.0, 2.0);
  CHECK(fd_check([](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.segment_softmax(in[0], {0, 2, 5, 9}), 21);
        }, {scores}) < 1e-7);
}

TEST_CASE("row_softmax rows sum to one") {
  RngStream rng(9, "sm1");
  Tape<double> t;
  const Var y = t.row_softmax(t.constant(rand_tensor(rng, 6, 5, -3, 3)));
  for (int i = 0; i < 6; ++i) {
    double s = 0;
    for (int j = 0; j < 5; ++j) s += t.val(y).at(i, j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("segment_softmax matches per-segment row_softmax") {
  // Segment {2,3} of a single column equals a 1 x 2 row softmax.
  Tape<double> t;
  auto s = Tensor<double>::from_rows(4, 1, {5.0, 1.0, 2.0, 3.0});
  const Var y = t.segment_softmax(t.constant(s), {0, 2, 4});
  const double e12 = std::exp(1.0) / (std::exp(1.0) + std::exp(5.0));
  CHECK(t.val(y).at(1, 0) == doctest::Approx(e12).epsilon(1e-12));
  const double e23 = std::exp(2.0) / (std::exp(2.0) + std::exp(3.0));
  CHECK(t.val(y).at(2, 0) == doctest::Approx(e23).epsilon(1e-12));
  CHECK_THROWS_AS((void)t.segment_softmax(t.constant(s), {0, 2, 2, 4}),
                  Error);
}

TEST_CASE("segment_weighted_sum and pair_dot gradients") {
  RngStream rng(10, "seg");
  auto alpha = rand_tensor(rng, 7, 1, 0.1, 1.0);
  auto values = rand_tensor(rng, 4, 3);
  const std::vector<int> vidx = {0, 3, 1, 1, 2, 0, 3};
  const std::vector<int> off = {0, 3, 5, 7};
  CHECK(fd_check([&](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.segment_weighted_sum(in[0], in[1], vidx, off), 22);
        }, {alpha, values}) < 1e-7);

  auto a = rand_tensor(rng, 4, 5);
  auto b = rand_tensor(rng, 3, 5);
  const std::vector<int> ia = {0, 2, 3, 0};
  const std::vector<int> ib = {1, 1, 0, 2};
  CHECK(fd_check([&](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.pair_dot(in[0], in[1], ia, ib), 23);
        }, {a, b}) < 1e-7);
}

TEST_CASE("segment_weighted_sum small case") {
  Tape<double> t;
  auto alpha = Tensor<double>::from_rows(3, 1, {0.5, 0.25, 2.0});
  auto vals = Tensor<double>::from_rows(2, 2, {1, 2, 10, 20});
  // seg 0 = {e0 -> row1, e1 -> row0}, seg 1 = {e2 -> row0}
  const Var out = t.segment_weighted_sum(t.constant(alpha), t.constant(vals),
                                         {1, 0, 0}, {0, 2, 3});
  CHECK(t.val(out).at(0, 0) == doctest::Approx(0.5 * 10 + 0.25 * 1));
  CHECK(t.val(out).at(0, 1) == doctest::Approx(0.5 * 20 + 0.25 * 2));
  CHECK(t.val(out).at(1, 0) == doctest::Approx(2.0));
}

TEST_CASE("dropout gradient with fixed mask") {
  RngStream rng(11, "do");
  auto a = rand_tensor(rng, 6, 4);
  auto build = [](Tape<double>& t, const std::vector<Var>& in) {
    RngStream mask_rng(99, "mask");
    return pin(t, t.dropout(in[0], 0.4, mask_rng, true), 24);
  };
  CHECK(fd_check(build, {a}) < 1e-7);

  // Not training: identity, same var.
  Tape<double> t;
  RngStream r2(1, "x");
  const Var v = t.constant(a);
  const Var d = t.dropout(v, 0.4, r2, false);
  CHECK(d.idx == v.idx);
}

TEST_CASE("spmm forward and gradient") {
  Csr<double> m;
  m.rows = 3;
  m.cols = 4;
  m.offsets = {0, 2, 3, 5};
  m.col_idx = {0, 2, 1, 0, 3};
  m.vals = {1.0, -2.0, 0.5, 3.0, 1.5};
  RngStream rng(12, "sp");
  auto x = rand_tensor(rng, 4, 3);
  CHECK(fd_check([&](Tape<double>& t, const std::vector<Var>& in) {
          return pin(t, t.spmm(m, in[0]), 25);
        }, {x}) < 1e-7);

  Tape<double> t;
  const Var y = t.spmm(m, t.constant(x));
  for (int j = 0; j < 3; ++j) {
    CHECK(t.val(y).at(0, j) ==
          doctest::Approx(x.at(0, j) - 2.0 * x.at(2, j)));
    CHECK(t.val(y).at(1, j) == doctest::Approx(0.5 * x.at(1, j)));
  }
}

TEST_CASE("softmax_xent gradient and zero-weight rows") {
  RngStream rng(13, "ce");
  auto logits = rand_tensor(rng, 6, 3, -2.0, 2.0);
  const std::vector<int> labels = {0, 2, 1, -1, 0, 2};
  const std::vector<double> w = {1.0, 0.5, 2.0, 0.0, 1.0, 1.0};
  CHECK(fd_check([&](Tape<double>& t, const std::vector<Var>& in) {
          return t.softmax_xent(in[0], labels, w);
        }, {logits}) < 1e-7);

  // Uniform logits, one active row: loss is log K.
  Tape<double> t;
  const Var l = t.constant(Tensor<double>(2, 4));
  const Var loss = t.softmax_xent(l, {1, -1}, {1.0, 0.0});
  CHECK(t.val(loss).at(0, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("bce gradient and worked value") {
  RngStream rng(14, "bce");
  auto probs = rand_tensor(rng, 5, 1, 0.1, 0.9);
  const std::vector<double> targets = {1.0, 0.0, 1.0, 0.5, 0.0};
  const std::vector<double> w = {1.0, 1.0, 0.5, 1.0, 2.0};
  CHECK(fd_check([&](Tape<double>& t, const std::vector<Var>& in) {
          return t.bce(in[0], targets, w);
        }, {probs}) < 1e-7);

  Tape<double> t;
  auto p = Tensor<double>::from_rows(2, 1, {0.8, 0.4});
  const Var loss =
      t.bce(t.constant(p), {1.0, 0.0}, {1.0, 1.0});
  const double want = (-std::log(0.8) - std::log(0.6)) / 2.0;
  CHECK(t.val(loss).at(0, 0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("two layer network end to end") {
  RngStream rng(15, "mlp");
  auto x = rand_tensor(rng, 8, 6);
  auto w1 = rand_tensor(rng, 6, 5);
  auto b1 = rand_tensor(rng, 1, 5);
  auto w2 = rand_tensor(rng, 5, 3);
  auto b2 = rand_tensor(rng, 1, 3);
  const std::vector<int> labels = {0, 1, 2, 0, 1, 2, 0, 1};
  const std::vector<double> w(8, 1.0);
  auto build = [&](Tape<double>& t, const std::vector<Var>& in) {
    const Var h = t.relu(t.add_bias(t.matmul(in[0], in[1]), in[2]));
    const Var logits = t.add_bias(t.matmul(h, in[3]), in[4]);
    return t.softmax_xent(logits, labels, w);
  };
  CHECK(fd_check(build, {x, w1, b1, w2, b2}) < 1e-6);
}

TEST_CASE("unused leaf keeps zero gradient") {
  Tape<double> t;
  auto a = Tensor<double>::full(2, 2, 1.0);
  auto b = Tensor<double>::full(2, 2, 3.0);
  const Var va = t.leaf(a);
  const Var vb = t.leaf(b);
  t.backward(t.sum_all(va));
  CHECK(t.grad(va).at(0, 0) == 1.0);
  CHECK(t.grad(vb).at(0, 0) == 0.0);
  CHECK_THROWS_AS(t.backward(t.sum_all(va)), Error);
}

TEST_CASE("non-finite forward value throws") {
  Tape<double> t;
  const Var huge = t.constant(Tensor<double>::full(1, 2, 1e200));
  CHECK_THROWS_AS((void)t.mul(huge, huge), Error);
}

TEST_CASE("adam minimises a quadratic") {
  ParamStore<double> store;
  RngStream rng(16, "adam");
  auto& p = store.add_glorot("x", 1, 4, rng);
  auto target = Tensor<double>::from_rows(1, 4, {1.0, -2.0, 0.5, 3.0});
  Adam<double> opt(0.05);
  double first_loss = 0, last_loss = 0;
  for (int it = 0; it < 400; ++it) {
    Tape<double> tape;
    ParamLease<double> lease(tape, store);
    const Var diff = tape.sub(lease["x"], tape.constant(target));
    const Var loss = tape.sum_all(tape.mul(diff, diff));
    tape.backward(loss);
    if (it == 0) first_loss = tape.val(loss).at(0, 0);
    last_loss = tape.val(loss).at(0, 0);
    opt.step(lease.grads());
  }
  CHECK(last_loss < first_loss * 1e-4);
  CHECK(p.value.at(0, 1) == doctest::Approx(-2.0).epsilon(1e-2));
}

TEST_CASE("adam rejects non-finite gradients") {
  ParamStore<double> store;
  auto& p = store.add_zeros("x", 1, 2);
  Tensor<double> g(1, 2);
  g.at(0, 0) = std::nan("");
  Adam<double> opt(0.01);
  std::vector<std::pair<Param<double>*, const Tensor<double>*>> grads = {
      {&p, &g}};
  CHECK_THROWS_AS(opt.step(grads), Error);
}

TEST_CASE("glorot init stays inside its limit") {
  ParamStore<double> store;
  RngStream rng(17, "init");
  auto& p = store.add_glorot("w", 30, 20, rng);
  const double limit = std::sqrt(6.0 / 50.0);
  double mx = 0;
  for (std::size_t i = 0; i < p.value.size(); ++i)
    mx = std::max(mx, std::abs(p.value.data()[i]));
  CHECK(mx <= limit);
  CHECK(mx > limit * 0.5);
}
