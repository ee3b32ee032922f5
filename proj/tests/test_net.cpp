#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tcsis/energy.hpp"
#include "tcsis/errors.hpp"
#include "tcsis/net.hpp"
#include "tcsis/rng.hpp"

using namespace tcsis;

namespace {

SequenceState make_state(std::initializer_list<int> tokens) {
  SequenceState x;
  x.vocab = 2;
  for (int t : tokens) x.tokens.push_back(static_cast<std::uint8_t>(t));
  return x;
}

std::vector<double*> flat_params(Network& net) {
  std::vector<double*> out;
  auto grab = [&out](Mlp& mlp) {
    for (auto& l : mlp.layers) {
      for (Eigen::Index i = 0; i < l.w.size(); ++i) out.push_back(l.w.data() + i);
      for (Eigen::Index i = 0; i < l.b.size(); ++i) out.push_back(l.b.data() + i);
    }
  };
  grab(net.trunk);
  if (net.head == Head::density) grab(net.gate);
  return out;
}

std::vector<double> flat_grads(const NetGrads& grads, Head head) {
  std::vector<double> out;
  auto grab = [&out](const MlpGrads& mlp) {
    for (const auto& l : mlp.layers) {
      for (Eigen::Index i = 0; i < l.w.size(); ++i) out.push_back(*(l.w.data() + i));
      for (Eigen::Index i = 0; i < l.b.size(); ++i) out.push_back(*(l.b.data() + i));
    }
  };
  grab(grads.trunk);
  if (head == Head::density) grab(grads.gate);
  return out;
}

// Randomize every parameter (the builders zero-init the heads).
void randomize(Network& net, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> dist(0.0, 0.4);
  for (double* p : flat_params(net)) *p = dist(rng);
}

}  // namespace

TEST_CASE("zero-initialized score head outputs the uniform score") {
  const Network net = make_score_network(3, 2, {16}, 8, 1);
  const ScoreGrid grid = score_forward(net, make_state({0, 1, 1}), 0.3);
  for (double v : grid.values) CHECK(v == 0.0);
}

TEST_CASE("score output has shape d x V and is deterministic") {
  Network net = make_score_network(4, 3, {32, 32}, 16, 2);
  randomize(net, 99);
  SequenceState x;
  x.vocab = 3;
  x.tokens = {0, 2, 1, 2};
  const ScoreGrid a = score_forward(net, x, 0.77);
  const ScoreGrid b = score_forward(net, x, 0.77);
  CHECK(a.d == 4);
  CHECK(a.vocab == 3);
  CHECK(a.values == b.values);
  for (int i = 0; i < 4; ++i) {
    CHECK(a.at(i, x.tokens[static_cast<std::size_t>(i)]) == 0.0);
  }
}

TEST_CASE("density head at initialization is the identity preconditioner") {
  const Network net = make_density_network(4, 2, {32}, 8, 8, 3);
  IsingModel model(2, 0.4407, true);
  const SequenceState x = make_state({1, 1, 0, 1});
  const double lp = model.log_unnormalized(x);
  CHECK(density_forward(net, x, 0.5, lp) == doctest::Approx(lp).epsilon(1e-14));
  CHECK_THROWS_AS(
      density_forward(net, x, 0.5, std::numeric_limits<double>::infinity()),
      invalid_input);
}

TEST_CASE("parameter budget is enforced") {
  CHECK_THROWS_AS(make_score_network(512, 2, {1024, 1024}, 64, 0),
                  invalid_input);
  const Network net = make_score_network(16, 2, {256, 256}, 64, 0);
  CHECK(net.param_count() < 1000000);
}

TEST_CASE("backward matches central finite differences on micro nets") {
  // Fixed projection weights make the scalar loss L = sum w .* output.
  auto check_gradients = [](Network& net, bool density) {
    randomize(net, 7);
    const std::vector<SequenceState> states = {make_state({1, 0}),
                                               make_state({0, 1})};
    const std::vector<double> times = {0.3, 0.8};
    const std::vector<double> log_p_bar = {0.25, -0.75};
    Rng wrng(31);
    std::normal_distribution<double> wdist(0.0, 1.0);

    const int out_cols = density ? 1 : net.d * net.vocab;
    Mat w(2, out_cols);
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < out_cols; ++c) w(r, c) = wdist(wrng);
    }

    auto loss = [&]() {
      if (density) {
        const Vec out = net_forward_density(net, states, times, log_p_bar);
        return w(0, 0) * out(0) + w(1, 0) * out(1);
      }
      const Mat out = net_forward_score(net, states, times);
      double total = 0.0;
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < out_cols; ++c) total += w(r, c) * out(r, c);
      }
      return total;
    };

    NetTrace trace;
    NetGrads grads = make_grads(net);
    if (density) {
      net_forward_density(net, states, times, log_p_bar, &trace);
      net_backward(net, trace, w, grads);
    } else {
      net_forward_score(net, states, times, &trace);
      net_backward(net, trace, w, grads);
    }
    const std::vector<double> analytic = flat_grads(grads, net.head);
    const std::vector<double*> params = flat_params(net);
    REQUIRE(analytic.size() == params.size());

    const double h = 1e-5;
    for (std::size_t k = 0; k < params.size(); ++k) {
      const double saved = *params[k];
      *params[k] = saved + h;
      const double up = loss();
      *params[k] = saved - h;
      const double down = loss();
      *params[k] = saved;
      const double fd = (up - down) / (2.0 * h);
      CHECK(std::abs(analytic[k] - fd) <=
            1e-6 * std::max({1.0, std::abs(fd), std::abs(analytic[k])}));
    }
  };

  SUBCASE("score head") {
    Network net = make_score_network(2, 2, {5}, 4, 7);
    check_gradients(net, false);
  }
  SUBCASE("density head with gate") {
    Network net = make_density_network(2, 2, {5}, 4, 3, 7);
    check_gradients(net, true);
  }
}

TEST_CASE("self entries receive no gradient") {
  Network net = make_score_network(2, 2, {6}, 4, 11);
  randomize(net, 12);
  const std::vector<SequenceState> states = {make_state({1, 0})};
  const std::vector<double> times = {0.4};
  NetTrace trace;
  net_forward_score(net, states, times, &trace);
  // Gradient only at self entries: must backpropagate to exactly nothing.
  Mat w = Mat::Zero(1, 4);
  w(0, 0 * 2 + 1) = 3.0;  // (site 0, token 1) is the self entry
  w(0, 1 * 2 + 0) = 2.0;  // (site 1, token 0) is the self entry
  NetGrads grads = make_grads(net);
  net_backward(net, trace, w, grads);
  for (double g : flat_grads(grads, net.head)) CHECK(g == 0.0);
}

TEST_CASE("constant loss produces zero gradients") {
  Network net = make_score_network(2, 2, {6}, 4, 13);
  randomize(net, 14);
  const std::vector<SequenceState> states = {make_state({0, 0})};
  const std::vector<double> times = {0.9};
  NetTrace trace;
  net_forward_score(net, states, times, &trace);
  NetGrads grads = make_grads(net);
  net_backward(net, trace, Mat::Zero(1, 4), grads);
  for (double g : flat_grads(grads, net.head)) CHECK(g == 0.0);
}

TEST_CASE("backward without a recorded trace is a state error") {
  Network net = make_score_network(2, 2, {6}, 4, 13);
  NetTrace trace;  // never recorded
  NetGrads grads = make_grads(net);
  CHECK_THROWS_AS(net_backward(net, trace, Mat::Zero(1, 4), grads),
                  state_error);
}

TEST_CASE("adam with zero gradients keeps parameters and drifts the ema") {
  Network net = make_score_network(2, 2, {4}, 4, 21);
  randomize(net, 22);
  const Network before = net;
  OptimizerState opt = make_optimizer(net, 1e-3, 0.5);
  randomize(opt.ema, 23);  // detach the shadow
  const Network shadow_before = opt.ema;
  const NetGrads zeros = make_grads(net);
  adam_step(opt, net, zeros);

  auto before_flat = flat_params(const_cast<Network&>(before));
  auto after_flat = flat_params(net);
  auto shadow_flat = flat_params(opt.ema);
  auto shadow_before_flat = flat_params(const_cast<Network&>(shadow_before));
  for (std::size_t k = 0; k < after_flat.size(); ++k) {
    CHECK(*after_flat[k] == *before_flat[k]);
    CHECK(*shadow_flat[k] ==
          doctest::Approx(0.5 * *shadow_before_flat[k] + 0.5 * *before_flat[k])
              .epsilon(1e-14));
  }
}

TEST_CASE("ema decay boundaries") {
  SUBCASE("decay 0 tracks the parameters exactly") {
    Network net = make_score_network(2, 2, {4}, 4, 24);
    OptimizerState opt = make_optimizer(net, 1e-2, 0.0);
    Rng rng(9);
    NetGrads grads = make_grads(net);
    for (auto& l : grads.trunk.layers) {
      l.w.setRandom();
      l.b.setRandom();
    }
    adam_step(opt, net, grads);
    auto p = flat_params(net);
    auto e = flat_params(opt.ema);
    for (std::size_t k = 0; k < p.size(); ++k) CHECK(*e[k] == *p[k]);
  }
  SUBCASE("decay 1 freezes the shadow") {
    Network net = make_score_network(2, 2, {4}, 4, 25);
    OptimizerState opt = make_optimizer(net, 1e-2, 1.0);
    const Network shadow_before = opt.ema;
    NetGrads grads = make_grads(net);
    for (auto& l : grads.trunk.layers) {
      l.w.setConstant(0.3);
      l.b.setConstant(-0.2);
    }
    adam_step(opt, net, grads);
    auto e = flat_params(opt.ema);
    auto s = flat_params(const_cast<Network&>(shadow_before));
    for (std::size_t k = 0; k < e.size(); ++k) CHECK(*e[k] == *s[k]);
  }
}

TEST_CASE("adam minimizes a quadratic within a thousand steps") {
  // Single linear layer on a fixed input: the squared error is an exact
  // quadratic in the parameters.
  Network net = make_score_network(1, 2, {}, 2, 26);
  OptimizerState opt = make_optimizer(net, 0.05);
  const std::vector<SequenceState> states = {make_state({1})};
  const std::vector<double> times = {0.5};
  const double target = 2.5;
  double loss = 0.0;
  for (int step = 0; step < 1000; ++step) {
    NetTrace trace;
    const Mat out = net_forward_score(net, states, times, &trace);
    const double value = out(0, 0);  // non-self entry for token 1
    loss = (value - target) * (value - target);
    Mat grad = Mat::Zero(1, 2);
    grad(0, 0) = 2.0 * (value - target);
    NetGrads grads = make_grads(net);
    net_backward(net, trace, grad, grads);
    adam_step(opt, net, grads);
  }
  CHECK(loss < 1e-6);
}

TEST_CASE("non-finite gradients abort training") {
  Network net = make_score_network(2, 2, {4}, 4, 27);
  OptimizerState opt = make_optimizer(net, 1e-3);
  NetGrads grads = make_grads(net);
  grads.trunk.layers[0].w(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(opt, net, grads), training_failure);
}

TEST_CASE("checkpoint round trip preserves every tensor") {
  const auto path = std::filesystem::temp_directory_path() / "tcsis_test.ckpt";
  Network net = make_density_network(3, 2, {12, 8}, 8, 6, 31);
  randomize(net, 32);
  net.e_ref = 4.25;
  Network ema = net;
  randomize(ema, 33);
  ema.e_ref = net.e_ref;
  save_checkpoint(path, net, ema);

  Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.net.head == Head::density);
  CHECK(loaded.net.d == 3);
  CHECK(loaded.net.vocab == 2);
  CHECK(loaded.net.hidden == std::vector<int>{12, 8});
  CHECK(loaded.net.e_ref == 4.25);
  auto a = flat_params(net);
  auto b = flat_params(loaded.net);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(*a[k] == *b[k]);
  auto ea = flat_params(ema);
  auto eb = flat_params(loaded.ema);
  for (std::size_t k = 0; k < ea.size(); ++k) CHECK(*ea[k] == *eb[k]);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/nothing.ckpt"), invalid_input);
}
