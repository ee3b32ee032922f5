#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tcsis/state.hpp"

namespace tcsis {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct DenseLayer {
  Mat w;  // out x in
  Vec b;
};

// GELU between layers, linear output.
struct Mlp {
  std::vector<DenseLayer> layers;
};

enum class Head { score, density };

// MLP over one-hot tokens concatenated with a sinusoidal time embedding.
// Score head: d*V outputs (log concrete score, self entries forced to 0).
// Density head: scalar trunk output f(x,t) plus a learned scalar gate g(t)
// multiplying the supplied log p_bar (energy preconditioning).
struct Network {
  Head head = Head::score;
  int d = 0;
  int vocab = 0;
  int time_dim = 64;
  std::vector<int> hidden = {256, 256};
  int gate_hidden = 64;
  std::uint64_t seed = 0;
  double e_ref = 0.0;  // density head: energy reference shift used in training

  Mlp trunk;
  Mlp gate;  // density head only

  int input_dim() const { return d * vocab + time_dim; }
  long long param_count() const;
};

Network make_score_network(int d, int vocab,
                           std::vector<int> hidden = {256, 256},
                           int time_dim = 64, std::uint64_t seed = 0);
Network make_density_network(int d, int vocab,
                             std::vector<int> hidden = {256, 256},
                             int time_dim = 64, int gate_hidden = 64,
                             std::uint64_t seed = 0);

void time_embedding(double t, int width, double* out);

Mat build_net_input(const Network& net, std::span<const SequenceState> states,
                    std::span<const double> times);

// Forward traces for reverse-mode differentiation.
struct MlpTrace {
  Mat input;
  std::vector<Mat> pre;   // pre-activation per layer
  std::vector<Mat> post;  // activated output per hidden layer
};

struct NetTrace {
  MlpTrace trunk;
  MlpTrace gate;
  std::vector<int> self_index;     // score head: flat index of (i, x_i) per row
  std::vector<double> log_p_bar;   // density head
  bool recorded = false;
};

struct MlpGrads {
  std::vector<DenseLayer> layers;
};

struct NetGrads {
  MlpGrads trunk;
  MlpGrads gate;
};

NetGrads make_grads(const Network& net);
void scale_grads(NetGrads& grads, double factor);
void accumulate_grads(NetGrads& into, const NetGrads& from);

// Batched forward passes. Score rows are flat d*V with self entries zeroed.
Mat net_forward_score(const Network& net, std::span<const SequenceState> states,
                      std::span<const double> times,
                      NetTrace* trace = nullptr);
Vec net_forward_density(const Network& net,
                        std::span<const SequenceState> states,
                        std::span<const double> times,
                        std::span<const double> log_p_bar,
                        NetTrace* trace = nullptr);

// Single-state conveniences.
ScoreGrid score_forward(const Network& net, const SequenceState& x, double t);
double density_forward(const Network& net, const SequenceState& x, double t,
                       double log_p_bar_x);

// Reverse mode; requires a recorded trace (state_error otherwise). Self
// entries of grad_out are ignored for the score head.
void net_backward(const Network& net, const NetTrace& trace,
                  const Mat& grad_out, NetGrads& grads);

struct OptimizerState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double ema_decay = 0.999;
  long long step = 0;
  std::vector<Vec> m;
  std::vector<Vec> v;
  Network ema;  // shadow parameters
};

OptimizerState make_optimizer(const Network& net, double lr,
                              double ema_decay = 0.999);

// Standard Adam with bias correction, then EMA shadow update. Throws
// training_failure on non-finite gradients or parameters.
void adam_step(OptimizerState& opt, Network& params, const NetGrads& grads);

struct Checkpoint {
  Network net;
  Network ema;
};

void save_checkpoint(const std::filesystem::path& path, const Network& net,
                     const Network& ema);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tcsis
