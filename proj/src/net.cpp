#include "tcsis/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>

#include "tcsis/errors.hpp"
#include "tcsis/rng.hpp"

namespace tcsis {

namespace {

using json = nlohmann::json;

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
         x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

DenseLayer init_layer(int out, int in, Rng& rng, bool zero) {
  DenseLayer layer;
  layer.w = Mat::Zero(out, in);
  layer.b = Vec::Zero(out);
  if (!zero) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(in));
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.w(r, c) = dist(rng);
    }
  }
  return layer;
}

Mlp init_mlp(int in, const std::vector<int>& hidden, int out, Rng& rng,
             bool zero_last) {
  Mlp mlp;
  int prev = in;
  for (int h : hidden) {
    mlp.layers.push_back(init_layer(h, prev, rng, false));
    prev = h;
  }
  mlp.layers.push_back(init_layer(out, prev, rng, zero_last));
  return mlp;
}

long long mlp_params(const Mlp& mlp) {
  long long n = 0;
  for (const auto& l : mlp.layers) n += l.w.size() + l.b.size();
  return n;
}

Mat mlp_forward(const Mlp& mlp, const Mat& input, MlpTrace* trace) {
  if (trace) {
    trace->input = input;
    trace->pre.clear();
    trace->post.clear();
  }
  Mat x = input;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    Mat pre = (x * mlp.layers[l].w.transpose()).rowwise() +
              mlp.layers[l].b.transpose();
    if (trace) trace->pre.push_back(pre);
    if (l + 1 < mlp.layers.size()) {
      x = pre.unaryExpr([](double v) { return gelu(v); });
      if (trace) trace->post.push_back(x);
    } else {
      x = std::move(pre);
    }
  }
  return x;
}

void mlp_backward(const Mlp& mlp, const MlpTrace& trace, const Mat& grad_out,
                  MlpGrads& grads) {
  const int n_layers = static_cast<int>(mlp.layers.size());
  Mat g = grad_out;
  for (int l = n_layers - 1; l >= 0; --l) {
    const Mat& layer_in = l == 0 ? trace.input : trace.post[l - 1];
    grads.layers[l].w.noalias() += g.transpose() * layer_in;
    grads.layers[l].b += g.colwise().sum().transpose();
    if (l > 0) {
      Mat upstream = g * mlp.layers[l].w;  // n x in_l
      g = upstream.cwiseProduct(
          trace.pre[l - 1].unaryExpr([](double v) { return gelu_grad(v); }));
    }
  }
}

void check_head(const Network& net, Head wanted, const char* what) {
  if (net.head != wanted) {
    throw invalid_input(std::string(what) + ": network has the wrong head");
  }
}

void enforce_param_budget(const Network& net) {
  if (net.param_count() >= 1000000) {
    throw invalid_input("network would exceed the 1M parameter budget");
  }
}

template <typename LayerHolder>
void collect_tensors(const LayerHolder& mlp,
                     std::vector<std::pair<const double*, long long>>& out) {
  for (const auto& l : mlp.layers) {
    out.emplace_back(l.w.data(), l.w.size());
    out.emplace_back(l.b.data(), l.b.size());
  }
}

template <typename LayerHolder>
void collect_tensors(LayerHolder& mlp,
                     std::vector<std::pair<double*, long long>>& out) {
  for (auto& l : mlp.layers) {
    out.emplace_back(l.w.data(), l.w.size());
    out.emplace_back(l.b.data(), l.b.size());
  }
}

std::vector<std::pair<const double*, long long>> tensor_views(
    const Network& net) {
  std::vector<std::pair<const double*, long long>> out;
  collect_tensors(net.trunk, out);
  if (net.head == Head::density) collect_tensors(net.gate, out);
  return out;
}

std::vector<std::pair<double*, long long>> tensor_views(Network& net) {
  std::vector<std::pair<double*, long long>> out;
  collect_tensors(net.trunk, out);
  if (net.head == Head::density) collect_tensors(net.gate, out);
  return out;
}

std::vector<std::pair<const double*, long long>> tensor_views(
    const NetGrads& grads, Head head) {
  std::vector<std::pair<const double*, long long>> out;
  collect_tensors(grads.trunk, out);
  if (head == Head::density) collect_tensors(grads.gate, out);
  return out;
}

}  // namespace

long long Network::param_count() const {
  long long n = mlp_params(trunk);
  if (head == Head::density) n += mlp_params(gate);
  return n;
}

Network make_score_network(int d, int vocab, std::vector<int> hidden,
                           int time_dim, std::uint64_t seed) {
  if (d < 1 || vocab < 2) throw invalid_input("bad network dims");
  if (time_dim < 2 || time_dim % 2 != 0) {
    throw invalid_input("time_dim must be even and >= 2");
  }
  Network net;
  net.head = Head::score;
  net.d = d;
  net.vocab = vocab;
  net.time_dim = time_dim;
  net.hidden = std::move(hidden);
  net.seed = seed;
  Rng rng = derive_rng(seed, 0x6e6574);  // independent of sampling streams
  net.trunk = init_mlp(net.input_dim(), net.hidden, d * vocab, rng,
                       /*zero_last=*/true);
  enforce_param_budget(net);
  return net;
}

Network make_density_network(int d, int vocab, std::vector<int> hidden,
                             int time_dim, int gate_hidden,
                             std::uint64_t seed) {
  if (d < 1 || vocab < 2) throw invalid_input("bad network dims");
  if (time_dim < 2 || time_dim % 2 != 0) {
    throw invalid_input("time_dim must be even and >= 2");
  }
  Network net;
  net.head = Head::density;
  net.d = d;
  net.vocab = vocab;
  net.time_dim = time_dim;
  net.hidden = std::move(hidden);
  net.gate_hidden = gate_hidden;
  net.seed = seed;
  Rng rng = derive_rng(seed, 0x6e6574);
  net.trunk = init_mlp(net.input_dim(), net.hidden, 1, rng,
                       /*zero_last=*/true);
  net.gate = init_mlp(time_dim, {gate_hidden}, 1, rng, /*zero_last=*/true);
  net.gate.layers.back().b(0) = 1.0;  // g(t) = 1 at initialization
  enforce_param_budget(net);
  return net;
}

void time_embedding(double t, int width, double* out) {
  const int half = width / 2;
  for (int j = 0; j < half; ++j) {
    const double freq =
        half > 1 ? std::exp(std::log(1000.0) * j / (half - 1)) : 1.0;
    out[2 * j] = std::sin(freq * t);
    out[2 * j + 1] = std::cos(freq * t);
  }
}

Mat build_net_input(const Network& net, std::span<const SequenceState> states,
                    std::span<const double> times) {
  const int n = static_cast<int>(states.size());
  Mat input = Mat::Zero(n, net.input_dim());
  std::vector<double> emb(static_cast<std::size_t>(net.time_dim));
  for (int r = 0; r < n; ++r) {
    const SequenceState& x = states[static_cast<std::size_t>(r)];
    if (x.dim() != net.d || x.vocab != net.vocab) {
      throw invalid_input("network input: state does not match (d, V)");
    }
    for (int i = 0; i < net.d; ++i) {
      input(r, i * net.vocab + x.tokens[static_cast<std::size_t>(i)]) = 1.0;
    }
    time_embedding(times[static_cast<std::size_t>(r)], net.time_dim,
                   emb.data());
    for (int j = 0; j < net.time_dim; ++j) {
      input(r, net.d * net.vocab + j) = emb[static_cast<std::size_t>(j)];
    }
  }
  return input;
}

NetGrads make_grads(const Network& net) {
  NetGrads g;
  for (const auto& l : net.trunk.layers) {
    g.trunk.layers.push_back(
        {Mat::Zero(l.w.rows(), l.w.cols()), Vec::Zero(l.b.size())});
  }
  if (net.head == Head::density) {
    for (const auto& l : net.gate.layers) {
      g.gate.layers.push_back(
          {Mat::Zero(l.w.rows(), l.w.cols()), Vec::Zero(l.b.size())});
    }
  }
  return g;
}

void scale_grads(NetGrads& grads, double factor) {
  for (auto& l : grads.trunk.layers) {
    l.w *= factor;
    l.b *= factor;
  }
  for (auto& l : grads.gate.layers) {
    l.w *= factor;
    l.b *= factor;
  }
}

void accumulate_grads(NetGrads& into, const NetGrads& from) {
  for (std::size_t l = 0; l < into.trunk.layers.size(); ++l) {
    into.trunk.layers[l].w += from.trunk.layers[l].w;
    into.trunk.layers[l].b += from.trunk.layers[l].b;
  }
  for (std::size_t l = 0; l < into.gate.layers.size(); ++l) {
    into.gate.layers[l].w += from.gate.layers[l].w;
    into.gate.layers[l].b += from.gate.layers[l].b;
  }
}

Mat net_forward_score(const Network& net, std::span<const SequenceState> states,
                      std::span<const double> times, NetTrace* trace) {
  check_head(net, Head::score, "net_forward_score");
  const Mat input = build_net_input(net, states, times);
  Mat out = mlp_forward(net.trunk, input, trace ? &trace->trunk : nullptr);
  if (trace) trace->self_index.assign(states.size() * net.d, 0);
  for (std::size_t r = 0; r < states.size(); ++r) {
    // The self-score is identically 1; overwrite its log with 0.
    for (int i = 0; i < net.d; ++i) {
      const int flat = i * net.vocab + states[r].tokens[static_cast<std::size_t>(i)];
      out(static_cast<int>(r), flat) = 0.0;
      if (trace) trace->self_index[r * net.d + i] = flat;
    }
  }
  if (trace) trace->recorded = true;
  return out;
}

Vec net_forward_density(const Network& net,
                        std::span<const SequenceState> states,
                        std::span<const double> times,
                        std::span<const double> log_p_bar, NetTrace* trace) {
  check_head(net, Head::density, "net_forward_density");
  for (double lp : log_p_bar) {
    if (!std::isfinite(lp)) {
      throw invalid_input("density_forward: non-finite log p_bar");
    }
  }
  const Mat input = build_net_input(net, states, times);
  Mat f = mlp_forward(net.trunk, input, trace ? &trace->trunk : nullptr);
  const Mat time_cols = input.rightCols(net.time_dim);
  Mat g = mlp_forward(net.gate, time_cols, trace ? &trace->gate : nullptr);
  Vec out(static_cast<int>(states.size()));
  for (int r = 0; r < out.size(); ++r) {
    out(r) = f(r, 0) + g(r, 0) * log_p_bar[static_cast<std::size_t>(r)];
  }
  if (trace) {
    trace->log_p_bar.assign(log_p_bar.begin(), log_p_bar.end());
    trace->recorded = true;
  }
  return out;
}

ScoreGrid score_forward(const Network& net, const SequenceState& x, double t) {
  const double ts[1] = {t};
  const Mat out = net_forward_score(net, {&x, 1}, ts);
  ScoreGrid grid(net.d, net.vocab);
  for (int i = 0; i < net.d; ++i) {
    for (int v = 0; v < net.vocab; ++v) grid.at(i, v) = out(0, i * net.vocab + v);
  }
  return grid;
}

double density_forward(const Network& net, const SequenceState& x, double t,
                       double log_p_bar_x) {
  const double ts[1] = {t};
  const double lp[1] = {log_p_bar_x};
  return net_forward_density(net, {&x, 1}, ts, lp)(0);
}

void net_backward(const Network& net, const NetTrace& trace,
                  const Mat& grad_out, NetGrads& grads) {
  if (!trace.recorded) {
    throw state_error("net_backward: no recorded forward trace");
  }
  if (net.head == Head::score) {
    // The overwritten self entries carry no dependence on the parameters.
    Mat g = grad_out;
    for (std::size_t r = 0; r < trace.self_index.size() / net.d; ++r) {
      for (int i = 0; i < net.d; ++i) {
        g(static_cast<int>(r), trace.self_index[r * net.d + i]) = 0.0;
      }
    }
    mlp_backward(net.trunk, trace.trunk, g, grads.trunk);
    return;
  }
  // Density head: out = f + g * log_p_bar.
  mlp_backward(net.trunk, trace.trunk, grad_out, grads.trunk);
  Mat gate_grad = grad_out;
  for (int r = 0; r < gate_grad.rows(); ++r) {
    gate_grad(r, 0) *= trace.log_p_bar[static_cast<std::size_t>(r)];
  }
  mlp_backward(net.gate, trace.gate, gate_grad, grads.gate);
}

OptimizerState make_optimizer(const Network& net, double lr,
                              double ema_decay) {
  OptimizerState opt;
  opt.lr = lr;
  opt.ema_decay = ema_decay;
  opt.ema = net;
  for (auto [ptr, size] : tensor_views(net)) {
    (void)ptr;
    opt.m.push_back(Vec::Zero(size));
    opt.v.push_back(Vec::Zero(size));
  }
  return opt;
}

void adam_step(OptimizerState& opt, Network& params, const NetGrads& grads) {
  auto param_views = tensor_views(params);
  auto grad_views = tensor_views(grads, params.head);
  auto ema_views = tensor_views(opt.ema);
  if (param_views.size() != grad_views.size()) {
    throw state_error("adam_step: gradient/parameter shape mismatch");
  }
  for (auto [ptr, size] : grad_views) {
    for (long long i = 0; i < size; ++i) {
      if (!std::isfinite(ptr[i])) {
        throw training_failure("adam_step: non-finite gradient at offset " +
                               std::to_string(i));
      }
    }
  }
  ++opt.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t tnsr = 0; tnsr < param_views.size(); ++tnsr) {
    double* p = param_views[tnsr].first;
    const double* g = grad_views[tnsr].first;
    double* e = ema_views[tnsr].first;
    double* m = opt.m[tnsr].data();
    double* v = opt.v[tnsr].data();
    const long long size = param_views[tnsr].second;
    for (long long i = 0; i < size; ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double update =
          opt.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt.eps);
      p[i] -= update;
      if (!std::isfinite(p[i])) {
        throw training_failure("adam_step: parameter became non-finite");
      }
      e[i] = opt.ema_decay * e[i] + (1.0 - opt.ema_decay) * p[i];
    }
  }
}

namespace {

void write_tensors(std::ofstream& out, const Network& net) {
  auto write_mlp = [&out](const Mlp& mlp) {
    for (const auto& l : mlp.layers) {
      // row-major tensor order
      for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
        for (Eigen::Index c = 0; c < l.w.cols(); ++c) {
          const double v = l.w(r, c);
          out.write(reinterpret_cast<const char*>(&v), sizeof(double));
        }
      }
      out.write(reinterpret_cast<const char*>(l.b.data()),
                static_cast<std::streamsize>(l.b.size() * sizeof(double)));
    }
  };
  write_mlp(net.trunk);
  if (net.head == Head::density) write_mlp(net.gate);
}

void read_tensors(std::ifstream& in, Network& net) {
  auto read_mlp = [&in](Mlp& mlp) {
    for (auto& l : mlp.layers) {
      for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
        for (Eigen::Index c = 0; c < l.w.cols(); ++c) {
          double v;
          in.read(reinterpret_cast<char*>(&v), sizeof(double));
          l.w(r, c) = v;
        }
      }
      in.read(reinterpret_cast<char*>(l.b.data()),
              static_cast<std::streamsize>(l.b.size() * sizeof(double)));
    }
  };
  read_mlp(net.trunk);
  if (net.head == Head::density) read_mlp(net.gate);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Network& net,
                     const Network& ema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw state_error("cannot open checkpoint for writing: " +
                              path.string());
  json header = {
      {"magic", "TCSIS"},
      {"version", 1},
      {"head", net.head == Head::score ? "score" : "density"},
      {"dims", {net.d, net.vocab}},
      {"hidden", net.hidden},
      {"time_dim", net.time_dim},
      {"gate_hidden", net.gate_hidden},
      {"seed", net.seed},
      {"e_ref", net.e_ref},
  };
  const std::string header_str = header.dump();
  out.write("TCSIS", 5);
  const std::uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint32_t header_len =
      static_cast<std::uint32_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(),
            static_cast<std::streamsize>(header_str.size()));
  write_tensors(out, net);
  write_tensors(out, ema);
  if (!out) throw state_error("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw invalid_input("cannot open checkpoint: " + path.string());
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, "TCSIS", 5) != 0) {
    throw invalid_input("not a TCSIS checkpoint: " + path.string());
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != 1) {
    throw invalid_input("unsupported checkpoint version " +
                        std::to_string(version));
  }
  std::uint32_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), header_len);
  const json header = json::parse(header_str);

  const std::string head = header.at("head").get<std::string>();
  const int d = header.at("dims").at(0).get<int>();
  const int vocab = header.at("dims").at(1).get<int>();
  const std::vector<int> hidden = header.at("hidden").get<std::vector<int>>();
  const int time_dim = header.at("time_dim").get<int>();
  const int gate_hidden = header.at("gate_hidden").get<int>();
  const std::uint64_t seed = header.at("seed").get<std::uint64_t>();

  Checkpoint ckpt;
  if (head == "score") {
    ckpt.net = make_score_network(d, vocab, hidden, time_dim, seed);
  } else if (head == "density") {
    ckpt.net = make_density_network(d, vocab, hidden, time_dim, gate_hidden,
                                    seed);
  } else {
    throw invalid_input("unknown checkpoint head: " + head);
  }
  ckpt.net.e_ref = header.at("e_ref").get<double>();
  ckpt.ema = ckpt.net;
  read_tensors(in, ckpt.net);
  read_tensors(in, ckpt.ema);
  if (!in) throw invalid_input("truncated checkpoint: " + path.string());
  ckpt.ema.e_ref = ckpt.net.e_ref;
  return ckpt;
}

}  // namespace tcsis
