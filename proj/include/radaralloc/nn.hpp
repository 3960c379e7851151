#pragma once

// Recurrent Q-network: tanh dense layer, stacked LSTMs, linear head.
// Parameters live in one flat buffer; matrices are column-major views.
// Batched evaluation puts one sample per column.

#include <Eigen/Dense>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "radaralloc/common.hpp"

namespace radaralloc::nn {

struct NetShape {
  int input = 7;
  int fcl = 30;
  std::vector<int> lstm{30, 30, 20, 10};
  int output = 2;

  void validate() const {
    if (input < 1 || fcl < 1 || output < 1 || lstm.empty())
      throw ConfigError("network shape: all widths must be >= 1 and at least one LSTM layer is needed");
    for (int w : lstm)
      if (w < 1) throw ConfigError("network shape: LSTM widths must be >= 1");
  }

  int layer_input(std::size_t l) const { return l == 0 ? fcl : lstm[l - 1]; }

  /// Rows of a stacked hidden state: (h, c) for every layer.
  int state_size() const { return 2 * std::accumulate(lstm.begin(), lstm.end(), 0); }

  int state_offset(std::size_t l) const {
    return 2 * std::accumulate(lstm.begin(), lstm.begin() + static_cast<std::ptrdiff_t>(l), 0);
  }

  bool operator==(const NetShape&) const = default;
};

/// Offsets of each parameter block within the flat buffer.
struct Layout {
  std::size_t fc_w = 0, fc_b = 0;
  std::vector<std::size_t> lstm_w, lstm_b;
  std::size_t head_w = 0, head_b = 0;
  std::size_t total = 0;

  explicit Layout(const NetShape& s) {
    std::size_t at = 0;
    auto take = [&at](std::size_t n) {
      const std::size_t here = at;
      at += n;
      return here;
    };
    fc_w = take(static_cast<std::size_t>(s.fcl * s.input));
    fc_b = take(static_cast<std::size_t>(s.fcl));
    for (std::size_t l = 0; l < s.lstm.size(); ++l) {
      const int h = s.lstm[l];
      lstm_w.push_back(take(static_cast<std::size_t>(4 * h * (s.layer_input(l) + h))));
      lstm_b.push_back(take(static_cast<std::size_t>(4 * h)));
    }
    head_w = take(static_cast<std::size_t>(s.output * s.lstm.back()));
    head_b = take(static_cast<std::size_t>(s.output));
    total = at;
  }
};

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
// Parameter storage. Eigen's allocator pins the base address so vectorized
// kernels peel the same way in every process; with malloc's 16-byte
// alignment the summation order, and hence training, depended on heap history.
template <class T>
using ParamVec = std::vector<T, Eigen::aligned_allocator<T>>;

/// Weights and biases. LSTM layer l has one 4H x (I+H) matrix acting on the
/// stacked [x; h_prev], gate rows ordered input, forget, candidate, output.
template <class T>
class QNetwork {
 public:
  using MatMap = Eigen::Map<Mat<T>>;
  using ConstMatMap = Eigen::Map<const Mat<T>>;
  using VecMap = Eigen::Map<Vec<T>>;
  using ConstVecMap = Eigen::Map<const Vec<T>>;

  QNetwork() : QNetwork(NetShape{}) {}
  explicit QNetwork(NetShape shape) : shape_(std::move(shape)), layout_((shape_.validate(), shape_)) {
    params_.assign(layout_.total, T(0));
  }

  const NetShape& shape() const { return shape_; }
  const Layout& layout() const { return layout_; }
  ParamVec<T>& params() { return params_; }
  const ParamVec<T>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }

  MatMap fc_weight() { return {params_.data() + layout_.fc_w, shape_.fcl, shape_.input}; }
  ConstMatMap fc_weight() const { return {params_.data() + layout_.fc_w, shape_.fcl, shape_.input}; }
  VecMap fc_bias() { return {params_.data() + layout_.fc_b, shape_.fcl}; }
  ConstVecMap fc_bias() const { return {params_.data() + layout_.fc_b, shape_.fcl}; }

  MatMap lstm_weight(std::size_t l) { return {params_.data() + layout_.lstm_w[l], 4 * shape_.lstm[l], shape_.layer_input(l) + shape_.lstm[l]}; }
  ConstMatMap lstm_weight(std::size_t l) const { return {params_.data() + layout_.lstm_w[l], 4 * shape_.lstm[l], shape_.layer_input(l) + shape_.lstm[l]}; }
  VecMap lstm_bias(std::size_t l) { return {params_.data() + layout_.lstm_b[l], 4 * shape_.lstm[l]}; }
  ConstVecMap lstm_bias(std::size_t l) const { return {params_.data() + layout_.lstm_b[l], 4 * shape_.lstm[l]}; }

  MatMap head_weight() { return {params_.data() + layout_.head_w, shape_.output, shape_.lstm.back()}; }
  ConstMatMap head_weight() const { return {params_.data() + layout_.head_w, shape_.output, shape_.lstm.back()}; }
  VecMap head_bias() { return {params_.data() + layout_.head_b, shape_.output}; }
  ConstVecMap head_bias() const { return {params_.data() + layout_.head_b, shape_.output}; }

  bool operator==(const QNetwork& o) const { return shape_ == o.shape_ && params_ == o.params_; }

 private:
  NetShape shape_;
  Layout layout_;
  ParamVec<T> params_;
};

/// Uniform in +-sqrt(3/fan_in) per matrix, forget-gate biases 1, other biases 0.
template <class T>
QNetwork<T> init_params(const NetShape& shape, Rng& rng) {
  QNetwork<T> net(shape);
  auto fill = [&rng](auto&& m, int fan_in) {
    const double bound = std::sqrt(3.0 / fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<T>(u(rng));
  };
  fill(net.fc_weight(), shape.input);
  for (std::size_t l = 0; l < shape.lstm.size(); ++l) {
    fill(net.lstm_weight(l), shape.layer_input(l) + shape.lstm[l]);
    const int h = shape.lstm[l];
    net.lstm_bias(l).segment(h, h).setConstant(T(1));
  }
  fill(net.head_weight(), shape.lstm.back());
  return net;
}

template <class T>
QNetwork<T> init_params(Rng& rng, int subband_count) {
  NetShape s;
  s.output = subband_count;
  return init_params<T>(s, rng);
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

/// Zero hidden state for a batch of `batch` columns.
template <class T>
Mat<T> zero_state(const NetShape& s, int batch = 1) {
  return Mat<T>::Zero(s.state_size(), batch);
}

/// Intermediate values of one time step, kept for backpropagation.
template <class T>
struct StepCache {
  Mat<T> x;  // raw input
  Mat<T> a;  // dense layer output
  struct Layer {
    Mat<T> in;      // stacked [x; h_prev]
    Mat<T> gates;   // activated i, f, g, o
    Mat<T> c_prev;
    Mat<T> tanh_c;
  };
  std::vector<Layer> layers;
  Mat<T> top;  // last LSTM h
};

/// One step for a batch: returns q (M x B) and overwrites `state` with h'.
template <class T>
Mat<T> forward_batch(const QNetwork<T>& net, const Mat<T>& x, Mat<T>& state, StepCache<T>* cache = nullptr) {
  const auto& s = net.shape();
  if (x.rows() != s.input) throw std::invalid_argument("forward: input width mismatch");
  if (state.rows() != s.state_size() || state.cols() != x.cols())
    throw std::invalid_argument("forward: hidden state shape mismatch");
  if (!x.allFinite()) throw std::invalid_argument("forward: non-finite input");
  const Eigen::Index b = x.cols();

  Mat<T> a = ((net.fc_weight() * x).colwise() + net.fc_bias()).array().tanh().matrix();
  if (cache) {
    cache->x = x;
    cache->a = a;
    cache->layers.resize(s.lstm.size());
  }
  Mat<T> below = std::move(a);
  for (std::size_t l = 0; l < s.lstm.size(); ++l) {
    const int h = s.lstm[l];
    const int in_w = s.layer_input(l);
    const int off = s.state_offset(l);
    Mat<T> in(in_w + h, b);
    in.topRows(in_w) = below;
    in.bottomRows(h) = state.middleRows(off, h);
    Mat<T> z = (net.lstm_weight(l) * in).colwise() + net.lstm_bias(l);
    // Logistic gates through the vectorized tanh: sigmoid(v) = (1 + tanh(v/2)) / 2.
    z.topRows(2 * h) = (T(0.5) * (T(0.5) * z.topRows(2 * h).array()).tanh() + T(0.5)).matrix();
    z.middleRows(2 * h, h) = z.middleRows(2 * h, h).array().tanh().matrix();
    z.bottomRows(h) = (T(0.5) * (T(0.5) * z.bottomRows(h).array()).tanh() + T(0.5)).matrix();
    Mat<T> c_prev = state.middleRows(off + h, h);
    Mat<T> c = z.middleRows(h, h).cwiseProduct(c_prev) + z.topRows(h).cwiseProduct(z.middleRows(2 * h, h));
    Mat<T> tc = c.array().tanh().matrix();
    Mat<T> hn = z.bottomRows(h).cwiseProduct(tc);
    state.middleRows(off, h) = hn;
    state.middleRows(off + h, h) = c;
    if (cache) {
      auto& L = cache->layers[l];
      L.in = std::move(in);
      L.gates = std::move(z);
      L.c_prev = std::move(c_prev);
      L.tanh_c = std::move(tc);
    }
    below = std::move(hn);
  }
  if (cache) cache->top = below;
  return (net.head_weight() * below).colwise() + net.head_bias();
}

template <class T>
struct ForwardResult {
  Vec<T> q;
  Mat<T> state;
};

/// Single-sample step.
template <class T>
ForwardResult<T> forward(const QNetwork<T>& net, const Vec<T>& obs, const Mat<T>& state) {
  Mat<T> st = state;
  Mat<T> q = forward_batch<T>(net, Mat<T>(obs), st);
  return {q.col(0), std::move(st)};
}

template <class T>
struct SequenceResult {
  std::vector<Mat<T>> q;      // per step, M x B
  std::vector<Mat<T>> state;  // per step, state after that step
};

template <class T>
SequenceResult<T> forward_sequence(const QNetwork<T>& net, std::span<const Mat<T>> xs, const Mat<T>& h0) {
  if (xs.empty()) throw std::invalid_argument("forward_sequence: empty sequence");
  SequenceResult<T> out;
  Mat<T> st = h0;
  for (const auto& x : xs) {
    out.q.push_back(forward_batch<T>(net, x, st));
    out.state.push_back(st);
  }
  return out;
}

/// K sequences of P steps laid out as P matrices with K columns each.
template <class T>
struct SequenceBatch {
  std::vector<Mat<T>> obs;               // P x (input x K)
  Mat<T> h0;                             // state_size x K
  std::vector<std::vector<int>> action;  // P x K
  Mat<T> target;                         // P x K
};

template <class T>
struct Gradient {
  ParamVec<T> grad;
  T loss = T(0);
};

/// Exact gradient of (1/KP) * sum (y - q[u])^2 through all P steps. The
/// stored initial state of each sequence is a constant.
template <class T>
Gradient<T> bptt_gradients(const QNetwork<T>& net, const SequenceBatch<T>& batch) {
  const auto& s = net.shape();
  const auto p_len = batch.obs.size();
  if (p_len == 0) throw std::invalid_argument("bptt: empty batch");
  const Eigen::Index k = batch.h0.cols();
  if (batch.action.size() != p_len || batch.target.rows() != static_cast<Eigen::Index>(p_len) ||
      batch.target.cols() != k)
    throw std::invalid_argument("bptt: batch shapes inconsistent");

  std::vector<StepCache<T>> caches(p_len);
  std::vector<Mat<T>> qs(p_len);
  Mat<T> st = batch.h0;
  for (std::size_t t = 0; t < p_len; ++t) qs[t] = forward_batch<T>(net, batch.obs[t], st, &caches[t]);

  QNetwork<T> g(s);  // same layout, used as gradient storage
  std::fill(g.params().begin(), g.params().end(), T(0));
  const T scale = T(2) / static_cast<T>(static_cast<double>(k) * static_cast<double>(p_len));
  T loss = T(0);

  const std::size_t n_layers = s.lstm.size();
  std::vector<Mat<T>> dh_next(n_layers), dc_next(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    dh_next[l] = Mat<T>::Zero(s.lstm[l], k);
    dc_next[l] = Mat<T>::Zero(s.lstm[l], k);
  }

  for (std::size_t t = p_len; t-- > 0;) {
    const auto& cache = caches[t];
    Mat<T> dq = Mat<T>::Zero(s.output, k);
    for (Eigen::Index j = 0; j < k; ++j) {
      const int u = batch.action[t][static_cast<std::size_t>(j)];
      if (u < 0 || u >= s.output) throw std::invalid_argument("bptt: action out of range");
      const T resid = qs[t](u, j) - batch.target(static_cast<Eigen::Index>(t), j);
      loss += resid * resid;
      dq(u, j) = scale * resid;
    }
    g.head_weight().noalias() += dq * cache.top.transpose();
    g.head_bias() += dq.rowwise().sum();
    Mat<T> dh = net.head_weight().transpose() * dq;

    for (std::size_t l = n_layers; l-- > 0;) {
      const int h = s.lstm[l];
      const int in_w = s.layer_input(l);
      const auto& L = cache.layers[l];
      dh += dh_next[l];
      const auto gi = L.gates.topRows(h).array();
      const auto gf = L.gates.middleRows(h, h).array();
      const auto gg = L.gates.middleRows(2 * h, h).array();
      const auto go = L.gates.bottomRows(h).array();
      const auto tc = L.tanh_c.array();
      Mat<T> dc = (dc_next[l].array() + dh.array() * go * (T(1) - tc * tc)).matrix();
      Mat<T> dz(4 * h, k);
      dz.topRows(h) = (dc.array() * gg * gi * (T(1) - gi)).matrix();
      dz.middleRows(h, h) = (dc.array() * L.c_prev.array() * gf * (T(1) - gf)).matrix();
      dz.middleRows(2 * h, h) = (dc.array() * gi * (T(1) - gg * gg)).matrix();
      dz.bottomRows(h) = (dh.array() * tc * go * (T(1) - go)).matrix();
      dc_next[l] = (dc.array() * gf).matrix();
      g.lstm_weight(l).noalias() += dz * L.in.transpose();
      g.lstm_bias(l) += dz.rowwise().sum();
      Mat<T> din = net.lstm_weight(l).transpose() * dz;
      dh_next[l] = din.bottomRows(h);
      dh = din.topRows(in_w);
    }
    Mat<T> da = (dh.array() * (T(1) - cache.a.array() * cache.a.array())).matrix();
    g.fc_weight().noalias() += da * cache.x.transpose();
    g.fc_bias() += da.rowwise().sum();
  }
  return {std::move(g.params()), loss / static_cast<T>(static_cast<double>(k) * static_cast<double>(p_len))};
}

/// Loss only, for finite-difference checks.
template <class T>
T batch_loss(const QNetwork<T>& net, const SequenceBatch<T>& batch) {
  Mat<T> st = batch.h0;
  T loss = T(0);
  for (std::size_t t = 0; t < batch.obs.size(); ++t) {
    const Mat<T> q = forward_batch<T>(net, batch.obs[t], st);
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      const T r = q(batch.action[t][static_cast<std::size_t>(j)], j) - batch.target(static_cast<Eigen::Index>(t), j);
      loss += r * r;
    }
  }
  return loss / static_cast<T>(static_cast<double>(batch.h0.cols()) * static_cast<double>(batch.obs.size()));
}

/// Rescale so the global L2 norm is at most max_norm; returns the norm before.
template <class T>
T clip_global_norm(std::span<T> grad, T max_norm) {
  double sq = 0;
  for (T v : grad) sq += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(sq);
  if (norm > static_cast<double>(max_norm) && norm > 0) {
    const T f = static_cast<T>(static_cast<double>(max_norm) / norm);
    for (T& v : grad) v *= f;
  }
  return static_cast<T>(norm);
}

/// Adaptive-moment optimizer state.
template <class T>
struct Adam {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long steps = 0;
  std::vector<T> m, v;

  void step(std::span<T> params, std::span<const T> grad) {
    if (params.size() != grad.size()) throw std::invalid_argument("adam: shape mismatch");
    for (T gv : grad)
      if (!std::isfinite(static_cast<double>(gv))) throw std::domain_error("adam: non-finite gradient");
    if (m.size() != params.size()) {
      m.assign(params.size(), T(0));
      v.assign(params.size(), T(0));
    }
    ++steps;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
    const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
    const T lr = static_cast<T>(learning_rate / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * grad[i];
      v[i] = b2 * v[i] + (T(1) - b2) * grad[i] * grad[i];
      params[i] -= lr * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
};

// ---------------------------------------------------------------------------
// Checkpoints: "RQN1", version, scalar width, shape, count, payload, crc32.

inline constexpr char kMagic[4] = {'R', 'Q', 'N', '1'};
inline constexpr std::uint32_t kFormatVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class V>
void put(std::string& out, V v) {
  char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out.append(buf, sizeof(V));
}

template <class V>
V get(std::string_view in, std::size_t& at) {
  if (at + sizeof(V) > in.size()) throw FormatError("checkpoint truncated");
  V v;
  std::memcpy(&v, in.data() + at, sizeof(V));
  at += sizeof(V);
  return v;
}

inline std::uint32_t crc(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace detail

template <class T>
std::string serialize(const QNetwork<T>& net) {
  std::string out(kMagic, 4);
  const auto& s = net.shape();
  detail::put<std::uint32_t>(out, kFormatVersion);
  detail::put<std::uint32_t>(out, sizeof(T));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(s.input));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(s.fcl));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(s.lstm.size()));
  for (int w : s.lstm) detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(w));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(s.output));
  detail::put<std::uint64_t>(out, net.size());
  out.append(reinterpret_cast<const char*>(net.params().data()), net.size() * sizeof(T));
  detail::put<std::uint32_t>(out, detail::crc(out));
  return out;
}

/// Reads a checkpoint; the stored scalar width must match T.
template <class T>
QNetwork<T> deserialize(std::string_view bytes) {
  std::size_t at = 0;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
  at = 4;
  const auto version = detail::get<std::uint32_t>(bytes, at);
  if (version != kFormatVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto width = detail::get<std::uint32_t>(bytes, at);
  if (width != sizeof(T)) throw FormatError("checkpoint: scalar width mismatch");
  NetShape s;
  s.input = static_cast<int>(detail::get<std::uint32_t>(bytes, at));
  s.fcl = static_cast<int>(detail::get<std::uint32_t>(bytes, at));
  const auto layers = detail::get<std::uint32_t>(bytes, at);
  if (layers == 0 || layers > 64) throw FormatError("checkpoint: implausible layer count");
  s.lstm.clear();
  for (std::uint32_t l = 0; l < layers; ++l) s.lstm.push_back(static_cast<int>(detail::get<std::uint32_t>(bytes, at)));
  s.output = static_cast<int>(detail::get<std::uint32_t>(bytes, at));
  const auto count = detail::get<std::uint64_t>(bytes, at);
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  QNetwork<T> net(s);
  if (count != net.size()) throw FormatError("checkpoint: parameter count does not match shape");
  if (at + count * sizeof(T) + sizeof(std::uint32_t) > bytes.size()) throw FormatError("checkpoint truncated");
  std::memcpy(net.params().data(), bytes.data() + at, count * sizeof(T));
  at += count * sizeof(T);
  const auto expected = detail::crc(bytes.substr(0, at));
  const auto stored = detail::get<std::uint32_t>(bytes, at);
  if (stored != expected) throw FormatError("checkpoint: checksum mismatch");
  if (at != bytes.size()) throw FormatError("checkpoint: trailing bytes");
  return net;
}

}  // namespace radaralloc::nn
