#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fantasy/io.hpp"
#include "fantasy/rng.hpp"

namespace fantasy {

enum class Activation : std::uint8_t { ReLU = 0, Tanh = 1 };
enum class OutputActivation : std::uint8_t {
  Linear = 0,
  Softmax = 1,
  ReLU = 2,
  Tanh = 3
};

// Plain MLP with explicit parameters. W[k] is dims[k+1] x dims[k]; batched
// passes keep samples in rows. `version` stamps each parameter mutation so a
// backward pass can reject a cache from an older forward.
struct DenseNet {
  std::vector<int> dims;
  Activation hidden_act = Activation::ReLU;
  OutputActivation out_act = OutputActivation::Linear;
  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;
  std::uint64_t version = 1;

  int n_layers() const { return (int)W.size(); }
  int in_dim() const { return dims.front(); }
  int out_dim() const { return dims.back(); }
};

inline long param_count(const DenseNet& net) {
  long n = 0;
  for (std::size_t k = 0; k + 1 < net.dims.size(); ++k)
    n += (long)net.dims[k + 1] * (net.dims[k] + 1);
  return n;
}

// He-uniform fan-in limits for layers feeding a ReLU, Xavier-uniform
// otherwise; biases start at zero.
inline DenseNet make_net(std::vector<int> dims, Activation hidden,
                         OutputActivation out, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("net needs >= 2 dims");
  for (int d : dims)
    if (d < 1) throw std::invalid_argument("net dims must be positive");
  DenseNet net;
  net.dims = std::move(dims);
  net.hidden_act = hidden;
  net.out_act = out;
  const int L = (int)net.dims.size() - 1;
  for (int k = 0; k < L; ++k) {
    int fan_in = net.dims[(std::size_t)k];
    int fan_out = net.dims[(std::size_t)k + 1];
    bool relu_next = k + 1 < L ? hidden == Activation::ReLU
                               : out == OutputActivation::ReLU;
    double limit = relu_next ? std::sqrt(6.0 / fan_in)
                             : std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-limit, limit);
    net.W.push_back(std::move(w));
    net.b.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return net;
}

inline void copy_params(DenseNet& dst, const DenseNet& src) {
  if (dst.dims != src.dims)
    throw std::invalid_argument("copy_params: shape mismatch");
  dst.W = src.W;
  dst.b = src.b;
  ++dst.version;
}

// ---- forward / backward ----

struct ForwardCache {
  std::uint64_t net_version = 0;
  Eigen::MatrixXd input;               // N x dims[0]
  std::vector<Eigen::MatrixXd> pre;    // pre-activation per layer
  std::vector<Eigen::MatrixXd> post;   // post-activation per layer
};

inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& z) {
  Eigen::VectorXd rowmax = z.rowwise().maxCoeff();
  Eigen::MatrixXd p = (z.colwise() - rowmax).array().exp();
  Eigen::VectorXd rowsum = p.rowwise().sum();
  p.array().colwise() /= rowsum.array();
  return p;
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  return softmax_rows(z.transpose()).transpose();
}

// log p over a logits row: z - logsumexp(z)
inline Eigen::VectorXd log_softmax(const Eigen::VectorXd& z) {
  double mx = z.maxCoeff();
  double lse = mx + std::log((z.array() - mx).exp().sum());
  return z.array() - lse;
}

inline Eigen::MatrixXd apply_hidden(Activation act, const Eigen::MatrixXd& z) {
  if (act == Activation::ReLU) return z.cwiseMax(0.0);
  return z.array().tanh();
}

inline Eigen::MatrixXd apply_output(OutputActivation act, const Eigen::MatrixXd& z) {
  switch (act) {
    case OutputActivation::Linear: return z;
    case OutputActivation::Softmax: return softmax_rows(z);
    case OutputActivation::ReLU: return z.cwiseMax(0.0);
    case OutputActivation::Tanh: return z.array().tanh();
  }
  throw std::logic_error("unknown output activation");
}

// rows = samples; returns post-activation output, caching intermediates when
// a cache is supplied
inline Eigen::MatrixXd forward(const DenseNet& net, const Eigen::MatrixXd& x,
                               ForwardCache* cache = nullptr) {
  if ((int)x.cols() != net.in_dim())
    throw std::invalid_argument("forward: input has " + std::to_string(x.cols()) +
                                " columns, net expects " +
                                std::to_string(net.in_dim()));
  if (cache) {
    cache->net_version = net.version;
    cache->input = x;
    cache->pre.clear();
    cache->post.clear();
  }
  const int L = net.n_layers();
  Eigen::MatrixXd a = x;
  for (int k = 0; k < L; ++k) {
    Eigen::MatrixXd z = a * net.W[(std::size_t)k].transpose();
    z.rowwise() += net.b[(std::size_t)k].transpose();
    a = k + 1 < L ? apply_hidden(net.hidden_act, z)
                  : apply_output(net.out_act, z);
    if (cache) {
      cache->pre.push_back(std::move(z));
      cache->post.push_back(a);
    }
  }
  return a;
}

inline Eigen::VectorXd forward_one(const DenseNet& net, const Eigen::VectorXd& x,
                                   ForwardCache* cache = nullptr) {
  return forward(net, Eigen::MatrixXd(x.transpose()), cache).row(0);
}

struct Gradients {
  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;
};

inline double grad_sqnorm(const Gradients& g) {
  double s = 0.0;
  for (const auto& w : g.W) s += w.squaredNorm();
  for (const auto& v : g.b) s += v.squaredNorm();
  return s;
}

inline void scale_grads(Gradients& g, double s) {
  for (auto& w : g.W) w *= s;
  for (auto& v : g.b) v *= s;
}

// scales to max_norm when the global L2 norm exceeds it; returns the norm
inline double clip_grad_norm(std::vector<Gradients*> grads, double max_norm) {
  double sq = 0.0;
  for (auto* g : grads) sq += grad_sqnorm(*g);
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (auto* g : grads) scale_grads(*g, s);
  }
  return norm;
}

inline double clip_grad_norm(Gradients& g, double max_norm) {
  return clip_grad_norm(std::vector<Gradients*>{&g}, max_norm);
}

namespace detail {

inline Eigen::MatrixXd hidden_act_grad(Activation act, const Eigen::MatrixXd& pre,
                                       const Eigen::MatrixXd& post,
                                       const Eigen::MatrixXd& dpost) {
  if (act == Activation::ReLU)
    return dpost.array() * (pre.array() > 0.0).cast<double>();
  return dpost.array() * (1.0 - post.array().square());
}

inline Gradients backprop(const DenseNet& net, const ForwardCache& cache,
                          Eigen::MatrixXd dpre,  // grad at last pre-activation
                          Eigen::MatrixXd* input_grad) {
  const int L = net.n_layers();
  Gradients g;
  g.W.resize((std::size_t)L);
  g.b.resize((std::size_t)L);
  for (int k = L - 1; k >= 0; --k) {
    const Eigen::MatrixXd& a_prev =
        k == 0 ? cache.input : cache.post[(std::size_t)k - 1];
    g.W[(std::size_t)k].noalias() = dpre.transpose() * a_prev;
    g.b[(std::size_t)k] = dpre.colwise().sum();
    if (k == 0) {
      if (input_grad) input_grad->noalias() = dpre * net.W[0];
      break;
    }
    Eigen::MatrixXd da = dpre * net.W[(std::size_t)k];
    dpre = hidden_act_grad(net.hidden_act, cache.pre[(std::size_t)k - 1],
                           cache.post[(std::size_t)k - 1], da);
  }
  return g;
}

}  // namespace detail

inline void check_cache(const DenseNet& net, const ForwardCache& cache) {
  if (cache.net_version != net.version)
    throw std::runtime_error("stale forward cache: network parameters changed");
  if ((int)cache.pre.size() != net.n_layers())
    throw std::runtime_error("forward cache does not match this network");
}

// d_out is dL/d(output after the output activation)
inline Gradients backward(const DenseNet& net, const ForwardCache& cache,
                          const Eigen::MatrixXd& d_out,
                          Eigen::MatrixXd* input_grad = nullptr) {
  check_cache(net, cache);
  const Eigen::MatrixXd& pre = cache.pre.back();
  const Eigen::MatrixXd& post = cache.post.back();
  Eigen::MatrixXd dpre;
  switch (net.out_act) {
    case OutputActivation::Linear:
      dpre = d_out;
      break;
    case OutputActivation::ReLU:
      dpre = d_out.array() * (pre.array() > 0.0).cast<double>();
      break;
    case OutputActivation::Tanh:
      dpre = d_out.array() * (1.0 - post.array().square());
      break;
    case OutputActivation::Softmax: {
      // dz = p .* (g - <g,p>) per row
      Eigen::VectorXd dot = (d_out.array() * post.array()).rowwise().sum();
      dpre = post.array() * (d_out.colwise() - dot).array();
      break;
    }
  }
  return detail::backprop(net, cache, std::move(dpre), input_grad);
}

// d_logits is dL/d(last pre-activation); bypasses the output activation,
// which is how the agents differentiate softmax policies without forming the
// Jacobian
inline Gradients backward_logits(const DenseNet& net, const ForwardCache& cache,
                                 const Eigen::MatrixXd& d_logits,
                                 Eigen::MatrixXd* input_grad = nullptr) {
  check_cache(net, cache);
  return detail::backprop(net, cache, d_logits, input_grad);
}

// ---- Adam ----

struct AdamState {
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;
  long step_count = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline AdamState make_adam(const DenseNet& net, double learning_rate) {
  AdamState st;
  st.learning_rate = learning_rate;
  for (const auto& w : net.W) {
    st.mW.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    st.vW.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  }
  for (const auto& v : net.b) {
    st.mb.push_back(Eigen::VectorXd::Zero(v.size()));
    st.vb.push_back(Eigen::VectorXd::Zero(v.size()));
  }
  return st;
}

inline void adam_step(DenseNet& net, const Gradients& g, AdamState& st) {
  const int L = net.n_layers();
  if ((int)g.W.size() != L || (int)st.mW.size() != L)
    throw std::invalid_argument("adam_step: shape mismatch");
  for (int k = 0; k < L; ++k)
    if (!g.W[(std::size_t)k].allFinite() || !g.b[(std::size_t)k].allFinite())
      throw std::runtime_error("non-finite gradient in layer " + std::to_string(k));
  ++st.step_count;
  const double bc1 = 1.0 - std::pow(st.beta1, (double)st.step_count);
  const double bc2 = 1.0 - std::pow(st.beta2, (double)st.step_count);
  for (int k = 0; k < L; ++k) {
    auto& mW = st.mW[(std::size_t)k];
    auto& vW = st.vW[(std::size_t)k];
    const auto& gW = g.W[(std::size_t)k];
    mW = st.beta1 * mW + (1.0 - st.beta1) * gW;
    vW.array() = st.beta2 * vW.array() + (1.0 - st.beta2) * gW.array().square();
    net.W[(std::size_t)k].array() -=
        st.learning_rate * (mW.array() / bc1) /
        ((vW.array() / bc2).sqrt() + st.epsilon);
    auto& mb = st.mb[(std::size_t)k];
    auto& vb = st.vb[(std::size_t)k];
    const auto& gb = g.b[(std::size_t)k];
    mb = st.beta1 * mb + (1.0 - st.beta1) * gb;
    vb.array() = st.beta2 * vb.array() + (1.0 - st.beta2) * gb.array().square();
    net.b[(std::size_t)k].array() -=
        st.learning_rate * (mb.array() / bc1) /
        ((vb.array() / bc2).sqrt() + st.epsilon);
  }
  ++net.version;
}

// ---- gradient checking ----

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = true;
  int n_checked = 0;
};

// Central finite differences on randomly probed parameters against the
// analytic backward pass, for a scalar loss of the net output.
inline GradCheckReport gradient_check(
    DenseNet& net, const Eigen::VectorXd& input,
    const std::function<double(const Eigen::VectorXd&)>& loss,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& loss_grad,
    double tolerance, int n_probes, Rng& rng, double h = 1e-5) {
  ForwardCache cache;
  Eigen::VectorXd out = forward_one(net, input, &cache);
  Eigen::MatrixXd d_out = loss_grad(out).transpose();
  Gradients g = backward(net, cache, d_out);

  const int L = net.n_layers();
  std::vector<long> offsets;  // parameter index space: all W then all b per layer
  long total = 0;
  for (int k = 0; k < L; ++k) {
    offsets.push_back(total);
    total += net.W[(std::size_t)k].size() + net.b[(std::size_t)k].size();
  }

  GradCheckReport rep;
  for (int probe = 0; probe < n_probes; ++probe) {
    long idx = (long)rng.below((std::uint64_t)total);
    int layer = L - 1;
    while (offsets[(std::size_t)layer] > idx) --layer;
    long local = idx - offsets[(std::size_t)layer];
    long wsize = net.W[(std::size_t)layer].size();
    double* param;
    double analytic;
    if (local < wsize) {
      long r = local % net.W[(std::size_t)layer].rows();
      long c = local / net.W[(std::size_t)layer].rows();
      param = &net.W[(std::size_t)layer](r, c);
      analytic = g.W[(std::size_t)layer](r, c);
    } else {
      long r = local - wsize;
      param = &net.b[(std::size_t)layer]((Eigen::Index)r);
      analytic = g.b[(std::size_t)layer]((Eigen::Index)r);
    }
    double saved = *param;
    *param = saved + h;
    double lp = loss(forward_one(net, input));
    *param = saved - h;
    double lm = loss(forward_one(net, input));
    *param = saved;
    double numeric = (lp - lm) / (2.0 * h);
    double denom = std::max(std::abs(analytic), std::abs(numeric));
    double rel = denom < 1e-8 ? 0.0 : std::abs(analytic - numeric) / denom;
    rep.max_rel_err = std::max(rep.max_rel_err, rel);
    ++rep.n_checked;
  }
  rep.pass = rep.max_rel_err <= tolerance;
  return rep;
}

// ---- checkpointing ----

inline void net_to_bin(BinWriter& w, const DenseNet& net, const AdamState* adam) {
  w.str("FNET");
  w.num<std::uint32_t>(1);
  w.num<std::uint8_t>((std::uint8_t)net.hidden_act);
  w.num<std::uint8_t>((std::uint8_t)net.out_act);
  w.num<std::uint8_t>(adam ? 1 : 0);
  w.num<std::uint32_t>((std::uint32_t)net.dims.size());
  for (int d : net.dims) w.num<std::uint32_t>((std::uint32_t)d);
  auto write_mat = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) w.num<double>(m(r, c));
  };
  auto write_vec = [&](const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) w.num<double>(v(i));
  };
  for (int k = 0; k < net.n_layers(); ++k) {
    write_mat(net.W[(std::size_t)k]);
    write_vec(net.b[(std::size_t)k]);
  }
  if (adam) {
    w.num<double>(adam->learning_rate);
    w.num<double>(adam->beta1);
    w.num<double>(adam->beta2);
    w.num<double>(adam->epsilon);
    w.num<std::int64_t>(adam->step_count);
    for (int k = 0; k < net.n_layers(); ++k) {
      write_mat(adam->mW[(std::size_t)k]);
      write_mat(adam->vW[(std::size_t)k]);
      write_vec(adam->mb[(std::size_t)k]);
      write_vec(adam->vb[(std::size_t)k]);
    }
  }
}

struct LoadedNet {
  DenseNet net;
  std::optional<AdamState> adam;
};

inline LoadedNet net_from_bin(BinReader& r) {
  r.expect("FNET", "network");
  std::uint32_t ver = r.num<std::uint32_t>();
  if (ver != 1) throw std::runtime_error("unsupported network format version");
  LoadedNet out;
  out.net.hidden_act = (Activation)r.num<std::uint8_t>();
  out.net.out_act = (OutputActivation)r.num<std::uint8_t>();
  bool has_adam = r.num<std::uint8_t>() != 0;
  std::uint32_t nd = r.num<std::uint32_t>();
  if (nd < 2 || nd > 64) throw std::runtime_error("corrupt network dims");
  for (std::uint32_t i = 0; i < nd; ++i) {
    std::uint32_t d = r.num<std::uint32_t>();
    if (d < 1 || d > 1000000) throw std::runtime_error("corrupt network dims");
    out.net.dims.push_back((int)d);
  }
  auto read_mat = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.num<double>();
    return m;
  };
  auto read_vec = [&](Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = r.num<double>();
    return v;
  };
  for (std::size_t k = 0; k + 1 < out.net.dims.size(); ++k) {
    out.net.W.push_back(read_mat(out.net.dims[k + 1], out.net.dims[k]));
    out.net.b.push_back(read_vec(out.net.dims[k + 1]));
  }
  if (has_adam) {
    AdamState st;
    st.learning_rate = r.num<double>();
    st.beta1 = r.num<double>();
    st.beta2 = r.num<double>();
    st.epsilon = r.num<double>();
    st.step_count = (long)r.num<std::int64_t>();
    for (std::size_t k = 0; k + 1 < out.net.dims.size(); ++k) {
      Eigen::Index rows = out.net.dims[k + 1], cols = out.net.dims[k];
      st.mW.push_back(read_mat(rows, cols));
      st.vW.push_back(read_mat(rows, cols));
      st.mb.push_back(read_vec(rows));
      st.vb.push_back(read_vec(rows));
    }
    out.adam = std::move(st);
  }
  return out;
}

inline void save_net(const DenseNet& net, const AdamState* adam,
                     const std::string& path) {
  BinWriter w;
  net_to_bin(w, net, adam);
  write_file(path, w.buf);
}

inline LoadedNet load_net(const std::string& path) {
  std::string data = read_file(path);
  BinReader r(data);
  return net_from_bin(r);
}

}  // namespace fantasy
