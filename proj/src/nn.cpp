#include "kcn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace kcn::nn {

Tensor::Tensor(std::vector<std::size_t> dims) : shape(std::move(dims)) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  data.assign(n, 0.0);
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

void Tensor::fill_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& x : data) x = dist(rng);
}

double tanh_fwd(double x) { return std::tanh(x); }
double tanh_bwd(double y) { return 1.0 - y * y; }
double relu_fwd(double x) { return x > 0.0 ? x : 0.0; }
double relu_bwd(double x) { return x > 0.0 ? 1.0 : 0.0; }
double sigmoid_fwd(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double sigmoid_bwd(double y) { return y * (1.0 - y); }

std::size_t conv_pad_left(std::size_t h) { return h / 2; }  // == ceil((h-1)/2)

std::vector<double> conv1d(const Tensor& x, const Tensor& w, double bias) {
  if (x.shape.size() != 2 || w.shape.size() != 2 || x.dim(0) != w.dim(0))
    throw std::invalid_argument("conv1d: X must be d x n and W d x h with matching d");
  const std::size_t d = x.dim(0), n = x.dim(1), h = w.dim(1);
  if (h < 1 || n < 1) throw std::invalid_argument("conv1d: empty filter or sequence");
  if (h > 2 * n + 1) throw std::invalid_argument("conv1d: filter width exceeds 2n+1");
  const std::size_t pad = conv_pad_left(h);
  std::vector<double> out(n, bias);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(i + j) - static_cast<std::ptrdiff_t>(pad);
      if (q < 0 || q >= static_cast<std::ptrdiff_t>(n)) continue;
      for (std::size_t a = 0; a < d; ++a) acc += x.at(a, static_cast<std::size_t>(q)) * w.at(a, j);
    }
    out[i] += acc;
  }
  return out;
}

void conv1d_backward(const Tensor& x, const Tensor& w, std::span<const double> d_out,
                     Tensor* dw, double* dbias, Tensor* dx) {
  const std::size_t d = x.dim(0), n = x.dim(1), h = w.dim(1);
  const std::size_t pad = conv_pad_left(h);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = d_out[i];
    if (g == 0.0) continue;
    if (dbias) *dbias += g;
    for (std::size_t j = 0; j < h; ++j) {
      const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(i + j) - static_cast<std::ptrdiff_t>(pad);
      if (q < 0 || q >= static_cast<std::ptrdiff_t>(n)) continue;
      for (std::size_t a = 0; a < d; ++a) {
        if (dw) dw->at(a, j) += g * x.at(a, static_cast<std::size_t>(q));
        if (dx) dx->at(a, static_cast<std::size_t>(q)) += g * w.at(a, j);
      }
    }
  }
}

std::vector<double> linear(const Tensor& w, std::span<const double> x,
                           std::span<const double> bias) {
  const std::size_t p = w.dim(0), q = w.dim(1);
  if (x.size() != q || bias.size() != p)
    throw std::invalid_argument("linear: shape mismatch");
  std::vector<double> out(p);
  for (std::size_t i = 0; i < p; ++i) {
    double acc = bias[i];
    for (std::size_t j = 0; j < q; ++j) acc += w.at(i, j) * x[j];
    out[i] = acc;
  }
  return out;
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

std::vector<double> softmax_backward(std::span<const double> probs,
                                     std::span<const double> d_probs) {
  double dot = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * d_probs[i];
  std::vector<double> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] * (d_probs[i] - dot);
  return out;
}

double cross_entropy(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) throw std::out_of_range("cross_entropy: label out of range");
  return -std::log(probs[label]);
}

double grad_check(const std::function<double()>& f, std::span<Param* const> params,
                  double eps) {
  double max_rel = 0.0;
  for (Param* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.at(i);
      p->value.at(i) = saved + eps;
      const double f_plus = f();
      p->value.at(i) = saved - eps;
      const double f_minus = f();
      p->value.at(i) = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
        throw std::runtime_error("grad_check: non-finite objective at " + p->name);
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double analytic = p->grad.at(i);
      const double rel =
          std::abs(analytic - numeric) / std::max(1e-12, std::abs(analytic) + std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

AdamState AdamState::init(std::span<Param* const> params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const Param* p : params) {
    st.m.emplace_back(p->value.shape);
    st.v.emplace_back(p->value.shape);
  }
  return st;
}

void adam_step(std::span<Param* const> params, AdamState& state, double lr) {
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: state not initialized for this param list");
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    Tensor& m = state.m[pi];
    Tensor& v = state.v[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.at(i);
      m.at(i) = state.beta1 * m.at(i) + (1.0 - state.beta1) * g;
      v.at(i) = state.beta2 * v.at(i) + (1.0 - state.beta2) * g * g;
      const double m_hat = m.at(i) / bc1;
      const double v_hat = v.at(i) / bc2;
      p.value.at(i) -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    p.zero_grad();
  }
}

}  // namespace kcn::nn
