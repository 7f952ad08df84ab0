#ifndef KCN_NN_HPP
#define KCN_NN_HPP

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

// Minimal dense numeric kernel: tensors, the forward/backward ops the model
// needs, a finite-difference gradient checker and the Adam optimizer.
// Everything is double precision and single-threaded.

namespace kcn::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;  // row-major

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims);

  static Tensor zeros(std::vector<std::size_t> dims) { return Tensor(std::move(dims)); }

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  void fill(double v);
  void fill_uniform(std::mt19937_64& rng, double lo, double hi);
};

// A named trainable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, std::vector<std::size_t> dims)
      : name(std::move(n)), value(dims), grad(std::move(dims)) {}

  void zero_grad() { grad.fill(0.0); }
};

// ---- elementwise activations -------------------------------------------------

double tanh_fwd(double x);
double tanh_bwd(double y);  // derivative given forward output y
double relu_fwd(double x);
double relu_bwd(double x);  // derivative given pre-activation x; 0 at x == 0
double sigmoid_fwd(double x);
double sigmoid_bwd(double y);  // derivative given forward output y

// ---- 1-D convolution with length-preserving zero padding ---------------------

// Output position i covers input columns [i - pad_left(h), i - pad_left(h) + h - 1]
// with zeros outside [0, n). Even widths pad one more column on the left.
std::size_t conv_pad_left(std::size_t h);

// X is d x n, w is d x h; result has length n. Throws if h > 2n + 1.
std::vector<double> conv1d(const Tensor& x, const Tensor& w, double bias);

// Accumulates gradients of sum_i d_out[i] * conv1d(x, w, b)[i] into dw/db/dx.
// Any of dw, dbias, dx may be null to skip that accumulation.
void conv1d_backward(const Tensor& x, const Tensor& w, std::span<const double> d_out,
                     Tensor* dw, double* dbias, Tensor* dx);

// ---- dense layer, softmax, cross entropy -------------------------------------

// w is p x q, x length q, bias length p; returns length p.
std::vector<double> linear(const Tensor& w, std::span<const double> x,
                           std::span<const double> bias);

// Numerically stable softmax (max subtraction).
std::vector<double> softmax(std::span<const double> v);

// Given dL/d(softmax output) and the output itself, returns dL/d(softmax input).
std::vector<double> softmax_backward(std::span<const double> probs,
                                     std::span<const double> d_probs);

// -log(probs[label]); throws if label out of range.
double cross_entropy(std::span<const double> probs, std::size_t label);

// ---- gradient checking --------------------------------------------------------

// Compares the analytic gradients already stored in each param's grad tensor
// against central finite differences of f. Returns the max relative error
// |a - n| / max(1e-12, |a| + |n|) over all coordinates. Throws on non-finite f.
double grad_check(const std::function<double()>& f, std::span<Param* const> params,
                  double eps = 1e-6);

// ---- Adam ---------------------------------------------------------------------

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  std::vector<Tensor> m;  // aligned with the param list
  std::vector<Tensor> v;

  static AdamState init(std::span<Param* const> params);
};

// Bias-corrected Adam update; zeroes every grad afterwards.
void adam_step(std::span<Param* const> params, AdamState& state, double lr);

}  // namespace kcn::nn

#endif
