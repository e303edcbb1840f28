#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ciss/rng.hpp"
#include "ciss/tensor.hpp"

namespace ciss {

struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;  // null for buffers
  bool trainable = true;   // false for buffers (running statistics)
};

// A primitive computational layer with an explicit backward pass. Calling
// forward with train=true caches what backward needs; train=false leaves the
// layer untouched so frozen-snapshot inference is side-effect free.
class Layer {
public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool train) = 0;
  // Consumes the cache of the previous train-mode forward; accumulates
  // parameter gradients and returns the gradient w.r.t. the layer input.
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual void collect(const std::string& prefix, std::vector<ParamRef>& out) = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual std::vector<int> output_shape(const std::vector<int>& in_chw) const = 0;
};

class Conv2d final : public Layer {
public:
  Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad, bool bias, Rng& rng);

  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }
  std::vector<int> output_shape(const std::vector<int>& in_chw) const override;

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }

  Tensor weight; // {out_ch, in_ch * k * k}
  Tensor bias;   // {out_ch} or empty
  Tensor grad_weight;
  Tensor grad_bias;

private:
  int in_ch_, out_ch_, ksize_, stride_, pad_;
  bool has_bias_;
  Tensor cached_input_;
};

class BatchNorm2d final : public Layer {
public:
  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5);

  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm2d>(*this); }
  std::vector<int> output_shape(const std::vector<int>& in_chw) const override { return in_chw; }

  Tensor gamma, beta, grad_gamma, grad_beta;
  Tensor running_mean, running_var; // buffers, updated only in train mode

private:
  int channels_;
  double momentum_, eps_;
  bool cached_train_mode_ = false;
  Tensor cached_input_;
  Tensor cached_mean_, cached_inv_std_; // batch statistics of the cached pass
};

class ReLU final : public Layer {
public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect(const std::string&, std::vector<ParamRef>&) override {}
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }
  std::vector<int> output_shape(const std::vector<int>& in_chw) const override { return in_chw; }

private:
  Tensor cached_output_;
};

// Nearest-neighbour 2x upsampling.
class Upsample2x final : public Layer {
public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect(const std::string&, std::vector<ParamRef>&) override {}
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Upsample2x>(*this); }
  std::vector<int> output_shape(const std::vector<int>& in_chw) const override;

private:
  std::vector<int> cached_in_shape_;
};

enum class HeadKind { standard, weight_normalized };

std::string to_string(HeadKind k);
HeadKind head_kind_from_string(const std::string& s);

// 1x1 classifier head. The weight-normalized variant keeps per-class
// direction v and scalar gain g, with effective weight g * v / |v|; the
// per-class bias is kept in both variants so the bias probe applies
// uniformly.
class ClassifierHead final : public Layer {
public:
  ClassifierHead(int in_ch, int num_classes, HeadKind kind, double init_scale, Rng& rng);

  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ClassifierHead>(*this); }
  std::vector<int> output_shape(const std::vector<int>& in_chw) const override;

  // Appends output units; existing parameters and old-class logits are
  // unchanged. New weights are zero-mean with stddev init_scale, biases 0.
  void extend(int extra_classes, Rng& rng);

  // Effective {num_classes, in_ch} weight matrix (materialized for the
  // weight-normalized variant).
  Tensor effective_weight() const;

  int num_classes() const { return num_classes_; }
  HeadKind kind() const { return kind_; }
  double init_scale() const { return init_scale_; }
  const Tensor& bias_values() const { return bias; }

  Tensor weight;  // standard: {C, D}; weight-normalized: direction v {C, D}
  Tensor gain;    // weight-normalized only: {C}
  Tensor bias;    // {C}
  Tensor grad_weight, grad_gain, grad_bias;

private:
  int in_ch_, num_classes_;
  HeadKind kind_;
  double init_scale_;
  Tensor cached_input_;
};

} // namespace ciss
