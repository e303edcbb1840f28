#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ciss/layers.hpp"

namespace ciss {

// One tap point of the model: a short layer chain (conv+bn+relu, upsample
// variant, or the classifier head) executed as a unit. Stitch cuts happen at
// block boundaries.
struct ModelBlock {
  std::string name;
  std::vector<std::unique_ptr<Layer>> layers;
  bool frozen = false;
  std::vector<int> input_chw;  // expected activation shape entering the block
  std::vector<int> output_chw;

  ModelBlock() = default;
  ModelBlock(const ModelBlock& o);
  ModelBlock& operator=(const ModelBlock& o);
  ModelBlock(ModelBlock&&) = default;
  ModelBlock& operator=(ModelBlock&&) = default;

  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy);
};

struct MinisegConfig {
  int input_height = 64;
  int input_width = 64;
  int num_classes = 2;
  HeadKind head_kind = HeadKind::standard;
  double head_init_scale = 0.01;
  // channel widths at the three resolution levels
  int width0 = 16;
  int width1 = 24;
  int width2 = 32;
};

// Compact encoder-decoder segmentation network presented as an ordered list
// of indexed blocks. Eight encoder blocks (three stride-2 stages) and four
// decoder blocks (three upsampling stages plus the 1x1 classifier head).
class LayerTapModel {
public:
  LayerTapModel() = default;

  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  int encoder_end() const { return encoder_end_; } // blocks [0, encoder_end) are the encoder
  int num_classes() const;
  HeadKind head_kind() const;
  const std::string& architecture_id() const { return arch_id_; }
  const MinisegConfig& config() const { return config_; }

  // forward == forward_suffix(forward_prefix(x, n), n) for every valid n;
  // all three walk the same block sequence so the identity is bit-exact.
  Tensor forward(const Tensor& x, bool train = false);
  Tensor forward_prefix(const Tensor& x, int n, bool train = false);
  Tensor forward_suffix(const Tensor& a, int n, bool train = false);

  // Backpropagates dlogits, accumulating parameter gradients. Gradient flow
  // stops once every remaining block below is frozen.
  void backward(const Tensor& dlogits);

  std::vector<ParamRef> parameters();
  void zero_grad();

  // Appends head units for new classes; existing parameters and old-class
  // logits are untouched.
  void extend_classifier(int extra_classes, Rng& rng);

  // Excludes encoder parameters from optimization and pins encoder
  // normalization layers to their stored statistics.
  void freeze_encoder();
  bool block_frozen(int i) const { return blocks_[static_cast<size_t>(i)].frozen; }

  LayerTapModel clone() const;

  ModelBlock& block(int i) { return blocks_[static_cast<size_t>(i)]; }
  const ModelBlock& block(int i) const { return blocks_[static_cast<size_t>(i)]; }
  ClassifierHead& head();
  const ClassifierHead& head() const;

  friend LayerTapModel make_miniseg(const MinisegConfig& cfg, Rng& rng);

  // Assembles a model from explicit blocks (small nets for oracles and
  // probes). Per-block activation shapes are derived from input_chw.
  static LayerTapModel from_blocks(std::vector<ModelBlock> blocks, int encoder_end,
                                   std::vector<int> input_chw, std::string arch_id);

private:
  std::vector<ModelBlock> blocks_;
  int encoder_end_ = 0;
  std::string arch_id_;
  MinisegConfig config_;
};

LayerTapModel make_miniseg(const MinisegConfig& cfg, Rng& rng);

// Argmax over the channel axis; ties resolve to the lowest channel index.
IntTensor argmax_channels(const Tensor& logits);

} // namespace ciss
