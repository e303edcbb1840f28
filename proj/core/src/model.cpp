#include "ciss/model.hpp"

#include <sstream>

#include "ciss/error.hpp"

namespace ciss {

ModelBlock::ModelBlock(const ModelBlock& o)
    : name(o.name), frozen(o.frozen), input_chw(o.input_chw), output_chw(o.output_chw) {
  layers.reserve(o.layers.size());
  for (const auto& l : o.layers) layers.push_back(l->clone());
}

ModelBlock& ModelBlock::operator=(const ModelBlock& o) {
  if (this == &o) return *this;
  name = o.name;
  frozen = o.frozen;
  input_chw = o.input_chw;
  output_chw = o.output_chw;
  layers.clear();
  layers.reserve(o.layers.size());
  for (const auto& l : o.layers) layers.push_back(l->clone());
  return *this;
}

Tensor ModelBlock::forward(const Tensor& x, bool train) {
  Tensor a = x;
  const bool effective_train = train && !frozen;
  for (auto& layer : layers) a = layer->forward(a, effective_train);
  return a;
}

Tensor ModelBlock::backward(const Tensor& dy) {
  Tensor d = dy;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) d = (*it)->backward(d);
  return d;
}

int LayerTapModel::num_classes() const { return head().num_classes(); }
HeadKind LayerTapModel::head_kind() const { return head().kind(); }

ClassifierHead& LayerTapModel::head() {
  auto* h = dynamic_cast<ClassifierHead*>(blocks_.back().layers.back().get());
  CISS_CHECK(h != nullptr, config, "model has no classifier head");
  return *h;
}

const ClassifierHead& LayerTapModel::head() const {
  auto* h = dynamic_cast<const ClassifierHead*>(blocks_.back().layers.back().get());
  CISS_CHECK(h != nullptr, config, "model has no classifier head");
  return *h;
}

Tensor LayerTapModel::forward(const Tensor& x, bool train) {
  return forward_suffix(forward_prefix(x, num_blocks() - 1, train), num_blocks() - 1, train);
}

Tensor LayerTapModel::forward_prefix(const Tensor& x, int n, bool train) {
  CISS_CHECK(n >= 0 && n < num_blocks(), config,
             "prefix index " + std::to_string(n) + " out of range");
  CISS_CHECK(x.ndim() == 4, shape, "model input must be NCHW, got " + x.shape_str());
  Tensor a = x;
  for (int i = 0; i <= n; ++i) a = blocks_[static_cast<size_t>(i)].forward(a, train);
  return a;
}

Tensor LayerTapModel::forward_suffix(const Tensor& a, int n, bool train) {
  CISS_CHECK(n >= 0 && n < num_blocks(), config,
             "suffix index " + std::to_string(n) + " out of range");
  if (n + 1 < num_blocks()) {
    const std::vector<int>& want = blocks_[static_cast<size_t>(n + 1)].input_chw;
    const bool ok = a.ndim() == 4 && a.dim(1) == want[0] && a.dim(2) == want[1] &&
                    a.dim(3) == want[2];
    if (!ok) {
      std::ostringstream msg;
      msg << "stitch-incompatible activation at cut " << n << ": got " << a.shape_str()
          << ", block " << n + 1 << " expects (B," << want[0] << "," << want[1] << ","
          << want[2] << ")";
      raise(ErrorKind::stitch_incompatible, msg.str());
    }
  }
  Tensor out = a;
  for (int i = n + 1; i < num_blocks(); ++i)
    out = blocks_[static_cast<size_t>(i)].forward(out, train);
  return out;
}

void LayerTapModel::backward(const Tensor& dlogits) {
  Tensor d = dlogits;
  for (int i = num_blocks() - 1; i >= 0; --i) {
    bool any_below = false;
    for (int j = 0; j <= i; ++j) any_below |= !blocks_[static_cast<size_t>(j)].frozen;
    if (!any_below) break;
    d = blocks_[static_cast<size_t>(i)].backward(d);
  }
}

std::vector<ParamRef> LayerTapModel::parameters() {
  std::vector<ParamRef> out;
  char buf[16];
  for (size_t i = 0; i < blocks_.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "block%02zu", i);
    std::vector<ParamRef> refs;
    for (auto& layer : blocks_[i].layers) layer->collect(buf, refs);
    for (auto& r : refs) {
      if (blocks_[i].frozen) r.trainable = false;
      out.push_back(r);
    }
  }
  return out;
}

void LayerTapModel::zero_grad() {
  for (ParamRef& p : parameters())
    if (p.grad) p.grad->zero();
}

void LayerTapModel::extend_classifier(int extra_classes, Rng& rng) {
  head().extend(extra_classes, rng);
  blocks_.back().output_chw[0] = head().num_classes();
}

void LayerTapModel::freeze_encoder() {
  for (int i = 0; i < encoder_end_; ++i) blocks_[static_cast<size_t>(i)].frozen = true;
}

LayerTapModel LayerTapModel::clone() const {
  LayerTapModel m;
  m.blocks_ = blocks_;
  m.encoder_end_ = encoder_end_;
  m.arch_id_ = arch_id_;
  m.config_ = config_;
  return m;
}

LayerTapModel LayerTapModel::from_blocks(std::vector<ModelBlock> blocks, int encoder_end,
                                         std::vector<int> input_chw, std::string arch_id) {
  CISS_CHECK(!blocks.empty(), config, "from_blocks: no blocks");
  CISS_CHECK(encoder_end >= 0 && encoder_end <= static_cast<int>(blocks.size()), config,
             "from_blocks: encoder_end out of range");
  LayerTapModel m;
  m.blocks_ = std::move(blocks);
  m.encoder_end_ = encoder_end;
  m.arch_id_ = std::move(arch_id);
  std::vector<int> chw = std::move(input_chw);
  for (ModelBlock& b : m.blocks_) {
    b.input_chw = chw;
    for (auto& layer : b.layers) chw = layer->output_shape(chw);
    b.output_chw = chw;
  }
  return m;
}

namespace {

ModelBlock conv_block(const std::string& name, int in_ch, int out_ch, int stride, Rng& rng) {
  ModelBlock b;
  b.name = name;
  b.layers.push_back(std::make_unique<Conv2d>(in_ch, out_ch, 3, stride, 1, false, rng));
  b.layers.push_back(std::make_unique<BatchNorm2d>(out_ch));
  b.layers.push_back(std::make_unique<ReLU>());
  return b;
}

ModelBlock up_block(const std::string& name, int in_ch, int out_ch, Rng& rng) {
  ModelBlock b;
  b.name = name;
  b.layers.push_back(std::make_unique<Upsample2x>());
  b.layers.push_back(std::make_unique<Conv2d>(in_ch, out_ch, 3, 1, 1, false, rng));
  b.layers.push_back(std::make_unique<BatchNorm2d>(out_ch));
  b.layers.push_back(std::make_unique<ReLU>());
  return b;
}

} // namespace

LayerTapModel make_miniseg(const MinisegConfig& cfg, Rng& rng) {
  CISS_CHECK(cfg.input_height % 8 == 0 && cfg.input_width % 8 == 0, config,
             "miniseg input size must be a multiple of 8");
  CISS_CHECK(cfg.num_classes >= 2, config, "miniseg needs at least two output classes");

  LayerTapModel m;
  m.config_ = cfg;
  const int w0 = cfg.width0, w1 = cfg.width1, w2 = cfg.width2;

  m.blocks_.push_back(conv_block("enc0_down", 3, w0, 2, rng));
  m.blocks_.push_back(conv_block("enc1", w0, w0, 1, rng));
  m.blocks_.push_back(conv_block("enc2_down", w0, w1, 2, rng));
  m.blocks_.push_back(conv_block("enc3", w1, w1, 1, rng));
  m.blocks_.push_back(conv_block("enc4_down", w1, w2, 2, rng));
  m.blocks_.push_back(conv_block("enc5", w2, w2, 1, rng));
  m.blocks_.push_back(conv_block("enc6", w2, w2, 1, rng));
  m.blocks_.push_back(conv_block("enc7", w2, w2, 1, rng));
  m.encoder_end_ = 8;
  m.blocks_.push_back(up_block("dec0_up", w2, w1, rng));
  m.blocks_.push_back(up_block("dec1_up", w1, w0, rng));
  m.blocks_.push_back(up_block("dec2_up", w0, w0, rng));
  {
    ModelBlock b;
    b.name = "head";
    b.layers.push_back(std::make_unique<ClassifierHead>(w0, cfg.num_classes, cfg.head_kind,
                                                        cfg.head_init_scale, rng));
    m.blocks_.push_back(std::move(b));
  }

  // record per-block activation shapes for stitch compatibility checks
  std::vector<int> chw{3, cfg.input_height, cfg.input_width};
  for (ModelBlock& b : m.blocks_) {
    b.input_chw = chw;
    for (auto& layer : b.layers) chw = layer->output_shape(chw);
    b.output_chw = chw;
  }

  std::ostringstream id;
  id << "miniseg12-w" << w0 << "." << w1 << "." << w2 << "-in" << cfg.input_height << "x"
     << cfg.input_width << "-" << to_string(cfg.head_kind);
  m.arch_id_ = id.str();
  return m;
}

IntTensor argmax_channels(const Tensor& logits) {
  const int b = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  IntTensor out({b, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int i = 0; i < b; ++i) {
    const double* base = logits.data() + static_cast<int64_t>(i) * c * plane;
    int32_t* q = out.data() + static_cast<int64_t>(i) * plane;
    for (int64_t j = 0; j < plane; ++j) {
      int best = 0;
      double bv = base[j];
      for (int k = 1; k < c; ++k) {
        const double v = base[static_cast<int64_t>(k) * plane + j];
        if (v > bv) {
          bv = v;
          best = k;
        }
      }
      q[j] = best;
    }
  }
  return out;
}

} // namespace ciss
