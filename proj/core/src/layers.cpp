#include "ciss/layers.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "ciss/error.hpp"
#include "ciss/parallel.hpp"

namespace ciss {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

namespace {

void im2col(const double* x, int ch, int h, int w, int k, int stride, int pad, int ho, int wo,
            double* col) {
  // col layout: {ch*k*k, ho*wo}
  const int npix = ho * wo;
  for (int c = 0; c < ch; ++c) {
    const double* xc = x + static_cast<size_t>(c) * h * w;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        double* row = col + (static_cast<size_t>(c) * k * k + kh * k + kw) * npix;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + kh;
          double* dst = row + static_cast<size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, 0.0);
            continue;
          }
          const double* src = xc + static_cast<size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kw;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* col, int ch, int h, int w, int k, int stride, int pad, int ho, int wo,
            double* x) {
  const int npix = ho * wo;
  for (int c = 0; c < ch; ++c) {
    double* xc = x + static_cast<size_t>(c) * h * w;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        const double* row = col + (static_cast<size_t>(c) * k * k + kh * k + kw) * npix;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + kh;
          if (iy < 0 || iy >= h) continue;
          const double* src = row + static_cast<size_t>(oy) * wo;
          double* dst = xc + static_cast<size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kw;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

} // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad, bool bias, Rng& rng)
    : in_ch_(in_ch), out_ch_(out_ch), ksize_(ksize), stride_(stride), pad_(pad),
      has_bias_(bias) {
  const int fan_in = in_ch * ksize * ksize;
  weight = Tensor({out_ch, fan_in});
  grad_weight = Tensor({out_ch, fan_in});
  const double std = std::sqrt(2.0 / fan_in);
  for (int64_t i = 0; i < weight.size(); ++i) weight[i] = rng.normal(0.0, std);
  if (has_bias_) {
    this->bias = Tensor({out_ch});
    grad_bias = Tensor({out_ch});
  }
}

std::vector<int> Conv2d::output_shape(const std::vector<int>& in_chw) const {
  CISS_CHECK(in_chw.size() == 3 && in_chw[0] == in_ch_, shape,
             "conv input channel mismatch: expected " + std::to_string(in_ch_));
  const int ho = (in_chw[1] + 2 * pad_ - ksize_) / stride_ + 1;
  const int wo = (in_chw[2] + 2 * pad_ - ksize_) / stride_ + 1;
  return {out_ch_, ho, wo};
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
  CISS_CHECK(x.ndim() == 4, shape, "conv expects a NCHW batch, got " + x.shape_str());
  CISS_CHECK(x.dim(1) == in_ch_, shape,
             "conv channel mismatch: input " + x.shape_str() + ", expected C=" +
                 std::to_string(in_ch_));
  const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int ho = (h + 2 * pad_ - ksize_) / stride_ + 1;
  const int wo = (w + 2 * pad_ - ksize_) / stride_ + 1;
  const int npix = ho * wo;
  const int kdim = in_ch_ * ksize_ * ksize_;

  Tensor out({b, out_ch_, ho, wo});
  ConstMapMat wm(weight.data(), out_ch_, kdim);
  parallel_for(b, [&](int64_t i) {
    std::vector<double> colbuf(static_cast<size_t>(kdim) * npix);
    im2col(x.data() + i * in_ch_ * h * w, in_ch_, h, w, ksize_, stride_, pad_, ho, wo,
           colbuf.data());
    ConstMapMat col(colbuf.data(), kdim, npix);
    MapMat om(out.data() + i * out_ch_ * npix, out_ch_, npix);
    om.noalias() = wm * col;
    if (has_bias_) om.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.data(), out_ch_);
  });

  if (train) cached_input_ = x;
  return out;
}

Tensor Conv2d::backward(const Tensor& dy) {
  CISS_CHECK(!cached_input_.empty(), numeric, "conv backward without cached forward");
  const Tensor& x = cached_input_;
  const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int ho = dy.dim(2), wo = dy.dim(3);
  const int npix = ho * wo;
  const int kdim = in_ch_ * ksize_ * ksize_;
  CISS_CHECK(dy.dim(0) == b && dy.dim(1) == out_ch_, shape, "conv backward shape mismatch");

  Tensor dx({b, in_ch_, h, w});
  // per-image weight-gradient partials, reduced in index order afterwards so
  // results are identical for any thread count
  std::vector<Tensor> wpart(static_cast<size_t>(b));
  std::vector<Tensor> bpart(has_bias_ ? static_cast<size_t>(b) : 0);

  ConstMapMat wm(weight.data(), out_ch_, kdim);
  parallel_for(b, [&](int64_t i) {
    std::vector<double> colbuf(static_cast<size_t>(kdim) * npix);
    std::vector<double> dcolbuf(static_cast<size_t>(kdim) * npix);
    im2col(x.data() + i * in_ch_ * h * w, in_ch_, h, w, ksize_, stride_, pad_, ho, wo,
           colbuf.data());
    ConstMapMat col(colbuf.data(), kdim, npix);
    ConstMapMat dym(dy.data() + i * out_ch_ * npix, out_ch_, npix);

    wpart[static_cast<size_t>(i)] = Tensor({out_ch_, kdim});
    MapMat dwm(wpart[static_cast<size_t>(i)].data(), out_ch_, kdim);
    dwm.noalias() = dym * col.transpose();

    MapMat dcol(dcolbuf.data(), kdim, npix);
    dcol.noalias() = wm.transpose() * dym;
    col2im(dcolbuf.data(), in_ch_, h, w, ksize_, stride_, pad_, ho, wo,
           dx.data() + i * in_ch_ * h * w);

    if (has_bias_) {
      bpart[static_cast<size_t>(i)] = Tensor({out_ch_});
      Eigen::Map<Eigen::VectorXd>(bpart[static_cast<size_t>(i)].data(), out_ch_) =
          dym.rowwise().sum();
    }
  });

  for (int i = 0; i < b; ++i) {
    const Tensor& p = wpart[static_cast<size_t>(i)];
    for (int64_t j = 0; j < grad_weight.size(); ++j) grad_weight[j] += p[j];
    if (has_bias_) {
      const Tensor& pb = bpart[static_cast<size_t>(i)];
      for (int64_t j = 0; j < grad_bias.size(); ++j) grad_bias[j] += pb[j];
    }
  }
  cached_input_ = Tensor();
  return dx;
}

void Conv2d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &grad_weight, true});
  if (has_bias_) out.push_back({prefix + ".bias", &bias, &grad_bias, true});
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  gamma = Tensor({channels});
  beta = Tensor({channels});
  grad_gamma = Tensor({channels});
  grad_beta = Tensor({channels});
  running_mean = Tensor({channels});
  running_var = Tensor({channels});
  gamma.fill(1.0);
  running_var.fill(1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
  CISS_CHECK(x.ndim() == 4 && x.dim(1) == channels_, shape,
             "batchnorm expects NCHW with C=" + std::to_string(channels_) + ", got " +
                 x.shape_str());
  const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int64_t plane = static_cast<int64_t>(h) * w;
  const int64_t n = static_cast<int64_t>(b) * plane;

  Tensor out(x.shape());
  Tensor mean({channels_}), inv_std({channels_});
  if (train) {
    for (int c = 0; c < channels_; ++c) {
      double sum = 0.0, sq = 0.0;
      for (int i = 0; i < b; ++i) {
        const double* p = x.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
        for (int64_t j = 0; j < plane; ++j) {
          sum += p[j];
          sq += p[j] * p[j];
        }
      }
      const double m = sum / static_cast<double>(n);
      const double var = std::max(0.0, sq / static_cast<double>(n) - m * m);
      mean[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + eps_);
      running_mean[c] = (1.0 - momentum_) * running_mean[c] + momentum_ * m;
      running_var[c] = (1.0 - momentum_) * running_var[c] + momentum_ * var;
    }
  } else {
    for (int c = 0; c < channels_; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps_);
    }
  }

  parallel_for(b, [&](int64_t i) {
    for (int c = 0; c < channels_; ++c) {
      const double m = mean[c], is = inv_std[c], g = gamma[c], bt = beta[c];
      const double* p = x.data() + (i * channels_ + c) * plane;
      double* q = out.data() + (i * channels_ + c) * plane;
      for (int64_t j = 0; j < plane; ++j) q[j] = g * (p[j] - m) * is + bt;
    }
  });

  if (train) {
    cached_input_ = x;
    cached_mean_ = mean;
    cached_inv_std_ = inv_std;
    cached_train_mode_ = true;
  }
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  CISS_CHECK(!cached_input_.empty(), numeric, "batchnorm backward without cached forward");
  const Tensor& x = cached_input_;
  const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int64_t plane = static_cast<int64_t>(h) * w;
  const int64_t n = static_cast<int64_t>(b) * plane;

  Tensor dx(x.shape());
  for (int c = 0; c < channels_; ++c) {
    const double m = cached_mean_[c], is = cached_inv_std_[c], g = gamma[c];
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int i = 0; i < b; ++i) {
      const double* px = x.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
      const double* pd = dy.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
      for (int64_t j = 0; j < plane; ++j) {
        sum_dy += pd[j];
        sum_dy_xhat += pd[j] * (px[j] - m) * is;
      }
    }
    grad_gamma[c] += sum_dy_xhat;
    grad_beta[c] += sum_dy;

    if (cached_train_mode_) {
      const double inv_n = 1.0 / static_cast<double>(n);
      for (int i = 0; i < b; ++i) {
        const double* px = x.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
        const double* pd = dy.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
        double* pq = dx.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
        for (int64_t j = 0; j < plane; ++j) {
          const double xhat = (px[j] - m) * is;
          pq[j] = g * is * (pd[j] - inv_n * sum_dy - xhat * inv_n * sum_dy_xhat);
        }
      }
    } else {
      // statistics are constants in eval mode
      for (int i = 0; i < b; ++i) {
        const double* pd = dy.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
        double* pq = dx.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
        for (int64_t j = 0; j < plane; ++j) pq[j] = pd[j] * g * is;
      }
    }
  }
  cached_input_ = Tensor();
  return dx;
}

void BatchNorm2d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gamma", &gamma, &grad_gamma, true});
  out.push_back({prefix + ".beta", &beta, &grad_beta, true});
  out.push_back({prefix + ".running_mean", &running_mean, nullptr, false});
  out.push_back({prefix + ".running_var", &running_var, nullptr, false});
}

// ---------------------------------------------------------------------------
// ReLU

Tensor ReLU::forward(const Tensor& x, bool train) {
  Tensor out(x.shape());
  const double* p = x.data();
  double* q = out.data();
  for (int64_t i = 0; i < x.size(); ++i) q[i] = p[i] > 0.0 ? p[i] : 0.0;
  if (train) cached_output_ = out;
  return out;
}

Tensor ReLU::backward(const Tensor& dy) {
  CISS_CHECK(!cached_output_.empty(), numeric, "relu backward without cached forward");
  Tensor dx(dy.shape());
  const double* o = cached_output_.data();
  const double* d = dy.data();
  double* q = dx.data();
  for (int64_t i = 0; i < dy.size(); ++i) q[i] = o[i] > 0.0 ? d[i] : 0.0;
  cached_output_ = Tensor();
  return dx;
}

// ---------------------------------------------------------------------------
// Upsample2x

std::vector<int> Upsample2x::output_shape(const std::vector<int>& in_chw) const {
  return {in_chw[0], in_chw[1] * 2, in_chw[2] * 2};
}

Tensor Upsample2x::forward(const Tensor& x, bool train) {
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({b, c, 2 * h, 2 * w});
  parallel_for(static_cast<int64_t>(b) * c, [&](int64_t ic) {
    const double* p = x.data() + ic * h * w;
    double* q = out.data() + ic * 4 * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x2 = 0; x2 < w; ++x2) {
        const double v = p[y * w + x2];
        double* row0 = q + (2 * y) * 2 * w + 2 * x2;
        double* row1 = row0 + 2 * w;
        row0[0] = row0[1] = row1[0] = row1[1] = v;
      }
    }
  });
  if (train) cached_in_shape_ = x.shape();
  return out;
}

Tensor Upsample2x::backward(const Tensor& dy) {
  CISS_CHECK(!cached_in_shape_.empty(), numeric, "upsample backward without cached forward");
  const int b = cached_in_shape_[0], c = cached_in_shape_[1], h = cached_in_shape_[2],
            w = cached_in_shape_[3];
  Tensor dx(cached_in_shape_);
  parallel_for(static_cast<int64_t>(b) * c, [&](int64_t ic) {
    const double* p = dy.data() + ic * 4 * h * w;
    double* q = dx.data() + ic * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x2 = 0; x2 < w; ++x2) {
        const double* row0 = p + (2 * y) * 2 * w + 2 * x2;
        const double* row1 = row0 + 2 * w;
        q[y * w + x2] = row0[0] + row0[1] + row1[0] + row1[1];
      }
    }
  });
  cached_in_shape_.clear();
  return dx;
}

// ---------------------------------------------------------------------------
// ClassifierHead

std::string to_string(HeadKind k) {
  return k == HeadKind::standard ? "standard" : "weight_normalized";
}

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "standard") return HeadKind::standard;
  if (s == "weight_normalized") return HeadKind::weight_normalized;
  raise(ErrorKind::config,
        "unknown head kind '" + s + "' (valid: standard, weight_normalized)");
}

ClassifierHead::ClassifierHead(int in_ch, int num_classes, HeadKind kind, double init_scale,
                               Rng& rng)
    : in_ch_(in_ch), num_classes_(0), kind_(kind), init_scale_(init_scale) {
  weight = Tensor({0, in_ch});
  bias = Tensor({0});
  grad_weight = Tensor({0, in_ch});
  grad_bias = Tensor({0});
  if (kind_ == HeadKind::weight_normalized) {
    gain = Tensor({0});
    grad_gain = Tensor({0});
  }
  extend(num_classes, rng);
}

std::vector<int> ClassifierHead::output_shape(const std::vector<int>& in_chw) const {
  CISS_CHECK(in_chw[0] == in_ch_, shape, "head input channel mismatch");
  return {num_classes_, in_chw[1], in_chw[2]};
}

void ClassifierHead::extend(int extra_classes, Rng& rng) {
  CISS_CHECK(extra_classes >= 1, config, "extend: need at least one new class");
  const int old_n = num_classes_;
  const int new_n = old_n + extra_classes;

  Tensor w2({new_n, in_ch_});
  for (int c = 0; c < old_n; ++c)
    for (int d = 0; d < in_ch_; ++d) w2.at(c, d) = weight.at(c, d);
  for (int c = old_n; c < new_n; ++c)
    for (int d = 0; d < in_ch_; ++d) w2.at(c, d) = rng.normal(0.0, init_scale_);
  Tensor b2({new_n});
  for (int c = 0; c < old_n; ++c) b2[c] = bias[c];

  if (kind_ == HeadKind::weight_normalized) {
    // gain is set to |v| so the effective weight of a fresh unit equals its
    // sampled direction, matching the standard head's init distribution
    Tensor g2({new_n});
    for (int c = 0; c < old_n; ++c) g2[c] = gain[c];
    for (int c = old_n; c < new_n; ++c) {
      double nrm = 0.0;
      for (int d = 0; d < in_ch_; ++d) nrm += w2.at(c, d) * w2.at(c, d);
      g2[c] = std::sqrt(nrm);
    }
    gain = std::move(g2);
    grad_gain = Tensor({new_n});
  }
  weight = std::move(w2);
  bias = std::move(b2);
  grad_weight = Tensor({new_n, in_ch_});
  grad_bias = Tensor({new_n});
  num_classes_ = new_n;
}

Tensor ClassifierHead::effective_weight() const {
  if (kind_ == HeadKind::standard) return weight;
  Tensor eff({num_classes_, in_ch_});
  for (int c = 0; c < num_classes_; ++c) {
    double nrm = 0.0;
    for (int d = 0; d < in_ch_; ++d) nrm += weight.at(c, d) * weight.at(c, d);
    nrm = std::sqrt(nrm);
    const double scale = nrm > 0.0 ? gain[c] / nrm : 0.0;
    for (int d = 0; d < in_ch_; ++d) eff.at(c, d) = scale * weight.at(c, d);
  }
  return eff;
}

Tensor ClassifierHead::forward(const Tensor& x, bool train) {
  CISS_CHECK(x.ndim() == 4 && x.dim(1) == in_ch_, shape,
             "head expects NCHW with C=" + std::to_string(in_ch_) + ", got " + x.shape_str());
  const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int64_t npix = static_cast<int64_t>(h) * w;
  const Tensor eff = effective_weight();

  Tensor out({b, num_classes_, h, w});
  ConstMapMat wm(eff.data(), num_classes_, in_ch_);
  parallel_for(b, [&](int64_t i) {
    ConstMapMat xm(x.data() + i * in_ch_ * npix, in_ch_, npix);
    MapMat om(out.data() + i * num_classes_ * npix, num_classes_, npix);
    om.noalias() = wm * xm;
    om.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.data(), num_classes_);
  });
  if (train) cached_input_ = x;
  return out;
}

Tensor ClassifierHead::backward(const Tensor& dy) {
  CISS_CHECK(!cached_input_.empty(), numeric, "head backward without cached forward");
  const Tensor& x = cached_input_;
  const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int64_t npix = static_cast<int64_t>(h) * w;
  const Tensor eff = effective_weight();

  Tensor dx(x.shape());
  Tensor deff({num_classes_, in_ch_});
  std::vector<Tensor> wpart(static_cast<size_t>(b));
  std::vector<Tensor> bpart(static_cast<size_t>(b));

  ConstMapMat wm(eff.data(), num_classes_, in_ch_);
  parallel_for(b, [&](int64_t i) {
    ConstMapMat xm(x.data() + i * in_ch_ * npix, in_ch_, npix);
    ConstMapMat dym(dy.data() + i * num_classes_ * npix, num_classes_, npix);
    wpart[static_cast<size_t>(i)] = Tensor({num_classes_, in_ch_});
    MapMat dwm(wpart[static_cast<size_t>(i)].data(), num_classes_, in_ch_);
    dwm.noalias() = dym * xm.transpose();
    MapMat dxm(dx.data() + i * in_ch_ * npix, in_ch_, npix);
    dxm.noalias() = wm.transpose() * dym;
    bpart[static_cast<size_t>(i)] = Tensor({num_classes_});
    Eigen::Map<Eigen::VectorXd>(bpart[static_cast<size_t>(i)].data(), num_classes_) =
        dym.rowwise().sum();
  });
  for (int i = 0; i < b; ++i) {
    for (int64_t j = 0; j < deff.size(); ++j) deff[j] += wpart[static_cast<size_t>(i)][j];
    for (int64_t j = 0; j < grad_bias.size(); ++j)
      grad_bias[j] += bpart[static_cast<size_t>(i)][j];
  }

  if (kind_ == HeadKind::standard) {
    for (int64_t j = 0; j < grad_weight.size(); ++j) grad_weight[j] += deff[j];
  } else {
    // chain rule through w_eff = g * v / |v|
    for (int c = 0; c < num_classes_; ++c) {
      double nrm2 = 0.0;
      for (int d = 0; d < in_ch_; ++d) nrm2 += weight.at(c, d) * weight.at(c, d);
      const double nrm = std::sqrt(std::max(nrm2, 1e-24));
      double dot = 0.0; // dW_c . v_c / |v_c|
      for (int d = 0; d < in_ch_; ++d) dot += deff.at(c, d) * weight.at(c, d) / nrm;
      grad_gain[c] += dot;
      const double scale = gain[c] / nrm;
      for (int d = 0; d < in_ch_; ++d) {
        const double u = weight.at(c, d) / nrm;
        grad_weight.at(c, d) += scale * (deff.at(c, d) - dot * u);
      }
    }
  }
  cached_input_ = Tensor();
  return dx;
}

void ClassifierHead::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  if (kind_ == HeadKind::standard) {
    out.push_back({prefix + ".weight", &weight, &grad_weight, true});
  } else {
    out.push_back({prefix + ".direction", &weight, &grad_weight, true});
    out.push_back({prefix + ".gain", &gain, &grad_gain, true});
  }
  out.push_back({prefix + ".bias", &bias, &grad_bias, true});
}

} // namespace ciss
