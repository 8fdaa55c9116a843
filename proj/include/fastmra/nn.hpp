#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fastmra/error.hpp"
#include "fastmra/frame.hpp"
#include "fastmra/rng.hpp"

namespace fastmra {

inline constexpr int kFeatChannels = 3;
inline constexpr int kFeatHeight = 64;
inline constexpr int kFeatWidth = 96;
inline constexpr std::size_t kFeatSize = std::size_t(kFeatChannels * kFeatHeight * kFeatWidth);

// Classifier input stored as 8-bit samples; the network reads value / 255.
struct ClassifierInput {
  std::vector<std::uint8_t> samples = std::vector<std::uint8_t>(kFeatSize);
  float value(std::size_t i) const { return float(samples[i]) / 255.0f; }
  bool operator==(const ClassifierInput&) const = default;
};

namespace detail {

// Overlap weights of destination cells [i*src/dst, (i+1)*src/dst) with source samples.
struct AreaTaps {
  std::vector<int> first;
  std::vector<std::vector<double>> weights;
};

inline AreaTaps area_taps(int src, int dst) {
  AreaTaps t;
  const double step = double(src) / dst;
  for (int i = 0; i < dst; ++i) {
    const double lo = i * step, hi = (i + 1) * step;
    const int a = int(std::floor(lo));
    const int b = std::min(src, int(std::ceil(hi)));
    t.first.push_back(a);
    std::vector<double> w;
    for (int s = a; s < b; ++s) w.push_back(std::min(hi, double(s + 1)) - std::max(lo, double(s)));
    t.weights.push_back(std::move(w));
  }
  return t;
}

inline void area_resample(const Plane& p, std::uint8_t* out) {
  const AreaTaps tx = area_taps(p.width(), kFeatWidth);
  const AreaTaps ty = area_taps(p.height(), kFeatHeight);
  const double area = double(p.width()) / kFeatWidth * double(p.height()) / kFeatHeight;
  for (int oy = 0; oy < kFeatHeight; ++oy)
    for (int ox = 0; ox < kFeatWidth; ++ox) {
      double s = 0;
      const auto& wy = ty.weights[std::size_t(oy)];
      const auto& wx = tx.weights[std::size_t(ox)];
      for (std::size_t j = 0; j < wy.size(); ++j) {
        const auto* row = p.row(ty.first[std::size_t(oy)] + int(j));
        double r = 0;
        for (std::size_t i = 0; i < wx.size(); ++i) r += wx[i] * row[tx.first[std::size_t(ox)] + int(i)];
        s += wy[j] * r;
      }
      *out++ = static_cast<std::uint8_t>(std::clamp(std::floor(s / area + 0.5), 0.0, 255.0));
    }
}

}  // namespace detail

// Luma of (x, past, future) area-averaged to 96x64 and rounded to 8 bits.
inline ClassifierInput featurize(const Frame& x, const Frame& past, const Frame& future) {
  if (!same_dimensions(x, past) || !same_dimensions(x, future))
    throw PreconditionError("featurize: frame dimensions differ");
  if (x.width() < kFeatWidth || x.height() < kFeatHeight)
    throw PreconditionError("featurize: frames smaller than 96x64");
  ClassifierInput in;
  const std::size_t plane = std::size_t(kFeatHeight * kFeatWidth);
  detail::area_resample(x.y(), in.samples.data());
  detail::area_resample(past.y(), in.samples.data() + plane);
  detail::area_resample(future.y(), in.samples.data() + 2 * plane);
  return in;
}

// conv3x3/2 (8) -> relu -> conv3x3/2 (16) -> relu -> conv3x3/2 (32) -> relu
// -> global average pool -> fc -> softmax
struct ConvShape {
  int cin, cout, hin, win;
  int hout() const { return (hin + 1) / 2; }
  int wout() const { return (win + 1) / 2; }
  std::size_t weights() const { return std::size_t(cout * cin * 9); }
  std::size_t params() const { return weights() + std::size_t(cout); }
  std::uint64_t macs() const { return std::uint64_t(cout) * cin * 9 * std::uint64_t(hout() * wout()); }
};

inline constexpr std::array<ConvShape, 3> kConvLayers = {{
    {3, 8, 64, 96},
    {8, 16, 32, 48},
    {16, 32, 16, 24},
}};
inline constexpr int kPoolChannels = 32;
inline constexpr const char* kArchitectureId = "cnn3-s2-c8-c16-c32-gap-fc";

inline std::size_t parameter_count(int num_classes) {
  std::size_t n = 0;
  for (const auto& l : kConvLayers) n += l.params();
  return n + std::size_t(kPoolChannels * num_classes + num_classes);
}

inline std::uint64_t forward_macs(int num_classes) {
  std::uint64_t n = 0;
  for (const auto& l : kConvLayers) n += l.macs();
  return n + std::uint64_t(kPoolChannels * num_classes);
}

// He-uniform convolution weights; zero biases and zero final layer, so an
// untrained model outputs the uniform distribution.
inline std::vector<float> init_parameters(int num_classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> p;
  p.reserve(parameter_count(num_classes));
  for (const auto& l : kConvLayers) {
    const double bound = std::sqrt(6.0 / (l.cin * 9));
    for (std::size_t i = 0; i < l.weights(); ++i) p.push_back(float(rng.uniform(-bound, bound)));
    p.insert(p.end(), std::size_t(l.cout), 0.0f);
  }
  p.insert(p.end(), std::size_t(kPoolChannels * num_classes + num_classes), 0.0f);
  return p;
}

// Forward and backward pass with reusable buffers. T is the arithmetic type;
// training runs in float, gradient checking in double.
template <class T>
class Network {
 public:
  explicit Network(int num_classes) : num_classes_(num_classes) {
    if (num_classes < 2) throw PreconditionError("network needs at least two classes");
    for (std::size_t l = 0; l < kConvLayers.size(); ++l) {
      const auto& s = kConvLayers[l];
      const std::size_t pix = std::size_t(s.hout() * s.wout());
      col_[l].resize(std::size_t(s.cin * 9) * pix);
      act_[l].resize(std::size_t(s.cout) * pix);
    }
    input_.resize(kFeatSize);
    logits_.resize(std::size_t(num_classes));
    probs_.resize(std::size_t(num_classes));
  }

  int num_classes() const { return num_classes_; }

  std::span<const T> forward(std::span<const T> params, const ClassifierInput& in) {
    // Centred before the first convolution; a fixed shift of the layer-1 biases.
    for (std::size_t i = 0; i < kFeatSize; ++i) input_[i] = T(in.samples[i]) / T(255) - T(0.5);
    return forward_values(params, input_);
  }

  std::span<const T> forward_values(std::span<const T> params, std::span<const T> input) {
    check_params(params.size());
    const T* src = input.data();
    std::size_t off = 0;
    for (std::size_t l = 0; l < kConvLayers.size(); ++l) {
      const auto& s = kConvLayers[l];
      im2col(s, src, col_[l].data());
      conv(s, params.data() + off, col_[l].data(), act_[l].data());
      off += s.params();
      src = act_[l].data();
    }
    const std::size_t pix = std::size_t(kConvLayers[2].hout() * kConvLayers[2].wout());
    for (int c = 0; c < kPoolChannels; ++c) {
      T sum = 0;
      for (std::size_t p = 0; p < pix; ++p) sum += act_[2][std::size_t(c) * pix + p];
      pooled_[std::size_t(c)] = sum / T(pix);
    }
    const T* w = params.data() + off;
    const T* b = w + kPoolChannels * num_classes_;
    for (int j = 0; j < num_classes_; ++j) {
      T z = b[j];
      for (int c = 0; c < kPoolChannels; ++c) z += w[j * kPoolChannels + c] * pooled_[std::size_t(c)];
      logits_[std::size_t(j)] = z;
    }
    const T top = *std::max_element(logits_.begin(), logits_.end());
    T zsum = 0;
    for (std::size_t j = 0; j < probs_.size(); ++j) zsum += probs_[j] = std::exp(logits_[j] - top);
    for (auto& p : probs_) p /= zsum;
    return probs_;
  }

  std::span<const T> logits() const { return logits_; }
  std::span<const T> probabilities() const { return probs_; }
  std::span<const T> pooled() const { return pooled_; }

  // Which ReLU units were active in the most recent forward call.
  std::vector<std::uint8_t> relu_mask() const {
    std::vector<std::uint8_t> m;
    for (const auto& a : act_)
      for (T v : a) m.push_back(v > T(0));
    return m;
  }

  // Accumulates d(loss)/d(params) into grad, given d(loss)/d(logits) for the
  // most recent forward call.
  void backward(std::span<const T> params, std::span<const T> dlogits, std::span<T> grad) {
    check_params(params.size());
    check_params(grad.size());
    std::size_t off = 0;
    std::array<std::size_t, 3> layer_off{};
    for (std::size_t l = 0; l < kConvLayers.size(); ++l) {
      layer_off[l] = off;
      off += kConvLayers[l].params();
    }
    const T* w = params.data() + off;
    T* gw = grad.data() + off;
    T* gb = gw + kPoolChannels * num_classes_;
    std::array<T, kPoolChannels> dpool{};
    for (int j = 0; j < num_classes_; ++j) {
      const T d = dlogits[std::size_t(j)];
      gb[j] += d;
      for (int c = 0; c < kPoolChannels; ++c) {
        gw[j * kPoolChannels + c] += d * pooled_[std::size_t(c)];
        dpool[std::size_t(c)] += w[j * kPoolChannels + c] * d;
      }
    }

    const auto& last = kConvLayers[2];
    const std::size_t pix = std::size_t(last.hout() * last.wout());
    dact_.assign(act_[2].size(), T(0));
    for (int c = 0; c < kPoolChannels; ++c)
      for (std::size_t p = 0; p < pix; ++p)
        dact_[std::size_t(c) * pix + p] = dpool[std::size_t(c)] / T(pix);

    for (std::size_t l = kConvLayers.size(); l-- > 0;) {
      const auto& s = kConvLayers[l];
      const std::size_t npix = std::size_t(s.hout() * s.wout());
      const std::size_t k = std::size_t(s.cin * 9);
      // ReLU mask.
      for (std::size_t i = 0; i < dact_.size(); ++i)
        if (act_[l][i] <= T(0)) dact_[i] = T(0);
      const T* wl = params.data() + layer_off[l];
      T* gwl = grad.data() + layer_off[l];
      T* gbl = gwl + s.weights();
      // Weight gradient as contiguous row updates over a transposed patch
      // matrix; masked (zero) output gradients are skipped.
      colt_.resize(k * npix);
      const T* col = col_[l].data();
      for (std::size_t kk = 0; kk < k; ++kk)
        for (std::size_t p = 0; p < npix; ++p) colt_[p * k + kk] = col[kk * npix + p];
      for (int oc = 0; oc < s.cout; ++oc) {
        const T* d = dact_.data() + std::size_t(oc) * npix;
        T* gw = gwl + std::size_t(oc) * k;
        T bsum = 0;
        for (std::size_t p = 0; p < npix; ++p) {
          const T dp = d[p];
          if (dp == T(0)) continue;
          bsum += dp;
          const T* c = colt_.data() + p * k;
          for (std::size_t kk = 0; kk < k; ++kk) gw[kk] += dp * c[kk];
        }
        gbl[oc] += bsum;
      }
      if (l == 0) break;
      dcol_.assign(k * npix, T(0));
      for (int oc = 0; oc < s.cout; ++oc) {
        const T* d = dact_.data() + std::size_t(oc) * npix;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const T wv = wl[std::size_t(oc) * k + kk];
          T* dc = dcol_.data() + kk * npix;
          for (std::size_t p = 0; p < npix; ++p) dc[p] += wv * d[p];
        }
      }
      dact_.assign(std::size_t(s.cin * s.hin * s.win), T(0));
      col2im(s, dcol_.data(), dact_.data());
    }
  }

 private:
  void check_params(std::size_t n) const {
    if (n != parameter_count(num_classes_))
      throw PreconditionError("parameter vector has " + std::to_string(n) + " entries, expected " +
                              std::to_string(parameter_count(num_classes_)));
  }

  // col[(c*9 + ky*3 + kx) * npix + oy*wout + ox] = in[c][2oy+ky-1][2ox+kx-1], zero outside.
  static void im2col(const ConvShape& s, const T* in, T* col) {
    const int ho = s.hout(), wo = s.wout();
    for (int c = 0; c < s.cin; ++c)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          T* dst = col + std::size_t((c * 9 + ky * 3 + kx) * ho * wo);
          for (int oy = 0; oy < ho; ++oy) {
            const int y = 2 * oy + ky - 1;
            for (int ox = 0; ox < wo; ++ox) {
              const int x = 2 * ox + kx - 1;
              *dst++ = (y < 0 || y >= s.hin || x < 0 || x >= s.win)
                           ? T(0)
                           : in[std::size_t((c * s.hin + y) * s.win + x)];
            }
          }
        }
  }

  static void col2im(const ConvShape& s, const T* col, T* out) {
    const int ho = s.hout(), wo = s.wout();
    for (int c = 0; c < s.cin; ++c)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const T* src = col + std::size_t((c * 9 + ky * 3 + kx) * ho * wo);
          for (int oy = 0; oy < ho; ++oy) {
            const int y = 2 * oy + ky - 1;
            for (int ox = 0; ox < wo; ++ox, ++src) {
              const int x = 2 * ox + kx - 1;
              if (y >= 0 && y < s.hin && x >= 0 && x < s.win)
                out[std::size_t((c * s.hin + y) * s.win + x)] += *src;
            }
          }
        }
  }

  static void conv(const ConvShape& s, const T* params, const T* col, T* out) {
    const std::size_t npix = std::size_t(s.hout() * s.wout());
    const std::size_t k = std::size_t(s.cin * 9);
    const T* bias = params + s.weights();
    for (int oc = 0; oc < s.cout; ++oc) {
      T* o = out + std::size_t(oc) * npix;
      std::fill(o, o + npix, bias[oc]);
      for (std::size_t kk = 0; kk < k; ++kk) {
        const T w = params[std::size_t(oc) * k + kk];
        const T* c = col + kk * npix;
        for (std::size_t p = 0; p < npix; ++p) o[p] += w * c[p];
      }
      for (std::size_t p = 0; p < npix; ++p) o[p] = std::max(o[p], T(0));
    }
  }

  int num_classes_;
  std::vector<T> input_;
  std::array<std::vector<T>, 3> col_, act_;
  std::array<T, kPoolChannels> pooled_{};
  std::vector<T> logits_, probs_;
  std::vector<T> dact_, dcol_, colt_;
};

}  // namespace fastmra
