// SPDX-License-Identifier: Apache-2.0
#include "layers.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace neurotrails {

std::string to_string(LayerKind kind) {
  switch (kind) {
  case LayerKind::linear:
    return "linear";
  case LayerKind::conv2d:
    return "conv2d";
  case LayerKind::relu:
    return "relu";
  }
  return "?";
}

std::string to_string(Padding padding) {
  return padding == Padding::same ? "same" : "valid";
}

LayerSpec LayerSpec::linear(std::size_t in, std::size_t out, bool bias) {
  LayerSpec s;
  s.kind = LayerKind::linear;
  s.in = in;
  s.out = out;
  s.has_bias = bias;
  return s;
}

LayerSpec LayerSpec::conv2d(std::size_t in_ch, std::size_t out_ch,
                            std::size_t kh, std::size_t kw, Padding pad,
                            bool bias) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.in = in_ch;
  s.out = out_ch;
  s.kernel_h = kh;
  s.kernel_w = kw;
  s.padding = pad;
  s.has_bias = bias;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

std::size_t LayerSpec::weight_count() const {
  switch (kind) {
  case LayerKind::linear:
    return in * out;
  case LayerKind::conv2d:
    return in * out * kernel_h * kernel_w;
  case LayerKind::relu:
    return 0;
  }
  return 0;
}

std::size_t LayerSpec::bias_count() const {
  return (maskable() && has_bias) ? out : 0;
}

Shape LayerSpec::weight_shape() const {
  switch (kind) {
  case LayerKind::linear:
    return {out, in};
  case LayerKind::conv2d:
    return {out, in, kernel_h, kernel_w};
  case LayerKind::relu:
    return {};
  }
  return {};
}

void LayerSpec::validate() const {
  if (kind == LayerKind::relu) {
    if (in != 0 || out != 0 || has_bias)
      fail("relu layer takes no dimensions or bias");
    return;
  }
  if (in == 0 || out == 0)
    fail(to_string(kind) + " layer needs positive dims, got in=" +
         std::to_string(in) + " out=" + std::to_string(out));
  if (kind == LayerKind::conv2d && (kernel_h == 0 || kernel_w == 0))
    fail("conv2d kernel must be positive, got " + std::to_string(kernel_h) +
         "x" + std::to_string(kernel_w));
}

namespace {

struct ConvGeom {
  std::size_t c, h, w, oh, ow;
  std::ptrdiff_t pad_top, pad_left;
};

ConvGeom conv_geometry(const LayerSpec &spec, const Shape &sample) {
  if (sample.size() != 3 || sample[0] != spec.in)
    fail("conv2d expects input [" + std::to_string(spec.in) +
         "xHxW] per sample, got " + shape_str(sample));
  ConvGeom g{sample[0], sample[1], sample[2], 0, 0, 0, 0};
  if (spec.padding == Padding::same) {
    g.oh = g.h;
    g.ow = g.w;
    g.pad_top = static_cast<std::ptrdiff_t>((spec.kernel_h - 1) / 2);
    g.pad_left = static_cast<std::ptrdiff_t>((spec.kernel_w - 1) / 2);
  } else {
    if (g.h < spec.kernel_h || g.w < spec.kernel_w)
      fail("conv2d kernel " + std::to_string(spec.kernel_h) + "x" +
           std::to_string(spec.kernel_w) + " larger than input " +
           shape_str(sample));
    g.oh = g.h - spec.kernel_h + 1;
    g.ow = g.w - spec.kernel_w + 1;
  }
  return g;
}

Shape sample_shape(const Shape &batched) {
  return Shape(batched.begin() + 1, batched.end());
}

} // namespace

Shape LayerSpec::output_shape(const Shape &sample_in) const {
  switch (kind) {
  case LayerKind::linear: {
    const std::size_t n = shape_size(sample_in);
    if (n != in)
      fail("linear expects " + std::to_string(in) + " input features, got " +
           shape_str(sample_in));
    return {out};
  }
  case LayerKind::conv2d: {
    const ConvGeom g = conv_geometry(*this, sample_in);
    return {out, g.oh, g.ow};
  }
  case LayerKind::relu:
    return sample_in;
  }
  return sample_in;
}

Layer Layer::init(const LayerSpec &spec, Rng &rng) {
  spec.validate();
  Layer layer;
  layer.spec = spec;
  if (!spec.maskable())
    return layer;
  const double fan_in = static_cast<double>(layer.fan_in());
  const double wb = std::sqrt(6.0 / fan_in);
  Tensor w(spec.weight_shape());
  for (auto &v : w.data())
    v = static_cast<float>((2.0 * rng.uniform() - 1.0) * wb);
  layer.weight = MaskedTensor(std::move(w), Mask(spec.weight_count(), 1));
  layer.bias = Tensor({spec.bias_count()});
  const double bb = 1.0 / std::sqrt(fan_in);
  for (auto &v : layer.bias.data())
    v = static_cast<float>((2.0 * rng.uniform() - 1.0) * bb);
  return layer;
}

std::size_t Layer::fan_in() const {
  return spec.kind == LayerKind::conv2d
             ? spec.in * spec.kernel_h * spec.kernel_w
             : spec.in;
}

template <class T>
BasicTensor<T> layer_forward(const LayerSpec &spec, std::span<const T> w,
                             std::span<const T> b, const BasicTensor<T> &x) {
  if (x.rank() < 2)
    fail("layer input must be batched, got " + shape_str(x.shape()));
  const std::size_t n = x.rows();
  const Shape sample = sample_shape(x.shape());
  if (spec.maskable()) {
    if (w.size() != spec.weight_count())
      fail("weight length " + std::to_string(w.size()) + " does not match " +
           shape_str(spec.weight_shape()));
    if (b.size() != spec.bias_count())
      fail("bias length " + std::to_string(b.size()) +
           " does not match fan-out " + std::to_string(spec.bias_count()));
  }
  switch (spec.kind) {
  case LayerKind::relu: {
    BasicTensor<T> y = x;
    for (auto &v : y.data())
      v = v > T(0) ? v : T(0);
    return y;
  }
  case LayerKind::linear: {
    if (x.row_size() != spec.in)
      fail("linear expects " + std::to_string(spec.in) +
           " input features, got " + shape_str(x.shape()));
    BasicTensor<T> y({n, spec.out});
    for (std::size_t r = 0; r < n; ++r) {
      const auto xr = x.row(r);
      for (std::size_t o = 0; o < spec.out; ++o) {
        const T *wr = w.data() + o * spec.in;
        double acc = b.empty() ? 0.0 : static_cast<double>(b[o]);
        for (std::size_t i = 0; i < spec.in; ++i)
          acc += static_cast<double>(xr[i]) * static_cast<double>(wr[i]);
        y[r * spec.out + o] = static_cast<T>(acc);
      }
    }
    return y;
  }
  case LayerKind::conv2d: {
    const ConvGeom g = conv_geometry(spec, sample);
    const std::size_t kh = spec.kernel_h, kw = spec.kernel_w;
    BasicTensor<T> y({n, spec.out, g.oh, g.ow});
    for (std::size_t s = 0; s < n; ++s) {
      const T *xs = x.data().data() + s * g.c * g.h * g.w;
      for (std::size_t o = 0; o < spec.out; ++o) {
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            double acc = b.empty() ? 0.0 : static_cast<double>(b[o]);
            for (std::size_t c = 0; c < g.c; ++c) {
              for (std::size_t ky = 0; ky < kh; ++ky) {
                const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - g.pad_top;
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h))
                  continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const auto ix =
                      static_cast<std::ptrdiff_t>(ox + kx) - g.pad_left;
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w))
                    continue;
                  acc += static_cast<double>(
                             xs[(c * g.h + iy) * g.w + ix]) *
                         static_cast<double>(
                             w[((o * g.c + c) * kh + ky) * kw + kx]);
                }
              }
            }
            y[((s * spec.out + o) * g.oh + oy) * g.ow + ox] =
                static_cast<T>(acc);
          }
        }
      }
    }
    return y;
  }
  }
  return x;
}

template Tensor layer_forward<float>(const LayerSpec &, std::span<const float>,
                                     std::span<const float>, const Tensor &);
template TensorF64 layer_forward<double>(const LayerSpec &,
                                         std::span<const double>,
                                         std::span<const double>,
                                         const TensorF64 &);

Tensor layer_backward(const Layer &layer, const Tensor &x, const Tensor &dy,
                      LayerGrad &grad) {
  const LayerSpec &spec = layer.spec;
  const std::size_t n = x.rows();
  if (dy.rows() != n)
    fail("backward batch mismatch: input " + shape_str(x.shape()) +
         " vs upstream " + shape_str(dy.shape()));
  switch (spec.kind) {
  case LayerKind::relu: {
    if (dy.size() != x.size())
      fail("relu backward shape mismatch " + shape_str(dy.shape()) + " vs " +
           shape_str(x.shape()));
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
      dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
    return dx;
  }
  case LayerKind::linear: {
    if (dy.row_size() != spec.out)
      fail("linear backward expects " + std::to_string(spec.out) +
           " upstream features, got " + shape_str(dy.shape()));
    const auto w = layer.weight.values.data();
    Tensor dx(x.shape());
    for (std::size_t o = 0; o < spec.out; ++o) {
      double db = 0.0;
      for (std::size_t i = 0; i < spec.in; ++i) {
        double acc = 0.0;
        for (std::size_t r = 0; r < n; ++r)
          acc += static_cast<double>(dy[r * spec.out + o]) *
                 static_cast<double>(x[r * spec.in + i]);
        grad.weight[o * spec.in + i] += static_cast<float>(acc);
      }
      for (std::size_t r = 0; r < n; ++r)
        db += dy[r * spec.out + o];
      if (spec.has_bias)
        grad.bias[o] += static_cast<float>(db);
    }
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < spec.in; ++i) {
        double acc = 0.0;
        for (std::size_t o = 0; o < spec.out; ++o)
          acc += static_cast<double>(dy[r * spec.out + o]) *
                 static_cast<double>(w[o * spec.in + i]);
        dx[r * spec.in + i] = static_cast<float>(acc);
      }
    }
    return dx;
  }
  case LayerKind::conv2d: {
    const ConvGeom g = conv_geometry(spec, sample_shape(x.shape()));
    const std::size_t kh = spec.kernel_h, kw = spec.kernel_w;
    if (dy.size() != n * spec.out * g.oh * g.ow)
      fail("conv2d backward upstream shape " + shape_str(dy.shape()) +
           " does not match output");
    const auto w = layer.weight.values.data();
    std::vector<double> dw(spec.weight_count(), 0.0);
    std::vector<double> dxa(x.size(), 0.0);
    std::vector<double> db(spec.out, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t xoff = s * g.c * g.h * g.w;
      for (std::size_t o = 0; o < spec.out; ++o) {
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const double d = dy[((s * spec.out + o) * g.oh + oy) * g.ow + ox];
            db[o] += d;
            if (d == 0.0)
              continue;
            for (std::size_t c = 0; c < g.c; ++c) {
              for (std::size_t ky = 0; ky < kh; ++ky) {
                const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - g.pad_top;
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h))
                  continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const auto ix =
                      static_cast<std::ptrdiff_t>(ox + kx) - g.pad_left;
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w))
                    continue;
                  const std::size_t xi = xoff + (c * g.h + iy) * g.w + ix;
                  const std::size_t wi = ((o * g.c + c) * kh + ky) * kw + kx;
                  dw[wi] += d * x[xi];
                  dxa[xi] += d * w[wi];
                }
              }
            }
          }
        }
      }
    }
    for (std::size_t i = 0; i < dw.size(); ++i)
      grad.weight[i] += static_cast<float>(dw[i]);
    if (spec.has_bias)
      for (std::size_t o = 0; o < spec.out; ++o)
        grad.bias[o] += static_cast<float>(db[o]);
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < dxa.size(); ++i)
      dx[i] = static_cast<float>(dxa[i]);
    return dx;
  }
  }
  return dy;
}

} // namespace neurotrails
