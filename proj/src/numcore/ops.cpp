#include "cephlm/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "cephlm/error.hpp"
#include "cephlm/numcore/kernels.hpp"

namespace cephlm::numcore {

namespace {

struct ConvGeometry {
  std::size_t batch, c_in, height, width;
  std::size_t c_out, k, pad;
  std::size_t out_h, out_w;
  std::size_t col_rows() const { return c_in * k * k; }
  std::size_t out_plane() const { return out_h * out_w; }
};

// col[(c*k + ky)*k + kx][oy*out_w + ox] = x[c][oy+ky-pad][ox+kx-pad], zero outside.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t plane = g.out_plane();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    const T* xc = x + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * plane;
        // Valid ox satisfy 0 <= ox + kx - pad < width.
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(g.pad);
        const std::size_t ox_lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
        const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(g.width) - shift;
        const std::size_t ox_hi = std::min<std::size_t>(g.out_w, hi > 0 ? static_cast<std::size_t>(hi) : 0);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          T* dst = row + oy * g.out_w;
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) || ox_lo >= ox_hi) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          std::fill(dst, dst + ox_lo, T(0));
          const T* src = xc + static_cast<std::size_t>(iy) * g.width;
          std::memcpy(dst + ox_lo, src + (static_cast<std::ptrdiff_t>(ox_lo) + shift), (ox_hi - ox_lo) * sizeof(T));
          std::fill(dst + ox_hi, dst + g.out_w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  const std::size_t plane = g.out_plane();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    T* dxc = dx + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * plane;
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(g.pad);
        const std::size_t ox_lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
        const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(g.width) - shift;
        const std::size_t ox_hi = std::min<std::size_t>(g.out_w, hi > 0 ? static_cast<std::size_t>(hi) : 0);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          const T* src = row + oy * g.out_w;
          T* dst = dxc + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
            dst[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(ox) + shift)] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias, Padding padding) {
  if (input.rank() != 3 && input.rank() != 4) {
    throw Error(Errc::shape_mismatch, "conv2d input must be [C,H,W] or [N,C,H,W], got " + shape_str(input.shape()));
  }
  if (kernels.rank() != 4 || kernels.dim(2) != kernels.dim(3) || kernels.dim(2) % 2 == 0) {
    throw Error(Errc::shape_mismatch, "conv2d kernels must be [C_out,C_in,k,k] with odd k, got " +
                                          shape_str(kernels.shape()));
  }
  const bool batched = input.rank() == 4;
  ConvGeometry g{};
  g.batch = batched ? input.dim(0) : 1;
  g.c_in = input.dim(batched ? 1 : 0);
  g.height = input.dim(batched ? 2 : 1);
  g.width = input.dim(batched ? 3 : 2);
  g.c_out = kernels.dim(0);
  g.k = kernels.dim(2);
  if (kernels.dim(1) != g.c_in) {
    throw Error(Errc::shape_mismatch, "conv2d input has " + std::to_string(g.c_in) + " channels but kernels expect " +
                                          std::to_string(kernels.dim(1)));
  }
  if (bias.numel() != g.c_out) {
    throw Error(Errc::shape_mismatch, "conv2d bias must have " + std::to_string(g.c_out) + " entries");
  }
  if (padding == Padding::same) {
    g.pad = (g.k - 1) / 2;
  } else {
    if (g.height < g.k || g.width < g.k) {
      throw Error(Errc::shape_mismatch, "valid conv2d needs spatial dims >= kernel size");
    }
    g.pad = 0;
  }
  g.out_h = g.height + 2 * g.pad - g.k + 1;
  g.out_w = g.width + 2 * g.pad - g.k + 1;

  const std::size_t kdim = g.col_rows();
  const std::size_t plane = g.out_plane();
  const std::size_t in_stride = g.c_in * g.height * g.width;
  const std::size_t out_stride = g.c_out * plane;

  std::vector<T> out(g.batch * out_stride);
  std::vector<T> col(kdim * plane);
  const T* x = input.ptr();
  const T* w = kernels.ptr();
  const T* b = bias.ptr();
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(x + n * in_stride, g, col.data());
    T* on = out.data() + n * out_stride;
    gemm<T>(g.c_out, plane, kdim, {w, kdim, 1}, col.data(), plane, on, plane, false);
    for (std::size_t co = 0; co < g.c_out; ++co) {
      T* oc = on + co * plane;
      const T bv = b[co];
      for (std::size_t p = 0; p < plane; ++p) oc[p] += bv;
    }
  }

  Shape shape = batched ? Shape{g.batch, g.c_out, g.out_h, g.out_w} : Shape{g.c_out, g.out_h, g.out_w};
  return make_result<T>(std::move(shape), std::move(out), {input, kernels, bias},
                        [input, kernels, bias, g](std::span<const T> grad) {
                          T* dx = grad_target(input);
                          T* dw = grad_target(kernels);
                          T* db = grad_target(bias);
                          const std::size_t kdim = g.col_rows();
                          const std::size_t plane = g.out_plane();
                          const std::size_t in_stride = g.c_in * g.height * g.width;
                          const std::size_t out_stride = g.c_out * plane;
                          std::vector<T> col(dw || dx ? kdim * plane : 0);
                          for (std::size_t n = 0; n < g.batch; ++n) {
                            const T* gn = grad.data() + n * out_stride;
                            if (db) {
                              for (std::size_t co = 0; co < g.c_out; ++co) {
                                T s = T(0);
                                const T* gc = gn + co * plane;
                                for (std::size_t p = 0; p < plane; ++p) s += gc[p];
                                db[co] += s;
                              }
                            }
                            if (dw) {
                              im2col(input.ptr() + n * in_stride, g, col.data());
                              gemm_nt<T>(g.c_out, kdim, plane, gn, plane, col.data(), plane, dw, kdim, true);
                            }
                            if (dx) {
                              gemm<T>(kdim, plane, g.c_out, {kernels.ptr(), 1, kdim}, gn, plane, col.data(), plane,
                                      false);
                              col2im_add(col.data(), g, dx + n * in_stride);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> maxpool2(const Tensor<T>& input) {
  if (input.rank() != 3 && input.rank() != 4) {
    throw Error(Errc::shape_mismatch, "maxpool2 input must be [C,H,W] or [N,C,H,W], got " + shape_str(input.shape()));
  }
  const std::size_t r = input.rank();
  const std::size_t h = input.dim(r - 2);
  const std::size_t w = input.dim(r - 1);
  if (h % 2 != 0 || w % 2 != 0) {
    throw Error(Errc::shape_mismatch, "maxpool2 needs even spatial dims, got " + shape_str(input.shape()));
  }
  const std::size_t planes = input.numel() / (h * w);
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<T> out(planes * oh * ow);
  std::vector<std::uint32_t> argmax(out.size());
  const T* x = input.ptr();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* xp = x + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t base = (2 * oy) * w + 2 * ox;
        const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        for (int c = 1; c < 4; ++c) {
          if (xp[cand[c]] > xp[best]) best = cand[c];
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = xp[best];
        argmax[o] = static_cast<std::uint32_t>(p * h * w + best);
      }
    }
  }
  Shape shape = input.shape();
  shape[r - 2] = oh;
  shape[r - 1] = ow;
  return make_result<T>(std::move(shape), std::move(out), {input},
                        [input, argmax = std::move(argmax)](std::span<const T> grad) {
                          if (T* dx = grad_target(input)) {
                            for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += grad[o];
                          }
                        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  const std::size_t n = input.numel();
  std::vector<T> out(n);
  const T* x = input.ptr();
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return make_result<T>(input.shape(), std::move(out), {input}, [input](std::span<const T> grad) {
    if (T* dx = grad_target(input)) {
      const T* x = input.ptr();
      for (std::size_t i = 0; i < grad.size(); ++i) {
        if (x[i] > T(0)) dx[i] += grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  if (input.rank() != 1 && input.rank() != 2) {
    throw Error(Errc::shape_mismatch, "dense input must be [n] or [N,n], got " + shape_str(input.shape()));
  }
  if (weights.rank() != 2) {
    throw Error(Errc::shape_mismatch, "dense weights must be [m,n], got " + shape_str(weights.shape()));
  }
  const bool batched = input.rank() == 2;
  const std::size_t rows = batched ? input.dim(0) : 1;
  const std::size_t in = input.dim(batched ? 1 : 0);
  const std::size_t outw = weights.dim(0);
  if (weights.dim(1) != in) {
    throw Error(Errc::shape_mismatch, "dense input width " + std::to_string(in) + " does not match weights " +
                                          shape_str(weights.shape()));
  }
  if (bias.numel() != outw) {
    throw Error(Errc::shape_mismatch, "dense bias must have " + std::to_string(outw) + " entries");
  }
  std::vector<T> out(rows * outw);
  gemm_nt<T>(rows, outw, in, input.ptr(), in, weights.ptr(), in, out.data(), outw, false);
  const T* b = bias.ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < outw; ++j) out[r * outw + j] += b[j];
  }
  Shape shape = batched ? Shape{rows, outw} : Shape{outw};
  return make_result<T>(std::move(shape), std::move(out), {input, weights, bias},
                        [input, weights, bias, rows, in, outw](std::span<const T> grad) {
                          const T* g = grad.data();
                          if (T* dx = grad_target(input)) {
                            gemm<T>(rows, in, outw, {g, outw, 1}, weights.ptr(), in, dx, in, true);
                          }
                          if (T* dw = grad_target(weights)) {
                            gemm<T>(outw, in, rows, {g, 1, outw}, input.ptr(), in, dw, in, true);
                          }
                          if (T* db = grad_target(bias)) {
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t j = 0; j < outw; ++j) db[j] += g[r * outw + j];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& input, bool batched) {
  if (!batched) return input.reshaped(Shape{input.numel()});
  const std::size_t rows = input.dim(0);
  return input.reshaped(Shape{rows, input.numel() / rows});
}

template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 1 && logits.rank() != 2) {
    throw Error(Errc::shape_mismatch, "logits must be [C] or [N,C], got " + shape_str(logits.shape()));
  }
  const std::size_t rows = logits.rank() == 2 ? logits.dim(0) : 1;
  const std::size_t classes = logits.shape().back();
  if (labels.size() != rows) {
    throw Error(Errc::shape_mismatch, "expected " + std::to_string(rows) + " labels, got " +
                                          std::to_string(labels.size()));
  }
  std::vector<T> probs(rows * classes);
  double total = 0.0;
  const T* z = logits.ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= classes) {
      throw Error(Errc::label_out_of_range, "label " + std::to_string(labels[r]) + " outside [0," +
                                                std::to_string(classes) + ")");
    }
    const T* zr = z + r * classes;
    T* pr = probs.data() + r * classes;
    const T mx = *std::max_element(zr, zr + classes);
    T denom = T(0);
    for (std::size_t c = 0; c < classes; ++c) {
      pr[c] = std::exp(zr[c] - mx);
      denom += pr[c];
    }
    for (std::size_t c = 0; c < classes; ++c) pr[c] /= denom;
    // -log p[label] = log(sum exp(z - max)) - (z[label] - max)
    total += static_cast<double>(std::log(denom) - (zr[labels[r]] - mx));
  }
  std::vector<std::size_t> label_copy(labels.begin(), labels.end());
  Tensor<T> probs_tensor(logits.shape(), probs);
  Tensor<T> loss = make_result<T>(
      Shape{1}, {static_cast<T>(total / static_cast<double>(rows))}, {logits},
      [logits, probs = std::move(probs), label_copy = std::move(label_copy), rows, classes](std::span<const T> grad) {
        if (T* dz = grad_target(logits)) {
          const T scale = grad[0] / static_cast<T>(rows);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < classes; ++c) {
              const T onehot = c == label_copy[r] ? T(1) : T(0);
              dz[r * classes + c] += scale * (probs[r * classes + c] - onehot);
            }
          }
        }
      });
  return {std::move(loss), std::move(probs_tensor)};
}

template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits, std::size_t label) {
  const std::size_t one[1] = {label};
  return softmax_cross_entropy(logits, std::span<const std::size_t>(one));
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw Error(Errc::shape_mismatch, "mse_loss shapes differ: " + shape_str(pred.shape()) + " vs " +
                                          shape_str(target.shape()));
  }
  const std::size_t n = pred.numel();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred.ptr()[i]) - static_cast<double>(target.ptr()[i]);
    total += d * d;
  }
  return make_result<T>(Shape{1}, {static_cast<T>(total / static_cast<double>(n))}, {pred, target},
                        [pred, target, n](std::span<const T> grad) {
                          const T scale = T(2) * grad[0] / static_cast<T>(n);
                          T* dp = grad_target(pred);
                          T* dt = grad_target(target);
                          for (std::size_t i = 0; i < n; ++i) {
                            const T d = pred.ptr()[i] - target.ptr()[i];
                            if (dp) dp[i] += scale * d;
                            if (dt) dt[i] -= scale * d;
                          }
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& input) {
  T total = T(0);
  for (T v : input.data()) total += v;
  return make_result<T>(Shape{1}, {total}, {input}, [input](std::span<const T> grad) {
    if (T* dx = grad_target(input)) {
      for (std::size_t i = 0; i < input.numel(); ++i) dx[i] += grad[0];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw Error(Errc::shape_mismatch, "mul shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.ptr()[i] * b.ptr()[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b](std::span<const T> grad) {
    T* da = grad_target(a);
    T* db = grad_target(b);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      if (da) da[i] += grad[i] * b.ptr()[i];
      if (db) db[i] += grad[i] * a.ptr()[i];
    }
  });
}

#define CEPHLM_INSTANTIATE_OPS(T)                                                                     \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Padding);          \
  template Tensor<T> maxpool2(const Tensor<T>&);                                                      \
  template Tensor<T> relu(const Tensor<T>&);                                                          \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> flatten(const Tensor<T>&, bool);                                                 \
  template SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>&, std::size_t);               \
  template SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>&, std::span<const std::size_t>); \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> sum(const Tensor<T>&);                                                           \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);

CEPHLM_INSTANTIATE_OPS(float)
CEPHLM_INSTANTIATE_OPS(double)

}  // namespace cephlm::numcore
