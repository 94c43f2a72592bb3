#include "vsd/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdio>

namespace vsd {

std::string to_string(const Shape& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "(%d, %d, %d, %d)", s.n, s.c, s.h, s.w);
  return buf;
}

template <typename T>
Tensor<T> Tape<T>::leaf(const Shape& shape, std::span<const T> init,
                        std::string label) {
  if (!init.empty() && long(init.size()) != shape.numel()) {
    throw ContractError("leaf '" + label + "': init size does not match " +
                        to_string(shape));
  }
  Tensor<T> t = alloc(shape, std::move(label));
  if (!init.empty()) {
    std::copy(init.begin(), init.end(), t.values().begin());
  }
  return t;
}

template <typename T>
Tensor<T> Tape<T>::alloc(const Shape& shape, std::string label) {
  Slot slot;
  slot.shape = shape;
  slot.values.assign(size_t(shape.numel()), T(0));
  if (record_) {
    slot.grad.assign(size_t(shape.numel()), T(0));
  }
  slot.label = std::move(label);
  slots_.push_back(std::move(slot));
  return Tensor<T>(this, int(slots_.size()) - 1);
}

template <typename T>
void Tape<T>::push_op(std::function<void(Tape&)> backward_fn) {
  if (record_) {
    ops_.push_back(std::move(backward_fn));
  }
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& root) {
  if (!record_) {
    throw ContractError("backward on a non-recording tape");
  }
  if (backward_done_) {
    throw ContractError("backward called twice on one tape");
  }
  if (root.shape().numel() != 1) {
    throw ContractError("backward root must be scalar, got " +
                        to_string(root.shape()));
  }
  backward_done_ = true;
  grad_of(root.id())[0] = T(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    (*it)(*this);
  }
}

template <typename T>
std::optional<typename Tape<T>::NonFinite> Tape<T>::first_non_finite() const {
  for (int id = 0; id < int(slots_.size()); ++id) {
    for (T v : slots_[id].values) {
      if (!std::isfinite(double(v))) {
        return NonFinite{id, slots_[id].label};
      }
    }
  }
  return std::nullopt;
}

namespace {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Unrolls one sample's (C, H, W) block into a (C*k*k) x (Ho*Wo) matrix.
template <typename T>
void im2col(const T* in, int c_in, int h, int w, int k, int stride, int pad,
            int ho, int wo, T* col) {
  for (int c = 0; c < c_in; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (size_t(c) * k * k + size_t(ky) * k + kx) *
                           (size_t(ho) * wo);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            row[size_t(oy) * wo + ox] =
                (iy >= 0 && iy < h && ix >= 0 && ix < w)
                    ? in[(size_t(c) * h + iy) * w + ix]
                    : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int c_in, int h, int w, int k, int stride,
                int pad, int ho, int wo, T* out) {
  for (int c = 0; c < c_in; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (size_t(c) * k * k + size_t(ky) * k + kx) *
                                 (size_t(ho) * wo);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= w) continue;
            out[(size_t(c) * h + iy) * w + ix] += row[size_t(oy) * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights,
                 const Tensor<T>& bias, int stride, int padding) {
  const Shape& xs = input.shape();
  const Shape& ws = weights.shape();
  const Shape& bs = bias.shape();
  if (ws.h != ws.w) {
    throw ConfigError("conv2d: kernel must be square, got " + to_string(ws));
  }
  const int k = ws.h;
  if (xs.c != ws.c) {
    throw ConfigError("conv2d: input channels " + std::to_string(xs.c) +
                      " do not match weight channels " + std::to_string(ws.c));
  }
  if (!(bs == Shape{1, ws.n, 1, 1})) {
    throw ConfigError("conv2d: bias shape " + to_string(bs) +
                      " does not match " + std::to_string(ws.n) + " filters");
  }
  if (stride != 1 && stride != 2) {
    throw ConfigError("conv2d: stride must be 1 or 2");
  }
  if (padding < 0) {
    throw ConfigError("conv2d: negative padding");
  }
  const int ho = (xs.h + 2 * padding - k) / stride + 1;
  const int wo = (xs.w + 2 * padding - k) / stride + 1;
  if (xs.h + 2 * padding < k || xs.w + 2 * padding < k) {
    throw ConfigError("conv2d: kernel larger than padded input");
  }

  Tape<T>& tape = input.tape();
  Tensor<T> out = tape.alloc({xs.n, ws.n, ho, wo}, "conv2d");

  const size_t in_stride = size_t(xs.c) * xs.h * xs.w;
  const size_t out_stride = size_t(ws.n) * ho * wo;
  const size_t col_rows = size_t(xs.c) * k * k;
  const size_t col_cols = size_t(ho) * wo;
  std::vector<T> col(col_rows * col_cols);

  Eigen::Map<const MatX<T>> wmat(weights.values().data(), ws.n, col_rows);
  Eigen::Map<const VecX<T>> bvec(bias.values().data(), ws.n);
  for (int n = 0; n < xs.n; ++n) {
    im2col(input.values().data() + n * in_stride, xs.c, xs.h, xs.w, k, stride,
           padding, ho, wo, col.data());
    Eigen::Map<const MatX<T>> cmat(col.data(), col_rows, col_cols);
    Eigen::Map<MatX<T>> omat(out.values().data() + n * out_stride, ws.n,
                             col_cols);
    omat.noalias() = wmat * cmat;
    omat.colwise() += bvec;
  }

  const int xid = input.id(), wid = weights.id(), bid = bias.id(),
            oid = out.id();
  const Shape xshape = xs, wshape = ws;
  tape.push_op([=](Tape<T>& t) {
    const size_t rows = size_t(xshape.c) * k * k;
    const size_t cols = size_t(ho) * wo;
    std::vector<T> colbuf(rows * cols);
    std::vector<T> dcol(rows * cols);
    Eigen::Map<const MatX<T>> w(t.values_of(wid).data(), wshape.n, rows);
    Eigen::Map<MatX<T>> dw(t.grad_of(wid).data(), wshape.n, rows);
    T* db = t.grad_of(bid).data();
    const size_t instride = size_t(xshape.c) * xshape.h * xshape.w;
    const size_t outstride = size_t(wshape.n) * ho * wo;
    for (int n = 0; n < xshape.n; ++n) {
      Eigen::Map<const MatX<T>> dy(t.grad_of(oid).data() + n * outstride,
                                   wshape.n, cols);
      im2col(t.values_of(xid).data() + n * instride, xshape.c, xshape.h,
             xshape.w, k, stride, padding, ho, wo, colbuf.data());
      Eigen::Map<const MatX<T>> cmat(colbuf.data(), rows, cols);
      dw.noalias() += dy * cmat.transpose();
      // Summed by hand: Eigen's reduction on an unaligned map peels to a
      // SIMD boundary, so its addition order (and rounding) would depend
      // on where the heap put this buffer. Run-to-run bit stability needs
      // a fixed order.
      const T* dyp = t.grad_of(oid).data() + n * outstride;
      for (int oc = 0; oc < wshape.n; ++oc) {
        T acc = T(0);
        for (size_t q = 0; q < cols; ++q) acc += dyp[size_t(oc) * cols + q];
        db[oc] += acc;
      }
      Eigen::Map<MatX<T>> dc(dcol.data(), rows, cols);
      dc.noalias() = w.transpose() * dy;
      col2im_add(dcol.data(), xshape.c, xshape.h, xshape.w, k, stride, padding,
                 ho, wo, t.grad_of(xid).data() + n * instride);
    }
  });
  return out;
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& input) {
  const Shape s = input.shape();
  Tape<T>& tape = input.tape();
  Tensor<T> out = tape.alloc({s.n, s.c, 2 * s.h, 2 * s.w}, "upsample2x");
  const T* in = input.values().data();
  T* o = out.values().data();
  const size_t planes = size_t(s.n) * s.c;
  for (size_t p = 0; p < planes; ++p) {
    const T* ip = in + p * s.h * s.w;
    T* op = o + p * 4 * s.h * s.w;
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        const T v = ip[size_t(y) * s.w + x];
        T* q = op + size_t(2 * y) * 2 * s.w + 2 * x;
        q[0] = v;
        q[1] = v;
        q[2 * s.w] = v;
        q[2 * s.w + 1] = v;
      }
    }
  }
  const int xid = input.id(), oid = out.id();
  tape.push_op([=](Tape<T>& t) {
    const T* g = t.grad_of(oid).data();
    T* gx = t.grad_of(xid).data();
    for (size_t p = 0; p < planes; ++p) {
      const T* gp = g + p * 4 * s.h * s.w;
      T* gxp = gx + p * s.h * s.w;
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          const T* q = gp + size_t(2 * y) * 2 * s.w + 2 * x;
          gxp[size_t(y) * s.w + x] += q[0] + q[1] + q[2 * s.w] + q[2 * s.w + 1];
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ConfigError("concat_channels: " + to_string(sa) + " vs " +
                      to_string(sb));
  }
  Tape<T>& tape = a.tape();
  Tensor<T> out = tape.alloc({sa.n, sa.c + sb.c, sa.h, sa.w}, "concat");
  const size_t plane = size_t(sa.h) * sa.w;
  const size_t ablk = size_t(sa.c) * plane, bblk = size_t(sb.c) * plane;
  for (int n = 0; n < sa.n; ++n) {
    T* dst = out.values().data() + n * (ablk + bblk);
    std::copy_n(a.values().data() + n * ablk, ablk, dst);
    std::copy_n(b.values().data() + n * bblk, bblk, dst + ablk);
  }
  const int aid = a.id(), bid = b.id(), oid = out.id();
  const int batch = sa.n;
  tape.push_op([=](Tape<T>& t) {
    const T* g = t.grad_of(oid).data();
    for (int n = 0; n < batch; ++n) {
      const T* src = g + n * (ablk + bblk);
      T* ga = t.grad_of(aid).data() + n * ablk;
      T* gb = t.grad_of(bid).data() + n * bblk;
      for (size_t i = 0; i < ablk; ++i) ga[i] += src[i];
      for (size_t i = 0; i < bblk; ++i) gb[i] += src[ablk + i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, double slope) {
  Tape<T>& tape = input.tape();
  Tensor<T> out = tape.alloc(input.shape(), "leaky_relu");
  const T s = T(slope);
  const auto in = input.values();
  auto o = out.values();
  for (size_t i = 0; i < in.size(); ++i) {
    o[i] = in[i] >= T(0) ? in[i] : s * in[i];
  }
  const int xid = input.id(), oid = out.id();
  tape.push_op([=](Tape<T>& t) {
    const auto x = t.values_of(xid);
    const auto g = t.grad_of(oid);
    auto gx = t.grad_of(xid);
    for (size_t i = 0; i < x.size(); ++i) {
      gx[i] += x[i] >= T(0) ? g[i] : s * g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
  Tape<T>& tape = input.tape();
  Tensor<T> out = tape.alloc(input.shape(), "sigmoid");
  const auto in = input.values();
  auto o = out.values();
  for (size_t i = 0; i < in.size(); ++i) {
    const T x = in[i];
    if (x >= T(0)) {
      o[i] = T(1) / (T(1) + std::exp(-x));
    } else {
      const T e = std::exp(x);
      o[i] = e / (T(1) + e);
    }
  }
  const int xid = input.id(), oid = out.id();
  tape.push_op([=](Tape<T>& t) {
    const auto y = t.values_of(oid);
    const auto g = t.grad_of(oid);
    auto gx = t.grad_of(xid);
    for (size_t i = 0; i < y.size(); ++i) {
      gx[i] += g[i] * y[i] * (T(1) - y[i]);
    }
  });
  return out;
}

template <typename T>
Tensor<T> scale_shift(const Tensor<T>& input, double a, double b) {
  Tape<T>& tape = input.tape();
  Tensor<T> out = tape.alloc(input.shape(), "scale_shift");
  const auto in = input.values();
  auto o = out.values();
  for (size_t i = 0; i < in.size(); ++i) {
    o[i] = T(a) * in[i] + T(b);
  }
  const int xid = input.id(), oid = out.id();
  tape.push_op([=](Tape<T>& t) {
    const auto g = t.grad_of(oid);
    auto gx = t.grad_of(xid);
    for (size_t i = 0; i < g.size(); ++i) {
      gx[i] += T(a) * g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) {
    throw ConfigError("add: " + to_string(a.shape()) + " vs " +
                      to_string(b.shape()));
  }
  Tape<T>& tape = a.tape();
  Tensor<T> out = tape.alloc(a.shape(), "add");
  const auto av = a.values();
  const auto bv = b.values();
  auto o = out.values();
  for (size_t i = 0; i < av.size(); ++i) o[i] = av[i] + bv[i];
  const int aid = a.id(), bid = b.id(), oid = out.id();
  tape.push_op([=](Tape<T>& t) {
    const auto g = t.grad_of(oid);
    auto ga = t.grad_of(aid);
    auto gb = t.grad_of(bid);
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> detach(const Tensor<T>& input) {
  Tape<T>& tape = input.tape();
  Tensor<T> out = tape.alloc(input.shape(), "detach");
  std::copy(input.values().begin(), input.values().end(),
            out.values().begin());
  return out;
}

template <typename T>
Tensor<T> l1_mean(const Tensor<T>& pred, const Tensor<T>& target,
                  const Tensor<T>* mask, long* n_out) {
  if (!(pred.shape() == target.shape())) {
    throw ConfigError("l1_mean: " + to_string(pred.shape()) + " vs " +
                      to_string(target.shape()));
  }
  if (mask && !(mask->shape() == pred.shape())) {
    throw ConfigError("l1_mean: mask shape " + to_string(mask->shape()) +
                      " does not match " + to_string(pred.shape()));
  }
  Tape<T>& tape = pred.tape();
  const auto p = pred.values();
  const auto y = target.values();
  double sum = 0.0;
  double denom = 0.0;
  if (mask) {
    const auto m = mask->values();
    for (size_t i = 0; i < p.size(); ++i) {
      if (m[i] != T(0)) {
        sum += std::abs(double(p[i]) - double(y[i]));
        denom += 1.0;
      }
    }
  } else {
    for (size_t i = 0; i < p.size(); ++i) {
      sum += std::abs(double(p[i]) - double(y[i]));
    }
    denom = double(p.size());
  }
  if (denom == 0.0) {
    throw DegenerateInputError("l1_mean: mask admits no pixels");
  }
  if (n_out) *n_out = long(denom);
  Tensor<T> out = tape.alloc({1, 1, 1, 1}, "l1_mean");
  out.values()[0] = T(sum / denom);

  const int pid = pred.id(), yid = target.id(), oid = out.id();
  const int mid = mask ? mask->id() : -1;
  const T inv_n = T(1.0 / denom);
  tape.push_op([=](Tape<T>& t) {
    const T g = t.grad_of(oid)[0];
    const auto pv = t.values_of(pid);
    const auto yv = t.values_of(yid);
    auto gp = t.grad_of(pid);
    auto gy = t.grad_of(yid);
    const T* mv = mid >= 0 ? t.values_of(mid).data() : nullptr;
    for (size_t i = 0; i < pv.size(); ++i) {
      if (mv && mv[i] == T(0)) continue;
      const T d = pv[i] - yv[i];
      const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
      gp[i] += g * s * inv_n;
      gy[i] -= g * s * inv_n;
    }
  });
  return out;
}

template <typename T>
Tensor<T> linear_combination(std::span<const Tensor<T>> xs,
                             std::span<const double> coeffs) {
  if (xs.empty() || xs.size() != coeffs.size()) {
    throw ContractError("linear_combination: term/coefficient mismatch");
  }
  for (const auto& x : xs) {
    if (!(x.shape() == xs[0].shape())) {
      throw ConfigError("linear_combination: shapes differ");
    }
  }
  Tape<T>& tape = xs[0].tape();
  Tensor<T> out = tape.alloc(xs[0].shape(), "linear_combination");
  auto o = out.values();
  for (size_t i = 0; i < o.size(); ++i) {
    double acc = 0.0;
    for (size_t j = 0; j < xs.size(); ++j) {
      acc += coeffs[j] * double(xs[j].values()[i]);
    }
    o[i] = T(acc);
  }
  std::vector<int> ids;
  for (const auto& x : xs) ids.push_back(x.id());
  std::vector<double> cs(coeffs.begin(), coeffs.end());
  const int oid = out.id();
  tape.push_op([=](Tape<T>& t) {
    const auto g = t.grad_of(oid);
    for (size_t j = 0; j < ids.size(); ++j) {
      auto gx = t.grad_of(ids[j]);
      for (size_t i = 0; i < g.size(); ++i) {
        gx[i] += T(cs[j]) * g[i];
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& input, std::span<const T> weights) {
  if (long(weights.size()) != input.shape().numel()) {
    throw ContractError("weighted_sum: weight count mismatch");
  }
  Tape<T>& tape = input.tape();
  Tensor<T> out = tape.alloc({1, 1, 1, 1}, "weighted_sum");
  double acc = 0.0;
  const auto in = input.values();
  for (size_t i = 0; i < in.size(); ++i) {
    acc += double(weights[i]) * double(in[i]);
  }
  out.values()[0] = T(acc);
  std::vector<T> w(weights.begin(), weights.end());
  const int xid = input.id(), oid = out.id();
  tape.push_op([w = std::move(w), xid, oid](Tape<T>& t) {
    const T g = t.grad_of(oid)[0];
    auto gx = t.grad_of(xid);
    for (size_t i = 0; i < w.size(); ++i) {
      gx[i] += g * w[i];
    }
  });
  return out;
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads,
               AdamState<T>& state, double lr, double beta1, double beta2,
               double eps) {
  if (params.size() != grads.size()) {
    throw ContractError("adam_step: param/grad size mismatch");
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), T(0));
    state.v.assign(params.size(), T(0));
  }
  if (state.m.size() != params.size()) {
    throw ContractError("adam_step: state size mismatch");
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(beta1, double(state.t));
  const double c2 = 1.0 - std::pow(beta2, double(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = double(grads[i]);
    const double m = beta1 * double(state.m[i]) + (1.0 - beta1) * g;
    const double v = beta2 * double(state.v[i]) + (1.0 - beta2) * g * g;
    state.m[i] = T(m);
    state.v[i] = T(v);
    // A +-0 step must not touch the stored bits (a -0.0 parameter would
    // silently flip sign); this keeps lr = 0 runs bit-identical.
    const T step = T(lr * (m / c1) / (std::sqrt(v / c2) + eps));
    if (step != T(0)) params[i] -= step;
  }
}

#define VSD_INSTANTIATE(T)                                                    \
  template class Tape<T>;                                                     \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&,              \
                            const Tensor<T>&, int, int);                      \
  template Tensor<T> upsample_nearest2x(const Tensor<T>&);                    \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> leaky_relu(const Tensor<T>&, double);                    \
  template Tensor<T> sigmoid(const Tensor<T>&);                               \
  template Tensor<T> scale_shift(const Tensor<T>&, double, double);           \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> detach(const Tensor<T>&);                                \
  template Tensor<T> l1_mean(const Tensor<T>&, const Tensor<T>&,              \
                             const Tensor<T>*, long*);                        \
  template Tensor<T> linear_combination(std::span<const Tensor<T>>,           \
                                        std::span<const double>);             \
  template Tensor<T> weighted_sum(const Tensor<T>&, std::span<const T>);      \
  template void adam_step(std::span<T>, std::span<const T>, AdamState<T>&,    \
                          double, double, double, double);

VSD_INSTANTIATE(float)
VSD_INSTANTIATE(double)

#undef VSD_INSTANTIATE

}  // namespace vsd
