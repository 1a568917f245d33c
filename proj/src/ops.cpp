#include "lstfuse/ops.hpp"

#include "lstfuse/raster.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace lstfuse::ad {

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b) {
  auto dim = [&](Index x, Index y) {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw ShapeError("cannot broadcast " + a.str() + " with " + b.str());
  };
  return {dim(a.n, b.n), dim(a.c, b.c), dim(a.h, b.h), dim(a.w, b.w)};
}

template <typename Scalar>
Tensor<Scalar> expand(const Tensor<Scalar>& t, const Shape& to) {
  const Shape& s = t.shape();
  if (s == to) return t;
  Tensor<Scalar> out(to);
  for (Index n = 0; n < to.n; ++n) {
    for (Index c = 0; c < to.c; ++c) {
      for (Index y = 0; y < to.h; ++y) {
        for (Index x = 0; x < to.w; ++x) {
          out(n, c, y, x) = t(s.n == 1 ? 0 : n, s.c == 1 ? 0 : c, s.h == 1 ? 0 : y, s.w == 1 ? 0 : x);
        }
      }
    }
  }
  return out;
}

// Sums a broadcast gradient back down to the operand's shape.
template <typename Scalar>
Tensor<Scalar> reduce_to(const Tensor<Scalar>& g, const Shape& to) {
  const Shape& s = g.shape();
  if (s == to) return g;
  Tensor<Scalar> out(to);
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      for (Index y = 0; y < s.h; ++y) {
        for (Index x = 0; x < s.w; ++x) {
          out(to.n == 1 ? 0 : n, to.c == 1 ? 0 : c, to.h == 1 ? 0 : y, to.w == 1 ? 0 : x) += g(n, c, y, x);
        }
      }
    }
  }
  return out;
}

template <typename Scalar, typename F>
Tensor<Scalar> map_unary(const Tensor<Scalar>& a, F f) {
  Tensor<Scalar> out(a.shape());
  out.array() = a.array().unaryExpr(f);
  return out;
}

// Output columns [lo, hi) whose input column ox * stride - pad + kj lies inside [0, w).
inline std::pair<Index, Index> valid_columns(Index w, Index stride, Index pad, Index kj, Index out_w) {
  const Index off = kj - pad;
  Index lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  Index hi = (w - 1 - off) >= 0 ? (w - 1 - off) / stride + 1 : 0;
  lo = std::min(lo, out_w);
  hi = std::clamp(hi, lo, out_w);
  return {lo, hi};
}

template <typename Scalar>
void im2col(const Scalar* img, Index channels, Index h, Index w, Index k, Index stride, Index pad, Index out_h,
            Index out_w, Scalar* cols) {
  const Index npix = out_h * out_w;
  for (Index c = 0; c < channels; ++c) {
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj) {
        Scalar* row = cols + ((c * k + ki) * k + kj) * npix;
        const auto [lo, hi] = valid_columns(w, stride, pad, kj, out_w);
        const Index off = kj - pad;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * stride - pad + ki;
          Scalar* dst = row + oy * out_w;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + out_w, Scalar(0));
            continue;
          }
          const Scalar* src = img + (c * h + iy) * w;
          std::fill(dst, dst + lo, Scalar(0));
          if (stride == 1) {
            std::copy(src + lo + off, src + hi + off, dst + lo);
          } else {
            for (Index ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride + off];
          }
          std::fill(dst + hi, dst + out_w, Scalar(0));
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const Scalar* cols, Index channels, Index h, Index w, Index k, Index stride, Index pad, Index out_h,
            Index out_w, Scalar* img) {
  const Index npix = out_h * out_w;
  for (Index c = 0; c < channels; ++c) {
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj) {
        const Scalar* row = cols + ((c * k + ki) * k + kj) * npix;
        const auto [lo, hi] = valid_columns(w, stride, pad, kj, out_w);
        const Index off = kj - pad;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          const Scalar* src = row + oy * out_w;
          Scalar* dst = img + (c * h + iy) * w;
          if (stride == 1) {
            for (Index ox = lo; ox < hi; ++ox) dst[ox + off] += src[ox];
          } else {
            for (Index ox = lo; ox < hi; ++ox) dst[ox * stride + off] += src[ox];
          }
        }
      }
    }
  }
}

template <typename Scalar>
Eigen::Map<const RowMatrix<Scalar>> as_matrix(const Tensor<Scalar>& t, Index rows, Index cols) {
  return Eigen::Map<const RowMatrix<Scalar>>(t.data(), rows, cols);
}

template <typename Scalar>
Eigen::Map<RowMatrix<Scalar>> as_matrix(Tensor<Scalar>& t, Index rows, Index cols) {
  return Eigen::Map<RowMatrix<Scalar>>(t.data(), rows, cols);
}

template <typename Scalar>
Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> as_vector(const Tensor<Scalar>& t) {
  return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(t.data(), t.size());
}

}  // namespace

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  Tensor<Scalar> out = expand(a.value(), out_shape);
  out.array() += expand(b.value(), out_shape).array();
  return make_result<Scalar>(std::move(out), {a, b}, [a, b](const Tensor<Scalar>& g) {
    accumulate(a, reduce_to(g, a.shape()));
    accumulate(b, reduce_to(g, b.shape()));
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  Tensor<Scalar> out = expand(a.value(), out_shape);
  out.array() -= expand(b.value(), out_shape).array();
  return make_result<Scalar>(std::move(out), {a, b}, [a, b](const Tensor<Scalar>& g) {
    accumulate(a, reduce_to(g, a.shape()));
    if (b.requires_grad()) {
      Tensor<Scalar> gb = reduce_to(g, b.shape());
      gb.array() = -gb.array();
      accumulate(b, gb);
    }
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  Tensor<Scalar> out = expand(a.value(), out_shape);
  out.array() *= expand(b.value(), out_shape).array();
  return make_result<Scalar>(std::move(out), {a, b}, [a, b, out_shape](const Tensor<Scalar>& g) {
    if (a.requires_grad()) {
      Tensor<Scalar> ga = expand(b.value(), out_shape);
      ga.array() *= g.array();
      accumulate(a, reduce_to(ga, a.shape()));
    }
    if (b.requires_grad()) {
      Tensor<Scalar> gb = expand(a.value(), out_shape);
      gb.array() *= g.array();
      accumulate(b, reduce_to(gb, b.shape()));
    }
  });
}

template <typename Scalar>
Var<Scalar> div(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  Tensor<Scalar> out = expand(a.value(), out_shape);
  out.array() /= expand(b.value(), out_shape).array();
  return make_result<Scalar>(std::move(out), {a, b}, [a, b, out_shape](const Tensor<Scalar>& g) {
    const Tensor<Scalar> bx = expand(b.value(), out_shape);
    if (a.requires_grad()) {
      Tensor<Scalar> ga(out_shape);
      ga.array() = g.array() / bx.array();
      accumulate(a, reduce_to(ga, a.shape()));
    }
    if (b.requires_grad()) {
      Tensor<Scalar> gb = expand(a.value(), out_shape);
      gb.array() = -g.array() * gb.array() / bx.array().square();
      accumulate(b, reduce_to(gb, b.shape()));
    }
  });
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar s) {
  Tensor<Scalar> out = a.value();
  out.array() += s;
  return make_result<Scalar>(std::move(out), {a}, [a](const Tensor<Scalar>& g) { accumulate(a, g); });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  Tensor<Scalar> out = a.value();
  out.array() *= s;
  return make_result<Scalar>(std::move(out), {a}, [a, s](const Tensor<Scalar>& g) {
    Tensor<Scalar> ga = g;
    ga.array() *= s;
    accumulate(a, ga);
  });
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& a) {
  Tensor<Scalar> out = a.value();
  out.array() = out.array().square();
  return make_result<Scalar>(std::move(out), {a}, [a](const Tensor<Scalar>& g) {
    Tensor<Scalar> ga = g;
    ga.array() *= Scalar(2) * a.value().array();
    accumulate(a, ga);
  });
}

template <typename Scalar>
Var<Scalar> abs(const Var<Scalar>& a) {
  Tensor<Scalar> out = a.value();
  out.array() = out.array().abs();
  return make_result<Scalar>(std::move(out), {a}, [a](const Tensor<Scalar>& g) {
    Tensor<Scalar> ga = g;
    ga.array() *= a.value().array().sign();
    accumulate(a, ga);
  });
}

template <typename Scalar>
Var<Scalar> pow_scalar(const Var<Scalar>& a, Scalar p) {
  Tensor<Scalar> out = a.value();
  out.array() = out.array().pow(p);
  return make_result<Scalar>(std::move(out), {a}, [a, p](const Tensor<Scalar>& g) {
    Tensor<Scalar> ga = g;
    ga.array() *= p * a.value().array().pow(p - Scalar(1));
    accumulate(a, ga);
  });
}

template <typename Scalar>
Var<Scalar> clamp_min(const Var<Scalar>& a, Scalar lo) {
  Tensor<Scalar> out = a.value();
  out.array() = out.array().max(lo);
  return make_result<Scalar>(std::move(out), {a}, [a, lo](const Tensor<Scalar>& g) {
    Tensor<Scalar> ga = g;
    ga.array() = (a.value().array() > lo).select(g.array(), Scalar(0));
    accumulate(a, ga);
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  Tensor<Scalar> out = a.value();
  out.array() = out.array().max(Scalar(0));
  return make_result<Scalar>(std::move(out), {a}, [a](const Tensor<Scalar>& g) {
    Tensor<Scalar> ga = g;
    ga.array() = (a.value().array() > Scalar(0)).select(g.array(), Scalar(0));
    accumulate(a, ga);
  });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& a, Scalar slope) {
  Tensor<Scalar> out = a.value();
  out.array() = (out.array() > Scalar(0)).select(out.array(), slope * out.array());
  return make_result<Scalar>(std::move(out), {a}, [a, slope](const Tensor<Scalar>& g) {
    Tensor<Scalar> ga = g;
    ga.array() = (a.value().array() > Scalar(0)).select(g.array(), slope * g.array());
    accumulate(a, ga);
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  Tensor<Scalar> out = map_unary(a.value(), [](Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); });
  Var<Scalar> result = make_result<Scalar>(out, {a}, {});
  if (result.requires_grad()) {
    result.node()->backward_fn = [a, out](const Tensor<Scalar>& g) {
      Tensor<Scalar> ga = g;
      ga.array() *= out.array() * (Scalar(1) - out.array());
      accumulate(a, ga);
    };
  }
  return result;
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  Tensor<Scalar> out(Shape{1, 1, 1, 1});
  out.array()[0] = a.value().array().sum();
  return make_result<Scalar>(std::move(out), {a}, [a](const Tensor<Scalar>& g) {
    accumulate(a, Tensor<Scalar>(a.shape(), g.array()[0]));
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  const Scalar count = static_cast<Scalar>(a.value().size());
  Tensor<Scalar> out(Shape{1, 1, 1, 1});
  out.array()[0] = a.value().array().sum() / count;
  return make_result<Scalar>(std::move(out), {a}, [a, count](const Tensor<Scalar>& g) {
    accumulate(a, Tensor<Scalar>(a.shape(), g.array()[0] / count));
  });
}

template <typename Scalar>
Var<Scalar> mean_spatial(const Var<Scalar>& a) {
  const Shape s = a.shape();
  Tensor<Scalar> out(Shape{s.n, s.c, 1, 1});
  for (Index n = 0; n < s.n; ++n) {
    out.sample_matrix(n) = a.value().sample_matrix(n).rowwise().mean();
  }
  return make_result<Scalar>(std::move(out), {a}, [a, s](const Tensor<Scalar>& g) {
    Tensor<Scalar> ga(s);
    const Scalar inv = Scalar(1) / static_cast<Scalar>(s.plane());
    for (Index n = 0; n < s.n; ++n) {
      for (Index c = 0; c < s.c; ++c) ga.plane(n, c).setConstant(g(n, c, 0, 0) * inv);
    }
    accumulate(a, ga);
  });
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& a, Shape s) {
  return make_result<Scalar>(a.value().reshaped(s), {a}, [a](const Tensor<Scalar>& g) {
    accumulate(a, g.reshaped(a.shape()));
  });
}

template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  require_shape(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w,
                "concat_channels: " + sa.str() + " vs " + sb.str());
  Tensor<Scalar> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const Index pa = sa.c * sa.plane(), pb = sb.c * sb.plane();
  for (Index n = 0; n < sa.n; ++n) {
    std::copy_n(a.value().plane_data(n, 0), pa, out.plane_data(n, 0));
    std::copy_n(b.value().plane_data(n, 0), pb, out.plane_data(n, sa.c));
  }
  return make_result<Scalar>(std::move(out), {a, b}, [a, b, sa, sb, pa, pb](const Tensor<Scalar>& g) {
    if (a.requires_grad()) {
      Tensor<Scalar> ga(sa);
      for (Index n = 0; n < sa.n; ++n) std::copy_n(g.plane_data(n, 0), pa, ga.plane_data(n, 0));
      accumulate(a, ga);
    }
    if (b.requires_grad()) {
      Tensor<Scalar> gb(sb);
      for (Index n = 0; n < sb.n; ++n) std::copy_n(g.plane_data(n, sa.c), pb, gb.plane_data(n, 0));
      accumulate(b, gb);
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_batch(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  require_shape(sa.c == sb.c && sa.h == sb.h && sa.w == sb.w, "concat_batch: " + sa.str() + " vs " + sb.str());
  Tensor<Scalar> out(Shape{sa.n + sb.n, sa.c, sa.h, sa.w});
  out.array().head(sa.size()) = a.value().array();
  out.array().tail(sb.size()) = b.value().array();
  return make_result<Scalar>(std::move(out), {a, b}, [a, b, sa, sb](const Tensor<Scalar>& g) {
    if (a.requires_grad()) {
      Tensor<Scalar> ga(sa);
      ga.array() = g.array().head(sa.size());
      accumulate(a, ga);
    }
    if (b.requires_grad()) {
      Tensor<Scalar> gb(sb);
      gb.array() = g.array().tail(sb.size());
      accumulate(b, gb);
    }
  });
}

template <typename Scalar>
Var<Scalar> slice_batch(const Var<Scalar>& a, Index start, Index count) {
  const Shape s = a.shape();
  require_shape(start >= 0 && count > 0 && start + count <= s.n,
                "slice_batch: samples [" + std::to_string(start) + ", " + std::to_string(start + count) + ") of " +
                    s.str());
  const Index per = s.c * s.plane();
  Tensor<Scalar> out(Shape{count, s.c, s.h, s.w});
  out.array() = a.value().array().segment(start * per, count * per);
  return make_result<Scalar>(std::move(out), {a}, [a, s, start, count, per](const Tensor<Scalar>& g) {
    Tensor<Scalar> ga(s);
    ga.array().segment(start * per, count * per) = g.array();
    accumulate(a, ga);
  });
}

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, Index stride,
                   Index pad) {
  const Shape xs = x.shape(), ws = weight.shape();
  require_shape(ws.c == xs.c && ws.h == ws.w,
                "conv2d: input " + xs.str() + " incompatible with weight " + ws.str());
  const Index k = ws.h, cout = ws.n, rows = xs.c * k * k;
  const Index oh = (xs.h + 2 * pad - k) / stride + 1, ow = (xs.w + 2 * pad - k) / stride + 1;
  require_shape(oh > 0 && ow > 0, "conv2d: input " + xs.str() + " too small for kernel " + ws.str());
  const bool pointwise = k == 1 && stride == 1 && pad == 0;
  const Index npix = oh * ow;

  Tensor<Scalar> out(Shape{xs.n, cout, oh, ow});
  const auto wm = as_matrix(weight.value(), cout, rows);
  RowMatrix<Scalar> cols(pointwise ? 0 : rows, pointwise ? 0 : npix);
  for (Index n = 0; n < xs.n; ++n) {
    auto dst = out.sample_matrix(n);
    if (pointwise) {
      dst.noalias() = wm * x.value().sample_matrix(n);
    } else {
      im2col(x.value().plane_data(n, 0), xs.c, xs.h, xs.w, k, stride, pad, oh, ow, cols.data());
      dst.noalias() = wm * cols;
    }
    if (bias.defined()) dst.colwise() += as_vector(bias.value());
  }

  std::vector<Var<Scalar>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<Scalar>(std::move(out), inputs, [=](const Tensor<Scalar>& g) {
    const auto wmat = as_matrix(weight.value(), cout, rows);
    RowMatrix<Scalar> buf(pointwise ? 0 : rows, pointwise ? 0 : npix);
    RowMatrix<Scalar> gcols;
    Tensor<Scalar> gx;
    if (x.requires_grad()) gx = Tensor<Scalar>(xs);
    for (Index n = 0; n < xs.n; ++n) {
      const auto gm = g.sample_matrix(n);
      if (weight.requires_grad()) {
        auto gw = as_matrix(weight.node()->ensure_grad(), cout, rows);
        if (pointwise) {
          gw.noalias() += gm * x.value().sample_matrix(n).transpose();
        } else {
          im2col(x.value().plane_data(n, 0), xs.c, xs.h, xs.w, k, stride, pad, oh, ow, buf.data());
          gw.noalias() += gm * buf.transpose();
        }
      }
      if (bias.defined() && bias.requires_grad()) {
        Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(bias.node()->ensure_grad().data(), cout) +=
            gm.rowwise().sum();
      }
      if (x.requires_grad()) {
        if (pointwise) {
          gx.sample_matrix(n).noalias() = wmat.transpose() * gm;
        } else {
          gcols.noalias() = wmat.transpose() * gm;
          col2im(gcols.data(), xs.c, xs.h, xs.w, k, stride, pad, oh, ow, gx.plane_data(n, 0));
        }
      }
    }
    if (x.requires_grad()) accumulate(x, gx);
  });
}

template <typename Scalar>
Var<Scalar> conv_transpose2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                             Index stride, Index pad) {
  const Shape xs = x.shape(), ws = weight.shape();
  require_shape(ws.n == xs.c && ws.h == ws.w,
                "conv_transpose2d: input " + xs.str() + " incompatible with weight " + ws.str());
  const Index k = ws.h, cout = ws.c, rows = cout * k * k;
  const Index oh = (xs.h - 1) * stride - 2 * pad + k, ow = (xs.w - 1) * stride - 2 * pad + k;
  require_shape(oh > 0 && ow > 0, "conv_transpose2d: empty output");
  const Index npix = xs.plane();

  Tensor<Scalar> out(Shape{xs.n, cout, oh, ow});
  const auto wm = as_matrix(weight.value(), xs.c, rows);
  RowMatrix<Scalar> cols(rows, npix);
  for (Index n = 0; n < xs.n; ++n) {
    cols.noalias() = wm.transpose() * x.value().sample_matrix(n);
    col2im(cols.data(), cout, oh, ow, k, stride, pad, xs.h, xs.w, out.plane_data(n, 0));
    if (bias.defined()) out.sample_matrix(n).colwise() += as_vector(bias.value());
  }

  std::vector<Var<Scalar>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<Scalar>(std::move(out), inputs, [=](const Tensor<Scalar>& g) {
    const auto wmat = as_matrix(weight.value(), xs.c, rows);
    RowMatrix<Scalar> gcols(rows, npix);
    Tensor<Scalar> gx;
    if (x.requires_grad()) gx = Tensor<Scalar>(xs);
    for (Index n = 0; n < xs.n; ++n) {
      im2col(g.plane_data(n, 0), cout, oh, ow, k, stride, pad, xs.h, xs.w, gcols.data());
      if (x.requires_grad()) gx.sample_matrix(n).noalias() = wmat * gcols;
      if (weight.requires_grad()) {
        as_matrix(weight.node()->ensure_grad(), xs.c, rows).noalias() +=
            x.value().sample_matrix(n) * gcols.transpose();
      }
      if (bias.defined() && bias.requires_grad()) {
        Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(bias.node()->ensure_grad().data(), cout) +=
            g.sample_matrix(n).rowwise().sum();
      }
    }
    if (x.requires_grad()) accumulate(x, gx);
  });
}

template <typename Scalar>
Var<Scalar> avg_pool(const Var<Scalar>& x, Index factor) {
  const Shape s = x.shape();
  require_shape(factor > 0 && s.h % factor == 0 && s.w % factor == 0,
                "avg_pool: " + s.str() + " not divisible by " + std::to_string(factor));
  const Shape os{s.n, s.c, s.h / factor, s.w / factor};
  const Scalar inv = Scalar(1) / static_cast<Scalar>(factor * factor);
  Tensor<Scalar> out(os);
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      const auto src = x.value().plane(n, c);
      auto dst = out.plane(n, c);
      for (Index y = 0; y < os.h; ++y) {
        for (Index xx = 0; xx < os.w; ++xx) {
          dst(y, xx) = src.block(y * factor, xx * factor, factor, factor).sum() * inv;
        }
      }
    }
  }
  return make_result<Scalar>(std::move(out), {x}, [x, s, os, factor, inv](const Tensor<Scalar>& g) {
    Tensor<Scalar> gx(s);
    for (Index n = 0; n < s.n; ++n) {
      for (Index c = 0; c < s.c; ++c) {
        const auto src = g.plane(n, c);
        auto dst = gx.plane(n, c);
        for (Index y = 0; y < os.h; ++y) {
          for (Index xx = 0; xx < os.w; ++xx) {
            dst.block(y * factor, xx * factor, factor, factor).setConstant(src(y, xx) * inv);
          }
        }
      }
    }
    accumulate(x, gx);
  });
}

template <typename Scalar>
Var<Scalar> filter_reflect(const Var<Scalar>& x, const Plane<Scalar>& kernel) {
  const Shape s = x.shape();
  require_shape(s.h >= kernel.rows() && s.w >= kernel.cols(),
                "filter_reflect: input " + s.str() + " smaller than kernel side " + std::to_string(kernel.rows()));
  Tensor<Scalar> out(s);
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      auto dst = out.plane(n, c);
      smooth_plane_reflect<Scalar>(x.value().plane(n, c), kernel, dst);
    }
  }
  return make_result<Scalar>(std::move(out), {x}, [x, s, kernel](const Tensor<Scalar>& g) {
    Tensor<Scalar> gx(s);
    for (Index n = 0; n < s.n; ++n) {
      for (Index c = 0; c < s.c; ++c) {
        auto dst = gx.plane(n, c);
        smooth_plane_reflect_adjoint<Scalar>(g.plane(n, c), kernel, dst);
      }
    }
    accumulate(x, gx);
  });
}

template <typename Scalar>
Var<Scalar> filter_valid(const Var<Scalar>& x, const Plane<Scalar>& kernel) {
  const Shape s = x.shape();
  const Index kh = kernel.rows(), kw = kernel.cols();
  require_shape(s.h >= kh && s.w >= kw, "filter_valid: input " + s.str() + " smaller than kernel");
  const Shape os{s.n, s.c, s.h - kh + 1, s.w - kw + 1};
  Tensor<Scalar> out(os);
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      const auto src = x.value().plane(n, c);
      auto dst = out.plane(n, c);
      for (Index y = 0; y < os.h; ++y) {
        for (Index xx = 0; xx < os.w; ++xx) dst(y, xx) = (src.block(y, xx, kh, kw) * kernel).sum();
      }
    }
  }
  return make_result<Scalar>(std::move(out), {x}, [x, s, os, kernel, kh, kw](const Tensor<Scalar>& g) {
    Tensor<Scalar> gx(s);
    for (Index n = 0; n < s.n; ++n) {
      for (Index c = 0; c < s.c; ++c) {
        const auto src = g.plane(n, c);
        auto dst = gx.plane(n, c);
        for (Index y = 0; y < os.h; ++y) {
          for (Index xx = 0; xx < os.w; ++xx) dst.block(y, xx, kh, kw) += src(y, xx) * kernel;
        }
      }
    }
    accumulate(x, gx);
  });
}

template <typename Scalar>
Var<Scalar> batch_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       BatchNormState<Scalar>& state, bool training) {
  using Vec = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  const Shape s = x.shape();
  require_shape(gamma.shape() == Shape{1, s.c, 1, 1} && beta.shape() == Shape{1, s.c, 1, 1},
                "batch_norm: affine parameters must be [1," + std::to_string(s.c) + ",1,1]");
  const Index count = s.n * s.plane();
  Vec mu = Vec::Zero(s.c), var = Vec::Zero(s.c);
  if (training) {
    for (Index n = 0; n < s.n; ++n) {
      for (Index c = 0; c < s.c; ++c) mu[c] += x.value().plane(n, c).sum();
    }
    mu /= static_cast<Scalar>(count);
    for (Index n = 0; n < s.n; ++n) {
      for (Index c = 0; c < s.c; ++c) var[c] += (x.value().plane(n, c) - mu[c]).square().sum();
    }
    var /= static_cast<Scalar>(count);
    auto& rm = state.running_mean.mutable_value().array();
    auto& rv = state.running_var.mutable_value().array();
    const Scalar unbias = count > 1 ? static_cast<Scalar>(count) / static_cast<Scalar>(count - 1) : Scalar(1);
    rm = (Scalar(1) - state.momentum) * rm + state.momentum * mu;
    rv = (Scalar(1) - state.momentum) * rv + state.momentum * var * unbias;
  } else {
    mu = state.running_mean.value().array();
    var = state.running_var.value().array();
  }
  const Vec inv_std = (var + state.eps).rsqrt();

  Tensor<Scalar> out(s);
  const auto& ga = gamma.value().array();
  const auto& be = beta.value().array();
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      out.plane(n, c) = (x.value().plane(n, c) - mu[c]) * (inv_std[c] * ga[c]) + be[c];
    }
  }
  return make_result<Scalar>(std::move(out), {x, gamma, beta}, [=](const Tensor<Scalar>& g) {
    const auto& gam = gamma.value().array();
    Vec sum_g = Vec::Zero(s.c), sum_g_xhat = Vec::Zero(s.c);
    for (Index n = 0; n < s.n; ++n) {
      for (Index c = 0; c < s.c; ++c) {
        const auto gp = g.plane(n, c);
        sum_g[c] += gp.sum();
        sum_g_xhat[c] += (gp * (x.value().plane(n, c) - mu[c])).sum() * inv_std[c];
      }
    }
    if (gamma.requires_grad()) gamma.node()->ensure_grad().array() += sum_g_xhat;
    if (beta.requires_grad()) beta.node()->ensure_grad().array() += sum_g;
    if (!x.requires_grad()) return;
    Tensor<Scalar> gx(s);
    const Scalar m = static_cast<Scalar>(count);
    for (Index n = 0; n < s.n; ++n) {
      for (Index c = 0; c < s.c; ++c) {
        const auto gp = g.plane(n, c);
        if (training) {
          const auto xhat = (x.value().plane(n, c) - mu[c]) * inv_std[c];
          gx.plane(n, c) = (gam[c] * inv_std[c] / m) * (m * gp - sum_g[c] - xhat * sum_g_xhat[c]);
        } else {
          gx.plane(n, c) = gp * (gam[c] * inv_std[c]);
        }
      }
    }
    accumulate(x, gx);
  });
}

template <typename Scalar>
Var<Scalar> cosine_similarity(const Var<Scalar>& u, const Var<Scalar>& v, Scalar eps) {
  using RowVec = Eigen::Array<Scalar, 1, Eigen::Dynamic>;
  const Shape s = u.shape();
  require_shape(s == v.shape(), "cosine_similarity: " + s.str() + " vs " + v.shape().str());
  require_shape(s.c >= 1, "cosine_similarity: empty channel dimension");
  Tensor<Scalar> out(Shape{s.n, 1, s.h, s.w});
  for (Index n = 0; n < s.n; ++n) {
    const auto um = u.value().sample_matrix(n).array();
    const auto vm = v.value().sample_matrix(n).array();
    const RowVec dot = (um * vm).colwise().sum();
    const RowVec nu = um.square().colwise().sum().sqrt().max(eps);
    const RowVec nv = vm.square().colwise().sum().sqrt().max(eps);
    out.sample_matrix(n).array() = dot / (nu * nv);
  }
  Tensor<Scalar> cos = out;
  return make_result<Scalar>(std::move(out), {u, v}, [u, v, s, eps, cos](const Tensor<Scalar>& g) {
    Tensor<Scalar> gu, gv;
    if (u.requires_grad()) gu = Tensor<Scalar>(s);
    if (v.requires_grad()) gv = Tensor<Scalar>(s);
    for (Index n = 0; n < s.n; ++n) {
      const auto um = u.value().sample_matrix(n).array();
      const auto vm = v.value().sample_matrix(n).array();
      const RowVec raw_u = um.square().colwise().sum().sqrt();
      const RowVec raw_v = vm.square().colwise().sum().sqrt();
      const RowVec nu = raw_u.max(eps), nv = raw_v.max(eps);
      const RowVec c = cos.sample_matrix(n).array();
      const RowVec gn = g.sample_matrix(n).array();
      // d cos/du = v / (|u||v|) - cos * u / |u|^2, the second term only where |u| is above the floor.
      const RowVec coef_cross = gn / (nu * nv);
      const RowVec coef_u = (raw_u > eps).select(-gn * c / (nu * nu), RowVec::Zero(raw_u.size()));
      const RowVec coef_v = (raw_v > eps).select(-gn * c / (nv * nv), RowVec::Zero(raw_v.size()));
      if (u.requires_grad()) {
        gu.sample_matrix(n).array() = vm.rowwise() * coef_cross + um.rowwise() * coef_u;
      }
      if (v.requires_grad()) {
        gv.sample_matrix(n).array() = um.rowwise() * coef_cross + vm.rowwise() * coef_v;
      }
    }
    if (u.requires_grad()) accumulate(u, gu);
    if (v.requires_grad()) accumulate(v, gv);
  });
}

template <typename Scalar>
Var<Scalar> adain(const Var<Scalar>& content, const Var<Scalar>& style, Scalar eps) {
  const Shape s = content.shape();
  require_shape(s == style.shape(), "adain: " + s.str() + " vs " + style.shape().str());
  const Index np = s.plane();
  const Scalar m = static_cast<Scalar>(np);
  // Per (n, c): content mean, raw std, style mean, style std.
  Tensor<Scalar> stats(Shape{s.n, s.c, 1, 4});
  Tensor<Scalar> out(s);
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      const auto xc = content.value().plane(n, c);
      const auto xs = style.value().plane(n, c);
      const Scalar mc = xc.sum() / m, ms = xs.sum() / m;
      const Scalar sc = std::sqrt((xc - mc).square().sum() / m);
      const Scalar ss = std::sqrt((xs - ms).square().sum() / m);
      stats(n, c, 0, 0) = mc;
      stats(n, c, 0, 1) = sc;
      stats(n, c, 0, 2) = ms;
      stats(n, c, 0, 3) = ss;
      out.plane(n, c) = (xc - mc) * (ss / std::max(sc, eps)) + ms;
    }
  }
  return make_result<Scalar>(std::move(out), {content, style}, [=](const Tensor<Scalar>& g) {
    Tensor<Scalar> gc, gs;
    if (content.requires_grad()) gc = Tensor<Scalar>(s);
    if (style.requires_grad()) gs = Tensor<Scalar>(s);
    for (Index n = 0; n < s.n; ++n) {
      for (Index c = 0; c < s.c; ++c) {
        const Scalar mc = stats(n, c, 0, 0), sc = stats(n, c, 0, 1);
        const Scalar ms = stats(n, c, 0, 2), ss = stats(n, c, 0, 3);
        const Scalar denom = std::max(sc, eps);
        const auto gp = g.plane(n, c);
        const Plane<Scalar> xhat = (content.value().plane(n, c) - mc) / denom;
        if (content.requires_grad()) {
          const Plane<Scalar> dxhat = gp * ss;
          if (sc > eps) {
            gc.plane(n, c) = (m * dxhat - dxhat.sum() - xhat * (dxhat * xhat).sum()) / (m * denom);
          } else {
            gc.plane(n, c) = (dxhat - dxhat.sum() / m) / denom;
          }
        }
        if (style.requires_grad()) {
          const Scalar d_mean = gp.sum();
          const Scalar d_std = (gp * xhat).sum();
          auto dst = gs.plane(n, c);
          dst.setConstant(d_mean / m);
          if (ss > Scalar(0)) dst += (style.value().plane(n, c) - ms) * (d_std / (m * ss));
        }
      }
    }
    if (content.requires_grad()) accumulate(content, gc);
    if (style.requires_grad()) accumulate(style, gs);
  });
}

#define LSTFUSE_INSTANTIATE_OPS(T)                                                                      \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> div(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> add_scalar(const Var<T>&, T);                                                         \
  template Var<T> scale(const Var<T>&, T);                                                              \
  template Var<T> square(const Var<T>&);                                                                \
  template Var<T> abs(const Var<T>&);                                                                   \
  template Var<T> pow_scalar(const Var<T>&, T);                                                         \
  template Var<T> clamp_min(const Var<T>&, T);                                                          \
  template Var<T> relu(const Var<T>&);                                                                  \
  template Var<T> leaky_relu(const Var<T>&, T);                                                         \
  template Var<T> sigmoid(const Var<T>&);                                                               \
  template Var<T> sum(const Var<T>&);                                                                   \
  template Var<T> mean(const Var<T>&);                                                                  \
  template Var<T> mean_spatial(const Var<T>&);                                                          \
  template Var<T> reshape(const Var<T>&, Shape);                                                        \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                                        \
  template Var<T> concat_batch(const Var<T>&, const Var<T>&);                                           \
  template Var<T> slice_batch(const Var<T>&, Index, Index);                                             \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, Index, Index);                    \
  template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const Var<T>&, Index, Index);          \
  template Var<T> avg_pool(const Var<T>&, Index);                                                       \
  template Var<T> filter_reflect(const Var<T>&, const Plane<T>&);                                       \
  template Var<T> filter_valid(const Var<T>&, const Plane<T>&);                                         \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormState<T>&, bool);    \
  template Var<T> cosine_similarity(const Var<T>&, const Var<T>&, T);                                   \
  template Var<T> adain(const Var<T>&, const Var<T>&, T);

LSTFUSE_INSTANTIATE_OPS(float)
LSTFUSE_INSTANTIATE_OPS(double)

}  // namespace lstfuse::ad
