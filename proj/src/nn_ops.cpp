#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <cblas.h>

#include "iac/autodiff.hpp"

extern "C" void openblas_set_num_threads(int);

#if defined(_OPENMP)
#define IAC_PRAGMA(x) _Pragma(#x)
#else
#define IAC_PRAGMA(x)
#endif

namespace iac {
namespace {

// Valid output range [lo, hi) for input index o*stride + offset in [0, in).
void out_range(int offset, int stride, int in, int out, int& lo, int& hi) {
  lo = 0;
  while (lo < out && lo * stride + offset < 0) ++lo;
  if (in - 1 - offset < 0) {
    hi = lo;
    return;
  }
  hi = std::min(out, (in - 1 - offset) / stride + 1);
  if (hi < lo) hi = lo;
}

int conv_out_dim(int in, int k, int stride, int pad, int dil) {
  return (in + 2 * pad - dil * (k - 1) - 1) / stride + 1;
}

// acc[i] += Σ_t wt[t]·src[i+q[t]] for one row, all KW taps in a single
// streaming pass; out-of-range border columns handled per tap. KW is a
// compile-time constant so the tap loop fully unrolls.
template <int KW>
void accum_row(real* __restrict acc, const real* __restrict src,
               const real* __restrict wt, const int* __restrict q, int n_dst,
               int n_src) {
  int tlo[KW], thi[KW];
  int lo_all = 0, hi_all = n_dst;
  for (int t = 0; t < KW; ++t) {
    tlo[t] = std::max(0, -q[t]);
    thi[t] = std::max(tlo[t], std::min(n_dst, n_src - q[t]));
    lo_all = std::max(lo_all, tlo[t]);
    hi_all = std::min(hi_all, thi[t]);
  }
  if (hi_all < lo_all) hi_all = lo_all;
  for (int t = 0; t < KW; ++t) {
    const real w = wt[t];
    if (w == 0.0) continue;
    const real* __restrict s = src + q[t];
    for (int i = tlo[t]; i < lo_all; ++i) acc[i] += w * s[i];
    for (int i = hi_all; i < thi[t]; ++i) acc[i] += w * s[i];
  }
  IAC_PRAGMA(omp simd)
  for (int i = lo_all; i < hi_all; ++i) {
    real s = acc[i];
    for (int t = 0; t < KW; ++t) s += wt[t] * src[i + q[t]];
    acc[i] = s;
  }
}

using RowKernel = void (*)(real* __restrict, const real* __restrict,
                           const real* __restrict, const int* __restrict, int,
                           int);

RowKernel row_kernel_for(int kw) {
  switch (kw) {
    case 1: return accum_row<1>;
    case 2: return accum_row<2>;
    case 3: return accum_row<3>;
    case 4: return accum_row<4>;
    case 5: return accum_row<5>;
    case 7: return accum_row<7>;
    default: return nullptr;
  }
}

// Fallback for unusual widths: one tap at a time.
void accum_row_generic(real* __restrict acc, const real* __restrict src,
                       const real* __restrict wt, const int* __restrict q,
                       int n_dst, int n_src, int kw) {
  for (int t = 0; t < kw; ++t) {
    const real w = wt[t];
    if (w == 0.0) continue;
    const int lo = std::max(0, -q[t]);
    const int hi = std::max(lo, std::min(n_dst, n_src - q[t]));
    const real* __restrict s = src + q[t];
    IAC_PRAGMA(omp simd)
    for (int i = lo; i < hi; ++i) acc[i] += w * s[i];
  }
}


struct ConvDims {
  int n, ci, h, w, co, cig, kh, kw, ho, wo, groups, stride, pad, dil;
};

ConvDims check_conv(const Tensor& x, const Tensor& wt, const Var& b, int stride,
                    int pad, int dil, int groups) {
  if (x.rank() != 4) throw std::invalid_argument("conv2d: input rank != 4");
  if (wt.rank() != 4) throw std::invalid_argument("conv2d: weight rank != 4");
  if (stride < 1 || dil < 1 || pad < 0 || groups < 1)
    throw std::invalid_argument("conv2d: bad hyperparameters");
  ConvDims d{};
  d.n = x.dim(0);
  d.ci = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.co = wt.dim(0);
  d.cig = wt.dim(1);
  d.kh = wt.dim(2);
  d.kw = wt.dim(3);
  d.groups = groups;
  d.stride = stride;
  d.pad = pad;
  d.dil = dil;
  if (d.ci % groups != 0 || d.co % groups != 0)
    throw std::invalid_argument("conv2d: channels not divisible by groups");
  if (d.cig != d.ci / groups)
    throw std::invalid_argument("conv2d: weight shape inconsistent with groups");
  if (b.defined() && (b.value().rank() != 1 || b.value().dim(0) != d.co))
    throw std::invalid_argument("conv2d: bias shape mismatch");
  d.ho = conv_out_dim(d.h, d.kh, stride, pad, dil);
  d.wo = conv_out_dim(d.w, d.kw, stride, pad, dil);
  if (d.ho < 1 || d.wo < 1)
    throw std::invalid_argument("conv2d: empty output for input " + x.shape_str());
  return d;
}

// BLAS runs one-threaded: parallelism lives in the loops over samples and
// channels, and single-threaded GEMM keeps results bit-reproducible no
// matter how many workers the host has.
void ensure_blas_single_thread() {
  static const bool once = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)once;
}

// Dense stride-1 convs go through dgemm once the patch depth amortizes the
// im2col pass (narrow convs run faster on the direct tap kernels); 1x1
// convs skip im2col entirely and are worthwhile from two channels up.
bool gemm_eligible(const ConvDims& d) {
  if (d.stride != 1 || d.cig < 2) return false;
  if (d.kh == 1 && d.kw == 1 && d.pad == 0) return true;
  return d.cig * d.kh * d.kw >= 100;
}

// Patch matrix for one (sample, group): row (cl·kh+r_h)·kw+r_w holds the
// shifted, zero-padded input row sequence; column index is oh·wo+ow.
void im2col_group(const Tensor& xv, int n, int g, const ConvDims& d,
                  real* __restrict cols) {
  const int N = d.ho * d.wo;
  for (int cl = 0; cl < d.cig; ++cl) {
    const int ci = g * d.cig + cl;
    const real* xb = xv.data() + xv.idx4(n, ci, 0, 0);
    for (int kh = 0; kh < d.kh; ++kh) {
      const int qh = kh * d.dil - d.pad;
      for (int kw = 0; kw < d.kw; ++kw) {
        const int qw = kw * d.dil - d.pad;
        real* dst = cols + (static_cast<int64_t>(cl) * d.kh * d.kw +
                            kh * d.kw + kw) *
                               N;
        const int lo = std::max(0, -qw);
        const int hi = std::max(lo, std::min(d.wo, d.w - qw));
        for (int oh = 0; oh < d.ho; ++oh, dst += d.wo) {
          const int ih = oh + qh;
          if (ih < 0 || ih >= d.h) {
            std::memset(dst, 0, sizeof(real) * d.wo);
            continue;
          }
          const real* xr = xb + static_cast<int64_t>(ih) * d.w + qw;
          if (lo > 0) std::memset(dst, 0, sizeof(real) * lo);
          if (hi > lo) std::memcpy(dst + lo, xr + lo, sizeof(real) * (hi - lo));
          if (hi < d.wo) std::memset(dst + hi, 0, sizeof(real) * (d.wo - hi));
        }
      }
    }
  }
}

// Scatter-add of a patch-matrix gradient back onto the input plane.
void col2im_group(const real* __restrict dcols, int n, int g,
                  const ConvDims& d, Tensor& gx) {
  const int N = d.ho * d.wo;
  for (int cl = 0; cl < d.cig; ++cl) {
    const int ci = g * d.cig + cl;
    real* gxb = gx.data() + gx.idx4(n, ci, 0, 0);
    for (int kh = 0; kh < d.kh; ++kh) {
      const int qh = kh * d.dil - d.pad;
      for (int kw = 0; kw < d.kw; ++kw) {
        const int qw = kw * d.dil - d.pad;
        const real* src = dcols + (static_cast<int64_t>(cl) * d.kh * d.kw +
                                   kh * d.kw + kw) *
                                      N;
        const int lo = std::max(0, -qw);
        const int hi = std::max(lo, std::min(d.wo, d.w - qw));
        for (int oh = 0; oh < d.ho; ++oh) {
          const int ih = oh + qh;
          if (ih < 0 || ih >= d.h) continue;
          real* __restrict gxr = gxb + static_cast<int64_t>(ih) * d.w + qw;
          const real* __restrict sr = src + static_cast<int64_t>(oh) * d.wo;
          IAC_PRAGMA(omp simd)
          for (int ow = lo; ow < hi; ++ow) gxr[ow] += sr[ow];
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int padding,
           int dilation, int groups) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const ConvDims d = check_conv(xv, wv, b, stride, padding, dilation, groups);
  const int co_per_group = d.co / d.groups;

  Tensor out({d.n, d.co, d.ho, d.wo});
  const int64_t oplane = static_cast<int64_t>(d.ho) * d.wo;
  const RowKernel kern = row_kernel_for(d.kw);
  std::vector<int> qtap_v(static_cast<size_t>(d.kw));
  for (int t = 0; t < d.kw; ++t) qtap_v[t] = t * d.dil - d.pad;
  const int* qtap = qtap_v.data();

  if (gemm_eligible(d)) {
    ensure_blas_single_thread();
    const int K = d.cig * d.kh * d.kw;
    const int N = d.ho * d.wo;
    const bool unit = d.kh == 1 && d.kw == 1 && d.pad == 0;
    IAC_PRAGMA(omp parallel for collapse(2) schedule(static))
    for (int n = 0; n < d.n; ++n) {
      for (int g = 0; g < d.groups; ++g) {
        const real* a =
            wv.data() + static_cast<int64_t>(g) * co_per_group * K;
        real* c = out.data() + out.idx4(n, g * co_per_group, 0, 0);
        if (unit) {
          const real* bmat = xv.data() + xv.idx4(n, g * d.cig, 0, 0);
          cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, co_per_group,
                      N, K, 1.0, a, K, bmat, N, 0.0, c, N);
        } else {
          std::vector<real> cols(static_cast<size_t>(K) * N);
          im2col_group(xv, n, g, d, cols.data());
          cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, co_per_group,
                      N, K, 1.0, a, K, cols.data(), N, 0.0, c, N);
        }
      }
    }
    if (b.defined()) {
      IAC_PRAGMA(omp parallel for collapse(2) schedule(static))
      for (int n = 0; n < d.n; ++n) {
        for (int co = 0; co < d.co; ++co) {
          real* __restrict yr = out.data() + out.idx4(n, co, 0, 0);
          const real bias = b.value()[co];
          IAC_PRAGMA(omp simd)
          for (int64_t i = 0; i < oplane; ++i) yr[i] += bias;
        }
      }
    }
  } else {
  IAC_PRAGMA(omp parallel for collapse(2) schedule(static))
  for (int n = 0; n < d.n; ++n) {
    for (int co = 0; co < d.co; ++co) {
      real* yb = out.data() + out.idx4(n, co, 0, 0);
      const real bias = b.defined() ? b.value()[co] : 0.0;
      const int g = co / co_per_group;
      if (d.stride == 1) {
        // Row-buffered: all taps of one output row accumulate in L1 before
        // a single store, instead of one full-plane sweep per tap.
        std::vector<real> acc(static_cast<size_t>(d.wo));
        for (int oh = 0; oh < d.ho; ++oh) {
          for (int ow = 0; ow < d.wo; ++ow) acc[ow] = bias;
          for (int cl = 0; cl < d.cig; ++cl) {
            const int ci = g * d.cig + cl;
            const real* xb = xv.data() + xv.idx4(n, ci, 0, 0);
            const real* wr = wv.data() +
                             (static_cast<int64_t>(co) * d.cig + cl) * d.kh * d.kw;
            for (int kh = 0; kh < d.kh; ++kh) {
              const int ih = oh + kh * d.dil - d.pad;
              if (ih < 0 || ih >= d.h) continue;
              const real* xr = xb + static_cast<int64_t>(ih) * d.w;
              if (kern)
                kern(acc.data(), xr, wr + kh * d.kw, qtap, d.wo, d.w);
              else
                accum_row_generic(acc.data(), xr, wr + kh * d.kw, qtap, d.wo,
                                  d.w, d.kw);
            }
          }
          real* yr = yb + static_cast<int64_t>(oh) * d.wo;
          for (int ow = 0; ow < d.wo; ++ow) yr[ow] = acc[ow];
        }
        continue;
      }
      for (int64_t i = 0; i < oplane; ++i) yb[i] = bias;
      for (int cl = 0; cl < d.cig; ++cl) {
        const int ci = g * d.cig + cl;
        const real* xb = xv.data() + xv.idx4(n, ci, 0, 0);
        for (int kh = 0; kh < d.kh; ++kh) {
          const int qh = kh * d.dil - d.pad;
          int oh_lo, oh_hi;
          out_range(qh, d.stride, d.h, d.ho, oh_lo, oh_hi);
          for (int kw = 0; kw < d.kw; ++kw) {
            const real wgt =
                wv[((static_cast<int64_t>(co) * d.cig + cl) * d.kh + kh) * d.kw + kw];
            if (wgt == 0.0) continue;
            const int qw = kw * d.dil - d.pad;
            int ow_lo, ow_hi;
            out_range(qw, d.stride, d.w, d.wo, ow_lo, ow_hi);
            for (int oh = oh_lo; oh < oh_hi; ++oh) {
              const real* xr = xb + static_cast<int64_t>(oh * d.stride + qh) * d.w;
              real* yr = yb + static_cast<int64_t>(oh) * d.wo;
              for (int ow = ow_lo; ow < ow_hi; ++ow)
                yr[ow] += wgt * xr[ow * d.stride + qw];
            }
          }
        }
      }
    }
  }
  }

  auto px = x.node();
  auto pw = w.node();
  auto pb = b.defined() ? b.node() : nullptr;
  std::vector<Var> parents{x, w};
  if (b.defined()) parents.push_back(b);

  return make_op(std::move(out), std::move(parents), [px, pw, pb, d](detail::Node& nd) {
    const Tensor& gy = nd.grad;
    const int co_per_group = d.co / d.groups;
    const int ci_per_group = d.cig;

    if (px->requires_grad && gemm_eligible(d)) {
      Tensor& gx = px->ensure_grad();
      const Tensor& wv = pw->value;
      ensure_blas_single_thread();
      const int K = d.cig * d.kh * d.kw;
      const int N = d.ho * d.wo;
      const bool unit = d.kh == 1 && d.kw == 1 && d.pad == 0;
      IAC_PRAGMA(omp parallel for collapse(2) schedule(static))
      for (int n = 0; n < d.n; ++n) {
        for (int g = 0; g < d.groups; ++g) {
          const real* a =
              wv.data() + static_cast<int64_t>(g) * co_per_group * K;
          const real* gyp = gy.data() + gy.idx4(n, g * co_per_group, 0, 0);
          if (unit) {
            real* gxp = gx.data() + gx.idx4(n, g * d.cig, 0, 0);
            cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, K, N,
                        co_per_group, 1.0, a, K, gyp, N, 1.0, gxp, N);
          } else {
            std::vector<real> dcols(static_cast<size_t>(K) * N);
            cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, K, N,
                        co_per_group, 1.0, a, K, gyp, N, 0.0, dcols.data(),
                        N);
            col2im_group(dcols.data(), n, g, d, gx);
          }
        }
      }
    } else if (px->requires_grad) {
      Tensor& gx = px->ensure_grad();
      const Tensor& wv = pw->value;
      const RowKernel kern = row_kernel_for(d.kw);
      std::vector<int> qneg_v(static_cast<size_t>(d.kw));
      for (int t = 0; t < d.kw; ++t) qneg_v[t] = d.pad - t * d.dil;
      const int* qneg = qneg_v.data();
      IAC_PRAGMA(omp parallel for collapse(2) schedule(static))
      for (int n = 0; n < d.n; ++n) {
        for (int ci = 0; ci < d.ci; ++ci) {
          real* gxb = gx.data() + gx.idx4(n, ci, 0, 0);
          const int g = ci / ci_per_group;
          const int cl = ci - g * ci_per_group;
          if (d.stride == 1) {
            std::vector<real> acc(static_cast<size_t>(d.w));
            for (int ih = 0; ih < d.h; ++ih) {
              std::fill(acc.begin(), acc.end(), 0.0);
              for (int co = g * co_per_group; co < (g + 1) * co_per_group;
                   ++co) {
                const real* gyb = gy.data() + gy.idx4(n, co, 0, 0);
                const real* wr =
                    wv.data() +
                    (static_cast<int64_t>(co) * d.cig + cl) * d.kh * d.kw;
                for (int kh = 0; kh < d.kh; ++kh) {
                  const int oh = ih - (kh * d.dil - d.pad);
                  if (oh < 0 || oh >= d.ho) continue;
                  const real* gyr = gyb + static_cast<int64_t>(oh) * d.wo;
                  if (kern)
                    kern(acc.data(), gyr, wr + kh * d.kw, qneg, d.w, d.wo);
                  else
                    accum_row_generic(acc.data(), gyr, wr + kh * d.kw, qneg,
                                      d.w, d.wo, d.kw);
                }
              }
              real* gxr = gxb + static_cast<int64_t>(ih) * d.w;
              for (int iw = 0; iw < d.w; ++iw) gxr[iw] += acc[iw];
            }
            continue;
          }
          for (int co = g * co_per_group; co < (g + 1) * co_per_group; ++co) {
            const real* gyb = gy.data() + gy.idx4(n, co, 0, 0);
            for (int kh = 0; kh < d.kh; ++kh) {
              const int qh = kh * d.dil - d.pad;
              int oh_lo, oh_hi;
              out_range(qh, d.stride, d.h, d.ho, oh_lo, oh_hi);
              for (int kw = 0; kw < d.kw; ++kw) {
                const real wgt =
                    wv[((static_cast<int64_t>(co) * d.cig + cl) * d.kh + kh) * d.kw + kw];
                if (wgt == 0.0) continue;
                const int qw = kw * d.dil - d.pad;
                int ow_lo, ow_hi;
                out_range(qw, d.stride, d.w, d.wo, ow_lo, ow_hi);
                for (int oh = oh_lo; oh < oh_hi; ++oh) {
                  const real* gyr = gyb + static_cast<int64_t>(oh) * d.wo;
                  real* gxr = gxb + static_cast<int64_t>(oh * d.stride + qh) * d.w;
                  for (int ow = ow_lo; ow < ow_hi; ++ow)
                    gxr[ow * d.stride + qw] += wgt * gyr[ow];
                }
              }
            }
          }
        }
      }
    }

    if (pw->requires_grad && gemm_eligible(d)) {
      Tensor& gw = pw->ensure_grad();
      const Tensor& xv = px->value;
      ensure_blas_single_thread();
      const int K = d.cig * d.kh * d.kw;
      const int N = d.ho * d.wo;
      const bool unit = d.kh == 1 && d.kw == 1 && d.pad == 0;
      // Sample loop stays sequential so the gradient accumulates in one
      // canonical order regardless of worker count.
      std::vector<real> cols;
      if (!unit) cols.resize(static_cast<size_t>(K) * N);
      for (int n = 0; n < d.n; ++n) {
        for (int g = 0; g < d.groups; ++g) {
          real* gwg = gw.data() + static_cast<int64_t>(g) * co_per_group * K;
          const real* gyp = gy.data() + gy.idx4(n, g * co_per_group, 0, 0);
          if (unit) {
            const real* bmat = xv.data() + xv.idx4(n, g * d.cig, 0, 0);
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, co_per_group,
                        K, N, 1.0, gyp, N, bmat, N, 1.0, gwg, K);
          } else {
            im2col_group(xv, n, g, d, cols.data());
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, co_per_group,
                        K, N, 1.0, gyp, N, cols.data(), N, 1.0, gwg, K);
          }
        }
      }
    } else if (pw->requires_grad) {
      Tensor& gw = pw->ensure_grad();
      const Tensor& xv = px->value;
      IAC_PRAGMA(omp parallel for schedule(static))
      for (int co = 0; co < d.co; ++co) {
        const int g = co / co_per_group;
        for (int cl = 0; cl < d.cig; ++cl) {
          const int ci = g * d.cig + cl;
          real* gwr =
              gw.data() + (static_cast<int64_t>(co) * d.cig + cl) * d.kh * d.kw;
          if (d.stride == 1) {
            // One pass over the output plane per (co, ci); all k² taps
            // reduce simultaneously so gy rows stay in L1.
            std::vector<real> acc(static_cast<size_t>(d.kh) * d.kw, 0.0);
            for (int n = 0; n < d.n; ++n) {
              const real* xb = xv.data() + xv.idx4(n, ci, 0, 0);
              const real* gyb = gy.data() + gy.idx4(n, co, 0, 0);
              for (int oh = 0; oh < d.ho; ++oh) {
                const real* __restrict gyr =
                    gyb + static_cast<int64_t>(oh) * d.wo;
                for (int kh = 0; kh < d.kh; ++kh) {
                  const int ih = oh + kh * d.dil - d.pad;
                  if (ih < 0 || ih >= d.h) continue;
                  const real* xr = xb + static_cast<int64_t>(ih) * d.w;
                  for (int kw = 0; kw < d.kw; ++kw) {
                    const int qw = kw * d.dil - d.pad;
                    const int lo = std::max(0, -qw);
                    const int hi = std::min(d.wo, d.w - qw);
                    const real* __restrict xs = xr + qw;
                    real racc = 0.0;
                    IAC_PRAGMA(omp simd reduction(+ : racc))
                    for (int ow = lo; ow < hi; ++ow) racc += gyr[ow] * xs[ow];
                    acc[kh * d.kw + kw] += racc;
                  }
                }
              }
            }
            for (int t = 0; t < d.kh * d.kw; ++t) gwr[t] += acc[t];
            continue;
          }
          for (int kh = 0; kh < d.kh; ++kh) {
            const int qh = kh * d.dil - d.pad;
            int oh_lo, oh_hi;
            out_range(qh, d.stride, d.h, d.ho, oh_lo, oh_hi);
            for (int kw = 0; kw < d.kw; ++kw) {
              const int qw = kw * d.dil - d.pad;
              int ow_lo, ow_hi;
              out_range(qw, d.stride, d.w, d.wo, ow_lo, ow_hi);
              real acc = 0.0;
              for (int n = 0; n < d.n; ++n) {
                const real* xb = xv.data() + xv.idx4(n, ci, 0, 0);
                const real* gyb = gy.data() + gy.idx4(n, co, 0, 0);
                for (int oh = oh_lo; oh < oh_hi; ++oh) {
                  const real* gyr = gyb + static_cast<int64_t>(oh) * d.wo;
                  const real* xr = xb + static_cast<int64_t>(oh * d.stride + qh) * d.w;
                  for (int ow = ow_lo; ow < ow_hi; ++ow)
                    acc += gyr[ow] * xr[ow * d.stride + qw];
                }
              }
              gwr[kh * d.kw + kw] += acc;
            }
          }
        }
      }
    }

    if (pb && pb->requires_grad) {
      Tensor& gb = pb->ensure_grad();
      const int64_t oplane = static_cast<int64_t>(d.ho) * d.wo;
      IAC_PRAGMA(omp parallel for schedule(static))
      for (int co = 0; co < d.co; ++co) {
        real acc = 0.0;
        for (int n = 0; n < d.n; ++n) {
          const real* gyb = gy.data() + gy.idx4(n, co, 0, 0);
          real racc = 0.0;
          IAC_PRAGMA(omp simd reduction(+ : racc))
          for (int64_t i = 0; i < oplane; ++i) racc += gyb[i];
          acc += racc;
        }
        gb[co] += acc;
      }
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int k, int stride) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 4 || wv.rank() != 4)
    throw std::invalid_argument("conv_transpose2d: rank != 4");
  if (k != stride)
    throw std::invalid_argument("conv_transpose2d: requires k == stride");
  const int n = xv.dim(0), ci = xv.dim(1), hi = xv.dim(2), wi = xv.dim(3);
  if (wv.dim(0) != ci || wv.dim(2) != k || wv.dim(3) != k)
    throw std::invalid_argument("conv_transpose2d: weight shape mismatch");
  const int co = wv.dim(1);
  if (b.defined() && (b.value().rank() != 1 || b.value().dim(0) != co))
    throw std::invalid_argument("conv_transpose2d: bias shape mismatch");
  const int ho = hi * k, wo = wi * k;

  Tensor out({n, co, ho, wo});
  IAC_PRAGMA(omp parallel for collapse(2) schedule(static))
  for (int nn = 0; nn < n; ++nn) {
    for (int c = 0; c < co; ++c) {
      real* yb = out.data() + out.idx4(nn, c, 0, 0);
      const real bias = b.defined() ? b.value()[c] : 0.0;
      const int64_t oplane = static_cast<int64_t>(ho) * wo;
      for (int64_t i = 0; i < oplane; ++i) yb[i] = bias;
      for (int cc = 0; cc < ci; ++cc) {
        const real* xb = xv.data() + xv.idx4(nn, cc, 0, 0);
        for (int kh = 0; kh < k; ++kh) {
          for (int kw = 0; kw < k; ++kw) {
            const real wgt = wv[((static_cast<int64_t>(cc) * co + c) * k + kh) * k + kw];
            for (int ih = 0; ih < hi; ++ih) {
              const real* xr = xb + static_cast<int64_t>(ih) * wi;
              real* yr = yb + static_cast<int64_t>(ih * k + kh) * wo + kw;
              for (int iw = 0; iw < wi; ++iw) yr[iw * k] += wgt * xr[iw];
            }
          }
        }
      }
    }
  }

  auto px = x.node();
  auto pw = w.node();
  auto pb = b.defined() ? b.node() : nullptr;
  std::vector<Var> parents{x, w};
  if (b.defined()) parents.push_back(b);

  return make_op(std::move(out), std::move(parents),
                 [px, pw, pb, n, ci, co, hi, wi, k](detail::Node& nd) {
                   const Tensor& gy = nd.grad;
                   const int wo = wi * k;
                   if (px->requires_grad) {
                     Tensor& gx = px->ensure_grad();
                     const Tensor& wv = pw->value;
                     IAC_PRAGMA(omp parallel for collapse(2) schedule(static))
                     for (int nn = 0; nn < n; ++nn) {
                       for (int cc = 0; cc < ci; ++cc) {
                         real* gxb = gx.data() + gx.idx4(nn, cc, 0, 0);
                         for (int c = 0; c < co; ++c) {
                           const real* gyb = gy.data() + gy.idx4(nn, c, 0, 0);
                           for (int kh = 0; kh < k; ++kh) {
                             for (int kw = 0; kw < k; ++kw) {
                               const real wgt =
                                   wv[((static_cast<int64_t>(cc) * co + c) * k + kh) * k + kw];
                               for (int ih = 0; ih < hi; ++ih) {
                                 const real* gyr =
                                     gyb + static_cast<int64_t>(ih * k + kh) * wo + kw;
                                 real* gxr = gxb + static_cast<int64_t>(ih) * wi;
                                 for (int iw = 0; iw < wi; ++iw)
                                   gxr[iw] += wgt * gyr[iw * k];
                               }
                             }
                           }
                         }
                       }
                     }
                   }
                   if (pw->requires_grad) {
                     Tensor& gw = pw->ensure_grad();
                     const Tensor& xv = px->value;
                     IAC_PRAGMA(omp parallel for collapse(2) schedule(static))
                     for (int cc = 0; cc < ci; ++cc) {
                       for (int c = 0; c < co; ++c) {
                         for (int kh = 0; kh < k; ++kh) {
                           for (int kw = 0; kw < k; ++kw) {
                             real acc = 0.0;
                             for (int nn = 0; nn < n; ++nn) {
                               const real* xb = xv.data() + xv.idx4(nn, cc, 0, 0);
                               const real* gyb = gy.data() + gy.idx4(nn, c, 0, 0);
                               for (int ih = 0; ih < hi; ++ih) {
                                 const real* xr = xb + static_cast<int64_t>(ih) * wi;
                                 const real* gyr =
                                     gyb + static_cast<int64_t>(ih * k + kh) * wo + kw;
                                 real racc = 0.0;
                                 IAC_PRAGMA(omp simd reduction(+ : racc))
                                 for (int iw = 0; iw < wi; ++iw)
                                   racc += xr[iw] * gyr[iw * k];
                                 acc += racc;
                               }
                             }
                             gw[((static_cast<int64_t>(cc) * co + c) * k + kh) * k + kw] += acc;
                           }
                         }
                       }
                     }
                   }
                   if (pb && pb->requires_grad) {
                     Tensor& gb = pb->ensure_grad();
                     const int64_t oplane = static_cast<int64_t>(hi) * k * wo;
                     IAC_PRAGMA(omp parallel for schedule(static))
                     for (int c = 0; c < co; ++c) {
                       real acc = 0.0;
                       for (int nn = 0; nn < n; ++nn) {
                         const real* gyb = gy.data() + gy.idx4(nn, c, 0, 0);
                         real racc = 0.0;
                         IAC_PRAGMA(omp simd reduction(+ : racc))
                         for (int64_t i = 0; i < oplane; ++i) racc += gyb[i];
                         acc += racc;
                       }
                       gb[c] += acc;
                     }
                   }
                 });
}

namespace {

struct PoolDims {
  int n, c, h, w, ho, wo, k, stride, pad;
};

PoolDims check_pool(const Tensor& x, int k, int stride, int pad) {
  if (x.rank() != 4) throw std::invalid_argument("pool2d: input rank != 4");
  if (k < 1 || stride < 1 || pad < 0 || pad >= k)
    throw std::invalid_argument("pool2d: bad hyperparameters");
  PoolDims d{};
  d.n = x.dim(0);
  d.c = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.k = k;
  d.stride = stride;
  d.pad = pad;
  d.ho = conv_out_dim(d.h, k, stride, pad, 1);
  d.wo = conv_out_dim(d.w, k, stride, pad, 1);
  if (d.ho < 1 || d.wo < 1)
    throw std::invalid_argument("pool2d: empty output for input " + x.shape_str());
  return d;
}

}  // namespace

Var maxpool2d(const Var& x, int k, int stride, int padding) {
  const Tensor& xv = x.value();
  const PoolDims d = check_pool(xv, k, stride, padding);
  Tensor out({d.n, d.c, d.ho, d.wo});
  // Flat (h*w) argmax per output element for the backward scatter.
  auto argmax = std::make_shared<std::vector<int>>(
      static_cast<size_t>(d.n) * d.c * d.ho * d.wo);

  IAC_PRAGMA(omp parallel for collapse(2) schedule(static))
  for (int n = 0; n < d.n; ++n) {
    for (int c = 0; c < d.c; ++c) {
      const real* xb = xv.data() + xv.idx4(n, c, 0, 0);
      real* yb = out.data() + out.idx4(n, c, 0, 0);
      int* ab = argmax->data() +
                (static_cast<int64_t>(n) * d.c + c) * d.ho * d.wo;
      for (int oh = 0; oh < d.ho; ++oh) {
        for (int ow = 0; ow < d.wo; ++ow) {
          real best = -std::numeric_limits<real>::infinity();
          int best_idx = -1;
          for (int kh = 0; kh < d.k; ++kh) {
            const int ih = oh * d.stride + kh - d.pad;
            if (ih < 0 || ih >= d.h) continue;
            for (int kw = 0; kw < d.k; ++kw) {
              const int iw = ow * d.stride + kw - d.pad;
              if (iw < 0 || iw >= d.w) continue;
              const real v = xb[static_cast<int64_t>(ih) * d.w + iw];
              if (v > best) {
                best = v;
                best_idx = ih * d.w + iw;
              }
            }
          }
          yb[static_cast<int64_t>(oh) * d.wo + ow] = best;
          ab[static_cast<int64_t>(oh) * d.wo + ow] = best_idx;
        }
      }
    }
  }

  auto px = x.node();
  return make_op(std::move(out), {x}, [px, argmax, d](detail::Node& nd) {
    if (!px->requires_grad) return;
    Tensor& gx = px->ensure_grad();
    IAC_PRAGMA(omp parallel for collapse(2) schedule(static))
    for (int n = 0; n < d.n; ++n) {
      for (int c = 0; c < d.c; ++c) {
        real* gxb = gx.data() + gx.idx4(n, c, 0, 0);
        const real* gyb = nd.grad.data() + nd.grad.idx4(n, c, 0, 0);
        const int* ab = argmax->data() +
                        (static_cast<int64_t>(n) * d.c + c) * d.ho * d.wo;
        const int64_t m = static_cast<int64_t>(d.ho) * d.wo;
        for (int64_t i = 0; i < m; ++i) gxb[ab[i]] += gyb[i];
      }
    }
  });
}

Var avgpool2d(const Var& x, int k, int stride, int padding) {
  const Tensor& xv = x.value();
  const PoolDims d = check_pool(xv, k, stride, padding);
  Tensor out({d.n, d.c, d.ho, d.wo});

  // Tap counts depend only on (oh, ow).
  auto counts = std::make_shared<std::vector<int>>(
      static_cast<size_t>(d.ho) * d.wo);
  for (int oh = 0; oh < d.ho; ++oh) {
    const int h_lo = std::max(0, oh * d.stride - d.pad);
    const int h_hi = std::min(d.h, oh * d.stride - d.pad + d.k);
    for (int ow = 0; ow < d.wo; ++ow) {
      const int w_lo = std::max(0, ow * d.stride - d.pad);
      const int w_hi = std::min(d.w, ow * d.stride - d.pad + d.k);
      (*counts)[static_cast<size_t>(oh) * d.wo + ow] =
          (h_hi - h_lo) * (w_hi - w_lo);
    }
  }

  IAC_PRAGMA(omp parallel for collapse(2) schedule(static))
  for (int n = 0; n < d.n; ++n) {
    for (int c = 0; c < d.c; ++c) {
      const real* xb = xv.data() + xv.idx4(n, c, 0, 0);
      real* yb = out.data() + out.idx4(n, c, 0, 0);
      for (int oh = 0; oh < d.ho; ++oh) {
        const int h_lo = std::max(0, oh * d.stride - d.pad);
        const int h_hi = std::min(d.h, oh * d.stride - d.pad + d.k);
        for (int ow = 0; ow < d.wo; ++ow) {
          const int w_lo = std::max(0, ow * d.stride - d.pad);
          const int w_hi = std::min(d.w, ow * d.stride - d.pad + d.k);
          real acc = 0.0;
          for (int ih = h_lo; ih < h_hi; ++ih)
            for (int iw = w_lo; iw < w_hi; ++iw)
              acc += xb[static_cast<int64_t>(ih) * d.w + iw];
          yb[static_cast<int64_t>(oh) * d.wo + ow] =
              acc / (*counts)[static_cast<size_t>(oh) * d.wo + ow];
        }
      }
    }
  }

  auto px = x.node();
  return make_op(std::move(out), {x}, [px, counts, d](detail::Node& nd) {
    if (!px->requires_grad) return;
    Tensor& gx = px->ensure_grad();
    IAC_PRAGMA(omp parallel for collapse(2) schedule(static))
    for (int n = 0; n < d.n; ++n) {
      for (int c = 0; c < d.c; ++c) {
        real* gxb = gx.data() + gx.idx4(n, c, 0, 0);
        const real* gyb = nd.grad.data() + nd.grad.idx4(n, c, 0, 0);
        for (int oh = 0; oh < d.ho; ++oh) {
          const int h_lo = std::max(0, oh * d.stride - d.pad);
          const int h_hi = std::min(d.h, oh * d.stride - d.pad + d.k);
          for (int ow = 0; ow < d.wo; ++ow) {
            const int w_lo = std::max(0, ow * d.stride - d.pad);
            const int w_hi = std::min(d.w, ow * d.stride - d.pad + d.k);
            const real g = gyb[static_cast<int64_t>(oh) * d.wo + ow] /
                           (*counts)[static_cast<size_t>(oh) * d.wo + ow];
            for (int ih = h_lo; ih < h_hi; ++ih)
              for (int iw = w_lo; iw < w_hi; ++iw)
                gxb[static_cast<int64_t>(ih) * d.w + iw] += g;
          }
        }
      }
    }
  });
}

Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta,
                Tensor& running_mean, Tensor& running_var, real momentum,
                real eps, bool training) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4) throw std::invalid_argument("batchnorm2d: rank != 4");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (gamma.value().size() != c || beta.value().size() != c ||
      running_mean.size() != c || running_var.size() != c)
    throw std::invalid_argument("batchnorm2d: channel mismatch");
  const int64_t m = static_cast<int64_t>(n) * h * w;
  const int64_t plane = static_cast<int64_t>(h) * w;

  auto invstd = std::make_shared<std::vector<real>>(static_cast<size_t>(c));
  auto xhat = std::make_shared<Tensor>(xv.shape());

  if (training) {
    IAC_PRAGMA(omp parallel for schedule(static))
    for (int ch = 0; ch < c; ++ch) {
      real mean = 0.0;
      for (int b = 0; b < n; ++b) {
        const real* xb = xv.data() + xv.idx4(b, ch, 0, 0);
        real acc = 0.0;
        IAC_PRAGMA(omp simd reduction(+ : acc))
        for (int64_t i = 0; i < plane; ++i) acc += xb[i];
        mean += acc;
      }
      mean /= static_cast<real>(m);
      real var = 0.0;
      for (int b = 0; b < n; ++b) {
        const real* xb = xv.data() + xv.idx4(b, ch, 0, 0);
        real acc = 0.0;
        IAC_PRAGMA(omp simd reduction(+ : acc))
        for (int64_t i = 0; i < plane; ++i) {
          const real dv = xb[i] - mean;
          acc += dv * dv;
        }
        var += acc;
      }
      var /= static_cast<real>(m);
      (*invstd)[static_cast<size_t>(ch)] = 1.0 / std::sqrt(var + eps);
      running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mean;
      const real unbiased = m > 1 ? var * static_cast<real>(m) / (m - 1) : var;
      running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * unbiased;
      const real is = (*invstd)[static_cast<size_t>(ch)];
      for (int b = 0; b < n; ++b) {
        const real* xb = xv.data() + xv.idx4(b, ch, 0, 0);
        real* hb = xhat->data() + xhat->idx4(b, ch, 0, 0);
        IAC_PRAGMA(omp simd)
        for (int64_t i = 0; i < plane; ++i) hb[i] = (xb[i] - mean) * is;
      }
    }
  } else {
    IAC_PRAGMA(omp parallel for schedule(static))
    for (int ch = 0; ch < c; ++ch) {
      const real mean = running_mean[ch];
      const real is = 1.0 / std::sqrt(running_var[ch] + eps);
      (*invstd)[static_cast<size_t>(ch)] = is;
      for (int b = 0; b < n; ++b) {
        const real* xb = xv.data() + xv.idx4(b, ch, 0, 0);
        real* hb = xhat->data() + xhat->idx4(b, ch, 0, 0);
        IAC_PRAGMA(omp simd)
        for (int64_t i = 0; i < plane; ++i) hb[i] = (xb[i] - mean) * is;
      }
    }
  }

  Tensor out(xv.shape());
  IAC_PRAGMA(omp parallel for collapse(2) schedule(static))
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const real g = gamma.value()[ch];
      const real bt = beta.value()[ch];
      const real* hb = xhat->data() + xhat->idx4(b, ch, 0, 0);
      real* yb = out.data() + out.idx4(b, ch, 0, 0);
      IAC_PRAGMA(omp simd)
      for (int64_t i = 0; i < plane; ++i) yb[i] = g * hb[i] + bt;
    }
  }

  auto px = x.node();
  auto pg = gamma.node();
  auto pb = beta.node();
  return make_op(
      std::move(out), {x, gamma, beta},
      [px, pg, pb, xhat, invstd, n, c, plane, m, training](detail::Node& nd) {
        const Tensor& gy = nd.grad;
        // Per-channel reductions shared by all three grads.
        std::vector<real> sum_gy(static_cast<size_t>(c), 0.0);
        std::vector<real> sum_gy_xhat(static_cast<size_t>(c), 0.0);
        IAC_PRAGMA(omp parallel for schedule(static))
        for (int ch = 0; ch < c; ++ch) {
          real s0 = 0.0, s1 = 0.0;
          for (int b = 0; b < n; ++b) {
            const real* gb = gy.data() + gy.idx4(b, ch, 0, 0);
            const real* hb = xhat->data() + xhat->idx4(b, ch, 0, 0);
            real a0 = 0.0, a1 = 0.0;
            IAC_PRAGMA(omp simd reduction(+ : a0, a1))
            for (int64_t i = 0; i < plane; ++i) {
              a0 += gb[i];
              a1 += gb[i] * hb[i];
            }
            s0 += a0;
            s1 += a1;
          }
          sum_gy[static_cast<size_t>(ch)] = s0;
          sum_gy_xhat[static_cast<size_t>(ch)] = s1;
        }
        if (pg->requires_grad) {
          Tensor& gg = pg->ensure_grad();
          for (int ch = 0; ch < c; ++ch) gg[ch] += sum_gy_xhat[static_cast<size_t>(ch)];
        }
        if (pb->requires_grad) {
          Tensor& gb = pb->ensure_grad();
          for (int ch = 0; ch < c; ++ch) gb[ch] += sum_gy[static_cast<size_t>(ch)];
        }
        if (px->requires_grad) {
          Tensor& gx = px->ensure_grad();
          IAC_PRAGMA(omp parallel for collapse(2) schedule(static))
          for (int b = 0; b < n; ++b) {
            for (int ch = 0; ch < c; ++ch) {
              const real gch = pg->value[ch];
              const real is = (*invstd)[static_cast<size_t>(ch)];
              const real* gyb = gy.data() + gy.idx4(b, ch, 0, 0);
              const real* hb = xhat->data() + xhat->idx4(b, ch, 0, 0);
              real* gxb = gx.data() + gx.idx4(b, ch, 0, 0);
              if (training) {
                const real mg = sum_gy[static_cast<size_t>(ch)] / static_cast<real>(m);
                const real mgh =
                    sum_gy_xhat[static_cast<size_t>(ch)] / static_cast<real>(m);
                IAC_PRAGMA(omp simd)
                for (int64_t i = 0; i < plane; ++i)
                  gxb[i] += gch * is * (gyb[i] - mg - hb[i] * mgh);
              } else {
                IAC_PRAGMA(omp simd)
                for (int64_t i = 0; i < plane; ++i) gxb[i] += gch * is * gyb[i];
              }
            }
          }
        }
      });
}

}  // namespace iac
