#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "svc/tensor.hpp"

// Forward/backward math for every differentiable kernel in the repo.
// The training tape wires these into autodiff nodes; inference and the
// streaming runtime call the forward functions directly, so there is a
// single implementation of each op's arithmetic. All loops accumulate
// per-output in a fixed order, which is what makes streaming recomputation
// bit-exact against offline evaluation.

namespace svc::kernels {

// Convolution context. `chunk_frames > 0` clips right context at chunk
// boundaries: producing frame t may read inputs only up to the end of
// chunk(t). Frame indices are global stream indices, so offline and
// chunked evaluation agree exactly.
struct ConvSpec {
  int left = 0;
  int right = 0;
  int dilation = 1;
  int chunk_frames = 0;  // 0 = no chunk clipping

  int taps() const { return left + right + 1; }
};

inline int chunk_end_of(int t, int chunk_frames) {
  return chunk_frames > 0 ? (t / chunk_frames + 1) * chunk_frames
                          : std::numeric_limits<int>::max();
}

// ---------------------------------------------------------------------------
// affine: y[r,:] = x[r,:] * W + b      x:[R,I] W:[I,J] b:[J]
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> affine_fwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  const int rows = x.rows(), in = x.cols(), out = w.cols();
  require(w.rows() == in, "shape_mismatch", "affine: W rows != x cols");
  require(b.numel() == out, "shape_mismatch", "affine: b size != W cols");
  TensorT<T> y({rows, out});
  for (int r = 0; r < rows; ++r) {
    const T* xr = x.row(r);
    T* yr = y.row(r);
    for (int j = 0; j < out; ++j) yr[j] = b.data[static_cast<size_t>(j)];
    for (int i = 0; i < in; ++i) {
      const T xv = xr[i];
      const T* wr = w.row(i);
      for (int j = 0; j < out; ++j) yr[j] += xv * wr[j];
    }
  }
  return y;
}

template <typename T>
void affine_bwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy,
                TensorT<T>* dx, TensorT<T>* dw, TensorT<T>* db) {
  const int rows = x.rows(), in = x.cols(), out = w.cols();
  for (int r = 0; r < rows; ++r) {
    const T* xr = x.row(r);
    const T* gyr = dy.row(r);
    if (dx) {
      T* dxr = dx->row(r);
      for (int i = 0; i < in; ++i) {
        const T* wr = w.row(i);
        T acc = 0;
        for (int j = 0; j < out; ++j) acc += gyr[j] * wr[j];
        dxr[i] += acc;
      }
    }
    if (dw) {
      for (int i = 0; i < in; ++i) {
        const T xv = xr[i];
        T* dwr = dw->row(i);
        for (int j = 0; j < out; ++j) dwr[j] += xv * gyr[j];
      }
    }
    if (db) {
      for (int j = 0; j < out; ++j) db->data[static_cast<size_t>(j)] += gyr[j];
    }
  }
}

// ---------------------------------------------------------------------------
// conv1d over frames: x:[T,Cin] w:[taps,Cin,Cout] b:[Cout]
// tap i reads input frame t + (i - left) * dilation.
//
// The span form computes output rows [out_begin, out_end) of a longer
// stream, reading a slice whose first row is global frame `slice_begin`.
// Frames before 0 or at/after `avail_end` are zero (stream padding).
// ---------------------------------------------------------------------------

template <typename T>
void conv1d_span(const TensorT<T>& x_slice, int slice_begin, int avail_end,
                 const TensorT<T>& w, const TensorT<T>& b, const ConvSpec& spec,
                 int out_begin, int out_end, TensorT<T>* y, int y_row_offset) {
  const int cin = x_slice.cols();
  const int taps = spec.taps();
  require(w.rank() == 3 && w.dim(0) == taps && w.dim(1) == cin, "shape_mismatch",
          "conv1d: weight shape != [taps,cin,cout]");
  const int cout = w.dim(2);
  require(b.numel() == cout, "shape_mismatch", "conv1d: bias size != cout");
  const size_t wstride = static_cast<size_t>(cin) * cout;
  for (int t = out_begin; t < out_end; ++t) {
    T* yr = y->row(y_row_offset + (t - out_begin));
    for (int j = 0; j < cout; ++j) yr[j] = b.data[static_cast<size_t>(j)];
    const int ce = chunk_end_of(t, spec.chunk_frames);
    for (int tap = 0; tap < taps; ++tap) {
      const int src = t + (tap - spec.left) * spec.dilation;
      if (src < 0 || src >= avail_end || src >= ce) continue;
      const T* xr = x_slice.row(src - slice_begin);
      const T* wt = w.data.data() + static_cast<size_t>(tap) * wstride;
      for (int i = 0; i < cin; ++i) {
        const T xv = xr[i];
        const T* wr = wt + static_cast<size_t>(i) * cout;
        for (int j = 0; j < cout; ++j) yr[j] += xv * wr[j];
      }
    }
  }
}

template <typename T>
TensorT<T> conv1d_fwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                      const ConvSpec& spec) {
  const int frames = x.rows();
  TensorT<T> y({frames, w.dim(2)});
  conv1d_span(x, 0, frames, w, b, spec, 0, frames, &y, 0);
  return y;
}

template <typename T>
void conv1d_bwd(const TensorT<T>& x, const TensorT<T>& w, const ConvSpec& spec,
                const TensorT<T>& dy, TensorT<T>* dx, TensorT<T>* dw, TensorT<T>* db) {
  const int frames = x.rows();
  const int cin = x.cols();
  const int cout = w.dim(2);
  const int taps = spec.taps();
  const size_t wstride = static_cast<size_t>(cin) * cout;
  for (int t = 0; t < frames; ++t) {
    const T* gyr = dy.row(t);
    if (db) {
      for (int j = 0; j < cout; ++j) db->data[static_cast<size_t>(j)] += gyr[j];
    }
    const int ce = chunk_end_of(t, spec.chunk_frames);
    for (int tap = 0; tap < taps; ++tap) {
      const int src = t + (tap - spec.left) * spec.dilation;
      if (src < 0 || src >= frames || src >= ce) continue;
      const T* xr = x.row(src);
      const T* wt = w.data.data() + static_cast<size_t>(tap) * wstride;
      if (dx) {
        T* dxr = dx->row(src);
        for (int i = 0; i < cin; ++i) {
          const T* wr = wt + static_cast<size_t>(i) * cout;
          T acc = 0;
          for (int j = 0; j < cout; ++j) acc += gyr[j] * wr[j];
          dxr[i] += acc;
        }
      }
      if (dw) {
        T* dwt = dw->data.data() + static_cast<size_t>(tap) * wstride;
        for (int i = 0; i < cin; ++i) {
          const T xv = xr[i];
          T* dwr = dwt + static_cast<size_t>(i) * cout;
          for (int j = 0; j < cout; ++j) dwr[j] += xv * gyr[j];
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Transposed conv with kernel size == stride (pure upsampler, introduces
// no cross-frame context): x:[T,Cin] w:[stride,Cin,Cout] -> y:[T*stride,Cout]
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> tconv1d_fwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  const int frames = x.rows(), cin = x.cols();
  require(w.rank() == 3 && w.dim(1) == cin, "shape_mismatch", "tconv1d: weight shape");
  const int stride = w.dim(0), cout = w.dim(2);
  TensorT<T> y({frames * stride, cout});
  const size_t wstride = static_cast<size_t>(cin) * cout;
  for (int t = 0; t < frames; ++t) {
    const T* xr = x.row(t);
    for (int j = 0; j < stride; ++j) {
      T* yr = y.row(t * stride + j);
      const T* wt = w.data.data() + static_cast<size_t>(j) * wstride;
      for (int k = 0; k < cout; ++k) yr[k] = b.data[static_cast<size_t>(k)];
      for (int i = 0; i < cin; ++i) {
        const T xv = xr[i];
        const T* wr = wt + static_cast<size_t>(i) * cout;
        for (int k = 0; k < cout; ++k) yr[k] += xv * wr[k];
      }
    }
  }
  return y;
}

template <typename T>
void tconv1d_bwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy,
                 TensorT<T>* dx, TensorT<T>* dw, TensorT<T>* db) {
  const int frames = x.rows(), cin = x.cols();
  const int stride = w.dim(0), cout = w.dim(2);
  const size_t wstride = static_cast<size_t>(cin) * cout;
  for (int t = 0; t < frames; ++t) {
    const T* xr = x.row(t);
    for (int j = 0; j < stride; ++j) {
      const T* gyr = dy.row(t * stride + j);
      const T* wt = w.data.data() + static_cast<size_t>(j) * wstride;
      if (db) {
        for (int k = 0; k < cout; ++k) db->data[static_cast<size_t>(k)] += gyr[k];
      }
      if (dx) {
        T* dxr = dx->row(t);
        for (int i = 0; i < cin; ++i) {
          const T* wr = wt + static_cast<size_t>(i) * cout;
          T acc = 0;
          for (int k = 0; k < cout; ++k) acc += gyr[k] * wr[k];
          dxr[i] += acc;
        }
      }
      if (dw) {
        T* dwt = dw->data.data() + static_cast<size_t>(j) * wstride;
        for (int i = 0; i < cin; ++i) {
          const T xv = xr[i];
          T* dwr = dwt + static_cast<size_t>(i) * cout;
          for (int k = 0; k < cout; ++k) dwr[k] += xv * gyr[k];
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Layer norm over the feature axis of each row.
// ---------------------------------------------------------------------------

template <typename T>
struct LayerNormCache {
  std::vector<T> xhat;  // [rows*cols]
  std::vector<T> rstd;  // [rows]
};

template <typename T>
TensorT<T> layer_norm_fwd(const TensorT<T>& x, const TensorT<T>& gain, const TensorT<T>& bias,
                          LayerNormCache<T>* cache, T eps = T(1e-5)) {
  const int rows = x.rows(), cols = x.cols();
  require(gain.numel() == cols && bias.numel() == cols, "shape_mismatch", "layer_norm params");
  TensorT<T> y({rows, cols});
  if (cache) {
    cache->xhat.resize(static_cast<size_t>(rows) * cols);
    cache->rstd.resize(static_cast<size_t>(rows));
  }
  for (int r = 0; r < rows; ++r) {
    const T* xr = x.row(r);
    double mean = 0.0;
    for (int c = 0; c < cols; ++c) mean += xr[c];
    mean /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double d = xr[c] - mean;
      var += d * d;
    }
    var /= cols;
    const T rstd = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    T* yr = y.row(r);
    for (int c = 0; c < cols; ++c) {
      const T xh = (xr[c] - static_cast<T>(mean)) * rstd;
      if (cache) cache->xhat[static_cast<size_t>(r) * cols + c] = xh;
      yr[c] = gain.data[static_cast<size_t>(c)] * xh + bias.data[static_cast<size_t>(c)];
    }
    if (cache) cache->rstd[static_cast<size_t>(r)] = rstd;
  }
  return y;
}

template <typename T>
void layer_norm_bwd(const TensorT<T>& gain, const LayerNormCache<T>& cache, int rows, int cols,
                    const TensorT<T>& dy, TensorT<T>* dx, TensorT<T>* dgain, TensorT<T>* dbias) {
  for (int r = 0; r < rows; ++r) {
    const T* gyr = dy.row(r);
    const T* xh = cache.xhat.data() + static_cast<size_t>(r) * cols;
    const T rstd = cache.rstd[static_cast<size_t>(r)];
    double sum_g = 0.0, sum_gx = 0.0;
    for (int c = 0; c < cols; ++c) {
      const T g = gyr[c] * gain.data[static_cast<size_t>(c)];
      sum_g += g;
      sum_gx += g * xh[c];
    }
    if (dx) {
      T* dxr = dx->row(r);
      for (int c = 0; c < cols; ++c) {
        const T g = gyr[c] * gain.data[static_cast<size_t>(c)];
        dxr[c] += rstd * (g - static_cast<T>(sum_g / cols) -
                          xh[c] * static_cast<T>(sum_gx / cols));
      }
    }
    if (dgain) {
      for (int c = 0; c < cols; ++c) dgain->data[static_cast<size_t>(c)] += gyr[c] * xh[c];
    }
    if (dbias) {
      for (int c = 0; c < cols; ++c) dbias->data[static_cast<size_t>(c)] += gyr[c];
    }
  }
}

// ---------------------------------------------------------------------------
// Row-wise softmax, numerically stable.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> softmax_fwd(const TensorT<T>& x) {
  const int rows = x.rows(), cols = x.cols();
  TensorT<T> y({rows, cols});
  for (int r = 0; r < rows; ++r) {
    const T* xr = x.row(r);
    T* yr = y.row(r);
    T m = xr[0];
    for (int c = 1; c < cols; ++c) m = std::max(m, xr[c]);
    double denom = 0.0;
    for (int c = 0; c < cols; ++c) {
      const T e = std::exp(xr[c] - m);
      yr[c] = e;
      denom += e;
    }
    const T inv = static_cast<T>(1.0 / denom);
    for (int c = 0; c < cols; ++c) yr[c] *= inv;
  }
  return y;
}

template <typename T>
void softmax_bwd(const TensorT<T>& y, const TensorT<T>& dy, TensorT<T>* dx) {
  const int rows = y.rows(), cols = y.cols();
  for (int r = 0; r < rows; ++r) {
    const T* yr = y.row(r);
    const T* gyr = dy.row(r);
    double dot = 0.0;
    for (int c = 0; c < cols; ++c) dot += static_cast<double>(gyr[c]) * yr[c];
    T* dxr = dx->row(r);
    for (int c = 0; c < cols; ++c) dxr[c] += yr[c] * (gyr[c] - static_cast<T>(dot));
  }
}

// ---------------------------------------------------------------------------
// GRU over a sequence. x:[T,Cin] h0:[H]; returns outputs [T,H].
// n = tanh(x W_n + b_n + r * (h U_n)); h' = (1-z) n + z h.
// ---------------------------------------------------------------------------

template <typename T>
struct GruWeights {
  const TensorT<T>*wz, *uz, *bz, *wr, *ur, *br, *wn, *un, *bn;
};

template <typename T>
struct GruCache {
  // Per-step gate activations needed by BPTT.
  TensorT<T> z, r, n, un;  // each [T,H]
};

template <typename T>
void gru_cell(const T* x, const T* h, const GruWeights<T>& w, int cin, int hidden, T* z_out,
              T* r_out, T* n_out, T* un_out, T* h_out) {
  auto matvec_add = [&](const TensorT<T>& m, const T* v, int in, T* acc) {
    for (int i = 0; i < in; ++i) {
      const T xv = v[i];
      const T* mr = m.row(i);
      for (int j = 0; j < hidden; ++j) acc[j] += xv * mr[j];
    }
  };
  std::vector<T> zl(hidden), rl(hidden), nl(hidden);
  for (int j = 0; j < hidden; ++j) zl[j] = w.bz->data[static_cast<size_t>(j)];
  matvec_add(*w.wz, x, cin, zl.data());
  matvec_add(*w.uz, h, hidden, zl.data());
  for (int j = 0; j < hidden; ++j) rl[j] = w.br->data[static_cast<size_t>(j)];
  matvec_add(*w.wr, x, cin, rl.data());
  matvec_add(*w.ur, h, hidden, rl.data());
  for (int j = 0; j < hidden; ++j) {
    z_out[j] = T(1) / (T(1) + std::exp(-zl[j]));
    r_out[j] = T(1) / (T(1) + std::exp(-rl[j]));
  }
  std::fill(un_out, un_out + hidden, T(0));
  matvec_add(*w.un, h, hidden, un_out);
  for (int j = 0; j < hidden; ++j) nl[j] = w.bn->data[static_cast<size_t>(j)];
  matvec_add(*w.wn, x, cin, nl.data());
  for (int j = 0; j < hidden; ++j) nl[j] += r_out[j] * un_out[j];
  for (int j = 0; j < hidden; ++j) {
    n_out[j] = std::tanh(nl[j]);
    h_out[j] = (T(1) - z_out[j]) * n_out[j] + z_out[j] * h[j];
  }
}

template <typename T>
TensorT<T> gru_fwd(const TensorT<T>& x, const TensorT<T>& h0, const GruWeights<T>& w,
                   GruCache<T>* cache) {
  const int frames = x.rows(), cin = x.cols();
  const int hidden = static_cast<int>(h0.numel());
  require(w.wz->rows() == cin && w.uz->rows() == hidden, "shape_mismatch", "gru weights");
  TensorT<T> out({frames, hidden});
  if (cache) {
    cache->z = TensorT<T>({frames, hidden});
    cache->r = TensorT<T>({frames, hidden});
    cache->n = TensorT<T>({frames, hidden});
    cache->un = TensorT<T>({frames, hidden});
  }
  std::vector<T> scratch_z(hidden), scratch_r(hidden), scratch_n(hidden), scratch_un(hidden);
  const T* h = h0.data.data();
  for (int t = 0; t < frames; ++t) {
    T* zp = cache ? cache->z.row(t) : scratch_z.data();
    T* rp = cache ? cache->r.row(t) : scratch_r.data();
    T* np = cache ? cache->n.row(t) : scratch_n.data();
    T* up = cache ? cache->un.row(t) : scratch_un.data();
    gru_cell(x.row(t), h, w, cin, hidden, zp, rp, np, up, out.row(t));
    h = out.row(t);
  }
  return out;
}

template <typename T>
struct GruGrads {
  TensorT<T>*dwz, *duz, *dbz, *dwr, *dur, *dbr, *dwn, *dun, *dbn;
};

template <typename T>
void gru_bwd(const TensorT<T>& x, const TensorT<T>& h0, const GruWeights<T>& w,
             const GruCache<T>& cache, const TensorT<T>& out, const TensorT<T>& dout,
             TensorT<T>* dx, TensorT<T>* dh0, const GruGrads<T>& g) {
  const int frames = x.rows(), cin = x.cols();
  const int hidden = static_cast<int>(h0.numel());
  std::vector<T> dh(hidden, T(0));
  std::vector<T> dz(hidden), dr(hidden), dnp(hidden), dhprev(hidden);
  auto outer_acc = [&](TensorT<T>* m, const T* a, int in, const T* bvec) {
    if (!m) return;
    for (int i = 0; i < in; ++i) {
      const T av = a[i];
      T* mr = m->row(i);
      for (int j = 0; j < hidden; ++j) mr[j] += av * bvec[j];
    }
  };
  auto matvec_t_acc = [&](const TensorT<T>& m, const T* gvec, int in, T* acc) {
    // acc[i] += sum_j gvec[j] * m[i,j]
    for (int i = 0; i < in; ++i) {
      const T* mr = m.row(i);
      T dot = 0;
      for (int j = 0; j < hidden; ++j) dot += gvec[j] * mr[j];
      acc[i] += dot;
    }
  };
  for (int t = frames - 1; t >= 0; --t) {
    const T* gyr = dout.row(t);
    for (int j = 0; j < hidden; ++j) dh[static_cast<size_t>(j)] += gyr[j];
    const T* hprev = (t == 0) ? h0.data.data() : out.row(t - 1);
    const T* z = cache.z.row(t);
    const T* r = cache.r.row(t);
    const T* n = cache.n.row(t);
    const T* un = cache.un.row(t);
    for (int j = 0; j < hidden; ++j) {
      const T dhj = dh[static_cast<size_t>(j)];
      const T dn = dhj * (T(1) - z[j]);
      const T dn_pre = dn * (T(1) - n[j] * n[j]);
      dnp[static_cast<size_t>(j)] = dn_pre;
      dz[static_cast<size_t>(j)] = dhj * (hprev[j] - n[j]) * z[j] * (T(1) - z[j]);
      dr[static_cast<size_t>(j)] = dn_pre * un[j] * r[j] * (T(1) - r[j]);
      dhprev[static_cast<size_t>(j)] = dhj * z[j];
    }
    // n-path through U_n: d(un) = dn_pre * r
    std::vector<T> dun_vec(hidden);
    for (int j = 0; j < hidden; ++j) dun_vec[static_cast<size_t>(j)] = dnp[static_cast<size_t>(j)] * r[j];
    outer_acc(g.dwn, x.row(t), cin, dnp.data());
    outer_acc(g.dun, hprev, hidden, dun_vec.data());
    outer_acc(g.dwz, x.row(t), cin, dz.data());
    outer_acc(g.duz, hprev, hidden, dz.data());
    outer_acc(g.dwr, x.row(t), cin, dr.data());
    outer_acc(g.dur, hprev, hidden, dr.data());
    if (g.dbn)
      for (int j = 0; j < hidden; ++j) g.dbn->data[static_cast<size_t>(j)] += dnp[static_cast<size_t>(j)];
    if (g.dbz)
      for (int j = 0; j < hidden; ++j) g.dbz->data[static_cast<size_t>(j)] += dz[static_cast<size_t>(j)];
    if (g.dbr)
      for (int j = 0; j < hidden; ++j) g.dbr->data[static_cast<size_t>(j)] += dr[static_cast<size_t>(j)];
    if (dx) {
      T* dxr = dx->row(t);
      for (int i = 0; i < cin; ++i) {
        const T* wzr = w.wz->row(i);
        const T* wrr = w.wr->row(i);
        const T* wnr = w.wn->row(i);
        T acc = 0;
        for (int j = 0; j < hidden; ++j)
          acc += dz[static_cast<size_t>(j)] * wzr[j] + dr[static_cast<size_t>(j)] * wrr[j] +
                 dnp[static_cast<size_t>(j)] * wnr[j];
        dxr[i] += acc;
      }
    }
    matvec_t_acc(*w.uz, dz.data(), hidden, dhprev.data());
    matvec_t_acc(*w.ur, dr.data(), hidden, dhprev.data());
    matvec_t_acc(*w.un, dun_vec.data(), hidden, dhprev.data());
    dh.assign(dhprev.begin(), dhprev.end());
    std::fill(dhprev.begin(), dhprev.end(), T(0));
  }
  if (dh0) {
    for (int j = 0; j < hidden; ++j) dh0->data[static_cast<size_t>(j)] += dh[static_cast<size_t>(j)];
  }
}

// ---------------------------------------------------------------------------
// Elementwise activations.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> relu_fwd(const TensorT<T>& x) {
  TensorT<T> y = x;
  for (auto& v : y.data) v = v > T(0) ? v : T(0);
  return y;
}

template <typename T>
TensorT<T> tanh_fwd(const TensorT<T>& x) {
  TensorT<T> y = x;
  for (auto& v : y.data) v = std::tanh(v);
  return y;
}

template <typename T>
TensorT<T> sigmoid_fwd(const TensorT<T>& x) {
  TensorT<T> y = x;
  for (auto& v : y.data) v = T(1) / (T(1) + std::exp(-v));
  return y;
}

// ---------------------------------------------------------------------------
// Embedding lookup: table:[V,E], ids:[T] -> [T,E]
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> embedding_fwd(const TensorT<T>& table, const std::vector<int>& ids) {
  const int width = table.cols();
  TensorT<T> y({static_cast<int>(ids.size()), width});
  for (size_t t = 0; t < ids.size(); ++t) {
    require(ids[t] >= 0 && ids[t] < table.rows(), "bad_id", "embedding id out of range");
    std::copy_n(table.row(ids[t]), width, y.row(static_cast<int>(t)));
  }
  return y;
}

}  // namespace svc::kernels
