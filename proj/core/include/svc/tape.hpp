#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "svc/kernels.hpp"
#include "svc/tensor.hpp"

namespace svc {

// Reverse-mode autodiff over a tape that is rebuilt every training step.
// Nodes are appended in evaluation order, so the tape is already a valid
// topological order and backward() is a single reverse sweep.
//
// Templated on the scalar so the gradient test suite can run the exact
// same op implementations at double precision, where central differences
// are meaningful; production models instantiate float.
template <typename T>
class TapeT {
 public:
  using Id = int;

  struct GruIds {
    Id wz, uz, bz, wr, ur, br, wn, un, bn;
  };

  Id input(TensorT<T> v) { return push("input", std::move(v), {}, false, nullptr); }

  Id param(TensorT<T> v) { return push("param", std::move(v), {}, true, nullptr); }

  const TensorT<T>& value(Id id) const { return nodes_[static_cast<size_t>(id)].value; }

  // Gradient of the last backward() wrt node `id`. Zero tensor if the node
  // was never touched by the sweep.
  const TensorT<T>& grad(Id id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.numel() == 0) n.grad = TensorT<T>(n.value.shape);
    check_finite(n.grad, "gradient of " + n.op);
    return n.grad;
  }

  size_t size() const { return nodes_.size(); }
  const std::string& op_name(Id id) const { return nodes_[static_cast<size_t>(id)].op; }

  // -- kernel ops ---------------------------------------------------------

  Id affine(Id x, Id w, Id b) {
    TensorT<T> y = kernels::affine_fwd(value(x), value(w), value(b));
    return push("affine", std::move(y), {x, w, b}, any_requires({x, w, b}), [this, x, w, b](Node& n) {
      kernels::affine_bwd(value(x), value(w), n.grad, grad_dst(x), grad_dst(w), grad_dst(b));
    });
  }

  Id conv1d(Id x, Id w, Id b, kernels::ConvSpec spec) {
    TensorT<T> y = kernels::conv1d_fwd(value(x), value(w), value(b), spec);
    return push("conv1d", std::move(y), {x, w, b}, any_requires({x, w, b}),
                [this, x, w, b, spec](Node& n) {
                  kernels::conv1d_bwd(value(x), value(w), spec, n.grad, grad_dst(x), grad_dst(w),
                                      grad_dst(b));
                });
  }

  Id tconv1d(Id x, Id w, Id b) {
    TensorT<T> y = kernels::tconv1d_fwd(value(x), value(w), value(b));
    return push("tconv1d", std::move(y), {x, w, b}, any_requires({x, w, b}),
                [this, x, w, b](Node& n) {
                  kernels::tconv1d_bwd(value(x), value(w), n.grad, grad_dst(x), grad_dst(w),
                                       grad_dst(b));
                });
  }

  Id layer_norm(Id x, Id gain, Id bias) {
    auto cache = std::make_shared<kernels::LayerNormCache<T>>();
    TensorT<T> y = kernels::layer_norm_fwd(value(x), value(gain), value(bias), cache.get());
    const int rows = y.rows(), cols = y.cols();
    return push("layer_norm", std::move(y), {x, gain, bias}, any_requires({x, gain, bias}),
                [this, x, gain, bias, cache, rows, cols](Node& n) {
                  kernels::layer_norm_bwd(value(gain), *cache, rows, cols, n.grad, grad_dst(x),
                                          grad_dst(gain), grad_dst(bias));
                });
  }

  Id softmax(Id x) {
    TensorT<T> y = kernels::softmax_fwd(value(x));
    return push("softmax", std::move(y), {x}, any_requires({x}), [this, x](Node& n) {
      if (grad_dst(x)) kernels::softmax_bwd(n.value, n.grad, grad_dst(x));
    });
  }

  Id gru(Id x, Id h0, const GruIds& p) {
    auto cache = std::make_shared<kernels::GruCache<T>>();
    kernels::GruWeights<T> w{&value(p.wz), &value(p.uz), &value(p.bz),
                             &value(p.wr), &value(p.ur), &value(p.br),
                             &value(p.wn), &value(p.un), &value(p.bn)};
    TensorT<T> y = kernels::gru_fwd(value(x), value(h0), w, cache.get());
    std::vector<Id> ins{x, h0, p.wz, p.uz, p.bz, p.wr, p.ur, p.br, p.wn, p.un, p.bn};
    return push("gru", std::move(y), ins, any_requires(ins), [this, x, h0, p, cache](Node& n) {
      kernels::GruWeights<T> w{&value(p.wz), &value(p.uz), &value(p.bz),
                               &value(p.wr), &value(p.ur), &value(p.br),
                               &value(p.wn), &value(p.un), &value(p.bn)};
      kernels::GruGrads<T> g{grad_dst(p.wz), grad_dst(p.uz), grad_dst(p.bz),
                             grad_dst(p.wr), grad_dst(p.ur), grad_dst(p.br),
                             grad_dst(p.wn), grad_dst(p.un), grad_dst(p.bn)};
      kernels::gru_bwd(value(x), value(h0), w, *cache, n.value, n.grad, grad_dst(x),
                       grad_dst(h0), g);
    });
  }

  Id relu(Id x) {
    TensorT<T> y = kernels::relu_fwd(value(x));
    return push("relu", std::move(y), {x}, any_requires({x}), [this, x](Node& n) {
      TensorT<T>* dx = grad_dst(x);
      if (!dx) return;
      const TensorT<T>& xv = value(x);
      for (size_t i = 0; i < xv.data.size(); ++i)
        if (xv.data[i] > T(0)) dx->data[i] += n.grad.data[i];
    });
  }

  Id tanh_(Id x) {
    TensorT<T> y = kernels::tanh_fwd(value(x));
    return push("tanh", std::move(y), {x}, any_requires({x}), [this, x](Node& n) {
      TensorT<T>* dx = grad_dst(x);
      if (!dx) return;
      for (size_t i = 0; i < n.value.data.size(); ++i)
        dx->data[i] += n.grad.data[i] * (T(1) - n.value.data[i] * n.value.data[i]);
    });
  }

  Id sigmoid_(Id x) {
    TensorT<T> y = kernels::sigmoid_fwd(value(x));
    return push("sigmoid", std::move(y), {x}, any_requires({x}), [this, x](Node& n) {
      TensorT<T>* dx = grad_dst(x);
      if (!dx) return;
      for (size_t i = 0; i < n.value.data.size(); ++i)
        dx->data[i] += n.grad.data[i] * n.value.data[i] * (T(1) - n.value.data[i]);
    });
  }

  Id embedding(Id table, std::vector<int> ids) {
    TensorT<T> y = kernels::embedding_fwd(value(table), ids);
    return push("embedding", std::move(y), {table}, any_requires({table}),
                [this, table, ids = std::move(ids)](Node& n) {
                  TensorT<T>* dt = grad_dst(table);
                  if (!dt) return;
                  const int width = dt->cols();
                  for (size_t t = 0; t < ids.size(); ++t) {
                    const T* g = n.grad.row(static_cast<int>(t));
                    T* row = dt->row(ids[t]);
                    for (int c = 0; c < width; ++c) row[c] += g[c];
                  }
                });
  }

  Id concat_cols(Id a, Id b) {
    const TensorT<T>&av = value(a), &bv = value(b);
    require(av.rows() == bv.rows(), "shape_mismatch", "concat: row counts differ");
    TensorT<T> y({av.rows(), av.cols() + bv.cols()});
    for (int r = 0; r < av.rows(); ++r) {
      std::copy_n(av.row(r), av.cols(), y.row(r));
      std::copy_n(bv.row(r), bv.cols(), y.row(r) + av.cols());
    }
    const int ac = av.cols(), bc = bv.cols();
    return push("concat", std::move(y), {a, b}, any_requires({a, b}), [this, a, b, ac, bc](Node& n) {
      TensorT<T>* da = grad_dst(a);
      TensorT<T>* db = grad_dst(b);
      for (int r = 0; r < n.grad.rows(); ++r) {
        const T* g = n.grad.row(r);
        if (da)
          for (int c = 0; c < ac; ++c) da->row(r)[c] += g[c];
        if (db)
          for (int c = 0; c < bc; ++c) db->row(r)[c] += g[ac + c];
      }
    });
  }

  Id add(Id a, Id b) { return binary_ew("add", a, b, [](T x, T y) { return x + y; },
                                        [](T, T, T g) { return std::pair<T, T>{g, g}; }); }

  Id sub(Id a, Id b) { return binary_ew("sub", a, b, [](T x, T y) { return x - y; },
                                        [](T, T, T g) { return std::pair<T, T>{g, -g}; }); }

  Id mul(Id a, Id b) { return binary_ew("mul", a, b, [](T x, T y) { return x * y; },
                                        [](T x, T y, T g) { return std::pair<T, T>{g * y, g * x}; }); }

  Id scale(Id x, T c) {
    TensorT<T> y = value(x);
    for (auto& v : y.data) v *= c;
    return push("scale", std::move(y), {x}, any_requires({x}), [this, x, c](Node& n) {
      TensorT<T>* dx = grad_dst(x);
      if (!dx) return;
      for (size_t i = 0; i < n.grad.data.size(); ++i) dx->data[i] += n.grad.data[i] * c;
    });
  }

  Id add_weighted(Id a, Id b, T wa, T wb) {
    const TensorT<T>&av = value(a), &bv = value(b);
    require(av.same_shape(bv) || (av.numel() == 1 && bv.numel() == 1), "shape_mismatch",
            "add_weighted: shapes differ");
    TensorT<T> y = av;
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = wa * av.data[i] + wb * bv.data[i];
    return push("add_weighted", std::move(y), {a, b}, any_requires({a, b}),
                [this, a, b, wa, wb](Node& n) {
                  TensorT<T>* da = grad_dst(a);
                  TensorT<T>* db = grad_dst(b);
                  for (size_t i = 0; i < n.grad.data.size(); ++i) {
                    if (da) da->data[i] += wa * n.grad.data[i];
                    if (db) db->data[i] += wb * n.grad.data[i];
                  }
                });
  }

  // Broadcast one row to `rows` rows: [1,C] -> [rows,C].
  Id tile_rows(Id x, int rows) {
    const TensorT<T>& xv = value(x);
    require(xv.rows() == 1, "shape_mismatch", "tile_rows: input must have one row");
    TensorT<T> y({rows, xv.cols()});
    for (int r = 0; r < rows; ++r) std::copy_n(xv.row(0), xv.cols(), y.row(r));
    return push("tile_rows", std::move(y), {x}, any_requires({x}), [this, x](Node& n) {
      TensorT<T>* dx = grad_dst(x);
      if (!dx) return;
      for (int r = 0; r < n.grad.rows(); ++r) {
        const T* g = n.grad.row(r);
        for (int c = 0; c < n.grad.cols(); ++c) dx->data[static_cast<size_t>(c)] += g[c];
      }
    });
  }

  // Mean over rows: [T,C] -> [1,C].
  Id row_mean(Id x) {
    const TensorT<T>& xv = value(x);
    const int rows = xv.rows(), cols = xv.cols();
    TensorT<T> y({1, cols});
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int r = 0; r < rows; ++r) acc += xv.at(r, c);
      y.data[static_cast<size_t>(c)] = static_cast<T>(acc / rows);
    }
    return push("row_mean", std::move(y), {x}, any_requires({x}), [this, x, rows](Node& n) {
      TensorT<T>* dx = grad_dst(x);
      if (!dx) return;
      const T inv = T(1) / static_cast<T>(rows);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < n.grad.cols(); ++c) dx->at(r, c) += n.grad.row(0)[c] * inv;
    });
  }

  // -- losses and reductions (scalar outputs, double accumulation) --------

  Id cross_entropy(Id logits, std::vector<int> labels) {
    const TensorT<T>& x = value(logits);
    const int rows = x.rows(), cols = x.cols();
    require(static_cast<int>(labels.size()) == rows, "shape_mismatch", "cross_entropy labels");
    auto probs = std::make_shared<TensorT<T>>(kernels::softmax_fwd(x));
    double loss = 0.0;
    for (int r = 0; r < rows; ++r) {
      const T p = std::max(probs->at(r, labels[static_cast<size_t>(r)]), T(1e-12));
      loss -= std::log(static_cast<double>(p));
    }
    TensorT<T> y({1});
    y.data[0] = static_cast<T>(loss / rows);
    return push("cross_entropy", std::move(y), {logits}, any_requires({logits}),
                [this, logits, probs, labels = std::move(labels), rows, cols](Node& n) {
                  TensorT<T>* dx = grad_dst(logits);
                  if (!dx) return;
                  const T g = n.grad.data[0] / static_cast<T>(rows);
                  for (int r = 0; r < rows; ++r) {
                    const T* pr = probs->row(r);
                    T* dr = dx->row(r);
                    for (int c = 0; c < cols; ++c) dr[c] += g * pr[c];
                    dr[labels[static_cast<size_t>(r)]] -= g;
                  }
                });
  }

  // Mean absolute error; the subgradient at zero residual is fixed to 0.
  Id l1_loss(Id a, Id b) {
    const TensorT<T>&av = value(a), &bv = value(b);
    require(av.same_shape(bv), "shape_mismatch", "l1_loss shapes");
    double acc = 0.0;
    for (size_t i = 0; i < av.data.size(); ++i) acc += std::abs(double(av.data[i]) - double(bv.data[i]));
    TensorT<T> y({1});
    y.data[0] = static_cast<T>(acc / av.data.size());
    return push("l1_loss", std::move(y), {a, b}, any_requires({a, b}), [this, a, b](Node& n) {
      const TensorT<T>&av = value(a), &bv = value(b);
      TensorT<T>* da = grad_dst(a);
      TensorT<T>* db = grad_dst(b);
      const T g = n.grad.data[0] / static_cast<T>(av.data.size());
      for (size_t i = 0; i < av.data.size(); ++i) {
        const T d = av.data[i] - bv.data[i];
        const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
        if (da) da->data[i] += g * s;
        if (db) db->data[i] -= g * s;
      }
    });
  }

  Id mse_loss(Id a, Id b) {
    const TensorT<T>&av = value(a), &bv = value(b);
    require(av.same_shape(bv), "shape_mismatch", "mse_loss shapes");
    double acc = 0.0;
    for (size_t i = 0; i < av.data.size(); ++i) {
      const double d = double(av.data[i]) - double(bv.data[i]);
      acc += d * d;
    }
    TensorT<T> y({1});
    y.data[0] = static_cast<T>(acc / av.data.size());
    return push("mse_loss", std::move(y), {a, b}, any_requires({a, b}), [this, a, b](Node& n) {
      const TensorT<T>&av = value(a), &bv = value(b);
      TensorT<T>* da = grad_dst(a);
      TensorT<T>* db = grad_dst(b);
      const T g = T(2) * n.grad.data[0] / static_cast<T>(av.data.size());
      for (size_t i = 0; i < av.data.size(); ++i) {
        const T d = av.data[i] - bv.data[i];
        if (da) da->data[i] += g * d;
        if (db) db->data[i] -= g * d;
      }
    });
  }

  // mean((x - target)^2) against a constant; the least-squares GAN label.
  Id lsq_loss(Id x, T target) {
    const TensorT<T>& xv = value(x);
    double acc = 0.0;
    for (T v : xv.data) {
      const double d = double(v) - double(target);
      acc += d * d;
    }
    TensorT<T> y({1});
    y.data[0] = static_cast<T>(acc / xv.data.size());
    return push("lsq_loss", std::move(y), {x}, any_requires({x}), [this, x, target](Node& n) {
      TensorT<T>* dx = grad_dst(x);
      if (!dx) return;
      const TensorT<T>& xv = value(x);
      const T g = T(2) * n.grad.data[0] / static_cast<T>(xv.data.size());
      for (size_t i = 0; i < xv.data.size(); ++i) dx->data[i] += g * (xv.data[i] - target);
    });
  }

  Id mean_all(Id x) {
    const TensorT<T>& xv = value(x);
    double acc = 0.0;
    for (T v : xv.data) acc += v;
    TensorT<T> y({1});
    y.data[0] = static_cast<T>(acc / xv.data.size());
    return push("mean_all", std::move(y), {x}, any_requires({x}), [this, x](Node& n) {
      TensorT<T>* dx = grad_dst(x);
      if (!dx) return;
      const T g = n.grad.data[0] / static_cast<T>(dx->data.size());
      for (auto& v : dx->data) v += g;
    });
  }

  // -- spectral-loss building blocks ---------------------------------------

  // Slice a 1-D signal (any shape, flattened) into windowed frames.
  Id frames(Id x, int win, int hop, std::vector<T> window) {
    const TensorT<T>& xv = value(x);
    const int n = static_cast<int>(xv.numel());
    require(n >= win, "signal_too_short", "frames: signal shorter than window");
    const int count = (n - win) / hop + 1;
    TensorT<T> y({count, win});
    for (int f = 0; f < count; ++f) {
      const T* src = xv.data.data() + static_cast<size_t>(f) * hop;
      T* dst = y.row(f);
      for (int i = 0; i < win; ++i) dst[i] = src[i] * window[static_cast<size_t>(i)];
    }
    return push("frames", std::move(y), {x}, any_requires({x}),
                [this, x, win, hop, window = std::move(window)](Node& n) {
                  TensorT<T>* dx = grad_dst(x);
                  if (!dx) return;
                  for (int f = 0; f < n.grad.rows(); ++f) {
                    const T* g = n.grad.row(f);
                    T* dst = dx->data.data() + static_cast<size_t>(f) * hop;
                    for (int i = 0; i < win; ++i) dst[i] += g[i] * window[static_cast<size_t>(i)];
                  }
                });
  }

  // sqrt(re^2 + im^2 + eps), elementwise.
  Id magnitude(Id re, Id im) {
    const TensorT<T>&rv = value(re), &iv = value(im);
    require(rv.same_shape(iv), "shape_mismatch", "magnitude shapes");
    TensorT<T> y = rv;
    constexpr double kEps = 1e-12;
    for (size_t i = 0; i < y.data.size(); ++i)
      y.data[i] = static_cast<T>(std::sqrt(double(rv.data[i]) * rv.data[i] +
                                           double(iv.data[i]) * iv.data[i] + kEps));
    return push("magnitude", std::move(y), {re, im}, any_requires({re, im}),
                [this, re, im](Node& n) {
                  TensorT<T>* dre = grad_dst(re);
                  TensorT<T>* dim = grad_dst(im);
                  const TensorT<T>&rv = value(re), &iv = value(im);
                  for (size_t i = 0; i < n.value.data.size(); ++i) {
                    const T inv = n.grad.data[i] / n.value.data[i];
                    if (dre) dre->data[i] += inv * rv.data[i];
                    if (dim) dim->data[i] += inv * iv.data[i];
                  }
                });
  }

  Id log_eps(Id x, T eps) {
    const TensorT<T>& xv = value(x);
    TensorT<T> y = xv;
    for (auto& v : y.data) v = std::log(v + eps);
    return push("log_eps", std::move(y), {x}, any_requires({x}), [this, x, eps](Node& n) {
      TensorT<T>* dx = grad_dst(x);
      if (!dx) return;
      const TensorT<T>& xv = value(x);
      for (size_t i = 0; i < xv.data.size(); ++i)
        dx->data[i] += n.grad.data[i] / (xv.data[i] + eps);
    });
  }

  Id fro_norm(Id x) {
    const TensorT<T>& xv = value(x);
    double acc = 0.0;
    for (T v : xv.data) acc += double(v) * v;
    TensorT<T> y({1});
    y.data[0] = static_cast<T>(std::sqrt(acc + 1e-12));
    return push("fro_norm", std::move(y), {x}, any_requires({x}), [this, x](Node& n) {
      TensorT<T>* dx = grad_dst(x);
      if (!dx) return;
      const TensorT<T>& xv = value(x);
      const T g = n.grad.data[0] / n.value.data[0];
      for (size_t i = 0; i < xv.data.size(); ++i) dx->data[i] += g * xv.data[i];
    });
  }

  Id div_scalar(Id a, Id b) {
    require(value(a).numel() == 1 && value(b).numel() == 1, "shape_mismatch",
            "div_scalar expects scalars");
    TensorT<T> y({1});
    y.data[0] = value(a).data[0] / value(b).data[0];
    return push("div_scalar", std::move(y), {a, b}, any_requires({a, b}), [this, a, b](Node& n) {
      TensorT<T>* da = grad_dst(a);
      TensorT<T>* db = grad_dst(b);
      const T av = value(a).data[0], bv = value(b).data[0];
      if (da) da->data[0] += n.grad.data[0] / bv;
      if (db) db->data[0] -= n.grad.data[0] * av / (bv * bv);
    });
  }

  // -- backward -------------------------------------------------------------

  void backward(Id loss) {
    Node& ln = nodes_[static_cast<size_t>(loss)];
    require(ln.value.numel() == 1, "bad_loss", "backward: loss must be scalar");
    require(ln.requires_grad, "disconnected_loss",
            "backward: loss does not depend on any parameter");
    ln.grad = TensorT<T>({1});
    ln.grad.data[0] = T(1);
    for (Id id = loss; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.requires_grad || n.grad.numel() == 0 || !n.backward) continue;
      n.backward(n);
    }
  }

 private:
  struct Node {
    std::string op;
    TensorT<T> value;
    TensorT<T> grad;  // lazily allocated
    std::vector<Id> inputs;
    bool requires_grad = false;
    std::function<void(Node&)> backward;
  };

  std::vector<Node> nodes_;

  bool any_requires(const std::vector<Id>& ids) const {
    for (Id id : ids)
      if (nodes_[static_cast<size_t>(id)].requires_grad) return true;
    return false;
  }

  // Returns the accumulation target for a node's gradient, or nullptr when
  // the node does not require grad (frozen inputs).
  TensorT<T>* grad_dst(Id id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return nullptr;
    if (n.grad.numel() == 0) n.grad = TensorT<T>(n.value.shape);
    return &n.grad;
  }

  Id push(const char* op, TensorT<T> value, std::vector<Id> inputs, bool needs_grad,
          std::function<void(Node&)> backward) {
    check_finite(value, std::string("output of ") + op);
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.requires_grad = needs_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  template <typename FwdFn, typename BwdFn>
  Id binary_ew(const char* op, Id a, Id b, FwdFn fwd, BwdFn bwd) {
    const TensorT<T>&av = value(a), &bv = value(b);
    require(av.same_shape(bv), "shape_mismatch", std::string(op) + ": shapes differ");
    TensorT<T> y = av;
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = fwd(av.data[i], bv.data[i]);
    return push(op, std::move(y), {a, b}, any_requires({a, b}), [this, a, b, bwd](Node& n) {
      const TensorT<T>&av = value(a), &bv = value(b);
      TensorT<T>* da = grad_dst(a);
      TensorT<T>* db = grad_dst(b);
      for (size_t i = 0; i < n.grad.data.size(); ++i) {
        auto [ga, gb] = bwd(av.data[i], bv.data[i], n.grad.data[i]);
        if (da) da->data[i] += ga;
        if (db) db->data[i] += gb;
      }
    });
  }
};

using Tape = TapeT<float>;

}  // namespace svc
