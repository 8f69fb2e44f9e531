// Copyright (c) 2026 eend authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EEND_AUTODIFF_HPP
#define EEND_AUTODIFF_HPP

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "eend/matrix.hpp"
#include "eend/params.hpp"

namespace eend {

template <class T>
class Graph;

/// Handle to a tape node. Cheap to copy; tied to the graph that created it.
template <class T>
struct Var {
  Graph<T>* g = nullptr;
  int id = -1;

  const Matrix<T>& value() const;
  int64_t rows() const { return value().rows; }
  int64_t cols() const { return value().cols; }
};

/// Reverse-mode tape over Matrix values. Nodes are appended in evaluation
/// order; backward() walks them in reverse, so the tape is its own topological
/// order. One graph instance is single-threaded by construction.
template <class T>
class Graph {
 public:
  struct Node {
    Matrix<T> val;
    Matrix<T> grad;
    std::function<void(Graph&)> back;  // empty for leaves
    std::string pname;                 // set for parameter leaves
  };

  Graph() { nodes_.reserve(256); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> make(Matrix<T> val, std::function<void(Graph&)> back = nullptr, std::string pname = "") {
    Node n;
    n.val = std::move(val);
    n.back = std::move(back);
    n.pname = std::move(pname);
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  /// Constant leaf; receives no parameter gradient (input gradients are still
  /// tracked in its grad slot).
  Var<T> leaf(Matrix<T> v) { return make(std::move(v)); }

  /// Parameter leaf. Memoized per name so a parameter reused across taps maps
  /// to a single node whose gradient accumulates every use.
  Var<T> param(ParameterStore<T>& store, const std::string& name) {
    if (store_ == nullptr) store_ = &store;
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end()) return Var<T>{this, it->second};
    Var<T> v = make(store.value(name), nullptr, name);
    param_nodes_.emplace(name, v.id);
    return v;
  }

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

  const Matrix<T>& value(Var<T> v) const { return node(v.id).val; }
  const Matrix<T>& grad_of(Var<T> v) const { return node(v.id).grad; }

  /// Runs reverse accumulation from a scalar root. Parameter gradients are
  /// added into `out` when given, otherwise into the originating store.
  void backward(Var<T> root, GradMap<T>* out = nullptr) {
    Node& r = node(root.id);
    if (r.val.numel() != 1) throw std::invalid_argument("backward root must be a 1x1 scalar");
    if (!std::isfinite(static_cast<double>(r.val.data[0])))
      throw DivergenceError("backward on non-finite loss");
    for (int id = 0; id <= root.id; ++id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      n.grad = Matrix<T>::zeros(n.val.rows, n.val.cols);
    }
    r.grad.data[0] = T(1);
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (n.back) n.back(*this);
    }
    for (int id = 0; id <= root.id; ++id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (n.pname.empty()) continue;
      if (out != nullptr) {
        auto it = out->find(n.pname);
        if (it == out->end())
          out->emplace(n.pname, n.grad);
        else
          add_inplace(it->second, n.grad);
      } else {
        add_inplace(store_->grad(n.pname), n.grad);
      }
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  std::map<std::string, int> param_nodes_;
  ParameterStore<T>* store_ = nullptr;
};

template <class T>
const Matrix<T>& Var<T>::value() const {
  return g->value(*this);
}

namespace detail {
template <class T>
Graph<T>& same_graph(Var<T> a, Var<T> b) {
  if (a.g != b.g) throw std::invalid_argument("vars from different graphs");
  return *a.g;
}
}  // namespace detail

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  Graph<T>& g = detail::same_graph(a, b);
  const Matrix<T>&av = a.value(), &bv = b.value();
  if (!av.same_shape(bv)) detail::shape_fail("add", av.shape_str(), bv.shape_str());
  Matrix<T> out = av;
  add_inplace(out, bv);
  return g.make(std::move(out), [ai = a.id, bi = b.id, self = (int)g.size()](Graph<T>& gr) {
    add_inplace(gr.node(ai).grad, gr.node(self).grad);
    add_inplace(gr.node(bi).grad, gr.node(self).grad);
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  Graph<T>& g = detail::same_graph(a, b);
  const Matrix<T>&av = a.value(), &bv = b.value();
  if (!av.same_shape(bv)) detail::shape_fail("sub", av.shape_str(), bv.shape_str());
  Matrix<T> out = av;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] -= bv.data[i];
  return g.make(std::move(out), [ai = a.id, bi = b.id, self = (int)g.size()](Graph<T>& gr) {
    add_inplace(gr.node(ai).grad, gr.node(self).grad);
    axpy_inplace(gr.node(bi).grad, T(-1), gr.node(self).grad);
  });
}

template <class T>
Var<T> hadamard(Var<T> a, Var<T> b) {
  Graph<T>& g = detail::same_graph(a, b);
  const Matrix<T>&av = a.value(), &bv = b.value();
  if (!av.same_shape(bv)) detail::shape_fail("hadamard", av.shape_str(), bv.shape_str());
  Matrix<T> out = av;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] *= bv.data[i];
  return g.make(std::move(out), [ai = a.id, bi = b.id, self = (int)g.size()](Graph<T>& gr) {
    const Matrix<T>& gg = gr.node(self).grad;
    Matrix<T>&ga = gr.node(ai).grad, &gb = gr.node(bi).grad;
    const Matrix<T>&av2 = gr.node(ai).val, &bv2 = gr.node(bi).val;
    for (int64_t i = 0; i < gg.numel(); ++i) {
      ga.data[i] += gg.data[i] * bv2.data[i];
      gb.data[i] += gg.data[i] * av2.data[i];
    }
  });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  Graph<T>& g = *a.g;
  Matrix<T> out = a.value();
  for (auto& v : out.data) v *= s;
  return g.make(std::move(out), [ai = a.id, s, self = (int)g.size()](Graph<T>& gr) {
    axpy_inplace(gr.node(ai).grad, s, gr.node(self).grad);
  });
}

/// out(:,j) = a(:,j) + b(:,0) for every column j.
template <class T>
Var<T> add_col(Var<T> a, Var<T> b) {
  Graph<T>& g = detail::same_graph(a, b);
  const Matrix<T>&av = a.value(), &bv = b.value();
  if (bv.cols != 1 || bv.rows != av.rows) detail::shape_fail("add_col", av.shape_str(), bv.shape_str());
  Matrix<T> out = av;
  for (int64_t i = 0; i < out.rows; ++i) {
    T* row = out.row_ptr(i);
    const T bi = bv(i, 0);
    for (int64_t j = 0; j < out.cols; ++j) row[j] += bi;
  }
  return g.make(std::move(out), [ai = a.id, bi = b.id, self = (int)g.size()](Graph<T>& gr) {
    const Matrix<T>& gg = gr.node(self).grad;
    add_inplace(gr.node(ai).grad, gg);
    Matrix<T>& gb = gr.node(bi).grad;
    for (int64_t i = 0; i < gg.rows; ++i) {
      const T* row = gg.row_ptr(i);
      T acc = T(0);
      for (int64_t j = 0; j < gg.cols; ++j) acc += row[j];
      gb(i, 0) += acc;
    }
  });
}

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Graph<T>& g = detail::same_graph(a, b);
  Matrix<T> out = matmul(a.value(), b.value());
  return g.make(std::move(out), [ai = a.id, bi = b.id, self = (int)g.size()](Graph<T>& gr) {
    const Matrix<T>& gg = gr.node(self).grad;
    add_inplace(gr.node(ai).grad, matmul_nt(gg, gr.node(bi).val));
    add_inplace(gr.node(bi).grad, matmul_tn(gr.node(ai).val, gg));
  });
}

template <class T>
Var<T> transpose(Var<T> a) {
  Graph<T>& g = *a.g;
  return g.make(transpose(a.value()), [ai = a.id, self = (int)g.size()](Graph<T>& gr) {
    add_inplace(gr.node(ai).grad, transpose(gr.node(self).grad));
  });
}

template <class T>
Var<T> sigmoid(Var<T> a) {
  Graph<T>& g = *a.g;
  Matrix<T> out = a.value();
  for (auto& v : out.data) v = sigmoid_scalar(v);
  return g.make(std::move(out), [ai = a.id, self = (int)g.size()](Graph<T>& gr) {
    const Matrix<T>&gg = gr.node(self).grad, &y = gr.node(self).val;
    Matrix<T>& ga = gr.node(ai).grad;
    for (int64_t i = 0; i < gg.numel(); ++i) ga.data[i] += gg.data[i] * y.data[i] * (T(1) - y.data[i]);
  });
}

template <class T>
Var<T> tanh(Var<T> a) {
  Graph<T>& g = *a.g;
  Matrix<T> out = a.value();
  for (auto& v : out.data) v = std::tanh(v);
  return g.make(std::move(out), [ai = a.id, self = (int)g.size()](Graph<T>& gr) {
    const Matrix<T>&gg = gr.node(self).grad, &y = gr.node(self).val;
    Matrix<T>& ga = gr.node(ai).grad;
    for (int64_t i = 0; i < gg.numel(); ++i) ga.data[i] += gg.data[i] * (T(1) - y.data[i] * y.data[i]);
  });
}

template <class T>
Var<T> relu(Var<T> a) {
  Graph<T>& g = *a.g;
  Matrix<T> out = a.value();
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  return g.make(std::move(out), [ai = a.id, self = (int)g.size()](Graph<T>& gr) {
    const Matrix<T>& gg = gr.node(self).grad;
    const Matrix<T>& x = gr.node(ai).val;
    Matrix<T>& ga = gr.node(ai).grad;
    for (int64_t i = 0; i < gg.numel(); ++i)
      if (x.data[i] > T(0)) ga.data[i] += gg.data[i];
  });
}

/// Column-wise softmax with max subtraction.
template <class T>
Var<T> softmax_columns(Var<T> a) {
  Graph<T>& g = *a.g;
  const Matrix<T>& x = a.value();
  Matrix<T> out(x.rows, x.cols);
  for (int64_t j = 0; j < x.cols; ++j) {
    T mx = x(0, j);
    for (int64_t i = 1; i < x.rows; ++i) mx = std::max(mx, x(i, j));
    T sum = T(0);
    for (int64_t i = 0; i < x.rows; ++i) {
      out(i, j) = std::exp(x(i, j) - mx);
      sum += out(i, j);
    }
    for (int64_t i = 0; i < x.rows; ++i) out(i, j) /= sum;
  }
  return g.make(std::move(out), [ai = a.id, self = (int)g.size()](Graph<T>& gr) {
    const Matrix<T>&gg = gr.node(self).grad, &y = gr.node(self).val;
    Matrix<T>& ga = gr.node(ai).grad;
    for (int64_t j = 0; j < gg.cols; ++j) {
      T dot = T(0);
      for (int64_t i = 0; i < gg.rows; ++i) dot += gg(i, j) * y(i, j);
      for (int64_t i = 0; i < gg.rows; ++i) ga(i, j) += y(i, j) * (gg(i, j) - dot);
    }
  });
}

/// Per-column normalization over the row axis, then gain/bias.
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  Graph<T>& g = detail::same_graph(x, gain);
  detail::same_graph(gain, bias);
  const Matrix<T>& xv = x.value();
  const int64_t d = xv.rows;
  if (d < 2) throw std::invalid_argument("layer_norm needs at least 2 rows, got " + xv.shape_str());
  if (gain.value().rows != d || bias.value().rows != d || gain.value().cols != 1 || bias.value().cols != 1)
    detail::shape_fail("layer_norm", xv.shape_str(), gain.value().shape_str());
  Matrix<T> xhat(d, xv.cols);
  std::vector<T> inv_sigma(static_cast<size_t>(xv.cols));
  for (int64_t j = 0; j < xv.cols; ++j) {
    T mu = T(0);
    for (int64_t i = 0; i < d; ++i) mu += xv(i, j);
    mu /= static_cast<T>(d);
    T var = T(0);
    for (int64_t i = 0; i < d; ++i) {
      const T c = xv(i, j) - mu;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    inv_sigma[static_cast<size_t>(j)] = is;
    for (int64_t i = 0; i < d; ++i) xhat(i, j) = (xv(i, j) - mu) * is;
  }
  Matrix<T> out(d, xv.cols);
  const Matrix<T>&gv = gain.value(), &bv = bias.value();
  for (int64_t j = 0; j < xv.cols; ++j)
    for (int64_t i = 0; i < d; ++i) out(i, j) = gv(i, 0) * xhat(i, j) + bv(i, 0);
  return g.make(std::move(out), [xi = x.id, gi = gain.id, bi = bias.id, self = (int)g.size(),
                                 xh = std::move(xhat), is = std::move(inv_sigma)](Graph<T>& gr) {
    const Matrix<T>& gg = gr.node(self).grad;
    const Matrix<T>& gv2 = gr.node(gi).val;
    Matrix<T>&gx = gr.node(xi).grad, &ggain = gr.node(gi).grad, &gbias = gr.node(bi).grad;
    const int64_t d2 = gg.rows;
    for (int64_t j = 0; j < gg.cols; ++j) {
      T m1 = T(0), m2 = T(0);
      for (int64_t i = 0; i < d2; ++i) {
        const T dxh = gg(i, j) * gv2(i, 0);
        m1 += dxh;
        m2 += dxh * xh(i, j);
        ggain(i, 0) += gg(i, j) * xh(i, j);
        gbias(i, 0) += gg(i, j);
      }
      m1 /= static_cast<T>(d2);
      m2 /= static_cast<T>(d2);
      const T isj = is[static_cast<size_t>(j)];
      for (int64_t i = 0; i < d2; ++i) {
        const T dxh = gg(i, j) * gv2(i, 0);
        gx(i, j) += (dxh - m1 - xh(i, j) * m2) * isj;
      }
    }
  });
}

template <class T>
Var<T> slice_rows(Var<T> a, int64_t r0, int64_t r1) {
  Graph<T>& g = *a.g;
  const Matrix<T>& av = a.value();
  if (r0 < 0 || r1 > av.rows || r0 >= r1) throw std::invalid_argument("bad row slice");
  Matrix<T> out(r1 - r0, av.cols);
  for (int64_t i = r0; i < r1; ++i)
    for (int64_t j = 0; j < av.cols; ++j) out(i - r0, j) = av(i, j);
  return g.make(std::move(out), [ai = a.id, r0, self = (int)g.size()](Graph<T>& gr) {
    const Matrix<T>& gg = gr.node(self).grad;
    Matrix<T>& ga = gr.node(ai).grad;
    for (int64_t i = 0; i < gg.rows; ++i)
      for (int64_t j = 0; j < gg.cols; ++j) ga(i + r0, j) += gg(i, j);
  });
}

template <class T>
Var<T> slice_cols(Var<T> a, int64_t c0, int64_t c1) {
  Graph<T>& g = *a.g;
  const Matrix<T>& av = a.value();
  if (c0 < 0 || c1 > av.cols || c0 >= c1) throw std::invalid_argument("bad col slice");
  Matrix<T> out(av.rows, c1 - c0);
  for (int64_t i = 0; i < av.rows; ++i)
    for (int64_t j = c0; j < c1; ++j) out(i, j - c0) = av(i, j);
  return g.make(std::move(out), [ai = a.id, c0, self = (int)g.size()](Graph<T>& gr) {
    const Matrix<T>& gg = gr.node(self).grad;
    Matrix<T>& ga = gr.node(ai).grad;
    for (int64_t i = 0; i < gg.rows; ++i)
      for (int64_t j = 0; j < gg.cols; ++j) ga(i, j + c0) += gg(i, j);
  });
}

template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows of nothing");
  Graph<T>& g = *parts[0].g;
  int64_t rows = 0;
  const int64_t cols = parts[0].value().cols;
  std::vector<int> ids;
  for (const auto& p : parts) {
    if (p.value().cols != cols) detail::shape_fail("concat_rows", parts[0].value().shape_str(), p.value().shape_str());
    rows += p.value().rows;
    ids.push_back(p.id);
  }
  Matrix<T> out(rows, cols);
  int64_t r = 0;
  for (const auto& p : parts) {
    const Matrix<T>& pv = p.value();
    for (int64_t i = 0; i < pv.rows; ++i)
      for (int64_t j = 0; j < cols; ++j) out(r + i, j) = pv(i, j);
    r += pv.rows;
  }
  return g.make(std::move(out), [ids, self = (int)g.size()](Graph<T>& gr) {
    const Matrix<T>& gg = gr.node(self).grad;
    int64_t r2 = 0;
    for (int id : ids) {
      Matrix<T>& gp = gr.node(id).grad;
      for (int64_t i = 0; i < gp.rows; ++i)
        for (int64_t j = 0; j < gp.cols; ++j) gp(i, j) += gg(r2 + i, j);
      r2 += gp.rows;
    }
  });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols of nothing");
  Graph<T>& g = *parts[0].g;
  int64_t cols = 0;
  const int64_t rows = parts[0].value().rows;
  std::vector<int> ids;
  for (const auto& p : parts) {
    if (p.value().rows != rows) detail::shape_fail("concat_cols", parts[0].value().shape_str(), p.value().shape_str());
    cols += p.value().cols;
    ids.push_back(p.id);
  }
  Matrix<T> out(rows, cols);
  int64_t c = 0;
  for (const auto& p : parts) {
    const Matrix<T>& pv = p.value();
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < pv.cols; ++j) out(i, c + j) = pv(i, j);
    c += pv.cols;
  }
  return g.make(std::move(out), [ids, self = (int)g.size()](Graph<T>& gr) {
    const Matrix<T>& gg = gr.node(self).grad;
    int64_t c2 = 0;
    for (int id : ids) {
      Matrix<T>& gp = gr.node(id).grad;
      for (int64_t i = 0; i < gp.rows; ++i)
        for (int64_t j = 0; j < gp.cols; ++j) gp(i, j) += gg(i, c2 + j);
      c2 += gp.cols;
    }
  });
}

template <class T>
Var<T> sum_all(Var<T> a) {
  Graph<T>& g = *a.g;
  T acc = T(0);
  for (const T& v : a.value().data) acc += v;
  Matrix<T> out(1, 1);
  out.data[0] = acc;
  return g.make(std::move(out), [ai = a.id, self = (int)g.size()](Graph<T>& gr) {
    const T go = gr.node(self).grad.data[0];
    for (auto& v : gr.node(ai).grad.data) v += go;
  });
}

template <class T>
Var<T> mean_all(Var<T> a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.value().numel()));
}

/// Inverted dropout; mask is drawn at build time and reused in backward.
template <class T>
Var<T> dropout(Var<T> a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  Graph<T>& g = *a.g;
  const Matrix<T>& av = a.value();
  Matrix<T> mask(av.rows, av.cols);
  const T s = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : mask.data) m = unit_uniform(rng) < 1.0 - p ? s : T(0);
  Matrix<T> out = av;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] *= mask.data[i];
  return g.make(std::move(out), [ai = a.id, mk = std::move(mask), self = (int)g.size()](Graph<T>& gr) {
    const Matrix<T>& gg = gr.node(self).grad;
    Matrix<T>& ga = gr.node(ai).grad;
    for (int64_t i = 0; i < gg.numel(); ++i) ga.data[i] += gg.data[i] * mk.data[i];
  });
}

/// Mean binary cross-entropy against a fixed 0/1 target. Predictions are
/// clamped to [eps, 1-eps] before the logs; outside the clamp window the
/// contribution is constant so its derivative is zero.
template <class T>
Var<T> bce_mean(const Matrix<T>& y_true, Var<T> y_pred, T eps = T(1e-7)) {
  Graph<T>& g = *y_pred.g;
  const Matrix<T>& yp = y_pred.value();
  if (!y_true.same_shape(yp)) detail::shape_fail("bce_mean", y_true.shape_str(), yp.shape_str());
  const T n = static_cast<T>(yp.numel());
  T acc = T(0);
  for (int64_t i = 0; i < yp.numel(); ++i) {
    const T yc = std::min(std::max(yp.data[i], eps), T(1) - eps);
    const T yt = y_true.data[i];
    acc += -yt * std::log(yc) - (T(1) - yt) * std::log(T(1) - yc);
  }
  Matrix<T> out(1, 1);
  out.data[0] = acc / n;
  return g.make(std::move(out), [pi = y_pred.id, yt = y_true, eps, n, self = (int)g.size()](Graph<T>& gr) {
    const T go = gr.node(self).grad.data[0];
    const Matrix<T>& yp2 = gr.node(pi).val;
    Matrix<T>& gp = gr.node(pi).grad;
    for (int64_t i = 0; i < yp2.numel(); ++i) {
      const T y = yp2.data[i];
      if (y <= eps || y >= T(1) - eps) continue;
      gp.data[i] += go * (-yt.data[i] / y + (T(1) - yt.data[i]) / (T(1) - y)) / n;
    }
  });
}

}  // namespace eend

#endif  // EEND_AUTODIFF_HPP
