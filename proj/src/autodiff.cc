// Copyright 2026 The Subnav Authors.
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

#include "subnav/autodiff.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace subnav::num {
namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " + shape_string(a.shape()));
  }
}

// Accumulates `g` into the gradient of `v` when it needs one.
void accumulate(Tape& t, Var v, const Tensor& g) {
  if (!t.requires_grad(v.id())) return;
  Tensor& dst = t.grad(v.id());
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

bool any_requires_grad(Tape& t, std::initializer_list<Var> vars) {
  for (Var v : vars) {
    if (v.valid() && t.requires_grad(v.id())) return true;
  }
  return false;
}

template <typename Fwd, typename Bwd>
Var unary(const char* op, Var a, Fwd fwd, Bwd bwd) {
  Tape& t = tape_of({a});
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  Tensor saved = y;
  return t.record(op, std::move(y), any_requires_grad(t, {a}),
                  [a, bwd, saved = std::move(saved)](Tape& tp,
                                                     const Tensor& g) {
                    if (!tp.requires_grad(a.id())) return;
                    const Tensor& x = tp.value(a.id());
                    Tensor& dx = tp.grad(a.id());
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      dx[i] += g[i] * bwd(x[i], saved[i]);
                    }
                  });
}

}  // namespace

Parameter& ParamStore::add(std::string name, Shape shape, std::size_t fan_in) {
  if (index_.count(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Tensor(shape);
  p->grad = Tensor(shape);
  p->fan_in = std::max<std::size_t>(fan_in, 1);
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParamStore::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw std::out_of_range("unknown parameter: " + std::string(name));
  }
  return *params_[it->second];
}

const Parameter& ParamStore::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw std::out_of_range("unknown parameter: " + std::string(name));
  }
  return *params_[it->second];
}

bool ParamStore::contains(std::string_view name) const {
  return index_.count(std::string(name)) > 0;
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::init_uniform(Rng& rng) {
  for (auto& p : params_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p->fan_in));
    for (double& v : p->value.values()) v = rng.uniform(-bound, bound);
  }
}

void ParamStore::fill(double v) {
  for (auto& p : params_) p->value.fill(v);
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

const Tensor& Var::value() const { return tape_->value(id_); }

const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) {
  value.require_finite("constant");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  p.value.require_finite(p.name.c_str());
  Node n;
  n.param = &p;
  n.requires_grad = track_gradients_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(const char* op, Tensor value, bool requires_grad,
                 Backward backward) {
  value.require_finite(op);
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && track_gradients_;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Tensor& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.param != nullptr ? n.param->value : n.value;
}

Tensor& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.param != nullptr) {
    if (n.param->grad.shape() != n.param->value.shape()) {
      n.param->grad = Tensor(n.param->value.shape());
    }
    n.has_grad = true;
    return n.param->grad;
  }
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!track_gradients_) {
    throw std::logic_error("backward() on a tape without gradient tracking");
  }
  if (loss.tape() != this) {
    throw std::invalid_argument("backward(): loss recorded on another tape");
  }
  if (loss.value().size() != 1) {
    throw ShapeError("backward(): loss must be a scalar, got shape " +
                     shape_string(loss.value().shape()));
  }
  grad(loss.id())[0] += 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward || n.param != nullptr) continue;
    n.backward(*this, n.grad);
  }
}

Tape& tape_of(std::initializer_list<Var> vars) {
  Tape* t = nullptr;
  for (Var v : vars) {
    if (!v.valid()) continue;
    if (t == nullptr) {
      t = v.tape();
    } else if (v.tape() != t) {
      throw std::invalid_argument("operands recorded on different tapes");
    }
  }
  if (t == nullptr) throw std::invalid_argument("op on empty Var");
  return *t;
}

Var add(Var a, Var b) {
  Tape& t = tape_of({a, b});
  require_same_shape("add", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return t.record("add", std::move(y), any_requires_grad(t, {a, b}),
                  [a, b](Tape& tp, const Tensor& g) {
                    accumulate(tp, a, g);
                    accumulate(tp, b, g);
                  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of({a, b});
  require_same_shape("sub", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return t.record("sub", std::move(y), any_requires_grad(t, {a, b}),
                  [a, b](Tape& tp, const Tensor& g) {
                    accumulate(tp, a, g);
                    if (!tp.requires_grad(b.id())) return;
                    Tensor& db = tp.grad(b.id());
                    for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
                  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of({a, b});
  require_same_shape("mul", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return t.record("mul", std::move(y), any_requires_grad(t, {a, b}),
                  [a, b](Tape& tp, const Tensor& g) {
                    const Tensor& av = tp.value(a.id());
                    const Tensor& bv = tp.value(b.id());
                    if (tp.requires_grad(a.id())) {
                      Tensor& da = tp.grad(a.id());
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        da[i] += g[i] * bv[i];
                      }
                    }
                    if (tp.requires_grad(b.id())) {
                      Tensor& db = tp.grad(b.id());
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        db[i] += g[i] * av[i];
                      }
                    }
                  });
}

Var scale(Var a, double c) {
  return unary(
      "scale", a, [c](double x) { return c * x; },
      [c](double, double) { return c; });
}

Var shift(Var a, double c) {
  return unary(
      "shift", a, [c](double x) { return x + c; },
      [](double, double) { return 1.0; });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        // Split by sign so exp() never overflows.
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(
      "square", a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var sum(Var a) {
  Tape& t = tape_of({a});
  const auto& v = a.value().values();
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  return t.record("sum", Tensor::scalar(s), any_requires_grad(t, {a}),
                  [a](Tape& tp, const Tensor& g) {
                    if (!tp.requires_grad(a.id())) return;
                    Tensor& da = tp.grad(a.id());
                    for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[0];
                  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var dot(Var a, Var b) {
  Tape& t = tape_of({a, b});
  require_same_shape("dot", a.value(), b.value());
  const auto& av = a.value().values();
  const auto& bv = b.value().values();
  const double s = std::inner_product(av.begin(), av.end(), bv.begin(), 0.0);
  return t.record("dot", Tensor::scalar(s), any_requires_grad(t, {a, b}),
                  [a, b](Tape& tp, const Tensor& g) {
                    const Tensor& av = tp.value(a.id());
                    const Tensor& bv = tp.value(b.id());
                    if (tp.requires_grad(a.id())) {
                      Tensor& da = tp.grad(a.id());
                      for (std::size_t i = 0; i < da.size(); ++i) {
                        da[i] += g[0] * bv[i];
                      }
                    }
                    if (tp.requires_grad(b.id())) {
                      Tensor& db = tp.grad(b.id());
                      for (std::size_t i = 0; i < db.size(); ++i) {
                        db[i] += g[0] * av[i];
                      }
                    }
                  });
}

Var softmax(Var a) {
  Tape& t = tape_of({a});
  const Tensor& x = a.value();
  if (x.rank() != 1 && x.rank() != 2) {
    throw ShapeError("softmax: expected a vector or matrix, got " +
                     shape_string(x.shape()));
  }
  if (x.size() == 0) throw ShapeError("softmax: empty input");
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.size() / width;
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * width;
    double* out = y.data().data() + r * width;
    const double m = *std::max_element(in, in + width);
    double z = 0.0;
    for (std::size_t i = 0; i < width; ++i) z += (out[i] = std::exp(in[i] - m));
    for (std::size_t i = 0; i < width; ++i) out[i] /= z;
  }
  Tensor saved = y;
  return t.record(
      "softmax", std::move(y), any_requires_grad(t, {a}),
      [a, width, rows, saved = std::move(saved)](Tape& tp, const Tensor& g) {
        if (!tp.requires_grad(a.id())) return;
        Tensor& dx = tp.grad(a.id());
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t o = r * width;
          double gy = 0.0;
          for (std::size_t i = 0; i < width; ++i) gy += g[o + i] * saved[o + i];
          for (std::size_t i = 0; i < width; ++i) {
            dx[o + i] += saved[o + i] * (g[o + i] - gy);
          }
        }
      });
}

Var log_softmax(Var a) {
  Tape& t = tape_of({a});
  const Tensor& x = a.value();
  require_rank("log_softmax", x, 1);
  if (x.size() == 0) throw ShapeError("log_softmax: empty input");
  const double m = *std::max_element(x.values().begin(), x.values().end());
  double z = 0.0;
  for (double v : x.values()) z += std::exp(v - m);
  const double lse = m + std::log(z);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - lse;
  Tensor saved = y;
  return t.record("log_softmax", std::move(y), any_requires_grad(t, {a}),
                  [a, saved = std::move(saved)](Tape& tp, const Tensor& g) {
                    if (!tp.requires_grad(a.id())) return;
                    Tensor& dx = tp.grad(a.id());
                    double gs = 0.0;
                    for (double v : g.values()) gs += v;
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      dx[i] += g[i] - std::exp(saved[i]) * gs;
                    }
                  });
}

Var linear(Var x, Var w, Var b) {
  Tape& t = tape_of({x, w, b});
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank("linear weight", wv, 2);
  if (xv.rank() != 1 && xv.rank() != 2) {
    throw ShapeError("linear: input must be a vector or matrix, got " +
                     shape_string(xv.shape()));
  }
  const std::size_t in = wv.dim(0);
  const std::size_t out = wv.dim(1);
  if (xv.shape().back() != in) {
    throw ShapeError("linear: input " + shape_string(xv.shape()) +
                     " does not match weight " + shape_string(wv.shape()));
  }
  if (b.valid() && (b.value().rank() != 1 || b.value().dim(0) != out)) {
    throw ShapeError("linear: bias " + shape_string(b.value().shape()) +
                     " does not match weight " + shape_string(wv.shape()));
  }
  const std::size_t rows = xv.rank() == 1 ? 1 : xv.dim(0);
  Tensor y(xv.rank() == 1 ? Shape{out} : Shape{rows, out});
  const double* W = wv.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = y.data().data() + r * out;
    if (b.valid()) std::copy_n(b.value().data().data(), out, yr);
    const double* xr = xv.data().data() + r * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xr[i];
      if (xi == 0.0) continue;
      const double* wi = W + i * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += xi * wi[j];
    }
  }
  return t.record(
      "linear", std::move(y), any_requires_grad(t, {x, w, b}),
      [x, w, b, rows, in, out](Tape& tp, const Tensor& g) {
        const Tensor& xv = tp.value(x.id());
        const Tensor& wv = tp.value(w.id());
        const double* G = g.data().data();
        if (tp.requires_grad(w.id())) {
          double* dW = tp.grad(w.id()).data().data();
          for (std::size_t r = 0; r < rows; ++r) {
            const double* xr = xv.data().data() + r * in;
            const double* gr = G + r * out;
            for (std::size_t i = 0; i < in; ++i) {
              const double xi = xr[i];
              if (xi == 0.0) continue;
              double* dwi = dW + i * out;
              for (std::size_t j = 0; j < out; ++j) dwi[j] += xi * gr[j];
            }
          }
        }
        if (b.valid() && tp.requires_grad(b.id())) {
          double* db = tp.grad(b.id()).data().data();
          for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = G + r * out;
            for (std::size_t j = 0; j < out; ++j) db[j] += gr[j];
          }
        }
        if (tp.requires_grad(x.id())) {
          double* dx = tp.grad(x.id()).data().data();
          const double* W = wv.data().data();
          for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = G + r * out;
            for (std::size_t i = 0; i < in; ++i) {
              const double* wi = W + i * out;
              double s = 0.0;
              for (std::size_t j = 0; j < out; ++j) s += wi[j] * gr[j];
              dx[r * in + i] += s;
            }
          }
        }
      });
}

Var matvec(Var m, Var v) {
  Tape& t = tape_of({m, v});
  const Tensor& mv = m.value();
  const Tensor& vv = v.value();
  require_rank("matvec matrix", mv, 2);
  require_rank("matvec vector", vv, 1);
  const std::size_t rows = mv.dim(0);
  const std::size_t k = mv.dim(1);
  if (vv.dim(0) != k) {
    throw ShapeError("matvec: " + shape_string(mv.shape()) + " x " +
                     shape_string(vv.shape()));
  }
  Tensor y(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* mr = mv.data().data() + r * k;
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += mr[i] * vv[i];
    y[r] = s;
  }
  return t.record("matvec", std::move(y), any_requires_grad(t, {m, v}),
                  [m, v, rows, k](Tape& tp, const Tensor& g) {
                    const Tensor& mv = tp.value(m.id());
                    const Tensor& vv = tp.value(v.id());
                    if (tp.requires_grad(m.id())) {
                      Tensor& dm = tp.grad(m.id());
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t i = 0; i < k; ++i) {
                          dm[r * k + i] += g[r] * vv[i];
                        }
                      }
                    }
                    if (tp.requires_grad(v.id())) {
                      Tensor& dv = tp.grad(v.id());
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t i = 0; i < k; ++i) {
                          dv[i] += g[r] * mv[r * k + i];
                        }
                      }
                    }
                  });
}

Var vecmat(Var v, Var m) {
  Tape& t = tape_of({v, m});
  const Tensor& vv = v.value();
  const Tensor& mv = m.value();
  require_rank("vecmat vector", vv, 1);
  require_rank("vecmat matrix", mv, 2);
  const std::size_t rows = mv.dim(0);
  const std::size_t k = mv.dim(1);
  if (vv.dim(0) != rows) {
    throw ShapeError("vecmat: " + shape_string(vv.shape()) + " x " +
                     shape_string(mv.shape()));
  }
  Tensor y(Shape{k});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* mr = mv.data().data() + r * k;
    for (std::size_t i = 0; i < k; ++i) y[i] += vv[r] * mr[i];
  }
  return t.record("vecmat", std::move(y), any_requires_grad(t, {v, m}),
                  [v, m, rows, k](Tape& tp, const Tensor& g) {
                    const Tensor& vv = tp.value(v.id());
                    const Tensor& mv = tp.value(m.id());
                    if (tp.requires_grad(v.id())) {
                      Tensor& dv = tp.grad(v.id());
                      for (std::size_t r = 0; r < rows; ++r) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < k; ++i) {
                          s += g[i] * mv[r * k + i];
                        }
                        dv[r] += s;
                      }
                    }
                    if (tp.requires_grad(m.id())) {
                      Tensor& dm = tp.grad(m.id());
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t i = 0; i < k; ++i) {
                          dm[r * k + i] += vv[r] * g[i];
                        }
                      }
                    }
                  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape* t = parts.front().tape();
  std::size_t n = 0;
  bool needs = false;
  for (Var p : parts) {
    if (p.tape() != t) throw std::invalid_argument("concat: mixed tapes");
    if (p.value().rank() > 1) {
      throw ShapeError("concat: expected scalars or vectors, got " +
                       shape_string(p.value().shape()));
    }
    n += p.size();
    needs = needs || t->requires_grad(p.id());
  }
  Tensor y(Shape{n});
  std::size_t o = 0;
  for (Var p : parts) {
    const auto& v = p.value().values();
    std::copy(v.begin(), v.end(), y.values().begin() + o);
    o += v.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t->record("concat", std::move(y), needs,
                   [inputs = std::move(inputs)](Tape& tp, const Tensor& g) {
                     std::size_t o = 0;
                     for (Var p : inputs) {
                       const std::size_t len = tp.value(p.id()).size();
                       if (tp.requires_grad(p.id())) {
                         Tensor& dp = tp.grad(p.id());
                         for (std::size_t i = 0; i < len; ++i) dp[i] += g[o + i];
                       }
                       o += len;
                     }
                   });
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice(Var a, std::size_t begin, std::size_t end) {
  Tape& t = tape_of({a});
  const Tensor& x = a.value();
  require_rank("slice", x, 1);
  if (begin > end || end > x.size()) {
    throw ShapeError("slice [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") of " + shape_string(x.shape()));
  }
  Tensor y(Shape{end - begin});
  std::copy(x.values().begin() + begin, x.values().begin() + end,
            y.values().begin());
  return t.record("slice", std::move(y), any_requires_grad(t, {a}),
                  [a, begin](Tape& tp, const Tensor& g) {
                    if (!tp.requires_grad(a.id())) return;
                    Tensor& da = tp.grad(a.id());
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      da[begin + i] += g[i];
                    }
                  });
}

Var cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = tape_of({a});
  const Tensor& x = a.value();
  require_rank("cols", x, 2);
  const std::size_t rows = x.dim(0);
  const std::size_t width = x.dim(1);
  if (begin > end || end > width) {
    throw ShapeError("cols [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") of " + shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  Tensor y(Shape{rows, w});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < w; ++c) y[r * w + c] = x[r * width + begin + c];
  }
  return t.record("cols", std::move(y), any_requires_grad(t, {a}),
                  [a, begin, rows, width, w](Tape& tp, const Tensor& g) {
                    if (!tp.requires_grad(a.id())) return;
                    Tensor& da = tp.grad(a.id());
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < w; ++c) {
                        da[r * width + begin + c] += g[r * w + c];
                      }
                    }
                  });
}

Var row(Var a, std::size_t r) {
  Tape& t = tape_of({a});
  const Tensor& x = a.value();
  require_rank("row", x, 2);
  const auto src = x.row(r);
  Tensor y(Shape{src.size()}, std::vector<double>(src.begin(), src.end()));
  const std::size_t width = src.size();
  return t.record("row", std::move(y), any_requires_grad(t, {a}),
                  [a, r, width](Tape& tp, const Tensor& g) {
                    if (!tp.requires_grad(a.id())) return;
                    Tensor& da = tp.grad(a.id());
                    for (std::size_t i = 0; i < width; ++i) {
                      da[r * width + i] += g[i];
                    }
                  });
}

Var stack(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack: no inputs");
  Tape* t = rows.front().tape();
  const std::size_t width = rows.front().size();
  bool needs = false;
  for (Var r : rows) {
    if (r.tape() != t) throw std::invalid_argument("stack: mixed tapes");
    require_rank("stack", r.value(), 1);
    if (r.size() != width) throw ShapeError("stack: ragged rows");
    needs = needs || t->requires_grad(r.id());
  }
  Tensor y(Shape{rows.size(), width});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& v = rows[k].value().values();
    std::copy(v.begin(), v.end(), y.values().begin() + k * width);
  }
  std::vector<Var> inputs(rows.begin(), rows.end());
  return t->record("stack", std::move(y), needs,
                   [inputs = std::move(inputs), width](Tape& tp,
                                                       const Tensor& g) {
                     for (std::size_t k = 0; k < inputs.size(); ++k) {
                       if (!tp.requires_grad(inputs[k].id())) continue;
                       Tensor& d = tp.grad(inputs[k].id());
                       for (std::size_t i = 0; i < width; ++i) {
                         d[i] += g[k * width + i];
                       }
                     }
                   });
}

Var concat_rows(Var a, Var b) {
  Tape& t = tape_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank("concat_rows", av, 2);
  require_rank("concat_rows", bv, 2);
  if (av.dim(1) != bv.dim(1)) {
    throw ShapeError("concat_rows: " + shape_string(av.shape()) + " and " +
                     shape_string(bv.shape()));
  }
  const std::size_t split = av.size();
  std::vector<double> v = av.values();
  v.insert(v.end(), bv.values().begin(), bv.values().end());
  Tensor y(Shape{av.dim(0) + bv.dim(0), av.dim(1)}, std::move(v));
  return t.record("concat_rows", std::move(y), any_requires_grad(t, {a, b}),
                  [a, b, split](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(a.id())) {
                      Tensor& da = tp.grad(a.id());
                      for (std::size_t i = 0; i < split; ++i) da[i] += g[i];
                    }
                    if (tp.requires_grad(b.id())) {
                      Tensor& db = tp.grad(b.id());
                      for (std::size_t i = 0; i < db.size(); ++i) {
                        db[i] += g[split + i];
                      }
                    }
                  });
}

Var mean_rows(Var a) {
  Tape& t = tape_of({a});
  const Tensor& x = a.value();
  require_rank("mean_rows", x, 2);
  const std::size_t rows = x.dim(0);
  const std::size_t width = x.dim(1);
  if (rows == 0) throw ShapeError("mean_rows: no rows");
  Tensor y(Shape{width});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < width; ++i) y[i] += x[r * width + i];
  }
  const double inv = 1.0 / static_cast<double>(rows);
  for (double& v : y.values()) v *= inv;
  return t.record("mean_rows", std::move(y), any_requires_grad(t, {a}),
                  [a, rows, width, inv](Tape& tp, const Tensor& g) {
                    if (!tp.requires_grad(a.id())) return;
                    Tensor& da = tp.grad(a.id());
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t i = 0; i < width; ++i) {
                        da[r * width + i] += inv * g[i];
                      }
                    }
                  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  Tape& t = tape_of({table});
  const Tensor& x = table.value();
  require_rank("gather_rows", x, 2);
  const std::size_t n = x.dim(0);
  const std::size_t width = x.dim(1);
  if (ids.empty()) throw ShapeError("gather_rows: no ids");
  Tensor y(Shape{ids.size(), width});
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] < 0 || static_cast<std::size_t>(ids[k]) >= n) {
      throw ShapeError("gather_rows: id " + std::to_string(ids[k]) +
                       " out of range for " + shape_string(x.shape()));
    }
    const auto src = x.row(static_cast<std::size_t>(ids[k]));
    std::copy(src.begin(), src.end(), y.values().begin() + k * width);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return t.record("gather_rows", std::move(y), any_requires_grad(t, {table}),
                  [table, width, saved = std::move(saved)](Tape& tp,
                                                           const Tensor& g) {
                    if (!tp.requires_grad(table.id())) return;
                    Tensor& dt = tp.grad(table.id());
                    for (std::size_t k = 0; k < saved.size(); ++k) {
                      const std::size_t o =
                          static_cast<std::size_t>(saved[k]) * width;
                      for (std::size_t i = 0; i < width; ++i) {
                        dt[o + i] += g[k * width + i];
                      }
                    }
                  });
}

Var pick(Var a, std::size_t i) {
  Tape& t = tape_of({a});
  const Tensor& x = a.value();
  if (i >= x.size()) {
    throw ShapeError("pick: index " + std::to_string(i) + " out of range for " +
                     shape_string(x.shape()));
  }
  return t.record("pick", Tensor::scalar(x[i]), any_requires_grad(t, {a}),
                  [a, i](Tape& tp, const Tensor& g) {
                    if (!tp.requires_grad(a.id())) return;
                    tp.grad(a.id())[i] += g[0];
                  });
}

std::vector<double> finite_diff(const std::function<double()>& loss_fn,
                                std::span<double> x, double eps) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = loss_fn();
    x[i] = saved - eps;
    const double down = loss_fn();
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

double relative_error(std::span<const double> a, std::span<const double> b,
                      double floor) {
  if (a.size() != b.size()) {
    throw ShapeError("relative_error: length mismatch");
  }
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

}  // namespace subnav::num
