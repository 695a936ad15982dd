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

// Reverse-mode differentiation over a recorded tape.
//
// A Tape owns every intermediate value of one forward computation. Ops take
// Var handles, compute their output eagerly, check it is finite, and record
// a closure that pushes the output gradient back to their inputs. Parameter
// leaves do not copy their value; their gradient accumulates straight into
// Parameter::grad, so several tapes (a mini-batch) can add into the same
// parameters before an optimizer step.
//
// A tape is confined to one thread. Parameters may be shared read-only by
// tapes on different threads as long as nobody calls backward().

#ifndef SUBNAV_AUTODIFF_H_
#define SUBNAV_AUTODIFF_H_

#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "subnav/tensor.h"

namespace subnav::num {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  // Fan-in used by ParamStore::init_uniform.
  std::size_t fan_in = 1;

  void zero_grad() { grad.fill(0.0); }
};

// Named parameters in insertion order. Addresses stay valid for the store's
// lifetime, including across moves.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  // Throws std::invalid_argument on a duplicate name.
  Parameter& add(std::string name, Shape shape, std::size_t fan_in);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t element_count() const;

  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  // Every entry ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), in insertion order.
  void init_uniform(Rng& rng);
  void fill(double v);
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  // Gradient after Tape::backward (zeros if nothing flowed here).
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  // With track_gradients == false no closures are stored and backward()
  // throws; forward values are identical.
  explicit Tape(bool track_gradients = true)
      : track_gradients_(track_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(Parameter& p);

  // Records an op output. `value` must be finite (NonFiniteError naming
  // `op` otherwise). `backward` runs only if `requires_grad`.
  Var record(const char* op, Tensor value, bool requires_grad,
             Backward backward);

  const Tensor& value(int id) const;
  // Gradient slot of `id`, allocated as zeros on first use.
  Tensor& grad(int id);
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool tracking() const { return track_gradients_; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and runs the recorded closures in reverse.
  // Throws ShapeError unless `loss` is a single-element value of this tape.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Parameter* param = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  bool track_gradients_;
  std::deque<Node> nodes_;
};

// Same-tape check shared by every op; throws std::invalid_argument.
Tape& tape_of(std::initializer_list<Var> vars);

// Elementwise, identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var shift(Var a, double c);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);

// Reductions to a scalar.
Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);

// Max-subtracted softmax over a vector, or over each row of a matrix.
Var softmax(Var a);
// log(softmax(a)) for a vector, computed without forming the softmax.
Var log_softmax(Var a);

// x [in] or [m, in], w [in, out], b [out] (optional) -> [out] or [m, out].
Var linear(Var x, Var w, Var b = Var());
// m [r, k] * v [k] -> [r]
Var matvec(Var m, Var v);
// v [r] * m [r, k] -> [k]
Var vecmat(Var v, Var m);

// Scalars and vectors joined into one vector.
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
// Elements [begin, end) of a vector.
Var slice(Var a, std::size_t begin, std::size_t end);
// Columns [begin, end) of a matrix.
Var cols(Var a, std::size_t begin, std::size_t end);
Var row(Var a, std::size_t r);
// Equal-length vectors -> matrix, one row each.
Var stack(std::span<const Var> rows);
// [m1, k] and [m2, k] -> [m1 + m2, k]
Var concat_rows(Var a, Var b);
// Mean of the rows of a matrix -> vector.
Var mean_rows(Var a);
// Rows `ids` of table [n, k] -> [ids.size(), k].
Var gather_rows(Var table, std::span<const int> ids);
// Element i as a scalar.
Var pick(Var a, std::size_t i);

// Central differences (f(x + eps) - f(x - eps)) / (2 eps), one coordinate
// of `x` at a time. `loss_fn` must read `x` and nothing else that changes.
std::vector<double> finite_diff(const std::function<double()>& loss_fn,
                                std::span<double> x, double eps = 1e-5);

// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-12);
// ||a - b|| / max(||a||, ||b||, floor) over whole vectors.
double relative_error(std::span<const double> a, std::span<const double> b,
                      double floor = 1e-12);

}  // namespace subnav::num

#endif  // SUBNAV_AUTODIFF_H_
