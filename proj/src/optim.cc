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

#include "subnav/optim.h"

#include <cmath>

namespace subnav::num {

Adam::Adam(ParamStore& store, AdamConfig config)
    : store_(store), config_(config) {
  if (!(config_.learning_rate > 0.0)) {
    throw std::invalid_argument("learning rate must be > 0");
  }
  m_.reserve(store.size());
  v_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    m_.emplace_back(store[i].value.shape());
    v_.emplace_back(store[i].value.shape());
  }
}

void Adam::step() {
  if (m_.size() != store_.size()) {
    throw std::logic_error("parameter store changed size after Adam was built");
  }
  for (std::size_t i = 0; i < store_.size(); ++i) {
    Parameter& p = store_[i];
    if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
    p.grad.require_finite(p.name.c_str());
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  for (std::size_t i = 0; i < store_.size(); ++i) {
    Parameter& p = store_[i];
    double* w = p.value.data().data();
    const double* g = p.grad.data().data();
    double* m = m_[i].data().data();
    double* v = v_[i].data().data();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      w[k] -= config_.learning_rate * (m[k] / c1) /
              (std::sqrt(v[k] / c2) + config_.epsilon);
    }
  }
}

}  // namespace subnav::num
