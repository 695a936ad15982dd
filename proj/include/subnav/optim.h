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

#ifndef SUBNAV_OPTIM_H_
#define SUBNAV_OPTIM_H_

#include <cstddef>
#include <vector>

#include "subnav/autodiff.h"

namespace subnav::num {

struct AdamConfig {
  double learning_rate = 2.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction over every parameter of a store. Moment buffers
// follow store order, so the store must not grow after construction.
class Adam {
 public:
  Adam(ParamStore& store, AdamConfig config = {});

  // Applies one update from the accumulated Parameter::grad values. Throws
  // NonFiniteError if any gradient is NaN or infinite (nothing is changed).
  void step();
  std::size_t steps() const { return t_; }

 private:
  ParamStore& store_;
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t t_ = 0;
};

}  // namespace subnav::num

#endif  // SUBNAV_OPTIM_H_
