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

// Analytic-versus-finite-difference checks for the peak attention loss and
// for the whole model at small dimensions.

#ifndef SUBNAV_GRADCHECK_H_
#define SUBNAV_GRADCHECK_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "subnav/harness.h"

namespace subnav::gradcheck {

struct PalCheck {
  std::size_t cases = 0;
  double worst = 0.0;
};

// `cases` random episodes of 1..4 rows, N in [1, 10]; case i uses curve kind
// i mod 5 and sigma from {0.5, 0.6, 0.8, 1.0}. The finite-difference side
// holds beta (and so k*) fixed. Throws std::invalid_argument if cases is 0.
PalCheck check_pal(std::uint64_t seed, std::size_t cases);

// hidden 8, 2 heads, feature 4, action embedding 3, 2 grid cells, dropout
// off, vocabulary of the synthetic template bank.
model::ModelConfig small_config();

// A teacher-forced episode with T = 3 steps, N = 2 sub-instructions and an
// L = 5 word instruction.
harness::SyntheticEpisode small_episode(std::uint64_t seed,
                                        const model::ModelConfig& config);

struct TensorCheck {
  std::string name;
  std::size_t size = 0;
  double error = 0.0;
};

struct ModelCheck {
  std::vector<TensorCheck> tensors;
  double worst = 0.0;
  double loss = 0.0;
};

// Gradient of the total loss (lambda, theta = 1) with respect to every
// parameter tensor of a model initialized from `seed`, against central
// differences. Errors are norm-relative with a 1e-4 floor.
ModelCheck check_model(std::uint64_t seed, double lambda = 0.4);

}  // namespace subnav::gradcheck

#endif  // SUBNAV_GRADCHECK_H_
