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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gradpack/gradient.hpp"
#include "gradpack/pipeline.hpp"

namespace gradpack {

enum class Model : std::uint8_t { LinearRegression = 0, LogisticRegression = 1, Mlp = 2 };
enum class SparsifierKind : std::uint8_t { None = 0, TopR = 1, RandomR = 2 };

/// Fully determines a simulated run: two runs with an equal config produce
/// bit-identical containers and metric columns (wall times excluded).
struct TrainConfig {
  Model model = Model::LinearRegression;
  Index dim = 1000;        ///< feature dimension (MLP parameter count derives from it)
  int mlp_hidden = 16;     ///< hidden units (MLP only)
  int workers = 4;
  int batch = 8;           ///< per-worker batch size
  int steps = 100;
  double lr = 0.05;
  double lr_decay = 0.0;   ///< eta_t = lr / (1 + lr_decay * t)
  double noise = 0.1;      ///< observation noise (regression) / class overlap scale
  SparsifierKind sparsifier = SparsifierKind::None;
  double top_ratio = 0.01; ///< r = max(1, round(top_ratio * d))
  PipelineConfig pipeline; ///< index/value methods; its seed field is ignored
  bool compensation = true;
  int eval_size = 256;
  std::uint64_t seed = 1;
};

/// Synthetic task with counter-based data: the batch of any (worker, step)
/// pair is a pure function of (seed, worker, step), so a reference
/// implementation can replay any run exactly.
class Problem {
 public:
  explicit Problem(const TrainConfig& config);

  Index param_dim() const noexcept { return param_dim_; }

  /// Mini-batch stochastic gradient at x for this worker/step.
  Vector gradient(const Eigen::Ref<const Vector>& x, int worker, int step) const;

  /// Mean loss over the same mini-batch gradient() differentiates.
  double batch_loss(const Eigen::Ref<const Vector>& x, int worker, int step) const;

  /// Loss on the fixed evaluation set.
  double loss(const Eigen::Ref<const Vector>& x) const;

  static std::uint64_t batch_seed(std::uint64_t seed, int worker, int step) noexcept;

 private:
  void sample(CounterRng& rng, Vector& x, double& y) const;
  double example_loss(const Eigen::Ref<const Vector>& w, const Eigen::Ref<const Vector>& x,
                      double y) const;
  void accumulate_gradient(const Eigen::Ref<const Vector>& w,
                           const Eigen::Ref<const Vector>& x, double y, Vector& g) const;

  TrainConfig config_;
  Index param_dim_ = 0;
  Vector truth_;                ///< regression weights / class mean direction
  std::vector<Vector> eval_x_;
  std::vector<double> eval_y_;
};

struct StepMetrics {
  int step = 0;
  double loss = 0.0;
  std::uint64_t bits_index = 0;
  std::uint64_t bits_value = 0;
  std::uint64_t bits_reorder = 0;
  std::uint64_t bits_total = 0;
  std::uint64_t t_encode_ns = 0;
  std::uint64_t t_decode_ns = 0;
};

struct RunReport {
  std::vector<StepMetrics> steps;
  double final_loss = 0.0;
  std::uint64_t total_bits = 0;
};

/// CSV with header: step,loss,bits_index,bits_value,bits_reorder,bits_total,
/// t_encode_ns,t_decode_ns. All but the wall-time columns are deterministic.
std::string to_csv(const RunReport& report);

/// n-worker synchronous data-parallel SGD with optional error feedback.
/// Each step, every worker compresses its (residual-compensated) gradient
/// through the configured pipeline, the packed container is unpacked and
/// decoded, the reconstructed gradients are averaged pairwise in worker
/// order, and all workers apply the identical update. The per-worker
/// residual is e <- (g + e) - decoded.
class Simulation {
 public:
  explicit Simulation(const TrainConfig& config);

  void step();
  RunReport finish();  ///< run all remaining steps and assemble the report

  int steps_done() const noexcept { return step_; }
  const Problem& problem() const noexcept { return problem_; }
  const Vector& params(int worker = 0) const { return params_[static_cast<std::size_t>(worker)]; }
  const Vector& residual(int worker) const { return residual_[static_cast<std::size_t>(worker)]; }

  /// Seed of the pipeline invocation for one (worker, step).
  static std::uint64_t pipeline_seed(std::uint64_t seed, int worker, int step) noexcept;
  /// Seed of the Random-r sparsifier draw for one (worker, step).
  static std::uint64_t sparsifier_seed(std::uint64_t seed, int worker, int step) noexcept;

 private:
  TrainConfig config_;
  Problem problem_;
  Index r_ = 0;
  std::vector<Vector> params_;    ///< per worker; all-equal invariant checked each step
  std::vector<Vector> residual_;
  std::vector<StepMetrics> metrics_;
  int step_ = 0;
};

RunReport run(const TrainConfig& config);

}  // namespace gradpack
