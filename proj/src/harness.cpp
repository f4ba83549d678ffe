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

#include "gradpack/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "gradpack/rng.hpp"
#include "gradpack/sparsify.hpp"

namespace gradpack {

namespace {

// Box-Muller in pairs; same stream as CounterRng but half the transcendentals.
void fill_normal(CounterRng& rng, double* out, Index n) {
  Index i = 0;
  for (; i + 1 < n; i += 2) {
    const double u1 = 1.0 - rng.unit();
    const double u2 = rng.unit();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    out[i] = rad * std::cos(ang);
    out[i + 1] = rad * std::sin(ang);
  }
  if (i < n) out[i] = rng.normal();
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

std::uint64_t Problem::batch_seed(std::uint64_t seed, int worker, int step) noexcept {
  const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(worker)) << 32) |
                            static_cast<std::uint32_t>(step);
  return hash64(key, hash64(0xDA7A, seed));
}

Problem::Problem(const TrainConfig& config) : config_(config) {
  if (config_.dim < 1) throw Error("harness: dim must be >= 1");
  if (config_.batch < 1 || config_.workers < 1 || config_.eval_size < 1)
    throw Error("harness: batch, workers and eval_size must be >= 1");
  switch (config_.model) {
    case Model::LinearRegression:
    case Model::LogisticRegression:
      param_dim_ = config_.dim;
      break;
    case Model::Mlp:
      if (config_.mlp_hidden < 1) throw Error("harness: mlp_hidden must be >= 1");
      param_dim_ = static_cast<Index>(config_.mlp_hidden) * (config_.dim + 2) + 1;
      break;
  }

  // Ground truth: unit-norm direction with a decaying profile, so gradients
  // concentrate on few coordinates and sparsifiers have something to keep.
  CounterRng truth_rng(hash64(0x70DE, config_.seed));
  truth_.resize(config_.dim);
  for (Index j = 0; j < config_.dim; ++j)
    truth_(j) = truth_rng.normal() / std::sqrt(1.0 + static_cast<double>(j));
  truth_ *= 3.0 / truth_.norm();

  CounterRng eval_rng(hash64(0xE7A1, config_.seed));
  eval_x_.reserve(static_cast<std::size_t>(config_.eval_size));
  eval_y_.reserve(static_cast<std::size_t>(config_.eval_size));
  for (int i = 0; i < config_.eval_size; ++i) {
    Vector x;
    double y = 0.0;
    sample(eval_rng, x, y);
    eval_x_.push_back(std::move(x));
    eval_y_.push_back(y);
  }
}

void Problem::sample(CounterRng& rng, Vector& x, double& y) const {
  x.resize(config_.dim);
  fill_normal(rng, x.data(), config_.dim);
  switch (config_.model) {
    case Model::LinearRegression:
      y = truth_.dot(x) + config_.noise * rng.normal();
      break;
    case Model::LogisticRegression:
    case Model::Mlp: {
      const double label = (rng.next() & 1u) ? 1.0 : -1.0;
      x = config_.noise * x + label * truth_;  // two-Gaussian mixture
      y = label;
      break;
    }
  }
}

double Problem::example_loss(const Eigen::Ref<const Vector>& w,
                             const Eigen::Ref<const Vector>& x, double y) const {
  switch (config_.model) {
    case Model::LinearRegression: {
      const double e = w.dot(x) - y;
      return 0.5 * e * e;
    }
    case Model::LogisticRegression:
      return softplus(-y * w.dot(x));
    case Model::Mlp: {
      const Index h = config_.mlp_hidden;
      const Index in = config_.dim;
      const auto w1 = w.segment(0, h * in);
      const auto b1 = w.segment(h * in, h);
      const auto w2 = w.segment(h * in + h, h);
      const double b2 = w(h * in + 2 * h);
      double logit = b2;
      for (Index u = 0; u < h; ++u)
        logit += w2(u) * std::tanh(w1.segment(u * in, in).dot(x) + b1(u));
      return softplus(-y * logit);
    }
  }
  return 0.0;
}

void Problem::accumulate_gradient(const Eigen::Ref<const Vector>& w,
                                  const Eigen::Ref<const Vector>& x, double y,
                                  Vector& g) const {
  switch (config_.model) {
    case Model::LinearRegression: {
      g.noalias() += (w.dot(x) - y) * x;
      break;
    }
    case Model::LogisticRegression: {
      const double coef = -y * sigmoid(-y * w.dot(x));
      g.noalias() += coef * x;
      break;
    }
    case Model::Mlp: {
      const Index h = config_.mlp_hidden;
      const Index in = config_.dim;
      const auto w1 = w.segment(0, h * in);
      const auto b1 = w.segment(h * in, h);
      const auto w2 = w.segment(h * in + h, h);
      const double b2 = w(h * in + 2 * h);
      Vector act(h);
      double logit = b2;
      for (Index u = 0; u < h; ++u) {
        act(u) = std::tanh(w1.segment(u * in, in).dot(x) + b1(u));
        logit += w2(u) * act(u);
      }
      const double coef = -y * sigmoid(-y * logit);  // dLoss/dLogit
      for (Index u = 0; u < h; ++u) {
        const double back = coef * w2(u) * (1.0 - act(u) * act(u));
        g.segment(u * in, in).noalias() += back * x;
        g(h * in + u) += back;
        g(h * in + h + u) += coef * act(u);
      }
      g(h * in + 2 * h) += coef;
      break;
    }
  }
}

Vector Problem::gradient(const Eigen::Ref<const Vector>& x, int worker, int step) const {
  CounterRng rng(batch_seed(config_.seed, worker, step));
  Vector g = Vector::Zero(param_dim_);
  Vector sx;
  double sy = 0.0;
  for (int b = 0; b < config_.batch; ++b) {
    sample(rng, sx, sy);
    accumulate_gradient(x, sx, sy, g);
  }
  g /= static_cast<double>(config_.batch);
  return g;
}

double Problem::batch_loss(const Eigen::Ref<const Vector>& x, int worker, int step) const {
  CounterRng rng(batch_seed(config_.seed, worker, step));
  double total = 0.0;
  Vector sx;
  double sy = 0.0;
  for (int b = 0; b < config_.batch; ++b) {
    sample(rng, sx, sy);
    total += example_loss(x, sx, sy);
  }
  return total / static_cast<double>(config_.batch);
}

double Problem::loss(const Eigen::Ref<const Vector>& x) const {
  double total = 0.0;
  for (std::size_t i = 0; i < eval_x_.size(); ++i)
    total += example_loss(x, eval_x_[i], eval_y_[i]);
  return total / static_cast<double>(eval_x_.size());
}

std::uint64_t Simulation::pipeline_seed(std::uint64_t seed, int worker, int step) noexcept {
  return hash64(0xC0DEC, Problem::batch_seed(seed, worker, step));
}

std::uint64_t Simulation::sparsifier_seed(std::uint64_t seed, int worker, int step) noexcept {
  return hash64(0x5BA125, Problem::batch_seed(seed, worker, step));
}

Simulation::Simulation(const TrainConfig& config) : config_(config), problem_(config) {
  if (config_.steps < 1) throw Error("harness: steps must be >= 1");
  const Index d = problem_.param_dim();
  r_ = std::max<Index>(1, static_cast<Index>(std::llround(config_.top_ratio * static_cast<double>(d))));
  if (r_ > d) throw Error("harness: top_ratio yields r > d");
  params_.assign(static_cast<std::size_t>(config_.workers), Vector::Zero(d));
  residual_.assign(static_cast<std::size_t>(config_.workers), Vector::Zero(d));
  metrics_.reserve(static_cast<std::size_t>(config_.steps));
}

void Simulation::step() {
  using Clock = std::chrono::steady_clock;
  const double eta = config_.lr / (1.0 + config_.lr_decay * static_cast<double>(step_));

  StepMetrics m;
  m.step = step_;

  std::vector<Vector> decoded(static_cast<std::size_t>(config_.workers));
  for (int w = 0; w < config_.workers; ++w) {
    const std::size_t wi = static_cast<std::size_t>(w);
    const Vector g = problem_.gradient(params_[wi], w, step_);
    const Vector input = config_.compensation ? Vector(g + residual_[wi]) : g;

    PipelineConfig pcfg = config_.pipeline;
    pcfg.seed = pipeline_seed(config_.seed, w, step_);

    const auto encode_begin = Clock::now();
    SparseGradient sg;
    switch (config_.sparsifier) {
      case SparsifierKind::None:
        sg = full_support(input);
        break;
      case SparsifierKind::TopR:
        sg = top_r(input, r_);
        break;
      case SparsifierKind::RandomR: {
        CounterRng rng(sparsifier_seed(config_.seed, w, step_));
        sg = random_r(input, r_, rng);
        break;
      }
    }
    const Container container = compress_gradient(sg, pcfg, &input);
    const std::vector<std::uint8_t> wire = pack(container);
    m.t_encode_ns += static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - encode_begin)
            .count());

    const auto decode_begin = Clock::now();
    const Container received = unpack(wire);
    decoded[wi] = to_dense(decompress_gradient(received));
    m.t_decode_ns += static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - decode_begin)
            .count());

    const VolumeReport vol = volume(received);
    m.bits_index += vol.index_bits;
    m.bits_value += vol.value_bits;
    m.bits_reorder += vol.reorder_bits;
    m.bits_total += vol.total_bits;

    if (config_.compensation) {
      residual_[wi] = input - decoded[wi];
    }
  }

  // Pairwise mean in worker order: the reduction tree is fixed, so the
  // result does not depend on scheduling.
  std::vector<Vector> acc = std::move(decoded);
  while (acc.size() > 1) {
    std::vector<Vector> next;
    next.reserve((acc.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < acc.size(); i += 2) next.push_back(acc[i] + acc[i + 1]);
    if (acc.size() % 2) next.push_back(std::move(acc.back()));
    acc = std::move(next);
  }
  const Vector aggregate = acc[0] / static_cast<double>(config_.workers);

  for (auto& p : params_) p.noalias() -= eta * aggregate;
  for (std::size_t wi = 1; wi < params_.size(); ++wi)
    if (params_[wi] != params_[0]) throw Error("harness: worker parameters diverged");

  m.loss = problem_.loss(params_[0]);
  metrics_.push_back(m);
  ++step_;
}

RunReport Simulation::finish() {
  while (step_ < config_.steps) step();
  RunReport report;
  report.steps = metrics_;
  report.final_loss = metrics_.empty() ? 0.0 : metrics_.back().loss;
  for (const StepMetrics& m : metrics_) report.total_bits += m.bits_total;
  return report;
}

RunReport run(const TrainConfig& config) {
  Simulation sim(config);
  return sim.finish();
}

std::string to_csv(const RunReport& report) {
  std::string out = "step,loss,bits_index,bits_value,bits_reorder,bits_total,t_encode_ns,t_decode_ns\n";
  char line[256];
  for (const StepMetrics& m : report.steps) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%llu,%llu,%llu,%llu,%llu,%llu\n", m.step, m.loss,
                  static_cast<unsigned long long>(m.bits_index),
                  static_cast<unsigned long long>(m.bits_value),
                  static_cast<unsigned long long>(m.bits_reorder),
                  static_cast<unsigned long long>(m.bits_total),
                  static_cast<unsigned long long>(m.t_encode_ns),
                  static_cast<unsigned long long>(m.t_decode_ns));
    out += line;
  }
  return out;
}

}  // namespace gradpack
