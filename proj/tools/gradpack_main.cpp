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

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradpack/harness.hpp"
#include "gradpack/pipeline.hpp"
#include "gradpack/rng.hpp"
#include "gradpack/sparsify.hpp"
#include "gradpack/tensor_file.hpp"

namespace {

using namespace gradpack;

const std::map<std::string, IndexMethod> kIndexNames = {
    {"none", IndexMethod::None},         {"bitmap", IndexMethod::Bitmap},
    {"rle", IndexMethod::Rle},           {"huffman", IndexMethod::Huffman},
    {"bloom-p0", IndexMethod::BloomP0},  {"bloom-p1", IndexMethod::BloomP1},
    {"bloom-p2", IndexMethod::BloomP2},  {"bloom-pd", IndexMethod::BloomPd},
    {"bloom-naive", IndexMethod::BloomNaive}};

const std::map<std::string, ValueMethod> kValueNames = {
    {"none", ValueMethod::None},       {"fit-poly", ValueMethod::FitPoly},
    {"fit-dexp", ValueMethod::FitDexp}, {"quant", ValueMethod::Quant},
    {"deflate-slot", ValueMethod::DeflateSlot}, {"raw-f64", ValueMethod::RawF64}};

const std::map<std::string, IndexMethod> kPolicyNames = {
    {"p0", IndexMethod::BloomP0}, {"p1", IndexMethod::BloomP1}, {"p2", IndexMethod::BloomP2},
    {"pd", IndexMethod::BloomPd}, {"naive", IndexMethod::BloomNaive}};

const std::map<std::string, PdVariant> kPdNames = {
    {"leftmost", PdVariant::Leftmost}, {"middle", PdVariant::Middle},
    {"rightmost", PdVariant::Rightmost}};

const std::map<std::string, ByteCodec> kCodecNames = {{"store", ByteCodec::Store},
                                                      {"deflate", ByteCodec::Deflate}};

const std::map<std::string, Model> kModelNames = {{"linreg", Model::LinearRegression},
                                                  {"logreg", Model::LogisticRegression},
                                                  {"mlp", Model::Mlp}};

const std::map<std::string, SparsifierKind> kSparsifierNames = {
    {"none", SparsifierKind::None}, {"topr", SparsifierKind::TopR},
    {"randomr", SparsifierKind::RandomR}};

template <typename T>
std::vector<std::string> keys_of(const std::map<std::string, T>& m) {
  std::vector<std::string> out;
  for (const auto& [k, v] : m) out.push_back(k);
  return out;
}

template <typename T>
std::string name_of(const std::map<std::string, T>& m, T v) {
  for (const auto& [k, x] : m)
    if (x == v) return k;
  return "?";
}

/// Pipeline method selectors shared by compress and train.
struct MethodFlags {
  std::string index = "bitmap";
  std::string policy;  ///< p0..naive; overrides --index when given
  std::string value = "none";
  std::string pd = "leftmost";
  std::string codec = "deflate";
  double fpr = 0.01;
  int degree = 5;
  int segments = 0;
  int bits = 7;
  unsigned bucket = 512;
  bool unsafe_naive = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--index", index, "index compression method")
        ->check(CLI::IsMember(keys_of(kIndexNames)))
        ->capture_default_str();
    auto* pol = cmd->add_option("--policy", policy, "Bloom policy shorthand for --index")
                    ->check(CLI::IsMember(keys_of(kPolicyNames)));
    pol->excludes("--index");
    cmd->add_option("--value", value, "value compression method")
        ->check(CLI::IsMember(keys_of(kValueNames)))
        ->capture_default_str();
    cmd->add_option("--fpr", fpr, "Bloom target false-positive rate")
        ->check(CLI::Range(1e-12, 0.999))
        ->capture_default_str();
    cmd->add_option("--pd", pd, "deterministic slice variant")
        ->check(CLI::IsMember(keys_of(kPdNames)))
        ->capture_default_str();
    cmd->add_option("--degree", degree, "fit polynomial degree")
        ->check(CLI::Range(0, 12))
        ->capture_default_str();
    cmd->add_option("--segments", segments, "fit segment cap (0 = heuristic)")
        ->check(CLI::Range(0, 65535))
        ->capture_default_str();
    cmd->add_option("--bits", bits, "quantizer bits per value")
        ->check(CLI::Range(1, 16))
        ->capture_default_str();
    cmd->add_option("--bucket", bucket, "quantizer bucket size")
        ->check(CLI::Range(1u, 1u << 24))
        ->capture_default_str();
    cmd->add_option("--codec", codec, "byte-compressor slot codec")
        ->check(CLI::IsMember(keys_of(kCodecNames)))
        ->capture_default_str();
    cmd->add_flag("--unsafe-naive", unsafe_naive,
                  "allow the misaligning naive Bloom decode");
  }

  PipelineConfig resolve(std::uint64_t seed) const {
    PipelineConfig cfg;
    cfg.index_method = policy.empty() ? kIndexNames.at(index) : kPolicyNames.at(policy);
    cfg.value_method = kValueNames.at(value);
    cfg.fpr = fpr;
    cfg.pd_variant = kPdNames.at(pd);
    cfg.degree = degree;
    cfg.max_segments = segments;
    cfg.quant_bits = bits;
    cfg.quant_bucket = bucket;
    cfg.slot_codec = kCodecNames.at(codec);
    cfg.seed = seed;
    if (cfg.index_method == IndexMethod::BloomNaive && !unsafe_naive)
      throw Error("--index bloom-naive misaligns values by design; pass --unsafe-naive");
    return cfg;
  }

  std::string echo(const PipelineConfig& cfg) const {
    std::ostringstream s;
    s << "index=" << name_of(kIndexNames, cfg.index_method)
      << " value=" << name_of(kValueNames, cfg.value_method) << " fpr=" << cfg.fpr
      << " pd=" << name_of(kPdNames, cfg.pd_variant) << " degree=" << cfg.degree
      << " segments=" << cfg.max_segments << " bits=" << cfg.quant_bits
      << " bucket=" << cfg.quant_bucket << " codec=" << name_of(kCodecNames, cfg.slot_codec);
    return s.str();
  }
};

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw Error("cannot open for writing: " + out_path);
  f << text;
  if (!f) throw Error("write failed: " + out_path);
}

SparseGradient sparsify_ratio(const Vector& g, double top_ratio) {
  const Index d = g.size();
  if (top_ratio >= 1.0) return full_support(g);
  const Index r = std::max<Index>(1, static_cast<Index>(std::llround(top_ratio * double(d))));
  return top_r(g, r);
}

int cmd_compress(const std::string& in_path, const std::string& out_path,
                 const MethodFlags& mf, double top_ratio, std::uint64_t seed) {
  const PipelineConfig cfg = mf.resolve(seed);
  std::cerr << "config: subcommand=compress input=" << in_path << " output=" << out_path
            << " " << mf.echo(cfg) << " topr=" << top_ratio << " seed=" << seed << "\n";

  const Vector g = read_tensor(in_path);
  const SparseGradient sg = sparsify_ratio(g, top_ratio);
  const Container c = compress_gradient(sg, cfg, &g);
  write_file(out_path, pack(c));

  // Validate what actually landed on disk before reporting success.
  const Container back = unpack(read_file(out_path));
  (void)decompress_gradient(back);
  const VolumeReport vol = volume(back);
  std::printf("d=%llu r=%llu\n", static_cast<unsigned long long>(back.d),
              static_cast<unsigned long long>(back.r));
  std::printf(
      "volume: index_bits=%llu value_bits=%llu reorder_bits=%llu metadata_bits=%llu "
      "total_bits=%llu ratio_dense=%.6g ratio_sparse=%.6g\n",
      static_cast<unsigned long long>(vol.index_bits),
      static_cast<unsigned long long>(vol.value_bits),
      static_cast<unsigned long long>(vol.reorder_bits),
      static_cast<unsigned long long>(vol.metadata_bits),
      static_cast<unsigned long long>(vol.total_bits), vol.ratio_dense, vol.ratio_sparse);
  std::printf("wrote %s (%llu bytes)\n", out_path.c_str(),
              static_cast<unsigned long long>((vol.total_bits + 7) / 8));
  return 0;
}

int cmd_decompress(const std::string& in_path, const std::string& out_path) {
  std::cerr << "config: subcommand=decompress input=" << in_path << " output=" << out_path
            << "\n";
  const Container c = unpack(read_file(in_path));
  const Vector g = to_dense(decompress_gradient(c));
  write_tensor(out_path, g);
  (void)read_tensor(out_path);
  std::printf("wrote %s (d=%lld)\n", out_path.c_str(), static_cast<long long>(g.size()));
  return 0;
}

int cmd_sweep(Index dim, double top_ratio, int seeds, std::uint64_t seed,
              const std::string& out_path) {
  std::cerr << "config: subcommand=sweep dim=" << dim << " topr=" << top_ratio
            << " seeds=" << seeds << " seed=" << seed << " out="
            << (out_path.empty() ? "-" : out_path) << "\n";
  const double grid[] = {0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001};
  const IndexMethod policies[] = {IndexMethod::BloomP0, IndexMethod::BloomP1,
                                  IndexMethod::BloomP2};

  std::string csv = "sparsifier,policy,fpr,relative_volume,reconstruction_error\n";
  char line[256];
  for (const char* sparsifier : {"topr", "randomr"}) {
    for (const IndexMethod policy : policies) {
      for (const double eps : grid) {
        double vol_sum = 0.0, err_sum = 0.0;
        for (int s = 0; s < seeds; ++s) {
          // The data draw depends only on (sparsifier, s), so policies are
          // compared on identical inputs.
          CounterRng data_rng(hash64(static_cast<std::uint64_t>(s), hash64(0x5eed, seed)));
          Vector g(dim);
          for (Index j = 0; j < dim; ++j) g(j) = data_rng.normal();
          SparseGradient sg;
          if (std::string(sparsifier) == "topr") {
            sg = sparsify_ratio(g, top_ratio);
          } else {
            const Index r =
                std::max<Index>(1, static_cast<Index>(std::llround(top_ratio * double(dim))));
            CounterRng pick(hash64(static_cast<std::uint64_t>(s), hash64(0x9AA9, seed)));
            sg = random_r(g, r, pick);
          }
          PipelineConfig cfg;
          cfg.index_method = policy;
          cfg.fpr = eps;
          cfg.seed = hash64(static_cast<std::uint64_t>(s), hash64(0xC4A0, seed));
          const Container c = compress_gradient(sg, cfg);
          vol_sum += volume(c).ratio_dense;
          const Vector decoded = to_dense(decompress_gradient(c));
          // Compare at wire precision (values travel as f32), so the error
          // isolates what the policy dropped, not the fixed 32-bit rounding.
          SparseGradient wire = sg;
          for (Index j = 0; j < wire.values.size(); ++j)
            wire.values(j) = static_cast<double>(static_cast<float>(wire.values(j)));
          const Vector target = to_dense(wire);
          err_sum += (decoded - target).norm() / target.norm();
        }
        std::snprintf(line, sizeof(line), "%s,%s,%.17g,%.17g,%.17g\n", sparsifier,
                      name_of(kPolicyNames, policy).c_str(), eps, vol_sum / seeds,
                      err_sum / seeds);
        csv += line;
      }
    }
  }
  emit(out_path, csv);
  return 0;
}

int cmd_bench(Index dim, double top_ratio, int reps, double fpr, std::uint64_t seed,
              const std::string& out_path) {
  std::cerr << "config: subcommand=bench dim=" << dim << " topr=" << top_ratio
            << " reps=" << reps << " fpr=" << fpr << " seed=" << seed << " out="
            << (out_path.empty() ? "-" : out_path) << "\n";
  using Clock = std::chrono::steady_clock;

  CounterRng rng(hash64(0xBE7C, seed));
  Vector g(dim);
  for (Index j = 0; j < dim; ++j) g(j) = rng.normal();
  const SparseGradient uniform = sparsify_ratio(g, top_ratio);

  // Same values on a contiguous support: isolates run-length sensitivity.
  SparseGradient clustered;
  clustered.dim = dim;
  clustered.values = uniform.values;
  const auto start = static_cast<std::uint32_t>(rng.below(
      static_cast<std::uint64_t>(dim - uniform.count() + 1)));
  for (Index i = 0; i < uniform.count(); ++i)
    clustered.support.push_back(start + static_cast<std::uint32_t>(i));

  struct Row {
    const char* name;
    IndexMethod index;
    ValueMethod value;
    const SparseGradient* input;
  };
  const Row rows[] = {
      {"identity", IndexMethod::None, ValueMethod::RawF64, &uniform},
      {"bitmap", IndexMethod::Bitmap, ValueMethod::None, &uniform},
      {"rle", IndexMethod::Rle, ValueMethod::None, &uniform},
      {"rle-clustered", IndexMethod::Rle, ValueMethod::None, &clustered},
      {"huffman", IndexMethod::Huffman, ValueMethod::None, &uniform},
      {"bloom-p0", IndexMethod::BloomP0, ValueMethod::None, &uniform},
      {"bloom-p1", IndexMethod::BloomP1, ValueMethod::None, &uniform},
      {"bloom-p2", IndexMethod::BloomP2, ValueMethod::None, &uniform},
      {"bloom-pd", IndexMethod::BloomPd, ValueMethod::None, &uniform},
      {"fit-poly", IndexMethod::Bitmap, ValueMethod::FitPoly, &uniform},
      {"fit-dexp", IndexMethod::Bitmap, ValueMethod::FitDexp, &uniform},
      {"quant", IndexMethod::Bitmap, ValueMethod::Quant, &uniform},
      {"deflate-slot", IndexMethod::Bitmap, ValueMethod::DeflateSlot, &uniform},
  };

  std::string csv = "method,bits_total,t_encode_ns,t_decode_ns\n";
  char line[256];
  for (const Row& row : rows) {
    PipelineConfig cfg;
    cfg.index_method = row.index;
    cfg.value_method = row.value;
    cfg.fpr = fpr;
    cfg.seed = hash64(0xB0B, seed);
    std::vector<std::uint64_t> enc_ns, dec_ns;
    std::uint64_t bits = 0;
    const int total = reps + 2;  // two warmup repetitions are dropped
    for (int it = 0; it < total; ++it) {
      const auto t0 = Clock::now();
      const Container c = compress_gradient(*row.input, cfg, &g);
      const std::vector<std::uint8_t> wire = pack(c);
      const auto t1 = Clock::now();
      const Container back = unpack(wire);
      const SparseGradient dec = decompress_gradient(back);
      const auto t2 = Clock::now();
      if (dec.dim != dim) throw Error("bench: decode changed dimensionality");
      if (it >= 2) {
        enc_ns.push_back(static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
        dec_ns.push_back(static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::nanoseconds>(t2 - t1).count()));
      }
      bits = volume(c).total_bits;
    }
    std::sort(enc_ns.begin(), enc_ns.end());
    std::sort(dec_ns.begin(), dec_ns.end());
    std::snprintf(line, sizeof(line), "%s,%llu,%llu,%llu\n", row.name,
                  static_cast<unsigned long long>(bits),
                  static_cast<unsigned long long>(enc_ns[enc_ns.size() / 2]),
                  static_cast<unsigned long long>(dec_ns[dec_ns.size() / 2]));
    csv += line;
  }
  emit(out_path, csv);
  return 0;
}

int cmd_train(const TrainConfig& config, const MethodFlags& mf, const std::string& model,
              const std::string& sparsifier, const std::string& out_path) {
  std::cerr << "config: subcommand=train model=" << model << " dim=" << config.dim
            << " hidden=" << config.mlp_hidden << " workers=" << config.workers
            << " batch=" << config.batch << " steps=" << config.steps << " lr=" << config.lr
            << " lr_decay=" << config.lr_decay << " noise=" << config.noise
            << " sparsifier=" << sparsifier << " topr=" << config.top_ratio << " "
            << mf.echo(config.pipeline) << " compensation=" << (config.compensation ? 1 : 0)
            << " eval_size=" << config.eval_size << " seed=" << config.seed << " out="
            << (out_path.empty() ? "-" : out_path) << "\n";
  const RunReport report = run(config);
  emit(out_path, to_csv(report));
  std::cerr << "final_loss=" << report.final_loss << " total_bits=" << report.total_bits
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradpack: decoupled index/value compression for sparse gradients"};
  app.require_subcommand(1);

  std::string in_path, out_path, csv_path;
  std::uint64_t seed = 1;
  double top_ratio = 0.01;
  Index dim = 16384;
  int seeds = 5, reps = 9;

  MethodFlags comp_mf;
  auto* comp = app.add_subcommand("compress", "tensor file (.drt) -> container (.drc)");
  comp->add_option("input", in_path, "input tensor file")->required();
  comp->add_option("output", out_path, "output container file")->required();
  comp_mf.add_to(comp);
  double comp_topr = 1.0;
  comp->add_option("--topr", comp_topr, "keep ratio before encoding (1 = everything)")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  comp->add_option("--seed", seed, "master seed")->capture_default_str();

  auto* decomp = app.add_subcommand("decompress", "container (.drc) -> tensor file (.drt)");
  decomp->add_option("input", in_path, "input container file")->required();
  decomp->add_option("output", out_path, "output tensor file")->required();

  auto* sweep = app.add_subcommand("sweep", "FPR grid sweep CSV per Bloom policy");
  sweep->add_option("--dim", dim, "tensor dimension")->check(CLI::Range(Index(8), Index(1) << 24))
      ->capture_default_str();
  sweep->add_option("--topr", top_ratio, "sparsifier keep ratio")
      ->check(CLI::Range(1e-6, 1.0))->capture_default_str();
  sweep->add_option("--seeds", seeds, "seeds averaged per grid point")
      ->check(CLI::Range(1, 1000))->capture_default_str();
  sweep->add_option("--seed", seed, "master seed")->capture_default_str();
  sweep->add_option("--out", csv_path, "CSV path (default stdout)");

  double bench_fpr = 0.01;
  auto* bench = app.add_subcommand("bench", "encode/decode wall time and bits per method");
  bench->add_option("--dim", dim, "tensor dimension")->check(CLI::Range(Index(8), Index(1) << 24))
      ->capture_default_str();
  bench->add_option("--topr", top_ratio, "sparsifier keep ratio")
      ->check(CLI::Range(1e-6, 1.0))->capture_default_str();
  bench->add_option("--reps", reps, "timed repetitions (median reported)")
      ->check(CLI::Range(1, 1000))->capture_default_str();
  bench->add_option("--fpr", bench_fpr, "Bloom target false-positive rate")
      ->check(CLI::Range(1e-12, 0.999))->capture_default_str();
  bench->add_option("--seed", seed, "master seed")->capture_default_str();
  bench->add_option("--out", csv_path, "CSV path (default stdout)");

  MethodFlags train_mf;
  std::string model = "linreg", sparsifier = "topr";
  TrainConfig tc;
  auto* train = app.add_subcommand("train", "n-worker SGD simulation CSV");
  train->add_option("--model", model, "task")->check(CLI::IsMember(keys_of(kModelNames)))
      ->capture_default_str();
  train->add_option("--dim", tc.dim, "feature dimension")
      ->check(CLI::Range(Index(2), Index(1) << 24))->capture_default_str();
  train->add_option("--hidden", tc.mlp_hidden, "MLP hidden units")
      ->check(CLI::Range(1, 4096))->capture_default_str();
  train->add_option("--workers", tc.workers, "worker count")->check(CLI::Range(1, 256))
      ->capture_default_str();
  train->add_option("--batch", tc.batch, "per-worker batch size")->check(CLI::Range(1, 4096))
      ->capture_default_str();
  train->add_option("--steps", tc.steps, "optimization steps")->check(CLI::Range(1, 1000000))
      ->capture_default_str();
  train->add_option("--lr", tc.lr, "learning rate")->capture_default_str();
  train->add_option("--lr-decay", tc.lr_decay, "eta_t = lr / (1 + decay t)")
      ->capture_default_str();
  train->add_option("--noise", tc.noise, "data noise scale")->capture_default_str();
  train->add_option("--sparsifier", sparsifier, "gradient sparsifier")
      ->check(CLI::IsMember(keys_of(kSparsifierNames)))->capture_default_str();
  train->add_option("--topr", tc.top_ratio, "sparsifier keep ratio")
      ->check(CLI::Range(1e-6, 1.0))->capture_default_str();
  train_mf.add_to(train);
  bool no_comp = false;
  train->add_flag("--no-compensation", no_comp, "disable error feedback");
  train->add_option("--eval-size", tc.eval_size, "evaluation set size")
      ->check(CLI::Range(1, 65536))->capture_default_str();
  train->add_option("--seed", tc.seed, "master seed")->capture_default_str();
  train->add_option("--out", csv_path, "CSV path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (comp->parsed()) return cmd_compress(in_path, out_path, comp_mf, comp_topr, seed);
    if (decomp->parsed()) return cmd_decompress(in_path, out_path);
    if (sweep->parsed()) return cmd_sweep(dim, top_ratio, seeds, seed, csv_path);
    if (bench->parsed()) return cmd_bench(dim, top_ratio, reps, bench_fpr, seed, csv_path);
    if (train->parsed()) {
      tc.model = kModelNames.at(model);
      tc.sparsifier = kSparsifierNames.at(sparsifier);
      tc.compensation = !no_comp;
      tc.pipeline = train_mf.resolve(0);  // per-step seeds come from the harness
      return cmd_train(tc, train_mf, model, sparsifier, csv_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
