#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dpl/evalkit.hpp"
#include "dpl/synthgen.hpp"
#include "dpl/teachers.hpp"
#include "dpl/trainer.hpp"
#include "json.hpp"

namespace dpl {

enum class Variant { full, no_adv, no_coarse_pseudo, no_fine_pseudo, traditional_pl };

Variant variant_from_name(const std::string& s);
const char* variant_name(Variant v);

/// Everything needed to reproduce one synthetic benchmark run: corpus shape
/// plus teacher and student training settings. Seeds come in per run.
struct BenchmarkSpec {
  SizeProfile profile = SizeProfile::medium;
  size_t n_fine_train = 200;
  size_t n_fine_test = 400;
  size_t n_coarse_train = 2000;
  size_t n_coarse_test = 300;
  double label_noise = 0.1;
  double test_label_noise = 0.0;
  int fine_aspects_min = 1;
  int fine_aspects_max = 1;
  int coarse_aspects_min = 1;
  int coarse_aspects_max = 3;
  RunConfig teacher;
  RunConfig student;
};

/// All artifacts of one benchmark seed, shared across the variants so the
/// ablation isolates the student-training differences.
struct BenchmarkData {
  Lexicon lexicon;
  FineDataset fine_train;
  FineDataset fine_test;
  CoarseDataset coarse_train;
  CoarseDataset coarse_test;
  MergedDataset dprime_fine;
  MergedDataset dprime_coarse;
  double fine_teacher_acc = 0.0;
  double coarse_teacher_acc = 0.0;
};

BenchmarkData prepare_benchmark(const BenchmarkSpec& spec, uint64_t seed);

struct VariantRun {
  double acc = 0.0;
  double f1 = 0.0;
  double chamfer_hz = 0.0;  // CD between the h-set and z-set on the fine test split
  ProbeReport probes;
};

VariantRun run_variant(Variant variant, const BenchmarkSpec& spec, const BenchmarkData& data,
                       uint64_t seed);

struct VariantStats {
  Variant variant = Variant::full;
  std::vector<VariantRun> runs;  // one per seed

  double acc_mean = 0.0, acc_sd = 0.0;
  double f1_mean = 0.0, f1_sd = 0.0;
  double chamfer_mean = 0.0;
};

struct AblationResult {
  std::vector<uint64_t> seeds;
  std::vector<VariantStats> variants;
  std::vector<double> fine_teacher_acc;    // per seed
  std::vector<double> coarse_teacher_acc;  // per seed
  std::optional<std::string> error;        // set when a variant run aborted

  const VariantStats* find(Variant v) const;
};

/// Trains every (variant, seed) pair on shared per-seed benchmark data.
/// On failure the error is recorded and the partial results are returned.
AblationResult run_ablation(const BenchmarkSpec& spec, const std::vector<Variant>& variants,
                            const std::vector<uint64_t>& seeds);

std::string ablation_table(const AblationResult& result);
nlohmann::ordered_json ablation_json(const AblationResult& result);

}  // namespace dpl
