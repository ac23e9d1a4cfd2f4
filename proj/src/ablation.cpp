#include "dpl/ablation.hpp"

#include <cmath>
#include <cstdio>

#include "dpl/aspectex.hpp"

namespace dpl {

using ojson = nlohmann::ordered_json;

Variant variant_from_name(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no_adv") return Variant::no_adv;
  if (s == "no_coarse_pseudo") return Variant::no_coarse_pseudo;
  if (s == "no_fine_pseudo") return Variant::no_fine_pseudo;
  if (s == "traditional_pl") return Variant::traditional_pl;
  throw DplError("unknown ablation variant: '" + s + "'");
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_adv: return "no_adv";
    case Variant::no_coarse_pseudo: return "no_coarse_pseudo";
    case Variant::no_fine_pseudo: return "no_fine_pseudo";
    case Variant::traditional_pl: return "traditional_pl";
  }
  throw DplError("bad variant value");
}

BenchmarkData prepare_benchmark(const BenchmarkSpec& spec, uint64_t seed) {
  BenchmarkData data;
  data.lexicon = build_lexicon(seed, spec.profile);

  GenConfig gen;
  gen.label_noise = spec.label_noise;

  gen.n_sentences = spec.n_fine_train;
  gen.aspects_min = spec.fine_aspects_min;
  gen.aspects_max = spec.fine_aspects_max;
  gen.seed = derive_seed(seed, "fine-train");
  gen.id_prefix = "f";
  data.fine_train = generate_fine(gen, data.lexicon);
  data.fine_train.split = Split::train;

  gen.n_sentences = spec.n_fine_test;
  gen.label_noise = spec.test_label_noise;
  gen.seed = derive_seed(seed, "fine-test");
  gen.id_prefix = "ft";
  data.fine_test = generate_fine(gen, data.lexicon);
  data.fine_test.split = Split::test;

  gen.n_sentences = spec.n_coarse_train;
  gen.label_noise = spec.label_noise;
  gen.aspects_min = spec.coarse_aspects_min;
  gen.aspects_max = spec.coarse_aspects_max;
  gen.seed = derive_seed(seed, "coarse-train");
  gen.id_prefix = "c";
  data.coarse_train = generate_coarse(gen, data.lexicon);
  data.coarse_train.split = Split::train;

  gen.n_sentences = spec.n_coarse_test;
  gen.label_noise = spec.test_label_noise;
  gen.seed = derive_seed(seed, "coarse-test");
  gen.id_prefix = "ct";
  data.coarse_test = generate_coarse(gen, data.lexicon);
  data.coarse_test.split = Split::test;

  RunConfig tcfg = spec.teacher;
  tcfg.seed = derive_seed(seed, "teacher-fine");
  TeacherTrainResult fine_teacher = train_fine_teacher(data.fine_train, &data.fine_test, tcfg);
  data.fine_teacher_acc = fine_teacher.heldout_accuracy.value_or(0.0);

  tcfg.seed = derive_seed(seed, "teacher-coarse");
  TeacherTrainResult coarse_teacher =
      train_coarse_teacher(data.coarse_train, &data.coarse_test, tcfg);
  data.coarse_teacher_acc = coarse_teacher.heldout_accuracy.value_or(0.0);

  SpannedCoarseDataset spans = filter_coarse_dataset(data.coarse_train, data.lexicon);
  data.dprime_coarse = pseudo_label_coarse_side(fine_teacher.model, spans);
  data.dprime_fine = pseudo_label_fine_side(coarse_teacher.model, data.fine_train);
  return data;
}

namespace {

StudentModel init_student(const BenchmarkSpec& spec, const BenchmarkData& data, uint64_t seed) {
  std::vector<std::vector<std::string>> texts;
  for (const auto& r : data.dprime_fine.rows) texts.push_back(r.sentence.tokens);
  for (const auto& r : data.dprime_coarse.rows) texts.push_back(r.sentence.tokens);
  Vocab vocab = Vocab::build(texts);
  return StudentModel::init(std::move(vocab), data.dprime_fine.fine_space,
                            data.dprime_fine.coarse_space, spec.student.embed_dim,
                            spec.student.hidden_dim, spec.student.predictor_hidden,
                            derive_seed(seed, "student-init"));
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

VariantRun run_variant(Variant variant, const BenchmarkSpec& spec, const BenchmarkData& data,
                       uint64_t seed) {
  RunConfig cfg = spec.student;
  cfg.seed = derive_seed(seed, "student-train");
  DplVariantOptions opts;
  switch (variant) {
    case Variant::full:
      break;
    case Variant::no_adv:
      cfg.hp.beta = 0.0;
      break;
    case Variant::no_coarse_pseudo:
      opts.coarse_term_on_fine_rows = false;
      break;
    case Variant::no_fine_pseudo:
      opts.fine_terms_on_coarse_rows = false;
      break;
    case Variant::traditional_pl:
      break;
  }

  StudentModel init = init_student(spec, data, seed);
  TrainOutcome outcome;
  if (variant == Variant::traditional_pl) {
    FineDataset pseudo = strip_to_pseudo_fine(data.dprime_coarse);
    outcome = train_traditional_pl(std::move(init), data.fine_train, pseudo, &data.fine_test, cfg);
  } else {
    outcome = train_dpl(std::move(init), data.dprime_fine, data.dprime_coarse, &data.fine_test,
                        cfg, opts);
  }

  VariantRun run;
  FineEval ev = evaluate_fine(outcome.model, data.fine_test);
  run.acc = ev.acc;
  run.f1 = ev.f1;
  Representations reps = collect_representations(outcome.model, data.fine_test);
  run.chamfer_hz = chamfer_distance(reps.h, reps.z);
  run.probes = probe_conditions(outcome.model, data.fine_train, data.fine_test);
  return run;
}

const VariantStats* AblationResult::find(Variant v) const {
  for (const auto& s : variants)
    if (s.variant == v) return &s;
  return nullptr;
}

AblationResult run_ablation(const BenchmarkSpec& spec, const std::vector<Variant>& variants,
                            const std::vector<uint64_t>& seeds) {
  if (seeds.empty()) throw DplError("run_ablation: at least one seed required");
  if (variants.empty()) throw DplError("run_ablation: no variants requested");

  AblationResult result;
  result.seeds = seeds;
  for (Variant v : variants) {
    VariantStats stats;
    stats.variant = v;
    result.variants.push_back(std::move(stats));
  }

  try {
    for (uint64_t seed : seeds) {
      BenchmarkData data = prepare_benchmark(spec, seed);
      result.fine_teacher_acc.push_back(data.fine_teacher_acc);
      result.coarse_teacher_acc.push_back(data.coarse_teacher_acc);
      for (auto& stats : result.variants)
        stats.runs.push_back(run_variant(stats.variant, spec, data, seed));
    }
  } catch (const std::exception& e) {
    result.error = e.what();
  }

  for (auto& stats : result.variants) {
    std::vector<double> acc, f1, cd;
    for (const auto& r : stats.runs) {
      acc.push_back(r.acc);
      f1.push_back(r.f1);
      cd.push_back(r.chamfer_hz);
    }
    stats.acc_mean = mean_of(acc);
    stats.acc_sd = sd_of(acc);
    stats.f1_mean = mean_of(f1);
    stats.f1_sd = sd_of(f1);
    stats.chamfer_mean = mean_of(cd);
  }
  return result;
}

std::string ablation_table(const AblationResult& result) {
  const VariantStats* full = result.find(Variant::full);
  char line[256];
  std::string out;
  out += "variant            |   acc (mean+-sd)   |    f1 (mean+-sd)   |  d-acc |  d-f1\n";
  out += "-------------------+--------------------+--------------------+--------+-------\n";
  for (const auto& s : result.variants) {
    if (full && full != &s) {
      std::snprintf(line, sizeof(line), "%-18s | %8.4f +- %6.4f | %8.4f +- %6.4f | %+6.2f | %+6.2f\n",
                    variant_name(s.variant), s.acc_mean, s.acc_sd, s.f1_mean, s.f1_sd,
                    100.0 * (s.acc_mean - full->acc_mean), 100.0 * (s.f1_mean - full->f1_mean));
    } else {
      std::snprintf(line, sizeof(line), "%-18s | %8.4f +- %6.4f | %8.4f +- %6.4f |      - |     -\n",
                    variant_name(s.variant), s.acc_mean, s.acc_sd, s.f1_mean, s.f1_sd);
    }
    out += line;
  }
  if (result.error) out += "error: " + *result.error + "\n";
  return out;
}

ojson ablation_json(const AblationResult& result) {
  ojson j;
  ojson seeds = ojson::array();
  for (uint64_t s : result.seeds) seeds.push_back(s);
  j["seeds"] = std::move(seeds);
  j["fine_teacher_acc"] = result.fine_teacher_acc;
  j["coarse_teacher_acc"] = result.coarse_teacher_acc;

  const VariantStats* full = result.find(Variant::full);
  ojson variants = ojson::array();
  for (const auto& s : result.variants) {
    ojson v;
    v["variant"] = variant_name(s.variant);
    v["acc_mean"] = s.acc_mean;
    v["acc_sd"] = s.acc_sd;
    v["f1_mean"] = s.f1_mean;
    v["f1_sd"] = s.f1_sd;
    v["chamfer_mean"] = s.chamfer_mean;
    if (full && full != &s) {
      v["delta_acc_vs_full"] = s.acc_mean - full->acc_mean;
      v["delta_f1_vs_full"] = s.f1_mean - full->f1_mean;
    }
    ojson runs = ojson::array();
    for (const auto& r : s.runs) {
      ojson run;
      run["acc"] = r.acc;
      run["f1"] = r.f1;
      run["chamfer_hz"] = r.chamfer_hz;
      run["probe_z_fine_acc"] = r.probes.z_fine_acc;
      run["probe_h_fine_acc"] = r.probes.h_fine_acc;
      run["probe_hz_coarse_acc"] = r.probes.hz_coarse_acc;
      run["probe_h_coarse_acc"] = r.probes.h_coarse_acc;
      run["probe_z_coarse_acc"] = r.probes.z_coarse_acc;
      runs.push_back(std::move(run));
    }
    v["runs"] = std::move(runs);
    variants.push_back(std::move(v));
  }
  j["variants"] = std::move(variants);
  if (result.error) j["error"] = *result.error;
  return j;
}

}  // namespace dpl
