#include "dpl/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "dpl/aspectex.hpp"
#include "dpl/evalkit.hpp"
#include "dpl/teachers.hpp"

namespace dpl {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Config parsing and validation
// ---------------------------------------------------------------------------

namespace {

size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= b.size(); ++j) {
      size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string nearest_key(const std::string& key, const std::vector<std::string>& known) {
  std::string best;
  size_t best_d = key.size() + 8;
  for (const auto& k : known) {
    size_t d = edit_distance(key, k);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best_d <= std::max<size_t>(3, key.size() / 2) ? best : "";
}

class SectionReader {
 public:
  SectionReader(const ojson* section, std::string prefix, std::vector<std::string>& errors)
      : section_(section), prefix_(std::move(prefix)), errors_(errors) {}

  template <typename T, typename Setter>
  void field(const char* key, Setter set) {
    known_.push_back(key);
    if (!section_ || !section_->contains(key)) return;
    try {
      set((*section_)[key].get<T>());
    } catch (const std::exception&) {
      errors_.push_back(prefix_ + key + ": wrong type");
    }
  }

  void finish() {
    if (!section_) return;
    if (!section_->is_object()) {
      errors_.push_back(prefix_ + ": expected an object");
      return;
    }
    for (auto it = section_->begin(); it != section_->end(); ++it) {
      if (std::find(known_.begin(), known_.end(), it.key()) != known_.end()) continue;
      std::string msg = prefix_ + it.key() + ": unknown key";
      std::string hint = nearest_key(it.key(), known_);
      if (!hint.empty()) msg += " (did you mean '" + hint + "'?)";
      errors_.push_back(std::move(msg));
    }
  }

 private:
  const ojson* section_;
  std::string prefix_;
  std::vector<std::string>& errors_;
  std::vector<std::string> known_;
};

void read_run_config(const ojson* section, const std::string& prefix, RunConfig& cfg,
                     std::vector<std::string>& errors) {
  SectionReader r(section, prefix, errors);
  r.field<int>("epochs", [&](int v) { cfg.epochs = v; });
  r.field<int>("batch_size", [&](int v) { cfg.batch_size = v; });
  r.field<double>("learning_rate", [&](double v) { cfg.learning_rate = v; });
  r.field<int>("k", [&](int v) { cfg.k = v; });
  r.field<double>("alpha", [&](double v) { cfg.hp.alpha = v; });
  r.field<double>("beta", [&](double v) { cfg.hp.beta = v; });
  r.field<double>("lambda", [&](double v) { cfg.hp.lambda = v; });
  r.field<std::string>("adversarial_mode", [&](const std::string& v) {
    try {
      cfg.hp.adversarial_mode = adv_mode_from_name(v);
    } catch (const DplError& e) {
      errors.push_back(prefix + "adversarial_mode: " + e.what());
    }
  });
  r.field<std::string>("schedule", [&](const std::string& v) {
    try {
      cfg.schedule = schedule_from_name(v);
    } catch (const DplError& e) {
      errors.push_back(prefix + "schedule: " + e.what());
    }
  });
  r.field<std::string>("optimizer", [&](const std::string& v) {
    try {
      cfg.optimizer = optimizer_from_name(v);
    } catch (const DplError& e) {
      errors.push_back(prefix + "optimizer: " + e.what());
    }
  });
  r.field<double>("momentum", [&](double v) { cfg.momentum = v; });
  r.field<double>("pl_weight", [&](double v) { cfg.pl_weight = v; });
  r.field<int>("eval_every", [&](int v) { cfg.eval_every = v; });
  r.field<int>("embed_dim", [&](int v) { cfg.embed_dim = v; });
  r.field<int>("hidden_dim", [&](int v) { cfg.hidden_dim = v; });
  r.field<int>("predictor_hidden", [&](int v) { cfg.predictor_hidden = v; });
  r.finish();
}

void check_run_config(const RunConfig& cfg, const std::string& prefix,
                      std::vector<std::string>& errors) {
  if (cfg.epochs < 1) errors.push_back(prefix + "epochs: must be >= 1");
  if (cfg.batch_size < 1) errors.push_back(prefix + "batch_size: must be >= 1");
  if (cfg.learning_rate <= 0) errors.push_back(prefix + "learning_rate: must be positive");
  if (cfg.k < 0) errors.push_back(prefix + "k: must be >= 0");
  if (cfg.hp.alpha < 0) errors.push_back(prefix + "alpha: must be >= 0");
  if (cfg.hp.beta < 0) errors.push_back(prefix + "beta: must be >= 0");
  if (cfg.hp.lambda < 0) errors.push_back(prefix + "lambda: must be >= 0");
  if (cfg.pl_weight < 0) errors.push_back(prefix + "pl_weight: must be >= 0");
  if (cfg.eval_every < 1) errors.push_back(prefix + "eval_every: must be >= 1");
  if (cfg.momentum < 0 || cfg.momentum >= 1)
    errors.push_back(prefix + "momentum: must be in [0, 1)");
  if (cfg.embed_dim < 1) errors.push_back(prefix + "embed_dim: must be >= 1");
  if (cfg.hidden_dim < 1) errors.push_back(prefix + "hidden_dim: must be >= 1");
  if (cfg.predictor_hidden < 1) errors.push_back(prefix + "predictor_hidden: must be >= 1");
}

ojson run_config_json(const RunConfig& cfg) {
  ojson j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["k"] = cfg.k;
  j["alpha"] = cfg.hp.alpha;
  j["beta"] = cfg.hp.beta;
  j["lambda"] = cfg.hp.lambda;
  j["adversarial_mode"] = adv_mode_name(cfg.hp.adversarial_mode);
  j["schedule"] = schedule_name(cfg.schedule);
  j["optimizer"] = optimizer_name(cfg.optimizer);
  j["momentum"] = cfg.momentum;
  j["pl_weight"] = cfg.pl_weight;
  j["eval_every"] = cfg.eval_every;
  j["embed_dim"] = cfg.embed_dim;
  j["hidden_dim"] = cfg.hidden_dim;
  j["predictor_hidden"] = cfg.predictor_hidden;
  return j;
}

}  // namespace

ConfigResult validate_config_json(const ojson& doc) {
  ConfigResult result;
  PipelineConfig& cfg = result.config;
  auto& errors = result.errors;

  if (!doc.is_object() && !doc.is_null()) {
    errors.push_back("config root must be a JSON object");
  } else if (doc.is_object()) {
    SectionReader root(&doc, "", errors);
    root.field<uint64_t>("seed", [&](uint64_t v) { cfg.seed = v; });
    // Section presence is recorded; contents are parsed below.
    root.field<ojson>("synth", [](const ojson&) {});
    root.field<ojson>("teacher", [](const ojson&) {});
    root.field<ojson>("student", [](const ojson&) {});
    root.field<ojson>("ablation", [](const ojson&) {});
    root.finish();

    const ojson* synth = doc.contains("synth") ? &doc["synth"] : nullptr;
    {
      SectionReader r(synth, "synth.", errors);
      BenchmarkSpec& b = cfg.benchmark;
      r.field<std::string>("profile", [&](const std::string& v) {
        try {
          b.profile = profile_from_name(v);
        } catch (const DplError& e) {
          errors.push_back(std::string("synth.profile: ") + e.what());
        }
      });
      r.field<uint64_t>("n_fine_train", [&](uint64_t v) { b.n_fine_train = v; });
      r.field<uint64_t>("n_fine_test", [&](uint64_t v) { b.n_fine_test = v; });
      r.field<uint64_t>("n_coarse_train", [&](uint64_t v) { b.n_coarse_train = v; });
      r.field<uint64_t>("n_coarse_test", [&](uint64_t v) { b.n_coarse_test = v; });
      r.field<double>("label_noise", [&](double v) { b.label_noise = v; });
      r.field<double>("test_label_noise", [&](double v) { b.test_label_noise = v; });
      r.field<int>("fine_aspects_min", [&](int v) { b.fine_aspects_min = v; });
      r.field<int>("fine_aspects_max", [&](int v) { b.fine_aspects_max = v; });
      r.field<int>("coarse_aspects_min", [&](int v) { b.coarse_aspects_min = v; });
      r.field<int>("coarse_aspects_max", [&](int v) { b.coarse_aspects_max = v; });
      r.finish();
    }
    read_run_config(doc.contains("teacher") ? &doc["teacher"] : nullptr, "teacher.",
                    cfg.benchmark.teacher, errors);
    read_run_config(doc.contains("student") ? &doc["student"] : nullptr, "student.",
                    cfg.benchmark.student, errors);
    {
      const ojson* abl = doc.contains("ablation") ? &doc["ablation"] : nullptr;
      SectionReader r(abl, "ablation.", errors);
      r.field<std::vector<std::string>>("variants", [&](std::vector<std::string> v) {
        cfg.ablation_variants = std::move(v);
      });
      r.field<std::vector<uint64_t>>("seeds",
                                     [&](std::vector<uint64_t> v) { cfg.ablation_seeds = std::move(v); });
      r.finish();
    }
  }

  // Constraint checks (collected, not fail-fast).
  const BenchmarkSpec& b = cfg.benchmark;
  if (b.n_fine_train == 0) errors.push_back("synth.n_fine_train: must be positive");
  if (b.n_fine_test == 0) errors.push_back("synth.n_fine_test: must be positive");
  if (b.n_coarse_train == 0) errors.push_back("synth.n_coarse_train: must be positive");
  if (b.n_coarse_test == 0) errors.push_back("synth.n_coarse_test: must be positive");
  if (b.label_noise < 0 || b.label_noise > 1)
    errors.push_back("synth.label_noise: must be in [0, 1]");
  if (b.test_label_noise < 0 || b.test_label_noise > 1)
    errors.push_back("synth.test_label_noise: must be in [0, 1]");
  if (b.fine_aspects_min < 1) errors.push_back("synth.fine_aspects_min: must be >= 1");
  if (b.fine_aspects_max < b.fine_aspects_min)
    errors.push_back("synth.fine_aspects_max: range is empty");
  if (b.coarse_aspects_min < 1) errors.push_back("synth.coarse_aspects_min: must be >= 1");
  if (b.coarse_aspects_max < b.coarse_aspects_min)
    errors.push_back("synth.coarse_aspects_max: range is empty");
  check_run_config(cfg.benchmark.teacher, "teacher.", errors);
  check_run_config(cfg.benchmark.student, "student.", errors);
  for (const auto& v : cfg.ablation_variants) {
    try {
      variant_from_name(v);
    } catch (const DplError& e) {
      errors.push_back(std::string("ablation.variants: ") + e.what());
    }
  }
  if (cfg.ablation_seeds.empty()) errors.push_back("ablation.seeds: must not be empty");

  // Normalized form with every default filled.
  ojson norm;
  norm["seed"] = cfg.seed;
  ojson synth;
  synth["profile"] = profile_name(b.profile);
  synth["n_fine_train"] = b.n_fine_train;
  synth["n_fine_test"] = b.n_fine_test;
  synth["n_coarse_train"] = b.n_coarse_train;
  synth["n_coarse_test"] = b.n_coarse_test;
  synth["label_noise"] = b.label_noise;
  synth["test_label_noise"] = b.test_label_noise;
  synth["fine_aspects_min"] = b.fine_aspects_min;
  synth["fine_aspects_max"] = b.fine_aspects_max;
  synth["coarse_aspects_min"] = b.coarse_aspects_min;
  synth["coarse_aspects_max"] = b.coarse_aspects_max;
  norm["synth"] = std::move(synth);
  norm["teacher"] = run_config_json(cfg.benchmark.teacher);
  norm["student"] = run_config_json(cfg.benchmark.student);
  ojson abl;
  abl["variants"] = cfg.ablation_variants;
  abl["seeds"] = cfg.ablation_seeds;
  norm["ablation"] = std::move(abl);
  result.normalized = std::move(norm);
  result.config_hash = hex64(fnv1a64(result.normalized.dump()));
  return result;
}

ConfigResult validate_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    ConfigResult r;
    r.errors.push_back("cannot open config file: " + path);
    return r;
  }
  ojson doc;
  try {
    doc = ojson::parse(in);
  } catch (const std::exception& e) {
    ConfigResult r;
    r.errors.push_back("config is not valid JSON: " + std::string(e.what()));
    return r;
  }
  return validate_config_json(doc);
}

ConfigResult default_config() { return validate_config_json(ojson::object()); }

// ---------------------------------------------------------------------------
// Pipeline stages
// ---------------------------------------------------------------------------

namespace {

struct Manifest {
  ojson doc;

  static Manifest load_or_create(const fs::path& path, const std::string& config_hash,
                                 const ojson& normalized, uint64_t seed) {
    Manifest m;
    if (fs::exists(path)) {
      std::ifstream in(path);
      try {
        m.doc = ojson::parse(in);
      } catch (const std::exception&) {
        m.doc = ojson::object();
      }
    }
    if (!m.doc.is_object()) m.doc = ojson::object();
    m.doc["tool_version"] = kVersion;
    m.doc["checkpoint_version"] = 1;
    m.doc["config_hash"] = config_hash;
    m.doc["root_seed"] = seed;
    m.doc["normalized_config"] = normalized;
    if (!m.doc.contains("stages") || !m.doc["stages"].is_object())
      m.doc["stages"] = ojson::object();
    return m;
  }

  void save(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DplError("cannot write manifest: " + path.string());
    out << doc.dump(2) << '\n';
  }
};

class StageRunner {
 public:
  StageRunner(Manifest& manifest, const fs::path& out_dir, const fs::path& manifest_path,
              bool verbose)
      : manifest_(manifest), out_dir_(out_dir), manifest_path_(manifest_path),
        verbose_(verbose) {}

  /// Runs `body` unless the stage is already complete for `stage_hash`.
  /// Declared outputs are checksummed into the manifest; on a skipped stage
  /// the checksums are verified so silent corruption cannot pass.
  void stage(const std::string& name, const std::string& stage_hash,
             const std::vector<std::string>& outputs, const std::function<void()>& body) {
    auto& stages = manifest_.doc["stages"];
    if (stages.contains(name) && stages[name].value("hash", "") == stage_hash) {
      bool all_present = true;
      for (const auto& file : outputs)
        if (!fs::exists(out_dir_ / file)) all_present = false;
      if (all_present) {
        for (const auto& file : outputs) {
          std::string expected = stages[name]["outputs"].value(file, "");
          std::string actual = hex64(fnv1a64_file((out_dir_ / file).string()));
          if (expected != actual)
            throw DplError("stage " + name + ": checksum mismatch for " + file);
        }
        if (verbose_) std::cerr << "[pipeline] stage " << name << ": up to date, skipped\n";
        return;
      }
    }

    if (verbose_) std::cerr << "[pipeline] stage " << name << ": running\n";
    try {
      body();
    } catch (const DplError& e) {
      throw DplError("stage " + name + ": " + e.what());
    }

    ojson entry;
    entry["hash"] = stage_hash;
    ojson outs;
    for (const auto& file : outputs) {
      if (!fs::exists(out_dir_ / file))
        throw DplError("stage " + name + ": expected output missing: " + file);
      outs[file] = hex64(fnv1a64_file((out_dir_ / file).string()));
    }
    entry["outputs"] = std::move(outs);
    stages[name] = std::move(entry);
    manifest_.save(manifest_path_);
  }

 private:
  Manifest& manifest_;
  fs::path out_dir_;
  fs::path manifest_path_;
  bool verbose_;
};

void write_json_file(const ojson& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DplError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string section_hash(const ojson& normalized, std::initializer_list<const char*> keys,
                         uint64_t seed, const std::string& upstream = "") {
  ojson slice;
  for (const char* k : keys) slice[k] = normalized.at(k);
  slice["_seed"] = seed;
  slice["_upstream"] = upstream;
  return hex64(fnv1a64(slice.dump()));
}

}  // namespace

void run_pipeline(const PipelineConfig& config, const std::string& config_hash,
                  const ojson& normalized, const std::string& out_dir, bool verbose) {
  const BenchmarkSpec& spec = config.benchmark;
  fs::create_directories(out_dir);
  fs::path dir(out_dir);
  fs::path manifest_path = dir / "manifest.json";
  Manifest manifest = Manifest::load_or_create(manifest_path, config_hash, normalized,
                                               config.seed);
  StageRunner runner(manifest, dir, manifest_path, verbose);

  const std::string synth_hash = section_hash(normalized, {"synth"}, config.seed);
  runner.stage("synth", synth_hash,
               {"lexicon.json", "fine_train.jsonl", "fine_test.jsonl", "coarse_train.jsonl",
                "coarse_test.jsonl"},
               [&] {
                 Lexicon lex = build_lexicon(config.seed, spec.profile);
                 write_lexicon_json(lex, (dir / "lexicon.json").string());

                 GenConfig gen;
                 gen.label_noise = spec.label_noise;
                 gen.n_sentences = spec.n_fine_train;
                 gen.aspects_min = spec.fine_aspects_min;
                 gen.aspects_max = spec.fine_aspects_max;
                 gen.seed = derive_seed(config.seed, "fine-train");
                 gen.id_prefix = "f";
                 write_jsonl(generate_fine(gen, lex), (dir / "fine_train.jsonl").string());

                 gen.n_sentences = spec.n_fine_test;
                 gen.label_noise = spec.test_label_noise;
                 gen.seed = derive_seed(config.seed, "fine-test");
                 gen.id_prefix = "ft";
                 write_jsonl(generate_fine(gen, lex), (dir / "fine_test.jsonl").string());

                 gen.n_sentences = spec.n_coarse_train;
                 gen.label_noise = spec.label_noise;
                 gen.aspects_min = spec.coarse_aspects_min;
                 gen.aspects_max = spec.coarse_aspects_max;
                 gen.seed = derive_seed(config.seed, "coarse-train");
                 gen.id_prefix = "c";
                 write_jsonl(generate_coarse(gen, lex), (dir / "coarse_train.jsonl").string());

                 gen.n_sentences = spec.n_coarse_test;
                 gen.label_noise = spec.test_label_noise;
                 gen.seed = derive_seed(config.seed, "coarse-test");
                 gen.id_prefix = "ct";
                 write_jsonl(generate_coarse(gen, lex), (dir / "coarse_test.jsonl").string());
               });

  const std::string extract_hash = section_hash(normalized, {"synth"}, config.seed, synth_hash);
  runner.stage("extract-aspects", extract_hash, {"coarse_train_spans.jsonl"}, [&] {
    Lexicon lex = read_lexicon_json((dir / "lexicon.json").string());
    CoarseDataset coarse = read_coarse_jsonl((dir / "coarse_train.jsonl").string());
    write_jsonl(filter_coarse_dataset(coarse, lex), (dir / "coarse_train_spans.jsonl").string());
  });

  const std::string teachers_hash =
      section_hash(normalized, {"teacher"}, config.seed, synth_hash);
  runner.stage("train-teachers", teachers_hash,
               {"teacher_fine.ckpt", "teacher_fine_metrics.json", "teacher_coarse.ckpt",
                "teacher_coarse_metrics.json"},
               [&] {
                 FineDataset fine_train = read_fine_jsonl((dir / "fine_train.jsonl").string());
                 FineDataset fine_test = read_fine_jsonl((dir / "fine_test.jsonl").string());
                 RunConfig tcfg = spec.teacher;
                 tcfg.seed = derive_seed(config.seed, "teacher-fine");
                 TeacherTrainResult fine = train_fine_teacher(fine_train, &fine_test, tcfg);
                 save_teacher_checkpoint((dir / "teacher_fine.ckpt").string(), fine.model,
                                         config_hash);
                 ojson fm;
                 fm["kind"] = "fine";
                 fm["epoch_losses"] = fine.epoch_losses;
                 fm["heldout_accuracy"] = fine.heldout_accuracy.value_or(-1.0);
                 write_json_file(fm, dir / "teacher_fine_metrics.json");

                 CoarseDataset coarse_train =
                     read_coarse_jsonl((dir / "coarse_train.jsonl").string());
                 CoarseDataset coarse_test =
                     read_coarse_jsonl((dir / "coarse_test.jsonl").string());
                 tcfg.seed = derive_seed(config.seed, "teacher-coarse");
                 TeacherTrainResult coarse = train_coarse_teacher(coarse_train, &coarse_test, tcfg);
                 save_teacher_checkpoint((dir / "teacher_coarse.ckpt").string(), coarse.model,
                                         config_hash);
                 ojson cm;
                 cm["kind"] = "coarse";
                 cm["epoch_losses"] = coarse.epoch_losses;
                 cm["heldout_accuracy"] = coarse.heldout_accuracy.value_or(-1.0);
                 write_json_file(cm, dir / "teacher_coarse_metrics.json");
               });

  const std::string pseudo_hash = section_hash(normalized, {"teacher"}, config.seed,
                                               teachers_hash + extract_hash);
  runner.stage("pseudo-label", pseudo_hash, {"dprime_fine.jsonl", "dprime_coarse.jsonl"}, [&] {
    TeacherCheckpoint fine = load_teacher_checkpoint((dir / "teacher_fine.ckpt").string());
    TeacherCheckpoint coarse = load_teacher_checkpoint((dir / "teacher_coarse.ckpt").string());
    SpannedCoarseDataset spans =
        read_spanned_jsonl((dir / "coarse_train_spans.jsonl").string());
    FineDataset fine_train = read_fine_jsonl((dir / "fine_train.jsonl").string());
    write_jsonl(pseudo_label_coarse_side(fine.model, spans),
                (dir / "dprime_coarse.jsonl").string());
    write_jsonl(pseudo_label_fine_side(coarse.model, fine_train),
                (dir / "dprime_fine.jsonl").string());
  });

  runner.stage("merge", pseudo_hash, {"dprime.jsonl"}, [&] {
    MergedDataset fine_aug = read_merged_jsonl((dir / "dprime_fine.jsonl").string());
    MergedDataset coarse_aug = read_merged_jsonl((dir / "dprime_coarse.jsonl").string());
    write_jsonl(merge_datasets(fine_aug, coarse_aug), (dir / "dprime.jsonl").string());
  });

  const std::string train_hash =
      section_hash(normalized, {"student"}, config.seed, pseudo_hash);
  runner.stage("train", train_hash,
               {"student.ckpt", "student_final.ckpt", "history.json", "train_metrics.json"},
               [&] {
                 MergedDataset fine_aug = read_merged_jsonl((dir / "dprime_fine.jsonl").string());
                 MergedDataset coarse_aug =
                     read_merged_jsonl((dir / "dprime_coarse.jsonl").string());
                 FineDataset dev = read_fine_jsonl((dir / "fine_test.jsonl").string());

                 std::vector<std::vector<std::string>> texts;
                 for (const auto& r : fine_aug.rows) texts.push_back(r.sentence.tokens);
                 for (const auto& r : coarse_aug.rows) texts.push_back(r.sentence.tokens);
                 RunConfig scfg = spec.student;
                 scfg.seed = derive_seed(config.seed, "train");
                 StudentModel init = StudentModel::init(
                     Vocab::build(texts), fine_aug.fine_space, fine_aug.coarse_space,
                     scfg.embed_dim, scfg.hidden_dim, scfg.predictor_hidden,
                     derive_seed(config.seed, "student-init"));
                 TrainOutcome outcome = train_dpl(std::move(init), fine_aug, coarse_aug, &dev,
                                                  scfg);

                 save_student_checkpoint((dir / "student.ckpt").string(), outcome.model,
                                         scfg.hp, config_hash);
                 save_student_checkpoint((dir / "student_final.ckpt").string(),
                                         outcome.final_model, scfg.hp, config_hash);
                 write_history_json(outcome.history, (dir / "history.json").string());
                 ojson tm;
                 tm["best_epoch"] = outcome.best_epoch;
                 tm["best_dev_accuracy"] = outcome.best_dev_accuracy;
                 tm["steps"] = static_cast<int64_t>(outcome.history.steps.size());
                 write_json_file(tm, dir / "train_metrics.json");
               });

  const std::string eval_hash = section_hash(normalized, {"student"}, config.seed, train_hash);
  runner.stage("eval", eval_hash, {"eval.json"}, [&] {
    StudentCheckpoint ckpt = load_student_checkpoint((dir / "student.ckpt").string());
    FineDataset test = read_fine_jsonl((dir / "fine_test.jsonl").string());
    require_label_spaces(ckpt, test.fine_space, default_coarse_space());
    FineEval ev = evaluate_fine(ckpt.model, test);
    Representations reps = collect_representations(ckpt.model, test);
    ojson j;
    j["accuracy"] = ev.acc;
    j["macro_f1"] = ev.f1;
    j["chamfer_hz"] = chamfer_distance(reps.h, reps.z);
    j["examples"] = static_cast<int64_t>(test.size());
    write_json_file(j, dir / "eval.json");
  });
}

}  // namespace dpl
