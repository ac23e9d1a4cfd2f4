#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dpl/ablation.hpp"
#include "dpl/aspectex.hpp"
#include "dpl/evalkit.hpp"
#include "dpl/pipeline.hpp"
#include "dpl/teachers.hpp"

namespace fs = std::filesystem;
using namespace dpl;
using ojson = nlohmann::ordered_json;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out;
  int64_t seed_override = -1;
  bool verbose = false;
};

ConfigResult load_config(const GlobalArgs& args, bool env_seed_override = false) {
  ConfigResult result =
      args.config_path.empty() ? default_config() : validate_config(args.config_path);
  if (!result.ok()) {
    std::cerr << "config errors:\n";
    for (const auto& e : result.errors) std::cerr << "  - " << e << "\n";
    std::exit(1);
  }
  bool changed = false;
  if (args.seed_override >= 0) {
    result.config.seed = static_cast<uint64_t>(args.seed_override);
    changed = true;
  }
  if (env_seed_override) {
    if (const char* env = std::getenv("DPL_SEED")) {
      result.config.seed = std::strtoull(env, nullptr, 10);
      changed = true;
    }
  }
  if (changed) {
    // Re-normalize so the config hash reflects the effective seed.
    ojson doc = result.normalized;
    doc["seed"] = result.config.seed;
    result = validate_config_json(doc);
  }
  return result;
}

void write_json_file(const ojson& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DplError("cannot write " + path);
  out << j.dump(2) << '\n';
}

int cmd_synth(const GlobalArgs& args) {
  ConfigResult cfg = load_config(args);
  const BenchmarkSpec& spec = cfg.config.benchmark;
  fs::create_directories(args.out);
  fs::path dir(args.out);

  Lexicon lex = build_lexicon(cfg.config.seed, spec.profile);
  write_lexicon_json(lex, (dir / "lexicon.json").string());

  GenConfig gen;
  gen.n_sentences = spec.n_fine_train;
  gen.aspects_min = spec.fine_aspects_min;
  gen.aspects_max = spec.fine_aspects_max;
  gen.label_noise = spec.label_noise;
  gen.seed = derive_seed(cfg.config.seed, "fine-train");
  gen.id_prefix = "f";
  FineDataset fine = generate_fine(gen, lex);
  write_jsonl(fine, (dir / "fine.jsonl").string());

  gen.n_sentences = spec.n_coarse_train;
  gen.aspects_min = spec.coarse_aspects_min;
  gen.aspects_max = spec.coarse_aspects_max;
  gen.seed = derive_seed(cfg.config.seed, "coarse-train");
  gen.id_prefix = "c";
  CoarseDataset coarse = generate_coarse(gen, lex);
  write_jsonl(coarse, (dir / "coarse.jsonl").string());

  ojson manifest;
  manifest["tool_version"] = kVersion;
  manifest["config_hash"] = cfg.config_hash;
  manifest["seed"] = cfg.config.seed;
  manifest["lexicon_hash"] = hex64(lex.content_hash());
  manifest["synth"] = cfg.normalized["synth"];
  manifest["fine_rows"] = static_cast<int64_t>(fine.size());
  manifest["coarse_rows"] = static_cast<int64_t>(coarse.size());
  write_json_file(manifest, (dir / "synth_manifest.json").string());
  std::cout << "wrote " << fine.size() << " fine rows, " << coarse.size()
            << " coarse rows to " << args.out << "\n";
  return 0;
}

int cmd_extract(const std::string& in, const std::string& lexicon, const std::string& out) {
  Lexicon lex = read_lexicon_json(lexicon);
  CoarseDataset coarse = read_coarse_jsonl(in);
  SpannedCoarseDataset spans = filter_coarse_dataset(coarse, lex);
  write_jsonl(spans, out);
  std::cout << "extracted " << spans.size() << " (sentence, span) rows from " << coarse.size()
            << " sentences\n";
  return 0;
}

int cmd_train_teacher(const GlobalArgs& args, const std::string& kind, const std::string& train,
                      const std::string& dev, const std::string& out_ckpt,
                      const std::string& metrics_path) {
  ConfigResult cfg = load_config(args);
  RunConfig tcfg = cfg.config.benchmark.teacher;
  tcfg.seed = derive_seed(cfg.config.seed, "teacher-" + kind);

  TeacherTrainResult result;
  if (kind == "fine") {
    FineDataset train_ds = read_fine_jsonl(train);
    FineDataset dev_ds;
    if (!dev.empty()) dev_ds = read_fine_jsonl(dev);
    result = train_fine_teacher(train_ds, dev.empty() ? nullptr : &dev_ds, tcfg);
  } else if (kind == "coarse") {
    CoarseDataset train_ds = read_coarse_jsonl(train);
    CoarseDataset dev_ds;
    if (!dev.empty()) dev_ds = read_coarse_jsonl(dev);
    result = train_coarse_teacher(train_ds, dev.empty() ? nullptr : &dev_ds, tcfg);
  } else {
    std::cerr << "unknown teacher kind: " << kind << "\n";
    return 1;
  }

  save_teacher_checkpoint(out_ckpt, result.model, cfg.config_hash);
  ojson m;
  m["kind"] = kind;
  m["epoch_losses"] = result.epoch_losses;
  if (result.heldout_accuracy) m["heldout_accuracy"] = *result.heldout_accuracy;
  if (!metrics_path.empty()) write_json_file(m, metrics_path);
  std::cout << "teacher (" << kind << ") final epoch loss "
            << (result.epoch_losses.empty() ? 0.0 : result.epoch_losses.back());
  if (result.heldout_accuracy) std::cout << ", held-out accuracy " << *result.heldout_accuracy;
  std::cout << "\n";
  return 0;
}

int cmd_pseudo_label(const std::string& teacher_path, const std::string& in,
                     const std::string& out) {
  TeacherCheckpoint teacher = load_teacher_checkpoint(teacher_path);
  if (teacher.model.kind == TeacherKind::fine) {
    SpannedCoarseDataset data = read_spanned_jsonl(in);
    MergedDataset merged = pseudo_label_coarse_side(teacher.model, data);
    write_jsonl(merged, out);
    std::cout << "pseudo-labeled " << merged.size() << " coarse-side rows\n";
  } else {
    FineDataset data = read_fine_jsonl(in);
    MergedDataset merged = pseudo_label_fine_side(teacher.model, data);
    write_jsonl(merged, out);
    std::cout << "pseudo-labeled " << merged.size() << " fine-side rows\n";
  }
  return 0;
}

int cmd_merge(const std::string& fine, const std::string& coarse, const std::string& out) {
  MergedDataset fine_aug = read_merged_jsonl(fine);
  MergedDataset coarse_aug = read_merged_jsonl(coarse);
  MergedDataset merged = merge_datasets(fine_aug, coarse_aug);
  write_jsonl(merged, out);
  std::cout << "merged " << fine_aug.size() << " + " << coarse_aug.size() << " -> "
            << merged.size() << " rows\n";
  return 0;
}

int cmd_train(const GlobalArgs& args, const std::string& fine, const std::string& coarse,
              const std::string& dev) {
  ConfigResult cfg = load_config(args, /*env_seed_override=*/true);
  RunConfig scfg = cfg.config.benchmark.student;
  scfg.seed = derive_seed(cfg.config.seed, "train");

  MergedDataset fine_aug = read_merged_jsonl(fine);
  MergedDataset coarse_aug = read_merged_jsonl(coarse);
  FineDataset dev_ds;
  if (!dev.empty()) dev_ds = read_fine_jsonl(dev);

  std::vector<std::vector<std::string>> texts;
  for (const auto& r : fine_aug.rows) texts.push_back(r.sentence.tokens);
  for (const auto& r : coarse_aug.rows) texts.push_back(r.sentence.tokens);
  StudentModel init = StudentModel::init(Vocab::build(texts), fine_aug.fine_space,
                                         fine_aug.coarse_space, scfg.embed_dim, scfg.hidden_dim,
                                         scfg.predictor_hidden,
                                         derive_seed(cfg.config.seed, "student-init"));

  TrainOutcome outcome =
      train_dpl(std::move(init), fine_aug, coarse_aug, dev.empty() ? nullptr : &dev_ds, scfg);

  fs::create_directories(args.out);
  fs::path dir(args.out);
  save_student_checkpoint((dir / "student.ckpt").string(), outcome.model, scfg.hp,
                          cfg.config_hash);
  save_student_checkpoint((dir / "student_final.ckpt").string(), outcome.final_model, scfg.hp,
                          cfg.config_hash);
  write_history_json(outcome.history, (dir / "history.json").string());
  ojson tm;
  tm["best_epoch"] = outcome.best_epoch;
  tm["best_dev_accuracy"] = outcome.best_dev_accuracy;
  tm["steps"] = static_cast<int64_t>(outcome.history.steps.size());
  write_json_file(tm, (dir / "train_metrics.json").string());
  std::cout << "trained " << outcome.history.steps.size() << " steps";
  if (!dev.empty())
    std::cout << ", best dev accuracy " << outcome.best_dev_accuracy << " at epoch "
              << outcome.best_epoch;
  std::cout << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data, const std::string& out) {
  StudentCheckpoint ckpt = load_student_checkpoint(ckpt_path);
  FineDataset test = read_fine_jsonl(data);
  require_label_spaces(ckpt, test.fine_space, ckpt.model.coarse_space);
  FineEval ev = evaluate_fine(ckpt.model, test);
  Representations reps = collect_representations(ckpt.model, test);
  ojson j;
  j["accuracy"] = ev.acc;
  j["macro_f1"] = ev.f1;
  j["chamfer_hz"] = chamfer_distance(reps.h, reps.z);
  j["examples"] = static_cast<int64_t>(test.size());
  if (!out.empty()) write_json_file(j, out);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_ablate(const GlobalArgs& args) {
  ConfigResult cfg = load_config(args);
  std::vector<Variant> variants;
  for (const auto& v : cfg.config.ablation_variants) variants.push_back(variant_from_name(v));
  std::vector<uint64_t> seeds;
  for (uint64_t s : cfg.config.ablation_seeds) seeds.push_back(derive_seed(cfg.config.seed, "ablation-" + std::to_string(s)));

  AblationResult result = run_ablation(cfg.config.benchmark, variants, seeds);
  fs::create_directories(args.out);
  fs::path dir(args.out);
  write_json_file(ablation_json(result), (dir / "ablation_results.json").string());
  std::string table = ablation_table(result);
  std::ofstream tf((dir / "ablation_table.txt").string(), std::ios::binary | std::ios::trunc);
  tf << table;
  std::cout << table;
  if (result.error) {
    std::cerr << "ablation aborted: " << *result.error << "\n";
    return 1;
  }
  return 0;
}

int cmd_pipeline(const GlobalArgs& args) {
  ConfigResult cfg = load_config(args);
  run_pipeline(cfg.config, cfg.config_hash, cfg.normalized, args.out, args.verbose);
  std::cout << "pipeline complete: " << args.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-granularity pseudo labeling toolkit"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config_path, "JSON config file (defaults used when omitted)");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--seed", g.seed_override, "override the root seed");
  app.add_flag("--verbose", g.verbose, "verbose stage logging");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dual-granularity corpus");

  auto* extract = app.add_subcommand("extract-aspects", "extract aspect spans from coarse data");
  std::string ex_in, ex_lexicon, ex_out;
  extract->add_option("--in", ex_in, "coarse JSONL")->required();
  extract->add_option("--lexicon", ex_lexicon, "lexicon JSON")->required();
  extract->add_option("--out-file", ex_out, "output JSONL")->required();

  auto* teach = app.add_subcommand("train-teacher", "train a fine or coarse teacher");
  std::string t_kind, t_train, t_dev, t_ckpt, t_metrics;
  teach->add_option("--kind", t_kind, "fine|coarse")->required();
  teach->add_option("--train", t_train, "training JSONL")->required();
  teach->add_option("--dev", t_dev, "held-out JSONL for accuracy reporting");
  teach->add_option("--out-file", t_ckpt, "checkpoint path")->required();
  teach->add_option("--metrics", t_metrics, "metrics JSON path");

  auto* pseudo = app.add_subcommand("pseudo-label", "generate pseudo labels with a teacher");
  std::string p_teacher, p_in, p_out;
  pseudo->add_option("--teacher", p_teacher, "teacher checkpoint")->required();
  pseudo->add_option("--in", p_in, "input JSONL (spans for a fine teacher, fine rows otherwise)")
      ->required();
  pseudo->add_option("--out-file", p_out, "merged JSONL output")->required();

  auto* merge = app.add_subcommand("merge", "merge the two pseudo-labeled sides");
  std::string m_fine, m_coarse, m_out;
  merge->add_option("--fine", m_fine, "D'_fine JSONL")->required();
  merge->add_option("--coarse", m_coarse, "D'_coarse JSONL")->required();
  merge->add_option("--out-file", m_out, "merged JSONL output")->required();

  auto* train = app.add_subcommand("train", "train the dual-pathway student");
  std::string tr_fine, tr_coarse, tr_dev;
  train->add_option("--fine", tr_fine, "D'_fine JSONL")->required();
  train->add_option("--coarse", tr_coarse, "D'_coarse JSONL")->required();
  train->add_option("--dev", tr_dev, "fine dev JSONL for early stopping");

  auto* eval = app.add_subcommand("eval", "evaluate a student checkpoint");
  std::string e_ckpt, e_data, e_out;
  eval->add_option("--checkpoint", e_ckpt, "student checkpoint")->required();
  eval->add_option("--data", e_data, "fine JSONL")->required();
  eval->add_option("--out-file", e_out, "metrics JSON path");

  auto* ablate = app.add_subcommand("ablate", "run the ablation grid");
  auto* pipeline = app.add_subcommand("pipeline", "run the full pipeline");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(synth)) {
      if (g.out.empty()) throw DplError("synth requires --out");
      return cmd_synth(g);
    }
    if (app.got_subcommand(extract)) return cmd_extract(ex_in, ex_lexicon, ex_out);
    if (app.got_subcommand(teach))
      return cmd_train_teacher(g, t_kind, t_train, t_dev, t_ckpt, t_metrics);
    if (app.got_subcommand(pseudo)) return cmd_pseudo_label(p_teacher, p_in, p_out);
    if (app.got_subcommand(merge)) return cmd_merge(m_fine, m_coarse, m_out);
    if (app.got_subcommand(train)) {
      if (g.out.empty()) throw DplError("train requires --out");
      return cmd_train(g, tr_fine, tr_coarse, tr_dev);
    }
    if (app.got_subcommand(eval)) return cmd_eval(e_ckpt, e_data, e_out);
    if (app.got_subcommand(ablate)) {
      if (g.out.empty()) throw DplError("ablate requires --out");
      return cmd_ablate(g);
    }
    if (app.got_subcommand(pipeline)) {
      if (g.out.empty()) throw DplError("pipeline requires --out");
      return cmd_pipeline(g);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
