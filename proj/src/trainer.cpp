#include "dpl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "dpl/checkpoint.hpp"
#include "dpl/evalkit.hpp"
#include "json.hpp"

namespace dpl {

using ojson = nlohmann::ordered_json;

Schedule schedule_from_name(const std::string& s) {
  if (s == "two_phase") return Schedule::two_phase;
  if (s == "simultaneous") return Schedule::simultaneous;
  throw DplError("unknown schedule: '" + s + "'");
}

const char* schedule_name(Schedule s) {
  return s == Schedule::two_phase ? "two_phase" : "simultaneous";
}

OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "momentum") return OptimizerKind::momentum;
  throw DplError("unknown optimizer: '" + s + "'");
}

const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::sgd ? "sgd" : "momentum";
}

void RunConfig::validate() const {
  if (epochs < 1) throw DplError("epochs must be >= 1");
  if (batch_size < 1) throw DplError("batch_size must be >= 1");
  if (learning_rate <= 0) throw DplError("learning_rate must be positive");
  if (k < 0) throw DplError("step ratio k must be >= 0");
  if (eval_every < 1) throw DplError("eval_every must be >= 1");
  if (pl_weight < 0) throw DplError("pl_weight must be >= 0");
  if (momentum < 0 || momentum >= 1) throw DplError("momentum must be in [0, 1)");
  if (embed_dim < 1 || hidden_dim < 1 || predictor_hidden < 1)
    throw DplError("model dimensions must be positive");
  hp.validate();
}

void write_history_json(const TrainHistory& history, const std::string& path) {
  ojson j;
  ojson steps = ojson::array();
  for (const auto& s : history.steps) {
    ojson e;
    e["step"] = s.step;
    e["origin"] = s.coarse_origin ? "coarse" : "fine";
    e["loss_fine"] = s.fine;
    e["loss_coarse"] = s.coarse;
    e["loss_enc"] = s.enc;
    e["loss_dis"] = s.dis;
    e["total"] = s.total;
    steps.push_back(std::move(e));
  }
  j["steps"] = std::move(steps);
  ojson evals = ojson::array();
  for (const auto& e : history.evals) {
    ojson r;
    r["epoch"] = e.epoch;
    r["dev_accuracy"] = e.accuracy;
    r["dev_macro_f1"] = e.macro_f1;
    evals.push_back(std::move(r));
  }
  j["evals"] = std::move(evals);
  j["wall_clock_seconds"] = history.wall_clock_seconds;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DplError("cannot write history: " + path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// DualLoader
// ---------------------------------------------------------------------------

std::vector<size_t> DualLoader::Cycler::take(size_t batch) {
  if (pos >= order.size()) {
    shuffle(order, rng);
    pos = 0;
  }
  size_t count = std::min(batch, order.size() - pos);
  std::vector<size_t> out(order.begin() + pos, order.begin() + pos + count);
  pos += count;
  return out;
}

DualLoader::DualLoader(size_t n_fine, size_t n_coarse, int k, int batch_size, uint64_t seed)
    : k_(k), batch_(batch_size) {
  if (batch_size < 1) throw DplError("dual_loader: batch size must be >= 1");
  if (k < 0) throw DplError("dual_loader: k must be >= 0");
  if (n_fine == 0) throw DplError("dual_loader: fine dataset is empty");
  if (k > 0 && n_coarse == 0) throw DplError("dual_loader: k > 0 with an empty coarse dataset");

  fine_.order.resize(n_fine);
  for (size_t i = 0; i < n_fine; ++i) fine_.order[i] = i;
  fine_.rng = Rng(derive_seed(seed, "loader-fine"));
  fine_.pos = n_fine;  // shuffle on first take

  coarse_.order.resize(n_coarse);
  for (size_t i = 0; i < n_coarse; ++i) coarse_.order[i] = i;
  coarse_.rng = Rng(derive_seed(seed, "loader-coarse"));
  coarse_.pos = n_coarse;
}

DualLoader::TaggedBatch DualLoader::next() {
  TaggedBatch out;
  if (phase_ == 0) {
    out.coarse_origin = false;
    out.indices = fine_.take(static_cast<size_t>(batch_));
    phase_ = k_ > 0 ? 1 : 0;
  } else {
    out.coarse_origin = true;
    out.indices = coarse_.take(static_cast<size_t>(batch_));
    phase_ = phase_ >= k_ ? 0 : phase_ + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

namespace {

class Sgd : public Optimizer {
 public:
  void step(const std::vector<TensorView>& params, const std::vector<TensorView>& grads,
            double lr) override {
    if (params.size() != grads.size()) throw DplError("optimizer: tensor list mismatch");
    for (size_t t = 0; t < params.size(); ++t) {
      if (params[t].size != grads[t].size) throw DplError("optimizer: tensor size mismatch");
      for (Eigen::Index i = 0; i < params[t].size; ++i)
        params[t].data[i] -= lr * grads[t].data[i];
    }
  }
};

class SgdMomentum : public Optimizer {
 public:
  explicit SgdMomentum(double mu) : mu_(mu) {}

  void step(const std::vector<TensorView>& params, const std::vector<TensorView>& grads,
            double lr) override {
    if (params.size() != grads.size()) throw DplError("optimizer: tensor list mismatch");
    for (size_t t = 0; t < params.size(); ++t) {
      auto& v = velocity_[params[t].name];
      if (v.size() != static_cast<size_t>(params[t].size)) v.assign(params[t].size, 0.0);
      for (Eigen::Index i = 0; i < params[t].size; ++i) {
        v[i] = mu_ * v[i] + grads[t].data[i];
        params[t].data[i] -= lr * v[i];
      }
    }
  }

 private:
  double mu_;
  std::unordered_map<std::string, std::vector<double>> velocity_;
};

}  // namespace

std::unique_ptr<Optimizer> make_optimizer(const RunConfig& config) {
  if (config.optimizer == OptimizerKind::momentum)
    return std::make_unique<SgdMomentum>(config.momentum);
  return std::make_unique<Sgd>();
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

namespace {

std::vector<ModelInput> gather(const std::vector<ModelInput>& all,
                               const std::vector<size_t>& indices) {
  std::vector<ModelInput> out;
  out.reserve(indices.size());
  for (size_t i : indices) out.push_back(all[i]);
  return out;
}

void check_total_finite(double total, int step) {
  if (!std::isfinite(total))
    throw DplError("non-finite loss at step " + std::to_string(step) + "; aborting");
}

struct EvalTracker {
  double best_acc = -1.0;
  int best_epoch = 0;

  /// Returns true when this epoch strictly improves on the best dev accuracy.
  bool record(TrainHistory& history, const StudentModel& model, const FineDataset* dev, int epoch,
              int eval_every) {
    if (!dev || epoch % eval_every != 0) return false;
    FineEval ev = evaluate_fine(model, *dev);
    history.evals.push_back({epoch, ev.acc, ev.f1});
    if (ev.acc > best_acc) {
      best_acc = ev.acc;
      best_epoch = epoch;
      return true;
    }
    return false;
  }
};

int steps_per_epoch(size_t n_fine, int batch, int k, size_t n_coarse) {
  int fine_steps = static_cast<int>((n_fine + batch - 1) / static_cast<size_t>(batch));
  int aux = (k > 0 && n_coarse > 0) ? k : 0;
  return fine_steps * (1 + aux);
}

}  // namespace

double discriminator_phase(StudentModel& model, Batch batch, double beta, double lr,
                           Optimizer& opt, StudentGrad& scratch) {
  if (beta == 0.0) return 0.0;
  scratch.set_zero();
  double dis = loss_dis(batch, model, &scratch, beta);
  opt.step(model.fine_head.tensors("fine_head."), scratch.fine_head.tensors("fine_head."), lr);
  return dis;
}

TrainOutcome train_dpl(StudentModel init, const MergedDataset& fine_aug,
                       const MergedDataset& coarse_aug, const FineDataset* dev,
                       const RunConfig& config, const DplVariantOptions& opts) {
  config.validate();
  if (fine_aug.fine_space != init.fine_space || fine_aug.coarse_space != init.coarse_space ||
      coarse_aug.fine_space != init.fine_space || coarse_aug.coarse_space != init.coarse_space)
    throw DplError("train_dpl: label spaces of datasets and model disagree");
  if (fine_aug.empty()) throw DplError("train_dpl: fine-origin dataset is empty");

  auto start = std::chrono::steady_clock::now();
  StudentModel model = std::move(init);
  std::vector<ModelInput> fine_rows = make_inputs(model.vocab, fine_aug);
  std::vector<ModelInput> coarse_rows = make_inputs(model.vocab, coarse_aug);

  DualLoader loader(fine_rows.size(), coarse_rows.size(), config.k, config.batch_size,
                    derive_seed(config.seed, "loader"));
  auto opt = make_optimizer(config);
  StudentGrad grad = StudentGrad::zeros_like(model);
  const Hyperparams& hp = config.hp;

  TrainOutcome out;
  EvalTracker tracker;
  StudentModel best = model;

  int step = 0;
  const int per_epoch = steps_per_epoch(fine_rows.size(), config.batch_size, config.k,
                                        coarse_rows.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (int s = 0; s < per_epoch; ++s) {
      DualLoader::TaggedBatch tb = loader.next();
      std::vector<ModelInput> rows =
          gather(tb.coarse_origin ? coarse_rows : fine_rows, tb.indices);
      Batch batch(rows);
      ++step;

      const bool fine_terms = !tb.coarse_origin || opts.fine_terms_on_coarse_rows;
      const bool coarse_term = tb.coarse_origin || opts.coarse_term_on_fine_rows;
      const bool adv_active = hp.beta > 0.0 && fine_terms;

      StepRecord rec;
      rec.step = step;
      rec.coarse_origin = tb.coarse_origin;

      try {
        if (config.schedule == Schedule::two_phase && adv_active)
          rec.dis = discriminator_phase(model, batch, hp.beta, config.learning_rate, *opt, grad);

        grad.set_zero();
        if (fine_terms) rec.fine = loss_fine(batch, model, &grad, 1.0);
        if (coarse_term) rec.coarse = loss_coarse(batch, model, &grad, hp.alpha);
        if (adv_active) {
          rec.enc = loss_enc(batch, model, hp.adversarial_mode, &grad, hp.beta * hp.lambda);
          if (config.schedule == Schedule::simultaneous)
            rec.dis = loss_dis(batch, model, &grad, hp.beta);
        }
      } catch (const DplError& e) {
        throw DplError(std::string(e.what()) + " at step " + std::to_string(step) + "; aborting");
      }
      opt->step(student_tensors(model), student_tensors(grad), config.learning_rate);

      rec.total = rec.fine + hp.alpha * rec.coarse + hp.beta * (rec.dis + hp.lambda * rec.enc);
      check_total_finite(rec.total, step);
      out.history.steps.push_back(rec);
    }
    if (tracker.record(out.history, model, dev, epoch, config.eval_every)) best = model;
  }

  out.final_model = model;
  out.model = dev ? std::move(best) : std::move(model);
  out.best_dev_accuracy = dev ? tracker.best_acc : 0.0;
  out.best_epoch = tracker.best_epoch;
  out.history.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

double traditional_pl_cycle_loss(Batch gold, const std::vector<Batch>& pseudo,
                                 const StudentModel& m, double pl_weight, StudentGrad* grad) {
  double total = loss_fine(gold, m, grad, 1.0);
  for (const Batch& p : pseudo) total += pl_weight * loss_fine(p, m, grad, pl_weight);
  return total;
}

TrainOutcome train_traditional_pl(StudentModel init, const FineDataset& fine_gold,
                                  const FineDataset& pseudo_rows, const FineDataset* dev,
                                  const RunConfig& config) {
  config.validate();
  if (fine_gold.fine_space != init.fine_space)
    throw DplError("train_traditional_pl: label spaces disagree");
  if (fine_gold.empty()) throw DplError("train_traditional_pl: gold dataset is empty");
  for (const auto& row : pseudo_rows.rows)
    if (!row.fine_is_pseudo)
      throw DplError("train_traditional_pl: auxiliary rows must carry pseudo fine labels only");

  auto start = std::chrono::steady_clock::now();
  StudentModel model = std::move(init);
  std::vector<ModelInput> gold_rows = make_inputs(model.vocab, fine_gold);
  std::vector<ModelInput> aux_rows = make_inputs(model.vocab, pseudo_rows);

  DualLoader loader(gold_rows.size(), aux_rows.size(), config.k, config.batch_size,
                    derive_seed(config.seed, "loader"));
  auto opt = make_optimizer(config);
  StudentGrad grad = StudentGrad::zeros_like(model);

  TrainOutcome out;
  EvalTracker tracker;
  StudentModel best = model;

  const int aux_per_cycle = (config.k > 0 && !aux_rows.empty()) ? config.k : 0;
  const int cycles =
      static_cast<int>((gold_rows.size() + config.batch_size - 1) / config.batch_size);
  int step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (int c = 0; c < cycles; ++c) {
      std::vector<ModelInput> gold = gather(gold_rows, loader.next().indices);
      std::vector<std::vector<ModelInput>> pseudo;
      for (int j = 0; j < aux_per_cycle; ++j)
        pseudo.push_back(gather(aux_rows, loader.next().indices));
      std::vector<Batch> pseudo_batches(pseudo.begin(), pseudo.end());

      ++step;
      grad.set_zero();
      double total;
      try {
        total = traditional_pl_cycle_loss(Batch(gold), pseudo_batches, model, config.pl_weight,
                                          &grad);
      } catch (const DplError& e) {
        throw DplError(std::string(e.what()) + " at step " + std::to_string(step) + "; aborting");
      }
      opt->step(student_tensors(model), student_tensors(grad), config.learning_rate);

      StepRecord rec;
      rec.step = step;
      rec.total = total;
      rec.fine = total;  // single-pathway objective
      check_total_finite(total, step);
      out.history.steps.push_back(rec);
    }
    if (tracker.record(out.history, model, dev, epoch, config.eval_every)) best = model;
  }

  out.final_model = model;
  out.model = dev ? std::move(best) : std::move(model);
  out.best_dev_accuracy = dev ? tracker.best_acc : 0.0;
  out.best_epoch = tracker.best_epoch;
  out.history.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

FineDataset strip_to_pseudo_fine(const MergedDataset& merged) {
  FineDataset out;
  out.fine_space = merged.fine_space;
  out.coarse_space = merged.coarse_space;
  out.split = merged.split;
  out.rows.reserve(merged.size());
  for (const auto& row : merged.rows)
    out.rows.push_back({row.sentence, row.span, row.fine_label, true});
  validate_dataset(out);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

ojson space_json(const LabelSpace& space) {
  ojson a = ojson::array();
  for (const auto& c : space.classes) a.push_back(c);
  return a;
}

LabelSpace space_from_json(const ojson& j) {
  LabelSpace s;
  for (const auto& c : j) s.classes.push_back(c.get<std::string>());
  s.validate();
  return s;
}

void copy_into(const CheckpointData& ckpt, std::vector<TensorView> views) {
  for (auto& v : views) {
    const auto& data = ckpt.tensor(v.name);
    if (static_cast<Eigen::Index>(data.size()) != v.size)
      throw DplError("checkpoint tensor '" + v.name + "' has unexpected size");
    std::copy(data.begin(), data.end(), v.data);
  }
}

}  // namespace

void save_student_checkpoint(const std::string& path, const StudentModel& model,
                             const Hyperparams& hp, const std::string& config_hash) {
  ojson meta;
  meta["format"] = "dpl-student";
  meta["tool_version"] = kVersion;
  meta["config_hash"] = config_hash;
  meta["fine_space"] = space_json(model.fine_space);
  meta["coarse_space"] = space_json(model.coarse_space);
  meta["vocab"] = model.vocab.tokens;
  ojson dims;
  dims["embed_dim"] = model.enc.dim();
  dims["hidden_dim"] = model.enc.hidden();
  dims["predictor_hidden"] = static_cast<int>(model.fine_head.w1.rows());
  meta["dims"] = std::move(dims);
  ojson hpj;
  hpj["alpha"] = hp.alpha;
  hpj["beta"] = hp.beta;
  hpj["lambda"] = hp.lambda;
  hpj["adversarial_mode"] = adv_mode_name(hp.adversarial_mode);
  meta["hyperparams"] = std::move(hpj);
  save_checkpoint_file(path, meta, student_tensors(model));
}

StudentCheckpoint load_student_checkpoint(const std::string& path) {
  CheckpointData ckpt = load_checkpoint_file(path);
  if (ckpt.meta.value("format", "") != "dpl-student")
    throw DplError("not a student checkpoint: " + path);

  StudentCheckpoint out;
  out.config_hash = ckpt.meta.value("config_hash", "");
  out.hp.alpha = ckpt.meta.at("hyperparams").at("alpha").get<double>();
  out.hp.beta = ckpt.meta.at("hyperparams").at("beta").get<double>();
  out.hp.lambda = ckpt.meta.at("hyperparams").at("lambda").get<double>();
  out.hp.adversarial_mode =
      adv_mode_from_name(ckpt.meta.at("hyperparams").at("adversarial_mode").get<std::string>());

  Vocab vocab = Vocab::from_tokens(ckpt.meta.at("vocab").get<std::vector<std::string>>());
  LabelSpace fine = space_from_json(ckpt.meta.at("fine_space"));
  LabelSpace coarse = space_from_json(ckpt.meta.at("coarse_space"));
  int d = ckpt.meta.at("dims").at("embed_dim").get<int>();
  int hidden = ckpt.meta.at("dims").at("hidden_dim").get<int>();
  int ph = ckpt.meta.at("dims").at("predictor_hidden").get<int>();

  out.model = StudentModel::init(std::move(vocab), std::move(fine), std::move(coarse), d, hidden,
                                 ph, /*seed=*/0);
  copy_into(ckpt, student_tensors(out.model));
  return out;
}

void require_label_spaces(const StudentCheckpoint& ckpt, const LabelSpace& fine,
                          const LabelSpace& coarse) {
  if (ckpt.model.fine_space != fine || ckpt.model.coarse_space != coarse)
    throw DplError("label-space mismatch between checkpoint and configuration");
}

}  // namespace dpl
