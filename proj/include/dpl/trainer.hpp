#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dpl/corpus.hpp"
#include "dpl/model.hpp"

namespace dpl {

enum class Schedule { two_phase, simultaneous };
enum class OptimizerKind { sgd, momentum };

Schedule schedule_from_name(const std::string& s);
const char* schedule_name(Schedule s);
OptimizerKind optimizer_from_name(const std::string& s);
const char* optimizer_name(OptimizerKind k);

struct RunConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 0.2;
  int k = 1;  // auxiliary (coarse-origin) steps per original (fine-origin) step
  Hyperparams hp;
  uint64_t seed = 1;
  int eval_every = 1;       // epochs between dev evaluations
  double pl_weight = 1.0;   // weight of pseudo rows in the traditional-PL baseline
  Schedule schedule = Schedule::two_phase;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double momentum = 0.9;
  int embed_dim = 32;
  int hidden_dim = 64;
  int predictor_hidden = 32;

  void validate() const;
};

struct StepRecord {
  int step = 0;
  bool coarse_origin = false;
  double fine = 0.0;
  double coarse = 0.0;
  double enc = 0.0;
  double dis = 0.0;
  double total = 0.0;
};

struct EvalRecord {
  int epoch = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  double wall_clock_seconds = 0.0;
};

void write_history_json(const TrainHistory& history, const std::string& path);

// ---------------------------------------------------------------------------
// Dual asynchronous loader: one fine-origin batch, then k coarse-origin
// batches, repeating. Each side shuffles and cycles independently and
// deterministically under the seed.
// ---------------------------------------------------------------------------

class DualLoader {
 public:
  struct TaggedBatch {
    bool coarse_origin = false;
    std::vector<size_t> indices;
  };

  DualLoader(size_t n_fine, size_t n_coarse, int k, int batch_size, uint64_t seed);
  TaggedBatch next();

 private:
  struct Cycler {
    std::vector<size_t> order;
    size_t pos = 0;
    Rng rng{0};
    std::vector<size_t> take(size_t batch);
  };
  Cycler fine_;
  Cycler coarse_;
  int k_;
  int batch_;
  int phase_ = 0;  // 0 = fine next, 1..k = coarse
};

// ---------------------------------------------------------------------------
// Optimizers. Plain SGD is the reference; momentum is available behind the
// same interface.
// ---------------------------------------------------------------------------

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(const std::vector<TensorView>& params, const std::vector<TensorView>& grads,
                    double lr) = 0;
};

std::unique_ptr<Optimizer> make_optimizer(const RunConfig& config);

// ---------------------------------------------------------------------------
// Training loops.
// ---------------------------------------------------------------------------

/// Ablation knobs: which loss terms see which batch origin. The adversarial
/// pair follows the fine terms (it consumes fine labels).
struct DplVariantOptions {
  bool fine_terms_on_coarse_rows = true;   // off for the no-fine-pseudo variant
  bool coarse_term_on_fine_rows = true;    // off for the no-coarse-pseudo variant
};

struct TrainOutcome {
  StudentModel model;        // best-dev params when a dev set is given, else final
  StudentModel final_model;  // params after the last step
  TrainHistory history;
  double best_dev_accuracy = 0.0;
  int best_epoch = 0;
};

/// One discriminator phase: a gradient step on beta * loss_dis applied to the
/// fine head only. No-op when beta is 0.
double discriminator_phase(StudentModel& model, Batch batch, double beta, double lr,
                           Optimizer& opt, StudentGrad& scratch);

TrainOutcome train_dpl(StudentModel init, const MergedDataset& fine_aug,
                       const MergedDataset& coarse_aug, const FineDataset* dev,
                       const RunConfig& config, const DplVariantOptions& opts = {});

/// Eq.-style single-pathway baseline: gold fine rows plus pseudo fine rows
/// whose coarse labels have been dropped; pseudo rows weigh in at pl_weight.
TrainOutcome train_traditional_pl(StudentModel init, const FineDataset& fine_gold,
                                  const FineDataset& pseudo_rows, const FineDataset* dev,
                                  const RunConfig& config);

/// Loss of one traditional-PL cycle (one gold batch + its pseudo batches).
double traditional_pl_cycle_loss(Batch gold, const std::vector<Batch>& pseudo,
                                 const StudentModel& m, double pl_weight,
                                 StudentGrad* grad = nullptr);

/// Merged rows reduced to fine-only pseudo examples (coarse labels dropped).
FineDataset strip_to_pseudo_fine(const MergedDataset& merged);

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

struct StudentCheckpoint {
  StudentModel model;
  Hyperparams hp;
  std::string config_hash;
};

void save_student_checkpoint(const std::string& path, const StudentModel& model,
                             const Hyperparams& hp, const std::string& config_hash);
StudentCheckpoint load_student_checkpoint(const std::string& path);

/// Loading a checkpoint into a run whose label spaces disagree is an error.
void require_label_spaces(const StudentCheckpoint& ckpt, const LabelSpace& fine,
                          const LabelSpace& coarse);

}  // namespace dpl
