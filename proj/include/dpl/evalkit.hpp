#pragma once

#include <vector>

#include "dpl/model.hpp"

namespace dpl {

// ---------------------------------------------------------------------------
// Classification metrics.
// ---------------------------------------------------------------------------

double accuracy(const std::vector<int>& pred, const std::vector<int>& gold);

/// Unweighted mean of per-class F1. A class absent from both pred and gold
/// contributes F1 = 0 (deterministic absent-class convention).
double macro_f1(const std::vector<int>& pred, const std::vector<int>& gold, int n_classes);

/// Symmetric mean-of-min squared Euclidean distance between two point sets.
double chamfer_distance(const std::vector<Vec>& a, const std::vector<Vec>& b);

// ---------------------------------------------------------------------------
// Representation diagnostics.
// ---------------------------------------------------------------------------

struct Representations {
  std::vector<Vec> z;
  std::vector<Vec> h;
};

Representations collect_representations(const StudentModel& model, const FineDataset& dataset);

struct FineEval {
  double acc = 0.0;
  double f1 = 0.0;
  std::vector<int> predictions;
};

/// Fine-task predictions of the student (argmax of the fine head on z).
FineEval evaluate_fine(const StudentModel& model, const FineDataset& dataset);

// ---------------------------------------------------------------------------
// Linear probes. Multinomial softmax regression trained by full-batch
// gradient descent from a zero init; the objective is convex, so a fixed
// iteration budget lands near the optimum deterministically.
// ---------------------------------------------------------------------------

struct LinearProbe {
  Mat w;  // classes x dim
  Vec b;

  int predict(const Vec& x) const;
};

LinearProbe train_probe(const std::vector<Vec>& x, const std::vector<int>& y, int n_classes,
                        int iters = 400, double lr = 0.5);
/// Same, but returns the iterate with the best accuracy on the fitting data
/// (used for sufficiency probes, where the claim is about reachability).
LinearProbe train_probe_best(const std::vector<Vec>& x, const std::vector<int>& y, int n_classes,
                             int iters = 400, double lr = 0.5);
/// Same, but starting from an existing solution (used to warm-start the
/// concatenated-feature probe from its better half).
LinearProbe train_probe_from(LinearProbe init, const std::vector<Vec>& x,
                             const std::vector<int>& y, int n_classes, int iters = 400,
                             double lr = 0.5, bool keep_best_iterate = false);
double probe_accuracy(const LinearProbe& probe, const std::vector<Vec>& x,
                      const std::vector<int>& y);

std::vector<Vec> concat_features(const std::vector<Vec>& a, const std::vector<Vec>& b);

/// Testable restatement of the dual-pathway design conditions: probe the
/// frozen representations for fine and coarse recoverability.
struct ProbeReport {
  double z_fine_acc = 0.0;       // fine label from z
  double h_fine_acc = 0.0;       // fine label from h
  double hz_coarse_acc = 0.0;    // coarse label from [h ∘ z]
  double h_coarse_acc = 0.0;     // coarse label from h alone
  double z_coarse_acc = 0.0;     // coarse label from z alone
  double fine_chance = 0.0;      // 1 / |fine classes|
};

/// Probes are trained on the train-split representations and scored on the
/// test split. Coarse labels for the probe targets are derived from the
/// gold fine labels per sentence via the aggregation oracle.
ProbeReport probe_conditions(const StudentModel& model, const FineDataset& train,
                             const FineDataset& test);

}  // namespace dpl
