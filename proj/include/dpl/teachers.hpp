#pragma once

#include <optional>

#include "dpl/corpus.hpp"
#include "dpl/model.hpp"
#include "dpl/trainer.hpp"

namespace dpl {

enum class TeacherKind { fine, coarse };

const char* teacher_kind_name(TeacherKind k);
TeacherKind teacher_kind_from_name(const std::string& s);

/// A teacher is a single-pathway model: the shared encoder plus one predictor.
/// The fine teacher consumes (x, t_i); the coarse teacher consumes x alone
/// (encoded with an all-zero mask).
struct TeacherModel {
  TeacherKind kind = TeacherKind::fine;
  Vocab vocab;
  LabelSpace label_space;
  EncoderParams enc;
  Mlp head;

  Vec predict_dist(const Sentence& sentence, const AspectSpan* span) const;
  int predict(const Sentence& sentence, const AspectSpan* span) const;
};

struct TeacherTrainResult {
  TeacherModel model;
  std::vector<double> epoch_losses;
  std::optional<double> heldout_accuracy;
};

TeacherTrainResult train_fine_teacher(const FineDataset& train, const FineDataset* dev,
                                      const RunConfig& config);
TeacherTrainResult train_coarse_teacher(const CoarseDataset& train, const CoarseDataset* dev,
                                        const RunConfig& config);

/// D'_coarse: fine pseudo labels from the fine teacher over coarse rows with
/// spans; the gold coarse label is preserved on every row.
MergedDataset pseudo_label_coarse_side(const TeacherModel& fine_teacher,
                                       const SpannedCoarseDataset& data);

/// D'_fine: sentence-level pseudo labels from the coarse teacher over gold
/// fine rows; all rows of one sentence share the same pseudo label.
MergedDataset pseudo_label_fine_side(const TeacherModel& coarse_teacher, const FineDataset& data);

struct TeacherCheckpoint {
  TeacherModel model;
  std::string config_hash;
};

void save_teacher_checkpoint(const std::string& path, const TeacherModel& model,
                             const std::string& config_hash);
TeacherCheckpoint load_teacher_checkpoint(const std::string& path);

}  // namespace dpl
