#include "dpl/teachers.hpp"

#include <cmath>

#include "dpl/checkpoint.hpp"
#include "dpl/evalkit.hpp"
#include "json.hpp"

namespace dpl {

using ojson = nlohmann::ordered_json;

const char* teacher_kind_name(TeacherKind k) {
  return k == TeacherKind::fine ? "fine" : "coarse";
}

TeacherKind teacher_kind_from_name(const std::string& s) {
  if (s == "fine") return TeacherKind::fine;
  if (s == "coarse") return TeacherKind::coarse;
  throw DplError("unknown teacher kind: '" + s + "'");
}

Vec TeacherModel::predict_dist(const Sentence& sentence, const AspectSpan* span) const {
  if (kind == TeacherKind::fine && !span)
    throw DplError("fine teacher needs an aspect span");
  std::vector<int> ids;
  ids.reserve(sentence.tokens.size());
  for (const auto& t : sentence.tokens) ids.push_back(vocab.id_of(t));
  std::vector<uint8_t> mask;
  if (kind == TeacherKind::fine) {
    if (span->mask.size() != sentence.tokens.size())
      throw DplError("span mask length mismatch for sentence '" + sentence.id + "'");
    mask = span->mask;
  } else {
    mask.assign(sentence.tokens.size(), 0);
  }
  return softmax(head.forward(encode(enc, ids, mask)));
}

int TeacherModel::predict(const Sentence& sentence, const AspectSpan* span) const {
  return argmax(predict_dist(sentence, span));
}

// ---------------------------------------------------------------------------
// Training. A teacher is trained as a single-pathway student: wrap the
// encoder and predictor in a StudentModel adapter and reuse loss_fine.
// ---------------------------------------------------------------------------

namespace {

struct SinglePathRow {
  std::vector<int> ids;
  std::vector<uint8_t> mask;
  int label;
};

TeacherTrainResult train_single_path(TeacherKind kind, std::vector<std::vector<std::string>> texts,
                                     std::vector<std::vector<uint8_t>> masks,
                                     std::vector<int> labels, LabelSpace space,
                                     const std::vector<ModelInput>* dev_rows,
                                     const std::vector<int>* dev_labels,
                                     const RunConfig& config) {
  config.validate();
  if (labels.empty()) throw DplError("teacher training set is empty");
  space.validate();

  Vocab vocab = Vocab::build(texts);
  // Adapter: the teacher head sits in the fine slot; the coarse slot is an
  // unused placeholder.
  Rng init_rng(derive_seed(config.seed, "teacher-init"));
  StudentModel adapter;
  adapter.vocab = vocab;
  adapter.fine_space = space;
  adapter.coarse_space = default_coarse_space();
  adapter.enc = EncoderParams::init(vocab.size(), config.embed_dim, config.hidden_dim, init_rng);
  adapter.fine_head =
      Mlp::init(config.embed_dim, config.predictor_hidden, space.size(), init_rng);
  adapter.coarse_head = Mlp::init(1, 1, 2, init_rng);

  std::vector<ModelInput> rows;
  rows.reserve(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    ModelInput in;
    in.token_ids.reserve(texts[i].size());
    for (const auto& t : texts[i]) in.token_ids.push_back(vocab.id_of(t));
    in.mask = std::move(masks[i]);
    in.fine_label = labels[i];
    rows.push_back(std::move(in));
  }

  auto params = adapter.enc.tensors("enc.");
  for (auto& t : adapter.fine_head.tensors("fine_head.")) params.push_back(t);
  StudentGrad grad = StudentGrad::zeros_like(adapter);
  auto grads = grad.enc.tensors("enc.");
  for (auto& t : grad.fine_head.tensors("fine_head.")) grads.push_back(t);
  auto opt = make_optimizer(config);

  Rng shuffle_rng(derive_seed(config.seed, "teacher-loader"));
  std::vector<size_t> order(rows.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  TeacherTrainResult result;
  const size_t batch = static_cast<size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order, shuffle_rng);
    double epoch_loss = 0.0;
    size_t n_batches = 0;
    for (size_t at = 0; at < order.size(); at += batch) {
      std::vector<ModelInput> chunk;
      for (size_t i = at; i < std::min(at + batch, order.size()); ++i)
        chunk.push_back(rows[order[i]]);
      grad.set_zero();
      epoch_loss += loss_fine(Batch(chunk), adapter, &grad, 1.0);
      ++n_batches;
      opt->step(params, grads, config.learning_rate);
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(n_batches));
  }

  result.model.kind = kind;
  result.model.vocab = std::move(adapter.vocab);
  result.model.label_space = std::move(adapter.fine_space);
  result.model.enc = std::move(adapter.enc);
  result.model.head = std::move(adapter.fine_head);

  if (dev_rows && dev_labels && !dev_rows->empty()) {
    std::vector<int> pred;
    pred.reserve(dev_rows->size());
    for (const auto& in : *dev_rows) {
      // Dev rows were tokenized with the training vocab already.
      pred.push_back(argmax(result.model.head.forward(encode(result.model.enc, in.token_ids,
                                                             in.mask))));
    }
    result.heldout_accuracy = accuracy(pred, *dev_labels);
  }
  return result;
}

}  // namespace

TeacherTrainResult train_fine_teacher(const FineDataset& train, const FineDataset* dev,
                                      const RunConfig& config) {
  if (train.empty()) throw DplError("train_fine_teacher: empty dataset");
  std::vector<std::vector<std::string>> texts;
  std::vector<std::vector<uint8_t>> masks;
  std::vector<int> labels;
  for (const auto& row : train.rows) {
    texts.push_back(row.sentence.tokens);
    masks.push_back(row.span.mask);
    labels.push_back(row.fine_label);
  }

  Vocab vocab = Vocab::build(texts);
  std::vector<ModelInput> dev_rows;
  std::vector<int> dev_labels;
  if (dev) {
    for (const auto& row : dev->rows) {
      dev_rows.push_back(make_input(vocab, row.sentence, row.span, row.fine_label, -1));
      dev_labels.push_back(row.fine_label);
    }
  }
  return train_single_path(TeacherKind::fine, std::move(texts), std::move(masks),
                           std::move(labels), train.fine_space, dev ? &dev_rows : nullptr,
                           dev ? &dev_labels : nullptr, config);
}

TeacherTrainResult train_coarse_teacher(const CoarseDataset& train, const CoarseDataset* dev,
                                        const RunConfig& config) {
  if (train.empty()) throw DplError("train_coarse_teacher: empty dataset");
  std::vector<std::vector<std::string>> texts;
  std::vector<std::vector<uint8_t>> masks;
  std::vector<int> labels;
  for (const auto& row : train.rows) {
    texts.push_back(row.sentence.tokens);
    masks.emplace_back(row.sentence.tokens.size(), 0);
    labels.push_back(row.coarse_label);
  }

  Vocab vocab = Vocab::build(texts);
  std::vector<ModelInput> dev_rows;
  std::vector<int> dev_labels;
  if (dev) {
    for (const auto& row : dev->rows) {
      ModelInput in;
      for (const auto& t : row.sentence.tokens) in.token_ids.push_back(vocab.id_of(t));
      in.mask.assign(row.sentence.tokens.size(), 0);
      dev_rows.push_back(std::move(in));
      dev_labels.push_back(row.coarse_label);
    }
  }
  return train_single_path(TeacherKind::coarse, std::move(texts), std::move(masks),
                           std::move(labels), train.coarse_space, dev ? &dev_rows : nullptr,
                           dev ? &dev_labels : nullptr, config);
}

// ---------------------------------------------------------------------------
// Pseudo-label generation (pure inference).
// ---------------------------------------------------------------------------

MergedDataset pseudo_label_coarse_side(const TeacherModel& fine_teacher,
                                       const SpannedCoarseDataset& data) {
  if (fine_teacher.kind != TeacherKind::fine)
    throw DplError("pseudo_label_coarse_side needs a fine teacher");

  MergedDataset out;
  out.fine_space = fine_teacher.label_space;
  out.coarse_space = data.coarse_space;
  out.split = data.split;
  out.rows.reserve(data.size());
  for (const auto& row : data.rows) {
    MergedExample ex;
    ex.sentence = row.sentence;
    ex.span = row.span;
    ex.coarse_label = row.coarse_label;
    ex.fine_label = fine_teacher.predict(row.sentence, &row.span);
    ex.pseudo = Provenance::pseudo_fine;
    out.rows.push_back(std::move(ex));
  }
  validate_dataset(out);
  return out;
}

MergedDataset pseudo_label_fine_side(const TeacherModel& coarse_teacher, const FineDataset& data) {
  if (coarse_teacher.kind != TeacherKind::coarse)
    throw DplError("pseudo_label_fine_side needs a coarse teacher");

  MergedDataset out;
  out.fine_space = data.fine_space;
  out.coarse_space = coarse_teacher.label_space;
  out.split = data.split;
  out.rows.reserve(data.size());
  for (const auto& row : data.rows) {
    MergedExample ex;
    ex.sentence = row.sentence;
    ex.span = row.span;
    ex.fine_label = row.fine_label;
    ex.coarse_label = coarse_teacher.predict(row.sentence, nullptr);
    ex.pseudo = Provenance::pseudo_coarse;
    out.rows.push_back(std::move(ex));
  }
  validate_dataset(out);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

std::vector<ConstTensorView> teacher_tensors(const TeacherModel& m) {
  auto out = m.enc.tensors("enc.");
  for (auto& t : m.head.tensors("head.")) out.push_back(t);
  return out;
}

std::vector<TensorView> teacher_tensors(TeacherModel& m) {
  auto out = m.enc.tensors("enc.");
  for (auto& t : m.head.tensors("head.")) out.push_back(t);
  return out;
}

}  // namespace

void save_teacher_checkpoint(const std::string& path, const TeacherModel& model,
                             const std::string& config_hash) {
  ojson meta;
  meta["format"] = "dpl-teacher";
  meta["tool_version"] = kVersion;
  meta["config_hash"] = config_hash;
  meta["kind"] = teacher_kind_name(model.kind);
  ojson space = ojson::array();
  for (const auto& c : model.label_space.classes) space.push_back(c);
  meta["label_space"] = std::move(space);
  meta["vocab"] = model.vocab.tokens;
  ojson dims;
  dims["embed_dim"] = model.enc.dim();
  dims["hidden_dim"] = model.enc.hidden();
  dims["predictor_hidden"] = static_cast<int>(model.head.w1.rows());
  meta["dims"] = std::move(dims);
  save_checkpoint_file(path, meta, teacher_tensors(model));
}

TeacherCheckpoint load_teacher_checkpoint(const std::string& path) {
  CheckpointData ckpt = load_checkpoint_file(path);
  if (ckpt.meta.value("format", "") != "dpl-teacher")
    throw DplError("not a teacher checkpoint: " + path);

  TeacherCheckpoint out;
  out.config_hash = ckpt.meta.value("config_hash", "");
  out.model.kind = teacher_kind_from_name(ckpt.meta.at("kind").get<std::string>());
  out.model.vocab = Vocab::from_tokens(ckpt.meta.at("vocab").get<std::vector<std::string>>());
  for (const auto& c : ckpt.meta.at("label_space"))
    out.model.label_space.classes.push_back(c.get<std::string>());
  out.model.label_space.validate();

  int d = ckpt.meta.at("dims").at("embed_dim").get<int>();
  int hidden = ckpt.meta.at("dims").at("hidden_dim").get<int>();
  int ph = ckpt.meta.at("dims").at("predictor_hidden").get<int>();
  Rng rng(0);
  out.model.enc = EncoderParams::init(out.model.vocab.size(), d, hidden, rng);
  out.model.head = Mlp::init(d, ph, out.model.label_space.size(), rng);

  for (auto& view : teacher_tensors(out.model)) {
    const auto& data = ckpt.tensor(view.name);
    if (static_cast<Eigen::Index>(data.size()) != view.size)
      throw DplError("checkpoint tensor '" + view.name + "' has unexpected size");
    std::copy(data.begin(), data.end(), view.data);
  }
  return out;
}

}  // namespace dpl
