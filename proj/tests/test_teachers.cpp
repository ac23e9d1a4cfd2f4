#include <cmath>
#include <cstring>
#include <map>
#include <set>

#include "doctest.h"
#include "dpl/aspectex.hpp"
#include "dpl/teachers.hpp"
#include "test_util.hpp"

using namespace dpl;

namespace {

RunConfig quick_config(int epochs = 10, double lr = 0.3) {
  RunConfig cfg;
  cfg.epochs = epochs;
  cfg.learning_rate = lr;
  cfg.batch_size = 16;
  cfg.embed_dim = 16;
  cfg.hidden_dim = 24;
  cfg.predictor_hidden = 16;
  cfg.seed = 11;
  return cfg;
}

FineDataset small_fine(size_t n, uint64_t seed, double noise = 0.0) {
  Lexicon lex = build_lexicon(seed, SizeProfile::small);
  GenConfig gen;
  gen.n_sentences = n;
  gen.aspects_min = 1;
  gen.aspects_max = 1;
  gen.label_noise = noise;
  gen.seed = seed;
  return generate_fine(gen, lex);
}

CoarseDataset small_coarse(size_t n, uint64_t seed) {
  Lexicon lex = build_lexicon(seed, SizeProfile::small);
  GenConfig gen;
  gen.n_sentences = n;
  gen.aspects_min = 1;
  gen.aspects_max = 2;
  gen.seed = seed + 1;
  return generate_coarse(gen, lex);
}

bool same_params(const EncoderParams& a, const EncoderParams& b) {
  auto ta = a.tensors();
  auto tb = b.tensors();
  for (size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].size != tb[i].size) return false;
    if (std::memcmp(ta[i].data, tb[i].data, sizeof(double) * ta[i].size) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("teachers") {

TEST_CASE("untrained teachers start near the uniform-logit loss") {
  // A microscopic learning rate keeps the first epoch's recorded loss at the
  // initialization point.
  RunConfig cfg = quick_config(1, 1e-12);

  TeacherTrainResult fine = train_fine_teacher(small_fine(64, 3), nullptr, cfg);
  CHECK(std::abs(fine.epoch_losses.front() - std::log(3.0)) < 0.05);

  TeacherTrainResult coarse = train_coarse_teacher(small_coarse(64, 3), nullptr, cfg);
  CHECK(std::abs(coarse.epoch_losses.front() - std::log(2.0)) < 0.05);
}

TEST_CASE("a single example is memorized") {
  FineDataset ds = small_fine(1, 5);
  ds.rows.resize(1);
  RunConfig cfg = quick_config(300, 0.5);
  TeacherTrainResult result = train_fine_teacher(ds, nullptr, cfg);
  CHECK(result.epoch_losses.back() < 0.01);
}

TEST_CASE("training is deterministic under a fixed seed") {
  FineDataset ds = small_fine(50, 7);
  RunConfig cfg = quick_config(5);
  TeacherTrainResult a = train_fine_teacher(ds, nullptr, cfg);
  TeacherTrainResult b = train_fine_teacher(ds, nullptr, cfg);
  CHECK(a.epoch_losses == b.epoch_losses);
  CHECK(same_params(a.model.enc, b.model.enc));
}

TEST_CASE("empty training data is rejected") {
  RunConfig cfg = quick_config(1);
  CHECK_THROWS_AS(train_fine_teacher(FineDataset{}, nullptr, cfg), DplError);
  CHECK_THROWS_AS(train_coarse_teacher(CoarseDataset{}, nullptr, cfg), DplError);
}

TEST_CASE("noise-free learnability, calibrated by the lookup oracle") {
  Lexicon lex = build_lexicon(19, SizeProfile::small);
  GenConfig gen;
  gen.n_sentences = 300;
  gen.aspects_min = 1;
  gen.aspects_max = 1;
  gen.seed = 19;
  FineDataset train = generate_fine(gen, lex);
  gen.n_sentences = 100;
  gen.seed = 20;
  gen.id_prefix = "t";
  FineDataset test = generate_fine(gen, lex);

  // The lookup oracle proves the labels are recoverable from the text.
  for (const auto& row : test.rows)
    CHECK(lookup_fine_label(row.sentence, row.span, lex, test.fine_space) == row.fine_label);

  RunConfig cfg = quick_config(25, 0.4);
  TeacherTrainResult result = train_fine_teacher(train, &test, cfg);
  REQUIRE(result.heldout_accuracy.has_value());
  CHECK(*result.heldout_accuracy >= 0.90);
}

TEST_CASE("pseudo labels on the coarse side preserve gold labels and the teacher") {
  Lexicon lex = build_lexicon(23, SizeProfile::small);
  TeacherTrainResult teacher = train_fine_teacher(small_fine(60, 23), nullptr, quick_config(8));

  GenConfig gen;
  gen.n_sentences = 40;
  gen.aspects_min = 1;
  gen.aspects_max = 3;
  gen.seed = 24;
  gen.id_prefix = "c";
  CoarseDataset coarse = generate_coarse(gen, lex);
  SpannedCoarseDataset spans = filter_coarse_dataset(coarse, lex);

  EncoderParams before = teacher.model.enc;
  MergedDataset merged = pseudo_label_coarse_side(teacher.model, spans);
  CHECK(same_params(before, teacher.model.enc));  // inference is pure

  CHECK(merged.size() == spans.size());  // no filtering here
  std::map<std::string, int> gold;
  for (const auto& r : coarse.rows) gold[r.sentence.id] = r.coarse_label;
  for (const auto& r : merged.rows) {
    CHECK(r.pseudo == Provenance::pseudo_fine);
    CHECK(r.coarse_label == gold.at(r.sentence.id));
    CHECK(r.fine_label >= 0);
    CHECK(r.fine_label < merged.fine_space.size());
  }
}

TEST_CASE("a frozen uniform teacher breaks argmax ties toward class 0") {
  TeacherTrainResult teacher = train_fine_teacher(small_fine(30, 29), nullptr, quick_config(2));
  teacher.model.head.w2.setZero();
  teacher.model.head.b2.setZero();  // logits identically zero
  Sentence s{"x", {"the", "food"}};
  AspectSpan span = make_span_range(s.tokens, 1, 1);
  CHECK(teacher.model.predict(s, &span) == 0);
}

TEST_CASE("fine-side pseudo labels are per-sentence") {
  Lexicon lex = build_lexicon(31, SizeProfile::small);
  TeacherTrainResult teacher =
      train_coarse_teacher(small_coarse(60, 31), nullptr, quick_config(8));

  GenConfig gen;
  gen.n_sentences = 30;
  gen.aspects_min = 2;
  gen.aspects_max = 3;
  gen.seed = 33;
  FineDataset fine = generate_fine(gen, lex);

  MergedDataset merged = pseudo_label_fine_side(teacher.model, fine);
  CHECK(merged.size() == fine.size());
  std::map<std::string, std::set<int>> pseudo_by_sentence;
  for (const auto& r : merged.rows) {
    CHECK(r.pseudo == Provenance::pseudo_coarse);
    pseudo_by_sentence[r.sentence.id].insert(r.coarse_label);
  }
  for (const auto& [id, labels] : pseudo_by_sentence) CHECK(labels.size() == 1);

  MergedDataset empty = pseudo_label_fine_side(teacher.model, FineDataset{});
  CHECK(empty.empty());
}

TEST_CASE("teacher kind mismatches are rejected") {
  TeacherTrainResult fine_teacher =
      train_fine_teacher(small_fine(30, 37), nullptr, quick_config(2));
  TeacherTrainResult coarse_teacher =
      train_coarse_teacher(small_coarse(30, 37), nullptr, quick_config(2));

  FineDataset fine = small_fine(10, 38);
  SpannedCoarseDataset spans;
  CHECK_THROWS_AS(pseudo_label_fine_side(fine_teacher.model, fine), DplError);
  CHECK_THROWS_AS(pseudo_label_coarse_side(coarse_teacher.model, spans), DplError);
}

TEST_CASE("teacher checkpoints round-trip bit-exactly") {
  TempDir tmp;
  TeacherTrainResult teacher = train_fine_teacher(small_fine(40, 41), nullptr, quick_config(4));
  save_teacher_checkpoint(tmp.file("t.ckpt"), teacher.model, "cfg123");
  TeacherCheckpoint back = load_teacher_checkpoint(tmp.file("t.ckpt"));

  CHECK(back.config_hash == "cfg123");
  CHECK(back.model.kind == TeacherKind::fine);
  CHECK(back.model.vocab.tokens == teacher.model.vocab.tokens);
  CHECK(back.model.label_space == teacher.model.label_space);
  CHECK(same_params(back.model.enc, teacher.model.enc));

  // Same predictions after reload.
  Sentence s{"x", {"the", "food"}};
  AspectSpan span = make_span_range(s.tokens, 1, 1);
  CHECK((back.model.predict_dist(s, &span) - teacher.model.predict_dist(s, &span))
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

}  // TEST_SUITE
