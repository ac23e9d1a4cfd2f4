#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "dpl/corpus.hpp"
#include "dpl/synthgen.hpp"
#include "test_util.hpp"

using namespace dpl;

namespace {

Sentence sent(const std::string& id, std::vector<std::string> tokens) {
  return Sentence{id, std::move(tokens)};
}

MergedExample merged_row(const std::string& id, std::vector<std::string> tokens, size_t span_at,
                         int fine, int coarse, Provenance p) {
  MergedExample ex;
  ex.sentence = sent(id, std::move(tokens));
  ex.span = make_span_range(ex.sentence.tokens, span_at, 1);
  ex.fine_label = fine;
  ex.coarse_label = coarse;
  ex.pseudo = p;
  return ex;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("aspect span construction and invariants") {
  std::vector<std::string> tokens = {"the", "wine", "list", "was", "great"};
  AspectSpan span = make_span(tokens, {0, 1, 1, 0, 0});
  CHECK(span.surface == "wine list");
  CHECK(span.first_marked() == 1);
  CHECK(span.marked_count() == 2);

  CHECK_THROWS_AS(make_span(tokens, {0, 0, 0, 0, 0}), DplError);  // no marked token
  CHECK_THROWS_AS(make_span(tokens, {1, 0, 1, 0, 0}), DplError);  // non-contiguous
  CHECK_THROWS_AS(make_span(tokens, {1, 0, 0, 0}), DplError);     // length mismatch
  CHECK_THROWS_AS(make_span(tokens, {0, 2, 0, 0, 0}), DplError);  // non-binary
}

TEST_CASE("sentence validation rejects whitespace tokens") {
  CHECK_THROWS_AS(sent("s1", {"ok", "bad token"}).validate(), DplError);
  CHECK_THROWS_AS(sent("s1", {}).validate(), DplError);
  CHECK_THROWS_AS(sent("", {"ok"}).validate(), DplError);
  CHECK_NOTHROW(sent("s1", {"ok", "fine"}).validate());
}

TEST_CASE("coarse jsonl schema case") {
  TempDir tmp;
  spit(tmp.file("c.jsonl"), R"({"id":"s1","tokens":["great","food"],"coarse_label":"positive"})"
                            "\n");
  CoarseDataset ds = read_coarse_jsonl(tmp.file("c.jsonl"));
  REQUIRE(ds.size() == 1);
  CHECK(ds.rows[0].sentence.id == "s1");
  CHECK(ds.rows[0].coarse_label == ds.coarse_space.index_of("positive"));
  CHECK_FALSE(ds.rows[0].coarse_is_pseudo);
}

TEST_CASE("mask length mismatch reports the line number") {
  TempDir tmp;
  std::string good = R"({"id":"a","tokens":["x","y"],"mask":[0,1],"fine_label":"neutral"})";
  std::string bad =
      R"({"id":"b","tokens":["a","b","c","d","e","f"],"mask":[1,0,0,0,0],"fine_label":"positive"})";
  spit(tmp.file("f.jsonl"), good + "\n" + bad + "\n");
  try {
    read_fine_jsonl(tmp.file("f.jsonl"));
    FAIL("expected a length-mismatch error");
  } catch (const DplError& e) {
    std::string msg = e.what();
    CHECK(msg.find(":2:") != std::string::npos);
    CHECK(msg.find("mask length") != std::string::npos);
  }
}

TEST_CASE("missing file, unknown class, unknown field") {
  TempDir tmp;
  CHECK_THROWS_AS(read_fine_jsonl(tmp.file("absent.jsonl")), DplError);
  spit(tmp.file("bad.jsonl"), R"({"id":"a","tokens":["x"],"coarse_label":"meh"})"
                              "\n");
  CHECK_THROWS_AS(read_coarse_jsonl(tmp.file("bad.jsonl")), DplError);
  spit(tmp.file("rows.jsonl"), R"({"id":"a","tokens":["x"],"coarse_label":"positive","oops":1})"
                               "\n");
  CHECK_THROWS_AS(read_coarse_jsonl(tmp.file("rows.jsonl")), DplError);
}

TEST_CASE("write then read is the identity") {
  TempDir tmp;
  Lexicon lex = build_lexicon(11, SizeProfile::small);
  GenConfig gen;
  gen.n_sentences = 40;
  gen.aspects_min = 1;
  gen.aspects_max = 2;
  gen.seed = 5;

  FineDataset fine = generate_fine(gen, lex);
  write_jsonl(fine, tmp.file("f.jsonl"));
  FineDataset fine2 = read_fine_jsonl(tmp.file("f.jsonl"));
  REQUIRE(fine2.size() == fine.size());
  for (size_t i = 0; i < fine.size(); ++i) {
    CHECK(fine2.rows[i].sentence.id == fine.rows[i].sentence.id);
    CHECK(fine2.rows[i].sentence.tokens == fine.rows[i].sentence.tokens);
    CHECK(fine2.rows[i].span.mask == fine.rows[i].span.mask);
    CHECK(fine2.rows[i].span.surface == fine.rows[i].span.surface);
    CHECK(fine2.rows[i].fine_label == fine.rows[i].fine_label);
    CHECK(fine2.rows[i].fine_is_pseudo == fine.rows[i].fine_is_pseudo);
  }

  // Second write of the reloaded dataset is byte-identical.
  write_jsonl(fine2, tmp.file("f2.jsonl"));
  CHECK(slurp(tmp.file("f.jsonl")) == slurp(tmp.file("f2.jsonl")));
}

TEST_CASE("write determinism and line counts") {
  TempDir tmp;
  FineDataset empty;
  write_jsonl(empty, tmp.file("empty.jsonl"));
  CHECK(slurp(tmp.file("empty.jsonl")).empty());

  MergedDataset three;
  three.rows.push_back(merged_row("a", {"great", "food"}, 1, 2, 1, Provenance::pseudo_coarse));
  three.rows.push_back(merged_row("b", {"awful", "soup"}, 1, 0, 0, Provenance::pseudo_coarse));
  three.rows.push_back(merged_row("c", {"plain", "bread"}, 1, 1, 1, Provenance::pseudo_fine));
  write_jsonl(three, tmp.file("m1.jsonl"));
  write_jsonl(three, tmp.file("m2.jsonl"));
  std::string text = slurp(tmp.file("m1.jsonl"));
  CHECK(text == slurp(tmp.file("m2.jsonl")));
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);

  MergedDataset back = read_merged_jsonl(tmp.file("m1.jsonl"));
  REQUIRE(back.size() == 3);
  CHECK(back.rows[0].pseudo == Provenance::pseudo_coarse);
  CHECK(back.rows[2].pseudo == Provenance::pseudo_fine);
}

TEST_CASE("merge cardinality") {
  MergedDataset fine_aug, coarse_aug;
  for (int i = 0; i < 10; ++i)
    fine_aug.rows.push_back(
        merged_row("f" + std::to_string(i), {"great", "food"}, 1, 2, 1, Provenance::pseudo_coarse));
  for (int i = 0; i < 25; ++i)
    coarse_aug.rows.push_back(
        merged_row("c" + std::to_string(i), {"awful", "soup"}, 1, 0, 0, Provenance::pseudo_fine));

  MergedDataset merged = merge_datasets(fine_aug, coarse_aug);
  CHECK(merged.size() == 35);

  // Union with an empty coarse side is the fine side.
  MergedDataset empty;
  MergedDataset same = merge_datasets(fine_aug, empty);
  CHECK(same.size() == fine_aug.size());

  // Merge preserves rows and their provenance in order.
  for (size_t i = 0; i < fine_aug.size(); ++i) {
    CHECK(merged.rows[i].sentence.id == fine_aug.rows[i].sentence.id);
    CHECK(merged.rows[i].pseudo == Provenance::pseudo_coarse);
  }
  for (size_t i = 0; i < coarse_aug.size(); ++i)
    CHECK(merged.rows[fine_aug.size() + i].pseudo == Provenance::pseudo_fine);
}

TEST_CASE("merge rejects label-space mismatch and duplicate rows") {
  MergedDataset a, b;
  a.rows.push_back(merged_row("x", {"great", "food"}, 1, 2, 1, Provenance::pseudo_coarse));
  b.fine_space = LabelSpace{{"neg", "pos"}};
  CHECK_THROWS_AS(merge_datasets(a, b), DplError);

  MergedDataset c;
  c.rows.push_back(merged_row("x", {"great", "food"}, 1, 2, 1, Provenance::pseudo_fine));
  CHECK_THROWS_AS(merge_datasets(a, c), DplError);  // same (id, mask) on both sides
}

TEST_CASE("multi-aspect sentences expand to m rows sharing the coarse label") {
  // Hand-enumerated 5-sentence fixture: aspect counts 3, 1, 2, 1, 1 -> 8 rows.
  MergedDataset coarse_aug;
  auto add = [&](const std::string& id, std::vector<std::string> tokens,
                 std::vector<size_t> spans, int coarse) {
    for (size_t at : spans) {
      MergedExample ex;
      ex.sentence = sent(id, tokens);
      ex.span = make_span_range(tokens, at, 1);
      ex.fine_label = 1;
      ex.coarse_label = coarse;
      ex.pseudo = Provenance::pseudo_fine;
      coarse_aug.rows.push_back(std::move(ex));
    }
  };
  add("c0", {"great", "food", "awful", "service", "plain", "bread"}, {1, 3, 5}, 0);
  add("c1", {"great", "soup"}, {1}, 1);
  add("c2", {"nice", "staff", "bad", "menu"}, {1, 3}, 0);
  add("c3", {"fine", "patio"}, {1}, 1);
  add("c4", {"ok", "decor"}, {1}, 1);

  MergedDataset merged = merge_datasets(MergedDataset{}, coarse_aug);
  CHECK(merged.size() == 8);

  std::map<std::string, int> rows_per_id;
  std::map<std::string, std::set<int>> labels_per_id;
  for (const auto& r : merged.rows) {
    rows_per_id[r.sentence.id]++;
    labels_per_id[r.sentence.id].insert(r.coarse_label);
  }
  CHECK(rows_per_id["c0"] == 3);
  CHECK(rows_per_id["c1"] == 1);
  CHECK(rows_per_id["c2"] == 2);
  for (const auto& [id, labels] : labels_per_id) CHECK(labels.size() == 1);
}

TEST_CASE("label space helpers") {
  LabelSpace fine = default_fine_space();
  CHECK(fine.index_of("negative") == 0);
  CHECK(fine.index_of("neutral") == 1);
  CHECK(fine.index_of("positive") == 2);
  CHECK(fine.index_of("bogus") == -1);
  CHECK_THROWS_AS(LabelSpace{{"only"}}.validate(), DplError);
  CHECK_THROWS_AS((LabelSpace{{"a", "a"}}).validate(), DplError);
}

}  // TEST_SUITE
