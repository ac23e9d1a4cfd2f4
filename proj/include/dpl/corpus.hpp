#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpl/common.hpp"

namespace dpl {

// ---------------------------------------------------------------------------
// Label spaces. Class names map to indices by declared order, so index
// semantics stay stable across runs and serialized labels stay readable.
// ---------------------------------------------------------------------------

struct LabelSpace {
  std::vector<std::string> classes;

  int size() const { return static_cast<int>(classes.size()); }
  int index_of(const std::string& name) const;  // -1 when unknown
  const std::string& name_of(int idx) const;
  bool operator==(const LabelSpace&) const = default;

  void validate() const;  // >=2 classes, unique names
};

LabelSpace default_fine_space();    // negative, neutral, positive
LabelSpace default_coarse_space();  // negative, positive

// ---------------------------------------------------------------------------
// Core records.
// ---------------------------------------------------------------------------

struct Sentence {
  std::string id;
  std::vector<std::string> tokens;

  void validate() const;  // non-empty, tokens free of whitespace
};

/// Binary aspect mask over a sentence. Marked positions are contiguous and
/// cover at least one token; `surface` is the marked token substring.
struct AspectSpan {
  std::vector<uint8_t> mask;
  std::string surface;

  size_t first_marked() const;
  size_t marked_count() const;
};

AspectSpan make_span(const std::vector<std::string>& tokens, std::vector<uint8_t> mask);
AspectSpan make_span_range(const std::vector<std::string>& tokens, size_t start, size_t len);

struct FineExample {
  Sentence sentence;
  AspectSpan span;
  int fine_label = -1;
  bool fine_is_pseudo = false;
};

struct CoarseExample {
  Sentence sentence;
  int coarse_label = -1;
  bool coarse_is_pseudo = false;
};

/// One (sentence, span) row of a coarse dataset after aspect extraction;
/// the sentence-level label is repeated across its spans.
struct SpannedCoarseExample {
  Sentence sentence;
  AspectSpan span;
  int coarse_label = -1;
  bool coarse_is_pseudo = false;
};

enum class Provenance { none, pseudo_fine, pseudo_coarse };

const char* provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& s);

/// Row of the merged dual-granularity dataset: both labels present, with a
/// record of which one was generated by a teacher.
struct MergedExample {
  Sentence sentence;
  AspectSpan span;
  int fine_label = -1;
  int coarse_label = -1;
  Provenance pseudo = Provenance::none;
};

enum class Split { train, test, unspecified };

// ---------------------------------------------------------------------------
// Dataset: a homogeneous list of examples plus its label spaces.
// Immutable after load by convention; loading validates every invariant.
// ---------------------------------------------------------------------------

template <typename Example>
struct Dataset {
  std::vector<Example> rows;
  LabelSpace fine_space = default_fine_space();
  LabelSpace coarse_space = default_coarse_space();
  Split split = Split::unspecified;

  size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
};

using FineDataset = Dataset<FineExample>;
using CoarseDataset = Dataset<CoarseExample>;
using SpannedCoarseDataset = Dataset<SpannedCoarseExample>;
using MergedDataset = Dataset<MergedExample>;

/// Full invariant check: per-row validity plus dataset-level uniqueness
/// (coarse: sentence id; span-carrying kinds: (id, mask) pair).
void validate_dataset(const FineDataset&);
void validate_dataset(const CoarseDataset&);
void validate_dataset(const SpannedCoarseDataset&);
void validate_dataset(const MergedDataset&);

// ---------------------------------------------------------------------------
// JSONL serialization. One JSON object per line, deterministic field order.
// Readers fail on the first invalid row and report its line number.
// ---------------------------------------------------------------------------

FineDataset read_fine_jsonl(const std::string& path, LabelSpace fine = default_fine_space());
CoarseDataset read_coarse_jsonl(const std::string& path, LabelSpace coarse = default_coarse_space());
SpannedCoarseDataset read_spanned_jsonl(const std::string& path,
                                        LabelSpace coarse = default_coarse_space());
MergedDataset read_merged_jsonl(const std::string& path, LabelSpace fine = default_fine_space(),
                                LabelSpace coarse = default_coarse_space());

void write_jsonl(const FineDataset&, const std::string& path);
void write_jsonl(const CoarseDataset&, const std::string& path);
void write_jsonl(const SpannedCoarseDataset&, const std::string& path);
void write_jsonl(const MergedDataset&, const std::string& path);

/// D' = D'_fine ∪ D'_coarse. Label spaces must agree; (id, mask) pairs must
/// not collide across the two sides. Row order: fine side then coarse side.
MergedDataset merge_datasets(const MergedDataset& fine_aug, const MergedDataset& coarse_aug);

}  // namespace dpl
