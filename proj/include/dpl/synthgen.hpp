#pragma once

#include <map>
#include <string>
#include <vector>

#include "dpl/corpus.hpp"

namespace dpl {

// ---------------------------------------------------------------------------
// Synthetic dual-granularity sentiment corpus. Sentences are template token
// sequences, not natural language: every aspect noun is immediately preceded
// by a polarity-bearing modifier, so test oracles can re-derive every label
// from the text alone.
// ---------------------------------------------------------------------------

struct Lexicon {
  std::vector<std::string> aspect_nouns;               // may be multi-word ("wine list")
  std::map<std::string, std::vector<std::string>> modifiers;  // class name -> words
  std::vector<std::string> filler;

  void validate(const LabelSpace& fine_space) const;  // pools disjoint, >=3 modifiers per class
  uint64_t content_hash() const;
};

enum class SizeProfile { small, medium };

SizeProfile profile_from_name(const std::string& name);
const char* profile_name(SizeProfile p);

Lexicon build_lexicon(uint64_t seed, SizeProfile profile);

void write_lexicon_json(const Lexicon& lex, const std::string& path);
Lexicon read_lexicon_json(const std::string& path);

struct GenConfig {
  size_t n_sentences = 100;
  int aspects_min = 1;
  int aspects_max = 2;
  double label_noise = 0.0;
  uint64_t seed = 1;
  std::string id_prefix = "s";
  LabelSpace fine_space = default_fine_space();
  LabelSpace coarse_space = default_coarse_space();

  void validate() const;
};

FineDataset generate_fine(const GenConfig& config, const Lexicon& lexicon);
CoarseDataset generate_coarse(const GenConfig& config, const Lexicon& lexicon);

/// Sentence-level aggregation rule: negative if any aspect is negative,
/// otherwise positive (neutral aspects are ignored; all-neutral is positive).
int oracle_sentence_label(const std::vector<int>& aspect_labels, const LabelSpace& fine_space,
                          const LabelSpace& coarse_space);

// ---------------------------------------------------------------------------
// Lexicon-lookup oracles. These recover labels from the generated text by
// construction (exact when label_noise is 0) and calibrate every learnability
// threshold in the tests.
// ---------------------------------------------------------------------------

/// Polarity of the modifier immediately preceding the span; -1 if absent.
int lookup_fine_label(const Sentence& sentence, const AspectSpan& span, const Lexicon& lexicon,
                      const LabelSpace& fine_space);

/// Aggregated polarity of all modifier tokens present in the sentence.
int lookup_coarse_label(const Sentence& sentence, const Lexicon& lexicon,
                        const LabelSpace& fine_space, const LabelSpace& coarse_space);

}  // namespace dpl
