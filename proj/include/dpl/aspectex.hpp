#pragma once

#include "dpl/corpus.hpp"
#include "dpl/synthgen.hpp"

namespace dpl {

/// Exact-match aspect extraction over a lexicon: one span per occurrence of
/// any aspect noun, longest match first, overlaps resolved left to right.
/// Spans come back ordered by position. Stands in for a learned extractor;
/// any callable with this signature can be swapped in.
std::vector<AspectSpan> extract_aspects(const Sentence& sentence, const Lexicon& lexicon);

/// Keep only sentences with at least one extracted span, expanded to one row
/// per (sentence, span) pair with the sentence label repeated. Retained
/// sentences are passed through unmodified.
SpannedCoarseDataset filter_coarse_dataset(const CoarseDataset& dataset, const Lexicon& lexicon);

}  // namespace dpl
