#include "dpl/aspectex.hpp"

#include <algorithm>
#include <iostream>
#include <sstream>

namespace dpl {

namespace {

std::vector<std::vector<std::string>> tokenized_nouns(const Lexicon& lexicon) {
  std::vector<std::vector<std::string>> nouns;
  for (const auto& entry : lexicon.aspect_nouns) {
    std::vector<std::string> words;
    std::istringstream iss(entry);
    std::string w;
    while (iss >> w) words.push_back(w);
    if (!words.empty()) nouns.push_back(std::move(words));
  }
  // Longest first so multi-word nouns win over their prefixes.
  std::stable_sort(nouns.begin(), nouns.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  return nouns;
}

}  // namespace

std::vector<AspectSpan> extract_aspects(const Sentence& sentence, const Lexicon& lexicon) {
  sentence.validate();
  auto nouns = tokenized_nouns(lexicon);
  const auto& tokens = sentence.tokens;

  std::vector<AspectSpan> spans;
  size_t i = 0;
  while (i < tokens.size()) {
    size_t matched = 0;
    for (const auto& noun : nouns) {
      if (noun.size() > tokens.size() - i) continue;
      if (std::equal(noun.begin(), noun.end(), tokens.begin() + i)) {
        matched = noun.size();
        break;
      }
    }
    if (matched > 0) {
      spans.push_back(make_span_range(tokens, i, matched));
      i += matched;
    } else {
      ++i;
    }
  }
  return spans;
}

SpannedCoarseDataset filter_coarse_dataset(const CoarseDataset& dataset, const Lexicon& lexicon) {
  SpannedCoarseDataset out;
  out.fine_space = dataset.fine_space;
  out.coarse_space = dataset.coarse_space;
  out.split = dataset.split;

  size_t retained = 0;
  for (const auto& row : dataset.rows) {
    auto spans = extract_aspects(row.sentence, lexicon);
    if (spans.empty()) continue;
    ++retained;
    for (auto& span : spans)
      out.rows.push_back({row.sentence, std::move(span), row.coarse_label, row.coarse_is_pseudo});
  }
  if (retained == 0 && !dataset.rows.empty())
    std::cerr << "warning: no sentences with aspect terms; filtered dataset is empty\n";
  validate_dataset(out);
  return out;
}

}  // namespace dpl
