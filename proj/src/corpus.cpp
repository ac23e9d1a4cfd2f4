#include "dpl/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_set>

#include "json.hpp"

namespace dpl {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// LabelSpace
// ---------------------------------------------------------------------------

int LabelSpace::index_of(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (classes[i] == name) return i;
  return -1;
}

const std::string& LabelSpace::name_of(int idx) const {
  if (idx < 0 || idx >= size()) throw DplError("label index out of range: " + std::to_string(idx));
  return classes[idx];
}

void LabelSpace::validate() const {
  if (size() < 2) throw DplError("label space needs at least 2 classes");
  std::set<std::string> seen(classes.begin(), classes.end());
  if (static_cast<int>(seen.size()) != size()) throw DplError("label space has duplicate class names");
}

LabelSpace default_fine_space() { return {{"negative", "neutral", "positive"}}; }
LabelSpace default_coarse_space() { return {{"negative", "positive"}}; }

// ---------------------------------------------------------------------------
// Sentence / AspectSpan
// ---------------------------------------------------------------------------

void Sentence::validate() const {
  if (id.empty()) throw DplError("sentence id is empty");
  if (tokens.empty()) throw DplError("sentence '" + id + "' has no tokens");
  for (const auto& t : tokens) {
    if (t.empty()) throw DplError("sentence '" + id + "' has an empty token");
    if (t.find_first_of(" \t\n\r") != std::string::npos)
      throw DplError("sentence '" + id + "' token contains whitespace: '" + t + "'");
  }
}

size_t AspectSpan::first_marked() const {
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) return i;
  throw DplError("aspect mask has no marked position");
}

size_t AspectSpan::marked_count() const {
  size_t c = 0;
  for (auto b : mask) c += (b != 0);
  return c;
}

AspectSpan make_span(const std::vector<std::string>& tokens, std::vector<uint8_t> mask) {
  if (mask.size() != tokens.size())
    throw DplError("mask length " + std::to_string(mask.size()) + " does not match token count " +
                   std::to_string(tokens.size()));
  size_t first = mask.size(), last = 0, ones = 0;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0 && mask[i] != 1) throw DplError("aspect mask values must be 0 or 1");
    if (mask[i]) {
      first = std::min(first, i);
      last = i;
      ++ones;
    }
  }
  if (ones == 0) throw DplError("aspect mask marks no tokens");
  if (last - first + 1 != ones) throw DplError("aspect mask marks non-contiguous positions");

  AspectSpan span;
  span.mask = std::move(mask);
  for (size_t i = first; i <= last; ++i) {
    if (i > first) span.surface += ' ';
    span.surface += tokens[i];
  }
  return span;
}

AspectSpan make_span_range(const std::vector<std::string>& tokens, size_t start, size_t len) {
  if (len == 0 || start + len > tokens.size()) throw DplError("span range out of bounds");
  std::vector<uint8_t> mask(tokens.size(), 0);
  for (size_t i = 0; i < len; ++i) mask[start + i] = 1;
  return make_span(tokens, std::move(mask));
}

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::none: return "none";
    case Provenance::pseudo_fine: return "fine";
    case Provenance::pseudo_coarse: return "coarse";
  }
  throw DplError("bad provenance value");
}

Provenance provenance_from_name(const std::string& s) {
  if (s == "none") return Provenance::none;
  if (s == "fine") return Provenance::pseudo_fine;
  if (s == "coarse") return Provenance::pseudo_coarse;
  throw DplError("unknown pseudo provenance: '" + s + "'");
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

void check_label(int label, const LabelSpace& space, const std::string& what,
                 const std::string& id) {
  if (label < 0 || label >= space.size())
    throw DplError(what + " label out of range for sentence '" + id + "'");
}

std::string mask_key(const Sentence& s, const AspectSpan& span) {
  std::string key = s.id;
  key += '|';
  for (auto b : span.mask) key += static_cast<char>('0' + b);
  return key;
}

void check_span_row(const Sentence& s, const AspectSpan& span) {
  s.validate();
  // Re-derive the span so contiguity/length invariants hold even for rows
  // built outside make_span.
  AspectSpan rebuilt = make_span(s.tokens, span.mask);
  if (rebuilt.surface != span.surface && !span.surface.empty())
    throw DplError("span surface does not match marked tokens in sentence '" + s.id + "'");
}

template <typename Row, typename KeyFn>
void check_unique(const std::vector<Row>& rows, KeyFn key, const char* what) {
  std::unordered_set<std::string> seen;
  seen.reserve(rows.size());
  for (const auto& r : rows)
    if (!seen.insert(key(r)).second)
      throw DplError(std::string("duplicate ") + what + ": '" + key(r) + "'");
}

}  // namespace

void validate_dataset(const FineDataset& ds) {
  ds.fine_space.validate();
  for (const auto& r : ds.rows) {
    check_span_row(r.sentence, r.span);
    check_label(r.fine_label, ds.fine_space, "fine", r.sentence.id);
  }
  check_unique(ds.rows, [](const FineExample& r) { return mask_key(r.sentence, r.span); },
               "(sentence id, span) pair");
}

void validate_dataset(const CoarseDataset& ds) {
  ds.coarse_space.validate();
  for (const auto& r : ds.rows) {
    r.sentence.validate();
    check_label(r.coarse_label, ds.coarse_space, "coarse", r.sentence.id);
  }
  check_unique(ds.rows, [](const CoarseExample& r) { return r.sentence.id; }, "sentence id");
}

void validate_dataset(const SpannedCoarseDataset& ds) {
  ds.coarse_space.validate();
  for (const auto& r : ds.rows) {
    check_span_row(r.sentence, r.span);
    check_label(r.coarse_label, ds.coarse_space, "coarse", r.sentence.id);
  }
  check_unique(ds.rows,
               [](const SpannedCoarseExample& r) { return mask_key(r.sentence, r.span); },
               "(sentence id, span) pair");
}

void validate_dataset(const MergedDataset& ds) {
  ds.fine_space.validate();
  ds.coarse_space.validate();
  for (const auto& r : ds.rows) {
    check_span_row(r.sentence, r.span);
    check_label(r.fine_label, ds.fine_space, "fine", r.sentence.id);
    check_label(r.coarse_label, ds.coarse_space, "coarse", r.sentence.id);
  }
  check_unique(ds.rows, [](const MergedExample& r) { return mask_key(r.sentence, r.span); },
               "(sentence id, span) pair");
}

// ---------------------------------------------------------------------------
// JSONL
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> parse_tokens(const ojson& j) {
  if (!j.contains("tokens") || !j["tokens"].is_array()) throw DplError("missing 'tokens' array");
  std::vector<std::string> tokens;
  for (const auto& t : j["tokens"]) {
    if (!t.is_string()) throw DplError("'tokens' entries must be strings");
    tokens.push_back(t.get<std::string>());
  }
  return tokens;
}

std::string parse_id(const ojson& j) {
  if (!j.contains("id") || !j["id"].is_string()) throw DplError("missing 'id' string");
  return j["id"].get<std::string>();
}

std::vector<uint8_t> parse_mask(const ojson& j) {
  if (!j.contains("mask") || !j["mask"].is_array()) throw DplError("missing 'mask' array");
  std::vector<uint8_t> mask;
  for (const auto& b : j["mask"]) {
    if (!b.is_number_integer()) throw DplError("'mask' entries must be integers");
    int v = b.get<int>();
    if (v != 0 && v != 1) throw DplError("'mask' entries must be 0 or 1");
    mask.push_back(static_cast<uint8_t>(v));
  }
  return mask;
}

int parse_label(const ojson& j, const char* field, const LabelSpace& space) {
  if (!j.contains(field) || !j[field].is_string())
    throw DplError(std::string("missing '") + field + "' string");
  std::string name = j[field].get<std::string>();
  int idx = space.index_of(name);
  if (idx < 0) throw DplError(std::string("unknown ") + field + " class '" + name + "'");
  return idx;
}

bool parse_flag(const ojson& j, const char* field) {
  if (!j.contains(field)) return false;
  if (!j[field].is_boolean()) throw DplError(std::string("'") + field + "' must be a boolean");
  return j[field].get<bool>();
}

void check_known_keys(const ojson& j, std::initializer_list<const char*> known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) ok = true;
    if (!ok) throw DplError("unknown field '" + it.key() + "'");
  }
}

template <typename Fn>
void read_lines(const std::string& path, Fn per_line) {
  std::ifstream in(path);
  if (!in) throw DplError("cannot open file: " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const std::exception& e) {
      throw DplError(path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    try {
      per_line(j);
    } catch (const DplError& e) {
      throw DplError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

ojson tokens_json(const std::vector<std::string>& tokens) {
  ojson a = ojson::array();
  for (const auto& t : tokens) a.push_back(t);
  return a;
}

ojson mask_json(const std::vector<uint8_t>& mask) {
  ojson a = ojson::array();
  for (auto b : mask) a.push_back(static_cast<int>(b));
  return a;
}

void write_lines(const std::string& path, const std::vector<ojson>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DplError("cannot open file for writing: " + path);
  for (const auto& j : lines) out << j.dump() << '\n';
  if (!out) throw DplError("write failed: " + path);
}

}  // namespace

FineDataset read_fine_jsonl(const std::string& path, LabelSpace fine) {
  FineDataset ds;
  ds.fine_space = std::move(fine);
  read_lines(path, [&](const ojson& j) {
    check_known_keys(j, {"id", "tokens", "mask", "fine_label", "fine_is_pseudo"});
    FineExample ex;
    ex.sentence.id = parse_id(j);
    ex.sentence.tokens = parse_tokens(j);
    ex.span = make_span(ex.sentence.tokens, parse_mask(j));
    ex.fine_label = parse_label(j, "fine_label", ds.fine_space);
    ex.fine_is_pseudo = parse_flag(j, "fine_is_pseudo");
    ds.rows.push_back(std::move(ex));
  });
  validate_dataset(ds);
  return ds;
}

CoarseDataset read_coarse_jsonl(const std::string& path, LabelSpace coarse) {
  CoarseDataset ds;
  ds.coarse_space = std::move(coarse);
  read_lines(path, [&](const ojson& j) {
    check_known_keys(j, {"id", "tokens", "coarse_label", "coarse_is_pseudo"});
    CoarseExample ex;
    ex.sentence.id = parse_id(j);
    ex.sentence.tokens = parse_tokens(j);
    ex.coarse_label = parse_label(j, "coarse_label", ds.coarse_space);
    ex.coarse_is_pseudo = parse_flag(j, "coarse_is_pseudo");
    ds.rows.push_back(std::move(ex));
  });
  validate_dataset(ds);
  return ds;
}

SpannedCoarseDataset read_spanned_jsonl(const std::string& path, LabelSpace coarse) {
  SpannedCoarseDataset ds;
  ds.coarse_space = std::move(coarse);
  read_lines(path, [&](const ojson& j) {
    check_known_keys(j, {"id", "tokens", "mask", "coarse_label", "coarse_is_pseudo"});
    SpannedCoarseExample ex;
    ex.sentence.id = parse_id(j);
    ex.sentence.tokens = parse_tokens(j);
    ex.span = make_span(ex.sentence.tokens, parse_mask(j));
    ex.coarse_label = parse_label(j, "coarse_label", ds.coarse_space);
    ex.coarse_is_pseudo = parse_flag(j, "coarse_is_pseudo");
    ds.rows.push_back(std::move(ex));
  });
  validate_dataset(ds);
  return ds;
}

MergedDataset read_merged_jsonl(const std::string& path, LabelSpace fine, LabelSpace coarse) {
  MergedDataset ds;
  ds.fine_space = std::move(fine);
  ds.coarse_space = std::move(coarse);
  read_lines(path, [&](const ojson& j) {
    check_known_keys(j, {"id", "tokens", "mask", "fine_label", "coarse_label", "pseudo"});
    MergedExample ex;
    ex.sentence.id = parse_id(j);
    ex.sentence.tokens = parse_tokens(j);
    ex.span = make_span(ex.sentence.tokens, parse_mask(j));
    ex.fine_label = parse_label(j, "fine_label", ds.fine_space);
    ex.coarse_label = parse_label(j, "coarse_label", ds.coarse_space);
    if (!j.contains("pseudo") || !j["pseudo"].is_string())
      throw DplError("missing 'pseudo' string");
    ex.pseudo = provenance_from_name(j["pseudo"].get<std::string>());
    ds.rows.push_back(std::move(ex));
  });
  validate_dataset(ds);
  return ds;
}

void write_jsonl(const FineDataset& ds, const std::string& path) {
  validate_dataset(ds);
  std::vector<ojson> lines;
  lines.reserve(ds.rows.size());
  for (const auto& r : ds.rows) {
    ojson j;
    j["id"] = r.sentence.id;
    j["tokens"] = tokens_json(r.sentence.tokens);
    j["mask"] = mask_json(r.span.mask);
    j["fine_label"] = ds.fine_space.name_of(r.fine_label);
    if (r.fine_is_pseudo) j["fine_is_pseudo"] = true;
    lines.push_back(std::move(j));
  }
  write_lines(path, lines);
}

void write_jsonl(const CoarseDataset& ds, const std::string& path) {
  validate_dataset(ds);
  std::vector<ojson> lines;
  lines.reserve(ds.rows.size());
  for (const auto& r : ds.rows) {
    ojson j;
    j["id"] = r.sentence.id;
    j["tokens"] = tokens_json(r.sentence.tokens);
    j["coarse_label"] = ds.coarse_space.name_of(r.coarse_label);
    if (r.coarse_is_pseudo) j["coarse_is_pseudo"] = true;
    lines.push_back(std::move(j));
  }
  write_lines(path, lines);
}

void write_jsonl(const SpannedCoarseDataset& ds, const std::string& path) {
  validate_dataset(ds);
  std::vector<ojson> lines;
  lines.reserve(ds.rows.size());
  for (const auto& r : ds.rows) {
    ojson j;
    j["id"] = r.sentence.id;
    j["tokens"] = tokens_json(r.sentence.tokens);
    j["mask"] = mask_json(r.span.mask);
    j["coarse_label"] = ds.coarse_space.name_of(r.coarse_label);
    if (r.coarse_is_pseudo) j["coarse_is_pseudo"] = true;
    lines.push_back(std::move(j));
  }
  write_lines(path, lines);
}

void write_jsonl(const MergedDataset& ds, const std::string& path) {
  validate_dataset(ds);
  std::vector<ojson> lines;
  lines.reserve(ds.rows.size());
  for (const auto& r : ds.rows) {
    ojson j;
    j["id"] = r.sentence.id;
    j["tokens"] = tokens_json(r.sentence.tokens);
    j["mask"] = mask_json(r.span.mask);
    j["fine_label"] = ds.fine_space.name_of(r.fine_label);
    j["coarse_label"] = ds.coarse_space.name_of(r.coarse_label);
    j["pseudo"] = provenance_name(r.pseudo);
    lines.push_back(std::move(j));
  }
  write_lines(path, lines);
}

MergedDataset merge_datasets(const MergedDataset& fine_aug, const MergedDataset& coarse_aug) {
  if (fine_aug.fine_space != coarse_aug.fine_space ||
      fine_aug.coarse_space != coarse_aug.coarse_space)
    throw DplError("merge_datasets: label spaces differ between inputs");

  MergedDataset out;
  out.fine_space = fine_aug.fine_space;
  out.coarse_space = fine_aug.coarse_space;
  out.rows.reserve(fine_aug.size() + coarse_aug.size());
  out.rows.insert(out.rows.end(), fine_aug.rows.begin(), fine_aug.rows.end());
  out.rows.insert(out.rows.end(), coarse_aug.rows.begin(), coarse_aug.rows.end());
  validate_dataset(out);  // catches (id, span) collisions across the inputs
  return out;
}

}  // namespace dpl
