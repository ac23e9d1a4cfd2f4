#include "dpl/synthgen.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace dpl {

using ojson = nlohmann::ordered_json;

namespace {

// Base pools, restaurant-review flavored. Profiles draw seeded subsets.
const std::vector<std::string> kNouns = {
    "food",     "service",   "staff",    "menu",      "price",     "location",
    "ambience", "decor",     "portion",  "dessert",   "coffee",    "wine",
    "pizza",    "pasta",     "salad",    "soup",      "bread",     "cheese",
    "chicken",  "seafood",   "wine list", "side dish", "waiting area", "patio",
};

const std::vector<std::string> kPositive = {
    "great",     "tasty",     "excellent",   "wonderful",  "amazing",    "superb",
    "delicious", "fantastic", "perfect",     "lovely",     "brilliant",  "outstanding",
    "delightful", "impressive", "exceptional", "charming",  "pleasant",   "terrific",
    "marvelous", "splendid",  "stellar",     "fabulous",   "refined",    "generous",
    "inviting",
};

const std::vector<std::string> kNegative = {
    "awful",      "terrible", "bland",      "horrible", "disgusting", "dreadful",
    "poor",       "disappointing", "mediocre", "stale",  "greasy",     "soggy",
    "rude",       "slow",     "overpriced", "dirty",    "noisy",      "cramped",
    "burnt",      "tasteless", "unpleasant", "shabby",  "chaotic",    "sloppy",
    "harsh",
};

const std::vector<std::string> kNeutral = {
    "okay",        "average",  "ordinary",     "standard",  "typical",    "acceptable",
    "unremarkable", "plain",   "moderate",     "fair",      "usual",      "common",
    "routine",     "adequate", "passable",     "middling",  "predictable", "conventional",
    "regular",     "so-so",    "tolerable",    "workable",  "reasonable", "basic",
    "unexceptional",
};

const std::vector<std::string> kFiller = {
    "the", "was", "and", "but", "with", "very", "quite", "a",
    "is",  "had", "also", "really", "overall", "though",
};

std::vector<std::string> pick(std::vector<std::string> pool, size_t n, Rng& rng) {
  shuffle(pool, rng);
  pool.resize(std::min(n, pool.size()));
  return pool;
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string w;
  while (iss >> w) out.push_back(w);
  return out;
}

}  // namespace

void Lexicon::validate(const LabelSpace& fine_space) const {
  if (aspect_nouns.empty()) throw DplError("lexicon has no aspect nouns");
  if (filler.empty()) throw DplError("lexicon has no filler tokens");

  auto word_set = [](const std::vector<std::string>& pool, const char* what) {
    std::set<std::string> entries, words;
    for (const auto& entry : pool) {
      if (!entries.insert(entry).second)
        throw DplError(std::string("duplicate lexicon entry '") + entry + "' in " + what);
      for (const auto& w : split_words(entry)) words.insert(w);
    }
    return words;
  };

  std::vector<std::set<std::string>> pools;
  pools.push_back(word_set(aspect_nouns, "aspect_nouns"));
  pools.push_back(word_set(filler, "filler"));
  std::set<std::string> mod_words;
  for (const auto& cls : fine_space.classes) {
    auto it = modifiers.find(cls);
    if (it == modifiers.end() || it->second.size() < 3)
      throw DplError("lexicon needs at least 3 modifiers for class '" + cls + "'");
    for (const auto& w : word_set(it->second, "modifiers")) {
      if (!mod_words.insert(w).second)
        throw DplError("modifier '" + w + "' appears in more than one polarity class");
    }
  }
  pools.push_back(std::move(mod_words));

  // Pools must be pairwise disjoint at the word level. (Within the noun pool,
  // entries like "wine" and "wine list" may share words.)
  for (size_t i = 0; i < pools.size(); ++i)
    for (size_t j = i + 1; j < pools.size(); ++j)
      for (const auto& w : pools[i])
        if (pools[j].count(w))
          throw DplError("lexicon pools are not disjoint: '" + w + "'");
}

uint64_t Lexicon::content_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](const std::vector<std::string>& pool) {
    for (const auto& w : pool) {
      h = fnv1a64(w.data(), w.size(), h);
      h = fnv1a64("\x1f", 1, h);
    }
    h = fnv1a64("\x1e", 1, h);
  };
  mix(aspect_nouns);
  for (const auto& [cls, words] : modifiers) {
    h = fnv1a64(cls.data(), cls.size(), h);
    mix(words);
  }
  mix(filler);
  return h;
}

SizeProfile profile_from_name(const std::string& name) {
  if (name == "small") return SizeProfile::small;
  if (name == "medium") return SizeProfile::medium;
  throw DplError("unknown lexicon profile: '" + name + "'");
}

const char* profile_name(SizeProfile p) {
  return p == SizeProfile::small ? "small" : "medium";
}

Lexicon build_lexicon(uint64_t seed, SizeProfile profile) {
  size_t n_nouns = profile == SizeProfile::small ? 10 : 20;
  size_t n_mods = profile == SizeProfile::small ? 4 : 25;
  size_t n_fill = profile == SizeProfile::small ? 8 : 12;

  Lexicon lex;
  Rng rng(derive_seed(seed, "lexicon"));
  lex.aspect_nouns = pick(kNouns, n_nouns, rng);
  lex.modifiers["negative"] = pick(kNegative, n_mods, rng);
  lex.modifiers["neutral"] = pick(kNeutral, n_mods, rng);
  lex.modifiers["positive"] = pick(kPositive, n_mods, rng);
  lex.filler = pick(kFiller, n_fill, rng);
  lex.validate(default_fine_space());
  return lex;
}

void write_lexicon_json(const Lexicon& lex, const std::string& path) {
  ojson j;
  j["aspect_nouns"] = lex.aspect_nouns;
  ojson mods;
  for (const auto& [cls, words] : lex.modifiers) mods[cls] = words;
  j["modifiers"] = std::move(mods);
  j["filler"] = lex.filler;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DplError("cannot write lexicon: " + path);
  out << j.dump(2) << '\n';
}

Lexicon read_lexicon_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DplError("cannot open lexicon: " + path);
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const std::exception& e) {
    throw DplError("invalid lexicon JSON in " + path + ": " + e.what());
  }
  Lexicon lex;
  lex.aspect_nouns = j.at("aspect_nouns").get<std::vector<std::string>>();
  for (auto it = j.at("modifiers").begin(); it != j.at("modifiers").end(); ++it)
    lex.modifiers[it.key()] = it.value().get<std::vector<std::string>>();
  lex.filler = j.at("filler").get<std::vector<std::string>>();
  lex.validate(default_fine_space());
  return lex;
}

void GenConfig::validate() const {
  if (n_sentences == 0) throw DplError("n_sentences must be positive");
  if (aspects_min < 1) throw DplError("aspects_per_sentence minimum must be >= 1");
  if (aspects_max < aspects_min) throw DplError("aspects_per_sentence range is empty");
  if (label_noise < 0.0 || label_noise > 1.0) throw DplError("label_noise must be in [0, 1]");
  fine_space.validate();
  coarse_space.validate();
}

namespace {

struct BuiltSentence {
  std::vector<std::string> tokens;
  std::vector<AspectSpan> spans;        // one per aspect, in position order
  std::vector<int> latent_labels;       // fine class per aspect (pre-noise)
};

/// Template: [filler{1,2}] (modifier noun)+ with 1-2 connective fillers
/// between aspects and an optional trailing filler. The modifier always
/// immediately precedes its noun.
BuiltSentence build_sentence(Rng& rng, const Lexicon& lex, const LabelSpace& fine_space,
                             int n_aspects) {
  if (static_cast<size_t>(n_aspects) > lex.aspect_nouns.size())
    throw DplError("lexicon too small for requested aspects_per_sentence");

  std::vector<size_t> noun_order(lex.aspect_nouns.size());
  for (size_t i = 0; i < noun_order.size(); ++i) noun_order[i] = i;
  shuffle(noun_order, rng);  // nouns are sampled without replacement per sentence

  BuiltSentence out;
  auto add_filler = [&](size_t count) {
    for (size_t i = 0; i < count; ++i)
      out.tokens.push_back(lex.filler[rand_index(rng, lex.filler.size())]);
  };

  add_filler(1 + rand_index(rng, 2));
  std::vector<std::pair<size_t, size_t>> ranges;
  for (int a = 0; a < n_aspects; ++a) {
    if (a > 0) add_filler(1 + rand_index(rng, 2));
    int polarity = static_cast<int>(rand_index(rng, fine_space.size()));
    const auto& mods = lex.modifiers.at(fine_space.name_of(polarity));
    out.tokens.push_back(mods[rand_index(rng, mods.size())]);
    auto noun_words = split_words(lex.aspect_nouns[noun_order[a]]);
    size_t start = out.tokens.size();
    for (auto& w : noun_words) out.tokens.push_back(std::move(w));
    ranges.emplace_back(start, out.tokens.size() - start);
    out.latent_labels.push_back(polarity);
  }
  add_filler(rand_index(rng, 2));

  for (auto [start, len] : ranges) out.spans.push_back(make_span_range(out.tokens, start, len));
  return out;
}

int flip_label(Rng& rng, int label, int n_classes) {
  // Replace with a different class, uniformly.
  int offset = 1 + static_cast<int>(rand_index(rng, static_cast<size_t>(n_classes - 1)));
  return (label + offset) % n_classes;
}

std::string row_id(const std::string& prefix, size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06zu", i);
  return prefix + buf;
}

}  // namespace

FineDataset generate_fine(const GenConfig& config, const Lexicon& lexicon) {
  config.validate();
  lexicon.validate(config.fine_space);

  FineDataset ds;
  ds.fine_space = config.fine_space;
  ds.coarse_space = config.coarse_space;
  Rng rng(derive_seed(config.seed, "generate_fine"));
  for (size_t s = 0; s < config.n_sentences; ++s) {
    int n_aspects = config.aspects_min +
                    static_cast<int>(rand_index(rng, config.aspects_max - config.aspects_min + 1));
    BuiltSentence built = build_sentence(rng, lexicon, config.fine_space, n_aspects);
    Sentence sentence{row_id(config.id_prefix, s), built.tokens};
    for (size_t a = 0; a < built.spans.size(); ++a) {
      int label = built.latent_labels[a];
      if (config.label_noise > 0.0 && rand_real(rng) < config.label_noise)
        label = flip_label(rng, label, config.fine_space.size());
      ds.rows.push_back({sentence, built.spans[a], label, false});
    }
  }
  validate_dataset(ds);
  return ds;
}

CoarseDataset generate_coarse(const GenConfig& config, const Lexicon& lexicon) {
  config.validate();
  lexicon.validate(config.fine_space);

  CoarseDataset ds;
  ds.fine_space = config.fine_space;
  ds.coarse_space = config.coarse_space;
  Rng rng(derive_seed(config.seed, "generate_coarse"));
  for (size_t s = 0; s < config.n_sentences; ++s) {
    int n_aspects = config.aspects_min +
                    static_cast<int>(rand_index(rng, config.aspects_max - config.aspects_min + 1));
    BuiltSentence built = build_sentence(rng, lexicon, config.fine_space, n_aspects);
    int label = oracle_sentence_label(built.latent_labels, config.fine_space, config.coarse_space);
    if (config.label_noise > 0.0 && rand_real(rng) < config.label_noise)
      label = flip_label(rng, label, config.coarse_space.size());
    ds.rows.push_back({Sentence{row_id(config.id_prefix, s), built.tokens}, label, false});
  }
  validate_dataset(ds);
  return ds;
}

int oracle_sentence_label(const std::vector<int>& aspect_labels, const LabelSpace& fine_space,
                          const LabelSpace& coarse_space) {
  if (aspect_labels.empty()) throw DplError("oracle_sentence_label: empty aspect list");
  int fine_negative = fine_space.index_of("negative");
  int coarse_negative = coarse_space.index_of("negative");
  int coarse_positive = coarse_space.index_of("positive");
  if (fine_negative < 0 || coarse_negative < 0 || coarse_positive < 0)
    throw DplError("oracle_sentence_label requires negative/positive classes");
  for (int label : aspect_labels)
    if (label == fine_negative) return coarse_negative;
  return coarse_positive;
}

int lookup_fine_label(const Sentence& sentence, const AspectSpan& span, const Lexicon& lexicon,
                      const LabelSpace& fine_space) {
  size_t start = span.first_marked();
  if (start == 0) return -1;
  const std::string& before = sentence.tokens[start - 1];
  for (int c = 0; c < fine_space.size(); ++c) {
    const auto& mods = lexicon.modifiers.at(fine_space.name_of(c));
    if (std::find(mods.begin(), mods.end(), before) != mods.end()) return c;
  }
  return -1;
}

int lookup_coarse_label(const Sentence& sentence, const Lexicon& lexicon,
                        const LabelSpace& fine_space, const LabelSpace& coarse_space) {
  std::vector<int> aspect_labels;
  for (const auto& token : sentence.tokens) {
    for (int c = 0; c < fine_space.size(); ++c) {
      const auto& mods = lexicon.modifiers.at(fine_space.name_of(c));
      if (std::find(mods.begin(), mods.end(), token) != mods.end()) {
        aspect_labels.push_back(c);
        break;
      }
    }
  }
  if (aspect_labels.empty()) return -1;
  return oracle_sentence_label(aspect_labels, fine_space, coarse_space);
}

}  // namespace dpl
