#pragma once

// Character-level distortion (channel) model: a rule-based classifier maps a
// (corrected, input) pair onto a small set of types, and each type carries a
// single log-probability.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "csc/chardata.hpp"
#include "csc/error.hpp"
#include "csc/text.hpp"
#include "csc/utf8.hpp"

namespace csc {

enum class DistortionType : std::uint8_t {
  Identical,
  SamePinyin,
  SimilarPinyin,
  SimilarShape,
  OtherSimilar,
  Unrelated,
};

inline constexpr std::size_t kDistortionTypeCount = 6;

inline constexpr std::array<DistortionType, kDistortionTypeCount> kAllDistortionTypes = {
    DistortionType::Identical,    DistortionType::SamePinyin,   DistortionType::SimilarPinyin,
    DistortionType::SimilarShape, DistortionType::OtherSimilar, DistortionType::Unrelated};

inline constexpr std::size_t index_of(DistortionType t) { return static_cast<std::size_t>(t); }

inline std::string_view to_string(DistortionType t) {
  switch (t) {
    case DistortionType::Identical: return "identical";
    case DistortionType::SamePinyin: return "same_pinyin";
    case DistortionType::SimilarPinyin: return "similar_pinyin";
    case DistortionType::SimilarShape: return "similar_shape";
    case DistortionType::OtherSimilar: return "other_similar";
    case DistortionType::Unrelated: return "unrelated";
  }
  return "?";
}

inline std::optional<DistortionType> parse_distortion_type(std::string_view name) {
  for (auto t : kAllDistortionTypes) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

inline constexpr double kShapeSimilarityThreshold = 0.45;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Similarity tables

/// Directional initial/final similarity rules (corrected -> input).
class SimilarityTables {
 public:
  /// The shipped consonant and vowel rules.
  static SimilarityTables defaults() {
    SimilarityTables t;
    static constexpr std::pair<const char*, const char*> kConsonants[] = {
        {"j", "q"},   {"j", "x"},   {"j", "z"},   {"q", "j"},   {"q", "x"},   {"q", "c"},
        {"x", "j"},   {"x", "q"},   {"x", "s"},   {"z", "j"},   {"z", "c"},   {"z", "s"},
        {"z", "zh"},  {"c", "q"},   {"c", "z"},   {"c", "s"},   {"c", "ch"},  {"s", "z"},
        {"s", "c"},   {"s", "sh"},  {"zh", "z"},  {"zh", "ch"}, {"zh", "sh"}, {"ch", "c"},
        {"ch", "zh"}, {"ch", "sh"}, {"sh", "s"},  {"sh", "zh"}, {"sh", "ch"}, {"r", "l"},
        {"l", "r"},   {"l", "n"},   {"l", "d"},   {"l", "t"},   {"n", "l"},   {"n", "d"},
        {"n", "t"},   {"d", "l"},   {"d", "n"},   {"d", "t"},   {"d", "b"},   {"t", "l"},
        {"t", "n"},   {"t", "d"},   {"t", "p"},   {"b", "d"},   {"b", "p"},   {"b", "m"},
        {"p", "t"},   {"p", "b"},   {"m", "b"},   {"m", "p"},   {"g", "k"},   {"g", "h"},
        {"k", "g"},   {"k", "h"},   {"h", "g"},   {"h", "k"},   {"h", "f"},   {"f", "h"}};
    static constexpr std::pair<const char*, const char*> kVowels[] = {
        {"an", "ang"},    {"an", "uan"},   {"an", "uang"},  {"an", "ian"},   {"ang", "an"},
        {"ang", "uan"},   {"ang", "uang"}, {"ang", "iang"}, {"uan", "an"},   {"uan", "ang"},
        {"uan", "uang"},  {"uan", "ian"},  {"uang", "an"},  {"uang", "ang"}, {"uang", "uan"},
        {"uang", "iang"}, {"ian", "an"},   {"ian", "uan"},  {"ian", "iang"}, {"iang", "ang"},
        {"iang", "uang"}, {"iang", "ian"}, {"en", "eng"},   {"en", "un"},    {"eng", "en"},
        {"un", "en"},     {"un", "ong"},   {"ong", "un"},   {"in", "ing"},   {"ing", "in"},
        {"o", "uo"},      {"uo", "o"},     {"v", "u"},      {"u", "v"}};
    for (auto [a, b] : kConsonants) t.add_consonant(a, b);
    for (auto [a, b] : kVowels) t.add_vowel(a, b);
    return t;
  }

  /// Parses `[consonants]` / `[vowels]` sections of `corrected<TAB>input` lines.
  static SimilarityTables parse(std::istream& in, const std::string& name) {
    SimilarityTables t;
    text::LineReader reader(in, name);
    std::string line;
    int section = -1;
    while (reader.next(line)) {
      if (text::skippable(line)) continue;
      const auto trimmed = text::trim(line);
      if (trimmed == "[consonants]") { section = 0; continue; }
      if (trimmed == "[vowels]") { section = 1; continue; }
      if (trimmed.front() == '[') reader.fail("unknown section " + std::string(trimmed));
      if (section < 0) reader.fail("rule listed before any section header");
      const auto fields = text::split(trimmed, '\t');
      if (fields.size() != 2) reader.fail("expected 'corrected<TAB>input'");
      std::string a, b;
      try {
        a = strip_tones(text::trim(fields[0]));
        b = strip_tones(text::trim(fields[1]));
      } catch (const Error& e) {
        reader.fail(e.what());
      }
      if (section == 0) {
        if (!is_initial(a) || !is_initial(b)) reader.fail("not a pinyin initial: " + line);
        t.add_consonant(a, b);
      } else {
        if (!is_final(a) || !is_final(b)) reader.fail("not a pinyin final: " + line);
        t.add_vowel(a, b);
      }
    }
    return t;
  }

  static SimilarityTables load(const std::filesystem::path& path) {
    auto in = text::open_input(path);
    return parse(in, path.string());
  }

  void add_consonant(std::string corrected, std::string input) {
    add(consonants_, std::move(corrected), std::move(input));
  }
  void add_vowel(std::string corrected, std::string input) {
    add(vowels_, std::move(corrected), std::move(input));
  }

  bool consonant_similar(const std::string& corrected, const std::string& input) const {
    return contains(consonants_, corrected, input);
  }
  bool vowel_similar(const std::string& corrected, const std::string& input) const {
    return contains(vowels_, corrected, input);
  }

  /// Inputs a corrected initial may be confused with (excluding itself).
  std::span<const std::string> consonant_targets(const std::string& corrected) const {
    return targets(consonants_, corrected);
  }
  std::span<const std::string> vowel_targets(const std::string& corrected) const {
    return targets(vowels_, corrected);
  }

  std::size_t consonant_rule_count() const { return count(consonants_); }
  std::size_t vowel_rule_count() const { return count(vowels_); }

  friend bool operator==(const SimilarityTables&, const SimilarityTables&) = default;

 private:
  using Rules = std::map<std::string, std::vector<std::string>>;

  static bool is_initial(const std::string& s) {
    return std::find(kPinyinInitials.begin(), kPinyinInitials.end(), s) != kPinyinInitials.end();
  }
  static bool is_final(const std::string& s) {
    return !s.empty() && std::string_view("aeiouv").find(s.front()) != std::string_view::npos &&
           std::all_of(s.begin(), s.end(), [](char c) { return c >= 'a' && c <= 'z'; });
  }

  static void add(Rules& rules, std::string a, std::string b) {
    if (a == b) return;
    auto& v = rules[std::move(a)];
    if (std::find(v.begin(), v.end(), b) == v.end()) v.push_back(std::move(b));
  }
  static bool contains(const Rules& rules, const std::string& a, const std::string& b) {
    auto it = rules.find(a);
    return it != rules.end() && std::find(it->second.begin(), it->second.end(), b) != it->second.end();
  }
  static std::span<const std::string> targets(const Rules& rules, const std::string& a) {
    auto it = rules.find(a);
    if (it == rules.end()) return {};
    return it->second;
  }
  static std::size_t count(const Rules& rules) {
    std::size_t n = 0;
    for (const auto& [_, v] : rules) n += v.size();
    return n;
  }

  Rules consonants_;
  Rules vowels_;
};

/// True when the syllables differ but each of initial and final is either
/// equal or listed as a similar rule from corrected to input.
inline bool pinyin_similar(const SimilarityTables& tables, const PinyinSyllable& corrected,
                           const PinyinSyllable& input) {
  const bool same_c = corrected.consonant == input.consonant;
  const bool same_v = corrected.vowel == input.vowel;
  if (same_c && same_v) return false;
  return (same_c || tables.consonant_similar(corrected.consonant, input.consonant)) &&
         (same_v || tables.vowel_similar(corrected.vowel, input.vowel));
}

// ---------------------------------------------------------------------------
// Shape similarity

inline double four_corner_similarity(const CharacterRecord& a, const CharacterRecord& b) {
  if (!a.four_corner || !b.four_corner) return 0.0;
  int same = 0;
  for (int i = 0; i < 4; ++i) same += (*a.four_corner)[i] == (*b.four_corner)[i];
  return same * 0.25;
}

/// Radical compared positionally, components as a multiset; normalized by
/// the larger slot count.
inline double structure_similarity(const CharacterRecord& a, const CharacterRecord& b) {
  if (!a.radical || !b.radical) return 0.0;
  const double slots = static_cast<double>(std::max(a.components.size(), b.components.size()) + 1);
  double matched = *a.radical == *b.radical ? 1.0 : 0.0;
  auto count_common = [](const std::vector<char32_t>& x, const std::vector<char32_t>& y) {
    std::size_t n = 0;
    auto i = x.begin(), j = y.begin();
    while (i != x.end() && j != y.end()) {
      if (*i < *j) ++i;
      else if (*j < *i) ++j;
      else { ++n; ++i; ++j; }
    }
    return n;
  };
  if (std::is_sorted(a.components.begin(), a.components.end()) &&
      std::is_sorted(b.components.begin(), b.components.end())) {
    matched += static_cast<double>(count_common(a.components, b.components));
  } else {
    auto ca = a.components, cb = b.components;
    std::sort(ca.begin(), ca.end());
    std::sort(cb.begin(), cb.end());
    matched += static_cast<double>(count_common(ca, cb));
  }
  return matched / slots;
}

inline double shape_similarity(const CharacterRecord& a, const CharacterRecord& b) {
  return 0.5 * (four_corner_similarity(a, b) + structure_similarity(a, b));
}

inline double shape_similarity(const KnowledgeBase& kb, char32_t a, char32_t b) {
  const auto* ra = kb.lookup(a);
  const auto* rb = kb.lookup(b);
  if (ra == nullptr || rb == nullptr) {
    throw Error(ErrorKind::InvalidArgument,
                "shape_similarity needs records for both '" + encode_utf8(a) + "' and '" +
                    encode_utf8(b) + "'");
  }
  return shape_similarity(*ra, *rb);
}

/// `part` is the radical or one of the components of `whole`.
inline bool is_part_of(char32_t part, const CharacterRecord& whole) {
  return whole.radical == part ||
         std::find(whole.components.begin(), whole.components.end(), part) != whole.components.end();
}

inline bool shape_related(const CharacterRecord& a, const CharacterRecord& b) {
  return is_part_of(a.ch, b) || is_part_of(b.ch, a) ||
         shape_similarity(a, b) >= kShapeSimilarityThreshold;
}

// ---------------------------------------------------------------------------
// Classification

inline bool share_pinyin(const CharacterRecord& a, const CharacterRecord& b) {
  for (const auto& p : a.pinyins) {
    if (std::find(b.pinyins.begin(), b.pinyins.end(), p) != b.pinyins.end()) return true;
  }
  return false;
}

inline bool any_pinyin_similar(const SimilarityTables& tables, const CharacterRecord& corrected,
                               const CharacterRecord& input) {
  for (const auto& p : corrected.pinyins) {
    for (const auto& q : input.pinyins) {
      if (pinyin_similar(tables, p, q)) return true;
    }
  }
  return false;
}

/// Total classification of a (corrected, input) pair, checked in priority
/// order. Characters without a record only ever match themselves.
inline DistortionType classify(const KnowledgeBase& kb, const SimilarityTables& tables,
                               char32_t corrected, char32_t input) {
  if (corrected == input) return DistortionType::Identical;
  const auto* rc = kb.lookup(corrected);
  const auto* ri = kb.lookup(input);
  if (rc == nullptr || ri == nullptr) return DistortionType::Unrelated;
  if (kb.interchangeable().contains(corrected, input)) return DistortionType::Identical;
  if (share_pinyin(*rc, *ri)) return DistortionType::SamePinyin;
  if (any_pinyin_similar(tables, *rc, *ri)) return DistortionType::SimilarPinyin;
  if (shape_related(*rc, *ri)) return DistortionType::SimilarShape;
  if (kb.structure_confusion().contains(corrected, input) ||
      kb.similarity_matrix().contains(corrected, input)) {
    return DistortionType::OtherSimilar;
  }
  return DistortionType::Unrelated;
}

/// An Unrelated pair may still be used through the one-per-token allowance
/// only when both characters are known; anything else maps to itself only.
inline bool trick_allowed(const KnowledgeBase& kb, char32_t corrected, char32_t input) {
  return kb.lookup(corrected) != nullptr && kb.lookup(input) != nullptr;
}

// ---------------------------------------------------------------------------
// Parameters

struct DistortionParams {
  std::array<double, kDistortionTypeCount> log_prob{};
  double unrelated_trick_logprob = -15.0;

  double probability(DistortionType t) const { return std::exp(log_prob[index_of(t)]); }

  static DistortionParams defaults() {
    DistortionParams p;
    p.log_prob[index_of(DistortionType::Identical)] = std::log(0.962);
    p.log_prob[index_of(DistortionType::SamePinyin)] = std::log(0.023);
    p.log_prob[index_of(DistortionType::SimilarPinyin)] = std::log(0.008);
    p.log_prob[index_of(DistortionType::SimilarShape)] = std::log(0.004);
    p.log_prob[index_of(DistortionType::OtherSimilar)] = std::log(0.004);
    p.log_prob[index_of(DistortionType::Unrelated)] = std::log(0.003);
    return p;
  }

  /// Channel that only permits copying the input.
  static DistortionParams identity_only() {
    DistortionParams p;
    p.log_prob.fill(kNegInf);
    p.log_prob[index_of(DistortionType::Identical)] = 0.0;
    p.unrelated_trick_logprob = kNegInf;
    return p;
  }

  /// `type<TAB>probability` lines; types not listed keep their defaults.
  /// `unrelated_trick` sets the per-token unrelated allowance.
  static DistortionParams parse(std::istream& in, const std::string& name) {
    DistortionParams p = defaults();
    text::LineReader reader(in, name);
    std::string line;
    while (reader.next(line)) {
      if (text::skippable(line)) continue;
      const auto fields = text::split(text::trim(line), '\t');
      if (fields.size() != 2) reader.fail("expected 'type<TAB>probability'");
      double prob = 0;
      try {
        std::size_t used = 0;
        const std::string value(text::trim(fields[1]));
        prob = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::exception&) {
        reader.fail("bad probability '" + std::string(fields[1]) + "'");
      }
      if (!(prob >= 0.0 && prob <= 1.0)) reader.fail("probability out of [0,1]");
      const double lp = prob > 0 ? std::log(prob) : kNegInf;
      const auto key = text::trim(fields[0]);
      if (key == "unrelated_trick") {
        p.unrelated_trick_logprob = lp;
        continue;
      }
      const auto type = parse_distortion_type(key);
      if (!type) reader.fail("unknown distortion type '" + std::string(key) + "'");
      p.log_prob[index_of(*type)] = lp;
    }
    return p;
  }

  static DistortionParams load(const std::filesystem::path& path) {
    auto in = text::open_input(path);
    return parse(in, path.string());
  }

  void write(std::ostream& out) const {
    char buf[64];
    for (auto t : kAllDistortionTypes) {
      std::snprintf(buf, sizeof buf, "%.17g", probability(t));
      out << to_string(t) << '\t' << buf << '\n';
    }
    std::snprintf(buf, sizeof buf, "%.17g", std::exp(unrelated_trick_logprob));
    out << "unrelated_trick\t" << buf << '\n';
  }
};

/// Per-character channel log-probability. Unrelated pairs are only ever
/// scored through the one-per-token allowance, so they resolve to the trick
/// constant.
inline double distortion_logprob(const DistortionParams& params, DistortionType t) {
  if (t == DistortionType::Unrelated) return params.unrelated_trick_logprob;
  return params.log_prob[index_of(t)];
}

// ---------------------------------------------------------------------------
// Estimation

struct ParallelPair {
  std::u32string input;
  std::u32string corrected;
};

struct TypeCounts {
  std::array<std::uint64_t, kDistortionTypeCount> counts{};

  std::uint64_t operator[](DistortionType t) const { return counts[index_of(t)]; }
  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }
  friend bool operator==(const TypeCounts&, const TypeCounts&) = default;
};

inline TypeCounts count_types(const KnowledgeBase& kb, const SimilarityTables& tables,
                              std::span<const ParallelPair> corpus) {
  TypeCounts tc;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& pair = corpus[i];
    if (pair.input.size() != pair.corrected.size()) {
      throw Error(ErrorKind::InvalidArgument,
                  "pair " + std::to_string(i) + " has mismatched lengths (" +
                      std::to_string(pair.input.size()) + " vs " +
                      std::to_string(pair.corrected.size()) + ")");
    }
    for (std::size_t k = 0; k < pair.input.size(); ++k) {
      ++tc.counts[index_of(classify(kb, tables, pair.corrected[k], pair.input[k]))];
    }
  }
  return tc;
}

inline constexpr double kDefaultEstimateFloor = 1e-6;

/// Empirical type frequencies over all aligned positions. OtherSimilar is
/// pooled with SimilarShape; zero-count types get `floor`.
inline DistortionParams params_from_counts(const TypeCounts& tc, double floor = kDefaultEstimateFloor) {
  DistortionParams p = DistortionParams::defaults();
  const double total = static_cast<double>(tc.total());
  auto freq = [&](std::uint64_t c) {
    if (c == 0 || total == 0) return std::log(floor);
    return std::log(static_cast<double>(c) / total);
  };
  for (auto t : kAllDistortionTypes) p.log_prob[index_of(t)] = freq(tc[t]);
  const double shape = freq(tc[DistortionType::SimilarShape] + tc[DistortionType::OtherSimilar]);
  p.log_prob[index_of(DistortionType::SimilarShape)] = shape;
  p.log_prob[index_of(DistortionType::OtherSimilar)] = shape;
  return p;
}

inline DistortionParams estimate_params(const KnowledgeBase& kb, const SimilarityTables& tables,
                                        std::span<const ParallelPair> corpus,
                                        double floor = kDefaultEstimateFloor) {
  return params_from_counts(count_types(kb, tables, corpus), floor);
}

}  // namespace csc
