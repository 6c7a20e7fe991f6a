#pragma once

// Static character knowledge: toneless pronunciations, four-corner codes,
// radicals and components, plus the curated pair sets used as tricks.

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "csc/error.hpp"
#include "csc/log.hpp"
#include "csc/text.hpp"
#include "csc/utf8.hpp"

namespace csc {

/// Toneless syllable split into initial and final. "ü" is stored as "v".
struct PinyinSyllable {
  std::string consonant;
  std::string vowel;

  std::string text() const { return consonant + vowel; }

  friend bool operator==(const PinyinSyllable&, const PinyinSyllable&) = default;
  friend auto operator<=>(const PinyinSyllable&, const PinyinSyllable&) = default;
};

struct PinyinSyllableHash {
  std::size_t operator()(const PinyinSyllable& s) const noexcept {
    return std::hash<std::string>{}(s.consonant) * 31u ^ std::hash<std::string>{}(s.vowel);
  }
};

inline constexpr std::array<std::string_view, 23> kPinyinInitials = {
    "b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "j",
    "q", "x", "zh", "ch", "sh", "r", "z", "c", "s", "y", "w"};

/// Lowercases, removes tone marks and tone digits, and maps ü (and its
/// toned forms) to "v". Throws on characters that cannot occur in pinyin.
inline std::string strip_tones(std::string_view syllable) {
  std::string out;
  for (char32_t cp : decode_utf8(syllable)) {
    if (cp >= U'A' && cp <= U'Z') cp = cp - U'A' + U'a';
    if ((cp >= U'a' && cp <= U'z')) {
      out.push_back(static_cast<char>(cp));
      continue;
    }
    if (cp >= U'1' && cp <= U'5') continue;
    switch (cp) {
      case U'ā': case U'á': case U'ǎ': case U'à': out.push_back('a'); break;
      case U'ē': case U'é': case U'ě': case U'è': case U'ê': out.push_back('e'); break;
      case U'ī': case U'í': case U'ǐ': case U'ì': out.push_back('i'); break;
      case U'ō': case U'ó': case U'ǒ': case U'ò': out.push_back('o'); break;
      case U'ū': case U'ú': case U'ǔ': case U'ù': out.push_back('u'); break;
      case U'ü': case U'ǖ': case U'ǘ': case U'ǚ': case U'ǜ': case U'Ü': out.push_back('v'); break;
      case U'ń': case U'ň': case U'ǹ': out.push_back('n'); break;
      case U'ḿ': out.push_back('m'); break;
      default:
        throw Error(ErrorKind::InvalidArgument,
                    "not a pinyin syllable: '" + std::string(syllable) + "'");
    }
  }
  return out;
}

/// Longest-initial split of a toneless syllable. Zero-initial syllables get
/// an empty consonant; the syllabic nasals (m, n, ng) are treated as finals.
inline PinyinSyllable decompose_pinyin(std::string_view syllable_text) {
  const std::string s = strip_tones(syllable_text);
  auto fail = [&]() -> PinyinSyllable {
    throw Error(ErrorKind::InvalidArgument,
                "cannot split pinyin syllable '" + std::string(syllable_text) + "'");
  };
  if (s.empty()) return fail();
  if (s == "m" || s == "n" || s == "ng") return {"", s};

  std::string_view initial;
  for (auto cand : kPinyinInitials) {
    if (s.starts_with(cand) && cand.size() > initial.size()) initial = cand;
  }
  std::string vowel = s.substr(initial.size());
  if (vowel.empty()) return fail();
  const bool nasal = vowel == "m" || vowel == "n" || vowel == "ng";
  if (!nasal && std::string_view("aeiouv").find(vowel.front()) == std::string_view::npos) {
    return fail();
  }
  return {std::string(initial), std::move(vowel)};
}

struct CharacterRecord {
  char32_t ch = 0;
  std::vector<PinyinSyllable> pinyins;
  std::optional<std::string> four_corner;
  std::optional<char32_t> radical;
  std::vector<char32_t> components;  // sorted multiset

  friend bool operator==(const CharacterRecord&, const CharacterRecord&) = default;
};

/// Symmetric set of character pairs with per-character adjacency.
class CharPairSet {
 public:
  void insert(char32_t a, char32_t b) {
    if (a == b) return;
    if (pairs_.insert(key(a, b)).second) {
      partners_[a].push_back(b);
      partners_[b].push_back(a);
    }
  }

  bool contains(char32_t a, char32_t b) const { return pairs_.contains(key(a, b)); }

  std::span<const char32_t> partners(char32_t c) const {
    auto it = partners_.find(c);
    if (it == partners_.end()) return {};
    return it->second;
  }

  std::size_t size() const { return pairs_.size(); }

  friend bool operator==(const CharPairSet& a, const CharPairSet& b) { return a.pairs_ == b.pairs_; }

 private:
  static std::uint64_t key(char32_t a, char32_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }

  std::unordered_set<std::uint64_t> pairs_;
  std::unordered_map<char32_t, std::vector<char32_t>> partners_;
};

/// Immutable after load; safe to share across threads.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;

  /// Reads the three TSV sources. Later duplicate lines replace earlier
  /// ones; trick pairs naming unknown characters are dropped with a warning.
  static KnowledgeBase parse(std::istream& pinyin, const std::string& pinyin_name,
                             std::istream& shape, const std::string& shape_name,
                             std::istream& tricks, const std::string& tricks_name) {
    KnowledgeBase kb;
    kb.parse_pinyin(pinyin, pinyin_name);
    kb.parse_shape(shape, shape_name);
    kb.parse_tricks(tricks, tricks_name);
    return kb;
  }

  static KnowledgeBase load(const std::filesystem::path& pinyin_path,
                            const std::filesystem::path& shape_path,
                            const std::filesystem::path& tricks_path) {
    auto p = text::open_input(pinyin_path);
    auto s = text::open_input(shape_path);
    auto t = text::open_input(tricks_path);
    return parse(p, pinyin_path.string(), s, shape_path.string(), t, tricks_path.string());
  }

  /// Loads `pinyin.tsv`, `shape.tsv` and `tricks.tsv` from a directory.
  static KnowledgeBase load_dir(const std::filesystem::path& dir) {
    return load(dir / "pinyin.tsv", dir / "shape.tsv", dir / "tricks.tsv");
  }

  const CharacterRecord* lookup(char32_t c) const {
    auto it = records_.find(c);
    return it == records_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return records_.size(); }
  const std::unordered_map<char32_t, CharacterRecord>& records() const { return records_; }

  const CharPairSet& interchangeable() const { return interchangeable_; }
  const CharPairSet& structure_confusion() const { return structure_confusion_; }
  const CharPairSet& similarity_matrix() const { return similarity_matrix_; }

  friend bool operator==(const KnowledgeBase&, const KnowledgeBase&) = default;

 private:
  CharacterRecord& record_for(char32_t c) {
    auto& rec = records_[c];
    rec.ch = c;
    return rec;
  }

  static char32_t single_char(text::LineReader& reader, std::string_view field,
                              std::string_view what) {
    std::u32string decoded;
    try {
      decoded = decode_utf8(field);
    } catch (const Error& e) {
      reader.fail(e.what());
    }
    if (decoded.size() != 1) {
      reader.fail(std::string(what) + " must be a single character, got '" +
                  std::string(field) + "'");
    }
    return decoded.front();
  }

  void parse_pinyin(std::istream& in, const std::string& name) {
    text::LineReader reader(in, name);
    std::string line;
    std::unordered_set<char32_t> seen;
    while (reader.next(line)) {
      if (text::skippable(line)) continue;
      const auto fields = text::split(line, '\t');
      if (fields.size() != 2) reader.fail("expected 'char<TAB>syllables'");
      const char32_t c = single_char(reader, fields[0], "character");
      std::vector<PinyinSyllable> pinyins;
      for (auto raw : text::split(fields[1], ',')) {
        raw = text::trim(raw);
        if (raw.empty()) continue;
        PinyinSyllable syl;
        try {
          syl = decompose_pinyin(raw);
        } catch (const Error& e) {
          reader.fail(e.what());
        }
        if (std::find(pinyins.begin(), pinyins.end(), syl) == pinyins.end()) {
          pinyins.push_back(std::move(syl));
        }
      }
      if (pinyins.empty()) reader.fail("no pronunciations listed");
      if (!seen.insert(c).second) {
        log::warn(name + ":" + std::to_string(reader.line_no()) + ": duplicate entry for '" +
                  encode_utf8(c) + "', keeping the last one");
      }
      record_for(c).pinyins = std::move(pinyins);
    }
  }

  void parse_shape(std::istream& in, const std::string& name) {
    text::LineReader reader(in, name);
    std::string line;
    std::unordered_set<char32_t> seen;
    while (reader.next(line)) {
      if (text::skippable(line)) continue;
      auto fields = text::split(line, '\t');
      if (fields.size() < 2 || fields.size() > 4) {
        reader.fail("expected 'char<TAB>four_corner<TAB>radical<TAB>components'");
      }
      fields.resize(4);
      const char32_t c = single_char(reader, fields[0], "character");

      std::optional<std::string> code;
      if (!fields[1].empty()) {
        if (fields[1].size() != 5 ||
            !std::all_of(fields[1].begin(), fields[1].end(), [](char d) { return d >= '0' && d <= '9'; })) {
          reader.fail("four-corner code must be 5 digits, got '" + std::string(fields[1]) + "'");
        }
        code = std::string(fields[1]);
      }
      std::optional<char32_t> radical;
      if (!fields[2].empty()) radical = single_char(reader, fields[2], "radical");
      std::vector<char32_t> components;
      if (!fields[3].empty()) {
        for (auto comp : text::split(fields[3], ',')) {
          if (comp.empty()) continue;
          components.push_back(single_char(reader, comp, "component"));
        }
      }
      if (!seen.insert(c).second) {
        log::warn(name + ":" + std::to_string(reader.line_no()) + ": duplicate entry for '" +
                  encode_utf8(c) + "', keeping the last one");
      }
      std::sort(components.begin(), components.end());
      auto& rec = record_for(c);
      rec.four_corner = std::move(code);
      rec.radical = radical;
      rec.components = std::move(components);
    }
  }

  void parse_tricks(std::istream& in, const std::string& name) {
    text::LineReader reader(in, name);
    std::string line;
    CharPairSet* section = nullptr;
    while (reader.next(line)) {
      if (text::skippable(line)) continue;
      const auto t = text::trim(line);
      if (t.front() == '[') {
        if (t == "[interchangeable]") section = &interchangeable_;
        else if (t == "[structure_confusion]") section = &structure_confusion_;
        else if (t == "[similarity_matrix]") section = &similarity_matrix_;
        else reader.fail("unknown section " + std::string(t));
        continue;
      }
      if (section == nullptr) reader.fail("pair listed before any section header");
      const auto fields = text::split(t, '\t');
      if (fields.size() != 2) reader.fail("expected 'charA<TAB>charB'");
      const char32_t a = single_char(reader, fields[0], "character");
      const char32_t b = single_char(reader, fields[1], "character");
      if (!records_.contains(a) || !records_.contains(b)) {
        log::warn(name + ":" + std::to_string(reader.line_no()) + ": dropping pair '" +
                  std::string(fields[0]) + "'/'" + std::string(fields[1]) +
                  "' with an unknown character");
        continue;
      }
      section->insert(a, b);
    }
  }

  std::unordered_map<char32_t, CharacterRecord> records_;
  CharPairSet interchangeable_;
  CharPairSet structure_confusion_;
  CharPairSet similarity_matrix_;
};

inline const CharacterRecord* lookup(const KnowledgeBase& kb, char32_t c) { return kb.lookup(c); }

}  // namespace csc
