#pragma once

// Token vocabulary and the inverted index that retrieves, for an input
// position, every token whose characters are all related to the input.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "csc/chardata.hpp"
#include "csc/distortion.hpp"
#include "csc/error.hpp"
#include "csc/text.hpp"
#include "csc/utf8.hpp"

namespace csc {

using TokenId = std::int32_t;

struct Token {
  TokenId id = 0;
  std::u32string text;
};

/// Tokens with dense ids in insertion order; duplicates and empty strings
/// are dropped.
class Vocabulary {
 public:
  static constexpr std::size_t kMaxTokenLength = 64;

  Vocabulary() = default;

  explicit Vocabulary(std::span<const std::u32string> texts) {
    for (const auto& t : texts) add(t);
  }

  Vocabulary(std::initializer_list<std::u32string> texts) {
    for (const auto& t : texts) add(t);
  }

  /// One token per line, UTF-8.
  static Vocabulary parse(std::istream& in, const std::string& name) {
    Vocabulary v;
    text::LineReader reader(in, name);
    std::string line;
    while (reader.next(line)) {
      if (line.empty()) continue;
      try {
        v.add(decode_utf8(line));
      } catch (const Error& e) {
        reader.fail(e.what());
      }
    }
    return v;
  }

  static Vocabulary load(const std::filesystem::path& path) {
    auto in = text::open_input(path);
    return parse(in, path.string());
  }

  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  std::size_t max_token_len() const { return max_len_; }

  const Token& at(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<Token>& tokens() const { return tokens_; }

  std::optional<TokenId> find(std::u32string_view text) const {
    auto it = ids_.find(std::u32string(text));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

 private:
  void add(const std::u32string& text) {
    if (text.empty() || ids_.contains(text)) return;
    if (text.size() > kMaxTokenLength) {
      throw Error(ErrorKind::InvalidArgument,
                  "token longer than " + std::to_string(kMaxTokenLength) + " characters");
    }
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back({id, text});
    ids_.emplace(text, id);
    max_len_ = std::max(max_len_, text.size());
  }

  std::vector<Token> tokens_;
  std::unordered_map<std::u32string, TokenId> ids_;
  std::size_t max_len_ = 0;
};

enum class KeyKind : std::uint8_t { Char, Pinyin };

/// A character key matches the input character itself; a pinyin key
/// matches one of the input character's toneless syllables.
struct IndexKey {
  std::uint32_t position = 0;
  KeyKind kind = KeyKind::Char;
  std::string key;

  friend bool operator==(const IndexKey&, const IndexKey&) = default;

  static IndexKey of_char(std::uint32_t pos, char32_t c) { return {pos, KeyKind::Char, encode_utf8(c)}; }
  static IndexKey of_pinyin(std::uint32_t pos, const PinyinSyllable& s) {
    return {pos, KeyKind::Pinyin, s.text()};
  }
};

struct IndexKeyHash {
  std::size_t operator()(const IndexKey& k) const noexcept {
    return std::hash<std::string>{}(k.key) ^ (static_cast<std::size_t>(k.position) << 8) ^
           static_cast<std::size_t>(k.kind);
  }
};

struct Posting {
  TokenId token = 0;
  DistortionType dtype = DistortionType::Identical;
};

/// Candidate tokens at one input position. `identity_missing` is set when
/// the single input character is not itself a vocabulary token; the decoder
/// then adds it as a fallback candidate.
struct Retrieval {
  std::vector<TokenId> tokens;
  bool identity_missing = false;
};

/// Characters shape-related to a given character, computed exactly but
/// only over plausible partners (shared digit pairs or shared parts).
class ShapeNeighbors {
 public:
  explicit ShapeNeighbors(const KnowledgeBase& kb) : kb_(kb) {
    for (const auto& [c, rec] : kb.records()) {
      if (rec.four_corner) {
        const auto& code = *rec.four_corner;
        for (int i = 0; i < 4; ++i) {
          for (int j = i + 1; j < 4; ++j) {
            digit_pairs_[pair_key(i, j, code[i], code[j])].push_back(c);
          }
        }
      }
      if (rec.radical) parts_[*rec.radical].push_back(c);
      for (char32_t comp : rec.components) parts_[comp].push_back(c);
    }
    for (auto& [_, v] : digit_pairs_) std::sort(v.begin(), v.end());
    for (auto& [_, v] : parts_) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
  }

  std::vector<char32_t> of(char32_t c) const {
    const auto* rec = kb_.lookup(c);
    if (rec == nullptr) return {};
    std::unordered_set<char32_t> cands;
    auto add_all = [&](const std::vector<char32_t>& v) { cands.insert(v.begin(), v.end()); };
    if (rec->four_corner) {
      const auto& code = *rec->four_corner;
      for (int i = 0; i < 4; ++i) {
        for (int j = i + 1; j < 4; ++j) {
          auto it = digit_pairs_.find(pair_key(i, j, code[i], code[j]));
          if (it != digit_pairs_.end()) add_all(it->second);
        }
      }
    }
    auto add_part = [&](char32_t part) {
      cands.insert(part);
      auto it = parts_.find(part);
      if (it != parts_.end()) add_all(it->second);
    };
    if (rec->radical) add_part(*rec->radical);
    for (char32_t comp : rec->components) add_part(comp);
    if (auto it = parts_.find(c); it != parts_.end()) add_all(it->second);

    std::vector<char32_t> out;
    for (char32_t s : cands) {
      if (s == c) continue;
      const auto* rs = kb_.lookup(s);
      if (rs != nullptr && shape_related(*rec, *rs)) out.push_back(s);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  static std::uint32_t pair_key(int i, int j, char a, char b) {
    return static_cast<std::uint32_t>(((i * 4 + j) << 16) | (static_cast<unsigned char>(a) << 8) |
                                      static_cast<unsigned char>(b));
  }

  const KnowledgeBase& kb_;
  std::unordered_map<std::uint32_t, std::vector<char32_t>> digit_pairs_;
  std::unordered_map<char32_t, std::vector<char32_t>> parts_;
};

/// Immutable after build; retrieval is const and thread-safe.
class InvertedIndex {
 public:
  static InvertedIndex build(const Vocabulary& vocab, const KnowledgeBase& kb,
                             const SimilarityTables& tables) {
    InvertedIndex index;
    index.token_lengths_.reserve(vocab.size());
    std::unordered_map<char32_t, std::vector<char32_t>> shape_cache;
    std::optional<ShapeNeighbors> neighbors;

    for (const auto& token : vocab.tokens()) {
      index.token_lengths_.push_back(static_cast<std::uint8_t>(token.text.size()));
      for (std::uint32_t r = 0; r < token.text.size(); ++r) {
        const char32_t c = token.text[r];
        index.add(IndexKey::of_char(r, c), token.id, DistortionType::Identical);
        const auto* rec = kb.lookup(c);
        if (rec == nullptr) continue;

        for (char32_t p : kb.interchangeable().partners(c)) {
          index.add(IndexKey::of_char(r, p), token.id, DistortionType::Identical);
        }
        for (const auto& py : rec->pinyins) {
          index.add(IndexKey::of_pinyin(r, py), token.id, DistortionType::SamePinyin);
        }
        for (const auto& py : rec->pinyins) {
          for (const auto& q : similar_inputs(tables, py)) {
            index.add(IndexKey::of_pinyin(r, q), token.id, DistortionType::SimilarPinyin);
          }
        }
        auto it = shape_cache.find(c);
        if (it == shape_cache.end()) {
          if (!neighbors) neighbors.emplace(kb);
          it = shape_cache.emplace(c, neighbors->of(c)).first;
        }
        for (char32_t s : it->second) {
          index.add(IndexKey::of_char(r, s), token.id, DistortionType::SimilarShape);
        }
        for (const auto* set : {&kb.structure_confusion(), &kb.similarity_matrix()}) {
          for (char32_t p : set->partners(c)) {
            index.add(IndexKey::of_char(r, p), token.id, DistortionType::OtherSimilar);
          }
        }
      }
    }
    return index;
  }

  /// Syllables an input may carry when `corrected` was intended, excluding
  /// `corrected` itself.
  static std::vector<PinyinSyllable> similar_inputs(const SimilarityTables& tables,
                                                    const PinyinSyllable& corrected) {
    std::vector<std::string> cons{corrected.consonant};
    for (const auto& c : tables.consonant_targets(corrected.consonant)) cons.push_back(c);
    std::vector<std::string> vows{corrected.vowel};
    for (const auto& v : tables.vowel_targets(corrected.vowel)) vows.push_back(v);
    std::vector<PinyinSyllable> out;
    for (const auto& c : cons) {
      for (const auto& v : vows) {
        PinyinSyllable q{c, v};
        if (pinyin_similar(tables, corrected, q)) out.push_back(std::move(q));
      }
    }
    return out;
  }

  std::span<const Posting> postings(const IndexKey& key) const {
    auto it = map_.find(key);
    if (it == map_.end()) return {};
    return it->second;
  }

  std::size_t key_count() const { return map_.size(); }
  bool empty() const { return map_.empty(); }

  Retrieval retrieve(const Vocabulary& vocab, const KnowledgeBase& kb, std::u32string_view x,
                     std::size_t pos, bool trick_mode) const {
    if (pos >= x.size()) {
      throw Error(ErrorKind::InvalidArgument,
                  "position " + std::to_string(pos) + " outside input of length " +
                      std::to_string(x.size()));
    }
    const std::size_t remaining = x.size() - pos;
    const std::size_t span = std::min(remaining, vocab.max_token_len());
    std::unordered_map<TokenId, std::uint64_t> hits;

    auto collect = [&](const IndexKey& key, std::uint32_t r) {
      for (const auto& p : postings(key)) {
        if (token_lengths_[static_cast<std::size_t>(p.token)] <= remaining) {
          hits[p.token] |= std::uint64_t{1} << r;
        }
      }
    };
    for (std::uint32_t r = 0; r < span; ++r) {
      const char32_t c = x[pos + r];
      collect(IndexKey::of_char(r, c), r);
      if (const auto* rec = kb.lookup(c)) {
        for (const auto& py : rec->pinyins) collect(IndexKey::of_pinyin(r, py), r);
      }
    }

    Retrieval out;
    for (const auto& [id, mask] : hits) {
      const std::size_t len = token_lengths_[static_cast<std::size_t>(id)];
      const std::uint64_t full = len == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << len) - 1);
      if (mask == full) {
        out.tokens.push_back(id);
      } else if (trick_mode && len >= 2 && static_cast<std::size_t>(std::popcount(mask)) == len - 1) {
        const int r = std::countr_zero(~mask & full);
        if (trick_allowed(kb, vocab.at(id).text[static_cast<std::size_t>(r)], x[pos + static_cast<std::size_t>(r)])) {
          out.tokens.push_back(id);
        }
      }
    }
    std::sort(out.tokens.begin(), out.tokens.end());
    out.identity_missing = !vocab.find(x.substr(pos, 1)).has_value();
    return out;
  }

 private:
  void add(const IndexKey& key, TokenId id, DistortionType dtype) {
    auto& list = map_[key];
    for (auto& p : list) {
      if (p.token == id) {
        if (index_of(dtype) < index_of(p.dtype)) p.dtype = dtype;
        return;
      }
    }
    list.push_back({id, dtype});
  }

  std::unordered_map<IndexKey, std::vector<Posting>, IndexKeyHash> map_;
  std::vector<std::uint8_t> token_lengths_;
};

inline InvertedIndex build_index(const Vocabulary& vocab, const KnowledgeBase& kb,
                                 const SimilarityTables& tables) {
  return InvertedIndex::build(vocab, kb, tables);
}

inline Retrieval retrieve_candidates(const InvertedIndex& index, const Vocabulary& vocab,
                                     const KnowledgeBase& kb, std::u32string_view x,
                                     std::size_t pos, bool trick_mode = true) {
  return index.retrieve(vocab, kb, x, pos, trick_mode);
}

/// Sum of per-character channel log-probabilities for placing `token` at
/// `pos`. One Unrelated position between known characters costs the trick
/// constant; anything beyond that is -inf. `type_at(r, c)` classifies token
/// character `c` against input position `pos + r`.
template <typename Classifier>
double token_distortion_score_with(const KnowledgeBase& kb, const DistortionParams& params, std::u32string_view x,
                                   std::size_t pos, std::u32string_view token, Classifier&& type_at) {
  if (pos > x.size() || token.size() > x.size() - pos) {
    throw Error(ErrorKind::InvalidArgument, "token runs past the end of the input");
  }
  double score = 0.0;
  int unrelated = 0;
  for (std::size_t r = 0; r < token.size(); ++r) {
    const DistortionType t = type_at(r, token[r]);
    if (t == DistortionType::Unrelated) {
      if (++unrelated > 1 || !trick_allowed(kb, token[r], x[pos + r])) return kNegInf;
    }
    score += distortion_logprob(params, t);
    if (score == kNegInf) return kNegInf;
  }
  return score;
}

inline double token_distortion_score(const KnowledgeBase& kb, const SimilarityTables& tables,
                                     const DistortionParams& params, std::u32string_view x,
                                     std::size_t pos, std::u32string_view token) {
  return token_distortion_score_with(kb, params, x, pos, token, [&](std::size_t r, char32_t c) {
    return classify(kb, tables, c, x[pos + r]);
  });
}

}  // namespace csc
