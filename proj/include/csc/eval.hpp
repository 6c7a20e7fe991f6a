#pragma once

// Sentence- and character-level correction metrics, over-correction rate,
// character error rate and the reachability bound of the channel model.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "csc/chardata.hpp"
#include "csc/distortion.hpp"
#include "csc/error.hpp"
#include "csc/text.hpp"
#include "csc/utf8.hpp"

namespace csc {

struct EvalTriple {
  std::u32string source;
  std::u32string prediction;
  std::u32string target;
};

struct EvalPair {
  std::u32string source;
  std::u32string target;
};

inline bool is_unicode_space(char32_t c) {
  switch (c) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20: case 0x85: case 0xA0:
    case 0x1680: case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

/// Drops whitespace and folds U+FF01..U+FF5E onto ASCII.
inline std::u32string normalize_for_eval(std::u32string_view s) {
  std::u32string out;
  out.reserve(s.size());
  for (char32_t c : s) {
    if (is_unicode_space(c)) continue;
    if (c >= 0xFF01 && c <= 0xFF5E) c -= 0xFEE0;
    out.push_back(c);
  }
  return out;
}

inline double safe_ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

inline double f1(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

struct PRF {
  double p = 0, r = 0, f = 0;
  std::uint64_t correct = 0, predicted = 0, needed = 0;
};

inline PRF make_prf(std::uint64_t correct, std::uint64_t predicted, std::uint64_t needed) {
  PRF out;
  out.correct = correct;
  out.predicted = predicted;
  out.needed = needed;
  out.p = safe_ratio(static_cast<double>(correct), static_cast<double>(predicted));
  out.r = safe_ratio(static_cast<double>(correct), static_cast<double>(needed));
  out.f = f1(out.p, out.r);
  return out;
}

inline PRF sentence_metrics(std::span<const EvalTriple> triples) {
  std::uint64_t correct = 0, modified = 0, needed = 0;
  for (const auto& t : triples) {
    const bool changed = t.prediction != t.source;
    const bool erroneous = t.target != t.source;
    modified += changed;
    needed += erroneous;
    correct += erroneous && t.prediction == t.target;
  }
  return make_prf(correct, modified, needed);
}

inline std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j - 1] + (a[i - 1] != b[j - 1]), prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

enum class EditOp : std::uint8_t { Substitute, Insert, Delete };

/// One change relative to the source. Insertions before the same source
/// index are told apart by `ordinal`.
struct Edit {
  std::size_t pos = 0;
  EditOp op = EditOp::Substitute;
  char32_t ch = 0;
  std::size_t ordinal = 0;

  friend auto operator<=>(const Edit&, const Edit&) = default;
};

/// Edits turning `source` into `other`, sorted. Equal-length strings whose
/// Hamming distance is already minimal are compared position by position.
inline std::vector<Edit> align_edits(std::u32string_view source, std::u32string_view other) {
  std::vector<Edit> edits;
  if (source.size() == other.size()) {
    std::size_t hamming = 0;
    for (std::size_t i = 0; i < source.size(); ++i) hamming += source[i] != other[i];
    if (hamming == levenshtein(source, other)) {
      for (std::size_t i = 0; i < source.size(); ++i) {
        if (source[i] != other[i]) edits.push_back({i, EditOp::Substitute, other[i], 0});
      }
      return edits;
    }
  }
  const std::size_t n = source.size(), m = other.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      at(i, j) = std::min({at(i - 1, j - 1) + (source[i - 1] != other[j - 1]), at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (source[i - 1] != other[j - 1])) {
      if (source[i - 1] != other[j - 1]) edits.push_back({i - 1, EditOp::Substitute, other[j - 1], 0});
      --i;
      --j;
    } else if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      edits.push_back({i, EditOp::Insert, other[j - 1], 0});
      --j;
    } else {
      edits.push_back({i - 1, EditOp::Delete, 0, 0});
      --i;
    }
  }
  std::reverse(edits.begin(), edits.end());
  for (std::size_t k = 1; k < edits.size(); ++k) {
    const auto& p = edits[k - 1];
    auto& e = edits[k];
    if (e.op == EditOp::Insert && p.op == EditOp::Insert && p.pos == e.pos) e.ordinal = p.ordinal + 1;
  }
  std::sort(edits.begin(), edits.end());
  return edits;
}

/// Gold edits come from source->target, predicted edits from
/// source->prediction; a predicted edit counts when it is also gold.
inline PRF char_metrics(std::span<const EvalTriple> triples) {
  std::uint64_t correct = 0, predicted = 0, needed = 0;
  for (const auto& t : triples) {
    const auto gold = align_edits(t.source, t.target);
    const auto pred = align_edits(t.source, t.prediction);
    std::vector<Edit> common;
    std::set_intersection(gold.begin(), gold.end(), pred.begin(), pred.end(), std::back_inserter(common));
    correct += common.size();
    predicted += pred.size();
    needed += gold.size();
  }
  return make_prf(correct, predicted, needed);
}

struct FprCounts {
  double fpr = 0;
  std::uint64_t touched = 0;
  std::uint64_t clean = 0;
};

inline FprCounts fpr_counts(std::span<const EvalTriple> triples) {
  FprCounts out;
  for (const auto& t : triples) {
    if (t.source != t.target) continue;
    ++out.clean;
    out.touched += t.prediction != t.source;
  }
  out.fpr = safe_ratio(static_cast<double>(out.touched), static_cast<double>(out.clean));
  return out;
}

inline double fpr(std::span<const EvalTriple> triples) { return fpr_counts(triples).fpr; }

struct CerCounts {
  double cer = 0;
  std::uint64_t edits = 0;
  std::uint64_t target_chars = 0;
};

inline CerCounts cer_counts(std::span<const EvalTriple> triples) {
  CerCounts out;
  for (const auto& t : triples) {
    out.edits += levenshtein(t.prediction, t.target);
    out.target_chars += t.target.size();
  }
  out.cer = safe_ratio(static_cast<double>(out.edits), static_cast<double>(out.target_chars));
  return out;
}

inline double cer(std::span<const EvalTriple> triples) { return cer_counts(triples).cer; }

inline double cerr(double baseline_cer, double system_cer) {
  if (!(baseline_cer > 0)) throw Error(ErrorKind::InvalidArgument, "baseline CER must be positive");
  return 1.0 - system_cer / baseline_cer;
}

inline bool reachable_type(DistortionType t) {
  return t == DistortionType::Identical || t == DistortionType::SamePinyin ||
         t == DistortionType::SimilarPinyin || t == DistortionType::SimilarShape;
}

struct RecallBound {
  double value = 0;
  std::uint64_t reachable = 0;
  std::uint64_t total = 0;
};

/// Share of sentences whose every (target, source) character pair falls in
/// a type the channel model can produce without tricks.
inline RecallBound recall_upper_bound_counts(const KnowledgeBase& kb, const SimilarityTables& tables,
                                             std::span<const EvalPair> pairs) {
  RecallBound out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [src, tgt] = pairs[i];
    if (src.size() != tgt.size()) {
      throw Error(ErrorKind::InvalidArgument, "pair " + std::to_string(i) + ": source and target lengths differ");
    }
    bool ok = true;
    for (std::size_t k = 0; k < src.size() && ok; ++k) ok = reachable_type(classify(kb, tables, tgt[k], src[k]));
    out.reachable += ok;
    ++out.total;
  }
  out.value = safe_ratio(static_cast<double>(out.reachable), static_cast<double>(out.total));
  return out;
}

inline double recall_upper_bound(const KnowledgeBase& kb, const SimilarityTables& tables,
                                 std::span<const EvalPair> pairs) {
  return recall_upper_bound_counts(kb, tables, pairs).value;
}

struct FilterResult {
  std::vector<EvalTriple> kept;
  std::size_t dropped = 0;
};

inline FilterResult filter_length_mismatch(std::span<const EvalTriple> triples) {
  FilterResult out;
  for (const auto& t : triples) {
    if (normalize_for_eval(t.prediction).size() != normalize_for_eval(t.source).size()) {
      ++out.dropped;
    } else {
      out.kept.push_back(t);
    }
  }
  return out;
}

struct MetricsReport {
  PRF sentence;
  PRF character;
  FprCounts fpr;
  CerCounts cer;
  CerCounts baseline_cer;  // prediction == source
  double cerr = 0;
  std::optional<RecallBound> recall_bound;
  std::size_t evaluated = 0;
  std::size_t dropped = 0;

  nlohmann::json to_json() const {
    nlohmann::json j = {
        {"s_p", sentence.p}, {"s_r", sentence.r}, {"s_f", sentence.f},
        {"c_p", character.p}, {"c_r", character.r}, {"c_f", character.f},
        {"fpr", fpr.fpr}, {"cer", cer.cer}, {"cerr", cerr},
        {"recall_upper_bound", recall_bound ? nlohmann::json(recall_bound->value) : nlohmann::json(nullptr)},
        {"counts",
         {{"sentences", evaluated},
          {"dropped_length_mismatch", dropped},
          {"sentence_correct", sentence.correct},
          {"sentence_modified", sentence.predicted},
          {"sentence_erroneous", sentence.needed},
          {"char_correct", character.correct},
          {"char_modified", character.predicted},
          {"char_erroneous", character.needed},
          {"fpr_touched", fpr.touched},
          {"fpr_clean", fpr.clean},
          {"cer_edits", cer.edits},
          {"cer_target_chars", cer.target_chars},
          {"baseline_cer", baseline_cer.cer},
          {"baseline_cer_edits", baseline_cer.edits}}}};
    if (recall_bound) {
      j["counts"]["recall_reachable"] = recall_bound->reachable;
      j["counts"]["recall_total"] = recall_bound->total;
    }
    return j;
  }
};

/// Normalizes every string, drops length-mismatched predictions and
/// computes the full report. CERR is relative to leaving the source as is.
inline MetricsReport evaluate(std::span<const EvalTriple> triples, const KnowledgeBase* kb = nullptr,
                              const SimilarityTables* tables = nullptr) {
  std::vector<EvalTriple> norm;
  norm.reserve(triples.size());
  for (const auto& t : triples) {
    norm.push_back({normalize_for_eval(t.source), normalize_for_eval(t.prediction), normalize_for_eval(t.target)});
  }
  auto filtered = filter_length_mismatch(norm);
  MetricsReport r;
  r.dropped = filtered.dropped;
  r.evaluated = filtered.kept.size();
  r.sentence = sentence_metrics(filtered.kept);
  r.character = char_metrics(filtered.kept);
  r.fpr = fpr_counts(filtered.kept);
  r.cer = cer_counts(filtered.kept);
  std::vector<EvalTriple> copy = filtered.kept;
  for (auto& t : copy) t.prediction = t.source;
  r.baseline_cer = cer_counts(copy);
  r.cerr = r.baseline_cer.cer > 0 ? cerr(r.baseline_cer.cer, r.cer.cer) : 0.0;
  if (kb != nullptr && tables != nullptr) {
    std::vector<EvalPair> pairs;
    for (const auto& t : filtered.kept) {
      if (t.source.size() == t.target.size()) pairs.push_back({t.source, t.target});
    }
    r.recall_bound = recall_upper_bound_counts(*kb, *tables, pairs);
  }
  return r;
}

/// `source<TAB>target` lines.
inline std::vector<EvalPair> read_pairs(std::istream& in, const std::string& name) {
  std::vector<EvalPair> out;
  text::LineReader reader(in, name);
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = text::split(line, '\t');
    if (f.size() != 2) reader.fail("expected 'source<TAB>target'");
    try {
      out.push_back({decode_utf8(f[0]), decode_utf8(f[1])});
    } catch (const Error& e) {
      reader.fail(e.what());
    }
  }
  return out;
}

/// `source<TAB>prediction<TAB>target` lines.
inline std::vector<EvalTriple> read_triples(std::istream& in, const std::string& name) {
  std::vector<EvalTriple> out;
  text::LineReader reader(in, name);
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = text::split(line, '\t');
    if (f.size() != 3) reader.fail("expected 'source<TAB>prediction<TAB>target'");
    try {
      out.push_back({decode_utf8(f[0]), decode_utf8(f[1]), decode_utf8(f[2])});
    } catch (const Error& e) {
      reader.fail(e.what());
    }
  }
  return out;
}

inline std::vector<EvalPair> load_pairs(const std::filesystem::path& path) {
  auto in = text::open_input(path);
  return read_pairs(in, path.string());
}

inline std::vector<EvalTriple> load_triples(const std::filesystem::path& path) {
  auto in = text::open_input(path);
  return read_triples(in, path.string());
}

}  // namespace csc
