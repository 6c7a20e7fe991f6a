#pragma once

// Language-model backends behind one contract: given a knowledge prefix, the
// tokens emitted so far and a candidate set, return each candidate's
// next-token log-probability and the normalized next-token entropy.

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "csc/error.hpp"
#include "csc/text.hpp"
#include "csc/utf8.hpp"

namespace csc {

/// ln(1e-8): score for tokens a backend cannot evaluate.
inline constexpr double kUnknownTokenLogProb = -18.420680743952367;

struct LMQuery {
  std::u32string knowledge_prefix;
  std::vector<std::u32string> token_prefix;
  std::vector<std::u32string> candidates;
};

/// `logprobs[i]` belongs to `candidates[i]` of the query.
struct LMResponse {
  std::vector<double> logprobs;
  double entropy = 0.0;
};

inline std::u32string flatten_prefix(std::u32string_view knowledge_prefix,
                                     std::span<const std::u32string> token_prefix) {
  std::u32string out(knowledge_prefix);
  for (const auto& t : token_prefix) out += t;
  return out;
}

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual LMResponse next_token_logprobs(const LMQuery& query) const = 0;

  /// One call per decoding step; backends may override to pipeline.
  virtual std::vector<LMResponse> next_token_logprobs_batch(std::span<const LMQuery> queries) const {
    std::vector<LMResponse> out;
    out.reserve(queries.size());
    for (const auto& q : queries) out.push_back(next_token_logprobs(q));
    return out;
  }

  /// Whether concurrent calls on one instance are allowed.
  virtual bool concurrency_safe() const = 0;

  /// Tokens the backend can score natively; empty when unknown.
  virtual std::vector<std::u32string> vocabulary() const { return {}; }
};

inline LMResponse next_token_logprobs(const LanguageModel& backend, const LMQuery& query) {
  return backend.next_token_logprobs(query);
}

/// Character n-gram model with interpolated absolute discounting; lower
/// orders use continuation counts (interpolated Kneser-Ney). Histories
/// are padded with a begin-of-sentence symbol; characters not seen in
/// training map to an unknown symbol that only receives backoff mass.
class NGramModel final : public LanguageModel {
 public:
  static constexpr char32_t kBos = 0x110000;
  static constexpr char32_t kUnk = 0x110001;
  static constexpr std::string_view kMagic = "#csc-ngram v1";

  NGramModel() = default;

  /// Trains on one sentence per line. `lexicon` lists multi-character
  /// tokens exposed through `vocabulary()`.
  static NGramModel train(std::istream& corpus, int order, std::vector<std::u32string> lexicon = {}) {
    require(order >= 2, "n-gram order must be at least 2");
    NGramModel m;
    m.order_ = order;

    std::vector<std::u32string> sentences;
    std::string line;
    std::size_t line_no = 0;
    std::map<char32_t, bool> seen;
    while (std::getline(corpus, line)) {
      ++line_no;
      auto view = text::chomp(line);
      if (view.empty()) continue;
      std::u32string s;
      try {
        s = decode_utf8(view);
      } catch (const Error& e) {
        throw ParseError("corpus", line_no, e.what());
      }
      for (char32_t c : s) seen[c] = true;
      sentences.push_back(std::move(s));
    }
    if (sentences.empty()) throw Error(ErrorKind::InvalidArgument, "empty training corpus");

    for (const auto& [c, _] : seen) m.alphabet_.push_back(c);
    m.alphabet_.push_back(kUnk);
    m.index_alphabet();

    // Raw counts keyed by context (alphabet indices; BOS is encoded as size()).
    std::vector<std::map<std::u32string, std::map<std::uint32_t, std::uint32_t>>> raw(order);
    const char32_t bos_idx = static_cast<char32_t>(m.alphabet_.size());
    for (const auto& s : sentences) {
      std::u32string hist(static_cast<std::size_t>(order - 1), bos_idx);
      for (char32_t c : s) {
        const std::uint32_t w = m.symbol_index(c);
        for (int k = 1; k <= order; ++k) {
          raw[k - 1][hist.substr(hist.size() - static_cast<std::size_t>(k - 1))][w] += 1;
        }
        hist.push_back(static_cast<char32_t>(w));
      }
    }

    // Lower orders count distinct left extensions instead of occurrences.
    for (int k = 0; k + 1 < order; ++k) {
      std::map<std::u32string, std::map<std::uint32_t, std::uint32_t>> cont;
      for (const auto& [ctx, next] : raw[k + 1]) {
        auto& slot = cont[ctx.substr(1)];
        for (auto [w, _] : next) slot[w] += 1;
      }
      raw[k] = std::move(cont);
    }
    m.levels_.resize(static_cast<std::size_t>(order));
    m.discounts_.resize(static_cast<std::size_t>(order));
    for (int k = 0; k < order; ++k) {
      std::uint64_t n1 = 0, n2 = 0;
      for (auto& [ctx, next] : raw[k]) {
        Context stats;
        for (auto [w, c] : next) {
          stats.next.emplace_back(w, c);
          stats.total += c;
          n1 += c == 1;
          n2 += c == 2;
        }
        m.levels_[k].emplace(ctx, std::move(stats));
      }
      double d = (n1 > 0 && n2 > 0) ? static_cast<double>(n1) / static_cast<double>(n1 + 2 * n2) : 0.5;
      m.discounts_[k] = std::clamp(d, 0.05, 0.95);
    }

    std::sort(lexicon.begin(), lexicon.end());
    lexicon.erase(std::unique(lexicon.begin(), lexicon.end()), lexicon.end());
    std::erase_if(lexicon, [](const std::u32string& w) { return w.size() < 2; });
    m.lexicon_ = std::move(lexicon);
    m.finalize();
    return m;
  }

  static NGramModel train_files(const std::filesystem::path& corpus_path, int order,
                                const std::filesystem::path& lexicon_path = {}) {
    auto in = text::open_input(corpus_path);
    std::vector<std::u32string> lexicon;
    if (!lexicon_path.empty()) lexicon = read_lexicon(lexicon_path);
    return train(in, order, std::move(lexicon));
  }

  static std::vector<std::u32string> read_lexicon(const std::filesystem::path& path) {
    auto in = text::open_input(path);
    text::LineReader reader(in, path.string());
    std::vector<std::u32string> words;
    std::string line;
    while (reader.next(line)) {
      const auto w = text::trim(line);
      if (w.empty()) continue;
      try {
        words.push_back(decode_utf8(w));
      } catch (const Error& e) {
        reader.fail(e.what());
      }
    }
    return words;
  }

  int order() const { return order_; }
  std::size_t alphabet_size() const { return alphabet_.size(); }
  std::span<const double> discounts() const { return discounts_; }
  const std::vector<std::u32string>& lexicon() const { return lexicon_; }

  /// Conditional probability of `c` after `history` (already including any
  /// knowledge prefix); sentence-start padding is added here.
  double char_prob(std::u32string_view history, char32_t c) const {
    const auto ctx = context_indices(history);
    return prob_index(ctx, symbol_index(c));
  }

  /// Full next-character distribution over the alphabet (unknown last).
  std::vector<double> distribution(std::u32string_view history) const {
    const auto ctx = context_indices(history);
    const double uniform = 1.0 / static_cast<double>(alphabet_.size());
    std::vector<double> p(alphabet_.size(), uniform);
    for (int k = 1; k <= order_; ++k) {
      const auto* stats = find_context(k, ctx);
      if (stats == nullptr) continue;
      const double d = discounts_[static_cast<std::size_t>(k - 1)];
      const double total = static_cast<double>(stats->total);
      const double backoff = d * static_cast<double>(stats->next.size()) / total;
      for (auto& v : p) v *= backoff;
      for (auto [w, c] : stats->next) p[w] += std::max(static_cast<double>(c) - d, 0.0) / total;
    }
    return p;
  }

  /// Entropy of the next-character distribution divided by ln |alphabet|.
  /// Every symbol outside the explicitly seen continuations carries
  /// `scale * p1(w)`, so their share comes from precomputed unigram sums.
  double normalized_entropy(std::u32string_view history) const {
    const auto ctx = context_indices(history);
    double scale = 1.0;
    std::vector<std::pair<std::uint32_t, double>> extra, merged;
    for (int k = 2; k <= order_; ++k) {
      const auto* stats = find_context(k, ctx);
      if (stats == nullptr) continue;
      const double d = discounts_[static_cast<std::size_t>(k - 1)];
      const double total = static_cast<double>(stats->total);
      const double backoff = d * static_cast<double>(stats->next.size()) / total;
      merged.clear();
      auto i = extra.begin();
      for (auto [w, c] : stats->next) {
        for (; i != extra.end() && i->first < w; ++i) merged.emplace_back(i->first, backoff * i->second);
        double v = std::max(static_cast<double>(c) - d, 0.0) / total;
        if (i != extra.end() && i->first == w) v += backoff * (i++)->second;
        merged.emplace_back(w, v);
      }
      for (; i != extra.end(); ++i) merged.emplace_back(i->first, backoff * i->second);
      std::swap(extra, merged);
      scale *= backoff;
    }
    double h = 0.0, seen_p1 = 0.0, seen_plogp = 0.0;
    for (auto [w, e] : extra) {
      const double p1 = unigram_[w];
      const double p = scale * p1 + e;
      if (p > 0) h -= p * std::log(p);
      seen_p1 += p1;
      seen_plogp += p1 * std::log(p1);
    }
    const double rest = std::max(unigram_sum_ - seen_p1, 0.0);
    h -= scale * std::log(scale) * rest + scale * (unigram_plogp_ - seen_plogp);
    const double max_h = std::log(static_cast<double>(alphabet_.size()));
    return max_h > 0 ? std::clamp(h / max_h, 0.0, 1.0) : 0.0;
  }

  LMResponse next_token_logprobs(const LMQuery& query) const override {
    std::u32string history = flatten_prefix(query.knowledge_prefix, query.token_prefix);
    LMResponse out;
    out.entropy = normalized_entropy(history);
    out.logprobs.reserve(query.candidates.size());
    const std::size_t base = history.size();
    for (const auto& cand : query.candidates) {
      double lp = 0.0;
      history.resize(base);
      for (char32_t c : cand) {
        lp += std::log(char_prob(history, c));
        history.push_back(c);
      }
      out.logprobs.push_back(cand.empty() ? kUnknownTokenLogProb : lp);
    }
    return out;
  }

  bool concurrency_safe() const override { return true; }

  std::vector<std::u32string> vocabulary() const override {
    std::vector<std::u32string> v;
    v.reserve(alphabet_.size() + lexicon_.size());
    for (char32_t c : alphabet_) {
      if (c != kUnk) v.emplace_back(1, c);
    }
    for (const auto& w : lexicon_) v.push_back(w);
    return v;
  }

  // Text model file: header, discounts, alphabet (hex code points), lexicon
  // (UTF-8), then one line per context per level with `index:count` pairs.
  // Every section is written in sorted order so output is reproducible.
  void save(std::ostream& out) const {
    char buf[64];
    out << kMagic << '\n' << "order " << order_ << '\n' << "discounts";
    for (double d : discounts_) {
      std::snprintf(buf, sizeof buf, " %.17g", d);
      out << buf;
    }
    out << '\n' << "alphabet " << alphabet_.size() << '\n';
    for (char32_t c : alphabet_) {
      std::snprintf(buf, sizeof buf, "%" PRIx32 "\n", static_cast<std::uint32_t>(c));
      out << buf;
    }
    out << "lexicon " << lexicon_.size() << '\n';
    for (const auto& w : lexicon_) out << encode_utf8(w) << '\n';
    for (int k = 1; k <= order_; ++k) {
      const auto& level = levels_[static_cast<std::size_t>(k - 1)];
      std::vector<const std::pair<const std::u32string, Context>*> sorted;
      sorted.reserve(level.size());
      for (const auto& entry : level) sorted.push_back(&entry);
      std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->first < b->first; });
      out << "level " << k << ' ' << sorted.size() << '\n';
      for (const auto* entry : sorted) {
        if (entry->first.empty()) out << '-';
        for (std::size_t i = 0; i < entry->first.size(); ++i) {
          if (i) out << ' ';
          out << static_cast<std::uint32_t>(entry->first[i]);
        }
        out << '\t' << entry->second.total << '\t';
        bool first = true;
        for (auto [w, c] : entry->second.next) {
          if (!first) out << ' ';
          first = false;
          out << w << ':' << c;
        }
        out << '\n';
      }
    }
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    save(out);
    if (!out) throw LoadError("write failed for " + path.string());
  }

  static NGramModel load(std::istream& in, const std::string& name) {
    NGramModel m;
    text::LineReader reader(in, name);
    std::string line;
    auto expect_line = [&]() {
      if (!reader.next(line)) reader.fail("unexpected end of model file");
    };
    expect_line();
    if (line != kMagic) reader.fail("not a csc n-gram model");
    expect_line();
    if (std::sscanf(line.c_str(), "order %d", &m.order_) != 1 || m.order_ < 2) reader.fail("bad order line");
    expect_line();
    {
      std::istringstream ss(line);
      std::string tag;
      ss >> tag;
      if (tag != "discounts") reader.fail("expected discounts");
      double d;
      while (ss >> d) m.discounts_.push_back(d);
      if (m.discounts_.size() != static_cast<std::size_t>(m.order_)) reader.fail("wrong discount count");
    }
    expect_line();
    std::size_t n = 0;
    if (std::sscanf(line.c_str(), "alphabet %zu", &n) != 1 || n == 0) reader.fail("bad alphabet line");
    for (std::size_t i = 0; i < n; ++i) {
      expect_line();
      m.alphabet_.push_back(static_cast<char32_t>(std::stoul(line, nullptr, 16)));
    }
    if (m.alphabet_.back() != kUnk) reader.fail("alphabet must end with the unknown symbol");
    m.index_alphabet();
    expect_line();
    if (std::sscanf(line.c_str(), "lexicon %zu", &n) != 1) reader.fail("bad lexicon line");
    for (std::size_t i = 0; i < n; ++i) {
      expect_line();
      try {
        m.lexicon_.push_back(decode_utf8(line));
      } catch (const Error& e) {
        reader.fail(e.what());
      }
    }
    m.levels_.resize(static_cast<std::size_t>(m.order_));
    const auto sym_limit = static_cast<std::uint32_t>(m.alphabet_.size());
    for (int k = 1; k <= m.order_; ++k) {
      expect_line();
      int level = 0;
      std::size_t count = 0;
      if (std::sscanf(line.c_str(), "level %d %zu", &level, &count) != 2 || level != k) {
        reader.fail("bad level header");
      }
      auto& table = m.levels_[static_cast<std::size_t>(k - 1)];
      table.reserve(count);
      for (std::size_t i = 0; i < count; ++i) {
        expect_line();
        const auto fields = text::split(line, '\t');
        if (fields.size() != 3) reader.fail("bad context line");
        std::u32string ctx;
        if (fields[0] != "-") {
          for (auto tok : text::split(fields[0], ' ')) {
            const auto v = static_cast<std::uint32_t>(std::stoul(std::string(tok)));
            if (v > sym_limit) reader.fail("context symbol out of range");
            ctx.push_back(static_cast<char32_t>(v));
          }
        }
        if (ctx.size() != static_cast<std::size_t>(k - 1)) reader.fail("context length mismatch");
        Context stats;
        stats.total = std::stoull(std::string(fields[1]));
        std::uint64_t sum = 0;
        for (auto pair : text::split(fields[2], ' ')) {
          const auto colon = pair.find(':');
          if (colon == std::string_view::npos) reader.fail("bad count entry");
          const auto w = static_cast<std::uint32_t>(std::stoul(std::string(pair.substr(0, colon))));
          const auto c = static_cast<std::uint32_t>(std::stoul(std::string(pair.substr(colon + 1))));
          if (w >= sym_limit) reader.fail("symbol out of range");
          stats.next.emplace_back(w, c);
          sum += c;
        }
        if (sum != stats.total || stats.total == 0) reader.fail("context total does not match counts");
        table.emplace(std::move(ctx), std::move(stats));
      }
    }
    m.finalize();
    return m;
  }

  static NGramModel load(const std::filesystem::path& path) {
    auto in = text::open_input(path);
    return load(in, path.string());
  }

 private:
  struct Context {
    std::uint64_t total = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> next;  // sorted by symbol
  };

  void index_alphabet() {
    index_.clear();
    for (std::size_t i = 0; i < alphabet_.size(); ++i) {
      index_.emplace(alphabet_[i], static_cast<std::uint32_t>(i));
    }
  }

  std::uint32_t symbol_index(char32_t c) const {
    auto it = index_.find(c);
    return it == index_.end() ? static_cast<std::uint32_t>(alphabet_.size() - 1) : it->second;
  }

  /// Last order-1 symbols of the padded history, as alphabet indices.
  std::u32string context_indices(std::u32string_view history) const {
    const std::size_t need = static_cast<std::size_t>(order_ - 1);
    std::u32string ctx;
    ctx.reserve(need);
    const auto bos = static_cast<char32_t>(alphabet_.size());
    const std::size_t take = std::min(need, history.size());
    for (std::size_t i = take; i < need; ++i) ctx.push_back(bos);
    for (std::size_t i = history.size() - take; i < history.size(); ++i) {
      ctx.push_back(static_cast<char32_t>(symbol_index(history[i])));
    }
    return ctx;
  }

  const Context* find_context(int k, const std::u32string& ctx) const {
    const auto& level = levels_[static_cast<std::size_t>(k - 1)];
    auto it = level.find(ctx.substr(ctx.size() - static_cast<std::size_t>(k - 1)));
    return it == level.end() ? nullptr : &it->second;
  }

  double prob_index(const std::u32string& ctx, std::uint32_t w) const {
    double p = unigram_[w];
    for (int k = 2; k <= order_; ++k) {
      const auto* stats = find_context(k, ctx);
      if (stats == nullptr) continue;
      const double d = discounts_[static_cast<std::size_t>(k - 1)];
      const double total = static_cast<double>(stats->total);
      const double backoff = d * static_cast<double>(stats->next.size()) / total;
      auto it = std::lower_bound(stats->next.begin(), stats->next.end(), std::make_pair(w, 0u),
                                 [](const auto& a, const auto& b) { return a.first < b.first; });
      const double c = (it != stats->next.end() && it->first == w) ? it->second : 0.0;
      p = std::max(c - d, 0.0) / total + backoff * p;
    }
    return p;
  }

  /// Caches the context-free level, which every query starts from.
  void finalize() {
    const double uniform = 1.0 / static_cast<double>(alphabet_.size());
    unigram_.assign(alphabet_.size(), uniform);
    if (const auto* stats = find_context(1, std::u32string())) {
      const double d = discounts_[0];
      const double total = static_cast<double>(stats->total);
      const double backoff = d * static_cast<double>(stats->next.size()) / total;
      for (auto& v : unigram_) v *= backoff;
      for (auto [w, c] : stats->next) unigram_[w] += std::max(static_cast<double>(c) - d, 0.0) / total;
    }
    unigram_sum_ = 0.0;
    unigram_plogp_ = 0.0;
    for (double v : unigram_) {
      unigram_sum_ += v;
      if (v > 0) unigram_plogp_ += v * std::log(v);
    }
  }

  int order_ = 0;
  std::vector<double> discounts_;
  std::vector<char32_t> alphabet_;  // sorted code points, unknown symbol last
  std::unordered_map<char32_t, std::uint32_t> index_;
  std::vector<std::unordered_map<std::u32string, Context>> levels_;
  std::vector<std::u32string> lexicon_;
  std::vector<double> unigram_;
  double unigram_sum_ = 0.0;
  double unigram_plogp_ = 0.0;
};

inline NGramModel train_ngram(const std::filesystem::path& corpus_path, int n,
                              const std::filesystem::path& lexicon_path = {}) {
  return NGramModel::train_files(corpus_path, n, lexicon_path);
}

}  // namespace csc
