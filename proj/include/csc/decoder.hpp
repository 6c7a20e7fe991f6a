#pragma once

// Token-lattice beam search. Each step extends every unfinished beam entry by
// one retrieved token, scores the extension with
//   lm + m * (dm + LR),  LR = alpha * (len - 1),  m = 1 + entropy,
// and keeps the global top K over finished and extended entries.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "csc/chardata.hpp"
#include "csc/distortion.hpp"
#include "csc/error.hpp"
#include "csc/lexicon_index.hpp"
#include "csc/lm.hpp"

namespace csc {

struct DecoderConfig {
  std::size_t beam_size = 8;
  double alpha = 2.5;
  bool length_reward = true;
  bool faithfulness_reward = true;
  bool trick_mode = true;
  std::optional<std::size_t> candidate_cap;
  std::u32string knowledge_prefix;

  void validate() const {
    require(beam_size >= 1, "beam size must be at least 1");
    require(alpha >= 0 && std::isfinite(alpha), "alpha must be a finite non-negative number");
    require(!candidate_cap || *candidate_cap >= 1, "candidate cap must be at least 1");
  }
};

/// Unweighted sums along a path; the faithfulness multiplier is not applied.
struct ScoreBreakdown {
  double lm_sum = 0.0;
  double dm_sum = 0.0;
  double length_reward_sum = 0.0;
};

struct StepTrace {
  std::u32string token;
  std::size_t char_pos = 0;  // where the token starts
  double lm_logprob = 0.0;
  double dm_score = 0.0;
  double length_reward = 0.0;
  double entropy = 0.0;
  double multiplier = 1.0;
  double score = 0.0;  // cumulative after this step
};

struct BeamCandidate {
  std::vector<std::u32string> tokens;
  std::size_t char_pos = 0;
  double score = 0.0;
  bool finished = false;
  ScoreBreakdown breakdown;
  std::vector<StepTrace> steps;

  std::u32string output() const {
    std::u32string out;
    out.reserve(char_pos);
    for (const auto& t : tokens) out += t;
    return out;
  }
};

struct CorrectionResult {
  std::u32string output;
  double score = 0.0;
  ScoreBreakdown breakdown;
  std::vector<StepTrace> steps;
};

inline double length_reward(std::size_t token_len, const DecoderConfig& cfg) {
  return cfg.length_reward ? cfg.alpha * static_cast<double>(token_len - 1) : 0.0;
}

inline double faithfulness_multiplier(double entropy, const DecoderConfig& cfg) {
  return cfg.faithfulness_reward ? 1.0 + std::clamp(entropy, 0.0, 1.0) : 1.0;
}

inline double step_score(const BeamCandidate& prev, std::u32string_view token, double lm_logprob,
                         double entropy, double dm_score, const DecoderConfig& cfg) {
  return prev.score + lm_logprob +
         faithfulness_multiplier(entropy, cfg) * (dm_score + length_reward(token.size(), cfg));
}

/// Strict weak order used everywhere a beam is ranked.
inline bool beam_before(double score_a, std::size_t tokens_a, const std::u32string& out_a, double score_b,
                        std::size_t tokens_b, const std::u32string& out_b) {
  if (score_a != score_b) return score_a > score_b;
  if (tokens_a != tokens_b) return tokens_a < tokens_b;
  return out_a < out_b;
}

class Engine {
 public:
  struct BatchItem {
    std::optional<CorrectionResult> result;
    std::string error;
  };

  Engine(std::shared_ptr<const KnowledgeBase> kb, SimilarityTables tables, DistortionParams params,
         std::shared_ptr<const LanguageModel> lm, std::optional<Vocabulary> vocab = std::nullopt)
      : kb_(std::move(kb)), tables_(std::move(tables)), params_(params), lm_(std::move(lm)) {
    require(kb_ != nullptr, "engine needs a knowledge base");
    require(lm_ != nullptr, "engine needs a language model");
    if (vocab) {
      vocab_ = std::move(*vocab);
    } else {
      const auto words = lm_->vocabulary();
      vocab_ = Vocabulary(std::span<const std::u32string>(words));
    }
    index_ = build_index(vocab_, *kb_, tables_);
  }

  const KnowledgeBase& knowledge_base() const { return *kb_; }
  const SimilarityTables& tables() const { return tables_; }
  const DistortionParams& params() const { return params_; }
  const LanguageModel& language_model() const { return *lm_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const InvertedIndex& index() const { return index_; }

  /// Candidate tokens at `pos` with their finite channel scores, in token-id
  /// order with the identity fallback (if needed) last.
  std::vector<std::pair<std::u32string, double>> step_candidates(std::u32string_view x, std::size_t pos,
                                                                const DecoderConfig& cfg) const {
    const auto found = index_.retrieve(vocab_, *kb_, x, pos, cfg.trick_mode);
    std::vector<std::pair<std::u32string, double>> out;
    out.reserve(found.tokens.size() + 1);
    std::unordered_map<std::uint64_t, DistortionType> seen;
    auto type_at = [&](std::size_t r, char32_t c) {
      const auto key = (static_cast<std::uint64_t>(r) << 32) | c;
      auto it = seen.find(key);
      if (it == seen.end()) it = seen.emplace(key, classify(*kb_, tables_, c, x[pos + r])).first;
      return it->second;
    };
    for (TokenId id : found.tokens) {
      const auto& text = vocab_.at(id).text;
      const double dm = token_distortion_score_with(*kb_, params_, x, pos, text, type_at);
      if (std::isfinite(dm)) out.emplace_back(text, dm);
    }
    if (found.identity_missing) {
      std::u32string self(1, x[pos]);
      const double dm = token_distortion_score_with(*kb_, params_, x, pos, self, type_at);
      if (std::isfinite(dm)) out.emplace_back(std::move(self), dm);
    }
    if (cfg.candidate_cap && out.size() > *cfg.candidate_cap) {
      // The identity copy survives any cap so the lattice never dead-ends.
      std::stable_sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
        const bool ia = a.first.size() == 1 && a.first[0] == x[pos];
        const bool ib = b.first.size() == 1 && b.first[0] == x[pos];
        if (ia != ib) return ia;
        return a.second > b.second;
      });
      out.resize(*cfg.candidate_cap);
    }
    return out;
  }

  CorrectionResult correct(std::u32string_view x, const DecoderConfig& cfg = {}) const {
    cfg.validate();
    if (x.empty()) throw Error(ErrorKind::InvalidArgument, "cannot correct an empty sentence");

    std::vector<BeamCandidate> beam(1);
    std::vector<std::optional<std::vector<std::pair<std::u32string, double>>>> by_pos(x.size());
    while (!std::all_of(beam.begin(), beam.end(), [](const auto& c) { return c.finished; })) {
      struct Ext {
        std::size_t parent;
        std::size_t cand;
        double score;
        std::size_t token_count;
        std::u32string output;
      };
      std::vector<std::size_t> open;
      std::vector<std::vector<std::pair<std::u32string, double>>> cands;
      std::vector<LMQuery> queries;
      for (std::size_t i = 0; i < beam.size(); ++i) {
        if (beam[i].finished) continue;
        auto& cached = by_pos[beam[i].char_pos];
        if (!cached) cached = step_candidates(x, beam[i].char_pos, cfg);
        auto step = *cached;
        if (step.empty()) {
          throw Error(ErrorKind::Internal, "no candidates at position " + std::to_string(beam[i].char_pos));
        }
        LMQuery q;
        q.knowledge_prefix = cfg.knowledge_prefix;
        q.token_prefix = beam[i].tokens;
        for (const auto& [text, _] : step) q.candidates.push_back(text);
        open.push_back(i);
        cands.push_back(std::move(step));
        queries.push_back(std::move(q));
      }
      const auto replies = lm_->next_token_logprobs_batch(queries);
      if (replies.size() != queries.size()) throw Error(ErrorKind::Internal, "backend dropped queries");

      std::vector<Ext> pool;
      for (std::size_t i = 0; i < beam.size(); ++i) {
        if (beam[i].finished) pool.push_back({i, SIZE_MAX, beam[i].score, beam[i].tokens.size(), beam[i].output()});
      }
      for (std::size_t q = 0; q < open.size(); ++q) {
        const auto& parent = beam[open[q]];
        const auto& reply = replies[q];
        if (reply.logprobs.size() != cands[q].size()) throw Error(ErrorKind::Internal, "backend reply size mismatch");
        const auto prefix = parent.output();
        for (std::size_t k = 0; k < cands[q].size(); ++k) {
          const auto& [text, dm] = cands[q][k];
          const double s = step_score(parent, text, reply.logprobs[k], reply.entropy, dm, cfg);
          pool.push_back({open[q], k, s, parent.tokens.size() + 1, prefix + text});
        }
      }
      std::stable_sort(pool.begin(), pool.end(), [](const Ext& a, const Ext& b) {
        return beam_before(a.score, a.token_count, a.output, b.score, b.token_count, b.output);
      });
      if (pool.size() > cfg.beam_size) pool.resize(cfg.beam_size);

      std::vector<BeamCandidate> next;
      next.reserve(pool.size());
      for (const auto& e : pool) {
        if (e.cand == SIZE_MAX) {
          next.push_back(beam[e.parent]);
          continue;
        }
        const std::size_t q = static_cast<std::size_t>(
            std::find(open.begin(), open.end(), e.parent) - open.begin());
        const auto& [text, dm] = cands[q][e.cand];
        next.push_back(extend(beam[e.parent], text, replies[q].logprobs[e.cand], replies[q].entropy, dm,
                              x.size(), cfg));
      }
      beam = std::move(next);
    }
    return finish(beam.front());
  }

  /// Scores a fixed segmentation of an output for `x` with the same
  /// arithmetic as `correct`.
  CorrectionResult replay(std::u32string_view x, std::span<const std::u32string> tokens,
                          const DecoderConfig& cfg = {}) const {
    cfg.validate();
    BeamCandidate c;
    for (const auto& t : tokens) {
      require(!t.empty(), "replayed tokens must be non-empty");
      const double dm = token_distortion_score(*kb_, tables_, params_, x, c.char_pos, t);
      LMQuery q{cfg.knowledge_prefix, c.tokens, {t}};
      const auto reply = lm_->next_token_logprobs(q);
      c = extend(c, t, reply.logprobs.at(0), reply.entropy, dm, x.size(), cfg);
    }
    require(c.char_pos == x.size(), "replayed tokens do not cover the input");
    return finish(c);
  }

  std::vector<BatchItem> correct_batch(std::span<const std::u32string> sentences, const DecoderConfig& cfg = {},
                                       unsigned threads = 0) const {
    std::vector<BatchItem> out(sentences.size());
    auto run = [&](std::size_t i) {
      try {
        out[i].result = correct(sentences[i], cfg);
      } catch (const std::exception& e) {
        out[i].error = e.what();
      }
    };
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    if (!lm_->concurrency_safe() || threads == 1 || sentences.size() < 2) {
      for (std::size_t i = 0; i < sentences.size(); ++i) run(i);
      return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    const auto n = std::min<std::size_t>(threads, sentences.size());
    for (std::size_t t = 0; t < n; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < sentences.size(); i = next++) run(i);
      });
    }
    pool.clear();
    return out;
  }

 private:
  static BeamCandidate extend(const BeamCandidate& parent, const std::u32string& token, double lm, double entropy,
                              double dm, std::size_t input_len, const DecoderConfig& cfg) {
    BeamCandidate c = parent;
    const double lr = length_reward(token.size(), cfg);
    const double m = faithfulness_multiplier(entropy, cfg);
    c.score = step_score(parent, token, lm, entropy, dm, cfg);
    c.steps.push_back({token, parent.char_pos, lm, dm, lr, entropy, m, c.score});
    c.tokens.push_back(token);
    c.char_pos += token.size();
    c.finished = c.char_pos == input_len;
    c.breakdown.lm_sum += lm;
    c.breakdown.dm_sum += dm;
    c.breakdown.length_reward_sum += lr;
    return c;
  }

  static CorrectionResult finish(const BeamCandidate& c) {
    return {c.output(), c.score, c.breakdown, c.steps};
  }

  std::shared_ptr<const KnowledgeBase> kb_;
  SimilarityTables tables_;
  DistortionParams params_;
  std::shared_ptr<const LanguageModel> lm_;
  Vocabulary vocab_;
  InvertedIndex index_;
};

inline CorrectionResult correct(const Engine& engine, std::u32string_view x, const DecoderConfig& cfg = {}) {
  return engine.correct(x, cfg);
}

inline std::vector<Engine::BatchItem> correct_batch(const Engine& engine, std::span<const std::u32string> sentences,
                                                    const DecoderConfig& cfg = {}) {
  return engine.correct_batch(sentences, cfg);
}

}  // namespace csc
