#pragma once

// Engine configuration: a `key = value` file with command-line overrides on
// top, and the factory that turns it into a ready Engine.

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "csc/chardata.hpp"
#include "csc/decoder.hpp"
#include "csc/distortion.hpp"
#include "csc/error.hpp"
#include "csc/lexicon_index.hpp"
#include "csc/lm.hpp"
#include "csc/log.hpp"
#include "csc/remote_lm.hpp"
#include "csc/text.hpp"
#include "csc/utf8.hpp"

#ifndef CSC_DEFAULT_DATA_DIR
#define CSC_DEFAULT_DATA_DIR "data"
#endif

namespace csc {

struct LMSpec {
  enum class Kind { NGram, Remote };
  Kind kind = Kind::NGram;
  std::string location;  // model path or URL

  static LMSpec parse(std::string_view spec) {
    if (spec.starts_with("ngram:")) return {Kind::NGram, std::string(spec.substr(6))};
    if (spec.starts_with("remote:")) return {Kind::Remote, std::string(spec.substr(7))};
    throw Error(ErrorKind::InvalidArgument, "lm must be 'ngram:<path>' or 'remote:<url>', got '" +
                                                std::string(spec) + "'");
  }
};

struct EngineConfig {
  std::filesystem::path kb_dir = std::filesystem::path(CSC_DEFAULT_DATA_DIR) / "kb";
  std::filesystem::path tables = std::filesystem::path(CSC_DEFAULT_DATA_DIR) / "similarity_tables.tsv";
  std::filesystem::path params = std::filesystem::path(CSC_DEFAULT_DATA_DIR) / "distortion_params.tsv";
  std::optional<std::string> lm;
  std::filesystem::path lexicon;
  std::filesystem::path vocab;
  DecoderConfig decoder;

  /// Applies one setting; unknown keys are an error.
  void set(std::string_view key, std::string_view value) {
    const std::string v(value);
    auto as_bool = [&]() {
      if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
      if (v == "false" || v == "0" || v == "no" || v == "off") return false;
      throw Error(ErrorKind::InvalidArgument, "expected a boolean for '" + std::string(key) + "', got '" + v + "'");
    };
    auto as_number = [&]() {
      try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
      } catch (const std::exception&) {
        throw Error(ErrorKind::InvalidArgument, "expected a number for '" + std::string(key) + "', got '" + v + "'");
      }
    };
    auto as_count = [&]() {
      const double d = as_number();
      if (d < 0 || d != static_cast<double>(static_cast<std::size_t>(d))) {
        throw Error(ErrorKind::InvalidArgument, "expected a non-negative integer for '" + std::string(key) + "'");
      }
      return static_cast<std::size_t>(d);
    };
    if (key == "kb_dir") kb_dir = v;
    else if (key == "tables") tables = v;
    else if (key == "params") params = v;
    else if (key == "lm") lm = v;
    else if (key == "lexicon") lexicon = v;
    else if (key == "vocab") vocab = v;
    else if (key == "beam") decoder.beam_size = as_count();
    else if (key == "alpha") decoder.alpha = as_number();
    else if (key == "length_reward") decoder.length_reward = as_bool();
    else if (key == "faithfulness_reward") decoder.faithfulness_reward = as_bool();
    else if (key == "trick_mode") decoder.trick_mode = as_bool();
    else if (key == "cap") {
      const auto c = as_count();
      decoder.candidate_cap = c == 0 ? std::nullopt : std::optional<std::size_t>(c);
    } else if (key == "knowledge") decoder.knowledge_prefix = decode_utf8(v);
    else throw Error(ErrorKind::InvalidArgument, "unknown config key '" + std::string(key) + "'");
  }

  /// Relative paths in a config file resolve against the file's directory.
  void load_file(const std::filesystem::path& path) {
    auto in = text::open_input(path);
    text::LineReader reader(in, path.string());
    const auto base = path.parent_path();
    std::string line;
    while (reader.next(line)) {
      if (text::skippable(line)) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) reader.fail("expected 'key = value'");
      const auto key = text::trim(std::string_view(line).substr(0, eq));
      auto value = text::trim(std::string_view(line).substr(eq + 1));
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
      std::string resolved(value);
      const bool is_path = key == "kb_dir" || key == "tables" || key == "params" || key == "lexicon" || key == "vocab";
      if (is_path && !resolved.empty() && std::filesystem::path(resolved).is_relative()) {
        resolved = (base / resolved).string();
      }
      if (key == "lm" && resolved.starts_with("ngram:")) {
        std::filesystem::path p = resolved.substr(6);
        if (p.is_relative()) resolved = "ngram:" + (base / p).string();
      }
      try {
        set(key, resolved);
      } catch (const Error& e) {
        reader.fail(e.what());
      }
    }
  }
};

inline std::shared_ptr<const LanguageModel> make_language_model(const LMSpec& spec) {
  if (spec.kind == LMSpec::Kind::NGram) return std::make_shared<NGramModel>(NGramModel::load(spec.location));
  return std::make_shared<RemoteLM>(spec.location);
}

inline Engine build_engine(const EngineConfig& cfg) {
  if (!cfg.lm) throw Error(ErrorKind::InvalidArgument, "no language model configured (use --lm)");
  cfg.decoder.validate();
  const auto spec = LMSpec::parse(*cfg.lm);
  auto kb = std::make_shared<const KnowledgeBase>(KnowledgeBase::load_dir(cfg.kb_dir));
  auto tables = SimilarityTables::load(cfg.tables);
  auto params = DistortionParams::load(cfg.params);
  auto lm = make_language_model(spec);

  std::optional<Vocabulary> vocab;
  if (!cfg.vocab.empty()) {
    vocab = Vocabulary::load(cfg.vocab);
  } else if (!cfg.lexicon.empty() || spec.kind == LMSpec::Kind::Remote) {
    std::vector<std::u32string> words = lm->vocabulary();
    if (words.empty()) {
      std::vector<char32_t> chars;
      for (const auto& [c, _] : kb->records()) chars.push_back(c);
      std::sort(chars.begin(), chars.end());
      for (char32_t c : chars) words.emplace_back(1, c);
    }
    if (!cfg.lexicon.empty()) {
      for (auto& w : NGramModel::read_lexicon(cfg.lexicon)) words.push_back(std::move(w));
    }
    vocab = Vocabulary(std::span<const std::u32string>(words));
  }
  log::info("building index");
  return Engine(std::move(kb), std::move(tables), params, std::move(lm), std::move(vocab));
}

}  // namespace csc
