// csc: command-line front end for the correction engine.

#include <CLI11.hpp>
#include <httplib.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>
#include <thread>
#include <vector>

#include "csc/csc.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct EngineFlags {
  std::string config, kb_dir, lm, tables, params, lexicon, vocab, knowledge;
  std::size_t beam = 0, cap = 0;
  double alpha = 0;
  bool no_length_reward = false, no_faithfulness = false, no_trick = false;
  CLI::App* app = nullptr;

  void add_to(CLI::App* sub) {
    app = sub;
    sub->add_option("--config", config, "key = value config file; flags override it");
    sub->add_option("--kb-dir", kb_dir, "directory with pinyin.tsv, shape.tsv, tricks.tsv");
    sub->add_option("--lm", lm, "ngram:<model path> or remote:<url>");
    sub->add_option("--tables", tables, "pinyin similarity tables");
    sub->add_option("--params", params, "distortion probabilities");
    sub->add_option("--lexicon", lexicon, "extra multi-character tokens, one per line");
    sub->add_option("--vocab", vocab, "full token vocabulary, one per line");
    sub->add_option("--beam", beam, "beam size")->check(CLI::PositiveNumber);
    sub->add_option("--alpha", alpha, "length reward weight")->check(CLI::NonNegativeNumber);
    sub->add_option("--cap", cap, "max candidates per step (0 = no cap)");
    sub->add_option("--knowledge", knowledge, "text prepended to the LM context only");
    sub->add_flag("--no-length-reward", no_length_reward);
    sub->add_flag("--no-faithfulness", no_faithfulness);
    sub->add_flag("--no-trick", no_trick, "disallow the one-unrelated-character allowance");
  }

  bool given(const std::string& name) const { return app->count(name) > 0; }

  csc::EngineConfig resolve() const {
    csc::EngineConfig cfg;
    if (given("--config")) cfg.load_file(config);
    if (given("--kb-dir")) cfg.set("kb_dir", kb_dir);
    if (given("--lm")) cfg.set("lm", lm);
    if (given("--tables")) cfg.set("tables", tables);
    if (given("--params")) cfg.set("params", params);
    if (given("--lexicon")) cfg.set("lexicon", lexicon);
    if (given("--vocab")) cfg.set("vocab", vocab);
    if (given("--beam")) cfg.decoder.beam_size = beam;
    if (given("--alpha")) cfg.decoder.alpha = alpha;
    if (given("--cap")) cfg.set("cap", std::to_string(cap));
    if (given("--knowledge")) cfg.set("knowledge", knowledge);
    if (no_length_reward) cfg.decoder.length_reward = false;
    if (no_faithfulness) cfg.decoder.faithfulness_reward = false;
    if (no_trick) cfg.decoder.trick_mode = false;
    return cfg;
  }
};

nlohmann::json trace_json(std::string_view input, const csc::CorrectionResult& r) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : r.steps) {
    steps.push_back({{"token", csc::encode_utf8(s.token)},
                     {"char_pos", s.char_pos},
                     {"lm", s.lm_logprob},
                     {"dm", s.dm_score},
                     {"length_reward", s.length_reward},
                     {"entropy", s.entropy},
                     {"multiplier", s.multiplier},
                     {"score", s.score}});
  }
  return {{"input", input},
          {"output", csc::encode_utf8(r.output)},
          {"score", r.score},
          {"breakdown",
           {{"lm_sum", r.breakdown.lm_sum},
            {"dm_sum", r.breakdown.dm_sum},
            {"length_reward_sum", r.breakdown.length_reward_sum}}},
          {"steps", std::move(steps)}};
}

void wait_for_signal(httplib::Server& server) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop && !server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  csc::log::info("shutting down");
  server.stop();
}

int run_correct(const EngineFlags& flags, const std::string& input_path, bool trace) {
  const auto cfg = flags.resolve();
  const auto engine = csc::build_engine(cfg);
  std::ifstream file;
  std::istream* in = &std::cin;
  if (!input_path.empty() && input_path != "-") {
    file = csc::text::open_input(input_path);
    in = &file;
  }
  std::string line;
  while (std::getline(*in, line)) {
    const auto text = csc::text::chomp(line);
    const auto result = csc::correct_text(engine, text, cfg.decoder);
    if (trace) {
      std::cout << trace_json(text, result).dump() << '\n';
    } else {
      std::cout << csc::encode_utf8(result.output) << '\n';
    }
  }
  std::cout.flush();
  return 0;
}

int run_train_lm(const std::string& corpus, int order, const std::string& lexicon, const std::string& out) {
  const auto model = csc::train_ngram(corpus, order, lexicon);
  model.save(out);
  csc::log::info("wrote " + out + " (alphabet " + std::to_string(model.alphabet_size()) + ")");
  return 0;
}

int run_estimate(const std::string& corpus, const std::string& kb_dir, const std::string& tables_path,
                 double floor, const std::string& out) {
  const auto kb = csc::KnowledgeBase::load_dir(kb_dir);
  const auto tables = csc::SimilarityTables::load(tables_path);
  std::vector<csc::ParallelPair> pairs;
  for (auto& p : csc::load_pairs(corpus)) pairs.push_back({std::move(p.source), std::move(p.target)});
  const auto tc = csc::count_types(kb, tables, pairs);
  const auto params = csc::params_from_counts(tc, floor);
  if (out.empty() || out == "-") {
    params.write(std::cout);
  } else {
    std::ofstream f(out);
    if (!f) throw csc::LoadError("cannot write " + out);
    params.write(f);
  }
  std::string summary = "counted " + std::to_string(tc.total()) + " positions:";
  for (auto t : csc::kAllDistortionTypes) summary += " " + std::string(csc::to_string(t)) + "=" + std::to_string(tc[t]);
  csc::log::info(summary);
  return 0;
}

int run_evaluate(const EngineFlags& flags, const std::string& dataset, const std::string& predictions,
                 const std::string& out) {
  std::vector<csc::EvalTriple> triples;
  auto in = csc::text::open_input(dataset);
  std::string first;
  std::getline(in, first);
  const bool three_columns = csc::text::split(csc::text::chomp(first), '\t').size() == 3;
  if (three_columns) {
    if (!predictions.empty()) throw csc::Error(csc::ErrorKind::InvalidArgument, "dataset already has predictions");
    triples = csc::load_triples(dataset);
  } else {
    const auto pairs = csc::load_pairs(dataset);
    std::vector<std::u32string> preds;
    if (!predictions.empty()) {
      auto pin = csc::text::open_input(predictions);
      csc::text::LineReader reader(pin, predictions);
      std::string line;
      while (reader.next(line)) preds.push_back(csc::decode_utf8(line));
      if (preds.size() != pairs.size()) {
        throw csc::Error(csc::ErrorKind::InvalidArgument, "predictions file has " + std::to_string(preds.size()) +
                                                              " lines, dataset has " + std::to_string(pairs.size()));
      }
    } else {
      const auto cfg = flags.resolve();
      const auto engine = csc::build_engine(cfg);
      std::vector<std::u32string> sources;
      for (const auto& p : pairs) sources.push_back(p.source);
      for (auto& item : engine.correct_batch(sources, cfg.decoder)) {
        if (!item.result) throw csc::Error(csc::ErrorKind::Internal, item.error);
        preds.push_back(item.result->output);
      }
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) triples.push_back({pairs[i].source, preds[i], pairs[i].target});
  }

  std::optional<csc::KnowledgeBase> kb;
  std::optional<csc::SimilarityTables> tables;
  const auto cfg = flags.resolve();
  if (std::filesystem::exists(cfg.kb_dir) && std::filesystem::exists(cfg.tables)) {
    kb = csc::KnowledgeBase::load_dir(cfg.kb_dir);
    tables = csc::SimilarityTables::load(cfg.tables);
  }
  const auto report = csc::evaluate(triples, kb ? &*kb : nullptr, tables ? &*tables : nullptr);
  const auto text = report.to_json().dump(2);
  if (out.empty() || out == "-") {
    std::cout << text << '\n';
  } else {
    std::ofstream f(out);
    if (!f) throw csc::LoadError("cannot write " + out);
    f << text << '\n';
  }
  return 0;
}

int run_serve(const EngineFlags& flags, const std::string& host, int port) {
  const auto cfg = flags.resolve();
  const auto engine = csc::build_engine(cfg);
  csc::CorrectionService service(engine, cfg.decoder);
  httplib::Server server;
  service.attach(server);
  if (!engine.language_model().concurrency_safe()) server.new_task_queue = [] { return new httplib::ThreadPool(1); };
  std::thread watcher([&] { wait_for_signal(server); });
  csc::log::info("listening on " + host + ":" + std::to_string(port));
  const bool ok = server.listen(host, port);
  g_stop = true;
  watcher.join();
  if (!ok) throw csc::LoadError("cannot bind " + host + ":" + std::to_string(port));
  return 0;
}

int run_serve_lm(const std::string& model_path, const std::string& host, int port) {
  const auto model = csc::NGramModel::load(model_path);
  httplib::Server server;
  std::thread watcher([&] { wait_for_signal(server); });
  try {
    csc::serve_lm(server, model, host, port);
  } catch (...) {
    g_stop = true;
    watcher.join();
    throw;
  }
  g_stop = true;
  watcher.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chinese spelling correction with a language model and a rule-based distortion model"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "debug, info, warn, error or off")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

  EngineFlags correct_flags;
  std::string input_path;
  bool trace = false;
  auto* correct = app.add_subcommand("correct", "correct one sentence per input line");
  correct_flags.add_to(correct);
  correct->add_option("--input", input_path, "input file (default stdin)");
  correct->add_flag("--trace", trace, "emit the score breakdown of each line as JSON");

  std::string corpus, lexicon, model_out;
  int order = 5;
  auto* train = app.add_subcommand("train-lm", "train a character n-gram model");
  train->add_option("--corpus", corpus, "UTF-8 text, one sentence per line")->required();
  train->add_option("--order", order, "n-gram order")->check(CLI::Range(2, 12));
  train->add_option("--lexicon", lexicon, "multi-character tokens to expose");
  train->add_option("--out", model_out, "model file")->required();

  std::string parallel, est_kb = std::string(CSC_DEFAULT_DATA_DIR) + "/kb",
                        est_tables = std::string(CSC_DEFAULT_DATA_DIR) + "/similarity_tables.tsv", est_out;
  double floor = csc::kDefaultEstimateFloor;
  auto* estimate = app.add_subcommand("estimate-distortion", "estimate type probabilities from source/target pairs");
  estimate->add_option("--corpus", parallel, "TSV source<TAB>target")->required();
  estimate->add_option("--kb-dir", est_kb);
  estimate->add_option("--tables", est_tables);
  estimate->add_option("--floor", floor, "probability for unseen types")->check(CLI::Range(1e-300, 1.0));
  estimate->add_option("--out", est_out, "params file (default stdout)");

  EngineFlags eval_flags;
  std::string dataset, predictions, report_out;
  auto* evaluate = app.add_subcommand("evaluate", "score predictions; corrects the sources when none are given");
  eval_flags.add_to(evaluate);
  evaluate->add_option("--dataset", dataset, "TSV source<TAB>target or source<TAB>prediction<TAB>target")->required();
  evaluate->add_option("--predictions", predictions, "one prediction per dataset line");
  evaluate->add_option("--report", report_out, "JSON report (default stdout)");

  EngineFlags serve_flags;
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "HTTP correction service");
  serve_flags.add_to(serve);
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  std::string lm_model, lm_host = "127.0.0.1";
  int lm_port = 8081;
  auto* serve_lm = app.add_subcommand("serve-lm", "expose an n-gram model over the remote scoring protocol");
  serve_lm->add_option("--model", lm_model)->required();
  serve_lm->add_option("--host", lm_host);
  serve_lm->add_option("--port", lm_port);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  using csc::log::Level;
  csc::log::set_level(log_level == "debug"  ? Level::Debug
                      : log_level == "info" ? Level::Info
                      : log_level == "warn" ? Level::Warn
                      : log_level == "error" ? Level::Error
                                             : Level::Off);
  try {
    if (*correct) return run_correct(correct_flags, input_path, trace);
    if (*train) return run_train_lm(corpus, order, lexicon, model_out);
    if (*estimate) return run_estimate(parallel, est_kb, est_tables, floor, est_out);
    if (*evaluate) return run_evaluate(eval_flags, dataset, predictions, report_out);
    if (*serve) return run_serve(serve_flags, host, port);
    if (*serve_lm) return run_serve_lm(lm_model, lm_host, lm_port);
  } catch (const csc::Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", std::string(csc::to_string(e.kind())).c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal_error: %s\n", e.what());
    return 3;
  }
  return 1;
}
