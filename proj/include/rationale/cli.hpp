#pragma once

// Command-line front end. Exit codes: 0 success, 1 validation error (bad
// flags, config or input schema), 2 runtime error (I/O, transport, backend).
// Progress goes to the error stream; artifacts go to the paths given.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rationale/config.hpp"
#include "rationale/emitter.hpp"
#include "rationale/eval.hpp"
#include "rationale/extractor.hpp"
#include "rationale/filter.hpp"
#include "rationale/jsonl.hpp"
#include "rationale/prefilter.hpp"
#include "rationale/supervision.hpp"
#include "rationale/template.hpp"

namespace rationale::cli {

namespace detail {

struct Options {
  std::string config_path;
  std::string mock_fixture;
  std::string dump_config;
  std::optional<std::size_t> jobs;
  std::optional<std::uint64_t> seed;

  // shared I/O
  std::string in, out, report;

  // prefilter
  std::string reference;
  std::optional<double> alpha;
  std::optional<std::size_t> prefilter_max_tokens;

  // extract
  std::string corpus, qa, template_path;
  std::optional<std::size_t> max_words;
  std::optional<int> num_samples;

  // filter / calibrate
  std::string kept;
  std::optional<double> tau_f;
  std::optional<double> decay;
  std::optional<std::size_t> horizon;
  std::optional<double> target_precision;

  // emit
  std::optional<std::size_t> max_context_tokens;

  // supervise / eval
  std::string question;
  std::string records;
  std::string shots_path;
  std::optional<std::string> mode;
  std::optional<int> num_candidates;
  std::optional<double> temperature;
  std::optional<int> top_k;
  std::optional<int> max_steps;
  std::optional<std::string> stop_pattern;

  // stats
  std::string before, after, docs;
  std::vector<std::string> tau_by_source;
};

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path);
  f << content;
}

inline RunConfig effective_config(const Options& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  if (!o.mock_fixture.empty()) {
    BackendSpec b;
    b.type = "mock";
    b.fixture = std::filesystem::absolute(o.mock_fixture).lexically_normal().string();
    c.backends["mock"] = b;
    for (Role r : kAllRoles) c.roles[std::string(to_string(r))] = RoleSpec{"mock", std::string(to_string(r))};
  }
  if (o.jobs) c.jobs = *o.jobs;
  if (o.seed) c.seed = *o.seed;
  if (o.alpha) c.alpha = *o.alpha;
  if (o.prefilter_max_tokens) c.prefilter_max_tokens = *o.prefilter_max_tokens;
  if (o.max_words) c.segment_max_words = *o.max_words;
  if (o.num_samples) c.extract_num_samples = *o.num_samples;
  if (o.tau_f) {
    c.tau_f = *o.tau_f;
    c.tau_f_by_source.clear();
  }
  if (o.decay) c.weights.decay = *o.decay;
  if (o.horizon) c.weights.horizon = *o.horizon;
  if (o.target_precision) c.target_precision = *o.target_precision;
  if (o.max_context_tokens) c.emit_max_context_tokens = *o.max_context_tokens;
  if (o.mode) {
    try {
      c.supervision.mode = mode_from_string(*o.mode);
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigInvalid, std::string("--mode: ") + e.what());
    }
  }
  if (o.num_candidates) c.supervision.num_candidates = *o.num_candidates;
  if (o.temperature) c.supervision.temperature = *o.temperature;
  if (o.top_k) c.supervision.top_k = *o.top_k;
  if (o.max_steps) c.supervision.max_steps = *o.max_steps;
  if (o.stop_pattern) c.supervision.stop_pattern = *o.stop_pattern;
  c.validate();
  return c;
}

inline void require_roles(const RunConfig& c, std::initializer_list<Role> roles) {
  for (Role r : roles)
    if (!c.roles.count(std::string(to_string(r))))
      throw Error(ErrorCode::ConfigInvalid, "roles." + std::string(to_string(r)) + " must be bound for this command");
}

inline std::vector<RationaleCandidate> read_candidates(const std::string& path) {
  return jsonl::read_records<RationaleCandidate>(path, candidate_from_json);
}

template <typename T>
std::vector<nlohmann::json> to_rows(const std::vector<T>& xs) {
  std::vector<nlohmann::json> rows;
  rows.reserve(xs.size());
  for (const auto& x : xs) rows.push_back(to_json(x));
  return rows;
}

inline void print_warnings(const Gateway& gw, std::ostream& err) {
  for (const auto& w : gw.diagnostics().warnings()) err << "warning: " << w << "\n";
}

inline int cmd_prefilter(const Options& o, const RunConfig& c, std::ostream& err) {
  require_roles(c, {Role::Embedder, Role::Scorer});
  auto docs = jsonl::read_records<Document>(o.in, document_from_json);
  auto refs = jsonl::read_records<QAPair>(o.reference, qa_pair_from_json);
  std::vector<std::string> texts;
  for (const auto& p : refs) {
    if (c.reference == "question") texts.push_back(p.question);
    else if (c.reference == "answer") texts.push_back(p.answer);
    else texts.push_back(p.question + "\n" + p.answer);
  }
  Gateway gw;
  bind_roles(gw, c);
  err << "[prefilter] " << docs.size() << " documents, " << texts.size() << " reference texts, alpha="
      << text::format_shortest(c.alpha) << " max_tokens=" << c.prefilter_max_tokens << "\n";
  PrefilterConfig pc;
  pc.alpha = c.alpha;
  pc.max_tokens = c.prefilter_max_tokens;
  pc.jobs = c.jobs;
  pc.centroid = centroid(gw, texts, c.jobs);
  auto res = prefilter(gw, docs, pc);
  jsonl::write_file(o.out, to_rows(res.kept));
  if (!o.report.empty()) jsonl::write_json_file(o.report, res.report.to_json());
  print_warnings(gw, err);
  err << "[prefilter] kept " << res.kept.size() << " of " << docs.size() << "\n";
  return 0;
}

inline int cmd_extract(const Options& o, const RunConfig& c, std::ostream& err) {
  require_roles(c, {Role::Extractor});
  if (o.corpus.empty() == o.qa.empty()) throw Error(ErrorCode::ConfigInvalid, "extract needs exactly one of --corpus or --qa");
  auto tpl = PromptTemplate::from_file(o.template_path);
  Gateway gw;
  bind_roles(gw, c);
  auto opts = c.extract_options();
  ExtractionResult res;
  if (!o.corpus.empty()) {
    auto docs = jsonl::read_records<Document>(o.corpus, document_from_json);
    std::vector<Segment> segs;
    for (const auto& d : docs)
      for (auto& s : segment(d, c.segment_max_words)) segs.push_back(std::move(s));
    err << "[extract] " << docs.size() << " documents -> " << segs.size() << " segments\n";
    res = extract_corpus_batch(gw, segs, tpl, opts);
  } else {
    auto pairs = jsonl::read_records<QAPair>(o.qa, qa_pair_from_json);
    err << "[extract] " << pairs.size() << " QA pairs\n";
    res = extract_qa_batch(gw, pairs, tpl, opts);
  }
  jsonl::write_file(o.out, to_rows(res.candidates));
  if (!o.report.empty()) jsonl::write_json_file(o.report, res.stats.to_json());
  print_warnings(gw, err);
  err << "[extract] spans=" << res.stats.spans << " kept=" << res.stats.kept << " malformed=" << res.stats.malformed
      << " leaked=" << res.stats.leaked << " parse_failures=" << res.stats.parse_failures << "\n";
  return 0;
}

inline int cmd_filter(const Options& o, const RunConfig& c, std::ostream& out, std::ostream& err) {
  require_roles(c, {Role::Scorer});
  auto cands = read_candidates(o.in);
  Gateway gw;
  bind_roles(gw, c);
  err << "[filter] " << cands.size() << " candidates, decay=" << text::format_shortest(c.weights.decay)
      << " horizon=" << c.weights.horizon << " tau_f=" << text::format_shortest(c.tau_f) << "\n";
  auto res = filter(score_batch(gw, cands, c.weights, c.jobs), c.tau_f, c.tau_f_by_source);
  jsonl::write_file(o.out, to_rows(res.verdicts));
  if (!o.kept.empty()) {
    std::vector<RationaleCandidate> kept;
    for (auto i : res.kept_indices) kept.push_back(cands[i]);
    jsonl::write_file(o.kept, to_rows(kept));
  }
  if (!o.report.empty()) jsonl::write_json_file(o.report, res.report.to_json());
  print_warnings(gw, err);
  out << res.report.to_table();
  err << "[filter] kept " << res.kept_indices.size() << " of " << cands.size() << "\n";
  return 0;
}

inline int cmd_emit(const Options& o, const RunConfig& c, std::ostream& err) {
  auto cands = read_candidates(o.in);
  EmitOptions eo;
  std::unique_ptr<Gateway> gw;
  if (c.emit_max_context_tokens > 0) {
    require_roles(c, {Role::Scorer});
    gw = std::make_unique<Gateway>();
    bind_roles(*gw, c);
    eo.max_context_tokens = c.emit_max_context_tokens;
    eo.count_tokens = [g = gw.get()](std::string_view s) { return g->count_tokens(s); };
  }
  auto res = emit(std::move(cands), eo);
  jsonl::write_file(o.out, to_rows(res.examples));
  if (!o.report.empty()) jsonl::write_json_file(o.report, res.report.to_json());
  err << "[emit] kept=" << res.report.kept << " duplicates=" << res.report.duplicates
      << " emitted=" << res.report.emitted << "\n";
  return 0;
}

inline int cmd_calibrate(const Options& o, const RunConfig& c, std::ostream& out, std::ostream& err) {
  require_roles(c, {Role::Scorer});
  ThresholdCalibration cal;
  cal.target_precision = c.target_precision;
  cal.labeled_pairs = jsonl::read_records<LabeledCandidate>(o.in, [](const nlohmann::json& j) {
    auto label = j.at("label").get<std::string>();
    if (label != "helpful" && label != "unhelpful")
      throw Error(ErrorCode::SchemaError, "label must be 'helpful' or 'unhelpful'");
    return LabeledCandidate{candidate_from_json(j), label == "helpful"};
  });
  Gateway gw;
  bind_roles(gw, c);
  auto res = calibrate_threshold(gw, cal, c.weights, c.jobs);
  nlohmann::json j = {{"tau_f", res.attainable() ? nlohmann::json(res.tau_f) : nlohmann::json(nullptr)},
                      {"attainable", res.attainable()},
                      {"precision", res.precision},
                      {"kept", res.kept},
                      {"labeled", cal.labeled_pairs.size()},
                      {"target_precision", cal.target_precision}};
  if (!o.out.empty()) jsonl::write_json_file(o.out, j);
  print_warnings(gw, err);
  out << (res.attainable() ? text::format_shortest(res.tau_f) : std::string("inf")) << "\n";
  return 0;
}

inline std::string run_header(const SupervisionConfig& s) {
  std::ostringstream h;
  h << "mode=" << to_string(s.mode) << " temperature=" << text::format_shortest(s.temperature)
    << " num_candidates=" << s.num_candidates << " top_k=" << s.top_k << " max_steps=" << s.max_steps
    << " stop_pattern=\"" << s.stop_pattern << "\"";
  return h.str();
}

// Agent template -> few-shot list: a non-empty body is the instruction shot,
// followed by each demonstration. Only tasks without shots receive it.
inline void apply_shots(const std::string& path, std::vector<TaskInstance>& tasks) {
  if (path.empty()) return;
  auto tpl = PromptTemplate::from_file(path);
  std::vector<std::string> shots;
  if (auto b = text::trim(tpl.body); !b.empty()) shots.emplace_back(b);
  for (const auto& d : tpl.demonstrations)
    if (auto t = text::trim(d); !t.empty()) shots.emplace_back(t);
  for (auto& t : tasks)
    if (t.shots.empty()) t.shots = shots;
}

inline int cmd_supervise(const Options& o, const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (o.question.empty() == o.in.empty())
    throw Error(ErrorCode::ConfigInvalid, "supervise needs exactly one of --question or --in");
  auto cfg = c.supervision_config();
  if (cfg.mode == SupervisionMode::Implicit) require_roles(c, {Role::Rationalyst, Role::Agent, Role::Scorer});
  else if (cfg.mode == SupervisionMode::Explicit) require_roles(c, {Role::Rationalyst, Role::Agent});
  else require_roles(c, {Role::Agent});
  std::vector<TaskInstance> tasks;
  if (!o.question.empty()) tasks.push_back({"q0", o.question, "-", "", {}});
  else tasks = jsonl::read_records<TaskInstance>(o.in, task_from_json);
  apply_shots(o.shots_path, tasks);

  Gateway gw;
  bind_roles(gw, c);
  err << "[supervise] " << run_header(cfg) << "\n";
  auto traces = parallel_map(tasks.size(), c.jobs, [&](std::size_t i) {
    auto t = cfg;
    t.seed = c.seed + i;
    t.jobs = 1;
    return run(gw, tasks[i].question, t, tasks[i].shots);
  });
  std::string body;
  for (const auto& t : traces) body += jsonl::dump_line(to_json(t));
  if (o.out.empty()) out << body;
  else write_text(o.out, body);
  print_warnings(gw, err);
  for (std::size_t i = 0; i < traces.size(); ++i)
    err << "[supervise] " << tasks[i].id << ": " << traces[i].trajectory.steps().size() << " steps ("
        << traces[i].terminated_reason << ")\n";
  return 0;
}

inline int cmd_eval(const Options& o, const RunConfig& c, std::ostream& out, std::ostream& err) {
  auto tasks = jsonl::read_records<TaskInstance>(o.in, task_from_json);
  apply_shots(o.shots_path, tasks);
  EvalOptions eo;
  eo.supervised = c.supervision_config();
  eo.baseline = c.supervision_config();
  eo.baseline.mode = SupervisionMode::Unsupervised;
  eo.seed = c.seed;
  eo.jobs = c.jobs;
  eo.supervised.jobs = eo.baseline.jobs = 1;
  require_roles(c, {Role::Rationalyst, Role::Agent, Role::Scorer});
  Gateway gw;
  bind_roles(gw, c);
  err << "[eval] " << tasks.size() << " instances; supervised arm " << run_header(eo.supervised) << "\n";
  auto rep = evaluate(gw, tasks, eo);
  if (!o.out.empty()) jsonl::write_json_file(o.out, rep.to_json());
  if (!o.records.empty()) jsonl::write_file(o.records, to_rows(rep.records));
  print_warnings(gw, err);
  out << rep.to_table();
  return 0;
}

inline int cmd_stats(const Options& o, std::ostream& out) {
  auto before = read_candidates(o.before);
  auto after = read_candidates(o.after);
  std::map<std::string, std::size_t> docs;
  if (!o.docs.empty()) {
    for (const auto& j : jsonl::read_file(o.docs)) ++docs[j.value("source", j.value("dataset", ""))];
  }
  std::map<std::string, double> taus;
  for (const auto& kv : o.tau_by_source) {
    auto eq = kv.rfind('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ConfigInvalid, "--tau-f-source expects SOURCE=VALUE");
    try {
      taus[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigInvalid, "--tau-f-source: bad value in '" + kv + "'");
    }
  }
  auto rep = stats(before, after, docs, taus);
  if (!o.report.empty()) jsonl::write_json_file(o.report, rep.to_json());
  out << rep.to_table();
  return 0;
}

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::SchemaError:
    case ErrorCode::UnboundPlaceholder:
    case ErrorCode::InsufficientLabels:
      return 1;
    default:
      return 2;
  }
}

}  // namespace detail

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using detail::Options;
  Options o;
  CLI::App app{"Rationale extraction, filtration and rationale-supervised reasoning"};
  app.name(args.empty() ? "rationale" : args.front());
  app.require_subcommand(1);
  app.add_option("--config", o.config_path, "Run configuration JSON")->check(CLI::ExistingFile);
  app.add_option("--mock", o.mock_fixture, "Bind every role to this mock fixture")->check(CLI::ExistingFile);
  app.add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", o.seed, "Base seed");
  app.add_option("--dump-config", o.dump_config, "Write the effective configuration to this file");

  auto* pre = app.add_subcommand("prefilter", "Keep reasoning-rich documents by centroid similarity");
  pre->add_option("--in", o.in, "Corpus JSONL {id, text, source}")->required()->check(CLI::ExistingFile);
  pre->add_option("--reference", o.reference, "Reference QA JSONL")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", o.out, "Kept documents JSONL")->required();
  pre->add_option("--report", o.report, "Per-source counts JSON");
  pre->add_option("--alpha", o.alpha, "Cosine threshold");
  pre->add_option("--max-tokens", o.prefilter_max_tokens, "Document token cap");

  auto* ext = app.add_subcommand("extract", "Sample marked-up rationales from corpus segments or QA pairs");
  ext->add_option("--corpus", o.corpus, "Documents JSONL")->check(CLI::ExistingFile);
  ext->add_option("--qa", o.qa, "QA JSONL {id, question, answer[, gold_final, dataset]}")->check(CLI::ExistingFile);
  ext->add_option("--template", o.template_path, "Prompt template file")->required()->check(CLI::ExistingFile);
  ext->add_option("--out", o.out, "Candidates JSONL")->required();
  ext->add_option("--report", o.report, "Extraction counts JSON");
  ext->add_option("--max-words", o.max_words, "Segment size in words");
  ext->add_option("--num-samples", o.num_samples, "Completions per prompt");

  auto* fil = app.add_subcommand("filter", "Score candidates by future-token loss gain and apply tau_f");
  fil->add_option("--in", o.in, "Candidates JSONL")->required()->check(CLI::ExistingFile);
  fil->add_option("--out", o.out, "Verdicts JSONL")->required();
  fil->add_option("--kept", o.kept, "Kept candidates JSONL");
  fil->add_option("--report", o.report, "Statistics JSON");
  fil->add_option("--tau-f", o.tau_f, "Gain threshold for every source");
  fil->add_option("--decay", o.decay, "Per-token weight decay");
  fil->add_option("--horizon", o.horizon, "Future tokens scored");

  auto* emi = app.add_subcommand("emit", "Write (context, target) training pairs");
  emi->add_option("--in", o.in, "Kept candidates JSONL")->required()->check(CLI::ExistingFile);
  emi->add_option("--out", o.out, "Training JSONL")->required();
  emi->add_option("--report", o.report, "Count report JSON");
  emi->add_option("--max-context-tokens", o.max_context_tokens, "Left-truncate contexts to this many tokens");

  auto* cal = app.add_subcommand("calibrate", "Choose tau_f from labeled candidates");
  cal->add_option("--in", o.in, "Labeled candidates JSONL (label: helpful|unhelpful)")->required()->check(CLI::ExistingFile);
  cal->add_option("--out", o.out, "Calibration result JSON");
  cal->add_option("--target-precision", o.target_precision, "Required precision of kept rationales");

  auto add_supervision_flags = [&](CLI::App* sub) {
    sub->add_option("--mode", o.mode, "implicit | explicit | unsupervised");
    sub->add_option("--num-candidates", o.num_candidates, "Candidate steps per iteration");
    sub->add_option("--temperature", o.temperature, "Sampling temperature");
    sub->add_option("--top-k", o.top_k, "Top-k sampling");
    sub->add_option("--max-steps", o.max_steps, "Step limit");
    sub->add_option("--stop-pattern", o.stop_pattern, "Pattern that ends a trajectory");
    sub->add_option("--shots", o.shots_path, "Agent template supplying few-shot demonstrations")
        ->check(CLI::ExistingFile);
  };
  auto* sup = app.add_subcommand("supervise", "Run rationale-supervised reasoning");
  sup->add_option("--question", o.question, "Single question");
  sup->add_option("--in", o.in, "Tasks JSONL {id, question, gold, task_tag}")->check(CLI::ExistingFile);
  sup->add_option("--out", o.out, "Traces JSONL (default: stdout)");
  add_supervision_flags(sup);

  auto* ev = app.add_subcommand("eval", "Compare greedy baseline and supervised accuracy");
  ev->add_option("--in", o.in, "Tasks JSONL")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", o.out, "Results JSON");
  ev->add_option("--records", o.records, "Per-instance records JSONL");
  add_supervision_flags(ev);

  auto* st = app.add_subcommand("stats", "Sampling and filtration statistics table");
  st->add_option("--before", o.before, "Candidates before filtering")->required()->check(CLI::ExistingFile);
  st->add_option("--after", o.after, "Candidates after filtering")->required()->check(CLI::ExistingFile);
  st->add_option("--docs", o.docs, "Document JSONL used to count docs per source")->check(CLI::ExistingFile);
  st->add_option("--tau-f-source", o.tau_by_source, "SOURCE=VALUE threshold column entries");
  st->add_option("--report", o.report, "Statistics JSON");

  std::vector<const char*> argv;
  argv.push_back(args.empty() ? "rationale" : args.front().c_str());
  for (std::size_t i = 1; i < args.size(); ++i) argv.push_back(args[i].c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    RunConfig cfg = detail::effective_config(o);
    if (!o.dump_config.empty()) jsonl::write_json_file(o.dump_config, to_json(cfg));
    if (pre->parsed()) return detail::cmd_prefilter(o, cfg, err);
    if (ext->parsed()) return detail::cmd_extract(o, cfg, err);
    if (fil->parsed()) return detail::cmd_filter(o, cfg, out, err);
    if (emi->parsed()) return detail::cmd_emit(o, cfg, err);
    if (cal->parsed()) return detail::cmd_calibrate(o, cfg, out, err);
    if (sup->parsed()) return detail::cmd_supervise(o, cfg, out, err);
    if (ev->parsed()) return detail::cmd_eval(o, cfg, out, err);
    if (st->parsed()) return detail::cmd_stats(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return detail::exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace rationale::cli
