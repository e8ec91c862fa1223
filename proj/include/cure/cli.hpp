#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cure/datasets.hpp"
#include "cure/detail/toml.hpp"
#include "cure/engine.hpp"
#include "cure/evalharness.hpp"
#include "cure/errors.hpp"

namespace cure {

struct RunConfig {
  PipelineConfig pipeline;
  DatasetSpec dataset;
  AblationMode mode = AblationMode::FullFramework;
  std::filesystem::path cache_dir;  // empty disables caching
  std::filesystem::path out_dir = "runs/out";
  std::optional<std::filesystem::path> mock_script;
  int concurrency = 4;
};

/// Raw flag values; unset optionals fall through to env, config file, default.
struct CliOverrides {
  std::optional<std::string> dataset_path;
  std::optional<std::string> dataset_kind;
  std::optional<std::string> split;
  std::optional<std::string> mode;
  std::optional<std::string> mock;
  std::optional<std::string> seed;
  std::optional<std::string> sample_n;
  std::optional<std::string> concurrency;
  std::optional<std::string> out;
  std::optional<std::string> cache;
};

using EnvMap = std::map<std::string, std::string>;

inline EnvMap environment_overrides() {
  EnvMap env;
  for (const char* name :
       {"CURE_DATASET", "CURE_DATASET_KIND", "CURE_SPLIT", "CURE_MODE", "CURE_MOCK",
        "CURE_SEED", "CURE_SAMPLE_N", "CURE_CONCURRENCY", "CURE_OUT", "CURE_CACHE"}) {
    if (const char* value = std::getenv(name); value && *value) env[name] = value;
  }
  return env;
}

/// Reads a config file; .toml goes through the bundled TOML subset reader,
/// anything else is parsed as JSON (the documented equivalent schema).
inline json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  if (path.extension() == ".toml") return detail::parse_toml(buf.str());
  json j = json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
  return j;
}

namespace detail_cli {

inline EndpointConfig endpoint_from_json(Role role, const json& j) {
  EndpointConfig e;
  e.role = role;
  e.model_id = j.value("model_id", std::string{});
  e.base_url = j.value("base_url", std::string{});
  e.api_key_env = j.value("api_key_env", std::string{});
  e.decoding.temperature = j.value("temperature", 0.0);
  e.decoding.max_tokens = j.value("max_tokens", 1024);
  e.decoding.timeout = std::chrono::milliseconds(j.value("timeout_ms", 120000LL));
  return e;
}

/// Layered string lookup implementing the precedence
/// CLI flag > environment > config file > default.
inline std::string pick(const std::optional<std::string>& cli, const EnvMap& env,
                        const char* env_name, const json& file, const char* file_section,
                        const char* file_key, const std::string& fallback) {
  if (cli) return *cli;
  if (auto it = env.find(env_name); it != env.end()) return it->second;
  if (file.contains(file_section) && file[file_section].contains(file_key)) {
    const json& v = file[file_section][file_key];
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    if (v.is_number_float()) return std::to_string(v.get<double>());
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  }
  return fallback;
}

inline std::int64_t to_int(const std::string& value, const char* what) {
  try {
    std::size_t used = 0;
    const std::int64_t v = std::stoll(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string(what) + " must be an integer, got '" + value + "'");
}

}  // namespace detail_cli

inline RunConfig resolve_run_config(const json& file, const EnvMap& env,
                                    const CliOverrides& cli) {
  using detail_cli::pick;
  using detail_cli::to_int;
  RunConfig cfg;

  const json pipeline = file.value("pipeline", json::object());
  cfg.pipeline.primary =
      detail_cli::endpoint_from_json(Role::Primary, pipeline.value("primary", json::object()));
  cfg.pipeline.helper1 =
      detail_cli::endpoint_from_json(Role::Helper1, pipeline.value("helper1", json::object()));
  cfg.pipeline.helper2 =
      detail_cli::endpoint_from_json(Role::Helper2, pipeline.value("helper2", json::object()));
  cfg.pipeline.max_json_retries = pipeline.value("max_json_retries", 2);
  cfg.pipeline.confidence_max_tokens = pipeline.value("confidence_max_tokens", 64);
  cfg.pipeline.direct_max_tokens = pipeline.value("direct_max_tokens", 16);
  cfg.pipeline.synthesis_max_tokens = pipeline.value("synthesis_max_tokens", 1024);
  cfg.pipeline.cot_max_tokens = pipeline.value("cot_max_tokens", 1024);

  cfg.dataset.kind = dataset_kind_from_string(
      pick(cli.dataset_kind, env, "CURE_DATASET_KIND", file, "dataset", "kind", "MedQA"));
  cfg.dataset.path = pick(cli.dataset_path, env, "CURE_DATASET", file, "dataset", "path", "");
  cfg.dataset.split = pick(cli.split, env, "CURE_SPLIT", file, "dataset", "split", "test");
  cfg.dataset.sample_n = static_cast<int>(
      to_int(pick(cli.sample_n, env, "CURE_SAMPLE_N", file, "dataset", "sample_n", "1000"),
             "sample_n"));
  cfg.dataset.seed = static_cast<std::uint64_t>(
      to_int(pick(cli.seed, env, "CURE_SEED", file, "dataset", "seed", "42"), "seed"));

  cfg.mode = ablation_mode_from_string(
      pick(cli.mode, env, "CURE_MODE", file, "run", "mode", "full_framework"));
  cfg.out_dir = pick(cli.out, env, "CURE_OUT", file, "run", "out_dir", "runs/out");
  cfg.cache_dir = pick(cli.cache, env, "CURE_CACHE", file, "run", "cache_dir", "");
  const std::string mock = pick(cli.mock, env, "CURE_MOCK", file, "run", "mock_script", "");
  if (!mock.empty()) cfg.mock_script = mock;
  cfg.concurrency = static_cast<int>(to_int(
      pick(cli.concurrency, env, "CURE_CONCURRENCY", file, "run", "concurrency", "4"),
      "concurrency"));
  if (cfg.concurrency < 1) throw ConfigError("concurrency must be >= 1");
  if (cfg.dataset.sample_n < 1) throw ConfigError("sample_n must be >= 1");

  // Scripted runs may omit endpoints entirely, but cache keys hang off the
  // model id, so each role needs a distinct default.
  if (cfg.mock_script) {
    for (EndpointConfig* e :
         {&cfg.pipeline.primary, &cfg.pipeline.helper1, &cfg.pipeline.helper2}) {
      if (e->model_id.empty()) e->model_id = "mock-" + to_string(e->role);
    }
  }
  return cfg;
}

namespace detail_cli {

inline void validate_run_config(const RunConfig& cfg) {
  if (cfg.dataset.path.empty()) throw ConfigError("no dataset path configured");
  if (!std::filesystem::exists(cfg.dataset.path))
    throw ConfigError("dataset file not found: " + cfg.dataset.path.string());
  if (cfg.mock_script) {
    if (!std::filesystem::exists(*cfg.mock_script))
      throw ConfigError("mock script not found: " + cfg.mock_script->string());
    return;  // scripted runs need no endpoints
  }
  for (const EndpointConfig* e :
       {&cfg.pipeline.primary, &cfg.pipeline.helper1, &cfg.pipeline.helper2}) {
    if (e->model_id.empty() || e->base_url.empty())
      throw ConfigError("live run needs model_id and base_url for " + to_string(e->role));
  }
}

/// Identity of the experiment: everything that can change results, nothing
/// that merely relocates outputs.
inline json scientific_config_json(const RunConfig& cfg, AblationMode mode,
                                   const std::string& mock_digest) {
  return json{{"pipeline",
               {{"primary", to_json(cfg.pipeline.primary)},
                {"helper1", to_json(cfg.pipeline.helper1)},
                {"helper2", to_json(cfg.pipeline.helper2)},
                {"max_json_retries", cfg.pipeline.max_json_retries},
                {"confidence_max_tokens", cfg.pipeline.confidence_max_tokens},
                {"direct_max_tokens", cfg.pipeline.direct_max_tokens},
                {"synthesis_max_tokens", cfg.pipeline.synthesis_max_tokens},
                {"cot_max_tokens", cfg.pipeline.cot_max_tokens}}},
              {"dataset",
               {{"kind", to_string(cfg.dataset.kind)},
                {"split", cfg.dataset.split},
                {"sample_n", cfg.dataset.sample_n},
                {"seed", cfg.dataset.seed}}},
              {"mode", to_string(mode)},
              {"mock_digest", mock_digest}};
}

inline std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return detail::sha256_hex(buf.str());
}

struct SingleRun {
  std::vector<Question> questions;
  std::vector<PipelineRecord> records;
  Metrics metrics;
};

/// Loads + samples the dataset, runs one pipeline variant, and writes the
/// run directory (records, questions, manifest, summary, metrics).
inline SingleRun execute_run(const RunConfig& cfg, AblationMode mode,
                             const std::filesystem::path& out_dir, std::ostream& diag) {
  LoadResult loaded = load_dataset(cfg.dataset);
  if (!loaded.skipped.empty())
    diag << "note: skipped " << loaded.skipped.size() << " unmappable record(s)\n";
  std::vector<Question> questions = sample_questions(
      std::move(loaded.questions), static_cast<std::size_t>(cfg.dataset.sample_n),
      cfg.dataset.seed);

  ClientOptions client_options;
  client_options.cache_dir = cfg.cache_dir;
  std::string mock_digest;
  if (cfg.mock_script) {
    client_options.mock = MockScript::from_file(*cfg.mock_script);
    mock_digest = file_digest(*cfg.mock_script);
  }
  auto client = std::make_shared<ChatClient>(client_options);
  Pipeline pipeline(cfg.pipeline, client);

  SingleRun run;
  run.records = run_dataset(pipeline, questions, mode, cfg.concurrency);
  run.metrics = compute_metrics(run.records, questions, mode);
  run.questions = std::move(questions);

  RunManifest manifest;
  manifest.config_echo = scientific_config_json(cfg, mode, mock_digest);
  manifest.config_digest = detail::sha256_hex(manifest.config_echo.dump());
  for (TemplateId t : all_template_ids())
    manifest.template_digests[to_string(t)] = template_digest(t);
  manifest.timestamp = utc_timestamp_now();
  manifest.dataset_digest = dataset_digest(run.questions);
  manifest.dataset = to_string(cfg.dataset.kind);
  manifest.mode = to_string(mode);
  manifest.seed = cfg.dataset.seed;
  manifest.n_questions = run.questions.size();
  manifest.concurrency = cfg.concurrency;
  manifest.mock = cfg.mock_script.has_value();

  const ChatClient::Stats stats = client->stats();
  RunSummary summary;
  summary.n_records = run.records.size();
  summary.n_backend_calls = stats.backend_calls();
  summary.n_live_calls = stats.live_calls;
  summary.n_mock_calls = stats.mock_calls;
  summary.n_cache_hits = stats.cache_hits;
  summary.n_transport_retries = stats.transport_retries;

  write_run_dir(out_dir, run.questions, run.records, manifest, summary);
  {
    std::ofstream out(out_dir / "metrics.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + (out_dir / "metrics.json").string());
    out << to_json(run.metrics).dump(2) << '\n';
  }
  return run;
}

/// Exit-code policy shared by all subcommands.
template <typename Fn>
inline int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << "\n";
    return 1;
  } catch (const ValidationError& ex) {
    err << "config error: " << ex.what() << "\n";
    return 1;
  } catch (const SchemaMismatchError& ex) {
    err << "dataset error: " << ex.what() << "\n";
    return 1;
  } catch (const InsufficientDataError& ex) {
    err << "dataset error: " << ex.what() << "\n";
    return 1;
  } catch (const CoverageGapError& ex) {
    err << "coverage error: " << ex.what() << "\n";
    return 2;
  } catch (const IoError& ex) {
    err << "io error: " << ex.what() << "\n";
    return 2;
  } catch (const Error& ex) {  // backend failures beyond policy
    err << "backend error: " << ex.what() << "\n";
    return 3;
  } catch (const json::exception& ex) {
    err << "config error: " << ex.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return 3;
  }
}

}  // namespace detail_cli

inline int cmd_run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail_cli::guarded(err, [&] {
    detail_cli::validate_run_config(cfg);
    detail_cli::SingleRun run = detail_cli::execute_run(cfg, cfg.mode, cfg.out_dir, err);
    out << "wrote " << run.records.size() << " records to " << cfg.out_dir.string() << "\n";
    out << "accuracy " << detail_report::fmt3(run.metrics.acc_overall) << " over "
        << run.metrics.n_total << " questions\n";
    return 0;
  });
}

inline int cmd_ablate(const RunConfig& cfg, const std::vector<AblationMode>& modes,
                      std::ostream& out, std::ostream& err) {
  if (modes.empty()) {
    err << "config error: no ablation modes given\n";
    return 1;
  }
  return detail_cli::guarded(err, [&] {
    detail_cli::validate_run_config(cfg);
    ReportBundle bundle;
    for (AblationMode mode : modes) {
      const auto mode_dir = cfg.out_dir / to_string(mode);
      detail_cli::SingleRun run = detail_cli::execute_run(cfg, mode, mode_dir, err);
      bundle.rows.push_back(ReportRow::from_metrics(
          display_name(mode), mode, {{run.metrics.dataset, run.metrics}}));
      out << to_string(mode) << ": accuracy "
          << detail_report::fmt3(run.metrics.acc_overall) << "\n";
    }
    emit_report(bundle, cfg.out_dir);
    out << "comparison written to " << (cfg.out_dir / "report.md").string() << "\n";
    return 0;
  });
}

inline int cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                      const std::filesystem::path& out_dir, std::ostream& out,
                      std::ostream& err) {
  return detail_cli::guarded(err, [&] {
    std::map<AblationMode, std::map<DatasetKind, Metrics>> by_mode;
    for (const auto& dir : run_dirs) {
      try {
        std::ifstream mf(dir / "manifest.json");
        if (!mf) throw IoError("missing manifest in " + dir.string());
        json manifest;
        mf >> manifest;
        const AblationMode mode =
            ablation_mode_from_string(manifest.at("mode").get<std::string>());
        auto questions = read_questions_jsonl(dir / "questions.jsonl");
        auto records = read_records_jsonl(dir / "records.jsonl");
        Metrics m = compute_metrics(records, questions, mode);
        by_mode[mode][m.dataset] = m;
      } catch (const CoverageGapError&) {
        throw;
      } catch (const json::exception& ex) {
        throw IoError("unreadable run dir " + dir.string() + ": " + ex.what());
      } catch (const Error& ex) {
        throw IoError("unreadable run dir " + dir.string() + ": " + ex.what());
      }
    }
    if (by_mode.empty()) throw ConfigError("no run directories given");
    ReportBundle bundle;
    for (auto& [mode, metrics] : by_mode)
      bundle.rows.push_back(
          ReportRow::from_metrics(display_name(mode), mode, std::move(metrics)));
    emit_report(bundle, out_dir);
    out << "report written to " << (out_dir / "report.md").string() << "\n";
    return 0;
  });
}

inline int cmd_report_fixture(const std::filesystem::path& fixture_file,
                              const std::string& table, const std::filesystem::path& out_dir,
                              std::ostream& out, std::ostream& err) {
  return detail_cli::guarded(err, [&] {
    ReportBundle bundle = load_fixture_bundle(fixture_file, table);
    emit_report(bundle, out_dir);
    out << "report written to " << (out_dir / "report.md").string() << "\n";
    return 0;
  });
}

inline int cmd_inspect_templates(const std::string& name, std::ostream& out,
                                 std::ostream& err) {
  return detail_cli::guarded(err, [&] {
    TemplateId id;
    if (name == "confidence" || name == "confidence_v1") {
      id = TemplateId::ConfidenceV1;
    } else if (name == "synthesis" || name == "synthesis_v1") {
      id = TemplateId::SynthesisV1;
    } else if (name == "direct" || name == "direct_answer_v1") {
      id = TemplateId::DirectAnswerV1;
    } else if (name == "cot" || name == "cot_direct_v1") {
      id = TemplateId::CotDirectV1;
    } else {
      throw ConfigError("unknown template: " + name +
                        " (use confidence|synthesis|direct|cot)");
    }
    out << template_text(id) << "\n";
    return 0;
  });
}

inline int cmd_inspect_dataset(const std::string& kind, const std::filesystem::path& path,
                               std::size_t limit, std::ostream& out, std::ostream& err) {
  return detail_cli::guarded(err, [&] {
    DatasetSpec spec;
    spec.kind = dataset_kind_from_string(kind);
    spec.path = path;
    LoadResult loaded = load_dataset(spec);
    std::size_t shown = 0;
    for (const auto& q : loaded.questions) {
      if (limit > 0 && shown >= limit) break;
      out << question_jsonl_line(q) << "\n";
      ++shown;
    }
    if (!loaded.skipped.empty())
      err << "skipped " << loaded.skipped.size() << " unmappable record(s)\n";
    return 0;
  });
}

/// Parses argv (without the program name) and dispatches. Factored out of
/// main() so tests can drive the full surface in-process.
inline int run_command(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"confidence-gated multi-model QA pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  CliOverrides over;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (.toml or .json)");
    cmd->add_option("--dataset", over.dataset_path, "dataset JSONL path");
    cmd->add_option("--dataset-kind", over.dataset_kind, "MedQA|MedMCQA|PubMedQA");
    cmd->add_option("--split", over.split, "dataset split label");
    cmd->add_option("--mock", over.mock, "mock script JSON path");
    cmd->add_option("--seed", over.seed, "sampling seed");
    cmd->add_option("--sample-n", over.sample_n, "sample size");
    cmd->add_option("--concurrency", over.concurrency, "max questions in flight");
    cmd->add_option("--out", over.out, "output directory");
    cmd->add_option("--cache", over.cache, "response cache directory");
  };

  CLI::App* run = app.add_subcommand("run", "run the pipeline over a dataset");
  add_common(run);
  run->add_option("--mode", over.mode, "zero_shot|single_model_cot|full_framework");

  CLI::App* ablate = app.add_subcommand("ablate", "run several pipeline variants");
  add_common(ablate);
  std::vector<std::string> ablate_modes;
  ablate->add_option("--mode", ablate_modes, "mode, repeatable")->take_all();

  CLI::App* report = app.add_subcommand("report", "render reports from run directories");
  std::vector<std::string> report_dirs;
  std::string report_out = "report";
  std::string fixture_file;
  std::string fixture_table = "table1";
  report->add_option("dirs", report_dirs, "run directories");
  report->add_option("--out", report_out, "report output directory");
  report->add_option("--fixture", fixture_file, "recorded-results fixture JSON");
  report->add_option("--table", fixture_table, "fixture table name");

  CLI::App* inspect = app.add_subcommand("inspect", "dump templates or normalized datasets");
  CLI::App* inspect_templates = inspect->add_subcommand("templates", "print a frozen template");
  std::string template_name_arg;
  inspect_templates->add_option("name", template_name_arg, "confidence|synthesis|direct|cot")
      ->required();
  CLI::App* inspect_dataset = inspect->add_subcommand("dataset", "print normalized questions");
  std::string inspect_kind;
  std::string inspect_path;
  std::size_t inspect_limit = 0;
  inspect_dataset->add_option("--kind", inspect_kind, "MedQA|MedMCQA|PubMedQA")->required();
  inspect_dataset->add_option("--path", inspect_path, "dataset JSONL path")->required();
  inspect_dataset->add_option("--limit", inspect_limit, "max questions to print (0 = all)");

  std::vector<const char*> argv;
  argv.push_back("cure");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  return detail_cli::guarded(err, [&]() -> int {
    if (inspect->parsed()) {
      if (inspect_templates->parsed())
        return cmd_inspect_templates(template_name_arg, out, err);
      if (inspect_dataset->parsed())
        return cmd_inspect_dataset(inspect_kind, inspect_path, inspect_limit, out, err);
      throw ConfigError("inspect needs a target: templates|dataset");
    }
    if (report->parsed()) {
      if (!fixture_file.empty())
        return cmd_report_fixture(fixture_file, fixture_table, report_out, out, err);
      std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
      return cmd_report(dirs, report_out, out, err);
    }

    const json file_config =
        config_path.empty() ? json::object() : load_config_file(config_path);
    RunConfig cfg = resolve_run_config(file_config, environment_overrides(), over);
    if (run->parsed()) return cmd_run(cfg, out, err);
    if (ablate->parsed()) {
      std::vector<AblationMode> modes;
      for (const auto& m : ablate_modes) modes.push_back(ablation_mode_from_string(m));
      return cmd_ablate(cfg, modes, out, err);
    }
    throw ConfigError("unknown subcommand");
  });
}

}  // namespace cure
