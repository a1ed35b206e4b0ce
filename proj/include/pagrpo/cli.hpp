#pragma once

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pagrpo/config.hpp"
#include "pagrpo/eval.hpp"
#include "pagrpo/io.hpp"
#include "pagrpo/report.hpp"
#include "pagrpo/trainer.hpp"

namespace pagrpo::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

namespace fs = std::filesystem;

/// Flags shared by every subcommand that reads a config file.
struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> workers;
  std::optional<std::string> task;
  std::optional<std::string> dataset;

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", config, "INI config file");
    cmd.add_option("--seed", seed, "run seed");
    cmd.add_option("--out", out, "output directory");
    cmd.add_option("--workers", workers, "worker threads (results do not depend on it)");
    cmd.add_option("--task", task, "mcq or judge (synthetic data only)");
    cmd.add_option("--dataset", dataset, "instance file (JSONL)");
  }

  RunConfig load() const {
    RunConfig c = config.empty() ? RunConfig{} : load_config(config);
    if (seed) c.seed = *seed;
    if (out) c.out = *out;
    if (workers) c.workers = *workers;
    if (task) {
      try {
        c.task = parse_task(*task);
      } catch (const InputError& e) {
        throw ConfigError(e.what());
      }
    }
    if (dataset) c.dataset = *dataset;
    return c;
  }
};

inline std::string epoch_name(int epoch) {
  std::ostringstream os;
  os << "epoch_" << std::setw(3) << std::setfill('0') << epoch << ".json";
  return os.str();
}

inline Dataset synth(const RunConfig& c, int count, const std::string& prefix) {
  SynthDatasetSpec spec;
  spec.count = count;
  spec.n = candidate_count(c.task);
  spec.margin = c.margin;
  spec.spread = c.spread;
  spec.seed = c.seed;
  spec.id_prefix = prefix;
  return generate_instances(spec);
}

// Evaluation data: the configured dataset or a synthetic held-out set.
inline Dataset eval_data(const RunConfig& c) {
  if (!c.dataset.empty()) return read_instances(c.dataset, c.utility_spec());
  return synth(c, c.heldout_count > 0 ? c.heldout_count : 100, "heldout");
}

inline PolicyParams policy_of(const std::optional<std::string>& checkpoint, const RunConfig& c) {
  return checkpoint ? read_checkpoint(*checkpoint).params : c.initial;
}

inline void write_reports(const fs::path& dir, const std::string& stem, const std::vector<MetricsReport>& reports,
                          const std::string& kind) {
  io::write_text(dir / "metrics" / (stem + "_summary.json"), metrics_summary(reports, kind).dump(2) + "\n");
  io::write_text(dir / "metrics" / (stem + "_report.txt"), metrics_table(reports));
}

// ---------------------------------------------------------------------------

struct GenCmd {
  int count = 200;
  int n = 4;
  double margin = 1.0;
  double spread = 0.5;
  std::uint64_t seed = 0;
  std::string prefix = "syn";
  std::string out;

  void attach(CLI::App& cmd) {
    cmd.add_option("--count", count, "number of instances")->capture_default_str();
    cmd.add_option("--n", n, "candidates per instance (2 or 4)")->capture_default_str();
    cmd.add_option("--margin", margin, "utility of the correct candidate")->capture_default_str();
    cmd.add_option("--spread", spread, "std dev of distractor utilities")->capture_default_str();
    cmd.add_option("--seed", seed, "generator seed")->capture_default_str();
    cmd.add_option("--prefix", prefix, "instance id prefix")->capture_default_str();
    cmd.add_option("--out", out, "output file (default: stdout)");
  }

  int run(std::ostream& out_stream, std::ostream& err) const {
    const Dataset data = generate_instances({count, n, margin, spread, seed, prefix});
    if (out.empty()) {
      out_stream << instances_to_string(data);
    } else {
      write_instances(out, data);
      err << "wrote " << data.size() << " instances to " << out << "\n";
    }
    return kOk;
  }
};

struct TrainCmd {
  CommonFlags common;
  std::optional<std::string> heldout;
  std::optional<double> lambda;
  std::optional<std::string> algorithm;
  std::optional<std::string> perm_set;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  bool quiet = false;

  void attach(CLI::App& cmd) {
    common.attach(cmd);
    cmd.add_option("--heldout", heldout, "held-out instance file (JSONL)");
    cmd.add_option("--lambda", lambda, "consistency reward weight");
    cmd.add_option("--algorithm", algorithm, "pa_grpo or grpo");
    cmd.add_option("--perm-set", perm_set, "identity, cyclic4, structured5, full24, judge_pair");
    cmd.add_option("--epochs", epochs, "training epochs");
    cmd.add_option("--learning-rate", learning_rate, "step size");
    cmd.add_flag("--quiet", quiet, "no per-iteration progress");
  }

  RunConfig config() const {
    RunConfig c = common.load();
    if (heldout) c.heldout = *heldout;
    if (lambda) c.trainer.reward.lambda = *lambda;
    if (algorithm) c.trainer.algorithm = parse_algorithm(*algorithm);
    if (perm_set) c.perm_set = parse_perm_set(*perm_set);
    if (epochs) c.trainer.epochs = *epochs;
    if (learning_rate) c.trainer.learning_rate = *learning_rate;
    return c;
  }

  int run(std::ostream& out, std::ostream& err) const {
    RunConfig c = config();
    Dataset data;
    if (!c.dataset.empty()) {
      data = read_instances(c.dataset, c.utility_spec());
      if (data.empty()) throw InputError("dataset '" + c.dataset + "' has no instances");
      c.task = data.front().instance.task;
    } else {
      data = synth(c, c.synth_count, "train");
    }
    Dataset held;
    if (!c.heldout.empty()) held = read_instances(c.heldout, c.utility_spec());
    else if (c.heldout_count > 0) held = synth(c, c.heldout_count, "heldout");
    validate(c);

    const fs::path dir = c.out;
    io::write_text(dir / "config.ini", config_snapshot(c));
    const TrainerConfig tc = c.resolved_trainer();
    write_checkpoint(dir / "checkpoints" / "initial.json", {c.initial, c.seed, 0, 0});

    const auto progress = [&](const IterationRecord& r) {
      if (quiet) return;
      err << "iter " << r.iteration << " epoch " << r.epoch << " reward " << fixed4(r.mean_reward) << " r_con "
          << fixed4(r.mean_consistency);
      if (r.heldout_con) err << " heldout con " << fixed4(*r.heldout_con);
      err << "\n";
    };
    const TrainResult res = train(data, held, tc, c.initial, progress);

    for (const auto& ck : res.checkpoints) write_checkpoint(dir / "checkpoints" / epoch_name(ck.epoch), ck);
    const int last_iter = res.log.empty() ? 0 : res.log.back().iteration;
    write_checkpoint(dir / "checkpoints" / "final.json", {res.params, c.seed, last_iter, tc.epochs});
    io::write_text(dir / "train_log.jsonl", train_log_jsonl(res.log));
    const std::string summary = train_summary_table(res);
    io::write_text(dir / "train_summary.txt", summary);

    if (!held.empty()) {
      std::vector<MetricsReport> reports;
      for (Protocol p : c.protocols) {
        for (auto& r : evaluate(res.params, held, p, DecisionMode::argmax(), c.label_only_mode, c.workers)) {
          reports.push_back(std::move(r));
        }
      }
      write_reports(dir, "heldout", reports, "pagrpo.metrics");
      out << summary << "\n" << metrics_table(reports);
    } else {
      out << summary;
    }
    return kOk;
  }
};

struct EvalCmd {
  CommonFlags common;
  std::optional<std::string> checkpoint;
  std::vector<std::string> protocols;
  std::optional<std::string> label_only_mode;
  std::optional<std::string> decision;
  std::optional<std::uint64_t> decision_seed;
  std::string emit_log;

  void attach(CLI::App& cmd) {
    common.attach(cmd);
    cmd.add_option("--checkpoint", checkpoint, "policy checkpoint (default: [policy] from config)");
    cmd.add_option("--protocol", protocols, "coupled, label_only, order_only (repeatable)");
    cmd.add_option("--label-only-mode", label_only_mode, "full or rotations");
    cmd.add_option("--decision", decision, "argmax or sampled");
    cmd.add_option("--decision-seed", decision_seed, "seed for sampled decisions");
    cmd.add_option("--emit-log", emit_log, "also write the simulated responses as a JSONL log");
  }

  int run(std::ostream& out, std::ostream&) const {
    RunConfig c = common.load();
    if (!protocols.empty()) {
      c.protocols.clear();
      for (const auto& p : protocols) {
        try {
          c.protocols.push_back(parse_protocol(p));
        } catch (const InputError& e) {
          throw ConfigError(e.what());
        }
      }
    }
    if (label_only_mode) c.label_only_mode = parse_label_only_mode(*label_only_mode);
    if (decision) {
      if (*decision != "argmax" && *decision != "sampled") throw ConfigError("--decision must be argmax or sampled");
      c.sampled = *decision == "sampled";
    }
    if (decision_seed) c.decision_seed = *decision_seed;
    validate(c);
    const PolicyParams params = policy_of(checkpoint, c);
    const Dataset data = eval_data(c);

    std::vector<MetricsReport> reports;
    std::string log;
    for (Protocol p : c.protocols) {
      for (auto& r : evaluate(params, data, p, c.decision_mode(), c.label_only_mode, c.workers)) {
        reports.push_back(std::move(r));
      }
      if (!emit_log.empty()) {
        for (const auto& rec : simulate_log(params, data, p, c.decision_mode(), c.label_only_mode)) {
          log += log_record_to_json(rec).dump() + "\n";
        }
      }
    }
    write_reports(c.out, "eval", reports, "pagrpo.metrics");
    if (!emit_log.empty()) io::write_text(emit_log, log);
    out << metrics_table(reports);
    return kOk;
  }
};

struct DecomposeCmd {
  CommonFlags common;
  std::optional<std::string> checkpoint;
  std::optional<std::string> label_only_mode;

  void attach(CLI::App& cmd) {
    common.attach(cmd);
    cmd.add_option("--checkpoint", checkpoint, "policy checkpoint (default: [policy] from config)");
    cmd.add_option("--label-only-mode", label_only_mode, "full or rotations");
  }

  int run(std::ostream& out, std::ostream&) const {
    RunConfig c = common.load();
    if (label_only_mode) c.decompose_label_only_mode = parse_label_only_mode(*label_only_mode);
    validate(c);
    const auto reports =
        bias_decomposition(policy_of(checkpoint, c), eval_data(c), c.decompose_label_only_mode, c.workers);
    write_reports(c.out, "decompose", reports, "pagrpo.decomposition");
    out << metrics_table(reports);
    return kOk;
  }
};

struct GradeCmd {
  CommonFlags common;
  std::string log;

  void attach(CLI::App& cmd) {
    common.attach(cmd);
    cmd.add_option("--log", log, "response log (JSONL)")->required();
  }

  int run(std::ostream& out, std::ostream& err) const {
    RunConfig c = common.load();
    validate(c);
    if (c.dataset.empty()) throw ConfigError("grade needs --dataset or [data] dataset");
    const Dataset data = read_instances(c.dataset, c.utility_spec());
    const GradeResult g = grade_log(io::read_lines(log), data, log);
    std::string diag;
    for (const auto& d : g.diagnostics) diag += d + "\n";
    err << diag;
    json summary = metrics_summary(g.reports, "pagrpo.grade");
    summary["valid_records"] = g.valid_records;
    summary["skipped_records"] = g.skipped_records;
    io::write_text(fs::path(c.out) / "metrics" / "grade_summary.json", summary.dump(2) + "\n");
    io::write_text(fs::path(c.out) / "metrics" / "grade_report.txt", metrics_table(g.reports));
    io::write_text(fs::path(c.out) / "metrics" / "grade_diagnostics.txt", diag);
    out << metrics_table(g.reports);
    out << "records: " << g.valid_records << " valid, " << g.skipped_records << " skipped\n";
    return kOk;
  }
};

struct FilterCmd {
  CommonFlags common;
  std::optional<std::string> checkpoint;
  std::optional<std::string> probe;
  std::string output;

  void attach(CLI::App& cmd) {
    common.attach(cmd);
    cmd.add_option("--checkpoint", checkpoint, "policy checkpoint (default: [policy] from config)");
    cmd.add_option("--probe", probe, "comma-separated probe permutations, e.g. ABCD,DCBA");
    cmd.add_option("--output", output, "filtered instance file (default: <out>/filtered.jsonl)");
  }

  int run(std::ostream& out, std::ostream& err) const {
    RunConfig c = common.load();
    if (probe) {
      c.probe.clear();
      try {
        for (const auto& p : detail::split_list(*probe)) c.probe.push_back(Permutation::from_string(p));
      } catch (const InputError& e) {
        throw ConfigError(std::string("--probe: ") + e.what());
      }
    }
    validate(c);
    const Dataset data = eval_data(c);
    std::optional<std::vector<Permutation>> perms;
    if (!c.probe.empty()) perms = c.probe;
    const Dataset kept = filter_inconsistent(policy_of(checkpoint, c), data, perms);
    const fs::path path = output.empty() ? fs::path(c.out) / "filtered.jsonl" : fs::path(output);
    write_instances(path, kept);
    if (kept.empty()) err << "warning: no inconsistent instances; " << path.string() << " is empty\n";
    out << "kept " << kept.size() << " of " << data.size() << " instances\n";
    return kOk;
  }
};

/// Entry point for the `pagrpo` tool. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Permutation-aware policy optimization on a simulated policy"};
  app.require_subcommand(1);
  GenCmd gen;
  TrainCmd train_cmd;
  EvalCmd eval_cmd;
  DecomposeCmd decompose;
  GradeCmd grade;
  FilterCmd filter;
  CLI::App* gen_app = app.add_subcommand("gen", "generate a synthetic instance file");
  CLI::App* train_app = app.add_subcommand("train", "train a policy");
  CLI::App* eval_app = app.add_subcommand("eval", "evaluate a policy under full permutation expansion");
  CLI::App* dec_app = app.add_subcommand("decompose", "label_only / order_only / coupled breakdown");
  CLI::App* grade_app = app.add_subcommand("grade", "score an external response log");
  CLI::App* filter_app = app.add_subcommand("filter", "keep instances the policy answers inconsistently");
  gen.attach(*gen_app);
  train_cmd.attach(*train_app);
  eval_cmd.attach(*eval_app);
  decompose.attach(*dec_app);
  grade.attach(*grade_app);
  filter.attach(*filter_app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (gen_app->parsed()) return gen.run(out, err);
    if (train_app->parsed()) return train_cmd.run(out, err);
    if (eval_app->parsed()) return eval_cmd.run(out, err);
    if (dec_app->parsed()) return decompose.run(out, err);
    if (grade_app->parsed()) return grade.run(out, err);
    if (filter_app->parsed()) return filter.run(out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace pagrpo::cli
