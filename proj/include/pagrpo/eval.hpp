#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "pagrpo/core.hpp"
#include "pagrpo/io.hpp"
#include "pagrpo/parallel.hpp"
#include "pagrpo/policy.hpp"

namespace pagrpo {

/// Which variants make up a label_only expansion: every symbol assignment,
/// or just the n rotations of the alphabet. Other protocols always use all n!.
enum class LabelOnlyMode { full, rotations };

inline std::string_view to_string(LabelOnlyMode m) noexcept { return m == LabelOnlyMode::full ? "full" : "rotations"; }

inline LabelOnlyMode parse_label_only_mode(std::string_view s) {
  if (s == "full") return LabelOnlyMode::full;
  if (s == "rotations") return LabelOnlyMode::rotations;
  throw ConfigError("unknown label_only mode '" + std::string(s) + "'");
}

inline std::vector<Permutation> expansion_permutations(int n, Protocol protocol,
                                                       LabelOnlyMode label_mode = LabelOnlyMode::full) {
  if (protocol == Protocol::label_only && label_mode == LabelOnlyMode::rotations) return cyclic_shifts(n);
  return all_permutations(n);
}

inline std::vector<PromptVariant> full_expansion(const Instance& inst, Protocol protocol,
                                                 LabelOnlyMode label_mode = LabelOnlyMode::full) {
  std::vector<PromptVariant> out;
  const auto perms = expansion_permutations(inst.n(), protocol, label_mode);
  for (std::size_t k = 0; k < perms.size(); ++k) {
    out.push_back(apply_permutation(inst, perms[k], protocol, static_cast<int>(k)));
  }
  return out;
}

struct DecisionMode {
  enum class Kind { argmax, sampled };
  Kind kind = Kind::argmax;
  std::uint64_t seed = 0;
  NoiseConfig noise = NoiseConfig::clean();

  static DecisionMode argmax() { return {}; }
  static DecisionMode sampled(std::uint64_t seed, NoiseConfig noise = NoiseConfig::clean()) {
    return {Kind::sampled, seed, noise};
  }
};

/// Decisions for one instance over its expansion, in canonical enumeration order.
struct InstanceDecisions {
  std::string instance_id;
  Task task = Task::mcq;
  int ground_truth = 1;
  std::vector<std::optional<int>> decisions;
};

struct DecisionTable {
  Protocol protocol = Protocol::coupled;
  LabelOnlyMode label_mode = LabelOnlyMode::full;
  std::vector<InstanceDecisions> instances;
};

/// One response per variant of the expansion. Argmax responses are rendered
/// in the strict format; sampled ones go through the noisy sampler.
inline std::vector<Response> simulate_responses(const PolicyParams& params, const Scenario& sc, Protocol protocol,
                                                const DecisionMode& mode,
                                                LabelOnlyMode label_mode = LabelOnlyMode::full) {
  std::vector<Response> out;
  for (const PromptVariant& v : full_expansion(sc.instance, protocol, label_mode)) {
    if (mode.kind == DecisionMode::Kind::argmax) {
      const std::size_t slot = argmax_slot(params, sc.utilities, v);
      out.push_back(make_response(std::string("Answer: ") + v.slots[slot].symbol, v, 2));
    } else {
      auto eng = sample_engine(mode.seed, sc.instance.id, v.permutation_index, 0);
      out.push_back(sample(params, sc.utilities, v, mode.noise, eng));
    }
  }
  return out;
}

inline InstanceDecisions decide(const PolicyParams& params, const Scenario& sc, Protocol protocol,
                                const DecisionMode& mode = DecisionMode::argmax(),
                                LabelOnlyMode label_mode = LabelOnlyMode::full) {
  InstanceDecisions d{sc.instance.id, sc.instance.task, sc.instance.ground_truth, {}};
  for (const Response& r : simulate_responses(params, sc, protocol, mode, label_mode)) {
    d.decisions.push_back(r.semantic_choice);
  }
  return d;
}

inline DecisionTable decide_all(const PolicyParams& params, const Dataset& data, Protocol protocol,
                                const DecisionMode& mode = DecisionMode::argmax(),
                                LabelOnlyMode label_mode = LabelOnlyMode::full, int workers = 1) {
  DecisionTable table{protocol, label_mode, std::vector<InstanceDecisions>(data.size())};
  parallel_for(data.size(), workers,
               [&](std::size_t k) { table.instances[k] = decide(params, data[k], protocol, mode, label_mode); });
  return table;
}

// ---------------------------------------------------------------------------
// Per-instance metrics.

inline int count_correct(const std::vector<std::optional<int>>& decisions, int ground_truth) {
  return static_cast<int>(std::count(decisions.begin(), decisions.end(), std::optional<int>(ground_truth)));
}

// Fraction of rows equal to the truth; missing decisions count as wrong.
inline double accuracy(const std::vector<std::optional<int>>& decisions, int ground_truth) {
  if (decisions.empty()) return 0.0;
  return static_cast<double>(count_correct(decisions, ground_truth)) / static_cast<double>(decisions.size());
}

namespace detail {

struct ModeCount {
  int count = 0;
  std::optional<int> unique_mode;
};

inline ModeCount mode_of(const std::vector<std::optional<int>>& decisions) {
  std::map<int, int> counts;
  for (const auto& d : decisions) {
    if (d) ++counts[*d];
  }
  ModeCount m;
  int ties = 0;
  for (const auto& [k, n] : counts) {
    if (n > m.count) {
      m.count = n;
      m.unique_mode = k;
      ties = 1;
    } else if (n == m.count) {
      ++ties;
    }
  }
  if (ties != 1) m.unique_mode.reset();
  return m;
}

}  // namespace detail

/// Judge: 1 when both orders give the same present choice. MCQ: count of the
/// most frequent present choice over the number of rows.
inline double consistency(const std::vector<std::optional<int>>& decisions, Task task) {
  if (decisions.empty()) return 0.0;
  if (task == Task::judge) {
    if (decisions.size() != 2) throw ShapeError("judge consistency needs exactly 2 rows");
    return decisions[0].has_value() && decisions[0] == decisions[1] ? 1.0 : 0.0;
  }
  return static_cast<double>(detail::mode_of(decisions).count) / static_cast<double>(decisions.size());
}

/// Judge: correct under both orders. MCQ: the unique mode is the truth.
inline int consistent_accuracy(const std::vector<std::optional<int>>& decisions, int ground_truth, Task task) {
  if (decisions.empty()) return 0;
  if (task == Task::judge) {
    if (decisions.size() != 2) throw ShapeError("judge consistency needs exactly 2 rows");
    return decisions[0] == ground_truth && decisions[1] == ground_truth ? 1 : 0;
  }
  return detail::mode_of(decisions).unique_mode == ground_truth ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Reports.

struct InstanceMetrics {
  std::string instance_id;
  int rows = 0;
  int correct = 0;
  int unparseable = 0;
  double con = 0.0;
  double ca = 0.0;
  bool excluded = false;  // incomplete permutation coverage
};

struct MetricsReport {
  Protocol protocol = Protocol::coupled;
  LabelOnlyMode label_mode = LabelOnlyMode::full;
  Task task = Task::mcq;
  double acc = 0.0;
  double con = 0.0;
  double ca = 0.0;
  std::size_t rows = 0;
  std::size_t unparseable = 0;
  std::size_t excluded = 0;
  std::vector<InstanceMetrics> per_instance;
};

/// Acc pools every row; Con and CA average over instances with complete coverage.
inline void finalize(MetricsReport& r) {
  std::size_t correct = 0;
  std::size_t included = 0;
  double con_sum = 0.0;
  double ca_sum = 0.0;
  r.rows = r.unparseable = r.excluded = 0;
  for (const auto& m : r.per_instance) {
    r.rows += static_cast<std::size_t>(m.rows);
    r.unparseable += static_cast<std::size_t>(m.unparseable);
    correct += static_cast<std::size_t>(m.correct);
    if (m.excluded) {
      ++r.excluded;
      continue;
    }
    ++included;
    con_sum += m.con;
    ca_sum += m.ca;
  }
  r.acc = r.rows == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(r.rows);
  r.con = included == 0 ? 0.0 : con_sum / static_cast<double>(included);
  r.ca = included == 0 ? 0.0 : ca_sum / static_cast<double>(included);
}

inline InstanceMetrics instance_metrics(const InstanceDecisions& d) {
  InstanceMetrics m;
  m.instance_id = d.instance_id;
  m.rows = static_cast<int>(d.decisions.size());
  m.correct = count_correct(d.decisions, d.ground_truth);
  m.unparseable = static_cast<int>(std::count(d.decisions.begin(), d.decisions.end(), std::nullopt));
  m.con = consistency(d.decisions, d.task);
  m.ca = consistent_accuracy(d.decisions, d.ground_truth, d.task);
  return m;
}

/// One report per task present in the table (mcq first).
inline std::vector<MetricsReport> metrics_reports(const DecisionTable& table) {
  std::vector<MetricsReport> out;
  for (Task task : {Task::mcq, Task::judge}) {
    MetricsReport r;
    r.protocol = table.protocol;
    r.label_mode = table.label_mode;
    r.task = task;
    for (const auto& d : table.instances) {
      if (d.task == task) r.per_instance.push_back(instance_metrics(d));
    }
    if (r.per_instance.empty()) continue;
    finalize(r);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<MetricsReport> evaluate(const PolicyParams& params, const Dataset& data, Protocol protocol,
                                           const DecisionMode& mode = DecisionMode::argmax(),
                                           LabelOnlyMode label_mode = LabelOnlyMode::full, int workers = 1) {
  return metrics_reports(decide_all(params, data, protocol, mode, label_mode, workers));
}

/// Reports under label_only, order_only and coupled, in that order.
inline std::vector<MetricsReport> bias_decomposition(const PolicyParams& params, const Dataset& data,
                                                     LabelOnlyMode label_mode = LabelOnlyMode::rotations,
                                                     int workers = 1) {
  std::vector<MetricsReport> out;
  for (Protocol p : {Protocol::label_only, Protocol::order_only, Protocol::coupled}) {
    for (auto& r : evaluate(params, data, p, DecisionMode::argmax(), label_mode, workers)) out.push_back(std::move(r));
  }
  return out;
}

// Probe used to find inconsistent training instances: original and reversed
// for Judge, the cyclic shifts for MCQ.
inline std::vector<Permutation> default_probe(Task task) {
  return task == Task::judge ? judge_permutation_set() : mcq_permutation_set(McqPermMode::cyclic4);
}

/// Keeps the instances whose argmax semantic decision is not the same across
/// all probe variants (coupled presentation).
inline Dataset filter_inconsistent(const PolicyParams& params, const Dataset& data,
                                   const std::optional<std::vector<Permutation>>& probe = std::nullopt) {
  Dataset kept;
  for (const Scenario& sc : data) {
    const auto perms = probe ? *probe : default_probe(sc.instance.task);
    if (perms.size() < 2) throw ConfigError("probe needs at least 2 permutations");
    std::set<int> seen;
    for (std::size_t k = 0; k < perms.size(); ++k) {
      const PromptVariant v = apply_permutation(sc.instance, perms[k], Protocol::coupled, static_cast<int>(k));
      seen.insert(v.slots[argmax_slot(params, sc.utilities, v)].semantic);
    }
    if (seen.size() > 1) kept.push_back(sc);
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Grading external response logs.

struct GradeResult {
  std::vector<MetricsReport> reports;
  std::vector<std::string> diagnostics;
  std::size_t valid_records = 0;
  std::size_t skipped_records = 0;
};

/// Parses each log line, maps its answer to a semantic choice and computes
/// the metrics per (protocol, task). Records sharing a sample_index form one
/// replicate of an instance's expansion; an instance whose replicates all
/// have incomplete coverage is excluded from Con and CA but still counts
/// towards Acc. Bad lines are reported and skipped.
inline GradeResult grade_log(const std::vector<std::string>& lines, const Dataset& data,
                             const std::string& source = "log", const FormatSpec& fmt = {}) {
  GradeResult result;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < data.size(); ++k) index.emplace(data[k].instance.id, k);

  // protocol -> instance index -> sample_index -> permutation -> decision
  using Replicate = std::map<Permutation, std::optional<int>>;
  std::map<Protocol, std::map<std::size_t, std::map<int, Replicate>>> graded;

  for (std::size_t k = 0; k < lines.size(); ++k) {
    if (detail::trim(lines[k]).empty()) continue;
    const std::string where = source + ":" + std::to_string(k + 1);
    try {
      const LogRecord rec = log_record_from_line(lines[k], where);
      const auto it = index.find(rec.instance_id);
      if (it == index.end()) throw InputError(where + ": unknown instance '" + rec.instance_id + "'");
      const Instance& inst = data[it->second].instance;
      if (rec.permutation.n() != inst.n()) throw InputError(where + ": permutation length does not match instance");
      const PromptVariant v = apply_permutation(inst, rec.permutation, rec.protocol);
      const Response resp = make_response(rec.raw_text, v, count_length_units(rec.raw_text), fmt);
      auto& rep = graded[rec.protocol][it->second][rec.sample_index];
      if (!rep.emplace(rec.permutation, resp.semantic_choice).second) {
        throw InputError(where + ": duplicate record for " + rec.instance_id + " " + rec.permutation.to_string());
      }
      ++result.valid_records;
    } catch (const InputError& e) {
      result.diagnostics.emplace_back(e.what());
      ++result.skipped_records;
    }
  }
  if (result.valid_records == 0) throw InputError(source + ": no valid records");

  for (const auto& [protocol, by_instance] : graded) {
    for (Task task : {Task::mcq, Task::judge}) {
      MetricsReport r;
      r.protocol = protocol;
      r.task = task;
      bool rotations_seen = false;
      for (const auto& [idx, replicates] : by_instance) {
        const Scenario& sc = data[idx];
        if (sc.instance.task != task) continue;
        const auto full = expansion_permutations(sc.instance.n(), protocol, LabelOnlyMode::full);
        const auto rot = protocol == Protocol::label_only ? cyclic_shifts(sc.instance.n()) : full;

        InstanceMetrics m;
        m.instance_id = sc.instance.id;
        int complete = 0;
        double con_sum = 0.0;
        double ca_sum = 0.0;
        for (const auto& [sample_index, rep] : replicates) {
          std::vector<std::optional<int>> all;
          for (const auto& [perm, decision] : rep) all.push_back(decision);
          m.rows += static_cast<int>(all.size());
          m.correct += count_correct(all, sc.instance.ground_truth);
          m.unparseable += static_cast<int>(std::count(all.begin(), all.end(), std::nullopt));

          const auto covers = [&](const std::vector<Permutation>& expected) {
            return rep.size() == expected.size() &&
                   std::all_of(expected.begin(), expected.end(), [&](const Permutation& p) { return rep.count(p) > 0; });
          };
          const std::vector<Permutation>* order = nullptr;
          if (covers(full)) {
            order = &full;
          } else if (covers(rot)) {
            order = &rot;
            rotations_seen = true;
          }
          if (order == nullptr) continue;
          std::vector<std::optional<int>> canonical;
          for (const auto& p : *order) canonical.push_back(rep.at(p));
          con_sum += consistency(canonical, task);
          ca_sum += consistent_accuracy(canonical, sc.instance.ground_truth, task);
          ++complete;
        }
        if (complete == 0) {
          m.excluded = true;
          result.diagnostics.push_back(source + ": instance '" + sc.instance.id + "' (" +
                                       std::string(to_string(protocol)) +
                                       ") has incomplete permutation coverage; excluded from Con/CA");
        } else {
          m.con = con_sum / complete;
          m.ca = ca_sum / complete;
        }
        r.per_instance.push_back(std::move(m));
      }
      if (r.per_instance.empty()) continue;
      if (rotations_seen) r.label_mode = LabelOnlyMode::rotations;
      finalize(r);
      result.reports.push_back(std::move(r));
    }
  }
  return result;
}

// Log records reproducing a simulated evaluation, one per expansion variant.
inline std::vector<LogRecord> simulate_log(const PolicyParams& params, const Dataset& data, Protocol protocol,
                                           const DecisionMode& mode = DecisionMode::argmax(),
                                           LabelOnlyMode label_mode = LabelOnlyMode::full) {
  std::vector<LogRecord> out;
  for (const Scenario& sc : data) {
    const auto perms = expansion_permutations(sc.instance.n(), protocol, label_mode);
    const auto responses = simulate_responses(params, sc, protocol, mode, label_mode);
    for (std::size_t k = 0; k < perms.size(); ++k) {
      out.push_back({sc.instance.id, protocol, perms[k], 0, responses[k].raw_text});
    }
  }
  return out;
}

}  // namespace pagrpo
