#pragma once

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "pagrpo/eval.hpp"
#include "pagrpo/io.hpp"
#include "pagrpo/trainer.hpp"

namespace pagrpo {

inline json report_to_json(const MetricsReport& r, bool per_instance = true) {
  json j;
  j["protocol"] = std::string(to_string(r.protocol));
  if (r.protocol == Protocol::label_only) j["label_only_mode"] = std::string(to_string(r.label_mode));
  j["task"] = std::string(to_string(r.task));
  j["acc"] = r.acc;
  j["con"] = r.con;
  j["ca"] = r.ca;
  j["instances"] = r.per_instance.size();
  j["excluded"] = r.excluded;
  j["rows"] = r.rows;
  j["unparseable"] = r.unparseable;
  if (per_instance) {
    json rows = json::array();
    for (const auto& m : r.per_instance) {
      json e;
      e["id"] = m.instance_id;
      e["rows"] = m.rows;
      e["correct"] = m.correct;
      e["unparseable"] = m.unparseable;
      e["con"] = m.con;
      e["ca"] = m.ca;
      e["excluded"] = m.excluded;
      rows.push_back(std::move(e));
    }
    j["per_instance"] = std::move(rows);
  }
  return j;
}

/// Machine-readable metrics summary.
inline json metrics_summary(const std::vector<MetricsReport>& reports, const std::string& kind = "pagrpo.metrics") {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = kind;
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(report_to_json(r));
  j["reports"] = std::move(arr);
  return j;
}

inline std::string fixed4(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

inline std::string metrics_table(const std::vector<MetricsReport>& reports) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %-6s %8s %8s %8s %10s %9s %12s\n", "protocol", "task", "acc", "con", "ca",
                "instances", "excluded", "unparseable");
  os << line;
  for (const auto& r : reports) {
    std::string proto(to_string(r.protocol));
    if (r.protocol == Protocol::label_only) proto += "(" + std::string(to_string(r.label_mode)) + ")";
    std::snprintf(line, sizeof line, "%-22s %-6s %8s %8s %8s %10zu %9zu %12zu\n", proto.c_str(),
                  std::string(to_string(r.task)).c_str(), fixed4(r.acc).c_str(), fixed4(r.con).c_str(),
                  fixed4(r.ca).c_str(), r.per_instance.size(), r.excluded, r.unparseable);
    os << line;
  }
  return os.str();
}

inline json iteration_to_json(const IterationRecord& r) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["iteration"] = r.iteration;
  j["epoch"] = r.epoch;
  j["batch_instances"] = r.batch_instances;
  j["mean_reward"] = r.mean_reward;
  j["mean_consistency"] = r.mean_consistency;
  j["mean_abs_advantage"] = r.mean_abs_advantage;
  j["surrogate"] = r.surrogate;
  j["kl_to_ref"] = r.kl_to_ref;
  j["entropy"] = r.entropy;
  j["grad_norm"] = r.grad_norm;
  if (r.heldout_acc) {
    j["heldout_acc"] = *r.heldout_acc;
    j["heldout_con"] = *r.heldout_con;
    j["heldout_ca"] = *r.heldout_ca;
  }
  return j;
}

inline std::string train_log_jsonl(const TrainLog& log) {
  std::string out;
  for (const auto& r : log) out += iteration_to_json(r).dump() + "\n";
  return out;
}

inline std::string train_summary_table(const TrainResult& res) {
  std::ostringstream os;
  char line[200];
  std::snprintf(line, sizeof line, "%5s %5s %10s %10s %10s %10s %10s %8s %8s %8s\n", "iter", "epoch", "reward",
                "r_con", "|adv|", "kl_ref", "entropy", "acc", "con", "ca");
  os << line;
  if (res.initial_heldout) {
    std::snprintf(line, sizeof line, "%5d %5d %10s %10s %10s %10s %10s %8s %8s %8s\n", 0, 0, "-", "-", "-", "-", "-",
                  fixed4(res.initial_heldout->acc).c_str(), fixed4(res.initial_heldout->con).c_str(),
                  fixed4(res.initial_heldout->ca).c_str());
    os << line;
  }
  for (const auto& r : res.log) {
    std::snprintf(line, sizeof line, "%5d %5d %10s %10s %10s %10s %10s %8s %8s %8s\n", r.iteration, r.epoch,
                  fixed4(r.mean_reward).c_str(), fixed4(r.mean_consistency).c_str(),
                  fixed4(r.mean_abs_advantage).c_str(), fixed4(r.kl_to_ref).c_str(), fixed4(r.entropy).c_str(),
                  r.heldout_acc ? fixed4(*r.heldout_acc).c_str() : "-",
                  r.heldout_con ? fixed4(*r.heldout_con).c_str() : "-",
                  r.heldout_ca ? fixed4(*r.heldout_ca).c_str() : "-");
    os << line;
  }
  return os.str();
}

}  // namespace pagrpo
