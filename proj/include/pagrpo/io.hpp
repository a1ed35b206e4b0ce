#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pagrpo/core.hpp"
#include "pagrpo/policy.hpp"
#include "pagrpo/rng.hpp"

namespace pagrpo {

using json = nlohmann::json;

// Every file this library writes carries this version; readers reject others.
inline constexpr int kSchemaVersion = 1;

namespace io {

inline void check_schema_version(const json& j, const std::string& where, bool required) {
  if (!j.contains("schema_version")) {
    if (required) throw InputError(where + ": missing field 'schema_version'");
    return;
  }
  const json& v = j.at("schema_version");
  if (!v.is_number_integer() || v.get<int>() != kSchemaVersion) {
    throw InputError(where + ": unsupported schema_version " + v.dump() + " (expected " +
                     std::to_string(kSchemaVersion) + ")");
  }
}

template <typename T>
T field(const json& j, const char* name, const std::string& where) {
  if (!j.contains(name)) throw InputError(where + ": missing field '" + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw InputError(where + ": field '" + name + "' has the wrong type");
  }
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw InputError("write failed for '" + path.string() + "'");
}

}  // namespace io

// ---------------------------------------------------------------------------
// Instance files: one JSON object per line.

inline json instance_to_json(const Scenario& s, bool with_utilities = true) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["id"] = s.instance.id;
  j["question"] = s.instance.question;
  j["candidates"] = s.instance.candidates;
  j["answer_index"] = s.instance.ground_truth;
  j["task"] = std::string(to_string(s.instance.task));
  if (with_utilities && !s.utilities.values.empty()) j["utilities"] = s.utilities.values;
  return j;
}

/// Parses one instance record. Records without a `utilities` array get
/// utilities derived from `fallback` and the instance id.
inline Scenario instance_from_json(const json& j, const UtilitySpec& fallback, const std::string& where) {
  if (!j.is_object()) throw InputError(where + ": record is not an object");
  io::check_schema_version(j, where, false);
  Scenario s;
  s.instance.id = io::field<std::string>(j, "id", where);
  s.instance.question = io::field<std::string>(j, "question", where);
  s.instance.candidates = io::field<std::vector<std::string>>(j, "candidates", where);
  s.instance.ground_truth = io::field<int>(j, "answer_index", where);
  s.instance.task = parse_task(io::field<std::string>(j, "task", where));
  try {
    validate(s.instance);
  } catch (const InputError& e) {
    throw InputError(where + ": " + e.what());
  }
  if (j.contains("utilities")) {
    s.utilities.values = io::field<std::vector<double>>(j, "utilities", where);
    if (static_cast<int>(s.utilities.values.size()) != s.instance.n()) {
      throw InputError(where + ": utilities length does not match candidates");
    }
  } else {
    s.utilities = make_utilities(s.instance, fallback);
  }
  return s;
}

inline Dataset parse_instances(const std::vector<std::string>& lines, const UtilitySpec& fallback,
                               const std::string& source) {
  Dataset out;
  for (std::size_t k = 0; k < lines.size(); ++k) {
    if (detail::trim(lines[k]).empty()) continue;
    const std::string where = source + ":" + std::to_string(k + 1);
    json j;
    try {
      j = json::parse(lines[k]);
    } catch (const json::parse_error& e) {
      throw InputError(where + ": invalid JSON (" + e.what() + ")");
    }
    out.push_back(instance_from_json(j, fallback, where));
  }
  std::vector<Instance> insts;
  for (const auto& s : out) insts.push_back(s.instance);
  validate_unique_ids(insts);
  return out;
}

inline Dataset read_instances(const std::filesystem::path& path, const UtilitySpec& fallback = {}) {
  if (!std::filesystem::exists(path)) throw InputError("dataset file not found: '" + path.string() + "'");
  return parse_instances(io::read_lines(path), fallback, path.string());
}

inline std::string instances_to_string(const Dataset& data, bool with_utilities = true) {
  std::string out;
  for (const auto& s : data) out += instance_to_json(s, with_utilities).dump() + "\n";
  return out;
}

inline void write_instances(const std::filesystem::path& path, const Dataset& data, bool with_utilities = true) {
  io::write_text(path, instances_to_string(data, with_utilities));
}

// ---------------------------------------------------------------------------
// Synthetic datasets.

struct SynthDatasetSpec {
  int count = 200;
  int n = 4;
  double margin = 1.0;
  double spread = 0.5;
  std::uint64_t seed = 0;
  std::string id_prefix = "syn";
};

inline void validate(const SynthDatasetSpec& spec) {
  if (spec.count < 1) throw ConfigError("synth count must be >= 1");
  if (spec.n != 2 && spec.n != 4) throw ConfigError("synth n must be 2 or 4, got " + std::to_string(spec.n));
  if (!(spec.margin > 0.0)) throw ConfigError("synth margin must be > 0");
  if (!(spec.spread >= 0.0)) throw ConfigError("synth spread must be >= 0");
}

/// Deterministic under `seed`: ground truths are uniform over 1..n and
/// utilities are drawn per instance id.
inline Dataset generate_instances(const SynthDatasetSpec& spec) {
  validate(spec);
  const Task task = spec.n == 4 ? Task::mcq : Task::judge;
  auto eng = keyed_engine({spec.seed, stable_hash(spec.id_prefix), 0x67656eULL});
  std::uniform_int_distribution<int> pick(1, spec.n);
  const UtilitySpec util{spec.margin, spec.spread, spec.seed};
  Dataset out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (int k = 0; k < spec.count; ++k) {
    std::ostringstream id;
    id << spec.id_prefix << "-" << std::setw(6) << std::setfill('0') << k;
    Scenario s;
    s.instance.id = id.str();
    s.instance.question = "Synthetic question " + std::to_string(k);
    s.instance.task = task;
    for (int c = 1; c <= spec.n; ++c) s.instance.candidates.push_back("candidate " + std::to_string(c));
    s.instance.ground_truth = pick(eng);
    s.utilities = make_utilities(s.instance, util);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints.

struct Checkpoint {
  PolicyParams params;
  std::uint64_t seed = 0;
  int iteration = 0;
  int epoch = 0;

  bool operator==(const Checkpoint&) const = default;
};

inline json checkpoint_to_json(const Checkpoint& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "pagrpo.checkpoint";
  j["content_weight"] = c.params.content_weight;
  j["label_bias"] = c.params.label_bias;
  j["position_bias"] = c.params.position_bias;
  j["seed"] = c.seed;
  j["iteration"] = c.iteration;
  j["epoch"] = c.epoch;
  return j;
}

inline Checkpoint checkpoint_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw InputError(where + ": checkpoint is not an object");
  io::check_schema_version(j, where, true);
  if (io::field<std::string>(j, "kind", where) != "pagrpo.checkpoint") {
    throw InputError(where + ": field 'kind' is not pagrpo.checkpoint");
  }
  Checkpoint c;
  c.params.content_weight = io::field<double>(j, "content_weight", where);
  const auto lb = io::field<std::vector<double>>(j, "label_bias", where);
  const auto pb = io::field<std::vector<double>>(j, "position_bias", where);
  if (lb.size() != 4) throw InputError(where + ": field 'label_bias' must have 4 entries");
  if (pb.size() != 4) throw InputError(where + ": field 'position_bias' must have 4 entries");
  std::copy(lb.begin(), lb.end(), c.params.label_bias.begin());
  std::copy(pb.begin(), pb.end(), c.params.position_bias.begin());
  if (!c.params.all_finite()) throw InputError(where + ": non-finite policy parameter");
  c.seed = io::field<std::uint64_t>(j, "seed", where);
  c.iteration = io::field<int>(j, "iteration", where);
  c.epoch = j.contains("epoch") ? io::field<int>(j, "epoch", where) : 0;
  return c;
}

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  io::write_text(path, checkpoint_to_json(c).dump(2) + "\n");
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  return checkpoint_from_json(j, path.string());
}

// ---------------------------------------------------------------------------
// Response logs: one graded model output per line.

struct LogRecord {
  std::string instance_id;
  Protocol protocol = Protocol::coupled;
  Permutation permutation;
  int sample_index = 0;
  std::string raw_text;
};

inline json log_record_to_json(const LogRecord& r) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["instance_id"] = r.instance_id;
  j["protocol"] = std::string(to_string(r.protocol));
  j["permutation"] = r.permutation.to_string();
  j["sample_index"] = r.sample_index;
  j["raw_text"] = r.raw_text;
  return j;
}

inline LogRecord log_record_from_line(const std::string& line, const std::string& where) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error&) {
    throw InputError(where + ": invalid JSON");
  }
  if (!j.is_object()) throw InputError(where + ": record is not an object");
  io::check_schema_version(j, where, false);
  LogRecord r;
  r.instance_id = io::field<std::string>(j, "instance_id", where);
  try {
    r.protocol = parse_protocol(io::field<std::string>(j, "protocol", where));
    r.permutation = Permutation::from_string(io::field<std::string>(j, "permutation", where));
  } catch (const InputError& e) {
    const std::string msg = e.what();
    throw InputError(msg.rfind(where, 0) == 0 ? msg : where + ": " + msg);
  }
  r.sample_index = io::field<int>(j, "sample_index", where);
  if (r.sample_index < 0) throw InputError(where + ": sample_index must be >= 0");
  r.raw_text = io::field<std::string>(j, "raw_text", where);
  return r;
}

}  // namespace pagrpo
