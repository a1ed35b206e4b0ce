#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "pagrpo/eval.hpp"
#include "pagrpo/io.hpp"
#include "pagrpo/trainer.hpp"

namespace pagrpo {

/// Everything a CLI run needs. Loaded from an INI file; command-line flags
/// are applied on top.
struct RunConfig {
  // [run]
  Task task = Task::mcq;
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  int workers = 1;

  // [data] empty paths mean "generate synthetically"
  std::string dataset;
  std::string heldout;
  int synth_count = 200;
  int heldout_count = 100;
  double margin = 1.0;
  double spread = 0.5;

  // [policy]
  PolicyParams initial = biased_default_params();

  // [trainer], [reward], [advantage], [noise]
  TrainerConfig trainer;
  std::optional<PermSet> perm_set;  // unset: default for the task
  std::optional<int> batch_size;    // unset: default for the task

  // [eval]
  std::vector<Protocol> protocols{kAllProtocols.begin(), kAllProtocols.end()};
  LabelOnlyMode label_only_mode = LabelOnlyMode::full;
  LabelOnlyMode decompose_label_only_mode = LabelOnlyMode::rotations;
  std::vector<Permutation> probe;  // empty: default for the task
  bool sampled = false;
  std::uint64_t decision_seed = 0;

  UtilitySpec utility_spec() const { return {margin, spread, seed}; }

  TrainerConfig resolved_trainer() const {
    TrainerConfig t = trainer;
    t.perm_set = perm_set.value_or(default_perm_set(task));
    t.batch_size = batch_size.value_or(default_batch_size(task));
    t.seed = seed;
    t.workers = workers;
    return t;
  }

  DecisionMode decision_mode() const {
    return sampled ? DecisionMode::sampled(decision_seed, trainer.noise) : DecisionMode::argmax();
  }
};

namespace detail {

inline std::string fmt_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

template <std::size_t N>
std::string fmt_array(const std::array<double, N>& a) {
  std::string s;
  for (std::size_t k = 0; k < N; ++k) s += (k ? "," : "") + fmt_double(a[k]);
  return s;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    item = std::string(trim(item));
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class IniReader {
 public:
  explicit IniReader(const boost::property_tree::ptree& tree) : tree_(tree) {}

  template <typename T, typename Fn>
  void read(const std::string& section, const std::string& key, Fn&& apply) {
    seen_.insert(section + "." + key);
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return;
    const auto node = sec->get_child_optional(boost::property_tree::ptree::path_type(key, '\0'));
    if (!node) return;
    const std::string raw(trim(node->data()));
    if constexpr (std::is_same_v<T, std::string>) {
      apply(raw);
    } else {
      T value{};
      const auto* end = raw.data() + raw.size();
      const auto res = std::from_chars(raw.data(), end, value);
      if (raw.empty() || res.ec != std::errc{} || res.ptr != end) {
        throw ConfigError("[" + section + "] " + key + ": cannot parse '" + raw + "'");
      }
      apply(value);
    }
  }

  void reject_unknown() const {
    for (const auto& [section, sec] : tree_) {
      if (section == "schema_version") continue;
      if (sec.empty() && !sec.data().empty()) throw ConfigError("key '" + section + "' outside any section");
      for (const auto& [key, value] : sec) {
        if (!seen_.count(section + "." + key)) throw ConfigError("unknown config key [" + section + "] " + key);
      }
    }
  }

 private:
  const boost::property_tree::ptree& tree_;
  std::set<std::string> seen_;
};

template <std::size_t N>
std::array<double, N> parse_array(const std::string& raw, const std::string& what) {
  const auto parts = split_list(raw);
  if (parts.size() != N) throw ConfigError(what + ": expected " + std::to_string(N) + " comma-separated values");
  std::array<double, N> out{};
  for (std::size_t k = 0; k < N; ++k) {
    const auto* end = parts[k].data() + parts[k].size();
    const auto res = std::from_chars(parts[k].data(), end, out[k]);
    if (res.ec != std::errc{} || res.ptr != end) throw ConfigError(what + ": cannot parse '" + parts[k] + "'");
  }
  return out;
}

}  // namespace detail

inline void validate(const RunConfig& c) {
  if (c.workers < 1) throw ConfigError("run.workers must be >= 1");
  if (c.synth_count < 1 || c.heldout_count < 0) throw ConfigError("data counts must be positive");
  if (!(c.margin > 0.0)) throw ConfigError("data.margin must be > 0");
  if (!(c.spread >= 0.0)) throw ConfigError("data.spread must be >= 0");
  if (c.protocols.empty()) throw ConfigError("eval.protocols must not be empty");
  if (!c.initial.all_finite()) throw ConfigError("policy parameters must be finite");
  validate(c.resolved_trainer());
  (void)permutation_set(c.resolved_trainer().perm_set, c.task);
  for (const auto& p : c.probe) {
    if (p.n() != candidate_count(c.task)) throw ConfigError("eval.probe permutation length does not match the task");
  }
}

namespace detail {

inline RunConfig config_from_tree(const boost::property_tree::ptree& tree) {
  RunConfig c;
  IniReader r(tree);
  using S = std::string;

  r.read<S>("run", "task", [&](const S& v) { c.task = parse_task(v); });
  r.read<std::uint64_t>("run", "seed", [&](auto v) { c.seed = v; });
  r.read<S>("run", "out", [&](const S& v) { c.out = v; });
  r.read<int>("run", "workers", [&](int v) { c.workers = v; });

  r.read<S>("data", "dataset", [&](const S& v) { c.dataset = v; });
  r.read<S>("data", "heldout", [&](const S& v) { c.heldout = v; });
  r.read<int>("data", "synth_count", [&](int v) { c.synth_count = v; });
  r.read<int>("data", "heldout_count", [&](int v) { c.heldout_count = v; });
  r.read<double>("data", "margin", [&](double v) { c.margin = v; });
  r.read<double>("data", "spread", [&](double v) { c.spread = v; });

  r.read<double>("policy", "content_weight", [&](double v) { c.initial.content_weight = v; });
  r.read<S>("policy", "label_bias", [&](const S& v) { c.initial.label_bias = detail::parse_array<4>(v, "policy.label_bias"); });
  r.read<S>("policy", "position_bias",
            [&](const S& v) { c.initial.position_bias = detail::parse_array<4>(v, "policy.position_bias"); });

  TrainerConfig& t = c.trainer;
  r.read<S>("trainer", "algorithm", [&](const S& v) { t.algorithm = parse_algorithm(v); });
  r.read<S>("trainer", "perm_set", [&](const S& v) {
    if (v.empty() || v == "default") c.perm_set.reset();
    else c.perm_set = parse_perm_set(v);
  });
  r.read<int>("trainer", "samples_per_variant", [&](int v) { t.samples_per_variant = v; });
  r.read<double>("trainer", "clip_eta", [&](double v) { t.clip_eta = v; });
  r.read<double>("trainer", "kl_beta", [&](double v) { t.kl_beta = v; });
  r.read<double>("trainer", "entropy_coef", [&](double v) { t.entropy_coef = v; });
  r.read<double>("trainer", "learning_rate", [&](double v) { t.learning_rate = v; });
  r.read<int>("trainer", "epochs", [&](int v) { t.epochs = v; });
  r.read<S>("trainer", "batch_size", [&](const S& v) {
    if (v.empty() || v == "default") {
      c.batch_size.reset();
      return;
    }
    int n = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), n);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) throw ConfigError("trainer.batch_size: cannot parse '" + v + "'");
    c.batch_size = n;
  });

  RewardConfig& rw = t.reward;
  r.read<double>("reward", "lambda", [&](double v) { rw.lambda = v; });
  r.read<double>("reward", "acc_pass", [&](double v) { rw.acc.pass = v; });
  r.read<double>("reward", "acc_fail", [&](double v) { rw.acc.fail = v; });
  r.read<double>("reward", "len_pass", [&](double v) { rw.len.pass = v; });
  r.read<double>("reward", "len_fail", [&](double v) { rw.len.fail = v; });
  r.read<double>("reward", "fmt_pass", [&](double v) { rw.fmt.pass = v; });
  r.read<double>("reward", "fmt_fail", [&](double v) { rw.fmt.fail = v; });
  r.read<int>("reward", "min_len", [&](int v) { rw.min_len = v; });
  r.read<int>("reward", "max_len", [&](int v) { rw.max_len = v; });

  r.read<double>("advantage", "delta", [&](double v) { t.advantage.delta = v; });
  r.read<double>("advantage", "epsilon", [&](double v) { t.advantage.epsilon = v; });

  r.read<double>("noise", "p_malformed", [&](double v) { t.noise.p_malformed = v; });
  r.read<double>("noise", "p_unparseable", [&](double v) { t.noise.p_unparseable = v; });
  r.read<double>("noise", "length_mean", [&](double v) { t.noise.length_mean = v; });
  r.read<double>("noise", "length_spread", [&](double v) { t.noise.length_spread = v; });

  r.read<S>("eval", "protocols", [&](const S& v) {
    c.protocols.clear();
    for (const auto& p : detail::split_list(v)) c.protocols.push_back(parse_protocol(p));
  });
  r.read<S>("eval", "label_only_mode", [&](const S& v) { c.label_only_mode = parse_label_only_mode(v); });
  r.read<S>("eval", "decompose_label_only_mode",
            [&](const S& v) { c.decompose_label_only_mode = parse_label_only_mode(v); });
  r.read<S>("eval", "probe", [&](const S& v) {
    c.probe.clear();
    try {
      for (const auto& p : detail::split_list(v)) c.probe.push_back(Permutation::from_string(p));
    } catch (const InputError& e) {
      throw ConfigError(std::string("eval.probe: ") + e.what());
    }
  });
  r.read<S>("eval", "decision", [&](const S& v) {
    if (v == "argmax") c.sampled = false;
    else if (v == "sampled") c.sampled = true;
    else throw ConfigError("eval.decision must be argmax or sampled");
  });
  r.read<std::uint64_t>("eval", "decision_seed", [&](auto v) { c.decision_seed = v; });

  r.reject_unknown();
  return c;
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in, const std::string& source = "config") {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  if (const auto v = tree.get_optional<std::string>("schema_version")) {
    if (detail::trim(*v) != std::to_string(kSchemaVersion)) throw ConfigError(source + ": unsupported schema_version " + *v);
  }
  try {
    return detail::config_from_tree(tree);
  } catch (const InputError& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  return parse_config(in, path.string());
}

/// Effective configuration as INI, keys in a fixed order. The worker count
/// and output directory are left out because they do not affect results.
inline std::string config_snapshot(const RunConfig& c) {
  using detail::fmt_double;
  const TrainerConfig t = c.resolved_trainer();
  std::ostringstream os;
  os << "; pagrpo effective configuration\n";
  os << "schema_version = " << kSchemaVersion << "\n\n";
  os << "[run]\ntask = " << to_string(c.task) << "\nseed = " << c.seed << "\n\n";
  os << "[data]\ndataset = " << c.dataset << "\nheldout = " << c.heldout << "\nsynth_count = " << c.synth_count
     << "\nheldout_count = " << c.heldout_count << "\nmargin = " << fmt_double(c.margin)
     << "\nspread = " << fmt_double(c.spread) << "\n\n";
  os << "[policy]\ncontent_weight = " << fmt_double(c.initial.content_weight)
     << "\nlabel_bias = " << detail::fmt_array(c.initial.label_bias)
     << "\nposition_bias = " << detail::fmt_array(c.initial.position_bias) << "\n\n";
  os << "[trainer]\nalgorithm = " << to_string(t.algorithm) << "\nperm_set = " << to_string(t.perm_set)
     << "\nsamples_per_variant = " << t.samples_per_variant << "\nclip_eta = " << fmt_double(t.clip_eta)
     << "\nkl_beta = " << fmt_double(t.kl_beta) << "\nentropy_coef = " << fmt_double(t.entropy_coef)
     << "\nlearning_rate = " << fmt_double(t.learning_rate) << "\nepochs = " << t.epochs
     << "\nbatch_size = " << t.batch_size << "\n\n";
  const RewardConfig& rw = t.reward;
  os << "[reward]\nlambda = " << fmt_double(rw.lambda) << "\nacc_pass = " << fmt_double(rw.acc.pass)
     << "\nacc_fail = " << fmt_double(rw.acc.fail) << "\nlen_pass = " << fmt_double(rw.len.pass)
     << "\nlen_fail = " << fmt_double(rw.len.fail) << "\nfmt_pass = " << fmt_double(rw.fmt.pass)
     << "\nfmt_fail = " << fmt_double(rw.fmt.fail) << "\nmin_len = " << rw.min_len << "\nmax_len = " << rw.max_len
     << "\n\n";
  os << "[advantage]\ndelta = " << fmt_double(t.advantage.delta) << "\nepsilon = " << fmt_double(t.advantage.epsilon)
     << "\n\n";
  os << "[noise]\np_malformed = " << fmt_double(t.noise.p_malformed)
     << "\np_unparseable = " << fmt_double(t.noise.p_unparseable)
     << "\nlength_mean = " << fmt_double(t.noise.length_mean)
     << "\nlength_spread = " << fmt_double(t.noise.length_spread) << "\n\n";
  os << "[eval]\nprotocols = ";
  for (std::size_t k = 0; k < c.protocols.size(); ++k) os << (k ? "," : "") << to_string(c.protocols[k]);
  os << "\nlabel_only_mode = " << to_string(c.label_only_mode)
     << "\ndecompose_label_only_mode = " << to_string(c.decompose_label_only_mode) << "\nprobe = ";
  for (std::size_t k = 0; k < c.probe.size(); ++k) os << (k ? "," : "") << c.probe[k].to_string();
  os << "\ndecision = " << (c.sampled ? "sampled" : "argmax") << "\ndecision_seed = " << c.decision_seed << "\n";
  return os.str();
}

}  // namespace pagrpo
