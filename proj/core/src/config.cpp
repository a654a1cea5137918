#include "ntd/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "ntd/error.hpp"

namespace ntd {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

Error bad(std::string_view key, std::string_view why) {
  return Error(ErrorKind::kInvalidSpec, "config key '" + std::string(key) + "': " + std::string(why));
}

template <class T>
T number(std::string_view key, std::string_view v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw bad(key, "not a number: '" + std::string(v) + "'");
  return out;
}

bool boolean(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw bad(key, "expected true or false");
}

std::vector<std::string_view> split(std::string_view v) {
  std::vector<std::string_view> out;
  if (trim(v).empty()) return out;
  std::size_t start = 0;
  while (true) {
    std::size_t c = v.find(',', start);
    out.push_back(trim(v.substr(start, c == std::string_view::npos ? v.npos : c - start)));
    if (c == std::string_view::npos) break;
    start = c + 1;
  }
  return out;
}

template <class T>
std::vector<T> number_list(std::string_view key, std::string_view v) {
  std::vector<T> out;
  for (auto item : split(v)) out.push_back(number<T>(key, item));
  return out;
}

std::vector<std::string> string_list(std::string_view v) {
  std::vector<std::string> out;
  for (auto item : split(v)) out.emplace_back(item);
  return out;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, std::string>) out += xs[i];
    else if constexpr (std::is_floating_point_v<T>) out += format_double(xs[i]);
    else out += std::to_string(xs[i]);
  }
  return out;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define NTD_STR(name, member)                                                  \
  Field{name, [](RunConfig& c, std::string_view v) { c.member = std::string(v); }, \
        [](const RunConfig& c) { return c.member; }}
#define NTD_NUM(name, member)                                                            \
  Field{name,                                                                            \
        [](RunConfig& c, std::string_view v) {                                           \
          c.member = number<std::decay_t<decltype(c.member)>>(name, v);                  \
        },                                                                               \
        [](const RunConfig& c) {                                                         \
          if constexpr (std::is_floating_point_v<std::decay_t<decltype(c.member)>>)      \
            return format_double(c.member);                                              \
          else                                                                           \
            return std::to_string(c.member);                                             \
        }}
#define NTD_BOOL(name, member)                                                            \
  Field{name, [](RunConfig& c, std::string_view v) { c.member = boolean(name, v); },    \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}
#define NTD_LIST(name, member, parse)                                      \
  Field{name, [](RunConfig& c, std::string_view v) { c.member = parse; }, \
        [](const RunConfig& c) { return join(c.member); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      NTD_STR("command", command),
      NTD_STR("input", input),
      NTD_STR("spec", spec),
      NTD_STR("output_dir", output_dir),
      NTD_STR("schema.unit_id", schema.unit_id),
      NTD_STR("schema.cluster_id", schema.cluster_id),
      NTD_STR("schema.gender", schema.gender),
      NTD_STR("schema.treat_age", schema.treat_age),
      NTD_STR("schema.age", schema.age),
      NTD_STR("schema.year", schema.year),
      NTD_STR("schema.earnings", schema.earnings),
      NTD_LIST("schema.covariates", schema.covariates, string_list(v)),
      NTD_NUM("d_min", d_min),
      NTD_NUM("d_max", d_max),
      NTD_NUM("e_min", e_min),
      NTD_NUM("e_max", e_max),
      NTD_NUM("control_offset", control_offset),
      NTD_NUM("baseline_gap", baseline_gap),
      NTD_LIST("estimands", estimands, string_list(v)),
      NTD_NUM("denom_tol", denom_tol),
      NTD_NUM("bootstrap_reps", bootstrap_reps),
      NTD_NUM("alpha", alpha),
      NTD_BOOL("bonferroni", bonferroni),
      NTD_NUM("max_horizon", max_horizon),
      NTD_LIST("pre_events", pre_events, number_list<int>("pre_events", v)),
      NTD_LIST("distributions", distributions, string_list(v)),
      NTD_LIST("theta_grid", theta_grid, number_list<double>("theta_grid", v)),
      NTD_LIST("donors", donors, number_list<int>("donors", v)),
      NTD_NUM("folds", folds),
      NTD_BOOL("cross_fit", cross_fit),
      NTD_STR("dr_method", dr_method),
      NTD_STR("propensity_learner", propensity_learner),
      NTD_STR("outcome_learner", outcome_learner),
      NTD_NUM("clip", clip),
      NTD_NUM("window_lo", window_lo),
      NTD_NUM("window_hi", window_hi),
      NTD_BOOL("include_never", include_never),
      NTD_NUM("seed", seed),
      NTD_NUM("threads", threads),
      NTD_BOOL("skip_malformed", skip_malformed),
      NTD_BOOL("tolerate_errors", tolerate_errors),
      NTD_BOOL("dump_if", dump_if),
  };
  return f;
}

#undef NTD_STR
#undef NTD_NUM
#undef NTD_BOOL
#undef NTD_LIST

}  // namespace

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(cfg, trim(value));
      return;
    }
  }
  throw bad(key, "unknown key");
}

RunConfig parse_config(std::istream& in, RunConfig cfg) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view lv = line;
    if (auto h = lv.find('#'); h != std::string_view::npos) lv = lv.substr(0, h);
    lv = trim(lv);
    if (lv.empty()) continue;
    auto eq = lv.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::kInvalidSpec, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    set_config_value(cfg, trim(lv.substr(0, eq)), lv.substr(eq + 1));
  }
  return cfg;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open config file " + path);
  return parse_config(in, std::move(base));
}

void write_config(std::ostream& out, const RunConfig& cfg) {
  for (const Field& f : fields()) out << f.key << " = " << f.get(cfg) << '\n';
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.emplace_back(f.key);
  return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  std::ostringstream os;
  write_config(os, cfg);
  return fnv1a(os.str());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace ntd
