#include "ntd/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace ntd {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMissingColumn: return "MissingColumn";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kDuplicateUnitAge: return "DuplicateUnitAge";
    case ErrorKind::kInconsistentUnit: return "InconsistentUnit";
    case ErrorKind::kEmptyCell: return "EmptyCell";
    case ErrorKind::kDegenerateDenominator: return "DegenerateDenominator";
    case ErrorKind::kInvalidWindow: return "InvalidWindow";
    case ErrorKind::kMissingGroup: return "MissingGroup";
    case ErrorKind::kNoDonors: return "NoDonors";
    case ErrorKind::kTooFewUnits: return "TooFewUnits";
    case ErrorKind::kDegenerateTrainingSplit: return "DegenerateTrainingSplit";
    case ErrorKind::kSingularDesign: return "SingularDesign";
    case ErrorKind::kNonFiniteWeight: return "NonFiniteWeight";
    case ErrorKind::kCollinearDesign: return "CollinearDesign";
    case ErrorKind::kRankDeficient: return "RankDeficient";
    case ErrorKind::kWindowMismatch: return "WindowMismatch";
    case ErrorKind::kInvalidSpec: return "InvalidSpec";
    case ErrorKind::kOutOfRange: return "OutOfRange";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kIo: return "Io";
  }
  return "Unknown";
}

char gender_char(Gender g) { return g == Gender::kFemale ? 'f' : 'm'; }

std::optional<Gender> parse_gender(std::string_view s) {
  if (s == "f" || s == "F") return Gender::kFemale;
  if (s == "m" || s == "M") return Gender::kMale;
  return std::nullopt;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CellStats CellTable::at(Gender g, int d, int a) const {
  auto it = cells_.find({g, d, a});
  if (it != cells_.end()) return it->second;
  CellStats c;
  c.gender = g;
  c.treat_age = d;
  c.age = a;
  return c;
}

// ---------------------------------------------------------------- Builder

PanelDataset::Builder::Builder(std::vector<std::string> covariate_names)
    : covariate_names_(std::move(covariate_names)) {}

void PanelDataset::Builder::reserve_rows(std::size_t n) {
  row_unit_.reserve(n);
  row_age_.reserve(n);
  row_year_.reserve(n);
  row_y_.reserve(n);
}

void PanelDataset::Builder::reserve_units(std::size_t n) {
  unit_ids_.reserve(n);
  unit_gender_.reserve(n);
  unit_treat_.reserve(n);
  unit_cluster_.reserve(n);
  unit_x_.reserve(n * covariate_names_.size());
  unit_lookup_.reserve(n);
}

std::uint32_t PanelDataset::Builder::add_unit(std::string_view unit_id,
                                              std::string_view cluster_id, Gender gender,
                                              int treat_age, std::span<const double> covariates) {
  if (cluster_id.empty()) cluster_id = unit_id;
  if (covariates.size() != covariate_names_.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                "unit " + std::string(unit_id) + ": expected " +
                    std::to_string(covariate_names_.size()) + " covariates");
  }
  std::string key(unit_id);
  auto it = unit_lookup_.find(key);
  if (it != unit_lookup_.end()) {
    std::uint32_t u = it->second;
    bool same = unit_gender_[u] == gender && unit_treat_[u] == treat_age &&
                cluster_names_[unit_cluster_[u]] == cluster_id;
    const std::size_t k = covariate_names_.size();
    for (std::size_t j = 0; same && j < k; ++j) same = unit_x_[u * k + j] == covariates[j];
    if (!same) {
      throw Error(ErrorKind::kInconsistentUnit,
                  "unit " + key + " has conflicting gender/treat_age/cluster/covariates");
    }
    return u;
  }
  auto u = static_cast<std::uint32_t>(unit_ids_.size());
  unit_lookup_.emplace(key, u);
  unit_ids_.push_back(std::move(key));
  unit_gender_.push_back(gender);
  unit_treat_.push_back(treat_age);
  std::string ckey(cluster_id);
  auto cit = cluster_lookup_.find(ckey);
  std::uint32_t c;
  if (cit == cluster_lookup_.end()) {
    c = static_cast<std::uint32_t>(cluster_names_.size());
    cluster_lookup_.emplace(ckey, c);
    cluster_names_.push_back(std::move(ckey));
  } else {
    c = cit->second;
  }
  unit_cluster_.push_back(c);
  unit_x_.insert(unit_x_.end(), covariates.begin(), covariates.end());
  return u;
}

void PanelDataset::Builder::add_row(std::uint32_t unit, int age, int year, double earnings) {
  row_unit_.push_back(unit);
  row_age_.push_back(age);
  row_year_.push_back(year);
  row_y_.push_back(earnings);
}

void PanelDataset::Builder::add(const PanelObservation& obs) {
  auto u = add_unit(obs.unit_id, obs.cluster_id, obs.gender, obs.treat_age, obs.covariates);
  add_row(u, obs.age, obs.year, obs.earnings);
}

PanelDataset PanelDataset::Builder::build() && {
  PanelDataset ds;
  ds.covariate_names_ = std::move(covariate_names_);
  ds.unit_ids_ = std::move(unit_ids_);
  ds.cluster_names_ = std::move(cluster_names_);
  ds.unit_gender_ = std::move(unit_gender_);
  ds.unit_treat_ = std::move(unit_treat_);
  ds.unit_cluster_ = std::move(unit_cluster_);
  ds.unit_x_ = std::move(unit_x_);
  ds.row_unit_ = std::move(row_unit_);
  ds.row_age_ = std::move(row_age_);
  ds.row_year_ = std::move(row_year_);
  ds.row_y_ = std::move(row_y_);
  unit_lookup_.clear();
  cluster_lookup_.clear();
  ds.build_index();
  return ds;
}

// ---------------------------------------------------------------- Dataset

void PanelDataset::build_index() {
  const std::size_t n = row_unit_.size();
  for (std::size_t r = 0; r < n; ++r) {
    if (row_age_[r] < 0) {
      throw Error(ErrorKind::kParseError, "negative age for unit " + unit_ids_[row_unit_[r]]);
    }
  }
  if (n == 0) {
    min_age_ = 0;
    max_age_ = -1;
  } else {
    auto [lo, hi] = std::minmax_element(row_age_.begin(), row_age_.end());
    min_age_ = *lo;
    max_age_ = *hi;
  }

  all_groups_ = unit_treat_;
  std::sort(all_groups_.begin(), all_groups_.end());
  all_groups_.erase(std::unique(all_groups_.begin(), all_groups_.end()), all_groups_.end());
  groups_.clear();
  for (int d : all_groups_)
    if (!is_never(d)) groups_.push_back(d);

  std::vector<std::size_t> unit_gpos(unit_treat_.size());
  for (std::size_t u = 0; u < unit_treat_.size(); ++u) {
    unit_gpos[u] = static_cast<std::size_t>(
        std::lower_bound(all_groups_.begin(), all_groups_.end(), unit_treat_[u]) -
        all_groups_.begin());
    group_units_[{gender_index(unit_gender_[u]), unit_treat_[u]}] += 1;
  }

  const std::size_t n_dense =
      n == 0 ? 0 : 2 * all_groups_.size() * static_cast<std::size_t>(max_age_ - min_age_ + 1);
  std::vector<std::size_t> counts(n_dense + 1, 0);
  std::vector<std::size_t> row_cell(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::uint32_t u = row_unit_[r];
    std::size_t c = dense_cell(unit_gender_[u], unit_gpos[u], row_age_[r]);
    row_cell[r] = c;
    ++counts[c + 1];
  }
  for (std::size_t c = 0; c < n_dense; ++c) counts[c + 1] += counts[c];
  cell_offsets_ = counts;
  cell_row_pos_.assign(n, 0);
  std::vector<std::size_t> cursor(counts.begin(), counts.end() - 1);
  for (std::size_t r = 0; r < n; ++r) cell_row_pos_[cursor[row_cell[r]]++] = static_cast<std::uint32_t>(r);

  cell_keys_.clear();
  const std::size_t n_age = static_cast<std::size_t>(max_age_ - min_age_ + 1);
  for (std::size_t c = 0; c < n_dense; ++c) {
    auto first = cell_row_pos_.begin() + static_cast<std::ptrdiff_t>(cell_offsets_[c]);
    auto last = cell_row_pos_.begin() + static_cast<std::ptrdiff_t>(cell_offsets_[c + 1]);
    if (first == last) continue;
    auto by_unit = [&](std::uint32_t x, std::uint32_t y) {
      return row_unit_[x] < row_unit_[y] || (row_unit_[x] == row_unit_[y] && x < y);
    };
    if (!std::is_sorted(first, last, by_unit)) std::sort(first, last, by_unit);
    for (auto it = first; it + 1 < last; ++it) {
      if (row_unit_[*it] == row_unit_[*(it + 1)]) {
        throw Error(ErrorKind::kDuplicateUnitAge,
                    "duplicate observation for unit " + unit_ids_[row_unit_[*it]] + " at age " +
                        std::to_string(row_age_[*it]));
      }
    }
    std::size_t gpos = (c / n_age) % all_groups_.size();
    Gender g = c / n_age / all_groups_.size() == 0 ? Gender::kFemale : Gender::kMale;
    cell_keys_.push_back({g, all_groups_[gpos], min_age_ + static_cast<int>(c % n_age)});
  }
}

std::span<const double> PanelDataset::unit_covariates(std::uint32_t u) const {
  const std::size_t k = covariate_names_.size();
  return std::span<const double>(unit_x_.data() + u * k, k);
}

PanelObservation PanelDataset::observation(std::size_t r) const {
  PanelObservation o;
  std::uint32_t u = row_unit_[r];
  o.unit_id = unit_ids_[u];
  o.cluster_id = cluster_names_[unit_cluster_[u]];
  o.gender = unit_gender_[u];
  o.treat_age = unit_treat_[u];
  o.age = row_age_[r];
  o.year = row_year_[r];
  o.earnings = row_y_[r];
  auto x = unit_covariates(u);
  o.covariates.assign(x.begin(), x.end());
  return o;
}

std::span<const std::uint32_t> PanelDataset::cell_rows(Gender g, int treat_age, int age) const {
  if (age < min_age_ || age > max_age_) return {};
  auto it = std::lower_bound(all_groups_.begin(), all_groups_.end(), treat_age);
  if (it == all_groups_.end() || *it != treat_age) return {};
  std::size_t c = dense_cell(g, static_cast<std::size_t>(it - all_groups_.begin()), age);
  return std::span<const std::uint32_t>(cell_row_pos_.data() + cell_offsets_[c],
                                        cell_offsets_[c + 1] - cell_offsets_[c]);
}

std::size_t PanelDataset::group_units(Gender g, int treat_age) const {
  auto it = group_units_.find({gender_index(g), treat_age});
  return it == group_units_.end() ? 0 : it->second;
}

CellTable PanelDataset::cell_table() const {
  CellTable t;
  for (const CellKey& k : cell_keys_) t.set(cell_mean(*this, k.gender, k.treat_age, k.age));
  return t;
}

CellStats cell_mean(const PanelDataset& data, Gender g, int d, int a) {
  CellStats c;
  c.gender = g;
  c.treat_age = d;
  c.age = a;
  for (std::uint32_t r : data.cell_rows(g, d, a)) c.sum += data.row_earnings(r);
  c.count = data.cell_rows(g, d, a).size();
  if (c.count > 0) c.mean = c.sum / static_cast<double>(c.count);
  return c;
}

// ---------------------------------------------------------------- CSV

namespace {

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_int(std::string_view s, int& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty();
}

bool parse_real(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty() &&
         std::isfinite(out);
}

bool is_default_covariate(std::string_view h) {
  if (h.size() < 2 || h[0] != 'x') return false;
  return std::all_of(h.begin() + 1, h.end(), [](char c) { return c >= '0' && c <= '9'; });
}

struct RowError {
  std::string column;
  std::string message;
};

}  // namespace

PanelDataset load_panel(std::istream& in, const LoadOptions& options,
                        std::vector<MalformedRow>* malformed) {
  const ColumnSchema& sc = options.schema;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kParseError, "empty input: missing header");
  std::vector<std::string> header;
  for (auto f : split_line(trim(line))) header.emplace_back(trim(f));

  auto find_col = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  auto require = [&](const std::string& name) {
    int i = find_col(name);
    if (i < 0) throw Error(ErrorKind::kMissingColumn, "missing column: " + name);
    return i;
  };
  const int c_unit = require(sc.unit_id);
  const int c_cluster = find_col(sc.cluster_id);
  const int c_gender = require(sc.gender);
  const int c_treat = require(sc.treat_age);
  const int c_age = require(sc.age);
  const int c_year = require(sc.year);
  const int c_y = require(sc.earnings);
  std::vector<int> c_x;
  std::vector<std::string> x_names;
  if (!sc.covariates.empty()) {
    for (const auto& n : sc.covariates) {
      c_x.push_back(require(n));
      x_names.push_back(n);
    }
  } else {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (is_default_covariate(header[i])) {
        c_x.push_back(static_cast<int>(i));
        x_names.push_back(header[i]);
      }
    }
  }

  PanelDataset::Builder builder(x_names);
  std::vector<double> xs(c_x.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view lv = trim(line);
    if (lv.empty()) continue;
    auto fields = split_line(lv);
    for (auto& f : fields) f = trim(f);

    std::optional<RowError> err;
    auto fail = [&](const std::string& col, const std::string& msg) {
      if (!err) err = RowError{col, msg};
    };
    if (fields.size() != header.size()) {
      fail("", "expected " + std::to_string(header.size()) + " fields, got " +
                   std::to_string(fields.size()));
    }
    std::string_view unit, cluster;
    Gender g = Gender::kFemale;
    int treat = kNeverTreated, age = 0, year = 0;
    double y = 0;
    if (!err) {
      unit = fields[static_cast<std::size_t>(c_unit)];
      if (unit.empty()) fail(sc.unit_id, "empty unit id");
      cluster = c_cluster >= 0 ? fields[static_cast<std::size_t>(c_cluster)] : std::string_view{};
      auto gp = parse_gender(fields[static_cast<std::size_t>(c_gender)]);
      if (!gp) fail(sc.gender, "gender must be f or m");
      else g = *gp;
      std::string_view t = fields[static_cast<std::size_t>(c_treat)];
      if (!(t.empty() || t == "never" || t == "NA")) {
        if (!parse_int(t, treat)) fail(sc.treat_age, "not an integer");
      }
      if (!parse_int(fields[static_cast<std::size_t>(c_age)], age) || age < 0)
        fail(sc.age, "age must be a non-negative integer");
      if (!parse_int(fields[static_cast<std::size_t>(c_year)], year)) fail(sc.year, "not an integer");
      if (!parse_real(fields[static_cast<std::size_t>(c_y)], y) || y < 0)
        fail(sc.earnings, "earnings must be a finite non-negative number");
      for (std::size_t j = 0; j < c_x.size(); ++j) {
        if (!parse_real(fields[static_cast<std::size_t>(c_x[j])], xs[j]))
          fail(x_names[j], "covariate must be a finite number");
      }
    }
    if (!err) {
      try {
        auto u = builder.add_unit(unit, cluster, g, treat, xs);
        builder.add_row(u, age, year, y);
      } catch (const Error& e) {
        if (!options.skip_malformed) throw;
        fail(sc.unit_id, e.what());
      }
    }
    if (err) {
      if (!options.skip_malformed) {
        throw Error(ErrorKind::kParseError, "row " + std::to_string(line_no) + ", column '" +
                                                err->column + "': " + err->message);
      }
      if (malformed) malformed->push_back({line_no, err->column, err->message});
    }
  }
  return std::move(builder).build();
}

PanelDataset load_panel_file(const std::string& path, const LoadOptions& options,
                             std::vector<MalformedRow>* malformed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  return load_panel(in, options, malformed);
}

void write_panel(std::ostream& out, const PanelDataset& data) {
  out << "unit_id,cluster_id,gender,treat_age,age,year,earnings";
  for (const auto& n : data.covariate_names()) out << ',' << n;
  out << '\n';
  std::string line;
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    std::uint32_t u = data.row_unit(r);
    line.clear();
    line += data.unit_id(u);
    line += ',';
    line += data.cluster_name(data.unit_cluster(u));
    line += ',';
    line += gender_char(data.unit_gender(u));
    line += ',';
    if (!is_never(data.unit_treat_age(u))) line += std::to_string(data.unit_treat_age(u));
    line += ',';
    line += std::to_string(data.row_age(r));
    line += ',';
    line += std::to_string(data.row_year(r));
    line += ',';
    line += format_double(data.row_earnings(r));
    for (double x : data.unit_covariates(u)) {
      line += ',';
      line += format_double(x);
    }
    line += '\n';
    out << line;
  }
}

// ---------------------------------------------------------------- Slices

TwoByTwoSlice make_slice(const CellTable& cells, int d, int dprime, int a, int b) {
  auto bad = [&](const std::string& why) {
    return Error(ErrorKind::kInvalidWindow,
                 "invalid 2x2 window (d=" + std::to_string(d) + ", d'=" + std::to_string(dprime) +
                     ", a=" + std::to_string(a) + ", b=" + std::to_string(b) + "): " + why);
  };
  if (is_never(d) || is_never(dprime)) throw bad("never-treated units are not used in 2x2 slices");
  if (b >= d) throw bad("baseline age must precede treatment");
  if (a == b) throw bad("target and baseline ages coincide");
  if (dprime == d) throw bad("control group equals treatment group");
  if (dprime <= std::max(a, b)) throw bad("control group already treated at a or b");
  TwoByTwoSlice s;
  s.d = d;
  s.dprime = dprime;
  s.a = a;
  s.b = b;
  for (std::size_t slot = 0; slot < 8; ++slot)
    s.cells[slot] = cells.at(s.slot_gender(slot), s.slot_group(slot), s.slot_age(slot));
  return s;
}

TwoByTwoSlice make_slice(const PanelDataset& data, int d, int dprime, int a, int b) {
  CellTable t;
  for (Gender g : kGenders)
    for (int grp : {d, dprime})
      for (int age : {a, b}) t.set(cell_mean(data, g, grp, age));
  return make_slice(t, d, dprime, a, b);
}

namespace {
void check_rule(int d, int a, int control_offset, int baseline_gap) {
  if (baseline_gap <= 0) {
    throw Error(ErrorKind::kInvalidWindow, "baseline_gap must be positive (b = d - gap < d)");
  }
  if (a >= d && control_offset <= 0) {
    throw Error(ErrorKind::kInvalidWindow,
                "control_offset must be positive for post-treatment use (d' > a)");
  }
}
}  // namespace

TwoByTwoSlice build_two_by_two(const CellTable& cells, int d, int a, int control_offset,
                               int baseline_gap) {
  check_rule(d, a, control_offset, baseline_gap);
  return make_slice(cells, d, a + control_offset, a, d - baseline_gap);
}

TwoByTwoSlice build_two_by_two(const PanelDataset& data, int d, int a, int control_offset,
                               int baseline_gap) {
  check_rule(d, a, control_offset, baseline_gap);
  return make_slice(data, d, a + control_offset, a, d - baseline_gap);
}

}  // namespace ntd
