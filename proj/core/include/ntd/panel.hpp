#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ntd/error.hpp"

namespace ntd {

enum class Gender : std::uint8_t { kFemale = 0, kMale = 1 };

inline constexpr std::array<Gender, 2> kGenders{Gender::kFemale, Gender::kMale};

inline constexpr int gender_index(Gender g) { return static_cast<int>(g); }
inline constexpr Gender other(Gender g) {
  return g == Gender::kFemale ? Gender::kMale : Gender::kFemale;
}
char gender_char(Gender g);
std::optional<Gender> parse_gender(std::string_view s);

// Treatment age of units that never have a child.
inline constexpr int kNeverTreated = std::numeric_limits<int>::max();
inline constexpr bool is_never(int treat_age) { return treat_age == kNeverTreated; }

struct PanelObservation {
  std::string unit_id;
  std::string cluster_id;  // empty means "same as unit_id"
  Gender gender = Gender::kFemale;
  int treat_age = kNeverTreated;
  int age = 0;
  int year = 0;
  double earnings = 0.0;
  std::vector<double> covariates;
};

struct CellKey {
  Gender gender;
  int treat_age;
  int age;
  auto operator<=>(const CellKey&) const = default;
};

struct CellStats {
  Gender gender = Gender::kFemale;
  int treat_age = 0;
  int age = 0;
  std::size_t count = 0;
  double sum = 0.0;
  double mean = std::numeric_limits<double>::quiet_NaN();

  bool empty() const { return count == 0; }
};

// Mapping (gender, treat_age, age) -> CellStats. Missing cells read as count 0.
class CellTable {
 public:
  void set(const CellStats& c) { cells_[{c.gender, c.treat_age, c.age}] = c; }
  CellStats at(Gender g, int d, int a) const;
  const std::map<CellKey, CellStats>& cells() const { return cells_; }
  std::size_t size() const { return cells_.size(); }

 private:
  std::map<CellKey, CellStats> cells_;
};

struct ColumnSchema {
  std::string unit_id = "unit_id";
  std::string cluster_id = "cluster_id";  // optional column
  std::string gender = "gender";
  std::string treat_age = "treat_age";
  std::string age = "age";
  std::string year = "year";
  std::string earnings = "earnings";
  // Explicit covariate columns; when empty every header matching x<digits> is used.
  std::vector<std::string> covariates;
};

struct MalformedRow {
  std::size_t line = 0;
  std::string column;
  std::string message;
};

struct LoadOptions {
  ColumnSchema schema;
  bool skip_malformed = false;  // lenient mode: record and skip bad rows
};

// Columnar, immutable after build(). Units carry gender, treatment age,
// cluster and covariates; rows carry unit, age, year and earnings.
class PanelDataset {
 public:
  class Builder {
   public:
    explicit Builder(std::vector<std::string> covariate_names = {});

    // Registers a unit (or returns the existing index). Throws
    // InconsistentUnit if attributes disagree with an earlier registration.
    std::uint32_t add_unit(std::string_view unit_id, std::string_view cluster_id,
                           Gender gender, int treat_age,
                           std::span<const double> covariates = {});
    void add_row(std::uint32_t unit, int age, int year, double earnings);
    void add(const PanelObservation& obs);
    void reserve_rows(std::size_t n);
    void reserve_units(std::size_t n);

    PanelDataset build() &&;

   private:
    friend class PanelDataset;
    std::vector<std::string> covariate_names_;
    std::vector<std::string> unit_ids_;
    std::vector<std::string> cluster_names_;
    std::vector<Gender> unit_gender_;
    std::vector<int> unit_treat_;
    std::vector<std::uint32_t> unit_cluster_;
    std::vector<double> unit_x_;
    std::vector<std::uint32_t> row_unit_;
    std::vector<std::int32_t> row_age_;
    std::vector<std::int32_t> row_year_;
    std::vector<double> row_y_;
    std::unordered_map<std::string, std::uint32_t> unit_lookup_;
    std::unordered_map<std::string, std::uint32_t> cluster_lookup_;
  };

  PanelDataset() = default;

  std::size_t num_rows() const { return row_unit_.size(); }
  std::size_t num_units() const { return unit_ids_.size(); }
  std::size_t num_clusters() const { return cluster_names_.size(); }
  std::size_t num_covariates() const { return covariate_names_.size(); }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  std::uint32_t row_unit(std::size_t r) const { return row_unit_[r]; }
  int row_age(std::size_t r) const { return row_age_[r]; }
  int row_year(std::size_t r) const { return row_year_[r]; }
  double row_earnings(std::size_t r) const { return row_y_[r]; }
  std::uint32_t row_cluster(std::size_t r) const { return unit_cluster_[row_unit_[r]]; }

  const std::string& unit_id(std::uint32_t u) const { return unit_ids_[u]; }
  Gender unit_gender(std::uint32_t u) const { return unit_gender_[u]; }
  int unit_treat_age(std::uint32_t u) const { return unit_treat_[u]; }
  std::uint32_t unit_cluster(std::uint32_t u) const { return unit_cluster_[u]; }
  const std::string& cluster_name(std::uint32_t c) const { return cluster_names_[c]; }
  std::span<const double> unit_covariates(std::uint32_t u) const;

  PanelObservation observation(std::size_t r) const;

  // Row positions of cell (g, d, a), sorted by unit. Empty span if absent.
  std::span<const std::uint32_t> cell_rows(Gender g, int treat_age, int age) const;
  std::size_t num_cells() const { return cell_keys_.size(); }
  const std::vector<CellKey>& cell_keys() const { return cell_keys_; }

  // Finite treatment ages present, ascending.
  const std::vector<int>& treatment_groups() const { return groups_; }
  int min_age() const { return min_age_; }
  int max_age() const { return max_age_; }
  // Number of units by (gender, treat_age).
  std::size_t group_units(Gender g, int treat_age) const;

  // Every cell's statistics in one pass.
  CellTable cell_table() const;

  std::span<const std::uint32_t> row_unit_span() const { return row_unit_; }
  std::span<const double> earnings_span() const { return row_y_; }

 private:
  void build_index();

  std::vector<std::string> covariate_names_;
  std::vector<std::string> unit_ids_;
  std::vector<std::string> cluster_names_;
  std::vector<Gender> unit_gender_;
  std::vector<int> unit_treat_;
  std::vector<std::uint32_t> unit_cluster_;
  std::vector<double> unit_x_;
  std::vector<std::uint32_t> row_unit_;
  std::vector<std::int32_t> row_age_;
  std::vector<std::int32_t> row_year_;
  std::vector<double> row_y_;

  // CSR cell index over the dense (gender, group, age) grid.
  std::size_t dense_cell(Gender g, std::size_t group_pos, int age) const {
    return (static_cast<std::size_t>(g) * all_groups_.size() + group_pos) *
               static_cast<std::size_t>(max_age_ - min_age_ + 1) +
           static_cast<std::size_t>(age - min_age_);
  }
  std::vector<int> all_groups_;  // includes kNeverTreated when present
  std::vector<CellKey> cell_keys_;
  std::vector<std::size_t> cell_offsets_;
  std::vector<std::uint32_t> cell_row_pos_;
  std::map<std::pair<int, int>, std::size_t> group_units_;  // (gender, d)
  std::vector<int> groups_;
  int min_age_ = 0;
  int max_age_ = -1;
};

PanelDataset load_panel(std::istream& in, const LoadOptions& options = {},
                        std::vector<MalformedRow>* malformed = nullptr);
PanelDataset load_panel_file(const std::string& path, const LoadOptions& options = {},
                             std::vector<MalformedRow>* malformed = nullptr);

// Canonical CSV: header unit_id,cluster_id,gender,treat_age,age,year,earnings,x...
// rows in dataset order, shortest round-trip number formatting.
void write_panel(std::ostream& out, const PanelDataset& data);

std::string format_double(double v);

CellStats cell_mean(const PanelDataset& data, Gender g, int d, int a);

enum class Arm : std::uint8_t { kTreated = 0, kControl = 1 };
enum class Period : std::uint8_t { kTarget = 0, kBase = 1 };

constexpr std::size_t cell_slot(Gender g, Arm arm, Period p) {
  return static_cast<std::size_t>(g) * 4 + static_cast<std::size_t>(arm) * 2 +
         static_cast<std::size_t>(p);
}

struct TwoByTwoSlice {
  int d = 0;       // treatment group
  int dprime = 0;  // control group
  int a = 0;       // target age
  int b = 0;       // baseline age
  std::array<CellStats, 8> cells;
  // Denominators below denom_tol x (mean |cell mean|) are degenerate.
  double denom_tol = 1e-8;

  const CellStats& cell(Gender g, Arm arm, Period p) const { return cells[cell_slot(g, arm, p)]; }
  // (group, age) of a slot.
  int slot_group(std::size_t slot) const { return (slot / 2) % 2 == 0 ? d : dprime; }
  int slot_age(std::size_t slot) const { return slot % 2 == 0 ? a : b; }
  Gender slot_gender(std::size_t slot) const { return slot < 4 ? Gender::kFemale : Gender::kMale; }
};

// d' = a + control_offset, b = d - baseline_gap.
TwoByTwoSlice build_two_by_two(const CellTable& cells, int d, int a, int control_offset = 1,
                               int baseline_gap = 1);
TwoByTwoSlice build_two_by_two(const PanelDataset& data, int d, int a, int control_offset = 1,
                               int baseline_gap = 1);

// Explicit (d, d', a, b); used by validation where d' is chosen relative to d.
TwoByTwoSlice make_slice(const CellTable& cells, int d, int dprime, int a, int b);
TwoByTwoSlice make_slice(const PanelDataset& data, int d, int dprime, int a, int b);

}  // namespace ntd
