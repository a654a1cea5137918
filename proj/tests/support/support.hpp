#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ntd/dgp.hpp"
#include "ntd/panel.hpp"

namespace ntd::testing {

struct Row {
  std::string unit;
  std::string cluster;
  Gender g;
  int d;
  int age;
  int year;
  double y;
};

inline PanelDataset make_panel(const std::vector<Row>& rows) {
  PanelDataset::Builder b;
  for (const Row& r : rows) {
    auto u = b.add_unit(r.unit, r.cluster, r.g, r.d);
    b.add_row(u, r.age, r.year, r.y);
  }
  return std::move(b).build();
}

// |x - y| <= tol * max(1, |x|, |y|): currency-scale identities.
inline bool rel_close(double x, double y, double tol) {
  return std::abs(x - y) <= tol * std::max({1.0, std::abs(x), std::abs(y)});
}

// A small design that keeps unit tests fast.
inline DgpSpec small_spec(std::uint64_t seed = 7) {
  DgpSpec s;
  s.seed = seed;
  s.age_min = 20;
  s.age_max = 34;
  s.group_min = 24;
  s.group_max = 32;
  s.units_per_group = 120;
  return s;
}

}  // namespace ntd::testing

#define EXPECT_NTD_ERROR(stmt, expected_kind)                          \
  do {                                                                 \
    try {                                                              \
      stmt;                                                            \
      ADD_FAILURE() << "expected " << ::ntd::to_string(expected_kind); \
    } catch (const ::ntd::Error& e_) {                                 \
      EXPECT_EQ(e_.kind(), expected_kind) << e_.what();                \
    }                                                                  \
  } while (0)
