#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fantasy/dates.hpp"

namespace fantasy {

using PlayerId = std::string;
using RoundId = std::string;

constexpr int kRoundPlayers = 22;
constexpr int kTeamSize = 11;
constexpr int kNumFeatures = 10;
constexpr int kNumActions = kTeamSize * kTeamSize;  // 121

// (22,10) block of trailing-history features, one row per player in
// canonical (ascending PlayerId) order. Row-major so flattening for the
// observation vector is a straight copy.
using FeatureMatrix =
    Eigen::Matrix<double, kRoundPlayers, kNumFeatures, Eigen::RowMajor>;

struct PlayerRoundRecord {
  PlayerId player;
  RoundId round;
  Date date;
  double raw_points = 0.0;
  double selection_pct = 0.0;
  bool in_dream = false;  // top-11 by raw points within own round (derived)

  bool operator==(const PlayerRoundRecord&) const = default;
};

struct Round {
  RoundId round_id;
  Date date;
  std::array<PlayerId, kRoundPlayers> players;  // ascending
  std::array<double, kRoundPlayers> raw_points{};
  std::array<double, kRoundPlayers> normalized_points{};
  std::array<double, kRoundPlayers> selection_pct{};
  FeatureMatrix features = FeatureMatrix::Zero();
};

// 11 selected + 11 reserved player indices, each kept sorted ascending.
// Slots in swap actions refer to positions in these sorted arrays.
struct TeamState {
  std::array<int, kTeamSize> selected{};
  std::array<int, kTeamSize> reserved{};

  bool operator==(const TeamState&) const = default;
};

struct SwapAction {
  int sel_slot = 0;  // 0..10
  int res_slot = 0;  // 0..10
};

inline int action_index(SwapAction a) { return a.sel_slot * kTeamSize + a.res_slot; }
inline SwapAction action_from_index(int i) {
  return SwapAction{i / kTeamSize, i % kTeamSize};
}

inline bool team_valid(const TeamState& s) {
  std::array<bool, kRoundPlayers> seen{};
  for (int i : s.selected) {
    if (i < 0 || i >= kRoundPlayers || seen[(std::size_t)i]) return false;
    seen[(std::size_t)i] = true;
  }
  for (int i : s.reserved) {
    if (i < 0 || i >= kRoundPlayers || seen[(std::size_t)i]) return false;
    seen[(std::size_t)i] = true;
  }
  return std::is_sorted(s.selected.begin(), s.selected.end()) &&
         std::is_sorted(s.reserved.begin(), s.reserved.end());
}

// Build a TeamState from the selected indices; reserved = complement.
inline TeamState make_team(std::array<int, kTeamSize> selected) {
  TeamState s;
  std::sort(selected.begin(), selected.end());
  s.selected = selected;
  std::array<bool, kRoundPlayers> in{};
  for (int i : selected) {
    if (i < 0 || i >= kRoundPlayers || in[(std::size_t)i])
      throw std::invalid_argument("make_team: indices must be 11 distinct in 0..21");
    in[(std::size_t)i] = true;
  }
  int k = 0;
  for (int i = 0; i < kRoundPlayers; ++i)
    if (!in[(std::size_t)i]) s.reserved[(std::size_t)k++] = i;
  return s;
}

inline TeamState apply_swap(const TeamState& s, SwapAction a) {
  if (a.sel_slot < 0 || a.sel_slot >= kTeamSize || a.res_slot < 0 ||
      a.res_slot >= kTeamSize)
    throw std::invalid_argument("apply_swap: slot out of range");
  TeamState out = s;
  std::swap(out.selected[(std::size_t)a.sel_slot],
            out.reserved[(std::size_t)a.res_slot]);
  std::sort(out.selected.begin(), out.selected.end());
  std::sort(out.reserved.begin(), out.reserved.end());
  return out;
}

inline double team_score(const TeamState& s, const Round& r) {
  double total = 0.0;
  for (int i : s.selected) total += r.normalized_points[(std::size_t)i];
  return total;
}

// Indices of the 11 largest normalized points; ties go to the lower index.
inline TeamState dream_team(const Round& r) {
  std::array<int, kRoundPlayers> order;
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    double pa = r.normalized_points[(std::size_t)a];
    double pb = r.normalized_points[(std::size_t)b];
    if (pa != pb) return pa > pb;
    return a < b;
  });
  std::array<int, kTeamSize> sel;
  std::copy_n(order.begin(), kTeamSize, sel.begin());
  return make_team(sel);
}

}  // namespace fantasy
