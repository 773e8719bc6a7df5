#pragma once

#include <array>
#include <bit>
#include <cstdint>

#include "rifl/types.hpp"

namespace rifl {

namespace detail {

// Branch and bound over bitsets with a greedy-coloring bound (Tomita's MCQ).
class CliqueSearch {
 public:
  explicit CliqueSearch(const VotingMatrix& h) : L_(h.sites()) {
    for (int l = 0; l < L_; ++l) adj_[l] = h.row(l) & ~(1ull << l);
  }

  // Size of the largest clique inside `cand`; stops early once `enough` is reached.
  int max_size(std::uint64_t cand, int enough = 65) {
    best_ = 0;
    enough_ = enough;
    expand(0, cand);
    return best_;
  }

  std::uint64_t neighbors(int v) const { return adj_[v]; }

 private:
  void expand(int size, std::uint64_t cand) {
    if (cand == 0) {
      if (size > best_) best_ = size;
      return;
    }
    std::array<int, 64> order{};
    std::array<int, 64> color{};
    int count = 0;
    // sequential greedy coloring in index order
    std::uint64_t uncolored = cand;
    for (int c = 1; uncolored; ++c) {
      std::uint64_t avail = uncolored;
      while (avail) {
        int v = std::countr_zero(avail);
        avail &= ~(1ull << v);
        avail &= ~adj_[v];
        uncolored &= ~(1ull << v);
        order[count] = v;
        color[count] = c;
        ++count;
      }
    }
    for (int i = count - 1; i >= 0; --i) {
      if (size + color[i] <= best_ || best_ >= enough_) return;
      int v = order[i];
      expand(size + 1, cand & adj_[v]);
      cand &= ~(1ull << v);
    }
  }

  int L_;
  std::array<std::uint64_t, 64> adj_{};
  int best_ = 0;
  int enough_ = 65;
};

}  // namespace detail

inline int clique_number(const VotingMatrix& h) {
  detail::CliqueSearch s(h);
  return s.max_size(SiteSet::all(h.sites()).mask());
}

// Maximum clique; among maximum cliques the lexicographically smallest
// sorted vertex list is returned.
inline SiteSet maximum_clique(const VotingMatrix& h) {
  detail::CliqueSearch s(h);
  const int L = h.sites();
  const int omega = s.max_size(SiteSet::all(L).mask());
  std::uint64_t chosen = 0, cand = SiteSet::all(L).mask();
  int need = omega;
  for (int v = 0; v < L && need > 0; ++v) {
    if (!((cand >> v) & 1u)) continue;
    std::uint64_t higher = v == 63 ? 0 : (~0ull << (v + 1));
    std::uint64_t rest = cand & s.neighbors(v) & higher;
    if (need == 1 || s.max_size(rest, need - 1) >= need - 1) {
      chosen |= 1ull << v;
      cand = rest;
      --need;
    }
  }
  return SiteSet(chosen);
}

inline bool is_clique(const VotingMatrix& h, SiteSet s) {
  for (int v : s.to_vector()) {
    if ((s.mask() & ~h.row(v)) != 0) return false;
  }
  return true;
}

}  // namespace rifl
