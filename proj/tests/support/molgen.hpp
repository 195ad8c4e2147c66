// SPDX-License-Identifier: Apache-2.0
// Test-only generators for random small molecular graphs and exhaustive
// enumeration of their DFS emissions.
#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "retro/smiles.hpp"

namespace retro::testing {

inline int max_valence(const std::string& e) {
  if (e == "C") return 4;
  if (e == "N") return 3;
  if (e == "O" || e == "S") return 2;
  return 1;
}

/// Connected graph with up to `max_atoms` heavy atoms drawn from
/// {C,N,O,S,F,Cl,Br} and at most one ring; valences respected.
inline smiles::MolGraph random_molecule(std::mt19937_64& rng, int max_atoms = 8) {
  static const std::vector<std::string> kPool = {"C", "C", "C", "N", "O", "S", "F", "Cl", "Br"};
  for (;;) {
    const int n = std::uniform_int_distribution<int>(1, max_atoms)(rng);
    std::vector<std::string> el(n);
    std::vector<int> used(n, 0);
    for (auto& e : el) e = kPool[std::uniform_int_distribution<std::size_t>(0, kPool.size() - 1)(rng)];
    smiles::MolGraph g;
    for (const auto& e : el) g.add_atom({.element = e});
    bool ok = true;
    for (int i = 1; i < n && ok; ++i) {
      std::vector<int> open;
      for (int j = 0; j < i; ++j) {
        if (used[j] < max_valence(el[j])) open.push_back(j);
      }
      if (open.empty() || max_valence(el[i]) < 1) {
        ok = false;
        break;
      }
      const int j = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
      g.add_bond(j, i, smiles::BondOrder::Single);
      ++used[i];
      ++used[j];
    }
    if (!ok) continue;
    if (n >= 3 && std::bernoulli_distribution(0.5)(rng)) {
      std::vector<std::pair<int, int>> cand;
      for (int a = 0; a < n; ++a) {
        for (int b = a + 1; b < n; ++b) {
          if (!g.bond_between(a, b) && used[a] < max_valence(el[a]) && used[b] < max_valence(el[b])) {
            cand.emplace_back(a, b);
          }
        }
      }
      if (!cand.empty()) {
        auto [a, b] = cand[std::uniform_int_distribution<std::size_t>(0, cand.size() - 1)(rng)];
        g.add_bond(a, b, smiles::BondOrder::Single);
        ++used[a];
        ++used[b];
      }
    }
    // promote some single bonds to double/triple where valence allows
    smiles::MolGraph out;
    for (const auto& a : g.atoms()) out.add_atom(a);
    for (const auto& b : g.bonds()) {
      int order = 1;
      const int spare = std::min(max_valence(el[b.a]) - used[b.a], max_valence(el[b.b]) - used[b.b]);
      if (spare > 0 && std::bernoulli_distribution(0.3)(rng)) {
        order += std::uniform_int_distribution<int>(1, std::min(spare, 2))(rng);
        used[b.a] += order - 1;
        used[b.b] += order - 1;
      }
      out.add_bond(b.a, b.b, static_cast<smiles::BondOrder>(order));
    }
    return out;
  }
}

/// All DFS emissions over every start atom and neighbour-order combination,
/// falling back to `cap` random orders per start when the product explodes.
inline std::vector<std::string> enumerate_emissions(const smiles::MolGraph& g, std::mt19937_64& rng,
                                                    std::size_t cap = 256) {
  std::vector<std::string> out;
  const std::size_t n = g.size();
  std::size_t combos = 1;
  for (std::size_t i = 0; i < n && combos <= cap; ++i) {
    for (std::size_t k = 2; k <= g.degree(i); ++k) combos *= k;
  }
  for (std::size_t start = 0; start < n; ++start) {
    std::vector<std::vector<std::size_t>> order(n);
    for (std::size_t i = 0; i < n; ++i) {
      order[i] = g.neighbors(i);
      std::sort(order[i].begin(), order[i].end());
    }
    if (combos <= cap) {
      for (;;) {
        out.push_back(smiles::write_smiles(g, start, order));
        std::size_t i = 0;
        for (; i < n; ++i) {
          if (std::next_permutation(order[i].begin(), order[i].end())) break;
        }
        if (i == n) break;
      }
    } else {
      for (std::size_t k = 0; k < cap; ++k) {
        for (auto& o : order) std::shuffle(o.begin(), o.end(), rng);
        out.push_back(smiles::write_smiles(g, start, order));
      }
    }
  }
  return out;
}

/// Same molecule with every atom bracketed and carrying an atom map.
inline smiles::MolGraph with_atom_maps(const smiles::MolGraph& g) {
  smiles::MolGraph out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    smiles::Atom a = g.atoms()[i];
    a.explicit_h = g.total_hydrogens(i);
    a.atom_map = static_cast<int>(i + 1);
    out.add_atom(a);
  }
  for (const auto& b : g.bonds()) out.add_bond(b.a, b.b, b.order);
  return out;
}

}  // namespace retro::testing
