// SPDX-License-Identifier: Apache-2.0
#include "retro/smiles.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdlib>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>

namespace retro::smiles {
namespace {

constexpr std::array<std::string_view, 119> kElements = {
    "*",  "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si",
    "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu",
    "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru",
    "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr",
    "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",
    "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac",
    "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf",
    "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

int atomic_number(std::string_view symbol) {
  auto it = std::find(kElements.begin(), kElements.end(), symbol);
  return it == kElements.end() ? -1 : static_cast<int>(it - kElements.begin());
}

bool is_organic(std::string_view e) {
  return e == "B" || e == "C" || e == "N" || e == "O" || e == "P" || e == "S" || e == "F" ||
         e == "Cl" || e == "Br" || e == "I";
}

bool aromatic_organic(std::string_view e) {
  return e == "B" || e == "C" || e == "N" || e == "O" || e == "P" || e == "S";
}

std::span<const int> normal_valences(std::string_view e) {
  static constexpr int b[] = {3}, c[] = {4}, n[] = {3, 5}, o[] = {2}, p[] = {3, 5}, s[] = {2, 4, 6},
                       x[] = {1};
  if (e == "B") return b;
  if (e == "C") return c;
  if (e == "N") return n;
  if (e == "O") return o;
  if (e == "P") return p;
  if (e == "S") return s;
  if (e == "F" || e == "Cl" || e == "Br" || e == "I") return x;
  return {};
}

[[noreturn]] void fail(ErrorKind kind, std::string_view s, std::size_t pos, std::string_view msg) {
  throw Error(kind, std::string(msg) + " at position " + std::to_string(pos) + " in '" +
                        std::string(s) + "'");
}

std::optional<BondOrder> bond_from_char(char c) {
  switch (c) {
    case '-':
    case '/':
    case '\\': return BondOrder::Single;
    case '=': return BondOrder::Double;
    case '#': return BondOrder::Triple;
    case '$': return BondOrder::Quadruple;
    case ':': return BondOrder::Aromatic;
    default: return std::nullopt;
  }
}

std::size_t parse_digits(std::string_view s, std::size_t& i, int& value) {
  std::size_t start = i;
  value = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
    value = value * 10 + (s[i] - '0');
    ++i;
  }
  return i - start;
}

Atom parse_bracket(std::string_view whole, std::size_t open, std::string_view body) {
  Atom atom;
  std::size_t i = 0;
  auto bad = [&](std::string_view msg) -> void { fail(ErrorKind::UnknownSymbol, whole, open + 1 + i, msg); };

  int value = 0;
  if (parse_digits(body, i, value) > 0) atom.isotope = value;

  if (i >= body.size()) bad("missing element symbol");
  if (body[i] == '*') {
    atom.element = "*";
    ++i;
  } else if (body.substr(i, 2) == "se" || body.substr(i, 2) == "as") {
    atom.element = std::string(1, static_cast<char>(std::toupper(body[i]))) + body[i + 1];
    atom.aromatic = true;
    i += 2;
  } else if (std::islower(static_cast<unsigned char>(body[i]))) {
    std::string upper(1, static_cast<char>(std::toupper(body[i])));
    if (!aromatic_organic(upper)) bad("unknown aromatic symbol");
    atom.element = upper;
    atom.aromatic = true;
    ++i;
  } else if (std::isupper(static_cast<unsigned char>(body[i]))) {
    if (i + 1 < body.size() && std::islower(static_cast<unsigned char>(body[i + 1])) &&
        atomic_number(body.substr(i, 2)) > 0) {
      atom.element = std::string(body.substr(i, 2));
      i += 2;
    } else if (atomic_number(body.substr(i, 1)) > 0) {
      atom.element = std::string(body.substr(i, 1));
      ++i;
    } else {
      bad("unknown element");
    }
  } else {
    bad("unknown element");
  }

  while (i < body.size() && body[i] == '@') ++i;

  int h = 0;
  if (i < body.size() && body[i] == 'H') {
    ++i;
    h = 1;
    if (parse_digits(body, i, value) > 0) h = value;
  }
  atom.explicit_h = h;

  if (i < body.size() && (body[i] == '+' || body[i] == '-')) {
    const int sign = body[i] == '+' ? 1 : -1;
    const char sym = body[i];
    ++i;
    if (parse_digits(body, i, value) > 0) {
      atom.formal_charge = sign * value;
    } else {
      int count = 1;
      while (i < body.size() && body[i] == sym) {
        ++count;
        ++i;
      }
      atom.formal_charge = sign * count;
    }
  }

  if (i < body.size() && body[i] == ':') {
    ++i;
    if (parse_digits(body, i, value) == 0) bad("atom map without digits");
    atom.atom_map = value;
  }
  if (i != body.size()) bad("unexpected character in bracket atom");
  return atom;
}

std::string charge_text(int charge) {
  if (charge == 0) return {};
  std::string out(1, charge > 0 ? '+' : '-');
  if (std::abs(charge) > 1) out += std::to_string(std::abs(charge));
  return out;
}

std::string ring_label(int digit) {
  if (digit < 10) return std::string(1, static_cast<char>('0' + digit));
  return "%" + std::to_string(digit);
}

std::string atom_text(const MolGraph& g, std::size_t i) {
  const Atom& a = g.atoms()[i];
  const bool organic = is_organic(a.element) && (!a.aromatic || aromatic_organic(a.element));
  const bool bare = (organic || a.element == "*") && a.formal_charge == 0 && !a.isotope &&
                    !a.atom_map && (!a.explicit_h || *a.explicit_h == g.implicit_hydrogens(i));
  std::string symbol = a.element;
  if (a.aromatic) symbol[0] = static_cast<char>(std::tolower(symbol[0]));
  if (bare) return symbol;

  std::string out = "[";
  if (a.isotope) out += std::to_string(*a.isotope);
  out += symbol;
  const int h = a.explicit_h.value_or(g.implicit_hydrogens(i));
  if (h > 0) out += h == 1 ? std::string("H") : "H" + std::to_string(h);
  out += charge_text(a.formal_charge);
  if (a.atom_map) out += ":" + std::to_string(*a.atom_map);
  out += "]";
  return out;
}

std::string bond_text(const MolGraph& g, std::size_t a, std::size_t b) {
  switch (*g.bond_between(a, b)) {
    case BondOrder::Single:
      return g.atoms()[a].aromatic && g.atoms()[b].aromatic ? "-" : "";
    case BondOrder::Double: return "=";
    case BondOrder::Triple: return "#";
    case BondOrder::Quadruple: return "$";
    case BondOrder::Aromatic: return "";
  }
  return "";
}

/// DFS emitter over explicit roots and per-atom neighbour orders.
class Emitter {
 public:
  Emitter(const MolGraph& g, const std::vector<std::vector<std::size_t>>& order)
      : g_(g), order_(order), visited_(g.size(), false), children_(g.size()), rings_(g.size()) {}

  std::string run(std::span<const std::size_t> roots) {
    std::string out;
    for (std::size_t root : roots) {
      if (visited_[root]) continue;
      discover(root, kNone);
      sort_rings();
      if (!out.empty()) out += '.';
      write(root, kNone, out);
    }
    return out;
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  struct RingEnd {
    std::size_t partner;
    bool opening;
    std::size_t bond_id;
  };

  void discover(std::size_t v, std::size_t parent) {
    visited_[v] = true;
    for (std::size_t u : order_[v]) {
      if (u == parent) continue;
      if (!visited_[u]) {
        children_[v].push_back(u);
        discover(u, v);
      } else if (!closed_.contains(key(u, v))) {
        // back edge: u is an ancestor still open on the DFS stack
        const std::size_t id = ring_bonds_++;
        rings_[u].push_back({v, true, id});
        rings_[v].push_back({u, false, id});
        closed_.insert(key(u, v));
      }
    }
  }

  void sort_rings() {
    for (std::size_t v = 0; v < g_.size(); ++v) {
      auto position = [&](std::size_t partner) {
        return std::find(order_[v].begin(), order_[v].end(), partner) - order_[v].begin();
      };
      std::stable_sort(rings_[v].begin(), rings_[v].end(), [&](const RingEnd& x, const RingEnd& y) {
        if (x.opening != y.opening) return !x.opening;  // closures first
        return position(x.partner) < position(y.partner);
      });
    }
  }

  void write(std::size_t v, std::size_t from, std::string& out) {
    if (from != kNone) out += bond_text(g_, from, v);
    out += atom_text(g_, v);
    for (const RingEnd& r : rings_[v]) {
      if (!r.opening) {
        const int digit = digit_of_.at(r.bond_id);
        out += ring_label(digit);
        in_use_[digit] = false;
      } else {
        int digit = 1;
        while (in_use_[digit]) ++digit;
        if (digit > 99) throw Error(ErrorKind::InvalidBond, "more than 99 open ring closures");
        in_use_[digit] = true;
        digit_of_[r.bond_id] = digit;
        out += bond_text(g_, v, r.partner) + ring_label(digit);
      }
    }
    const auto& kids = children_[v];
    for (std::size_t k = 0; k < kids.size(); ++k) {
      if (k + 1 < kids.size()) {
        out += '(';
        write(kids[k], v, out);
        out += ')';
      } else {
        write(kids[k], v, out);
      }
    }
  }

  static std::uint64_t key(std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }

  const MolGraph& g_;
  const std::vector<std::vector<std::size_t>>& order_;
  std::vector<bool> visited_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::vector<RingEnd>> rings_;
  std::unordered_set<std::uint64_t> closed_;
  std::unordered_map<std::size_t, int> digit_of_;
  std::array<bool, 101> in_use_{};
  std::size_t ring_bonds_ = 0;
};

// --- canonical ranking -------------------------------------------------------

using Ranks = std::vector<std::size_t>;

/// Dense "number of strictly smaller keys" ranking of `keys`.
template <class Key>
Ranks rank_by(const std::vector<Key>& keys) {
  std::vector<std::size_t> idx(keys.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  Ranks rank(keys.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    rank[idx[k]] = (k > 0 && keys[idx[k]] == keys[idx[k - 1]]) ? rank[idx[k - 1]] : k;
  }
  return rank;
}

std::size_t class_count(const Ranks& r) {
  Ranks copy = r;
  std::sort(copy.begin(), copy.end());
  return static_cast<std::size_t>(std::unique(copy.begin(), copy.end()) - copy.begin());
}

void refine(const MolGraph& g, Ranks& rank) {
  std::size_t classes = class_count(rank);
  for (;;) {
    std::vector<std::vector<std::uint64_t>> keys(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto& k = keys[i];
      k.push_back(rank[i]);
      std::vector<std::uint64_t> nb;
      for (std::size_t j : g.neighbors(i)) {
        nb.push_back(rank[j] * 8 + static_cast<std::uint64_t>(*g.bond_between(i, j)));
      }
      std::sort(nb.begin(), nb.end());
      k.insert(k.end(), nb.begin(), nb.end());
    }
    rank = rank_by(keys);
    const std::size_t now = class_count(rank);
    if (now == classes) return;
    classes = now;
  }
}

Ranks initial_ranks(const MolGraph& g) {
  std::vector<std::array<long, 6>> keys(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Atom& a = g.atoms()[i];
    keys[i] = {atomic_number(a.element), static_cast<long>(g.degree(i)), a.formal_charge,
               a.aromatic ? 1 : 0, g.total_hydrogens(i), a.isotope.value_or(0)};
  }
  return rank_by(keys);
}

std::string emit_ranked(const MolGraph& g, const Ranks& rank) {
  std::vector<std::vector<std::size_t>> order(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    order[i] = g.neighbors(i);
    std::sort(order[i].begin(), order[i].end(), [&](std::size_t a, std::size_t b) { return rank[a] < rank[b]; });
  }
  const std::size_t root = static_cast<std::size_t>(std::min_element(rank.begin(), rank.end()) - rank.begin());
  const std::size_t roots[] = {root};
  return Emitter(g, order).run(roots);
}

/// Individualize-and-refine search; keeps the lexicographically smallest
/// emission. Leaves with equal certificates yield automorphisms, which prune
/// siblings in a known orbit and cut off subtrees that are images of the
/// first explored path. Once the leaf budget is spent only the first branch
/// of each remaining node is followed.
class RankSearch {
 public:
  explicit RankSearch(const MolGraph& g) : g_(g) {}

  void run(Ranks rank) { explore(std::move(rank)); }

  const std::string& best() const { return best_; }
  const Ranks& best_rank() const { return best_rank_; }

 private:
  static constexpr std::size_t kNoJump = static_cast<std::size_t>(-1);
  using Certificate = std::vector<std::uint64_t>;
  using Perm = std::vector<std::size_t>;

  /// Returns the depth of the frame that should resume, or kNoJump.
  std::size_t explore(Ranks rank) {
    refine(g_, rank);
    const std::size_t n = g_.size();
    std::vector<std::size_t> count(n, 0);
    for (std::size_t r : rank) ++count[r];
    std::size_t tied = n;
    for (std::size_t r = 0; r < n; ++r) {
      if (count[r] > 1) {
        tied = r;
        break;
      }
    }
    if (tied == n) return leaf(rank);

    const std::size_t depth = path_.size();
    std::vector<std::size_t> explored;
    for (std::size_t a = 0; a < n; ++a) {
      if (rank[a] != tied) continue;
      if (!explored.empty() && (budget_ <= 0 || same_orbit(a, explored))) continue;
      explored.push_back(a);
      Ranks next = rank;
      for (std::size_t m = 0; m < n; ++m) {
        if (rank[m] == tied && m != a) next[m] = tied + 1;
      }
      path_.push_back(a);
      const std::size_t jump = explore(std::move(next));
      path_.pop_back();
      if (jump != kNoJump && jump < depth) return jump;
    }
    return kNoJump;
  }

  std::size_t leaf(const Ranks& rank) {
    --budget_;
    std::string s = emit_ranked(g_, rank);
    Certificate cert = certificate(rank);
    std::size_t jump = kNoJump;
    if (first_rank_.empty()) {
      first_rank_ = rank;
      first_cert_ = cert;
      first_path_ = path_;
    } else if (cert == first_cert_) {
      Perm gamma = mapping(rank, first_rank_);
      std::size_t d = 0;
      while (d < path_.size() && path_[d] == first_path_[d]) ++d;
      bool fixes_prefix = d < path_.size() && gamma[path_[d]] == first_path_[d];
      for (std::size_t i = 0; fixes_prefix && i < d; ++i) fixes_prefix = gamma[path_[i]] == path_[i];
      if (fixes_prefix) jump = d;
      generators_.push_back(std::move(gamma));
    } else if (found_ && cert == best_cert_) {
      generators_.push_back(mapping(rank, best_rank_));
    }
    if (!found_ || s < best_) {
      best_ = std::move(s);
      best_rank_ = rank;
      best_cert_ = std::move(cert);
      found_ = true;
    }
    return jump;
  }

  /// Atom descriptions and rank-relabelled adjacency, in rank order.
  Certificate certificate(const Ranks& rank) const {
    const std::size_t n = g_.size();
    Perm by_rank(n);
    for (std::size_t i = 0; i < n; ++i) by_rank[rank[i]] = i;
    Certificate c;
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t i = by_rank[r];
      const Atom& a = g_.atoms()[i];
      c.push_back(static_cast<std::uint64_t>(atomic_number(a.element)));
      c.push_back(static_cast<std::uint64_t>(a.formal_charge + 128) << 1 | (a.aromatic ? 1 : 0));
      c.push_back(static_cast<std::uint64_t>(g_.total_hydrogens(i)));
      c.push_back(static_cast<std::uint64_t>(a.isotope.value_or(0)));
      std::vector<std::uint64_t> nb;
      for (std::size_t j : g_.neighbors(i)) nb.push_back(rank[j] * 8 + static_cast<std::uint64_t>(*g_.bond_between(i, j)));
      std::sort(nb.begin(), nb.end());
      c.push_back(nb.size());
      c.insert(c.end(), nb.begin(), nb.end());
    }
    return c;
  }

  /// The automorphism sending each atom of ranking `from` to the atom with
  /// the same rank in `to`.
  static Perm mapping(const Ranks& from, const Ranks& to) {
    Perm by_rank(to.size());
    for (std::size_t i = 0; i < to.size(); ++i) by_rank[to[i]] = i;
    Perm gamma(from.size());
    for (std::size_t i = 0; i < from.size(); ++i) gamma[i] = by_rank[from[i]];
    return gamma;
  }

  /// Whether `a` shares an orbit with an explored sibling under the known
  /// automorphisms that fix the current path pointwise.
  bool same_orbit(std::size_t a, const std::vector<std::size_t>& explored) const {
    std::vector<std::size_t> parent(g_.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    bool any = false;
    for (const Perm& gamma : generators_) {
      if (!std::all_of(path_.begin(), path_.end(), [&](std::size_t v) { return gamma[v] == v; })) continue;
      any = true;
      for (std::size_t i = 0; i < gamma.size(); ++i) parent[find(i)] = find(gamma[i]);
    }
    if (!any) return false;
    const std::size_t root = find(a);
    return std::any_of(explored.begin(), explored.end(), [&](std::size_t e) { return find(e) == root; });
  }

  const MolGraph& g_;
  std::vector<std::size_t> path_;
  std::string best_;
  Ranks best_rank_;
  Certificate best_cert_;
  bool found_ = false;
  Ranks first_rank_;
  Certificate first_cert_;
  std::vector<std::size_t> first_path_;
  std::vector<Perm> generators_;
  long budget_ = 4096;
};

MolGraph normalized_copy(const MolGraph& g) {
  MolGraph out = g;
  for (std::size_t i = 0; i < out.size(); ++i) {
    Atom& a = out.atoms()[i];
    a.atom_map.reset();
    if (!a.explicit_h) a.explicit_h = g.implicit_hydrogens(i);
  }
  return out;
}

MolGraph subgraph(const MolGraph& g, std::span<const std::size_t> members) {
  MolGraph sub;
  std::unordered_map<std::size_t, std::size_t> remap;
  for (std::size_t i : members) remap[i] = sub.add_atom(g.atoms()[i]);
  for (const Bond& b : g.bonds()) {
    if (remap.contains(b.a)) sub.add_bond(remap[b.a], remap[b.b], b.order);
  }
  return sub;
}

}  // namespace

// --- MolGraph ------------------------------------------------------------------

std::size_t MolGraph::add_atom(Atom atom) {
  atoms_.push_back(std::move(atom));
  adjacency_.emplace_back();
  return atoms_.size() - 1;
}

void MolGraph::add_bond(std::size_t a, std::size_t b, BondOrder order) {
  if (a >= atoms_.size() || b >= atoms_.size()) throw Error(ErrorKind::InvalidBond, "bond endpoint out of range");
  if (a == b) throw Error(ErrorKind::InvalidBond, "self-bond on atom " + std::to_string(a));
  if (bond_between(a, b)) {
    throw Error(ErrorKind::InvalidBond, "duplicate bond " + std::to_string(a) + "-" + std::to_string(b));
  }
  if (order == BondOrder::Aromatic && !(atoms_[a].aromatic && atoms_[b].aromatic)) {
    throw Error(ErrorKind::InvalidBond, "aromatic bond between non-aromatic atoms");
  }
  bonds_.push_back({a, b, order});
  adjacency_[a].push_back(b);
  adjacency_[b].push_back(a);
}

std::optional<BondOrder> MolGraph::bond_between(std::size_t a, std::size_t b) const {
  for (const Bond& bond : bonds_) {
    if ((bond.a == a && bond.b == b) || (bond.a == b && bond.b == a)) return bond.order;
  }
  return std::nullopt;
}

int MolGraph::implicit_hydrogens(std::size_t i) const {
  const Atom& a = atoms_[i];
  const auto valences = normal_valences(a.element);
  if (valences.empty() || a.formal_charge != 0) return 0;
  int used = a.aromatic ? 1 : 0;
  for (std::size_t j : adjacency_[i]) {
    const BondOrder o = *bond_between(i, j);
    used += o == BondOrder::Aromatic ? 1 : static_cast<int>(o);
  }
  for (int v : valences) {
    if (v >= used) return v - used;
  }
  return 0;
}

int MolGraph::total_hydrogens(std::size_t i) const {
  return atoms_[i].explicit_h.value_or(implicit_hydrogens(i));
}

std::vector<std::vector<std::size_t>> MolGraph::components() const {
  std::vector<std::vector<std::size_t>> out;
  std::vector<bool> seen(atoms_.size(), false);
  for (std::size_t s = 0; s < atoms_.size(); ++s) {
    if (seen[s]) continue;
    std::vector<std::size_t> comp;
    std::vector<std::size_t> stack{s};
    seen[s] = true;
    while (!stack.empty()) {
      std::size_t v = stack.back();
      stack.pop_back();
      comp.push_back(v);
      for (std::size_t u : adjacency_[v]) {
        if (!seen[u]) {
          seen[u] = true;
          stack.push_back(u);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

// --- parsing -------------------------------------------------------------------

MolGraph parse_smiles(std::string_view s) {
  if (s.empty()) throw Error(ErrorKind::EmptyInput, "empty SMILES");

  struct RingOpen {
    std::size_t atom;
    std::optional<BondOrder> order;
    bool active = false;
  };
  MolGraph g;
  std::array<RingOpen, 100> rings{};
  std::vector<std::size_t> branches;
  std::optional<std::size_t> prev;
  std::optional<BondOrder> pending;
  std::size_t pending_pos = 0;

  auto default_order = [&](std::size_t a, std::size_t b) {
    return g.atoms()[a].aromatic && g.atoms()[b].aromatic ? BondOrder::Aromatic : BondOrder::Single;
  };
  auto attach = [&](Atom atom, std::size_t pos) {
    const std::size_t idx = g.add_atom(std::move(atom));
    if (prev) {
      try {
        g.add_bond(*prev, idx, pending.value_or(default_order(*prev, idx)));
      } catch (const Error& e) {
        fail(ErrorKind::InvalidBond, s, pos, e.what());
      }
    }
    prev = idx;
    pending.reset();
  };

  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '(') {
      if (!prev) fail(ErrorKind::UnbalancedParen, s, i, "branch without preceding atom");
      if (pending) fail(ErrorKind::InvalidBond, s, pending_pos, "bond before branch");
      if (i + 1 < s.size() && s[i + 1] == ')') fail(ErrorKind::UnbalancedParen, s, i, "empty branch");
      branches.push_back(*prev);
      ++i;
    } else if (c == ')') {
      if (branches.empty()) fail(ErrorKind::UnbalancedParen, s, i, "unmatched ')'");
      if (pending) fail(ErrorKind::InvalidBond, s, pending_pos, "dangling bond");
      prev = branches.back();
      branches.pop_back();
      ++i;
    } else if (c == '.') {
      if (!prev) fail(ErrorKind::UnknownSymbol, s, i, "'.' without preceding atom");
      if (pending) fail(ErrorKind::InvalidBond, s, pending_pos, "dangling bond");
      if (!branches.empty()) fail(ErrorKind::UnbalancedParen, s, i, "'.' inside branch");
      prev.reset();
      ++i;
    } else if (auto order = bond_from_char(c)) {
      if (!prev || pending) fail(ErrorKind::InvalidBond, s, i, "misplaced bond symbol");
      pending = order;
      pending_pos = i;
      ++i;
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '%') {
      if (!prev) fail(ErrorKind::InvalidBond, s, i, "ring label without atom");
      int label = 0;
      const std::size_t at = i;
      if (c == '%') {
        if (i + 2 >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i + 1])) ||
            !std::isdigit(static_cast<unsigned char>(s[i + 2]))) {
          fail(ErrorKind::UnknownSymbol, s, i, "'%' must be followed by two digits");
        }
        label = (s[i + 1] - '0') * 10 + (s[i + 2] - '0');
        i += 3;
      } else {
        label = c - '0';
        ++i;
      }
      RingOpen& ring = rings[label];
      if (ring.active) {
        if (ring.order && pending && *ring.order != *pending) {
          fail(ErrorKind::InvalidBond, s, at, "conflicting ring-closure bond symbols");
        }
        const BondOrder order = pending ? *pending : ring.order ? *ring.order : default_order(ring.atom, *prev);
        try {
          g.add_bond(ring.atom, *prev, order);
        } catch (const Error& e) {
          fail(ErrorKind::InvalidBond, s, at, e.what());
        }
        ring.active = false;
      } else {
        ring = {*prev, pending, true};
      }
      pending.reset();
    } else if (c == '[') {
      const std::size_t close = s.find(']', i);
      if (close == std::string_view::npos) fail(ErrorKind::UnknownSymbol, s, i, "unterminated bracket atom");
      attach(parse_bracket(s, i, s.substr(i + 1, close - i - 1)), i);
      i = close + 1;
    } else {
      Atom atom;
      std::size_t len = 1;
      if (c == 'B' && i + 1 < s.size() && s[i + 1] == 'r') {
        atom.element = "Br";
        len = 2;
      } else if (c == 'C' && i + 1 < s.size() && s[i + 1] == 'l') {
        atom.element = "Cl";
        len = 2;
      } else if (c == '*') {
        atom.element = "*";
      } else if (std::string up(1, c); is_organic(up)) {
        atom.element = up;
      } else if (std::string up2(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
                 std::islower(static_cast<unsigned char>(c)) && aromatic_organic(up2)) {
        atom.element = up2;
        atom.aromatic = true;
      } else {
        fail(ErrorKind::UnknownSymbol, s, i, std::string("unknown symbol '") + c + "'");
      }
      attach(std::move(atom), i);
      i += len;
    }
  }
  if (pending) fail(ErrorKind::InvalidBond, s, pending_pos, "dangling bond");
  if (!branches.empty()) fail(ErrorKind::UnbalancedParen, s, s.size(), "unclosed '('");
  for (std::size_t label = 0; label < rings.size(); ++label) {
    if (rings[label].active) {
      throw Error(ErrorKind::UnclosedRing, "ring " + std::to_string(label) + " never closed in '" + std::string(s) + "'");
    }
  }
  if (!prev) fail(ErrorKind::UnknownSymbol, s, s.size(), "trailing '.'");
  return g;
}

// --- writing -------------------------------------------------------------------

std::string write_smiles(const MolGraph& g, std::size_t start,
                         const std::vector<std::vector<std::size_t>>& neighbor_order) {
  if (g.size() == 0) return {};
  std::vector<std::size_t> roots{start};
  for (std::size_t i = 0; i < g.size(); ++i) roots.push_back(i);
  return Emitter(g, neighbor_order).run(roots);
}

std::string write_smiles(const MolGraph& g) {
  std::vector<std::vector<std::size_t>> order(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) order[i] = g.neighbors(i);
  return write_smiles(g, 0, order);
}

std::vector<std::size_t> canonical_ranks(const MolGraph& g) {
  if (g.size() == 0) return {};
  const MolGraph norm = normalized_copy(g);
  RankSearch search(norm);
  search.run(initial_ranks(norm));
  return search.best_rank();
}

CanonicalSmiles canonicalize(const MolGraph& g) {
  const MolGraph norm = normalized_copy(g);
  std::vector<std::string> parts;
  for (const auto& comp : norm.components()) {
    const MolGraph sub = subgraph(norm, comp);
    RankSearch search(sub);
    search.run(initial_ranks(sub));
    parts.push_back(search.best());
  }
  std::sort(parts.begin(), parts.end());
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += '.';
    out += p;
  }
  return {out};
}

CanonicalSmiles canonicalize(std::string_view s) { return canonicalize(parse_smiles(s)); }

std::string strip_atom_maps(std::string_view s) {
  parse_smiles(s);
  std::string out;
  for (const std::string& tok : tokenize(s)) {
    if (tok.front() == '[') {
      const std::size_t colon = tok.rfind(':');
      if (colon != std::string::npos) {
        out += tok.substr(0, colon);
        out += ']';
        continue;
      }
    }
    out += tok;
  }
  return out;
}

TokenSequence tokenize(std::string_view s) {
  static constexpr std::string_view kSingles = "BCNOPSFIbcnops*()=#-$:/\\.0123456789+@";
  TokenSequence tokens;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    std::size_t len = 1;
    if (c == '[') {
      const std::size_t close = s.find(']', i);
      if (close == std::string_view::npos) fail(ErrorKind::UnknownSymbol, s, i, "unterminated bracket atom");
      len = close - i + 1;
    } else if ((c == 'B' && i + 1 < s.size() && s[i + 1] == 'r') ||
               (c == 'C' && i + 1 < s.size() && s[i + 1] == 'l')) {
      len = 2;
    } else if (c == '%') {
      if (i + 2 >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i + 1])) ||
          !std::isdigit(static_cast<unsigned char>(s[i + 2]))) {
        fail(ErrorKind::UnknownSymbol, s, i, "'%' must be followed by two digits");
      }
      len = 3;
    } else if (kSingles.find(c) == std::string_view::npos) {
      fail(ErrorKind::UnknownSymbol, s, i, std::string("untokenizable character '") + c + "'");
    }
    tokens.emplace_back(s.substr(i, len));
    i += len;
  }
  return tokens;
}

std::vector<std::string> split_components(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = s.find('.', start);
    out.emplace_back(s.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return out;
}

std::string canonical_reactant_set(std::span<const std::string> reactants) {
  std::vector<std::string> parts;
  for (const std::string& r : reactants) {
    for (std::string& p : split_components(canonicalize(r).text)) parts.push_back(std::move(p));
  }
  std::sort(parts.begin(), parts.end());
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += '.';
    out += p;
  }
  return out;
}

}  // namespace retro::smiles
