// SPDX-License-Identifier: Apache-2.0
//
// Molecular graphs parsed from a practical subset of SMILES, canonical
// emission, atom-map stripping and atom-level tokenization.
//
// Accepted grammar (EBNF, whitespace not allowed):
//
//   smiles     ::= chain ( '.' chain )*
//   chain      ::= atom ( bond? ( atom | ringbond ) | branch )*
//   branch     ::= '(' bond? chain ')'
//   ringbond   ::= bond? ( DIGIT | '%' DIGIT DIGIT )
//   bond       ::= '-' | '=' | '#' | '$' | ':' | '/' | '\'
//   atom       ::= organic | aromatic | '*' | bracket
//   organic    ::= 'B' | 'C' | 'N' | 'O' | 'P' | 'S' | 'F' | 'Cl' | 'Br' | 'I'
//   aromatic   ::= 'b' | 'c' | 'n' | 'o' | 'p' | 's'
//   bracket    ::= '[' isotope? symbol chiral? hcount? charge? map? ']'
//   symbol     ::= element | 'c' | 'n' | 'o' | 'p' | 's' | 'b' | 'se' | 'as' | '*'
//   chiral     ::= '@' | '@@'
//   hcount     ::= 'H' DIGIT?
//   charge     ::= ( '+' | '-' ) ( DIGIT+ | ('+'|'-')* )
//   map        ::= ':' DIGIT+
//
// Stereo markers ('/', '\', '@') are accepted and treated as absent: '/' and
// '\' parse as single bonds and chirality is discarded.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "retro/error.hpp"

namespace retro::smiles {

enum class BondOrder : std::uint8_t { Single = 1, Double = 2, Triple = 3, Quadruple = 4, Aromatic = 5 };

struct Atom {
  std::string element;  // "C", "Cl", "*", ...
  bool aromatic = false;
  int formal_charge = 0;
  std::optional<int> explicit_h;  // set iff written as a bracket atom
  std::optional<int> atom_map;
  std::optional<int> isotope;

  friend bool operator==(const Atom&, const Atom&) = default;
};

struct Bond {
  std::size_t a = 0;
  std::size_t b = 0;
  BondOrder order = BondOrder::Single;

  friend bool operator==(const Bond&, const Bond&) = default;
};

/// Atom/bond graph. Bonds connect distinct atoms, at most one bond per pair,
/// and aromatic bonds only join aromatic atoms.
class MolGraph {
 public:
  std::size_t add_atom(Atom atom);
  /// Throws InvalidBond on self-bonds, duplicate pairs or an aromatic bond
  /// between non-aromatic atoms.
  void add_bond(std::size_t a, std::size_t b, BondOrder order);

  const std::vector<Atom>& atoms() const { return atoms_; }
  std::vector<Atom>& atoms() { return atoms_; }
  const std::vector<Bond>& bonds() const { return bonds_; }
  std::size_t size() const { return atoms_.size(); }

  /// Neighbour atom indices in bond-insertion order.
  const std::vector<std::size_t>& neighbors(std::size_t atom) const { return adjacency_[atom]; }
  std::optional<BondOrder> bond_between(std::size_t a, std::size_t b) const;
  std::size_t degree(std::size_t atom) const { return adjacency_[atom].size(); }

  /// Hydrogens implied for `atom` if it were written bare (organic subset
  /// valence rules); zero for elements outside the organic subset.
  int implicit_hydrogens(std::size_t atom) const;
  /// Explicit count for bracket atoms, implicit count otherwise.
  int total_hydrogens(std::size_t atom) const;

  /// Connected components, each listed in ascending atom index.
  std::vector<std::vector<std::size_t>> components() const;

  friend bool operator==(const MolGraph&, const MolGraph&) = default;

 private:
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

/// Canonical SMILES text; a fixed point of canonicalize() without atom maps.
struct CanonicalSmiles {
  std::string text;

  const std::string& str() const { return text; }
  friend auto operator<=>(const CanonicalSmiles&, const CanonicalSmiles&) = default;
};

using TokenSequence = std::vector<std::string>;

MolGraph parse_smiles(std::string_view s);

/// DFS emission starting at `start`. `neighbor_order[i]` must be a
/// permutation of atom i's neighbours and fixes the visiting order. Atoms not
/// reachable from `start` are emitted as further '.'-separated components,
/// each rooted at its lowest-index atom.
std::string write_smiles(const MolGraph& g, std::size_t start,
                         const std::vector<std::vector<std::size_t>>& neighbor_order);
/// Emission from atom 0 in bond-insertion order.
std::string write_smiles(const MolGraph& g);

CanonicalSmiles canonicalize(std::string_view s);
CanonicalSmiles canonicalize(const MolGraph& g);

/// Canonical atom ranks for a connected graph: the ranking whose emission is
/// lexicographically smallest among all tie-break choices.
std::vector<std::size_t> canonical_ranks(const MolGraph& g);

std::string strip_atom_maps(std::string_view s);

/// Atom-level tokens; concatenating them gives back `s` exactly.
TokenSequence tokenize(std::string_view s);

/// Canonicalizes every component, sorts byte-wise and joins with '.'.
std::string canonical_reactant_set(std::span<const std::string> reactants);

/// Splits on top-level '.'.
std::vector<std::string> split_components(std::string_view s);

}  // namespace retro::smiles
