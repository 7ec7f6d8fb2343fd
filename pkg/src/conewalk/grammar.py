"""The unambiguous context-free grammar of a cone type table.

Variables are T_{x,y} = "paths from x to y staying inside the piece's cone",
grouped per tesselation piece: piece 0 (the root piece) contributes the
Green-function variables T_{x,y0}, and each cone type i contributes variables
for all pairs (x, y) of its boundary slice. Productions come in exactly three
shapes:

    T_{y,y}  ->  eps
    T_{x,y}  ->  a T_{x',y}                 for an edge (x,a,x') inside the slice
    T_{x,y}  ->  a T_{xb',yb'} b T_{x'',y}  for a bridge into a successor cone,
                                            a path inside it, and the return edge

where primed-bar variables live in the successor's type via the fixed
isomorphism. The grammar is in operator normal form and has no chain rules by
construction; both are asserted.

``series_coefficients`` turns the grammar into exact weighted word counts
c_T(n) (sub-probabilities) by the convolution recurrence the production shapes
induce; for the root variables this equals the n-step transition probability
to the target vertex.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import fsum

import numpy as np

from .cones import ConeTypeTable, _strong_components


class GrammarError(ValueError):
    pass


# A variable is (piece index, boundary index of x, boundary index of y).
VarKey = tuple


@dataclass(frozen=True)
class Production:
    """One production; eps has only lhs, linear has (a, u), quadratic (a, v, b, u)."""
    lhs: VarKey
    a: str = None
    v: VarKey = None
    b: str = None
    u: VarKey = None

    @property
    def kind(self) -> str:
        if self.a is None:
            return "eps"
        return "linear" if self.v is None else "quadratic"

    def rhs_variables(self):
        return [x for x in (self.v, self.u) if x is not None]


@dataclass
class Grammar:
    variables: tuple
    productions: tuple
    target: object                 # y0, a vertex of the root piece
    v0: tuple                      # root-piece variables, in order
    essential: tuple               # all other variables, in order
    delta: dict                    # variable -> 1 if it has an eps production
    alphabet: object
    piece_boundaries: dict = field(default_factory=dict)  # piece index -> boundary size

    def var_name(self, v: VarKey) -> str:
        return f"T{v[0]}_{v[1]}_{v[2]}"

    def production_count(self) -> int:
        return len(self.productions)


def build_grammar(table: ConeTypeTable, y0=None) -> Grammar:
    """Emit the grammar of a certified cone type table with target vertex y0.

    y0 must lie in the root piece (for root-based cones the root piece is the
    root vertex itself)."""
    if y0 is None:
        y0 = table.root
    root_piece = table.pieces[0]
    if y0 not in root_piece.boundary:
        raise GrammarError(f"target vertex {y0!r} is outside the root piece")
    y0_idx = root_piece.boundary.index(y0)
    inv = table.oracle.alphabet.invert

    variables = []
    productions = []
    for piece in table.pieces:
        m = len(piece.boundary)
        ys = (y0_idx,) if piece.index == 0 else tuple(range(m))
        for x in range(m):
            for y in ys:
                variables.append((piece.index, x, y))
        for y in ys:
            productions.append(Production(lhs=(piece.index, y, y)))
        for (i, a, j) in piece.slice_edges:
            for y in ys:
                productions.append(Production(lhs=(piece.index, i, y), a=a,
                                              u=(piece.index, j, y)))
        for link in piece.successors:
            exits = [(dj, inv(b), ii) for (ii, b, dj) in link.entries]
            for (xi, a, dx) in link.entries:
                for (dy, bb, x2) in exits:
                    for y in ys:
                        productions.append(Production(
                            lhs=(piece.index, xi, y), a=a,
                            v=(link.cone_type, dx, dy), b=bb,
                            u=(piece.index, x2, y)))

    var_set = set(variables)
    for p in productions:
        # operator normal form and no chain rules are structural here; guard it
        assert p.kind != "linear" or p.a is not None
        for v in p.rhs_variables():
            if v not in var_set:
                raise GrammarError(f"production references unknown variable {v}")

    delta = {v: 0 for v in variables}
    for p in productions:
        if p.kind == "eps":
            delta[p.lhs] = 1
    v0 = tuple(v for v in variables if v[0] == 0)
    essential = tuple(v for v in variables if v[0] != 0)
    return Grammar(variables=tuple(variables), productions=tuple(productions),
                   target=y0, v0=v0, essential=essential, delta=delta,
                   alphabet=table.oracle.alphabet,
                   piece_boundaries={p.index: len(p.boundary) for p in table.pieces})


# ---------------------------------------------------------------------------
# Dependency digraph
# ---------------------------------------------------------------------------

@dataclass
class DependencyDigraph:
    variables: tuple
    edges: tuple                   # (T, U) pairs
    components: list               # list of lists of variables
    component_of: dict
    component_order: list          # (c1, c2) pairs with c1 strictly before c2
    components_are_v0_and_essential: bool
    v0_precedes_essential: bool


def dependency_analysis(g: Grammar) -> DependencyDigraph:
    """Strong components of the variable digraph and the induced order."""
    idx = {v: i for i, v in enumerate(g.variables)}
    edge_set = set()
    for p in g.productions:
        for u in p.rhs_variables():
            edge_set.add((idx[p.lhs], idx[u]))
    edges = sorted(edge_set)
    comp, ncomp = _strong_components(len(g.variables), edges)
    components = [[] for _ in range(ncomp)]
    for v in g.variables:
        components[comp[idx[v]]].append(v)
    reach = [[i == j for j in range(ncomp)] for i in range(ncomp)]
    for (u, w) in edges:
        reach[comp[u]][comp[w]] = True
    for k in range(ncomp):
        for i in range(ncomp):
            if reach[i][k]:
                for j in range(ncomp):
                    if reach[k][j]:
                        reach[i][j] = True
    order = [(i, j) for i in range(ncomp) for j in range(ncomp)
             if i != j and reach[i][j]]
    v0_set = set(g.v0)
    ess_set = set(g.essential)
    comp_sets = [set(c) for c in components]
    two_expected = (len(components) == 2
                    and any(s == v0_set for s in comp_sets)
                    and any(s == ess_set for s in comp_sets))
    v0_first = False
    if v0_set and ess_set:
        c_v0 = comp[idx[g.v0[0]]]
        v0_first = all(reach[c_v0][comp[idx[u]]] for u in g.essential)
    return DependencyDigraph(
        variables=g.variables, edges=tuple((g.variables[u], g.variables[w])
                                           for u, w in edges),
        components=components, component_of={v: comp[idx[v]] for v in g.variables},
        component_order=order,
        components_are_v0_and_essential=two_expected,
        v0_precedes_essential=v0_first)


# ---------------------------------------------------------------------------
# Series coefficients
# ---------------------------------------------------------------------------

def _weight_map(mu) -> dict:
    return dict(mu.weights) if hasattr(mu, "weights") else dict(mu)


def all_series_coefficients(g: Grammar, mu, N: int, scale: float = 1.0,
                            exact: bool = False) -> dict:
    """c_T(n) for every variable and n = 0..N.

    c_T(n) is the total weight of length-n words generated by T, each word
    weighted by the product of its step weights (times scale^n, to keep long
    series inside floating-point range). Every production consumes at least
    one terminal before any variable, so layer n only needs layers < n.

    With ``exact=True`` the weights must be Fractions (or ints) and the result
    is a dict of Fraction lists; this is the slow reference mode for small n.
    """
    if N < 0:
        raise GrammarError("series length must be >= 0")
    weights = _weight_map(mu)
    for a in g.alphabet.symbols:
        if a not in weights:
            raise GrammarError(f"step distribution is missing label {a!r}")

    by_lhs: dict = {v: [] for v in g.variables}
    for p in g.productions:
        if p.kind == "eps":
            continue
        if exact:
            wa = Fraction(weights[p.a]) * Fraction(scale)
        else:
            wa = float(weights[p.a]) * scale
        if p.kind == "linear":
            by_lhs[p.lhs].append((wa, p.u, None))
        else:
            wb = Fraction(weights[p.b]) * Fraction(scale) if exact \
                else float(weights[p.b]) * scale
            by_lhs[p.lhs].append((wa * wb, p.u, p.v))

    if exact:
        c = {v: [Fraction(g.delta[v])] + [Fraction(0)] * N for v in g.variables}
        for n in range(1, N + 1):
            for v in g.variables:
                total = Fraction(0)
                for w, u, vv in by_lhs[v]:
                    if vv is None:
                        total += w * c[u][n - 1]
                    elif n >= 2:
                        total += w * sum(c[vv][k] * c[u][n - 2 - k]
                                         for k in range(n - 1))
                c[v][n] = total
        return c

    c = {v: np.zeros(N + 1) for v in g.variables}
    for v in g.variables:
        c[v][0] = g.delta[v]
    for n in range(1, N + 1):
        for v in g.variables:
            terms = []
            for w, u, vv in by_lhs[v]:
                if vv is None:
                    terms.append(w * c[u][n - 1])
                elif n >= 2:
                    terms.append(w * float(np.dot(c[vv][0:n - 1],
                                                  c[u][n - 2::-1])))
            if terms:
                c[v][n] = fsum(terms)
    return c


def series_coefficients(g: Grammar, T: VarKey, mu, N: int, scale: float = 1.0,
                        exact: bool = False):
    """Series for a single variable; computes the full system once."""
    if T not in set(g.variables):
        raise GrammarError(f"unknown variable {T}")
    return all_series_coefficients(g, mu, N, scale=scale, exact=exact)[T]
