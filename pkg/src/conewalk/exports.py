"""Deterministic text exports: DOT drawings, grammar listings, CSV series.

Every writer sorts its input and emits no timestamps, so repeated runs on the
same configuration produce byte-identical files.
"""

from __future__ import annotations

import json

from .cones import ConeTypeTable, TypeGraph
from .grammar import Grammar, DependencyDigraph
from .graphs import BallView, GraphOracle
from .walks import WalkSeries


def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def ball_to_dot(oracle: GraphOracle, b: BallView) -> str:
    """Undirected drawing of a ball; one line per inverse edge pair."""
    inv = oracle.alphabet.invert
    names = {}
    for v in sorted(b.distance, key=lambda v: (b.distance[v], oracle.sort_key(v))):
        names[v] = f"v{len(names)}"
    lines = ["graph ball {"]
    for v, name in names.items():
        lines.append(f'  {name} [label={_dot_quote(repr(v))}, dist={b.distance[v]}];')
    seen = set()
    for (x, a, y) in sorted(b.edges, key=lambda e: (names[e[0]], e[1], names[e[2]])):
        key = frozenset({(names[x], a), (names[y], inv(a))})
        if key in seen:
            continue
        seen.add(key)
        lines.append(f'  {names[x]} -- {names[y]} [label={_dot_quote(a)}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def type_graph_to_dot(tg: TypeGraph) -> str:
    """The graph of types with multiplicities a(i, j) as edge labels."""
    r = len(tg.a)
    lines = ["digraph types {"]
    for i in range(r):
        lines.append(f'  t{i + 1} [label="type {i + 1}"];')
    for i in range(r):
        for j in range(r):
            if tg.a[i][j] > 0:
                lines.append(f'  t{i + 1} -> t{j + 1} [label="{tg.a[i][j]}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def dependency_to_dot(g: Grammar, dep: DependencyDigraph) -> str:
    lines = ["digraph dependencies {"]
    for v in dep.variables:
        lines.append(f"  {g.var_name(v)};")
    for (t, u) in sorted(dep.edges, key=lambda e: (g.var_name(e[0]), g.var_name(e[1]))):
        lines.append(f"  {g.var_name(t)} -> {g.var_name(u)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def grammar_to_text(g: Grammar) -> str:
    """One production per line: ``T -> a U b V``, epsilon spelled ``eps``."""
    lines = []
    for p in g.productions:
        if p.kind == "eps":
            lines.append(f"{g.var_name(p.lhs)} -> eps")
        elif p.kind == "linear":
            lines.append(f"{g.var_name(p.lhs)} -> {p.a} {g.var_name(p.u)}")
        else:
            lines.append(f"{g.var_name(p.lhs)} -> {p.a} {g.var_name(p.v)} "
                         f"{p.b} {g.var_name(p.u)}")
    return "\n".join(sorted(lines)) + "\n"


def grammar_to_json(g: Grammar) -> str:
    prods = []
    for p in g.productions:
        if p.kind == "eps":
            rhs = []
        elif p.kind == "linear":
            rhs = [p.a, g.var_name(p.u)]
        else:
            rhs = [p.a, g.var_name(p.v), p.b, g.var_name(p.u)]
        prods.append({"lhs": g.var_name(p.lhs), "rhs": rhs})
    prods.sort(key=lambda d: (d["lhs"], d["rhs"]))
    doc = {
        "variables": [g.var_name(v) for v in g.variables],
        "root_variables": [g.var_name(v) for v in g.v0],
        "essential_variables": [g.var_name(v) for v in g.essential],
        "epsilon_flags": {g.var_name(v): g.delta[v] for v in g.variables},
        "productions": prods,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def type_table_to_json(table: ConeTypeTable, tg: TypeGraph, irreducible: bool) -> str:
    doc = {
        "type_count": table.type_count,
        "types": [
            {
                "index": p.index,
                "boundary_size": len(p.boundary),
                "boundary_diameter": p.boundary_diameter,
                "representative_radius": p.radius,
                "successor_types": list(p.successor_multiset),
            }
            for p in table.types
        ],
        "a_matrix": tg.a,
        "max_boundary_diameter": table.max_boundary_diameter,
        "irreducible": irreducible,
        "type_graph_period": tg.period,
        "probe_depth": table.probe_depth,
        "stabilized_at": list(table.stabilized_at),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def series_to_csv(series: WalkSeries, include_provenance: bool = False) -> str:
    """CSV of the n-step probabilities; fixed two-column schema ``n,p`` by
    default, with an extra provenance column for validation exports."""
    lines = ["n,p,provenance" if include_provenance else "n,p"]
    for n in range(len(series.values)):
        p = series.probability(n)
        if include_provenance:
            lines.append(f"{n},{p!r},{series.provenance(n)}")
        else:
            lines.append(f"{n},{p!r}")
    return "\n".join(lines) + "\n"


def series_to_gnuplot(series: WalkSeries) -> str:
    """log-log diagnostic data: n, log p + n log R-guess columns left raw."""
    lines = ["# n  p  log_p"]
    for n in range(len(series.values)):
        lp = series.log_probability(n)
        lines.append(f"{n} {series.probability(n)!r} {lp!r}")
    return "\n".join(lines) + "\n"


def coefficients_to_csv(g: Grammar, coefficients: dict, variables=None) -> str:
    """CSV of series coefficients: column n plus one column per variable."""
    variables = list(variables) if variables is not None else list(g.variables)
    for v in variables:
        if v not in coefficients:
            raise KeyError(f"no coefficients for variable {g.var_name(v)}")
    n_max = min(len(coefficients[v]) for v in variables) - 1
    header = "n," + ",".join(g.var_name(v) for v in variables)
    lines = [header]
    for n in range(n_max + 1):
        row = [str(n)] + [repr(float(coefficients[v][n])) for v in variables]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def genfun_grid_csv(system, R: float, count: int = 50) -> str:
    """CSV of (z, lambda(z), f_V(z)...) on an evenly spaced grid below R."""
    from .genfun import DIVERGED, build_Q, eval_essential, pf_eigen

    names = ["f_" + "_".join(str(i) for i in v) for v in system.ess_vars]
    lines = ["z,lambda," + ",".join(names)]
    for k in range(1, count + 1):
        z = R * k / (count + 1)
        fv = eval_essential(system, z)
        if fv is DIVERGED:
            lines.append(f"{z!r},diverged" + ",nan" * len(names))
            continue
        Q = build_Q(system, z, fv)
        lam = float(Q[0, 0]) if Q.shape[0] == 1 else pf_eigen(Q)[0]
        lines.append(",".join([repr(float(z)), repr(float(lam))]
                              + [repr(float(x)) for x in fv]))
    return "\n".join(lines) + "\n"
