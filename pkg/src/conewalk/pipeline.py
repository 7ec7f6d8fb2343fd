"""Configuration-driven pipeline: graph -> cones -> grammar -> classification
-> validation, with machine-readable reports and deterministic file exports.

A run configuration is a nested key-value tree (TOML on disk). ``run_analyze``
executes the full pipeline and embeds every oracle-check result in the report;
the CLI maps outcomes to exit codes (0 all checks pass, 1 numeric check
failure, 2 configuration error, 3 finite type not certified).
"""

from __future__ import annotations

import concurrent.futures
import datetime
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .alphabet import involutive_alphabet
from .cones import assign_types, check_irreducible, type_graph
from .exports import (ball_to_dot, dependency_to_dot, grammar_to_json,
                      grammar_to_text, series_to_csv, type_graph_to_dot,
                      type_table_to_json)
from .genfun import (DIVERGED, StepDistribution, build_Q, build_system, classify,
                     eval_essential, green_values, lambda_at, lambda_prime_check,
                     matrix_irreducible)
from .grammar import all_series_coefficients, build_grammar, dependency_analysis
from .graphs import (AttachmentSpec, GraphError, PieceSpec, ball, follow_word,
                     make_cone_description, make_free_group, make_free_product,
                     make_subgroup_schreier)
from .walks import (WalkSeries, ball_transition_powers, estimate_Rmu,
                    fit_asymptotics, periods, splice_check)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def max_threads() -> int:
    try:
        return max(1, int(os.environ.get("CONEWALK_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    graph: dict
    mu_mode: str = "uniform"
    mu_weights: dict = field(default_factory=dict)
    origin: str = ""
    target: str = ""
    series_n: int = 5000
    exact_check_n: int = 20
    probe_start: int = 4
    probe_step: int = 2
    max_radius: int = 24
    tol_classify: float = 1e-6
    tol_exactness: float = 1e-12
    tol_green: float = 1e-8
    tol_lambda_prime: float = 1e-5
    tol_rmu_cross: float = 2e-3
    fit_window_frac: float = 0.5
    export_ball_radius: int = 4
    out_dir: str = "out"
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a table")
        graph = doc.get("graph")
        if not isinstance(graph, dict) or "kind" not in graph:
            raise ConfigError("missing [graph] table with a 'kind' key")
        mu = doc.get("mu", {"mode": "uniform"})
        mode = mu.get("mode", "weights" if "weights" in mu else "uniform")
        if mode not in ("uniform", "weights"):
            raise ConfigError(f"unknown mu mode {mode!r}")
        weights = dict(mu.get("weights", {}))
        if mode == "weights" and not weights:
            raise ConfigError("mu mode 'weights' requires a [mu.weights] table")
        walk = doc.get("walk", {})
        cones = doc.get("cones", {})
        tol = doc.get("tolerances", {})
        fit = doc.get("fit", {})
        out = doc.get("output", {})
        cfg = cls(
            graph=graph,
            mu_mode=mode,
            mu_weights=weights,
            origin=str(walk.get("origin", "")),
            target=str(walk.get("target", "")),
            series_n=int(walk.get("series_n", 5000)),
            exact_check_n=int(walk.get("exact_check_n", 20)),
            probe_start=int(cones.get("probe_start", 4)),
            probe_step=int(cones.get("probe_step", 2)),
            max_radius=int(cones.get("max_radius", 24)),
            tol_classify=float(tol.get("classify", 1e-6)),
            tol_exactness=float(tol.get("exactness", 1e-12)),
            tol_green=float(tol.get("green_consistency", 1e-8)),
            tol_lambda_prime=float(tol.get("lambda_prime", 1e-5)),
            tol_rmu_cross=float(tol.get("rmu_cross", 2e-3)),
            fit_window_frac=float(fit.get("window_frac", 0.5)),
            export_ball_radius=int(out.get("ball_radius", 4)),
            out_dir=str(out.get("dir", "out")),
            raw=doc,
        )
        if cfg.series_n < 200:
            raise ConfigError("walk.series_n must be >= 200 for asymptotic fits")
        if cfg.exact_check_n < 1 or cfg.exact_check_n > cfg.series_n:
            raise ConfigError("walk.exact_check_n must be in [1, series_n]")
        for name in ("tol_classify", "tol_exactness", "tol_green",
                     "tol_lambda_prime", "tol_rmu_cross"):
            if getattr(cfg, name) <= 0:
                raise ConfigError(f"tolerance {name} must be positive")
        if not (0.05 <= cfg.fit_window_frac <= 0.95):
            raise ConfigError("fit.window_frac must be in [0.05, 0.95]")
        return cfg

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path: str) -> RunConfig:
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"configuration file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}")
    return RunConfig.from_dict(doc)


def _piece_from_dict(name: str, doc: dict) -> PieceSpec:
    try:
        vertices = tuple(doc["vertices"])
        edges = tuple(tuple(e) for e in doc.get("edges", []))
        ports = tuple(tuple(p) for p in doc.get("ports", []))
        attachments = tuple(
            AttachmentSpec(piece=a["piece"],
                           edges=tuple(tuple(e) for e in a.get("edges", [])))
            for a in doc.get("attachments", []))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed piece {name!r}: {exc}")
    return PieceSpec(name=name, vertices=vertices, edges=edges, ports=ports,
                     attachments=attachments)


def build_graph(cfg: RunConfig):
    g = cfg.graph
    kind = g.get("kind")
    try:
        if kind == "free_group":
            return make_free_group(int(g.get("rank", 2)))
        if kind == "subgroup_schreier":
            return make_subgroup_schreier(int(g.get("rank", 2)),
                                          list(g.get("generators", [])))
        if kind == "free_product":
            if "factors" not in g:
                raise ConfigError("free_product requires graph.factors")
            return make_free_product(g["factors"], g.get("symbols"))
        if kind == "cone_description":
            if "symbols" not in g or "root_piece" not in g:
                raise ConfigError(
                    "cone_description requires graph.symbols and graph.root_piece")
            alphabet = involutive_alphabet([tuple(p) for p in g["symbols"]])
            root = _piece_from_dict("root", g["root_piece"])
            pieces = [_piece_from_dict(name, doc)
                      for name, doc in sorted(g.get("pieces", {}).items())]
            return make_cone_description(alphabet, root, pieces)
    except GraphError as exc:
        raise ConfigError(f"invalid graph: {exc}") from exc
    raise ConfigError(f"unknown graph kind {kind!r}")


def build_mu(cfg: RunConfig, oracle) -> StepDistribution:
    if cfg.mu_mode == "uniform":
        return StepDistribution.uniform(oracle.alphabet)
    missing = [a for a in oracle.alphabet.symbols if a not in cfg.mu_weights]
    extra = [a for a in cfg.mu_weights if a not in oracle.alphabet.symbols]
    if missing or extra:
        raise ConfigError(
            f"mu weights do not match the alphabet (missing {missing}, "
            f"unknown {extra})")
    try:
        return StepDistribution({a: float(w) for a, w in cfg.mu_weights.items()})
    except Exception as exc:
        raise ConfigError(f"invalid mu weights: {exc}") from exc


# ---------------------------------------------------------------------------
# The analysis run
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    config_hash: str
    report: dict

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.report["checks"])

    def to_json(self, include_timestamp: bool = True) -> str:
        doc = dict(self.report)
        doc["schema_version"] = SCHEMA_VERSION
        doc["config_hash"] = self.config_hash
        if include_timestamp:
            doc["generated_at"] = datetime.datetime.now(
                datetime.timezone.utc).isoformat()
        return json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n"


def _check(name, passed, **details):
    return {"name": name, "passed": bool(passed),
            "details": {k: (float(v) if isinstance(v, (np.floating,)) else v)
                        for k, v in details.items()}}


def run_analyze(cfg: RunConfig) -> RunReport:
    oracle = build_graph(cfg)
    mu = build_mu(cfg, oracle)
    try:
        origin = follow_word(oracle, oracle.root, cfg.origin)
        target = follow_word(oracle, oracle.root, cfg.target)
    except Exception as exc:
        raise ConfigError(f"invalid origin/target path: {exc}") from exc
    if origin != oracle.root or target != oracle.root:
        raise ConfigError(
            "origin and target must resolve to the root vertex: the root piece "
            "of the cone tree set is the root alone, so grammar Green functions "
            "exist for the root pair only")

    table = assign_types(oracle, probe_start=cfg.probe_start,
                         probe_step=cfg.probe_step, max_radius=cfg.max_radius)
    tg = type_graph(table)
    irreducible, irr_report = check_irreducible(tg)
    grammar = build_grammar(table, y0=target)
    dep = dependency_analysis(grammar)
    system = build_system(grammar, mu)
    classification = classify(system, tol=cfg.tol_classify,
                              irreducible=irreducible)
    period_info = periods(oracle, table.root, table)

    warnings = []
    if not irreducible:
        warnings.append(
            "type graph is not strongly connected: local limit classification "
            "guarantees not established; asymptotics reported heuristically")

    checks = []

    # exactness oracle: grammar DP vs ball-truncated matrix powers
    n_exact = cfg.exact_check_n
    exact_series = ball_transition_powers(oracle, table.root, origin, target,
                                          n_exact, mu)
    pilot_n = max(400, n_exact)
    pilot = all_series_coefficients(grammar, mu, pilot_n)
    root_var = (0, 0, 0)
    dp_pilot = WalkSeries(origin=origin, target=target,
                          values=pilot[root_var], scale=1.0,
                          distance=exact_series.distance)
    ok, worst = splice_check(exact_series, dp_pilot, n_exact, cfg.tol_exactness)
    checks.append(_check("exactness_splice", ok, max_rel_err=worst,
                         n_max=n_exact, tol=cfg.tol_exactness))

    # sub-probability bounds on the unscaled pilot coefficients
    bad = [grammar.var_name(v) for v, arr in pilot.items()
           if float(np.min(arr)) < 0 or float(np.max(arr)) > 1 + 1e-12]
    checks.append(_check("coefficients_in_unit_interval", not bad,
                         offending_variables=bad))

    # long series at a scale that keeps the tail in floating-point range
    scale = classification.R_mu
    full = all_series_coefficients(grammar, mu, cfg.series_n, scale=scale)
    values = full[root_var].copy()
    ns = np.arange(n_exact + 1)
    values[:n_exact + 1] = exact_series.values * scale ** ns
    series = WalkSeries(origin=origin, target=target, values=values,
                        scale=scale, exact_upto=n_exact,
                        distance=exact_series.distance)

    # parity vanishing
    if period_info.d == 2:
        n_par = min(200, cfg.series_n)
        offending = [int(n) for n in range(n_par + 1)
                     if (n - series.distance) % 2 != 0 and series.values[n] != 0.0]
        checks.append(_check("parity_vanishing", not offending,
                             offending_n=offending[:10], n_max=n_par))
    else:
        checks.append(_check("parity_vanishing", True, skipped="period 1"))

    # radius-of-convergence cross-validation
    stride = 2 if (period_info.d == 2 or period_info.d_s == 2) else 1
    r_hat, r_unc = estimate_Rmu(series, stride=stride)
    rm_ok = abs(r_hat - classification.R_mu) <= cfg.tol_rmu_cross
    checks.append(_check("rmu_cross_validation", rm_ok, series_estimate=r_hat,
                         classifier=classification.R_mu,
                         difference=abs(r_hat - classification.R_mu),
                         uncertainty=r_unc, tol=cfg.tol_rmu_cross))

    # asymptotic fit and case consistency
    fit = fit_asymptotics(series, classification, period_info,
                          window_frac=cfg.fit_window_frac)
    expected_alpha = {"a": 0.0, "b": 0.5, "c": 1.5}[classification.case]
    fit_ok = abs(fit.alpha - expected_alpha) <= 0.15
    checks.append(_check("case_consistency", fit_ok, fitted_alpha=fit.alpha,
                         expected_alpha=expected_alpha,
                         case=classification.case, tol=0.15))

    # Green-function consistency: series partial sum vs (I - Q)^(-1) e
    z_star = 0.9 * classification.R_mu
    n_green = min(4000, cfg.series_n)
    powers = (z_star / scale) ** np.arange(n_green + 1)
    partial = float(np.dot(series.values[:n_green + 1], powers))
    g_vec = green_values(system, z_star)
    direct = float(g_vec[0])
    g_err = abs(partial - direct) / max(abs(direct), 1e-300)
    checks.append(_check("green_consistency", g_err <= cfg.tol_green,
                         z=z_star, series_sum=partial, linear_solve=direct,
                         rel_err=g_err, tol=cfg.tol_green))

    # lambda(z) monotone increasing on a grid
    grid = [classification.R * k / 51.0 for k in range(1, 51)]
    lam_grid = _lambda_grid(system, grid)
    increasing = all(b > a - 1e-12 for a, b in zip(lam_grid, lam_grid[1:]))
    checks.append(_check("lambda_monotone_on_grid", increasing,
                         grid_points=len(grid)))

    # Q(z) irreducibility on a grid
    q_grid = [classification.R * k / 11.0 for k in range(1, 11)]
    q_ok = True
    for z in q_grid:
        fv = eval_essential(system, z)
        if fv is DIVERGED or not matrix_irreducible(build_Q(system, z, fv)):
            q_ok = False
            break
    checks.append(_check("q_matrix_irreducible_on_grid", q_ok,
                         grid_points=len(q_grid)))

    # eigenvalue derivative identity
    lp_grid = [classification.R * t for t in (0.3, 0.45, 0.6, 0.75, 0.9)]
    residuals = [lambda_prime_check(system, z) for z in lp_grid]
    lp_ok = all(r <= cfg.tol_lambda_prime for r in residuals)
    checks.append(_check("lambda_prime_identity", lp_ok,
                         residuals=[float(r) for r in residuals],
                         tol=cfg.tol_lambda_prime))

    # simple-pole residue behaviour in case a
    if classification.case == "a":
        samples = []
        for k in (2, 3, 4, 5):
            z = classification.R_mu * (1.0 - 10.0 ** (-k))
            lam = lambda_at(system, z)
            gval = float(green_values(system, z)[0])
            samples.append((1.0 - lam) * gval)
        pole_ok = all(s > 0 for s in samples) and \
            abs(samples[-1] - samples[-2]) <= 0.1 * abs(samples[-1])
        checks.append(_check("simple_pole_residue", pole_ok,
                             samples=[float(s) for s in samples]))

    report = {
        "graph": {"kind": cfg.graph.get("kind"),
                  "alphabet": list(oracle.alphabet.symbols),
                  "root": repr(oracle.root)},
        "mu": {a: mu.of(a) for a in oracle.alphabet.symbols},
        "type_table": {
            "type_count": table.type_count,
            "a_matrix": tg.a,
            "max_boundary_diameter": table.max_boundary_diameter,
            "irreducible": irreducible,
            "type_graph_period": tg.period,
            "type_graph_blocks": tg.blocks,
            "probe_depth": table.probe_depth,
            "stabilized_at": list(table.stabilized_at),
            "growth_trace": [list(t) for t in table.growth_trace],
        },
        "grammar": {
            "variable_count": len(grammar.variables),
            "root_variable_count": len(grammar.v0),
            "essential_variable_count": len(grammar.essential),
            "production_count": len(grammar.productions),
            "dependency_component_count": len(dep.components),
            "components_are_v0_and_essential": dep.components_are_v0_and_essential,
            "v0_precedes_essential": dep.v0_precedes_essential,
        },
        "classification": {
            "R": classification.R,
            "R_mu": classification.R_mu,
            "case": classification.case,
            "lambda_at_R": classification.lambda_at_R,
            "tol": classification.tol,
            "irreducible_caveat": classification.irreducible_caveat,
            "certificates": classification.certificates,
        },
        "periods": {"d": period_info.d, "d_s": period_info.d_s,
                    "witness": period_info.witness},
        "rmu_estimate": {"value": r_hat, "uncertainty": r_unc, "stride": stride},
        "fit": {
            "alpha": fit.alpha, "alpha_se": fit.alpha_se,
            "c": fit.c, "c_se": fit.c_se,
            "cbar": fit.cbar, "cbar_se": fit.cbar_se,
            "oscillating": fit.oscillating,
            "window": list(fit.window),
            "parity_intercepts": {k: list(v) for k, v in
                                  fit.parity_intercepts.items()},
            "residual_rms": fit.residual_rms,
        },
        "series": {"n": cfg.series_n, "scale": scale,
                   "exact_upto": n_exact},
        "checks": checks,
        "warnings": warnings,
    }
    return RunReport(config_hash=cfg.config_hash(), report=report)


def _lambda_grid(system, grid):
    workers = max_threads()
    if workers == 1:
        return [lambda_at(system, z) for z in grid]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda z: lambda_at(system, z), grid))


# ---------------------------------------------------------------------------
# Validation-only run (oracle checks without classification)
# ---------------------------------------------------------------------------

def run_validate(cfg: RunConfig) -> list:
    oracle = build_graph(cfg)
    mu = build_mu(cfg, oracle)
    origin = follow_word(oracle, oracle.root, cfg.origin)
    target = follow_word(oracle, oracle.root, cfg.target)
    checks = []

    b = ball(oracle, oracle.root, 4)
    sym_ok = True
    inv = oracle.alphabet.invert
    for v in b.distance:
        nv = oracle.neighbors(v)
        if len(nv) != len(oracle.alphabet.symbols):
            sym_ok = False
            break
        for a, w in nv:
            if oracle.neighbor(w, inv(a)) != v:
                sym_ok = False
                break
    checks.append(_check("deterministic_and_symmetric", sym_ok,
                         ball_radius=4, vertices=len(b.distance)))

    table = assign_types(oracle, probe_start=cfg.probe_start,
                         probe_step=cfg.probe_step, max_radius=cfg.max_radius)
    grammar = build_grammar(table, y0=target)
    n_exact = cfg.exact_check_n
    exact_series = ball_transition_powers(oracle, table.root, origin, target,
                                          n_exact, mu)
    dp = all_series_coefficients(grammar, mu, n_exact)
    dp_series = WalkSeries(origin=origin, target=target, values=dp[(0, 0, 0)],
                           scale=1.0, distance=exact_series.distance)
    ok, worst = splice_check(exact_series, dp_series, n_exact, cfg.tol_exactness)
    checks.append(_check("exactness_splice", ok, max_rel_err=worst,
                         n_max=n_exact, tol=cfg.tol_exactness))
    bad = [grammar.var_name(v) for v, arr in dp.items()
           if float(np.min(arr)) < 0 or float(np.max(arr)) > 1 + 1e-12]
    checks.append(_check("coefficients_in_unit_interval", not bad,
                         offending_variables=bad))
    return checks


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

EXPORT_KINDS = ("ball-dot", "types-dot", "grammar", "series-csv", "depgraph-dot")


def run_export(cfg: RunConfig, what: str) -> dict:
    """Produce the requested export files; returns {filename: content}."""
    if what not in EXPORT_KINDS:
        raise ConfigError(f"unknown export kind {what!r}; expected one of "
                          f"{', '.join(EXPORT_KINDS)}")
    oracle = build_graph(cfg)
    files: dict = {}
    if what == "ball-dot":
        b = ball(oracle, oracle.root, cfg.export_ball_radius)
        files["ball.dot"] = ball_to_dot(oracle, b)
        return files
    table = assign_types(oracle, probe_start=cfg.probe_start,
                         probe_step=cfg.probe_step, max_radius=cfg.max_radius)
    if what == "types-dot":
        tg = type_graph(table)
        irreducible, _ = check_irreducible(tg)
        files["types.dot"] = type_graph_to_dot(tg)
        files["types.json"] = type_table_to_json(table, tg, irreducible)
        return files
    target = follow_word(oracle, oracle.root, cfg.target)
    grammar = build_grammar(table, y0=target)
    if what == "grammar":
        files["grammar.txt"] = grammar_to_text(grammar)
        files["grammar.json"] = grammar_to_json(grammar)
        return files
    if what == "depgraph-dot":
        dep = dependency_analysis(grammar)
        files["depgraph.dot"] = dependency_to_dot(grammar, dep)
        return files
    # series-csv
    mu = build_mu(cfg, oracle)
    origin = follow_word(oracle, oracle.root, cfg.origin)
    n_exact = cfg.exact_check_n
    exact_series = ball_transition_powers(oracle, table.root, origin, target,
                                          n_exact, mu)
    pilot = all_series_coefficients(grammar, mu, min(400, cfg.series_n))
    pilot_series = WalkSeries(origin=origin, target=target,
                              values=pilot[(0, 0, 0)], scale=1.0,
                              distance=exact_series.distance)
    stride = 2
    try:
        scale, _unc = estimate_Rmu(pilot_series, stride=stride, tail=100)
    except Exception:
        scale = 1.0
    full = all_series_coefficients(grammar, mu, cfg.series_n, scale=scale)
    values = full[(0, 0, 0)].copy()
    ns = np.arange(n_exact + 1)
    values[:n_exact + 1] = exact_series.values * scale ** ns
    series = WalkSeries(origin=origin, target=target, values=values,
                        scale=scale, exact_upto=n_exact,
                        distance=exact_series.distance)
    files["series.csv"] = series_to_csv(series)
    return files


def write_files(files: dict, out_dir: str) -> list:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, content in sorted(files.items()):
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(content)
        paths.append(path)
    return paths
