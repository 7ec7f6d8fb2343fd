"""Ground truth and asymptotic validation for the n-step return probabilities.

Ball-truncated transition matrices give exact p^(n)(x, y) for moderate n
(a length-n path from x cannot leave the ball of radius (n + d(x,y))/2 around
x and still reach y), the grammar DP extends the series to large n after a
splice check, and regression fits extract the decay exponent and the
oscillating constant split of the local limit behaviour

    p^(n)(x, y) ~ (c + (-1)^n cbar) R_mu^{-n} n^{-alpha},  alpha in {0, 1/2, 3/2}.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graphs import GraphOracle, ball, GraphError
from .cones import ConeTypeTable


class WalkError(ValueError):
    pass


class TruncationError(WalkError):
    """The required ball exceeds the vertex cap; use the grammar DP instead."""


@dataclass
class WalkSeries:
    """p^(n)(origin, target) for n = 0..N, stored as values[n] * scale^(-n).

    The scale keeps long series inside floating-point range (values of a
    well-scaled series decay only polynomially). ``exact_upto`` marks the
    ball-exact provenance range; larger n come from the grammar DP.
    """
    origin: object
    target: object
    values: np.ndarray
    scale: float = 1.0
    exact_upto: int = -1
    distance: int = 0

    def __len__(self):
        return len(self.values)

    @property
    def n_max(self):
        return len(self.values) - 1

    def probability(self, n: int) -> float:
        return float(self.values[n]) * self.scale ** (-n)

    def log_probability(self, n: int) -> float:
        v = float(self.values[n])
        if v <= 0.0:
            return -math.inf
        return math.log(v) - n * math.log(self.scale)

    def provenance(self, n: int) -> str:
        return "ball-exact" if n <= self.exact_upto else "grammar-dp"


def graph_distance(oracle: GraphOracle, x, y, cap: int = 10_000_000) -> int:
    if x == y:
        return 0
    dist = {x: 0}
    queue = deque([x])
    while queue:
        v = queue.popleft()
        for _a, w in oracle.neighbors(v):
            if w == y:
                return dist[v] + 1
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
        if len(dist) > cap:
            break
    raise WalkError(f"no path from {x!r} to {y!r} found within {cap} vertices")


def ball_transition_powers(oracle: GraphOracle, o, x, y, N: int, mu,
                           vertex_cap: int = 2_000_000) -> WalkSeries:
    """Exact p^(n)(x, y) for n <= N via sparse powers of a ball-truncated matrix.

    The substochastic matrix lives on the ball around x of radius
    ceil((N + d(x,y)) / 2): a length-n path from x to y that leaves that ball
    cannot return in time, so the truncation is exact on the whole range.
    """
    if N < 0:
        raise WalkError("N must be >= 0")
    weights = dict(mu.weights) if hasattr(mu, "weights") else dict(mu)
    d_xy = graph_distance(oracle, x, y)
    radius = (N + d_xy + 1) // 2
    try:
        b = ball(oracle, x, radius, vertex_cap=vertex_cap)
    except GraphError as exc:
        raise TruncationError(
            f"ball of radius {radius} around {x!r} exceeds {vertex_cap} vertices; "
            f"rely on the grammar DP for this range") from exc
    if y not in b.distance:
        raise WalkError(f"target {y!r} not within radius {radius} of {x!r}")
    order = sorted(b.distance, key=lambda v: (b.distance[v], oracle.sort_key(v)))
    idx = {v: i for i, v in enumerate(order)}
    rows = []
    cols = []
    vals = []
    for (u, a, w) in b.edges:
        rows.append(idx[u])
        cols.append(idx[w])
        vals.append(weights[a])
    P = sp.csr_matrix((vals, (rows, cols)), shape=(len(order), len(order)))
    PT = P.T.tocsr()
    vec = np.zeros(len(order))
    vec[idx[x]] = 1.0
    values = np.zeros(N + 1)
    values[0] = vec[idx[y]]
    for n in range(1, N + 1):
        vec = PT @ vec
        values[n] = vec[idx[y]]
    return WalkSeries(origin=x, target=y, values=values, scale=1.0,
                      exact_upto=N, distance=d_xy)


# ---------------------------------------------------------------------------
# Periods
# ---------------------------------------------------------------------------

@dataclass
class PeriodInfo:
    """Walk period d and strong period d_s, with a witness.

    d = 1 iff the graph has an odd cycle (decided on a ball whose radius is
    tied to the type-stabilization depth); d_s = 1 iff some cone type contains
    an odd cycle inside its stored truncation. Valid combinations here are
    (1,1), (2,2) and the oscillation regime (1,2).
    """
    d: int
    d_s: int
    witness: dict


def _odd_cycle_in(adj_iter, start_vertices):
    """2-colour a region; return a conflicting edge if one exists."""
    color = {}
    for s in start_vertices:
        if s in color:
            continue
        color[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            for a, w in adj_iter(v):
                if w not in color:
                    color[w] = color[v] ^ 1
                    queue.append(w)
                elif color[w] == color[v]:
                    return (v, a, w)
    return None


def periods(oracle: GraphOracle, o, table: ConeTypeTable,
            vertex_budget: int = 200_000) -> PeriodInfo:
    """Period and strong period of the walk on the graph of ``table``."""
    target_radius = 2 * table.probe_depth + len(oracle.alphabet.symbols)
    # grow the test ball until the target radius or the vertex budget
    dist = {o: 0}
    color = {o: 0}
    queue = deque([o])
    odd_edge = None
    radius_used = 0
    budget_hit = False
    while queue and odd_edge is None:
        v = queue.popleft()
        d = dist[v]
        if d >= target_radius:
            break
        for a, w in oracle.neighbors(v):
            if w not in dist:
                if len(dist) >= vertex_budget:
                    budget_hit = True
                    break
                dist[w] = d + 1
                color[w] = color[v] ^ 1
                radius_used = max(radius_used, d + 1)
                queue.append(w)
            elif color[w] == color[v]:
                odd_edge = (v, a, w)
                break
        else:
            continue
        break
    if odd_edge is not None:
        d = 1
        witness_d = {"odd_cycle_edge": [repr(odd_edge[0]), odd_edge[1],
                                        repr(odd_edge[2])]}
    else:
        d = 2
        # a partially scanned outermost layer is not certified
        verified = radius_used - 1 if budget_hit else min(target_radius,
                                                          radius_used)
        witness_d = {"bipartite_on_radius": max(verified, 0)}

    d_s = 2
    witness_s: dict = {"cone_types_bipartite": True}
    from .cones import _cone_region
    for piece in table.types:
        region = _cone_region(oracle, list(piece.boundary),
                              set(piece.parent_slice), table.probe_depth)
        conflict = _odd_cycle_in(lambda v: region.adj[v].items(),
                                 list(piece.boundary))
        if conflict is not None:
            d_s = 1
            witness_s = {"cone_type": piece.index,
                         "odd_cycle_edge": [repr(conflict[0]), conflict[1],
                                            repr(conflict[2])]}
            break
    if d == 2 and d_s == 1:
        raise WalkError("inconsistent periods: bipartite graph with an odd "
                        "cycle inside a cone")
    return PeriodInfo(d=d, d_s=d_s, witness={"d": witness_d, "d_s": witness_s})


# ---------------------------------------------------------------------------
# Radius-of-convergence estimation and asymptotic fits
# ---------------------------------------------------------------------------

def _aitken(seq: np.ndarray, rounds: int = 3) -> np.ndarray:
    x = np.asarray(seq, dtype=float)
    for _ in range(rounds):
        if len(x) < 3:
            break
        d1 = x[1:] - x[:-1]
        d2 = d1[1:] - d1[:-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            acc = x[2:] - d1[1:] ** 2 / d2
        acc = acc[np.isfinite(acc)]
        if len(acc) == 0:
            break
        x = acc
    return x


def estimate_Rmu(series: WalkSeries, stride: int = 2, tail: int = 400):
    """Aitken-accelerated ratio estimate of R_mu from the series tail.

    The ratio p^(n+stride)/p^(n) tends to R_mu^(-stride); the stride must be a
    multiple of the walk period (and of 2 in the oscillating regime).
    Returns (estimate, uncertainty).
    """
    v = series.values
    N = len(v) - 1
    start = series.distance % 2 if stride % 2 == 0 else 0
    ns = np.arange(start, N + 1, stride)
    ns = ns[v[ns] > 0]
    if len(ns) < 12:
        raise WalkError("series tail is zero on this residue class; "
                        "wrong residue class or too-short series")
    ns = ns[-(tail + 1):]
    ratios = v[ns[1:]] / v[ns[:-1]]
    acc = _aitken(ratios)
    est_ratio = float(acc[-1])
    if est_ratio <= 0:
        raise WalkError("ratio sequence is not positive; series too short")
    uncertainty_ratio = float(np.max(np.abs(acc[-min(5, len(acc)):] - est_ratio))) \
        + abs(float(ratios[-1]) - est_ratio) * 0.05
    R = series.scale * est_ratio ** (-1.0 / stride)
    dR = R * uncertainty_ratio / (stride * est_ratio)
    return R, max(dR, 1e-12)


@dataclass
class AsymptoticFit:
    """Weighted log-log regression of the series against the predicted form."""
    R_mu_used: float
    alpha: float
    alpha_se: float
    c: float
    c_se: float
    cbar: float
    cbar_se: float
    oscillating: bool
    window: tuple
    parity_intercepts: dict = field(default_factory=dict)
    residual_rms: float = 0.0


def _wls_loglog(ns, ys, weights):
    """Weighted least squares of y = intercept + slope * log(n)."""
    x = np.log(ns.astype(float))
    w = weights.astype(float)
    W = np.sum(w)
    xm = np.sum(w * x) / W
    ym = np.sum(w * ys) / W
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * (ys - ym)) / sxx
    intercept = ym - slope * xm
    resid = ys - intercept - slope * x
    dof = max(len(ns) - 2, 1)
    sigma2 = np.sum(w * resid ** 2) / dof * len(ns) / W
    se_slope = math.sqrt(sigma2 / sxx)
    se_intercept = math.sqrt(sigma2 * (1.0 / W + xm ** 2 / sxx))
    rms = math.sqrt(float(np.mean(resid ** 2)))
    return intercept, slope, se_intercept, se_slope, rms


def fit_asymptotics(series: WalkSeries, classification, period_info: PeriodInfo,
                    window_frac: float = 0.5) -> AsymptoticFit:
    """Fit log p^(n) + n log R_mu = log c - alpha log n on the tail window.

    In the oscillation regime (d = 1, d_s = 2) the even and odd subsequences
    are fitted separately; their intercepts give c and cbar with delta-method
    standard errors, and the oscillation flag requires the constants to differ
    beyond three standard errors. When d = d_s the split term is zero by the
    local limit structure and only the admissible residue class is fitted.
    """
    R_mu = classification.R_mu
    N = len(series.values) - 1
    lo = max(int(N * window_frac), 10)
    d, d_s = period_info.d, period_info.d_s

    def target(ns):
        vals = series.values[ns]
        mask = vals > 0
        ns = ns[mask]
        y = (np.log(vals[mask]) - ns * math.log(series.scale)
             + ns * math.log(R_mu))
        return ns, y

    def fit_class(residue):
        start = lo + ((residue - lo) % 2)
        ns = np.arange(start, N + 1, 2)
        ns, y = target(ns)
        if len(ns) < 20:
            raise WalkError("insufficient decay range for the asymptotic fit")
        return _wls_loglog(ns, y, ns.astype(float))

    if d == 2:
        residue = series.distance % 2
        i0, s0, sei0, ses0, rms = fit_class(residue)
        alpha, alpha_se = -s0, ses0
        c = math.exp(i0)
        c_se = c * sei0
        return AsymptoticFit(R_mu_used=R_mu, alpha=alpha, alpha_se=alpha_se,
                             c=c, c_se=c_se, cbar=0.0, cbar_se=0.0,
                             oscillating=False, window=(lo, N),
                             parity_intercepts={str(residue): (i0, sei0)},
                             residual_rms=rms)
    if d == 1 and d_s == 1:
        ns = np.arange(lo, N + 1)
        ns, y = target(ns)
        if len(ns) < 20:
            raise WalkError("insufficient decay range for the asymptotic fit")
        i0, s0, sei0, ses0, rms = _wls_loglog(ns, y, ns.astype(float))
        c = math.exp(i0)
        return AsymptoticFit(R_mu_used=R_mu, alpha=-s0, alpha_se=ses0,
                             c=c, c_se=c * sei0, cbar=0.0, cbar_se=0.0,
                             oscillating=False, window=(lo, N),
                             parity_intercepts={"all": (i0, sei0)},
                             residual_rms=rms)

    # d = 1, d_s = 2: even/odd split
    ie, se_, seie, sese, rms_e = fit_class(0)
    io, so, seio, seso, rms_o = fit_class(1)
    alpha_e, alpha_o = -se_, -so
    we, wo = 1.0 / max(sese, 1e-15) ** 2, 1.0 / max(seso, 1e-15) ** 2
    alpha = (alpha_e * we + alpha_o * wo) / (we + wo)
    alpha_se = max(math.sqrt(1.0 / (we + wo)), abs(alpha_e - alpha_o) / 2)
    Ce, Co = math.exp(ie), math.exp(io)
    se_Ce, se_Co = Ce * seie, Co * seio
    c = 0.5 * (Ce + Co)
    cbar = 0.5 * (Ce - Co)
    c_se = 0.5 * math.sqrt(se_Ce ** 2 + se_Co ** 2)
    cbar_se = c_se
    oscillating = abs(cbar) > 3.0 * cbar_se
    return AsymptoticFit(R_mu_used=R_mu, alpha=alpha, alpha_se=alpha_se,
                         c=c, c_se=c_se, cbar=cbar, cbar_se=cbar_se,
                         oscillating=oscillating, window=(lo, N),
                         parity_intercepts={"even": (ie, seie), "odd": (io, seio)},
                         residual_rms=0.5 * (rms_e + rms_o))


def splice_check(exact: WalkSeries, dp: WalkSeries, n_max: int,
                 rel_tol: float = 1e-12):
    """Verify the DP series against the ball-exact series on the overlap.

    Returns (ok, worst_relative_error)."""
    worst = 0.0
    for n in range(min(n_max, exact.n_max, dp.n_max) + 1):
        a = exact.probability(n)
        b = dp.probability(n)
        if a == 0.0 and b == 0.0:
            continue
        denom = max(abs(a), abs(b), 1e-300)
        worst = max(worst, abs(a - b) / denom)
    return worst <= rel_tol, worst