"""Generating-function system of the grammar and its singularity analysis.

The grammar's series satisfy the algebraic fixed-point system given by the
production shapes: each variable T has the polynomial

    Pol_T(z; y) = delta_T + sum mu(a) z y_U + sum mu(a) mu(b) z^2 y_V y_U

over its productions. The system splits into the nonlinear *essential* part
(all cone-type variables; closed under its own right-hand sides) and a linear
layer for the root variables: f0(z) = e + Q(z) f0(z), where Q(z) collects the
linear coefficients mu(a) z and the bridge terms mu(a) mu(b) z^2 f_V(z).

``find_R`` locates the common radius of convergence R of the essential system
(divergence onset of the monotone fixed-point iteration, certified by the
spectral radius of its Jacobian), and ``classify`` compares the Perron root
lambda(z) of Q(z) at R against 1:

    lambda(R) > 1  -> simple pole of the Green functions at R_mu < R,
    lambda(R) = 1  -> inverse-square-root singularity at R_mu = R,
    lambda(R) < 1  -> square-root singularity at R_mu = R.

lambda(R) is obtained by extrapolating through the square-root branch point
(samples at R - eps fitted against sqrt(eps)), because a naive evaluation at
a bisected R systematically under-reads it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grammar import Grammar


class GenFunError(ValueError):
    pass


class SpectralError(GenFunError):
    """Perron-Frobenius analysis applied to a reducible matrix."""


class _Diverged:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "DIVERGED"


DIVERGED = _Diverged()


@dataclass(frozen=True)
class StepDistribution:
    """Strictly positive step weights mu(a), summing to 1 (within 1e-12)."""

    weights: dict

    def __post_init__(self):
        for a, w in self.weights.items():
            if not (w > 0):
                raise GenFunError(f"step weight mu({a!r}) = {w} must be positive")
        total = math.fsum(self.weights.values())
        if abs(total - 1.0) > 1e-12:
            raise GenFunError(f"step weights sum to {total}, expected 1")

    @classmethod
    def uniform(cls, alphabet) -> "StepDistribution":
        k = len(alphabet.symbols)
        return cls({a: 1.0 / k for a in alphabet.symbols})

    def of(self, a: str) -> float:
        try:
            return self.weights[a]
        except KeyError:
            raise GenFunError(f"no step weight for label {a!r}") from None

    def complete_for(self, alphabet):
        missing = [a for a in alphabet.symbols if a not in self.weights]
        extra = [a for a in self.weights if a not in alphabet.symbols]
        if missing or extra:
            raise GenFunError(
                f"step distribution does not match the alphabet "
                f"(missing {missing}, unknown {extra})")
        return self


@dataclass
class GenFunSystem:
    """Index-array form of the fixed-point system, split as described above."""

    grammar: Grammar = field(repr=False)
    mu: StepDistribution
    ess_vars: tuple
    v0_vars: tuple
    ess_delta: np.ndarray
    # essential polynomials: rows over ess_vars
    lin_rows: np.ndarray
    lin_cols: np.ndarray
    lin_w: np.ndarray
    quad_rows: np.ndarray
    quad_v: np.ndarray
    quad_u: np.ndarray
    quad_w: np.ndarray
    # linear layer: rows/cols over v0_vars, bridge terms reference ess columns
    v0_delta: np.ndarray
    q_lin: list
    q_quad: list

    @property
    def ess_size(self):
        return len(self.ess_vars)

    @property
    def v0_size(self):
        return len(self.v0_vars)


def build_system(grammar: Grammar, mu: StepDistribution) -> GenFunSystem:
    mu = mu if isinstance(mu, StepDistribution) else StepDistribution(dict(mu))
    mu.complete_for(grammar.alphabet)
    ess = grammar.essential
    v0 = grammar.v0
    ess_index = {v: i for i, v in enumerate(ess)}
    v0_index = {v: i for i, v in enumerate(v0)}
    lin = ([], [], [])
    quad = ([], [], [], [])
    q_lin = []
    q_quad = []
    for p in grammar.productions:
        if p.kind == "eps":
            continue
        if p.lhs in ess_index:
            if p.kind == "linear":
                if p.u not in ess_index:
                    raise GenFunError("essential equation references a root variable")
                lin[0].append(ess_index[p.lhs])
                lin[1].append(ess_index[p.u])
                lin[2].append(mu.of(p.a))
            else:
                quad[0].append(ess_index[p.lhs])
                quad[1].append(ess_index[p.v])
                quad[2].append(ess_index[p.u])
                quad[3].append(mu.of(p.a) * mu.of(p.b))
        else:
            if p.kind == "linear":
                if p.u not in v0_index:
                    raise GenFunError("root equation chains into an essential variable")
                q_lin.append((v0_index[p.lhs], v0_index[p.u], mu.of(p.a)))
            else:
                if p.v not in ess_index or p.u not in v0_index:
                    raise GenFunError("root bridge term is not (essential, root)")
                q_quad.append((v0_index[p.lhs], ess_index[p.v], v0_index[p.u],
                               mu.of(p.a) * mu.of(p.b)))
    return GenFunSystem(
        grammar=grammar, mu=mu, ess_vars=ess, v0_vars=v0,
        ess_delta=np.array([grammar.delta[v] for v in ess], dtype=float),
        lin_rows=np.array(lin[0], dtype=int), lin_cols=np.array(lin[1], dtype=int),
        lin_w=np.array(lin[2], dtype=float),
        quad_rows=np.array(quad[0], dtype=int), quad_v=np.array(quad[1], dtype=int),
        quad_u=np.array(quad[2], dtype=int), quad_w=np.array(quad[3], dtype=float),
        v0_delta=np.array([grammar.delta[v] for v in v0], dtype=float),
        q_lin=q_lin, q_quad=q_quad)


# ---------------------------------------------------------------------------
# Essential system evaluation
# ---------------------------------------------------------------------------

def apply_polynomials(sys: GenFunSystem, z: float, y: np.ndarray) -> np.ndarray:
    out = sys.ess_delta.copy()
    n = sys.ess_size
    if len(sys.lin_rows):
        out += np.bincount(sys.lin_rows, weights=sys.lin_w * z * y[sys.lin_cols],
                           minlength=n)
    if len(sys.quad_rows):
        out += np.bincount(sys.quad_rows,
                           weights=sys.quad_w * (z * z) * y[sys.quad_v] * y[sys.quad_u],
                           minlength=n)
    return out


def essential_jacobian(sys: GenFunSystem, z: float, y: np.ndarray) -> np.ndarray:
    n = sys.ess_size
    J = np.zeros((n, n))
    if len(sys.lin_rows):
        np.add.at(J, (sys.lin_rows, sys.lin_cols), sys.lin_w * z)
    if len(sys.quad_rows):
        zz = z * z
        np.add.at(J, (sys.quad_rows, sys.quad_v), sys.quad_w * zz * y[sys.quad_u])
        np.add.at(J, (sys.quad_rows, sys.quad_u), sys.quad_w * zz * y[sys.quad_v])
    return J


def _spectral_radius(J: np.ndarray) -> float:
    if J.size == 0:
        return 0.0
    return float(max(abs(np.linalg.eigvals(J))))


_CONVERGED, _DIVERGED, _STALLED = "converged", "diverged", "stalled"


def _try_newton(sys, z, y0, tol, bound, rho_margin=1e-6, steps=120):
    """Newton refinement from a monotone under-approximation.

    For these monotone quadratic systems Newton from below converges to the
    minimal fixed point whenever one exists (linearly even at the branch
    point); a residual that stalls above tol is a no-solution signal handled
    by the caller."""
    y = y0.copy()
    eye = np.eye(sys.ess_size)
    for _ in range(steps):
        f = apply_polynomials(sys, z, y)
        r = f - y
        if float(np.max(np.abs(r))) < tol:
            if _spectral_radius(essential_jacobian(sys, z, y)) <= 1.0 + rho_margin:
                return y
            return None
        J = essential_jacobian(sys, z, y)
        try:
            step = np.linalg.solve(eye - J, r)
        except np.linalg.LinAlgError:
            return None
        y = y + step
        if not np.all(np.isfinite(y)) or float(np.max(y)) > bound or np.any(y < -1e-9):
            return None
    return None


def _solve_essential(sys: GenFunSystem, z: float, tol: float, max_iter: int,
                     bound: float, newton_every: int = 400):
    """Monotone Kleene iteration with periodic Newton acceleration.

    Returns (status, y): converged (fixed point to tol), diverged (certified
    by value blow-up or by rho(J) > 1 at a monotone under-approximation),
    or stalled (budget exhausted without either certificate).
    """
    n = sys.ess_size
    y = np.zeros(n)
    if z == 0.0:
        return _CONVERGED, sys.ess_delta.copy()
    iters = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while iters < max_iter:
            batch = min(newton_every, max_iter - iters)
            for _ in range(batch):
                y = apply_polynomials(sys, z, y)
            iters += batch
            if not np.all(np.isfinite(y)) or float(np.max(y)) > bound:
                return _DIVERGED, None
            nxt = apply_polynomials(sys, z, y)
            step = float(np.max(np.abs(nxt - y)))
            y = nxt
            if step < tol:
                return _CONVERGED, y
            # monotone iterates stay below any fixed point, and J is monotone
            # in y: rho > 1 here certifies that no fixed point exists at this z
            if _spectral_radius(essential_jacobian(sys, z, y)) > 1.0 + 1e-9:
                return _DIVERGED, None
            refined = _try_newton(sys, z, y, tol, bound)
            if refined is not None:
                return _CONVERGED, refined
    return _STALLED, y


def eval_essential(sys: GenFunSystem, z: float, tol: float = 1e-14,
                   max_iter: int = 1_000_000, bound: float = 1e12):
    """Minimal nonnegative solution of the essential system at z, or DIVERGED.

    Iterates y <- Pol(z; y) from 0 (monotone nondecreasing), with Newton
    acceleration; when the iteration budget runs out, the spectral radius of
    the Jacobian at the last monotone iterate decides between slow
    convergence (value returned) and divergence.
    """
    if z < 0:
        raise GenFunError("z must be >= 0")
    status, y = _solve_essential(sys, z, tol, max_iter, bound)
    if status == _CONVERGED:
        return y
    if status == _DIVERGED:
        return DIVERGED
    rho = _spectral_radius(essential_jacobian(sys, z, y))
    return y if rho <= 1.0 else DIVERGED


# ---------------------------------------------------------------------------
# Radius of convergence of the essential system
# ---------------------------------------------------------------------------

@dataclass
class RResult:
    R: float
    certificate: dict


def find_R(sys: GenFunSystem, z_max: float = 64.0, abs_tol: float = 2e-12,
           predicate_iters: int = 4_000) -> RResult:
    """Divergence-onset bisection for the essential radius R.

    A point converges when the accelerated iteration finds the fixed point to
    full precision; a Newton stall right below machine-resolvable distance to
    the branch point is treated as divergence, which biases R by no more than
    the bisection tolerance. The certificate records the final bracket and the
    Jacobian spectral radius at the solution on the convergent side.
    """

    def converges(z):
        status, y = _solve_essential(sys, z, tol=1e-14, max_iter=predicate_iters,
                                     bound=1e12)
        return (status == _CONVERGED), y

    lo, y_lo = 0.0, sys.ess_delta.copy()
    hi = None
    z = 1.0
    while z <= z_max:
        ok, y = converges(z)
        if ok:
            lo, y_lo = z, y
            z *= 2.0
        else:
            hi = z
            break
    if hi is None:
        raise GenFunError(
            f"essential system still converges at z_max={z_max}; "
            f"increase z_max if the radius is expected to be larger")
    steps = 0
    while hi - lo > abs_tol:
        mid = 0.5 * (lo + hi)
        ok, y = converges(mid)
        if ok:
            lo, y_lo = mid, y
        else:
            hi = mid
        steps += 1
        if steps > 200:
            break
    rho = _spectral_radius(essential_jacobian(sys, lo, y_lo)) if y_lo is not None else None
    return RResult(R=lo, certificate={
        "bracket": (lo, hi),
        "abs_tol": abs_tol,
        "bisection_steps": steps,
        "jacobian_spectral_radius_at_R": rho,
        "essential_values_at_R": None if y_lo is None else [float(v) for v in y_lo],
    })


# ---------------------------------------------------------------------------
# The linear layer Q(z) and Perron-Frobenius analysis
# ---------------------------------------------------------------------------

def build_Q(sys: GenFunSystem, z: float, fV: np.ndarray) -> np.ndarray:
    """Q(z) over the root variables, given the essential solution at z."""
    m = sys.v0_size
    Q = np.zeros((m, m))
    for (r, c, w) in sys.q_lin:
        Q[r, c] += w * z
    zz = z * z
    for (r, v, c, w) in sys.q_quad:
        Q[r, c] += w * zz * fV[v]
    return Q


def _positivity_components(M: np.ndarray):
    from .cones import _strong_components
    n = M.shape[0]
    edges = [(i, j) for i in range(n) for j in range(n) if i != j and M[i, j] > 0]
    return _strong_components(n, edges)


def matrix_irreducible(M: np.ndarray) -> bool:
    comp, ncomp = _positivity_components(M)
    return ncomp == 1


def pf_eigen(M, tol: float = 1e-12, max_iter: int = 200_000):
    """Perron root and left/right eigenvectors of a nonnegative irreducible matrix.

    Power iteration on M + I (primitive for irreducible M), to relative
    tolerance ``tol``; vectors normalized so <v, 1> = <v, w> = 1.
    Raises SpectralError on a reducible matrix, naming a zero block.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise SpectralError("matrix must be square")
    if np.any(M < 0):
        raise SpectralError("matrix must be nonnegative")
    n = M.shape[0]
    if n == 1:
        lam = float(M[0, 0])
        return lam, np.array([1.0]), np.array([1.0])
    comp, ncomp = _positivity_components(M)
    if ncomp > 1:
        blocks = [[i for i in range(n) if comp[i] == c] for c in range(ncomp)]
        a, b = blocks[0], blocks[-1]
        raise SpectralError(
            f"matrix is reducible: the block {M[np.ix_(a, b)].tolist()} linking "
            f"rows {a} to columns {b} is zero in one direction")

    S = M + np.eye(n)

    def dominant(mat):
        x = np.full(n, 1.0 / n)
        lam_prev = 0.0
        for _ in range(max_iter):
            x_new = mat @ x
            lam = float(np.max(x_new))
            x_new = x_new / lam
            if abs(lam - lam_prev) <= tol * max(1.0, abs(lam)) and \
                    float(np.max(np.abs(x_new - x))) <= tol:
                return lam, x_new
            x, lam_prev = x_new, lam
        return lam_prev, x

    lam_r, w = dominant(S)
    lam_l, v = dominant(S.T)
    lam = 0.5 * (lam_r + lam_l) - 1.0
    v = v / np.sum(v)
    w = w / float(np.dot(v, w))
    return lam, v, w


def lambda_at(sys: GenFunSystem, z: float, fV: np.ndarray | None = None) -> float:
    """Perron root of Q(z); evaluates the essential system when fV not given."""
    if fV is None:
        fV = eval_essential(sys, z)
        if fV is DIVERGED:
            raise GenFunError(f"essential system diverges at z={z}")
    Q = build_Q(sys, z, fV)
    if Q.shape[0] == 1:
        return float(Q[0, 0])
    lam, _v, _w = pf_eigen(Q)
    return lam


def lambda_prime_check(sys: GenFunSystem, z: float, h_rel: float = 1e-6) -> float:
    """Relative residual of lambda'(z) = v^t Q'(z) w against a finite difference.

    Q'(z) uses a central difference with step h_rel*z; the direct lambda
    derivative uses a central difference at twice that step.
    """
    if not (0 < z):
        raise GenFunError("z must be positive")
    h = h_rel * z

    def q_at(zz):
        fV = eval_essential(sys, zz)
        if fV is DIVERGED:
            raise GenFunError(f"essential system diverges at z={zz}")
        return build_Q(sys, zz, fV)

    Q = q_at(z)
    if Q.shape[0] == 1:
        lam_of = lambda zz: float(q_at(zz)[0, 0])
        v = w = np.array([1.0])
    else:
        def lam_of(zz):
            lam, _v, _w = pf_eigen(q_at(zz))
            return lam
        _lam, v, w = pf_eigen(Q)
    Qp = (q_at(z + h) - q_at(z - h)) / (2 * h)
    lhs = float(v @ Qp @ w)
    h2 = 2 * h
    rhs = (lam_of(z + h2) - lam_of(z - h2)) / (2 * h2)
    return abs(lhs - rhs) / max(abs(rhs), 1e-30)


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

@dataclass
class Classification:
    """Singularity classification of the Green functions.

    case "a": lambda(R) > 1, R_mu < R is a simple pole;
    case "b": lambda(R) = 1 (within tol), inverse-square-root at R_mu = R;
    case "c": lambda(R) < 1, square-root at R_mu = R.
    """
    R: float
    R_mu: float
    case: str
    lambda_at_R: float
    tol: float
    certificates: dict
    irreducible_caveat: bool = False


def _lambda_at_R_extrapolated(sys: GenFunSystem, R: float):
    """Extrapolate lambda(R) through the branch point: fit a + b sqrt(eps) + c eps."""
    eps_rel = (1e-5, 2.5e-6, 6.25e-7)
    samples = []
    for e in eps_rel:
        z = R * (1.0 - e)
        samples.append((e * R, lambda_at(sys, z)))
    A = np.array([[1.0, math.sqrt(e), e] for e, _l in samples])
    b = np.array([l for _e, l in samples])
    try:
        coef = np.linalg.solve(A, b)
        lam = float(coef[0])
    except np.linalg.LinAlgError:
        lam = samples[-1][1]
    return lam, samples


def classify(sys: GenFunSystem, tol: float = 1e-6,
             irreducible: bool = True) -> Classification:
    """Three-way singularity classification via the Perron root at R."""
    r_result = find_R(sys)
    R = r_result.R
    lam_R, samples = _lambda_at_R_extrapolated(sys, R)
    certificates = {
        "find_R": r_result.certificate,
        "lambda_extrapolation": [(float(e), float(l)) for e, l in samples],
    }
    if lam_R > 1.0 + tol:
        lo = R / 2
        while lambda_at(sys, lo) >= 1.0 and lo > 1e-12:
            lo /= 2
        hi = R * (1.0 - 1e-12)
        steps = 0
        while hi - lo > 1e-13 * R and steps < 200:
            mid = 0.5 * (lo + hi)
            if lambda_at(sys, mid) < 1.0:
                lo = mid
            else:
                hi = mid
            steps += 1
        R_mu = 0.5 * (lo + hi)
        certificates["pole_bracket"] = (lo, hi)
        case = "a"
    elif abs(lam_R - 1.0) <= tol:
        R_mu = R
        case = "b"
    else:
        R_mu = R
        case = "c"
    return Classification(R=R, R_mu=R_mu, case=case, lambda_at_R=lam_R, tol=tol,
                          certificates=certificates,
                          irreducible_caveat=not irreducible)


def green_values(sys: GenFunSystem, z: float) -> np.ndarray:
    """Green functions over the root variables: (I - Q(z))^{-1} e."""
    fV = eval_essential(sys, z)
    if fV is DIVERGED:
        raise GenFunError(f"essential system diverges at z={z}")
    Q = build_Q(sys, z, fV)
    eye = np.eye(sys.v0_size)
    return np.linalg.solve(eye - Q, sys.v0_delta)
