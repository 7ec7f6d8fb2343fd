import math

import numpy as np
import pytest

from conewalk.genfun import (DIVERGED, GenFunError, SpectralError,
                             StepDistribution, build_Q, build_system, classify,
                             eval_essential, find_R, green_values, lambda_at,
                             lambda_prime_check, matrix_irreducible, pf_eigen)
from conewalk.grammar import all_series_coefficients

from oracle_utils import (aitken_limit, f2_cone_restricted_green,
                          halfline_restricted_green)

R_F2 = 2.0 / math.sqrt(3.0)
R_Z222 = 3.0 / (2.0 * math.sqrt(2.0))


# -- step distributions --------------------------------------------------------

def test_step_distribution_validation():
    with pytest.raises(GenFunError):
        StepDistribution({"a": 0.5, "A": -0.5})
    with pytest.raises(GenFunError):
        StepDistribution({"a": 0.5, "A": 0.6})
    mu = StepDistribution({"a": 0.5, "A": 0.5})
    assert mu.of("a") == 0.5
    with pytest.raises(GenFunError):
        mu.of("b")


def test_uniform_distribution(store):
    mu = StepDistribution.uniform(store.oracle("f2").alphabet)
    assert mu.of("a") == 0.25
    assert math.fsum(mu.weights.values()) == pytest.approx(1.0, abs=1e-15)


def test_distribution_alphabet_mismatch(store):
    mu = StepDistribution({"a": 0.5, "A": 0.5})
    with pytest.raises(GenFunError):
        mu.complete_for(store.oracle("f2").alphabet)


# -- essential system -----------------------------------------------------------

def test_system_terms_mirror_productions(store):
    for name in ("f2", "halfline", "xz222r", "ladder"):
        g = store.grammar(name)
        sys_ = store.system(name)
        ess = set(g.essential)
        lin_ess = sum(1 for p in g.productions
                      if p.kind == "linear" and p.lhs in ess)
        quad_ess = sum(1 for p in g.productions
                       if p.kind == "quadratic" and p.lhs in ess)
        lin_v0 = sum(1 for p in g.productions
                     if p.kind == "linear" and p.lhs not in ess)
        quad_v0 = sum(1 for p in g.productions
                      if p.kind == "quadratic" and p.lhs not in ess)
        assert len(sys_.lin_rows) == lin_ess
        assert len(sys_.quad_rows) == quad_ess
        assert len(sys_.q_lin) == lin_v0
        assert len(sys_.q_quad) == quad_v0


def test_essential_value_at_zero_is_delta(store):
    sys_ = store.system("halfline")
    f0 = eval_essential(sys_, 0.0)
    assert np.allclose(f0, [1.0, 1.0])
    lad = store.system("ladder")
    f0 = eval_essential(lad, 0.0)
    delta = np.array([lad.grammar.delta[v] for v in lad.ess_vars], dtype=float)
    assert np.array_equal(f0, delta)


def test_halfline_essential_value_matches_restricted_inversion(store):
    # independent oracle: truncated restricted-walk inversion on the ray,
    # Richardson-extrapolated in the truncation length
    oracle_value = halfline_restricted_green(1.0, 200)
    assert oracle_value == pytest.approx(2.0, abs=2e-3)
    f1 = eval_essential(store.system("halfline"), 1.0)
    assert f1 is not DIVERGED
    assert float(f1[0]) == pytest.approx(oracle_value, abs=2e-3)
    assert float(f1[0]) == pytest.approx(2.0, abs=1e-5)
    assert float(f1[1]) == pytest.approx(2.0, abs=1e-5)


def test_f2_essential_value_matches_restricted_inversion(store):
    # the cone-restricted return series sums to 4/3 at z = 1: first return to
    # the boundary word inside the cone is 3/4 * 1/3 = 1/4
    oracle_value = f2_cone_restricted_green(1.0, 12)
    assert oracle_value == pytest.approx(4.0 / 3.0, abs=1e-5)
    f1 = eval_essential(store.system("f2"), 1.0)
    for v in f1:
        assert float(v) == pytest.approx(oracle_value, abs=2e-6)
        assert float(v) == pytest.approx(4.0 / 3.0, rel=1e-9)


def test_essential_monotone_in_z(store):
    sys_ = store.system("f2")
    R = store.classification("f2").R
    prev = np.zeros(sys_.ess_size)
    for z in np.linspace(0.0, R * 0.999, 12):
        cur = eval_essential(sys_, float(z))
        assert cur is not DIVERGED
        assert np.all(cur >= prev - 1e-12)
        prev = cur


def test_divergence_is_an_upset(store):
    sys_ = store.system("f2")
    R = store.classification("f2").R
    assert eval_essential(sys_, R * 1.05) is DIVERGED
    assert eval_essential(sys_, R * 2.0) is DIVERGED
    with pytest.raises(GenFunError):
        eval_essential(sys_, -0.5)


# -- find_R ---------------------------------------------------------------------

def test_find_R_halfline(store):
    res = find_R(store.system("halfline"))
    assert res.R == pytest.approx(1.0, abs=1e-8)
    assert res.certificate["jacobian_spectral_radius_at_R"] == \
        pytest.approx(1.0, abs=1e-3)
    lo, hi = res.certificate["bracket"]
    assert lo <= res.R <= hi and hi - lo <= 1e-11


def test_find_R_f2_against_closed_form_and_ratio_oracle(store):
    res = find_R(store.system("f2"))
    assert res.R == pytest.approx(R_F2, abs=1e-6)
    # independent ratio oracle on an essential series
    ess = all_series_coefficients(store.grammar("f2"), store.mu("f2"), 5000,
                                  scale=R_F2)[(1, 0, 0)]
    ratios = ess[3000::2][1:] / ess[3000:-2:2]
    limit = aitken_limit(ratios[-200:])
    R_ratio = R_F2 / math.sqrt(limit)
    assert abs(R_ratio - res.R) <= 2e-3


def test_find_R_z222(store):
    res = find_R(store.system("z222"))
    assert res.R == pytest.approx(R_Z222, abs=1e-6)


def test_find_R_reports_missing_bracket():
    # a linear-only system converges everywhere below its pole; a huge z_max
    # is reported as a configuration problem rather than looping forever
    sys_ = store_free = None
    # construct from the half-line but cap z_max below R
    # (z_max smaller than the first divergence point)
    # reuse conftest store via fixture-free local build
    from conftest import CASES
    from conewalk.cones import assign_types
    from conewalk.grammar import build_grammar
    oracle = CASES["halfline"].build()
    table = assign_types(oracle)
    grammar = build_grammar(table)
    sys_ = build_system(grammar, StepDistribution.uniform(oracle.alphabet))
    with pytest.raises(GenFunError, match="z_max"):
        find_R(sys_, z_max=0.5)


# -- Q matrix and spectra ---------------------------------------------------------

def test_build_Q_zero_at_origin(store):
    sys_ = store.system("halfline")
    Q0 = build_Q(sys_, 0.0, eval_essential(sys_, 0.0))
    assert np.array_equal(Q0, np.zeros((1, 1)))


def test_halfline_q_at_one_is_exactly_one(store):
    # mu(r) z + mu(s)^2 z^2 f = 1/2 + (1/4) * 2 = 1
    sys_ = store.system("halfline")
    f1 = eval_essential(sys_, 1.0)
    q = build_Q(sys_, 1.0, f1)
    assert q.shape == (1, 1)
    assert float(q[0, 0]) == pytest.approx(1.0, abs=1e-6)
    oracle_f = halfline_restricted_green(1.0, 200)
    assert 0.5 + 0.25 * oracle_f == pytest.approx(1.0, abs=1e-3)


def test_f2_q_at_one(store):
    # four bridge terms, no loops: q(1) = 4 * (1/16) * (4/3) = 1/3
    sys_ = store.system("f2")
    q = build_Q(sys_, 1.0, eval_essential(sys_, 1.0))
    assert float(q[0, 0]) == pytest.approx(1.0 / 3.0, rel=1e-9)


def test_pf_eigen_one_by_one():
    lam, v, w = pf_eigen(np.array([[0.75]]))
    assert lam == 0.75
    assert v.tolist() == [1.0] and w.tolist() == [1.0]


def test_pf_eigen_swap_matrix():
    lam, v, w = pf_eigen(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert lam == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(v, [0.5, 0.5], atol=1e-10)
    assert np.allclose(w, [1.0, 1.0], atol=1e-10)
    assert np.dot(v, np.ones(2)) == pytest.approx(1.0, abs=1e-12)
    assert np.dot(v, w) == pytest.approx(1.0, abs=1e-12)


def test_pf_eigen_general_two_by_two():
    M = np.array([[0.0, 2.0], [3.0, 0.0]])
    lam, v, w = pf_eigen(M)
    assert lam == pytest.approx(math.sqrt(6.0), rel=1e-11)
    assert np.allclose(M @ w, lam * w, rtol=1e-9)
    assert np.allclose(v @ M, lam * v, rtol=1e-9)


def test_pf_eigen_rejects_reducible():
    with pytest.raises(SpectralError, match="reducible"):
        pf_eigen(np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(SpectralError):
        pf_eigen(np.array([[1.0, -1.0], [1.0, 1.0]]))
    with pytest.raises(SpectralError):
        pf_eigen(np.array([[1.0, 2.0, 3.0]]))


def test_matrix_irreducible():
    assert matrix_irreducible(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert not matrix_irreducible(np.array([[1.0, 1.0], [0.0, 1.0]]))


# -- eigenvalue derivative identity -----------------------------------------------

@pytest.mark.parametrize("name,z_frac", [("halfline", 0.5), ("f2", 0.69)])
def test_lambda_prime_identity(store, name, z_frac):
    residual = lambda_prime_check(store.system(name), z_frac)
    assert residual <= 1e-5


# -- classification ----------------------------------------------------------------

def test_classify_halfline_boundary_case(store):
    cls = store.classification("halfline")
    assert cls.case == "b"
    assert cls.R_mu == pytest.approx(1.0, abs=1e-6)
    assert abs(cls.lambda_at_R - 1.0) <= 1e-6
    assert not cls.irreducible_caveat


def test_classify_f2_square_root_case(store):
    cls = store.classification("f2")
    assert cls.case == "c"
    assert cls.R_mu == pytest.approx(R_F2, abs=1e-3)
    assert cls.lambda_at_R == pytest.approx(2.0 / 3.0, abs=1e-6)


def test_classify_z222(store):
    cls = store.classification("z222")
    assert cls.case == "c"
    assert cls.R_mu == pytest.approx(R_Z222, abs=1e-6)
    assert cls.lambda_at_R == pytest.approx(0.75, abs=1e-6)


def test_classify_z_line_carries_caveat(store):
    cls = store.classification("z")
    assert cls.case == "b"
    assert cls.R_mu == pytest.approx(1.0, abs=1e-6)
    assert cls.irreducible_caveat


def test_classify_case_a_simple_pole(store):
    cls = store.classification("xf3ab_heavy")
    assert cls.case == "a"
    assert cls.lambda_at_R > 1.0 + 1e-3
    assert cls.R_mu < cls.R - 1e-4
    lo, hi = cls.certificates["pole_bracket"]
    assert lo <= cls.R_mu <= hi
    # lambda crosses 1 exactly at R_mu
    assert lambda_at(store.system("xf3ab_heavy"), cls.R_mu * 0.999) < 1.0
    assert lambda_at(store.system("xf3ab_heavy"), cls.R_mu * 1.001) > 1.0


def test_case_a_pole_residue_stabilizes(store):
    cls = store.classification("xf3ab_heavy")
    sys_ = store.system("xf3ab_heavy")
    samples = []
    for k in (2, 3, 4, 5):
        z = cls.R_mu * (1.0 - 10.0 ** (-k))
        lam = lambda_at(sys_, z)
        samples.append((1.0 - lam) * float(green_values(sys_, z)[0]))
    assert all(s > 0 for s in samples)
    assert samples[-1] == pytest.approx(samples[-2], rel=0.05)


def test_lambda_monotone_on_grid(store):
    sys_ = store.system("halfline")
    R = store.classification("halfline").R
    vals = [lambda_at(sys_, R * k / 51.0) for k in range(1, 51)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_green_values_match_scalar_formula(store):
    sys_ = store.system("halfline")
    z = 0.5
    q = float(build_Q(sys_, z, eval_essential(sys_, z))[0, 0])
    assert float(green_values(sys_, z)[0]) == pytest.approx(1.0 / (1.0 - q),
                                                            rel=1e-12)
