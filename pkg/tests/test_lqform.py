import itertools

import numpy as np
import pytest

from pagarch.errors import ParameterError
from pagarch.lqform import (
    GarchInnovations,
    IIDInnovations,
    LQProblem,
    MomentProfile,
    centering_block,
    check_conditions,
    clt_montecarlo,
    estimate_profile,
    garch11_profile,
    iid_profile,
    lq_mean,
    lq_variance,
)
from pagarch.model import Innovation

# ----------------------------------------------------------------- oracles


def exact_moments(problem, outcomes):
    """Mean and variance of the LQ form over a list of (prob, V) outcomes."""
    probs = np.array([p for p, _ in outcomes])
    vals = problem.evaluate(np.stack([v for _, v in outcomes]))
    mean = probs @ vals
    return mean, probs @ (vals - mean) ** 2


def iid_outcomes(values, probs, scales, n_periods):
    """Every realization of independent three-point draws, unit i scaled by scales[i]."""
    n = len(scales)
    out = []
    for idx in itertools.product(range(len(values)), repeat=n * n_periods):
        idx = np.array(idx).reshape(n, n_periods)
        p = np.prod(np.asarray(probs)[idx])
        out.append((p, np.asarray(values)[idx] * np.asarray(scales)[:, None]))
    return out


def leverage_paths(values, probs, n_periods):
    """Paths of v_t = s_t z_t, s_t = 2 if v_{t-1} > 0 else 1, stationary start."""
    values = np.asarray(values, float)
    probs = np.asarray(probs, float)
    p_up = probs[values > 0].sum()
    out = []
    for up0 in (True, False):
        p0 = p_up if up0 else 1.0 - p_up
        for idx in itertools.product(range(len(values)), repeat=n_periods):
            up, path, p = up0, [], p0
            for j in idx:
                v = (2.0 if up else 1.0) * values[j]
                path.append(v)
                p *= probs[j]
                up = v > 0
            out.append((p, np.array(path)))
    return out


def leverage_profile(values, probs, gap):
    """Exact gap-indexed moments of the leverage process by enumeration."""
    window = 2 * gap + 1
    paths = leverage_paths(values, probs, window)
    p = np.array([q for q, _ in paths])
    v = np.stack([x for _, x in paths])
    c = gap  # anchor period in the middle of the window
    e = lambda a: float(p @ a)  # noqa: E731
    s2 = e(v[:, c] ** 2)
    lags = range(-gap, gap + 1)
    vs = np.zeros(2 * gap + 1)
    vr = np.zeros(2 * gap + 1)
    pc = np.zeros(2 * gap + 1)
    vt = np.zeros((2 * gap + 1, 2 * gap + 1))
    for d in lags:
        if d == 0:
            continue
        vs[d + gap] = e(v[:, c] ** 2 * v[:, c - d] ** 2) - s2 * s2
        vr[d + gap] = e(v[:, c] ** 3 * v[:, c - d])
        pc[d + gap] = e(v[:, c] ** 2 * v[:, c - d])
        for d2 in lags:
            if d2 not in (0, d):
                vt[d + gap, d2 + gap] = e(v[:, c] ** 2 * v[:, c - d] * v[:, c - d2])
    return MomentProfile(
        [s2],
        e(v[:, c] ** 3),
        e(v[:, c] ** 4),
        gap,
        varsigma=vs[None],
        vartheta=vt[None],
        varrho=vr[None],
        pi_cross=pc[None],
    )


def random_three_point(rng):
    """Mean-zero three-point distribution with random support and weights."""
    a, c = rng.uniform(0.3, 2.0, 2)
    p_minus = rng.uniform(0.1, 0.6)
    p_plus = p_minus * a / c
    if p_plus + p_minus >= 0.95:
        scale = 0.9 / (p_plus + p_minus)
        p_plus, p_minus = p_plus * scale, p_minus * scale
    return (-a, 0.0, c), (p_minus, 1.0 - p_plus - p_minus, p_plus)


# ------------------------------------------------------------- exactness


@pytest.mark.parametrize("case", range(50))
def test_iid_three_point_matches_enumeration(case):
    rng = np.random.default_rng([2024, case])
    n = int(rng.integers(1, 4))
    t = int(rng.integers(1, 6 // n + 1))
    values, probs = random_three_point(rng)
    scales = rng.uniform(0.5, 1.5, n)
    m = rng.standard_normal((n * t, n * t))
    b = rng.standard_normal((n, t))
    prob = LQProblem.from_dense(m, n, t, b)
    v = np.asarray(values)
    p = np.asarray(probs)
    prof = iid_profile(scales**2 * (p @ v**2), scales**3 * (p @ v**3), scales**4 * (p @ v**4))
    mean, var = exact_moments(prob, iid_outcomes(values, probs, scales, t))
    assert lq_mean(prob, prof) == pytest.approx(mean, rel=1e-10, abs=1e-12)
    assert lq_variance(prob, prof) == pytest.approx(var, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize(
    "values,probs",
    [
        ((-1.0, 0.0, 1.0), (0.3, 0.4, 0.3)),  # symmetric: nonzero varsigma, vartheta, pi
        ((-1.0, 0.0, 2.0), (0.5, 0.25, 0.25)),  # skewed: adds E v^3 and varrho
    ],
)
@pytest.mark.parametrize("t", [2, 3, 4, 5])
def test_leverage_mds_matches_enumeration(values, probs, t):
    rng = np.random.default_rng([t, int(probs[0] * 10)])
    m = rng.standard_normal((t, t))
    b = rng.standard_normal((1, t))
    prob = LQProblem.from_dense(m, 1, t, b)
    prof = leverage_profile(values, probs, t - 1)
    assert np.any(prof.pi_cross) and np.any(prof.varsigma)
    assert np.any(prof.vartheta) == (t >= 3)  # needs two distinct earlier periods
    mean, var = exact_moments(prob, [(p, x[None]) for p, x in leverage_paths(values, probs, t)])
    assert lq_mean(prob, prof) == pytest.approx(mean, rel=1e-10)
    assert lq_variance(prob, prof) == pytest.approx(var, rel=1e-10)


def test_leverage_profile_is_mds():
    prof = leverage_profile((-1.0, 0.0, 2.0), (0.5, 0.25, 0.25), 3)
    g = prof.max_gap
    assert np.allclose(prof.pi_cross[0, :g], 0.0)
    assert np.allclose(prof.varrho[0, :g], 0.0)
    assert np.allclose(prof.vartheta[0, :g, :], 0.0)
    assert np.allclose(prof.varsigma[0], prof.varsigma[0, ::-1])
    assert np.any(prof.varrho[0, g + 1 :])


def test_two_units_leverage_blocks_with_cross_blocks():
    values, probs = (-1.0, 0.0, 2.0), (0.5, 0.25, 0.25)
    t = 2
    rng = np.random.default_rng(5)
    m = rng.standard_normal((2 * t, 2 * t))
    b = rng.standard_normal((2, t))
    prob = LQProblem.from_dense(m, 2, t, b)
    paths = leverage_paths(values, probs, t)
    outcomes = [(p1 * p2, np.stack([x1, x2])) for p1, x1 in paths for p2, x2 in paths]
    mean, var = exact_moments(prob, outcomes)
    prof = leverage_profile(values, probs, t - 1)
    assert lq_mean(prob, prof) == pytest.approx(mean, rel=1e-10)
    assert lq_variance(prob, prof) == pytest.approx(var, rel=1e-10)


def test_centering_normal_closed_form():
    # V'(I - ll'/T)V with N(0, s2) entries is s2 * chi2(T - 1)
    t, s2 = 7, 2.5
    prob = LQProblem.blockwise(centering_block(t), 3)
    prof = iid_profile(np.full(3, s2))
    assert lq_mean(prob, prof) == pytest.approx(3 * s2 * (t - 1))
    assert lq_variance(prob, prof) == pytest.approx(3 * 2 * s2**2 * (t - 1))


def test_dense_and_block_forms_agree(rng):
    m = rng.standard_normal((6, 6))
    prob = LQProblem.from_dense(m, 2, 3)
    assert np.array_equal(prob.to_dense(), m)
    v = rng.standard_normal((4, 2, 3))
    flat = v.reshape(4, 6)
    assert np.allclose(prob.evaluate(v), np.einsum("ri,ij,rj->r", flat, m, flat))


def test_block_shape_validation():
    with pytest.raises(ParameterError):
        LQProblem(2, 3, {(0, 0): np.eye(2)})
    with pytest.raises(ParameterError):
        LQProblem(2, 3, {(0, 5): np.eye(3)})


# ------------------------------------------------------------ profiles


def test_garch11_profile_matches_long_simulation():
    spec = GarchInnovations(omega=(1.5,), tau=(0.2,), nu=(0.4,), burn_in=500)
    paths = spec.draw(np.random.default_rng(0), 20, 50_000)
    est = estimate_profile(paths, max_gap=5, max_gap_triple=2)
    exact = spec.profile(1, max_gap=5)
    assert est.sigma2[0] == pytest.approx(exact.sigma2[0], rel=0.02)
    assert est.rho4[0] == pytest.approx(exact.rho4[0], rel=0.08)
    g = exact.max_gap
    for d in (1, 2, 3):
        assert est.varsigma[0, g + d] == pytest.approx(exact.varsigma[0, g + d], rel=0.2)
    assert abs(est.pi_cross[0, g + 1]) < 0.05


def test_garch11_profile_requires_fourth_moment():
    with pytest.raises(ParameterError):
        garch11_profile(0.5, 0.45, [1.0])


def test_iid_innovation_profiles():
    prof = IIDInnovations("t", df=8, sigma2=2.0).profile(3)
    assert np.allclose(prof.sigma2, 2.0)
    assert np.allclose(prof.rho4, 4.0 * Innovation("t", 8).fourth_moment)
    with pytest.raises(ParameterError):
        IIDInnovations("discrete", values=(1.0, 2.0), probs=(0.5, 0.5))


def test_profile_rejects_impossible_fourth_moment():
    with pytest.raises(ParameterError):
        MomentProfile([2.0], 0.0, [1.0])


# ------------------------------------------------------------ conditions


def test_conditions_for_centering_block():
    t = 40
    rep = check_conditions(LQProblem.blockwise(centering_block(t), 3), chi=5)
    assert rep.diag_square_mean == pytest.approx((1 - 1 / t) ** 2)
    assert rep.max_row_sum == pytest.approx((1 - 1 / t) + (t - 1) / t)
    assert rep.diag_variation == pytest.approx(0.0, abs=1e-15)
    assert rep.far_mass == pytest.approx(np.sum(np.abs(np.subtract.outer(range(t), range(t))) >= 5) / t**3)


def test_row_sum_check_flags_heavy_row():
    t = 30
    m = np.eye(t)
    m[3, :] = 1.0  # one row carrying mass T
    rep = check_conditions(LQProblem(1, t, {(0, 0): m}), thresholds={"max_row_sum": 5.0, "max_col_sum": 5.0})
    assert rep.max_row_sum == pytest.approx(t)
    assert rep.passed == {"max_row_sum": False, "max_col_sum": True}
    with pytest.raises(ParameterError):
        check_conditions(LQProblem(1, t, {(0, 0): m}), thresholds={"bogus": 1.0})


# ------------------------------------------------------------------ CLT


def test_clt_prefix_property_and_determinism():
    prob = LQProblem.blockwise(centering_block(5), 4, innovations=IIDInnovations())
    short = clt_montecarlo(prob, 1000, seed=3)
    long = clt_montecarlo(prob, 2000, seed=3)
    assert np.array_equal(long.standardized[:1000], short.standardized)
    assert np.array_equal(clt_montecarlo(prob, 1000, seed=3).standardized, short.standardized)


def test_clt_normal_centering_small():
    prob = LQProblem.blockwise(centering_block(20), 30, innovations=IIDInnovations())
    res = clt_montecarlo(prob, 2000, seed=1)
    assert abs(res.mean) < 0.1
    assert res.variance == pytest.approx(1.0, rel=0.1)
    assert res.ks_distance < 0.04


def test_clt_requires_innovations():
    with pytest.raises(ParameterError):
        clt_montecarlo(LQProblem.blockwise(np.eye(3), 2), 1000)
