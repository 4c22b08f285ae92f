import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import ndtri

from replica_mi.errors import InvalidArgument
from replica_mi.prior import Prior, gauss_hermite, mmse, mutual_info, sample

ALL_PRIORS = {
    "gaussian": Prior.gaussian(1.3),
    "rademacher": Prior.rademacher(),
    "gauss_bernoulli": Prior.gauss_bernoulli(1.0, 0.1),
    "discrete": Prior.discrete([-1.0, 0.0, 2.0], [0.3, 0.5, 0.2]),
}


def _gauss_expect(f):
    """E f(Z) by adaptive quadrature; independent of the package's rules."""
    g = lambda z: f(z) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    return integrate.quad(g, -40, 40, epsabs=1e-14, epsrel=1e-13, limit=400)[0]


def _log_cosh(x):
    return float(np.logaddexp(x, -x)) - math.log(2.0)


# ---- closed-form and oracle values -------------------------------------------


def test_gaussian_closed_forms():
    p = Prior.gaussian(1.0)
    assert mutual_info(p, 1.0) == pytest.approx(0.5 * math.log(2), abs=1e-15)
    assert mmse(p, 1.0) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("prior", ALL_PRIORS.values(), ids=ALL_PRIORS)
def test_zero_snr(prior):
    assert mutual_info(prior, 0.0) == 0.0
    assert mmse(prior, 0.0) == prior.rho


def test_rademacher_mutual_info_matches_quad_oracle():
    r = 1.0
    oracle = r - _gauss_expect(lambda z: _log_cosh(r + math.sqrt(r) * z))
    assert mutual_info(Prior.rademacher(), r) == pytest.approx(oracle, abs=1e-10)


def test_rademacher_mmse_matches_quad_oracle():
    r = 2.0
    oracle = 1.0 - _gauss_expect(lambda z: math.tanh(r + math.sqrt(r) * z))
    assert mmse(Prior.rademacher(), r) == pytest.approx(oracle, abs=1e-10)


def test_rademacher_against_monte_carlo():
    # plain 1e6-sample MC has ~5e-4 standard error, too coarse for 1e-4;
    # one uniform per stratum keeps it unbiased with far smaller variance
    n = 1_000_000
    z = ndtri((np.arange(n) + np.random.default_rng(20240611).random(n)) / n)
    r = 1.0
    vals = r - (np.logaddexp(r + z, -(r + z)) - math.log(2))
    assert abs(mutual_info(Prior.rademacher(), r) - vals.mean()) <= 1e-4
    r = 2.0
    vals = 1 - np.tanh(r + math.sqrt(r) * z)
    assert abs(mmse(Prior.rademacher(), r) - vals.mean()) <= 1e-4


def test_discrete_against_quad_oracle():
    p = ALL_PRIORS["discrete"]
    a, logw = p.support
    w = np.exp(logw)
    r = 0.8

    def dens(y):
        return float(np.sum(w * np.exp(-0.5 * (y - math.sqrt(r) * a) ** 2))) / math.sqrt(2 * math.pi)

    h = integrate.quad(lambda y: -dens(y) * math.log(dens(y)), -30, 30, epsabs=1e-13, limit=400)[0]
    assert mutual_info(p, r) == pytest.approx(h - 0.5 * math.log(2 * math.pi * math.e), abs=1e-10)

    def err(y):
        c = w * np.exp(-0.5 * (y - math.sqrt(r) * a) ** 2) / math.sqrt(2 * math.pi)
        mean = np.dot(c, a) / c.sum()
        return float(np.dot(c, (a - mean) ** 2))

    assert mmse(p, r) == pytest.approx(integrate.quad(err, -30, 30, epsabs=1e-13, limit=400)[0], abs=1e-10)


@pytest.mark.parametrize("r", [0.01, 0.5, 3.0, 40.0, 1e4])
def test_gauss_bernoulli_against_quad_oracle(r):
    p = Prior.gauss_bernoulli(1.0, 0.2)
    s2 = 1 + r * 5.0
    slab = 5.0

    def logs(y):
        ln = math.log(0.8) - 0.5 * y * y
        ls = math.log(0.2) - 0.5 * y * y / s2 - 0.5 * math.log(s2)
        return ln, ls, float(np.logaddexp(ln, ls))

    def err(y):
        ln, ls, lp = logs(y)
        pi = math.exp(ls - lp)
        gain = math.sqrt(r) * slab / s2
        return math.exp(lp) / math.sqrt(2 * math.pi) * (pi * slab / s2 + pi * (1 - pi) * (gain * y) ** 2)

    def ent(y):
        lp = logs(y)[2] - 0.5 * math.log(2 * math.pi)
        return -math.exp(lp) * lp

    edge = 12 * math.sqrt(s2)
    pieces = [(-edge, -30), (-30, 30), (30, edge)] if edge > 30 else [(-edge, edge)]
    ref_mmse = sum(integrate.quad(err, a, b, epsabs=1e-15, limit=500)[0] for a, b in pieces)
    ref_h = sum(integrate.quad(ent, a, b, epsabs=1e-15, limit=500)[0] for a, b in pieces)
    assert mmse(p, r) == pytest.approx(ref_mmse, rel=1e-8, abs=1e-13)
    assert mutual_info(p, r) == pytest.approx(ref_h - 0.5 * math.log(2 * math.pi * math.e), abs=1e-9)


@pytest.mark.parametrize("r", [0.0, 0.1, 1.0, 7.0, 30.0, 100.0])
def test_gaussian_via_quadrature_path(r):
    # gauss_bernoulli with sparsity 1 is a Gaussian integrated numerically
    q = Prior.gauss_bernoulli(1.7, 1.0)
    assert mutual_info(q, r) == pytest.approx(0.5 * math.log1p(1.7 * r), abs=1e-8)
    assert mmse(q, r) == pytest.approx(1.7 / (1 + 1.7 * r), abs=1e-8)


@pytest.mark.parametrize("r, tol", [(0.1, 1e-10), (1.0, 1e-8), (4.0, 1e-5)])
def test_gauss_hermite_route_agrees_for_discrete(r, tol):
    # the fixed-order noise rule loses accuracy as the atoms separate in y
    p = ALL_PRIORS["discrete"]
    quad = gauss_hermite(61)
    assert mutual_info(p, r, quad) == pytest.approx(mutual_info(p, r), abs=tol)
    assert mmse(p, r, quad) == pytest.approx(mmse(p, r), abs=tol)


# ---- properties ------------------------------------------------------------


@pytest.mark.parametrize("prior", ALL_PRIORS.values(), ids=ALL_PRIORS)
def test_i_mmse_relation(prior):
    for r in np.linspace(0.1, 5.0, 25):
        h = 1e-4
        d = (mutual_info(prior, r + h) - mutual_info(prior, r - h)) / (2 * h)
        assert d == pytest.approx(0.5 * mmse(prior, r), abs=1e-5)


@pytest.mark.parametrize("prior", ALL_PRIORS.values(), ids=ALL_PRIORS)
def test_mutual_info_monotone_concave(prior):
    grid = np.linspace(0.0, 8.0, 60)
    vals = np.array([mutual_info(prior, r) for r in grid])
    assert np.all(np.diff(vals) >= -1e-12)
    assert np.all(np.diff(vals, 2) <= 1e-8)


@pytest.mark.parametrize("prior", ALL_PRIORS.values(), ids=ALL_PRIORS)
def test_mmse_nonincreasing_and_bounded(prior):
    grid = np.geomspace(1e-3, 1e3, 50)
    vals = np.array([mmse(prior, r) for r in grid])
    assert np.all(np.diff(vals) <= 1e-12)
    assert np.all((vals >= 0) & (vals <= prior.rho))


@pytest.mark.parametrize("name", ["rademacher", "discrete"])
def test_mmse_vanishes_for_discrete(name):
    assert mmse(ALL_PRIORS[name], 400.0) < 1e-20


def test_large_snr_does_not_underflow():
    for prior in ALL_PRIORS.values():
        assert math.isfinite(mutual_info(prior, 1e6))
        assert math.isfinite(mmse(prior, 1e6))


@pytest.mark.parametrize("bad", [math.inf, math.nan, -1.0])
def test_invalid_snr(bad):
    with pytest.raises(InvalidArgument):
        mutual_info(Prior.rademacher(), bad)
    with pytest.raises(InvalidArgument):
        mmse(Prior.rademacher(), bad)


# ---- quadrature rule ---------------------------------------------------------


@pytest.mark.parametrize("order", [40, 61])
def test_gauss_hermite_moments(order):
    quad = gauss_hermite(order)
    for k in range(0, 21):
        exact = 0.0 if k % 2 else float(math.prod(range(k - 1, 0, -2)))
        got = float(quad.expect(quad.nodes ** k))
        # odd moments cancel between large terms; measure against their size
        scale = float(quad.expect(np.abs(quad.nodes) ** k))
        assert abs(got - exact) <= 1e-10 * scale


def test_gauss_hermite_rejects_order_zero():
    with pytest.raises(InvalidArgument):
        gauss_hermite(0)


# ---- construction and sampling --------------------------------------------


def test_prior_validation():
    with pytest.raises(InvalidArgument):
        Prior.discrete([0.0, 1.0], [0.5, 0.6])
    with pytest.raises(InvalidArgument):
        Prior("discrete", 2.0, 1.0, (-1.0, 1.0), (0.5, 0.5))  # wrong rho
    with pytest.raises(InvalidArgument):
        Prior("discrete", 4.0, 1.0, (-2.0, 2.0), (0.5, 0.5))  # atom outside bound
    with pytest.raises(InvalidArgument):
        Prior.gauss_bernoulli(1.0, 0.0)
    with pytest.raises(InvalidArgument):
        Prior("laplace", 1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0.01, 1.0)), min_size=1, max_size=5))
def test_discrete_rho_is_second_moment(pairs):
    atoms = [a for a, _ in pairs]
    raw = np.array([w for _, w in pairs])
    weights = list(raw / raw.sum())
    weights[-1] = 1.0 - math.fsum(weights[:-1])
    p = Prior.discrete(atoms, weights)
    assert p.rho == pytest.approx(float(np.dot(weights, np.square(atoms))), abs=1e-10)
    assert 0.0 <= mmse(p, 1.0) <= p.rho + 1e-15


def test_sample_support_and_moments():
    assert set(sample(Prior.rademacher(), 4, 3)) <= {-1.0, 1.0}
    g = sample(Prior.gaussian(1.0), 100_000, 4)
    assert abs(np.mean(g**2) - 1.0) < 0.02
    d = sample(Prior.discrete([0.0, 3.0], [2 / 3, 1 / 3]), 100_000, 5)
    assert abs(d.mean() - 1.0) < 0.02
    gb = sample(Prior.gauss_bernoulli(2.0, 0.25), 200_000, 6)
    assert abs(np.mean(gb != 0) - 0.25) < 0.01
    assert abs(np.mean(gb**2) - 2.0) < 0.05


def test_sample_deterministic():
    p = ALL_PRIORS["discrete"]
    assert np.array_equal(sample(p, 50, 9), sample(p, 50, 9))
    assert not np.array_equal(sample(p, 50, 9), sample(p, 50, 10))
    with pytest.raises(InvalidArgument):
        sample(p, 0, 1)
