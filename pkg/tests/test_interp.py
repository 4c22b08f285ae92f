import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial.hermite_e import hermegauss
from scipy import integrate

from replica_mi.errors import InvalidArgument
from replica_mi.gibbs import exact_mi, generate, log_partition
from replica_mi.interp import (
    InterpInstance,
    InterpPath,
    Quenched,
    boundary_check,
    derivative_check,
    draw_quenched,
    free_energy,
    hamiltonian,
    interp_mi,
    interp_mi_samples,
    load_path_table,
    shannon_gap,
)
from replica_mi.prior import Prior
from replica_mi.spectra import Ensemble

RADE = Prior.rademacher()
TERNARY = Prior.discrete([-1.0, 0.0, 1.0], [0.25, 0.5, 0.25])
PATH = InterpPath.constant(0.5, 0.5, (0.1, 0.1))


def within(a, b, k=3.0):
    return abs(a[0] - b[0]) <= k * math.hypot(a[1], b[1])


# ---- path ---------------------------------------------------------------------


def test_constant_path_integrals():
    p = InterpPath.constant(0.7, 0.3, (0.2, 0.05))
    for t in (0.0, 0.25, 1.0):
        assert p.R1(t) == pytest.approx(0.2 + 0.7 * t, abs=1e-15)
        assert p.R2(t) == pytest.approx(0.05 + 0.3 * t, abs=1e-15)


def test_linear_path_integral_is_exact():
    p = InterpPath.from_callables(lambda t: 2 * t, lambda t: 1 - t, knots=3)
    for t in (0.1, 0.5, 0.9):
        assert p.R1(t) == pytest.approx(t * t, abs=1e-15)
        assert p.R2(t) == pytest.approx(t - 0.5 * t * t, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0.0, 5.0), min_size=2, max_size=12),
    st.floats(0.0, 1.0),
    st.floats(0.0, 1.0),
)
def test_path_invariants(values, eps1, eps2):
    t = np.linspace(0.0, 1.0, len(values))
    p = InterpPath(t, np.array(values), np.array(values[::-1]), (eps1, eps2))
    assert p.R1(0.0) == eps1 and p.R2(0.0) == eps2
    grid = np.linspace(0.0, 1.0, 37)
    r1 = np.array([p.R1(s) for s in grid])
    r2 = np.array([p.R2(s) for s in grid])
    assert np.all(np.diff(r1) >= -1e-12) and np.all(np.diff(r2) >= -1e-12)
    assert p.R1(1.0) - eps1 == pytest.approx(float(integrate.trapezoid(values, t)), abs=1e-12)


def test_path_validation():
    with pytest.raises(InvalidArgument):
        InterpPath(np.array([0.0, 0.5]), np.ones(2), np.ones(2))
    with pytest.raises(InvalidArgument):
        InterpPath.constant(-1.0, 0.5)
    with pytest.raises(InvalidArgument):
        InterpPath.constant(1.0, 0.5, (0.1, -0.1))
    with pytest.raises(InvalidArgument):
        PATH.R1(1.5)
    with pytest.raises(InvalidArgument):
        InterpPath.constant(0.5, 2.0).check_prior(RADE)


def test_path_from_tables_merges_knots():
    p = InterpPath.from_tables((np.array([0.0, 1.0]), np.array([0.0, 2.0])),
                               (np.array([0.0, 0.5, 1.0]), np.array([1.0, 1.0, 0.0])))
    assert list(p.knots) == [0.0, 0.5, 1.0]
    assert p.r(0.5) == pytest.approx(1.0) and p.E(0.75) == pytest.approx(0.5)


def test_load_path_table(tmp_path):
    f = tmp_path / "r.txt"
    f.write_text("# t r\n0 0.1\n0.5, 0.3\n1 0.2  # end\n")
    t, v = load_path_table(f)
    assert list(t) == [0.0, 0.5, 1.0] and list(v) == [0.1, 0.3, 0.2]
    f.write_text("0 0.1\n1\n")
    with pytest.raises(InvalidArgument, match=":2:"):
        load_path_table(f)


# ---- Hamiltonian ------------------------------------------------------------------


def _instance(t=0.4, seed=3, ens=Ensemble("gaussian_product", 2, 2, 1), path=PATH):
    q = draw_quenched(RADE, ens, seed, 1.3)
    return q, InterpInstance.at(q, path, t)


def test_hamiltonian_vanishes_on_planted_noise_free_fit():
    q, _ = _instance()
    zero = Quenched(q.phi_prime, q.w, q.x, q.v, np.zeros(q.m), np.zeros(q.n))
    inst = InterpInstance.at(zero, PATH, 0.4)
    assert hamiltonian(inst, PATH, q.x, q.v) == pytest.approx(0.0, abs=1e-28)


def test_hamiltonian_at_t1_drops_the_phi_x_channel():
    q, inst = _instance(t=1.0)
    x2 = -q.x
    res = inst.y_t - math.sqrt(PATH.R2(1.0) / q.n) * q.phi_prime @ q.v
    side = inst.y_tilde_t - math.sqrt(PATH.R1(1.0)) * x2
    assert hamiltonian(inst, PATH, x2, q.v) == pytest.approx(0.5 * res @ res + 0.5 * side @ side, abs=1e-14)


def test_hamiltonian_hand_expansion():
    phi_p = np.array([[1.0, 2.0], [0.0, -1.0]])
    w = np.array([[0.5, -1.0], [1.5, 0.25]])
    q = Quenched(phi_p, w, np.array([1.0, -1.0]), np.array([0.3, -0.2]),
                 np.array([0.1, 0.4]), np.array([-0.5, 0.2]))
    path = InterpPath.constant(1.0, 0.5, (0.0, 0.0))
    t = 0.5
    inst = InterpInstance.at(q, path, t)
    x, v = np.array([-1.0, 1.0]), np.array([1.0, 0.0])
    # n = 2, R1 = 0.5, R2 = 0.25, so sqrt((1-t)/n) = 0.5 and sqrt(R2/n) = sqrt(1/8)
    phi = np.array([[3.5, -0.5], [-1.5, -0.25]])
    y = 0.5 * phi @ q.x + math.sqrt(0.125) * phi_p @ q.v + q.z
    yt = math.sqrt(0.5) * q.x + q.z_tilde
    r1 = y - 0.5 * phi @ x - math.sqrt(0.125) * phi_p @ v
    r2 = yt - math.sqrt(0.5) * x
    assert np.allclose(q.phi, phi, atol=0)
    assert hamiltonian(inst, path, x, v) == pytest.approx(0.5 * (r1 @ r1 + r2 @ r2), abs=1e-12)
    with pytest.raises(InvalidArgument):
        hamiltonian(inst, path, np.zeros(3), v)


@pytest.mark.parametrize("t", [0.0, 0.3, 1.0])
def test_free_energy_matches_direct_v_integral(t):
    """Sum over x and tensor Gauss-Hermite over v of exp(-H) directly."""
    ens = Ensemble("gaussian_product", 2, 3, 1)
    q = draw_quenched(TERNARY, ens, 17, 0.8)
    inst = InterpInstance.at(q, PATH, t)
    z, w = hermegauss(60)
    w = w / math.sqrt(2 * math.pi)
    atoms, probs = np.array([-1.0, 0.0, 1.0]), np.array([0.25, 0.5, 0.25])
    total = 0.0
    for xi in itertools.product(range(3), repeat=3):
        px = float(np.prod(probs[list(xi)]))
        x = atoms[list(xi)]
        for vi in itertools.product(range(60), repeat=2):
            total += px * float(np.prod(w[list(vi)])) * math.exp(-hamiltonian(inst, PATH, x, z[list(vi)]))
    assert free_energy(q, PATH, t, TERNARY) == pytest.approx(-math.log(total) / 3, abs=1e-11)


# ---- interpolating mutual information ------------------------------------------


def test_t0_eps0_is_the_original_problem_per_realization():
    ens = Ensemble("gaussian_product", 3, 5, 2)
    path = InterpPath.constant(0.7, 0.4)
    for s in range(4):
        q = draw_quenched(TERNARY, ens, s, 1.7)
        inst = generate(TERNARY, ens, 1.7, s)
        f = free_energy(q, path, 0.0, TERNARY) - 0.5 * float(q.z_tilde @ q.z_tilde) / ens.n
        assert f == pytest.approx(-log_partition(inst, TERNARY) / ens.n, abs=1e-13)


def test_t0_eps0_matches_exact_mi_in_mean():
    ens = Ensemble("gaussian_product", 4, 8, 1)
    path = InterpPath.constant(0.5, 0.5)
    a = interp_mi(RADE, ens, path, 0.0, 600, 1)
    b = exact_mi(RADE, ens, 1.0, 600, 2)
    assert within(a, b)


def test_side_channel_adds_information():
    ens = Ensemble("gaussian_product", 3, 6, 1)
    low = interp_mi_samples(RADE, ens, InterpPath.constant(0.5, 0.5), 0.0, 200, 4)
    high = interp_mi_samples(RADE, ens, InterpPath.constant(0.5, 0.5, (1.0, 0.0)), 0.0, 200, 4)
    diff = high - low
    assert diff.mean() > 3 * diff.std(ddof=1) / math.sqrt(diff.size)


def test_continuity_in_t():
    ens = Ensemble("gaussian_product", 3, 6, 1)
    h = 1e-3
    a = interp_mi_samples(TERNARY, ens, PATH, 0.5, 100, 6)
    b = interp_mi_samples(TERNARY, ens, PATH, 0.5 + h, 100, 6)
    assert np.max(np.abs(b - a)) <= 50 * h


def test_interp_validation():
    ens = Ensemble("gaussian_product", 3, 6, 1)
    with pytest.raises(InvalidArgument):
        interp_mi(Prior.gaussian(1.0), ens, PATH, 0.5, 10, 0)
    with pytest.raises(InvalidArgument):
        interp_mi(RADE, ens, PATH, 0.5, 0, 0)
    with pytest.raises(InvalidArgument):
        interp_mi(RADE, ens, InterpPath.constant(0.5, 1.5), 0.5, 10, 0)


def test_interp_thread_invariance():
    ens = Ensemble("gaussian_product", 3, 6, 2)
    a = interp_mi_samples(RADE, ens, PATH, 0.3, 30, 9, threads=1)
    b = interp_mi_samples(RADE, ens, PATH, 0.3, 30, 9, threads=4)
    assert np.array_equal(a, b)


# ---- t = 1 boundary ---------------------------------------------------------------


def test_boundary_identity_holds():
    rep = boundary_check(RADE, Ensemble("gaussian_product", 4, 8, 1), PATH, 400, 3)
    assert rep.z_score <= 4
    assert rep.lhs == pytest.approx(rep.rhs, abs=4 * rep.gap_se)


def test_identity_ensemble_shannon_gap_is_zero():
    sh = shannon_gap(Ensemble("identity_scaled", 5, 10), 0.6, 3, 0, lam=1.7)
    assert sh.empirical_se == 0.0
    assert sh.gap == pytest.approx(0.0, abs=1e-14)


def test_shannon_gap_shrinks_with_n():
    g100 = shannon_gap(Ensemble("gaussian_product", 100, 100, 1), 0.6, 200, 1)
    g400 = shannon_gap(Ensemble("gaussian_product", 400, 400, 1), 0.6, 60, 1)
    assert abs(g400.gap) < abs(g100.gap)
    assert abs(g400.gap) <= 3 * g400.empirical_se + 5e-4


# ---- t-derivative ---------------------------------------------------------------------


def test_derivative_degenerate_case_is_exact():
    rep = derivative_check(RADE, Ensemble("gaussian_product", 2, 4, 1), InterpPath.constant(0.0, 0.0),
                           0.5, 20, 0, lam=0.0)
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.closes


def test_derivative_identity_small_instance():
    # a prior with |x|^2 != n rho so the remainder term is live
    rep = derivative_check(TERNARY, Ensemble("gaussian_product", 2, 4, 1),
                           InterpPath.constant(0.5, 0.4, (0.1, 0.1)), 0.5, 3000, 5)
    assert rep.status == "pass", rep
    assert rep.remainder != 0.0
    assert 0.0 <= rep.mean_overlap <= TERNARY.rho


def test_rademacher_remainder_vanishes():
    rep = derivative_check(RADE, Ensemble("gaussian_product", 2, 4, 1), PATH, 0.5, 20, 5)
    assert rep.remainder == 0.0


def test_derivative_rejects_t_at_the_ends():
    with pytest.raises(InvalidArgument):
        derivative_check(RADE, Ensemble("gaussian_product", 2, 4, 1), PATH, 0.0005, 5, 0)
