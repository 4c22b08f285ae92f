"""Interpolating estimation problem at finite n.

For ``t`` in [0, 1] the signal ``X`` and an auxiliary Gaussian ``V`` are
observed through::

    Y_t  = sqrt((1-t)/n) Phi X + sqrt(R2(t)/n) Phi' V + Z
    Yt_t = sqrt(R1(t)) X + Zt

with ``R1 = eps1 + int_0^t r``, ``R2 = eps2 + int_0^t E``.  ``lam`` is folded
into ``Phi'`` (``Phi' -> sqrt(lam) Phi'``), so the Hamiltonian is written at
unit snr.

The Hamiltonian is quadratic in ``v``, and ``v`` is integrated out in closed
form::

    int Dv exp(-|a - B v|^2 / 2) = det(I + B B^T)^(-1/2) exp(-a^T (I + B B^T)^(-1) a / 2)

so the partition function is an exact finite sum over signal configurations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from . import prior as priors
from .errors import InvalidArgument, NumericalFailure
from .gibbs import Estimate, configurations, generate
from .prior import Prior
from .seeding import SeedLike, derive, map_ordered, mean_and_se, rng
from .spectra import Ensemble, Spectrum, limiting_spectrum_T, sample_phi_prime, shannon_G

DEFAULT_KNOTS = 256


@dataclass(frozen=True, eq=False)
class InterpPath:
    """Piecewise-linear interpolation functions ``r(t)``, ``E(t)`` on [0, 1]."""

    knots: np.ndarray
    r_values: np.ndarray
    E_values: np.ndarray
    epsilon: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        t = np.asarray(self.knots, dtype=float)
        r = np.asarray(self.r_values, dtype=float)
        e = np.asarray(self.E_values, dtype=float)
        if t.ndim != 1 or t.size < 2 or r.shape != t.shape or e.shape != t.shape:
            raise InvalidArgument("knots, r_values and E_values must be equal-length 1-D arrays")
        if t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
            raise InvalidArgument("knots must increase strictly from 0 to 1")
        if np.any(r < 0) or np.any(e < 0):
            raise InvalidArgument("r(t) and E(t) must be nonnegative")
        eps = tuple(float(v) for v in self.epsilon)
        if len(eps) != 2 or min(eps) < 0:
            raise InvalidArgument("epsilon must be a pair of nonnegative reals")
        object.__setattr__(self, "knots", t)
        object.__setattr__(self, "r_values", r)
        object.__setattr__(self, "E_values", e)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "_cum_r", _cumtrapz(t, r))
        object.__setattr__(self, "_cum_E", _cumtrapz(t, e))

    @classmethod
    def constant(cls, r: float, E: float, epsilon=(0.0, 0.0)) -> "InterpPath":
        return cls(np.array([0.0, 1.0]), np.array([r, r]), np.array([E, E]), epsilon)

    @classmethod
    def from_callables(
        cls, r_fn: Callable[[float], float], E_fn: Callable[[float], float], epsilon=(0.0, 0.0),
        knots: int = DEFAULT_KNOTS,
    ) -> "InterpPath":
        t = np.linspace(0.0, 1.0, knots)
        return cls(t, np.array([r_fn(v) for v in t]), np.array([E_fn(v) for v in t]), epsilon)

    @classmethod
    def from_tables(cls, r_table, E_table, epsilon=(0.0, 0.0)) -> "InterpPath":
        """Merge two ``(t, value)`` tables onto the union of their knots."""
        (tr, rv), (te, ev) = r_table, E_table
        t = np.union1d(tr, te)
        return cls(t, np.interp(t, tr, rv), np.interp(t, te, ev), epsilon)

    def check_prior(self, prior: Prior) -> None:
        if np.any(self.E_values > prior.rho * (1 + 1e-12)):
            raise InvalidArgument("E(t) exceeds rho")

    def r(self, t: float) -> float:
        return float(np.interp(t, self.knots, self.r_values))

    def E(self, t: float) -> float:
        return float(np.interp(t, self.knots, self.E_values))

    def _integral(self, cum, values, t):
        i = int(np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, len(self.knots) - 2))
        t0 = self.knots[i]
        f_t = np.interp(t, self.knots, values)
        return cum[i] + 0.5 * (t - t0) * (values[i] + f_t)

    def R1(self, t: float) -> float:
        _check_t(t)
        return self.epsilon[0] + float(self._integral(self._cum_r, self.r_values, t))

    def R2(self, t: float) -> float:
        _check_t(t)
        return self.epsilon[1] + float(self._integral(self._cum_E, self.E_values, t))


def _cumtrapz(t, f):
    return np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (f[1:] + f[:-1]))])


def _check_t(t: float) -> None:
    if not 0.0 <= t <= 1.0:
        raise InvalidArgument(f"t={t} outside [0, 1]")


def load_path_table(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Two-column ``t value`` table; ``#`` starts a comment."""
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise InvalidArgument(f"{path}:{lineno}: expected 't value'")
        rows.append((float(parts[0]), float(parts[1])))
    if len(rows) < 2:
        raise InvalidArgument(f"{path}: need at least two rows")
    arr = np.array(rows)
    return arr[:, 0], arr[:, 1]


@dataclass(frozen=True, eq=False)
class Quenched:
    """Everything fixed by one realization; independent of ``t``."""

    phi_prime: np.ndarray  # already multiplied by sqrt(lam)
    w: np.ndarray
    x: np.ndarray
    v: np.ndarray
    z: np.ndarray
    z_tilde: np.ndarray

    @property
    def n(self) -> int:
        return self.w.shape[1]

    @property
    def m(self) -> int:
        return self.w.shape[0]

    @property
    def phi(self) -> np.ndarray:
        return self.phi_prime @ self.w


def draw_quenched(prior: Prior, ens: Ensemble, seed: SeedLike, lam: float = 1.0) -> Quenched:
    base = generate(prior, ens, 0.0, seed)
    v = rng(seed, "v").standard_normal(ens.m)
    z_tilde = rng(seed, "z_tilde").standard_normal(ens.n)
    return Quenched(math.sqrt(lam) * base.phi_prime, base.w, base.x, v, base.z, z_tilde)


@dataclass(frozen=True, eq=False)
class InterpInstance:
    quenched: Quenched
    path: InterpPath
    t: float
    y_t: np.ndarray
    y_tilde_t: np.ndarray

    @classmethod
    def at(cls, q: Quenched, path: InterpPath, t: float) -> "InterpInstance":
        _check_t(t)
        n = q.n
        y_t = (
            math.sqrt((1 - t) / n) * (q.phi @ q.x)
            + math.sqrt(path.R2(t) / n) * (q.phi_prime @ q.v)
            + q.z
        )
        y_tilde = math.sqrt(path.R1(t)) * q.x + q.z_tilde
        return cls(q, path, t, y_t, y_tilde)


def hamiltonian(inst: InterpInstance, path: InterpPath, x: np.ndarray, v: np.ndarray) -> float:
    q, t = inst.quenched, inst.t
    n = q.n
    if x.shape != (n,) or v.shape != (q.m,):
        raise InvalidArgument("x must have shape (n,) and v shape (m,)")
    res1 = inst.y_t - math.sqrt((1 - t) / n) * (q.phi @ x) - math.sqrt(path.R2(t) / n) * (q.phi_prime @ v)
    res2 = inst.y_tilde_t - math.sqrt(path.R1(t)) * x
    return 0.5 * float(res1 @ res1) + 0.5 * float(res2 @ res2)


@dataclass(frozen=True, eq=False)
class _Gibbs:
    """Exact posterior over x (v marginalized) for one interpolating instance."""

    log_z: float
    probs: np.ndarray
    u_mean: np.ndarray  # <u | x> = (I + B B^T)^{-1} a(x), one row per configuration


def _gibbs(inst: InterpInstance, prior: Prior, want_u: bool = False) -> _Gibbs:
    q, path, t = inst.quenched, inst.path, inst.t
    n, m = q.n, q.m
    configs, logp = configurations(prior, n)
    b = math.sqrt(path.R2(t) / n) * q.phi_prime
    try:
        chol = linalg.cholesky(np.eye(m) + b @ b.T, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalFailure(f"I + B B^T not positive definite: {exc}") from exc
    a = inst.y_t[None, :] - math.sqrt((1 - t) / n) * (configs @ q.phi.T)  # (C, m)
    c = linalg.solve_triangular(chol, a.T, lower=True)  # (m, C)
    side = inst.y_tilde_t[None, :] - math.sqrt(path.R1(t)) * configs
    lw = logp - 0.5 * np.einsum("ic,ic->c", c, c) - 0.5 * np.einsum("cn,cn->c", side, side)
    norm = logsumexp(lw)
    log_z = float(norm) - float(np.sum(np.log(np.diag(chol))))
    if not math.isfinite(log_z):
        raise NumericalFailure("non-finite partition function")
    probs = np.exp(lw - norm)
    u_mean = linalg.solve_triangular(chol.T, c, lower=False).T if want_u else np.empty((0, m))
    return _Gibbs(log_z, probs, u_mean)


def free_energy(q: Quenched, path: InterpPath, t: float, prior: Prior) -> float:
    """``-(1/n) ln int dP0(x) Dv exp(-H)`` for one realization."""
    return -_gibbs(InterpInstance.at(q, path, t), prior).log_z / q.n


def _trial_seed(seed, k):
    return derive(seed, "interp", k)


def interp_mi_samples(prior, ens, path, t, trials, seed, lam=1.0, threads=1) -> np.ndarray:
    _validate(prior, ens, path, trials)
    const = 0.5 * (ens.alpha + 1.0)

    def one(k):
        q = draw_quenched(prior, ens, _trial_seed(seed, k), lam)
        return free_energy(q, path, t, prior) - const

    return np.array(map_ordered(one, trials, threads))


def _validate(prior, ens, path, trials):
    if not prior.is_discrete:
        raise InvalidArgument("interpolation oracles enumerate x and need a discrete prior")
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    path.check_prior(prior)
    configurations(prior, ens.n)


def interp_mi(
    prior: Prior, ens: Ensemble, path: InterpPath, t: float, trials: int, seed: SeedLike,
    lam: float = 1.0, threads: int = 1,
) -> Estimate:
    """Monte-Carlo estimate of the interpolating mutual information ``i_{n,eps}(t)``."""
    return Estimate(*mean_and_se(interp_mi_samples(prior, ens, path, t, trials, seed, lam, threads)))


@dataclass(frozen=True)
class ShannonGap:
    empirical: float
    empirical_se: float
    asymptotic: float

    @property
    def gap(self) -> float:
        return self.empirical - self.asymptotic


def shannon_gap(
    ens: Ensemble, R2: float, trials: int, seed: SeedLike, lam: float = 1.0,
    threads: int = 1, limit: Spectrum | None = None,
) -> ShannonGap:
    """``(alpha/2) E ln(1 + R2 X')`` over sampled spectra of T versus ``G_R(R2) / 2``
    on the limiting spectrum.  Needs no enumeration, so any n works."""
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")

    def one(k):
        pp = math.sqrt(lam) * sample_phi_prime(ens, derive(seed, "shannon", k))
        eigs = np.clip(linalg.eigvalsh(pp.T @ pp / ens.n), 0.0, None)
        return 0.5 * ens.alpha * float(np.mean(np.log1p(R2 * eigs)))

    emp, emp_se = mean_and_se(map_ordered(one, trials, threads))
    if limit is None:
        limit = limiting_spectrum_T(ens, derive(seed, "limit"))
    return ShannonGap(emp, emp_se, 0.5 * shannon_G(limit, lam * R2))


@dataclass(frozen=True)
class BoundaryReport:
    lhs: float
    rhs: float
    gap: float
    gap_se: float
    z_score: float
    shannon: ShannonGap

    @property
    def asymptotic_gap(self) -> float:
        return self.shannon.gap


def boundary_check(
    prior: Prior, ens: Ensemble, path: InterpPath, trials: int, seed: SeedLike,
    lam: float = 1.0, threads: int = 1, limit: Spectrum | None = None,
) -> BoundaryReport:
    """Both sides of the decoupled ``t = 1`` identity, per realization.

    ``rhs = I(R1(1)) + (1/2n) ln det(I + R2(1) Phi' Phi'^T / n)`` is exact at
    finite n, so ``gap`` is pure sampling noise.  The Shannon comparison
    (see ``shannon_gap``) only vanishes as n grows.
    """
    _validate(prior, ens, path, trials)
    n, m = ens.n, ens.m
    r1, r2 = path.R1(1.0), path.R2(1.0)
    scalar = priors.mutual_info(prior, r1)
    const = 0.5 * (ens.alpha + 1.0)

    def one(k):
        q = draw_quenched(prior, ens, _trial_seed(seed, k), lam)
        lhs = free_energy(q, path, 1.0, prior) - const
        pp = q.phi_prime
        sign, logdet = np.linalg.slogdet(np.eye(m) + (r2 / n) * (pp @ pp.T))
        if sign <= 0:
            raise NumericalFailure("log-det of a positive definite matrix had non-positive sign")
        return lhs, scalar + 0.5 * logdet / n

    s = np.array(map_ordered(one, trials, threads)).reshape(trials, 2)
    gap, gap_se = mean_and_se(s[:, 0] - s[:, 1])
    z = abs(gap) / gap_se if gap_se > 0 else (0.0 if abs(gap) < 1e-12 else math.inf)
    sh = shannon_gap(ens, r2, trials, seed, lam, threads, limit)
    return BoundaryReport(float(np.mean(s[:, 0])), float(np.mean(s[:, 1])), gap, gap_se, z, sh)


@dataclass(frozen=True)
class DerivativeReport:
    t: float
    h: float
    lhs: float
    rhs: float
    overlap_term: float
    bracket_term: float
    remainder: float
    mean_overlap: float
    gap: float
    gap_se: float
    bias_bound: float
    status: str

    @property
    def closes(self) -> bool:
        return self.status == "pass"


def _derivative_rhs(q: Quenched, path: InterpPath, t: float, prior: Prior):
    """Per-realization right side of the t-derivative identity.

    Returns ``(<Q>, overlap term, bracket term, remainder)``; their sum has
    the same expectation as the derivative of the free energy.
    """
    n = q.n
    inst = InterpInstance.at(q, path, t)
    g = _gibbs(inst, prior, want_u=True)
    configs, _ = configurations(prior, n)
    overlaps = configs @ q.x / n
    mean_q = float(g.probs @ overlaps)
    pz = q.phi_prime @ (q.phi_prime.T @ q.z)  # Phi' Phi'^T Z
    s = g.u_mean @ pz  # Z^T Phi' Phi'^T <u|x>, per configuration
    rho = prior.rho
    x2 = float(q.x @ q.x) / n
    scale = 1.0 / (2.0 * n * n)
    overlap_term = 0.5 * path.r(t) * (rho - mean_q)
    bracket = scale * float(g.probs @ (s * (path.E(t) - (rho - overlaps))))
    remainder = scale * float(g.probs @ s) * (rho - x2)
    return mean_q, overlap_term, bracket, remainder


def derivative_check(
    prior: Prior, ens: Ensemble, path: InterpPath, t0: float, trials: int, seed: SeedLike,
    h: float = 1e-3, lam: float = 1.0, threads: int = 1,
) -> DerivativeReport:
    """Compare ``d/dt i_{n,eps}(t)`` at ``t0`` with its Gibbs-average form.

    The left side is a Richardson-extrapolated central difference of the
    per-realization free energy (common random numbers across t); the right
    side includes the ``rho - |X|^2/n`` remainder, which makes the identity
    exact at finite n.
    """
    _validate(prior, ens, path, trials)
    if not h < t0 < 1 - h:
        raise InvalidArgument("t0 must be at least h away from the ends of [0, 1]")

    def one(k):
        q = draw_quenched(prior, ens, _trial_seed(seed, k), lam)
        f = {dt: free_energy(q, path, t0 + dt, prior) for dt in (-h, -h / 2, h / 2, h)}
        d_h = (f[h] - f[-h]) / (2 * h)
        d_h2 = (f[h / 2] - f[-h / 2]) / h
        return (d_h, d_h2, *_derivative_rhs(q, path, t0, prior))

    s = np.array(map_ordered(one, trials, threads)).reshape(trials, 6)
    d_h, d_h2 = s[:, 0], s[:, 1]
    lhs_k = (4.0 * d_h2 - d_h) / 3.0
    rhs_k = s[:, 3] + s[:, 4] + s[:, 5]
    gap, gap_se = mean_and_se(lhs_k - rhs_k)
    bias = abs(float(np.mean(d_h2 - d_h))) / 3.0
    lhs, rhs = float(np.mean(lhs_k)), float(np.mean(rhs_k))
    scale = max(abs(lhs), abs(rhs))
    if abs(gap) <= 3.0 * gap_se + bias:
        status = "pass"
    elif scale > 0 and gap_se > 0.5 * scale:
        status = "inconclusive"
    else:
        status = "fail"
    return DerivativeReport(
        t0, h, lhs, rhs, float(np.mean(s[:, 3])), float(np.mean(s[:, 4])),
        float(np.mean(s[:, 5])), float(np.mean(s[:, 2])), gap, gap_se, bias, status,
    )
