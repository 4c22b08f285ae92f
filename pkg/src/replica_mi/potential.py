"""Replica-symmetric potential and its extremization.

    i_RS(E, r; lam) = I(r) + G_R(lam E) / 2 - r E / 2

with ``I`` the scalar-channel mutual information and ``G_R`` the integrated
R-transform.  Stationary points satisfy the state-evolution equations
``E = mmse(r)`` and ``r = lam R_R(-lam E)``.

Three equivalent extremizations are provided: ``inf_r sup_E``, ``inf_E sup_r``
and the minimum over state-evolution fixed points.  Both inner problems are
concave, so each inner optimum is the root of a monotone derivative.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import prior as priors
from .errors import InvalidArgument, NumericalFailure
from .prior import Prior, QuadratureRule
from .spectra import Spectrum, r_transform, shannon_G

log = logging.getLogger(__name__)

FORMULATIONS = ("inf_sup", "sup_inf_over_E", "inf_over_gamma")

DAMPING = 0.5
TOL = 1e-10
MAX_ITER = 10_000
GRID_POINTS = 80
TIE_TOL = 1e-9


@dataclass(frozen=True)
class PotentialPoint:
    E: float
    r: float
    lam: float

    def __post_init__(self):
        if self.E < 0 or self.r < 0 or self.lam < 0:
            raise InvalidArgument(f"E, r, lam must be >= 0, got {self}")


@dataclass(frozen=True)
class FixedPoint:
    E: float
    r: float
    value: float
    converged: bool = True
    iterations: int = 0


@dataclass(frozen=True)
class PotentialResult:
    value: float
    E_star: float
    r_star: float
    lam: float
    formulation: str
    fixed_points: list[FixedPoint] = field(default_factory=list)
    boundary: bool = False
    tie: bool = False

    @property
    def n_fixed_points(self) -> int:
        return sum(fp.converged for fp in self.fixed_points)


def i_rs(prior: Prior, spec_T: Spectrum, p: PotentialPoint, quad: QuadratureRule | None = None) -> float:
    """Potential value at ``(E, r; lam)``."""
    return potential(prior, spec_T, p.E, p.r, p.lam, quad)


def potential(prior, spec_T, E, r, lam, quad=None) -> float:
    return (
        priors.mutual_info(prior, r, quad)
        + 0.5 * shannon_G(spec_T, lam * E)
        - 0.5 * r * E
    )


def grad(prior, spec_T, E, r, lam, quad=None) -> tuple[float, float]:
    """Analytic ``(d/dE, d/dr)`` of the potential."""
    d_E = 0.5 * lam * r_transform(spec_T, lam * E) - 0.5 * r
    d_r = 0.5 * (priors.mmse(prior, r, quad) - E)
    return d_E, d_r


def se_step(prior: Prior, spec_T: Spectrum, E: float, lam: float, quad=None) -> tuple[float, float]:
    """One state-evolution update ``E -> (mmse(r), r)`` with ``r = lam R(-lam E)``."""
    if not 0 <= E <= prior.rho * (1 + 1e-12):
        raise InvalidArgument(f"E={E} outside [0, rho]")
    r = lam * r_transform(spec_T, lam * E)
    return priors.mmse(prior, r, quad), r


def fixed_points(
    prior: Prior,
    spec_T: Spectrum,
    lam: float,
    inits=None,
    damping: float = DAMPING,
    tol: float = TOL,
    max_iter: int = MAX_ITER,
    quad=None,
) -> list[FixedPoint]:
    """Damped state-evolution iteration from each initial ``E``.

    Converged points closer than ``10 tol`` in ``E`` are merged.  A run that
    hits ``max_iter`` is kept with ``converged=False`` and its last iterate.
    """
    rho = prior.rho
    if inits is None:
        inits = (1e-6 * rho, 0.5 * rho, rho)
    if not 0 < damping <= 1:
        raise InvalidArgument("damping must lie in (0, 1]")
    if not tol > 0:
        raise InvalidArgument("tol must be > 0")
    found: list[FixedPoint] = []
    for E0 in inits:
        if not 0 <= E0 <= rho:
            raise InvalidArgument(f"init {E0} outside [0, rho]")
        E = float(E0)
        converged = False
        for it in range(1, max_iter + 1):
            E_next, _ = se_step(prior, spec_T, E, lam, quad)
            step = damping * (E_next - E)
            E = min(max(E + step, 0.0), rho)
            if abs(step) < tol * damping:
                converged = True
                break
        if converged:
            E = _polish(prior, spec_T, lam, E, tol, quad)
        r = lam * r_transform(spec_T, lam * E)
        if not converged:
            log.warning("state evolution from E0=%g did not converge (lam=%g)", E0, lam)
        value = potential(prior, spec_T, E, r, lam, quad)
        fp = FixedPoint(E, r, value, converged, it)
        if converged and any(f.converged and abs(f.E - E) <= 10 * tol for f in found):
            continue
        found.append(fp)
    return found


def _polish(prior, spec_T, lam, E, tol, quad=None) -> float:
    """Root-solve ``se_step(E) = E`` near a converged iterate.

    When the contraction factor is close to 1 a small step does not mean a
    small distance to the fixed point, and runs from different inits stop
    at visibly different E.
    """
    rho = prior.rho
    g = lambda e: se_step(prior, spec_T, e, lam, quad)[0] - e
    delta = 100 * tol
    while delta < 1e-2 * rho:
        lo, hi = max(E - delta, 0.0), min(E + delta, rho)
        g_lo, g_hi = g(lo), g(hi)
        if g_lo == 0.0:
            return lo
        if g_hi == 0.0:
            return hi
        if g_lo * g_hi < 0:
            return optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        delta *= 10
    return E


# inner problems ------------------------------------------------------------


def best_E(prior, spec_T, r, lam) -> float:
    """argmax over E in [0, rho] of the potential at fixed r (concave in E)."""
    rho = prior.rho
    if lam == 0:
        return rho
    slope = lambda E: lam * r_transform(spec_T, lam * E) - r
    if slope(0.0) <= 0:
        return 0.0
    if slope(rho) >= 0:
        return rho
    return optimize.brentq(slope, 0.0, rho, xtol=1e-15, rtol=4 * np.finfo(float).eps)


R_CAP = 1e8


def best_r(prior, E, quad=None) -> float:
    """argmax over r >= 0 of ``I(r) - r E / 2``, i.e. the root of mmse(r) = E."""
    if E >= prior.rho:
        return 0.0
    if prior.kind == "gaussian":
        return 1.0 / E - 1.0 / prior.rho if E > 0 else R_CAP
    hi = 1.0
    while priors.mmse(prior, hi, quad) > E:
        hi *= 4.0
        if hi > R_CAP:
            return R_CAP
    lo = hi / 4.0 if hi > 1.0 else 0.0
    return optimize.brentq(lambda r: priors.mmse(prior, r, quad) - E, lo, hi, xtol=1e-13, rtol=1e-14)


def _minimize_on_grid(f, grid, stationarity=None):
    """Global minimum of ``f`` on ``grid``, refined by bounded Brent search
    in the neighbouring bracket and, when a sign change is available, by a
    root solve of the stationarity condition."""
    values = np.array([f(x) for x in grid])
    i = int(np.argmin(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    x_best, f_best = grid[i], values[i]
    if hi > lo:
        res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-13 * max(1.0, hi)})
        if res.fun <= f_best:
            x_best, f_best = float(res.x), float(res.fun)
        if stationarity is not None:
            # the stationarity condition pins the minimizer far more sharply
            # than the flat function value does
            a, b = max(lo, x_best - 1e-3 * (hi - lo)), min(hi, x_best + 1e-3 * (hi - lo))
            for a_, b_ in ((a, b), (lo, hi)):
                sa, sb = stationarity(a_), stationarity(b_)
                if sa * sb < 0:
                    root = optimize.brentq(stationarity, a_, b_, xtol=1e-15, rtol=4 * np.finfo(float).eps)
                    f_root = f(root)
                    if f_root <= f_best + 1e-12:
                        x_best, f_best = root, f_root
                    break
    return x_best, f_best


def _r_grid(spec_T, lam, rho):
    r_top = 1.5 * lam * r_transform(spec_T, 0.0)
    return np.concatenate([[0.0], np.geomspace(1e-6, max(r_top, 2e-6), GRID_POINTS)])


def _E_grid(rho):
    return np.unique(np.concatenate([np.geomspace(1e-6 * rho, rho, GRID_POINTS // 2),
                                     np.linspace(0.0, rho, GRID_POINTS // 2 + 1)[1:]]))


def extremize(
    prior: Prior,
    spec_T: Spectrum,
    lam: float,
    formulation: str = "inf_sup",
    quad: QuadratureRule | None = None,
) -> PotentialResult:
    """Evaluate the replica formula with one of the three extremizations."""
    if formulation not in FORMULATIONS:
        raise InvalidArgument(f"unknown formulation {formulation!r}")
    if not (math.isfinite(lam) and lam >= 0):
        raise InvalidArgument(f"lambda must be finite and >= 0, got {lam}")
    rho = prior.rho
    if lam == 0:
        fps = [FixedPoint(rho, 0.0, 0.0, True, 0)]
        return PotentialResult(0.0, rho, 0.0, lam, formulation, fps, boundary=True)

    fps = fixed_points(prior, spec_T, lam, quad=quad)
    good = [fp for fp in fps if fp.converged]

    if formulation == "inf_sup":

        def outer(r):
            return potential(prior, spec_T, best_E(prior, spec_T, r, lam), r, lam, quad)

        def stationarity(r):
            return priors.mmse(prior, r, quad) - best_E(prior, spec_T, r, lam)

        r_star, value = _minimize_on_grid(outer, _r_grid(spec_T, lam, rho), stationarity)
        E_star = best_E(prior, spec_T, r_star, lam)
    elif formulation == "sup_inf_over_E":

        def outer(E):
            return potential(prior, spec_T, E, best_r(prior, E, quad), lam, quad)

        def stationarity(E):
            return lam * r_transform(spec_T, lam * E) - best_r(prior, E, quad)

        E_star, value = _minimize_on_grid(outer, _E_grid(rho), stationarity)
        r_star = best_r(prior, E_star, quad)
    else:
        if not good:
            raise NumericalFailure(f"no converged state-evolution fixed point at lam={lam}")
        best = min(good, key=lambda fp: fp.value)
        value, E_star, r_star = best.value, best.E, best.r

    tie = sum(1 for fp in good if abs(fp.value - value) <= TIE_TOL) > 1
    boundary = E_star <= 1e-9 * rho or E_star >= rho * (1 - 1e-9) or r_star <= 1e-12
    if not math.isfinite(value):
        raise NumericalFailure(f"non-finite potential value at lam={lam}")
    return PotentialResult(value, E_star, r_star, lam, formulation, fps, boundary, tie)


def extremize_all(prior, spec_T, lam, quad=None) -> dict[str, PotentialResult]:
    return {f: extremize(prior, spec_T, lam, f, quad) for f in FORMULATIONS}


def mmse_prediction(result: PotentialResult) -> float:
    """Conjectured asymptotic MMSE: the extremizing ``E``.

    Proven only for i.i.d. Gaussian measurement matrices; for the structured
    ensembles treated here it remains a prediction.
    """
    return result.E_star
