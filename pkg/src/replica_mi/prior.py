"""Scalar priors and the scalar Gaussian channel ``Y = sqrt(r) X + Z``.

The two functionals needed by the replica potential are the channel mutual
information ``I(r)`` and the minimum mean-square error ``mmse(r)``; they are
related by ``dI/dr = mmse/2``.  Discrete priors are handled with exact atom
sums, the Gaussian slab of ``gauss_bernoulli`` is integrated out analytically,
and the remaining one-dimensional integral over the channel output uses a
composite Gauss-Legendre rule.  All posterior normalizers go through
log-sum-exp.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import logsumexp

from .errors import InvalidArgument, NumericalFailure
from .seeding import SeedLike, rng

KINDS = ("gaussian", "rademacher", "gauss_bernoulli", "discrete")

DEFAULT_QUAD_ORDER = 61
TRUNCATION_SIGMAS = 8.0
PANEL_ORDER = 16
MAX_PANELS = 20000
# half-width, in noise standard deviations, of the y-integration window
TAIL = 12.0


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights with ``sum_i w_i f(z_i) ~ E f(Z)``, ``Z ~ N(0, 1)``."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def expect(self, values: np.ndarray, axis: int = -1) -> np.ndarray:
        return np.tensordot(values, self.weights, axes=([axis], [0]))


@lru_cache(maxsize=16)
def gauss_hermite(order: int = DEFAULT_QUAD_ORDER) -> QuadratureRule:
    if order < 1:
        raise InvalidArgument(f"quadrature order must be >= 1, got {order}")
    z, w = hermegauss(order)
    # exact reflection symmetry, so odd moments vanish to the last bit
    z = 0.5 * (z - z[::-1])
    w = 0.5 * (w + w[::-1]) / math.sqrt(2.0 * math.pi)
    z.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(z, w, order)


@dataclass(frozen=True)
class Prior:
    """Law ``P0`` of one signal component.

    ``gauss_bernoulli`` is zero with probability ``1 - sparsity`` and
    ``N(0, rho / sparsity)`` otherwise, so ``rho`` is always the second moment.
    For the two unbounded kinds ``support_bound`` is a truncation radius used
    only where a bound is needed; the quadrature paths use the untruncated law.
    """

    kind: str
    rho: float
    support_bound: float
    atoms: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    sparsity: float = 1.0
    _atoms_arr: np.ndarray = field(init=False, repr=False, compare=False)
    _logw_arr: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown prior kind {self.kind!r}")
        if not (math.isfinite(self.rho) and self.rho >= 0):
            raise InvalidArgument(f"rho must be finite and >= 0, got {self.rho}")
        if not self.support_bound > 0:
            raise InvalidArgument("support_bound must be > 0")
        if self.is_discrete:
            a = np.asarray(self.atoms, dtype=float)
            w = np.asarray(self.weights, dtype=float)
            if a.ndim != 1 or a.size == 0 or a.shape != w.shape:
                raise InvalidArgument("atoms and weights must be equal-length, non-empty")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise InvalidArgument("weights must be a probability vector")
            if np.any(np.abs(a) > self.support_bound):
                raise InvalidArgument("atom outside support_bound")
            second = float(np.dot(w, a * a))
            if abs(second - self.rho) > 1e-10:
                raise InvalidArgument(f"rho={self.rho} but second moment is {second}")
            keep = w > 0
            with np.errstate(divide="ignore"):
                object.__setattr__(self, "_atoms_arr", a[keep])
                object.__setattr__(self, "_logw_arr", np.log(w[keep]))
        elif self.kind == "gauss_bernoulli":
            if not 0 < self.sparsity <= 1:
                raise InvalidArgument("sparsity must lie in (0, 1]")

    # constructors -----------------------------------------------------
    @classmethod
    def gaussian(cls, rho: float = 1.0) -> "Prior":
        return cls("gaussian", float(rho), TRUNCATION_SIGMAS * math.sqrt(rho) or 1.0)

    @classmethod
    def rademacher(cls) -> "Prior":
        return cls("rademacher", 1.0, 1.0, (-1.0, 1.0), (0.5, 0.5))

    @classmethod
    def gauss_bernoulli(cls, rho: float, sparsity: float) -> "Prior":
        return cls(
            "gauss_bernoulli",
            float(rho),
            TRUNCATION_SIGMAS * math.sqrt(rho) or 1.0,
            sparsity=float(sparsity),
        )

    @classmethod
    def discrete(cls, atoms, weights) -> "Prior":
        a = tuple(float(v) for v in atoms)
        w = tuple(float(v) for v in weights)
        rho = math.fsum(wi * ai * ai for ai, wi in zip(a, w))
        bound = max((abs(v) for v in a), default=0.0) or 1.0
        return cls("discrete", rho, bound, a, w)

    # ------------------------------------------------------------------
    @property
    def is_discrete(self) -> bool:
        return self.kind in ("rademacher", "discrete")

    @property
    def mean(self) -> float:
        if self.is_discrete:
            return float(np.dot(np.exp(self._logw_arr), self._atoms_arr))
        return 0.0

    @property
    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """(atoms, log-weights) of a discrete prior, zero-weight atoms dropped."""
        if not self.is_discrete:
            raise InvalidArgument(f"{self.kind} prior has no finite support")
        return self._atoms_arr, self._logw_arr


def _check_r(r: float) -> float:
    r = float(r)
    if not math.isfinite(r):
        raise InvalidArgument(f"snr must be finite, got {r}")
    if r < 0:
        raise InvalidArgument(f"snr must be >= 0, got {r}")
    return r


def _discrete_log_post(prior: Prior, r: float, quad: QuadratureRule):
    """Unnormalized log posterior over atoms, shape (true atom, node, atom)."""
    a, logw = prior.support
    d = a[:, None] - a[None, :]  # X - x
    sr = math.sqrt(r)
    return (
        logw[None, None, :]
        - 0.5 * r * d[:, None, :] ** 2
        - sr * d[:, None, :] * quad.nodes[None, :, None]
    )


@lru_cache(maxsize=4)
def _legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def _panels(lo: float, hi: float, width: float, order: int = PANEL_ORDER):
    """Composite Gauss-Legendre nodes/weights on [lo, hi]."""
    count = max(1, int(math.ceil((hi - lo) / width)))
    count = min(count, MAX_PANELS)
    edges = np.linspace(lo, hi, count + 1)
    x, w = _legendre(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _log_phi(y):
    return -0.5 * y * y - 0.5 * math.log(2 * math.pi)


def _discrete_grid(prior: Prior, r: float):
    """y-grid and per-atom log densities ``log w_k + log phi(y - sqrt(r) a_k)``."""
    a, logw = prior.support
    c = math.sqrt(r) * a
    spread = float(c.max() - c.min())
    width = min(1.0, 1.0 / spread) if spread > 0 else 1.0
    y, wy = _panels(float(c.min()) - TAIL, float(c.max()) + TAIL, width)
    log_comp = logw[None, :] + _log_phi(y[:, None] - c[None, :])
    return y, wy, log_comp


def _gb_grid(prior: Prior, r: float):
    p = prior.sparsity
    s2 = 1.0 + r * prior.rho / p
    half = TAIL * math.sqrt(s2)
    inner = 2 * TAIL  # spike plus the spike/slab transition, which sits at |y| = O(sqrt(log s2))
    if half <= inner:
        y, wy = _panels(-half, half, 0.5)
    else:
        outer = max(0.5, math.sqrt(s2) / 4)  # past the transition only the slab scale matters
        parts = [_panels(-half, -inner, outer), _panels(-inner, inner, 0.5), _panels(inner, half, outer)]
        y = np.concatenate([q[0] for q in parts])
        wy = np.concatenate([q[1] for q in parts])
    log_slab = math.log(p) + _log_phi(y / math.sqrt(s2)) - 0.5 * math.log(s2)
    if p < 1:
        log_null = math.log1p(-p) + _log_phi(y)
    else:
        log_null = np.full_like(y, -np.inf)
    return y, wy, log_null, log_slab, s2


def mutual_info(prior: Prior, r: float, quad: QuadratureRule | None = None) -> float:
    """``I(X; sqrt(r) X + Z)`` in nats.

    With ``quad=None`` the output entropy is integrated on a composite
    Gauss-Legendre grid in y whose panel width follows the posterior
    transition scale; passing a Gauss-Hermite rule instead integrates over
    the noise at the rule's nodes (discrete priors only).
    """
    r = _check_r(r)
    if r == 0.0:
        return 0.0
    if prior.kind == "gaussian":
        return 0.5 * math.log1p(r * prior.rho)
    if quad is not None and prior.is_discrete:
        lp = _discrete_log_post(prior, r, quad)
        lse = logsumexp(lp, axis=-1)
        _, logw = prior.support
        value = -float(np.dot(np.exp(logw), quad.expect(lse)))
    else:
        if prior.is_discrete:
            _, wy, log_comp = _discrete_grid(prior, r)
            log_p = logsumexp(log_comp, axis=-1)
        else:
            _, wy, log_null, log_slab, _ = _gb_grid(prior, r)
            log_p = np.logaddexp(log_null, log_slab)
        if not np.all(np.isfinite(log_p)):
            raise NumericalFailure(f"output density underflow at r={r}")
        entropy = -float(np.dot(wy, np.exp(log_p) * log_p))
        value = entropy - 0.5 * math.log(2 * math.pi * math.e)
    if not math.isfinite(value):
        raise NumericalFailure(f"mutual information not finite at r={r}")
    return max(value, 0.0)


def mmse(prior: Prior, r: float, quad: QuadratureRule | None = None) -> float:
    """``E (X - E[X|Y])^2`` for ``Y = sqrt(r) X + Z``."""
    r = _check_r(r)
    if r == 0.0:
        return prior.rho
    if prior.kind == "gaussian":
        return prior.rho / (1.0 + r * prior.rho)
    if prior.is_discrete:
        a, logw = prior.support
        if quad is not None:
            lp = _discrete_log_post(prior, r, quad)
            norm = logsumexp(lp, axis=-1, keepdims=True)
            post_mean = np.exp(lp - norm) @ a  # (true atom, node)
            err = (a[:, None] - post_mean) ** 2
            value = float(np.dot(np.exp(logw), quad.expect(err)))
        else:
            _, wy, log_comp = _discrete_grid(prior, r)
            norm = logsumexp(log_comp, axis=-1, keepdims=True)
            if not np.all(np.isfinite(norm)):
                raise NumericalFailure(f"posterior normalizer underflow at r={r}")
            post_mean = np.exp(log_comp - norm) @ a
            err = np.exp(log_comp) * (a[None, :] - post_mean[:, None]) ** 2
            value = float(np.dot(wy, err.sum(axis=1)))
    else:
        y, wy, log_null, log_slab, s2 = _gb_grid(prior, r)
        slab_var = prior.rho / prior.sparsity
        gain = math.sqrt(r) * slab_var / s2
        log_p = np.logaddexp(log_null, log_slab)
        pi = np.exp(log_slab - log_p)
        cond_var = pi * slab_var / s2 + pi * (1 - pi) * (gain * y) ** 2
        value = float(np.dot(wy, np.exp(log_p) * cond_var))
    if not math.isfinite(value):
        raise NumericalFailure(f"mmse not finite at r={r}")
    return min(max(value, 0.0), prior.rho)


def sample(prior: Prior, count: int, seed: SeedLike) -> np.ndarray:
    """``count`` i.i.d. draws from the prior."""
    if count < 1:
        raise InvalidArgument(f"count must be >= 1, got {count}")
    gen = rng(seed, "prior")
    return draw(prior, count, gen)


def draw(prior: Prior, count: int, gen: np.random.Generator) -> np.ndarray:
    if prior.kind == "gaussian":
        return gen.standard_normal(count) * math.sqrt(prior.rho)
    if prior.kind == "gauss_bernoulli":
        on = gen.random(count) < prior.sparsity
        return on * gen.standard_normal(count) * math.sqrt(prior.rho / prior.sparsity)
    a, logw = prior.support
    return gen.choice(a, size=count, p=np.exp(logw))
