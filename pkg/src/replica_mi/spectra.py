"""Measurement ensembles ``Phi = Phi' W`` and spectral transforms.

Two spectra appear throughout: that of ``T = Phi'^T Phi' / n`` (an ``m x m``
matrix) and that of ``R = Phi^T Phi / n`` (``n x n``).  The potential only
needs the R-transform of ``R`` on the negative axis, which for this ensemble
is a functional of the spectrum of ``T``::

    R_R(-u) = alpha * E_T[x / (1 + u x)]

``stieltjes`` and ``stieltjes_inverse`` give the independent route through the
definition ``R(z) = g^{-1}(-z) - 1/z`` used to cross-check that identity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .errors import DomainError, InvalidArgument, NumericalFailure, UnsupportedOperation
from .seeding import SeedLike, derive, rng

ENSEMBLE_KINDS = ("identity_scaled", "gaussian_product", "external_spectrum")
ENTRY_KINDS = ("gaussian", "rademacher")

NEGATIVE_CLAMP = 1e-10


@dataclass(frozen=True)
class Ensemble:
    """Generative description of ``Phi'`` (``m x m``) and ``W`` (``m x n``).

    ``gaussian_product`` is ``Phi' = A_1 (A_2 / sqrt(m)) ... (A_K / sqrt(m))``
    with i.i.d. unit-variance entries in every ``A_k``; the first factor is
    left unnormalized so that ``K = 1`` is a plain i.i.d. matrix, and the later
    ones are scaled so ``T`` keeps an O(1) spectrum for any ``K``.
    """

    kind: str
    m: int
    n: int
    factors: int = 1
    entries: str = "gaussian"
    spectrum_file: str | None = None

    def __post_init__(self):
        if self.kind not in ENSEMBLE_KINDS:
            raise InvalidArgument(f"unknown ensemble kind {self.kind!r}")
        if self.m < 1 or self.n < 1:
            raise InvalidArgument("m and n must be >= 1")
        if self.factors < 1:
            raise InvalidArgument("factors must be >= 1")
        if self.entries not in ENTRY_KINDS:
            raise InvalidArgument(f"unknown entry law {self.entries!r}")
        if self.kind == "external_spectrum" and not self.spectrum_file:
            raise InvalidArgument("external_spectrum needs spectrum_file")

    @property
    def alpha(self) -> float:
        return self.m / self.n

    def resized(self, n: int, m: int | None = None) -> "Ensemble":
        m = m if m is not None else max(1, round(self.alpha * n))
        return Ensemble(self.kind, m, n, self.factors, self.entries, self.spectrum_file)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Weighted nonnegative eigenvalue distribution."""

    eigenvalues: np.ndarray
    weights: np.ndarray
    alpha: float = 1.0
    source: str = "empirical"

    def __post_init__(self):
        x = np.array(self.eigenvalues, dtype=float).ravel()
        w = np.array(self.weights, dtype=float).ravel()
        if x.shape != w.shape or x.size == 0:
            raise InvalidArgument("eigenvalues and weights must be equal-length, non-empty")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidArgument("spectrum weights must sum to 1")
        if np.any(x < -NEGATIVE_CLAMP):
            raise NumericalFailure(f"negative eigenvalue {x.min():.3e} in a Gram spectrum")
        x = np.maximum(x, 0.0)
        if not self.alpha > 0:
            raise InvalidArgument("alpha must be > 0")
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "eigenvalues", x)
        object.__setattr__(self, "weights", w)

    @classmethod
    def delta(cls, value: float = 1.0, alpha: float = 1.0) -> "Spectrum":
        return cls(np.array([value]), np.array([1.0]), alpha, "analytic_delta")

    @classmethod
    def from_eigenvalues(cls, eigs, alpha: float = 1.0, source: str = "empirical") -> "Spectrum":
        eigs = np.asarray(eigs, dtype=float)
        return cls(eigs, np.full(eigs.size, 1.0 / eigs.size), alpha, source)

    @classmethod
    def pooled(cls, spectra: list["Spectrum"]) -> "Spectrum":
        """Equal-weight mixture of several realizations' spectra."""
        if not spectra:
            raise InvalidArgument("nothing to pool")
        k = len(spectra)
        x = np.concatenate([s.eigenvalues for s in spectra])
        w = np.concatenate([s.weights / k for s in spectra])
        return cls(x, w / w.sum(), spectra[0].alpha, spectra[0].source)

    @classmethod
    def marchenko_pastur(
        cls, ratio: float = 1.0, scale: float = 1.0, alpha: float = 1.0, order: int = 400
    ) -> "Spectrum":
        """Quadrature discretization of the Marchenko-Pastur law, ratio <= 1.

        Density ``sqrt((b-x)(x-a)) / (2 pi ratio x)`` on ``[a, b]``, the law of
        ``A^T A / N`` for ``A`` of shape ``N x (ratio N)``.  The substitution
        ``x = a + (b-a) sin^2(theta)`` removes the edge singularities, so
        Gauss-Legendre in theta is spectrally accurate.
        """
        if not 0 < ratio <= 1:
            raise InvalidArgument("ratio must lie in (0, 1]")
        a = (1 - math.sqrt(ratio)) ** 2
        b = (1 + math.sqrt(ratio)) ** 2
        t, tw = np.polynomial.legendre.leggauss(order)
        theta = 0.25 * math.pi * (t + 1)
        tw = 0.25 * math.pi * tw
        s2 = np.sin(theta) ** 2
        x = a + (b - a) * s2
        if ratio == 1.0:
            dens = (4.0 / math.pi) * np.cos(theta) ** 2
        else:
            dens = (b - a) ** 2 * s2 * np.cos(theta) ** 2 / (math.pi * ratio * x)
        w = dens * tw
        return cls(scale * x, w / w.sum(), alpha, "analytic_mp")

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.eigenvalues))

    def save(self, path: str | Path) -> None:
        lines = [f"{x:.17g} {w:.17g}" for x, w in zip(self.eigenvalues, self.weights)]
        Path(path).write_text("\n".join(lines) + "\n")


def load_spectrum(path: str | Path, alpha: float) -> Spectrum:
    """Read whitespace-separated ``eigenvalue weight`` pairs (``#`` comments)."""
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InvalidArgument(f"{path}:{lineno}: expected 'eigenvalue weight'")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise InvalidArgument(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise InvalidArgument(f"{path}: empty spectrum")
    arr = np.array(rows)
    w = arr[:, 1]
    if abs(w.sum() - 1.0) > 1e-9:
        raise InvalidArgument(f"{path}: weights sum to {w.sum()}, expected 1")
    return Spectrum(arr[:, 0], w / w.sum(), alpha, "external")


# sampling ------------------------------------------------------------------


def _factor(ens: Ensemble, gen: np.random.Generator) -> np.ndarray:
    shape = (ens.m, ens.m)
    if ens.entries == "gaussian":
        return gen.standard_normal(shape)
    return gen.choice(np.array([-1.0, 1.0]), size=shape)


def draw_phi_prime(ens: Ensemble, gen: np.random.Generator) -> np.ndarray:
    if ens.kind == "external_spectrum":
        raise UnsupportedOperation("external_spectrum ensembles have no sampler")
    if ens.kind == "identity_scaled":
        return math.sqrt(ens.n) * np.eye(ens.m)
    out = _factor(ens, gen)
    for _ in range(ens.factors - 1):
        out = out @ (_factor(ens, gen) / math.sqrt(ens.m))
    return out


def draw_w(ens: Ensemble, gen: np.random.Generator) -> np.ndarray:
    return gen.standard_normal((ens.m, ens.n)) / math.sqrt(ens.n)


def sample_phi_prime(ens: Ensemble, seed: SeedLike) -> np.ndarray:
    """One draw of ``Phi'``, deterministic in ``seed``."""
    return draw_phi_prime(ens, rng(seed, "phi_prime"))


def sample_phi(ens: Ensemble, seed: SeedLike) -> tuple[np.ndarray, np.ndarray]:
    """``(Phi', W)``; ``Phi'`` matches ``sample_phi_prime`` for the same seed."""
    return sample_phi_prime(ens, seed), draw_w(ens, rng(seed, "w"))


def _eigvalsh(mat: np.ndarray) -> np.ndarray:
    try:
        return linalg.eigvalsh(mat, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"symmetric eigensolver failed: {exc}") from exc


def esd_T(phi_prime: np.ndarray, n: int) -> Spectrum:
    """Empirical spectrum of ``T = Phi'^T Phi' / n``."""
    phi_prime = np.asarray(phi_prime, dtype=float)
    m = phi_prime.shape[0]
    if phi_prime.shape != (m, m):
        raise InvalidArgument(f"Phi' must be square, got {phi_prime.shape}")
    gram = phi_prime.T @ phi_prime / n
    return Spectrum.from_eigenvalues(_eigvalsh(0.5 * (gram + gram.T)), m / n)


def esd_R(phi: np.ndarray) -> Spectrum:
    """Empirical spectrum of ``R = Phi^T Phi / n`` (``n`` eigenvalues)."""
    phi = np.asarray(phi, dtype=float)
    m, n = phi.shape
    small = phi @ phi.T if m <= n else phi.T @ phi
    eigs = _eigvalsh(0.5 * (small + small.T)) / n
    if m < n:
        eigs = np.concatenate([np.zeros(n - m), eigs])
    return Spectrum.from_eigenvalues(eigs, m / n)


def sampled_spectrum_T(ens: Ensemble, seed: SeedLike, realizations: int = 1) -> Spectrum:
    """Pooled empirical spectrum of ``T`` over independent draws of ``Phi'``."""
    if ens.kind == "identity_scaled":
        return Spectrum.delta(1.0, ens.alpha)
    if ens.kind == "external_spectrum":
        return load_spectrum(ens.spectrum_file, ens.alpha)
    parts = [
        esd_T(sample_phi_prime(ens, derive(seed, "spectrum", k)), ens.n)
        for k in range(realizations)
    ]
    return Spectrum.pooled(parts) if len(parts) > 1 else parts[0]


REFERENCE_SIZE = 2000


def limiting_spectrum_T(ens: Ensemble, seed: SeedLike = 0) -> Spectrum:
    """Best available stand-in for the limiting law of ``T``.

    Exact for ``identity_scaled`` (unit mass) and ``gaussian_product`` with one
    factor (Marchenko-Pastur with ratio 1, scaled by alpha); for more factors
    a single large reference sample is used.
    """
    if ens.kind == "identity_scaled":
        return Spectrum.delta(1.0, ens.alpha)
    if ens.kind == "external_spectrum":
        return load_spectrum(ens.spectrum_file, ens.alpha)
    if ens.factors == 1:
        return Spectrum.marchenko_pastur(1.0, scale=ens.alpha, alpha=ens.alpha)
    m_ref = max(ens.m, REFERENCE_SIZE)
    n_ref = max(1, round(m_ref / ens.alpha))
    big = ens.resized(n_ref, m_ref)
    spec = esd_T(sample_phi_prime(big, derive(seed, "reference")), big.n)
    return Spectrum(spec.eigenvalues, spec.weights, ens.alpha, "reference_sample")


# transforms ----------------------------------------------------------------


def r_transform(spec_T: Spectrum, u):
    """``R_R(-u) = alpha * sum_i w_i x_i / (1 + u x_i)`` for ``u >= 0``."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0):
        raise DomainError("r_transform needs u >= 0")
    x = spec_T.eigenvalues
    denom = 1.0 + u_arr[..., None] * x
    if np.any(denom <= 0):
        raise DomainError("1 + u x <= 0 for some atom")
    out = spec_T.alpha * np.sum(spec_T.weights * x / denom, axis=-1)
    return float(out) if out.ndim == 0 else out


def r_transform_derivative(spec_T: Spectrum, u):
    """``d/du R_R(-u) = -alpha E[x^2 / (1 + u x)^2]``."""
    u_arr = np.asarray(u, dtype=float)
    x = spec_T.eigenvalues
    out = -spec_T.alpha * np.sum(spec_T.weights * (x / (1.0 + u_arr[..., None] * x)) ** 2, axis=-1)
    return float(out) if out.ndim == 0 else out


def shannon_G(spec_T: Spectrum, x):
    """``G_R(x) = int_0^x R_R(-u) du = alpha * E log(1 + x X')``."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0):
        raise DomainError("shannon_G needs x >= 0")
    out = spec_T.alpha * np.sum(spec_T.weights * np.log1p(x_arr[..., None] * spec_T.eigenvalues), axis=-1)
    return float(out) if out.ndim == 0 else out


def stieltjes(spec: Spectrum, z):
    """``g(z) = sum_i w_i / (x_i - z)``."""
    z_arr = np.asarray(z)
    diff = spec.eigenvalues - z_arr[..., None]
    if np.any(np.abs(diff) == 0):
        raise DomainError(f"z={z} lies on the spectrum support")
    out = np.sum(spec.weights / diff, axis=-1)
    if out.ndim == 0:
        return complex(out) if np.iscomplexobj(out) else float(out)
    return out


def stieltjes_inverse(spec: Spectrum, y: float, tol: float = 1e-10, max_iter: int = 400) -> float:
    """Solve ``g(z) = y`` for ``z < min(0, support)`` by bisection.

    ``g`` is positive and strictly increasing on that half-line, going from 0
    at ``-inf`` up to ``g(0-)``.
    """
    if not y > 0:
        raise DomainError("stieltjes_inverse needs y > 0 on the negative axis")
    x = spec.eigenvalues
    hi = min(0.0, float(x.min()))
    with np.errstate(divide="ignore"):
        g_hi = float(np.sum(spec.weights / (x - hi))) if np.all(x - hi > 0) else math.inf
    if y >= g_hi:
        raise DomainError(f"y={y} exceeds g at the edge of the support ({g_hi})")
    lo = hi - 1.0 / y  # g(lo) <= 1/(hi - lo) = y
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        g_mid = float(np.sum(spec.weights / (x - mid)))
        if abs(g_mid - y) <= tol:
            return mid
        if g_mid < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def r_transform_from_stieltjes(spec_R: Spectrum, u: float) -> float:
    """``R_R(-u) = g_R^{-1}(u) + 1/u`` from the spectrum of ``R`` itself."""
    if not u > 0:
        raise DomainError("needs u > 0")
    return stieltjes_inverse(spec_R, u) + 1.0 / u


def mp_residual(g_R: float, g_T, z: float, alpha: float) -> float:
    """``|z g_R^2 + alpha g_T(-1/g_R) + (1-alpha) g_R|`` for a given ``g_R(z)``."""
    if g_R == 0:
        raise DomainError("g_R(z) = 0")
    return abs(z * g_R**2 + alpha * g_T(-1.0 / g_R) + (1.0 - alpha) * g_R)


def mp_identity_residual(spec_R: Spectrum, spec_T: Spectrum, z: float) -> float:
    """Marchenko-Pastur fixed-point residual linking the spectra of R and T."""
    if not z < 0:
        raise DomainError("z must be negative")
    g_R = stieltjes(spec_R, z)
    return mp_residual(g_R, lambda w: stieltjes(spec_T, w), z, spec_T.alpha)
