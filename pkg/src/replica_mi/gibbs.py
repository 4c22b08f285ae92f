"""Finite-size instances of ``Y = sqrt(lam/n) Phi X + Z`` and exact oracles.

For discrete priors the posterior is enumerated over all ``K**n`` signal
configurations, so partition functions, Gibbs averages and the mutual
information per instance are exact; only the outer expectation over the
quenched variables is Monte Carlo.  Trial ``k`` draws its quenched variables
from the stream ``(seed, <operation>, k)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidArgument, NumericalFailure
from .prior import Prior, draw
from .seeding import SeedLike, derive, map_ordered, mean_and_se, rng
from .spectra import Ensemble, sample_phi

ENUMERATION_BUDGET = 2**20
ROUNDOFF = 1e-12


class Estimate(NamedTuple):
    value: float
    std_err: float


@dataclass(frozen=True, eq=False)
class Instance:
    n: int
    m: int
    lam: float
    phi_prime: np.ndarray
    w: np.ndarray
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    seed: SeedLike

    @property
    def phi(self) -> np.ndarray:
        return self.phi_prime @ self.w

    @property
    def alpha(self) -> float:
        return self.m / self.n


@dataclass(frozen=True)
class PosteriorStats:
    mean_overlap: float
    overlap_variance: float
    replica_overlap: float
    mean_overlap_se: float
    overlap_variance_se: float
    replica_overlap_se: float


def _check_shape(ens: Ensemble, n: int | None, m: int | None) -> None:
    if (n is not None and n != ens.n) or (m is not None and m != ens.m):
        raise InvalidArgument(f"shape ({m}, {n}) does not match ensemble ({ens.m}, {ens.n})")


def generate(
    prior: Prior, ens: Ensemble, lam: float, seed: SeedLike, n: int | None = None, m: int | None = None
) -> Instance:
    """One realization of the measurement model, bit-identical for equal seeds."""
    _check_shape(ens, n, m)
    if lam < 0:
        raise InvalidArgument("lambda must be >= 0")
    phi_prime, w = sample_phi(ens, seed)
    x = draw(prior, ens.n, rng(seed, "signal"))
    z = rng(seed, "noise").standard_normal(ens.m)
    y = math.sqrt(lam / ens.n) * (phi_prime @ (w @ x)) + z
    return Instance(ens.n, ens.m, lam, phi_prime, w, x, z, y, seed)


@lru_cache(maxsize=32)
def configurations(prior: Prior, n: int) -> tuple[np.ndarray, np.ndarray]:
    """All signal configurations and their log prior weights."""
    a, logw = prior.support
    if len(a) ** n > ENUMERATION_BUDGET:
        raise InvalidArgument(f"{len(a)}**{n} configurations exceed the budget {ENUMERATION_BUDGET}")
    idx = np.array(list(itertools.product(range(len(a)), repeat=n)), dtype=np.intp).reshape(-1, n)
    configs = a[idx]
    logp = logw[idx].sum(axis=1)
    configs.setflags(write=False)
    logp.setflags(write=False)
    return configs, logp


def log_weights(inst: Instance, prior: Prior) -> np.ndarray:
    """Unnormalized log posterior weight of every configuration."""
    configs, logp = configurations(prior, inst.n)
    a = math.sqrt(inst.lam / inst.n) * inst.phi
    res = inst.y[None, :] - configs @ a.T
    return logp - 0.5 * np.einsum("cm,cm->c", res, res)


def log_partition(inst: Instance, prior: Prior) -> float:
    """``ln sum_x P0(x) exp(-||y - sqrt(lam/n) Phi x||^2 / 2)``."""
    return float(logsumexp(log_weights(inst, prior)))


def instance_mi(inst: Instance, prior: Prior) -> float:
    """``-(1/n) ln Z - alpha/2`` for one instance."""
    return -log_partition(inst, prior) / inst.n - 0.5 * inst.alpha


def exact_mi_samples(prior, ens, lam, trials, seed, threads=1) -> np.ndarray:
    if not prior.is_discrete:
        raise InvalidArgument("exact_mi needs a discrete prior; use exact_mi_gaussian")
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    configurations(prior, ens.n)  # budget check before spawning work

    def one(k):
        return instance_mi(generate(prior, ens, lam, derive(seed, "exact_mi", k)), prior)

    return np.array(map_ordered(one, trials, threads))


def exact_mi(prior: Prior, ens: Ensemble, lam: float, trials: int, seed: SeedLike, threads: int = 1) -> Estimate:
    """Monte-Carlo estimate of ``i_n = I(X; Y | Phi) / n`` with exact enumeration per instance."""
    return Estimate(*mean_and_se(exact_mi_samples(prior, ens, lam, trials, seed, threads)))


def gaussian_logdet_mi(phi: np.ndarray, rho: float, lam: float) -> float:
    """``(1/2n) ln det(I_m + lam rho Phi Phi^T / n)`` for one matrix."""
    m, n = phi.shape
    sign, logdet = np.linalg.slogdet(np.eye(m) + (lam * rho / n) * (phi @ phi.T))
    if sign <= 0:
        raise NumericalFailure("log-det of a positive definite matrix had non-positive sign")
    return 0.5 * logdet / n


def exact_mi_gaussian(
    ens: Ensemble, rho: float, lam: float, trials: int, seed: SeedLike, threads: int = 1
) -> Estimate:
    """Exact i_n for a Gaussian prior, averaged over matrix draws."""
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")

    def one(k):
        phi_prime, w = sample_phi(ens, derive(seed, "exact_mi_gaussian", k))
        return gaussian_logdet_mi(phi_prime @ w, rho, lam)

    return Estimate(*mean_and_se(map_ordered(one, trials, threads)))


@dataclass(frozen=True, eq=False)
class Posterior:
    """Exact posterior over enumerated configurations for one instance."""

    configs: np.ndarray
    probs: np.ndarray
    truth: np.ndarray

    @classmethod
    def of(cls, inst: Instance, prior: Prior) -> "Posterior":
        lw = log_weights(inst, prior)
        probs = np.exp(lw - logsumexp(lw))
        return cls(configurations(prior, inst.n)[0], probs, inst.x)

    @property
    def n(self) -> int:
        return self.configs.shape[1]

    def mean(self) -> np.ndarray:
        return self.probs @ self.configs

    def overlaps(self) -> np.ndarray:
        return self.configs @ self.truth / self.n

    def overlap_moments(self) -> tuple[float, float]:
        q = self.overlaps()
        return float(self.probs @ q), float(self.probs @ (q * q))

    def replica_overlap(self, gen: np.random.Generator | None = None, replicas: int | None = None) -> float:
        """``<q12>``: exact from the posterior mean, or from sampled replicas."""
        if replicas is None:
            mu = self.mean()
            return float(mu @ mu) / self.n
        if replicas < 2:
            raise InvalidArgument("replicas must be >= 2")
        draws = self.configs[gen.choice(len(self.probs), size=replicas, p=self.probs)]
        gram = draws @ draws.T / self.n
        iu = np.triu_indices(replicas, 1)
        return float(gram[iu].mean())


def _posterior_samples(prior, ens, lam, trials, seed, replicas, posterior_prior, threads, tag):
    post_prior = posterior_prior or prior
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    configurations(post_prior, ens.n)

    def one(k):
        s = derive(seed, tag, k)
        inst = generate(prior, ens, lam, s)
        post = Posterior.of(inst, post_prior)
        q1, q2 = post.overlap_moments()
        q12 = post.replica_overlap(rng(s, "replicas"), replicas)
        return q1, q2, q12

    return np.array(map_ordered(one, trials, threads)).reshape(trials, 3)


def posterior_stats(
    prior: Prior,
    ens: Ensemble,
    lam: float,
    trials: int,
    seed: SeedLike,
    replicas: int | None = None,
    threads: int = 1,
) -> PosteriorStats:
    """Overlap statistics averaged over ``trials`` instances.

    ``overlap_variance`` estimates ``E<(Q - E<Q>)^2>``, thermal plus disorder
    fluctuations.  Gibbs averages are exact; ``replicas`` switches the
    replica overlap to an estimate from that many posterior samples.
    """
    s = _posterior_samples(prior, ens, lam, trials, seed, replicas, None, threads, "posterior")
    q1, q2, q12 = s[:, 0], s[:, 1], s[:, 2]
    mq, mq_se = mean_and_se(q1)
    var = float(np.mean(q2) - mq * mq)
    # delta method: var = E[q2] - (E[q1])^2
    _, var_se = mean_and_se(q2 - 2.0 * mq * q1)
    mr, mr_se = mean_and_se(q12)
    return PosteriorStats(mq, max(var, 0.0), mr, mq_se, var_se, mr_se)


def nishimori_residual(
    prior: Prior,
    ens: Ensemble,
    lam: float,
    trials: int,
    seed: SeedLike,
    posterior_prior: Prior | None = None,
    replicas: int | None = None,
    threads: int = 1,
) -> float:
    """z-score of ``E<Q> - E<q12>``; O(1) in the Bayes-optimal setting.

    ``posterior_prior`` lets the posterior use a different prior from the one
    that generated the data, which breaks the identity.
    """
    s = _posterior_samples(prior, ens, lam, trials, seed, replicas, posterior_prior, threads, "nishimori")
    diff, se = mean_and_se(s[:, 0] - s[:, 2])
    # both sides vanish identically (e.g. lam = 0 with a centred prior)
    if abs(diff) < ROUNDOFF:
        return 0.0
    return abs(diff) / se if se > 0 else math.inf
