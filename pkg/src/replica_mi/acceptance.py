"""The acceptance checks, runnable from tests and from ``replica-mi selftest``.

Each check returns a ``CheckResult``; ``quick=True`` shrinks trial counts for
a smoke run and is not a substitute for the full check.
"""
from __future__ import annotations

import math
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import prior as priors
from .gibbs import exact_mi, nishimori_residual, posterior_stats
from .interp import InterpPath, boundary_check, derivative_check
from .potential import FORMULATIONS, extremize
from .prior import Prior
from .seeding import derive, mean_and_se
from .spectra import (
    Ensemble,
    Spectrum,
    esd_R,
    esd_T,
    mp_identity_residual,
    r_transform,
    r_transform_from_stieltjes,
    sample_phi,
)


@dataclass(frozen=True)
class CheckResult:
    criterion: int
    name: str
    passed: bool
    statistic: float
    threshold: float
    seconds: float
    budget: float
    detail: str = ""

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"[{verdict}] {self.criterion:2d} {self.name}: statistic={self.statistic:.6g} "
                f"threshold={self.threshold:.6g} time={self.seconds:.1f}s/{self.budget:g}s {self.detail}")


def _timed(criterion, name, budget, fn) -> CheckResult:
    start = time.perf_counter()
    ok, stat, thr, detail = fn()
    secs = time.perf_counter() - start
    return CheckResult(criterion, name, bool(ok and secs <= budget), float(stat), float(thr), secs,
                       budget, detail + ("" if secs <= budget else " (over time budget)"))


GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def gaussian_logdet_agreement(quick=False, threads=1, seed=1) -> CheckResult:
    def body():
        n = 1000
        prior = Prior.gaussian(1.0)
        ens = Ensemble("identity_scaled", n, n)
        phi_prime, w = sample_phi(ens, derive(seed, "acceptance_1"))
        spec_R = esd_R(phi_prime @ w)
        worst, parts = 0.0, []
        for lam in (0.5, 1.0, 2.0):
            value = extremize(prior, Spectrum.delta(1.0, 1.0), lam, "inf_sup").value
            target = 0.5 * float(np.dot(spec_R.weights, np.log1p(lam * spec_R.eigenvalues)))
            worst = max(worst, abs(value - target))
            parts.append(f"lam={lam}:{value - target:+.2e}")
        return worst <= 2e-2, worst, 2e-2, " ".join(parts)

    return _timed(1, "gaussian prior vs log-det at n=1000", 60, body)


def iid_reduction(quick=False, threads=1, seed=0) -> CheckResult:
    def body():
        prior = Prior.gaussian(1.0)
        spec = Spectrum.delta(1.0, 1.0)
        res = [extremize(prior, spec, 1.0, f) for f in FORMULATIONS]
        e_err = max(abs(r.E_star - GOLDEN) for r in res)
        spread = max(r.value for r in res) - min(r.value for r in res)
        stat = max(e_err, spread)
        return stat <= 1e-8, stat, 1e-8, f"E_err={e_err:.2e} value_spread={spread:.2e}"

    return _timed(2, "i.i.d. reduction fixed point", 1, body)


def finite_n_convergence(quick=False, threads=1, seed=7) -> CheckResult:
    def body():
        trials = 200 if quick else 2000
        prior = Prior.rademacher()
        replica = extremize(prior, Spectrum.delta(1.0, 0.5), 1.0).value
        est = {n: exact_mi(prior, Ensemble("identity_scaled", n // 2, n), 1.0, trials,
                           derive(seed, "acceptance_3", n), threads) for n in (6, 12)}
        gap = {n: abs(e.value - replica) for n, e in est.items()}
        pooled = math.hypot(est[6].std_err, est[12].std_err)
        trend = gap[12] <= gap[6] + 3 * pooled
        return (gap[12] <= 0.05 and trend), gap[12], 0.05, (
            f"gap6={gap[6]:.4f} gap12={gap[12]:.4f} pooled_se={pooled:.4f}")

    return _timed(3, "finite-n oracle convergence", 600, body)


def i_mmse_error(prior: Prior, r_grid, h: float = 1e-3) -> float:
    """max over r > 0 of |I'(r) - mmse(r)/2|, I' by Richardson central differences."""
    worst = 0.0
    for r in r_grid:
        step = min(h * max(1.0, r), r / 2)
        d1 = (priors.mutual_info(prior, r + step) - priors.mutual_info(prior, r - step)) / (2 * step)
        s2 = step / 2
        d2 = (priors.mutual_info(prior, r + s2) - priors.mutual_info(prior, r - s2)) / (2 * s2)
        worst = max(worst, abs((4 * d2 - d1) / 3 - 0.5 * priors.mmse(prior, r)))
    return worst


def i_mmse_suite(quick=False, threads=1, seed=0) -> CheckResult:
    def body():
        grid = np.geomspace(1e-2, 50.0, 9 if quick else 30)
        kinds = {
            "gaussian": Prior.gaussian(1.3),
            "rademacher": Prior.rademacher(),
            "gauss_bernoulli": Prior.gauss_bernoulli(1.0, 0.1),
            "discrete": Prior.discrete([-1.0, 0.0, 2.0], [0.3, 0.5, 0.2]),
        }
        errs = {k: i_mmse_error(p, grid) for k, p in kinds.items()}
        worst = max(errs.values())
        return worst <= 1e-5, worst, 1e-5, " ".join(f"{k}={v:.1e}" for k, v in errs.items())

    return _timed(4, "I-MMSE relation", 10, body)


def _mp_mean_residual(ens: Ensemble, seed, realizations: int, zs) -> float:
    vals = []
    for k in range(realizations):
        phi_prime, w = sample_phi(ens, derive(seed, "acceptance_5", ens.n, k))
        spec_T = esd_T(phi_prime, ens.n)
        spec_R = esd_R(phi_prime @ w)
        vals.append(max(mp_identity_residual(spec_R, spec_T, z) for z in zs))
    return float(np.mean(vals))


def marchenko_pastur(quick=False, threads=1, seed=5) -> CheckResult:
    def body():
        zs = (-0.5, -1.0, -2.0)
        reps = 2 if quick else 6
        worst, shrinks, parts = 0.0, True, []
        for k in (1, 2):
            r1 = _mp_mean_residual(Ensemble("gaussian_product", 1000, 1000, k), seed, reps, zs)
            r2 = _mp_mean_residual(Ensemble("gaussian_product", 2000, 2000, k), seed, reps, zs)
            worst = max(worst, r1)
            shrinks = shrinks and r2 < r1
            parts.append(f"K={k}: n1000={r1:.2e} n2000={r2:.2e}")
        return (worst <= 0.05 and shrinks), worst, 0.05, " ".join(parts)

    return _timed(5, "Marchenko-Pastur identity", 120, body)


def r_transform_crosscheck(quick=False, threads=1, seed=6) -> CheckResult:
    def body():
        ens = Ensemble("gaussian_product", 1000, 1000, 1)
        phi_prime, w = sample_phi(ens, derive(seed, "acceptance_6"))
        spec_T, spec_R = esd_T(phi_prime, ens.n), esd_R(phi_prime @ w)
        diffs = [abs(r_transform(spec_T, u) - r_transform_from_stieltjes(spec_R, u))
                 for u in (0.3, 0.7, 1.5)]
        worst = max(diffs)
        return worst <= 1e-2, worst, 1e-2, " ".join(f"{d:.1e}" for d in diffs)

    return _timed(6, "R-transform vs Stieltjes inversion", 60, body)


def interp_boundary(quick=False, threads=1, seed=8) -> CheckResult:
    def body():
        trials = 500 if quick else 5000
        path = InterpPath.constant(0.5, 0.5, (0.1, 0.1))
        rep = boundary_check(Prior.rademacher(), Ensemble("gaussian_product", 4, 8, 1), path,
                             trials, derive(seed, "acceptance_7"), threads=threads)
        return rep.z_score <= 4, rep.z_score, 4, f"gap={rep.gap:.2e} se={rep.gap_se:.2e}"

    return _timed(7, "t=1 boundary identity", 300, body)


def interp_derivative(quick=False, threads=1, seed=9) -> CheckResult:
    def body():
        trials = 1000 if quick else 10_000
        path = InterpPath.constant(0.5, 0.5, (0.1, 0.1))
        rep = derivative_check(Prior.rademacher(), Ensemble("gaussian_product", 3, 6, 1), path, 0.5,
                               trials, derive(seed, "acceptance_8"), threads=threads)
        bound = 3 * rep.gap_se + rep.bias_bound
        return abs(rep.gap) <= bound, abs(rep.gap), bound, (
            f"lhs={rep.lhs:.5f} rhs={rep.rhs:.5f} se={rep.gap_se:.1e} bias={rep.bias_bound:.1e} "
            f"remainder={rep.remainder:.1e}")

    return _timed(8, "t-derivative identity", 900, body)


NISHIMORI_PRIORS = {
    "rademacher": Prior.rademacher(),
    "ternary": Prior.discrete([-1.0, 0.0, 1.0], [0.25, 0.5, 0.25]),
    "binary01": Prior.discrete([0.0, 1.0], [0.7, 0.3]),
}
NISHIMORI_ENSEMBLES = {
    "identity": Ensemble("identity_scaled", 4, 8),
    "product2": Ensemble("gaussian_product", 4, 8, 2),
}
NISHIMORI_LAMBDAS = (0.5, 1.0, 2.0)
MISMATCHED = Prior.discrete([0.0, 1.0], [0.2, 0.8])


def nishimori(quick=False, threads=1, seed=10) -> CheckResult:
    def body():
        trials = 300 if quick else 2000
        worst = 0.0
        for pi, (pname, pr) in enumerate(NISHIMORI_PRIORS.items()):
            for ei, ens in enumerate(NISHIMORI_ENSEMBLES.values()):
                for li, lam in enumerate(NISHIMORI_LAMBDAS):
                    z = nishimori_residual(pr, ens, lam, trials,
                                           derive(seed, "acceptance_9", pi, ei, li), threads=threads)
                    worst = max(worst, z)
        neg = nishimori_residual(NISHIMORI_PRIORS["binary01"], NISHIMORI_ENSEMBLES["identity"], 2.0,
                                 trials, derive(seed, "acceptance_9_control"),
                                 posterior_prior=MISMATCHED, threads=threads)
        return (worst <= 4 and neg > 4), worst, 4, f"negative_control_z={neg:.1f}"

    return _timed(9, "Nishimori identity grid", 600, body)


def overlap_trend(quick=False, threads=1, seed=11) -> CheckResult:
    def body():
        trials = 200 if quick else 1000
        var = {}
        for n in (6, 10, 14):
            st = posterior_stats(Prior.rademacher(), Ensemble("identity_scaled", n // 2, n), 1.0,
                                 trials, derive(seed, "acceptance_10", n), threads=threads)
            var[n] = st.overlap_variance
        ok = var[6] > var[10] > var[14]
        return ok, var[14], var[10], " ".join(f"n={n}:{v:.4f}" for n, v in var.items())

    return _timed(10, "overlap variance decreasing in n", 600, body)


DETERMINISM_CONFIGS = {
    "replica": """
        prior = gauss_bernoulli
        prior.rho = 1.0
        prior.sparsity = 0.2
        ensemble = gaussian_product
        ensemble.factors = 2
        n = 40
        m = 20
        spectrum_source = sampled
        lambda_grid = [0.0, 0.5, 1.0, 2.0, 4.0]
    """,
    "oracle": """
        prior = rademacher
        ensemble = gaussian_product
        n = 8
        m = 4
        n_grid = [4, 8]
        lambda_grid = [0.5, 1.0]
        trials = 64
    """,
    "interp": """
        prior = rademacher
        ensemble = identity_scaled
        n = 6
        m = 3
        trials = 32
        check = derivative
    """,
}


def determinism(quick=False, threads=1, seed=12) -> CheckResult:
    from .cli import csv_body, run
    from .config import parse_config, with_overrides

    def body():
        mismatched = []
        with tempfile.TemporaryDirectory() as tmp:
            for command, text in DETERMINISM_CONFIGS.items():
                cfg = parse_config("\n".join(line.strip() for line in text.splitlines()))
                bodies = []
                for rep, th in enumerate((1, 1, 8, 8)):
                    out = str(Path(tmp) / f"{command}_{rep}.csv")
                    c = with_overrides(cfg, command=command, output_path=out, master_seed=seed)
                    if run(c, th) != 0:
                        mismatched.append(f"{command}:exit")
                    bodies.append(csv_body(Path(out).read_text()))
                if len(set(bodies)) != 1:
                    mismatched.append(command)
        return not mismatched, len(mismatched), 0, "mismatch: " + ",".join(mismatched) if mismatched else ""

    return _timed(11, "determinism across threads", 60, body)


CHECKS = (
    gaussian_logdet_agreement,
    iid_reduction,
    finite_n_convergence,
    i_mmse_suite,
    marchenko_pastur,
    r_transform_crosscheck,
    interp_boundary,
    interp_derivative,
    nishimori,
    overlap_trend,
    determinism,
)


def run_all(quick: bool = False, threads: int = 1, stream=sys.stdout) -> list[CheckResult]:
    results = []
    for check in CHECKS:
        res = check(quick=quick, threads=threads)
        if stream is not None:
            print(res.line(), file=stream, flush=True)
        results.append(res)
    return results
