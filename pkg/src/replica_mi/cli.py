"""Command-line runner: one subcommand per module, CSV out."""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config, with_overrides
from .errors import InvalidArgument, NumericalFailure, UnsupportedOperation
from .gibbs import exact_mi, exact_mi_gaussian
from .interp import boundary_check, derivative_check, interp_mi
from .potential import extremize, extremize_all
from .seeding import derive, map_ordered
from .spectra import limiting_spectrum_T, r_transform, sampled_spectrum_T, shannon_G

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def fmt(value) -> str:
    """Locale-free cell text; floats carry 17 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def render_csv(header: dict, columns: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    for key, value in header.items():
        buf.write(f"# {key}={value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def csv_body(text: str) -> str:
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def read_csv(path) -> tuple[dict[str, str], list[dict[str, str]]]:
    """Inverse of ``render_csv``: header block and rows as strings."""
    header, body = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            header[key] = value
        else:
            body.append(line)
    return header, list(csv.DictReader(body))


def _header(cfg: RunConfig, **extra) -> dict:
    head = {"artifact_version": __version__, "seed": cfg.master_seed}
    head.update(cfg.header())
    head.update(extra)
    return head


def _write(path: str, text: str) -> None:
    p = Path(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True)
    p.write_text(text, encoding="utf-8")


def _spectrum_T(cfg: RunConfig, ens):
    if cfg.spectrum_source == "sampled":
        return sampled_spectrum_T(ens, derive(cfg.master_seed, "spectrum"), cfg.realizations)
    return limiting_spectrum_T(ens, derive(cfg.master_seed, "limit"))


# subcommands ---------------------------------------------------------------


def run_replica(cfg: RunConfig, threads: int = 1) -> list[str]:
    prior, quad = cfg.make_prior(), cfg.make_quad()
    spec_T = _spectrum_T(cfg, cfg.make_ensemble())

    def one(i):
        lam = cfg.lambda_grid[i]
        res = extremize_all(prior, spec_T, lam, quad)
        main = res[cfg.formulation]
        values = [r.value for r in res.values()]
        return [lam, main.E_star, main.r_star, main.value, main.n_fixed_points,
                main.boundary, max(values) - min(values)]

    rows = map_ordered(one, len(cfg.lambda_grid), threads)
    columns = ["lambda", "E_star", "r_star", "i_rs_value", "n_fixed_points", "boundary_flag",
               "formulation_spread"]
    _write(cfg.output_path, render_csv(_header(cfg), columns, rows))
    return [cfg.output_path]


def transforms_path(output_path: str) -> str:
    p = Path(output_path)
    return str(p.with_name(p.stem + "_transforms" + (p.suffix or ".csv")))


def run_spectrum(cfg: RunConfig, threads: int = 1) -> list[str]:
    spec = _spectrum_T(cfg, cfg.make_ensemble())
    head = _header(cfg, spectrum_kind=spec.source, alpha=fmt(spec.alpha))
    rows = [[x, w] for x, w in zip(spec.eigenvalues, spec.weights)]
    _write(cfg.output_path, render_csv(head, ["eigenvalue", "weight"], rows))
    u = np.asarray(cfg.u_grid, dtype=float)
    trows = [[ui, r_transform(spec, ui), shannon_G(spec, ui)] for ui in u]
    second = transforms_path(cfg.output_path)
    _write(second, render_csv(head, ["u", "R_of_minus_u", "G_of_u"], trows))
    return [cfg.output_path, second]


def run_oracle(cfg: RunConfig, threads: int = 1) -> list[str]:
    prior, quad = cfg.make_prior(), cfg.make_quad()
    if not (prior.is_discrete or prior.kind == "gaussian"):
        raise UnsupportedOperation(f"no finite-n oracle for prior kind {prior.kind!r}")
    rows = []
    for n in cfg.n_grid or (cfg.n,):
        ens = cfg.make_ensemble(n)
        spec_T = limiting_spectrum_T(ens, derive(cfg.master_seed, "limit"))
        for i, lam in enumerate(cfg.lambda_grid):
            seed = derive(cfg.master_seed, "oracle", ens.n, i)
            if prior.kind == "gaussian":
                est = exact_mi_gaussian(ens, prior.rho, lam, cfg.trials, seed, threads)
            else:
                est = exact_mi(prior, ens, lam, cfg.trials, seed, threads)
            replica = extremize(prior, spec_T, lam, cfg.formulation, quad).value
            gap = est.value - replica
            z = abs(gap) / est.std_err if est.std_err > 0 else float("inf")
            rows.append([ens.n, ens.m, lam, est.value, est.std_err, replica, gap, z])
    columns = ["n", "m", "lambda", "i_n_hat", "std_err", "replica_value", "gap", "gap_over_se"]
    _write(cfg.output_path, render_csv(_header(cfg), columns, rows))
    return [cfg.output_path]


def run_interp(cfg: RunConfig, threads: int = 1) -> list[str]:
    prior, ens, path = cfg.make_prior(), cfg.make_ensemble(), cfg.make_path()
    rows = []
    for i, lam in enumerate(cfg.lambda_grid):
        seed = derive(cfg.master_seed, "interp_cli", i)
        if cfg.check == "none":
            est = interp_mi(prior, ens, path, cfg.t, cfg.trials, seed, lam, threads)
            rows.append([lam, cfg.t, path.R1(cfg.t), path.R2(cfg.t), est.value, est.std_err])
            columns = ["lambda", "t", "R1", "R2", "value", "std_err"]
        elif cfg.check == "boundary":
            rep = boundary_check(prior, ens, path, cfg.trials, seed, lam, threads)
            sh = rep.shannon
            rows.append([lam, rep.lhs, rep.rhs, rep.gap, rep.gap_se, rep.z_score,
                         sh.empirical, sh.empirical_se, sh.asymptotic, sh.gap])
            columns = ["lambda", "lhs", "rhs", "gap", "gap_se", "z_score", "shannon_empirical",
                       "shannon_empirical_se", "shannon_asymptotic", "shannon_gap"]
        else:
            rep = derivative_check(prior, ens, path, cfg.t, cfg.trials, seed, cfg.h, lam, threads)
            rows.append([lam, rep.t, rep.h, rep.lhs, rep.rhs, rep.overlap_term, rep.bracket_term,
                         rep.remainder, rep.mean_overlap, rep.gap, rep.gap_se, rep.bias_bound,
                         rep.status])
            columns = ["lambda", "t", "h", "lhs", "rhs", "overlap_term", "bracket_term",
                       "remainder", "mean_overlap", "gap", "gap_se", "bias_bound", "status"]
    _write(cfg.output_path, render_csv(_header(cfg), columns, rows))
    return [cfg.output_path]


def run_selftest(cfg: RunConfig | None, threads: int = 1, out: str | None = None,
                 quick: bool = False, stream=sys.stdout) -> bool:
    from .acceptance import run_all

    results = run_all(quick=quick, threads=threads, stream=stream)
    rows = [[r.criterion, r.name, r.passed, r.statistic, r.threshold, r.seconds] for r in results]
    head = {"artifact_version": __version__, "quick": fmt(quick)}
    if out:
        _write(out, render_csv(head, ["criterion", "name", "passed", "statistic", "threshold",
                                      "seconds"], rows))
    return all(r.passed for r in results)


RUNNERS = {
    "replica": run_replica,
    "spectrum": run_spectrum,
    "oracle": run_oracle,
    "interp": run_interp,
}


def run(cfg: RunConfig, threads: int = 1) -> int:
    """Dispatch ``cfg.command``; returns a process exit status."""
    try:
        if cfg.command == "selftest":
            ok = run_selftest(cfg, threads, cfg.output_path, cfg.quick)
            return EXIT_OK if ok else EXIT_CHECK_FAILED
        RUNNERS[cfg.command](cfg, threads)
    except NumericalFailure as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except (InvalidArgument, UnsupportedOperation) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="replica-mi", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("replica", "spectrum", "oracle", "interp", "selftest"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "selftest", help="key = value config file")
        p.add_argument("--out", help="output CSV path (overrides output_path)")
        p.add_argument("--seed", type=int, help="master seed (overrides master_seed)")
        p.add_argument("--threads", type=int, default=1)
        if name == "interp":
            p.add_argument("--t", type=float)
            p.add_argument("--eps1", type=float)
            p.add_argument("--eps2", type=float)
            p.add_argument("--path-file", nargs=2, metavar=("R_TABLE", "E_TABLE"),
                           help="two-column 't value' tables for r(t) and E(t)")
            p.add_argument("--check", choices=("none", "boundary", "derivative"))
        if name == "selftest":
            p.add_argument("--quick", action="store_true", help="reduced trial counts")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        log.error("--threads must be >= 1")
        return EXIT_USAGE
    if args.command == "selftest" and not args.config:
        ok = run_selftest(None, args.threads, args.out, args.quick)
        return EXIT_OK if ok else EXIT_CHECK_FAILED
    try:
        cfg = load_config(args.config)
        changes = dict(command=args.command, output_path=args.out, master_seed=args.seed)
        if args.command == "interp":
            changes.update(t=args.t, eps1=args.eps1, eps2=args.eps2, check=args.check)
            if args.path_file:
                changes.update(path_r_file=args.path_file[0], path_E_file=args.path_file[1])
        if args.command == "selftest" and args.quick:
            changes["quick"] = True
        cfg = with_overrides(cfg, **changes)
    except InvalidArgument as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_IO
    return run(cfg, args.threads)


if __name__ == "__main__":
    sys.exit(main())
