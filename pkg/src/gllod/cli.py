"""Command-line driver.

Every subcommand resolves an effective configuration (config file plus
flag overrides), echoes it, and writes results under

    <outdir>/<subcommand>/<config-hash>/

The hash is derived from the effective config alone, so a rerun with
identical inputs lands in the same directory and overwrites it.  Exit
codes: 0 success, 2 configuration problem, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from gllod import experiments as ex
from gllod import forms, lod, minimize, spaces, spectrum

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class _ConfigError(Exception):
    pass


class _NumericalError(Exception):
    pass


# ----------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------

def _int_list(text):
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _initial(text):
    return int(text) if text.lstrip("+-").isdigit() else text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gllod",
        description="Ginzburg-Landau minimizers in multiscale finite element spaces",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, help_text, **extra_flags):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--outdir", default="out", help="output root (default: ./out)")
        p.add_argument(
            "--cache-dir",
            help="LOD basis cache directory (default: <outdir>/cache)",
        )
        p.add_argument("--kappa", type=float, help="Ginzburg-Landau parameter")
        p.add_argument("--coarse", type=int, dest="coarse_n", help="coarse mesh n")
        p.add_argument("--fine", type=int, dest="fine_n", help="fine mesh n")
        p.add_argument("--layers", type=int, help="corrector patch layers")
        p.add_argument(
            "--initial", type=_initial, help="initial value index 1..10 or field CSV path"
        )
        p.add_argument("--space", choices=ex.SPACE_KINDS, help="discrete space kind")
        p.add_argument("--tol", type=float, help="descent termination tolerance")
        p.add_argument("--max-iter", type=int, dest="max_iter", help="iteration cap")
        for flag, kwargs in extra_flags.items():
            p.add_argument(flag, **kwargs)
        return p

    add("build-lod", "build and cache a multiscale basis")
    add(
        "minimize",
        "run one energy minimization",
        **{"--log-every": dict(type=int, default=1, help="trace thinning (reserved)")},
    )
    add(
        "table",
        "energy table over initial values and kappas",
        **{
            "--kappas": dict(type=_float_list, help="comma-separated kappa values"),
            "--initials": dict(type=_int_list, help="comma-separated initial indices"),
            "--jobs": dict(type=int, default=1, help="concurrent cells"),
        },
    )
    add(
        "rate-study",
        "convergence rates against a fine reference minimizer",
        **{
            "--levels": dict(type=_int_list, help="comma-separated coarse n ladder"),
            "--level-spacing": dict(
                type=float, help="energy spacing between nearby local levels"
            ),
        },
    )
    add(
        "spectrum",
        "minimize, then classify the constrained Hessian spectrum",
        **{"--k": dict(type=int, default=spectrum.DEFAULT_K, help="eigenpair count")},
    )
    add("export", "write the configured initial value as a field CSV")
    return parser


def _effective_config(args, defaults=None) -> ex.ExperimentConfig:
    data = dict(defaults or {})
    if args.config is not None:
        if not os.path.exists(args.config):
            raise _ConfigError(f"config file not found: {args.config}")
        try:
            data = ex.config_to_dict(ex.load_config(args.config))
        except ValueError as exc:
            raise _ConfigError(str(exc)) from exc
    for key in ("kappa", "coarse_n", "fine_n", "layers", "initial", "space",
                "tol", "max_iter"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    try:
        return ex.config_from_dict(data)
    except ValueError as exc:
        raise _ConfigError(str(exc)) from exc


def _config_hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("ascii")).hexdigest()[:12]


def _prepare_outdir(args, config, extras=None):
    payload = ex.config_to_dict(config)
    if extras:
        payload = {**payload, **extras}
    rundir = os.path.join(args.outdir, args.subcommand, _config_hash(payload))
    os.makedirs(rundir, exist_ok=True)
    with open(os.path.join(rundir, "config.json"), "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"config: {json.dumps(payload, sort_keys=True)}")
    print(f"output: {rundir}")
    return rundir


def _cache_dir(args):
    path = args.cache_dir if args.cache_dir else os.path.join(args.outdir, "cache")
    os.makedirs(path, exist_ok=True)
    return path


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def _cmd_build_lod(args) -> int:
    config = _effective_config(args)
    if config.space != "lod":
        raise _ConfigError("build-lod requires space=lod")
    rundir = _prepare_outdir(args, config)
    t0 = time.perf_counter()
    try:
        space = ex.build_space(config, cache_dir=_cache_dir(args))
    except RuntimeError as exc:
        raise _NumericalError(str(exc)) from exc
    elapsed = time.perf_counter() - t0
    basis_path = os.path.join(rundir, "basis.bin")
    hier = ex.build_hierarchy(config)
    params = forms.experiment_params(config.kappa)
    mat = space.basis
    basis = lod.LodBasis(hierarchy=hier, params=params, layers=config.layers, basis=mat)
    lod.save_basis(basis_path, basis)
    kind = "dense" if isinstance(mat, np.ndarray) else f"sparse, nnz={mat.nnz}"
    print(f"basis: shape {mat.shape}, {kind}, built in {elapsed:.1f}s")
    return EXIT_OK


def _cmd_minimize(args) -> int:
    config = _effective_config(args)
    rundir = _prepare_outdir(args, config)
    space = ex.build_space(config, cache_dir=_cache_dir(args))
    with open(os.path.join(rundir, "run.log"), "w", encoding="ascii") as log:
        try:
            run = ex.run_cell(config, space=space, log=log)
        except (RuntimeError, ValueError) as exc:
            raise _NumericalError(str(exc)) from exc
    with open(os.path.join(rundir, "field.csv"), "w", encoding="ascii", newline="") as fh:
        ex.export_field(run.final, fh)
    summary = {
        "energy": run.final_energy,
        "iterations": run.iterations,
        "termination": run.termination,
    }
    with open(os.path.join(rundir, "summary.json"), "w", encoding="ascii") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"energy={run.final_energy!r} iterations={run.iterations} "
        f"termination={run.termination}"
    )
    if run.termination != "converged":
        raise _NumericalError(f"descent terminated with {run.termination}")
    return EXIT_OK


def _cmd_table(args) -> int:
    config = _effective_config(args)
    kappas = args.kappas if args.kappas else [config.kappa]
    initials = args.initials if args.initials else list(range(1, 11))
    for j in initials:
        if not 1 <= j <= 10:
            raise _ConfigError(f"initial value index must be in 1..10, got {j}")
    rundir = _prepare_outdir(
        args, config, extras={"kappas": kappas, "initials": initials}
    )
    try:
        rows = ex.run_table(
            config, kappas, initials, cache_dir=_cache_dir(args), jobs=args.jobs
        )
    except (RuntimeError, ValueError) as exc:
        raise _NumericalError(str(exc)) from exc
    with open(os.path.join(rundir, "table.csv"), "w", encoding="ascii", newline="") as fh:
        ex.write_table(rows, fh)
    for row in rows:
        print(
            f"initial={row.initial} kappa={row.kappa} energy={row.energy!r} "
            f"iterations={row.iterations} termination={row.termination}"
        )
    return EXIT_OK


def _cmd_rate_study(args) -> int:
    # coarse_n is replaced per ladder rung and layers are saturated per
    # rung, so neither needs to be supplied
    config = _effective_config(args, defaults={"coarse_n": 1, "layers": 0})
    levels = args.levels if args.levels else [4, 8, 16, 32]
    rundir = _prepare_outdir(
        args, config,
        extras={"levels": levels, "level_spacing": args.level_spacing},
    )
    with open(os.path.join(rundir, "study.log"), "w", encoding="ascii") as log:
        try:
            study = ex.rate_study(
                config, levels, level_spacing=args.level_spacing,
                cache_dir=_cache_dir(args), log=log,
            )
            gaps = ex.energy_gap_study(study)
        except (RuntimeError, ValueError) as exc:
            raise _NumericalError(str(exc)) from exc
    with open(os.path.join(rundir, "levels.csv"), "w", encoding="ascii", newline="") as fh:
        fh.write("n,h,energy,iterations,termination,h1_error,l2_error,excluded,reason\n")
        for r in study.levels:
            fh.write(
                f"{r.n},{r.h!r},{r.energy!r},{r.iterations},{r.termination},"
                f"{r.h1_error!r},{r.l2_error!r},{int(r.excluded)},{r.reason}\n"
            )
    kept = [r for r in study.levels if not r.excluded]
    result = {
        "reference_energy": study.reference_energy,
        "h1_slope": study.h1_slope,
        "l2_slope": study.l2_slope,
        "gap_slope": gaps.slope,
        "gaps": gaps.gaps,
        "flags": gaps.flags,
        "kept_levels": [r.n for r in kept],
    }
    with open(os.path.join(rundir, "rates.json"), "w", encoding="ascii") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"h1_slope={study.h1_slope:.3f} l2_slope={study.l2_slope:.3f} "
        f"gap_slope={gaps.slope:.3f} kept={[r.n for r in kept]}"
    )
    for flag in gaps.flags:
        print(f"flag: {flag}")
    return EXIT_OK


def _cmd_spectrum(args) -> int:
    config = _effective_config(args)
    rundir = _prepare_outdir(args, config, extras={"k": args.k})
    space = ex.build_space(config, cache_dir=_cache_dir(args))
    try:
        run = ex.run_cell(config, space=space)
        if run.termination != "converged":
            raise _NumericalError(f"descent terminated with {run.termination}")
        report = spectrum.hessian_spectrum(space, run.coefficients, k=args.k)
    except (RuntimeError, ValueError) as exc:
        raise _NumericalError(str(exc)) from exc
    payload = {"energy": run.final_energy, **report.as_dict()}
    with open(os.path.join(rundir, "spectrum.json"), "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    evals = " ".join(f"{v:.3e}" for v in report.eigenvalues)
    print(f"classification={report.classification} gap={report.gap!r}")
    print(f"eigenvalues: {evals}")
    return EXIT_OK


def _cmd_export(args) -> int:
    # the initial value lives on the fine mesh alone, so the solver keys
    # need not be supplied just to write a CSV
    config = _effective_config(args, defaults={"kappa": 1.0, "coarse_n": 1, "layers": 0})
    rundir = _prepare_outdir(args, config)
    fine = ex.build_hierarchy(config).fine
    try:
        field = ex.load_initial(config, fine)
    except ValueError as exc:
        raise _ConfigError(str(exc)) from exc
    with open(os.path.join(rundir, "field.csv"), "w", encoding="ascii", newline="") as fh:
        ex.export_field(field, fh)
    print(f"wrote initial value {config.initial!r} on n={fine.n}")
    return EXIT_OK


_COMMANDS = {
    "build-lod": _cmd_build_lod,
    "minimize": _cmd_minimize,
    "table": _cmd_table,
    "rate-study": _cmd_rate_study,
    "spectrum": _cmd_spectrum,
    "export": _cmd_export,
}


def dispatch(argv) -> int:
    """Parse argv and run one subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.subcommand](args)
    except _ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_CONFIG
    except _NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
