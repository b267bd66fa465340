"""Command-line frontend.

Subcommands: synth, extract, unmix, gmbua, eval, render. Options mirror the
config keys in kebab-case; a JSON config file may supply any of them, with
command-line flags taking precedence. ``UNMIX_SEED`` overrides the master
seed. Exit codes: 2 config error, 3 data error, 4 solver hard failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import core
from .bundles import ExtractionConfig, ExtractionError, extract_library
from .config import ConfigError, UnmixConfig
from .consensus import ConsensusError, gmbua
from .evalkit import (
    METHODS,
    GenerationError,
    SynthSpec,
    gen_cube,
    monte_carlo,
    render_map,
)
from .penalties import PenaltyError, PenaltySpec
from .solver import SolverError, SolverParams, admm_unmix, aggregate_global
from .superpix import build_operators, slic_segment

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SOLVER = 4

# keys accepted in a JSON config file (snake_case of the CLI flags)
CONFIG_KEYS = {
    "n_materials", "penalty", "r", "s", "lam", "lam_c", "beta",
    "n_runs", "n_rounds", "pixel_fraction", "m_target", "compactness",
    "seed", "rho", "max_iter", "tol",
    "height", "width", "n_bands", "snr_db", "variability", "plant_pure",
    "methods", "repeats", "jobs",
}

DEFAULTS = {
    "n_materials": 5, "penalty": "group", "r": 2.0, "s": 0.5,
    "lam": 1e-3, "lam_c": 1e-2, "beta": 0.3,
    "n_runs": 10, "n_rounds": 10, "pixel_fraction": 0.1,
    "m_target": 0, "compactness": 0.005, "seed": 0,
    "rho": 0.1, "max_iter": 1000, "tol": 1e-6,
    "height": 50, "width": 50, "n_bands": 200, "snr_db": 20.0,
    "variability": 0.2, "plant_pure": True,
    "methods": "fclsu,gmbua", "repeats": 10, "jobs": 1,
}


def _load_config_file(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return raw


def _resolve(args) -> dict:
    """defaults < config file < explicit flags < UNMIX_SEED."""
    resolved = dict(DEFAULTS)
    if getattr(args, "config", None):
        resolved.update(_load_config_file(args.config))
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            resolved[key] = val
    env_seed = os.environ.get("UNMIX_SEED")
    if env_seed is not None:
        try:
            resolved["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"UNMIX_SEED must be an integer, got {env_seed!r}") from exc
    return resolved


def _echo_config(resolved: dict, out_dir: Path, name: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(
        json.dumps(resolved, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _penalty_spec(resolved) -> PenaltySpec:
    kind = resolved["penalty"]
    if kind == "fractional":
        return PenaltySpec(kind, r=float(resolved["r"]), s=float(resolved["s"]))
    return PenaltySpec(kind)


def _unmix_config(resolved) -> UnmixConfig:
    return UnmixConfig(
        n_materials=int(resolved["n_materials"]),
        penalty=_penalty_spec(resolved),
        lam=float(resolved["lam"]),
        lam_c=float(resolved["lam_c"]),
        beta=float(resolved["beta"]),
        n_runs=int(resolved["n_runs"]),
        n_rounds=int(resolved["n_rounds"]),
        pixel_fraction=float(resolved["pixel_fraction"]),
        m_target=int(resolved["m_target"]),
        compactness=float(resolved["compactness"]),
        seed=int(resolved["seed"]),
        n_jobs=int(resolved["jobs"]),
        solver=SolverParams(
            rho=float(resolved["rho"]),
            max_iter=int(resolved["max_iter"]),
            tol_primal=float(resolved["tol"]),
            tol_dual=float(resolved["tol"]),
        ),
    )


def _synth_spec(resolved) -> SynthSpec:
    snr = resolved["snr_db"]
    snr = math.inf if str(snr).lower() in ("inf", "+inf", "infinity") else float(snr)
    return SynthSpec(
        height=int(resolved["height"]),
        width=int(resolved["width"]),
        n_materials=int(resolved["n_materials"]),
        n_bands=int(resolved["n_bands"]),
        snr_db=snr,
        variability=float(resolved["variability"]),
        plant_pure=bool(resolved["plant_pure"]),
        seed=int(resolved["seed"]),
    )


def cmd_synth(args) -> int:
    resolved = _resolve(args)
    spec = _synth_spec(resolved)
    out = Path(args.out_dir)
    _echo_config(resolved, out, "synth_config.json")
    cube, gt = gen_cube(spec)
    core.save_cube(cube, out / "cube.raw")
    core.save_cube(gt.clean, out / "cube_clean.raw")
    core.save_abundance(gt.abundances, out / "abundances_gt.raw")
    np.asarray(gt.signatures, dtype="<f4").tofile(out / "signatures_gt.raw")
    print(f"wrote synthetic scene ({spec.height}x{spec.width}, "
          f"{spec.n_bands} bands, P={spec.n_materials}) to {out}")
    return 0


def cmd_extract(args) -> int:
    resolved = _resolve(args)
    out = Path(args.out_dir)
    _echo_config(resolved, out, "extract_config.json")
    cube = core.load_cube(args.cube)
    lib = extract_library(
        cube,
        ExtractionConfig(
            n_materials=int(resolved["n_materials"]),
            n_rounds=int(resolved["n_rounds"]),
            pixel_fraction=float(resolved["pixel_fraction"]),
            seed=int(resolved["seed"]),
        ),
    )
    core.save_library(lib, out / "library.raw")
    print(f"extracted library with {lib.n_signatures} signatures in "
          f"{lib.n_materials} groups")
    return 0


def cmd_unmix(args) -> int:
    resolved = _resolve(args)
    out = Path(args.out_dir)
    _echo_config(resolved, out, "unmix_config.json")
    cube = core.load_cube(args.cube)
    lib = core.load_library(args.library)
    cfg = _unmix_config(resolved)
    x, info = admm_unmix(
        cube.data, lib.signatures, lib.groups, cfg.penalty, cfg.lam, cfg.solver,
        trace=args.diagnostics,
    )
    core.save_abundance(x, out / "abundances_bundle.raw")
    core.save_abundance(aggregate_global(x), out / "abundances_global.raw")
    if args.diagnostics:
        with open(out / "residuals.csv", "w", encoding="utf-8") as fh:
            fh.write("iteration,primal,dual,objective,rho\n")
            for row in info.trace:
                fh.write(",".join(f"{v:.9g}" for v in row) + "\n")
    if not info.converged:
        print(f"warning: ADMM stopped at max_iter ({info.iterations}), "
              f"residuals {info.primal_residual:.2e}/{info.dual_residual:.2e}")
    print(f"unmixed in {info.iterations} iterations, objective {info.objective:.6g}")
    return 0


def cmd_gmbua(args) -> int:
    resolved = _resolve(args)
    out = Path(args.out_dir)
    _echo_config(resolved, out, "gmbua_config.json")
    cube = core.load_cube(args.cube)
    cfg = _unmix_config(resolved)
    result = gmbua(cube, cfg)
    core.save_abundance(result.representative, out / "abundances_best.raw")
    core.save_library(
        result.runs.libraries[result.selected_run], out / "library_best.raw"
    )
    if result.graph is not None:
        np.savetxt(out / "similarity.csv", result.graph.weights,
                   delimiter=",", fmt="%.9g")
        with open(out / "mst_edges.csv", "w", encoding="utf-8") as fh:
            fh.write("u,v,weight\n")
            for u, v, w in result.tree:
                fh.write(f"{u},{v},{w:.9g}\n")
    (out / "selected_run.txt").write_text(f"{result.selected_run}\n")
    z = result.representative.coefficients
    for p in range(z.shape[0]):
        render_map(z, p, cube.height, cube.width, out / f"abundance_{p}.pgm")
    print(f"selected run {result.selected_run} of {cfg.n_runs}")
    return 0


def cmd_eval(args) -> int:
    resolved = _resolve(args)
    out = Path(args.out_dir)
    _echo_config(resolved, out, "eval_config.json")
    methods = [m.strip() for m in str(resolved["methods"]).split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
    spec = _synth_spec(resolved)
    cfg = _unmix_config(resolved)
    report = monte_carlo(spec, methods, int(resolved["repeats"]), cfg,
                         csv_path=out / "report.csv",
                         n_jobs=int(resolved["jobs"]))
    for m in methods:
        print(f"{m}: median SRE(Z) {report.median(m):.2f} dB, "
              f"IQR {report.iqr(m):.2f} dB, failures {report.failures(m)}")
    return 0


def cmd_render(args) -> int:
    a = core.load_abundance(args.abundances)
    z = a.coefficients
    height, width = args.height, args.width
    if height * width != z.shape[1]:
        raise core.DataError("height*width must equal the pixel count")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suffix = ".png" if args.png else ".pgm"
    for p in range(z.shape[0]):
        render_map(z, p, height, width, out / f"abundance_{p}{suffix}")
    print(f"rendered {z.shape[0]} maps to {out}")
    return 0


def _add_common(sub, *, cube=False, library=False):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--out-dir", required=True)
    if cube:
        sub.add_argument("--cube", required=True, help="path to a .raw cube")
    if library:
        sub.add_argument("--library", required=True, help="path to a .raw library")
    for key in sorted(CONFIG_KEYS):
        flag = "--" + key.replace("_", "-")
        if key in ("methods", "penalty"):
            sub.add_argument(flag, type=str)
        elif key in ("plant_pure",):
            sub.add_argument(flag, type=lambda s: s.lower() in ("1", "true", "yes"))
        elif key in ("n_materials", "n_runs", "n_rounds", "m_target", "seed",
                     "max_iter", "height", "width", "n_bands", "repeats", "jobs"):
            sub.add_argument(flag, type=int)
        elif key == "snr_db":
            sub.add_argument(flag, type=str)
        else:
            sub.add_argument(flag, type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmbua",
        description="Multiscale bundle-based sparse unmixing with consensus "
                    "run selection",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("synth", help="generate a synthetic scene")
    _add_common(s)
    s.set_defaults(fn=cmd_synth)

    s = subs.add_parser("extract", help="extract a bundle library from a cube")
    _add_common(s, cube=True)
    s.set_defaults(fn=cmd_extract)

    s = subs.add_parser("unmix", help="single-scale sparse unmixing")
    _add_common(s, cube=True, library=True)
    s.add_argument("--diagnostics", action="store_true",
                   help="write per-iteration residuals CSV")
    s.set_defaults(fn=cmd_unmix)

    s = subs.add_parser("gmbua", help="full multiscale + consensus pipeline")
    _add_common(s, cube=True)
    s.set_defaults(fn=cmd_gmbua)

    s = subs.add_parser("eval", help="Monte-Carlo benchmark on synthetic data")
    _add_common(s)
    s.set_defaults(fn=cmd_eval)

    s = subs.add_parser("render", help="render abundance maps to images")
    s.add_argument("--abundances", required=True)
    s.add_argument("--height", type=int, required=True)
    s.add_argument("--width", type=int, required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--png", action="store_true")
    s.set_defaults(fn=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, PenaltyError, GenerationError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (core.DataError, ExtractionError, ConsensusError, OSError) as exc:
        if isinstance(exc.__cause__, SolverError):
            print(f"solver failure: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
