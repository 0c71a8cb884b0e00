"""Command-line front end: simulate, fit, summarize, validate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.
Configuration precedence for `fit` is CLI flags over config file over
built-in defaults; config files are flat JSON objects or key=value lines
mirroring the documented keys.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import TimeGridDataset
from .errors import DataError, DiffmixError, NumericalError, UsageError
from .estimation import gelman_rubin, summarize
from .gibbs import GammaPrior, PosteriorDraws, SamplerConfig, run_chain
from .measure import StickConfig
from .mixture import CenteringMeasure, simulate_toy
from .validate import FULL_CHECKS, run_validation

CONFIG_KEYS = {
    "burn_in": int, "iters": int, "thin": int, "seed": int,
    "slice_eta": float, "trans_slice_eta": float,
    "theta_prior_shape": float, "theta_prior_rate": float,
    "c_prior_shape": float, "c_prior_rate": float,
    "fix_theta": float, "fix_c": float, "tie_c_to_theta": bool,
    "m_cap": int, "stick_kind": str, "sigma": float,
    "centering_mean0": float, "centering_precision_scale": float,
    "centering_shape": float, "centering_rate": float,
    "chains": int,
}

DEFAULTS = {
    "burn_in": 500, "iters": 1000, "thin": 1, "seed": 0,
    "slice_eta": 0.5, "trans_slice_eta": 0.5,
    "theta_prior_shape": 2.0, "theta_prior_rate": 0.5,
    "c_prior_shape": 2.0, "c_prior_rate": 0.5,
    "fix_theta": None, "fix_c": None, "tie_c_to_theta": False,
    "m_cap": 512, "stick_kind": "dp", "sigma": 0.0,
    "centering_mean0": 0.0, "centering_precision_scale": 1e-3,
    "centering_shape": 10.0, "centering_rate": 1.0,
    "chains": 1,
}


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage problems via UsageError."""

    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="diffmix",
                     description="Time-varying density estimation with "
                                 "diffusing stick-breaking mixtures")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write a synthetic dataset CSV")
    sim.add_argument("--times", type=int, default=100,
                     help="number of equally spaced observation times")
    sim.add_argument("--per-time", type=int, default=1,
                     help="observations per time")
    sim.add_argument("--t-max", type=float, default=10.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)

    fit = sub.add_parser("fit", help="run the Gibbs sampler on a dataset")
    fit.add_argument("data", help="input CSV with columns time,value")
    fit.add_argument("--out", required=True, help="draws archive path")
    fit.add_argument("--config", help="JSON or key=value config file")
    fit.add_argument("--burn-in", type=int, dest="burn_in")
    fit.add_argument("--iters", type=int)
    fit.add_argument("--thin", type=int)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--chains", type=int)
    fit.add_argument("--workers", type=int, default=1,
                     help="process workers for multi-chain runs")
    fit.add_argument("--eta", type=float, dest="slice_eta",
                     help="membership slice decay rate in (0,1)")
    fit.add_argument("--trans-eta", type=float, dest="trans_slice_eta",
                     help="transition slice decay rate in (0,1)")
    fit.add_argument("--theta-prior", metavar="SHAPE,RATE")
    fit.add_argument("--c-prior", metavar="SHAPE,RATE")
    fit.add_argument("--fix-theta", type=float, dest="fix_theta")
    fit.add_argument("--fix-c", type=float, dest="fix_c")
    fit.add_argument("--tie-c", action="store_true", default=None,
                     dest="tie_c_to_theta",
                     help="enforce c = theta / 2 instead of sampling c")
    fit.add_argument("--m-cap", type=int, dest="m_cap")
    fit.add_argument("--stick", choices=("dp", "pitman-yor"),
                     dest="stick_kind")
    fit.add_argument("--sigma", type=float,
                     help="Pitman-Yor discount in [0,1)")
    fit.add_argument("--centering", metavar="MEAN0,PSCALE,SHAPE,RATE",
                     help="normal-gamma atom prior parameters")
    fit.add_argument("--date-column",
                     help="parse this CSV column as ISO dates mapped to days")
    fit.add_argument("--telemetry", help="per-sweep key=value log file")
    fit.add_argument("--checkpoint", help="checkpoint archive path")
    fit.add_argument("--checkpoint-every", type=int)
    fit.add_argument("--resume", help="resume from a checkpoint archive")
    fit.add_argument("--quiet", action="store_true")

    summ = sub.add_parser("summarize", help="reduce draws to surface exports")
    summ.add_argument("draws", help="draws archive from fit")
    summ.add_argument("--out-prefix", required=True)
    summ.add_argument("--y-grid", metavar="LO:HI:COUNT",
                      help="evaluation grid; default derives from the draws")
    summ.add_argument("--data", help="dataset CSV, used for the default grid")

    val = sub.add_parser("validate", help="run the analytic-identity battery")
    val.add_argument("--quick", action="store_true",
                     help="fast subset, under a minute")
    val.add_argument("--checks", help="comma-separated subset of checks: "
                     + ", ".join(FULL_CHECKS))
    val.add_argument("--seed", type=int, default=0)
    val.add_argument("--report", help="also write the report to this file")
    return parser


def _parse_pair(text: str, flag: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError(f"{flag} expects SHAPE,RATE")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise UsageError(f"{flag}: cannot parse {text!r}") from exc


def _load_config_file(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    text = text.strip()
    raw: dict = {}
    if text.startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON: {exc}") from exc
    else:
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            raw[key.strip()] = value.strip()
    out = {}
    for key, value in raw.items():
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}: unknown config key {key!r}")
        caster = CONFIG_KEYS[key]
        try:
            if caster is bool and isinstance(value, str):
                out[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                out[key] = caster(value)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"{path}: bad value for {key}: {value!r}") from exc
    return out


def _resolve_settings(args) -> dict:
    settings = dict(DEFAULTS)
    if args.config:
        settings.update(_load_config_file(args.config))
    for key in CONFIG_KEYS:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            settings[key] = flag_val
    if args.theta_prior is not None:
        settings["theta_prior_shape"], settings["theta_prior_rate"] = \
            _parse_pair(args.theta_prior, "--theta-prior")
    if args.c_prior is not None:
        settings["c_prior_shape"], settings["c_prior_rate"] = \
            _parse_pair(args.c_prior, "--c-prior")
    if args.centering is not None:
        parts = args.centering.split(",")
        if len(parts) != 4:
            raise UsageError("--centering expects MEAN0,PSCALE,SHAPE,RATE")
        try:
            (settings["centering_mean0"],
             settings["centering_precision_scale"],
             settings["centering_shape"],
             settings["centering_rate"]) = (float(x) for x in parts)
        except ValueError as exc:
            raise UsageError(f"--centering: cannot parse {args.centering!r}") \
                from exc
    return settings


def _sampler_config(settings: dict) -> SamplerConfig:
    kind = settings["stick_kind"].replace("-", "_")
    theta_seed = settings["fix_theta"] if settings["fix_theta"] else 1.0
    if kind == "dp":
        stick = StickConfig.dp(theta_seed, c=1.0)
    elif kind == "pitman_yor":
        stick = StickConfig.pitman_yor(theta_seed, settings["sigma"], c=1.0)
    else:
        raise UsageError(f"unsupported stick kind {settings['stick_kind']!r}")
    centering = CenteringMeasure(
        mean0=settings["centering_mean0"],
        precision_scale=settings["centering_precision_scale"],
        shape=settings["centering_shape"],
        rate=settings["centering_rate"])
    try:
        return SamplerConfig(
            stick=stick, centering=centering,
            slice_eta=settings["slice_eta"],
            trans_slice_eta=settings["trans_slice_eta"],
            iters=settings["iters"], burn_in=settings["burn_in"],
            thin=settings["thin"],
            theta_prior=GammaPrior(settings["theta_prior_shape"],
                                   settings["theta_prior_rate"]),
            c_prior=GammaPrior(settings["c_prior_shape"],
                               settings["c_prior_rate"]),
            fix_theta=settings["fix_theta"], fix_c=settings["fix_c"],
            tie_c_to_theta=settings["tie_c_to_theta"],
            m_cap=settings["m_cap"], seed=settings["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _chain_path(base: str, chain: int, chains: int) -> str:
    if chains == 1:
        return base
    p = Path(base)
    return str(p.with_name(f"{p.stem}.chain{chain}{p.suffix}"))


def _fit_one(payload):
    data, cfg, out_path, telemetry_path, checkpoint, every, resume = payload
    telemetry = open(telemetry_path, "w", encoding="utf-8") \
        if telemetry_path else None
    try:
        draws = run_chain(data, cfg, telemetry=telemetry,
                          checkpoint_path=checkpoint,
                          checkpoint_every=every, resume_from=resume)
    finally:
        if telemetry is not None:
            telemetry.close()
    draws.save(out_path)
    return out_path, draws.theta


def cmd_simulate(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.times < 1 or args.per_time < 1 or args.t_max <= 0:
        raise UsageError("--times, --per-time must be >= 1 and --t-max > 0")
    dataset = simulate_toy(args.times, args.per_time, args.t_max, rng)
    dataset.to_csv(args.out)
    print(f"wrote {dataset.n_obs} observations at {dataset.n_times} times "
          f"to {args.out}")
    return 0


def cmd_fit(args) -> int:
    settings = _resolve_settings(args)
    cfg = _sampler_config(settings)
    data = TimeGridDataset.from_csv(args.data, date_column=args.date_column)
    chains = settings["chains"]
    if chains < 1:
        raise UsageError("chains must be >= 1")
    if args.resume and chains != 1:
        raise UsageError("--resume supports a single chain")
    jobs = []
    for chain in range(chains):
        chain_cfg = replace(cfg, seed=cfg.seed + chain)
        out_path = _chain_path(args.out, chain, chains)
        telemetry = _chain_path(args.telemetry, chain, chains) \
            if args.telemetry else None
        checkpoint = _chain_path(args.checkpoint, chain, chains) \
            if args.checkpoint else None
        jobs.append((data, chain_cfg, out_path, telemetry, checkpoint,
                     args.checkpoint_every, args.resume))
    if args.workers > 1 and chains > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_fit_one, jobs))
    else:
        results = [_fit_one(job) for job in jobs]
    theta_traces = []
    for out_path, theta in results:
        if not args.quiet:
            print(f"wrote {out_path} ({len(theta)} draws)")
        theta_traces.append(theta)
    if chains >= 2 and cfg.fix_theta is None and len(theta_traces[0]) >= 10:
        psrf = gelman_rubin(theta_traces)
        if not args.quiet:
            print(f"psrf_theta={psrf:.4f}")
    return 0


def _default_grid(draws: PosteriorDraws, data_path, date_column=None):
    if data_path:
        data = TimeGridDataset.from_csv(data_path, date_column=date_column)
        y, _ = data.flat
        lo, hi = float(y.min()), float(y.max())
        pad = 0.2 * (hi - lo) + 1e-6
    else:
        lo = float(np.nanmin(draws.atom_mean))
        hi = float(np.nanmax(draws.atom_mean))
        pad = 0.1 * (hi - lo) + 1.0
    return np.linspace(lo - pad, hi + pad, 128)


def cmd_summarize(args) -> int:
    draws = PosteriorDraws.load(args.draws)
    if args.y_grid:
        parts = args.y_grid.split(":")
        if len(parts) != 3:
            raise UsageError("--y-grid expects LO:HI:COUNT")
        try:
            lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise UsageError(f"--y-grid: cannot parse {args.y_grid!r}") from exc
        if count < 2 or not hi > lo:
            raise UsageError("--y-grid needs HI > LO and COUNT >= 2")
        grid = np.linspace(lo, hi, count)
    else:
        grid = _default_grid(draws, args.data)
    surface = summarize(draws, grid)
    prefix = args.out_prefix
    surface.to_density_csv(f"{prefix}.density.csv")
    surface.to_mean_csv(f"{prefix}.mean.csv")
    surface.to_json(f"{prefix}.json")
    print(f"wrote {prefix}.density.csv, {prefix}.mean.csv, {prefix}.json")
    return 0


def cmd_validate(args) -> int:
    names = None
    if args.checks:
        names = tuple(s.strip() for s in args.checks.split(",") if s.strip())
    try:
        results = run_validation(names=names, quick=args.quick,
                                 seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    lines = [res.line() for res in results]
    n_fail = sum(not res.passed for res in results)
    lines.append(f"summary checks={len(results)} failures={n_fail}")
    report = "\n".join(lines)
    print(report)
    if args.report:
        Path(args.report).write_text(report + "\n", encoding="utf-8")
    if n_fail:
        raise NumericalError(f"{n_fail} validation check(s) failed")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "simulate": cmd_simulate,
            "fit": cmd_fit,
            "summarize": cmd_summarize,
            "validate": cmd_validate,
        }[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except DiffmixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
