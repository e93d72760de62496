"""Command-line front end: ``swelab {selftest,sample,lil,propagate,slepian}``.

Exit codes: 0 success, 1 check failure, 2 config error, 3 resolution or
resource error.  JSON outputs have the shape ``{"meta": ..., "results": ...}``
and only ``meta.timestamp`` varies between identical runs.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from . import __version__, _accel, config, gaussian, lil, riesz, sampler, selftest
from .errors import ConditioningError, ConfigError, DomainError, ResolutionError, ResourceError

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RESOLUTION = 0, 1, 2, 3


def _clean(obj: Any) -> Any:
    """JSON-safe copy: drop private keys, map numpy scalars, spell out non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items() if not str(k).startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def _write_json(path: Path, command: str, raw_cfg, cfg, results) -> None:
    doc = {
        "meta": {
            "command": command,
            "version": __version__,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "config": raw_cfg,
            "effective_config": cfg,
            "seed": cfg["experiment"]["seed"],
            "backend": _accel.backend_name(),
        },
        "results": _clean(results),
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _band(value) -> riesz.Band:
    if value is None:
        return None
    lo, hi = value
    return (float(lo), math.inf if hi is None else float(hi))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_selftest(cfg, raw, out_dir: Optional[Path], threads: int) -> int:
    report = selftest.run_selftest(cfg["model"]["betas"])
    if out_dir is None:
        doc = {"meta": {"command": "selftest", "config": raw}, "results": _clean(report)}
        json.dump(doc, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        _write_json(out_dir / "selftest.json", "selftest", raw, cfg, report)
    print(f"selftest: {report['n_checks'] - report['n_failed']}/{report['n_checks']} checks passed", file=sys.stderr)
    for name in report["failed"]:
        print(f"  FAILED {name}", file=sys.stderr)
    return EXIT_OK if report["all_pass"] else EXIT_CHECK


def cmd_sample(cfg, raw, out_dir: Path, threads: int) -> int:
    p = riesz.make_params(cfg["model"]["beta"])
    g, ex = cfg["grid"], cfg["experiment"]
    sc = ex["sample"]
    comp = sc["component"]
    seed = ex["seed"]
    if comp == "v1":
        samples = sampler.sample_fbm_crosssection(p, sc["tau0"], g["lambda_values"], seed, sc["n_reps"], g["max_jitter"])
        jitter = None
        grid = samples[0].grid
    else:
        band = {"field": _band(g["time_band"]), "u1": riesz.early_band(sc["tau0"]),
                "u2": riesz.late_band(sc["tau0"])}[comp]
        grid = sampler.GridSpec(tuple(g["tau_values"]), tuple(g["lambda_values"]), band, g["cap"])
        m = sampler.factorize(sampler.assemble_covariance(p, grid), g["max_jitter"])
        samples = sampler.sample(m, seed, sc["n_reps"])
        jitter = m.jitter_used
    results = {
        "component": comp,
        "beta": p.beta,
        "dims": {"tau": grid.shape[0], "lambda": grid.shape[1], "replications": len(samples)},
        "time_band": None if grid.time_band is None else list(grid.time_band),
        "jitter_used": jitter,
        "files": [],
    }
    if cfg["output"]["csv"]:
        sampler.write_csv(samples, out_dir / "samples.csv")
        results["files"].append("samples.csv")
    if cfg["output"]["binary"]:
        sampler.write_binary(samples, out_dir / "field.bin", p.beta)
        results["files"] += ["field.bin", "field.json"]
    _write_json(out_dir / "sample.json", "sample", raw, cfg, results)
    return EXIT_OK


def cmd_lil(cfg, raw, out_dir: Path, threads: int) -> int:
    ex, sc = cfg["experiment"], cfg["scales"]
    lc = ex["lil"]
    lcfg = lil.LilConfig(
        beta=cfg["model"]["beta"], tau=lc["tau"], lam=lc["lam"], q=sc["q"], n_range=(sc["n_min"], sc["n_max"]),
        n_reps=lc["n_reps"], seed=ex["seed"], split_tau0=lc["split_tau0"], epsilon=lc["epsilon"],
        window=tuple(lc["window"]), max_jitter=cfg["grid"]["max_jitter"],
    )
    rep = lil.lil_experiment(lcfg)
    if cfg["output"]["csv"]:
        inc = rep["_u1_increments"] + rep["_u2_increments"]
        h = rep["_h"]
        lil_norm = lil.lil_normalizer(lcfg.tau, lcfg.lam, h, rep["beta"])
        mod_norm = lil.mod_normalizer(h, rep["beta"])
        rows = (
            (r, lcfg.tau, lcfg.lam, int(n), float(hv), float(inc[r, k]), float(abs(inc[r, k]) / lil_norm[k]),
             float(abs(inc[r, k]) / mod_norm[k]))
            for r in range(inc.shape[0])
            for k, (n, hv) in enumerate(zip(rep["_ns"], h))
        )
        _write_csv(out_dir / "lil_oscillations.csv",
                   ["replication_id", "tau", "lambda", "n", "h", "raw_increment", "lil_statistic", "mod_statistic"], rows)
    _write_json(out_dir / "lil.json", "lil", raw, cfg, rep)
    return EXIT_OK if rep["sandwich_violations"] == 0 else EXIT_CHECK


def _prop_config(cfg) -> lil.PropagationConfig:
    pc, sc = cfg["experiment"]["propagate"], cfg["scales"]
    return lil.PropagationConfig(
        beta=cfg["model"]["beta"], tau0=pc["tau0"], taus=tuple(pc["taus"]), seed=cfg["experiment"]["seed"],
        n_runs=pc["n_runs"], depth=pc["depth"], min_depth=pc["min_depth"], n_controls=pc["n_controls"],
        initial=tuple(pc["initial"]), path_span=pc["path_span"], path_steps=pc["path_steps"],
        guard_factor=pc["guard_factor"], stat_max_lag=pc["stat_max_lag"],
        envelope_n_range=(sc["envelope_n_min"], sc["envelope_n_max"]), envelope_halfwidth=pc["envelope_halfwidth"],
        ratio_threshold=pc["ratio_threshold"], control_window=tuple(pc["control_window"]),
        coverage_threshold=pc["coverage_threshold"], max_jitter=cfg["grid"]["max_jitter"],
    )


def cmd_propagate(cfg, raw, out_dir: Path, threads: int) -> int:
    pcfg = _prop_config(cfg)
    p = riesz.make_params(pcfg.beta)
    if threads > 1 and pcfg.n_runs > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rep = lil.propagation_experiment(p, pcfg.tau0, pcfg, map_fn=pool.map)
    else:
        rep = lil.propagation_experiment(p, pcfg.tau0, pcfg)
    if cfg["output"]["csv"]:
        rows = itertools.chain.from_iterable(r.get("_table", ()) for r in rep["runs"])
        _write_csv(out_dir / "propagate.csv", ["replication_id", "tau", "column", "lambda", "h", "increment",
                                               "mod_statistic"], rows)
    _write_json(out_dir / "propagate.json", "propagate", raw, cfg, rep)
    return EXIT_OK if rep.get("sandwich_violations", 0) == 0 else EXIT_CHECK


def cmd_slepian(cfg, raw, out_dir: Path, threads: int) -> int:
    sl = cfg["experiment"]["slepian"]
    records = [gaussian.slepian_identity_check(a, b, r)
               for a, b, r in itertools.product(sl["g1_values"], sl["g2_values"], sl["r_values"])]
    zero = [
        {"identity": "orthant_at_zero", "inputs": {"r": r},
         "deviation": abs(gaussian.bivariate_upper_orthant(0.0, 0.0, r) - gaussian.orthant_at_zero(r)),
         "tolerance": 1e-10}
        for r in sl["r_values"]
    ]
    for z in zero:
        z["pass"] = z["deviation"] <= z["tolerance"]
    dens = [gaussian.density_identity_check(a, b, r)
            for a, b, r in itertools.product(sl["g1_values"][:2], sl["g2_values"][:2], sl["r_values"])]
    p = riesz.make_params(cfg["model"]["beta"])
    grid = sampler.GridSpec((1.0,), tuple(sl["rate_grid_lambdas"]))
    m = sampler.factorize(sampler.assemble_covariance(p, grid), cfg["grid"]["max_jitter"])
    rate = gaussian.large_deviation_rate_probe(m, sl["gammas"], cfg["experiment"]["seed"], sl["rate_n_reps"])
    all_records = records + zero + dens
    results = {
        "n_identities": len(all_records),
        "n_failed": sum(not r["pass"] for r in all_records),
        "slepian": records,
        "orthant_at_zero": zero,
        "density_identity": dens,
        "large_deviation": rate,
    }
    _write_json(out_dir / "slepian.json", "slepian", raw, cfg, results)
    return EXIT_OK if results["n_failed"] == 0 else EXIT_CHECK


COMMANDS = {
    "selftest": cmd_selftest,
    "sample": cmd_sample,
    "lil": cmd_lil,
    "propagate": cmd_propagate,
    "slepian": cmd_slepian,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swelab",
        description="Covariance calculus, exact sampling and LIL experiments for the wave equation with Riesz noise.",
        epilog="Default configuration (every key optional except experiment.seed):\n" + config.defaults_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", metavar="PATH", help="JSON config file")
    parser.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    parser.add_argument("--seed", metavar="U64", type=int, help="seed (overrides experiment.seed)")
    parser.add_argument("--threads", metavar="N", type=int, default=os.cpu_count() or 1,
                        help="worker processes for replication loops (default: CPU count)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = config.load(args.config) if args.config else None
        if args.seed is not None and not (0 <= args.seed < 2**64):
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
        cfg = config.resolve(raw, args.seed)
        raw_echo = raw if raw is not None else cfg
        out_dir = None
        if args.command != "selftest" or args.out:
            out_dir = Path(args.out or cfg["output"]["dir"])
            out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, raw_echo, out_dir, max(1, int(args.threads)))
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResolutionError, ResourceError, ConditioningError) as exc:
        print(f"resolution error: {exc}", file=sys.stderr)
        return EXIT_RESOLUTION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
