"""Command line entry point: ``dbrw <experiment> --config FILE [--seed S] [--threads T] [--out DIR]``.

Each run writes its CSV tables and a ``summary.json`` into the output
directory.  CSV bodies depend only on (config, seed); wall times and
timestamps live in the summary alone.

Exit codes: 0 success, 1 internal inconsistency, 2 configuration error,
3 budget exhausted.
"""

import argparse
import csv
import datetime as dt
import json
import logging
import math
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import chaining, experiments, rde, series, sssi
from .config import KINDS, ExperimentConfig, load, validate
from .errors import (BoundViolated, BudgetExceeded, ConfigError, ConstructionError,
                     DepthTooShallowForLevel, InternalInconsistency)
from .laws import moment_1overH
from .tree_sim import SimConfig, dfs_supremum, max_ray_exceedance_tail, run_replicas, walk

log = logging.getLogger("dbrw")

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "numba", "pyyaml"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if hasattr(x, "to_dict"):
        return _jsonable(x.to_dict())
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    return x


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(r[h]) for h in header])


def _sim_config(cfg, seed):
    p = cfg.params
    return SimConfig(p["increment"], p["offspring"], p["H"], p["N"], seed,
                     p.get("node_budget", 200_000_000))


# -- experiments -------------------------------------------------------------

def run_simulate(cfg, out):
    sim = _sim_config(cfg, cfg.seed)
    trajs = run_replicas(sim, cfg["replicas"], dfs_supremum, "simulate", cfg.threads)
    rows = [{"replica": r, "depth": k, "max_signed": float(t.max_signed[k]),
             "max_abs": float(t.max_abs[k])}
            for r, t in enumerate(trajs) for k in range(sim.depth + 1)]
    _write_rows(out / "simulate.csv", ["replica", "depth", "max_signed", "max_abs"], rows)
    return {"replicas": len(trajs),
            "survived": sum(t.survived for t in trajs),
            "nodes_visited": sum(t.nodes_visited for t in trajs),
            "median_final_max_abs": float(np.median([t.max_abs[-1] for t in trajs])),
            "underflow": any(t.underflow for t in trajs)}


def run_phase(cfg, out):
    p = cfg.params
    results = experiments.phase_scan(p["grid"], p["offspring"], p["N"], p["replicas"], cfg.seed,
                                     cfg.threads, p["node_budget"],
                                     flat_threshold=p["flat_threshold"],
                                     grow_threshold=p["grow_threshold"])
    experiments.write_phase_csv(results, out / "phase.csv")
    experiments.write_verdicts_csv(results, out / "verdicts.csv")
    report = {"cells": [r.to_dict() for r in results],
              "hard_disagreements": sum(r.hard_disagreement for r in results),
              "confusion": {f"{a}|{b}": n for (a, b), n in experiments.confusion(results).items()}}
    if p["calibrate"]:
        report["calibration"] = experiments.calibrate_anchors(p["N"], p["replicas"], cfg.seed,
                                                              cfg.threads)
    return report


def run_lemmas(cfg, out):
    p = cfg.params
    m = p["offspring"].mean
    P = series.compute_P(p["increment"], m, p["H"])
    report = {"P": P.to_dict(), "m": m, "H": p["H"]}
    if not P.finite:
        raise ConfigError("the exceedance bound needs a law with E|Y|^(1/H) finite")
    rows = series.lemma_rows(p["increment"], m, p["H"], p["n_points"], p["u_min"])
    _write_rows(out / "lemmas.csv", ["u", "series_value", "bound", "pass"], rows)
    report.update(C=series.c_constant(m, P.value), rows=len(rows),
                  violations=sum(not r["pass"] for r in rows))
    return report


def run_exceedance(cfg, out):
    p = cfg.params
    sim = _sim_config(cfg, cfg.seed)
    P = series.compute_P(p["increment"], sim.m, sim.H)
    rows = max_ray_exceedance_tail(sim, p["u"], p["r_values"], p["replicas"],
                                   P.value if P.finite else math.inf, threads=cfg.threads)
    _write_rows(out / "exceedance.csv",
                ["r", "hits", "replicas", "p_hat", "ci_lo", "ci_hi", "bound"], rows)
    report = {"P": P.to_dict(), "tail": rows}
    if p["levels"]:
        us = [series.u_threshold(sim.H, n) for n in p["levels"]]
        walks = run_replicas(sim, p["replicas"], walk, "exceedance_levels", cfg.threads,
                             thresholds=us)
        if any(w.truncated for w in walks):
            raise BudgetExceeded("exceedance: a replica exhausted its node budget")
        level_rows = []
        for j, (n, u) in enumerate(zip(p["levels"], us)):
            counts = np.array([w.exceedances(j).total_count for w in walks], dtype=float)
            expected = series.expected_exceedance(p["increment"], sim.m, sim.H, u).value
            bound = (series.c_constant(sim.m, P.value) * u ** (-1.0 / sim.H)
                     if P.finite and P.value > 0 else math.inf)
            level_rows.append({"n": n, "u": u, "mc_mean": float(counts.mean()),
                               "mc_se": float(counts.std(ddof=1) / math.sqrt(counts.size))
                               if counts.size > 1 else math.inf,
                               "expected": expected, "bound": bound})
        _write_rows(out / "exceedance_levels.csv",
                    ["n", "u", "mc_mean", "mc_se", "expected", "bound"], level_rows)
        report["levels"] = level_rows
    return report


def run_chain(cfg, out):
    p = cfg.params
    sim = _sim_config(cfg, cfg.seed)
    rep = chaining.chain_report(sim, p["n_max"], p["rule"], p["bernoulli"], p["mc_replicas"])
    _write_rows(out / "chain.csv", ["level", "cardinality", "diameter", "gamma2_cum"], rep.rows())
    if p["dump_partitions"]:
        seq = chaining.build_partitions(chaining.extract_raypoints(sim), p["n_max"], p["rule"])
        chaining.dump_partitions_csv(seq, out / "partitions.csv")
    if rep.admissibility_violations or rep.structural_violations:
        raise InternalInconsistency(
            f"partition checks failed: {rep.admissibility_violations + rep.structural_violations}")
    return rep.to_dict()


def run_rde(cfg, out):
    p = cfg.params
    rep = rde.iterate_to_fixpoint(p["increment"], p["offspring"], p["c"], p["pool_size"],
                                  p["max_iters"], p["ks_tol"], cfg.seed, p["init"], p["escalate"])
    _write_rows(out / "rde.csv", ["iter", "ks_gap", "median"], rep.rows())
    if p["dump_pool"] and rep.converged:
        rde.write_pool_csv(rep.cdf, out / "pool.csv")
    return rep.to_dict()


def run_sssi(cfg, out):
    p = cfg.params
    sk = sssi.SkeletonConfig(p["p"], p["c"], p["increment"], p["K_max"], cfg.seed)
    K_range = list(range(p["K_min"], p["K_max"] + 1))
    maxima, verdict = sssi.boundedness_scan(sk, K_range, p["replicas"])
    sssi.write_scan_csv(maxima, K_range, out / "sssi.csv")
    report = {"H": sk.H, "verdict": verdict.to_dict(),
              "moment_finite": moment_1overH(p["increment"], sk.H).finite}
    if p["equivalence_K"]:
        stat, pval = sssi.equivalence_test(sk.with_K(p["equivalence_K"]), p["equivalence_replicas"])
        report["equivalence"] = {"K": p["equivalence_K"], "ks": stat, "p_value": pval}
    return report


RUNNERS = {"simulate": run_simulate, "phase": run_phase, "lemmas": run_lemmas,
           "exceedance": run_exceedance, "chain": run_chain, "rde": run_rde, "sssi": run_sssi}


def run(cfg: ExperimentConfig):
    """Execute ``cfg``; returns the summary dict (also written to ``summary.json``)."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    started = dt.datetime.now(dt.timezone.utc).isoformat()
    t0 = time.perf_counter()
    report = RUNNERS[cfg.kind](cfg, out)
    summary = {"experiment": cfg.kind, "seed": cfg.seed, "threads": cfg.threads,
               "config": cfg.raw, "versions": _versions(), "started_at": started,
               "wall_time_s": time.perf_counter() - t0, "report": report}
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2) + "\n")
    return summary


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML or JSON experiment config")
    common.add_argument("--seed", type=int, help="base seed (overrides the config)")
    common.add_argument("--threads", type=int, help="replica worker threads")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="dbrw", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="experiment", required=True)
    for kind in KINDS:
        sub.add_parser(kind, parents=[common])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.config, args.experiment)
        raw = dict(cfg.raw)
        for key in ("seed", "threads", "out"):
            if getattr(args, key) is not None:
                raw[key] = getattr(args, key)
        cfg = validate(raw, args.experiment)
        summary = run(cfg)
    except (ConfigError, ConstructionError, DepthTooShallowForLevel, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (InternalInconsistency, BoundViolated) as exc:
        print(f"internal inconsistency: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    log.info("wrote %s in %.2fs", cfg.out, summary["wall_time_s"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
