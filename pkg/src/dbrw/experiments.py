"""Phase-transition scan: empirical growth verdicts against the moment classifier."""

from dataclasses import dataclass, field
import csv
import math

import numpy as np

from .errors import BudgetExceeded
from .growth import (FLAT_THRESHOLD, GROW_THRESHOLD, ambiguous, classify_growth,
                     hard_disagreement)
from .laws import Deterministic, Gaussian, IncrementLaw, SymmetricPareto
from .series import classify_boundedness
from .tree_sim import SimConfig, dfs_supremum, run_replicas


@dataclass(frozen=True)
class PhaseCell:
    H: float
    law: IncrementLaw

    @property
    def theta_or_beta(self):
        if self.law.kind in ("pareto", "sym_pareto"):
            return self.law.theta
        if self.law.kind == "log_pareto":
            return self.law.beta
        return math.nan

    @property
    def params(self):
        d = self.law.to_dict()
        kind = d.pop("kind")
        return kind + "(" + ",".join(f"{k}={v!r}" for k, v in d.items()) + ")"


@dataclass
class PhaseCellResult:
    cell: PhaseCell
    medians: np.ndarray = field(repr=False)
    verdict: object
    classifier: str
    replicas: int
    budget_exceeded: bool = False

    @property
    def hard_disagreement(self):
        return hard_disagreement(self.verdict, self.classifier)

    def to_dict(self):
        return {"H": self.cell.H, "params": self.cell.params, **self.verdict.to_dict(),
                "classifier": self.classifier, "budget_exceeded": self.budget_exceeded}


def _max_abs(cfg):
    return dfs_supremum(cfg).max_abs


def run_cell(cell, offspring, depth, replicas, seed, threads=None, node_budget=None,
             growth_seed=0, flat_threshold=FLAT_THRESHOLD, grow_threshold=GROW_THRESHOLD):
    kw = {} if node_budget is None else {"node_budget": node_budget}
    cfg = SimConfig(cell.law, offspring, cell.H, depth, seed, **kw)
    classifier = classify_boundedness(cell.law, offspring, cell.H).value
    try:
        traj = np.array(run_replicas(cfg, replicas, _max_abs, "phase", threads))
    except BudgetExceeded:
        nan = np.full(depth + 1, math.nan)
        return PhaseCellResult(cell, nan, ambiguous(math.ceil(depth / 2), depth), classifier,
                               replicas, True)
    v = classify_growth(traj, seed=growth_seed, flat_threshold=flat_threshold,
                        grow_threshold=grow_threshold)
    return PhaseCellResult(cell, np.median(traj, axis=0), v, classifier, replicas)


def phase_scan(cells, offspring=Deterministic(2), depth=24, replicas=32, seed=0, threads=None,
               node_budget=None, **growth_kw):
    """One PhaseCellResult per (H, law) cell; a cell whose replicas blow the budget is Ambiguous."""
    return [run_cell(c, offspring, depth, replicas, seed, threads, node_budget, **growth_kw)
            for c in cells]


def standard_grid(theta=1.0, H_values=(0.5, 0.75, 1.5, 2.0)):
    return [PhaseCell(H, SymmetricPareto(theta)) for H in H_values]


def confusion(results):
    """Counts keyed by (growth verdict, classifier verdict)."""
    out = {}
    for r in results:
        key = (r.verdict.verdict, r.classifier)
        out[key] = out.get(key, 0) + 1
    return out


def calibrate_anchors(depth=24, replicas=32, seed=0, threads=None, theta=1.0, H=1.0):
    """Slopes on the surely-Flat (Gaussian) and surely-Growing (Pareto, H = theta/4) anchors.

    Thresholds are fixed; the anchors only record that they separate the two
    regimes at this budget.
    """
    flat = run_cell(PhaseCell(H, Gaussian(1.0)), Deterministic(2), depth, replicas, seed, threads)
    grow = run_cell(PhaseCell(theta / 4, SymmetricPareto(theta)), Deterministic(2), depth,
                    replicas, seed, threads)
    return {
        "flat_anchor": flat.to_dict(),
        "growing_anchor": grow.to_dict(),
        "flat_threshold": FLAT_THRESHOLD,
        "grow_threshold": GROW_THRESHOLD,
        "separated": bool(flat.verdict.ci_hi < FLAT_THRESHOLD and grow.verdict.ci_lo > GROW_THRESHOLD),
    }


def write_phase_csv(results, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["H", "theta_or_beta", "depth", "median_max_abs", "replicas"])
        for r in results:
            for k, v in enumerate(r.medians):
                w.writerow([repr(r.cell.H), repr(r.cell.theta_or_beta), k, repr(float(v)), r.replicas])


def write_verdicts_csv(results, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["H", "params", "slope", "ci_lo", "ci_hi", "verdict", "classifier"])
        for r in results:
            v = r.verdict
            w.writerow([repr(r.cell.H), r.cell.params, repr(v.slope), repr(v.ci_lo), repr(v.ci_hi),
                        v.verdict, r.classifier])
