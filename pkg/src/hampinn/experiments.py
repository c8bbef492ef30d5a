"""Accuracy sweeps over collocation count and parameter noise.

Each trial draws couplings, optionally perturbs them, simulates a dataset,
fits it and scores the fit against the unperturbed couplings.  Trial ``i``
uses seeds derived from ``(master_seed, i)`` only, so every sweep point sees
the same couplings and noise pattern (scaled by sigma) and results do not
depend on scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import sim
from .pauli import Preset
from .trainer import OptimizationError, TrainConfig, fit

log = logging.getLogger(__name__)

RAW_HEADER = ("value", "trial", "mae", "converged", "status")


@dataclass
class BoxplotStats:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    outliers: list
    count: int


def boxplot_stats(values) -> BoxplotStats:
    """Quartiles by linear interpolation; whiskers at the extreme non-outliers.

    Outliers fall outside ``[Q1 - 1.5 IQR, Q3 + 1.5 IQR]``.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("boxplot_stats needs at least one value")
    if not np.all(np.isfinite(x)):
        raise ValueError("boxplot_stats needs finite values")
    q1, med, q3 = np.percentile(x, [25, 50, 75], method="linear")
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo) & (x <= hi)]
    outliers = sorted(float(v) for v in x[(x < lo) | (x > hi)])
    return BoxplotStats(float(inside.min()), float(q1), float(med), float(q3),
                        float(inside.max()), outliers, int(x.size))


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def trial_seeds(master_seed: int, trial: int) -> dict:
    return {
        "couplings": derive_seed(master_seed, trial, 0),
        "noise": derive_seed(master_seed, trial, 1),
        "fit": derive_seed(master_seed, trial, 2),
    }


@dataclass
class SweepConfig:
    preset: Preset
    kind: str                      # "collocation" or "noise"
    values: list
    n_points: int = 5              # fixed N for noise sweeps
    sigma: float = 0.0             # fixed sigma for collocation sweeps
    trials: int = 50
    t_final: float = sim.DEFAULT_T
    seed: int = 0
    out: Optional[str] = None
    workers: int = 1
    train: dict = field(default_factory=dict)

    def __post_init__(self):
        self.preset = Preset.parse(self.preset)
        if self.kind not in ("collocation", "noise"):
            raise ValueError(f"unknown sweep kind {self.kind!r}")
        if not self.values:
            raise ValueError("sweep list is empty")
        if self.kind == "collocation":
            self.values = [int(v) for v in self.values]
            if min(self.values) < 2:
                raise ValueError("collocation counts must be >= 2")
        else:
            self.values = [float(v) for v in self.values]
            if min(self.values) < 0:
                raise ValueError("noise levels must be >= 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.sigma < 0 or self.n_points < 2:
            raise ValueError("invalid fixed sigma or N")

    def point(self, value) -> tuple[int, float]:
        """``(N, sigma)`` for a sweep value."""
        if self.kind == "collocation":
            return int(value), self.sigma
        return self.n_points, float(value)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["preset"] = self.preset.value
        return out


@dataclass
class TrialRecord:
    value: float
    trial: int
    mae: Optional[float]
    converged: bool
    status: str
    error: str = ""


def make_trial_dataset(preset, n_points, sigma, t_final, master_seed, trial):
    """Couplings ``J0``, dataset simulated from ``J0 + E``, and the fit seed."""
    seeds = trial_seeds(master_seed, trial)
    J0 = sim.sample_couplings(seeds["couplings"], t_final, preset, sim.MIN_ABS_FRACTION)
    J = sim.perturb_couplings(J0, sigma, seeds["noise"], t_final, preset)
    ds = sim.generate_dataset(J, N=n_points, T=t_final, true_couplings=J0,
                              sigma=sigma, preset=preset, seed=seeds["couplings"])
    return ds, seeds["fit"]


def run_trial(preset, n_points, sigma, t_final, master_seed, trial, value, train) -> TrialRecord:
    ds, fit_seed = make_trial_dataset(preset, n_points, sigma, t_final, master_seed, trial)
    config = TrainConfig(preset=preset, seed=fit_seed, **train)
    try:
        result = fit(ds, config)
    except OptimizationError as exc:
        return TrialRecord(value, trial, None, False, "failed", str(exc))
    return TrialRecord(value, trial, result.mae, result.converged, "ok")


def _run_trial_args(args):
    return run_trial(*args)


def run_sweep(config: SweepConfig) -> dict:
    jobs = []
    for value in config.values:
        n_points, sigma = config.point(value)
        for trial in range(config.trials):
            jobs.append((config.preset, n_points, sigma, config.t_final, config.seed,
                         trial, value, config.train))
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_run_trial_args, jobs))
    else:
        records = []
        for job in jobs:
            records.append(run_trial(*job))
            rec = records[-1]
            log.info("value=%s trial=%d mae=%s", rec.value, rec.trial, rec.mae)
    report = build_report(config, records)
    if config.out:
        write_sweep(report, records, config.out)
    return report


def run_collocation_sweep(config: SweepConfig) -> dict:
    if config.kind != "collocation":
        raise ValueError("expected a collocation sweep config")
    return run_sweep(config)


def run_noise_sweep(config: SweepConfig) -> dict:
    if config.kind != "noise":
        raise ValueError("expected a noise sweep config")
    return run_sweep(config)


def build_report(config: SweepConfig, records) -> dict:
    points = []
    for value in config.values:
        mine = [r for r in records if r.value == value]
        ok = [r.mae for r in mine if r.status == "ok" and r.mae is not None]
        points.append({
            "value": value,
            "trials": len(mine),
            "failed": len(mine) - len(ok),
            "stats": asdict(boxplot_stats(ok)) if ok else None,
            "mae": ok,
        })
    return {
        "config": config.to_dict(),
        "near_zero_resampling": f"|J| < {sim.MIN_ABS_FRACTION} * omega_0 redrawn",
        "points": points,
        "failures": [asdict(r) for r in records if r.status != "ok"],
    }


def format_raw_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RAW_HEADER)
    for r in records:
        writer.writerow([repr(r.value), r.trial, "" if r.mae is None else repr(float(r.mae)),
                         int(r.converged), r.status])
    return buf.getvalue()


def write_sweep(report: dict, records, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "raw.csv").write_text(format_raw_csv(records))
    (out / "report.json").write_text(json.dumps(report, indent=1) + "\n")


def stats_from_raw_csv(path) -> dict:
    """Recompute per-value BoxplotStats from a raw sweep CSV."""
    groups: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RAW_HEADER:
            raise ValueError(f"{path}: expected header {','.join(RAW_HEADER)}")
        for row in reader:
            groups.setdefault(row["value"], [])
            if row["status"] == "ok" and row["mae"]:
                mae = float(row["mae"])
                if math.isfinite(mae):
                    groups[row["value"]].append(mae)
    return {value: (asdict(boxplot_stats(v)) if v else None) for value, v in groups.items()}
