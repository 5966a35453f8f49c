"""Seeded batch experiments with statistical summaries.

Three studies: the cold/warm median relative-error comparison between the
splitting solver and the ADMM baseline, the objective-based early
termination study, and the centrality trace.  All outputs are deterministic
functions of (config, base seed); trial t uses seed base_seed + t.  Outputs
are long-format CSVs (schema-versioned, append-safe), SVG charts rendered
from the same data, and a JSON summary per study.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import admm as admm_mod
from . import splitting as split_mod
from . import svgplot
from .design import two_block_params
from .metrics import centrality, mean_distance
from .problem import build_adjacency, generate_instance
from .splitting import InnerOptions, SolverOptions

log = logging.getLogger(__name__)

KNOWN_METHODS = ("splitting", "admm")
KNOWN_STARTS = ("cold", "warm")


@dataclass
class ExperimentConfig:
    trials: int = 50
    n: int = 30
    m: int = 6
    d: int = 2
    radius: float = 0.7
    max_degree: int = 7
    noise_factor: float = 0.05
    methods: tuple = ("splitting", "admm")
    starts: tuple = ("cold",)
    gamma: float = 0.999
    alpha_splitting: float = 10.0
    alpha_admm: float = 150.0
    max_iter: int = 300
    warm_sd: float = 0.2
    patience: int = 100
    convergence_max_iter: int = 3000
    fp_tol: float = 1e-5
    base_seed: int = 0
    output_dir: str = "results"

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.starts = tuple(self.starts)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for m in self.methods:
            if m not in KNOWN_METHODS:
                raise ValueError(f"unknown method {m!r}")
        for s in self.starts:
            if s not in KNOWN_STARTS:
                raise ValueError(f"unknown start {s!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls(**json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())


def trial_seed(config: ExperimentConfig, index: int) -> int:
    return config.base_seed + index


def _solver_options(config: ExperimentConfig, method: str, **overrides) -> SolverOptions:
    alpha = config.alpha_splitting if method == "splitting" else config.alpha_admm
    kwargs = dict(gamma=config.gamma, alpha=alpha, max_iter=config.max_iter,
                  fp_tol=0.0, inner=InnerOptions())
    kwargs.update(overrides)
    return SolverOptions(**kwargs)


def _run_method(inst, params, method, start, config, options, seed):
    if start == "warm":
        X_tilde = split_mod.perturb_truth(inst, config.warm_sd, seed)
    if method == "splitting":
        initial = (split_mod.warm_start_v(inst, params, X_tilde, options)
                   if start == "warm" else None)
        return split_mod.run(inst, params, options, initial=initial)
    initial = (admm_mod.warm_start_admm(inst, X_tilde, options)
               if start == "warm" else None)
    return admm_mod.run_admm(inst, options, initial=initial)


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists()
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(header)
        writer.writerows(rows)
    return str(path)


def read_long_csv(path, schema: str):
    """Round-trip loader; checks every row carries the expected schema tag."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        if row["schema"] != schema:
            raise ValueError(f"schema mismatch: {row['schema']} != {schema}")
    return rows


def _out_dir(config: ExperimentConfig, override) -> Path:
    out = Path(override) if override is not None else Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Study 1: median relative error, splitting vs ADMM, cold and warm starts.

COMPARISON_SCHEMA = "comparison.v1"


def run_comparison(config: ExperimentConfig, out_dir=None) -> dict:
    out = _out_dir(config, out_dir)
    curves: dict = {(m, s): [] for m in config.methods for s in config.starts}
    failures = []
    for t in range(config.trials):
        seed = trial_seed(config, t)
        try:
            inst = generate_instance(config.n, config.m, config.d,
                                     config.radius, config.max_degree,
                                     config.noise_factor, seed)
            params = two_block_params(build_adjacency(inst))
            for method in config.methods:
                options = _solver_options(config, method)
                for start in config.starts:
                    trace = _run_method(inst, params, method, start, config,
                                        options, seed)
                    curves[(method, start)].append(trace.rel_error_history)
        except Exception as exc:  # partial failure: record and exclude
            log.warning("trial %d failed: %s", t, exc)
            failures.append({"trial": t, "seed": seed, "error": str(exc)})
    stats = {}
    rows = []
    for (method, start), series in curves.items():
        if not series:
            continue
        arr = np.asarray(series)
        med = np.median(arr, axis=0)
        q25 = np.percentile(arr, 25, axis=0)
        q75 = np.percentile(arr, 75, axis=0)
        stats[(method, start)] = {"median": med, "q25": q25, "q75": q75,
                                  "per_trial": arr}
        for k in range(arr.shape[1]):
            rows.append([COMPARISON_SCHEMA, method, start, k + 1,
                         f"{med[k]:.10g}", f"{q25[k]:.10g}", f"{q75[k]:.10g}"])
    csv_path = _write_csv(out / "comparison.csv",
                          ["schema", "method", "start", "iteration",
                           "median_rel_error", "q25_rel_error",
                           "q75_rel_error"], rows)
    paths = {"csv": csv_path}
    for start in config.starts:
        series, bands = [], []
        for k, method in enumerate(config.methods):
            if (method, start) not in stats:
                continue
            st = stats[(method, start)]
            xs = np.arange(1, len(st["median"]) + 1)
            series.append((method, xs, st["median"]))
            bands.append((k, xs, st["q25"], st["q75"]))
        if series:
            paths[f"svg_{start}"] = svgplot.line_chart(
                series, out / f"comparison_{start}.svg",
                title=f"Median relative error ({start} start)",
                xlabel="iteration", ylabel="relative error", log_y=True,
                bands=bands)
    summary = {"config": asdict(config), "failures": failures,
               "trials_used": config.trials - len(failures), "paths": paths}
    if ("splitting", "cold") in stats and ("admm", "cold") in stats:
        med_s = stats[("splitting", "cold")]["median"]
        med_a = stats[("admm", "cold")]["median"]
        horizon = min(200, len(med_s))
        summary["cold_median_ratio_at_50"] = float(med_s[49] / med_a[49]) \
            if len(med_s) >= 50 else None
        summary["cold_dominates_through"] = int(np.argmax(
            med_s[:horizon] > med_a[:horizon])) if np.any(
            med_s[:horizon] > med_a[:horizon]) else horizon
        summary["plateau_iteration"] = _plateau_iteration(med_s)
    if "warm" in config.starts and "cold" in config.starts:
        summary["warm_speedup"] = {
            method: _warm_speedup(stats, method)
            for method in config.methods if (method, "cold") in stats}
    (out / "comparison_summary.json").write_text(
        json.dumps(summary, indent=2, default=str))
    paths["summary"] = str(out / "comparison_summary.json")
    summary["stats"] = stats
    return summary


def _plateau_iteration(median_curve, slack: float = 1.05):
    """First iteration within `slack` of the final median value (reported
    in place of the paper's interior-point parity measurement)."""
    final = median_curve[-1]
    hit = np.flatnonzero(median_curve <= slack * final)
    return int(hit[0] + 1) if hit.size else len(median_curve)


def _warm_speedup(stats, method):
    """Median per-trial iterations to reach the trial's cold plateau."""
    cold = stats[(method, "cold")]["per_trial"]
    warm = stats[(method, "warm")]["per_trial"]
    t_cold, t_warm = [], []
    for c_curve, w_curve in zip(cold, warm):
        plateau = c_curve[-1]
        t_cold.append(_first_reach(c_curve, plateau))
        t_warm.append(_first_reach(w_curve, plateau))
    return {"median_iterations_cold": float(np.median(t_cold)),
            "median_iterations_warm": float(np.median(t_warm))}


def _first_reach(curve, level):
    hit = np.flatnonzero(np.asarray(curve) <= level)
    return float(hit[0] + 1) if hit.size else math.inf


# ---------------------------------------------------------------------------
# Study 2: objective-value early termination vs the converged iterate.

EARLY_STOP_SCHEMA = "early_stop.v1"


class EarlyStopObserver:
    """Streaming monitor mirror: records what the patience rule would have
    reported without stopping the run."""

    def __init__(self, patience: int, estimate_block: str = "psd"):
        self.patience = patience
        self.block = estimate_block
        self.best = math.inf
        self.best_iteration = 0
        self.best_X = None
        self.last_improve = 0
        self.fired_at = None

    def __call__(self, state, record) -> bool:
        if record.objective <= self.best:
            if record.objective < self.best:
                self.best = record.objective
                self.best_iteration = record.iteration
                self.best_X = split_mod.sensor_estimates(state, self.block)
            self.last_improve = record.iteration
        if (self.fired_at is None and self.patience is not None
                and record.iteration - self.last_improve >= self.patience):
            self.fired_at = record.iteration
        return False


def run_early_termination_study(config: ExperimentConfig, out_dir=None) -> dict:
    """One full-convergence splitting run per trial; the early result is the
    objective-argmin iterate the patience monitor would have reported."""
    out = _out_dir(config, out_dir)
    rows, results, failures = [], [], []
    for t in range(config.trials):
        seed = trial_seed(config, t)
        try:
            inst = generate_instance(config.n, config.m, config.d,
                                     config.radius, config.max_degree,
                                     config.noise_factor, seed)
            params = two_block_params(build_adjacency(inst))
            options = _solver_options(config, "splitting",
                                      max_iter=config.convergence_max_iter,
                                      fp_tol=config.fp_tol)
            observer = EarlyStopObserver(config.patience)
            trace = split_mod.run(inst, params, options, callback=observer)
            X_conv = trace.last_X
            if observer.fired_at is not None:
                X_early = observer.best_X
                early_iter = observer.best_iteration
            else:  # monitor never fired (patience too large): same result
                X_early = X_conv
                early_iter = trace.records[-1].iteration
            md_early = mean_distance(X_early, inst.truth)
            md_conv = mean_distance(X_conv, inst.truth)
            cen_early = centrality(X_early, inst.anchors)
            cen_conv = centrality(X_conv, inst.anchors)
            row = {"seed": seed, "early_iteration": early_iter,
                   "fire_iteration": observer.fired_at,
                   "converged_iteration": trace.records[-1].iteration,
                   "termination": trace.termination,
                   "mean_distance_early": md_early,
                   "mean_distance_converged": md_conv,
                   "difference": md_early - md_conv,
                   "centrality_early": cen_early,
                   "centrality_converged": cen_conv,
                   "win": md_early < md_conv}
            results.append(row)
            rows.append([EARLY_STOP_SCHEMA, seed, early_iter,
                         observer.fired_at if observer.fired_at else -1,
                         trace.records[-1].iteration, trace.termination,
                         f"{md_early:.10g}", f"{md_conv:.10g}",
                         f"{md_early - md_conv:.10g}", f"{cen_early:.10g}",
                         f"{cen_conv:.10g}", int(row["win"])])
        except Exception as exc:
            log.warning("trial %d failed: %s", t, exc)
            failures.append({"trial": t, "seed": seed, "error": str(exc)})
    csv_path = _write_csv(out / "early_stop.csv",
                          ["schema", "seed", "early_iteration",
                           "fire_iteration", "converged_iteration",
                           "termination", "mean_distance_early",
                           "mean_distance_converged", "difference",
                           "centrality_early", "centrality_converged", "win"],
                          rows)
    wins = sum(r["win"] for r in results)
    n_used = len(results)
    frac = wins / n_used if n_used else float("nan")
    lo, hi = _wilson_interval(wins, n_used) if n_used else (float("nan"),) * 2
    diffs = [r["difference"] for r in results]
    summary = {
        "config": asdict(config), "failures": failures, "trials_used": n_used,
        "win_fraction": frac, "win_ci95": [lo, hi],
        "median_mean_distance_early": float(np.median(
            [r["mean_distance_early"] for r in results])) if results else None,
        "median_mean_distance_converged": float(np.median(
            [r["mean_distance_converged"] for r in results])) if results else None,
        "median_centrality_difference": float(np.median(
            [r["centrality_early"] - r["centrality_converged"]
             for r in results])) if results else None,
        "paths": {"csv": csv_path},
    }
    if diffs:
        summary["paths"]["histogram"] = svgplot.histogram(
            diffs, out / "early_stop_histogram.svg",
            title="Paired mean-distance difference (early - converged)",
            xlabel="difference")
    (out / "early_stop_summary.json").write_text(
        json.dumps(summary, indent=2, default=str))
    summary["paths"]["summary"] = str(out / "early_stop_summary.json")
    summary["results"] = results
    return summary


def _wilson_interval(wins: int, n: int, z: float = 1.959963984540054):
    if n == 0:
        return float("nan"), float("nan")
    p = wins / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return center - half, center + half


# ---------------------------------------------------------------------------
# Study 3: mean centrality trace against the truth's centrality.

CENTRALITY_SCHEMA = "centrality.v1"


def run_centrality_trace(config: ExperimentConfig, out_dir=None) -> dict:
    out = _out_dir(config, out_dir)
    traces, truth_cen, failures = [], [], []
    for t in range(config.trials):
        seed = trial_seed(config, t)
        try:
            inst = generate_instance(config.n, config.m, config.d,
                                     config.radius, config.max_degree,
                                     config.noise_factor, seed)
            params = two_block_params(build_adjacency(inst))
            options = _solver_options(config, "splitting")
            trace = split_mod.run(inst, params, options)
            traces.append([r.centrality for r in trace.records])
            truth_cen.append(centrality(inst.truth, inst.anchors))
        except Exception as exc:
            log.warning("trial %d failed: %s", t, exc)
            failures.append({"trial": t, "seed": seed, "error": str(exc)})
    if not traces:
        raise RuntimeError("every trial failed")
    arr = np.asarray(traces)
    mean_curve = arr.mean(axis=0)
    truth_mean = float(np.mean(truth_cen))
    rows = [[CENTRALITY_SCHEMA, k + 1, f"{mean_curve[k]:.10g}",
             f"{truth_mean:.10g}"] for k in range(arr.shape[1])]
    csv_path = _write_csv(out / "centrality.csv",
                          ["schema", "iteration", "mean_centrality",
                           "truth_centrality"], rows)
    xs = np.arange(1, len(mean_curve) + 1)
    svg_path = svgplot.line_chart(
        [("mean centrality", xs, mean_curve)], out / "centrality.svg",
        title="Mean estimate centrality across trials",
        xlabel="iteration", ylabel="centrality",
        hlines=[("truth", truth_mean)])
    summary = {"config": asdict(config), "failures": failures,
               "trials_used": len(traces), "truth_centrality": truth_mean,
               "max_centrality": float(mean_curve.max()),
               "final_centrality": float(mean_curve[-1]),
               "paths": {"csv": csv_path, "svg": svg_path}}
    (out / "centrality_summary.json").write_text(
        json.dumps(summary, indent=2, default=str))
    summary["paths"]["summary"] = str(out / "centrality_summary.json")
    summary["mean_curve"] = mean_curve
    return summary
