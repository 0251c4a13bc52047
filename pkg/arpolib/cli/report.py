import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
import yaml
from matplotlib.figure import Figure

from arpolib.internal.errors import ConfigurationError

__all__ = [
    "EMA_ALPHA",
    "MIN_SEEDS",
    "RunRecord",
    "GroupSummary",
    "ExperimentReport",
    "GeneralizationComparison",
    "compare_generalization",
    "ema",
    "windowed_mean_std",
    "load_run",
    "find_runs",
    "build_report",
    "write_report",
]

logger = logging.getLogger(__name__)

EMA_ALPHA = 0.9
MIN_SEEDS = 3


def ema(values: Sequence[float], alpha: float = EMA_ALPHA) -> np.ndarray:
    """
    Exponential moving average s_t = alpha * s_{t-1} + (1 - alpha) * v_t, s_0 = v_0.
    NaN entries keep the previous average, leading NaNs stay NaN.
    """
    values = np.asarray(values, dtype=np.float64)
    smoothed = np.full_like(values, np.nan)
    current = math.nan
    for i, value in enumerate(values):
        if not math.isnan(value):
            if math.isnan(current):
                current = value
            else:
                current = alpha * current + (1.0 - alpha) * value
        smoothed[i] = current
    return smoothed


def windowed_mean_std(
    values: Sequence[float], window: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Trailing moving average with its standard deviation,
    the first entries average over the available prefix.
    """
    if window < 1:
        raise ConfigurationError(f"Window has to be positive, got {window}.")
    values = np.asarray(values, dtype=np.float64)
    means = np.empty_like(values)
    stds = np.empty_like(values)
    for i in range(len(values)):
        chunk = values[max(0, i - window + 1) : i + 1]
        means[i] = np.mean(chunk)
        stds[i] = np.std(chunk)
    return means, stds


@dataclass
class RunRecord:
    """
    run_dir: directory of the run.
    config: stored run config as a nested dict.
    metrics: metrics.csv columns.
    """

    run_dir: Path
    config: Dict[str, Any]
    metrics: Dict[str, np.ndarray]

    def lookup(self, dotted: str) -> Any:
        value: Any = self.config
        for part in dotted.split("."):
            if not isinstance(value, dict) or part not in value:
                raise ConfigurationError(
                    f"Run {self.run_dir} has no config field {dotted!r}."
                )
            value = value[part]
        return value


@dataclass
class GroupSummary:
    """
    Curves of the seeds of one configuration, truncated to the shortest run.

    seeds: seed of every run.
    timesteps: shared x axis.
    returns: (seeds, T) smoothed training returns.
    test_returns: (seeds, T) smoothed test evaluations, NaN before the first one.
    adv_kl: (seeds, T) raw adversarial divergence.
    final_train: final train evaluation of every seed.
    final_test: final test evaluation of every seed.
    """

    label: str
    seeds: List[int]
    timesteps: np.ndarray
    returns: np.ndarray
    test_returns: np.ndarray
    adv_kl: np.ndarray
    final_train: np.ndarray
    final_test: np.ndarray

    @property
    def returns_mean(self) -> np.ndarray:
        return np.mean(self.returns, axis=0)

    @property
    def returns_std(self) -> np.ndarray:
        return np.std(self.returns, axis=0)

    def kl_band(self, window: int) -> Tuple[np.ndarray, np.ndarray]:
        return windowed_mean_std(np.mean(self.adv_kl, axis=0), window)


@dataclass
class ExperimentReport:
    """
    group_by: config fields the runs are grouped by.
    groups: summary of every group, keyed by label.
    ema_alpha: smoothing constant of the curves.
    kl_window: window of the divergence band.
    """

    group_by: List[str]
    groups: Dict[str, GroupSummary] = field(default_factory=dict)
    ema_alpha: float = EMA_ALPHA
    kl_window: int = 10

    def ablation_table(self) -> List[Dict[str, Any]]:
        """
        :return: One row per group with mean and std of the final evaluations.
        """
        return [
            {
                "group": label,
                "seeds": len(group.seeds),
                "train_mean": _nan_stat(np.nanmean, group.final_train),
                "train_std": _nan_stat(np.nanstd, group.final_train),
                "test_mean": _nan_stat(np.nanmean, group.final_test),
                "test_std": _nan_stat(np.nanstd, group.final_test),
                "final_adv_kl": float(np.mean(group.adv_kl[:, -1])),
            }
            for label, group in self.groups.items()
        ]


@dataclass
class GeneralizationComparison:
    """
    Final evaluations of a treatment group against a baseline group on the
    seeds both groups ran.

    seeds: shared seeds.
    treatment_gaps: train minus test return of the treatment for every seed.
    baseline_gaps: train minus test return of the baseline for every seed.
    """

    treatment: str
    baseline: str
    seeds: List[int]
    treatment_test_mean: float
    baseline_test_mean: float
    treatment_gaps: np.ndarray
    baseline_gaps: np.ndarray

    @property
    def test_return_wins(self) -> bool:
        return self.treatment_test_mean >= self.baseline_test_mean

    @property
    def gap_wins(self) -> int:
        """
        :return: Number of seeds where the treatment generalises at least as well.
        """
        return int(np.sum(self.treatment_gaps <= self.baseline_gaps))

    def as_dict(self) -> Dict[str, Any]:
        return {
            "treatment": self.treatment,
            "baseline": self.baseline,
            "seeds": self.seeds,
            "treatment_test_mean": self.treatment_test_mean,
            "baseline_test_mean": self.baseline_test_mean,
            "treatment_gaps": self.treatment_gaps.tolist(),
            "baseline_gaps": self.baseline_gaps.tolist(),
            "test_return_wins": self.test_return_wins,
            "gap_wins": self.gap_wins,
        }


def compare_generalization(
    report: ExperimentReport, treatment: str = "algo=arpo", baseline: str = "algo=ppo"
) -> GeneralizationComparison:
    """
    :raises ConfigurationError: if a group is missing, the groups share no seed
        or a shared seed was never evaluated.
    """
    for label in (treatment, baseline):
        if label not in report.groups:
            raise ConfigurationError(
                f"Report has no group {label!r}, groups: {sorted(report.groups)}."
            )
    first, second = report.groups[treatment], report.groups[baseline]
    seeds = sorted(set(first.seeds) & set(second.seeds))
    if not seeds:
        raise ConfigurationError(f"Groups {treatment} and {baseline} share no seed.")

    def finals(group: GroupSummary) -> Tuple[np.ndarray, np.ndarray]:
        rows = [group.seeds.index(seed) for seed in seeds]
        return group.final_train[rows], group.final_test[rows]

    first_train, first_test = finals(first)
    second_train, second_test = finals(second)
    if np.any(np.isnan(np.concatenate([first_test, second_test]))):
        raise ConfigurationError("Every compared run needs a test evaluation.")
    return GeneralizationComparison(
        treatment=treatment,
        baseline=baseline,
        seeds=seeds,
        treatment_test_mean=float(np.mean(first_test)),
        baseline_test_mean=float(np.mean(second_test)),
        treatment_gaps=first_train - first_test,
        baseline_gaps=second_train - second_test,
    )


def _nan_stat(function, values: np.ndarray) -> float:
    return float(function(values)) if np.any(~np.isnan(values)) else math.nan


def _last_finite(values: np.ndarray) -> float:
    finite = values[~np.isnan(values)]
    return float(finite[-1]) if len(finite) else math.nan


def load_run(run_dir: Union[str, Path]) -> RunRecord:
    run_dir = Path(run_dir)
    with open(run_dir / "config.yaml") as f:
        config = yaml.safe_load(f)
    with open(run_dir / "metrics.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ConfigurationError(f"Run {run_dir} has no recorded iterations.")
    metrics = {
        column: np.array([float(row[column]) for row in rows], dtype=np.float64)
        for column in rows[0]
    }
    return RunRecord(run_dir, config, metrics)


def find_runs(paths: Sequence[Union[str, Path]]) -> List[Path]:
    """
    :return: Every directory among the paths and their descendants holding a metrics.csv.
    """
    runs = []
    for path in map(Path, paths):
        if (path / "metrics.csv").exists():
            runs.append(path)
        else:
            runs.extend(sorted(p.parent for p in path.rglob("metrics.csv")))
    return runs


def build_report(
    run_dirs: Sequence[Union[str, Path]],
    group_by: Sequence[str] = ("algo",),
    ema_alpha: float = EMA_ALPHA,
    kl_window: int = 10,
    min_seeds: int = MIN_SEEDS,
) -> ExperimentReport:
    """
    Group runs by config fields and aggregate their curves across seeds.

    :raises ConfigurationError: if a group has fewer than min_seeds runs.
    """
    runs: Dict[str, List[RunRecord]] = {}
    for run_dir in run_dirs:
        run = load_run(run_dir)
        label = ",".join(f"{key}={run.lookup(key)}" for key in group_by)
        runs.setdefault(label, []).append(run)
    if not runs:
        raise ConfigurationError("No runs to report on.")

    report = ExperimentReport(list(group_by), ema_alpha=ema_alpha, kl_window=kl_window)
    for label, members in sorted(runs.items()):
        if len(members) < min_seeds:
            raise ConfigurationError(
                f"Group {label} has {len(members)} runs, "
                f"a report needs at least {min_seeds} seeds."
            )
        members.sort(key=lambda run: run.config.get("seed", 0))
        length = min(len(run.metrics["iteration"]) for run in members)

        def column(name: str) -> List[np.ndarray]:
            return [run.metrics[name][:length] for run in members]

        report.groups[label] = GroupSummary(
            label=label,
            seeds=[int(run.config.get("seed", 0)) for run in members],
            timesteps=members[0].metrics["timesteps"][:length],
            returns=np.stack([ema(curve, ema_alpha) for curve in column("train_return")]),
            test_returns=np.stack(
                [ema(curve, ema_alpha) for curve in column("eval_test_mean")]
            ),
            adv_kl=np.stack(column("adv_kl")),
            final_train=np.array([_last_finite(c) for c in column("eval_train_mean")]),
            final_test=np.array([_last_finite(c) for c in column("eval_test_mean")]),
        )
    return report


def write_report(report: ExperimentReport, out_dir: Union[str, Path]) -> Path:
    """
    Write report.json, curves.csv, ablation.csv and the plots: returns.png and
    adv_kl.png with mean and std across seeds, seed_returns.png with the train
    and test curve of every seed.
    :return: The output directory.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = report.ablation_table()

    with open(out_dir / "ablation.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(table[0]))
        writer.writeheader()
        writer.writerows(table)

    with open(out_dir / "curves.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CURVE_COLUMNS)
        for label, group in report.groups.items():
            kl_mean, kl_std = group.kl_band(report.kl_window)
            test_mean = _nanmean_rows(group.test_returns)
            for i, timesteps in enumerate(group.timesteps):
                values = (
                    group.returns_mean[i],
                    group.returns_std[i],
                    test_mean[i],
                    kl_mean[i],
                    kl_std[i],
                )
                writer.writerow([label, int(timesteps)] + [repr(float(v)) for v in values])

    record = {
        "group_by": report.group_by,
        "ema_alpha": report.ema_alpha,
        "kl_window": report.kl_window,
        "seeds": {label: group.seeds for label, group in report.groups.items()},
        "ablation": table,
    }
    if {"algo=arpo", "algo=ppo"} <= set(report.groups):
        try:
            record["generalization"] = compare_generalization(report).as_dict()
        except ConfigurationError as e:
            logger.warning(f"Skipping the generalization comparison: {e}")
    with open(out_dir / "report.json", "w") as f:
        json.dump(record, f, indent=2)

    _plot_bands(
        out_dir / "returns.png",
        {
            label: (group.timesteps, group.returns_mean, group.returns_std)
            for label, group in report.groups.items()
        },
        f"train return (EMA {report.ema_alpha})",
    )
    _plot_bands(
        out_dir / "adv_kl.png",
        {
            label: (group.timesteps, *group.kl_band(report.kl_window))
            for label, group in report.groups.items()
        },
        f"adversarial KL (window {report.kl_window})",
    )
    _plot_seeds(out_dir / "seed_returns.png", report)
    return out_dir


CURVE_COLUMNS = [
    "group",
    "timesteps",
    "return_mean",
    "return_std",
    "test_mean",
    "adv_kl_mean",
    "adv_kl_std",
]


def _nanmean_rows(curves: np.ndarray) -> np.ndarray:
    result = np.full(curves.shape[1], np.nan)
    observed = np.any(~np.isnan(curves), axis=0)
    result[observed] = np.nanmean(curves[:, observed], axis=0)
    return result


def _plot_bands(
    path: Path,
    curves: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]],
    ylabel: str,
):
    figure = Figure(figsize=(7, 4))
    axis = figure.subplots()
    for label, (x, mean, std) in curves.items():
        (line,) = axis.plot(x, mean, label=label)
        axis.fill_between(x, mean - std, mean + std, alpha=0.2, color=line.get_color())
    axis.set_xlabel("timesteps")
    axis.set_ylabel(ylabel)
    axis.legend(fontsize=7)
    figure.tight_layout()
    figure.savefig(path)


def _plot_seeds(path: Path, report: ExperimentReport):
    figure = Figure(figsize=(11, 4))
    train_axis, test_axis = figure.subplots(1, 2, sharey=True)
    for label, group in report.groups.items():
        for seed, train, test in zip(group.seeds, group.returns, group.test_returns):
            (line,) = train_axis.plot(group.timesteps, train, label=f"{label} seed {seed}")
            test_axis.plot(group.timesteps, test, color=line.get_color())
    train_axis.set_title("train levels")
    test_axis.set_title("held-out styles")
    for axis in (train_axis, test_axis):
        axis.set_xlabel("timesteps")
    train_axis.set_ylabel(f"return (EMA {report.ema_alpha})")
    train_axis.legend(fontsize=6)
    figure.tight_layout()
    figure.savefig(path)
