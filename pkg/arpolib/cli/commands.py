import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import yaml

from arpolib.cli.report import EMA_ALPHA, build_report, find_runs, write_report
from arpolib.cluster.extractor import FeatureExtractor
from arpolib.cluster.gmm import (
    ClusterModel,
    assign_cluster,
    fit_cluster_model,
    load_cluster_model,
    save_cluster_model,
)
from arpolib.cluster.montage import cluster_montage
from arpolib.internal.errors import ArpoError, ConfigurationError
from arpolib.internal.seeding import SeedStreams
from arpolib.policy.policy import PolicyModel
from arpolib.rollout.collect import collect
from arpolib.trainer.config import (
    ALIASES,
    Algo,
    TrainConfig,
    apply_overrides,
    config_from_dict,
    config_to_dict,
    load_config,
)
from arpolib.trainer.trainer import TrainState, evaluate, train
from arpolib.translator.pair import TranslatorPair, translation_grid
from arpolib.world.world import VectorWorld
from arpolib.world.world_base import Action, Split

__all__ = ["UsageError", "UniformActor", "build_parser", "cli", "main"]

logger = logging.getLogger(__name__)

USAGE_EXIT_CODE = 2
RUNTIME_EXIT_CODE = 1
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class UsageError(ArpoError, ValueError):
    """
    Invalid command line, carries the usage text of the failing parser.
    """

    def __init__(self, message: str, usage: str = ""):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message, self.format_usage())


class UniformActor:
    """
    Actor drawing every action with equal probability.
    """

    def __init__(self, n_actions: int = len(Action)):
        self.n_actions = n_actions

    def action_dist(self, images: np.ndarray):
        n = len(images)
        return np.full((n, self.n_actions), 1.0 / self.n_actions), np.zeros(n)


def _config(args) -> TrainConfig:
    config = TrainConfig() if args.config is None else load_config(args.config)
    overrides = []
    if getattr(args, "algo", None) is not None:
        overrides.append(f"algo={args.algo}")
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    return apply_overrides(config, overrides + args.overrides)


def _split_list(values: Sequence[str]) -> List[str]:
    """
    :return: Items of space or comma separated command line lists.
    """
    return [item.strip() for value in values for item in value.split(",") if item.strip()]


def _print(record: Dict[str, Any]):
    print(json.dumps(record, indent=2))


def _random_observations(config: TrainConfig, n: int, seed: int):
    """
    :return: At least n observations of the train split under the uniform actor
        and the styles they were rendered with.
    """
    streams = SeedStreams(seed)
    envs = VectorWorld(config.world, Split.TRAIN, config.n_envs, streams.numpy("env"))
    n_steps = -(-n // config.n_envs)
    batch = collect(UniformActor(), envs, n_steps, streams.numpy("action"))
    return batch.observations[:n], batch.style_ids[:n]


def _load_policy(run_dir: Path, config: TrainConfig) -> PolicyModel:
    policy = PolicyModel.build(
        config.world.image_size, config.policy, n_actions=len(Action)
    )
    return policy.restore(run_dir / "checkpoints" / "policy.pt")


def _load_translator(run_dir: Path, config: TrainConfig):
    cluster_path = run_dir / "checkpoints" / "cluster.npz"
    if not cluster_path.exists():
        raise ConfigurationError(f"Run {run_dir} has no fitted style clusters.")
    model = load_cluster_model(cluster_path)
    pair = TranslatorPair(model.n_clusters, config.translator)
    return model, pair.restore(run_dir / "checkpoints" / "translator.pt")


def _cluster_record(model: ClusterModel, clusters: np.ndarray, styles: np.ndarray):
    table = {
        int(cluster): {
            int(style): int(np.sum((clusters == cluster) & (styles == style)))
            for style in np.unique(styles)
        }
        for cluster in range(model.n_clusters)
    }
    majority = sum(max(row.values(), default=0) for row in table.values())
    return {
        "n_clusters": model.n_clusters,
        "weights": model.weights.tolist(),
        "log_likelihood": model.log_likelihood,
        "style_purity": majority / max(len(styles), 1),
        "cluster_styles": table,
    }


def _train(args) -> int:
    run_dir = Path(args.run_dir)
    config = load_config(run_dir / "config.yaml") if args.resume else _config(args)
    run_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(run_dir / "run.log")
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.getLogger("arpolib").addHandler(handler)
    try:
        state = train(config, run_dir, resume=args.resume, progress=args.progress)
    finally:
        logging.getLogger("arpolib").removeHandler(handler)
        handler.close()
    last = state.history[-1] if state.history else {}
    _print(
        {
            "run_dir": str(run_dir),
            "iterations": state.iteration,
            "timesteps": state.timesteps,
            **{k: v for k, v in last.items() if k.startswith("eval_")},
        }
    )
    return 0


def _eval(args) -> int:
    run_dir = Path(args.run_dir)
    config = load_config(run_dir / "config.yaml")
    state = TrainState(config, _load_policy(run_dir, config))
    splits = list(Split) if args.split == "all" else [Split(args.split)]
    episodes = args.episodes or config.eval_episodes
    record = {}
    for split in splits:
        mean, std = evaluate(state, split, episodes, args.seed, args.greedy)
        record[split.value] = {"mean": mean, "std": std, "episodes": episodes}
    _print(record)
    return 0


def _cluster(args) -> int:
    config = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = args.observations or config.warmup_observations
    images, styles = _random_observations(config, n, config.seed)
    model = fit_cluster_model(
        images,
        FeatureExtractor(config.extractor),
        SeedStreams(config.seed).seed("cluster"),
        config.cluster,
    )
    save_cluster_model(model, out / "cluster.npz")
    clusters = cluster_montage(model, images, out / "montage.png", args.per_cluster)
    _print(_cluster_record(model, clusters, styles))
    return 0


def _translate_grid(args) -> int:
    run_dir = Path(args.run_dir)
    config = load_config(run_dir / "config.yaml")
    model, pair = _load_translator(run_dir, config)
    images, _ = _random_observations(config, args.n_images, args.seed)
    out = Path(args.out) if args.out else run_dir / "translation_grid.png"
    translation_grid(pair, images, np.atleast_1d(assign_cluster(model, images)), out)
    _print({"grid": str(out), "n_domains": pair.n_domains})
    return 0


def _run_figures(
    run_dirs: Sequence[Union[str, Path]], out_dir: Path, per_cluster: int, n_images: int
) -> List[str]:
    """
    Render the cluster montage and the translation grid of every run with
    fitted style clusters into out_dir.

    :return: Paths of the written images.
    """
    written = []
    for run_dir in map(Path, run_dirs):
        if not (run_dir / "checkpoints" / "cluster.npz").exists():
            logger.info(f"Run {run_dir} has no style clusters, skipping its figures")
            continue
        config = load_config(run_dir / "config.yaml")
        model, pair = _load_translator(run_dir, config)
        n = max(per_cluster * model.n_clusters * 4, n_images)
        images, _ = _random_observations(config, n, config.seed)
        name = "_".join(run_dir.parts[-2:])
        montage_path = out_dir / f"{name}_montage.png"
        clusters = cluster_montage(model, images, montage_path, per_cluster)
        grid_path = out_dir / f"{name}_translation_grid.png"
        translation_grid(pair, images[:n_images], clusters[:n_images], grid_path)
        written.extend([str(montage_path), str(grid_path)])
    return written


def _write_report(args, run_dirs: Sequence[Union[str, Path]], group_by, out: Path):
    report = build_report(run_dirs, group_by, args.ema, args.kl_window)
    write_report(report, out)
    figures = _run_figures(run_dirs, out / "runs", args.per_cluster, args.n_images)
    return report, figures


def _report(args) -> int:
    paths = list(args.paths) + _split_list(args.runs)
    if not paths:
        raise UsageError("report needs run directories, positional or via --runs.")
    out = Path(args.out)
    report, figures = _write_report(args, find_runs(paths), args.group_by or ["algo"], out)
    _print({"report": str(out), "figures": figures, "ablation": report.ablation_table()})
    return 0


def _run_point(point: Dict[str, Any]) -> str:
    config = config_from_dict(TrainConfig, point["config"])
    train(config, point["run_dir"])
    return point["run_dir"]


def _ablate(args) -> int:
    base = _config(args)
    out = Path(args.out)
    try:
        seeds = [int(seed) for seed in _split_list(args.seeds)]
    except ValueError as e:
        raise UsageError(f"Seeds have to be integers: {e}") from e
    # Every point is validated before the first run starts.
    points = []
    for value in _split_list(args.values):
        for seed in seeds:
            config = apply_overrides(base, [f"{args.param}={value}", f"seed={seed}"])
            points.append(
                {
                    "config": config_to_dict(config),
                    "run_dir": str(out / f"{args.param}={value}" / f"seed_{seed}"),
                }
            )
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as executor:
            run_dirs = list(executor.map(_run_point, points))
    else:
        run_dirs = [_run_point(point) for point in points]
    group_by = list(ALIASES.get(args.param, (args.param,)))[:1]
    report, _ = _write_report(args, run_dirs, group_by, out / "report")
    _print({"runs": run_dirs, "ablation": report.ablation_table()})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="arpo", description="Adversarial robust policy optimization.")
    parser.add_argument(
        "--log-level",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        default="WARNING",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_config_arguments(command):
        command.add_argument("--config", help="YAML run config")
        command.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config field, e.g. policy.beta1=5",
        )

    command = subparsers.add_parser("train", help="train a policy")
    add_config_arguments(command)
    command.add_argument("--algo", choices=[algo.value for algo in Algo])
    command.add_argument("--seed", type=int, help="root seed of the run")
    command.add_argument("--run-dir", required=True)
    command.add_argument("--resume", action="store_true")
    command.add_argument("--progress", action="store_true")
    command.set_defaults(handler=_train)

    command = subparsers.add_parser("eval", help="evaluate a trained policy")
    command.add_argument("--run-dir", required=True)
    command.add_argument("--split", choices=["train", "test", "all"], default="all")
    command.add_argument("--episodes", type=int, default=0)
    command.add_argument("--seed", type=int, default=0)
    command.add_argument("--greedy", action="store_true")
    command.set_defaults(handler=_eval)

    command = subparsers.add_parser(
        "cluster", help="fit style clusters on random observations"
    )
    add_config_arguments(command)
    command.add_argument("--out", required=True)
    command.add_argument("--observations", type=int, default=0)
    command.add_argument("--per-cluster", type=int, default=8)
    command.set_defaults(handler=_cluster)

    command = subparsers.add_parser("translate-grid", help="render translations of a run")
    command.add_argument("--run-dir", required=True)
    command.add_argument("--out")
    command.add_argument("--n-images", type=int, default=4)
    command.add_argument("--seed", type=int, default=0)
    command.set_defaults(handler=_translate_grid)

    def add_report_arguments(command):
        command.add_argument("--ema", type=float, default=EMA_ALPHA)
        command.add_argument("--kl-window", type=int, default=10)
        command.add_argument("--per-cluster", type=int, default=8)
        command.add_argument("--n-images", type=int, default=4)

    command = subparsers.add_parser("report", help="aggregate runs across seeds")
    command.add_argument("paths", nargs="*", help="run directories or their parents")
    command.add_argument(
        "--runs", action="append", default=[], help="comma separated run directories"
    )
    command.add_argument("--group-by", action="append", default=[])
    command.add_argument("--out", required=True)
    add_report_arguments(command)
    command.set_defaults(handler=_report)

    command = subparsers.add_parser("ablate", help="train a grid of values and seeds")
    add_config_arguments(command)
    command.add_argument("--param", required=True, help="dotted field or alias")
    command.add_argument(
        "--values", nargs="+", required=True, help="space or comma separated values"
    )
    command.add_argument("--seeds", nargs="+", default=["0", "1", "2"])
    command.add_argument("--out", required=True)
    command.add_argument("--jobs", type=int, default=1)
    add_report_arguments(command)
    command.set_defaults(handler=_ablate)
    return parser


def _fail(error: Exception, kind: str, usage: Optional[str] = None):
    if usage:
        sys.stderr.write(usage)
    record = {"error": kind, "type": type(error).__name__, "message": str(error)}
    sys.stderr.write(json.dumps(record) + "\n")


def cli(argv: Optional[Sequence[str]] = None) -> int:
    """
    :param argv: Command line without the program name, sys.argv by default.
    :return: Exit code, 2 for usage and configuration errors, 1 for runtime errors.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(format=LOG_FORMAT)
        logging.getLogger("arpolib").setLevel(args.log_level)
        return args.handler(args)
    except UsageError as e:
        _fail(e, "usage", e.usage)
        return USAGE_EXIT_CODE
    except (ConfigurationError, yaml.YAMLError) as e:
        _fail(e, "configuration", parser.format_usage())
        return USAGE_EXIT_CODE
    except (ArpoError, OSError) as e:
        logger.debug("Command failed", exc_info=True)
        _fail(e, "runtime")
        return RUNTIME_EXIT_CODE


def main():
    sys.exit(cli())
