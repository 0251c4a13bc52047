import copy
import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import torch
from tqdm import tqdm

from arpolib.cluster.extractor import FeatureExtractor
from arpolib.cluster.gmm import (
    ClusterModel,
    assign_cluster,
    fit_cluster_model,
    load_cluster_model,
    save_cluster_model,
)
from arpolib.internal.errors import (
    AlternationError,
    CheckpointError,
    ClusteringError,
    NonFiniteLossError,
)
from arpolib.internal.modules import parameter_digest
from arpolib.internal.seeding import SeedStreams
from arpolib.policy.policy import PolicyLossReport, PolicyModel, policy_step
from arpolib.rollout.advantages import compute_advantages
from arpolib.rollout.collect import collect
from arpolib.trainer.augment import cutout_color_augment
from arpolib.trainer.config import Algo, TrainConfig, load_config, save_config
from arpolib.trainer.evaluate import evaluate_policy
from arpolib.translator.losses import GanLossReport
from arpolib.translator.pair import TranslatorPair, alternate, translate
from arpolib.world.levels import build_split, export_levels
from arpolib.world.world import VectorWorld
from arpolib.world.world_base import Action, Split

__all__ = ["METRIC_COLUMNS", "TrainState", "Trainer", "train", "evaluate"]

logger = logging.getLogger(__name__)

PROGRESS_FORMAT_VERSION = 1
RUN_STREAMS = ("action", "minibatch", "translate", "augment")

METRIC_COLUMNS = (
    ["iteration", "timesteps", "train_return", "episodes"]
    + list(PolicyLossReport().as_dict())
    + list(GanLossReport().as_dict("gan_"))
    + ["eval_train_mean", "eval_train_std", "eval_test_mean", "eval_test_std"]
)


@dataclass
class TrainState:
    """
    State of a training run.

    history: one metrics row per iteration, append-only.
    """

    config: TrainConfig
    policy: PolicyModel
    translator: Optional[TranslatorPair] = None
    cluster_model: Optional[ClusterModel] = None
    iteration: int = 0
    timesteps: int = 0
    history: List[Dict[str, float]] = field(default_factory=list)

    def record(self, row: Dict[str, Any]):
        """
        :raises AlternationError: if iteration or timesteps do not strictly increase.
        """
        if self.history and (
            row["iteration"] <= self.history[-1]["iteration"]
            or row["timesteps"] <= self.history[-1]["timesteps"]
        ):
            raise AlternationError(
                f"Iteration {row['iteration']} at {row['timesteps']} timesteps "
                f"does not follow iteration {self.history[-1]['iteration']}."
            )
        self.history.append(row)
        self.iteration = row["iteration"]
        self.timesteps = row["timesteps"]


class Trainer:
    """
    Runs PPO, PPO with cutout augmentation, or the adversarial
    policy/translator alternation.

    :param config: Run configuration.
    :param run_dir: Directory the run is recorded in, nothing is written when None.
    """

    def __init__(
        self,
        config: TrainConfig,
        run_dir: Optional[Union[str, Path]] = None,
        _fresh: bool = True,
    ):
        self.config = config
        self.run_dir = None if run_dir is None else Path(run_dir)
        self.streams = SeedStreams(config.seed)
        self.envs = VectorWorld(
            config.world, Split.TRAIN, config.n_envs, self.streams.numpy("env")
        )
        self.rngs = {name: self.streams.numpy(name) for name in RUN_STREAMS}
        self.extractor = FeatureExtractor(config.extractor)
        self.state = TrainState(
            config,
            PolicyModel.build(
                config.world.image_size,
                config.policy,
                self.streams.seed("policy_init"),
                n_actions=len(Action),
            ),
        )
        self.warmup: List[np.ndarray] = []
        if self.run_dir is not None and _fresh:
            self._prepare_run_dir()

    @property
    def warmup_size(self) -> int:
        return sum(len(images) for images in self.warmup)

    @classmethod
    def resume(cls, run_dir: Union[str, Path]) -> "Trainer":
        """
        Continue a run from its last checkpoint.
        Rows written after the checkpoint are dropped from metrics.csv.
        """
        run_dir = Path(run_dir)
        progress_path = run_dir / "checkpoints" / "progress.pt"
        if not progress_path.exists():
            raise CheckpointError(f"Run directory {run_dir} has no checkpoint.")
        trainer = cls(load_config(run_dir / "config.yaml"), run_dir, _fresh=False)
        progress = torch.load(str(progress_path), map_location="cpu", weights_only=False)
        if progress.get("format_version") != PROGRESS_FORMAT_VERSION:
            raise CheckpointError(
                f"Checkpoint {progress_path} has format version "
                f"{progress.get('format_version')}, this library reads version "
                f"{PROGRESS_FORMAT_VERSION}."
            )
        state = trainer.state
        state.policy.restore(run_dir / "checkpoints" / "policy.pt")
        cluster_path = run_dir / "checkpoints" / "cluster.npz"
        if cluster_path.exists():
            state.cluster_model = load_cluster_model(cluster_path)
            state.translator = trainer._build_translator(state.cluster_model)
            state.translator.restore(run_dir / "checkpoints" / "translator.pt")
        state.iteration = progress["iteration"]
        state.timesteps = progress["timesteps"]
        state.history = progress["history"]
        trainer.envs.load_state_dict(progress["envs"])
        for name, rng_state in progress["rngs"].items():
            trainer.rngs[name].bit_generator.state = rng_state
        trainer.warmup = progress["warmup"]
        trainer._rewrite_metrics()
        logger.info(f"Resumed {run_dir} at iteration {state.iteration}")
        return trainer

    def run(self, progress: bool = False) -> TrainState:
        """
        Train until total_timesteps are collected.
        A non-finite loss checkpoints the last completed iteration and re-raises.
        """
        n_iterations = self.config.n_iterations
        with tqdm(
            total=n_iterations,
            initial=self.state.iteration,
            desc=self.config.algo.value,
            disable=not progress,
        ) as bar:
            while self.state.iteration < n_iterations:
                committed = self._snapshot()
                try:
                    row = self.step()
                except NonFiniteLossError as e:
                    logger.error(f"Aborting at iteration {self.state.iteration + 1}: {e}")
                    self._rollback(committed)
                    self.checkpoint()
                    self._write_summary("aborted", e.diagnostics)
                    raise
                bar.update(1)
                bar.set_postfix(ret=row["train_return"], adv_kl=row["adv_kl"])
                interval = self.config.checkpoint_interval
                if interval and self.state.iteration % interval == 0:
                    self.checkpoint()
        self.checkpoint()
        self._write_summary("finished")
        return self.state

    def step(self) -> Dict[str, Any]:
        """
        One iteration: collect, update the policy, then update the translator.
        :return: Metrics row of the iteration.
        """
        config = self.config
        state = self.state
        batch = compute_advantages(
            collect(state.policy, self.envs, config.n_steps, self.rngs["action"]),
            config.policy.gamma,
            config.policy.lam,
        )
        if config.algo is Algo.ARPO and state.cluster_model is None:
            self._warm_up(batch.observations)

        update_batch, labels, translated = batch, None, None
        if state.translator is not None:
            labels = np.asarray(assign_cluster(state.cluster_model, batch.observations))
            n_domains = state.translator.n_domains
            shifts = self.rngs["translate"].integers(1, n_domains, size=len(labels))
            translated = translate(
                state.translator, batch.observations, (labels + shifts) % n_domains
            )
        elif config.algo is Algo.PPO_CUTOUT:
            update_batch = dataclasses.replace(
                batch,
                observations=cutout_color_augment(
                    batch.observations,
                    self.rngs["augment"],
                    config.cutout_min_area,
                    config.cutout_max_area,
                ),
            )

        gan_report = GanLossReport()
        if state.translator is None:
            policy_report = policy_step(
                state.policy, update_batch, None, self.rngs["minibatch"]
            )
        else:
            generator_digest = parameter_digest(state.translator.generator)
            policy_report = policy_step(
                state.policy, update_batch, translated, self.rngs["minibatch"]
            )
            if parameter_digest(state.translator.generator) != generator_digest:
                raise AlternationError("The policy update changed the generator.")
            policy_digest = parameter_digest(state.policy.network)
            gan_report = alternate(
                state.translator, state.policy.network, batch.observations, labels
            )
            if parameter_digest(state.policy.network) != policy_digest:
                raise AlternationError("The translator update changed the policy.")

        iteration = state.iteration + 1
        row: Dict[str, Any] = {
            "iteration": iteration,
            "timesteps": state.timesteps + len(batch),
            "train_return": (
                float(np.mean(batch.episode_returns))
                if len(batch.episode_returns)
                else math.nan
            ),
            "episodes": len(batch.episode_returns),
            **policy_report.as_dict(),
            **gan_report.as_dict("gan_"),
            **self._evaluate_row(iteration),
        }
        state.record(row)
        self._append_metrics(row)
        logger.info(
            f"Iteration {iteration}: return {row['train_return']:.4f}, "
            f"adv_kl {row['adv_kl']:.6f}, total {row['total']:.4f}"
        )
        return row

    def _snapshot(self) -> Dict[str, Any]:
        """
        :return: Copy of everything an iteration mutates before it records its row.
        """
        state = self.state
        return {
            "policy": copy.deepcopy(state.policy.state_dict()),
            "cluster_model": state.cluster_model,
            "translator": (
                None
                if state.translator is None
                else copy.deepcopy(state.translator.state_dict())
            ),
            "envs": copy.deepcopy(self.envs.state_dict()),
            "rngs": {name: rng.bit_generator.state for name, rng in self.rngs.items()},
            "warmup": list(self.warmup),
        }

    def _rollback(self, snapshot: Dict[str, Any]):
        state = self.state
        state.policy.load_state_dict(snapshot["policy"])
        state.cluster_model = snapshot["cluster_model"]
        if snapshot["translator"] is None:
            state.translator = None
        else:
            state.translator.load_state_dict(snapshot["translator"])
        self.envs.load_state_dict(snapshot["envs"])
        for name, rng_state in snapshot["rngs"].items():
            self.rngs[name].bit_generator.state = rng_state
        self.warmup = snapshot["warmup"]

    def checkpoint(self):
        if self.run_dir is None:
            return
        directory = self.run_dir / "checkpoints"
        directory.mkdir(parents=True, exist_ok=True)
        state = self.state
        state.policy.save(directory / "policy.pt")
        if state.cluster_model is not None:
            save_cluster_model(state.cluster_model, directory / "cluster.npz")
            state.translator.save(directory / "translator.pt")
        torch.save(
            {
                "format_version": PROGRESS_FORMAT_VERSION,
                "iteration": state.iteration,
                "timesteps": state.timesteps,
                "history": state.history,
                "envs": self.envs.state_dict(),
                "rngs": {name: rng.bit_generator.state for name, rng in self.rngs.items()},
                "warmup": self.warmup,
            },
            str(directory / "progress.pt"),
        )
        logger.debug(f"Checkpointed iteration {state.iteration} to {directory}")

    def _warm_up(self, observations: np.ndarray):
        needed = self.config.warmup_observations - self.warmup_size
        if needed > 0:
            self.warmup.append(observations[:needed])
        if self.warmup_size < self.config.warmup_observations:
            return
        model = fit_cluster_model(
            np.concatenate(self.warmup),
            self.extractor,
            self.streams.seed("cluster"),
            self.config.cluster,
        )
        if model.n_clusters < 2:
            raise ClusteringError(
                f"Style clustering produced {model.n_clusters} cluster, "
                f"the translator needs at least 2."
            )
        self.state.cluster_model = model
        self.state.translator = self._build_translator(model)
        self.warmup = []
        logger.info(
            f"Fitted {model.n_clusters} style clusters with weights "
            f"{np.round(model.weights, 4).tolist()}"
        )

    def _build_translator(self, model: ClusterModel) -> TranslatorPair:
        return TranslatorPair(
            model.n_clusters, self.config.translator, self.streams.seed("gan_init")
        )

    def _evaluate_row(self, iteration: int) -> Dict[str, float]:
        row = {column: math.nan for column in METRIC_COLUMNS if column.startswith("eval_")}
        interval = self.config.eval_interval
        if not interval or (
            iteration % interval != 0 and iteration != self.config.n_iterations
        ):
            return row
        for split in Split:
            mean, std = evaluate(
                self.state,
                split,
                self.config.eval_episodes,
                self.streams.seed("eval"),
                self.config.greedy_eval,
            )
            row[f"eval_{split.value}_mean"] = mean
            row[f"eval_{split.value}_std"] = std
        return row

    def _prepare_run_dir(self):
        self.run_dir.mkdir(parents=True, exist_ok=True)
        save_config(self.config, self.run_dir / "config.yaml")
        with open(self.run_dir / "seeds.json", "w") as f:
            json.dump(self.streams.as_dict(), f, indent=2)
        for split in Split:
            export_levels(
                build_split(self.config.world, split),
                self.run_dir / f"levels_{split.value}.json",
            )
        self._rewrite_metrics()

    def _rewrite_metrics(self):
        if self.run_dir is None:
            return
        with open(self.run_dir / "metrics.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(METRIC_COLUMNS)
            for row in self.state.history:
                writer.writerow(_format_row(row))

    def _append_metrics(self, row: Dict[str, Any]):
        if self.run_dir is None:
            return
        with open(self.run_dir / "metrics.csv", "a", newline="") as f:
            csv.writer(f).writerow(_format_row(row))

    def _write_summary(self, status: str, diagnostics: Optional[Dict[str, Any]] = None):
        if self.run_dir is None:
            return
        state = self.state
        last = state.history[-1] if state.history else {}
        summary = {
            "status": status,
            "algo": self.config.algo.value,
            "seed": self.config.seed,
            "iterations": state.iteration,
            "timesteps": state.timesteps,
            "n_clusters": (
                None if state.cluster_model is None else state.cluster_model.n_clusters
            ),
            "final": {k: v for k, v in last.items() if k.startswith("eval_")},
        }
        if diagnostics is not None:
            summary["diagnostics"] = diagnostics
        with open(self.run_dir / "summary.json", "w") as f:
            json.dump(summary, f, indent=2)


def _format_row(row: Dict[str, Any]) -> List[str]:
    return [
        repr(float(row[column])) if isinstance(row[column], float) else str(row[column])
        for column in METRIC_COLUMNS
    ]


def train(
    config: TrainConfig,
    run_dir: Optional[Union[str, Path]] = None,
    resume: bool = False,
    progress: bool = False,
) -> TrainState:
    """
    :param config: Run configuration, ignored in favour of the stored one when resuming.
    :param run_dir: Directory the run is recorded in.
    :param resume: Continue the run stored in run_dir.
    :param progress: Show a progress bar.
    :return: Final training state.
    """
    if resume:
        if run_dir is None:
            raise CheckpointError("Resuming needs the run directory.")
        trainer = Trainer.resume(run_dir)
    else:
        trainer = Trainer(config, run_dir)
    return trainer.run(progress)


def evaluate(
    state: TrainState,
    split: Split,
    n_episodes: int,
    seed: int = 0,
    greedy: bool = False,
) -> Tuple[float, float]:
    """
    :return: Mean and standard deviation of the policy's returns on the split.
    """
    return evaluate_policy(
        state.policy, state.config.world, split, n_episodes, seed, greedy
    )
