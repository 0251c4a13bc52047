import collections
import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from arpolib.world.world_base import Action, LevelSpec, Split, WorldConfig

__all__ = [
    "MOVES",
    "Layout",
    "generate_layout",
    "shortest_path",
    "build_split",
    "LevelSampler",
    "export_levels",
    "load_levels",
]

# Test layouts are drawn far away from the train layout seeds,
# so no test level shares a layout with the train split.
TEST_LAYOUT_OFFSET = 1_000_000
LAYOUT_ATTEMPTS = 100

MOVES = {
    Action.NOOP: (0, 0),
    Action.UP: (-1, 0),
    Action.RIGHT: (0, 1),
    Action.DOWN: (1, 0),
    Action.LEFT: (0, -1),
}

Cell = Tuple[int, int]


@dataclass(frozen=True)
class Layout:
    """
    walls: (G, G) boolean wall mask.
    start: initial agent cell.
    goal: goal cell, always reachable from start.
    """

    walls: np.ndarray
    start: Cell
    goal: Cell

    def is_open(self, cell: Cell) -> bool:
        row, column = cell
        size = self.walls.shape[0]
        return 0 <= row < size and 0 <= column < size and not self.walls[row, column]

    def move(self, cell: Cell, action: int) -> Cell:
        """
        :return: Cell after the action, unchanged when blocked by a wall or the border.
        """
        d_row, d_column = MOVES[Action(action)]
        target = (cell[0] + d_row, cell[1] + d_column)
        return target if self.is_open(target) else cell


def generate_layout(layout_seed: int, config: WorldConfig) -> Layout:
    """
    Layouts depend on the seed and the grid only, never on the style.
    """
    rng = np.random.default_rng(layout_seed)
    size = config.grid_size
    for _ in range(LAYOUT_ATTEMPTS):
        walls = rng.random((size, size)) < config.wall_density
        open_cells = np.argwhere(~walls)
        if len(open_cells) < 2:
            continue
        start_index, goal_index = rng.choice(len(open_cells), size=2, replace=False)
        layout = Layout(
            walls,
            tuple(int(v) for v in open_cells[start_index]),
            tuple(int(v) for v in open_cells[goal_index]),
        )
        if shortest_path(layout) is not None:
            return layout
    walls = np.zeros((size, size), dtype=bool)
    return Layout(walls, (0, 0), (size - 1, size - 1))


def shortest_path(layout: Layout, start: Optional[Cell] = None) -> Optional[List[int]]:
    """
    Breadth-first search over open cells.
    :param layout: Layout to search in.
    :param start: Start cell, the layout start by default.
    :return: Actions leading to the goal, None if the goal is unreachable.
    """
    start = layout.start if start is None else start
    parents = {start: None}
    queue = collections.deque([start])
    while queue:
        cell = queue.popleft()
        if cell == layout.goal:
            break
        for action in (Action.UP, Action.RIGHT, Action.DOWN, Action.LEFT):
            neighbour = layout.move(cell, action)
            if neighbour not in parents:
                parents[neighbour] = (cell, int(action))
                queue.append(neighbour)
    if layout.goal not in parents:
        return None
    actions = []
    cell = layout.goal
    while parents[cell] is not None:
        cell, action = parents[cell]
        actions.append(action)
    return actions[::-1]


def build_split(config: WorldConfig, split: Split) -> List[LevelSpec]:
    """
    The train split is every train style over the first n_train_layouts layouts,
    the test split is a fixed pool of held-out styles over fresh layouts.
    Both are independent of the run seed.
    """
    if split is Split.TRAIN:
        return [
            LevelSpec(
                layout_seed=layout_seed,
                style_id=style_id,
                dynamic_phase=(7 * layout_seed + 13 * style_id) % config.max_dynamic_phase,
            )
            for layout_seed in range(config.n_train_layouts)
            for style_id in config.train_styles
        ]
    rng = np.random.default_rng(TEST_LAYOUT_OFFSET)
    styles = config.test_styles
    return [
        LevelSpec(
            layout_seed=TEST_LAYOUT_OFFSET + index,
            style_id=styles[index % len(styles)],
            dynamic_phase=int(rng.integers(config.max_dynamic_phase)),
        )
        for index in range(config.n_test_levels)
    ]


class LevelSampler:
    """
    Draws levels uniformly from a split.

    :param levels: Levels of the split.
    :param rng: Random generator owned by the sampler.
    """

    def __init__(self, levels: Sequence[LevelSpec], rng: np.random.Generator):
        if not levels:
            raise ValueError("Cannot sample from an empty split")
        self._levels = list(levels)
        self._rng = rng

    @property
    def levels(self) -> List[LevelSpec]:
        return self._levels

    @property
    def rng(self) -> np.random.Generator:
        return self._rng

    def sample(self) -> LevelSpec:
        return self._levels[int(self._rng.integers(len(self._levels)))]


def export_levels(levels: Sequence[LevelSpec], path: Union[str, Path]):
    """
    Write levels as a JSON list of objects.
    """
    with open(path, "w") as f:
        json.dump([level.to_dict() for level in levels], f, indent=1)


def load_levels(path: Union[str, Path]) -> List[LevelSpec]:
    with open(path) as f:
        return [LevelSpec(**entry) for entry in json.load(f)]
