"""
Observation rendering. The frame is split into a fixed state region,
the inner square of every grid cell, and a distractor region covering
everything else. The state region only ever shows the cell contents,
the distractor region only ever shows the style.
"""

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

__all__ = [
    "CellCode",
    "STATE_COLORS",
    "StyleTable",
    "make_style_table",
    "make_state_mask",
    "render_observation",
]

STYLE_TABLE_SEED = 7411
TEXTURE_PERIOD = 4


class CellCode:
    EMPTY = 0
    WALL = 1
    GOAL = 2
    AGENT = 3


# Dyadic values pass the [0, 1] <-> [-1, 1] translator mapping bit-exactly.
STATE_COLORS = np.array(
    [
        [0.375, 0.375, 0.375],  # empty
        [0.0625, 0.0625, 0.0625],  # wall
        [0.125, 0.875, 0.25],  # goal
        [1.0, 0.875, 0.125],  # agent
    ],
    dtype=np.float64,
)


@dataclass(frozen=True)
class StyleTable:
    """
    Per-style distractor parameters, indexed by style id.

    background: (S, 3) static fill color.
    texture_color: (S, 3) color of the tiled texture.
    texture_pattern: (S, P, P) binary tile repeated over the frame.
    texture_alpha: (S,) opacity of the texture.
    wave_color: (S, 3) color of the animated wave.
    wave_amplitude: (S,) opacity of the animated wave.
    wave_frequency: (S, 2) horizontal and vertical wave frequencies.
    wave_speed: (S,) phase advance per frame.
    """

    background: np.ndarray
    texture_color: np.ndarray
    texture_pattern: np.ndarray
    texture_alpha: np.ndarray
    wave_color: np.ndarray
    wave_amplitude: np.ndarray
    wave_frequency: np.ndarray
    wave_speed: np.ndarray


def make_style_table(n_styles: int) -> StyleTable:
    """
    Style k is drawn from its own generator, so a style looks
    the same whatever the number of styles in the world.
    """
    rows = []
    for style_id in range(n_styles):
        rng = np.random.default_rng([STYLE_TABLE_SEED, style_id])
        rows.append(
            (
                rng.uniform(0.0, 1.0, 3),
                rng.uniform(0.0, 1.0, 3),
                (rng.random((TEXTURE_PERIOD, TEXTURE_PERIOD)) < 0.5).astype(np.float64),
                rng.uniform(0.2, 0.6),
                rng.uniform(0.0, 1.0, 3),
                rng.uniform(0.1, 0.35),
                rng.integers(0, 3, 2).astype(np.float64) + np.array([1.0, 0.0]),
                rng.uniform(0.2, 0.8),
            )
        )
    columns = list(zip(*rows))
    return StyleTable(*(np.array(column, dtype=np.float64) for column in columns))


def make_state_mask(grid_size: int, cell_size: int) -> np.ndarray:
    """
    :return: Boolean (H, W) mask of the inner square of every cell.
    """
    inner, offset = _inner_square(cell_size)
    cell_mask = np.zeros((cell_size, cell_size), dtype=bool)
    cell_mask[offset : offset + inner, offset : offset + inner] = True
    return np.tile(cell_mask, (grid_size, grid_size))


def render_observation(
    cells: np.ndarray,
    cell_size: int,
    styles: StyleTable,
    style_id: int,
    frame: int,
) -> np.ndarray:
    """
    :param cells: (G, G) integer cell codes, see ``CellCode``.
    :param cell_size: Pixels per cell.
    :param styles: Style table of the world.
    :param style_id: Style of the distractor region.
    :param frame: Frame index of the animated wave.
    :return: (H, W, 3) float32 image in [0, 1].
    """
    inner, offset = _inner_square(cell_size)
    return _render_kernel(
        np.ascontiguousarray(cells, dtype=np.int64),
        cell_size,
        inner,
        offset,
        STATE_COLORS,
        styles.background[style_id],
        styles.texture_color[style_id],
        styles.texture_pattern[style_id],
        float(styles.texture_alpha[style_id]),
        styles.wave_color[style_id],
        float(styles.wave_amplitude[style_id]),
        styles.wave_frequency[style_id],
        float(styles.wave_speed[style_id]),
        float(frame),
    )


def _inner_square(cell_size: int):
    inner = max(cell_size // 2, 1)
    return inner, (cell_size - inner) // 2


@nb.njit(cache=True)
def _render_kernel(
    cells,
    cell_size,
    inner,
    offset,
    state_colors,
    background,
    texture_color,
    texture_pattern,
    texture_alpha,
    wave_color,
    wave_amplitude,
    wave_frequency,
    wave_speed,
    frame,
):
    grid_size = cells.shape[0]
    size = grid_size * cell_size
    period = texture_pattern.shape[0]
    image = np.empty((size, size, 3), dtype=np.float32)
    for y in range(size):
        row = y // cell_size
        dy = y - row * cell_size - offset
        for x in range(size):
            column = x // cell_size
            dx = x - column * cell_size - offset
            if 0 <= dy < inner and 0 <= dx < inner:
                code = cells[row, column]
                for channel in range(3):
                    image[y, x, channel] = state_colors[code, channel]
                continue
            texture = texture_alpha * texture_pattern[y % period, x % period]
            wave = 0.5 + 0.5 * math.sin(
                2.0 * math.pi * (wave_frequency[0] * x + wave_frequency[1] * y) / size
                + wave_speed * frame
            )
            blend = wave_amplitude * wave
            for channel in range(3):
                value = (
                    background[channel] * (1.0 - texture)
                    + texture_color[channel] * texture
                )
                value = value * (1.0 - blend) + wave_color[channel] * blend
                image[y, x, channel] = min(max(value, 0.0), 1.0)
    return image
