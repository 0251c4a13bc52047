"""
This module contains the distractor world environment: level specs,
layouts, style rendering, single and vectorized environments.
"""

import arpolib.world.levels as levels_module
import arpolib.world.render as render_module
import arpolib.world.world as world_module
import arpolib.world.world_base as world_base_module

from arpolib.world.levels import *
from arpolib.world.render import *
from arpolib.world.world import *
from arpolib.world.world_base import *

__all__ = (
    world_base_module.__all__
    + levels_module.__all__
    + render_module.__all__
    + world_module.__all__
)
