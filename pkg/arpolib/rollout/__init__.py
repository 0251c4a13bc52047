"""
This module contains on-policy rollout collection and advantage estimation.
"""

import arpolib.rollout.advantages as advantages_module
import arpolib.rollout.batch as batch_module
import arpolib.rollout.collect as collect_module

from arpolib.rollout.advantages import *
from arpolib.rollout.batch import *
from arpolib.rollout.collect import *

__all__ = batch_module.__all__ + collect_module.__all__ + advantages_module.__all__
