"""
This module contains training configuration, the training loop,
evaluation and observation augmentation.
"""

import arpolib.trainer.augment as augment_module
import arpolib.trainer.config as config_module
import arpolib.trainer.evaluate as evaluate_module
import arpolib.trainer.trainer as trainer_module

from arpolib.trainer.augment import *
from arpolib.trainer.config import *
from arpolib.trainer.evaluate import *
from arpolib.trainer.trainer import *

__all__ = (
    config_module.__all__
    + augment_module.__all__
    + evaluate_module.__all__
    + trainer_module.__all__
)
