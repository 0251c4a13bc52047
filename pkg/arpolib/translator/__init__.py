"""
This module contains the multi-domain style translator:
networks, losses and the alternating update of its two players.
"""

import arpolib.translator.losses as losses_module
import arpolib.translator.networks as networks_module
import arpolib.translator.pair as pair_module

from arpolib.translator.losses import *
from arpolib.translator.networks import *
from arpolib.translator.pair import *

__all__ = networks_module.__all__ + losses_module.__all__ + pair_module.__all__
