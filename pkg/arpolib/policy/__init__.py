"""
This module contains the policy: network, PPO update with the
adversarial divergence regulariser, and categorical divergences.
"""

import arpolib.policy.kl as kl_module
import arpolib.policy.network as network_module
import arpolib.policy.policy as policy_module

from arpolib.policy.kl import *
from arpolib.policy.network import *
from arpolib.policy.policy import *

__all__ = kl_module.__all__ + network_module.__all__ + policy_module.__all__
