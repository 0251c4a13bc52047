"""
This module contains style clustering: fixed feature extractors
and a diagonal Gaussian mixture fitted with EM.
"""

import arpolib.cluster.extractor as extractor_module
import arpolib.cluster.extractor_base as extractor_base_module
import arpolib.cluster.gmm as gmm_module
import arpolib.cluster.montage as montage_module

from arpolib.cluster.extractor import *
from arpolib.cluster.extractor_base import *
from arpolib.cluster.gmm import *
from arpolib.cluster.montage import *

__all__ = (
    extractor_base_module.__all__
    + extractor_module.__all__
    + gmm_module.__all__
    + montage_module.__all__
)
