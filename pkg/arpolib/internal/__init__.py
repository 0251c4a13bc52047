"""
This module contains library's internal classes, functions and definitions
"""

import arpolib.internal.errors as errors_module
import arpolib.internal.image as image_module
import arpolib.internal.interfaces as interfaces_module
import arpolib.internal.modules as modules_module
import arpolib.internal.seeding as seeding_module

from arpolib.internal.errors import *
from arpolib.internal.image import *
from arpolib.internal.interfaces import *
from arpolib.internal.modules import *
from arpolib.internal.seeding import *

__all__ = (
    errors_module.__all__
    + image_module.__all__
    + interfaces_module.__all__
    + modules_module.__all__
    + seeding_module.__all__
)
