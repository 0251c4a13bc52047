"""
This module contains the command line interface and experiment reports.
"""

import arpolib.cli.commands as commands_module
import arpolib.cli.report as report_module

from arpolib.cli.commands import *
from arpolib.cli.report import *

__all__ = commands_module.__all__ + report_module.__all__
