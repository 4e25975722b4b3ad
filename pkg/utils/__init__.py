"""
Utility modules for the Fabry-Perot toolkit.
"""

from .config import RunConfig, build_config, load_config_file
from .logger import setup_logger
from .report import read_curve, read_table, write_curve, write_table
