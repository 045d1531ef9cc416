"""Tabular off-policy evaluation, influence functions and efficiency experiments."""

from ._effope import *  # noqa: F401,F403
from ._effope import __doc__  # noqa: F401

__version__ = "0.1.0"
