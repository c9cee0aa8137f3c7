"""Bernoulli-Weibull survival models for rare-event data."""

from ._bwsurv import *  # noqa: F401,F403
from ._bwsurv import __version__, Model  # noqa: F401
