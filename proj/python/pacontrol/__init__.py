"""Principal-agent stochastic control: model, simulation, HJB solver and verification."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401
