"""Sparsification of magnetic Laplacians with random multi-type spanning forests."""

__version__ = "0.1.0"

from .graph import *  # noqa: E402,F401,F403
from .generators import *  # noqa: E402,F401,F403
from .sampler import *  # noqa: E402,F401,F403
from .oracle import *  # noqa: E402,F401,F403
from .leverage import *  # noqa: E402,F401,F403
from .sparsifier import *  # noqa: E402,F401,F403
from .solvers import *  # noqa: E402,F401,F403
from .syncrank import *  # noqa: E402,F401,F403
from .estimators import MagneticSparsifier, SyncRank, TikhonovSmoother  # noqa: E402,F401
from .cli import ExperimentConfig, run_experiment  # noqa: E402,F401
