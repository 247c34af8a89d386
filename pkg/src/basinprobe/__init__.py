"""Loss-landscape probes for small networks: training, attack minima, Hessian geometry, complexity bounds."""

__version__ = "0.1.0"

from .errors import BasinProbeError  # noqa: F401
from .net import Activation, LossKind, Network, backward, forward  # noqa: F401
