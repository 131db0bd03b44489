"""Gaussianizing converters for joint source-channel coding over memoryless networks.

Schemes designed for Gaussian sources or Gaussian additive noise are lifted,
through an orthogonal block transform, to schemes whose distortion on any
source or noise with the same covariance approaches the Gaussian one as the
block size grows.
"""

from .converters import *  # noqa: F401,F403
from .errors import CausalityError, ConfigError, InvalidInputError, SchemeError
from .lab import *  # noqa: F401,F403
from .manifest import *  # noqa: F401,F403
from .network import *  # noqa: F401,F403
from .schemes import *  # noqa: F401,F403
from .sources import *  # noqa: F401,F403
from .transform import *  # noqa: F401,F403

__version__ = "0.1.0"
