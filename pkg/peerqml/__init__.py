"""Top-level package for peerqml package"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version(__name__)
except PackageNotFoundError:
    try:
        from .version import version as __version__
    except ImportError:
        raise ImportError(
            "Failed to find (autogenerated) version.py. "
            "This might be because you are installing from GitHub's tarballs, "
            "use the PyPI ones."
        )


from .errors import *
from .block_algebra import *
from .data_operator import *
from .data_attributes import *
from .likelihood import *
from .inference import *
from .estimators import *
from .simulate import *
from .monte_carlo import *
from .io import *
from .peerqml_config import *
