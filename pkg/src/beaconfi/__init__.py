"""Wi-Fi beacon ranging (CSI + RSS) and indoor positioning with PDR-aided training."""

from .io import VERSION as __version__

__all__ = ["__version__"]
