"""Negative token merging: training-free adversarial feature guidance.

Thin wrapper around the compiled extension. The heavy lifting lives in the
C++ core; see the repository README for the file formats and the CLI.
"""

try:
    from negtome._negtome import *  # noqa: F401,F403  (installed layout)
    from negtome import _negtome as _impl
except ImportError:  # build-tree layout: extension directly on sys.path
    from _negtome import *  # noqa: F401,F403
    import _negtome as _impl

__version__ = "0.1.0"

__all__ = [name for name in dir(_impl) if not name.startswith("_")]
