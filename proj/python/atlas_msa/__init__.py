"""Multi-scale windowed attention: layouts, block primitives, classifier, toy task."""

try:
    from ._core import *  # noqa: F401,F403  (installed wheel: extension inside the package)
except ImportError:
    from _core import *  # noqa: F401,F403  (in-tree runs: extension on sys.path from the build dir)
