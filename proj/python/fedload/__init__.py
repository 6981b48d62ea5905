"""Federated per-appliance load forecasting toolkit."""

try:
    from fedload._core import *  # noqa: F401,F403
    from fedload._core import __version__  # noqa: F401
except ImportError:  # extension built in-tree, not installed as a package
    from _core import *  # noqa: F401,F403
    from _core import __version__  # noqa: F401
