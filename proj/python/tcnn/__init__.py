"""Python surface of the TCNN matching engine (C++ core)."""

try:
    from ._tcnn import *  # noqa: F401,F403
    from ._tcnn import Matcher  # noqa: F401
except ImportError:  # module built out-of-tree (e.g. plain CMake build dir)
    from _tcnn import *  # noqa: F401,F403
    from _tcnn import Matcher  # noqa: F401
