"""Self-rewriting group-relative policy optimization engine."""

try:
    from selfrw._core import *  # noqa: F401,F403  (installed wheel layout)
    from selfrw._core import __version__  # noqa: F401
except ImportError:  # development build tree: _core.so on sys.path
    from _core import *  # noqa: F401,F403
    from _core import __version__  # noqa: F401
