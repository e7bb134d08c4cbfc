"""Diffeomorphic non-uniform B-spline coupling flows with analytic inverses.

Submodules are imported lazily so the CLI can configure thread pools before
numpy loads.
"""

__version__ = "0.1.0"

_SUBMODULES = ("autodiff", "splines", "paramgen", "network", "flow",
               "targets", "training", "figures", "errors", "cli")


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
