"""Edge kernels of the graph classifier.

The compiled extension (`_edge`) is used when it has been built; otherwise
the NumPy implementation in `fallback` is selected at import. Setting
``RFGESTURE_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import fallback

BACKEND = "python"
edge_forward = fallback.edge_forward
edge_backward = fallback.edge_backward

if os.environ.get("RFGESTURE_PURE_PYTHON", "") in ("", "0"):
    try:
        from ._edge import edge_backward, edge_forward  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        pass


def get_backend(name=None):
    """Return ``(edge_forward, edge_backward)`` for a backend name."""
    if name is None:
        return edge_forward, edge_backward
    if name == "python":
        return fallback.edge_forward, fallback.edge_backward
    if name == "cython":
        from . import _edge

        return _edge.edge_forward, _edge.edge_backward
    raise ValueError(f"unknown backend {name!r}")
