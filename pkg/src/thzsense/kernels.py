"""Backend selection for the geometry kernels.

The compiled extension is used when importable; set ``THZSENSE_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if not os.environ.get("THZSENSE_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py

segments_hit_discs = _impl.segments_hit_discs
specular_point = _impl.specular_point
traverse_cells = _impl.traverse_cells
rays_max = _impl.rays_max

__all__ = ["BACKEND", "segments_hit_discs", "specular_point", "traverse_cells", "rays_max"]
