"""Backend selection for the hot numerical kernels.

The compiled extension is preferred; the numpy fallback is selected when the
extension is missing.  Set ``SUBLAPLAB_BACKEND=python`` or ``compiled`` to
force a choice (the benchmark script relies on this).
"""

import os

_FORCED = os.environ.get("SUBLAPLAB_BACKEND", "").strip().lower()

if _FORCED not in ("", "compiled", "python"):
    raise ImportError(
        f"SUBLAPLAB_BACKEND={_FORCED!r} is not one of 'compiled', 'python'"
    )

if _FORCED == "python":
    from . import _kernels_fallback as _impl
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        if _FORCED == "compiled":
            raise
        from . import _kernels_fallback as _impl
        BACKEND = "python"

h1_cc_norm = _impl.h1_cc_norm
pairwise_h1_dist = _impl.pairwise_h1_dist
pair_energy_coords = _impl.pair_energy_coords
pair_energy_dist = _impl.pair_energy_dist


def backend_name() -> str:
    return BACKEND
