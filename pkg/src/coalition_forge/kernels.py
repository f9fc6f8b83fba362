"""Backend selection for the batch solve kernels.

The compiled extension is used when importable; set ``COALITION_FORGE_PURE=1``
to force the numpy fallback.
"""
import os

if os.environ.get("COALITION_FORGE_PURE", "") not in ("", "0"):
    from ._kernels_py import quadratic_loss_batch, solve_batch

    BACKEND = "python"
else:
    try:
        from ._kernels import quadratic_loss_batch, solve_batch

        BACKEND = "cython"
    except ImportError:
        from ._kernels_py import quadratic_loss_batch, solve_batch

        BACKEND = "python"

__all__ = ["BACKEND", "quadratic_loss_batch", "solve_batch"]
