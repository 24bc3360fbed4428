"""Kernel backend selection.

The hot kernels (SO(3) exp/log and the QP interior-point solve) exist twice:
compiled in ``spinequad._fastcore`` (Cython) and in pure numpy in
``spinequad._kernels_py``.  The compiled module is preferred when importable;
set SPINEQUAD_PURE_PYTHON=1 to force the fallback.  Everything downstream goes
through this module so the choice is made exactly once, at import.
"""

import os

from spinequad import _kernels_py

if os.environ.get("SPINEQUAD_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from spinequad import _fastcore as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

so3_exp = _impl.so3_exp
so3_log = _impl.so3_log
qp_solve = _impl.qp_solve
so3_hat = _kernels_py.so3_hat
