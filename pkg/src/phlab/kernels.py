"""Backend selection for the hot loops.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
numpy implementations in ``_pykernels`` are used.  Setting ``PHLAB_PURE_PYTHON=1``
forces the fallback.
"""

import os

from . import _pykernels

if os.environ.get("PHLAB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

apply_batch = _impl.apply_batch
derivative_batch = _impl.derivative_batch
adapted_jacobian_batch = _impl.adapted_jacobian_batch
iterate = _impl.iterate
trajectory = _impl.trajectory
qr_steps = _impl.qr_steps
cu_steps = _impl.cu_steps
birkhoff_sums = _impl.birkhoff_sums

# Offsets into the flat parameter vector shared by both backends.
PARAM_LAYOUT = {
    "A": slice(0, 9),
    "Lt": slice(9, 18),
    "G": slice(18, 27),
    "Gi": slice(27, 36),
    "p": slice(36, 39),
    "rho": 39,
    "delta": 40,
    "v2": slice(41, 44),
    "w2": slice(44, 47),
    "Av2": slice(47, 50),
    "alpha": slice(50, 53),
}
PARAM_SIZE = 53


def backends():
    """Return the available kernel modules keyed by name."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out
