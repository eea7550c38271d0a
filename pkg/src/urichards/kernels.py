"""Backend selection for the hot transform kernels.

The compiled extension is used when importable; setting the environment
variable ``URICHARDS_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _pykernels

if os.environ.get("URICHARDS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

complete_beta = _impl.complete_beta
incomplete_beta = _impl.incomplete_beta
u_from_s = _impl.u_from_s
dsdu_from_s = _impl.dsdu_from_s
s_from_u = _impl.s_from_u


def get_backend(name):
    """Return the kernel module for ``"compiled"`` or ``"python"``."""
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
