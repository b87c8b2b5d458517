"""Backend selection for the dual evaluation kernel.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``BREGCAL_PURE_PYTHON`` is set to a non-empty value
other than ``0``, the numpy implementation is used.  Both expose
``dual_terms`` and ``link`` with identical signatures.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("BREGCAL_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def dual_terms(code, alpha, offset, X, lam, scale, lo, hi, want_hess=True):
    return _impl.dual_terms(code, alpha, offset, X, lam, scale, lo, hi, want_hess)


def link(code, alpha, nu):
    return _impl.link(code, alpha, nu)


def get_backend(name=None):
    """Return the kernel module for ``name`` (``"cython"``/``"python"``)."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
