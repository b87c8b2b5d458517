"""Pure numpy implementation of the dual evaluation kernel.

Mirrors ``_ckernels.pyx`` exactly; selected when the compiled module is
missing or ``BREGCAL_PURE_PYTHON`` is set.
"""

import numpy as np


def _conjugate_terms(code, alpha, nu):
    if code == 0:
        return 0.5 * nu * nu, nu, np.ones_like(nu)
    if code == 1:
        e = np.exp(nu - 1.0)
        return e, e, e
    if code == 2:
        e = np.exp(nu)
        return nu + e, 1.0 + e, e
    if code == 3:
        return -1.0 - np.log(-nu), -1.0 / nu, 1.0 / (nu * nu)
    if code == 4:
        d = 1.0 - nu
        return nu / d, 1.0 / (d * d), 2.0 / (d * d * d)
    if code == 5:
        root = nu ** (1.0 / alpha)
        return alpha / (alpha + 1.0) * nu * root, root, root / (alpha * nu)
    if code == 6:
        em = np.expm1(nu)
        return nu - np.log(-em), -1.0 / em, (em + 1.0) / (em * em)
    raise ValueError(f"unknown generator code {code}")


def dual_terms(code, alpha, offset, X, lam, scale, lo, hi, want_hess=True):
    """Evaluate ``sum s F(nu)``, ``X' (s F'(nu))`` and ``X' diag(s F''(nu)) X``.

    ``nu = offset + X @ lam``.  Returns ``(value, grad, hess, bad)`` where
    ``bad`` is the index of the first unit whose ``nu`` lies outside
    ``(lo, hi)`` (and the other entries are ``None``), or ``-1``.
    """
    nu = offset + X @ lam
    outside = ~((nu > lo) & (nu < hi))
    if outside.any():
        return None, None, None, int(np.flatnonzero(outside)[0])
    f, f1, f2 = _conjugate_terms(code, alpha, nu)
    value = float(scale @ f)
    grad = X.T @ (scale * f1)
    hess = None
    if want_hess:
        hess = (X * (scale * f2)[:, None]).T @ X
    return value, grad, hess, -1


def link(code, alpha, nu):
    """Inverse calibration link ``F'(nu)`` (no domain check)."""
    return _conjugate_terms(code, alpha, nu)[1]
