"""Tridiagonal linear solvers.

Two flavours are provided:

* :func:`thomas` -- the plain Thomas algorithm, vectorised over any number of
  leading batch axes.  Used where a one-off solve is needed.
* :class:`TridiagonalFactor` -- LU factors (LAPACK ``?gttrf``) of a fixed batch
  of matrices, re-used for many right-hand sides.  Time steppers build one of
  these per time-step size and call :meth:`TridiagonalFactor.solve` every step.

Convention: ``lower[..., i]`` couples row ``i + 1`` to column ``i`` and
``upper[..., i]`` couples row ``i`` to column ``i + 1`` (both length ``n - 1``).
"""

import numpy as np
from scipy.linalg import lapack


def thomas(lower, diag, upper, rhs):
    """Solve a batch of tridiagonal systems without pivoting.

    Parameters
    ----------
    lower, upper : array (..., n-1)
    diag : array (..., n)
    rhs : array (..., n)

    Returns
    -------
    x : array (..., n)
    """
    lower, diag, upper, rhs = np.broadcast_arrays(
        *[np.asarray(v) for v in (np.pad(lower, [(0, 0)] * (np.ndim(lower) - 1) + [(1, 0)]),
                                  diag,
                                  np.pad(upper, [(0, 0)] * (np.ndim(upper) - 1) + [(0, 1)]),
                                  rhs)])
    dtype = np.result_type(lower, diag, upper, rhs, np.float64)
    n = diag.shape[-1]
    cp = np.empty(diag.shape, dtype=dtype)
    dp = np.empty(diag.shape, dtype=dtype)
    cp[..., 0] = upper[..., 0] / diag[..., 0]
    dp[..., 0] = rhs[..., 0] / diag[..., 0]
    for i in range(1, n):
        denom = diag[..., i] - lower[..., i] * cp[..., i - 1]
        cp[..., i] = upper[..., i] / denom
        dp[..., i] = (rhs[..., i] - lower[..., i] * dp[..., i - 1]) / denom
    x = np.empty_like(dp)
    x[..., -1] = dp[..., -1]
    for i in range(n - 2, -1, -1):
        x[..., i] = dp[..., i] - cp[..., i] * x[..., i + 1]
    return x


def tridiag_matvec(lower, diag, upper, x):
    """Return ``A @ x`` for the (batched) tridiagonal matrix ``A``."""
    y = diag * x
    y[..., 1:] += lower * x[..., :-1]
    y[..., :-1] += upper * x[..., 1:]
    return y


class TridiagonalFactor:
    """Pivoted LU factorisation of a batch of tridiagonal matrices.

    ``lower``, ``diag``, ``upper`` have shape ``(batch, n-1)``, ``(batch, n)``,
    ``(batch, n-1)`` or the unbatched 1-D shapes.
    """

    def __init__(self, lower, diag, upper):
        diag = np.atleast_2d(diag)
        lower = np.atleast_2d(lower)
        upper = np.atleast_2d(upper)
        self.batched = np.ndim(diag) == 2 and diag.shape[0] > 1
        self.complex = any(np.iscomplexobj(v) for v in (lower, diag, upper))
        dtype = np.complex128 if self.complex else np.float64
        pre = "z" if self.complex else "d"
        self._gttrf = getattr(lapack, pre + "gttrf")
        self._gttrs = getattr(lapack, pre + "gttrs")
        self.n = diag.shape[-1]
        self.factors = []
        for dl, d, du in zip(lower.astype(dtype), diag.astype(dtype), upper.astype(dtype)):
            dl_, d_, du_, du2, ipiv, info = self._gttrf(dl, d, du)
            if info != 0:
                raise np.linalg.LinAlgError(f"singular tridiagonal matrix (info={info})")
            self.factors.append((dl_, d_, du_, du2, ipiv))
        self.dtype = dtype

    def __len__(self):
        return len(self.factors)

    def solve(self, rhs):
        """Solve for a right-hand side of shape ``(batch, n)`` (or ``(n,)``)."""
        rhs = np.asarray(rhs)
        single = rhs.ndim == 1
        rhs2 = np.atleast_2d(rhs)
        out_dtype = np.result_type(rhs2, self.dtype)
        out = np.empty(rhs2.shape, dtype=out_dtype)
        for j, (dl, d, du, du2, ipiv) in enumerate(self.factors):
            b = rhs2[j]
            if np.iscomplexobj(b) and not self.complex:
                re, info = self._gttrs(dl, d, du, du2, ipiv, b.real.copy())
                im, info2 = self._gttrs(dl, d, du, du2, ipiv, b.imag.copy())
                out[j] = re + 1j * im
            else:
                x, info = self._gttrs(dl, d, du, du2, ipiv, b.astype(self.dtype))
                out[j] = x
        return out[0] if single else out
