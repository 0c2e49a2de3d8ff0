"""Dense symmetric-matrix helpers.

Conventions used everywhere in the package:

* ``vec`` stacks columns (Fortran order).
* ``vech`` stacks the lower triangle column by column, so for ``k = 3`` the
  order is ``(s11, s21, s31, s22, s32, s33)``.
* ``duplication(k) @ vech(S) == vec(S)`` for every symmetric ``S``.
"""

import numpy as np

__all__ = [
    "NotPositiveDefiniteError",
    "sym",
    "vec",
    "unvec",
    "vech",
    "unvech",
    "vech_size",
    "duplication",
    "kron",
    "cholesky",
    "min_eigenvalue",
    "is_pd",
    "log_det",
    "solve_spd",
    "inv_spd",
    "sym_sqrt",
    "schur_marginal",
]

PD_RTOL = 1e-12


class NotPositiveDefiniteError(ValueError):
    """Raised when a matrix that must be positive definite is not."""


def sym(a):
    """Symmetric part of a square matrix (or a stack of them)."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def vec(a):
    return np.asarray(a, dtype=float).reshape(-1, order="F")


def unvec(v, rows, cols):
    return np.asarray(v, dtype=float).reshape((rows, cols), order="F")


def vech_size(k):
    return k * (k + 1) // 2


def _vech_index(k):
    # column-major lower triangle == row-major upper triangle of the transpose
    cols, rows = np.triu_indices(k)
    return rows, cols


def vech(s):
    s = np.asarray(s, dtype=float)
    rows, cols = _vech_index(s.shape[-1])
    return s[..., rows, cols]


def unvech(v):
    v = np.asarray(v, dtype=float)
    m = v.shape[-1]
    k = int(round((np.sqrt(8 * m + 1) - 1) / 2))
    if vech_size(k) != m:
        raise ValueError(f"length {m} is not a triangular number")
    rows, cols = _vech_index(k)
    out = np.zeros(v.shape[:-1] + (k, k))
    out[..., rows, cols] = v
    out[..., cols, rows] = v
    return out


def duplication(k):
    """Duplication matrix ``D_k`` of shape ``(k*k, k*(k+1)/2)``."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    rows, cols = _vech_index(k)
    d = np.zeros((k * k, vech_size(k)))
    idx = np.arange(vech_size(k))
    d[rows + cols * k, idx] = 1.0
    d[cols + rows * k, idx] = 1.0
    return d


def kron(a, b):
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def cholesky(s):
    """Lower Cholesky factor; raises :class:`NotPositiveDefiniteError`."""
    try:
        return np.linalg.cholesky(np.asarray(s, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc


def min_eigenvalue(s):
    return float(np.linalg.eigvalsh(sym(s))[0])


def is_pd(s, tol=PD_RTOL):
    """Relative positive-definiteness test.

    Accepts ``s`` when ``min eig > tol * (1 + max eig)``, which is stable under
    rescaling of the hyperparameters by many orders of magnitude.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or not np.all(np.isfinite(s)):
        return False
    if s.shape[0] == 0:
        return True
    w = np.linalg.eigvalsh(sym(s))
    return bool(w[0] > tol * (1.0 + abs(w[-1])))


def log_det(s):
    _, ld = np.linalg.slogdet(np.asarray(s, dtype=float))
    return float(ld)


def solve_spd(s, rhs):
    from scipy.linalg import cho_factor, cho_solve

    try:
        c = cho_factor(np.asarray(s, dtype=float), lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc
    return cho_solve(c, np.asarray(rhs, dtype=float))


def inv_spd(s):
    s = np.asarray(s, dtype=float)
    return sym(solve_spd(s, np.eye(s.shape[0])))


def sym_sqrt(s, tol=1e-10):
    """Unique symmetric PSD square root, via the eigendecomposition."""
    w, v = np.linalg.eigh(sym(s))
    scale = max(1.0, abs(w[-1])) if w.size else 1.0
    if w.size and w[0] < -tol * scale:
        raise NotPositiveDefiniteError(f"not PSD (min eigenvalue {w[0]:.3e})")
    w = np.clip(w, 0.0, None)
    return sym((v * np.sqrt(w)) @ v.T)


def schur_marginal(h, m):
    """Marginal precision ``A - G D^{-1} C`` of the leading ``m``-block of ``h``."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or not 0 < m <= h.shape[0]:
        raise ValueError("h must be square with 0 < m <= h.shape[0]")
    a, g = h[:m, :m], h[:m, m:]
    c, d = h[m:, :m], h[m:, m:]
    if d.size == 0:
        return a.copy()
    if np.linalg.matrix_rank(d) < d.shape[0]:
        raise np.linalg.LinAlgError("nuisance block singular")
    return a - g @ np.linalg.solve(d, c)
