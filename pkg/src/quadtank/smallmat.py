"""Dense linear algebra for the small matrices used throughout the package.

Matrices are plain 2-D float ``numpy`` arrays and polynomials are 1-D arrays
of coefficients ordered from the highest degree down to the constant term
(the same convention as ``numpy.polyval``). numpy supplies storage and
elementwise arithmetic only; the factorizations and tests below are written
out so that every stability verdict in the package is decided the same way.
"""

import numpy as np

from .errors import (
    DimensionTooLarge,
    NotStable,
    NotSymmetric,
    SingularMatrix,
    ZeroPolynomial,
)

MAX_DIM = 8
PIVOT_RTOL = 1e-12


def as_matrix(a, name="matrix"):
    """Coerce ``a`` to a finite 2-D float array (a copy)."""
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def trim_poly(p):
    """Drop leading zero coefficients; the zero polynomial becomes ``[0.]``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    nz = np.flatnonzero(p)
    if nz.size == 0:
        return np.zeros(1)
    return p[nz[0]:].copy()


def _check_square(a, name):
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")


def lin_solve(a, b):
    """Solve ``a @ x = b`` by Gaussian elimination with partial pivoting.

    Raises ``SingularMatrix`` when a pivot falls below ``1e-12 * max|a|``.
    """
    a = as_matrix(a, "a")
    _check_square(a, "a")
    b = np.array(b, dtype=float)
    vector_rhs = b.ndim == 1
    b = as_matrix(b.reshape(-1, 1) if vector_rhs else b, "b")
    n = a.shape[0]
    if b.shape[0] != n:
        raise ValueError(f"b has {b.shape[0]} rows, expected {n}")

    scale = np.max(np.abs(a)) if a.size else 0.0
    tol = PIVOT_RTOL * scale
    m = np.hstack([a, b])
    for k in range(n):
        p = k + int(np.argmax(np.abs(m[k:, k])))
        if scale == 0.0 or abs(m[p, k]) < tol:
            raise SingularMatrix(f"pivot {k} below {tol:.3g}")
        if p != k:
            m[[k, p]] = m[[p, k]]
        factors = m[k + 1:, k] / m[k, k]
        m[k + 1:, k:] -= np.outer(factors, m[k, k:])

    x = np.empty_like(b)
    for k in range(n - 1, -1, -1):
        x[k] = (m[k, n:] - m[k, k + 1:n] @ x[k + 1:]) / m[k, k]
    return x.ravel() if vector_rhs else x


def inv(a):
    a = as_matrix(a, "a")
    return lin_solve(a, np.eye(a.shape[0]))


def char_poly(a):
    """Monic characteristic polynomial ``det(sI - a)`` (Faddeev-LeVerrier)."""
    a = as_matrix(a, "a")
    _check_square(a, "a")
    n = a.shape[0]
    if n > MAX_DIM:
        raise DimensionTooLarge(f"char_poly supports n <= {MAX_DIM}, got {n}")
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    m = np.zeros_like(a)
    eye = np.eye(n)
    for k in range(1, n + 1):
        m = a @ m + coeffs[k - 1] * eye
        coeffs[k] = -np.trace(a @ m) / k
    return coeffs


def polyval_matrix(p, a):
    """Evaluate polynomial ``p`` at square matrix ``a`` (Horner)."""
    a = as_matrix(a, "a")
    out = np.zeros_like(a)
    eye = np.eye(a.shape[0])
    for c in np.atleast_1d(p):
        out = out @ a + c * eye
    return out


def routh_first_column(p):
    """First column of the Routh array of ``p`` (leading coefficient made positive).

    Construction stops early at a zero first-column entry; the returned column
    then ends with that zero.
    """
    p = trim_poly(p)
    if p.size == 1 and p[0] == 0.0:
        raise ZeroPolynomial("the zero polynomial has no Routh array")
    if p[0] < 0:
        p = -p
    deg = p.size - 1
    width = deg // 2 + 1
    prev = np.zeros(width)
    cur = np.zeros(width)
    prev[: len(p[0::2])] = p[0::2]
    cur[: len(p[1::2])] = p[1::2]
    column = [prev[0]]
    for _ in range(deg):
        column.append(cur[0])
        if cur[0] == 0.0:
            break
        nxt = np.zeros(width)
        nxt[:-1] = (cur[0] * prev[1:] - prev[0] * cur[1:]) / cur[0]
        prev, cur = cur, nxt
    return np.array(column)


def is_hurwitz(p):
    """True iff every root of ``p`` has strictly negative real part.

    Decided by the Routh-Hurwitz array: all first-column entries must be
    strictly positive. A zero entry (marginal or singular case) counts as
    not Hurwitz.
    """
    p = trim_poly(p)
    if p.size == 1:
        if p[0] == 0.0:
            raise ZeroPolynomial("is_hurwitz needs a nonzero polynomial")
        raise ValueError("is_hurwitz needs degree >= 1")
    col = routh_first_column(p)
    if col.size < p.size:
        return False
    return bool(np.all(col > 0.0))


def is_hurwitz_matrix(a):
    return is_hurwitz(char_poly(a))


def sym_eigenvalues(a, tol=1e-12, max_sweeps=100):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending."""
    a = as_matrix(a, "a")
    _check_square(a, "a")
    n = a.shape[0]
    if n > MAX_DIM:
        raise DimensionTooLarge(f"sym_eigenvalues supports n <= {MAX_DIM}, got {n}")
    if n and np.max(np.abs(a - a.T)) > 1e-9:
        raise NotSymmetric("matrix is not symmetric to 1e-9")
    a = 0.5 * (a + a.T)
    # floor keeps badly scaled inputs from spinning forever
    stop = max(tol, 1e-15 * np.linalg.norm(a))
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2) * 2.0)
        if off <= stop:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau  # first-order limit, avoids overflowing tau**2
                else:
                    t = np.copysign(1.0, tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot_p = a[:, p].copy()
                rot_q = a[:, q].copy()
                a[:, p] = c * rot_p - s * rot_q
                a[:, q] = s * rot_p + c * rot_q
                rot_p = a[p, :].copy()
                rot_q = a[q, :].copy()
                a[p, :] = c * rot_p - s * rot_q
                a[q, :] = s * rot_p + c * rot_q
    return np.sort(np.diag(a))


def spectral_norm(a):
    """Induced 2-norm, ``sqrt(max eig(a^T a))``; 0 for an empty matrix."""
    a = as_matrix(a, "a") if np.size(a) else np.zeros((0, 0))
    if a.size == 0:
        return 0.0
    return float(np.sqrt(max(sym_eigenvalues(a.T @ a)[-1], 0.0)))


def lyap_solve(f, q):
    """Solve ``f^T m + m f + q = 0`` for symmetric ``m``.

    The equation is vectorized into an n^2 x n^2 system,
    ``(I kron f^T + f^T kron I) vec(m) = -vec(q)`` (column-major vec).
    """
    f = as_matrix(f, "f")
    q = as_matrix(q, "q")
    _check_square(f, "f")
    n = f.shape[0]
    if n > MAX_DIM:
        raise DimensionTooLarge(f"lyap_solve supports n <= {MAX_DIM}, got {n}")
    if q.shape != (n, n):
        raise ValueError(f"q must be {n}x{n}")
    eye = np.eye(n)
    big = np.kron(eye, f.T) + np.kron(f.T, eye)
    try:
        vec = lin_solve(big, -q.reshape(-1, order="F"))
    except SingularMatrix as exc:
        raise NotStable("Lyapunov operator is singular (eigenvalues of f sum to 0)") from exc
    m = vec.reshape(n, n, order="F")
    return 0.5 * (m + m.T)


def lyap_residual(f, m, q):
    return float(np.max(np.abs(f.T @ m + m @ f + q)))
