"""Dense real matrix kernel.

Matrices are plain 2-D ``numpy.float64`` arrays.  The eigensolver is written
out by hand (balancing, Householder reduction to Hessenberg form, Francis
double-shift QR, inverse iteration for eigenvectors) so the ordering and
failure behaviour of the spectrum are fully under our control.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MatrixParseError, NoConvergenceError, NonSquareError, SingularError

__all__ = [
    "EigenDecomposition",
    "as_matrix",
    "eig",
    "eigvals",
    "matpow",
    "numeric_rank",
    "solve_linear",
    "read_matrix_csv",
    "parse_matrix_csv",
    "format_matrix_csv",
]


def as_matrix(a, *, square: bool = False) -> np.ndarray:
    """Validate and convert ``a`` to a finite 2-D float64 array."""
    m = np.array(a, dtype=np.float64)
    if m.ndim == 1 and m.size == 0:
        m = m.reshape(0, 0)
    if m.ndim != 2:
        raise MatrixParseError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise MatrixParseError("matrix contains NaN or Inf")
    if square and m.shape[0] != m.shape[1]:
        raise NonSquareError(f"matrix is {m.shape[0]}x{m.shape[1]}, expected square")
    return m


def _check_square(a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSquareError(f"matrix of shape {a.shape} is not square")


# ---------------------------------------------------------------------------
# linear solves


def _lu(a: np.ndarray, pivot_floor: float | None, scale: float = 0.0):
    """LU with partial pivoting.

    With ``pivot_floor`` set, a pivot smaller than it raises ``SingularError``.
    With ``pivot_floor=None`` tiny pivots are replaced by ``eps * ||A||``, the
    usual trick that keeps inverse iteration going on an exact eigenvalue;
    ``scale`` is then the norm of the unshifted matrix.
    """
    lu = np.array(a, dtype=np.result_type(a, np.float64), copy=True)
    n = lu.shape[0]
    perm = np.arange(n)
    nudge = np.finfo(np.float64).eps * (scale if scale > 0.0 else 1.0)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        piv = lu[k, k]
        if pivot_floor is not None:
            if abs(piv) <= pivot_floor:
                raise SingularError(f"pivot {abs(piv):.3e} at column {k} below {pivot_floor:.3e}")
        elif abs(piv) < nudge:
            lu[k, k] = piv = nudge
        if k + 1 < n:
            lu[k + 1:, k] /= piv
            lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, perm


def _lu_solve(lu: np.ndarray, perm: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = lu.shape[0]
    x = np.array(b[perm], dtype=np.result_type(lu, b), copy=True)
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
    return x


def solve_linear(a, b) -> np.ndarray:
    """Solve ``A X = B`` by LU with partial pivoting.

    Raises ``SingularError`` if a pivot falls below ``1e-12 * ||A||_F``.
    Complex operands are accepted (used internally for eigenspaces).
    """
    a = np.asarray(a)
    if not np.iscomplexobj(a):
        a = np.asarray(a, dtype=np.float64)
    _check_square(a)
    b = np.asarray(b)
    vector = b.ndim == 1
    if vector:
        b = b[:, None]
    if b.shape[0] != a.shape[0]:
        raise NonSquareError(f"right-hand side has {b.shape[0]} rows, matrix has order {a.shape[0]}")
    if a.shape[0] == 0:
        return np.zeros(b.shape)
    lu, perm = _lu(a, pivot_floor=1e-12 * np.linalg.norm(a))
    x = _lu_solve(lu, perm, b)
    return x[:, 0] if vector else x


# ---------------------------------------------------------------------------
# powers and rank


def matpow(a, l: int) -> np.ndarray:
    """``A**l`` by repeated squaring; ``matpow(A, 0)`` is the identity."""
    a = np.asarray(a, dtype=np.float64)
    _check_square(a)
    if l < 0:
        raise ValueError("matpow exponent must be non-negative")
    result = np.eye(a.shape[0])
    base = a.copy()
    while l:
        if l & 1:
            result = result @ base
        l >>= 1
        if l:
            base = base @ base
    return result


def numeric_rank(a, tol: float) -> int:
    """Number of singular values above ``tol * sigma_max``."""
    a = np.asarray(a)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


# ---------------------------------------------------------------------------
# eigensolver


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues (sorted) and unit-norm right eigenvectors as columns."""

    eigenvalues: np.ndarray  # complex128, shape (n,)
    eigenvectors: np.ndarray  # complex128, shape (n, n)
    converged: bool

    def residuals(self, a) -> np.ndarray:
        """``||A v - lam v||_2`` for every pair."""
        a = np.asarray(a, dtype=np.float64)
        r = a @ self.eigenvectors - self.eigenvectors * self.eigenvalues
        return np.linalg.norm(r, axis=0)


def _balance(a: np.ndarray) -> np.ndarray:
    """Radix-2 diagonal similarity that evens out row and column norms."""
    a = a.copy()
    n = a.shape[0]
    radix = 2.0
    sqrdx = radix * radix
    done = False
    while not done:
        done = True
        for i in range(n):
            c = np.sum(np.abs(a[:, i])) - abs(a[i, i])
            r = np.sum(np.abs(a[i, :])) - abs(a[i, i])
            if c == 0.0 or r == 0.0:
                continue
            g = r / radix
            f = 1.0
            s = c + r
            while c < g:
                f *= radix
                c *= sqrdx
            g = r * radix
            while c > g:
                f /= radix
                c /= sqrdx
            if (c + r) / f < 0.95 * s:
                done = False
                a[i, :] /= f
                a[:, i] *= f
    return a


def _hessenberg(a: np.ndarray) -> np.ndarray:
    """Householder reduction to upper Hessenberg form."""
    h = a.copy()
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        if x[0] > 0:
            alpha = -alpha
        v = x
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            continue
        v /= vnorm
        h[k + 1:, k:] -= 2.0 * np.outer(v, v @ h[k + 1:, k:])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h


def _francis_qr(h: np.ndarray, max_sweeps: int):
    """Eigenvalues of an upper Hessenberg matrix by Francis double-shift QR.

    Works on the active window only (no Schur vectors are accumulated) and
    deflates 1x1 and 2x2 blocks off the bottom.  Returns ``(wr, wi)``.
    """
    a = h.copy()
    n = a.shape[0]
    wr = np.zeros(n)
    wi = np.zeros(n)
    anorm = float(np.sum(np.abs(np.triu(a, -1))))
    nn = n - 1
    t = 0.0
    sweeps = 0
    while nn >= 0:
        its = 0
        while True:
            # small subdiagonal element splits the problem
            l = nn
            while l >= 1:
                s = abs(a[l - 1, l - 1]) + abs(a[l, l])
                if s == 0.0:
                    s = anorm
                if abs(a[l, l - 1]) + s == s:
                    a[l, l - 1] = 0.0
                    break
                l -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = math.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + math.copysign(z, p)
                    wr[nn - 1] = wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = wi[nn] = 0.0
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                nn -= 2
                break
            if sweeps >= max_sweeps:
                raise NoConvergenceError(f"QR iteration exceeded {max_sweeps} sweeps")
            if its > 0 and its % 10 == 0:
                # exceptional shift breaks cycling
                t += x
                a[np.arange(nn + 1), np.arange(nn + 1)] -= x
                s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                x = y = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            sweeps += 1
            m = nn - 2
            while m >= l:
                z = a[m, m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                q = a[m + 1, m + 1] - z - r - s
                r = a[m + 2, m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                if u + v == v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i, i - 2] = 0.0
                if i != m + 2:
                    a[i, i - 3] = 0.0
            for k in range(m, nn):
                if k != m:
                    p = a[k, k - 1]
                    q = a[k + 1, k - 1]
                    r = a[k + 2, k - 1] if k != nn - 1 else 0.0
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                if s == 0.0:
                    continue
                if k == m:
                    if l != m:
                        a[k, k - 1] = -a[k, k - 1]
                else:
                    a[k, k - 1] = -s * x
                p += s
                x = p / s
                y = q / s
                z = r / s
                q /= p
                r /= p
                # rows k..k+2, columns k..nn
                row = a[k, k:nn + 1] + q * a[k + 1, k:nn + 1]
                if k != nn - 1:
                    row = row + r * a[k + 2, k:nn + 1]
                    a[k + 2, k:nn + 1] -= row * z
                a[k + 1, k:nn + 1] -= row * y
                a[k, k:nn + 1] -= row * x
                # columns k..k+2, rows l..min(nn, k+3)
                top = min(nn, k + 3) + 1
                col = x * a[l:top, k] + y * a[l:top, k + 1]
                if k != nn - 1:
                    col = col + z * a[l:top, k + 2]
                    a[l:top, k + 2] -= col * r
                a[l:top, k + 1] -= col * q
                a[l:top, k] -= col
    return wr, wi


def _sort_key(lam: complex):
    # rounding keeps exact conjugates and repeated roots in a stable order
    return (-round(abs(lam), 12), -round(lam.real, 12), round(lam.imag, 12))


def eigvals(a) -> np.ndarray:
    """Eigenvalues sorted by descending modulus, then descending real part,
    then ascending imaginary part."""
    a = np.asarray(a, dtype=np.float64)
    _check_square(a)
    n = a.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    if not np.all(np.isfinite(a)):
        raise MatrixParseError("matrix contains NaN or Inf")
    h = _hessenberg(_balance(a))
    wr, wi = _francis_qr(h, max_sweeps=100 * n)
    lam = [complex(r, i) for r, i in zip(wr, wi)]
    lam.sort(key=_sort_key)
    return np.array(lam, dtype=complex)


def _inverse_iteration(a: np.ndarray, lam: complex, previous: list[np.ndarray], rng, tol: float):
    """Eigenvector for ``lam``; tries to stay independent of ``previous``."""
    n = a.shape[0]
    dtype = complex if lam.imag != 0.0 else np.float64
    shifted = a.astype(dtype) - (lam.real if dtype is np.float64 else lam) * np.eye(n, dtype=dtype)
    anorm = np.linalg.norm(a)
    lu, perm = _lu(shifted, pivot_floor=None, scale=anorm)

    def run(start, orthogonalize):
        v = start / np.linalg.norm(start)
        for _ in range(6):
            v = _lu_solve(lu, perm, v)
            if orthogonalize:
                for q in previous:
                    v = v - q * np.vdot(q, v)
            nv = np.linalg.norm(v)
            if not np.isfinite(nv) or nv == 0.0:
                return None
            v = v / nv
        return v.astype(complex)

    def ok(v):
        return v is not None and np.linalg.norm(a @ v - lam * v) <= tol * anorm

    start = rng.standard_normal(n) + (1j * rng.standard_normal(n) if dtype is complex else 0.0)
    if previous:
        v = run(start, True)
        if ok(v):
            return v, True
    v = run(start, False)
    return v, ok(v)


def _gauge(v: np.ndarray) -> np.ndarray:
    """Rotate ``v`` so its first significant component is real positive."""
    mag = np.abs(v)
    big = np.flatnonzero(mag > 1e-8 * mag.max())
    if big.size == 0:
        return v
    c = v[big[0]]
    return v * (abs(c) / c)


def eig(a) -> EigenDecomposition:
    """Eigenvalues and right eigenvectors of a real square matrix.

    Eigenvalues follow the :func:`eigvals` ordering.  Each eigenvector has unit
    2-norm and its first significant component is real positive.  Repeated
    eigenvalues get independent vectors whenever the eigenspace allows it.
    """
    a = as_matrix(a, square=True)
    lam = eigvals(a)
    n = a.shape[0]
    rng = np.random.default_rng(0)
    vecs = np.zeros((n, n), dtype=complex)
    converged = True
    for j, lj in enumerate(lam):
        same = _orthonormal(vecs[:, :j][:, np.abs(lam[:j] - lj) <= 1e-6 * max(1.0, abs(lj))])
        v, good = _inverse_iteration(a, complex(lj), same, rng, tol=1e-10)
        if v is None:
            v = np.zeros(n, dtype=complex)
            good = False
        converged = converged and good
        vecs[:, j] = _gauge(v)
    return EigenDecomposition(lam, vecs, converged)


def _orthonormal(cols: np.ndarray) -> list[np.ndarray]:
    if cols.shape[1] == 0:
        return []
    q, r = np.linalg.qr(cols)
    keep = np.abs(np.diag(r)) > 1e-8
    return [q[:, i] for i in range(q.shape[1]) if keep[i]]


# ---------------------------------------------------------------------------
# CSV text format


def parse_matrix_csv(text: str) -> np.ndarray:
    """Parse the one-row-per-line CSV matrix format; ragged rows are rejected."""
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            rows.append([float(c) for c in row])
        except ValueError as exc:
            raise MatrixParseError(f"line {lineno}: {exc}") from None
        if len(rows[-1]) != len(rows[0]):
            raise MatrixParseError(f"line {lineno}: ragged row ({len(rows[-1])} vs {len(rows[0])} columns)")
    if not rows:
        raise MatrixParseError("empty matrix file")
    return as_matrix(rows)


def read_matrix_csv(path) -> np.ndarray:
    return parse_matrix_csv(Path(path).read_text(encoding="utf-8"))


def format_matrix_csv(a) -> str:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in a)
