"""Limit behaviour of linear lifted dynamics ``phi_{l+1} = A phi_l``.

Only the unit-modulus part of the spectrum matters for the limit: modes with
``|lambda| < 1`` die out, a mode with ``|lambda| > 1`` or a defective
unit-modulus eigenvalue blows up.  The remaining modes (``+1``, ``-1`` and
conjugate pairs on the circle) give the fixed point or the oscillation.

Index sets ``J1``, ``J2`` and ``J3`` refer to positions in the sorted
eigenvalue list of :func:`stablesim.linalg.eigvals` and are 0-based.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotApplicableError, SingularError, DimensionMismatchError
from .linalg import as_matrix, eigvals, solve_linear

DEFAULT_EIG_TOL = 1e-8


class ConvergenceClass(str, enum.Enum):
    ConvergesToOrigin = "ConvergesToOrigin"
    ConvergesToFixedPoint = "ConvergesToFixedPoint"
    ConvergesToInvariantSet = "ConvergesToInvariantSet"
    Unstable = "Unstable"


@dataclass
class SpectrumReport:
    cls: ConvergenceClass
    eigenvalues: np.ndarray
    spectral_radius: float
    J1: list[int] = field(default_factory=list)
    J2: list[int] = field(default_factory=list)
    # (j, k, delta): j is the upper-half-plane member, k its conjugate
    J3: list[tuple[int, int, float]] = field(default_factory=list)
    projector: np.ndarray | None = None
    defect_detected: bool = False

    def to_dict(self) -> dict:
        return {
            "class": self.cls.value,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "spectral_radius": float(self.spectral_radius),
            "J1": list(self.J1),
            "J2": list(self.J2),
            "J3": [[j, k, float(d)] for j, k, d in self.J3],
            "projector": None if self.projector is None else self.projector.tolist(),
            "defect_detected": bool(self.defect_detected),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "SpectrumReport":
        return cls(
            cls=ConvergenceClass(d["class"]),
            eigenvalues=np.array([complex(re, im) for re, im in d["eigenvalues"]], dtype=complex),
            spectral_radius=d["spectral_radius"],
            J1=list(d["J1"]),
            J2=list(d["J2"]),
            J3=[(int(j), int(k), float(dl)) for j, k, dl in d["J3"]],
            projector=None if d["projector"] is None else np.array(d["projector"], dtype=float),
            defect_detected=d["defect_detected"],
        )


@dataclass
class _Mode:
    """One eigenvalue group on the unit circle with its spectral pieces.

    ``right`` holds eigenvectors as columns, ``left`` the dual rows (the
    matching rows of ``U^{-1}``), so ``right @ left`` is the spectral projector.
    """

    kind: str  # "one", "minus_one" or "rotation"
    center: complex
    indices: list[int]
    right: np.ndarray | None = None
    left: np.ndarray | None = None


def _cluster(values: list[complex], idx: list[int], radius: float) -> list[list[int]]:
    """Single-linkage clusters of ``idx`` by distance between eigenvalues."""
    groups: list[list[int]] = []
    for i in idx:
        hits = [g for g in groups if any(abs(values[i] - values[j]) <= radius for j in g)]
        merged = [i]
        for g in hits:
            merged.extend(g)
            groups.remove(g)
        groups.append(sorted(merged))
    groups.sort(key=lambda g: g[0])
    return groups


def _unit_modes(lam: np.ndarray, tol: float) -> tuple[list[_Mode], list[tuple[int, int, float]]]:
    lam_list = [complex(z) for z in lam]
    unit = [i for i, z in enumerate(lam_list) if abs(abs(z) - 1.0) <= tol]
    ones = [i for i in unit if abs(lam_list[i].imag) <= tol and lam_list[i].real > 0]
    minus = [i for i in unit if abs(lam_list[i].imag) <= tol and lam_list[i].real < 0]
    upper = [i for i in unit if lam_list[i].imag > tol]
    lower = [i for i in unit if lam_list[i].imag < -tol]

    pairs: list[tuple[int, int, float]] = []
    free = list(lower)
    for j in upper:
        target = lam_list[j].conjugate()
        k = min(free, key=lambda i: abs(lam_list[i] - target)) if free else None
        if k is None:
            raise SingularError("unpaired complex eigenvalue on the unit circle")
        free.remove(k)
        pairs.append((j, k, math.atan2(lam_list[j].imag, lam_list[j].real)))

    modes = []
    if ones:
        modes.append(_Mode("one", 1.0, ones))
    if minus:
        modes.append(_Mode("minus_one", -1.0, minus))
    for group in _cluster(lam_list, upper, 2.0 * tol):
        center = complex(np.mean([lam_list[i] for i in group]))
        modes.append(_Mode("rotation", center, group))
    return modes, pairs


def _null_basis(m: np.ndarray, k: int):
    """Last ``k`` right singular vectors of ``m`` and all singular values."""
    _, s, vh = np.linalg.svd(m)
    return vh[m.shape[0] - k:].conj().T, s


def _gauge_columns(r: np.ndarray) -> np.ndarray:
    out = r.copy()
    for c in range(out.shape[1]):
        v = out[:, c]
        mag = np.abs(v)
        first = np.flatnonzero(mag > 1e-8 * mag.max())[0]
        out[:, c] = v * (abs(v[first]) / v[first])
    return out


def _defective(a: np.ndarray, mode: _Mode, tol: float) -> bool:
    n = a.shape[0]
    shifted = a - mode.center * np.eye(n)
    s = np.linalg.svd(shifted, compute_uv=False)
    geometric = n if s[0] == 0.0 else int(np.count_nonzero(s <= tol * s[0]))
    return geometric < len(mode.indices)


def _resolve(a: np.ndarray, mode: _Mode) -> _Mode:
    """Fill in right eigenvectors and dual rows for a non-defective mode."""
    n = a.shape[0]
    k = len(mode.indices)
    center = mode.center if mode.kind == "rotation" else mode.center.real
    shifted = a - center * np.eye(n)
    right, _ = _null_basis(shifted, k)
    left, _ = _null_basis(shifted.conj().T, k)
    if mode.kind != "rotation":
        right, left = right.real, left.real
    else:
        right = _gauge_columns(right)
    # dual rows: (L^H R)^{-1} L^H
    gram = left.conj().T @ right
    try:
        dual = solve_linear(gram, left.conj().T)
    except SingularError as exc:
        raise SingularError(f"eigenvector matrix is singular for eigenvalue {mode.center}: {exc}") from None
    mode.right, mode.left = right, dual
    return mode


def classify(a, eig_tol: float = DEFAULT_EIG_TOL) -> SpectrumReport:
    """Sort ``A`` into one of the four limit classes."""
    if not 0.0 < eig_tol < 0.1:
        raise ValueError("eig_tol must lie in (0, 0.1)")
    a = as_matrix(a, square=True)
    n = a.shape[0]
    lam = eigvals(a)
    rho = float(np.max(np.abs(lam))) if n else 0.0

    if rho < 1.0 - eig_tol:
        return SpectrumReport(ConvergenceClass.ConvergesToOrigin, lam, rho, projector=np.zeros((n, n)))
    if rho > 1.0 + eig_tol:
        return SpectrumReport(ConvergenceClass.Unstable, lam, rho)

    modes, pairs = _unit_modes(lam, eig_tol)
    J1 = next((m.indices for m in modes if m.kind == "one"), [])
    J2 = next((m.indices for m in modes if m.kind == "minus_one"), [])
    if any(_defective(a, m, eig_tol) for m in modes):
        return SpectrumReport(ConvergenceClass.Unstable, lam, rho, J1, J2, pairs, defect_detected=True)
    if not J2 and not pairs:
        proj = _assemble(a, modes, 0)
        return SpectrumReport(ConvergenceClass.ConvergesToFixedPoint, lam, rho, J1, J2, pairs, projector=proj)
    return SpectrumReport(ConvergenceClass.ConvergesToInvariantSet, lam, rho, J1, J2, pairs)


def _assemble(a: np.ndarray, modes: list[_Mode], l: int) -> np.ndarray:
    """Limit operator at step ``l`` from the resolved unit-circle modes."""
    n = a.shape[0]
    out = np.zeros((n, n))
    for mode in modes:
        _resolve(a, mode)
        if mode.kind == "one":
            out += mode.right @ mode.left
        elif mode.kind == "minus_one":
            out += (-1.0) ** l * (mode.right @ mode.left)
        else:
            delta = math.atan2(mode.center.imag, mode.center.real)
            c, s = math.cos(l * delta), math.sin(l * delta)
            for w, y in zip(mode.right.T, mode.left):
                u_j, u_k = w.real, w.imag
                v_j, v_k = 2.0 * y.real, -2.0 * y.imag
                out += np.outer(c * u_j - s * u_k, v_j) + np.outer(s * u_j + c * u_k, v_k)
    return out


def fixed_point_projector(a, eig_tol: float = DEFAULT_EIG_TOL) -> np.ndarray:
    """Limit of ``A**l``: ``sum_{j in J1} u_j v_j^T``; zero for the origin class."""
    report = classify(a, eig_tol)
    if report.cls not in (ConvergenceClass.ConvergesToOrigin, ConvergenceClass.ConvergesToFixedPoint):
        raise NotApplicableError(f"no fixed-point limit for class {report.cls.value}")
    return report.projector


def oscillation_term(a, l: int, eig_tol: float = DEFAULT_EIG_TOL) -> np.ndarray:
    """Asymptotic form ``M(l)`` of ``A**l`` on the unit circle.

    Sum of the ``J1`` projector, ``(-1)**l`` times the ``J2`` projector, and one
    rotation term per conjugate pair in ``J3``.
    """
    a = as_matrix(a, square=True)
    report = classify(a, eig_tol)
    if report.cls is ConvergenceClass.Unstable:
        raise NotApplicableError("unstable dynamics have no bounded limit")
    if report.cls is ConvergenceClass.ConvergesToOrigin:
        return np.zeros_like(a)
    modes, _ = _unit_modes(report.eigenvalues, eig_tol)
    return _assemble(a, modes, l)


def simulate_lifted(a, phi0, L: int) -> list[np.ndarray]:
    """``[phi0, A phi0, ..., A**L phi0]`` by repeated multiplication."""
    a = as_matrix(a, square=True)
    phi = np.asarray(phi0, dtype=np.float64).reshape(-1)
    if phi.shape[0] != a.shape[0]:
        raise DimensionMismatchError(f"phi0 has length {phi.shape[0]}, matrix has order {a.shape[0]}")
    out = [phi]
    for _ in range(L):
        phi = a @ phi
        out.append(phi)
    return out


def spectral_radius(a) -> float:
    lam = eigvals(as_matrix(a, square=True))
    return float(np.max(np.abs(lam))) if lam.size else 0.0
