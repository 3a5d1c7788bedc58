"""Fixed-point oracle for weight-tied maps and toy systems with exact lifts."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import AllDivergedError, DimensionMismatchError, UnstableParametersError

DIVERGENCE_BOUND = 1e9


@dataclass(frozen=True)
class IteratedMap:
    """``z_{l+1} = step(z_l, x)`` with state dim ``d`` and input dim ``D``."""

    state_dim: int
    input_dim: int
    step: Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FixedPointResult:
    z_star: np.ndarray
    iterations: int
    residual: float
    converged: bool
    diverged: bool = False


@dataclass(frozen=True)
class LiftedSystem:
    map: IteratedMap
    basis: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lift_matrix: np.ndarray
    exact: bool


def _vec(v, n: int, what: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=np.float64)).reshape(-1)
    if arr.shape[0] != n:
        raise DimensionMismatchError(f"{what} has length {arr.shape[0]}, expected {n}")
    return arr


def deq_forward(fmap: IteratedMap, x, z0=None, tol: float = 1e-12, max_iter: int = 10_000) -> FixedPointResult:
    """Plain Picard iteration ``z <- step(z, x)`` until ``||step(z, x) - z||_inf <= tol``.

    ``iterations`` counts applied updates and ``z0`` defaults to zeros.
    Divergence (non-finite state or ``||z||_inf > 1e9``) stops the loop and
    is reported, not raised.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = _vec(x, fmap.input_dim, "x")
    z = np.zeros(fmap.state_dim) if z0 is None else _vec(z0, fmap.state_dim, "z0")
    residual = np.inf
    for it in range(max_iter + 1):
        fz = _vec(fmap.step(z, x), fmap.state_dim, "step output")
        if not np.all(np.isfinite(fz)) or np.max(np.abs(fz), initial=0.0) > DIVERGENCE_BOUND:
            return FixedPointResult(fz, it + 1, float("inf"), False, diverged=True)
        residual = float(np.max(np.abs(fz - z), initial=0.0))
        if residual <= tol:
            return FixedPointResult(z, it, residual, True)
        if it < max_iter:
            z = fz
    return FixedPointResult(z, max_iter, residual, False)


def affine_contraction(a: float = 0.5, dim: int = 1) -> IteratedMap:
    """``z -> a z + x``; fixed point ``x / (1 - a)``."""
    return IteratedMap(dim, dim, lambda z, x: a * z + x)


def tanh_map(a: float = 0.5, dim: int = 1) -> IteratedMap:
    """``z -> tanh(a z + x)``, a contraction for ``|a| < 1``."""
    return IteratedMap(dim, dim, lambda z, x: np.tanh(a * z + x))


def toy_koopman_system(lam: float, mu: float, c: float) -> LiftedSystem:
    """Map ``z1' = lam z1 + x``, ``z2' = mu z2 + c z1**2`` with its exact lift.

    Basis ``phi(z, x) = (z1, z2, z1**2, x z1, x**2, x, 1)`` closes under the map,
    so ``phi(step(z, x), x) = A phi(z, x)`` holds exactly.
    """
    if abs(lam) >= 1 or abs(mu) >= 1:
        raise UnstableParametersError(f"need |lam| < 1 and |mu| < 1, got lam={lam}, mu={mu}")

    def step(z, x):
        return np.array([lam * z[0] + x[0], mu * z[1] + c * z[0] ** 2])

    def basis(z, x):
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        xv = float(np.asarray(x, dtype=np.float64).reshape(-1)[0])
        return np.array([z[0], z[1], z[0] ** 2, xv * z[0], xv ** 2, xv, 1.0])

    A = np.array(
        [
            [lam, 0, 0, 0, 0, 1, 0],
            [0, mu, c, 0, 0, 0, 0],
            [0, 0, lam ** 2, 2 * lam, 1, 0, 0],
            [0, 0, 0, lam, 1, 0, 0],
            [0, 0, 0, 0, 1, 0, 0],
            [0, 0, 0, 0, 0, 1, 0],
            [0, 0, 0, 0, 0, 0, 1],
        ],
        dtype=np.float64,
    )
    return LiftedSystem(IteratedMap(2, 1, step), basis, A, exact=True)


def toy_fixed_point(lam: float, mu: float, c: float, x: float) -> np.ndarray:
    """Closed-form fixed point of :func:`toy_koopman_system`."""
    z1 = x / (1.0 - lam)
    return np.array([z1, c * z1 * z1 / (1.0 - mu)])


@dataclass
class Dataset:
    """Paired ``inputs`` (n, D) and ``targets`` (n, d) arrays."""

    inputs: np.ndarray
    targets: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs[:, None]
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DimensionMismatchError("inputs and targets differ in length")

    def __len__(self):
        return self.inputs.shape[0]

    def to_csv(self) -> str:
        D, d = self.inputs.shape[1], self.targets.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(D)] + [f"z{i}" for i in range(d)])
        for xi, zi in zip(self.inputs, self.targets):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(v)) for v in zi])
        return buf.getvalue()

    def save_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        rows = list(csv.reader(io.StringIO(text)))
        header = rows[0]
        D = sum(1 for h in header if h.startswith("x"))
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64).reshape(-1, len(header))
        return cls(data[:, :D], data[:, D:])


def generate_fixed_point_dataset(fmap: IteratedMap, xs: Sequence, tol: float = 1e-12,
                                 max_iter: int = 10_000) -> Dataset:
    """(x, z*) pairs from :func:`deq_forward`; non-converging inputs are dropped."""
    inputs, targets, dropped = [], [], 0
    for x in xs:
        res = deq_forward(fmap, x, tol=tol, max_iter=max_iter)
        if res.converged:
            inputs.append(_vec(x, fmap.input_dim, "x"))
            targets.append(res.z_star)
        else:
            dropped += 1
    if dropped and not inputs:
        raise AllDivergedError(f"none of {dropped} inputs reached a fixed point")
    return Dataset(
        np.array(inputs).reshape(-1, fmap.input_dim),
        np.array(targets).reshape(-1, fmap.state_dim),
        dropped,
    )
