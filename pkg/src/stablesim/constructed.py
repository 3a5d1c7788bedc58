"""Matrices with a prescribed spectrum, ``A = U D U^{-1}``, and a brute-force classifier.

``D`` is block diagonal with 1x1 blocks (1, -1 or a real of modulus at most
``max_sub``) and 2x2 blocks (unit rotations or scaled rotations of modulus at
most ``max_sub``).  Used to cross-check :func:`stablesim.spectra.classify`
against plain matrix powers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import matpow
from .spectra import ConvergenceClass

BLOCKS = ("one", "minus", "rotation", "sub_real", "sub_pair")


@dataclass(frozen=True)
class ConstructedMatrix:
    A: np.ndarray
    U: np.ndarray
    D: np.ndarray
    blocks: tuple[str, ...]
    sub_radius: float  # largest modulus below 1; 0 when there is none
    cond: float  # 2-norm condition number of U

    @property
    def expected(self) -> ConvergenceClass:
        if any(b in ("minus", "rotation") for b in self.blocks):
            return ConvergenceClass.ConvergesToInvariantSet
        if "one" in self.blocks:
            return ConvergenceClass.ConvergesToFixedPoint
        return ConvergenceClass.ConvergesToOrigin


def _rotation(r: float, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return r * np.array([[c, -s], [s, c]])


def _fill(rng, n: int, required: str | None, allowed: tuple[str, ...]) -> list[str]:
    blocks, size = [], 0
    if required is not None:
        blocks.append(required)
        size += 2 if required in ("rotation", "sub_pair") else 1
    while size < n:
        kind = allowed[rng.integers(len(allowed))]
        width = 2 if kind in ("rotation", "sub_pair") else 1
        if size + width > n:
            continue
        blocks.append(kind)
        size += width
    order = rng.permutation(len(blocks))
    return [blocks[i] for i in order]


def sample_constructed(rng, n: int = 6, max_cond: float = 50.0, max_sub: float = 0.9,
                       target: ConvergenceClass | None = None) -> ConstructedMatrix:
    """One random instance; ``target`` picks the class (uniform when omitted)."""
    classes = (ConvergenceClass.ConvergesToOrigin, ConvergenceClass.ConvergesToFixedPoint,
               ConvergenceClass.ConvergesToInvariantSet)
    if target is None:
        target = classes[rng.integers(3)]
    if target is ConvergenceClass.ConvergesToOrigin:
        blocks = _fill(rng, n, None, ("sub_real", "sub_pair"))
    elif target is ConvergenceClass.ConvergesToFixedPoint:
        blocks = _fill(rng, n, "one", ("one", "sub_real", "sub_pair"))
    elif target is ConvergenceClass.ConvergesToInvariantSet:
        first = ("minus", "rotation")[rng.integers(2)] if n >= 2 else "minus"
        blocks = _fill(rng, n, first, BLOCKS)
    else:
        raise ValueError(f"cannot construct class {target}")

    D = np.zeros((n, n))
    subs = [0.0]
    i = 0
    for kind in blocks:
        if kind == "one":
            D[i, i] = 1.0
        elif kind == "minus":
            D[i, i] = -1.0
        elif kind == "sub_real":
            D[i, i] = rng.uniform(-max_sub, max_sub)
            subs.append(abs(D[i, i]))
        elif kind == "rotation":
            D[i:i + 2, i:i + 2] = _rotation(1.0, rng.uniform(0.1 * math.pi, 0.9 * math.pi))
        else:  # sub_pair
            r = rng.uniform(0.0, max_sub)
            D[i:i + 2, i:i + 2] = _rotation(r, rng.uniform(0.1 * math.pi, 0.9 * math.pi))
            subs.append(r)
        i += 2 if kind in ("rotation", "sub_pair") else 1

    while True:
        U = rng.standard_normal((n, n))
        cond = float(np.linalg.cond(U))
        if cond < max_cond:
            break
    A = U @ D @ np.linalg.inv(U)
    return ConstructedMatrix(A, U, D, tuple(blocks), max(subs), cond)


def _peak_norm(a: np.ndarray, p: np.ndarray, steps: int) -> float:
    peak = 0.0
    for _ in range(steps):
        p = a @ p
        peak = max(peak, float(np.linalg.norm(p)))
    return peak


def brute_force_class(a, l: int = 256, small: float = 1e-6, large: float = 1e6,
                      growth: float = 1.5) -> ConvergenceClass:
    """Class read off ``A**l``: vanished, settled (``A**(l+1) == A**l``), bounded, or blown up.

    Polynomial growth from a defective unit-circle eigenvalue stays far below
    ``large`` at ``l = 256``, so a bounded-looking ``A**l`` is also checked by
    comparing the peak norm over powers ``l+1 .. 2l`` with the peak over
    ``l/2+1 .. l``; linear growth doubles it, bounded orbits do not.
    """
    a = np.asarray(a, dtype=np.float64)
    p = matpow(a, l)
    size = float(np.linalg.norm(p))
    if not math.isfinite(size) or size > large:
        return ConvergenceClass.Unstable
    if size <= small:
        return ConvergenceClass.ConvergesToOrigin
    if np.linalg.norm(a @ p - p) <= small * max(1.0, size):
        return ConvergenceClass.ConvergesToFixedPoint
    early = _peak_norm(a, matpow(a, l // 2), l - l // 2)
    late = _peak_norm(a, p, l)
    if late > growth * early:
        return ConvergenceClass.Unstable
    return ConvergenceClass.ConvergesToInvariantSet
