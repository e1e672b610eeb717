"""Named example systems used by the CLI and the test-suite."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .ifs import IfsSystem

PAIR64_A1 = np.array([[0.35, 0.40], [0.30, 0.35]])
PAIR64_A2 = np.array([[0.40, 0.45], [0.45, 0.50]])


def edgar(r: float = 0.4, eps: float = 0.1, a1=(-0.3, -0.3), a2=None) -> IfsSystem:
    """Two maps [[r, r+eps], [eps, r]] and [[r, eps], [r+eps, r]]; a2 defaults to -a1."""
    a1 = np.asarray(a1, dtype=float)
    a2 = -a1 if a2 is None else np.asarray(a2, dtype=float)
    m1 = np.array([[r, r + eps], [eps, r]])
    m2 = np.array([[r, eps], [r + eps, r]])
    return IfsSystem.from_arrays([m1, m2], [a1, a2])


def pair64(a1=(0.0, 0.0), a2=(1.0, 1.0)) -> IfsSystem:
    return IfsSystem.from_arrays([PAIR64_A1, PAIR64_A2], [a1, a2])


def family65_matrix(j: int) -> np.ndarray:
    return np.array([[0.5, 0.5], [1.0 / (3 * j - 1), 1.0 / (3 * j)]])


def family65(kappa: int = 5, a2=(1.0, 1.0), others: Sequence | None = None) -> IfsSystem:
    """pair64's matrices followed by A_j = [[1/2, 1/2], [1/(3j-1), 1/(3j)]] for j = 3..kappa."""
    if kappa < 3:
        raise ValueError("family65 needs kappa >= 3")
    mats = [PAIR64_A1, PAIR64_A2] + [family65_matrix(j) for j in range(3, kappa + 1)]
    if others is None:
        others = [(0.5 * j, -0.25 * j) for j in range(3, kappa + 1)]
    trans = [np.zeros(2), np.asarray(a2, dtype=float)] + [np.asarray(t, dtype=float) for t in others]
    return IfsSystem.from_arrays(mats, trans)


def scalar_pair(s: float = 0.5) -> IfsSystem:
    """Two maps s*Id translated by (0, 0) and (1 - s, 0): the unit interval when s = 1/2."""
    return IfsSystem.from_arrays([s * np.eye(2)] * 2, [(0.0, 0.0), (1.0 - s, 0.0)])


def diagonal_triple() -> IfsSystem:
    a = np.diag([0.5, 0.25])
    return IfsSystem.from_arrays([a] * 3, [(0.0, 0.0), (0.5, 0.0), (0.0, 0.75)])


def square4() -> IfsSystem:
    """Four half-size copies at the corners: the filled unit square."""
    a = 0.5 * np.eye(2)
    return IfsSystem.from_arrays([a] * 4, [(0, 0), (0.5, 0), (0, 0.5), (0.5, 0.5)])


def corners4(ratio: float = 0.25) -> IfsSystem:
    """Four corner copies at a small ratio: a strongly separated Cantor dust."""
    a = ratio * np.eye(2)
    s = 1.0 - ratio
    return IfsSystem.from_arrays([a] * 4, [(0, 0), (s, 0), (0, s), (s, s)])


def sierpinski() -> IfsSystem:
    a = 0.5 * np.eye(2)
    return IfsSystem.from_arrays([a] * 3, [(0, 0), (0.5, 0), (0.25, 0.5)])


def sierpinski_duplicated() -> IfsSystem:
    """Sierpinski maps with the first one listed twice (total overlap of two cylinders)."""
    a = 0.5 * np.eye(2)
    return IfsSystem.from_arrays([a] * 4, [(0, 0), (0, 0), (0.5, 0), (0.25, 0.5)])


FIXTURES = {
    "edgar": ("Two positive maps with a near-rank-one structure; parameters r, eps, a1, a2", edgar),
    "pair64": ("Two positive matrices with translations a1 = 0, a2 in the open quadrant", pair64),
    "family65": ("pair64's matrices plus kappa - 2 further positive maps", family65),
    "interval": ("Two maps x/2 and x/2 + (1/2, 0): the unit interval", scalar_pair),
    "diagonal3": ("Three maps diag(1/2, 1/4) with different translations", diagonal_triple),
    "square4": ("Four half-size corner copies: the unit square", square4),
    "corners4": ("Four corner copies at ratio 1/4: separated dust", corners4),
    "sierpinski": ("Sierpinski triangle", sierpinski),
}
