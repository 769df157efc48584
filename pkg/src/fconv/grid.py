"""Sampling grids and the cyclic rotation group C_t."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """A centered p x p sampling grid with mesh size h.

    Cell (i, j) sits at ((i - (p-1)/2) h, (j - (p-1)/2) h); the first
    coordinate follows the row index.
    """

    p: int
    h: float = 1.0
    n: int | None = None

    def __post_init__(self):
        _check_size(self.p, self.h)

    @property
    def coords(self) -> np.ndarray:
        return make_grid(self.p, self.h)

    @property
    def cutoff(self) -> float:
        """Radius beyond which filters on this grid vanish."""
        return (self.p + 1) * self.h / 2


def _check_size(p, h):
    if int(p) != p or p < 1:
        raise ValueError(f"grid size must be a positive integer, got {p!r}")
    if not np.isfinite(h) or h <= 0:
        raise ValueError(f"mesh size must be positive, got {h!r}")


def make_grid(p: int, h: float = 1.0) -> np.ndarray:
    """Return the (p, p, 2) array of centered grid coordinates."""
    _check_size(p, h)
    axis = (np.arange(p) - (p - 1) / 2) * h
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([x1, x2], axis=-1)


def rotation_matrix(theta: float) -> np.ndarray:
    """U_theta = [[cos, sin], [-sin, cos]].

    A filter psi rotated by theta is psi(U_theta^{-1} x).
    """
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


@dataclass(frozen=True)
class RotationGroup:
    """Cyclic group of t planar rotations by multiples of 2*pi/t.

    Elements are integer indices k in [0, t); the angle 2*pi*k/t is only
    formed when a matrix or radian value is requested, so composition
    stays exact.
    """

    t: int
    _matrices: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.t) != self.t or self.t < 1:
            raise ValueError(f"group order must be a positive integer, got {self.t!r}")
        mats = np.stack([rotation_matrix(th) for th in self.angles])
        object.__setattr__(self, "_matrices", mats)

    @cached_property
    def angles(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.t) / self.t

    @property
    def matrices(self) -> np.ndarray:
        return self._matrices

    def __len__(self):
        return self.t

    def __iter__(self):
        return iter(range(self.t))

    def angle(self, k: int) -> float:
        return 2 * np.pi * (k % self.t) / self.t

    def matrix(self, k: int) -> np.ndarray:
        return self._matrices[k % self.t]

    def inverse_matrix(self, k: int) -> np.ndarray:
        return self._matrices[k % self.t].T

    def compose(self, a: int, b: int) -> int:
        return (a + b) % self.t

    def inverse(self, a: int) -> int:
        return (self.t - a) % self.t

    @property
    def identity(self) -> int:
        return 0

    def is_quarter_turn(self, k: int) -> bool:
        """True if element k rotates by a multiple of pi/2."""
        return (4 * (k % self.t)) % self.t == 0


def group_elements(t: int) -> RotationGroup:
    return RotationGroup(t)


def quarter_turns(theta: float, tol: float = 1e-12) -> int | None:
    """Number of quarter turns in theta (mod 4), or None if theta is not one."""
    q = theta / (np.pi / 2)
    k = round(q)
    if abs(q - k) > tol:
        return None
    return k % 4
