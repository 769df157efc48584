"""Classic and frequency-recentered 2D Fourier bases on a p x p grid.

Both families hold 2p^2 functions Omega(x) * trig(2*pi/(p h) * f . x).
The classic family uses integer frequencies f in {0..p-1}^2; the proposed
family shifts them to {-floor(p/2) .. p-1-floor(p/2)}^2 so that the
highest frequencies, which alias badly when the sampled basis is rotated,
are replaced by their low-frequency mirrors.

Descriptor ordering is fixed: all cosines in row-major (k, l) order, then
all sines in the same order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, make_grid, rotation_matrix

KINDS = ("classic", "proposed")


@dataclass(frozen=True)
class MaskSpec:
    """Radial window: 1 on the plateau, raised-cosine rolloff, 0 from ``cutoff`` on."""

    cutoff: float
    rolloff: float

    def __post_init__(self):
        if self.cutoff <= 0 or self.rolloff <= 0:
            raise ValueError("mask cutoff and rolloff must be positive")

    @classmethod
    def for_grid(cls, grid: GridSpec, rolloff: float | None = None) -> MaskSpec:
        return cls(cutoff=grid.cutoff, rolloff=grid.h if rolloff is None else rolloff)

    def __call__(self, x):
        return radial_mask(x, self)


def radial_mask(x, mask: MaskSpec):
    """Evaluate the mask at points ``x`` of shape (..., 2)."""
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    R, w = mask.cutoff, mask.rolloff
    out = np.where(r <= R - w, 1.0, 0.5 * (1 + np.cos(np.pi * (r - R + w) / w)))
    out = np.where(r >= R, 0.0, out)
    return out if out.ndim else float(out)


def mask_derivative_bounds(mask: MaskSpec) -> tuple[float, float]:
    """Sup of |grad Omega| and of the Hessian spectral norm."""
    R, w = mask.cutoff, mask.rolloff
    g = np.pi / (2 * w)
    # Hessian eigenvalues are Omega''(r) (radial) and Omega'(r)/r (tangential).
    radial = np.pi**2 / (2 * w**2)
    # With no plateau, Omega'(r)/r tends to Omega''(0) at the origin.
    tangential = g / (R - w) if R > w else radial
    return g, max(radial, tangential)


@dataclass(frozen=True)
class BasisSet:
    kind: str
    grid: GridSpec
    mask: MaskSpec | None = None
    frequencies: np.ndarray = field(init=False, repr=False, compare=False)
    parity: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}; expected one of {KINDS}")
        if self.mask is None:
            object.__setattr__(self, "mask", MaskSpec.for_grid(self.grid))
        p = self.grid.p
        k, l = np.divmod(np.arange(p * p), p)
        f = np.stack([k, l], axis=-1)
        if self.kind == "proposed":
            f = f - p // 2
        object.__setattr__(self, "frequencies", np.concatenate([f, f]))
        # 0 = cos, 1 = sin
        object.__setattr__(self, "parity", np.repeat([0, 1], p * p))

    @property
    def p(self) -> int:
        return self.grid.p

    @property
    def h(self) -> float:
        return self.grid.h

    def __len__(self):
        return 2 * self.grid.p**2

    def descriptor(self, n: int) -> tuple[str, int, int]:
        """(parity, k, l) of the n-th function, with k, l in 0..p-1."""
        self._check_index(n)
        p = self.grid.p
        k, l = divmod(n % (p * p), p)
        return ("cos" if n < p * p else "sin", k, l)

    def _check_index(self, n):
        if not 0 <= n < len(self):
            raise ValueError(f"basis index {n} out of range for {len(self)} functions")

    def evaluate(self, x) -> np.ndarray:
        """All basis functions at points ``x`` (..., 2); returns (2p^2, ...)."""
        x = np.asarray(x, dtype=float)
        scale = 2 * np.pi / (self.grid.p * self.grid.h)
        phase = scale * np.tensordot(self.frequencies, x, axes=([1], [-1]))
        shape = (-1,) + (1,) * (phase.ndim - 1)
        trig = np.where(self.parity.reshape(shape) == 0, np.cos(phase), np.sin(phase))
        return radial_mask(x, self.mask) * trig

    def sample_rotated(self, theta: float = 0.0) -> np.ndarray:
        """All functions sampled at U_theta^{-1} x_ij; shape (2p^2, p, p)."""
        pts = make_grid(self.grid.p, self.grid.h)
        if theta:
            # row vectors: (U^{-1} x)^T = x^T U
            pts = pts @ rotation_matrix(theta)
        return self.evaluate(pts)


def eval_basis(bset: BasisSet, n: int, x) -> float | np.ndarray:
    bset._check_index(n)
    x = np.asarray(x, dtype=float)
    f = bset.frequencies[n]
    phase = 2 * np.pi / (bset.grid.p * bset.grid.h) * (x[..., 0] * f[0] + x[..., 1] * f[1])
    trig = np.cos(phase) if bset.parity[n] == 0 else np.sin(phase)
    return radial_mask(x, bset.mask) * trig


def sample_basis_rotated(bset: BasisSet, n: int, theta: float = 0.0) -> np.ndarray:
    """p x p samples of basis n rotated by theta: T_ij = psi_n(U_theta^{-1} x_ij)."""
    bset._check_index(n)
    pts = make_grid(bset.grid.p, bset.grid.h) @ rotation_matrix(theta)
    return eval_basis(bset, n, pts)


@dataclass(frozen=True)
class SignMap:
    """Index map and signs relating classic to proposed functions at grid points.

    classic_{k,l}(x_ij) == sign(k, l) * proposed_{index(k), index(l)}(x_ij)
    """

    p: int
    eps: float = 0.25

    def index(self, c):
        return (np.asarray(c) + self.p // 2) % self.p

    def sign(self, k, l):
        def axis(c):
            return np.sign(np.asarray(c) - self.p / 2 + self.eps) ** (self.p - 1)

        return axis(k) * axis(l)


def remark1_map(p: int) -> SignMap:
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    return SignMap(int(p))


def verify_remark1(p: int, h: float) -> float:
    """Max grid-point discrepancy between the classic family and the signed,
    re-indexed proposed family (cos and sin parts)."""
    grid = GridSpec(p, h)
    classic = BasisSet("classic", grid).sample_rotated()
    proposed = BasisSet("proposed", grid).sample_rotated()
    smap = remark1_map(p)
    k, l = np.divmod(np.arange(p * p), p)
    target = smap.index(k) * p + smap.index(l)
    sign = smap.sign(k, l)[:, None, None]
    worst = 0.0
    for offset in (0, p * p):
        diff = classic[offset : offset + p * p] - sign * proposed[offset + target]
        worst = max(worst, float(np.abs(diff).max()))
    return worst
