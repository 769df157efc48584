"""Rotated-basis matrices, SVD normalization, filter synthesis and fitting."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .bases import BasisSet, MaskSpec, radial_mask
from .grid import GridSpec, RotationGroup, make_grid, rotation_matrix

DEFAULT_RANK_TOL = 1e-10
DEFAULT_LAMBDA = 1e-10


class DegenerateBasisError(ValueError):
    pass


def assemble_D(bset: BasisSet, group: RotationGroup) -> np.ndarray:
    """Stack vec(basis_n rotated by A_k) into a (t p^2, 2p^2) matrix.

    Rows are ordered group element first, then row-major pixel.
    """
    blocks = [bset.sample_rotated(group.angle(k)).reshape(len(bset), -1).T for k in group]
    return np.concatenate(blocks, axis=0)


@dataclass(frozen=True, eq=False)
class NormalizedBasis:
    """Column-orthonormal replacement U of the rotated-basis matrix D.

    ``U @ w_hat`` is vec of a (t, p, p) filter stack, and its Frobenius
    norm equals ``|w_hat|``.
    """

    D: np.ndarray
    U: np.ndarray
    singular_values: np.ndarray
    rank_tol: float
    t: int
    p: int

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    def synthesize(self, w_hat) -> np.ndarray:
        return synthesize_filters(self, w_hat)


def normalize_basis(D, rank_tol: float = DEFAULT_RANK_TOL, *, t: int | None = None,
                    p: int | None = None) -> NormalizedBasis:
    D = np.asarray(D, dtype=float)
    if not np.all(np.isfinite(D)):
        raise ValueError("basis matrix has non-finite entries")
    U, s, _ = np.linalg.svd(D, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise DegenerateBasisError("basis matrix is identically zero")
    keep = s > rank_tol * s[0]
    if t is None or p is None:
        # Infer from the row count assuming a square grid and t = rows / p^2.
        p = p or int(round(np.sqrt(D.shape[1] / 2)))
        t = t or D.shape[0] // (p * p)
    U = U[:, keep]
    U.setflags(write=False)
    return NormalizedBasis(D, U, s[keep], rank_tol, t, p)


@lru_cache(maxsize=64)
def fconv_basis(p: int, t: int, h: float = 1.0, kind: str = "proposed",
                rank_tol: float = DEFAULT_RANK_TOL) -> NormalizedBasis:
    """Normalized basis for a p x p filter rotated through C_t."""
    bset = BasisSet(kind, GridSpec(p, h))
    return normalize_basis(assemble_D(bset, RotationGroup(t)), rank_tol, t=t, p=p)


def synthesize_filters(basis: NormalizedBasis, w_hat) -> np.ndarray:
    """Map coefficients (..., r) to filter stacks (..., t, p, p)."""
    w_hat = np.asarray(w_hat, dtype=float)
    if w_hat.shape[-1:] != (basis.rank,):
        raise ValueError(f"expected coefficient vectors of length {basis.rank}, "
                         f"got shape {w_hat.shape}")
    flat = w_hat @ basis.U.T
    return flat.reshape(w_hat.shape[:-1] + (basis.t, basis.p, basis.p))


def init_coefficients(seed, fan_in: int, r: int, *, n_entries: int | None = None,
                      shape: tuple[int, ...] = ()) -> np.ndarray:
    """He-style Gaussian coefficients of shape (*shape, r).

    Each entry has variance 2 * n_entries / (fan_in * r), so the expected
    energy |U w|^2 of a synthesized stack with ``n_entries`` values equals
    that of ``n_entries`` dense weights drawn with variance 2 / fan_in.
    ``n_entries`` defaults to r (plain He variance 2 / fan_in).
    """
    if fan_in < 1 or r < 1:
        raise ValueError("fan_in and r must be positive")
    m = r if n_entries is None else n_entries
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, np.sqrt(2.0 * m / (fan_in * r)), size=tuple(shape) + (r,))


# -- fitting -----------------------------------------------------------------

@dataclass
class FitResult:
    coefficients: np.ndarray
    fitted: np.ndarray
    degenerate: bool = False


def design_matrix(bset: BasisSet, theta: float = 0.0) -> np.ndarray:
    """(p^2, 2p^2) matrix of basis samples rotated by theta."""
    return bset.sample_rotated(theta).reshape(len(bset), -1).T


def ridge_solve(A, y, lam: float = DEFAULT_LAMBDA) -> tuple[np.ndarray, bool]:
    """Closed-form minimizer of |A w - y|^2 + lam |w|^2 via the SVD of A.

    With lam == 0 and a rank-deficient A the normal equations are singular;
    the pseudo-inverse solution is returned and flagged as degenerate.
    """
    if lam < 0:
        raise ValueError("ridge parameter must be non-negative")
    Ua, s, Vt = np.linalg.svd(A, full_matrices=False)
    degenerate = False
    if lam == 0:
        cut = s > DEFAULT_RANK_TOL * s[0] if s.size and s[0] > 0 else np.zeros_like(s, bool)
        # A^T A is singular unless A has full column rank
        degenerate = int(cut.sum()) < A.shape[1]
        inv = np.where(cut, 1.0 / np.where(cut, s, 1.0), 0.0)
    else:
        inv = s / (s * s + lam)
    return Vt.T @ (inv * (Ua.T @ y)), degenerate


def fit_least_squares(target, bset: BasisSet, lam: float = DEFAULT_LAMBDA) -> FitResult:
    target = np.asarray(target, dtype=float)
    p = bset.grid.p
    if target.shape != (p, p):
        raise ValueError(f"target must be {p}x{p}, got {target.shape}")
    A = design_matrix(bset)
    w, degenerate = ridge_solve(A, target.ravel(), lam)
    return FitResult(w, (A @ w).reshape(p, p), degenerate)


def fit_simultaneous(targets, thetas, bset: BasisSet, lam: float = DEFAULT_LAMBDA) -> FitResult:
    """One coefficient vector fitted to several rotated targets at once."""
    p = bset.grid.p
    A = np.concatenate([design_matrix(bset, th) for th in thetas])
    y = np.concatenate([np.asarray(tg, dtype=float).ravel() for tg in targets])
    w, degenerate = ridge_solve(A, y, lam)
    return FitResult(w, (A @ w).reshape(len(thetas), p, p), degenerate)


def synthesize_rotated(bset: BasisSet, w, theta: float) -> np.ndarray:
    p = bset.grid.p
    return (design_matrix(bset, theta) @ w).reshape(p, p)


def support(grid: GridSpec, mask: MaskSpec | None = None) -> np.ndarray:
    """Boolean p x p array of grid points where the mask is nonzero."""
    mask = mask or MaskSpec.for_grid(grid)
    return radial_mask(make_grid(grid.p, grid.h), mask) > 0


def rmse(fitted, target, support=None) -> float:
    """Relative Frobenius error |fitted - target| / |target| over ``support``.

    Returns inf when the target vanishes on the support.
    """
    fitted = np.asarray(fitted, dtype=float)
    target = np.asarray(target, dtype=float)
    if fitted.shape != target.shape:
        raise ValueError(f"shape mismatch {fitted.shape} vs {target.shape}")
    if support is not None:
        sel = np.broadcast_to(support, target.shape)
        fitted, target = fitted[sel], target[sel]
    denom = np.linalg.norm(target)
    if denom == 0:
        return float("inf")
    return float(np.linalg.norm(fitted - target) / denom)


# -- experiment targets -------------------------------------------------------

@dataclass(frozen=True)
class MorletParams:
    a: tuple[float, float] = (2.0, 1.5)
    b: tuple[float, float] = (0.1, 0.1)

    def __post_init__(self):
        if min(self.a) <= 0:
            raise ValueError("Morlet zoom parameters must be positive")


def morlet(x, params: MorletParams):
    x = np.asarray(x, dtype=float)
    a, b = np.asarray(params.a), np.asarray(params.b)
    u = x + b
    return np.exp(-0.5 * np.sum((a * u) ** 2, axis=-1)) * np.cos(10 * u[..., 0])


def morlet_filter(params: MorletParams, grid: GridSpec, theta: float = 0.0) -> np.ndarray:
    """Samples of the Morlet wavelet rotated by theta on the grid."""
    pts = make_grid(grid.p, grid.h) @ rotation_matrix(theta)
    return morlet(pts, params)


def _cubic_weights(n_in: int, n_out: int, a: float = -0.5) -> np.ndarray:
    """Catmull-Rom resampling matrix (n_out, n_in), half-pixel aligned, edges clamped."""
    W = np.zeros((n_out, n_in))
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(int)
    frac = src - base
    for off in range(-1, 3):
        d = np.abs(frac - off)
        w = np.where(d <= 1, (a + 2) * d**3 - (a + 3) * d**2 + 1,
                     np.where(d < 2, a * (d**3 - 5 * d**2 + 8 * d - 4), 0.0))
        idx = np.clip(base + off, 0, n_in - 1)
        np.add.at(W, (np.arange(n_out), idx), w)
    return W


def bicubic_resize(img, shape: tuple[int, int]) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    Wr = _cubic_weights(img.shape[0], shape[0])
    Wc = _cubic_weights(img.shape[1], shape[1])
    return Wr @ img @ Wc.T


def random_resized_filter(seed, p: int, source: int = 8) -> np.ndarray:
    """Standard-Gaussian source x source patch, bicubically resized to p x p."""
    if p < 1:
        raise ValueError("p must be positive")
    rng = np.random.default_rng(seed)
    patch = rng.standard_normal((source, source))
    return bicubic_resize(patch, (p, p))


# -- Table-style fitting trials ----------------------------------------------

def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial, fixed by (seed, trial index)."""
    return np.random.default_rng([seed, trial])


MORLET_B_SCALE = 0.1


def morlet_trial(bset: BasisSet, rng: np.random.Generator, lam: float = DEFAULT_LAMBDA,
                 rotation: float = np.pi / 4, a=(2.0, 1.5),
                 b_scale: float = MORLET_B_SCALE) -> dict[str, float]:
    """RMSE of one Morlet fit: original, rotated-after-fit and simultaneous.

    Draws b ~ N(0, b_scale^2 I) and theta ~ U[0, 2 pi). The target is the
    masked wavelet Omega * psi_theta; the rotated reference is
    Omega * psi_{theta + rotation} sampled analytically.
    """
    grid = bset.grid
    params = MorletParams(tuple(a), tuple(b_scale * rng.standard_normal(2)))
    theta = rng.uniform(0, 2 * np.pi)
    omega = radial_mask(make_grid(grid.p, grid.h), bset.mask)
    sup = omega > 0
    t0 = omega * morlet_filter(params, grid, theta)
    t1 = omega * morlet_filter(params, grid, theta + rotation)
    fit = fit_least_squares(t0, bset, lam)
    rot = synthesize_rotated(bset, fit.coefficients, rotation)
    sim = fit_simultaneous([t0, t1], [0.0, rotation], bset, lam)
    return {
        "original": rmse(fit.fitted, t0, sup),
        "rot45": rmse(rot, t1, sup),
        "simultaneous": rmse(sim.fitted, np.stack([t0, t1]), sup),
    }


def random_filter_trial(bset: BasisSet, rng: np.random.Generator,
                        lam: float = DEFAULT_LAMBDA) -> dict[str, float]:
    grid = bset.grid
    omega = radial_mask(make_grid(grid.p, grid.h), bset.mask)
    target = omega * random_resized_filter(rng, grid.p)
    fit = fit_least_squares(target, bset, lam)
    return {"original": rmse(fit.fitted, target, omega > 0)}
