"""Rotations of images and feature maps, equivariance metrics, and the
discretization error bound for the three layer kinds."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates

from .bases import MaskSpec, mask_derivative_bounds, radial_mask
from .gconv import input_layer, intermediate_layer, output_layer
from .grid import make_grid, quarter_turns, rotation_matrix

INTERPOLATIONS = ("bilinear", "exact", "auto")
LEPN_GUARD = 1e-6


def rotate_image(image, theta: float, interp: str = "bilinear") -> np.ndarray:
    """Rotate the last two axes about the image center: out(x) = in(U_theta^-1 x).

    ``exact`` requires a multiple of pi/2 and permutes pixels; ``bilinear``
    fills points that fall outside the source with zeros; ``auto`` picks
    ``exact`` whenever theta is a quarter turn.
    """
    image = np.asarray(image, dtype=float)
    if interp not in INTERPOLATIONS:
        raise ValueError(f"interp must be one of {INTERPOLATIONS}")
    k = quarter_turns(theta)
    if interp == "exact" and k is None:
        raise ValueError(f"exact rotation needs a multiple of pi/2, got {theta!r}")
    if k is not None and interp in ("exact", "auto"):
        if image.shape[-1] != image.shape[-2]:
            raise ValueError("exact quarter turns need square images")
        return np.rot90(image, -k, axes=(-2, -1)).copy()
    rows, cols = image.shape[-2:]
    cr, cc = (rows - 1) / 2, (cols - 1) / 2
    i, j = np.meshgrid(np.arange(rows) - cr, np.arange(cols) - cc, indexing="ij")
    c, s = np.cos(theta), np.sin(theta)
    src = np.stack([c * i - s * j + cr, s * i + c * j + cc])
    snapped = np.round(src)
    src = np.where(np.abs(src - snapped) < 1e-9, snapped, src)
    flat = image.reshape(-1, rows, cols)
    out = np.stack([map_coordinates(ch, src, order=1, mode="constant", cval=0.0) for ch in flat])
    return out.reshape(image.shape)


def transform_feature(feature, k: int, t: int | None = None, interp: str = "bilinear") -> np.ndarray:
    """Act with group element k on a feature map (..., t, n, n).

    Output orientation A is input orientation (A - k) mod t, spatially
    rotated by 2*pi*k/t.
    """
    feature = np.asarray(feature, dtype=float)
    t_feat = feature.shape[-3]
    if t is not None and t != t_feat:
        raise ValueError(f"group mismatch: t={t} but feature map has {t_feat} orientations")
    shifted = np.roll(feature, k % t_feat, axis=-3)
    return rotate_image(shifted, 2 * np.pi * (k % t_feat) / t_feat, interp)


def transform(x, k: int, t: int, kind: str, interp: str = "bilinear") -> np.ndarray:
    if kind == "image":
        return rotate_image(x, 2 * np.pi * (k % t) / t, interp)
    if kind == "feature":
        return transform_feature(x, k, t, interp)
    raise ValueError(f"kind must be 'image' or 'feature', got {kind!r}")


@dataclass
class EquivReport:
    rmse: float
    lepn: int
    lepn_fraction: float
    angle: float
    region: str = "full"
    network: str = ""
    t: int | None = None
    p: int | None = None
    h: float | None = None
    bound: float | None = None

    CSV_COLUMNS = ("network", "t", "p", "h", "angle", "region", "rmse", "lepn_fraction", "bound")

    def row(self) -> dict:
        return {c: getattr(self, c) for c in self.CSV_COLUMNS}


def region_mask(shape, region: str = "full", margin: float = 0) -> np.ndarray:
    """Boolean mask over the last two axes: everything, or a central disk of
    radius min(n)/2 - margin."""
    rows, cols = shape[-2:]
    if region == "full":
        return np.ones((rows, cols), bool)
    if region != "central-disk":
        raise ValueError(f"unknown region {region!r}")
    i, j = np.meshgrid(np.arange(rows) - (rows - 1) / 2, np.arange(cols) - (cols - 1) / 2,
                       indexing="ij")
    return np.hypot(i, j) <= min(rows, cols) / 2 - margin


def compare_outputs(left, right, region: str = "full", margin: float = 0):
    """RMSE and LEPN of ``left`` against the reference ``right``.

    Channels (all leading axes) are pooled: RMSE is one relative Frobenius
    norm, LEPN treats each pixel's channel values as a vector. Pixels whose
    reference norm is below 1e-6 are left out of LEPN.
    """
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    if left.shape != right.shape:
        raise ValueError(f"output shapes differ: {left.shape} vs {right.shape}")
    sel = region_mask(left.shape, region, margin)
    diff = (left - right).reshape(-1, *left.shape[-2:])[:, sel]
    ref = right.reshape(-1, *right.shape[-2:])[:, sel]
    denom = np.linalg.norm(ref)
    rmse = float(np.linalg.norm(diff) / denom) if denom > 0 else (0.0 if not diff.any() else np.inf)
    pix_ref = np.linalg.norm(ref, axis=0)
    pix_diff = np.linalg.norm(diff, axis=0)
    valid = pix_ref >= LEPN_GUARD
    lepn = int(np.count_nonzero(pix_diff[valid] > pix_ref[valid]))
    frac = lepn / valid.sum() if valid.any() else 0.0
    return rmse, lepn, float(frac)


def equivariance_error(forward, x, k: int, t: int, *, input_kind: str = "image",
                       output_kind: str = "image", interp: str = "auto",
                       region: str = "full", margin: float = 0, network: str = "",
                       **meta) -> EquivReport:
    """Compare forward(g x) with g forward(x) for group element k of C_t."""
    left = forward(transform(x, k, t, input_kind, interp))
    right = transform(forward(x), k, t, output_kind, interp)
    rmse, lepn, frac = compare_outputs(left, right, region, margin)
    return EquivReport(rmse, lepn, frac, 2 * np.pi * (k % t) / t, region, network, t, **meta)


# -- discretization error bound ----------------------------------------------

@dataclass(frozen=True)
class BoundParams:
    """Sup bounds on value, gradient norm and Hessian norm of the input (1)
    and of the filters (2)."""

    F1: float
    G1: float
    H1: float
    F2: float
    G2: float
    H2: float
    p: int
    h: float
    t: int = 1

    def __post_init__(self):
        if min(self.F1, self.G1, self.H1, self.F2, self.G2, self.H2) < 0:
            raise ValueError("bounds must be non-negative")

    @property
    def C(self) -> float:
        return self.F1 * self.H2 + self.F2 * self.H1 + 2 * self.G1 * self.G2


def theorem1_bound(params: BoundParams, kind: str = "input") -> float:
    """(C/2)(p+1)^2 h^2 for the input layer; times t for the others."""
    base = params.C / 2 * (params.p + 1) ** 2 * params.h**2
    if kind == "input":
        return base
    if kind in ("intermediate", "output"):
        return base * params.t
    raise ValueError(f"unknown layer kind {kind!r}")


@dataclass(frozen=True)
class SinusoidField:
    """f(x) = sum_m a_m cos(omega_m . x + phase_m)."""

    amplitudes: np.ndarray
    frequencies: np.ndarray  # (m, 2), radians per spatial unit
    phases: np.ndarray

    @classmethod
    def random(cls, rng, n_terms: int = 4, max_freq: float = 3.0) -> SinusoidField:
        amp = rng.normal(size=n_terms) / np.sqrt(n_terms)
        ang = rng.uniform(0, 2 * np.pi, n_terms)
        rad = rng.uniform(0.3, 1.0, n_terms) * max_freq
        freq = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)
        return cls(amp, freq, rng.uniform(0, 2 * np.pi, n_terms))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        phase = np.tensordot(x, self.frequencies, axes=([-1], [1])) + self.phases
        return np.cos(phase) @ self.amplitudes

    def bounds(self) -> tuple[float, float, float]:
        a = np.abs(self.amplitudes)
        w = np.linalg.norm(self.frequencies, axis=1)
        return float(a.sum()), float(a @ w), float(a @ w**2)


@dataclass(frozen=True)
class SmoothFilter:
    """Masked trig polynomial Omega(x) * sum_m c_m cos(nu_m . x + phase_m)
    with fixed physical frequencies, so its derivative bounds do not depend
    on the mesh size."""

    trig: SinusoidField
    mask: MaskSpec

    def __call__(self, x):
        return radial_mask(x, self.mask) * self.trig(x)

    def bounds(self) -> tuple[float, float, float]:
        s0, s1, s2 = self.trig.bounds()
        m1, m2 = mask_derivative_bounds(self.mask)
        return s0, m1 * s0 + s1, m2 * s0 + 2 * m1 * s1 + s2

    def sample(self, p: int, h: float, theta: float = 0.0) -> np.ndarray:
        """p x p samples phi(U_theta^-1 x_ij)."""
        return self(make_grid(p, h) @ rotation_matrix(theta))


@dataclass
class ScalingRow:
    layer: str
    h: float
    p: int
    error: float
    bound: float
    ratio: float | None = None


@dataclass
class ScalingSetup:
    """Analytic inputs and filters shared across mesh sizes."""

    radius: float = 1.2
    rolloff: float = 0.5
    t: int = 8
    k: int = 1
    seed: int = 0
    probe_extent: float = 0.4
    probe_step: float = 0.2
    fields: list = field(default_factory=list)
    filters: list = field(default_factory=list)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        mask = MaskSpec(self.radius, self.rolloff)
        fmax = 2 * np.pi / (2 * self.radius)
        # fields[0] is the planar input; fields[1:] are orientations of e(x, A).
        self.fields = [SinusoidField.random(rng) for _ in range(self.t + 1)]
        # filters[0] -> phi_in, [1..t] -> phi_A, [t+1] -> phi_out
        self.filters = [SmoothFilter(SinusoidField.random(rng, 3, fmax), mask)
                        for _ in range(self.t + 2)]

    def probes(self) -> np.ndarray:
        ax = np.arange(-self.probe_extent, self.probe_extent + 1e-9, self.probe_step)
        return np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)

    def p_for(self, h: float) -> int:
        q = self.radius / h
        if abs(q - round(q)) > 1e-9 or abs(self.probe_step / h - round(self.probe_step / h)) > 1e-9:
            raise ValueError(f"h={h} must divide both the filter radius and the probe step")
        return 2 * int(round(q)) - 1

    def bound_params(self, h: float, layer: str) -> BoundParams:
        src = self.fields[:1] if layer == "input" else self.fields[1:]
        flt = {"input": self.filters[:1], "intermediate": self.filters[1:-1],
               "output": self.filters[-1:]}[layer]
        b1 = np.max([f.bounds() for f in src], axis=0)
        b2 = np.max([f.bounds() for f in flt], axis=0)
        return BoundParams(*b1, *b2, p=self.p_for(h), h=h, t=self.t)


def _patches(fn, centers, p, h, rot=None):
    """p x p samples of fn(R (c + x_ij)) around each center (rot = R)."""
    pts = centers[:, None, None, :] + make_grid(p, h)[None]
    if rot is not None:
        pts = pts @ rot.T
    return fn(pts)


def layer_equivariance_error(setup: ScalingSetup, h: float, layer: str) -> float:
    """Sup-norm equivariance error of one layer at mesh size h on analytic inputs.

    Left side: the layer applied to the analytically transformed input
    around each probe y. Right side: the layer output at the off-grid
    point g^-1 y (the discrete convolution sum there), with orientations
    permuted.
    """
    t, k = setup.t, setup.k
    p = setup.p_for(h)
    theta = 2 * np.pi * k / t
    g_inv = rotation_matrix(theta)  # U_theta^-1 acts on row vectors as x @ U
    y = setup.probes()
    z = y @ g_inv  # g^-1 y
    angles = 2 * np.pi * np.arange(t) / t

    def bank(phi):
        return np.stack([phi.sample(p, h, a) for a in angles])

    errs = []
    if layer == "input":
        r = setup.fields[0]
        psi = bank(setup.filters[0])
        for yi, zi in zip(y, z):
            left = input_layer(psi, _patches(lambda q: r(q @ g_inv), yi[None], p, h)[0])
            right = input_layer(psi, _patches(r, zi[None], p, h)[0])
            errs.append(np.abs(left[:, 0, 0] - np.roll(right[:, 0, 0], k)).max())
    else:
        e = setup.fields[1:]

        def feature(c, rotated):
            if rotated:
                # (pi F)^A(x) = e(g^-1 x, A - k)
                return np.stack([_patches(lambda q, a=a: e[(a - k) % t](q @ g_inv), c[None], p, h)[0]
                                 for a in range(t)])
            return np.stack([_patches(e[a], c[None], p, h)[0] for a in range(t)])

        if layer == "intermediate":
            # [B, A] = phi_A(B^-1 x)
            phi = np.stack([bank(setup.filters[1 + a]) for a in range(t)], axis=1)
            for yi, zi in zip(y, z):
                left = intermediate_layer(phi, feature(yi, True))[:, 0, 0]
                right = intermediate_layer(phi, feature(zi, False))[:, 0, 0]
                errs.append(np.abs(left - np.roll(right, k)).max())
        elif layer == "output":
            ups = bank(setup.filters[-1])
            for yi, zi in zip(y, z):
                left = output_layer(ups, feature(yi, True))[0, 0]
                right = output_layer(ups, feature(zi, False))[0, 0]
                errs.append(abs(left - right))
        else:
            raise ValueError(f"unknown layer kind {layer!r}")
    return float(max(errs))


def scaling_experiment(h_values=(0.2, 0.1, 0.05, 0.025), layers=("input", "intermediate", "output"),
                       setup: ScalingSetup | None = None) -> list[ScalingRow]:
    """Empirical equivariance error against the bound for a sequence of mesh
    sizes, with the filter's physical support held fixed (p grows as h
    shrinks). ``ratio`` is error(previous h) / error(this h)."""
    setup = setup or ScalingSetup()
    rows = []
    for layer in layers:
        prev = None
        for h in h_values:
            err = layer_equivariance_error(setup, h, layer)
            bound = theorem1_bound(setup.bound_params(h, layer), layer)
            ratio = prev / err if prev is not None and err > 0 else None
            rows.append(ScalingRow(layer, h, setup.p_for(h), err, bound, ratio))
            prev = err
    return rows
