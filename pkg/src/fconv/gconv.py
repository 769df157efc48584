"""Discrete group convolutions for the cyclic group C_t.

Array layout (orientation axis always third from the end):

* planar image: ``(n, n)`` or ``(c, n, n)``
* feature map: ``(t, n, n)`` or ``(c, t, n, n)``; orientation k is the
  rotation by 2*pi*k/t
* input / output filters: ``(t, p, p)`` or ``(c_out, c_in, t, p, p)``
* intermediate filters: ``(t, t, p, p)`` or ``(c_out, c_in, t, t, p, p)``,
  indexed ``[B, A]``

All convolutions are true convolutions (kernel flipped), matching the
``r(y - x)`` form of the continuous layers.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .parametrize import NormalizedBasis, synthesize_filters

PADDINGS = ("valid", "same")
LAYER_KINDS = ("input", "intermediate", "output")


def _pad(x, p, padding):
    if padding == "valid":
        return x
    if padding != "same":
        raise ValueError(f"padding must be one of {PADDINGS}, got {padding!r}")
    lo = (p - 1) // 2
    width = [(0, 0)] * (x.ndim - 2) + [(lo, p - 1 - lo)] * 2
    return np.pad(x, width)


def conv2d(image, kernel, padding: str = "valid") -> np.ndarray:
    """Single-channel 2D convolution."""
    image = np.asarray(image, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    return conv_multi(image[None], kernel[None, None], padding)[0]


def conv_multi(x, K, padding: str = "valid") -> np.ndarray:
    """Dense multi-channel convolution: (C, n, n) * (O, C, p, p) -> (O, m, m)."""
    x = _pad(np.asarray(x, dtype=float), K.shape[-1], padding)
    p = K.shape[-1]
    if K.shape[-2] != p:
        raise ValueError("kernels must be square")
    if x.shape[-1] < p or x.shape[-2] < p:
        raise ValueError(f"kernel of size {p} does not fit an image of shape {x.shape[-2:]}")
    if x.shape[0] != K.shape[1]:
        raise ValueError(f"kernel expects {K.shape[1]} input channels, got {x.shape[0]}")
    win = sliding_window_view(x, (p, p), axis=(-2, -1))
    return np.tensordot(K[..., ::-1, ::-1], win, axes=([1, 2, 3], [0, 3, 4]))


def conv_multi_backward(x, K, dy) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of a valid ``conv_multi`` w.r.t. its input and kernel."""
    p = K.shape[-1]
    win = sliding_window_view(x, (p, p), axis=(-2, -1))
    dK = np.tensordot(dy, win, axes=([1, 2], [1, 2]))[..., ::-1, ::-1]
    dy_pad = np.pad(dy, [(0, 0), (p - 1, p - 1), (p - 1, p - 1)])
    dwin = sliding_window_view(dy_pad, (p, p), axis=(-2, -1))
    dx = np.tensordot(K, dwin, axes=([0, 2, 3], [0, 3, 4]))
    return dx, np.ascontiguousarray(dK)


def _as_multi(filters, x, filt_core, x_core):
    """Promote single-channel filters/inputs to the multi-channel layout."""
    single = filters.ndim == filt_core
    if single:
        filters = filters[None, None]
    if x.ndim == x_core:
        x = x[None]
    return filters, x, single


def _check_group(t_filter, t_feature):
    if t_filter != t_feature:
        raise ValueError(f"group mismatch: filters have t={t_filter}, features have t={t_feature}")


def input_layer(psi, image, padding: str = "valid") -> np.ndarray:
    """Lift an image to a feature map; orientation A uses filter slice psi^A."""
    psi = np.asarray(psi, dtype=float)
    psi, x, single = _as_multi(psi, np.asarray(image, dtype=float), 3, 2)
    O, C, t, p, _ = psi.shape
    K = psi.transpose(0, 2, 1, 3, 4).reshape(O * t, C, p, p)
    out = conv_multi(x, K, padding)
    out = out.reshape(O, t, *out.shape[-2:])
    return out[0] if single else out


def shift_intermediate(phi) -> np.ndarray:
    """Pre-shifted bank phi_bar[..., B, A] = phi[..., B, (A - B) mod t]."""
    phi = np.asarray(phi)
    t = phi.shape[-3]
    B = np.arange(t)[:, None]
    A = np.arange(t)[None, :]
    return phi[..., B, (A - B) % t, :, :]


def unshift_intermediate(phi_bar) -> np.ndarray:
    """Inverse of ``shift_intermediate``."""
    phi_bar = np.asarray(phi_bar)
    t = phi_bar.shape[-3]
    B = np.arange(t)[:, None]
    A = np.arange(t)[None, :]
    return phi_bar[..., B, (A + B) % t, :, :]


def intermediate_layer(phi, feature, padding: str = "valid", form: str = "shifted") -> np.ndarray:
    """Group convolution of a feature map with a (t, t) filter bank.

    ``form="direct"`` evaluates out^B = sum_A phi^{B,A} * F^{BA} literally;
    ``form="shifted"`` convolves F^A with the pre-shifted bank
    phi^{B, B^-1 A} in a single dense convolution. Both are exact.
    """
    phi = np.asarray(phi, dtype=float)
    phi, F, single = _as_multi(phi, np.asarray(feature, dtype=float), 4, 3)
    O, C, t, t2, p, _ = phi.shape
    if t != t2:
        raise ValueError("intermediate filters must be (t, t) in the group axes")
    _check_group(t, F.shape[1])
    n = F.shape[-1]
    if form == "shifted":
        K = shift_intermediate(phi).transpose(0, 2, 1, 3, 4, 5).reshape(O * t, C * t, p, p)
        out = conv_multi(F.reshape(C * t, *F.shape[-2:]), K, padding)
        out = out.reshape(O, t, *out.shape[-2:])
    elif form == "direct":
        outs = []
        for b in range(t):
            # F^{BA} for A = 0..t-1
            rolled = np.roll(F, -b, axis=1).reshape(C * t, n, n)
            outs.append(conv_multi(rolled, phi[:, :, b].reshape(O, C * t, p, p), padding))
        out = np.stack(outs, axis=1)
    else:
        raise ValueError(f"unknown form {form!r}")
    return out[0] if single else out


def output_layer(upsilon, feature, padding: str = "valid") -> np.ndarray:
    """Project a feature map to a planar image: sum_B upsilon^B * F^B."""
    upsilon = np.asarray(upsilon, dtype=float)
    ups, F, single = _as_multi(upsilon, np.asarray(feature, dtype=float), 3, 3)
    O, C, t, p, _ = ups.shape
    _check_group(t, F.shape[1])
    out = conv_multi(F.reshape(C * t, *F.shape[-2:]), ups.reshape(O, C * t, p, p), padding)
    return out[0] if single else out


def build_layer_filters(basis: NormalizedBasis, coefficients, kind: str) -> np.ndarray:
    """Synthesize layer filters from normalized-basis coefficients.

    input/output: coefficients (..., r) -> filters (..., t, p, p), slice A
    holding phi(A^-1 x).
    intermediate: coefficients (..., t, r), one vector per channel index A,
    -> filters (..., t, t, p, p) with [B, A] = phi_A(B^-1 x).
    """
    w = np.asarray(coefficients, dtype=float)
    if kind in ("input", "output"):
        return synthesize_filters(basis, w)
    if kind != "intermediate":
        raise ValueError(f"unknown layer kind {kind!r}")
    if w.ndim < 2 or w.shape[-2] != basis.t:
        raise ValueError(f"intermediate coefficients need shape (..., {basis.t}, {basis.rank}), "
                         f"got {w.shape}")
    return np.swapaxes(synthesize_filters(basis, w), -3, -4)


def filters_backward(basis: NormalizedBasis, d_filters, kind: str) -> np.ndarray:
    """Pull a gradient on filters back to the coefficients (multiply by U^T)."""
    d = np.asarray(d_filters, dtype=float)
    if kind == "intermediate":
        d = np.swapaxes(d, -3, -4)
    flat = d.reshape(d.shape[:-3] + (-1,))
    return flat @ basis.U


def dense_kernel(filters, kind: str) -> np.ndarray:
    """Flatten multi-channel group filters into one (O', C', p, p) dense kernel."""
    f = np.asarray(filters)
    p = f.shape[-1]
    if kind == "input":
        O, C, t = f.shape[:3]
        return f.transpose(0, 2, 1, 3, 4).reshape(O * t, C, p, p)
    if kind == "intermediate":
        O, C, t = f.shape[:3]
        return shift_intermediate(f).transpose(0, 2, 1, 3, 4, 5).reshape(O * t, C * t, p, p)
    if kind == "output":
        O, C, t = f.shape[:3]
        return f.reshape(O, C * t, p, p)
    raise ValueError(f"unknown layer kind {kind!r}")


def dense_kernel_backward(dK, kind: str, c_out: int, c_in: int, t: int) -> np.ndarray:
    """Adjoint of ``dense_kernel``: gradient on the group filters."""
    p = dK.shape[-1]
    if kind == "input":
        return dK.reshape(c_out, t, c_in, p, p).transpose(0, 2, 1, 3, 4)
    if kind == "intermediate":
        bar = dK.reshape(c_out, t, c_in, t, p, p).transpose(0, 2, 1, 3, 4, 5)
        return unshift_intermediate(bar)
    if kind == "output":
        return dK.reshape(c_out, c_in, t, p, p)
    raise ValueError(f"unknown layer kind {kind!r}")
