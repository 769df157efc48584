"""Desk-scale experiment runners shared by the CLI and the acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bases import KINDS, BasisSet, verify_remark1
from .equivariance import EquivReport, equivariance_error
from .grid import GridSpec
from .network import FConvNet, PlainConvNet, center_crop, train_autoencoder
from .parametrize import (DEFAULT_LAMBDA, MORLET_B_SCALE, morlet_trial, random_filter_trial,
                          trial_rng)

REMARK1_SIZES = tuple(range(1, 13))
REMARK1_MESHES = (0.1, 0.5, 1.0, 2.0)

# bundled crops: the even-numbered crops among the first 32 train, the rest are held out
TRAIN_CROPS = tuple(range(0, 32, 2))
HELD_OUT_CROPS = tuple(i for i in range(36) if i not in TRAIN_CROPS)


def remark1_table(sizes=REMARK1_SIZES, meshes=REMARK1_MESHES) -> list[dict]:
    return [{"p": p, "h": float(h), "max_discrepancy": verify_remark1(p, h)}
            for p in sizes for h in meshes]


def fit_table(p: int, h: float = 1.0, trials: int = 100, seed: int = 0,
              lam: float = DEFAULT_LAMBDA, b_scale: float = MORLET_B_SCALE) -> list[dict]:
    """Mean and std RMSE of the Morlet and random-filter fitting trials.

    Trial i of both bases uses the generator ``trial_rng(seed, i)``, so the
    classic and proposed bases are fitted to identical targets.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    grid = GridSpec(p, h)
    rows = []
    for kind in KINDS:
        bset = BasisSet(kind, grid)
        morlet = [morlet_trial(bset, trial_rng(seed, i), lam, b_scale=b_scale)
                  for i in range(trials)]
        rand = [random_filter_trial(bset, trial_rng(seed + 1, i), lam) for i in range(trials)]
        for target, results in (("morlet", morlet), ("random", rand)):
            for case in results[0]:
                vals = np.array([r[case] for r in results])
                rows.append({"method": kind, "target": target, "p": p, "case": case,
                             "mean": float(vals.mean()), "std": float(vals.std())})
    return rows


def fit_summary(rows) -> dict:
    """``{(method, target, case): mean}`` view of ``fit_table`` rows."""
    return {(r["method"], r["target"], r["case"]): r["mean"] for r in rows}


def random_group_angles(seed: int, t: int, count: int) -> list[int]:
    """Group elements drawn uniformly among the non-quarter-turn rotations of C_t.

    Falls back to all non-identity elements when every element is a quarter turn.
    """
    ks = [k for k in range(1, t) if (4 * k) % t != 0] or list(range(1, t)) or [0]
    rng = np.random.default_rng([seed, t, 7])
    return [int(k) for k in rng.choice(ks, size=count)]


@dataclass
class EquivConfig:
    t: int = 24
    p: int = 5
    widths: tuple = (9, 9, 9, 9)
    seed: int = 0
    region: str = "central-disk"
    margin: int = 5


def network_reports(forward, images, angles, cfg: EquivConfig, network: str,
                    names=None) -> list[tuple[str, EquivReport]]:
    """One report per (image, angle); ``angles[i]`` is a list of group elements for image i."""
    names = names or [f"image{i:02d}" for i in range(len(images))]
    out = []
    for name, img, ks in zip(names, images, angles):
        for k in ks:
            rep = equivariance_error(forward, img, k, cfg.t, region=cfg.region,
                                     margin=cfg.margin, network=network, p=cfg.p)
            out.append((name, rep))
    return out


def equiv_comparison(images, cfg: EquivConfig, angles=None, names=None):
    """Random F-Conv stack against a same-shape plain convolution stack.

    ``angles`` is None (one random non-quarter group element per image) or a
    list of group elements applied to every image.
    """
    net = FConvNet(cfg.p, cfg.t, cfg.widths, seed=cfg.seed)
    plain = PlainConvNet.matching(net, seed=cfg.seed)
    if angles is None:
        per_image = [[k] for k in random_group_angles(cfg.seed, cfg.t, len(images))]
    else:
        per_image = [list(angles)] * len(images)
    return (network_reports(lambda x: net.forward(x)[0], images, per_image, cfg, "fconv", names)
            + network_reports(lambda x: plain.forward(x)[0], images, per_image, cfg, "plain", names))


def mean_rmse(reports, network: str) -> float:
    return float(np.mean([r.rmse for _, r in reports if r.network == network]))


@dataclass
class TrainConfig:
    t: int = 8
    p: int = 5
    widths: tuple = (2, 2)
    seed: int = 0
    epochs: int = 200
    step: float = 1e-2
    optimizer: str = "adam"
    crop: int = 32
    region: str = "central-disk"
    margin: int = 5


def train_experiment(train_images, eval_images, cfg: TrainConfig):
    """Train the toy auto-encoder and measure held-out equivariance before and after.

    Returns (trained net, loss trace, untrained reports, trained reports).
    Training images are center-cropped to ``cfg.crop``.
    """
    train = [center_crop(np.asarray(im, dtype=float), cfg.crop) for im in train_images]
    net = FConvNet(cfg.p, cfg.t, cfg.widths, seed=cfg.seed)
    eq = EquivConfig(cfg.t, cfg.p, cfg.widths, cfg.seed, cfg.region, cfg.margin)
    angles = [[k] for k in random_group_angles(cfg.seed, cfg.t, len(eval_images))]
    before = network_reports(lambda x: net.forward(x)[0], eval_images, angles, eq, "untrained")
    trained, trace = train_autoencoder(net, train, cfg.epochs, cfg.step,
                                       optimizer=cfg.optimizer)
    after = network_reports(lambda x: trained.forward(x)[0], eval_images, angles, eq, "trained")
    return trained, trace, before, after
