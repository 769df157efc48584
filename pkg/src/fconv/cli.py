"""``fconv`` command line: reproduce the desk-scale experiments as CSV and PGM files.

Exit codes: 0 success, 2 usage or I/O error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .bases import KINDS, BasisSet
from .equivariance import EquivReport, ScalingSetup, scaling_experiment
from .grid import GridSpec
from .io import bundled_crops, header_line, read_pnm, tile, write_csv, write_pgm
from .network import TrainingDiverged, save_checkpoint
from .parametrize import DEFAULT_LAMBDA

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 2, 3

# per-command defaults for flags left unset
DEFAULTS = {
    "bases": {"p": 11, "t": 8, "h": [1.0]},
    "fit": {"p": 11, "t": 8, "h": [0.2]},
    "equiv": {"p": 5, "t": 24, "h": [1.0], "widths": [9, 9, 9, 9]},
    "scaling": {"p": None, "t": 8, "h": [0.2, 0.1, 0.05, 0.025]},
    "train": {"p": 5, "t": 8, "h": [1.0], "widths": [2, 2]},
}


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fconv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "bases": "basis sheets (PGM) and the grid-point equivalence report",
        "fit": "Morlet and random-filter fitting trials for both bases",
        "equiv": "equivariance error of a random F-Conv stack against a plain stack",
        "scaling": "equivariance error against the discretization bound as h shrinks",
        "train": "train the toy auto-encoder, compare equivariance before and after",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--p", type=int, help="filter size")
        p.add_argument("--h", type=_float_list,
                       help="mesh size (scaling: comma-separated sequence)")
        p.add_argument("--t", type=int, help="number of rotations in the group")
        p.add_argument("--trials", type=int, default=100, help="fitting trials (fit)")
        p.add_argument("--seed", type=int, help="random seed (default: $FCONV_SEED or 0)")
        p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA,
                       help="ridge parameter for filter fitting")
        p.add_argument("--angles", type=_float_list,
                       help="rotation angles in degrees, each a multiple of 360/t")
        p.add_argument("--out", type=Path, default=Path("."), help="existing output directory")
        p.add_argument("--images", nargs="+", type=Path, help="PGM/PPM input images")
        if name in ("equiv", "train"):
            p.add_argument("--widths", type=_int_list, help="channels per hidden layer")
        if name == "train":
            p.add_argument("--epochs", type=int, default=200)
            p.add_argument("--step", type=float, default=1e-2, help="learning rate")
            p.add_argument("--optimizer", choices=("adam", "momentum"), default="adam")
    return parser


def resolve_config(args) -> dict:
    """Fill unset flags from per-command defaults and validate."""
    cfg = {k: v for k, v in vars(args).items() if k != "out"}
    for key, value in DEFAULTS[args.command].items():
        if cfg.get(key) is None:
            cfg[key] = value
    if cfg["seed"] is None:
        env = os.environ.get("FCONV_SEED")
        try:
            cfg["seed"] = int(env) if env is not None else 0
        except ValueError:
            raise UsageError(f"FCONV_SEED must be an integer, got {env!r}")
    if cfg["trials"] < 1:
        raise UsageError("--trials must be >= 1")
    if cfg["p"] is not None and cfg["p"] < 1:
        raise UsageError("--p must be >= 1")
    if cfg["t"] < 1:
        raise UsageError("--t must be >= 1")
    if not cfg["h"] or any(h <= 0 for h in cfg["h"]):
        raise UsageError("--h must be positive")
    if args.command != "scaling" and len(cfg["h"]) != 1:
        raise UsageError(f"{args.command} takes a single --h value")
    if "widths" in cfg and (not cfg["widths"] or min(cfg["widths"]) < 1):
        raise UsageError("--widths must list positive channel counts")
    if cfg.get("epochs", 0) < 0:
        raise UsageError("--epochs must be >= 0")
    cfg["images"] = [str(p) for p in cfg["images"]] if cfg["images"] else None
    return cfg


def angles_to_elements(angles, t: int) -> list[int] | None:
    """Map angles in degrees to group elements of C_t."""
    if angles is None:
        return None
    out = []
    for a in angles:
        k = a * t / 360.0
        if abs(k - round(k)) > 1e-9:
            raise UsageError(f"angle {a} is not a multiple of {360 / t} degrees (t={t})")
        out.append(int(round(k)) % t)
    return out


def load_images(paths):
    images, bad = [], []
    for path in paths:
        try:
            images.append(read_pnm(path))
        except (OSError, ValueError) as exc:
            bad.append(f"{path} ({exc})")
    if bad:
        raise OSError("unreadable image files: " + "; ".join(bad))
    return images


def _report_row(name, rep: EquivReport) -> dict:
    return {"image": name, "lepn": rep.lepn, **rep.row()}


REPORT_COLUMNS = ("image",) + EquivReport.CSV_COLUMNS + ("lepn",)


# -- commands ------------------------------------------------------------------

def cmd_bases(cfg, out: Path, header: str):
    grid = GridSpec(cfg["p"], cfg["h"][0])
    for kind in KINDS:
        bset = BasisSet(kind, grid)
        for suffix, theta in (("", 0.0), ("_rot45", np.pi / 4)):
            samples = bset.sample_rotated(theta)
            write_pgm(out / f"bases_{kind}{suffix}.pgm", tile(samples, cols=grid.p),
                      comment=header)
    sizes = sorted(set(ex.REMARK1_SIZES) | {cfg["p"]})
    meshes = sorted(set(ex.REMARK1_MESHES) | {cfg["h"][0]})
    rows = ex.remark1_table(sizes, meshes)
    write_csv(out / "remark1_report.csv", ("p", "h", "max_discrepancy"), rows, header)
    worst = max(r["max_discrepancy"] for r in rows)
    print(f"wrote 4 basis sheets and remark1_report.csv; max discrepancy {worst:.3e}")


def cmd_fit(cfg, out: Path, header: str):
    rows = ex.fit_table(cfg["p"], cfg["h"][0], cfg["trials"], cfg["seed"], cfg["lam"])
    write_csv(out / "fit_table.csv", ("method", "target", "p", "case", "mean", "std"), rows, header)
    for r in rows:
        print(f"{r['method']:>8} {r['target']:>6} {r['case']:>12}  {r['mean']:.3e} "
              f"+- {r['std']:.3e}")


def cmd_equiv(cfg, out: Path, header: str):
    crops = bundled_crops()
    if cfg["images"]:
        images = load_images(cfg["images"])
        names = [Path(p).name for p in cfg["images"]]
    else:
        images = [crops[i] for i in ex.HELD_OUT_CROPS]
        names = [f"crop{i:02d}" for i in ex.HELD_OUT_CROPS]
    ecfg = ex.EquivConfig(cfg["t"], cfg["p"], tuple(cfg["widths"]), cfg["seed"])
    try:
        reports = ex.equiv_comparison(images, ecfg, angles_to_elements(cfg["angles"], cfg["t"]),
                                      names)
    except ValueError as exc:
        raise UsageError(str(exc))
    write_csv(out / "equiv_reports.csv", REPORT_COLUMNS,
              [_report_row(n, r) for n, r in reports], header)
    summary = _summary(reports, ("fconv", "plain"))
    ratio = summary[0]["mean_rmse"] / summary[1]["mean_rmse"]
    for row in summary:
        row["ratio_to_plain"] = row["mean_rmse"] / summary[1]["mean_rmse"]
    write_csv(out / "equiv_summary.csv", SUMMARY_COLUMNS + ("ratio_to_plain",), summary, header)
    print(f"mean RMSE fconv {summary[0]['mean_rmse']:.4e}  plain {summary[1]['mean_rmse']:.4e}  "
          f"ratio {ratio:.3f}")


SUMMARY_COLUMNS = ("network", "count", "mean_rmse", "std_rmse", "mean_lepn_fraction")


def _summary(reports, networks) -> list[dict]:
    rows = []
    for net in networks:
        sel = [r for _, r in reports if r.network == net]
        rmse = np.array([r.rmse for r in sel])
        rows.append({"network": net, "count": len(sel), "mean_rmse": float(rmse.mean()),
                     "std_rmse": float(rmse.std()),
                     "mean_lepn_fraction": float(np.mean([r.lepn_fraction for r in sel]))})
    return rows


def cmd_scaling(cfg, out: Path, header: str):
    ks = angles_to_elements(cfg["angles"], cfg["t"]) or [1]
    if len(ks) != 1:
        raise UsageError("scaling takes a single --angles value")
    setup = ScalingSetup(t=cfg["t"], k=ks[0], seed=cfg["seed"])
    try:
        rows = scaling_experiment(tuple(cfg["h"]), setup=setup)
    except ValueError as exc:
        raise UsageError(str(exc))
    table = [vars(r) for r in rows]
    write_csv(out / "scaling.csv", ("layer", "h", "p", "error", "bound", "ratio"), table, header)
    for r in rows:
        ratio = "" if r.ratio is None else f"  ratio {r.ratio:.2f}"
        print(f"{r.layer:>12} h={r.h:<6g} p={r.p:<3d} error {r.error:.3e}  bound {r.bound:.3e}{ratio}")


def cmd_train(cfg, out: Path, header: str):
    crops = bundled_crops()
    if cfg["images"]:
        train = load_images(cfg["images"])
        size = min(min(im.shape) for im in train)
    else:
        train = [crops[i] for i in ex.TRAIN_CROPS]
        size = ex.TrainConfig.crop
    held_out = [crops[i] for i in ex.HELD_OUT_CROPS]
    tcfg = ex.TrainConfig(cfg["t"], cfg["p"], tuple(cfg["widths"]), cfg["seed"], cfg["epochs"],
                          cfg["step"], cfg["optimizer"], size)
    try:
        net, trace, before, after = ex.train_experiment(train, held_out, tcfg)
    except TrainingDiverged as exc:
        _write_trace(out, exc.trace, header)
        print(f"training diverged: {exc}; loss trace in {out / 'loss_trace.csv'}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        raise UsageError(str(exc))
    save_checkpoint(net, out / "checkpoint.csv", header)
    _write_trace(out, trace, header)
    names = [f"crop{i:02d}" for i in ex.HELD_OUT_CROPS]
    rows = [_report_row(n, r) for n, (_, r) in zip(names * 2, before + after)]
    write_csv(out / "train_equiv.csv", REPORT_COLUMNS, rows, header)
    summary = _summary(before + after, ("untrained", "trained"))
    write_csv(out / "train_summary.csv", SUMMARY_COLUMNS, summary, header)
    print(f"loss {trace[0]:.4e} -> {trace[-1]:.4e}; held-out RMSE "
          f"{summary[0]['mean_rmse']:.4f} -> {summary[1]['mean_rmse']:.4f}")
    return EXIT_OK


def _write_trace(out, trace, header):
    rows = [{"epoch": i, "loss": float(v)} for i, v in enumerate(trace)]
    write_csv(out / "loss_trace.csv", ("epoch", "loss"), rows, header)


COMMANDS = {"bases": cmd_bases, "fit": cmd_fit, "equiv": cmd_equiv,
            "scaling": cmd_scaling, "train": cmd_train}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = resolve_config(args)
        out = args.out
        if not out.is_dir():
            raise UsageError(f"output directory does not exist: {out}")
        if not os.access(out, os.W_OK):
            raise UsageError(f"output directory is not writable: {out}")
        header = header_line(args.command, cfg)
        code = COMMANDS[args.command](cfg, out, header)
    except UsageError as exc:
        print(f"fconv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"fconv: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
