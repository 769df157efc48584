"""PGM/PPM images, CSV tables with a provenance header, bundled crops."""

from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__


def write_pgm(path, values, lo: float | None = None, hi: float | None = None,
              comment: str | None = None):
    """Write a 2D array as 8-bit binary PGM, mapping [lo, hi] to [0, 255].

    Defaults to the symmetric range [-max|v|, max|v|]. ``comment`` goes on a
    ``#`` line right after the magic number.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 2:
        raise ValueError("PGM export needs a 2D array")
    if lo is None or hi is None:
        m = float(np.abs(v).max())
        lo, hi = (-m, m) if m > 0 else (-1.0, 1.0)
    scaled = np.clip(np.round((v - lo) / (hi - lo) * 255), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n")
        if comment:
            fh.write(("# " + comment.lstrip("# ").replace("\n", " ") + "\n").encode())
        fh.write(f"{v.shape[1]} {v.shape[0]}\n255\n".encode())
        fh.write(scaled.tobytes())


def tile(images, cols: int, pad: int = 1, fill: float = 0.0) -> np.ndarray:
    """Arrange equally sized 2D arrays into a grid sheet."""
    images = [np.asarray(im, dtype=float) for im in images]
    rows = -(-len(images) // cols)
    hgt, wid = images[0].shape
    sheet = np.full((rows * (hgt + pad) + pad, cols * (wid + pad) + pad), fill)
    for n, im in enumerate(images):
        r, c = divmod(n, cols)
        y, x = pad + r * (hgt + pad), pad + c * (wid + pad)
        sheet[y:y + hgt, x:x + wid] = im
    return sheet


def _tokens(data: bytes):
    """Header tokens of a netpbm file and the offset where pixel data starts."""
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated header")
        tokens.append(data[start:pos].decode("ascii"))
    return tokens, pos + 1


def read_pnm(path) -> np.ndarray:
    """Read an 8/16-bit PGM or PPM (binary or ASCII) as gray values in [0, 1]."""
    data = Path(path).read_bytes()
    magic = data[:2].decode("ascii", "replace")
    if magic not in ("P2", "P3", "P5", "P6"):
        raise ValueError(f"{path}: not a PGM/PPM file")
    (_, w, h, maxval), offset = _tokens(data)
    w, h, maxval = int(w), int(h), int(maxval)
    chans = 3 if magic in ("P3", "P6") else 1
    count = w * h * chans
    if magic in ("P2", "P3"):
        vals = np.array(data[offset:].split()[:count], dtype=float)
    else:
        dtype = np.dtype(">u2") if maxval > 255 else np.uint8
        vals = np.frombuffer(data, dtype=dtype, count=count, offset=offset).astype(float)
    if vals.size != count:
        raise ValueError(f"{path}: expected {count} samples, found {vals.size}")
    img = vals.reshape(h, w, chans) / maxval
    if chans == 3:
        return img @ np.array([0.299, 0.587, 0.114])
    return img[..., 0]


def bundled_crops() -> list[np.ndarray]:
    """The packaged 48x48 natural-image crops, in file-name order."""
    root = resources.files("fconv") / "data" / "crops"
    names = sorted(p.name for p in root.iterdir() if p.name.endswith(".pgm"))
    return [read_pnm(root / n) for n in names]


def header_line(command: str, config: dict) -> str:
    cfg = json.dumps(config, sort_keys=True, default=str)
    return f"# fconv {__version__} command={command} seed={config.get('seed')} config={cfg}"


def write_csv(path, columns, rows, header: str | None = None):
    """Comma-separated table; floats in scientific notation with 9 significant digits."""
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return f"{float(v):.8e}"
        return "" if v is None else str(v)

    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row[c]) for c in columns])
