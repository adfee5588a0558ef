"""File formats.

All binary formats are little-endian.

* samples     ``OPFLOW01`` u32 count, u32 dim, then count*dim f64
* checkpoint  ``OPFLOWM1`` u32 len + descriptor text, u32 len + mode tag,
              u32 len + output tag, u64 n_params, then n_params f64
* trajectory  ``OPFLOWT1`` u32 K+1, u32 d, then (K+1)*d f64; batched
              trajectories store each state flattened to n*d
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .drift_model import DriftModel
from .nn import MLP, SeqConv

SAMPLES_MAGIC = b"OPFLOW01"
MODEL_MAGIC = b"OPFLOWM1"
TRAJ_MAGIC = b"OPFLOWT1"
_F64 = np.dtype("<f8")


class FormatError(ValueError):
    pass


def _expect(fh, magic):
    got = fh.read(len(magic))
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")


def _read_exact(fh, n):
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError("truncated file")
    return buf


# samples ------------------------------------------------------------------------


def save_samples(path, data):
    data = np.atleast_2d(np.asarray(data, dtype=float))
    with open(path, "wb") as fh:
        fh.write(SAMPLES_MAGIC + struct.pack("<II", *data.shape))
        fh.write(data.astype(_F64).tobytes())


def load_samples(path) -> np.ndarray:
    """Read an OPFLOW01 file, or a CSV with one sample per row."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(len(SAMPLES_MAGIC))
        if head != SAMPLES_MAGIC:
            return _load_csv_samples(path)
        n, d = struct.unpack("<II", _read_exact(fh, 8))
        raw = _read_exact(fh, 8 * n * d)
        if fh.read(1):
            raise FormatError("trailing bytes after sample block")
    return np.frombuffer(raw, dtype=_F64).reshape(n, d).astype(float)


def _load_csv_samples(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        return np.array([[float(v) for v in r] for r in rows])
    except ValueError:
        return np.array([[float(v) for v in r] for r in rows[1:]])


def save_samples_csv(path, data):
    np.savetxt(path, np.atleast_2d(data), delimiter=",", fmt="%.17g")


# checkpoints --------------------------------------------------------------------


def _text(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def _read_text(fh) -> str:
    (n,) = struct.unpack("<I", _read_exact(fh, 4))
    return _read_exact(fh, n).decode("utf-8")


def save_model(path, model: DriftModel):
    p = model.net.params
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC + _text(model.describe()) + _text(model.mode) + _text(model.output))
        fh.write(struct.pack("<Q", p.size))
        fh.write(p.astype(_F64).tobytes())


def load_model(path) -> DriftModel:
    with open(path, "rb") as fh:
        _expect(fh, MODEL_MAGIC)
        desc = dict(item.split("=", 1) for item in _read_text(fh).split(";"))
        mode = _read_text(fh)
        output = _read_text(fh)
        (n,) = struct.unpack("<Q", _read_exact(fh, 8))
        params = np.frombuffer(_read_exact(fh, 8 * n), dtype=_F64).astype(float)
    if mode != desc["mode"] or output != desc["output"]:
        raise FormatError("mode tags disagree with the descriptor")
    act = desc["activation"]
    skip = desc.get("skip", "0") == "1"
    if desc.get("arch", "mlp") == "conv":
        g_in, g_out = (3, 2) if mode == "full" else (2, 1)
        dil = tuple(int(d) for d in desc["dilations"].split(","))
        net = SeqConv(int(desc["points"]), int(desc["point_dim"]), g_in, g_out, int(desc["channels"]), dil, int(desc["kernel"]), act, params, desc.get("compute", "float64"))
        return DriftModel(int(desc["dim"]), mode, activation=act, net=net, skip=skip, arch="conv", point_dim=int(desc["point_dim"]))
    widths = [int(w) for w in desc["widths"].split(",")]
    net = MLP(widths, act, params)
    dim = widths[-1] // 2 if mode == "full" else widths[-1]
    return DriftModel(dim, mode, hidden=widths[1:-1], activation=act, net=net, skip=skip)


# trajectories ---------------------------------------------------------------------


def save_trajectory(path, traj):
    """``traj`` is (K+1, d) or (K+1, n, d)."""
    t = np.asarray(traj, dtype=float)
    t = t.reshape(t.shape[0], -1)
    with open(path, "wb") as fh:
        fh.write(TRAJ_MAGIC + struct.pack("<II", *t.shape))
        fh.write(t.astype(_F64).tobytes())


def load_trajectory(path, n: int | None = None) -> np.ndarray:
    with open(path, "rb") as fh:
        _expect(fh, TRAJ_MAGIC)
        k, d = struct.unpack("<II", _read_exact(fh, 8))
        out = np.frombuffer(_read_exact(fh, 8 * k * d), dtype=_F64).reshape(k, d).astype(float)
    return out if n is None else out.reshape(k, n, d // n)


# small text outputs -----------------------------------------------------------


def write_loss_csv(path, losses):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        for i, v in enumerate(losses):
            w.writerow([i + 1, repr(float(v))])


def write_rows_csv(path, rows, fields=None):
    rows = list(rows)
    fields = fields or list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def write_pgm(path, image, lo=None, hi=None):
    """Binary 8-bit PGM. Float images are scaled linearly from [lo, hi]."""
    img = np.asarray(image)
    if img.dtype != np.uint8:
        x = img.astype(float)
        lo = np.min(x) if lo is None else lo
        hi = np.max(x) if hi is None else hi
        span = hi - lo if hi > lo else 1.0
        img = np.clip(np.round(255 * (x - lo) / span), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    fields, pos = [], 0
    while len(fields) < 4:
        line_end = data.index(b"\n", pos)
        line = data[pos:line_end].split(b"#", 1)[0]
        fields += line.split()
        pos = line_end + 1
    if fields[0] != b"P5" or fields[3] != b"255":
        raise FormatError("not an 8-bit binary PGM")
    w, h = int(fields[1]), int(fields[2])
    return np.frombuffer(data[pos : pos + w * h], dtype=np.uint8).reshape(h, w)


def tile_fields(fields, cols: int = 8, pad: int = 1) -> np.ndarray:
    """Arrange (n, L, L) fields into one grid image (float, NaN padding -> min)."""
    f = np.asarray(fields, dtype=float)
    n, L, _ = f.shape
    rows = -(-n // cols)
    out = np.full((rows * (L + pad) - pad, cols * (L + pad) - pad), np.nan)
    for i in range(n):
        r, c = divmod(i, cols)
        out[r * (L + pad) : r * (L + pad) + L, c * (L + pad) : c * (L + pad) + L] = f[i]
    return np.where(np.isnan(out), np.nanmin(out), out)
