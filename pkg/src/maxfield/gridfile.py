"""Grid files: a text CSV layout and a little-endian binary layout.

CSV: a header ``# maxfield d=<d> shape=<n1,...,nd> margin=<r>`` followed by
one value per line, row-major over the window dilated by ``r``. Values are
written with ``repr`` so they read back exactly.

Binary: magic ``MXF1``, ``u32 d``, ``u32 margin``, ``u64 shape[d]`` and then
``f64`` values row-major over the dilated window, all little-endian.
"""
from __future__ import annotations

import math
import re
import struct
from pathlib import Path

import numpy as np

from .errors import MaxfieldError
from .fields import GridRealization
from .lattice import Window

MAGIC = b"MXF1"
_HEADER = re.compile(r"^#\s*maxfield\s+d=(\d+)\s+shape=([\d,]+)\s+margin=(\d+)\s*$")


class GridFormatError(MaxfieldError):
    """Malformed or inconsistent grid file."""


def is_csv(path) -> bool:
    return Path(path).suffix.lower() == ".csv"


def _check(d: int, shape: tuple[int, ...], margin: int, count: int) -> tuple[int, ...]:
    if d < 1 or len(shape) != d:
        raise GridFormatError(f"header declares d={d} but shape has {len(shape)} entries")
    if any(s < 1 for s in shape):
        raise GridFormatError(f"shape entries must be positive, got {shape}")
    dilated = tuple(s + 2 * margin for s in shape)
    if math.prod(dilated) != count:
        raise GridFormatError(
            f"payload has {count} values, shape {shape} with margin {margin} needs {math.prod(dilated)}")
    return dilated


def _build(shape, margin, values) -> GridRealization:
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise GridFormatError("grid values must be finite")
    dilated = _check(len(shape), shape, margin, values.size)
    return GridRealization(Window.from_shape(shape), margin, values.reshape(dilated))


def write_csv(grid: GridRealization, path) -> None:
    shape = ",".join(str(s) for s in grid.window.shape)
    lines = [f"# maxfield d={grid.dim} shape={shape} margin={grid.margin}"]
    lines += [repr(float(x)) for x in grid.values.ravel()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> GridRealization:
    text = Path(path).read_text().splitlines()
    if not text:
        raise GridFormatError("empty grid file")
    m = _HEADER.match(text[0].strip())
    if not m:
        raise GridFormatError(f"bad grid header: {text[0]!r}")
    d, margin = int(m.group(1)), int(m.group(3))
    try:
        shape = tuple(int(s) for s in m.group(2).split(","))
        vals = [float(s) for s in (t.strip() for t in text[1:]) if s]
    except ValueError as exc:
        raise GridFormatError(f"unparsable grid entry: {exc}") from exc
    if len(shape) != d:
        raise GridFormatError(f"header declares d={d} but shape has {len(shape)} entries")
    return _build(shape, margin, vals)


def write_binary(grid: GridRealization, path) -> None:
    d = grid.dim
    head = MAGIC + struct.pack(f"<II{d}Q", d, grid.margin, *grid.window.shape)
    Path(path).write_bytes(head + grid.values.astype("<f8").tobytes(order="C"))


def read_binary(path) -> GridRealization:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise GridFormatError("missing MXF1 magic")
    if len(raw) < 12:
        raise GridFormatError("truncated grid header")
    d, margin = struct.unpack_from("<II", raw, 4)
    if d < 1 or len(raw) < 12 + 8 * d:
        raise GridFormatError("truncated grid header")
    shape = struct.unpack_from(f"<{d}Q", raw, 12)
    body = raw[12 + 8 * d:]
    if len(body) % 8:
        raise GridFormatError("payload is not a whole number of f64 values")
    return _build(tuple(int(s) for s in shape), margin, np.frombuffer(body, dtype="<f8"))


def write_grid(grid: GridRealization, path) -> None:
    (write_csv if is_csv(path) else write_binary)(grid, path)


def read_grid(path) -> GridRealization:
    return (read_csv if is_csv(path) else read_binary)(path)
