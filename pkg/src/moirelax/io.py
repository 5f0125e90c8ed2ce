"""File formats: field snapshots, CSV reports, and portable pixmaps.

All CSV output uses '.' as the decimal separator, LF line endings and
repr-precision floats, so repeated runs of a deterministic computation
produce bit-identical files.  Field files are a single ASCII header line
followed by raw little-endian float64 nodal values, trivially parseable
from any language.
"""

from __future__ import annotations

import os
from typing import Iterable, Sequence

import numpy as np

from .lattice import MoireCell
from .relax import DisplacementField

_FIELD_MAGIC = "MOIREFIELD"


def format_float(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(c if isinstance(c, str) else format_float(c)
                              for c in row) + "\n")


def write_field(path, field: DisplacementField) -> None:
    """Binary field snapshot: one text header line, then u1 and u2 raw bytes."""
    cell = field.cell
    n1, n2 = cell.grid_shape
    am = " ".join(format_float(v) for v in cell.a_m.ravel())
    extra = ""
    if cell.rank == 1:
        extra = (" period=" + " ".join(format_float(v) for v in cell.period_vector)
                 + " winding=" + " ".join(str(int(v)) for v in cell.winding))
    header = (f"{_FIELD_MAGIC} v1 n1={n1} n2={n2} layers=2 components=2 "
              f"dtype=float64-le order=row-major rank={cell.rank} a_m={am}{extra}\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(field.u1, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(field.u2, dtype="<f8").tobytes())


def read_field(path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Read a field snapshot back: (u1, u2, header metadata)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        payload = fh.read()
    parts = header.split()
    if not parts or parts[0] != _FIELD_MAGIC:
        raise ValueError(f"{path} is not a field snapshot")
    meta: dict = {"version": parts[1]}
    i = 2
    while i < len(parts):
        key, _, value = parts[i].partition("=")
        if key in ("a_m", "period"):
            count = 4 if key == "a_m" else 2
            vals = [float(value)] + [float(parts[i + j]) for j in range(1, count)]
            meta[key] = np.array(vals).reshape(2, 2) if key == "a_m" else np.array(vals)
            i += count
            continue
        if key == "winding":
            meta[key] = np.array([int(value), int(parts[i + 1])])
            i += 2
            continue
        meta[key] = value
        i += 1
    n1 = int(meta["n1"])
    n2 = int(meta["n2"])
    per_layer = n1 * n2 * 2
    data = np.frombuffer(payload, dtype="<f8")
    if data.size != 2 * per_layer:
        raise ValueError(f"{path}: payload size {data.size} does not match header")
    u1 = data[:per_layer].reshape(n1, n2, 2).copy()
    u2 = data[per_layer:].reshape(n1, n2, 2).copy()
    return u1, u2, meta


def field_from_file(path, cell: MoireCell) -> DisplacementField:
    u1, u2, meta = read_field(path)
    if (int(meta["n1"]), int(meta["n2"])) != cell.grid_shape:
        raise ValueError("field snapshot grid does not match the requested cell")
    return DisplacementField(cell=cell, u1=u1, u2=u2)


def write_ppm(path, values: np.ndarray, vmin: float | None = None,
              vmax: float | None = None) -> tuple[float, float]:
    """Binary portable pixmap (P6) of a scalar raster, grayscale ramp.

    Returns the color-scale bounds actually used, for the metadata sidecar.
    """
    vals = np.asarray(values, dtype=float)
    lo = float(vals.min()) if vmin is None else float(vmin)
    hi = float(vals.max()) if vmax is None else float(vmax)
    span = hi - lo if hi > lo else 1.0
    level = np.clip((vals - lo) / span, 0.0, 1.0)
    gray = np.round(level * 255.0).astype(np.uint8)
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())
    return lo, hi


def write_map_sidecar(path, cell_basis: np.ndarray, lo: float, hi: float,
                      resolution: int, phase_sign: int) -> None:
    """Text metadata next to a pixmap: extent, units and color-scale bounds."""
    lines = [
        "moirelax gsfe map metadata",
        "units=meV_per_unit_cell_area",
        "length_units=angstrom",
        f"resolution={resolution}",
        f"phase_sign={phase_sign}",
        "cell_column_1=" + " ".join(format_float(v) for v in cell_basis[:, 0]),
        "cell_column_2=" + " ".join(format_float(v) for v in cell_basis[:, 1]),
        f"color_scale_min={format_float(lo)}",
        f"color_scale_max={format_float(hi)}",
        "row_axis=cell_column_1 col_axis=cell_column_2",
    ]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)
