"""Stress-strain curves, scattered-data interpolation, and dataset tensors.

The training tensor stacks, per captured frame, three material channels and
five field channels on the simulation grid:

    index 0  E          MPa
    index 1  sigma_uts  MPa
    index 2  Gc         N/mm
    index 3  eps_x      -
    index 4  eps_y      -
    index 5  sig_x      MPa
    index 6  sig_y      MPa
    index 7  phi        -

Binary layout (little endian): 8 magic bytes ``MFRC0001``, four uint32 dims
(frames, channels, n, n), then float32 values in frame-major,
channel-major, row-major order. A JSON sidecar records channel names,
units, and any configs passed by the caller.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import (
    CloughTocher2DInterpolator,
    LinearNDInterpolator,
)
from scipy.spatial import cKDTree, QhullError

from .errors import ConfigError, ParseError, TensorFormatError
from .raster import GridSpec, MaterialFieldMaps
from .solver import Frame, SimulationResult

MAGIC = b"MFRC0001"
CHANNELS = ("E", "sigma_uts", "Gc", "eps_x", "eps_y", "sig_x", "sig_y", "phi")
CHANNEL_UNITS = ("MPa", "MPa", "N/mm", "-", "-", "MPa", "MPa", "-")

NEAREST = "nearest"
LINEAR = "linear"
CUBIC = "cubic"


@dataclass
class StressStrainCurve:
    """Sampled (strain, stress) curve starting at the unloaded origin."""

    strain: np.ndarray
    stress: np.ndarray

    def validate(self) -> None:
        if self.strain.shape != self.stress.shape or self.strain.ndim != 1:
            raise ConfigError("strain and stress must be 1D arrays of equal length")
        if self.strain.size == 0 or self.strain[0] != 0.0 or self.stress[0] != 0.0:
            raise ConfigError("curve must start at (0, 0)")
        if np.any(np.diff(self.strain) <= 0):
            raise ConfigError("strains must be strictly increasing")

    @property
    def fracture_energy(self) -> float:
        return fracture_energy(self)


@dataclass
class ScatterCloud:
    """Scattered samples of one scalar field."""

    points: np.ndarray  # (m, 2), mm
    values: np.ndarray  # (m,)


def build_curve(reactions, u_schedule, length: float) -> StressStrainCurve:
    """Nominal stress = reaction / side length, strain = ubar / side length."""
    reactions = np.asarray(reactions, dtype=float)
    u_schedule = np.asarray(u_schedule, dtype=float)
    if reactions.shape != u_schedule.shape:
        raise ConfigError(
            f"length mismatch: {reactions.shape[0]} reactions vs "
            f"{u_schedule.shape[0]} displacements"
        )
    curve = StressStrainCurve(strain=u_schedule / length, stress=reactions / length)
    curve.validate()
    return curve


def fracture_energy(curve: StressStrainCurve) -> float:
    """Dissipated energy per unit volume: trapezoidal area under the curve."""
    if curve.strain.size < 2:
        raise ConfigError("fracture energy needs at least 2 curve points")
    return float(np.trapezoid(curve.stress, curve.strain))


def curve_to_csv(curve: StressStrainCurve, converged=None) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["step", "strain", "stress_MPa", "converged_flag"])
    if converged is None:
        converged = np.ones(curve.strain.size, dtype=bool)
    for k in range(curve.strain.size):
        writer.writerow([k, repr(float(curve.strain[k])), repr(float(curve.stress[k])), int(converged[k])])
    return out.getvalue()


def curve_from_csv(text: str) -> StressStrainCurve:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or header[:3] != ["step", "strain", "stress_MPa"]:
        raise ParseError("curve CSV must start with header 'step,strain,stress_MPa,...'")
    strain, stress = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            strain.append(float(row[1]))
            stress.append(float(row[2]))
        except (IndexError, ValueError) as exc:
            raise ParseError(f"curve CSV line {lineno}: {exc}") from exc
    curve = StressStrainCurve(strain=np.array(strain), stress=np.array(stress))
    curve.validate()
    return curve


# ---------------------------------------------------------------------------
# Scattered-data interpolation
# ---------------------------------------------------------------------------


def _nearest_indices(tree: cKDTree, targets: np.ndarray) -> np.ndarray:
    """Nearest cloud point per target; exact ties resolved to the lowest index."""
    if tree.n == 1:
        return np.zeros(targets.shape[0], dtype=np.int64)
    dist, idx = tree.query(targets, k=2)
    tie = dist[:, 0] == dist[:, 1]
    out = idx[:, 0].copy()
    out[tie] = np.minimum(idx[tie, 0], idx[tie, 1])
    return out


def scattered_to_grid(cloud: ScatterCloud, grid: GridSpec, method: str = CUBIC) -> np.ndarray:
    """Interpolate scattered samples onto the cell-centroid grid.

    ``linear`` uses barycentric interpolation on a Delaunay triangulation,
    ``cubic`` a C1 piecewise-cubic (Clough-Tocher) on the same
    triangulation; both fall back to nearest-neighbour outside the convex
    hull so the returned grid has no holes.
    """
    pts = np.asarray(cloud.points, dtype=float)
    vals = np.asarray(cloud.values, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] != vals.shape[0]:
        raise ConfigError("cloud needs (m, 2) points and (m,) values")
    if pts.shape[0] == 0:
        raise ConfigError("empty cloud")
    x, y = grid.cell_centroids()
    targets = np.column_stack([x.ravel(), y.ravel()])

    tree = cKDTree(pts)
    nearest_vals = vals[_nearest_indices(tree, targets)]
    if method == NEAREST:
        return nearest_vals.reshape(x.shape)

    try:
        if method == LINEAR:
            interp = LinearNDInterpolator(pts, vals)
        elif method == CUBIC:
            interp = CloughTocher2DInterpolator(pts, vals)
        else:
            raise ConfigError(f"unknown interpolation method '{method}'")
    except (QhullError, ValueError) as exc:
        raise ConfigError(f"degenerate cloud for {method} interpolation: {exc}") from exc

    out = interp(targets)
    holes = ~np.isfinite(out)
    out[holes] = nearest_vals[holes]
    return out.reshape(x.shape)


# ---------------------------------------------------------------------------
# Dataset tensor
# ---------------------------------------------------------------------------


@dataclass
class DatasetTensor:
    """frames x 8 x n x n float32 training tensor."""

    data: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[2]

    def validate(self, solver_produced: bool = False) -> None:
        if self.data.ndim != 4 or self.data.shape[1] != len(CHANNELS):
            raise ConfigError("tensor must be frames x 8 x n x n")
        if self.data.shape[2] != self.data.shape[3]:
            raise ConfigError("tensor grid must be square")
        if self.data.dtype != np.float32:
            raise ConfigError("tensor must be float32")
        for c in range(3):
            if not np.all(self.data[:, c] == self.data[0, c]):
                raise ConfigError(f"material channel '{CHANNELS[c]}' varies across frames")
        phi = self.data[:, 7]
        if phi.min() < 0.0 or phi.max() > 1.0:
            raise ConfigError("phi channel out of [0, 1]")
        if solver_produced and self.n_frames > 1:
            if np.min(np.diff(phi, axis=0)) < -1e-6:
                raise ConfigError("phi channel decreases across frames")


def channel_index(name: str) -> int:
    try:
        return CHANNELS.index(name)
    except ValueError:
        raise ConfigError(
            f"unknown channel '{name}' (expected one of {', '.join(CHANNELS)})"
        ) from None


def assemble_dataset(frames: list[Frame], maps: MaterialFieldMaps) -> DatasetTensor:
    """Stack material channels and captured field frames into one tensor."""
    n = maps.E_map.shape[0]
    for fr in frames:
        if fr.phi.shape != (n, n):
            raise ConfigError(
                f"frame grid {fr.phi.shape} does not match material grid {(n, n)}"
            )
    data = np.empty((len(frames), len(CHANNELS), n, n), dtype=np.float32)
    data[:, 0] = maps.E_map.astype(np.float32)
    data[:, 1] = maps.sigma_u_map.astype(np.float32)
    data[:, 2] = maps.Gc_map.astype(np.float32)
    for k, fr in enumerate(frames):
        data[k, 3] = fr.eps_x
        data[k, 4] = fr.eps_y
        data[k, 5] = fr.sig_x
        data[k, 6] = fr.sig_y
        data[k, 7] = fr.phi
    return DatasetTensor(data=data)


def dataset_from_result(result: SimulationResult) -> DatasetTensor:
    return assemble_dataset(result.frames, result.maps)


def write_tensor(path, tensor: DatasetTensor, metadata: dict | None = None) -> None:
    """Binary tensor plus a JSON sidecar (``<path>.json``) with metadata."""
    data = tensor.data
    if data.ndim != 4:
        raise TensorFormatError("tensor must have 4 dimensions")
    dims = data.shape
    if max(dims) >= 2**32:
        raise TensorFormatError("tensor dimension exceeds uint32 range")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<4I", *dims))
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
    sidecar = {
        "channels": list(CHANNELS),
        "units": dict(zip(CHANNELS, CHANNEL_UNITS)),
        "unit_system": "N-mm-MPa",
        "dims": list(dims),
    }
    if metadata:
        sidecar.update(metadata)
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_tensor(path) -> DatasetTensor:
    """Inverse of :func:`write_tensor` (binary part only), bit-exact."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise TensorFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        header = fh.read(16)
        if len(header) != 16:
            raise TensorFormatError("truncated header")
        dims = struct.unpack("<4I", header)
        count = 1
        for d in dims:
            count *= int(d)
        if count * 4 > 2**40:
            raise TensorFormatError(f"implausible tensor size {dims}")
        raw = fh.read(count * 4)
        if len(raw) != count * 4:
            raise TensorFormatError(
                f"truncated data: expected {count * 4} bytes, got {len(raw)}"
            )
        extra = fh.read(1)
        if extra:
            raise TensorFormatError("trailing bytes after tensor data")
    data = np.frombuffer(raw, dtype="<f4").reshape(dims)
    return DatasetTensor(data=data.copy())


# ---------------------------------------------------------------------------
# External FE data ingestion (scattered per-element CSV -> tensor)
# ---------------------------------------------------------------------------

_FE_FIELDS = ("eps_x", "eps_y", "sig_x", "sig_y", "phi")
_FE_MATERIALS = ("E_MPa", "sig_u_MPa", "Gc_N_mm")


def _read_fe_csv(path) -> dict[str, np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file")
        header = [h.strip() for h in header]
        rows = [row for row in reader if row]
    for col in ("x_mm", "y_mm") + _FE_FIELDS:
        if col not in header:
            raise ParseError(f"{path}: missing column '{col}'")
    try:
        table = np.array(rows, dtype=float)
    except ValueError as exc:
        raise ParseError(f"{path}: non-numeric data ({exc})") from exc
    if not np.all(np.isfinite(table)):
        raise ParseError(f"{path}: non-finite values")
    return {name: table[:, header.index(name)] for name in header}


def ingest_fe_csv(paths, grid: GridSpec, expected_frames: int | None = None) -> DatasetTensor:
    """Assemble a tensor from per-frame scattered CSV exports.

    Field channels are interpolated cubically; the material channels (read
    from the first frame's file) use nearest-neighbour so the
    piecewise-constant property maps are not smoothed across phase
    boundaries.
    """
    paths = list(paths)
    if not paths:
        raise ConfigError("no input files")
    if expected_frames is not None and len(paths) != expected_frames:
        raise ParseError(f"expected {expected_frames} frame files, got {len(paths)}")

    first = _read_fe_csv(paths[0])
    for col in _FE_MATERIALS:
        if col not in first:
            raise ParseError(f"{paths[0]}: first frame missing material column '{col}'")
    pts0 = np.column_stack([first["x_mm"], first["y_mm"]])
    n = grid.n_cells
    data = np.empty((len(paths), len(CHANNELS), n, n), dtype=np.float32)
    for c, col in enumerate(_FE_MATERIALS):
        data[:, c] = scattered_to_grid(
            ScatterCloud(pts0, first[col]), grid, method=NEAREST
        ).astype(np.float32)

    for k, path in enumerate(paths):
        cols = first if k == 0 else _read_fe_csv(path)
        pts = np.column_stack([cols["x_mm"], cols["y_mm"]])
        for f, name in enumerate(_FE_FIELDS):
            values = cols[name]
            if np.all(values == values[0]):
                # Constant fields (e.g. the all-zero first frame) need no
                # triangulation and must not pick up interpolation noise.
                data[k, 3 + f] = np.float32(values[0])
            else:
                data[k, 3 + f] = scattered_to_grid(
                    ScatterCloud(pts, values), grid, method=CUBIC
                ).astype(np.float32)
    data[:, 7] = np.clip(data[:, 7], 0.0, 1.0)
    return DatasetTensor(data=data)


def export_fe_csv(result: SimulationResult, out_dir) -> list:
    """Write one scattered CSV per captured frame (centroid samples).

    Inverse-direction companion of :func:`ingest_fe_csv`, used to exercise
    the ingestion path and to hand data to external tools.
    """
    import pathlib

    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    x, y = result.grid.cell_centroids()
    xs, ys = x.ravel(), y.ravel()
    maps = result.maps
    paths = []
    for k, fr in enumerate(result.frames):
        path = out_dir / f"frame_{k:04d}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            header = ["x_mm", "y_mm", *_FE_FIELDS]
            arrays = [xs, ys, fr.eps_x.ravel(), fr.eps_y.ravel(), fr.sig_x.ravel(),
                      fr.sig_y.ravel(), fr.phi.ravel()]
            if k == 0:
                header += list(_FE_MATERIALS)
                arrays += [maps.E_map.ravel(), maps.sigma_u_map.ravel(), maps.Gc_map.ravel()]
            writer.writerow(header)
            for row in zip(*arrays):
                writer.writerow([repr(float(v)) for v in row])
        paths.append(path)
    return paths
