"""Rasterization of mesostructures onto regular grids and material assignment.

Cell-centered N x N grids; each cell is classified by its centroid
(aggregate if inside an inner ring, interface if inside the matching outer
ring, matrix otherwise) and then carries the per-phase elastic and fracture
properties verbatim. Units are N-mm-MPa throughout (Gc in N/mm).

Grid indexing convention: ``field[i, j]`` is the cell in row ``i`` (the
y index, counted from the bottom edge) and column ``j`` (the x index), so
the centroid of cell (i, j) is ((j + 0.5) h, (i + 0.5) h).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import Mesostructure

MATRIX = 0
ITZ = 1
AGGREGATE = 2

PHASE_NAMES = {MATRIX: "matrix", ITZ: "itz", AGGREGATE: "aggregate"}


@dataclass
class GridSpec:
    """Regular cell-centered grid over the square domain."""

    n_cells: int = 333
    domain_length: float = 50.0

    @property
    def cell_size(self) -> float:
        return self.domain_length / self.n_cells

    def validate(self) -> None:
        if self.n_cells < 16:
            raise ConfigError("n_cells must be >= 16")
        if self.domain_length <= 0:
            raise ConfigError("domain_length must be positive")

    def cell_centroids(self) -> tuple[np.ndarray, np.ndarray]:
        """(x, y) centroid coordinate grids, each (n, n), indexed [i, j]."""
        h = self.cell_size
        c = (np.arange(self.n_cells) + 0.5) * h
        x, y = np.meshgrid(c, c)  # x varies along j, y along i
        return x, y


@dataclass
class PhaseProperties:
    """Per-phase material record: E (MPa), nu, Gc (N/mm), sigma_u (MPa)."""

    E: float
    nu: float
    Gc: float
    sigma_u: float

    def validate(self) -> None:
        if self.E <= 0:
            raise ConfigError("E must be positive")
        if not 0.0 <= self.nu < 0.5:
            raise ConfigError("nu must lie in [0, 0.5)")
        if self.Gc <= 0:
            raise ConfigError("Gc must be positive")
        if self.sigma_u <= 0:
            raise ConfigError("sigma_u must be positive")


# Default three-phase property table (moduli converted from GPa to MPa).
DEFAULT_MATERIALS: dict[int, PhaseProperties] = {
    AGGREGATE: PhaseProperties(E=72000.0, nu=0.16, Gc=0.2, sigma_u=20.0),
    MATRIX: PhaseProperties(E=28000.0, nu=0.2, Gc=0.06, sigma_u=4.0),
    ITZ: PhaseProperties(E=21900.0, nu=0.2, Gc=0.02, sigma_u=2.4),
}


@dataclass
class MaterialFieldMaps:
    """Per-cell property grids plus the phase labels they derive from."""

    phase: np.ndarray  # (n, n) int labels
    E_map: np.ndarray
    nu_map: np.ndarray
    Gc_map: np.ndarray
    sigma_u_map: np.ndarray


def point_in_convex_polygon(p, ring: np.ndarray) -> bool:
    """True iff ``p`` is inside or on the boundary of a convex CCW ring."""
    ring = np.asarray(ring, dtype=float)
    nxt = np.roll(ring, -1, axis=0)
    cross = (nxt[:, 0] - ring[:, 0]) * (p[1] - ring[:, 1]) - (nxt[:, 1] - ring[:, 1]) * (
        p[0] - ring[:, 0]
    )
    return bool((cross >= -1e-12).all())


def _points_in_convex_polygon(x: np.ndarray, y: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Vectorized containment of many points in one convex CCW ring."""
    inside = np.ones(x.shape, dtype=bool)
    n = ring.shape[0]
    for k in range(n):
        px, py = ring[k]
        qx, qy = ring[(k + 1) % n]
        cross = (qx - px) * (y - py) - (qy - py) * (x - px)
        inside &= cross >= -1e-12
    return inside


def rasterize(meso: Mesostructure, grid: GridSpec) -> np.ndarray:
    """Classify every cell centroid into {MATRIX, ITZ, AGGREGATE}."""
    grid.validate()
    n = grid.n_cells
    h = grid.cell_size
    labels = np.full((n, n), MATRIX, dtype=np.int8)
    x, y = grid.cell_centroids()
    for agg in meso.aggregates:
        outer = agg.outer_vertices
        # Restrict the containment tests to the aggregate's bounding box.
        j0 = max(int(outer[:, 0].min() / h) - 1, 0)
        j1 = min(int(outer[:, 0].max() / h) + 2, n)
        i0 = max(int(outer[:, 1].min() / h) - 1, 0)
        i1 = min(int(outer[:, 1].max() / h) + 2, n)
        xs = x[i0:i1, j0:j1]
        ys = y[i0:i1, j0:j1]
        in_outer = _points_in_convex_polygon(xs, ys, outer)
        in_inner = _points_in_convex_polygon(xs, ys, agg.inner_vertices)
        sub = labels[i0:i1, j0:j1]
        sub[in_outer & ~in_inner] = ITZ
        sub[in_inner] = AGGREGATE
    return labels


def assign_materials(phase: np.ndarray, table: dict[int, PhaseProperties]) -> MaterialFieldMaps:
    """Per-cell property lookup; values copied verbatim from the table."""
    present = np.unique(phase)
    for label in present:
        if int(label) not in table:
            raise ConfigError(f"material table missing phase '{PHASE_NAMES.get(int(label), label)}'")
    shape = phase.shape
    maps = MaterialFieldMaps(
        phase=phase,
        E_map=np.empty(shape),
        nu_map=np.empty(shape),
        Gc_map=np.empty(shape),
        sigma_u_map=np.empty(shape),
    )
    for label, props in table.items():
        props.validate()
        mask = phase == label
        maps.E_map[mask] = props.E
        maps.nu_map[mask] = props.nu
        maps.Gc_map[mask] = props.Gc
        maps.sigma_u_map[mask] = props.sigma_u
    return maps


def itz_mask(phase: np.ndarray) -> np.ndarray:
    """Binary mask of interface cells."""
    return (phase == ITZ).astype(np.uint8)


def materials_from_dict(doc: dict) -> dict[int, PhaseProperties]:
    """Parse a {matrix|itz|aggregate: {E_MPa, nu, Gc_N_mm, sigma_u_MPa}} table."""
    name_to_label = {v: k for k, v in PHASE_NAMES.items()}
    table: dict[int, PhaseProperties] = {}
    for name, entry in doc.items():
        if name not in name_to_label:
            raise ConfigError(f"unknown phase name '{name}'")
        try:
            props = PhaseProperties(
                E=float(entry["E_MPa"]),
                nu=float(entry["nu"]),
                Gc=float(entry["Gc_N_mm"]),
                sigma_u=float(entry["sigma_u_MPa"]),
            )
        except KeyError as exc:
            raise ConfigError(f"phase '{name}' missing key {exc}") from exc
        props.validate()
        table[name_to_label[name]] = props
    for label, name in PHASE_NAMES.items():
        if label not in table:
            raise ConfigError(f"material table missing phase '{name}'")
    return table


def materials_to_dict(table: dict[int, PhaseProperties]) -> dict:
    return {
        PHASE_NAMES[label]: {
            "E_MPa": props.E,
            "nu": props.nu,
            "Gc_N_mm": props.Gc,
            "sigma_u_MPa": props.sigma_u,
        }
        for label, props in sorted(table.items())
    }


def write_pgm16(path, field: np.ndarray, value_range: tuple[float, float] | None = None) -> None:
    """16-bit big-endian PGM of a 2D field, row 0 rendered at the top.

    The value range mapped onto [0, 65535] is recorded in a comment line so
    the image remains quantitatively interpretable.
    """
    field = np.asarray(field, dtype=float)
    if value_range is None:
        lo, hi = float(field.min()), float(field.max())
    else:
        lo, hi = value_range
    span = hi - lo if hi > lo else 1.0
    scaled = np.clip((field - lo) / span, 0.0, 1.0)
    pixels = np.round(scaled * 65535.0).astype(">u2")
    # Flip so increasing y (row index) renders upward.
    pixels = pixels[::-1, :]
    header = f"P5\n# range {lo!r} {hi!r}\n{field.shape[1]} {field.shape[0]}\n65535\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(pixels.tobytes())
