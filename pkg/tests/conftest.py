import math

import numpy as np
import pytest

from mesofrac.geometry import (
    GeometryConfig,
    Mesostructure,
    convex_hull,
    shrink_polygon,
    _finish_aggregate,
)
from mesofrac.raster import (
    DEFAULT_MATERIALS,
    GridSpec,
    assign_materials,
    rasterize,
)


def homogeneous_maps(n_cells: int, domain_length: float):
    """All-matrix material maps on an n x n grid."""
    meso = Mesostructure(
        config=GeometryConfig(domain_length=domain_length, target_volume_fraction=0.0)
    )
    grid = GridSpec(n_cells=n_cells, domain_length=domain_length)
    return assign_materials(rasterize(meso, grid), DEFAULT_MATERIALS), grid


def single_aggregate_meso(domain_length: float, radius: float, n_points: int = 12,
                          itz: float = 0.6) -> Mesostructure:
    """One polygonal aggregate (regular hull) centered in the domain."""
    ang = np.linspace(0.0, 2.0 * math.pi, n_points, endpoint=False)
    c = domain_length / 2.0
    pts = np.column_stack([c + radius * np.cos(ang), c + radius * np.sin(ang)])
    outer = convex_hull(pts)
    inner = shrink_polygon(outer, itz)
    return Mesostructure(
        config=GeometryConfig(domain_length=domain_length, target_volume_fraction=0.0,
                              itz_thickness=itz),
        aggregates=[_finish_aggregate(outer, inner)],
    )


def brute_force_hull(points: np.ndarray) -> set:
    """O(n^3) hull oracle: an edge (i, j) lies on the hull iff every other
    point sits on its left; returns the set of hull vertex tuples."""
    n = len(points)
    on_hull = set()
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d = points - points[i]
            e = points[j] - points[i]
            cross = e[0] * d[:, 1] - e[1] * d[:, 0]
            others = np.delete(cross, [i, j])
            if np.all(others > 0.0):
                on_hull.add(tuple(points[i]))
                on_hull.add(tuple(points[j]))
    return on_hull


def ring_boundary_distance(inner: np.ndarray, outer: np.ndarray) -> float:
    """Min distance between two ring boundaries (inner nested in outer)."""

    def seg_dist(points, ring):
        best = math.inf
        m = ring.shape[0]
        for p in points:
            for k in range(m):
                a, b = ring[k], ring[(k + 1) % m]
                ab = b - a
                t = float(np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0))
                best = min(best, float(np.hypot(*(p - (a + t * ab)))))
        return best

    return min(seg_dist(inner, outer), seg_dist(outer, inner))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
