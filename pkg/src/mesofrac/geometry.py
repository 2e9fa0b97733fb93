"""Random three-phase concrete mesostructure generation.

Aggregates are convex polygons obtained as convex hulls of random points
sampled on randomly sized and oriented ellipses. Each aggregate carries an
inner ring (the outer ring offset inward by the interface-layer thickness)
so that the band between the two rings forms the interfacial transition
zone. Placement enforces non-overlap, a minimum clearance between
aggregates, and a clearance to the domain boundary.

All randomness flows through a single Philox (counter-based, seedable)
generator so that a seed fully determines the generated structure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import (
    ConfigError,
    DegenerateGeometryError,
    InfeasibleOffsetError,
    CandidateRejected,
    PartialPackingError,
    ParseError,
)

# Collinearity / containment tolerance for cross products (mm^2).
_CROSS_TOL = 1e-12


def make_rng(seed: int) -> np.random.Generator:
    """Seeded counter-based generator (Philox4x64-10) used everywhere."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass
class GeometryConfig:
    """Parameters controlling mesostructure sampling. Lengths in mm."""

    domain_length: float = 50.0
    target_volume_fraction: float = 0.4
    itz_thickness: float = 0.6
    min_gap: float = 1.0
    semi_axis_range: tuple[float, float] = (2.0, 8.0)
    points_per_ellipse: int = 10
    max_placement_attempts: int = 20000
    seed: int = 0
    vf_tolerance: float = 0.01

    def validate(self) -> None:
        if self.domain_length <= 0:
            raise ConfigError("domain_length must be positive")
        if not 0.0 <= self.target_volume_fraction < 0.9:
            raise ConfigError("target_volume_fraction must lie in [0, 0.9)")
        if self.itz_thickness <= 0:
            raise ConfigError("itz_thickness must be positive")
        if self.min_gap < 0:
            raise ConfigError("min_gap must be non-negative")
        lo, hi = self.semi_axis_range
        if not 0 < lo <= hi:
            raise ConfigError("semi_axis_range must satisfy 0 < min <= max")
        if self.points_per_ellipse < 5:
            raise ConfigError("points_per_ellipse must be >= 5")
        if self.max_placement_attempts < 1:
            raise ConfigError("max_placement_attempts must be >= 1")
        if self.vf_tolerance <= 0:
            raise ConfigError("vf_tolerance must be positive")


@dataclass
class AggregatePolygon:
    """One aggregate: convex CCW outer ring and its inward-offset inner ring."""

    outer_vertices: np.ndarray  # (n, 2)
    inner_vertices: np.ndarray  # (m, 2)
    centroid: np.ndarray  # (2,)
    area_outer: float
    area_inner: float


@dataclass
class Mesostructure:
    config: GeometryConfig
    aggregates: list[AggregatePolygon] = field(default_factory=list)

    @property
    def achieved_volume_fraction(self) -> float:
        total = sum(a.area_outer for a in self.aggregates)
        return total / self.config.domain_length**2


def polygon_area(ring: np.ndarray) -> float:
    """Shoelace area of a simple CCW ring (positive)."""
    ring = np.asarray(ring, dtype=float)
    if ring.shape[0] < 3:
        raise DegenerateGeometryError("polygon needs at least 3 vertices")
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * (float(x @ np.append(y[1:], y[0])) - float(y @ np.append(x[1:], x[0])))


def polygon_centroid(ring: np.ndarray) -> np.ndarray:
    """Area centroid of a simple CCW ring."""
    ring = np.asarray(ring, dtype=float)
    x, y = ring[:, 0], ring[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * np.sum(cross)
    cx = np.sum((x + xn) * cross) / (6.0 * a)
    cy = np.sum((y + yn) * cross) / (6.0 * a)
    return np.array([cx, cy])


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Convex hull by Andrew's monotone chain.

    Returns the minimal hull (collinear boundary points dropped) as a CCW
    ring starting from the lowest, then leftmost vertex.

    Raises
    ------
    DegenerateGeometryError
        If fewer than 3 distinct points remain or all points are collinear.
    """
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if pts.shape[0] < 3:
        raise DegenerateGeometryError("convex hull needs >= 3 distinct points")
    # np.unique sorts rows lexicographically by (x, y) already.
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(chain_pts):
        chain: list[np.ndarray] = []
        for p in chain_pts:
            while len(chain) >= 2:
                o, a = chain[-2], chain[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) <= _CROSS_TOL:
                    chain.pop()
                else:
                    break
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if hull.shape[0] < 3:
        raise DegenerateGeometryError("input points are collinear")
    # Rotate so the ring starts at the lowest-then-leftmost vertex.
    start = np.lexsort((hull[:, 0], hull[:, 1]))[0]
    return np.roll(hull, -start, axis=0)


def shrink_polygon(outer: np.ndarray, t: float) -> np.ndarray:
    """Offset a convex CCW ring inward by ``t``.

    Each edge is translated along its inward normal and the polygon is
    successively clipped against the shifted half-planes, which yields the
    exact intersection even when edges vanish under the offset.

    Raises
    ------
    InfeasibleOffsetError
        If the intersection is empty (t exceeds the inradius).
    """
    outer = np.asarray(outer, dtype=float)
    if t <= 0:
        raise ConfigError("offset must be positive")
    poly = outer.copy()
    n = outer.shape[0]
    for k in range(n):
        p, q = outer[k], outer[(k + 1) % n]
        edge = q - p
        length = math.hypot(edge[0], edge[1])
        if length < 1e-14:
            continue
        # Inward normal of a CCW ring is the left normal of the edge.
        normal = np.array([-edge[1], edge[0]]) / length
        poly = _clip_half_plane(poly, p + t * normal, normal)
        if poly.shape[0] < 3:
            raise InfeasibleOffsetError(
                f"inward offset {t} leaves no interior (polygon too thin)"
            )
    poly = _dedupe_ring(poly)
    if poly.shape[0] < 3 or polygon_area(poly) <= _CROSS_TOL:
        raise InfeasibleOffsetError(
            f"inward offset {t} leaves no interior (polygon too thin)"
        )
    return poly


def _clip_half_plane(poly: np.ndarray, origin: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Keep the part of ``poly`` with (x - origin) . normal >= 0."""
    if poly.shape[0] == 0:
        return poly
    d = (poly - origin) @ normal
    out: list[np.ndarray] = []
    n = poly.shape[0]
    for i in range(n):
        j = (i + 1) % n
        if d[i] >= -_CROSS_TOL:
            out.append(poly[i])
        if (d[i] > _CROSS_TOL) != (d[j] > _CROSS_TOL) and abs(d[i] - d[j]) > _CROSS_TOL:
            s = d[i] / (d[i] - d[j])
            if 0.0 < s < 1.0:
                out.append(poly[i] + s * (poly[j] - poly[i]))
    return np.array(out) if out else np.empty((0, 2))


def _dedupe_ring(ring: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Drop consecutive duplicates and collinear vertices from a ring."""
    if ring.shape[0] < 3:
        return ring
    keep = []
    n = ring.shape[0]
    for i in range(n):
        if not keep or np.hypot(*(ring[i] - keep[-1])) > tol:
            keep.append(ring[i])
    if len(keep) > 1 and np.hypot(*(keep[0] - keep[-1])) <= tol:
        keep.pop()
    ring = np.array(keep)
    if ring.shape[0] < 3:
        return ring
    # Remove collinear vertices.
    prev = np.roll(ring, 1, axis=0)
    nxt = np.roll(ring, -1, axis=0)
    cross = (ring[:, 0] - prev[:, 0]) * (nxt[:, 1] - prev[:, 1]) - (
        ring[:, 1] - prev[:, 1]
    ) * (nxt[:, 0] - prev[:, 0])
    return ring[np.abs(cross) > _CROSS_TOL]


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.hypot(*(p - a)))
    s = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.hypot(*(p - (a + s * ab))))


def _shift_ring(ring: np.ndarray) -> np.ndarray:
    return np.vstack([ring[1:], ring[:1]])


def _polygons_intersect(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis overlap test for two convex rings (touching counts)."""
    edges = np.vstack([_shift_ring(a) - a, _shift_ring(b) - b])
    axes = np.column_stack([-edges[:, 1], edges[:, 0]])
    pa = axes @ a.T  # (n_axes, len(a))
    pb = axes @ b.T
    separated = (pa.max(axis=1) < pb.min(axis=1)) | (pb.max(axis=1) < pa.min(axis=1))
    return not bool(separated.any())


def _points_segments_distance(points: np.ndarray, ring: np.ndarray) -> float:
    """Min distance from any of ``points`` to the boundary segments of ``ring``."""
    a = ring
    b = _shift_ring(ring)
    ab = b - a  # (m, 2)
    denom = np.einsum("ij,ij->i", ab, ab)
    denom[denom == 0.0] = 1.0
    ap = points[:, None, :] - a[None, :, :]  # (k, m, 2)
    s = np.clip(np.einsum("kmj,mj->km", ap, ab) / denom, 0.0, 1.0)
    closest = a[None, :, :] + s[:, :, None] * ab[None, :, :]
    d = np.linalg.norm(points[:, None, :] - closest, axis=2)
    return float(d.min())


def convex_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Exact minimum distance between two convex rings (0 if they intersect)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if _polygons_intersect(a, b):
        return 0.0
    return min(_points_segments_distance(a, b), _points_segments_distance(b, a))


def polygons_conflict(a: np.ndarray, b: np.ndarray, gap: float) -> bool:
    """True iff the rings intersect or their distance falls below ``gap``.

    Distance exactly equal to ``gap`` does not conflict.
    """
    if _polygons_intersect(a, b):
        return True
    return convex_distance(a, b) < gap


def _sample_shape(rng: np.random.Generator, config: GeometryConfig) -> np.ndarray:
    """Hull of random points on a random origin-centered ellipse.

    Draw order (fixed for reproducibility): semi-axis a, semi-axis b,
    rotation, point angles. Position is drawn separately so one shape can be
    tried at several locations.
    """
    lo, hi = config.semi_axis_range
    a = rng.uniform(lo, hi)
    b = rng.uniform(lo, hi)
    theta = rng.uniform(0.0, math.pi)
    angles = rng.uniform(0.0, 2.0 * math.pi, size=config.points_per_ellipse)

    ct, st = math.cos(theta), math.sin(theta)
    ex = a * np.cos(angles)
    ey = b * np.sin(angles)
    return np.column_stack([ct * ex - st * ey, st * ex + ct * ey])


def _finish_aggregate(outer: np.ndarray, inner: np.ndarray) -> AggregatePolygon:
    return AggregatePolygon(
        outer_vertices=outer,
        inner_vertices=inner,
        centroid=polygon_centroid(outer),
        area_outer=polygon_area(outer),
        area_inner=polygon_area(inner),
    )


def sample_aggregate(rng: np.random.Generator, config: GeometryConfig) -> AggregatePolygon:
    """Draw one aggregate candidate: hull of random ellipse points, placed at
    a uniform random center.

    Raises
    ------
    CandidateRejected
        If the hull is degenerate or the inward offset is infeasible.
    """
    pts = _sample_shape(rng, config)
    L = config.domain_length
    pts = pts + np.array([rng.uniform(0.0, L), rng.uniform(0.0, L)])
    try:
        outer = convex_hull(pts)
        inner = shrink_polygon(outer, config.itz_thickness)
    except (DegenerateGeometryError, InfeasibleOffsetError) as exc:
        raise CandidateRejected(str(exc)) from exc
    return _finish_aggregate(outer, inner)


def _inside_domain(ring: np.ndarray, L: float, margin: float) -> bool:
    return bool(
        (ring[:, 0] >= margin).all()
        and (ring[:, 1] >= margin).all()
        and (ring[:, 0] <= L - margin).all()
        and (ring[:, 1] <= L - margin).all()
    )


# Placement tries per sampled shape and shapes drawn per batch. Shapes within
# a batch are placed largest first: graded placement packs far denser than
# plain rejection sampling, which jams below 40% at the default gap.
_PLACEMENT_TRIES = 256
_SHAPE_BATCH = 64


def generate_mesostructure(config: GeometryConfig) -> Mesostructure:
    """Pack sampled aggregates until the target fraction is met.

    Shapes are drawn in batches and placed in descending size order, each at
    up to a few hundred uniform random positions. A placement is accepted
    iff it stays ``min_gap`` clear of the domain boundary and of every
    accepted aggregate and does not push the achieved fraction past
    ``target + vf_tolerance``. Accepted geometry is never rescaled, which
    preserves the sampled size distribution.

    Raises
    ------
    PartialPackingError
        If ``max_placement_attempts`` placement tries pass without reaching
        ``target - vf_tolerance``.
    """
    config.validate()
    rng = make_rng(config.seed)
    L = config.domain_length
    area_domain = L * L
    target = config.target_volume_fraction
    tol = config.vf_tolerance
    gap = config.min_gap

    meso = Mesostructure(config=config)
    centers = np.empty((0, 2))  # vertex-mean centers of accepted rings
    radii = np.empty(0)  # bounding-circle radii around those centers
    accepted_area = 0.0
    attempts = 0
    pending: list[tuple[float, np.ndarray]] = []

    while accepted_area / area_domain < target - tol:
        if attempts >= config.max_placement_attempts:
            raise PartialPackingError(
                achieved_vf=accepted_area / area_domain,
                placed=len(meso.aggregates),
                attempts=attempts,
            )
        if not pending:
            batch = []
            for _ in range(_SHAPE_BATCH):
                pts = _sample_shape(rng, config)
                try:
                    hull = convex_hull(pts - pts.mean(axis=0))
                except DegenerateGeometryError:
                    continue
                batch.append((polygon_area(hull), hull))
            # Largest first; stable order keeps the run deterministic.
            batch.sort(key=lambda item: -item[0])
            pending = batch[::-1]  # pop() takes from the end = largest
        area, hull = pending.pop()
        if (accepted_area + area) / area_domain > target + tol:
            continue  # overshoot: reject the candidate, never rescale it
        radius = float(np.linalg.norm(hull, axis=1).max())
        bbox_lo = hull.min(axis=0)
        bbox_hi = hull.max(axis=0)
        for _ in range(_PLACEMENT_TRIES):
            attempts += 1
            center = np.array([rng.uniform(0.0, L), rng.uniform(0.0, L)])
            if (
                center[0] + bbox_lo[0] < gap
                or center[1] + bbox_lo[1] < gap
                or center[0] + bbox_hi[0] > L - gap
                or center[1] + bbox_hi[1] > L - gap
            ):
                continue
            close = np.flatnonzero(
                np.hypot(*(centers - center).T) < radius + radii + gap
            )
            outer = hull + center
            if any(
                polygons_conflict(outer, meso.aggregates[k].outer_vertices, gap)
                for k in close
            ):
                continue
            try:
                inner = shrink_polygon(outer, config.itz_thickness)
            except InfeasibleOffsetError:
                break  # too thin at any position; discard the shape
            meso.aggregates.append(_finish_aggregate(outer, inner))
            centers = np.vstack([centers, center[None, :]])
            radii = np.append(radii, radius)
            accepted_area += area
            break
    return meso


def serialize_mesostructure(meso: Mesostructure) -> str:
    """Lossless JSON text for a mesostructure (full double precision)."""
    doc = {
        "domain_length_mm": meso.config.domain_length,
        "itz_thickness_mm": meso.config.itz_thickness,
        "seed": meso.config.seed,
        "aggregates": [
            {
                "outer": agg.outer_vertices.tolist(),
                "inner": agg.inner_vertices.tolist(),
            }
            for agg in meso.aggregates
        ],
        "achieved_vf": meso.achieved_volume_fraction,
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def parse_mesostructure(text: str) -> Mesostructure:
    """Inverse of :func:`serialize_mesostructure`.

    Raises
    ------
    ParseError
        On malformed JSON (with line context) or missing/ill-typed fields.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    for key in ("domain_length_mm", "itz_thickness_mm", "seed", "aggregates", "achieved_vf"):
        if key not in doc:
            raise ParseError(f"missing field '{key}'")
    config = GeometryConfig(
        domain_length=float(doc["domain_length_mm"]),
        itz_thickness=float(doc["itz_thickness_mm"]),
        seed=int(doc["seed"]),
    )
    meso = Mesostructure(config=config)
    for idx, entry in enumerate(doc["aggregates"]):
        try:
            outer = np.asarray(entry["outer"], dtype=float)
            inner = np.asarray(entry["inner"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"aggregate {idx}: bad ring data ({exc})") from exc
        if outer.ndim != 2 or outer.shape[1] != 2 or inner.ndim != 2 or inner.shape[1] != 2:
            raise ParseError(f"aggregate {idx}: rings must be lists of [x, y] pairs")
        meso.aggregates.append(
            AggregatePolygon(
                outer_vertices=outer,
                inner_vertices=inner,
                centroid=polygon_centroid(outer),
                area_outer=polygon_area(outer),
                area_inner=polygon_area(inner),
            )
        )
    return meso


def config_to_dict(config: GeometryConfig) -> dict:
    d = asdict(config)
    d["semi_axis_range"] = list(config.semi_axis_range)
    return d


def config_from_dict(d: dict) -> GeometryConfig:
    base = GeometryConfig()
    kwargs = {}
    for key in config_to_dict(base):
        if key in d:
            kwargs[key] = d[key]
    unknown = set(d) - set(config_to_dict(base))
    if unknown:
        raise ConfigError(f"unknown geometry config keys: {sorted(unknown)}")
    if "semi_axis_range" in kwargs:
        kwargs["semi_axis_range"] = tuple(float(v) for v in kwargs["semi_axis_range"])
    cfg = GeometryConfig(**kwargs)
    cfg.validate()
    return cfg
