"""Simplicial meshes of regions about the origin and their shape constants.

A Triangulation stores vertex coordinates in one array and simplexes as ordered
vertex-id tuples. Simplexes that contain the origin always list the origin
vertex first, which is what the origin shape constant relies on.
"""

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from tqdm import tqdm

from ..errors import DegenerateSimplexError, InvalidRegionError, OutOfRegionError

MESH_FORMAT_VERSION = 1
CONDITION_LIMIT = 1e12
LOCATE_TOL = 1e-10
RING_TOL = 1e-12
MIN_FAN_SEGMENTS = 16
FAN_RADIUS_FRACTION = 0.5


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo_1, hi_1] x ... x [lo_n, hi_n]."""

    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or not self.lo:
            raise InvalidRegionError(f"Box bounds have mismatched lengths: {self.lo}, {self.hi}")
        if any(not lo < hi for lo, hi in zip(self.lo, self.hi)):
            raise InvalidRegionError(f"Box bounds must satisfy lo < hi: {self.lo}, {self.hi}")

    @classmethod
    def from_flat(cls, bounds: Sequence[float]) -> 'Box':
        """Build a box from a flat list lo1, hi1, lo2, hi2, ..."""
        if len(bounds) % 2 or not bounds:
            raise InvalidRegionError(f"Expected an even number of bounds, got {list(bounds)}")
        return cls(tuple(float(b) for b in bounds[0::2]), tuple(float(b) for b in bounds[1::2]))

    @classmethod
    def symmetric(cls, half_width: float, n: int) -> 'Box':
        """The cube [-half_width, half_width]^n."""
        return cls((-half_width,) * n, (half_width,) * n)

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.lo, dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.hi, dtype=float)

    def flat(self) -> List[float]:
        return [b for pair in zip(self.lo, self.hi) for b in pair]

    def origin_margin(self) -> float:
        """Distance from the origin to the nearest face of the box."""
        return float(min(min(-lo for lo in self.lo), min(self.hi)))

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(count, self.n))


@dataclass(frozen=True)
class Vertex:
    id: int
    coords: Tuple[float, ...]


@dataclass(frozen=True)
class Simplex:
    """Ordered vertex ids; when contains_origin is set the origin comes first."""

    vertex_ids: Tuple[int, ...]
    contains_origin: bool = False


@dataclass(frozen=True)
class Barycentric:
    simplex_id: int
    lambdas: np.ndarray


@dataclass(frozen=True)
class Hole:
    """Polygonal hole inscribed in the closed ball of radius epsilon."""

    epsilon: float
    segments: int


@dataclass
class ValidationReport:
    """Violations found by Triangulation.validate; empty lists mean a valid mesh."""

    affine_failures: List[int] = field(default_factory=list)
    origin_ordering: List[int] = field(default_factory=list)
    coverage_gaps: List[Tuple[float, ...]] = field(default_factory=list)
    face_violations: List[Tuple[int, int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.affine_failures or self.origin_ordering
                    or self.coverage_gaps or self.face_violations)

    def to_dict(self) -> Dict:
        return {
            'affine_failures': self.affine_failures,
            'origin_ordering': self.origin_ordering,
            'coverage_gaps': [list(p) for p in self.coverage_gaps],
            'face_violations': [list(v) for v in self.face_violations],
            'ok': self.ok,
        }


def vertex_matrix(coords: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return X (row j-1 is x_j - x_0) and its inverse for simplex vertex coords.

    Raises DegenerateSimplexError when the condition number of X exceeds 1e12.
    """
    coords = np.asarray(coords, dtype=float)
    diffs = coords[1:] - coords[0]
    cond = np.linalg.cond(diffs) if np.all(np.isfinite(diffs)) else np.inf
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise DegenerateSimplexError(f"Degenerate simplex (condition number {cond:.3g}): {coords.tolist()}")
    return diffs, linalg.inv(diffs)


def shape_constant_origin(coords: np.ndarray, j: int) -> float:
    """Shape constant of a simplex whose first vertex is the origin.

    c_j = n |x_j - x_0| (max_k |x_k - x_0| + |x_j - x_0|) in the 2-norm, so
    c_0 = 0 and the error bound vanishes at the origin.
    """
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[1]
    dist = np.linalg.norm(coords - coords[0], axis=1)
    return float(n * dist[j] * (dist[1:].max() + dist[j]))


def shape_constant(coords: np.ndarray, j: int) -> float:
    """Shape constant c_j = n max_v |x_j - x_v|_2^2 of a general simplex."""
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[1]
    return float(n * np.max(np.sum((coords - coords[j]) ** 2, axis=1)))


class Triangulation:
    """
    A triangulation of a box about the origin, optionally with a hole around it.

    Attributes:
        points (np.ndarray): Vertex coordinates, one row per vertex id.
        simplexes (List[Simplex]): Simplexes with origin-first ordering.
        bounding_box (Box): The triangulated region (before removing the hole).
        hole (Optional[Hole]): Hole inscribed in the epsilon-ball, for annulus meshes.
    """

    def __init__(self, points, simplexes: Sequence[Simplex], bounding_box: Box,
                 hole: Optional[Hole] = None):
        self.points = np.array(points, dtype=float)
        self.points.setflags(write=False)
        self.simplexes = list(simplexes)
        self.bounding_box = bounding_box
        self.hole = hole
        self.cells = np.array([s.vertex_ids for s in self.simplexes], dtype=int)
        self._inverse_cache: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        self._transforms = None

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def num_vertices(self) -> int:
        return self.points.shape[0]

    @property
    def num_simplexes(self) -> int:
        return len(self.simplexes)

    @property
    def vertices(self) -> List[Vertex]:
        return [Vertex(i, tuple(p)) for i, p in enumerate(self.points)]

    def origin_vertex(self) -> Optional[int]:
        """Id of the vertex at the origin, if any."""
        hits = np.flatnonzero(np.all(self.points == 0.0, axis=1))
        return int(hits[0]) if hits.size else None

    def simplex_coords(self, simplex_id: int) -> np.ndarray:
        return self.points[self.cells[simplex_id]]

    def vertex_matrix(self, simplex_id: int) -> Tuple[np.ndarray, np.ndarray]:
        """X and X^-1 of one simplex, cached per simplex id."""
        if simplex_id not in self._inverse_cache:
            self._inverse_cache[simplex_id] = vertex_matrix(self.simplex_coords(simplex_id))
        return self._inverse_cache[simplex_id]

    def shape_constants(self, simplex_id: int, origin_rule: bool = True) -> np.ndarray:
        """Per-vertex shape constants; origin simplexes use the origin form when origin_rule."""
        coords = self.simplex_coords(simplex_id)
        use_origin = origin_rule and self.simplexes[simplex_id].contains_origin
        const = shape_constant_origin if use_origin else shape_constant
        return np.array([const(coords, j) for j in range(self.n + 1)])

    def simplex_box(self, simplex_id: int) -> Box:
        """Axis-aligned bounding box of one simplex."""
        coords = self.simplex_coords(simplex_id)
        return Box(tuple(coords.min(axis=0)), tuple(coords.max(axis=0)))

    def volumes(self) -> np.ndarray:
        diffs = self.points[self.cells[:, 1:]] - self.points[self.cells[:, :1]]
        return np.abs(np.linalg.det(diffs)) / math.factorial(self.n)

    def region_volume(self) -> float:
        """Measure of the triangulated region: the box minus the hole polygon."""
        volume = self.bounding_box.volume()
        if self.hole is not None:
            if self.n == 1:
                volume -= 2.0 * self.hole.epsilon
            else:
                k = self.hole.segments
                volume -= 0.5 * k * self.hole.epsilon ** 2 * math.sin(2.0 * math.pi / k)
        return volume

    def _barycentric_transforms(self):
        if self._transforms is None:
            diffs = self.points[self.cells[:, 1:]] - self.points[self.cells[:, :1]]
            with np.errstate(all='ignore'):
                conds = np.linalg.cond(diffs)
            good = np.isfinite(conds) & (conds <= CONDITION_LIMIT)
            inv_t = np.full_like(diffs, np.nan)
            if good.any():
                inv_t[good] = np.linalg.inv(diffs[good]).swapaxes(1, 2)
            self._transforms = (self.points[self.cells[:, 0]], inv_t)
        return self._transforms

    def barycentric_all(self, x: np.ndarray) -> np.ndarray:
        """Barycentric coordinates of x in every simplex, shape (num_simplexes, n+1)."""
        origins, inv_t = self._barycentric_transforms()
        rest = np.einsum('sij,sj->si', inv_t, np.asarray(x, dtype=float) - origins)
        return np.concatenate([1.0 - rest.sum(axis=1, keepdims=True), rest], axis=1)

    def locate_many(self, points: np.ndarray, chunk: int = 64) -> Tuple[np.ndarray, np.ndarray]:
        """Locate many points at once.

        Returns simplex ids (-1 where the point is outside) and barycentric
        coordinates (NaN rows where outside). Ties go to the lowest simplex id.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        origins, inv_t = self._barycentric_transforms()
        ids = np.full(points.shape[0], -1, dtype=int)
        lambdas = np.full((points.shape[0], self.n + 1), np.nan)
        for start in range(0, points.shape[0], chunk):
            block = points[start:start + chunk]
            rest = np.einsum('sij,psj->psi', inv_t, block[:, None, :] - origins[None, :, :])
            lam = np.concatenate([1.0 - rest.sum(axis=2, keepdims=True), rest], axis=2)
            with np.errstate(invalid='ignore'):
                inside = np.nan_to_num(lam.min(axis=2), nan=-np.inf) >= -LOCATE_TOL
            found = inside.any(axis=1)
            first = np.argmax(inside, axis=1)
            rows = np.flatnonzero(found)
            ids[start + rows] = first[rows]
            lambdas[start + rows] = lam[rows, first[rows]]
        return ids, lambdas

    def locate(self, x: np.ndarray) -> Barycentric:
        """Barycentric coordinates of x in the lowest-id simplex containing it."""
        ids, lambdas = self.locate_many(np.asarray(x, dtype=float)[None, :])
        if ids[0] < 0:
            raise OutOfRegionError(f"Point {np.asarray(x).tolist()} is outside the triangulated region")
        return Barycentric(int(ids[0]), lambdas[0])

    def max_shape_constant(self) -> float:
        """Largest shape constant over the mesh (origin rule on origin simplexes)."""
        if not self.num_simplexes:
            return 0.0
        coords = self.points[self.cells]
        sq = np.sum((coords[:, :, None, :] - coords[:, None, :, :]) ** 2, axis=3)
        general = self.n * sq.max(axis=(1, 2))
        dist = np.linalg.norm(coords - coords[:, :1], axis=2)
        origin = self.n * np.max(dist * (dist[:, 1:].max(axis=1, keepdims=True) + dist), axis=1)
        mask = np.array([s.contains_origin for s in self.simplexes])
        return float(np.where(mask, origin, general).max())

    def stats(self) -> Dict:
        """Simplex and vertex counts for reports."""
        return {
            'num_simplexes': self.num_simplexes,
            'num_vertices': self.num_vertices,
            'num_origin_simplexes': sum(1 for s in self.simplexes if s.contains_origin),
            'max_shape_constant': self.max_shape_constant(),
        }

    def validate(self, num_samples: int = 2000, seed: int = 0) -> ValidationReport:
        """Check affine independence, origin ordering, coverage and face-to-face intersections."""
        report = ValidationReport()
        origin_id = self.origin_vertex()

        for sid, simplex in enumerate(self.simplexes):
            if len(set(simplex.vertex_ids)) != self.n + 1:
                report.affine_failures.append(sid)
                continue
            try:
                vertex_matrix(self.simplex_coords(sid))
            except DegenerateSimplexError:
                report.affine_failures.append(sid)
            has_origin = origin_id is not None and origin_id in simplex.vertex_ids
            if has_origin != simplex.contains_origin or (
                    simplex.contains_origin and simplex.vertex_ids[0] != origin_id):
                report.origin_ordering.append(sid)

        rng = np.random.default_rng(seed)
        samples = self.bounding_box.sample(rng, num_samples)
        if self.hole is not None:
            samples = samples[np.linalg.norm(samples, axis=1) > self.hole.epsilon]
        ids, _ = self.locate_many(samples)
        report.coverage_gaps.extend(tuple(p) for p in samples[ids < 0])

        report.face_violations.extend(self._face_violations(set(report.affine_failures)))
        total = float(self.volumes().sum())
        if abs(total - self.region_volume()) > 1e-9 * max(1.0, self.region_volume()):
            report.face_violations.append((-1, -1, f"total volume {total:.12g} differs from region volume"))
        return report

    def _face_violations(self, skip: set) -> List[Tuple[int, int, str]]:
        """Pairwise checks on simplexes whose bounding boxes overlap."""
        violations = []
        coords = self.points[self.cells]
        lows, highs = coords.min(axis=1), coords.max(axis=1)
        centroids = coords.mean(axis=1)
        for sid in range(self.num_simplexes):
            if sid in skip:
                continue
            overlap = np.all(lows[sid] <= highs + LOCATE_TOL, axis=1) & np.all(
                highs[sid] >= lows - LOCATE_TOL, axis=1)
            overlap[:sid + 1] = False
            for other in np.flatnonzero(overlap):
                if other in skip:
                    continue
                reason = self._pair_violation(sid, int(other), centroids)
                if reason:
                    violations.append((sid, int(other), reason))
        return violations

    def _pair_violation(self, first: int, second: int, centroids: np.ndarray) -> Optional[str]:
        for a, b in ((first, second), (second, first)):
            lam = self._lambdas_in(b, centroids[a])
            if lam.min() > LOCATE_TOL:
                return "overlapping interiors"
            shared = set(self.cells[b])
            for vid in self.cells[a]:
                if vid in shared:
                    continue
                if self._lambdas_in(b, self.points[vid]).min() >= -LOCATE_TOL:
                    return f"vertex {int(vid)} lies on a non-vertex point of simplex {b}"
        return None

    def _lambdas_in(self, simplex_id: int, x: np.ndarray) -> np.ndarray:
        origins, inv_t = self._barycentric_transforms()
        rest = inv_t[simplex_id] @ (x - origins[simplex_id])
        return np.concatenate([[1.0 - rest.sum()], rest])

    def to_document(self) -> Dict:
        """Versioned JSON-ready mesh document."""
        doc = {
            'version': MESH_FORMAT_VERSION,
            'n': self.n,
            'box': {'lo': list(self.bounding_box.lo), 'hi': list(self.bounding_box.hi)},
            'vertices': self.points.tolist(),
            'simplexes': [{'verts': list(s.vertex_ids), 'origin': s.contains_origin}
                          for s in self.simplexes],
        }
        if self.hole is not None:
            doc['hole'] = {'epsilon': self.hole.epsilon, 'segments': self.hole.segments}
        return doc

    @classmethod
    def from_document(cls, doc: Dict) -> 'Triangulation':
        """Rebuild a triangulation from to_document output."""
        if doc.get('version') != MESH_FORMAT_VERSION:
            raise InvalidRegionError(f"Unsupported mesh document version: {doc.get('version')}")
        points = np.asarray(doc['vertices'], dtype=float).reshape(-1, int(doc['n']))
        simplexes = [Simplex(tuple(int(v) for v in s['verts']), bool(s['origin']))
                     for s in doc['simplexes']]
        box = Box(tuple(doc['box']['lo']), tuple(doc['box']['hi']))
        hole = Hole(float(doc['hole']['epsilon']), int(doc['hole']['segments'])) if 'hole' in doc else None
        return cls(points, simplexes, box, hole)


def _origin_first(vertex_ids: Sequence[int], origin_id: Optional[int]) -> Simplex:
    if origin_id is not None and origin_id in vertex_ids:
        rest = tuple(v for v in vertex_ids if v != origin_id)
        return Simplex((origin_id,) + rest, True)
    return Simplex(tuple(vertex_ids), False)


def _grid_axes(box: Box, divisions: Sequence[int]) -> Tuple[List[np.ndarray], List[int]]:
    """Grid coordinates per axis and the index of the zero node on each axis."""
    if not np.all(box.lower < 0.0) or not np.all(box.upper > 0.0):
        raise InvalidRegionError(f"Box {box.flat()} must contain the origin strictly in its interior")
    axes, zero_index = [], []
    for lo, hi, count in zip(box.lo, box.hi, divisions):
        if count < 1:
            raise InvalidRegionError(f"Divisions must be positive, got {count}")
        ticks = np.linspace(lo, hi, count + 1)
        step = (hi - lo) / count
        i0 = int(round(-lo / step))
        if abs(ticks[i0]) > 1e-9 * step:
            raise InvalidRegionError(
                f"Grid lines of [{lo}, {hi}] with {count} divisions do not pass through 0")
        ticks[i0] = 0.0
        axes.append(ticks)
        zero_index.append(i0)
    return axes, zero_index


def _normalize_divisions(divisions, n: int) -> Tuple[int, ...]:
    if isinstance(divisions, (int, np.integer)):
        return (int(divisions),) * n
    divisions = tuple(int(d) for d in divisions)
    if len(divisions) == 1:
        return divisions * n
    if len(divisions) != n:
        raise InvalidRegionError(f"Expected {n} division counts, got {divisions}")
    return divisions


def _kuhn_cells(divisions: Sequence[int], zero_index: Sequence[int]):
    """Yield grid-index chains of every Kuhn simplex.

    Each axis except the first is mirrored on the negative side of the origin
    and the first axis on the positive side, so every cell touching the origin
    sees it at local corner e_0 and no main diagonal runs through the origin.
    """
    n = len(divisions)
    perms = list(itertools.permutations(range(n)))
    for cell in itertools.product(*(range(d) for d in divisions)):
        flips = [cell[0] >= zero_index[0]] + [cell[k] < zero_index[k] for k in range(1, n)]
        for perm in perms:
            local = [0] * n
            chain = []
            for step in range(n + 1):
                if step:
                    local[perm[step - 1]] = 1
                chain.append(tuple(c + (1 - y if f else y) for c, y, f in zip(cell, local, flips)))
            yield chain


def build_kuhn_grid(box: Box, divisions) -> Triangulation:
    """Reflected Kuhn (Freudenthal) triangulation of a box with grid lines through 0."""
    divisions = _normalize_divisions(divisions, box.n)
    axes, zero_index = _grid_axes(box, divisions)
    shape = tuple(d + 1 for d in divisions)
    points = np.array([[axes[k][i] for k, i in enumerate(idx)] for idx in np.ndindex(*shape)])
    origin_id = int(np.ravel_multi_index(tuple(zero_index), shape))
    simplexes = [
        _origin_first([int(np.ravel_multi_index(node, shape)) for node in chain], origin_id)
        for chain in _kuhn_cells(divisions, zero_index)
    ]
    return Triangulation(points, simplexes, box)


def build_annulus(box: Box, divisions, epsilon: float, boundary_segments: int = 16) -> Triangulation:
    """Triangulate the box minus a hole inscribed in the closed epsilon-ball.

    The Kuhn grid is kept outside a core box of whole cells around the origin;
    the gap between the core boundary and the regular polygon inscribed in the
    epsilon-sphere is filled by zipping the two rings by angle.
    """
    n = box.n
    if n not in (1, 2):
        raise InvalidRegionError(f"Annulus meshes are built for n = 1 or n = 2, got n = {n}")
    if not epsilon > 0.0:
        raise InvalidRegionError(f"Hole radius must be positive, got {epsilon}")
    if not epsilon < 0.5 * box.origin_margin():
        raise InvalidRegionError(
            f"Hole radius {epsilon} must be below half the box margin {box.origin_margin()}")
    if n == 2 and boundary_segments < 8:
        raise InvalidRegionError(f"At least 8 boundary segments are needed, got {boundary_segments}")

    divisions = _normalize_divisions(divisions, n)
    base = build_kuhn_grid(box, divisions)
    if n == 1:
        return _annulus_1d(base, epsilon)
    return _annulus_2d(base, divisions, epsilon, boundary_segments)


def build_origin_fan(box: Box, divisions, radius: Optional[float] = None, segments: int = 32) -> Triangulation:
    """Kuhn grid of a planar box whose cells about the origin are replaced by a polygonal fan.

    The fan triangles (0, r_k, r_k+1) sit on the regular polygon of the given
    radius, and the band between the polygon and the grid is filled as in
    build_annulus. The radius defaults to half the smallest grid step.
    """
    if box.n != 2:
        raise InvalidRegionError(f"Origin fans are built for n = 2, got n = {box.n}")
    if segments < MIN_FAN_SEGMENTS:
        raise InvalidRegionError(f"At least {MIN_FAN_SEGMENTS} fan segments are needed, got {segments}")
    divisions = _normalize_divisions(divisions, 2)
    if radius is None:
        radius = FAN_RADIUS_FRACTION * float(np.min((box.upper - box.lower) / np.asarray(divisions)))

    ring = build_annulus(box, divisions, radius, segments)
    origin_id = ring.num_vertices
    inner = list(range(origin_id - segments, origin_id))
    points = np.vstack([ring.points, np.zeros((1, 2))])
    fan = [Simplex((origin_id, inner[k], inner[(k + 1) % segments]), True) for k in range(segments)]
    return Triangulation(points, ring.simplexes + fan, box)


def _annulus_1d(base: Triangulation, epsilon: float) -> Triangulation:
    grid = np.sort(base.points[:, 0])
    step = float(np.min(np.diff(grid)))
    # nodes closer than a quarter step to the hole edge would make slivers
    kept = [x for x in grid if abs(x) > epsilon + 0.25 * step]
    points = np.array(sorted(kept + [-epsilon, epsilon]))[:, None]
    simplexes = []
    for i in range(len(points) - 1):
        left, right = points[i, 0], points[i + 1, 0]
        if left == -epsilon and right == epsilon:
            continue
        simplexes.append(Simplex((i, i + 1)))
    return Triangulation(points, simplexes, base.bounding_box, Hole(epsilon, 2))


def _annulus_2d(base: Triangulation, divisions, epsilon: float, segments: int) -> Triangulation:
    box = base.bounding_box
    steps = (box.upper - box.lower) / np.asarray(divisions)
    core = np.maximum(1, np.ceil(1.5 * epsilon / steps)) * steps
    inside_core = np.all(np.abs(base.points) <= core + 1e-12 * steps, axis=1)
    strictly_inside = np.all(np.abs(base.points) < core - 1e-12 * steps, axis=1)

    kept = [s for s in base.simplexes if not inside_core[list(s.vertex_ids)].all()]
    old_ids = sorted({v for s in kept for v in s.vertex_ids} | set(np.flatnonzero(inside_core & ~strictly_inside)))
    remap = {old: new for new, old in enumerate(old_ids)}
    points = [base.points[old] for old in old_ids]
    simplexes = [Simplex(tuple(remap[v] for v in s.vertex_ids)) for s in kept]

    outer = [remap[v] for v in np.flatnonzero(inside_core & ~strictly_inside)]
    angles = np.array([math.atan2(points[v][1], points[v][0]) % (2.0 * math.pi) for v in outer])
    outer = [outer[i] for i in np.argsort(angles, kind='stable')]
    outer_angles = np.sort(angles)

    inner_angles = 2.0 * math.pi * np.arange(segments) / segments
    inner = list(range(len(points), len(points) + segments))
    points.extend(epsilon * np.column_stack([np.cos(inner_angles), np.sin(inner_angles)]))
    points = np.asarray(points)

    simplexes.extend(_zip_rings(points, outer, outer_angles, inner, inner_angles))
    return Triangulation(points, simplexes, box, Hole(epsilon, segments))


def _zip_rings(points, outer, outer_angles, inner, inner_angles) -> List[Simplex]:
    """Triangulate the band between two star-shaped rings sorted by angle."""
    def angle(ring_angles, i):
        return ring_angles[i % len(ring_angles)] + 2.0 * math.pi * (i // len(ring_angles))

    triangles = []
    i = j = 0
    while i < len(outer) or j < len(inner):
        advance_outer = j >= len(inner) or (
            i < len(outer) and angle(outer_angles, i + 1) <= angle(inner_angles, j + 1))
        a, b = outer[i % len(outer)], inner[j % len(inner)]
        if advance_outer:
            tri = (a, outer[(i + 1) % len(outer)], b)
            i += 1
        else:
            tri = (a, inner[(j + 1) % len(inner)], b)
            j += 1
        u, v = points[tri[1]] - points[tri[0]], points[tri[2]] - points[tri[0]]
        area = u[0] * v[1] - u[1] * v[0]
        if abs(area) < 1e-14:
            raise InvalidRegionError(f"Degenerate triangle while filling the annulus band: {tri}")
        triangles.append(Simplex(tri))
    return triangles


@lru_cache(maxsize=None)
def _freudenthal_children(n: int) -> Tuple[Tuple[Tuple[int, int], ...], ...]:
    """Children of the doubled Kuhn simplex as (a, b) pairs of parent vertex positions.

    A lattice point y of the doubled simplex (2 >= y_0 >= ... >= y_{n-1} >= 0) is
    the midpoint of parent vertices a = #{y_k = 2} and b = #{y_k >= 1}.
    """
    def inside(y):
        return y[0] <= 2 and y[-1] >= 0 and all(y[k] >= y[k + 1] for k in range(n - 1))

    children = []
    for base in itertools.product((0, 1), repeat=n):
        for perm in itertools.permutations(range(n)):
            chain = [list(base)]
            for axis in perm:
                nxt = list(chain[-1])
                nxt[axis] += 1
                chain.append(nxt)
            if all(inside(y) for y in chain):
                children.append(tuple((sum(v == 2 for v in y), sum(v >= 1 for v in y)) for y in chain))
    return tuple(children)


def refine(tri: Triangulation, progress_bar: bool = False) -> Triangulation:
    """Uniform Freudenthal subdivision of every simplex into 2^n children.

    Vertex ids of the parent are kept. Simplexes are subdivided in global
    vertex-id order so shared faces are split identically. Midpoints of hole
    ring edges are pushed back onto the epsilon-sphere, doubling the ring.
    """
    points = [p for p in tri.points]
    midpoints: Dict[Tuple[int, int], int] = {}
    on_ring = None
    if tri.hole is not None:
        on_ring = np.abs(np.linalg.norm(tri.points, axis=1) - tri.hole.epsilon) <= RING_TOL

    def midpoint(a: int, b: int) -> int:
        if a == b:
            return a
        key = (min(a, b), max(a, b))
        if key not in midpoints:
            mid = 0.5 * (tri.points[a] + tri.points[b])
            if on_ring is not None and on_ring[a] and on_ring[b]:
                mid = tri.hole.epsilon * mid / np.linalg.norm(mid)
            midpoints[key] = len(points)
            points.append(mid)
        return midpoints[key]

    origin_id = tri.origin_vertex()
    children = _freudenthal_children(tri.n)
    simplexes = []
    for simplex in tqdm(tri.simplexes, desc="Refining simplexes", unit="simplex", disable=not progress_bar):
        ordered = sorted(simplex.vertex_ids)
        for child in children:
            vids = [midpoint(ordered[a], ordered[b]) for a, b in child]
            simplexes.append(_origin_first(vids, origin_id))

    hole = None
    if tri.hole is not None:
        segments = tri.hole.segments if tri.n == 1 else 2 * tri.hole.segments
        hole = Hole(tri.hole.epsilon, segments)
    return Triangulation(np.asarray(points), simplexes, tri.bounding_box, hole)
