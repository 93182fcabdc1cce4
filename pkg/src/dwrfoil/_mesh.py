"""Unstructured triangular meshes around an airfoil: generation, motion, repair and refinement."""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, FrozenSet, Iterable, NamedTuple, Optional, Set, Tuple, Union

import numpy as np
from scipy import sparse

from dwrfoil._geometry import (
    LOWER,
    UPPER,
    AirfoilShape,
    BezierCurve,
    ShapeCurves,
    bernstein_eval,
    chord_length_params,
    discrete_curvature,
    inverse_param,
)
from dwrfoil.exceptions import DomainError, MeshError, TanglingError

logger = logging.getLogger(__name__)

INTERIOR = 0
AIRFOIL = 1
FARFIELD = 2

DEFAULT_RADIUS = 35.0
DEFAULT_LAYERS = 24
DEFAULT_SMOOTHING_SWEEPS = 3
CAPTURE_SAMPLES = 32

_SQRT3_2 = math.sqrt(3.0) / 2.0

PathLike = Union[str, Path]
BoundaryMap = Dict[int, Tuple[int, float]]


def signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a, b, c = (vertices[triangles[:, k]] for k in range(3))
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


@dataclass(frozen=True, eq=False)
class MeshTopology:
    """Edge connectivity derived from the triangle list.

    Edges are oriented as they appear in their first triangle, so the right-hand
    normal of an edge points out of ``edge_triangles[e, 0]``.
    """

    edges: np.ndarray
    edge_triangles: np.ndarray
    triangle_edges: np.ndarray
    adjacency: sparse.csr_matrix

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.nonzero(self.edge_triangles[:, 1] < 0)[0]


def build_topology(triangles: np.ndarray, n_vertices: int) -> MeshTopology:
    n_triangles = len(triangles)
    half = triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    keys = np.sort(half, axis=1)
    _, first_index, inverse, counts = np.unique(
        keys, axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    inverse = inverse.reshape(-1)
    if counts.size and counts.max() > 2:
        bad = int(np.argmax(counts > 2))
        raise MeshError(f"edge {tuple(keys[first_index[bad]])} shared by {counts[bad]} triangles")

    owner = np.repeat(np.arange(n_triangles), 3)
    order = np.argsort(inverse, kind="stable")
    sorted_edges = inverse[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = sorted_edges[1:] != sorted_edges[:-1]
    edge_triangles = np.full((len(counts), 2), -1, dtype=int)
    edge_triangles[sorted_edges[first], 0] = owner[order[first]]
    edge_triangles[sorted_edges[~first], 1] = owner[order[~first]]
    edges = np.empty((len(counts), 2), dtype=int)
    edges[sorted_edges[first]] = half[order[first]]

    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    adjacency = sparse.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n_vertices, n_vertices)
    )
    return MeshTopology(edges, edge_triangles, inverse.reshape(n_triangles, 3), adjacency)


@dataclass(eq=False)
class UnstructuredMesh:
    """Counterclockwise triangles with per-vertex boundary markers.

    ``boundary_map`` sends every airfoil vertex to ``(curve_id, t)``; ``curves``
    holds the Bezier curves those parameters refer to, when known.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    markers: np.ndarray
    boundary_map: BoundaryMap
    curves: Optional[ShapeCurves] = None
    radius: Optional[float] = None
    _topology: Optional[MeshTopology] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.vertices = np.array(self.vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.array(self.triangles, dtype=int).reshape(-1, 3)
        self.markers = np.array(self.markers, dtype=int).reshape(-1)
        if len(self.markers) != len(self.vertices):
            raise MeshError(
                f"{len(self.markers)} markers for {len(self.vertices)} vertices"
            )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def topology(self) -> MeshTopology:
        if self._topology is None:
            self._topology = build_topology(self.triangles, self.n_vertices)
        return self._topology

    def signed_areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.triangles)

    def inverted_count(self) -> int:
        return int(np.count_nonzero(self.signed_areas() <= 0.0))

    def airfoil_vertices(self) -> np.ndarray:
        return np.nonzero(self.markers == AIRFOIL)[0]

    def with_vertices(self, vertices: np.ndarray, curves: Optional[ShapeCurves] = None) -> "UnstructuredMesh":
        """Same topology with moved vertices."""
        return UnstructuredMesh(
            vertices,
            self.triangles,
            self.markers,
            dict(self.boundary_map),
            curves if curves is not None else self.curves,
            self.radius,
            self._topology,
        )

    def copy(self) -> "UnstructuredMesh":
        return self.with_vertices(self.vertices.copy())

    def check(self) -> None:
        """Raise :class:`MeshError` unless the mesh is positive, edge-manifold and mapped."""
        areas = self.signed_areas()
        if np.any(areas <= 0.0):
            raise MeshError(f"triangle {int(np.argmin(areas))} has non-positive area {areas.min()!r}")
        topology = self.topology
        boundary = topology.edges[topology.boundary_edges]
        degree = np.bincount(boundary.ravel(), minlength=self.n_vertices)
        if np.any((degree != 0) & (degree != 2)):
            vertex = int(np.argmax((degree != 0) & (degree != 2)))
            raise MeshError(f"boundary is not a set of closed loops at vertex {vertex}")
        airfoil = set(self.airfoil_vertices().tolist())
        if set(self.boundary_map) != airfoil:
            raise MeshError("boundary_map does not cover exactly the airfoil vertices")


def _polygon_self_intersects(points: np.ndarray) -> bool:
    start = points
    end = np.roll(points, -1, axis=0)
    n = len(points)
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]

    def orient(p: np.ndarray, q: np.ndarray, r: np.ndarray) -> np.ndarray:
        return np.sign((q[:, 0] - p[:, 0]) * (r[:, 1] - p[:, 1]) - (q[:, 1] - p[:, 1]) * (r[:, 0] - p[:, 0]))

    o1 = orient(start[i], end[i], start[j])
    o2 = orient(start[i], end[i], end[j])
    o3 = orient(start[j], end[j], start[i])
    o4 = orient(start[j], end[j], end[i])
    return bool(np.any((o1 * o2 < 0) & (o3 * o4 < 0)))


def _growth_ratio(first_height: np.ndarray, distance: float, n_layers: int) -> np.ndarray:
    """Per-vertex ratio q with ``h0 (q^N - 1) / (q - 1) = distance``."""
    lo = np.full_like(first_height, 1.0 + 1e-9)
    hi = np.full_like(first_height, 10.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        reach = first_height * (mid**n_layers - 1.0) / (mid - 1.0)
        too_far = reach > distance
        hi = np.where(too_far, mid, hi)
        lo = np.where(too_far, lo, mid)
    return 0.5 * (lo + hi)


def generate_omesh(
    shape: AirfoilShape,
    radius: float = DEFAULT_RADIUS,
    n_layers: int = DEFAULT_LAYERS,
    curves: Optional[ShapeCurves] = None,
    blend_distance: float = 3.0,
) -> UnstructuredMesh:
    """Triangulated O-grid between the airfoil contour and a far-field circle.

    Each airfoil vertex is extruded along its wall normal with a geometric layer
    height, bending smoothly toward an evenly spaced far-field direction; the last
    layer lies on the circle of the given radius around the origin.

    Args:
        shape: Airfoil whose contour points become the wall vertices.
        radius: Far-field radius in chords.
        n_layers: Number of radial cell layers, at least 3.
        curves: Curves the contour was sampled from; their parameters fill ``boundary_map``.
        blend_distance: Wall distance over which rays turn from the normal to the far-field direction.

    Raises:
        MeshError: The contour self-intersects or the grid folds.
    """
    if n_layers < 3:
        raise DomainError(f"n_layers must be >= 3, got {n_layers}")
    loop = shape.boundary_loop()
    wall = loop.points
    count = len(wall)
    if radius <= 2.0 * float(np.max(np.hypot(wall[:, 0], wall[:, 1]))):
        raise DomainError(f"radius {radius} is not large compared with the airfoil")
    enclosed = 0.5 * float(np.sum(wall[:, 0] * np.roll(wall[:, 1], -1) - np.roll(wall[:, 0], -1) * wall[:, 1]))
    if enclosed <= 0.0 or _polygon_self_intersects(wall):
        raise MeshError("airfoil contour self-intersects")

    segment = np.roll(wall, -1, axis=0) - wall
    seg_len = np.hypot(segment[:, 0], segment[:, 1])
    edge_normal = np.column_stack([segment[:, 1], -segment[:, 0]]) / seg_len[:, None]
    normal = edge_normal + np.roll(edge_normal, 1, axis=0)
    normal /= np.hypot(normal[:, 0], normal[:, 1])[:, None]
    spacing = 0.5 * (seg_len + np.roll(seg_len, 1))
    phi = 2.0 * math.pi * np.arange(count) / count
    far_dir = np.column_stack([np.cos(phi), np.sin(phi)])

    first_height = np.minimum(_SQRT3_2 * spacing, 0.5 * radius / n_layers)
    ratio = _growth_ratio(first_height, radius, n_layers)
    layers = [wall]
    position = wall.copy()
    travelled = np.zeros(count)
    for k in range(1, n_layers):
        reach = first_height * (ratio**k - 1.0) / (ratio - 1.0)
        weight = np.clip(reach / blend_distance, 0.0, 1.0) ** 2
        direction = (1.0 - weight)[:, None] * normal + weight[:, None] * far_dir
        direction /= np.hypot(direction[:, 0], direction[:, 1])[:, None]
        position = position + (reach - travelled)[:, None] * direction
        travelled = reach
        layers.append(position.copy())
    layers.append(radius * far_dir)
    vertices = np.vstack(layers)

    k, j = np.meshgrid(np.arange(n_layers), np.arange(count), indexing="ij")
    k, j = k.ravel(), j.ravel()
    jn = (j + 1) % count
    a, b = k * count + j, k * count + jn
    c, d = (k + 1) * count + jn, (k + 1) * count + j
    # upper half splits along a-c, lower half along b-d: mirror-symmetric for symmetric contours
    upper_half = j < count / 2
    first = np.where(upper_half[:, None], np.column_stack([a, d, c]), np.column_stack([a, d, b]))
    second = np.where(upper_half[:, None], np.column_stack([a, c, b]), np.column_stack([d, c, b]))
    flipped_first = np.where(upper_half[:, None], np.column_stack([a, d, b]), np.column_stack([a, d, c]))
    flipped_second = np.where(upper_half[:, None], np.column_stack([d, c, b]), np.column_stack([a, c, b]))
    bad = (signed_areas(vertices, first) <= 0.0) | (signed_areas(vertices, second) <= 0.0)
    first[bad] = flipped_first[bad]
    second[bad] = flipped_second[bad]
    triangles = np.stack([first, second], axis=1).reshape(-1, 3)

    markers = np.full(len(vertices), INTERIOR, dtype=int)
    markers[:count] = AIRFOIL
    markers[-count:] = FARFIELD
    if curves is not None:
        params = {UPPER: curves.upper_params, LOWER: curves.lower_params}
    else:
        params = {UPPER: chord_length_params(shape.upper), LOWER: chord_length_params(shape.lower)}
    boundary_map = {
        int(v): (int(loop.curve[v]), float(params[int(loop.curve[v])][loop.index[v]]))
        for v in range(count)
    }
    mesh = UnstructuredMesh(vertices, triangles, markers, boundary_map, curves, radius)
    if mesh.inverted_count():
        raise MeshError(f"O-grid folded: {mesh.inverted_count()} inverted triangles")
    mesh = repair_boundary_triangles(mesh)
    mesh.check()
    logger.debug(
        "generated O-mesh: %d vertices, %d triangles, radius %.1f",
        mesh.n_vertices,
        mesh.n_triangles,
        radius,
    )
    return mesh


class BoundaryUpdate(NamedTuple):
    mesh: UnstructuredMesh
    inverted: int


def _boundary_positions(
    mesh: UnstructuredMesh, target: Union[AirfoilShape, ShapeCurves]
) -> Tuple[np.ndarray, np.ndarray]:
    ids = np.array(sorted(mesh.boundary_map), dtype=int)
    curve_ids = np.array([mesh.boundary_map[v][0] for v in ids], dtype=int)
    params = np.array([mesh.boundary_map[v][1] for v in ids], dtype=float)
    positions = np.empty((len(ids), 2))
    for curve_id in (UPPER, LOWER):
        sel = curve_ids == curve_id
        if not np.any(sel):
            continue
        if isinstance(target, AirfoilShape):
            surface = target.surface(curve_id)
            knots = chord_length_params(surface)
            positions[sel, 0] = np.interp(params[sel], knots, surface[:, 0])
            positions[sel, 1] = np.interp(params[sel], knots, surface[:, 1])
        else:
            positions[sel] = bernstein_eval(target.curve(curve_id), params[sel])
    return ids, positions


def update_boundary(mesh: UnstructuredMesh, target: Union[AirfoilShape, ShapeCurves]) -> BoundaryUpdate:
    """Move airfoil vertices to the target geometry at their stored curve parameters.

    Interior vertices stay where they are. The caller decides what to do with
    a non-zero inverted count.
    """
    ids, positions = _boundary_positions(mesh, target)
    vertices = mesh.vertices.copy()
    vertices[ids] = positions
    curves = target if isinstance(target, ShapeCurves) else None
    moved = mesh.with_vertices(vertices)
    moved.curves = curves
    inverted = moved.inverted_count()
    if inverted:
        logger.debug("boundary update inverted %d triangles", inverted)
    return BoundaryUpdate(moved, inverted)


def follow_boundary(
    before: UnstructuredMesh, after: UnstructuredMesh, decay: float = 0.5, chunk: int = 4096
) -> UnstructuredMesh:
    """Carry the airfoil displacement into the interior.

    Interior vertices move by an inverse-distance weighted average of the wall
    displacements, damped by ``exp(-(d / decay)^2)`` with ``d`` the distance to the wall.
    """
    wall = before.airfoil_vertices()
    displacement = after.vertices[wall] - before.vertices[wall]
    if not np.any(displacement):
        return after
    interior = np.nonzero(before.markers == INTERIOR)[0]
    vertices = after.vertices.copy()
    anchors = before.vertices[wall]
    for start in range(0, len(interior), chunk):
        ids = interior[start : start + chunk]
        offset = before.vertices[ids, None, :] - anchors[None, :, :]
        distance = np.maximum(np.hypot(offset[..., 0], offset[..., 1]), 1e-12)
        weight = distance**-3
        motion = (weight @ displacement) / weight.sum(axis=1)[:, None]
        damping = np.exp(-((distance.min(axis=1) / decay) ** 2))
        vertices[ids] = before.vertices[ids] + damping[:, None] * motion
    return after.with_vertices(vertices)


def _guarded_move(mesh: UnstructuredMesh, proposal: np.ndarray, moved: np.ndarray) -> np.ndarray:
    """Revert moved vertices of every triangle the proposal would invert."""
    before = mesh.signed_areas()
    proposal = proposal.copy()
    moved = moved.copy()
    while True:
        after = signed_areas(proposal, mesh.triangles)
        inverted = (after <= 0.0) & (before > 0.0)
        if not np.any(inverted):
            return proposal
        culprits = np.unique(mesh.triangles[inverted])
        culprits = culprits[moved[culprits]]
        if culprits.size == 0:
            return proposal
        proposal[culprits] = mesh.vertices[culprits]
        moved[culprits] = False


def _free_mask(
    mesh: UnstructuredMesh,
    lock: Optional[Callable[[int], bool]],
    only: Optional[Iterable[int]],
) -> np.ndarray:
    if lock is None:
        free = mesh.markers == INTERIOR
    else:
        free = np.array([not lock(v) for v in range(mesh.n_vertices)], dtype=bool)
    if only is not None:
        subset = np.zeros(mesh.n_vertices, dtype=bool)
        subset[np.fromiter(only, dtype=int)] = True
        free &= subset
    return free


def laplacian_smooth(
    mesh: UnstructuredMesh,
    iterations: int = DEFAULT_SMOOTHING_SWEEPS,
    lock: Optional[Callable[[int], bool]] = None,
    only: Optional[Iterable[int]] = None,
) -> UnstructuredMesh:
    """Jacobi sweeps moving each free vertex to the mean of its edge neighbours.

    Args:
        mesh: Mesh to smooth.
        iterations: Number of sweeps.
        lock: Predicate on vertex ids; every non-interior vertex is locked by default.
        only: Restrict smoothing to these vertices.

    Returns:
        The smoothed mesh. A vertex whose move would invert a triangle keeps its
        position for that sweep.
    """
    free = _free_mask(mesh, lock, only)
    if not np.any(free) or iterations <= 0:
        return mesh.copy()
    adjacency = mesh.topology.adjacency
    degree = np.asarray(adjacency.sum(axis=1)).ravel()
    degree[degree == 0] = 1.0
    current = mesh.copy()
    for _ in range(iterations):
        centroid = (adjacency @ current.vertices) / degree[:, None]
        proposal = current.vertices.copy()
        proposal[free] = centroid[free]
        moved = free & np.any(proposal != current.vertices, axis=1)
        current = current.with_vertices(_guarded_move(current, proposal, moved))
    return current


class VertexLevels(NamedTuple):
    level1: FrozenSet[int]
    level2: FrozenSet[int]


def classify_levels(mesh: UnstructuredMesh) -> VertexLevels:
    """Interior vertices sharing a triangle with the wall (level 1) and with level 1 (level 2)."""
    interior = mesh.markers == INTERIOR
    touches_wall = np.any(mesh.markers[mesh.triangles] == AIRFOIL, axis=1)
    level1 = np.zeros(mesh.n_vertices, dtype=bool)
    level1[mesh.triangles[touches_wall].ravel()] = True
    level1 &= interior
    touches_level1 = np.any(level1[mesh.triangles], axis=1)
    level2 = np.zeros(mesh.n_vertices, dtype=bool)
    level2[mesh.triangles[touches_level1].ravel()] = True
    level2 &= interior & ~level1
    return VertexLevels(
        frozenset(np.nonzero(level1)[0].tolist()), frozenset(np.nonzero(level2)[0].tolist())
    )


def repair_boundary_triangles(mesh: UnstructuredMesh, smooth_iterations: int = 1) -> UnstructuredMesh:
    """Move the apex of every wall triangle to the equilateral position, then smooth level 2.

    A level-1 vertex that is the apex of several wall triangles goes to the mean of
    their equilateral apexes. Moves that would invert a triangle are skipped.
    """
    wall = mesh.markers == AIRFOIL
    on_wall = wall[mesh.triangles]
    candidates = np.nonzero(on_wall.sum(axis=1) == 2)[0]
    if candidates.size == 0:
        return mesh.copy()
    tri = mesh.triangles[candidates]
    apex_local = np.argmin(on_wall[candidates], axis=1)
    rows = np.arange(len(candidates))
    apex = tri[rows, apex_local]
    p = mesh.vertices[tri[rows, (apex_local + 1) % 3]]
    q = mesh.vertices[tri[rows, (apex_local + 2) % 3]]
    keep = mesh.markers[apex] == INTERIOR
    apex, p, q = apex[keep], p[keep], q[keep]
    edge = q - p
    left = np.column_stack([-edge[:, 1], edge[:, 0]])
    target = 0.5 * (p + q) + _SQRT3_2 * left

    total = np.zeros_like(mesh.vertices)
    hits = np.zeros(mesh.n_vertices)
    np.add.at(total, apex, target)
    np.add.at(hits, apex, 1.0)
    moved = hits > 0
    proposal = mesh.vertices.copy()
    proposal[moved] = total[moved] / hits[moved, None]
    repaired = mesh.with_vertices(_guarded_move(mesh, proposal, moved))
    if smooth_iterations > 0:
        level2 = classify_levels(repaired).level2
        if level2:
            repaired = laplacian_smooth(repaired, smooth_iterations, only=level2)
    return repaired


def deform(
    mesh: UnstructuredMesh,
    target: Union[AirfoilShape, ShapeCurves],
    decay: float = 0.5,
    sweeps: int = DEFAULT_SMOOTHING_SWEEPS,
) -> UnstructuredMesh:
    """Boundary update, interior follow-up, level 1/2 smoothing and wall repair.

    Raises:
        TanglingError: Triangles are still inverted after the repair.
    """
    update = update_boundary(mesh, target)
    wall = mesh.airfoil_vertices()
    if np.array_equal(update.mesh.vertices[wall], mesh.vertices[wall]):
        return update.mesh
    moved = follow_boundary(mesh, update.mesh, decay)
    levels = classify_levels(moved)
    smoothed = laplacian_smooth(moved, sweeps, only=levels.level1 | levels.level2)
    repaired = repair_boundary_triangles(smoothed)
    inverted = repaired.inverted_count()
    if inverted:
        raise TanglingError(f"mesh motion left {inverted} inverted triangles", inverted)
    return repaired


def _edge_curve_param(mesh: UnstructuredMesh, a: int, b: int) -> Tuple[int, float, float]:
    """Common curve of two wall vertices and their parameters on it.

    Leading and trailing edge vertices (t = 0 or 1) belong to both curves.
    """
    ca, ta = mesh.boundary_map[a]
    cb, tb = mesh.boundary_map[b]
    if ca == cb:
        return ca, ta, tb
    if ta in (0.0, 1.0):
        return cb, ta, tb
    return ca, ta, tb


class RefinementHierarchy(NamedTuple):
    coarse: UnstructuredMesh
    fine: UnstructuredMesh
    parent_map: np.ndarray


def _split(mesh: UnstructuredMesh, edge_marks: np.ndarray) -> Tuple[UnstructuredMesh, np.ndarray]:
    topology = mesh.topology
    edges = topology.edges
    marked = np.nonzero(edge_marks)[0]
    midpoint_id = np.full(len(edges), -1, dtype=int)
    midpoint_id[marked] = mesh.n_vertices + np.arange(len(marked))

    ends = edges[marked]
    positions = 0.5 * (mesh.vertices[ends[:, 0]] + mesh.vertices[ends[:, 1]])
    new_markers = np.full(len(marked), INTERIOR, dtype=int)
    boundary_map = dict(mesh.boundary_map)
    on_boundary = topology.edge_triangles[marked, 1] < 0
    end_markers = mesh.markers[ends]
    farfield = on_boundary & np.all(end_markers == FARFIELD, axis=1)
    new_markers[farfield] = FARFIELD
    airfoil = np.nonzero(on_boundary & np.all(end_markers == AIRFOIL, axis=1))[0]
    for i in airfoil:
        a, b = int(ends[i, 0]), int(ends[i, 1])
        curve_id, ta, tb = _edge_curve_param(mesh, a, b)
        t = 0.5 * (ta + tb)
        new_markers[i] = AIRFOIL
        boundary_map[int(midpoint_id[marked[i]])] = (curve_id, t)
        if mesh.curves is not None:
            positions[i] = bernstein_eval(mesh.curves.curve(curve_id), t)

    tri = mesh.triangles
    tri_edges = topology.triangle_edges
    marks = edge_marks[tri_edges]
    count = marks.sum(axis=1)
    if np.any(count == 2):
        raise MeshError("refinement marks leave a triangle with two split edges")

    red = np.nonzero(count == 3)[0]
    v = tri[red]
    m = midpoint_id[tri_edges[red]]
    red_children = np.stack(
        [
            np.column_stack([v[:, 0], m[:, 0], m[:, 2]]),
            np.column_stack([m[:, 0], v[:, 1], m[:, 1]]),
            np.column_stack([m[:, 2], m[:, 1], v[:, 2]]),
            np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
        ],
        axis=1,
    ).reshape(-1, 3)

    green = np.nonzero(count == 1)[0]
    local = np.argmax(marks[green], axis=1)
    a = tri[green, local]
    b = tri[green, (local + 1) % 3]
    c = tri[green, (local + 2) % 3]
    mid = midpoint_id[tri_edges[green, local]]
    green_children = np.stack(
        [np.column_stack([a, mid, c]), np.column_stack([mid, b, c])], axis=1
    ).reshape(-1, 3)

    keep = np.nonzero(count == 0)[0]
    children = np.vstack([tri[keep], red_children, green_children])
    parents = np.concatenate([keep, np.repeat(red, 4), np.repeat(green, 2)])
    order = np.argsort(parents, kind="stable")
    refined = UnstructuredMesh(
        np.vstack([mesh.vertices, positions]),
        children[order],
        np.concatenate([mesh.markers, new_markers]),
        boundary_map,
        mesh.curves,
        mesh.radius,
    )
    return refined, parents[order]


def uniform_refine(mesh: UnstructuredMesh) -> RefinementHierarchy:
    """Split every triangle into four; fine triangles ``4p .. 4p+3`` are children of ``p``."""
    fine, parents = _split(mesh, np.ones(len(mesh.topology.edges), dtype=bool))
    return RefinementHierarchy(mesh, fine, parents)


def refine_with_parents(mesh: UnstructuredMesh, marked: Iterable[int]) -> Tuple[UnstructuredMesh, np.ndarray]:
    """Red refinement of ``marked`` with green closure; also returns each new triangle's parent."""
    tri_edges = mesh.topology.triangle_edges
    edge_marks = np.zeros(len(mesh.topology.edges), dtype=bool)
    selected = np.fromiter((int(t) for t in marked), dtype=int)
    if selected.size:
        edge_marks[tri_edges[selected].ravel()] = True
    while True:
        promote = edge_marks[tri_edges].sum(axis=1) == 2
        if not np.any(promote):
            break
        edge_marks[tri_edges[promote].ravel()] = True
    return _split(mesh, edge_marks)


def refine_marked(mesh: UnstructuredMesh, marked: Iterable[int]) -> UnstructuredMesh:
    return refine_with_parents(mesh, marked)[0]


def _wall_param(curve: BezierCurve, x: float) -> float:
    # moved wall vertices may sit just past the curve end points
    ends = curve.control_points[[0, -1], 0]
    return inverse_param(curve, float(np.clip(x, ends.min(), ends.max())))


def curvature_capture(
    mesh: UnstructuredMesh,
    curves: Optional[ShapeCurves] = None,
    kappa_tol: float = 0.1,
    samples: int = CAPTURE_SAMPLES,
) -> Set[int]:
    """Wall triangles whose edge spans more than ``kappa_tol`` of curve turning.

    The turning of a wall edge is measured on ``samples`` dense points of its curve
    between the parameters of its end points.
    """
    curves = curves if curves is not None else mesh.curves
    if curves is None:
        raise MeshError("curvature capture needs the boundary curves")
    topology = mesh.topology
    marked: Set[int] = set()
    for e in topology.boundary_edges:
        a, b = (int(v) for v in topology.edges[e])
        if mesh.markers[a] != AIRFOIL or mesh.markers[b] != AIRFOIL:
            continue
        curve_id, _, _ = _edge_curve_param(mesh, a, b)
        curve = curves.curve(curve_id)
        t1 = _wall_param(curve, float(mesh.vertices[a, 0]))
        t2 = _wall_param(curve, float(mesh.vertices[b, 0]))
        if t1 == t2:
            continue
        dense = bernstein_eval(curve, np.linspace(t1, t2, samples))
        steps = np.hypot(*np.diff(dense, axis=0).T)
        if np.any(steps == 0.0):
            continue
        curvature = discrete_curvature(dense)
        measure = float(np.sum(curvature.kappa * curvature.lengths))
        if measure > kappa_tol:
            marked.add(int(topology.edge_triangles[e, 0]))
    return marked


def capture_and_refine(
    mesh: UnstructuredMesh, kappa_tol: float = 0.1, max_rounds: int = 5
) -> Tuple[UnstructuredMesh, int]:
    """Alternate curvature capture and refinement until nothing is marked."""
    for round_index in range(max_rounds):
        marked = curvature_capture(mesh, kappa_tol=kappa_tol)
        if not marked:
            return mesh, round_index
        logger.debug("curvature capture round %d: %d triangles marked", round_index, len(marked))
        mesh = refine_marked(mesh, marked)
    return mesh, max_rounds


class Quality(NamedTuple):
    min_angle: float
    max_angle: float
    min_area: float


def triangle_angles(mesh: UnstructuredMesh) -> np.ndarray:
    """Interior angles in degrees, one row per triangle."""
    pts = mesh.vertices[mesh.triangles]
    angles = np.empty((mesh.n_triangles, 3))
    for k in range(3):
        u = pts[:, (k + 1) % 3] - pts[:, k]
        w = pts[:, (k + 2) % 3] - pts[:, k]
        cosine = np.sum(u * w, axis=1) / (np.hypot(u[:, 0], u[:, 1]) * np.hypot(w[:, 0], w[:, 1]))
        angles[:, k] = np.degrees(np.arccos(np.clip(cosine, -1.0, 1.0)))
    return angles


def quality_metrics(mesh: UnstructuredMesh, triangles: Optional[np.ndarray] = None) -> Quality:
    angles = triangle_angles(mesh)
    areas = mesh.signed_areas()
    if triangles is not None:
        angles, areas = angles[triangles], areas[triangles]
    return Quality(float(angles.min()), float(angles.max()), float(areas.min()))


def save_mesh(mesh: UnstructuredMesh, path: PathLike) -> None:
    lines = [f"VERTICES {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r} {int(m)}" for (x, y), m in zip(mesh.vertices.tolist(), mesh.markers)]
    lines.append(f"TRIANGLES {mesh.n_triangles}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines.append(f"BOUNDARY_MAP {len(mesh.boundary_map)}")
    lines += [f"{v} {c} {t!r}" for v, (c, t) in sorted(mesh.boundary_map.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_mesh(path: PathLike) -> UnstructuredMesh:
    rows = [line.split() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    position = 0

    def section(name: str) -> int:
        nonlocal position
        if position >= len(rows) or rows[position][0] != name or len(rows[position]) != 2:
            raise MeshError(f"{path}: expected section '{name} <count>' at record {position}")
        count = int(rows[position][1])
        position += 1
        return count

    try:
        n = section("VERTICES")
        vertex_rows = rows[position : position + n]
        position += n
        m = section("TRIANGLES")
        triangle_rows = rows[position : position + m]
        position += m
        b = section("BOUNDARY_MAP")
        map_rows = rows[position : position + b]
        vertices = np.array([[float(x), float(y)] for x, y, _ in vertex_rows]).reshape(-1, 2)
        markers = np.array([int(r[2]) for r in vertex_rows], dtype=int)
        triangles = np.array([[int(i) for i in r] for r in triangle_rows], dtype=int).reshape(-1, 3)
        boundary_map = {int(v): (int(c), float(t)) for v, c, t in map_rows}
    except ValueError as exc:
        raise MeshError(f"{path}: malformed mesh file: {exc}") from exc
    if len(vertices) != n or len(triangles) != m or len(boundary_map) != b:
        raise MeshError(f"{path}: truncated mesh file")
    return UnstructuredMesh(vertices, triangles, markers, boundary_map)
