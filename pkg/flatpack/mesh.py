"""Combinatorial triangulated tori and their flat embeddings.

The central object is |Triangulation|, an immutable face list together with
the structure derived from it: canonical edges, edge/face incidences and
vertex degrees. |VertexEmbedding| places the vertices of a triangulation in the
fundamental domain of a unit-area lattice.

Construction helpers:

+ :py:func:`build_triangulation`, which also enforces the torus invariants,
+ :py:func:`hex_torus`, the regular hexagonal torus of a given subdivision,
+ :py:func:`seven_vertex_torus`, the smallest triangulated torus.

:py:func:`validate` inspects a triangulation without raising and returns a
|ValidationReport|.
"""
from collections import Counter
from typing import Dict, List, Tuple

import logging
import warnings

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .graph import Graph
from .param import FlatpackError, FlatpackWarning

logger = logging.getLogger(__name__)

# Two lattice images closer than this are considered tied.
IMAGE_TIE_TOL = 1e-12


class MeshError(FlatpackError):
    pass


class NonManifoldEdgeError(MeshError):
    pass


class NotTorusError(MeshError):
    pass


class DisconnectedError(MeshError):
    pass


class AmbiguousImageError(MeshError):
    pass


class AmbiguousImageWarning(FlatpackWarning):
    pass


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class Triangulation:
    """A combinatorial triangulated surface.

    Instances are immutable. All arrays exposed through properties are
    read-only views. Nothing about the topology is enforced here beyond index
    sanity; use :py:func:`build_triangulation` to get a checked torus.

    Attributes
    ----------
    _num_vertices : ``int``
        Number of vertices ``V``.

    _triangles : :py:class:`numpy.ndarray`, shape ``(F, 3)``
        Oriented faces. Corner slot ``c`` of face ``f`` is the vertex
        ``_triangles[f, c]``.

    _edges : :py:class:`numpy.ndarray`, shape ``(E, 2)``
        Canonical edge keys ``(min, max)`` in lexicographic order. Every
        per-edge array in |flatpack| is indexed by position in this array.

    _face_edges : :py:class:`numpy.ndarray`, shape ``(F, 3)``
        ``_face_edges[f, c]`` is the index of the edge opposite corner ``c``.

    _edge_faces : ``tuple`` of ``tuple`` of ``int``
        Faces incident to each edge, in increasing face order.

    _vertex_degrees : :py:class:`numpy.ndarray`, shape ``(V,)``
        Number of edges at each vertex.
    """

    __slots__ = [
        "_num_vertices",
        "_triangles",
        "_edges",
        "_edge_index",
        "_face_edges",
        "_edge_faces",
        "_vertex_degrees",
    ]

    def __init__(self, triangles, num_vertices: int):
        tri = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        num_vertices = int(num_vertices)

        if num_vertices <= 0 or tri.shape[0] == 0:
            msg = "A triangulation needs at least one vertex and one face."
            logger.error(msg)
            raise ValueError(msg)

        if tri.min() < 0 or tri.max() >= num_vertices:
            msg = (
                f"Vertex indices must lie in [0, {num_vertices}); got range "
                f"[{tri.min()}, {tri.max()}]."
            )
            logger.error(msg)
            raise ValueError(msg)

        repeated = (
            (tri[:, 0] == tri[:, 1])
            | (tri[:, 1] == tri[:, 2])
            | (tri[:, 0] == tri[:, 2])
        )

        if repeated.any():
            bad = int(np.flatnonzero(repeated)[0])
            msg = f"Face {bad} {tri[bad].tolist()} repeats a vertex."
            logger.error(msg)
            raise ValueError(msg)

        # Edge opposite corner c joins corners c+1 and c+2.
        ends_a = tri[:, [1, 2, 0]]
        ends_b = tri[:, [2, 0, 1]]
        keys = np.stack(
            [np.minimum(ends_a, ends_b), np.maximum(ends_a, ends_b)], axis=-1
        ).reshape(-1, 2)

        edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)

        face_edges = inverse.reshape(-1, 3)
        incidence: List[List[int]] = [[] for _ in range(edges.shape[0])]

        for f, row in enumerate(face_edges):
            for e in row:
                incidence[e].append(f)

        self._num_vertices = num_vertices
        self._triangles = _readonly(tri)
        self._edges = _readonly(edges.astype(np.int64))
        self._edge_index = {
            (int(i), int(j)): e for e, (i, j) in enumerate(edges)
        }
        self._face_edges = _readonly(face_edges.astype(np.int64))
        self._edge_faces = tuple(tuple(faces) for faces in incidence)
        self._vertex_degrees = _readonly(
            np.bincount(edges.ravel(), minlength=num_vertices)
        )

    def __repr__(self):
        return (
            f"Triangulation(num_vertices={self.num_vertices}, "
            f"num_edges={self.num_edges}, num_faces={self.num_faces})"
        )

    def __eq__(self, other):
        if not isinstance(other, Triangulation):
            return False

        return self.num_vertices == other.num_vertices and np.array_equal(
            self.triangles, other.triangles
        )

    @property
    def num_vertices(self) -> int:
        return self._num_vertices

    @property
    def num_edges(self) -> int:
        return self._edges.shape[0]

    @property
    def num_faces(self) -> int:
        return self._triangles.shape[0]

    @property
    def triangles(self) -> np.ndarray:
        return self._triangles

    @property
    def edges(self) -> np.ndarray:
        return self._edges

    @property
    def face_edges(self) -> np.ndarray:
        return self._face_edges

    @property
    def edge_to_faces(self) -> Tuple[Tuple[int, ...], ...]:
        return self._edge_faces

    @property
    def vertex_degrees(self) -> np.ndarray:
        return self._vertex_degrees

    @property
    def euler_characteristic(self) -> int:
        return self.num_vertices - self.num_edges + self.num_faces

    @property
    def graph(self) -> Graph:
        """The 1-skeleton as a |Graph| without lengths."""
        return Graph(self.num_vertices, self._edges)

    def edge_id(self, i: int, j: int) -> int:
        """Index of the edge joining ``i`` and ``j`` in either order.

        Raises
        ------
        KeyError
            If ``i`` and ``j`` are not adjacent.
        """
        key = (min(int(i), int(j)), max(int(i), int(j)))

        if key not in self._edge_index:
            raise KeyError(f"Vertices {i} and {j} are not adjacent.")

        return self._edge_index[key]

    def neighbors(self, i: int) -> np.ndarray:
        """Sorted array of the vertices adjacent to ``i``."""
        mask = (self._edges[:, 0] == i) | (self._edges[:, 1] == i)
        pairs = self._edges[mask]

        return np.sort(np.where(pairs[:, 0] == i, pairs[:, 1], pairs[:, 0]))

    def is_consistently_oriented(self) -> bool:
        """True if every edge is traversed exactly once in each direction."""
        directed = Counter()

        for a, b, c in self._triangles.tolist():
            directed.update([(a, b), (b, c), (c, a)])

        return all(count == 1 for count in directed.values()) and all(
            (b, a) in directed for (a, b) in directed
        )

    def is_orientable(self) -> bool:
        """True if the faces can be reoriented consistently.

        Walks the face adjacency across two-face edges, assigning each face a
        flip so that neighbours traverse their shared edge in opposite
        directions. Edges with other face counts are ignored.
        """
        flips = np.zeros(self.num_faces, dtype=np.int8)

        def direction(f, i, j):
            a, b, c = self._triangles[f].tolist()
            return 1 if (i, j) in ((a, b), (b, c), (c, a)) else -1

        for start in range(self.num_faces):
            if flips[start]:
                continue

            flips[start] = 1
            stack = [start]

            while stack:
                f = stack.pop()

                for e in self._face_edges[f]:
                    faces = self._edge_faces[e]

                    if len(faces) != 2:
                        continue

                    g = faces[1] if faces[0] == f else faces[0]
                    i, j = self._edges[e].tolist()
                    # Oriented neighbours traverse (i, j) in opposite senses.
                    sense = direction(f, i, j) * direction(g, i, j)
                    wanted = -flips[f] * sense

                    if flips[g] == 0:
                        flips[g] = wanted
                        stack.append(g)

                    elif flips[g] != wanted:
                        return False

        return True

    def is_connected(self) -> bool:
        n = self.num_vertices
        adjacency = coo_matrix(
            (np.ones(self.num_edges), (self._edges[:, 0], self._edges[:, 1])),
            shape=(n, n),
        )
        n_components, _ = connected_components(adjacency, directed=False)

        return n_components == 1


class ValidationReport:
    """Outcome of :py:func:`validate`.

    Attributes
    ----------
    num_vertices, num_edges, num_faces : ``int``
        Element counts.

    euler_characteristic : ``int``
        ``V - E + F``.

    degree_histogram : ``dict``, ``int``: ``int``
        Number of vertices with each degree.

    min_degree, max_degree : ``int``
        Degree extremes.

    connected : ``bool``
        Whether the 1-skeleton is connected.

    orientable : ``bool``
        Whether the surface admits a consistent orientation. Only
        meaningful when every edge has two faces.

    oriented : ``bool``
        Whether the stored faces are consistently oriented.

    nonmanifold_edges : ``list`` of ``tuple``
        Edge keys with a face count other than two.

    violations : ``list`` of ``str``
        One entry per violated torus invariant, from ``"NonManifoldEdge"``,
        ``"NotTorus"`` (nonzero Euler characteristic or a one-sided surface)
        and ``"Disconnected"``.
    """

    def __init__(
        self,
        num_vertices: int,
        num_edges: int,
        num_faces: int,
        degree_histogram: Dict[int, int],
        connected: bool,
        orientable: bool,
        oriented: bool,
        nonmanifold_edges: List[Tuple[int, int]],
    ):
        self.num_vertices = num_vertices
        self.num_edges = num_edges
        self.num_faces = num_faces
        self.euler_characteristic = num_vertices - num_edges + num_faces
        self.degree_histogram = degree_histogram
        self.min_degree = min(degree_histogram) if degree_histogram else 0
        self.max_degree = max(degree_histogram) if degree_histogram else 0
        self.connected = connected
        self.orientable = orientable
        self.oriented = oriented
        self.nonmanifold_edges = nonmanifold_edges

        self.violations = []

        if nonmanifold_edges:
            self.violations.append("NonManifoldEdge")

        one_sided = not nonmanifold_edges and not orientable

        if self.euler_characteristic != 0 or one_sided:
            self.violations.append("NotTorus")

        if not connected:
            self.violations.append("Disconnected")

    def __repr__(self):
        return (
            f"ValidationReport(chi={self.euler_characteristic}, "
            f"degrees={self.degree_histogram}, connected={self.connected}, "
            f"violations={self.violations})"
        )

    def __str__(self):
        lines = [
            f"vertices: {self.num_vertices}",
            f"edges: {self.num_edges}",
            f"faces: {self.num_faces}",
            f"euler characteristic: {self.euler_characteristic}",
            f"degree histogram: {self.degree_histogram}",
            f"degree range: [{self.min_degree}, {self.max_degree}]",
            f"connected: {self.connected}",
            f"orientable: {self.orientable}",
            f"consistently oriented: {self.oriented}",
            f"violations: {', '.join(self.violations) or 'none'}",
        ]

        return "\n".join(lines)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(triangulation: Triangulation) -> ValidationReport:
    """Reports the torus invariants of ``triangulation`` without raising."""
    degrees = triangulation.vertex_degrees
    values, counts = np.unique(degrees, return_counts=True)
    histogram = {int(d): int(c) for d, c in zip(values, counts)}

    nonmanifold = [
        tuple(int(v) for v in triangulation.edges[e])
        for e, faces in enumerate(triangulation.edge_to_faces)
        if len(faces) != 2
    ]

    report = ValidationReport(
        triangulation.num_vertices,
        triangulation.num_edges,
        triangulation.num_faces,
        histogram,
        triangulation.is_connected(),
        triangulation.is_orientable(),
        triangulation.is_consistently_oriented(),
        nonmanifold,
    )

    logger.debug(f"Validated {triangulation}: {report.violations or 'ok'}")

    return report


def build_triangulation(triangles, num_vertices: int) -> Triangulation:
    """Builds a |Triangulation| and checks that it is a triangulated torus.

    The result is deterministic: identical input lists give identical edge
    orderings.

    Raises
    ------
    ValueError
        For out-of-range indices or faces with a repeated vertex.

    :py:class:`NonManifoldEdgeError`
        If some edge does not have exactly two incident faces.

    :py:class:`NotTorusError`
        If ``V - E + F != 0``.

    :py:class:`DisconnectedError`
        If the 1-skeleton is not connected.
    """
    triangulation = Triangulation(triangles, num_vertices)
    report = validate(triangulation)

    if "NonManifoldEdge" in report.violations:
        shown = report.nonmanifold_edges[:5]
        msg = (
            f"{len(report.nonmanifold_edges)} edge(s) do not have exactly "
            f"two incident faces, e.g. {shown}."
        )
        logger.error(msg)
        raise NonManifoldEdgeError(msg)

    if "NotTorus" in report.violations:
        msg = (
            f"Euler characteristic is {report.euler_characteristic} "
            f"(V={report.num_vertices}, E={report.num_edges}, "
            f"F={report.num_faces}), orientable={report.orientable}; a "
            f"torus needs 0 and an orientable surface."
        )
        logger.error(msg)
        raise NotTorusError(msg)

    if "Disconnected" in report.violations:
        msg = "The 1-skeleton of the triangulation is not connected."
        logger.error(msg)
        raise DisconnectedError(msg)

    return triangulation


def seven_vertex_torus() -> Triangulation:
    """The seven-vertex torus in which every pair of vertices is adjacent."""
    faces = []

    for i in range(7):
        faces.append((i, (i + 1) % 7, (i + 3) % 7))
        faces.append((i, (i + 3) % 7, (i + 2) % 7))

    return build_triangulation(faces, 7)


def _minimal_images(lattice: np.ndarray, displacements: np.ndarray):
    """Shortest lattice translates of an ``(N, 2)`` array of displacements.

    Returns the reduced displacements and a boolean mask of rows where two
    images tie within :py:data:`IMAGE_TIE_TOL`. Ties resolve to the
    lexicographically smallest displacement.
    """
    inverse = np.linalg.inv(lattice)
    coords = displacements @ inverse
    coords = coords - np.round(coords)

    shifts = np.array(
        [(m, k) for m in range(-2, 3) for k in range(-2, 3)], dtype=float
    )
    candidates = (coords[:, None, :] + shifts[None, :, :]) @ lattice
    lengths = np.linalg.norm(candidates, axis=-1)

    best = lengths.min(axis=1, keepdims=True)
    tied = lengths <= best + IMAGE_TIE_TOL * np.maximum(best, 1.0)

    # Lexicographic order among tied candidates: smallest x, then smallest y.
    big = np.inf
    x = np.where(tied, candidates[..., 0], big)
    xmin = x.min(axis=1, keepdims=True)
    on_xmin = tied & (x <= xmin + IMAGE_TIE_TOL)
    y = np.where(on_xmin, candidates[..., 1], big)
    pick = np.argmin(y, axis=1)

    chosen = candidates[np.arange(candidates.shape[0]), pick]

    return chosen, tied.sum(axis=1) > 1


def minimal_image(
    lattice, p, q, strict: bool = False
) -> np.ndarray:
    """Displacement from ``p`` to the nearest lattice translate of ``q``.

    Arguments
    ---------
    lattice : array-like, shape ``(2, 2)``
        Rows are the lattice basis vectors.

    p, q : array-like, shape ``(2,)``
        Points in the plane.

    strict : ``bool``, optional
        If True, a tie between two images raises
        :py:class:`AmbiguousImageError`. Otherwise the lexicographically
        smallest displacement is returned and an
        :py:class:`AmbiguousImageWarning` is emitted.
    """
    lattice = np.asarray(lattice, dtype=float)
    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)

    chosen, tied = _minimal_images(lattice, d.reshape(1, 2))

    if tied[0]:
        msg = (
            f"Two lattice images of {np.asarray(q).tolist()} tie as nearest "
            f"to {np.asarray(p).tolist()}."
        )

        if strict:
            logger.error(msg)
            raise AmbiguousImageError(msg)

        logger.warning(msg)
        warnings.warn(msg, AmbiguousImageWarning)

    return chosen[0]


class VertexEmbedding:
    """Vertex positions in the fundamental domain of a unit-area lattice.

    Attributes
    ----------
    _positions : :py:class:`numpy.ndarray`, shape ``(V, 2)``
        Points in the half-open parallelogram spanned by the lattice.

    _lattice : :py:class:`numpy.ndarray`, shape ``(2, 2)``
        Rows are the two basis vectors. The determinant is 1.
    """

    __slots__ = ["_positions", "_lattice"]

    def __init__(self, positions, lattice):
        positions = np.array(positions, dtype=float).reshape(-1, 2)
        lattice = np.array(lattice, dtype=float).reshape(2, 2)

        det = float(np.linalg.det(lattice))

        if abs(det - 1.0) > 1e-12:
            msg = f"Lattice determinant must be 1 (unit area), got {det}."
            logger.error(msg)
            raise MeshError(msg)

        coords = positions @ np.linalg.inv(lattice)

        if (coords < -1e-12).any() or (coords >= 1.0).any():
            msg = "Vertex positions must lie in the fundamental parallelogram."
            logger.error(msg)
            raise MeshError(msg)

        self._positions = _readonly(positions)
        self._lattice = _readonly(lattice)

    def __repr__(self):
        return (
            f"VertexEmbedding(num_vertices={self.num_vertices}, "
            f"lattice={self._lattice.tolist()})"
        )

    @property
    def positions(self) -> np.ndarray:
        return self._positions

    @property
    def lattice(self) -> np.ndarray:
        return self._lattice

    @property
    def num_vertices(self) -> int:
        return self._positions.shape[0]

    def lattice_coords(self, points) -> np.ndarray:
        """Coordinates of ``points`` in the lattice basis."""
        return np.asarray(points, dtype=float) @ np.linalg.inv(self._lattice)

    def edge_displacements(self, triangulation: Triangulation) -> np.ndarray:
        """Minimal-image displacement from ``i`` to ``j`` for every canonical
        edge ``(i, j)``, shape ``(E, 2)``.
        """
        i, j = triangulation.edges[:, 0], triangulation.edges[:, 1]
        d = self._positions[j] - self._positions[i]
        chosen, tied = _minimal_images(self._lattice, d)

        if tied.any():
            msg = (
                f"{int(tied.sum())} edge(s) have tied lattice images; the "
                f"lexicographically smallest displacement was used."
            )
            logger.warning(msg)
            warnings.warn(msg, AmbiguousImageWarning)

        return chosen

    def flat_lengths(self, triangulation: Triangulation) -> np.ndarray:
        """Flat minimal-image length of every edge, shape ``(E,)``."""
        return np.linalg.norm(self.edge_displacements(triangulation), axis=1)


def hex_lattice() -> np.ndarray:
    """Basis of the unit-area hexagonal lattice, ``(1, 0)`` and
    ``(1/2, sqrt(3)/2)`` scaled to determinant 1.
    """
    scale = np.sqrt(2.0 / np.sqrt(3.0))

    return scale * np.array([[1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]])


def hex_torus(n: int) -> Tuple[Triangulation, VertexEmbedding]:
    """The ``n`` by ``n`` hexagonal torus on the unit-area hexagonal lattice.

    Vertex ``a + n * b`` sits at ``(a / n, b / n)`` in lattice coordinates.
    Each lattice rhombus is split into two counterclockwise equilateral
    triangles, so every vertex has degree 6 and all corners equal pi/3.

    Raises
    ------
    ValueError
        If ``n < 3``.
    """
    if not isinstance(n, (int, np.integer)) or n < 3:
        msg = f"hex_torus needs an integer subdivision n >= 3, got {n!r}."
        logger.error(msg)
        raise ValueError(msg)

    n = int(n)

    def vid(a, b):
        return (a % n) + n * (b % n)

    faces = []

    for b in range(n):
        for a in range(n):
            faces.append((vid(a, b), vid(a + 1, b), vid(a, b + 1)))
            faces.append((vid(a + 1, b), vid(a + 1, b + 1), vid(a, b + 1)))

    triangulation = build_triangulation(faces, n * n)

    lattice = hex_lattice()
    a_idx, b_idx = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    coords = np.stack([a_idx.ravel(), b_idx.ravel()], axis=1) / n
    embedding = VertexEmbedding(coords @ lattice, lattice)

    logger.debug(f"Built hexagonal torus n={n}: {triangulation}")

    return triangulation, embedding
