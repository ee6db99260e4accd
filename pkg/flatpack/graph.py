"""Discrete calculus on the 1-skeleton of a mesh.

Vertex functions are ``(V,)`` arrays and edge functions are ``(E,)`` arrays
indexed like :py:attr:`Graph.edges`. A flow is antisymmetric, so it is stored
once per canonical edge ``(i, j)`` with ``i < j`` as the value ``x_ij``; the
opposite orientation is ``x_ji = -x_ij``.

Operators:

+ :py:func:`gradient`, ``(grad f)_ij = eta_ij (f_j - f_i)``,
+ :py:func:`divergence`, ``div(x)_i = sum over j ~ i of x_ij``,
+ :py:func:`laplacian_apply`, ``div(grad f)``,
+ :py:func:`solve_laplacian`, the inverse on mean-zero vectors,
+ :py:func:`isoperimetric_constant`, an exhaustive oracle for small graphs.
"""
from typing import Dict, Optional

import logging

import numpy as np
from scipy import sparse

from .param import FlatpackError

logger = logging.getLogger(__name__)

# Largest vertex count accepted by the exhaustive isoperimetric search.
MAX_ISOPERIMETRIC_VERTICES = 20

# Largest vertex count for which dense spectra are computed.
MAX_SPECTRUM_VERTICES = 2000


class NotMeanZeroError(FlatpackError):
    pass


class NoConvergenceError(FlatpackError):
    pass


class TooLargeError(FlatpackError):
    pass


class Graph:
    """An undirected simple graph with optional edge lengths.

    Attributes
    ----------
    num_vertices : ``int``
        Number of vertices.

    edges : :py:class:`numpy.ndarray`, shape ``(E, 2)``
        Canonical ``(min, max)`` keys, sorted lexicographically.

    lengths : :py:class:`numpy.ndarray` or ``None``
        Positive edge lengths, when the graph is a metric graph.
    """

    __slots__ = ["num_vertices", "edges", "lengths"]

    def __init__(self, num_vertices: int, edges, lengths=None):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        keys = np.sort(edges, axis=1)

        if (keys[:, 0] == keys[:, 1]).any():
            msg = "Graph edges must join two distinct vertices."
            logger.error(msg)
            raise ValueError(msg)

        order = np.lexsort((keys[:, 1], keys[:, 0]))
        keys = keys[order]

        if keys.shape[0] > 1 and (np.diff(keys, axis=0) == 0).all(1).any():
            msg = "Graph edges must be unique."
            logger.error(msg)
            raise ValueError(msg)

        if lengths is not None:
            lengths = np.asarray(lengths, dtype=float).reshape(-1)[order]

            if lengths.shape[0] != keys.shape[0] or (lengths <= 0).any():
                msg = "Edge lengths must be positive, one per edge."
                logger.error(msg)
                raise ValueError(msg)

        self.num_vertices = int(num_vertices)
        self.edges = keys
        self.lengths = lengths

    def __repr__(self):
        return (
            f"Graph(num_vertices={self.num_vertices}, "
            f"num_edges={self.num_edges}, "
            f"metric={self.lengths is not None})"
        )

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def with_lengths(self, lengths) -> "Graph":
        """A copy of this graph carrying ``lengths`` (indexed like
        :py:attr:`edges`).
        """
        return Graph(self.num_vertices, self.edges, lengths)


def _check_vertex_vector(graph: Graph, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)

    if f.shape != (graph.num_vertices,):
        msg = (
            f"Vertex vector has shape {f.shape}, expected "
            f"({graph.num_vertices},)."
        )
        logger.error(msg)
        raise ValueError(msg)

    return f


def _check_edge_vector(graph: Graph, x, what: str = "Edge vector"):
    x = np.asarray(x, dtype=float)

    if x.shape != (graph.num_edges,):
        msg = f"{what} has shape {x.shape}, expected ({graph.num_edges},)."
        logger.error(msg)
        raise ValueError(msg)

    return x


def gradient(graph: Graph, eta, f) -> np.ndarray:
    """Weighted gradient flow, stored as ``x_ij`` for ``i < j``."""
    eta = _check_edge_vector(graph, eta, "Edge weight")
    f = _check_vertex_vector(graph, f)

    i, j = graph.edges[:, 0], graph.edges[:, 1]

    return eta * (f[j] - f[i])


def divergence(graph: Graph, x) -> np.ndarray:
    """Sum of the outgoing flow at every vertex.

    Each edge adds ``x_ij`` at its smaller endpoint and ``-x_ij`` at the
    larger one, so the components always sum to zero up to rounding.
    """
    x = _check_edge_vector(graph, x, "Flow")
    n = graph.num_vertices

    outgoing = np.bincount(graph.edges[:, 0], weights=x, minlength=n)
    incoming = np.bincount(graph.edges[:, 1], weights=x, minlength=n)

    return outgoing - incoming


def laplacian_apply(graph: Graph, eta, f) -> np.ndarray:
    """``(Lap f)_i = sum over j ~ i of eta_ij (f_j - f_i)``.

    Evaluated literally as ``divergence(gradient(eta, f))`` so the two agree
    bit for bit.
    """
    return divergence(graph, gradient(graph, eta, f))


def laplacian_matrix(graph: Graph, eta) -> sparse.csr_matrix:
    """Sparse matrix of :py:func:`laplacian_apply` (negative semidefinite)."""
    eta = _check_edge_vector(graph, eta, "Edge weight")
    n = graph.num_vertices
    i, j = graph.edges[:, 0], graph.edges[:, 1]

    off = sparse.coo_matrix((eta, (i, j)), shape=(n, n))
    off = off + off.T
    diag = np.asarray(off.sum(axis=1)).reshape(-1)

    return (off - sparse.diags(diag)).tocsr()


def solve_laplacian(
    graph: Graph,
    eta,
    y,
    tol: float = 1e-12,
    max_iter: Optional[int] = None,
    iter_factor: int = 50,
) -> np.ndarray:
    """Solves ``Lap_eta x = y`` on the mean-zero subspace.

    Uses preconditioned conjugate gradients on the positive definite operator
    ``-Lap_eta`` restricted to mean-zero vectors, with a Jacobi
    preconditioner and re-projection to mean zero after every update. Once the
    recursive residual meets the tolerance the true residual is checked, and
    the iteration restarts from the current iterate if needed.

    Arguments
    ---------
    graph : |Graph|
        A connected graph.

    eta : array-like, shape ``(E,)``
        Positive edge weights.

    y : array-like, shape ``(V,)``
        Right-hand side; must sum to zero within ``1e-9 * |y|``.

    tol : ``float``, optional
        Required ``max|Lap x - y| <= tol * max|y|``.

    max_iter : ``int``, optional
        Total iteration cap. Defaults to ``iter_factor * V``.

    Returns
    -------
    x : :py:class:`numpy.ndarray`
        Mean-zero solution.

    Raises
    ------
    :py:class:`NotMeanZeroError`
        If ``y`` does not sum to zero.

    :py:class:`NoConvergenceError`
        If the iteration cap is reached.
    """
    eta = _check_edge_vector(graph, eta, "Edge weight")
    y = _check_vertex_vector(graph, y)
    n = graph.num_vertices

    if (eta <= 0).any():
        msg = "Edge weights must be positive to invert the Laplacian."
        logger.error(msg)
        raise ValueError(msg)

    y_scale = float(np.max(np.abs(y))) if n else 0.0

    if abs(float(np.sum(y))) > 1e-9 * max(y_scale, np.finfo(float).tiny):
        msg = f"Right-hand side sums to {np.sum(y)!r}, not zero."
        logger.error(msg)
        raise NotMeanZeroError(msg)

    if y_scale == 0.0:
        return np.zeros(n)

    if max_iter is None:
        max_iter = iter_factor * n

    # Work with A = -Lap, which is positive definite on the mean-zero space.
    matrix = -laplacian_matrix(graph, eta)
    inv_diag = 1.0 / matrix.diagonal()
    b = -(y - y.mean())
    threshold = tol * y_scale

    x = np.zeros(n)
    iterations = 0

    for restart in range(4):
        r = b - matrix @ x
        r -= r.mean()
        z = inv_diag * r
        z -= z.mean()
        p = z.copy()
        rz = float(r @ z)

        while iterations < max_iter:
            if np.max(np.abs(r)) <= threshold:
                break

            ap = matrix @ p
            alpha = rz / float(p @ ap)
            x += alpha * p
            x -= x.mean()
            r -= alpha * ap
            r -= r.mean()

            z = inv_diag * r
            z -= z.mean()
            rz_next = float(r @ z)
            p = z + (rz_next / rz) * p
            p -= p.mean()
            rz = rz_next
            iterations += 1

        true_residual = float(np.max(np.abs(y + matrix @ x)))

        if true_residual <= threshold:
            logger.debug(
                f"CG converged in {iterations} iterations "
                f"(residual {true_residual:.3e}, {restart} restart(s))."
            )
            return x

        if iterations >= max_iter:
            break

    msg = (
        f"Laplacian solve did not reach relative residual {tol:g} in "
        f"{iterations} iterations (residual {true_residual:.3e})."
    )
    logger.error(msg)
    raise NoConvergenceError(msg)


def l_area(graph: Graph, subset_mask) -> float:
    """``|U|_l``, the sum of squared lengths of edges inside ``U``."""
    mask = np.asarray(subset_mask, dtype=bool)
    inside = mask[graph.edges[:, 0]] & mask[graph.edges[:, 1]]

    return float(np.sum(graph.lengths[inside] ** 2))


def l_perimeter(graph: Graph, subset_mask) -> float:
    """``|dU|_l``, the total length of edges leaving ``U``."""
    mask = np.asarray(subset_mask, dtype=bool)
    crossing = mask[graph.edges[:, 0]] != mask[graph.edges[:, 1]]

    return float(np.sum(graph.lengths[crossing]))


def _require_lengths(graph: Graph):
    if graph.lengths is None:
        msg = "This operation needs a metric graph (edge lengths)."
        logger.error(msg)
        raise ValueError(msg)


def isoperimetric_constant(graph: Graph) -> float:
    """Smallest ``C`` with ``min(|U|_l, |V|_l - |U|_l) <= C |dU|_l**2`` for
    every proper nonempty vertex subset ``U``.

    Every subset is enumerated, so only graphs with at most
    :py:data:`MAX_ISOPERIMETRIC_VERTICES` vertices are accepted. A
    disconnected graph gives ``inf``.

    Raises
    ------
    :py:class:`TooLargeError`
        If the graph has too many vertices.
    """
    _require_lengths(graph)
    n = graph.num_vertices

    if n > MAX_ISOPERIMETRIC_VERTICES:
        msg = (
            f"Exhaustive isoperimetric search is limited to "
            f"{MAX_ISOPERIMETRIC_VERTICES} vertices; graph has {n}."
        )
        logger.error(msg)
        raise TooLargeError(msg)

    if n < 2:
        return 0.0

    squares = graph.lengths**2
    total = float(np.sum(squares))
    bit_i = np.int64(1) << graph.edges[:, 0]
    bit_j = np.int64(1) << graph.edges[:, 1]

    best = 0.0
    chunk = 1 << 14

    # Bitmasks without the top vertex; each one also stands for its
    # complement, which shares the boundary.
    last = 1 << (n - 1)

    for start in range(1, last, chunk):
        masks = np.arange(start, min(start + chunk, last), dtype=np.int64)
        in_i = (masks[:, None] & bit_i[None, :]) != 0
        in_j = (masks[:, None] & bit_j[None, :]) != 0

        area = (in_i & in_j) @ squares
        complement = (~in_i & ~in_j) @ squares
        perimeter = (in_i != in_j) @ graph.lengths

        # Edge areas of U and its complement do not add up to the total, so
        # both sides are evaluated.
        small = np.maximum(
            np.minimum(area, total - area),
            np.minimum(complement, total - complement),
        )

        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(
                perimeter > 0, small / perimeter**2, np.inf
            )

        best = max(best, float(np.max(ratio)))

    return best


def elliptic_bound(graph: Graph, c1: float, c2: float, c3: float) -> float:
    """``4 c2 sqrt(c1 + 1) / c3 * |l| * |V|_l**0.5``.

    The sup-norm bound on ``Lap_eta^-1 div(x)`` for a ``c1``-isoperimetric
    metric graph, flows with ``|x_ij| <= c2 l_ij**2`` and weights
    ``eta >= c3``.
    """
    _require_lengths(graph)

    size = float(np.max(graph.lengths))
    total = float(np.sum(graph.lengths**2))

    return 4.0 * c2 * np.sqrt(c1 + 1.0) / c3 * size * np.sqrt(total)


def laplacian_spectrum(graph: Graph, eta) -> Dict[str, Optional[float]]:
    """Summary of the spectrum of ``-Lap_eta``.

    Returns a dictionary with ``kernel_dim`` (eigenvalues below
    ``1e-10`` times the largest), ``smallest_nonzero`` and ``largest``. For
    graphs above :py:data:`MAX_SPECTRUM_VERTICES` vertices all values are
    ``None``.
    """
    n = graph.num_vertices

    if n > MAX_SPECTRUM_VERTICES:
        logger.info(f"Skipping dense spectrum for {n} vertices.")
        return {"kernel_dim": None, "smallest_nonzero": None, "largest": None}

    dense = -laplacian_matrix(graph, eta).toarray()
    values = np.linalg.eigvalsh(dense)
    largest = float(values[-1])
    cutoff = 1e-10 * max(largest, 1.0)
    nonzero = values[values > cutoff]

    return {
        "kernel_dim": int(np.sum(np.abs(values) <= cutoff)),
        "smallest_nonzero": float(nonzero[0]) if nonzero.size else None,
        "largest": largest,
    }


def random_metric_graph(
    num_vertices: int, edge_prob: float, rng: np.random.Generator
) -> Graph:
    """A connected random graph with lengths in ``[0.5, 1.5)``.

    A random spanning path guarantees connectivity; other pairs are joined
    with probability ``edge_prob``.
    """
    order = rng.permutation(num_vertices)
    pairs = {
        (min(a, b), max(a, b))
        for a, b in zip(order[:-1].tolist(), order[1:].tolist())
    }

    for a in range(num_vertices):
        for b in range(a + 1, num_vertices):
            if rng.random() < edge_prob:
                pairs.add((a, b))

    edges = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    lengths = rng.uniform(0.5, 1.5, size=edges.shape[0])
    return Graph(num_vertices, edges, lengths)
