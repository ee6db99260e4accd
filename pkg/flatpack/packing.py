"""Circle packing metrics, discrete conformal factors, and the Euclidean
quantities they induce on a triangulated torus.

A |CirclePacking| assigns a logarithmic radius ``rho_i`` to every vertex and
the cosine of a conformal weight ``Theta_ij`` to every edge. The induced edge
lengths are

.. math::

    l_{ij}^2 = e^{2\\rho_i} + e^{2\\rho_j} + 2 e^{\\rho_i + \\rho_j}
    \\cos\\Theta_{ij}.

A |ConformalFactor| ``u`` acts by ``rho -> rho + u`` and leaves the weights
untouched; two packings are discrete conformal exactly when their weights
agree.

From edge lengths this module computes corner angles, the angle defect
(discrete curvature), total area and the regularity report used to decide
whether a mesh is fit for the uniformization solvers.
"""
from typing import List

import logging
import math

import numpy as np

from .mesh import Triangulation
from .param import FlatpackError
from .utils import geometry_functions as geom

logger = logging.getLogger(__name__)


class DegenerateFaceError(FlatpackError):
    pass


class NotUniformlyPackableError(FlatpackError):
    pass


def _frozen(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


class EdgeLengths:
    """Positive lengths on the edges of a triangulation.

    Attributes
    ----------
    values : :py:class:`numpy.ndarray`, shape ``(E,)``
        Lengths indexed like :py:attr:`Triangulation.edges`.
    """

    __slots__ = ["values"]

    def __init__(self, values):
        values = _frozen(values).reshape(-1)

        if not np.isfinite(values).all() or (values <= 0).any():
            msg = "Edge lengths must be finite and positive."
            logger.error(msg)
            raise ValueError(msg)

        self.values = values

    def __repr__(self):
        return f"EdgeLengths(num_edges={self.values.size}, size={self.size})"

    def __len__(self):
        return self.values.size

    @property
    def size(self) -> float:
        """The mesh size ``|l|``, the longest edge."""
        return float(np.max(self.values))

    def scaled(self, factor: float) -> "EdgeLengths":
        return EdgeLengths(self.values * factor)


class CirclePacking:
    """Logarithmic radii on vertices and conformal weights on edges.

    Attributes
    ----------
    rho : :py:class:`numpy.ndarray`, shape ``(V,)``
        Logarithmic radii; circle radii are ``exp(rho)``.

    cos_theta : :py:class:`numpy.ndarray`, shape ``(E,)``
        Cosines of the conformal weights, in ``[0, 1]``.
    """

    __slots__ = ["rho", "cos_theta"]

    def __init__(self, rho, cos_theta):
        rho = _frozen(rho).reshape(-1)
        cos_theta = _frozen(cos_theta).reshape(-1)

        if not np.isfinite(rho).all():
            msg = "Logarithmic radii must be finite."
            logger.error(msg)
            raise ValueError(msg)

        if not ((cos_theta >= 0.0) & (cos_theta <= 1.0)).all():
            msg = (
                f"cos(Theta) must lie in [0, 1]; got range "
                f"[{cos_theta.min()}, {cos_theta.max()}]."
            )
            logger.error(msg)
            raise ValueError(msg)

        self.rho = rho
        self.cos_theta = cos_theta

    def __repr__(self):
        return (
            f"CirclePacking(num_vertices={self.rho.size}, "
            f"num_edges={self.cos_theta.size})"
        )

    @property
    def radii(self) -> np.ndarray:
        return np.exp(self.rho)

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.rho == self.rho[0]))


class ConformalFactor:
    """A discrete conformal factor ``u`` on vertices.

    Attributes
    ----------
    u : :py:class:`numpy.ndarray`, shape ``(V,)``
    """

    __slots__ = ["u"]

    def __init__(self, u):
        u = _frozen(u).reshape(-1)

        if not np.isfinite(u).all():
            msg = "Conformal factor entries must be finite."
            logger.error(msg)
            raise ValueError(msg)

        self.u = u

    def __repr__(self):
        return (
            f"ConformalFactor(num_vertices={self.u.size}, "
            f"range=[{self.u.min():.6g}, {self.u.max():.6g}])"
        )

    def shifted(self, a: float) -> "ConformalFactor":
        """``u + a``, the same factor up to a global scale."""
        return ConformalFactor(self.u + a)

    def mean_zero(self) -> "ConformalFactor":
        return ConformalFactor(self.u - self.u.mean())


class CornerAngles:
    """Inner angles addressed by (face, corner slot).

    Attributes
    ----------
    theta : :py:class:`numpy.ndarray`, shape ``(F, 3)``
        ``theta[f, c]`` is the angle of face ``f`` at vertex
        ``triangles[f, c]``.
    """

    __slots__ = ["theta"]

    def __init__(self, theta):
        self.theta = _frozen(theta).reshape(-1, 3)

    @property
    def min_angle(self) -> float:
        return float(self.theta.min())

    def face_sums(self) -> np.ndarray:
        return self.theta.sum(axis=1)


class Curvature:
    """Angle defects ``K_i``, in radians.

    Attributes
    ----------
    K : :py:class:`numpy.ndarray`, shape ``(V,)``
    """

    __slots__ = ["K"]

    def __init__(self, K):
        self.K = _frozen(K).reshape(-1)

    @property
    def total(self) -> float:
        return float(np.sum(self.K))

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.K)))


def face_lengths(triangulation: Triangulation, lengths) -> np.ndarray:
    """Side lengths of every face, shape ``(F, 3)``; column ``c`` is the
    side opposite corner ``c``.
    """
    values = lengths.values if isinstance(lengths, EdgeLengths) else lengths

    return np.asarray(values)[triangulation.face_edges]


def check_triangle_inequalities(triangulation: Triangulation, lengths):
    """Raises :py:class:`DegenerateFaceError` unless every face satisfies the
    strict triangle inequality with slack ``1e-12 * perimeter``.
    """
    sides = face_lengths(triangulation, lengths)
    ok = geom.is_triangle(sides[:, 0], sides[:, 1], sides[:, 2])

    if not ok.all():
        bad = np.flatnonzero(~ok)
        f = int(bad[0])
        msg = (
            f"{bad.size} face(s) violate the triangle inequality, e.g. face "
            f"{f} {triangulation.triangles[f].tolist()} with sides "
            f"{sides[f].tolist()}."
        )
        logger.error(msg)
        raise DegenerateFaceError(msg)


def _lengths_from_radii(triangulation, rho, cos_theta) -> np.ndarray:
    i, j = triangulation.edges[:, 0], triangulation.edges[:, 1]
    ri, rj = np.exp(rho[i]), np.exp(rho[j])

    return np.sqrt(ri * ri + rj * rj + 2.0 * ri * rj * cos_theta)


def edge_lengths_from_packing(
    triangulation: Triangulation, packing: CirclePacking
) -> EdgeLengths:
    """Edge lengths induced by a circle packing.

    Raises
    ------
    :py:class:`DegenerateFaceError`
        If some face violates the strict triangle inequality.
    """
    if packing.rho.size != triangulation.num_vertices or (
        packing.cos_theta.size != triangulation.num_edges
    ):
        msg = (
            f"Packing shapes ({packing.rho.size}, {packing.cos_theta.size}) "
            f"do not match the mesh ({triangulation.num_vertices}, "
            f"{triangulation.num_edges})."
        )
        logger.error(msg)
        raise ValueError(msg)

    values = _lengths_from_radii(triangulation, packing.rho, packing.cos_theta)
    check_triangle_inequalities(triangulation, values)

    return EdgeLengths(values)


def fit_uniform_packing(
    triangulation: Triangulation, lengths: EdgeLengths, eps: float
) -> CirclePacking:
    """The uniform circle packing reproducing ``lengths``.

    The common radius is half the longest edge, so that edge gets tangent
    circles (``cos Theta = 1``), and every other weight follows from
    ``cos Theta_ij = l_ij**2 / (2 r**2) - 1``.

    Arguments
    ---------
    triangulation : |Triangulation|

    lengths : |EdgeLengths|

    eps : ``float``
        Floor on ``cos Theta``, ``0 <= eps < 1``.

    Raises
    ------
    :py:class:`NotUniformlyPackableError`
        If some ``cos Theta_ij < eps``, i.e. the ratio of shortest to longest
        edge is below ``sqrt((1 + eps) / 2)``.
    """
    if not 0.0 <= eps < 1.0:
        msg = f"Packing floor eps must satisfy 0 <= eps < 1, got {eps}."
        logger.error(msg)
        raise ValueError(msg)

    check_triangle_inequalities(triangulation, lengths)

    values = lengths.values
    radius = 0.5 * float(np.max(values))
    rho0 = math.log(radius)

    ratio_sq = values * values / (2.0 * radius * radius)
    cos_theta = np.minimum(ratio_sq - 1.0, 1.0)
    worst = float(np.min(cos_theta))

    if worst < eps:
        ratio = float(np.min(values) / np.max(values))
        msg = (
            f"Edge lengths are not uniformly packable at eps={eps}: min "
            f"cos(Theta) is {worst:.6g} (length ratio {ratio:.6g} < "
            f"{math.sqrt((1.0 + eps) / 2.0):.6g})."
        )
        logger.error(msg)
        raise NotUniformlyPackableError(msg)

    logger.debug(
        f"Uniform packing: rho0={rho0:.6g}, cos(Theta) in "
        f"[{worst:.6g}, {cos_theta.max():.6g}]"
    )

    return CirclePacking(np.full(triangulation.num_vertices, rho0), cos_theta)


def apply_conformal_factor(
    packing: CirclePacking, factor: ConformalFactor
) -> CirclePacking:
    """The packing ``rho + u`` with the same conformal weights."""
    u = factor.u if isinstance(factor, ConformalFactor) else np.asarray(factor)

    if u.shape != packing.rho.shape:
        msg = (
            f"Conformal factor has shape {u.shape}, packing has "
            f"{packing.rho.shape}."
        )
        logger.error(msg)
        raise ValueError(msg)

    return CirclePacking(packing.rho + u, packing.cos_theta)


def inner_angles(
    triangulation: Triangulation, lengths: EdgeLengths
) -> CornerAngles:
    """Corner angles by the law of cosines.

    Raises
    ------
    :py:class:`DegenerateFaceError`
        If a face violates the triangle inequality, or a cosine falls more
        than ``1e-12`` outside ``[-1, 1]``.
    """
    check_triangle_inequalities(triangulation, lengths)

    sides = face_lengths(triangulation, lengths)
    theta = geom.triangle_angles(sides[:, 0], sides[:, 1], sides[:, 2])

    if not np.isfinite(theta).all():
        f = int(np.flatnonzero(~np.isfinite(theta).all(axis=1))[0])
        msg = f"Face {f} has a law-of-cosines value outside [-1, 1]."
        logger.error(msg)
        raise DegenerateFaceError(msg)

    return CornerAngles(theta)


def discrete_curvature(
    triangulation: Triangulation, angles: CornerAngles
) -> Curvature:
    """``K_i = 2 pi - (sum of corner angles at i)``."""
    sums = np.bincount(
        triangulation.triangles.ravel(),
        weights=angles.theta.ravel(),
        minlength=triangulation.num_vertices,
    )

    return Curvature(2.0 * np.pi - sums)


def packing_curvature(
    triangulation: Triangulation, packing: CirclePacking
) -> Curvature:
    """Curvature of the metric induced by ``packing``."""
    lengths = edge_lengths_from_packing(triangulation, packing)

    angles = inner_angles(triangulation, lengths)

    return discrete_curvature(triangulation, angles)


def mesh_area(triangulation: Triangulation, lengths: EdgeLengths) -> float:
    """Total area of the piecewise flat metric, Heron's formula per face."""
    check_triangle_inequalities(triangulation, lengths)

    sides = face_lengths(triangulation, lengths)

    areas = geom.triangle_area(sides[:, 0], sides[:, 1], sides[:, 2])

    return float(np.sum(areas))


class RegularityReport:
    """Outcome of :py:func:`check_regularity`.

    Attributes
    ----------
    eps : ``float``
        The floor that was checked.

    min_cos_theta, min_angle : ``float``
        Smallest conformal-weight cosine and smallest corner angle.

    cos_ok, angle_ok : ``bool``
        Whether each half of the regularity condition holds.

    degree_bound : ``int``
        ``ceil(2 pi / eps)``, the largest degree an ``eps``-regular mesh can
        have.

    max_degree : ``int``
        Largest vertex degree of the mesh.

    size : ``float``
        Longest edge ``|l|``.
    """

    def __init__(self, eps, min_cos_theta, min_angle, max_degree, size):
        self.eps = float(eps)
        self.min_cos_theta = float(min_cos_theta)
        self.min_angle = float(min_angle)
        self.cos_ok = self.min_cos_theta >= self.eps
        self.angle_ok = self.min_angle >= self.eps
        self.degree_bound = int(math.ceil(2.0 * math.pi / self.eps))
        self.max_degree = int(max_degree)
        self.size = float(size)

    def __repr__(self):
        return (
            f"RegularityReport(eps={self.eps}, regular={self.regular}, "
            f"min_cos_theta={self.min_cos_theta:.6g}, "
            f"min_angle={self.min_angle:.6g}, size={self.size:.6g})"
        )

    def __str__(self):
        lines = [
            f"eps: {self.eps}",
            f"regular: {self.regular}",
            f"min cos(Theta): {self.min_cos_theta:.12g}",
            f"min corner angle: {self.min_angle:.12g}",
            f"max degree: {self.max_degree} (bound {self.degree_bound})",
            f"size |l|: {self.size:.12g}",
        ]

        return "\n".join(lines)

    @property
    def regular(self) -> bool:
        return self.cos_ok and self.angle_ok

    @property
    def violations(self) -> List[str]:
        found = []

        if not self.cos_ok:
            found.append("cos_theta")

        if not self.angle_ok:
            found.append("angle")

        if self.max_degree > self.degree_bound:
            found.append("degree")

        return found


def check_regularity(
    triangulation: Triangulation,
    lengths: EdgeLengths,
    packing: CirclePacking,
    eps: float,
) -> RegularityReport:
    """Checks ``cos Theta_ij >= eps`` on every edge and ``theta >= eps`` at
    every corner. Never raises on a failed check; inspect the report.
    """
    if eps <= 0:
        msg = f"Regularity floor eps must be positive, got {eps}."
        logger.error(msg)
        raise ValueError(msg)

    angles = inner_angles(triangulation, lengths)

    report = RegularityReport(
        eps,
        float(np.min(packing.cos_theta)),
        angles.min_angle,
        int(np.max(triangulation.vertex_degrees)),
        lengths.size,
    )

    logger.debug(repr(report))

    return report
