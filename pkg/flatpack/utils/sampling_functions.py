"""Random inputs for property checks: triangles with an angle floor, side
perturbations and admissible circle packings.
"""
from typing import Tuple

import logging

import numpy as np

from ..mesh import Triangulation
from ..packing import CirclePacking

logger = logging.getLogger(__name__)


def random_regular_triangles(
    eps: float, size: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Triangles whose angles are all at least ``eps``.

    Angles are ``eps`` plus a uniform point of the simplex scaled to
    ``pi - 3 eps``; sides follow from the law of sines with a log-uniform
    scale in ``[0.1, 10]``.

    Returns
    -------
    sides, angles : :py:class:`numpy.ndarray`, shape ``(size, 3)``
        Side ``k`` is opposite angle ``k``.
    """
    if not 0.0 < eps < np.pi / 3.0:
        msg = f"Angle floor must be in (0, pi/3), got {eps}."
        logger.error(msg)
        raise ValueError(msg)

    spread = rng.dirichlet(np.ones(3), size=size)
    angles = eps + (np.pi - 3.0 * eps) * spread

    scale = np.exp(rng.uniform(np.log(0.1), np.log(10.0), size=size))
    sides = scale[:, None] * np.sin(angles)

    return sides, angles


def perturb_sides(
    sides, delta: float, rng: np.random.Generator
) -> np.ndarray:
    """Each side multiplied by ``1 + t`` with ``t`` uniform in
    ``[-delta, delta]``.
    """
    sides = np.asarray(sides, dtype=float)

    return sides * (1.0 + rng.uniform(-delta, delta, size=sides.shape))


def random_packing(
    triangulation: Triangulation,
    rng: np.random.Generator,
    rho_noise: float = 0.1,
    cos_range: Tuple[float, float] = (0.5, 1.0),
) -> CirclePacking:
    """Gaussian log radii around 0 and uniform ``cos Theta`` in
    ``cos_range``.

    Weights in ``[0, 1]`` give a Euclidean triangle for any radii, so the
    result always induces a valid metric.
    """
    low, high = cos_range

    if not 0.0 <= low <= high <= 1.0:
        msg = f"cos_range must lie in [0, 1], got {cos_range}."
        logger.error(msg)
        raise ValueError(msg)

    rho = rho_noise * rng.standard_normal(triangulation.num_vertices)
    cos_theta = rng.uniform(low, high, size=triangulation.num_edges)

    return CirclePacking(rho, cos_theta)
