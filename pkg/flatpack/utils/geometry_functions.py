"""Vectorised Euclidean triangle geometry.

All functions take side lengths as array-likes of matching shape and work
elementwise. Corner ``0`` is opposite side ``a``, corner ``1`` opposite ``b``
and corner ``2`` opposite ``c``.
"""
import logging

import numpy as np

logger = logging.getLogger(__name__)

# Relative slack of the strict triangle inequality.
TRIANGLE_SLACK = 1e-12

# Law-of-cosines arguments this close outside [-1, 1] are clamped.
COSINE_CLAMP = 1e-12


def triangle_slack(a, b, c) -> np.ndarray:
    """Returns the smallest of ``b + c - a``, ``a + c - b``, ``a + b - c``
    divided by the perimeter. A face is nondegenerate when this exceeds
    :py:data:`TRIANGLE_SLACK`.
    """
    a, b, c = (np.asarray(x, dtype=float) for x in (a, b, c))
    perimeter = a + b + c

    with np.errstate(divide="ignore", invalid="ignore"):
        slack = np.minimum(np.minimum(b + c - a, a + c - b), a + b - c)
        return slack / perimeter


def is_triangle(a, b, c) -> np.ndarray:
    """Elementwise strict triangle inequality with relative slack."""
    a, b, c = (np.asarray(x, dtype=float) for x in (a, b, c))
    positive = (a > 0) & (b > 0) & (c > 0)

    return positive & (triangle_slack(a, b, c) > TRIANGLE_SLACK)


def corner_cosines(a, b, c) -> np.ndarray:
    """Law-of-cosines values for the three corners, stacked on the last
    axis. Values are not clamped.
    """
    a, b, c = (np.asarray(x, dtype=float) for x in (a, b, c))

    cos0 = (b * b + c * c - a * a) / (2.0 * b * c)
    cos1 = (a * a + c * c - b * b) / (2.0 * a * c)
    cos2 = (a * a + b * b - c * c) / (2.0 * a * b)

    return np.stack([cos0, cos1, cos2], axis=-1)


def triangle_angles(a, b, c) -> np.ndarray:
    """Corner angles by the law of cosines, stacked on the last axis.

    Cosines within :py:data:`COSINE_CLAMP` of +-1 are clamped; anything further
    out gives ``nan`` so callers can flag the face as degenerate.
    """
    cosines = corner_cosines(a, b, c)
    outside = np.abs(cosines) > 1.0 + COSINE_CLAMP

    clamped = np.clip(cosines, -1.0, 1.0)
    angles = np.arccos(clamped)
    angles[outside] = np.nan

    return angles


def triangle_area(a, b, c) -> np.ndarray:
    """Heron's formula in the cancellation-free ordering.

    Sides are sorted so that ``x >= y >= z`` before evaluating
    ``sqrt((x+(y+z))(z-(x-y))(z+(x-y))(x+(y-z))) / 4``.
    """
    sides = np.sort(
        np.stack(np.broadcast_arrays(a, b, c), axis=-1).astype(float),
        axis=-1,
    )
    z, y, x = sides[..., 0], sides[..., 1], sides[..., 2]

    product = (x + (y + z)) * (z - (x - y)) * (z + (x - y)) * (x + (y - z))

    return 0.25 * np.sqrt(np.maximum(product, 0.0))


def length_area_band(eps: float, a) -> np.ndarray:
    """Lower and upper area bounds ``(eps / 8) a**2`` and ``a**2 / eps`` for
    a triangle whose angles are all at least ``eps``, with ``a`` any side.
    """
    a2 = np.asarray(a, dtype=float) ** 2

    return np.stack([eps / 8.0 * a2, a2 / eps], axis=-1)


def comparison_triangle_bounds(eps: float, delta: float):
    """For a triangle with all angles at least ``eps`` whose sides are
    perturbed by relative amounts at most ``delta < eps**2 / 48``, returns
    the bound on each angle change and the bound on the relative area change:
    ``(24 / eps) delta`` and ``(576 / eps**2) delta``.
    """
    if not delta < eps * eps / 48.0:
        msg = (
            f"Perturbation {delta} must be below eps**2 / 48 = "
            f"{eps * eps / 48.0}."
        )
        logger.error(msg)
        raise ValueError(msg)

    return 24.0 / eps * delta, 576.0 / (eps * eps) * delta
