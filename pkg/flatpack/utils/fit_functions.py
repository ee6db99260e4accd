"""Least-squares fitting of observed convergence orders."""
from typing import Tuple

import logging

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)


def convergence_order(
    sizes, errors, confidence: float = 0.95
) -> Tuple[float, Tuple[float, float]]:
    """Fits ``log(error) = order * log(size) + c`` by least squares.

    Arguments
    ---------
    sizes : array-like
        Mesh sizes (or any positive abscissa).

    errors : array-like
        Positive errors of the same length. Nonpositive or non-finite pairs
        are dropped before fitting.

    confidence : ``float``, optional
        Two-sided confidence level of the returned band.

    Returns
    -------
    order : ``float``
        The fitted slope, ``nan`` when fewer than two usable points remain.

    band : ``tuple`` of ``float``
        ``(low, high)`` Student-t band on the slope. Both ends are ``nan``
        with fewer than three usable points.
    """
    sizes = np.asarray(sizes, dtype=float)
    errors = np.asarray(errors, dtype=float)

    usable = (
        np.isfinite(sizes) & np.isfinite(errors) & (sizes > 0) & (errors > 0)
    )
    x = np.log(sizes[usable])
    y = np.log(errors[usable])

    if x.size < 2:
        logger.warning(
            f"Cannot fit a convergence order from {x.size} usable point(s)."
        )
        return float("nan"), (float("nan"), float("nan"))

    fit = stats.linregress(x, y)
    order = float(fit.slope)

    if x.size < 3:
        return order, (float("nan"), float("nan"))

    dof = x.size - 2
    half = float(stats.t.ppf(0.5 + confidence / 2.0, dof) * fit.stderr)

    return order, (order - half, order + half)


def loglog_slope(sizes, values) -> float:
    """Slope only; shorthand for :py:func:`convergence_order`."""
    return convergence_order(sizes, values)[0]
