"""Solvers for the discrete uniformization factor of a circle packing.

Given a circle packing on a triangulated torus, these routines find the
conformal factor ``u`` with vanishing angle defect everywhere, ``K(u) = 0``,
and then fix the global scale so the flat metric has unit area.

The key fact is that the curvature Jacobian is a weighted graph Laplacian,
``dK/du = -Lap_eta(u)``, where the edge weight ``eta_ij`` sums the partial
derivatives ``d theta^i / d u_j`` over the two faces at ``ij``. Two solvers
are built on it:

+ :py:func:`newton_uniformize`, Newton's method with a backtracking line
  search that keeps every iterate a valid Euclidean metric;
+ :py:func:`continuation_flow`, the ODE ``u' = Lap_eta(u)^-1 K(u(0))``
  integrated with classical RK4 from ``t = 0`` to ``1`` (along which
  ``K(u(t)) = (1 - t) K(u(0))``), then polished by Newton.

:py:func:`uniformize` runs either solver and shifts the result to unit
area with :py:func:`area_shift`.
"""
from typing import List, Optional, Tuple

import logging
import math

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .graph import NoConvergenceError, laplacian_apply, solve_laplacian
from .mesh import Triangulation
from .packing import (
    CirclePacking,
    ConformalFactor,
    CornerAngles,
    DegenerateFaceError,
    apply_conformal_factor,
    discrete_curvature,
    edge_lengths_from_packing,
    inner_angles,
    mesh_area,
)
from .param import FlatpackError, Settings, solver_settings

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100
DEFAULT_MAX_HALVINGS = 30
DEFAULT_NUM_STEPS = 64
DEFAULT_LINEAR_TOL = 1e-12
DEFAULT_LINEAR_ITER_FACTOR = 50

# sin(theta) at or below this marks a corner as degenerate.
MIN_SINE = 1e-14

# Corner slot pairs (c, d) with the remaining slot e = 3 - c - d.
_CORNER_PAIRS = ((0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1))


class LostAdmissibilityError(FlatpackError):
    pass


def angle_derivative(
    r_i, r_j, r_k, cos_ij, cos_ik, cos_jk, l_ij, l_ik, theta_i
) -> np.ndarray:
    """Partial derivative of the angle at ``i`` in face ``ijk`` with respect
    to the conformal factor at ``j``.

    The closed form is

    .. code-block:: text

        r_i^2 r_j^2 sin^2 T_ij
          + r_i^2 r_j r_k (cos T_jk + cos T_ij cos T_ik)
          + r_i r_j^2 r_k (cos T_ik + cos T_ij cos T_jk)
        ---------------------------------------------------
                  l_ik l_ij^3 sin(theta_i)

    All arguments broadcast. The value is symmetric under swapping ``i`` and
    ``j`` and strictly positive for nonobtuse weights.

    Raises
    ------
    :py:class:`~flatpack.packing.DegenerateFaceError`
        If ``sin(theta_i) <= 1e-14``.
    """
    r_i, r_j, r_k = (np.asarray(r, dtype=float) for r in (r_i, r_j, r_k))
    cos_ij, cos_ik, cos_jk = (
        np.asarray(c, dtype=float) for c in (cos_ij, cos_ik, cos_jk)
    )
    sine = np.sin(np.asarray(theta_i, dtype=float))

    if np.any(sine <= MIN_SINE):
        msg = "Corner angle too close to 0 or pi for an angle derivative."
        logger.error(msg)
        raise DegenerateFaceError(msg)

    numerator = (
        r_i * r_i * r_j * r_j * (1.0 - cos_ij * cos_ij)
        + r_i * r_i * r_j * r_k * (cos_jk + cos_ij * cos_ik)
        + r_i * r_j * r_j * r_k * (cos_ik + cos_ij * cos_jk)
    )
    denominator = np.asarray(l_ik) * np.asarray(l_ij) ** 3 * sine

    return numerator / denominator


class JacobianWeights:
    """Edge weights of the curvature Jacobian and the per-corner partials
    they are assembled from.

    Attributes
    ----------
    eta : :py:class:`numpy.ndarray`, shape ``(E,)``
        ``eta_ij``, the sum over the two faces at ``ij`` of
        ``d theta^i / d u_j`` with ``i`` the smaller endpoint.

    d_theta : :py:class:`numpy.ndarray`, shape ``(F, 3, 3)``
        ``d_theta[f, c, d]`` is the derivative of the angle at corner slot
        ``c`` of face ``f`` with respect to ``u`` at slot ``d``. Every row
        sums to zero.

    radius_ratio : ``float``
        Largest ratio of two circle radii, the ``R`` of
        :py:func:`eta_lower_bound`.
    """

    __slots__ = ["eta", "d_theta", "radius_ratio"]

    def __init__(self, eta, d_theta, radius_ratio):
        self.eta = eta
        self.d_theta = d_theta
        self.radius_ratio = radius_ratio

    def __repr__(self):
        return (
            f"JacobianWeights(num_edges={self.eta.size}, "
            f"eta=[{self.eta.min():.6g}, {self.eta.max():.6g}])"
        )


def eta_lower_bound(eps: float, radius_ratio: float) -> float:
    """``eps / (4 R**3)``, a lower bound for every ``eta_ij`` of an
    ``eps``-regular packing whose radii differ by at most a factor ``R``.
    """
    return eps / (4.0 * radius_ratio**3)


def _corner_partials(
    triangulation: Triangulation,
    packing: CirclePacking,
    lengths: np.ndarray,
    angles: CornerAngles,
) -> np.ndarray:
    tri = triangulation.triangles
    fe = triangulation.face_edges
    radii = packing.radii
    cos_theta = packing.cos_theta
    theta = angles.theta

    d_theta = np.zeros((tri.shape[0], 3, 3))

    for c, d in _CORNER_PAIRS:
        e = 3 - c - d
        d_theta[:, c, d] = angle_derivative(
            radii[tri[:, c]],
            radii[tri[:, d]],
            radii[tri[:, e]],
            cos_theta[fe[:, e]],
            cos_theta[fe[:, d]],
            cos_theta[fe[:, c]],
            lengths[fe[:, e]],
            lengths[fe[:, d]],
            theta[:, c],
        )

    # Angles are invariant under a common shift of u, so rows sum to zero.
    for c in range(3):
        d_theta[:, c, c] = -(
            d_theta[:, c, (c + 1) % 3] + d_theta[:, c, (c + 2) % 3]
        )

    return d_theta


def eta_weights(
    triangulation: Triangulation, packing: CirclePacking
) -> JacobianWeights:
    """Curvature Jacobian weights of ``packing``.

    Raises
    ------
    :py:class:`~flatpack.packing.DegenerateFaceError`
        If the packing does not induce a valid Euclidean metric.
    """
    lengths = edge_lengths_from_packing(triangulation, packing)
    angles = inner_angles(triangulation, lengths)
    d_theta = _corner_partials(triangulation, packing, lengths.values, angles)

    tri = triangulation.triangles
    fe = triangulation.face_edges
    num_edges = triangulation.num_edges
    eta = np.zeros(num_edges)

    for e in range(3):
        c, d = (e + 1) % 3, (e + 2) % 3
        # Read the partial from the corner holding the smaller vertex.
        use_c = tri[:, c] < tri[:, d]
        partial = np.where(use_c, d_theta[:, c, d], d_theta[:, d, c])
        eta += np.bincount(fe[:, e], weights=partial, minlength=num_edges)

    radii = packing.radii

    return JacobianWeights(
        eta, d_theta, float(np.max(radii) / np.min(radii))
    )


def curvature_jacobian(
    triangulation: Triangulation, packing: CirclePacking
) -> LinearOperator:
    """The Jacobian ``dK/du`` at ``packing`` as a symmetric linear operator.

    It equals ``-Lap_eta`` with the weights of :py:func:`eta_weights`.
    """
    graph = triangulation.graph
    eta = eta_weights(triangulation, packing).eta
    n = triangulation.num_vertices

    def apply(f):
        return -laplacian_apply(graph, eta, np.asarray(f).reshape(-1))

    return LinearOperator(
        (n, n), matvec=apply, rmatvec=apply, dtype=float
    )


def angle_defect_flow(
    triangulation: Triangulation, theta_a, theta_b
) -> np.ndarray:
    """Flow built from the difference of two angle assignments.

    With ``alpha = theta_a - theta_b`` per corner, each face ``ijk``
    contributes ``(alpha_i - alpha_j) / 3`` to ``x_ij``. When both
    assignments sum to pi on every face, ``divergence(x)`` at a vertex equals
    the sum of ``alpha`` around it, i.e. ``K_b - K_a``.

    Returns the flow stored per canonical edge.
    """
    a = theta_a.theta if isinstance(theta_a, CornerAngles) else theta_a
    b = theta_b.theta if isinstance(theta_b, CornerAngles) else theta_b
    alpha = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)

    tri = triangulation.triangles
    fe = triangulation.face_edges
    x = np.zeros(triangulation.num_edges)

    for e in range(3):
        c, d = (e + 1) % 3, (e + 2) % 3
        value = (alpha[:, c] - alpha[:, d]) / 3.0
        sign = np.where(tri[:, c] < tri[:, d], 1.0, -1.0)
        x += np.bincount(
            fe[:, e], weights=sign * value, minlength=triangulation.num_edges
        )

    return x


class SolveReport:
    """Diagnostics of a uniformization solve.

    Attributes
    ----------
    method : ``str``
        ``"newton"`` or ``"flow"``.

    iterations : ``int``
        Newton steps taken (for the flow: RK4 steps plus polishing steps).

    final_residual : ``float``
        ``max|K(u)|`` at the returned factor.

    step_history : ``list`` of ``(float, float)``
        ``(damping, residual)`` per Newton step, or ``(t, residual)`` per RK4
        step followed by the polishing steps.

    area_shift : ``float``
        Unit-area shift from :py:func:`area_shift`; 0 until normalized.

    decay_deviation : ``list`` of ``(float, float)``
        Flow only: ``(t, max|K(u(t)) - (1 - t) K(u(0))|)`` per RK4 step.

    tol : ``float``
        Requested curvature tolerance.
    """

    def __init__(
        self,
        method: str,
        iterations: int,
        final_residual: float,
        step_history: List[Tuple[float, float]],
        tol: float,
        decay_deviation: Optional[List[Tuple[float, float]]] = None,
        area_shift: float = 0.0,
    ):
        self.method = method
        self.iterations = iterations
        self.final_residual = final_residual
        self.step_history = step_history
        self.tol = tol
        self.decay_deviation = decay_deviation or []
        self.area_shift = area_shift

    def __repr__(self):
        return (
            f"SolveReport(method={self.method!r}, "
            f"iterations={self.iterations}, "
            f"final_residual={self.final_residual:.3e}, "
            f"area_shift={self.area_shift:.6g})"
        )

    @property
    def max_decay_deviation(self) -> float:
        if not self.decay_deviation:
            return 0.0

        return max(dev for _, dev in self.decay_deviation)

    def deviation_at(self, t: float) -> float:
        """Decay-law deviation at the RK4 checkpoint closest to ``t``."""
        if not self.decay_deviation:
            msg = "This report has no decay-law checkpoints."
            logger.error(msg)
            raise ValueError(msg)

        return min(self.decay_deviation, key=lambda item: abs(item[0] - t))[1]

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "area_shift": self.area_shift,
            "tol": self.tol,
            "log": [list(step) for step in self.step_history],
            "decay_deviation": [list(d) for d in self.decay_deviation],
        }


def _curvature_at(triangulation, packing, u) -> np.ndarray:
    moved = apply_conformal_factor(packing, u)
    lengths = edge_lengths_from_packing(triangulation, moved)

    return discrete_curvature(
        triangulation, inner_angles(triangulation, lengths)
    ).K


def newton_uniformize(
    triangulation: Triangulation,
    packing: CirclePacking,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    *,
    u0=None,
    max_halvings: int = DEFAULT_MAX_HALVINGS,
    linear_tol: float = DEFAULT_LINEAR_TOL,
    linear_iter_factor: int = DEFAULT_LINEAR_ITER_FACTOR,
) -> Tuple[ConformalFactor, SolveReport]:
    """Newton's method for ``K(u) = 0``.

    Each step solves ``Lap_eta(u) delta = K(u)`` and halves the step until
    the trial factor is a valid metric and ``max|K|`` strictly decreases.
    Iterates are projected to mean zero.

    Arguments
    ---------
    triangulation : |Triangulation|

    packing : |CirclePacking|
        The initial metric; ``u`` is measured relative to it.

    tol : ``float``, optional
        Target ``max|K(u)|``.

    max_iter : ``int``, optional
        Newton step cap.

    u0 : array-like, optional, keyword-only
        Starting factor. Defaults to zero. Only its mean-free part matters.

    max_halvings : ``int``, optional, keyword-only
        Line-search halvings allowed per step.

    linear_tol, linear_iter_factor : optional, keyword-only
        Passed to :py:func:`~flatpack.graph.solve_laplacian`.

    Returns
    -------
    factor : |ConformalFactor|
        Mean-zero solution.

    report : :py:class:`SolveReport`

    Raises
    ------
    :py:class:`~flatpack.graph.NoConvergenceError`
        If ``max_iter`` steps do not reach ``tol``.

    :py:class:`LostAdmissibilityError`
        If the starting factor is not a valid metric or the line search runs
        out of halvings.
    """
    if tol <= 0:
        msg = f"Newton tolerance must be positive, got {tol}."
        logger.error(msg)
        raise ValueError(msg)

    graph = triangulation.graph
    n = triangulation.num_vertices

    u = np.zeros(n) if u0 is None else np.array(u0, dtype=float).reshape(-1)
    u = u - u.mean()

    try:
        K = _curvature_at(triangulation, packing, u)

    except DegenerateFaceError as e:
        msg = f"Starting factor does not give a valid metric: {e}"
        logger.error(msg)
        raise LostAdmissibilityError(msg) from e

    residual = float(np.max(np.abs(K)))
    history = [(0.0, residual)]
    iterations = 0

    logger.debug(f"Newton start: max|K| = {residual:.3e}")

    while residual > tol:
        if iterations >= max_iter:
            msg = (
                f"Newton did not reach max|K| <= {tol:g} in {max_iter} "
                f"steps (max|K| = {residual:.3e})."
            )
            logger.error(msg)
            raise NoConvergenceError(msg)

        weights = eta_weights(
            triangulation, apply_conformal_factor(packing, u)
        )
        delta = solve_laplacian(
            graph,
            weights.eta,
            K - K.mean(),
            tol=linear_tol,
            iter_factor=linear_iter_factor,
        )

        step = 1.0

        for _ in range(max_halvings + 1):
            trial = u + step * delta
            trial -= trial.mean()

            try:
                K_trial = _curvature_at(triangulation, packing, trial)
                trial_residual = float(np.max(np.abs(K_trial)))

                if trial_residual < residual:
                    break

            except DegenerateFaceError:
                pass

            step *= 0.5
            logger.debug(f"Newton step {iterations + 1}: halving to {step:g}")

        else:
            msg = (
                f"Line search exhausted {max_halvings} halvings at Newton "
                f"step {iterations + 1} (max|K| = {residual:.3e})."
            )
            logger.error(msg)
            raise LostAdmissibilityError(msg)

        u, K, residual = trial, K_trial, trial_residual
        iterations += 1
        history.append((step, residual))

        logger.debug(
            f"Newton step {iterations}: damping {step:g}, "
            f"max|K| = {residual:.3e}"
        )

    logger.info(
        f"Newton converged in {iterations} step(s), max|K| = {residual:.3e}"
    )

    report = SolveReport("newton", iterations, residual, history, tol)

    return ConformalFactor(u), report


def continuation_flow(
    triangulation: Triangulation,
    packing: CirclePacking,
    num_steps: int = DEFAULT_NUM_STEPS,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    *,
    max_halvings: int = DEFAULT_MAX_HALVINGS,
    linear_tol: float = DEFAULT_LINEAR_TOL,
    linear_iter_factor: int = DEFAULT_LINEAR_ITER_FACTOR,
) -> Tuple[ConformalFactor, SolveReport]:
    """Integrates ``u' = Lap_eta(u)^-1 K(u(0))`` from ``u(0) = 0`` to
    ``t = 1`` with ``num_steps`` classical RK4 steps, then polishes with
    :py:func:`newton_uniformize` to ``tol``.

    The right-hand side uses the fixed initial curvature, so along the exact
    trajectory ``K(u(t)) = (1 - t) K(u(0))``. The measured deviation from this
    law at every step is recorded in ``report.decay_deviation``.

    Raises
    ------
    :py:class:`LostAdmissibilityError`
        If an RK4 stage leaves the set of valid metrics.

    :py:class:`~flatpack.graph.NoConvergenceError`
        If the polishing Newton iteration fails.
    """
    if num_steps < 1:
        msg = f"The flow needs at least one RK4 step, got {num_steps}."
        logger.error(msg)
        raise ValueError(msg)

    graph = triangulation.graph
    n = triangulation.num_vertices

    try:
        K0 = _curvature_at(triangulation, packing, np.zeros(n))

    except DegenerateFaceError as e:
        msg = f"Initial packing does not give a valid metric: {e}"
        logger.error(msg)
        raise LostAdmissibilityError(msg) from e

    rhs = K0 - K0.mean()

    def velocity(u):
        try:
            eta = eta_weights(
                triangulation, apply_conformal_factor(packing, u)
            ).eta

        except DegenerateFaceError as e:
            msg = f"Continuation flow left the valid metrics: {e}"
            logger.error(msg)
            raise LostAdmissibilityError(msg) from e

        return solve_laplacian(
            graph, eta, rhs, tol=linear_tol, iter_factor=linear_iter_factor
        )

    h = 1.0 / num_steps
    u = np.zeros(n)
    history = []
    deviations = []

    for s in range(num_steps):
        k1 = velocity(u)
        k2 = velocity(u + 0.5 * h * k1)
        k3 = velocity(u + 0.5 * h * k2)
        k4 = velocity(u + h * k3)

        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        u -= u.mean()
        t = (s + 1) * h

        try:
            K = _curvature_at(triangulation, packing, u)

        except DegenerateFaceError as e:
            msg = f"Continuation flow left the valid metrics at t={t:g}: {e}"
            logger.error(msg)
            raise LostAdmissibilityError(msg) from e

        residual = float(np.max(np.abs(K)))
        deviation = float(np.max(np.abs(K - (1.0 - t) * K0)))
        history.append((t, residual))
        deviations.append((t, deviation))

        logger.debug(
            f"Flow t={t:.4f}: max|K| = {residual:.3e}, "
            f"decay deviation = {deviation:.3e}"
        )

    factor, polish = newton_uniformize(
        triangulation,
        packing,
        tol,
        max_iter,
        u0=u,
        max_halvings=max_halvings,
        linear_tol=linear_tol,
        linear_iter_factor=linear_iter_factor,
    )

    report = SolveReport(
        "flow",
        num_steps + polish.iterations,
        polish.final_residual,
        history + polish.step_history[1:],
        tol,
        decay_deviation=deviations,
    )

    logger.info(
        f"Flow finished: {num_steps} RK4 step(s) + {polish.iterations} "
        f"Newton step(s), max decay deviation "
        f"{report.max_decay_deviation:.3e}"
    )

    return factor, report


def area_shift(
    triangulation: Triangulation, packing: CirclePacking, factor
) -> float:
    """The constant ``a = -log(Area) / 2`` that rescales the metric of
    ``packing`` moved by ``factor`` to unit area.
    """
    lengths = edge_lengths_from_packing(
        triangulation, apply_conformal_factor(packing, factor)
    )

    return -0.5 * math.log(mesh_area(triangulation, lengths))


def normalize_area(
    triangulation: Triangulation, packing: CirclePacking, factor
) -> ConformalFactor:
    """``u + a`` with ``a`` chosen so the induced metric has unit area.

    Curvature is unchanged since angles are scale invariant.
    """
    u = factor.u if isinstance(factor, ConformalFactor) else np.asarray(factor)
    a = area_shift(triangulation, packing, u)

    logger.debug(f"Area normalization shift a = {a:.12g}")

    return ConformalFactor(u + a)


def uniformize(
    triangulation: Triangulation,
    packing: CirclePacking,
    method: str = "newton",
    settings: Optional[Settings] = None,
    *,
    u0=None,
) -> Tuple[ConformalFactor, SolveReport]:
    """Discrete uniformization factor with unit area.

    Arguments
    ---------
    triangulation : |Triangulation|

    packing : |CirclePacking|

    method : ``str``, optional
        ``"newton"`` (default) or ``"flow"``.

    settings : |Settings|, optional
        Solver settings, see :py:func:`~flatpack.param.solver_settings`.

    u0 : array-like, optional, keyword-only
        Newton starting factor (ignored by the flow).
    """
    settings = settings if settings is not None else solver_settings()
    common = settings.as_dict(
        "max_halvings", "linear_tol", "linear_iter_factor"
    )

    if method == "newton":
        factor, report = newton_uniformize(
            triangulation,
            packing,
            settings["tol"],
            settings["max_iter"],
            u0=u0,
            **common,
        )

    elif method == "flow":
        factor, report = continuation_flow(
            triangulation,
            packing,
            settings["num_steps"],
            settings["tol"],
            settings["max_iter"],
            **common,
        )

    else:
        msg = f"Unknown uniformization method {method!r}."
        logger.error(msg)
        raise ValueError(msg)

    report.area_shift = area_shift(triangulation, packing, factor)

    return factor.shifted(report.area_shift), report
