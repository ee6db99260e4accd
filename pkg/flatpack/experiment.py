"""Ground-truth tori and the convergence study for the discrete
uniformization factor.

A :py:class:`SmoothTorusModel` carries a smooth field ``ubar`` on a flat
unit-area torus. The background metric is taken to be
``g = exp(-2 ubar) * flat``, so ``ubar`` is by construction the smooth
uniformization factor of ``g``: ``exp(2 ubar) g`` is the flat lattice metric.
Meshes of ``(M, g)`` are built on the hexagonal vertex set with edge lengths
from the midpoint rule, the solver is run on them, and the discrete factor is
compared with ``ubar`` at the vertices.
"""
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import logging
import math
import time

import numpy as np
import pandas as pd
from scipy import linalg

from .graph import NoConvergenceError, divergence
from .mesh import (
    Triangulation,
    VertexEmbedding,
    hex_lattice,
    hex_torus,
    minimal_image,
)
from .packing import (
    CirclePacking,
    EdgeLengths,
    apply_conformal_factor,
    check_regularity,
    discrete_curvature,
    edge_lengths_from_packing,
    fit_uniform_packing,
    inner_angles,
)
from .param import (
    FIELD_NAMES,
    FlatpackError,
    Settings,
    experiment_settings,
    solver_settings,
)
from .uniformize import angle_defect_flow, uniformize
from .utils.fit_functions import convergence_order

logger = logging.getLogger(__name__)

STUDY_COLUMNS = ("n", "l_max", "err_max", "err_l2", "iterations", "runtime_ms")

# Gradient sup norm at which the refined geodesic is accepted.
GEODESIC_TOL = 1e-10


class RegularityFailureError(FlatpackError):
    pass


class SmoothTorusModel:
    """A smooth conformal factor on a flat unit-area torus.

    Fields are written in lattice coordinates ``(x, y)``, in which they are
    1-periodic:

    + ``"default"``: ``A (sin 2 pi x sin 2 pi y + cos(2 pi x) / 2)``;
    + ``"sine"``: ``A sin 2 pi x sin 2 pi y``;
    + ``"constant"``: ``A`` everywhere;
    + ``"zero"``: 0 everywhere.

    Attributes
    ----------
    field : ``str``
        One of the names above.

    amplitude : ``float``
        ``A``.

    lattice : :py:class:`numpy.ndarray`, shape ``(2, 2)``
        Unit-area basis, rows are basis vectors. Defaults to the hexagonal
        lattice.
    """

    def __init__(
        self, field: str = "default", amplitude: float = 0.05, lattice=None
    ):
        if field not in FIELD_NAMES:
            msg = f"Unknown field {field!r}; expected one of {FIELD_NAMES}."
            logger.error(msg)
            raise ValueError(msg)

        if not math.isfinite(amplitude):
            msg = f"Field amplitude must be finite, got {amplitude}."
            logger.error(msg)
            raise ValueError(msg)

        lattice = hex_lattice() if lattice is None else lattice
        lattice = np.array(lattice, dtype=float).reshape(2, 2)
        det = float(np.linalg.det(lattice))

        if abs(det - 1.0) > 1e-12:
            msg = f"Model lattice must have unit area, got determinant {det}."
            logger.error(msg)
            raise ValueError(msg)

        self.field = field
        self.amplitude = float(amplitude)
        self.lattice = lattice
        self._inverse = np.linalg.inv(lattice)

    def __repr__(self):
        return (
            f"SmoothTorusModel(field={self.field!r}, "
            f"amplitude={self.amplitude})"
        )

    def lattice_coords(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self._inverse

    def ubar(self, points) -> np.ndarray:
        """``ubar`` at Cartesian ``points`` of shape ``(..., 2)``."""
        coords = self.lattice_coords(points)
        x = 2.0 * np.pi * coords[..., 0]
        y = 2.0 * np.pi * coords[..., 1]
        a = self.amplitude

        if self.field == "default":
            return a * (np.sin(x) * np.sin(y) + 0.5 * np.cos(x))

        if self.field == "sine":
            return a * np.sin(x) * np.sin(y)

        value = a if self.field == "constant" else 0.0

        return np.full(coords.shape[:-1], value)

    def ubar_gradient(self, points) -> np.ndarray:
        """Cartesian gradient of ``ubar``, shape ``(..., 2)``."""
        coords = self.lattice_coords(points)
        x = 2.0 * np.pi * coords[..., 0]
        y = 2.0 * np.pi * coords[..., 1]
        w = 2.0 * np.pi * self.amplitude

        if self.field == "default":
            dx = w * (np.cos(x) * np.sin(y) - 0.5 * np.sin(x))
            dy = w * np.sin(x) * np.cos(y)

        elif self.field == "sine":
            dx = w * np.cos(x) * np.sin(y)
            dy = w * np.sin(x) * np.cos(y)

        else:
            dx = np.zeros(coords.shape[:-1])
            dy = np.zeros(coords.shape[:-1])

        # Chain rule through coords = points @ inverse.
        return np.stack([dx, dy], axis=-1) @ self._inverse.T

    def background_density(self, points) -> np.ndarray:
        """Area density of ``g = exp(-2 ubar) * flat``."""
        return np.exp(-2.0 * self.ubar(points))

    @property
    def oscillation_bound(self) -> float:
        """Upper bound on ``max ubar - min ubar``."""
        a = abs(self.amplitude)

        if self.field == "default":
            return 3.0 * a

        if self.field == "sine":
            return 2.0 * a

        return 0.0

    def packable(self, eps: float) -> bool:
        """Whether edge length ratios are guaranteed to stay above
        ``sqrt((1 + eps) / 2)``, the uniform packing limit.
        """
        return math.exp(self.oscillation_bound) < math.sqrt(2.0 / (1.0 + eps))


class ReferenceFactor:
    """``ubar`` shifted so that ``exp(2 ubar0) g`` has unit area.

    Attributes
    ----------
    model : :py:class:`SmoothTorusModel`

    shift : ``float``
        ``-log(area) / 2`` for the quadrature area before the shift.

    area : ``float``
        Quadrature area of ``exp(2 ubar0) g`` after the shift.
    """

    def __init__(self, model: SmoothTorusModel, shift: float, area: float):
        self.model = model
        self.shift = shift
        self.area = area

    def __repr__(self):
        return f"ReferenceFactor(shift={self.shift:.3e}, area={self.area!r})"

    def __call__(self, points) -> np.ndarray:
        return self.model.ubar(points) + self.shift


def quadrature_area(
    model: SmoothTorusModel, density, order: int = 8, panels: int = 8
) -> float:
    """Integral of ``density`` over the fundamental domain with composite
    Gauss-Legendre quadrature, ``panels`` by ``panels`` cells of
    ``order**2`` points each.
    """
    nodes, weights = np.polynomial.legendre.leggauss(order)
    cell = 1.0 / panels
    starts = np.arange(panels) * cell
    t = (starts[:, None] + 0.5 * cell * (nodes[None, :] + 1.0)).ravel()
    w = np.tile(0.5 * cell * weights, panels)

    x, y = np.meshgrid(t, t, indexing="ij")
    coords = np.stack([x, y], axis=-1)
    values = density(coords @ model.lattice)

    jacobian = abs(float(np.linalg.det(model.lattice)))

    return float(jacobian * np.einsum("i,j,ij->", w, w, values))


def reference_factor(
    model: SmoothTorusModel, order: int = 8, panels: int = 8
) -> ReferenceFactor:
    """The unit-area normalized smooth factor ``ubar0``.

    The area of ``exp(2 ubar) g`` is integrated numerically from the density
    ``exp(2 ubar) * exp(-2 ubar)``; it is 1 up to rounding, so the shift is
    zero to machine precision.
    """
    def density(points):
        return np.exp(2.0 * model.ubar(points)) * model.background_density(
            points
        )

    area = quadrature_area(model, density, order, panels)
    shift = -0.5 * math.log(area)
    normalized = area * math.exp(2.0 * shift)

    logger.debug(f"Reference factor: area {area!r}, shift {shift:.3e}")

    return ReferenceFactor(model, shift, normalized)


def midpoint_edge_length(model: SmoothTorusModel, p, q) -> float:
    """``exp(-ubar(m)) * |q - p|`` for the minimal-image segment from ``p``
    to ``q`` with midpoint ``m``.

    The error against the true ``g``-length is cubic in ``|q - p|``. Tied
    images resolve to the lexicographically smallest displacement with an
    :py:class:`~flatpack.mesh.AmbiguousImageWarning`.
    """
    p = np.asarray(p, dtype=float)
    d = minimal_image(model.lattice, p, q)

    return float(np.exp(-model.ubar(p + 0.5 * d)) * np.linalg.norm(d))


def _midpoint_lengths(
    model: SmoothTorusModel, triangulation: Triangulation, embedding
) -> np.ndarray:
    i = triangulation.edges[:, 0]
    d = embedding.edge_displacements(triangulation)
    midpoints = embedding.positions[i] + 0.5 * d

    return np.exp(-model.ubar(midpoints)) * np.linalg.norm(d, axis=1)


def _polyline_length(model, base, normal, tau, weights, offsets):
    """Length of the polyline through ``base + offsets * normal`` with every
    segment integrated by Gauss-Legendre quadrature, and its gradient with
    respect to the interior offsets.
    """
    full = np.zeros(base.shape[0])
    full[1:-1] = offsets
    nodes = base + full[:, None] * normal

    steps = np.diff(nodes, axis=0)
    step_len = np.linalg.norm(steps, axis=1)
    points = nodes[:-1, None, :] + tau[None, :, None] * steps[:, None, :]

    phi = np.exp(-model.ubar(points))
    grad_phi = -phi[..., None] * model.ubar_gradient(points)
    mean_phi = phi @ weights

    length = float(np.sum(step_len * mean_phi))

    unit = steps / step_len[:, None]
    tail = np.einsum("g,sgc->sc", weights * (1.0 - tau), grad_phi)
    head = np.einsum("g,sgc->sc", weights * tau, grad_phi)

    grad_nodes = np.zeros_like(nodes)
    grad_nodes[:-1] += -unit * mean_phi[:, None] + step_len[:, None] * tail
    grad_nodes[1:] += unit * mean_phi[:, None] + step_len[:, None] * head

    return length, grad_nodes[1:-1] @ normal


def geodesic_length_refined(
    model: SmoothTorusModel,
    p,
    q,
    segments: int = 32,
    quadrature_points: int = 3,
    max_iter: int = 50,
) -> float:
    """Length in ``g`` of the shortest polyline from ``p`` to ``q`` with
    ``segments`` pieces.

    Interior nodes move along the perpendiculars to the straight
    minimal-image segment through its uniform subdivision points, and each
    piece is integrated with ``quadrature_points``-point Gauss-Legendre
    quadrature. The node offsets are found by Newton's method on the
    stationarity condition, with the tridiagonal Hessian taken from central
    differences of the analytic gradient, until the gradient sup norm is at
    most ``1e-10``. Refining by doubling nests the feasible sets, so the
    length does not increase.

    Raises
    ------
    ValueError
        If ``segments < 2``.

    :py:class:`~flatpack.graph.NoConvergenceError`
        If Newton's method does not reach the gradient tolerance.
    """
    if segments < 2:
        msg = f"A refined geodesic needs at least 2 segments, got {segments}."
        logger.error(msg)
        raise ValueError(msg)

    p = np.asarray(p, dtype=float)
    d = minimal_image(model.lattice, p, q)
    distance = float(np.linalg.norm(d))

    if distance == 0.0:
        return 0.0

    normal = np.array([-d[1], d[0]]) / distance
    base = p + (np.arange(segments + 1) / segments)[:, None] * d

    gl_nodes, gl_weights = np.polynomial.legendre.leggauss(quadrature_points)
    tau = 0.5 * (gl_nodes + 1.0)
    weights = 0.5 * gl_weights

    def evaluate(offsets):
        return _polyline_length(model, base, normal, tau, weights, offsets)

    size = segments - 1
    offsets = np.zeros(size)
    h = 1e-6 * distance / segments
    index = np.arange(size)

    length, grad = evaluate(offsets)

    for iteration in range(max_iter):
        if np.max(np.abs(grad)) <= GEODESIC_TOL:
            break

        diag = np.zeros(size)
        upper = np.zeros(max(size - 1, 0))
        lower = np.zeros(max(size - 1, 0))

        # Offsets three apart never share a gradient entry.
        for color in range(3):
            hit = index % 3 == color
            bump = np.where(hit, h, 0.0)
            plus = evaluate(offsets + bump)[1]
            minus = evaluate(offsets - bump)[1]
            column = (plus - minus) / (2.0 * h)

            diag[hit] = column[hit]

            # Row k, column k + 1 and row k + 1, column k.
            above = hit[1:]
            below = hit[:-1]
            upper[above] = column[:-1][above]
            lower[below] = column[1:][below]

        banded = np.zeros((3, size))
        banded[0, 1:] = 0.5 * (upper + lower)
        banded[1] = diag
        banded[2, :-1] = 0.5 * (upper + lower)

        offsets = offsets + linalg.solve_banded((1, 1), banded, -grad)
        length, grad = evaluate(offsets)

        logger.debug(
            f"Geodesic Newton step {iteration + 1}: length {length!r}, "
            f"|grad| {np.max(np.abs(grad)):.3e}"
        )

    else:
        if np.max(np.abs(grad)) > GEODESIC_TOL:
            msg = (
                f"Refined geodesic did not converge in {max_iter} steps "
                f"(|grad| = {np.max(np.abs(grad)):.3e})."
            )
            logger.error(msg)
            raise NoConvergenceError(msg)

    return length


class ExperimentMesh(NamedTuple):
    triangulation: Triangulation
    lengths: EdgeLengths
    packing: CirclePacking
    embedding: VertexEmbedding


def build_experiment_mesh(
    model: SmoothTorusModel, n: int, eps: float
) -> ExperimentMesh:
    """An ``eps``-regular uniform circle-packing mesh of ``(M, g)``.

    Vertices are those of :py:func:`~flatpack.mesh.hex_torus`; edge lengths
    come from the midpoint rule in ``g``.

    Raises
    ------
    ValueError
        If ``n < 8`` or ``eps`` is outside ``(0, 0.5]``.

    :py:class:`~flatpack.packing.NotUniformlyPackableError`
        If the field oscillates too much for a uniform packing.

    :py:class:`RegularityFailureError`
        If the fitted packing is not ``eps``-regular.
    """
    if not isinstance(n, (int, np.integer)) or n < 8:
        msg = f"Experiment meshes need n >= 8, got {n!r}."
        logger.error(msg)
        raise ValueError(msg)

    if not 0.0 < eps <= 0.5:
        msg = f"Experiment eps must be in (0, 0.5], got {eps}."
        logger.error(msg)
        raise ValueError(msg)

    if not model.packable(eps):
        logger.warning(
            f"{model} may be too oscillatory for a uniform packing at "
            f"eps={eps}."
        )

    triangulation, embedding = hex_torus(int(n))
    lengths = EdgeLengths(_midpoint_lengths(model, triangulation, embedding))
    packing = fit_uniform_packing(triangulation, lengths, eps)

    report = check_regularity(triangulation, lengths, packing, eps)

    if not report.regular:
        msg = (
            f"Mesh n={n} is not {eps}-regular: "
            f"{', '.join(report.violations)}."
        )
        logger.error(msg)
        raise RegularityFailureError(msg)

    return ExperimentMesh(triangulation, lengths, packing, embedding)


def consistency_diagnostics(
    model: SmoothTorusModel, mesh: ExperimentMesh
) -> Dict[str, float]:
    """How well the smooth factor already uniformizes the discrete metric.

    Returns a dict with

    + ``curvature``: ``max|K|`` of the packing moved by ``ubar`` at the
      vertices, expected to shrink like ``|l|**2``;
    + ``flow_ratio``: ``max |x_ij| / l_ij**2`` for the angle-defect flow
      between the flat lattice triangles and the moved triangles;
    + ``flow_divergence_error``: ``max|div(x) - K|``, zero up to rounding;
    + ``angle_deviation``: largest corner angle change against the flat
      triangles;
    + ``size``: ``|l|``.
    """
    triangulation, lengths, packing, embedding = mesh

    ubar_vertices = model.ubar(embedding.positions)
    moved = apply_conformal_factor(packing, ubar_vertices)
    moved_angles = inner_angles(
        triangulation, edge_lengths_from_packing(triangulation, moved)
    )
    K = discrete_curvature(triangulation, moved_angles).K

    flat = EdgeLengths(embedding.flat_lengths(triangulation))
    flat_angles = inner_angles(triangulation, flat)

    x = angle_defect_flow(triangulation, flat_angles, moved_angles)
    div = divergence(triangulation.graph, x)
    flat_K = discrete_curvature(triangulation, flat_angles).K

    return {
        "curvature": float(np.max(np.abs(K))),
        "flow_ratio": float(np.max(np.abs(x) / lengths.values**2)),
        "flow_divergence_error": float(np.max(np.abs(div - (K - flat_K)))),
        "angle_deviation": float(
            np.max(np.abs(moved_angles.theta - flat_angles.theta))
        ),
        "size": lengths.size,
    }


class ConvergenceRow(NamedTuple):
    n: int
    l_max: float
    err_max: float
    err_l2: float
    iterations: int
    runtime_ms: float
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


class StudyResult(NamedTuple):
    rows: List[ConvergenceRow]
    order: float
    band: Tuple[float, float]

    def frame(self) -> pd.DataFrame:
        """The rows as a table with the CSV columns."""
        return pd.DataFrame(
            [[getattr(row, c) for c in STUDY_COLUMNS] for row in self.rows],
            columns=list(STUDY_COLUMNS),
        )


def _study_row(
    model: SmoothTorusModel,
    n: int,
    eps: float,
    method: str,
    solver_values: dict,
    quadrature: Tuple[int, int],
) -> ConvergenceRow:
    settings = solver_settings()
    settings.update(solver_values)

    start = time.perf_counter()
    l_max = float("nan")

    try:
        mesh = build_experiment_mesh(model, n, eps)
        l_max = mesh.lengths.size
        factor, report = uniformize(
            mesh.triangulation, mesh.packing, method, settings
        )

    except FlatpackError as e:
        runtime = 1e3 * (time.perf_counter() - start)
        logger.warning(f"Study row n={n} failed: {type(e).__name__}: {e}")
        nan = float("nan")

        return ConvergenceRow(
            n, l_max, nan, nan, 0, runtime, f"{type(e).__name__}: {e}"
        )

    reference = reference_factor(model, *quadrature)
    diff = factor.u - reference(mesh.embedding.positions)
    runtime = 1e3 * (time.perf_counter() - start)

    row = ConvergenceRow(
        n,
        l_max,
        float(np.max(np.abs(diff))),
        float(np.linalg.norm(diff)),
        report.iterations,
        runtime,
    )

    logger.info(
        f"Study row n={n}: |l|={row.l_max:.4g}, err_max={row.err_max:.4e}, "
        f"{row.iterations} iteration(s), {row.runtime_ms:.0f} ms"
    )

    return row


def convergence_study(
    model: SmoothTorusModel,
    n_list: Sequence[int],
    eps: float,
    method: str = "newton",
    settings: Optional[Settings] = None,
    experiment: Optional[Settings] = None,
    workers: Optional[int] = None,
) -> StudyResult:
    """Runs the solver over a refinement family and fits the order of
    ``err_max`` against ``|l|``.

    Arguments
    ---------
    model : :py:class:`SmoothTorusModel`

    n_list : sequence of ``int``
        Strictly increasing subdivisions.

    eps : ``float``
        Regularity floor used to build every mesh.

    method : ``str``, optional
        ``"newton"`` or ``"flow"``.

    settings : |Settings|, optional
        Solver settings.

    experiment : |Settings|, optional
        Experiment settings; supplies the quadrature rule and, unless
        ``workers`` is given, the worker count.

    workers : ``int``, optional
        Processes to spread rows over. Rows are returned in ``n`` order.

    Returns
    -------
    :py:class:`StudyResult`
        Rows whose build or solve failed carry NaN errors and the error
        message; they are left out of the fit.
    """
    n_list = [int(n) for n in n_list]

    if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])):
        msg = f"Study sizes must be strictly increasing, got {n_list}."
        logger.error(msg)
        raise ValueError(msg)

    settings = settings if settings is not None else solver_settings()
    experiment = experiment if experiment is not None else (
        experiment_settings()
    )
    workers = workers if workers is not None else experiment["workers"]

    solver_values = settings.as_dict()
    quadrature = (
        experiment["quadrature_order"],
        experiment["quadrature_panels"],
    )
    jobs = [(model, n, eps, method, solver_values, quadrature) for n in n_list]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_study_row, *job) for job in jobs]
            rows = [future.result() for future in futures]

    else:
        rows = [_study_row(*job) for job in jobs]

    good = [row for row in rows if not row.failed]
    order, band = convergence_order(
        [row.l_max for row in good], [row.err_max for row in good]
    )

    logger.info(
        f"Fitted order {order:.4g} with 95% band "
        f"[{band[0]:.4g}, {band[1]:.4g}] over {len(good)} row(s)"
    )

    return StudyResult(rows, order, band)


def write_study_csv(result: StudyResult, path: str):
    """Writes the rows with columns ``n, l_max, err_max, err_l2, iterations,
    runtime_ms`` followed by a ``# fitted_order=<value>`` comment line.
    """
    result.frame().to_csv(path, index=False, na_rep="nan")

    with open(path, "a") as f:
        f.write(f"# fitted_order={result.order:.6f}\n")

    logger.info(f"Wrote convergence study to {path}")


def read_study_csv(path: str) -> Tuple[pd.DataFrame, float]:
    """Reads a file written by :py:func:`write_study_csv`."""
    frame = pd.read_csv(path, comment="#")
    order = float("nan")

    with open(path) as f:
        for line in f:
            if line.startswith("# fitted_order="):
                order = float(line.split("=", 1)[1])

    return frame, order


def cubic_estimate(
    model: SmoothTorusModel,
    center,
    direction,
    sizes: Sequence[float] = (0.2, 0.1, 0.05, 0.025),
    experiment: Optional[Settings] = None,
) -> Tuple[np.ndarray, float]:
    """Midpoint-rule error against the refined geodesic for segments of the
    given lengths centred on ``center``, and the log-log slope of that error.

    The refined geodesic uses the ``geodesic_segments`` entry of
    ``experiment``, which defaults to
    :py:func:`~flatpack.param.experiment_settings`.
    """
    experiment = experiment if experiment is not None else (
        experiment_settings()
    )
    segments = experiment["geodesic_segments"]

    center = np.asarray(center, dtype=float)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)

    errors = []

    for s in sizes:
        # Same midpoint for every size.
        p = center - 0.5 * s * direction
        q = center + 0.5 * s * direction
        errors.append(
            abs(
                midpoint_edge_length(model, p, q)
                - geodesic_length_refined(model, p, q, segments)
            )
        )

    errors = np.array(errors)

    return errors, convergence_order(sizes, errors)[0]
