"""Command-line interface.

.. code-block:: text

    flatpack gen-hex --n 16 --out mesh.json
    flatpack fit-packing --mesh mesh.json --eps 0.1 --out packed.json
    flatpack check --mesh packed.json
    flatpack uniformize --mesh packed.json --method newton --out result.json
    flatpack convergence --sizes 8,16,32,64 --eps 0.1 --out study.csv

Every subcommand accepts ``--config settings.json`` (an object with optional
``"solver"`` and ``"experiment"`` sections) and ``-v``/``-vv``. Flags given on
the command line override the configuration file.
"""
from typing import List, Optional

import argparse
import json
import logging
import sys

from . import experiment, graph, mesh, mesh_file, packing, uniformize
from .param import FlatpackError, experiment_settings, solver_settings

logger = logging.getLogger(__name__)

RESULT_VERSION = 1


def _sizes(text: str) -> List[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]

    except ValueError:
        raise argparse.ArgumentTypeError(
            f"Sizes must be comma-separated integers, got {text!r}."
        )


def _settings(args):
    solver = solver_settings()
    study = experiment_settings()

    if args.config is not None:
        solver.load(args.config, section="solver")
        study.load(args.config, section="experiment")

    solver.update(
        {
            "tol": getattr(args, "tol", None),
            "max_iter": getattr(args, "max_iter", None),
            "num_steps": getattr(args, "num_steps", None),
        }
    )
    study.update(
        {
            "eps": getattr(args, "eps", None),
            "field": getattr(args, "field", None),
            "amplitude": getattr(args, "amplitude", None),
            "workers": getattr(args, "workers", None),
        }
    )

    return solver, study


def gen_hex(args) -> int:
    T, embedding = mesh.hex_torus(args.n)
    lengths = embedding.flat_lengths(T)
    document = mesh_file.MeshDocument(T, lengths=lengths, embedding=embedding)
    mesh_file.save_mesh(args.out, document)

    print(f"{T} written to {args.out}")

    return 0


def fit_packing(args) -> int:
    eps = args.eps

    document = mesh_file.load_mesh(args.mesh)
    lengths = document.edge_lengths

    if lengths is None:
        msg = f"{args.mesh} has neither 'lengths' nor an embedding."
        logger.error(msg)
        raise mesh_file.MeshFormatError(msg)

    T = document.triangulation
    fitted = packing.fit_uniform_packing(T, lengths, eps)
    report = packing.check_regularity(T, lengths, fitted, eps)

    print(f"rho0: {fitted.rho[0]:.12g}")
    print(report)

    if args.out is not None:
        document.rho = fitted.rho
        document.cos_theta = fitted.cos_theta
        document.lengths = lengths.values
        mesh_file.save_mesh(args.out, document)

    return 0 if report.regular else 1


def check(args) -> int:
    document = mesh_file.load_mesh(args.mesh, validate=False)
    T = document.triangulation
    report = mesh.validate(T)

    print(report)

    if not report.ok:
        return 1

    circles = document.packing

    if circles is not None:
        lengths = packing.edge_lengths_from_packing(T, circles)
    else:
        lengths = document.edge_lengths

    if (
        lengths is not None
        and T.num_vertices <= graph.MAX_ISOPERIMETRIC_VERTICES
    ):
        constant = graph.isoperimetric_constant(
            T.graph.with_lengths(lengths.values)
        )
        print(f"isoperimetric constant: {constant:.12g}")

    if circles is not None:
        curvature = packing.packing_curvature(T, circles)
        print(f"total curvature: {curvature.total:.3e}")
        print(f"max |K|: {curvature.sup_norm:.3e}")

        weights = uniformize.eta_weights(T, circles)
        spectrum = graph.laplacian_spectrum(T.graph, weights.eta)
        print(f"eta range: [{weights.eta.min():.6g}, {weights.eta.max():.6g}]")

        for key, value in spectrum.items():
            print(f"{key}: {value}")

        if args.eps is not None:
            regularity = packing.check_regularity(
                T, lengths, circles, args.eps
            )
            print(regularity)

            if not regularity.regular:
                return 1

    return 0


def run_uniformize(args) -> int:
    solver, _ = _settings(args)

    document = mesh_file.load_mesh(args.mesh)
    circles = document.packing

    if circles is None:
        msg = (
            f"{args.mesh} has no circle packing; run fit-packing first or "
            f"supply 'rho' and 'cos_theta'."
        )
        logger.error(msg)
        raise mesh_file.MeshFormatError(msg)

    T = document.triangulation
    factor, report = uniformize.uniformize(T, circles, args.method, solver)
    curvature = packing.packing_curvature(
        T, packing.apply_conformal_factor(circles, factor)
    )

    result = {
        "version": RESULT_VERSION,
        "method": report.method,
        "u": factor.u.tolist(),
        "curvature": curvature.K.tolist(),
        "area_shift": report.area_shift,
        "iterations": report.iterations,
        "final_residual": report.final_residual,
        "log": [list(step) for step in report.step_history],
    }

    if args.out is not None:
        with open(args.out, "w") as f:
            json.dump(result, f, indent=1)

    print(report)

    return 0


def convergence(args) -> int:
    solver, study = _settings(args)

    model = experiment.SmoothTorusModel(study["field"], study["amplitude"])
    result = experiment.convergence_study(
        model,
        args.sizes,
        study["eps"],
        args.method,
        settings=solver,
        experiment=study,
    )

    if args.out is not None:
        experiment.write_study_csv(result, args.out)

    print(result.frame().to_string(index=False))

    low, high = result.band
    print(
        f"fitted order: {result.order:.4f} "
        f"(95% band [{low:.4f}, {high:.4f}])"
    )

    return 0 if not any(row.failed for row in result.rows) else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="-v for progress, -vv for per-iteration detail",
    )
    common.add_argument("--config", help="JSON settings file")

    parser = argparse.ArgumentParser(
        prog="flatpack",
        description="Discrete uniformization of circle packings on tori.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser(
        "gen-hex", parents=[common], help="write a hexagonal torus mesh"
    )
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=gen_hex)

    p = commands.add_parser(
        "fit-packing",
        parents=[common],
        help="fit a uniform circle packing to a mesh",
    )
    p.add_argument("--mesh", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(handler=fit_packing)

    p = commands.add_parser(
        "check", parents=[common], help="validate a mesh file"
    )
    p.add_argument("--mesh", required=True)
    p.add_argument("--eps", type=float)
    p.set_defaults(handler=check)

    p = commands.add_parser(
        "uniformize",
        parents=[common],
        help="solve for the unit-area uniformization factor",
    )
    p.add_argument("--mesh", required=True)
    p.add_argument("--method", choices=("newton", "flow"), default="newton")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--num-steps", dest="num_steps", type=int)
    p.add_argument("--out")
    p.set_defaults(handler=run_uniformize)

    p = commands.add_parser(
        "convergence",
        parents=[common],
        help="run the convergence study on a smooth test field",
    )
    p.add_argument("--field", choices=("default", "zero", "constant", "sine"))
    p.add_argument("--amplitude", type=float)
    p.add_argument("--sizes", type=_sizes, default=[8, 16, 32, 64])
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--method", choices=("newton", "flow"), default="newton")
    p.add_argument("--tol", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(handler=convergence)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    level = {0: logging.WARNING, 1: logging.INFO}.get(
        args.verbose, logging.DEBUG
    )
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s"
    )

    try:
        return args.handler(args)

    except (FlatpackError, OSError, ValueError) as e:
        print(f"flatpack {args.command}: {e}", file=sys.stderr)
        return 2
