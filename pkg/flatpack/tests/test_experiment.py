import flatpack.experiment as experiment
import flatpack.mesh as mesh
import flatpack.packing as packing
import flatpack.param as param
import flatpack.uniformize as uniformize

from unittest import TestCase
import unittest

import math
import tempfile

import numpy as np

import logging
import os

logging.basicConfig(filename=f"{os.getcwd()}/flatpack_unittest.log")


class SmoothTorusModelTest(TestCase):
    def test___init__(self):
        model = experiment.SmoothTorusModel()

        self.assertEqual(model.field, "default")
        self.assertEqual(model.amplitude, 0.05)
        np.testing.assert_array_equal(model.lattice, mesh.hex_lattice())

        with self.assertRaises(ValueError):
            experiment.SmoothTorusModel("wobbly")

        with self.assertRaises(ValueError):
            experiment.SmoothTorusModel(amplitude=float("inf"))

        with self.assertRaises(ValueError):
            experiment.SmoothTorusModel(lattice=2.0 * np.eye(2))

    def test_periodic(self):
        model = experiment.SmoothTorusModel("default", 0.3)
        rng = np.random.default_rng(70)
        points = rng.uniform(-1, 1, (50, 2))

        for shift in model.lattice:
            np.testing.assert_allclose(
                model.ubar(points + shift), model.ubar(points), atol=1e-13
            )

    def test_fields(self):
        points = np.array([[0.1, 0.2], [0.3, -0.4]])

        zero = experiment.SmoothTorusModel("zero", 0.3)
        np.testing.assert_array_equal(zero.ubar(points), [0.0, 0.0])

        constant = experiment.SmoothTorusModel("constant", 0.3)
        np.testing.assert_array_equal(constant.ubar(points), [0.3, 0.3])
        np.testing.assert_array_equal(constant.ubar_gradient(points), 0.0)

        sine = experiment.SmoothTorusModel("sine", 0.3, lattice=np.eye(2))
        self.assertAlmostEqual(float(sine.ubar([0.25, 0.25])), 0.3)

    def test_ubar_gradient(self):
        rng = np.random.default_rng(71)
        points = rng.uniform(0, 1, (20, 2))
        h = 1e-6

        for field in ("default", "sine"):
            model = experiment.SmoothTorusModel(field, 0.2)
            grad = model.ubar_gradient(points)

            for k in range(2):
                step = np.zeros(2)
                step[k] = h
                forward = model.ubar(points + step)
                backward = model.ubar(points - step)
                fd = (forward - backward) / (2 * h)

                np.testing.assert_allclose(grad[:, k], fd, atol=1e-8)

    def test_oscillation_bound(self):
        rng = np.random.default_rng(72)
        points = rng.uniform(-1, 1, (20000, 2))

        for field in experiment.FIELD_NAMES:
            model = experiment.SmoothTorusModel(field, 0.05)
            values = model.ubar(points)

            self.assertLessEqual(
                values.max() - values.min(), model.oscillation_bound + 1e-15
            )

        self.assertTrue(experiment.SmoothTorusModel().packable(0.1))
        self.assertFalse(
            experiment.SmoothTorusModel(amplitude=0.5).packable(0.1)
        )


class ReferenceFactorTest(TestCase):
    def test_unit_area(self):
        for field in experiment.FIELD_NAMES:
            model = experiment.SmoothTorusModel(field, 0.05)
            reference = experiment.reference_factor(model)

            self.assertLessEqual(abs(reference.shift), 1e-12)
            self.assertAlmostEqual(reference.area, 1.0, delta=1e-9)

            points = np.array([[0.1, 0.2]])
            np.testing.assert_allclose(
                reference(points), model.ubar(points) + reference.shift
            )

    def test_quadrature_area(self):
        model = experiment.SmoothTorusModel("default", 0.05)

        area = experiment.quadrature_area(
            model, lambda x: np.ones(x.shape[:-1])
        )
        self.assertAlmostEqual(area, 1.0, places=13)

        # exp(-2 ubar) integrates to more than 1 by Jensen.
        background = experiment.quadrature_area(
            model, model.background_density
        )
        self.assertGreater(background, 1.0)


class EdgeLengthOracleTest(TestCase):
    def setUp(self):
        self.model = experiment.SmoothTorusModel("default", 0.05)
        self.p = np.array([0.1, 0.2])
        self.q = self.p + np.array([0.1, 0.03])

    def test_midpoint_flat(self):
        model = experiment.SmoothTorusModel("zero", 0.05)

        self.assertAlmostEqual(
            experiment.midpoint_edge_length(model, self.p, self.q),
            float(np.linalg.norm(self.q - self.p)),
            places=15,
        )

    def test_midpoint_minimal_image(self):
        model = experiment.SmoothTorusModel("zero", 0.05)
        q = self.q + model.lattice[0] - model.lattice[1]

        self.assertAlmostEqual(
            experiment.midpoint_edge_length(model, self.p, q),
            float(np.linalg.norm(self.q - self.p)),
            places=14,
        )

    def test_geodesic_flat(self):
        model = experiment.SmoothTorusModel("zero", 0.05)

        self.assertAlmostEqual(
            experiment.geodesic_length_refined(model, self.p, self.q),
            float(np.linalg.norm(self.q - self.p)),
            places=15,
        )
        self.assertEqual(
            experiment.geodesic_length_refined(model, self.p, self.p), 0.0
        )

    def test_geodesic_refinement(self):
        lengths = [
            experiment.geodesic_length_refined(
                self.model, self.p, self.q, segments
            )
            for segments in (2, 4, 8, 16, 32)
        ]

        for coarse, fine in zip(lengths, lengths[1:]):
            self.assertLessEqual(fine, coarse + 1e-12)

        # The midpoint rule is off by O(l**3).
        midpoint = experiment.midpoint_edge_length(self.model, self.p, self.q)
        size = float(np.linalg.norm(self.q - self.p))
        self.assertAlmostEqual(lengths[-1], midpoint, delta=0.1 * size**3)
        self.assertNotEqual(lengths[-1], midpoint)

    def test_geodesic_errors(self):
        with self.assertRaises(ValueError):
            experiment.geodesic_length_refined(self.model, self.p, self.q, 1)

    def test_cubic_estimate(self):
        errors, slope = experiment.cubic_estimate(
            self.model, [0.1, 0.2], [1.0, 0.3]
        )

        self.assertEqual(errors.shape, (4,))
        self.assertTrue(np.all(errors > 0))
        self.assertTrue(np.all(np.diff(errors) < 0))
        self.assertGreaterEqual(slope, 2.7)
        self.assertLessEqual(slope, 3.3)

    def test_cubic_estimate_segments(self):
        settings = param.experiment_settings()
        settings.set_param("geodesic_segments", 16)

        default, _ = experiment.cubic_estimate(
            self.model, [0.1, 0.2], [1.0, 0.3]
        )
        coarse, _ = experiment.cubic_estimate(
            self.model, [0.1, 0.2], [1.0, 0.3], experiment=settings
        )

        np.testing.assert_allclose(coarse, default, rtol=5e-2)


class BuildExperimentMeshTest(TestCase):
    def test_build(self):
        model = experiment.SmoothTorusModel()
        built = experiment.build_experiment_mesh(model, 16, 0.1)

        self.assertEqual(built.triangulation.num_vertices, 256)
        self.assertTrue(built.packing.is_uniform)
        self.assertGreaterEqual(built.packing.cos_theta.min(), 0.1)

        report = packing.check_regularity(
            built.triangulation, built.lengths, built.packing, 0.1
        )
        self.assertTrue(report.regular)

    def test_bad_arguments(self):
        model = experiment.SmoothTorusModel()

        for n in (4, 7, 8.0):
            with self.assertRaises(ValueError):
                experiment.build_experiment_mesh(model, n, 0.1)

        for eps in (0.0, 0.6):
            with self.assertRaises(ValueError):
                experiment.build_experiment_mesh(model, 8, eps)

    def test_not_packable(self):
        model = experiment.SmoothTorusModel(amplitude=0.5)

        with self.assertRaises(packing.NotUniformlyPackableError):
            experiment.build_experiment_mesh(model, 16, 0.1)


class ConsistencyDiagnosticsTest(TestCase):
    def test_flat(self):
        model = experiment.SmoothTorusModel("zero")
        built = experiment.build_experiment_mesh(model, 8, 0.1)
        diagnostics = experiment.consistency_diagnostics(model, built)

        self.assertLessEqual(diagnostics["curvature"], 1e-12)
        self.assertLessEqual(diagnostics["angle_deviation"], 1e-12)

    def test_refinement(self):
        model = experiment.SmoothTorusModel()
        coarse, fine = (
            experiment.consistency_diagnostics(
                model, experiment.build_experiment_mesh(model, n, 0.1)
            )
            for n in (16, 32)
        )

        self.assertLess(fine["size"], coarse["size"])
        self.assertLess(fine["curvature"], coarse["curvature"])

        for diagnostics in (coarse, fine):
            self.assertLessEqual(diagnostics["flow_divergence_error"], 1e-12)
            self.assertTrue(math.isfinite(diagnostics["flow_ratio"]))


class ConvergenceStudyTest(TestCase):
    def test_exact_fields(self):
        for field in ("zero", "constant"):
            model = experiment.SmoothTorusModel(field, 0.05)
            result = experiment.convergence_study(model, [8, 16], 0.1)

            for row in result.rows:
                self.assertFalse(row.failed)
                self.assertLessEqual(row.err_max, 1e-9)

    def test_short_study(self):
        model = experiment.SmoothTorusModel()
        result = experiment.convergence_study(model, [8, 16, 32], 0.1)

        self.assertEqual([row.n for row in result.rows], [8, 16, 32])
        self.assertLess(result.rows[-1].err_max, result.rows[0].err_max)
        self.assertGreaterEqual(result.order, 0.8)

        for row in result.rows:
            self.assertFalse(row.failed)
            self.assertGreaterEqual(
                row.err_max, row.err_l2 / math.sqrt(row.n**2) - 1e-15
            )
            self.assertGreater(row.runtime_ms, 0.0)

        frame = result.frame()
        self.assertEqual(list(frame.columns), list(experiment.STUDY_COLUMNS))

    def test_flow_method(self):
        model = experiment.SmoothTorusModel()
        settings = param.solver_settings()
        settings.set_param("num_steps", 16)

        newton = experiment.convergence_study(model, [8], 0.1)
        flow = experiment.convergence_study(
            model, [8], 0.1, method="flow", settings=settings
        )

        self.assertAlmostEqual(
            newton.rows[0].err_max, flow.rows[0].err_max, delta=1e-8
        )

    def test_workers(self):
        model = experiment.SmoothTorusModel()

        serial = experiment.convergence_study(model, [8, 16], 0.1)
        parallel = experiment.convergence_study(model, [8, 16], 0.1, workers=2)

        self.assertEqual(
            [row.n for row in parallel.rows], [row.n for row in serial.rows]
        )

        for a, b in zip(serial.rows, parallel.rows):
            self.assertAlmostEqual(a.err_max, b.err_max, places=12)

    def test_failed_rows(self):
        model = experiment.SmoothTorusModel(amplitude=0.5)
        result = experiment.convergence_study(model, [8, 16], 0.1)

        self.assertTrue(all(row.failed for row in result.rows))
        self.assertIn("NotUniformlyPackableError", result.rows[0].error)
        self.assertTrue(math.isnan(result.order))

    def test_bad_sizes(self):
        model = experiment.SmoothTorusModel()

        for sizes in ([], [16, 8], [8, 8]):
            with self.assertRaises(ValueError):
                experiment.convergence_study(model, sizes, 0.1)

    def test_full_study(self):
        model = experiment.SmoothTorusModel()
        result = experiment.convergence_study(model, [8, 16, 32, 64], 0.1)
        errors = [row.err_max for row in result.rows]

        self.assertFalse(any(row.failed for row in result.rows))
        self.assertGreaterEqual(result.order, 0.8)
        self.assertLessEqual(result.band[0], result.order)
        self.assertGreaterEqual(result.band[1], result.order)

        # Doubling n cuts the error by at least a quarter.
        for coarse, fine in zip(errors, errors[1:]):
            self.assertLess(fine, coarse)
            self.assertLessEqual(fine, 0.75 * coarse)

    def test_normalization_consistency(self):
        model = experiment.SmoothTorusModel()
        reference = experiment.reference_factor(model)

        self.assertAlmostEqual(reference.area, 1.0, delta=1e-9)

        for n in (8, 16):
            built = experiment.build_experiment_mesh(model, n, 0.1)
            factor, _ = uniformize.uniformize(
                built.triangulation, built.packing
            )
            moved = packing.apply_conformal_factor(built.packing, factor)
            area = packing.mesh_area(
                built.triangulation,
                packing.edge_lengths_from_packing(built.triangulation, moved),
            )

            self.assertAlmostEqual(area, 1.0, delta=1e-9)


class StudyCsvTest(TestCase):
    def test_round_trip(self):
        nan = float("nan")
        rows = [
            experiment.ConvergenceRow(8, 0.13, 1e-3, 4e-3, 4, 12.5),
            experiment.ConvergenceRow(16, 0.066, 5e-4, 4e-3, 4, 40.0),
            experiment.ConvergenceRow(
                32, nan, nan, nan, 0, 1.0, "RegularityFailureError: no"
            ),
        ]
        result = experiment.StudyResult(rows, 1.02, (0.5, 1.5))

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "study.csv")
            experiment.write_study_csv(result, path)

            with open(path) as f:
                lines = f.read().splitlines()

            frame, order = experiment.read_study_csv(path)

        self.assertEqual(lines[0], ",".join(experiment.STUDY_COLUMNS))
        self.assertEqual(lines[-1], "# fitted_order=1.020000")
        self.assertIn("nan", lines[3])

        self.assertEqual(order, 1.02)
        self.assertEqual(frame["n"].tolist(), [8, 16, 32])
        self.assertTrue(math.isnan(frame["err_max"].iloc[2]))
        self.assertEqual(frame["err_max"].iloc[0], 1e-3)


if __name__ == "__main__":
    unittest.main()
