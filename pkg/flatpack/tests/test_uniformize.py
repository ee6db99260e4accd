import flatpack.graph as graph
import flatpack.mesh as mesh
import flatpack.packing as packing
import flatpack.param as param
import flatpack.uniformize as uniformize
from flatpack.utils import sampling_functions as sampling

from unittest import TestCase
import unittest

import math

import numpy as np

import logging
import os

logging.basicConfig(filename=f"{os.getcwd()}/flatpack_unittest.log")

LONG_TESTS = os.environ.get("FLATPACK_LONG_TESTS") == "1"


def _curvature(T, p, u):
    moved = packing.apply_conformal_factor(p, packing.ConformalFactor(u))
    return packing.packing_curvature(T, moved).K


def _dense(operator, n):
    return np.column_stack([operator.matvec(e) for e in np.eye(n)])


def _perturbed(n, seed, rho_noise=0.1):
    T, _ = mesh.hex_torus(n)
    rng = np.random.default_rng(seed)

    return T, sampling.random_packing(T, rng, rho_noise=rho_noise)


class AngleDerivativeTest(TestCase):
    def test_symmetric_face(self):
        value = uniformize.angle_derivative(
            1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, np.pi / 3.0
        )

        self.assertAlmostEqual(float(value), 1.0 / (2.0 * math.sqrt(3.0)))

    def test_degenerate(self):
        with self.assertRaises(packing.DegenerateFaceError):
            uniformize.angle_derivative(
                1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 0.0
            )

    def test_corner_symmetry(self):
        T, _ = mesh.hex_torus(71)
        rng = np.random.default_rng(20)
        p = sampling.random_packing(T, rng, rho_noise=0.3, cos_range=(0, 1))

        self.assertGreaterEqual(T.num_faces, 10000)

        d_theta = uniformize.eta_weights(T, p).d_theta
        scale = np.max(np.abs(d_theta))

        for c in range(3):
            for d in range(3):
                if c == d:
                    continue

                np.testing.assert_allclose(
                    d_theta[:, c, d], d_theta[:, d, c], atol=1e-12 * scale
                )

        # Nonobtuse weights give positive off-diagonal partials.
        off = d_theta[:, [0, 0, 1, 1, 2, 2], [1, 2, 0, 2, 0, 1]]
        self.assertTrue(np.all(off > 0))

    def test_rows_sum_to_zero(self):
        T, p = _perturbed(5, 21)
        d_theta = uniformize.eta_weights(T, p).d_theta

        np.testing.assert_allclose(d_theta.sum(axis=2), 0.0, atol=1e-13)

    def test_finite_difference(self):
        # Perturb u at slot d of a single face and watch the angle at c.
        T = mesh.Triangulation([(0, 1, 2)], 3)
        rng = np.random.default_rng(22)
        h = 1e-6

        for _ in range(20):
            p = packing.CirclePacking(
                0.3 * rng.standard_normal(3), rng.uniform(0.2, 1.0, 3)
            )
            d_theta = uniformize.eta_weights(T, p).d_theta[0]

            for d in range(3):
                step = np.zeros(3)
                step[d] = h
                plus = packing.apply_conformal_factor(p, step)
                minus = packing.apply_conformal_factor(p, -step)
                theta_plus = packing.inner_angles(
                    T, packing.edge_lengths_from_packing(T, plus)
                ).theta[0]
                theta_minus = packing.inner_angles(
                    T, packing.edge_lengths_from_packing(T, minus)
                ).theta[0]
                fd = (theta_plus - theta_minus) / (2 * h)

                np.testing.assert_allclose(
                    d_theta[:, d], fd, rtol=1e-6, atol=1e-8
                )


class EtaWeightsTest(TestCase):
    def test_equilateral(self):
        T, _ = mesh.hex_torus(6)
        lengths = packing.EdgeLengths(np.ones(T.num_edges))
        p = packing.fit_uniform_packing(T, lengths, 0.5)
        weights = uniformize.eta_weights(T, p)

        np.testing.assert_allclose(weights.eta, 1.0 / math.sqrt(3.0))
        self.assertEqual(weights.radius_ratio, 1.0)
        self.assertIn("JacobianWeights", repr(weights))

    def test_radius_ratio(self):
        T, _ = mesh.hex_torus(3)
        rho = np.zeros(T.num_vertices)
        rho[4] = math.log(3.0)
        p = packing.CirclePacking(rho, np.ones(T.num_edges))

        self.assertAlmostEqual(
            uniformize.eta_weights(T, p).radius_ratio, 3.0, places=14
        )

    def test_eta_lower_bound(self):
        self.assertEqual(uniformize.eta_lower_bound(0.4, 1.0), 0.1)
        self.assertAlmostEqual(uniformize.eta_lower_bound(0.4, 2.0), 0.0125)


class CurvatureJacobianTest(TestCase):
    def test_finite_difference(self):
        rng = np.random.default_rng(23)
        h = 1e-5

        for trial in range(20):
            n = int(rng.integers(3, 11))
            T, _ = mesh.hex_torus(n)
            p = sampling.random_packing(T, rng)
            V = T.num_vertices
            u = 0.05 * rng.standard_normal(V)
            moved = packing.apply_conformal_factor(p, u)

            jacobian = _dense(uniformize.curvature_jacobian(T, moved), V)
            fd = np.zeros((V, V))

            for j in range(V):
                step = np.zeros(V)
                step[j] = h
                fd[:, j] = (
                    _curvature(T, p, u + step) - _curvature(T, p, u - step)
                ) / (2 * h)

            self.assertLessEqual(
                np.max(np.abs(jacobian - fd)),
                1e-6 * np.max(np.abs(jacobian)),
                msg=f"trial {trial}, n={n}",
            )

    def test_is_negative_laplacian(self):
        T, p = _perturbed(4, 24)
        eta = uniformize.eta_weights(T, p).eta
        jacobian = _dense(uniformize.curvature_jacobian(T, p), T.num_vertices)
        laplacian = graph.laplacian_matrix(T.graph, eta).toarray()

        np.testing.assert_allclose(jacobian, -laplacian, atol=1e-13)
        np.testing.assert_allclose(jacobian, jacobian.T, atol=1e-13)


class AngleDefectFlowTest(TestCase):
    def test_divergence_identity(self):
        rng = np.random.default_rng(25)

        for _ in range(10):
            T, _ = mesh.hex_torus(int(rng.integers(3, 12)))
            lengths_a = packing.edge_lengths_from_packing(
                T, sampling.random_packing(T, rng)
            )
            lengths_b = packing.edge_lengths_from_packing(
                T, sampling.random_packing(T, rng)
            )
            theta_a = packing.inner_angles(T, lengths_a)
            theta_b = packing.inner_angles(T, lengths_b)

            x = uniformize.angle_defect_flow(T, theta_a, theta_b)
            K_a = packing.discrete_curvature(T, theta_a).K
            K_b = packing.discrete_curvature(T, theta_b).K

            np.testing.assert_allclose(
                graph.divergence(T.graph, x), K_b - K_a, atol=1e-12
            )

    def test_identical_angles(self):
        T, p = _perturbed(4, 26)
        theta = packing.inner_angles(
            T, packing.edge_lengths_from_packing(T, p)
        )

        x = uniformize.angle_defect_flow(T, theta, theta.theta)
        self.assertTrue(np.all(x == 0.0))


class NewtonTest(TestCase):
    def test_flat_start(self):
        T, _ = mesh.hex_torus(5)
        p = packing.fit_uniform_packing(
            T, packing.EdgeLengths(np.ones(T.num_edges)), 0.5
        )
        factor, report = uniformize.newton_uniformize(T, p)

        self.assertEqual(report.iterations, 0)
        self.assertTrue(np.all(factor.u == 0.0))
        self.assertEqual(len(report.step_history), 1)

    def test_perturbed(self):
        for n, seed in ((4, 30), (8, 31), (16, 32)):
            T, p = _perturbed(n, seed)
            factor, report = uniformize.newton_uniformize(T, p)

            self.assertLessEqual(report.iterations, 25)
            self.assertLessEqual(report.final_residual, 1e-10)
            self.assertLessEqual(
                np.max(np.abs(_curvature(T, p, factor.u))), 1e-10
            )
            self.assertAlmostEqual(float(np.mean(factor.u)), 0.0, places=13)

            residuals = [r for _, r in report.step_history]
            self.assertTrue(
                all(b < a for a, b in zip(residuals, residuals[1:]))
            )

    def test_single_perturbed_vertex(self):
        T, _ = mesh.hex_torus(6)
        p = packing.fit_uniform_packing(
            T, packing.EdgeLengths(np.ones(T.num_edges)), 0.5
        )
        rho = p.rho.copy()
        rho[0] += 0.1
        bumped = packing.CirclePacking(rho, p.cos_theta)

        factor, report = uniformize.newton_uniformize(T, bumped)

        # Undoing the bump restores the flat packing.
        expected = np.zeros(T.num_vertices)
        expected[0] = -0.1
        expected -= expected.mean()

        self.assertLessEqual(report.final_residual, 1e-10)
        np.testing.assert_allclose(factor.u, expected, atol=1e-8)

    def test_rigidity(self):
        for seed in range(10):
            T, p = _perturbed(8, 100 + seed)
            rng = np.random.default_rng(200 + seed)

            first, _ = uniformize.uniformize(T, p)
            second, _ = uniformize.uniformize(
                T, p, u0=0.05 * rng.standard_normal(T.num_vertices)
            )
            shifted, _ = uniformize.uniformize(
                T, p, u0=np.full(T.num_vertices, rng.uniform(-1.0, 1.0))
            )

            np.testing.assert_allclose(first.u, second.u, atol=1e-8)
            np.testing.assert_allclose(first.u, shifted.u, atol=1e-8)

    def test_rigidity_across_methods(self):
        T, p = _perturbed(6, 34)
        settings = param.solver_settings()
        settings.set_param("num_steps", 8)

        newton, _ = uniformize.uniformize(T, p, "newton", settings)
        flow, _ = uniformize.uniformize(T, p, "flow", settings)

        np.testing.assert_allclose(newton.u, flow.u, atol=1e-8)

    def test_no_convergence(self):
        T, p = _perturbed(6, 35)

        with self.assertRaises(graph.NoConvergenceError):
            uniformize.newton_uniformize(T, p, max_iter=1)

    def test_inadmissible_start(self):
        T, p = _perturbed(4, 36)
        u0 = np.zeros(T.num_vertices)
        u0[0] = 50.0

        with self.assertRaises(uniformize.LostAdmissibilityError):
            uniformize.newton_uniformize(T, p, u0=u0)

    def test_bad_tol(self):
        T, p = _perturbed(4, 37)

        with self.assertRaises(ValueError):
            uniformize.newton_uniformize(T, p, tol=0.0)

    @unittest.skipUnless(LONG_TESTS, "set FLATPACK_LONG_TESTS=1")
    def test_large_mesh(self):
        T, p = _perturbed(64, 38)
        factor, report = uniformize.newton_uniformize(T, p)

        self.assertEqual(T.num_vertices, 4096)
        self.assertLessEqual(report.iterations, 25)
        self.assertLessEqual(
            np.max(np.abs(_curvature(T, p, factor.u))), 1e-10
        )


class ContinuationFlowTest(TestCase):
    def test_agrees_with_newton(self):
        T, p = _perturbed(8, 40)

        newton, _ = uniformize.newton_uniformize(T, p)
        flow, report = uniformize.continuation_flow(T, p, num_steps=64)

        self.assertEqual(report.method, "flow")
        self.assertGreaterEqual(report.iterations, 64)
        self.assertLessEqual(report.final_residual, 1e-10)
        np.testing.assert_allclose(flow.u, newton.u, atol=1e-8)

        self.assertEqual(len(report.decay_deviation), 64)
        self.assertLessEqual(report.deviation_at(0.5), 1e-6)
        self.assertLessEqual(report.max_decay_deviation, 1e-6)

    def test_bad_steps(self):
        T, p = _perturbed(4, 41)

        with self.assertRaises(ValueError):
            uniformize.continuation_flow(T, p, num_steps=0)


class NormalizeAreaTest(TestCase):
    def test_unit_area(self):
        T, p = _perturbed(6, 50)
        factor, _ = uniformize.newton_uniformize(T, p)
        normalized = uniformize.normalize_area(T, p, factor)

        moved = packing.apply_conformal_factor(p, normalized)
        lengths = packing.edge_lengths_from_packing(T, moved)

        self.assertAlmostEqual(packing.mesh_area(T, lengths), 1.0, places=12)
        np.testing.assert_allclose(
            normalized.u - factor.u,
            uniformize.area_shift(T, p, factor),
            atol=1e-14,
        )
        self.assertLessEqual(
            np.max(np.abs(packing.packing_curvature(T, moved).K)), 1e-10
        )


class UniformizeTest(TestCase):
    def test_methods(self):
        T, p = _perturbed(6, 60)

        for method in ("newton", "flow"):
            factor, report = uniformize.uniformize(T, p, method)
            moved = packing.apply_conformal_factor(p, factor)
            area = packing.mesh_area(
                T, packing.edge_lengths_from_packing(T, moved)
            )

            self.assertEqual(report.method, method)
            self.assertAlmostEqual(area, 1.0, places=12)
            self.assertAlmostEqual(
                report.area_shift, float(np.mean(factor.u)), places=12
            )
            self.assertIn("area_shift", report.as_dict())

    def test_settings(self):
        T, p = _perturbed(5, 61)
        settings = param.solver_settings()
        settings.set_param("num_steps", 8)

        _, report = uniformize.uniformize(T, p, "flow", settings)

        self.assertEqual(len(report.decay_deviation), 8)

    def test_unknown_method(self):
        T, p = _perturbed(4, 62)

        with self.assertRaises(ValueError):
            uniformize.uniformize(T, p, "bisection")

    def test_report(self):
        report = uniformize.SolveReport(
            "newton", 2, 1e-12, [(0.0, 1.0)], 1e-10
        )

        with self.assertRaises(ValueError):
            report.deviation_at(0.5)

        self.assertEqual(report.max_decay_deviation, 0.0)
        self.assertEqual(report.as_dict()["log"], [[0.0, 1.0]])


if __name__ == "__main__":
    unittest.main()
