"""Unit testing for flatpack/utils/geometry_functions."""
import flatpack.utils.geometry_functions as geometry_functions
import math
import unittest

import numpy as np


class TestGeometryFunctions(unittest.TestCase):
    def test_is_triangle(self):
        result = geometry_functions.is_triangle(
            [3.0, 1.0, 1.0, 0.0], [4.0, 1.0, 1.0, 1.0], [5.0, 2.0, 1.9, 1.0]
        )

        self.assertEqual(result.tolist(), [True, False, True, False])

    def test_triangle_slack(self):
        slack = geometry_functions.triangle_slack(1.0, 1.0, 1.0)

        self.assertAlmostEqual(float(slack), 1.0 / 3.0)

    def test_triangle_angles(self):
        angles = geometry_functions.triangle_angles(3.0, 4.0, 5.0)

        self.assertAlmostEqual(angles[2], math.pi / 2)
        self.assertAlmostEqual(angles[0], math.asin(0.6))
        self.assertAlmostEqual(float(np.sum(angles)), math.pi)

        # Far outside [-1, 1] gives nan, just outside is clamped.
        self.assertTrue(
            np.isnan(geometry_functions.triangle_angles(1.0, 1.0, 3.0)).any()
        )
        flat = geometry_functions.triangle_angles(1.0, 1.0, 2.0)
        self.assertTrue(np.isfinite(flat).all())
        self.assertAlmostEqual(flat[2], math.pi)

    def test_corner_cosines(self):
        cosines = geometry_functions.corner_cosines(
            np.ones(4), np.ones(4), np.ones(4)
        )

        self.assertEqual(cosines.shape, (4, 3))
        np.testing.assert_allclose(cosines, 0.5)

    def test_triangle_area(self):
        self.assertAlmostEqual(
            float(geometry_functions.triangle_area(3.0, 4.0, 5.0)), 6.0
        )
        self.assertAlmostEqual(
            float(geometry_functions.triangle_area(1.0, 1.0, 1.0)),
            math.sqrt(3.0) / 4.0,
        )
        self.assertEqual(
            float(geometry_functions.triangle_area(1.0, 1.0, 2.0)), 0.0
        )

        # Needle triangle where the naive formula cancels badly.
        a = 1e8
        area = geometry_functions.triangle_area(a, a, 1.0)
        self.assertAlmostEqual(float(area) / (0.5 * a), 1.0, places=10)

    def test_length_area_band(self):
        band = geometry_functions.length_area_band(0.5, [2.0, 4.0])

        np.testing.assert_allclose(band, [[0.25, 8.0], [1.0, 32.0]])

    def test_comparison_triangle_bounds(self):
        angle, area = geometry_functions.comparison_triangle_bounds(0.6, 0.005)

        self.assertAlmostEqual(angle, 0.2)
        self.assertAlmostEqual(area, 8.0)

        logger_name = "flatpack.utils.geometry_functions"

        with self.assertLogs(logger_name, level="ERROR") as logs:
            with self.assertRaises(ValueError):
                geometry_functions.comparison_triangle_bounds(0.6, 0.01)

        self.assertIn("eps**2 / 48", logs.output[0])


if __name__ == "__main__":
    unittest.main()
