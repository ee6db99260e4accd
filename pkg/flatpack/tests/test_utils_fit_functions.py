"""Unit testing for flatpack/utils/fit_functions."""
import flatpack.utils.fit_functions as fit_functions
import math
import unittest

import numpy as np


class TestFitFunctions(unittest.TestCase):
    def test_convergence_order(self):
        sizes = np.array([0.2, 0.1, 0.05, 0.025])
        errors = 3.0 * sizes**2

        order, (low, high) = fit_functions.convergence_order(sizes, errors)

        self.assertAlmostEqual(order, 2.0, places=12)
        self.assertAlmostEqual(low, 2.0, places=6)
        self.assertAlmostEqual(high, 2.0, places=6)

    def test_band(self):
        rng = np.random.default_rng(90)
        sizes = 0.5 ** np.arange(1, 8)
        errors = sizes * np.exp(0.1 * rng.standard_normal(sizes.size))

        order, (low, high) = fit_functions.convergence_order(sizes, errors)

        self.assertLess(low, order)
        self.assertLess(order, high)

        _, (narrow_low, narrow_high) = fit_functions.convergence_order(
            sizes, errors, confidence=0.5
        )
        self.assertLess(narrow_high - narrow_low, high - low)

    def test_unusable_points(self):
        order, band = fit_functions.convergence_order(
            [0.1, 0.05, 0.025], [1e-2, float("nan"), 0.0]
        )

        self.assertTrue(math.isnan(order))
        self.assertTrue(all(math.isnan(b) for b in band))

        order, band = fit_functions.convergence_order(
            [0.1, 0.05, 0.025], [1e-2, 5e-3, float("nan")]
        )

        self.assertAlmostEqual(order, 1.0)
        self.assertTrue(math.isnan(band[0]))

    def test_loglog_slope(self):
        self.assertAlmostEqual(
            fit_functions.loglog_slope([1.0, 2.0, 4.0], [1.0, 8.0, 64.0]), 3.0
        )


if __name__ == "__main__":
    unittest.main()
