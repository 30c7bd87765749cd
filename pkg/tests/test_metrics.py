"""
Test the evaluation metrics in `src.metrics`.
"""
import numpy as np
import unittest
from numpy.testing import (assert_allclose,
                           assert_array_equal)

from src.metrics import (pearson_r,
                         nn_distance,
                         cos_distance,
                         clique_curve,
                         clique_number,
                         DistanceReport,
                         distance_graph,
                         snr_bin_cliques,
                         distance_report,
                         attribute_accuracy,
                         exact_clique_number,
                         pairwise_cos_distances)


class DistanceTestCase(unittest.TestCase):
    """
    Test cosine and nearest-neighbour distances.
    """

    def test_cos_distance(self):
        self.assertAlmostEqual(cos_distance([1, 0], [1, 0]), 0.0)
        self.assertAlmostEqual(cos_distance([1, 0], [0, 1]), 1.0)
        self.assertAlmostEqual(cos_distance([1, 0], [1, 1]), 1 - 1/np.sqrt(2))
        self.assertAlmostEqual(cos_distance([1, 0], [1, 1]), 0.29289, places=5)
        self.assertAlmostEqual(cos_distance([1, 0], [-2, 0]), 2.0)
        a = np.array([0.3, -1.2, 2.0])
        b = np.array([1.0, 0.4, -0.5])
        self.assertAlmostEqual(cos_distance(a, b), cos_distance(b, a))
        self.assertAlmostEqual(cos_distance(a, 3.5*a), 0.0)
        with self.assertRaises(ValueError):
            cos_distance([0, 0], [1, 0])
        with self.assertRaises(ValueError):
            cos_distance([1, 0], [1, 0, 0])

    def test_pairwise(self):
        X = np.random.RandomState(0).randn(5, 3)
        D = pairwise_cos_distances(X)
        self.assertEqual(D.shape, (5, 5))
        self.assertAlmostEqual(D[1, 3], cos_distance(X[1], X[3]))
        with self.assertRaises(ValueError):
            pairwise_cos_distances(np.vstack([X, np.zeros(3)]))
        with self.assertRaises(ValueError):
            pairwise_cos_distances(X, np.ones((2, 4)))

    def test_nn_distance(self):
        points = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        self.assertAlmostEqual(nn_distance(points, points, exclude_self=True), 1.0)
        self.assertAlmostEqual(nn_distance(points, points), 0.0)
        doubled = np.vstack([points, points])
        self.assertAlmostEqual(nn_distance(doubled, doubled, exclude_self=True),
                               0.0)
        X = np.random.RandomState(1).randn(20, 4)
        self.assertAlmostEqual(nn_distance(X, X, exclude_self=True),
                               nn_distance(X[::-1], X[::-1], exclude_self=True))

    def test_nn_distance_errors(self):
        points = np.array([[1.0, 0.0], [0.0, 1.0]])
        with self.assertRaises(ValueError):
            nn_distance(points[:1], points[:1], exclude_self=True)
        with self.assertRaises(ValueError):
            nn_distance(points, points[::-1], exclude_self=True)
        with self.assertRaises(ValueError):
            nn_distance(np.zeros((0, 2)), points)

    def test_distance_report(self):
        prng = np.random.RandomState(2)
        real = prng.randn(30, 5)
        generated = prng.randn(40, 5)
        report = distance_report(real, generated)
        self.assertAlmostEqual(report.s2s, nn_distance(real, real, True))
        self.assertAlmostEqual(report.s2g, nn_distance(real, generated))
        self.assertAlmostEqual(report.g2g, nn_distance(generated, generated, True))
        self.assertIsNone(report.s2t_s)
        self.assertEqual([metric for metric, _ in report.to_rows()],
                         ['s2s', 's2g', 'g2g'])
        report = distance_report(real, generated, reconstructed=2.0*real)
        self.assertAlmostEqual(report.s2t_s, 0.0)
        frame = report.to_frame()
        self.assertEqual(list(frame.columns), ['metric', 'value'])
        self.assertEqual(list(frame['metric']), ['s2s', 's2g', 'g2g', 's2t_s'])
        with self.assertRaises(ValueError):
            distance_report(real, generated, reconstructed=real[:5])
        with self.assertRaises(ValueError):
            DistanceReport(0.1, 2.5, 0.1)


class CliqueTestCase(unittest.TestCase):
    """
    Test the clique-number estimators.
    """

    def test_trivial_cases(self):
        self.assertEqual(clique_number(np.ones((6, 3)), 0.1), 1)
        self.assertEqual(clique_number(np.eye(5), 0.5), 5)
        self.assertEqual(clique_number(np.zeros((0, 3)), 0.5), 0)
        self.assertEqual(exact_clique_number(np.eye(5), 0.5), 5)
        self.assertEqual(exact_clique_number(np.zeros((0, 3)), 0.5), 0)
        with self.assertRaises(ValueError):
            clique_number(np.eye(3), 0.0)
        with self.assertRaises(ValueError):
            exact_clique_number(np.random.RandomState(0).randn(41, 3), 0.5)

    def test_distance_graph(self):
        points = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.1]])
        assert_array_equal(distance_graph(points, 0.5),
                           [[False, True, False],
                            [True, False, True],
                            [False, True, False]])

    def test_greedy_against_exact(self):
        """
        Test that the greedy estimate never exceeds the exact clique
        number and usually matches it on small random sets.
        """

        matches = 0
        for seed in range(100):
            points = np.random.RandomState(seed).randn(15, 4)
            greedy = clique_number(points, 1.2)
            exact = exact_clique_number(points, 1.2)
            self.assertLessEqual(greedy, exact)
            matches += greedy == exact
        self.assertGreaterEqual(matches, 80)

    def test_deterministic(self):
        points = np.random.RandomState(3).randn(30, 6)
        self.assertEqual(clique_number(points, 0.9), clique_number(points, 0.9))

    def test_curve_is_monotone(self):
        points = np.random.RandomState(4).randn(60, 5)
        thresholds = [0.2, 0.5, 0.8, 1.0, 1.2, 1.5, 1.8]
        curve = clique_curve(points, thresholds)
        self.assertEqual(len(curve), len(thresholds))
        self.assertTrue(all(a >= b for a, b in zip(curve, curve[1:])))
        for threshold, estimate in zip(thresholds, curve):
            self.assertGreaterEqual(estimate, clique_number(points, threshold))
        self.assertEqual(clique_curve(points, thresholds[::-1]), curve[::-1])
        self.assertEqual(clique_curve(np.zeros((0, 5)), [0.5]), [0])

    def test_snr_bin_cliques(self):
        points = np.eye(6)
        values = [25.0, 29.0, 31.0, 33.0, 38.0, 54.0]
        frame = snr_bin_cliques(points, values, 10.0, 0.5)
        self.assertEqual(list(frame.columns),
                         ['bin_low', 'bin_high', 'n_items', 'clique_number'])
        assert_allclose(frame['bin_low'], [20.0, 30.0, 50.0])
        assert_allclose(frame['bin_high'], [30.0, 40.0, 60.0])
        self.assertEqual(list(frame['n_items']), [2, 3, 1])
        self.assertEqual(list(frame['clique_number']), [2, 3, 1])
        self.assertTrue(snr_bin_cliques(np.zeros((0, 6)), [], 10.0, 0.5).empty)
        with self.assertRaises(ValueError):
            snr_bin_cliques(points, values[:3], 10.0, 0.5)
        with self.assertRaises(ValueError):
            snr_bin_cliques(points, values, 0.0, 0.5)


class ScoreTestCase(unittest.TestCase):
    """
    Test `pearson_r` and `attribute_accuracy`.
    """

    def test_pearson_r(self):
        xs = [1.0, 2.0, 3.0, 4.0]
        self.assertAlmostEqual(pearson_r(xs, xs), 1.0)
        self.assertAlmostEqual(pearson_r(xs, [-x for x in xs]), -1.0)
        self.assertAlmostEqual(pearson_r([1, 2, 3], [2, 4, 5]), 0.98198, places=5)
        with self.assertRaises(ValueError):
            pearson_r([1, 1, 1], [1, 2, 3])
        with self.assertRaises(ValueError):
            pearson_r([1], [2])
        with self.assertRaises(ValueError):
            pearson_r([1, 2], [1, 2, 3])

    def test_attribute_accuracy(self):
        self.assertEqual(attribute_accuracy(['F', 'M'], ['F', 'M']), 1.0)
        self.assertEqual(attribute_accuracy(['F', 'M'], ['M', 'F']), 0.0)
        self.assertEqual(attribute_accuracy(['F', 'M', 'F', 'F'],
                                            ['F', 'M', 'M', 'M']), 0.5)
        with self.assertRaises(ValueError):
            attribute_accuracy(['F'], ['F', 'M'])
        with self.assertRaises(ValueError):
            attribute_accuracy([], [])
