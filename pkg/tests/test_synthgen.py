"""
Unit tests for the synthetic stream generators
"""
import tempfile
from pathlib import Path

import numpy as np
import ot
from django.test import SimpleTestCase
from scipy.stats import chisquare, poisson, spearmanr

from detection.streams import read_stream
from idd_monitor.exceptions import ConfigError
from synthgen.serializers import stream_spec_from_dict
from synthgen.services import (
    BetaMixture, DeformationParams, StreamSpec, SyntheticStream, apply_deformation, default_mixture,
    gen_stream_continuous, gen_stream_ordinal_drift, gen_stream_poisson_spike, iman_conover,
    monotonicity_check, ordinal_shift, random_deformation, sample_reference, smooth_ramp,
)
from tests import (
    GAUSSIAN_STREAM, MIXTURE_STREAM, ORDINAL_STREAM, POISSON_STREAM, TEST_SEED, TestDataFactory,
)


def energy_distance(x, y):
    """Two-sample energy distance with Euclidean ground metric"""
    return (
        2 * ot.dist(x, y, metric='euclidean').mean()
        - ot.dist(x, x, metric='euclidean').mean()
        - ot.dist(y, y, metric='euclidean').mean()
    )


class StreamSpecTests(SimpleTestCase):
    """
    Validation of stream specs
    """

    def test_valid_specs(self):
        """Test every shipped fixture builds"""
        for payload in (GAUSSIAN_STREAM, MIXTURE_STREAM, POISSON_STREAM, ORDINAL_STREAM):
            spec = StreamSpec(**payload)
            self.assertEqual(spec.scenario, payload['scenario'])

    def test_invalid_specs(self):
        """Test inconsistent settings are config errors"""
        invalid = [
            {'scenario': 'nope'},
            {'scenario': 'gaussian_shift', 'length': 10, 'change_point': 11},
            {'scenario': 'gaussian_shift', 'batch_size': 1},
            {'scenario': 'gaussian_shift', 'sigma': 0.0},
            {'scenario': 'copula_shift', 'dim': 1},
            {'scenario': 'copula_shift', 'dim': 2, 'rho': 1.0},
            {'scenario': 'poisson_spike', 'k_star': 4},
            {'scenario': 'poisson_spike', 'heavy_tail': True, 'alpha_mix': 0.5},
            {'scenario': 'ordinal_drift', 'p0': (0.5, 0.5)},
            {'scenario': 'ordinal_drift', 'p0': (0.5, 0.3, 0.1)},
            {'scenario': 'barycenter', 'dim': 2, 'beta_alpha': ((1.0, 2.0, 3.0),), 'beta_beta': ((1.0, 2.0, 3.0),)},
        ]
        for payload in invalid:
            with self.assertRaises(ConfigError, msg=str(payload)):
                StreamSpec(**payload)

    def test_mean_matched_tail_rates(self):
        """Test the heavy-tail mixture keeps the pre-change mean"""
        spec = StreamSpec(**POISSON_STREAM, heavy_tail=True, lambda_tail=20.0)
        lambda_a, lambda_b = spec.tail_rates()
        self.assertAlmostEqual((1 - spec.alpha_mix) * lambda_a + spec.alpha_mix * lambda_b, spec.lambda0)
        unmatched = spec.with_changes(mean_matched=False)
        self.assertEqual(unmatched.tail_rates(), (spec.lambda0, 20.0))


class DeformationTests(SimpleTestCase):
    """
    Monotone deformation maps
    """

    def test_random_deformations_are_monotone(self):
        """Test twenty random deformations pass the sampled monotonicity check"""
        rng = TestDataFactory.rng(100)
        for _ in range(20):
            params = random_deformation(3, rng, n_terms=4, epsilon=0.5, beta=8.0)
            report = monotonicity_check(params, n_pairs=500, seed=TEST_SEED)
            self.assertTrue(report.passed, report.worst_margin)

    def test_rotation_fails_the_check(self):
        """Test a 3pi/4 rotation is detected as non-monotone"""
        angle = 3 * np.pi / 4
        rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        report = monotonicity_check(lambda points: points @ rotation.T, n_pairs=100, dim=2)
        self.assertFalse(report.passed)
        self.assertLess(report.worst_margin, 0)
        with self.assertRaises(ConfigError):
            monotonicity_check(lambda points: points, n_pairs=10)

    def test_zero_epsilon_is_identity(self):
        """Test epsilon = 0 leaves points unchanged"""
        params = random_deformation(2, TestDataFactory.rng(101), epsilon=0.0)
        points = TestDataFactory.rng(102).uniform(size=(10, 2))
        np.testing.assert_array_equal(apply_deformation(params, points), points)
        self.assertEqual(apply_deformation(params, points[0]).shape, (2,))

    def test_far_offset_is_an_affine_shear(self):
        """Test one term along e1 with c = -1000 is x + eps (x1 - c) e1 within 1e-6"""
        params = DeformationParams(np.array([[1.0, 0.0]]), np.array([1.0]), np.array([-1000.0]), epsilon=0.3, beta=5.0)
        points = TestDataFactory.rng(105).uniform(size=(50, 2))
        expected = points.copy()
        expected[:, 0] += 0.3 * (points[:, 0] + 1000.0)
        np.testing.assert_allclose(apply_deformation(params, points), expected, rtol=0, atol=1e-6)

    def test_smooth_ramp_is_stable(self):
        """Test the ramp stays finite and approaches max(z, 0) far from zero"""
        values = smooth_ramp(np.array([-1000.0, 0.0, 1000.0]), 5.0)
        self.assertTrue(np.all(np.isfinite(values)))
        self.assertAlmostEqual(values[0], 0.0)
        self.assertAlmostEqual(values[2], 1000.0)

    def test_invalid_params(self):
        """Test non-unit directions and bad weights"""
        with self.assertRaises(ConfigError):
            DeformationParams(np.array([[2.0, 0.0]]), np.array([1.0]), np.array([0.0]))
        with self.assertRaises(ConfigError):
            DeformationParams(np.array([[1.0, 0.0]]), np.array([0.5]), np.array([0.0]))


class MixtureTests(SimpleTestCase):
    """
    Product-Beta mixtures and their shifts
    """

    def setUp(self):
        self.mixture = default_mixture(dim=2, seed=7)

    def test_default_means_range(self):
        """Test component means lie in the inner box"""
        self.assertTrue(np.all((self.mixture.means >= 0.15) & (self.mixture.means <= 0.85)))
        np.testing.assert_allclose(self.mixture.concentration, 20.0)

    def test_shift_keeps_concentration(self):
        """Test the logit shift moves means and keeps concentration"""
        np.testing.assert_allclose(self.mixture.shifted_means(0.0).means, self.mixture.means)
        moved = self.mixture.shifted_means(0.5)
        self.assertTrue(np.all(moved.means > self.mixture.means))
        np.testing.assert_allclose(moved.concentration, self.mixture.concentration)

    def test_reweighting_normalises(self):
        """Test reweighted mixtures keep a probability vector"""
        reweighted = self.mixture.reweighted(np.array([1.0, 2.0, 3.0, 4.0]))
        self.assertAlmostEqual(reweighted.weights.sum(), 1.0)
        np.testing.assert_allclose(reweighted.weights, [0.1, 0.2, 0.3, 0.4])

    def test_samples_lie_in_unit_cube(self):
        """Test draws stay inside (0, 1)^d"""
        points, labels = self.mixture.sample(200, TestDataFactory.rng(103))
        self.assertEqual(points.shape, (200, 2))
        self.assertTrue(np.all((points > 0) & (points < 1)))
        self.assertTrue(set(labels) <= set(range(4)))

    def test_invalid_mixture(self):
        """Test mismatched or nonpositive parameters"""
        with self.assertRaises(ConfigError):
            BetaMixture([1.0], [[1.0, -1.0]], [[1.0, 1.0]])
        with self.assertRaises(ConfigError):
            BetaMixture([0.5, 0.5], [[1.0, 1.0]], [[1.0, 1.0]])

    def test_component_frequencies_follow_the_weights(self):
        """Test component labels of a large reference sample lie within 3 sigma of the weights"""
        spec = StreamSpec(**{**MIXTURE_STREAM, 'batch_size': 4000})
        _, labels = sample_reference(spec, return_labels=True)
        weights = spec.mixture().weights
        frequencies = np.bincount(labels, minlength=weights.size) / labels.size
        sigma = np.sqrt(weights * (1 - weights) / labels.size)
        self.assertTrue(np.all(np.abs(frequencies - weights) <= 3 * sigma), frequencies)

    def test_degenerate_weights_use_one_component(self):
        """Test weights (1, 0, 0, 0) draw every point from the first component"""
        spec = StreamSpec(**{**MIXTURE_STREAM, 'mixture_weights': (1.0, 0.0, 0.0, 0.0)})
        _, labels = sample_reference(spec, return_labels=True)
        self.assertTrue(np.all(labels == 0))

    def test_sample_reference_is_seeded(self):
        """Test reference draws are N points from the stream mixture and repeat per seed"""
        spec = StreamSpec(**MIXTURE_STREAM)
        points, labels = sample_reference(spec, return_labels=True)
        self.assertEqual(points.shape, (MIXTURE_STREAM['batch_size'], MIXTURE_STREAM['dim']))
        self.assertTrue(set(labels) <= set(range(spec.mixture().n_components)))
        np.testing.assert_array_equal(points, sample_reference(spec))
        self.assertFalse(np.array_equal(points, sample_reference(spec, seed=99)))


class ImanConoverTests(SimpleTestCase):
    """
    Rank reordering toward an equicorrelated Gaussian copula
    """

    def setUp(self):
        self.sample = TestDataFactory.rng(104).uniform(size=(500, 3))

    def test_marginals_are_preserved(self):
        """Test every column keeps its exact multiset"""
        reordered = iman_conover(self.sample, 0.6, seed=1)
        np.testing.assert_array_equal(np.sort(reordered, axis=0), np.sort(self.sample, axis=0))

    def test_rank_correlation_moves_toward_target(self):
        """Test pairwise Spearman correlations approach the copula value"""
        reordered = iman_conover(self.sample, 0.6, seed=1)
        rho = spearmanr(reordered).correlation
        off_diagonal = rho[~np.eye(3, dtype=bool)]
        self.assertTrue(np.all(off_diagonal > 0.45))

    def test_invalid_inputs(self):
        """Test single columns, degenerate rho and short samples"""
        with self.assertRaises(ConfigError):
            iman_conover(self.sample[:, :1], 0.5)
        with self.assertRaises(ConfigError):
            iman_conover(self.sample, 1.0)
        with self.assertRaises(ConfigError):
            iman_conover(self.sample[:3], 0.5)


class OrdinalLawTests(SimpleTestCase):
    """
    Ordinal drift ramp
    """

    def setUp(self):
        self.spec = StreamSpec(**ORDINAL_STREAM, ramp_length=10)

    def test_shift_moves_mass_up(self):
        """Test the shifted law is a distribution with a larger mean category"""
        p0 = np.asarray(self.spec.p0)
        shifted = ordinal_shift(p0)
        self.assertAlmostEqual(shifted.sum(), 1.0)
        self.assertEqual(shifted[0], 0.0)
        categories = np.arange(1, p0.size + 1)
        self.assertGreater(shifted @ categories, p0 @ categories)

    def test_ramp(self):
        """Test the ramp is flat before the change and saturates after ramp_length"""
        kappa = self.spec.change_point
        self.assertEqual(self.spec.ramp(kappa), 0.0)
        self.assertAlmostEqual(self.spec.ramp(kappa + 5), 0.5)
        self.assertEqual(self.spec.ramp(kappa + 50), 1.0)
        np.testing.assert_allclose(self.spec.ordinal_law(1), self.spec.p0)
        np.testing.assert_allclose(self.spec.ordinal_law(kappa + 10), ordinal_shift(np.asarray(self.spec.p0)))


class SyntheticStreamTests(SimpleTestCase):
    """
    Seeded batch generation
    """

    def test_batches_are_reproducible_in_any_order(self):
        """Test batch t depends only on (spec, seed, phase, t)"""
        spec = StreamSpec(**MIXTURE_STREAM)
        first = SyntheticStream(spec)
        second = SyntheticStream(spec)
        late = first.points(9)
        np.testing.assert_array_equal(second.points(3), first.points(3))
        np.testing.assert_array_equal(second.points(9), late)

    def test_phases_and_seeds_are_independent(self):
        """Test phases and replication seeds draw different batches"""
        spec = TestDataFactory.create_spec()
        stream = SyntheticStream(spec)
        monitor = stream.points(1)
        self.assertFalse(np.allclose(monitor, stream.points(1, 'calibration')))
        self.assertFalse(np.allclose(stream.points(1, 'calibration'), stream.points(1, 'holdout')))
        self.assertFalse(np.allclose(monitor, stream.points(1, 'null')))
        self.assertFalse(np.allclose(monitor, SyntheticStream(spec, seed=4).points(1)))

    def test_gaussian_shift_after_change(self):
        """Test only monitored post-change batches are translated"""
        spec = TestDataFactory.create_spec(batch_size=400, delta=2.0)
        stream = SyntheticStream(spec)
        kappa = spec.change_point
        self.assertLess(abs(stream.points(kappa).mean()), 0.2)
        self.assertGreater(stream.points(kappa + 1).mean(), 1.5)
        self.assertLess(abs(stream.points(kappa + 1, 'calibration').mean()), 0.2)

    def test_poisson_spike_atoms(self):
        """Test spikes at k_star appear after the change only"""
        stream = SyntheticStream(StreamSpec(**POISSON_STREAM))
        before = np.concatenate([stream.points(t) for t in range(1, 11)])
        after = np.concatenate([stream.points(t) for t in range(11, 21)])
        self.assertFalse(np.any(before == 25))
        self.assertTrue(np.any(after == 25))
        self.assertEqual(stream.dim, 1)

    def test_poisson_counts_fit_the_pre_change_law(self):
        """Test pooled pre-change counts pass a chi-squared fit to Poisson(lambda0) at 0.01"""
        spec = StreamSpec(**POISSON_STREAM)
        stream = SyntheticStream(spec)
        counts = np.concatenate([stream.points(t, 'calibration')[:, 0] for t in range(1, 21)]).astype(int)
        observed = np.array(
            [np.sum(counts <= 2)] + [np.sum(counts == k) for k in range(3, 8)] + [np.sum(counts >= 8)]
        )
        probabilities = np.concatenate([
            [poisson.cdf(2, spec.lambda0)], poisson.pmf(np.arange(3, 8), spec.lambda0), [poisson.sf(7, spec.lambda0)],
        ])
        self.assertGreater(chisquare(observed, probabilities * counts.size).pvalue, 0.01)

    def test_ordinal_midpoint_frequencies(self):
        """Test halfway up the ramp the batch frequencies lie within 3 sigma of the averaged law"""
        spec = StreamSpec(**{**ORDINAL_STREAM, 'batch_size': 4000, 'ramp_length': 10})
        t = spec.change_point + 5
        self.assertEqual(spec.ramp(t), 0.5)
        points = SyntheticStream(spec).points(t)[:, 0]
        p0 = np.asarray(spec.p0)
        expected = (p0 + ordinal_shift(p0)) / 2
        frequencies = np.array([np.mean(points == k) for k in range(1, p0.size + 1)])
        sigma = np.sqrt(expected * (1 - expected) / points.size)
        self.assertTrue(np.all(np.abs(frequencies - expected) <= 3 * sigma), frequencies)

    def test_ordinal_points_are_categories(self):
        """Test ordinal batches only contain category labels"""
        stream = SyntheticStream(StreamSpec(**ORDINAL_STREAM))
        points = stream.points(15)
        self.assertTrue(set(np.unique(points)) <= set(range(1, 7)))

    def test_copula_shift_keeps_marginals(self):
        """Test the post-change base sample is a column-wise reordering"""
        spec = StreamSpec(scenario='copula_shift', dim=2, batch_size=60, length=4, change_point=2, seed=8)
        stream = SyntheticStream(spec)
        np.testing.assert_array_equal(
            np.sort(stream.post_change_base(), axis=0), np.sort(stream.base_sample(), axis=0),
        )

    def test_copula_shift_at_the_sample_correlation_is_invisible(self):
        """Test reordering to the correlation the base already has stays below the null 95th energy percentile"""
        uniform = {
            'scenario': 'copula_shift', 'dim': 2, 'batch_size': 200, 'length': 4, 'change_point': 2, 'seed': 9,
            'beta_alpha': ((1.0, 1.0),), 'beta_beta': ((1.0, 1.0),),
        }
        base = SyntheticStream(StreamSpec(**uniform)).base_sample()
        rho = float(np.corrcoef(base, rowvar=False)[0, 1])
        stream = SyntheticStream(StreamSpec(**{**uniform, 'rho': rho}))
        before, after = stream.base_sample(), stream.post_change_base()
        np.testing.assert_array_equal(before, base)
        with self.assertRaises(ConfigError):
            stream.post_change_mixture()

        rng = TestDataFactory.rng(106)
        pooled = np.vstack([before, after])
        null = []
        for _ in range(199):
            order = rng.permutation(pooled.shape[0])
            null.append(energy_distance(pooled[order[:200]], pooled[order[200:]]))
        self.assertLess(energy_distance(before, after), np.percentile(null, 95))

    def test_mixture_reweighting_moves_weights_not_means(self):
        """Test the reweighted law shifts component frequencies while marginal means move less than 3 sigma"""
        spec = StreamSpec(**{**MIXTURE_STREAM, 'batch_size': 2000})
        stream = SyntheticStream(spec)
        before, after = stream.base_sample(), stream.post_change_base()
        self.assertTrue(np.all(np.abs(after.mean(axis=0) - before.mean(axis=0)) < 3 * before.std(axis=0)))
        weights = spec.mixture().weights
        _, labels = stream.post_change_mixture().sample(spec.batch_size, TestDataFactory.rng(107))
        observed = np.bincount(labels, minlength=weights.size)
        self.assertLess(chisquare(observed, weights * labels.size).pvalue, 0.01)

    def test_null_batches(self):
        """Test null batches have the requested count and stay pre-change"""
        spec = TestDataFactory.create_spec(batch_size=400, delta=2.0)
        batches = SyntheticStream(spec).null_batches(20, phase='null')
        self.assertEqual(len(batches), 20)
        self.assertTrue(all(abs(batch.mean()[0]) < 0.2 for batch in batches))

    def test_generator_helpers(self):
        """Test the per-family generators check their scenario"""
        self.assertEqual(len(list(gen_stream_continuous(StreamSpec(**MIXTURE_STREAM)))), MIXTURE_STREAM['length'])
        self.assertEqual(len(list(gen_stream_poisson_spike(StreamSpec(**POISSON_STREAM)))), POISSON_STREAM['length'])
        self.assertEqual(len(list(gen_stream_ordinal_drift(StreamSpec(**ORDINAL_STREAM)))), ORDINAL_STREAM['length'])
        with self.assertRaises(ConfigError):
            gen_stream_continuous(TestDataFactory.create_spec())
        with self.assertRaises(ConfigError):
            gen_stream_poisson_spike(StreamSpec(**ORDINAL_STREAM))

    def test_export_round_trip(self):
        """Test exported streams read back batch by batch"""
        spec = TestDataFactory.create_spec(length=6, change_point=3)
        stream = SyntheticStream(spec)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'stream.csv'
            self.assertEqual(stream.export(path), 6)
            batches = list(read_stream(path))
        self.assertEqual([t for t, _ in batches], list(range(1, 7)))
        np.testing.assert_allclose(np.sort(batches[0][1].support, axis=0), np.sort(stream.points(1), axis=0))


class StreamSpecSerializerTests(SimpleTestCase):
    """
    Stream specs read from configs
    """

    def test_defaults_are_filled(self):
        """Test a minimal payload gets the documented defaults"""
        spec = stream_spec_from_dict({'scenario': 'barycenter'})
        self.assertEqual((spec.dim, spec.batch_size, spec.length, spec.change_point), (2, 100, 200, 100))

    def test_lists_become_tuples(self):
        """Test list values are stored as hashable tuples"""
        spec = stream_spec_from_dict({'scenario': 'ordinal_drift', 'p0': [0.4, 0.3, 0.2, 0.1]})
        self.assertEqual(spec.p0, (0.4, 0.3, 0.2, 0.1))
        self.assertEqual(spec.n_categories, 4)

    def test_rejections(self):
        """Test unknown keys and invalid values are config errors"""
        with self.assertRaises(ConfigError):
            stream_spec_from_dict({**GAUSSIAN_STREAM, 'colour': 'red'})
        with self.assertRaises(ConfigError):
            stream_spec_from_dict({**GAUSSIAN_STREAM, 'change_point': 99})
        with self.assertRaises(ConfigError):
            stream_spec_from_dict({'scenario': 'copula_shift', 'dim': 1})
