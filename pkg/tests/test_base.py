"""
Test the label schema, multi-labels and the partitioned conditional
base distribution in `src.base`.
"""
from os.path import join
from shutil import rmtree
from tempfile import mkdtemp

import numpy as np
import torch
from schema import SchemaError
from scipy.integrate import quad
import unittest
from numpy.testing import (assert_allclose,
                           assert_array_equal)

from data import DEFAULT_SCHEMA_PATH
from src.distributions import LOG_2PI
from src.base import (CATEGORICAL,
                      CONTINUOUS,
                      EMPTY_CODE,
                      MultiLabel,
                      LabelSchema,
                      AttributeSpec,
                      classify,
                      base_loglik,
                      base_sample,
                      encode_labels,
                      default_schema,
                      classify_batch,
                      read_continuous,
                      base_log_prob,
                      base_loglik_batch)


def binary_schema(prior=None, residual_width=1):
    return LabelSchema([AttributeSpec('gender', CATEGORICAL, 1,
                                      classes=['F', 'M'], prior=prior)],
                       residual_width)


def snr_schema(width=1, residual_width=1):
    return LabelSchema([AttributeSpec('snr', CONTINUOUS, width,
                                      value_range=(25.0, 55.0))],
                       residual_width)


class LabelSchemaTestCase(unittest.TestCase):
    """
    Test `AttributeSpec` and `LabelSchema`.
    """

    def test_sections(self):
        schema = LabelSchema([AttributeSpec('gender', CATEGORICAL, 2,
                                            classes=['F', 'M']),
                              AttributeSpec('snr', CONTINUOUS, 3,
                                            value_range=(25.0, 55.0))],
                             4)
        self.assertEqual(schema.d, 9)
        self.assertEqual(schema.slices, [slice(0, 2), slice(2, 5)])
        self.assertEqual(schema.residual_slice, slice(5, 9))
        self.assertEqual(schema.index('snr'), 1)
        self.assertEqual(schema.index(0), 0)
        with self.assertRaises(ValueError):
            schema.index('age')
        with self.assertRaises(ValueError):
            schema.index(2)
        with self.assertRaises(ValueError):
            schema.check_dim(8)

    def test_invalid_attributes(self):
        for args, kwargs in [(('gender', 'ordinal'), {}),
                             (('gender', CATEGORICAL), {'classes': ['F']}),
                             (('gender', CATEGORICAL), {'classes': ['F', 'F']}),
                             (('gender', CATEGORICAL),
                              {'classes': ['F', 'M'], 'prior': [0.7, 0.7]}),
                             (('gender', CATEGORICAL, 0), {'classes': ['F', 'M']}),
                             (('snr', CONTINUOUS), {}),
                             (('snr', CONTINUOUS), {'value_range': (55.0, 25.0)})]:
            with self.assertRaises(ValueError):
                AttributeSpec(*args, **kwargs)

    def test_invalid_schemas(self):
        gender = AttributeSpec('gender', CATEGORICAL, classes=['F', 'M'])
        with self.assertRaises(ValueError):
            LabelSchema([gender, gender], 2)
        with self.assertRaises(ValueError):
            LabelSchema([gender], 0)

    def test_prior_is_read_only(self):
        attr = AttributeSpec('gender', CATEGORICAL, classes=['F', 'M'])
        with self.assertRaises(ValueError):
            attr.prior[0] = 1.0

    def test_default_schema_file(self):
        """
        Test that the packaged default schema matches `default_schema`.
        """

        schema = LabelSchema.load(DEFAULT_SCHEMA_PATH)
        self.assertEqual(schema, default_schema())
        self.assertEqual(schema.d, 256)
        self.assertEqual(schema.residual_width, 253)
        self.assertEqual(schema.attribute('snr').value_range, (25.0, 55.0))
        self.assertEqual(schema.attribute('gender').shift, 6.0)

    def test_serialization(self):
        path = mkdtemp()
        try:
            schema = default_schema(16).with_priors({'age': [0.8, 0.2]})
            schema.save(join(path, 'schema.json'))
            self.assertEqual(LabelSchema.load(join(path, 'schema.json')), schema)
        finally:
            rmtree(path)
        document = default_schema(16).to_dict()
        document['d'] = 17
        with self.assertRaises(SchemaError):
            LabelSchema.from_dict(document)

    def test_with_empirical_priors(self):
        schema = default_schema(8)
        labels = [MultiLabel(values, schema) for values in
                  [['F', None, None], ['F', 'adult', 30.0], ['M', None, 40.0],
                   ['F', None, None]]]
        empirical = schema.with_empirical_priors(labels)
        assert_allclose(empirical.attribute('gender').prior, [0.75, 0.25])
        assert_allclose(empirical.attribute('age').prior, [1.0, 0.0])
        unlabeled = schema.with_empirical_priors([MultiLabel.empty(schema)])
        assert_allclose(unlabeled.attribute('gender').prior, [0.5, 0.5])


class MultiLabelTestCase(unittest.TestCase):
    """
    Test `MultiLabel` and `encode_labels`.
    """

    def test_values(self):
        schema = default_schema(8)
        label = MultiLabel.from_assignments({'gender': 'M', 'snr': '40'}, schema)
        self.assertEqual(label.values, ('M', None, 40.0))
        self.assertEqual(label.observed, (True, False, True))
        self.assertEqual(repr(label), 'MultiLabel(M, _, 40.0)')
        self.assertEqual(label, MultiLabel(['M', None, 40], schema))
        self.assertEqual(MultiLabel.empty(schema).values, (None, None, None))

    def test_invalid_values(self):
        schema = default_schema(8)
        for values in [['X', None, None], [None, None, 70.0],
                       [None, None, 'loud'], ['F', None]]:
            with self.assertRaises(ValueError):
                MultiLabel(values, schema)
        with self.assertRaises(ValueError):
            MultiLabel.from_assignments({'accent': 'x'}, schema)
        edited = MultiLabel.empty(schema).with_value(2, 70.0, schema)
        self.assertEqual(edited.values[2], 70.0)

    def test_encode_labels(self):
        schema = default_schema(8)
        encoded = encode_labels([MultiLabel(['M', None, 30.0], schema),
                                 MultiLabel([None, 'child', None], schema)],
                                schema)
        assert_array_equal(encoded[0], [1, EMPTY_CODE])
        assert_array_equal(encoded[1], [EMPTY_CODE, 1])
        assert_array_equal(encoded[2], [30.0, np.nan])


class BaseLoglikTestCase(unittest.TestCase):
    """
    Test `base_loglik` and its gradient.
    """

    def test_observed_at_means(self):
        schema = default_schema(10)
        z = np.zeros(10)
        z[0] = 6.0
        z[2] = 40.0
        y = MultiLabel(['M', 'adult', 40.0], schema)
        assert_allclose(base_loglik(z, y, schema), -5.0*LOG_2PI, atol=1e-12)

    def test_unobserved_binary_attribute(self):
        schema = binary_schema()
        value = base_loglik(np.zeros(2), MultiLabel.empty(schema), schema)
        assert_allclose(value, -1.612086 - 0.5*LOG_2PI, atol=1e-6)

    def test_categorical_marginal_is_class_sum(self):
        """
        Test that an empty categorical value equals the prior-weighted
        sum over the classes.
        """

        schema = default_schema(6).with_priors({'gender': [0.3, 0.7]})
        prior = schema.attribute('gender').prior
        prng = np.random.RandomState(0)
        for z in prng.randn(5, 6)*3 + 2:
            empty = MultiLabel([None, 'child', 33.0], schema)
            brute = np.log(sum(p*np.exp(base_loglik(z, empty.with_value(0, c,
                                                                         schema),
                                                    schema))
                               for p, c in zip(prior, ['F', 'M'])))
            assert_allclose(base_loglik(z, empty, schema), brute, atol=1e-10)

    def test_continuous_marginal_is_range_integral(self):
        """
        Test that an empty continuous value equals the average over the
        range of the conditional likelihood.
        """

        schema = snr_schema()
        for z in [np.array([20.0, 0.3]), np.array([41.0, -1.0]),
                  np.array([56.5, 0.0])]:
            integral = quad(lambda v: np.exp(base_loglik(z, MultiLabel([v],
                                                                       schema),
                                                         schema))/30.0,
                            25.0, 55.0, points=[z[0]] if 25 < z[0] < 55 else None,
                            epsabs=0.0, epsrel=1e-10, limit=200)[0]
            assert_allclose(np.exp(base_loglik(z, MultiLabel.empty(schema),
                                               schema)),
                            integral, rtol=1e-6)

    def test_log_prob_gradient(self):
        """
        Test that the differentiable base log-likelihood matches
        `base_loglik` and that its autograd gradient matches central
        finite differences.
        """

        schema = default_schema(6)
        prng = np.random.RandomState(1)
        labels = [MultiLabel(['F', None, None], schema),
                  MultiLabel([None, 'adult', 31.0], schema),
                  MultiLabel.empty(schema)]
        Z = prng.randn(3, 6)*2 + 3
        Z[:, 2] += 35.0
        encoded = encode_labels(labels, schema)
        Z_tensor = torch.tensor(Z, requires_grad=True)
        ll = base_log_prob(Z_tensor, encoded, schema)
        ll.sum().backward()
        grad = Z_tensor.grad.numpy()
        assert_allclose(ll.detach().numpy(), base_loglik_batch(Z, encoded, schema),
                        rtol=1e-12)
        h = 1e-6
        for i in range(3):
            assert_allclose(ll[i].item(), base_loglik(Z[i], labels[i], schema))
            for j in range(6):
                Zp, Zm = Z[i].copy(), Z[i].copy()
                Zp[j] += h
                Zm[j] -= h
                numeric = (base_loglik(Zp, labels[i], schema)
                           - base_loglik(Zm, labels[i], schema))/(2*h)
                assert_allclose(grad[i, j], numeric, rtol=1e-5, atol=1e-6)

    def test_shape_mismatch(self):
        schema = default_schema(6)
        with self.assertRaises(ValueError):
            base_loglik(np.zeros(5), MultiLabel.empty(schema), schema)


class BaseSampleTestCase(unittest.TestCase):
    """
    Test `base_sample`.
    """

    def test_section_means(self):
        schema = default_schema(5)
        y = MultiLabel(['M', 'adult', 30.0], schema)
        Z = base_sample(y, schema, rng_seed=0, n=100000)
        assert_allclose(Z.mean(axis=0), [6.0, 0.0, 30.0, 0.0, 0.0], atol=0.02)

    def test_degenerate_prior(self):
        schema = binary_schema(prior=[1.0, 0.0])
        Z = base_sample(MultiLabel.empty(schema), schema, rng_seed=0, n=10000)
        self.assertLess(abs(Z[:, 0].mean()), 0.05)
        self.assertLess(abs(Z[:, 0].var() - 1.0), 0.05)

    def test_unobserved_continuous(self):
        schema = snr_schema()
        Z = base_sample(MultiLabel.empty(schema), schema, rng_seed=0, n=20000)
        self.assertLess(abs(Z[:, 0].mean() - 40.0), 0.3)

    def test_determinism(self):
        schema = default_schema(5)
        y = MultiLabel(['F', None, None], schema)
        assert_array_equal(base_sample(y, schema, rng_seed=3),
                           base_sample(y, schema, rng_seed=3))
        self.assertEqual(base_sample(y, schema, rng_seed=3).shape, (5,))


class ClassifyTestCase(unittest.TestCase):
    """
    Test `classify` and `read_continuous`.
    """

    def test_classify(self):
        schema = binary_schema()
        assert_allclose(classify([3.0, 0.0], schema, 'gender'), [0.5, 0.5])
        assert_allclose(classify([2.0, 0.0], schema, 0), [0.99753, 0.00247],
                        atol=1e-5)
        degenerate = binary_schema(prior=[1.0, 0.0])
        assert_allclose(classify_batch(np.array([[6.0, 0.0], [20.0, 1.0]]),
                                       degenerate, 0),
                        [[1.0, 0.0], [1.0, 0.0]])
        with self.assertRaises(ValueError):
            classify([30.0, 0.0], snr_schema(), 'snr')

    def test_read_continuous(self):
        self.assertEqual(read_continuous([40.0, 0.0], snr_schema(), 'snr'), 40.0)
        self.assertEqual(read_continuous([29.0, 31.0, 0.0], snr_schema(2), 0),
                         30.0)
        with self.assertRaises(ValueError):
            read_continuous([0.0, 0.0], binary_schema(), 'gender')

    def test_read_continuous_of_samples(self):
        schema = snr_schema()
        Z = base_sample(MultiLabel([30.0], schema), schema, rng_seed=2, n=10000)
        readouts = [read_continuous(z, schema, 0) for z in Z]
        self.assertLess(abs(np.mean(readouts) - 30.0), 0.04)
