"""
Test the conditional-GMM baseline in `src.tacospawn`.
"""
from os.path import join
from shutil import rmtree
from tempfile import mkdtemp

import numpy as np
from schema import SchemaError
import unittest
from numpy.testing import (assert_allclose,
                           assert_array_equal)

from src import tacospawn
from src.base import default_schema
from src.distributions import (EmConfig,
                               GmmModel)
from src.metrics import attribute_accuracy
from src.tacospawn import ConditionalGmm
from src.synthcorpus import (GeneratorSpec,
                             generate,
                             drop_labels)


class ConditionalGmmTestCase(unittest.TestCase):
    """
    Test `fit`, `ConditionalGmm` and the sampling functions.
    """

    @classmethod
    def setUpClass(cls):
        spec = GeneratorSpec(schema=default_schema(6), n_speakers=240,
                             direction_seed=11)
        cls.corpus = generate(spec, rng_seed=12)
        cls.model = tacospawn.fit(cls.corpus.train(), ['gender', 'age'], K=2,
                                  em_config=EmConfig(rng_seed=0))

    def test_table(self):
        model = self.model
        self.assertEqual(model.conditions, ('gender', 'age'))
        self.assertEqual(list(model.table),
                         [('F', 'adult'), ('F', 'child'), ('M', 'adult'),
                          ('M', 'child')])
        self.assertEqual(sum(model.counts.values()), len(self.corpus.train()))
        self.assertEqual(model.d, 6)
        self.assertEqual(model.warnings_, [])

    def test_classify(self):
        val = self.corpus.val()
        for name in ['gender', 'age']:
            posteriors = self.model.classify(val.embeddings, name)
            assert_allclose(posteriors.sum(axis=1), 1.0)
            classes = self.model.classes[self.model.conditions.index(name)]
            predicted = [classes[j] for j in np.argmax(posteriors, axis=1)]
            self.assertGreater(attribute_accuracy(predicted,
                                                  val.truth_values(name)),
                               0.9)
        with self.assertRaises(ValueError):
            self.model.classify(val.embeddings, 'snr')

    def test_sampling(self):
        X = tacospawn.sample_conditional(self.model, ('M', 'child'), 5,
                                         rng_seed=1)
        self.assertEqual(X.shape, (5, 6))
        assert_array_equal(tacospawn.sample_conditional(self.model,
                                                        ('M', 'child'), 5,
                                                        rng_seed=1),
                           X)
        with self.assertRaises(ValueError):
            tacospawn.sample_conditional(self.model, ('M', 'teen'), 5)
        with self.assertRaises(ValueError):
            tacospawn.sample_conditional(self.model, ('M',), 5)
        X, conditions = tacospawn.sample_unconditional(self.model, 2000,
                                                       rng_seed=2)
        self.assertEqual(X.shape, (2000, 6))
        total = sum(self.model.counts.values())
        for key, count in self.model.counts.items():
            self.assertLess(abs(conditions.count(key)/2000 - count/total), 0.05)

    def test_loglik(self):
        E = self.corpus.embeddings[:3]
        assert_allclose(self.model.loglik(E, ('F', 'adult')),
                        self.model.model(('F', 'adult')).logpdf(E))

    def test_missing_tuples_and_fallbacks(self):
        """
        Test that unseen tuples are reported and small groups fall back
        to one component per item.
        """

        index = self.corpus.schema.index('gender')
        rows = [row for row, true in enumerate(self.corpus.truth)
                if true.values[index] == 'F'][:30]
        model = tacospawn.fit(self.corpus.subset(rows), ['gender', 'age'], K=20)
        self.assertEqual(len(model.table), 2)
        self.assertEqual(sum('no training items' in w for w in model.warnings_), 2)
        for key, gmm in model.table.items():
            self.assertEqual(gmm.K, min(20, model.counts[key]))
        with self.assertRaises(ValueError):
            model.model(('M', 'adult'))

    def test_partial_labels(self):
        corpus = drop_labels(self.corpus, 'age', 0.5, rng_seed=3)
        with self.assertRaises(ValueError):
            tacospawn.fit(corpus, ['gender', 'age'], K=2)
        model = tacospawn.fit(corpus, ['gender', 'age'], K=2, use_truth=True)
        self.assertEqual(sum(model.counts.values()), len(corpus))

    def test_invalid_conditions(self):
        with self.assertRaises(ValueError):
            tacospawn.fit(self.corpus, [], K=2)
        with self.assertRaises(ValueError):
            tacospawn.fit(self.corpus, ['snr'], K=2)
        with self.assertRaises(ValueError):
            tacospawn.fit(self.corpus, ['accent'], K=2)

    def test_parallel_fit(self):
        parallel = tacospawn.fit(self.corpus.train(), ['gender', 'age'], K=2,
                                 em_config=EmConfig(rng_seed=0), n_jobs=2)
        for key, gmm in self.model.table.items():
            assert_allclose(parallel.table[key].means, gmm.means)

    def test_save_load(self):
        path = mkdtemp()
        try:
            self.model.save(join(path, 'cgmm.json'))
            restored = ConditionalGmm.load(join(path, 'cgmm.json'))
        finally:
            rmtree(path)
        self.assertEqual(restored.counts, self.model.counts)
        E = self.corpus.embeddings[:4]
        assert_allclose(restored.classify(E, 'age'), self.model.classify(E, 'age'))
        document = self.model.to_dict()
        document['entries'] = []
        with self.assertRaises(SchemaError):
            ConditionalGmm.from_dict(document)

    def test_invalid_tables(self):
        gmm = GmmModel([1.0], [np.zeros(6)], [1.0])
        with self.assertRaises(ValueError):
            ConditionalGmm(['gender'], [['F', 'M']], {})
        with self.assertRaises(ValueError):
            ConditionalGmm(['gender'], [['F', 'M']], {('X',): gmm})
        with self.assertRaises(ValueError):
            ConditionalGmm(['gender'], [['F', 'M']],
                           {('F',): gmm, ('M',): GmmModel([1.0], [np.zeros(5)],
                                                          [1.0])})
