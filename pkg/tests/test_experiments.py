"""
Closed-loop experiments on the "hard" synthetic preset: train a flow
with 30% of the categorical labels and supporting regularization data,
then measure classification, conditional generation, continuous
control, editing and unconditional generation against the generator's
oracle and the conditional-GMM baseline.
"""
import numpy as np
import unittest
from numpy.testing import assert_allclose

from src import (flow,
                 tacospawn)
from src.base import (MultiLabel,
                      default_schema)
from src.distributions import EmConfig
from src.flow import (TrainConfig,
                      edit_batch,
                      sample_labels,
                      classify_embeddings)
from src.supporting import fit_supporting
from src.metrics import (pearson_r,
                         nn_distance,
                         cos_distance,
                         distance_report,
                         attribute_accuracy)
from src.synthcorpus import (GeneratorSpec,
                             generate,
                             drop_labels,
                             oracle_values)

CATEGORICAL = ['gender', 'age']
KEEP_FRACTION = 0.3
N_GENERATED = 1000
DELTA = 1.0


class ClosedLoopTestCase(unittest.TestCase):
    """
    Train once, then check every use of the trained model.
    """

    @classmethod
    def setUpClass(cls):
        schema = default_schema(8, snr_range=(-6.0, 6.0))
        cls.spec = GeneratorSpec.preset('hard', schema=schema, n_speakers=1000,
                                        direction_seed=21)
        corpus = generate(cls.spec, rng_seed=22)
        for offset, name in enumerate(CATEGORICAL):
            corpus = drop_labels(corpus, name, KEEP_FRACTION, rng_seed=23 + offset)
        cls.corpus = corpus
        cls.held_out = generate(GeneratorSpec.preset('hard', schema=schema,
                                                     n_speakers=4000,
                                                     direction_seed=21),
                                rng_seed=26)
        train, val = corpus.train(), corpus.val()
        pool = fit_supporting(train, K=8, em_config=EmConfig(rng_seed=0))
        config = TrainConfig(batch_size=64, reg_batch_size=64,
                             learning_rate=5e-3, max_epochs=80, patience=10,
                             hidden_size=32, rng_seed=24)
        cls.model = flow.train(train, val, pool, corpus.schema, config=config)
        cls.baseline = tacospawn.fit(train, CATEGORICAL, K=8,
                                     em_config=EmConfig(rng_seed=0),
                                     use_truth=True)

    def test_labels_are_partial(self):
        train = self.corpus.train()
        for name in CATEGORICAL:
            assert_allclose(train.n_observed(name)/len(train), KEEP_FRACTION,
                            atol=0.05)

    def test_classification(self):
        """
        Test that held-out accuracy reaches 95% of the Bayes oracle.
        """

        E = self.held_out.embeddings
        for name in CATEGORICAL:
            classes = self.corpus.schema.attribute(name).classes
            truth = self.held_out.truth_values(name)
            posteriors = classify_embeddings(self.model, E, name)
            predicted = [classes[j] for j in np.argmax(posteriors, axis=1)]
            oracle = attribute_accuracy(oracle_values(self.spec, E, name), truth)
            self.assertGreaterEqual(attribute_accuracy(predicted, truth),
                                    0.95*oracle)

    def test_conditional_generation(self):
        """
        Test that conditionally generated embeddings carry their
        condition, and more often than the baseline's.
        """

        schema = self.model.schema
        baseline_E, conditions = tacospawn.sample_unconditional(
            self.baseline, 2000, rng_seed=35)
        for index, name in enumerate(CATEGORICAL):
            generated, requested = [], []
            for offset, value in enumerate(schema.attribute(name).classes):
                y = MultiLabel.from_assignments({name: value}, schema)
                generated.append(sample_labels(self.model, [y]*500,
                                               rng_seed=30 + offset))
                requested.extend([value]*500)
            agreement = attribute_accuracy(oracle_values(self.spec,
                                                         np.vstack(generated),
                                                         name),
                                           requested)
            self.assertGreaterEqual(agreement, 0.9)
            baseline_agreement = attribute_accuracy(
                oracle_values(self.spec, baseline_E, name),
                [condition[index] for condition in conditions])
            self.assertLess(baseline_agreement, agreement)

    def test_continuous_control(self):
        schema = self.model.schema
        index = schema.index('snr')
        values = np.linspace(-6.0, 6.0, 500)
        labels = [MultiLabel.empty(schema).with_value(index, float(v), schema)
                  for v in values]
        E = sample_labels(self.model, labels, rng_seed=40)
        self.assertGreaterEqual(pearson_r(values,
                                          oracle_values(self.spec, E, 'snr')),
                                0.9)

    def test_editing(self):
        """
        Test that a delta edit raises the measured value of low-valued
        items by at least 80% of the delta while staying closer to the
        original than the typical nearest real neighbour.
        """

        train = self.corpus.train()
        truth = np.array(train.truth_values('snr'))
        rows = np.flatnonzero(truth < 0.0)[:100]
        self.assertEqual(rows.size, 100)
        E = train.embeddings[rows]
        edited = edit_batch(self.model, E, 'snr', delta=DELTA)
        before = np.array(oracle_values(self.spec, E, 'snr'))
        after = np.array(oracle_values(self.spec, edited, 'snr'))
        self.assertGreaterEqual(np.mean(after - before), 0.8*DELTA)
        s2s = nn_distance(self.corpus.embeddings, self.corpus.embeddings,
                          exclude_self=True)
        self.assertLessEqual(np.median([cos_distance(e, e_edited)
                                        for e, e_edited in zip(E, edited)]),
                             s2s)
        assert_allclose(edit_batch(self.model, E, 'snr', delta=0.0), E,
                        rtol=0, atol=1e-8)

    def test_unconditional_generation(self):
        real = self.corpus.embeddings
        generated = sample_labels(self.model,
                                  [MultiLabel.empty(self.model.schema)]*N_GENERATED,
                                  rng_seed=50)
        baseline = tacospawn.sample_unconditional(self.baseline, N_GENERATED,
                                                  rng_seed=51)[0]
        for E in (generated, baseline):
            report = distance_report(real, E)
            self.assertLessEqual(abs(report.g2g - report.s2s)/report.s2s, 0.15)
            self.assertLessEqual(abs(report.s2g - report.s2s)/report.s2s, 0.15)
