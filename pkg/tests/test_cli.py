"""
Test the `speakerflow` command-line utility end to end on a small corpus.
"""
from os import (walk,
                listdir)
from json import load
from os.path import (join,
                     exists,
                     relpath)
from shutil import rmtree
from tempfile import mkdtemp

import numpy as np
import pandas as pd
import unittest
from numpy.testing import (assert_allclose,
                           assert_array_equal)

from src.flow import FlowModel
from src.tacospawn import ConditionalGmm
from src.supporting import SupportingPool
from src.synthcorpus import (Corpus,
                             read_embeddings)
from util.speakerflow import (main,
                              load_model)

TRAINING = ['--max_epochs', '2', '--patience', '1', '--n_layers', '1',
            '--hidden_size', '8', '--batch_size', '32', '--reg_batch_size', '16']


def _read_manifest(directory):
    with open(join(directory, 'manifest.json')) as f:
        return load(f)


class CommandLineTestCase(unittest.TestCase):
    """
    Run every subcommand once, in pipeline order, and check the files
    it writes.
    """

    @classmethod
    def setUpClass(cls):
        cls.path = mkdtemp()
        cls.corpus_dir = join(cls.path, 'corpus')
        cls.models_dir = join(cls.path, 'models')
        cls.flow_dir = join(cls.path, 'flow')
        cls._speakerflow(['synth', '--out_dir', cls.corpus_dir, '--d', '8',
                          '--n_speakers', '120', '--keep', 'gender=0.5,snr=0.5'])
        cls._speakerflow(['fit-gmm', '--corpus', cls.corpus_dir, '-K', '2',
                          '--out', join(cls.models_dir, 'supporting.json')])
        cls._speakerflow(['fit-gmm', '--corpus', cls.corpus_dir, '-K', '2',
                          '--kind', 'conditional', '--conditions', 'gender,age',
                          '--out', join(cls.models_dir, 'conditional.json')])
        cls._speakerflow(['train', '--corpus', cls.corpus_dir,
                          '--supporting', join(cls.models_dir, 'supporting.json'),
                          '--generator', join(cls.corpus_dir, 'generator.json'),
                          '--out', join(cls.flow_dir, 'flow.json')] + TRAINING)

    @classmethod
    def tearDownClass(cls):
        rmtree(cls.path)

    @classmethod
    def _speakerflow(cls, argv):
        status = main(['--seed', '5'] + argv)
        if status:
            raise AssertionError('speakerflow {0} exited with status {1}.'
                                 .format(' '.join(argv), status))

    def test_synth(self):
        corpus = Corpus.load(self.corpus_dir)
        self.assertEqual(len(corpus), 120)
        self.assertEqual(corpus.schema.d, 8)
        self.assertEqual(corpus.n_observed('gender'), 60)
        self.assertEqual(corpus.n_observed('age'), 120)
        self.assertEqual(corpus.n_observed('snr'), 60)
        manifest = _read_manifest(self.corpus_dir)
        self.assertEqual(manifest['command'], 'synth')
        self.assertEqual(manifest['seed'], 5)
        self.assertEqual(manifest['config']['keep'], 'gender=0.5,snr=0.5')
        self.assertTrue(exists(join(self.corpus_dir, 'generator.json')))
        self.assertTrue(exists(join(self.corpus_dir, 'logs', 'speakerflow.log')))

    def test_synth_is_reproducible(self):
        other = join(self.path, 'corpus_again')
        self._speakerflow(['synth', '--out_dir', other, '--d', '8', '--n_speakers', '120',
                           '--keep', 'gender=0.5,snr=0.5'])
        for name in ['embeddings.bin', 'labels.csv', 'truth.csv', 'schema.json',
                     'manifest.json']:
            with open(join(self.corpus_dir, name), 'rb') as f:
                expected = f.read()
            with open(join(other, name), 'rb') as f:
                self.assertEqual(f.read(), expected)

    def test_models(self):
        self.assertIsInstance(load_model(join(self.models_dir, 'supporting.json')),
                              SupportingPool)
        conditional = load_model(join(self.models_dir, 'conditional.json'))
        self.assertIsInstance(conditional, ConditionalGmm)
        self.assertEqual(conditional.conditions, ('gender', 'age'))
        flow = load_model(join(self.flow_dir, 'flow.json'))
        self.assertIsInstance(flow, FlowModel)
        self.assertEqual(flow.schema.d, 8)
        history = pd.read_csv(join(self.flow_dir, 'history.csv'))
        self.assertEqual(list(history.columns), ['epoch', 'train_loss', 'val_loglik'])
        self.assertGreaterEqual(len(history), 1)
        manifest = _read_manifest(self.flow_dir)
        self.assertEqual(manifest['command'], 'train')
        self.assertEqual(sorted(entry['name'] for entry in manifest['inputs']),
                         ['embeddings.bin', 'generator.json', 'labels.csv',
                          'schema.json', 'supporting.json', 'truth.csv'])

    def test_sample(self):
        out_dir = join(self.path, 'samples')
        self._speakerflow(['sample', '--model', join(self.flow_dir, 'flow.json'),
                           '--label', 'gender=F,age=_,snr=_', '-n', '10',
                           '--out_dir', out_dir])
        E = read_embeddings(join(out_dir, 'embeddings.bin'))
        self.assertEqual(E.shape, (10, 8))
        labels = pd.read_csv(join(out_dir, 'labels.csv'), dtype=str,
                             keep_default_na=False)
        self.assertEqual(list(labels.columns), ['gender', 'age', 'snr'])
        self.assertEqual(set(labels['gender']), {'F'})
        self.assertEqual(set(labels['age']), {''})
        self._speakerflow(['sample', '--model', join(self.flow_dir, 'flow.json'),
                           '--label', 'gender=F,age=_,snr=_', '-n', '10',
                           '--out_dir', out_dir])
        assert_array_equal(read_embeddings(join(out_dir, 'embeddings.bin')), E)

        self._speakerflow(['sample', '--model', join(self.models_dir, 'conditional.json'),
                           '-n', '12', '--out_dir', out_dir])
        self.assertEqual(read_embeddings(join(out_dir, 'embeddings.bin')).shape,
                         (12, 8))
        labels = pd.read_csv(join(out_dir, 'labels.csv'))
        self.assertEqual(list(labels.columns), ['gender', 'age'])

    def test_classify(self):
        out = join(self.path, 'classify', 'gender.csv')
        self._speakerflow(['classify', '--model', join(self.flow_dir, 'flow.json'),
                           '--corpus', self.corpus_dir, '--attr', 'gender', '--out', out])
        frame = pd.read_csv(out)
        self.assertEqual(list(frame.columns), ['item', 'predicted', 'p_F', 'p_M'])
        self.assertEqual(len(frame), 120)
        assert_allclose(frame['p_F'] + frame['p_M'], 1.0)

        out = join(self.path, 'classify', 'snr.csv')
        self._speakerflow(['classify', '--model', join(self.flow_dir, 'flow.json'),
                           '--corpus', self.corpus_dir, '--attr', 'snr', '--out', out])
        self.assertEqual(list(pd.read_csv(out).columns), ['item', 'value'])

        out = join(self.path, 'classify', 'age.csv')
        self._speakerflow(['classify', '--model', join(self.models_dir, 'conditional.json'),
                           '--embeddings', join(self.corpus_dir, 'embeddings.bin'),
                           '--attr', 'age', '--out', out])
        frame = pd.read_csv(out)
        self.assertEqual(list(frame.columns),
                         ['item', 'predicted', 'p_adult', 'p_child'])

    def test_edit(self):
        out_dir = join(self.path, 'edits')
        self._speakerflow(['edit', '--model', join(self.flow_dir, 'flow.json'),
                           '--corpus', self.corpus_dir, '--attr', 'snr', '--delta', '15',
                           '--below', '40', '--generator',
                           join(self.corpus_dir, 'generator.json'), '--out_dir', out_dir])
        corpus = Corpus.load(self.corpus_dir)
        below = sum(value < 40 for value in corpus.truth_values('snr'))
        edits = pd.read_csv(join(out_dir, 'edits.csv'))
        self.assertEqual(list(edits.columns),
                         ['item', 'cos_distance', 'oracle_before', 'oracle_after'])
        self.assertEqual(len(edits), below)
        self.assertEqual(read_embeddings(join(out_dir, 'edited.bin')).shape,
                         (below, 8))
        self.assertTrue(np.all(edits['cos_distance'] >= 0.0))

        self._speakerflow(['edit', '--model', join(self.flow_dir, 'flow.json'),
                           '--corpus', self.corpus_dir, '--attr', 'snr', '--delta', '0',
                           '--out_dir', out_dir])
        assert_allclose(read_embeddings(join(out_dir, 'edited.bin')),
                        corpus.embeddings, atol=1e-8)
        edits = pd.read_csv(join(out_dir, 'edits.csv'))
        self.assertEqual(list(edits.columns),
                         ['item', 'cos_distance', 'readout_before',
                          'readout_after'])

    def test_eval(self):
        out_dir = join(self.path, 'eval')
        self._speakerflow(['eval', '--corpus', self.corpus_dir,
                           '--model', join(self.flow_dir, 'flow.json'),
                           '--baseline', join(self.models_dir, 'conditional.json'),
                           '--n_samples', '40', '--clique', '--snr-bins', '10',
                           '--out_dir', out_dir])
        distances = pd.read_csv(join(out_dir, 'distances.csv'))
        self.assertEqual(list(distances.columns), ['model', 'metric', 'value'])
        self.assertEqual(len(distances), 6)
        self.assertTrue(np.all((distances['value'] >= 0)
                               & (distances['value'] <= 2)))
        with open(join(out_dir, 'distances.json')) as f:
            reports = load(f)
        self.assertEqual(sorted(reports), ['baseline', 'flow'])
        for name, metric, value in distances.itertuples(index=False):
            assert_allclose(reports[name][metric], value, rtol=1e-12)
        accuracy = pd.read_csv(join(out_dir, 'accuracy.csv'))
        self.assertEqual(set(accuracy['model']), {'flow', 'baseline', 'oracle'})
        self.assertEqual(set(accuracy['task']), {'classification', 'generation'})
        control = pd.read_csv(join(out_dir, 'controllability.csv'))
        self.assertEqual(list(control['attr']), ['snr'])
        with open(join(out_dir, 'summary.json')) as f:
            summary = load(f)
        self.assertEqual(sorted(summary), ['accuracy', 'pearson_r'])
        for name, attr, task, value in accuracy.itertuples(index=False):
            assert_allclose(summary['accuracy'][name][attr][task], value,
                            rtol=1e-12)
        assert_allclose(summary['pearson_r']['flow']['snr'],
                        control['pearson_r'][0], rtol=1e-12)
        self.assertEqual(sorted(summary['accuracy']['oracle']), ['age', 'gender'])
        cliques = pd.read_csv(join(out_dir, 'cliques_real_snr.csv'))
        self.assertEqual(list(cliques.columns),
                         ['set', 'attr', 'bin_low', 'bin_high', 'n_items',
                          'clique_number', 'threshold'])
        self.assertEqual(cliques['n_items'].sum(), 120)
        assert_allclose(cliques['bin_high'] - cliques['bin_low'], 10.0)
        self.assertTrue(exists(join(out_dir, 'cliques_flow_snr.csv')))
        manifest = _read_manifest(out_dir)
        self.assertEqual(manifest['command'], 'eval')
        self.assertTrue(manifest['config']['clique'])
        self.assertEqual(manifest['config']['snr_bins'], 10.0)

    def test_eval_without_cliques(self):
        out_dir = join(self.path, 'eval_plain')
        self._speakerflow(['eval', '--corpus', self.corpus_dir,
                           '--model', join(self.flow_dir, 'flow.json'),
                           '--n_samples', '20', '--snr_bins', '5',
                           '--out_dir', out_dir])
        self.assertTrue(exists(join(out_dir, 'distances.json')))
        self.assertTrue(exists(join(out_dir, 'summary.json')))
        self.assertEqual([name for name in listdir(out_dir)
                          if name.startswith('cliques_')], [])
        self.assertEqual(main(['eval', '--corpus', self.corpus_dir, '--model',
                               join(self.flow_dir, 'flow.json'), '--clique',
                               '--snr-bins', '0', '--out_dir',
                               join(self.path, 'bad')]), 1)

    def test_pipeline_is_reproducible(self):
        """
        Test that rerunning every subcommand into a fresh directory
        writes byte-identical outputs. Log files carry timestamps and
        are left out.
        """

        first = self._pipeline(join(self.path, 'run_a'))
        second = self._pipeline(join(self.path, 'run_b'))
        self.assertEqual(sorted(first), sorted(second))
        self.assertIn(join('eval', 'distances.json'), first)
        self.assertIn(join('flow', 'flow.json'), first)
        for name, contents in first.items():
            self.assertEqual(second[name], contents, msg=name)

    @classmethod
    def _pipeline(cls, root):
        corpus = join(root, 'corpus')
        models = join(root, 'models')
        flow = join(root, 'flow', 'flow.json')
        cls._speakerflow(['synth', '--out_dir', corpus, '--d', '8',
                          '--n_speakers', '80', '--keep', 'gender=0.5,snr=0.5'])
        cls._speakerflow(['fit-gmm', '--corpus', corpus, '-K', '2',
                          '--out', join(models, 'supporting.json')])
        cls._speakerflow(['fit-gmm', '--corpus', corpus, '-K', '2',
                          '--kind', 'conditional', '--conditions', 'gender,age',
                          '--out', join(models, 'conditional', 'conditional.json')])
        cls._speakerflow(['train', '--corpus', corpus,
                          '--supporting', join(models, 'supporting.json'),
                          '--generator', join(corpus, 'generator.json'),
                          '--out', flow] + TRAINING)
        cls._speakerflow(['sample', '--model', flow, '--label', 'gender=M,age=_,snr=_',
                          '-n', '10', '--out_dir', join(root, 'samples')])
        cls._speakerflow(['classify', '--model', flow, '--corpus', corpus,
                          '--attr', 'gender', '--out',
                          join(root, 'classify', 'gender.csv')])
        cls._speakerflow(['edit', '--model', flow, '--corpus', corpus, '--attr', 'snr',
                          '--delta', '5', '--generator',
                          join(corpus, 'generator.json'), '--out_dir',
                          join(root, 'edits')])
        cls._speakerflow(['eval', '--corpus', corpus, '--model', flow,
                          '--baseline', join(models, 'conditional', 'conditional.json'),
                          '--n_samples', '30', '--clique', '--snr-bins', '10',
                          '--out_dir', join(root, 'eval')])
        outputs = {}
        for directory, subdirectories, files in walk(root):
            subdirectories[:] = [name for name in subdirectories if name != 'logs']
            for name in files:
                path = join(directory, name)
                with open(path, 'rb') as f:
                    outputs[relpath(path, root)] = f.read()
        return outputs

    def test_errors(self):
        self.assertEqual(main([]), 2)
        missing = join(self.path, 'missing')
        self.assertEqual(main(['fit-gmm', '--corpus', missing,
                               '--out', join(self.path, 'bad', 'gmm.json')]), 1)
        self.assertEqual(main(['sample', '--model', join(self.flow_dir, 'flow.json'),
                               '--label', 'gender=X', '--out_dir',
                               join(self.path, 'bad')]), 1)
        self.assertEqual(main(['edit', '--model',
                               join(self.models_dir, 'conditional.json'),
                               '--corpus', self.corpus_dir, '--attr', 'snr',
                               '--delta', '1', '--out_dir',
                               join(self.path, 'bad')]), 1)
        self.assertEqual(main(['classify', '--model',
                               join(self.flow_dir, 'flow.json'), '--attr',
                               'gender', '--out', join(self.path, 'bad', 'x.csv')]),
                         1)
        with self.assertRaises(SystemExit):
            main(['synth', '--out_dir', missing, '--preset', 'impossible'])
