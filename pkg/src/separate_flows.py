"""
Ablation baseline: one unconditional flow per class of a categorical
attribute, each trained only on the labeled items of its class.
Classification compares the per-class likelihoods with Bayes' rule.
"""
import logging
from json import (dump,
                  load)

import numpy as np
from typing import (Any,
                    Dict,
                    Optional,
                    Sequence)
from schema import (And,
                    Schema)
from scipy.special import logsumexp

from src import (Seed,
                 Matrix,
                 FORMAT_VERSION,
                 get_random_state)
from src.base import (MultiLabel,
                      LabelSchema)
from src.flow import (FlowModel,
                      TrainConfig,
                      FlowTrainer,
                      sample as flow_sample)

logger = logging.getLogger('src.separate_flows')
loginfo = logger.info
logwarn = logger.warning
logerr = logger.error


class SeparateFlows(object):
    """
    Per-class unconditional flows with a class prior.
    """

    def __init__(self,
                 attr: str,
                 classes: Sequence[str],
                 models: Sequence[FlowModel],
                 prior: Sequence[float]) -> 'SeparateFlows':
        if not len(classes) == len(models) == len(prior):
            raise ValueError('Classes, models and prior must have the same '
                             'length.')
        if len(set(model.d for model in models)) != 1:
            raise ValueError('All per-class flows must share one dimension.')
        self.attr = attr
        self.classes = tuple(classes)
        self.models = list(models)
        self.prior = np.asarray(prior, dtype=np.float64)

    @property
    def d(self) -> int:
        return self.models[0].d

    def _model(self, value: str) -> FlowModel:
        if value not in self.classes:
            raise ValueError('Unknown class "{0}" for "{1}". Valid classes: {2}.'
                             .format(value, self.attr, ', '.join(self.classes)))
        return self.models[self.classes.index(value)]

    def class_logliks(self, E: Matrix) -> Matrix:
        """
        n x C matrix of log-likelihoods of every embedding under every
        per-class flow.
        """

        E = np.atleast_2d(np.asarray(E, dtype=np.float64))
        return np.stack([model.loglik_batch(E, [MultiLabel.empty(model.schema)]
                                                *E.shape[0])
                         for model in self.models], axis=1)

    def classify(self, E: Matrix) -> Matrix:
        """
        Posterior over the classes for every embedding.
        """

        with np.errstate(divide='ignore'):
            scores = self.class_logliks(E) + np.log(self.prior)[np.newaxis, :]
        return np.exp(scores - logsumexp(scores, axis=1)[:, np.newaxis])

    def sample(self, value: str, n: int, rng_seed: Seed = None) -> Matrix:
        model = self._model(value)
        return flow_sample(model, MultiLabel.empty(model.schema), n,
                           rng_seed=rng_seed)

    def sample_unconditional(self, n: int, rng_seed: Seed = None) -> Matrix:
        prng = get_random_state(rng_seed)
        which = prng.choice(len(self.classes), size=n, p=self.prior)
        X = np.empty((n, self.d))
        for k, value in enumerate(self.classes):
            rows = np.flatnonzero(which == k)
            if rows.size:
                X[rows] = self.sample(value, rows.size, prng)
        return X

    def to_dict(self) -> Dict[str, Any]:
        return {'version': FORMAT_VERSION,
                'kind': 'separate_flows',
                'attr': self.attr,
                'classes': list(self.classes),
                'prior': self.prior.tolist(),
                'models': [model.to_dict() for model in self.models]}

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> 'SeparateFlows':
        validated = Schema({'version': FORMAT_VERSION,
                            'kind': 'separate_flows',
                            'attr': str,
                            'classes': [str],
                            'prior': [float],
                            'models': And([dict], len)}).validate(document)
        return cls(validated['attr'], validated['classes'],
                   [FlowModel.from_dict(model) for model in validated['models']],
                   validated['prior'])

    def save(self, path: str) -> None:
        with open(path, 'w') as f:
            dump(self.to_dict(), f, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> 'SeparateFlows':
        with open(path) as f:
            return cls.from_dict(load(f))


def train_separate_flows(train_corpus,
                         val_corpus,
                         schema: LabelSchema,
                         attr: str,
                         config: Optional[TrainConfig] = None) -> SeparateFlows:
    """
    Train one unconditional flow per class of `attr` on the items
    labeled with that class. The class prior is the empirical class
    frequency among the labeled training items.

    :param train_corpus: training corpus
    :type train_corpus: Corpus
    :param val_corpus: validation corpus
    :type val_corpus: Corpus
    :param schema: label schema
    :type schema: LabelSchema
    :param attr: name of a categorical attribute
    :type attr: str
    :param config: training configuration shared by the flows
    :type config: TrainConfig or None

    :returns: per-class flows
    :rtype: SeparateFlows

    :raises ValueError: if the attribute is continuous or a class has no
                        labeled training items
    """

    index = schema.index(attr)
    spec = schema.attributes[index]
    if not spec.is_categorical:
        raise ValueError('Separate flows need a categorical attribute; "{0}" '
                         'is continuous.'.format(attr))
    unconditional = LabelSchema([], schema.d)
    E_train = np.asarray(train_corpus.embeddings, dtype=np.float64)
    E_val = np.asarray(val_corpus.embeddings, dtype=np.float64)
    models = []
    counts = []
    for value in spec.classes:
        train_rows = [row for row, label in enumerate(train_corpus.labels)
                      if label.values[index] == value]
        if not train_rows:
            raise ValueError('No training items are labeled {0}={1}.'
                             .format(attr, value))
        val_rows = [row for row, label in enumerate(val_corpus.labels)
                    if label.values[index] == value]
        if not val_rows:
            logwarn('No validation items are labeled {0}={1}; validating on '
                    'the training items.'.format(attr, value))
            E_class_val = E_train[train_rows]
        else:
            E_class_val = E_val[val_rows]
        loginfo('Training the flow for {0}={1} on {2} items.'
                .format(attr, value, len(train_rows)))
        trainer = FlowTrainer(unconditional, config=config)
        empty = MultiLabel.empty(unconditional)
        models.append(trainer.fit(E_train[train_rows], [empty]*len(train_rows),
                                  E_class_val, [empty]*E_class_val.shape[0]))
        counts.append(len(train_rows))
    counts = np.array(counts, dtype=np.float64)
    return SeparateFlows(attr, spec.classes, models, counts/counts.sum())
