"""
Conditional-GMM baseline: a lookup table from full condition tuples
(values of categorical attributes) to isotropic GMMs, each fit with EM
on the items sharing that tuple.
"""
import logging
from json import (dump,
                  load)
from itertools import product
from collections import OrderedDict

import numpy as np
from typing import (Any,
                    Dict,
                    List,
                    Tuple,
                    Optional,
                    Sequence)
from joblib import (Parallel,
                    delayed)
from schema import (And,
                    Schema,
                    SchemaError)
from scipy.special import logsumexp

from src import (Seed,
                 Matrix,
                 FORMAT_VERSION,
                 get_random_state)
from src.distributions import (DEFAULT_K,
                               EmConfig,
                               GmmModel,
                               gmm_sample,
                               gmm_fit_em)

logger = logging.getLogger('src.tacospawn')
loginfo = logger.info
logdebug = logger.debug
logwarn = logger.warning
logerr = logger.error

Condition = Tuple[str, ...]


class ConditionalGmm(object):
    """
    Table of GMMs indexed by condition tuples.
    """

    def __init__(self,
                 conditions: Sequence[str],
                 classes: Sequence[Sequence[str]],
                 table: Dict[Condition, GmmModel],
                 counts: Optional[Dict[Condition, int]] = None,
                 warnings: Sequence[str] = ()) -> 'ConditionalGmm':
        """
        Initialize object.

        :param conditions: names of the conditioning attributes
        :type conditions: list
        :param classes: class list of every conditioning attribute
        :type classes: list
        :param table: condition tuples mapped to GMMs
        :type table: dict
        :param counts: number of training items per tuple (used as the
                       tuple prior for classification; uniform when
                       None)
        :type counts: dict or None
        :param warnings: fit warnings (e.g., component fallbacks)
        :type warnings: list

        :raises ValueError: if the table is empty, a tuple is invalid or
                            the models do not share a dimension
        """

        if not table:
            raise ValueError('A conditional GMM needs at least one entry.')
        if len(conditions) != len(classes):
            raise ValueError('Expected one class list per condition.')
        self.conditions = tuple(conditions)
        self.classes = tuple(tuple(values) for values in classes)
        for condition in table:
            self._check_condition(condition)
        if len(set(model.d for model in table.values())) != 1:
            raise ValueError('All table entries must share one dimension.')
        self.table = OrderedDict((tuple(condition), table[condition])
                                 for condition in sorted(table))
        counts = counts or {condition: 1 for condition in self.table}
        self.counts = OrderedDict((condition, int(counts.get(condition, 0)))
                                  for condition in self.table)
        self.warnings_ = list(warnings)

    def _check_condition(self, condition: Sequence[str]) -> Condition:
        condition = tuple(condition)
        if len(condition) != len(self.conditions):
            raise ValueError('Expected a condition tuple of length {0} ({1}), '
                             'got {2}.'.format(len(self.conditions),
                                               ', '.join(self.conditions),
                                               condition))
        for name, values, value in zip(self.conditions, self.classes, condition):
            if value not in values:
                raise ValueError('Invalid value "{0}" for condition "{1}". '
                                 'Valid classes: {2}.'
                                 .format(value, name, ', '.join(values)))
        return condition

    @property
    def d(self) -> int:
        return next(iter(self.table.values())).d

    def model(self, condition: Sequence[str]) -> GmmModel:
        """
        GMM of a condition tuple.

        :raises ValueError: if the tuple is invalid or has no entry
        """

        condition = self._check_condition(condition)
        if condition not in self.table:
            raise ValueError('No model for condition {0}.'
                             .format(dict(zip(self.conditions, condition))))
        return self.table[condition]

    def loglik(self, E: Matrix, condition: Sequence[str]) -> np.ndarray:
        """
        Log-likelihood of embeddings under the GMM of a condition.
        """

        return self.model(condition).logpdf(np.atleast_2d(E))

    def classify(self, E: Matrix, condition: str) -> Matrix:
        """
        Posterior over the classes of one conditioning attribute for
        every embedding, marginalizing over the other conditions with
        the empirical tuple prior.

        :param E: n x d matrix
        :type E: np.ndarray
        :param condition: name of a conditioning attribute
        :type condition: str

        :returns: n x C matrix of posteriors
        :rtype: np.ndarray

        :raises ValueError: if `condition` is not a conditioning
                            attribute
        """

        if condition not in self.conditions:
            raise ValueError('"{0}" is not a condition of this model ({1}).'
                             .format(condition, ', '.join(self.conditions)))
        index = self.conditions.index(condition)
        classes = self.classes[index]
        E = np.atleast_2d(np.asarray(E, dtype=np.float64))
        total = sum(self.counts.values())
        scores = np.full((E.shape[0], len(classes)), -np.inf)
        for key, model in self.table.items():
            count = self.counts[key]
            if not count:
                continue
            j = classes.index(key[index])
            scores[:, j] = np.logaddexp(scores[:, j],
                                        np.log(count/total) + model.logpdf(E))
        return np.exp(scores - logsumexp(scores, axis=1)[:, np.newaxis])

    def to_dict(self) -> Dict[str, Any]:
        return {'version': FORMAT_VERSION,
                'kind': 'conditional_gmm',
                'conditions': [{'name': name, 'classes': list(values)}
                               for name, values in zip(self.conditions,
                                                       self.classes)],
                'entries': [{'tuple': list(key),
                             'count': self.counts[key],
                             'gmm': model.to_dict()}
                            for key, model in self.table.items()],
                'warnings': list(self.warnings_)}

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> 'ConditionalGmm':
        validated = Schema({'version': FORMAT_VERSION,
                            'kind': 'conditional_gmm',
                            'conditions': [{'name': str, 'classes': [str]}],
                            'entries': And([{'tuple': [str],
                                             'count': And(int, lambda x: x >= 0),
                                             'gmm': dict}], len),
                            'warnings': [str]}).validate(document)
        try:
            return cls([c['name'] for c in validated['conditions']],
                       [c['classes'] for c in validated['conditions']],
                       {tuple(e['tuple']): GmmModel.from_dict(e['gmm'])
                        for e in validated['entries']},
                       counts={tuple(e['tuple']): e['count']
                               for e in validated['entries']},
                       warnings=validated['warnings'])
        except ValueError as e:
            raise SchemaError(str(e))

    def save(self, path: str) -> None:
        with open(path, 'w') as f:
            dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> 'ConditionalGmm':
        with open(path) as f:
            return cls.from_dict(load(f))


def fit(corpus,
        conditions: Sequence[str],
        K: int = DEFAULT_K,
        em_config: Optional[EmConfig] = None,
        n_jobs: int = 1,
        use_truth: bool = False) -> ConditionalGmm:
    """
    Fit one GMM per condition tuple.

    :param corpus: corpus with `embeddings`, `labels`, `truth` and
                   `schema`
    :type corpus: Corpus
    :param conditions: names of categorical attributes to condition on
    :type conditions: list
    :param K: number of components per condition
    :type K: int
    :param em_config: EM configuration
    :type em_config: EmConfig or None
    :param n_jobs: number of parallel EM fits
    :type n_jobs: int
    :param use_truth: read conditions from the ground truth instead of
                      the (possibly partial) labels
    :type use_truth: bool

    :returns: conditional GMM
    :rtype: ConditionalGmm

    :raises ValueError: if a condition is not categorical, an item is
                        not fully labeled on the conditions or there is
                        no data
    """

    schema = corpus.schema
    if not conditions:
        raise ValueError('At least one condition is required.')
    indices = [schema.index(name) for name in conditions]
    for index in indices:
        if not schema.attributes[index].is_categorical:
            raise ValueError('Conditions must be categorical; "{0}" is '
                             'continuous.'.format(schema.names[index]))
    X = np.asarray(corpus.embeddings, dtype=np.float64)
    if not X.shape[0]:
        raise ValueError('Cannot fit a conditional GMM to an empty corpus.')
    labels = corpus.truth if use_truth else corpus.labels

    partitions = OrderedDict()
    for row, label in enumerate(labels):
        key = tuple(label.values[index] for index in indices)
        if None in key:
            raise ValueError('Item {0} is not fully labeled on the conditions '
                             '({1}).'.format(row, ', '.join(conditions)))
        partitions.setdefault(key, []).append(row)

    warnings = []
    jobs = []
    for key in sorted(partitions):
        rows = partitions[key]
        k = K
        if len(rows) < K:
            warning = ('Condition {0} has {1} items, fewer than K={2}; fitting '
                       'K={1} components.'
                       .format(dict(zip(conditions, key)), len(rows), K))
            logwarn(warning)
            warnings.append(warning)
            k = len(rows)
        jobs.append((key, rows, k))
    missing = [key for key in product(*[schema.attributes[index].classes
                                        for index in indices])
               if key not in partitions]
    for key in missing:
        warning = ('Condition {0} has no training items and no table entry.'
                   .format(dict(zip(conditions, key))))
        logwarn(warning)
        warnings.append(warning)

    loginfo('Fitting {0} conditional GMMs (K={1}) over {2}.'
            .format(len(jobs), K, ', '.join(conditions)))
    models = Parallel(n_jobs=n_jobs)(delayed(gmm_fit_em)(X[rows], k, em_config)
                                     for _, rows, k in jobs)
    return ConditionalGmm(conditions,
                          [schema.attributes[index].classes for index in indices],
                          {key: model for (key, _, _), model in zip(jobs, models)},
                          counts={key: len(rows) for key, rows, _ in jobs},
                          warnings=warnings)


def sample_conditional(model: ConditionalGmm,
                       condition: Sequence[str],
                       n: int,
                       rng_seed: Seed = None) -> Matrix:
    """
    Draw `n` embeddings from the GMM of a condition tuple.

    :raises ValueError: if the condition tuple is unknown
    """

    return gmm_sample(model.model(condition), n, rng_seed=rng_seed)


def sample_unconditional(model: ConditionalGmm,
                         n: int,
                         rng_seed: Seed = None) -> Tuple[Matrix, List[Condition]]:
    """
    Draw `n` embeddings by first drawing a condition tuple with the
    empirical tuple prior.
    """

    prng = get_random_state(rng_seed)
    keys = list(model.table)
    counts = np.array([model.counts[key] for key in keys], dtype=np.float64)
    which = prng.choice(len(keys), size=n, p=counts/counts.sum())
    X = np.empty((n, model.d))
    for k, key in enumerate(keys):
        rows = np.flatnonzero(which == k)
        if rows.size:
            X[rows] = gmm_sample(model.table[key], rows.size, prng)
    return X, [keys[k] for k in which]
