"""
Supporting distributions used to draw regularization embeddings during
flow training.

A pool holds one or more isotropic GMMs. Each entry carries a label
template (the value of the grouping attribute it was fit on, every
other attribute unobserved) and a mixing share, so a draw from the pool
comes with the part of its label that is known by construction.
"""
import logging
from json import (dump,
                  load)
from collections import OrderedDict

import numpy as np
from typing import (Any,
                    Dict,
                    List,
                    Tuple,
                    Optional,
                    Sequence)
from schema import (And,
                    Or,
                    Schema)

from src import (Seed,
                 Matrix,
                 FORMAT_VERSION,
                 get_random_state)
from src.base import (MultiLabel,
                      LabelSchema)
from src.distributions import (DEFAULT_K,
                               EmConfig,
                               GmmModel,
                               gmm_sample,
                               gmm_fit_em)

logger = logging.getLogger('src.supporting')
loginfo = logger.info
logdebug = logger.debug
logwarn = logger.warning
logerr = logger.error


class SupportingEntry(object):
    """
    A GMM together with the label template and share of its group.
    """

    def __init__(self, model: GmmModel, template: MultiLabel, share: float) \
        -> 'SupportingEntry':
        if not 0.0 < share <= 1.0:
            raise ValueError('Share must be in (0, 1], got {0}.'.format(share))
        self.model = model
        self.template = template
        self.share = float(share)


class SupportingPool(object):
    """
    Mixture of supporting GMMs with label templates.
    """

    def __init__(self,
                 entries: Sequence[SupportingEntry],
                 schema: LabelSchema) -> 'SupportingPool':
        """
        Initialize object.

        :param entries: pool entries (shares are renormalized)
        :type entries: list
        :param schema: label schema of the templates
        :type schema: LabelSchema

        :raises ValueError: if there are no entries or the models do not
                            match the schema dimension
        """

        if not entries:
            raise ValueError('A supporting pool needs at least one entry.')
        for entry in entries:
            schema.check_dim(entry.model.d)
        self.entries = tuple(entries)
        self.schema = schema
        shares = np.array([entry.share for entry in self.entries])
        self.shares = shares/shares.sum()

    @classmethod
    def single(cls, model: GmmModel, schema: LabelSchema) -> 'SupportingPool':
        """
        Pool made of one unconditional GMM with an all-empty template.
        """

        return cls([SupportingEntry(model, MultiLabel.empty(schema), 1.0)],
                   schema)

    @property
    def d(self) -> int:
        return self.schema.d

    def sample(self, n: int, rng_seed: Seed = None) -> Tuple[Matrix, List[MultiLabel]]:
        """
        Draw `n` embeddings: pick an entry by share, then draw from its
        GMM.

        :param n: number of samples
        :type n: int
        :param rng_seed: seed (or `RandomState`)
        :type rng_seed: int, np.random.RandomState or None

        :returns: n x d matrix and the label template of every row
        :rtype: tuple
        """

        if n < 1:
            raise ValueError('Number of samples must be at least 1, got {0}.'
                             .format(n))
        prng = get_random_state(rng_seed)
        which = prng.choice(len(self.entries), size=n, p=self.shares)
        X = np.empty((n, self.d))
        labels = [None]*n
        for k, entry in enumerate(self.entries):
            rows = np.flatnonzero(which == k)
            if not rows.size:
                continue
            X[rows] = gmm_sample(entry.model, rows.size, prng)
            for row in rows:
                labels[row] = entry.template
        return X, labels

    def to_dict(self) -> Dict[str, Any]:
        return {'version': FORMAT_VERSION,
                'kind': 'supporting',
                'schema': self.schema.to_dict(),
                'entries': [{'template': [value for value in entry.template.values],
                             'share': entry.share,
                             'gmm': entry.model.to_dict()}
                            for entry in self.entries]}

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> 'SupportingPool':
        validated = Schema({'version': FORMAT_VERSION,
                            'kind': 'supporting',
                            'schema': dict,
                            'entries': And([{'template': list,
                                             'share': Or(int, float),
                                             'gmm': dict}],
                                           len)}).validate(document)
        schema = LabelSchema.from_dict(validated['schema'])
        return cls([SupportingEntry(GmmModel.from_dict(entry['gmm']),
                                    MultiLabel(entry['template'], schema),
                                    entry['share'])
                    for entry in validated['entries']],
                   schema)

    def save(self, path: str) -> None:
        with open(path, 'w') as f:
            dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> 'SupportingPool':
        with open(path) as f:
            return cls.from_dict(load(f))


def fit_supporting(corpus,
                   group_by: Optional[str] = None,
                   K: int = DEFAULT_K,
                   em_config: Optional[EmConfig] = None) -> SupportingPool:
    """
    Fit supporting GMMs to a corpus: a single unconditional GMM, or one
    GMM per observed class of the categorical attribute `group_by`.
    Items whose group value is unobserved are left out of the grouped
    fits. Groups with fewer than `K` items fall back to one component
    per item.

    :param corpus: corpus with `embeddings`, `labels` and `schema`
    :type corpus: Corpus
    :param group_by: name of a categorical attribute (or None)
    :type group_by: str or None
    :param K: number of mixture components
    :type K: int
    :param em_config: EM configuration
    :type em_config: EmConfig or None

    :returns: supporting pool
    :rtype: SupportingPool

    :raises ValueError: if the corpus is empty or `group_by` is not a
                        categorical attribute
    """

    schema = corpus.schema
    X = np.asarray(corpus.embeddings, dtype=np.float64)
    if not X.shape[0]:
        raise ValueError('Cannot fit a supporting distribution to an empty '
                         'corpus.')
    if group_by is None:
        loginfo('Fitting a single supporting GMM (K={0}) to {1} embeddings.'
                .format(K, X.shape[0]))
        return SupportingPool.single(gmm_fit_em(X, min(K, X.shape[0]),
                                                em_config), schema)

    index = schema.index(group_by)
    attr = schema.attributes[index]
    if not attr.is_categorical:
        raise ValueError('Supporting GMMs can only be grouped by a categorical '
                         'attribute; "{0}" is continuous.'.format(group_by))
    groups = OrderedDict((value, []) for value in attr.classes)
    n_missing = 0
    for row, label in enumerate(corpus.labels):
        value = label.values[index]
        if value is None:
            n_missing += 1
        else:
            groups[value].append(row)
    if n_missing:
        logwarn('{0} items have no "{1}" label and are left out of the '
                'supporting fits.'.format(n_missing, group_by))
    total = sum(len(rows) for rows in groups.values())
    if not total:
        raise ValueError('No items have an observed "{0}" label.'
                         .format(group_by))

    entries = []
    for value, rows in groups.items():
        if not rows:
            logwarn('No items observed with {0}={1}; the group is skipped.'
                    .format(group_by, value))
            continue
        k = K
        if len(rows) < K:
            logwarn('Group {0}={1} has {2} items, fewer than K={3}; falling '
                    'back to K={2}.'.format(group_by, value, len(rows), K))
            k = len(rows)
        loginfo('Fitting supporting GMM for {0}={1} ({2} items, K={3}).'
                .format(group_by, value, len(rows), k))
        template = MultiLabel.from_assignments({group_by: value}, schema)
        entries.append(SupportingEntry(gmm_fit_em(X[rows], k, em_config),
                                       template,
                                       len(rows)/total))
    return SupportingPool(entries, schema)
