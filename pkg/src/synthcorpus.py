"""
Synthetic embedding corpora with known attribute ground truth.

Embeddings are a sum of attribute effects along orthonormal directions
plus isotropic Gaussian noise. Because the directions are orthonormal,
the exact Bayes posterior of a categorical attribute only depends on the
projection of an embedding onto that attribute's directions, which
gives a true oracle for labeling generated or edited embeddings.
"""
import logging
from os import makedirs
from json import (dump,
                  load,
                  dumps,
                  loads)
from os.path import (join,
                     isdir,
                     exists)

import numpy as np
import pandas as pd
from typing import (Any,
                    Dict,
                    List,
                    Union,
                    Optional,
                    Sequence)
from schema import (And,
                    Or,
                    Use,
                    Schema,
                    SchemaError)
from scipy.special import logsumexp

from data import PRESETS
from src import (SEED,
                 Seed,
                 Vector,
                 Matrix,
                 LabelValue,
                 FORMAT_VERSION,
                 get_random_state)
from src.base import (MultiLabel,
                      LabelSchema,
                      default_schema)

logger = logging.getLogger('src.synthcorpus')
loginfo = logger.info
logdebug = logger.debug
logwarn = logger.warning
logerr = logger.error

TRAIN = 'train'
VAL = 'val'
DTYPES = {'f32': np.dtype('<f4'), 'f64': np.dtype('<f8')}
EMBEDDINGS_FILE = 'embeddings.bin'
LABELS_FILE = 'labels.csv'
TRUTH_FILE = 'truth.csv'
SCHEMA_FILE = 'schema.json'
SPLIT_COLUMN = 'split'

# Share of items reserved for validation
DEFAULT_VAL_FRACTION = 0.1


class GeneratorSpec(object):
    """
    Parameters of the synthetic generator.

    Class j of a categorical attribute adds separation * noise / sqrt(2)
    times its own unit direction, so the centers of two classes are
    `separation` noise standard deviations apart. A continuous attribute
    adds value_scale * (value - midpoint) along its direction. All
    directions are orthonormal and derived from `direction_seed`.
    """

    def __init__(self,
                 schema: Optional[LabelSchema] = None,
                 n_speakers: int = 1200,
                 separation: float = PRESETS['easy']['separation'],
                 noise: float = 1.0,
                 value_scale: float = 1.0,
                 proportions: Optional[Dict[str, Sequence[float]]] = None,
                 val_fraction: float = DEFAULT_VAL_FRACTION,
                 direction_seed: int = SEED) -> 'GeneratorSpec':
        """
        Initialize object.

        :param schema: label schema (default: the default schema at
                       d=64)
        :type schema: LabelSchema or None
        :param n_speakers: number of items to generate
        :type n_speakers: int
        :param separation: distance between categorical class centers,
                           in units of `noise`
        :type separation: float
        :param noise: standard deviation of the isotropic noise
        :type noise: float
        :param value_scale: embedding distance per unit of a continuous
                            attribute
        :type value_scale: float
        :param proportions: class proportions by attribute name (default:
                            the schema priors)
        :type proportions: dict or None
        :param val_fraction: share of items reserved for validation
        :type val_fraction: float
        :param direction_seed: seed of the effect directions
        :type direction_seed: int

        :raises SchemaError: if the parameters are invalid
        """

        schema = schema or default_schema(64)
        params = dict(locals())
        del params['self']
        del params['schema']
        try:
            self.validated = Schema(
                {'n_speakers': And(int, lambda x: x > 0),
                 'separation': And(Use(float), lambda x: x >= 0.0),
                 'noise': And(Use(float), lambda x: x > 0.0),
                 'value_scale': And(Use(float), lambda x: x > 0.0),
                 'proportions': Or(None, {str: [Use(float)]}),
                 'val_fraction': And(Use(float), lambda x: 0.0 <= x < 1.0),
                 'direction_seed': And(int, lambda x: x >= 0)}
                ).validate(params)
            n_directions = sum(attr.n_classes if attr.is_categorical else 1
                               for attr in schema.attributes)
            if n_directions > schema.d:
                raise SchemaError('The attributes need {0} orthogonal directions '
                                  'but d is {1}.'.format(n_directions, schema.d))
            proportions = self.validated['proportions'] or {}
            for name in proportions:
                attr = schema.attribute(name)
                if not attr.is_categorical:
                    raise SchemaError('Proportions given for the continuous '
                                      'attribute "{0}".'.format(name))
                values = np.array(proportions[name])
                if (values.size != attr.n_classes or np.any(values < 0)
                    or abs(values.sum() - 1.0) > 1e-9):
                    raise SchemaError('Proportions of "{0}" must be a probability '
                                      'vector over {1} classes.'
                                      .format(name, attr.n_classes))
        except (SchemaError, ValueError) as e:
            logerr('Invalid generator specification: {0}'.format(e))
            raise SchemaError(str(e))
        self.schema = schema
        for key, value in self.validated.items():
            setattr(self, key, value)
        self.proportions = {attr.name: np.array(proportions.get(attr.name,
                                                                attr.prior))
                            for attr in schema.attributes if attr.is_categorical}
        self._directions = None

    @classmethod
    def preset(cls, name: str, schema: Optional[LabelSchema] = None,
               **overrides) -> 'GeneratorSpec':
        """
        Specification from a named difficulty preset ("easy" or "hard").

        :raises ValueError: if the preset does not exist
        """

        if name not in PRESETS:
            raise ValueError('Unknown preset "{0}". Available presets: {1}.'
                             .format(name, ', '.join(sorted(PRESETS))))
        params = dict(PRESETS[name])
        params.update(overrides)
        return cls(schema=schema, **params)

    @property
    def d(self) -> int:
        return self.schema.d

    @property
    def class_radius(self) -> float:
        return self.separation*self.noise/np.sqrt(2.0)

    def directions(self) -> Dict[str, Matrix]:
        """
        Unit effect directions per attribute: a d x C matrix for a
        categorical attribute (one column per class), a d x 1 matrix for
        a continuous one.
        """

        if self._directions is None:
            widths = [attr.n_classes if attr.is_categorical else 1
                      for attr in self.schema.attributes]
            prng = get_random_state(self.direction_seed)
            if sum(widths):
                basis = np.linalg.qr(prng.randn(self.d, sum(widths)))[0]
            else:
                basis = np.zeros((self.d, 0))
            self._directions = {}
            start = 0
            for attr, width in zip(self.schema.attributes, widths):
                self._directions[attr.name] = basis[:, start:start + width]
                start += width
        return self._directions

    def centroid(self, truth: MultiLabel) -> Vector:
        """
        Noise-free embedding of a full ground-truth label.
        """

        directions = self.directions()
        e = np.zeros(self.d)
        for attr, value in zip(self.schema.attributes, truth.values):
            if value is None:
                raise ValueError('Ground truth must be fully observed.')
            if attr.is_categorical:
                e += self.class_radius*directions[attr.name][:, attr.class_index(value)]
            else:
                a, b = attr.value_range
                e += (self.value_scale*(float(value) - 0.5*(a + b))
                      *directions[attr.name][:, 0])
        return e

    def to_dict(self) -> Dict[str, Any]:
        document = dict(self.validated)
        document.update({'version': FORMAT_VERSION,
                         'schema': self.schema.to_dict()})
        return document

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> 'GeneratorSpec':
        document = dict(document)
        if document.pop('version', None) != FORMAT_VERSION:
            raise SchemaError('Unsupported generator specification version.')
        if 'schema' not in document:
            raise SchemaError('Generator specification has no schema.')
        schema = LabelSchema.from_dict(document.pop('schema'))
        return cls(schema=schema, **document)

    def save(self, path: str) -> None:
        with open(path, 'w') as f:
            dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> 'GeneratorSpec':
        with open(path) as f:
            return cls.from_dict(load(f))


class Corpus(object):
    """
    Embeddings with (possibly partial) labels, full ground truth and a
    train/validation split.
    """

    def __init__(self,
                 schema: LabelSchema,
                 embeddings: Matrix,
                 labels: Sequence[MultiLabel],
                 truth: Sequence[MultiLabel],
                 split: Sequence[str]) -> 'Corpus':
        """
        Initialize object.

        :raises ValueError: if lengths differ, the dimension does not
                            match the schema, a truth label is partial,
                            an observed label disagrees with the truth
                            or a split tag is invalid
        """

        embeddings = np.asarray(embeddings, dtype=np.float64)
        if embeddings.ndim != 2:
            embeddings = embeddings.reshape(-1, schema.d)
        schema.check_dim(embeddings.shape[1])
        n = embeddings.shape[0]
        if not len(labels) == len(truth) == len(split) == n:
            raise ValueError('Corpus parts have different lengths: {0} '
                             'embeddings, {1} labels, {2} truth rows, {3} split '
                             'tags.'.format(n, len(labels), len(truth), len(split)))
        for row, (label, true) in enumerate(zip(labels, truth)):
            if None in true.values:
                raise ValueError('Ground truth of item {0} is partial.'.format(row))
            for observed, value in zip(label.values, true.values):
                if observed is not None and observed != value:
                    raise ValueError('Label of item {0} disagrees with its '
                                     'ground truth.'.format(row))
        split = np.asarray(split, dtype=object)
        invalid = set(split).difference({TRAIN, VAL})
        if invalid:
            raise ValueError('Invalid split tags: {0}.'
                             .format(', '.join(sorted(map(str, invalid)))))
        self.schema = schema
        self.embeddings = embeddings
        self.labels = list(labels)
        self.truth = list(truth)
        self.split = split

    def __len__(self) -> int:
        return self.embeddings.shape[0]

    def subset(self, rows: Sequence[int]) -> 'Corpus':
        rows = np.asarray(rows, dtype=np.int64)
        return Corpus(self.schema, self.embeddings[rows],
                      [self.labels[row] for row in rows],
                      [self.truth[row] for row in rows],
                      self.split[rows])

    def train(self) -> 'Corpus':
        return self.subset(np.flatnonzero(self.split == TRAIN))

    def val(self) -> 'Corpus':
        return self.subset(np.flatnonzero(self.split == VAL))

    def truth_values(self, attr: Union[int, str]) -> List[LabelValue]:
        index = self.schema.index(attr)
        return [true.values[index] for true in self.truth]

    def n_observed(self, attr: Union[int, str]) -> int:
        index = self.schema.index(attr)
        return sum(label.values[index] is not None for label in self.labels)

    def save(self, corpus_dir: str, dtype: str = 'f64') -> None:
        """
        Write the corpus to a directory: embeddings as a binary file
        with a JSON header line, labels (with the split column) and
        ground truth as CSV files with empty cells for unobserved
        values, and the label schema as JSON.
        """

        if dtype not in DTYPES:
            raise ValueError('Unsupported dtype "{0}". Use one of: {1}.'
                             .format(dtype, ', '.join(sorted(DTYPES))))
        if not isdir(corpus_dir):
            makedirs(corpus_dir)
        write_embeddings(join(corpus_dir, EMBEDDINGS_FILE), self.embeddings,
                         dtype=dtype)
        labels = _labels_frame(self.labels, self.schema)
        labels[SPLIT_COLUMN] = list(self.split)
        labels.to_csv(join(corpus_dir, LABELS_FILE), index=False)
        _labels_frame(self.truth, self.schema).to_csv(join(corpus_dir, TRUTH_FILE),
                                                      index=False)
        self.schema.save(join(corpus_dir, SCHEMA_FILE))

    @classmethod
    def load(cls, corpus_dir: str) -> 'Corpus':
        """
        Read a corpus written by `save`.

        :raises FileNotFoundError: if a corpus file is missing
        :raises ValueError: if the files are inconsistent
        """

        for name in [EMBEDDINGS_FILE, LABELS_FILE, TRUTH_FILE, SCHEMA_FILE]:
            if not exists(join(corpus_dir, name)):
                raise FileNotFoundError('Corpus file {0} does not exist.'
                                        .format(join(corpus_dir, name)))
        schema = LabelSchema.load(join(corpus_dir, SCHEMA_FILE))
        embeddings = read_embeddings(join(corpus_dir, EMBEDDINGS_FILE))
        labels_frame = pd.read_csv(join(corpus_dir, LABELS_FILE), dtype=str,
                                   keep_default_na=False)
        if SPLIT_COLUMN not in labels_frame:
            raise ValueError('{0} has no "{1}" column.'
                             .format(LABELS_FILE, SPLIT_COLUMN))
        truth_frame = pd.read_csv(join(corpus_dir, TRUTH_FILE), dtype=str,
                                  keep_default_na=False)
        return cls(schema, embeddings,
                   read_labels_frame(labels_frame, schema),
                   read_labels_frame(truth_frame, schema),
                   list(labels_frame[SPLIT_COLUMN]))


def _format_value(value: LabelValue) -> str:
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _labels_frame(labels: Sequence[MultiLabel], schema: LabelSchema) -> pd.DataFrame:
    return pd.DataFrame([[_format_value(value) for value in label.values]
                         for label in labels],
                        columns=list(schema.names), dtype=object)


def read_labels_frame(frame: pd.DataFrame,
                      schema: LabelSchema,
                      allow_out_of_range: bool = False) -> List[MultiLabel]:
    """
    Multi-labels from a data frame of strings with one column per
    attribute (empty string: unobserved).

    :raises ValueError: if a column is missing or a value is invalid
    """

    missing = [name for name in schema.names if name not in frame]
    if missing:
        raise ValueError('Label table is missing columns: {0}.'
                         .format(', '.join(missing)))
    rows = frame[list(schema.names)].values.tolist()
    return [MultiLabel([value if value != '' else None for value in row],
                       schema, allow_out_of_range=allow_out_of_range)
            for row in rows]


def write_labels(path: str, labels: Sequence[MultiLabel], schema: LabelSchema) -> None:
    _labels_frame(labels, schema).to_csv(path, index=False)


def read_labels(path: str, schema: LabelSchema) -> List[MultiLabel]:
    if not exists(path):
        raise FileNotFoundError('{0} does not exist.'.format(path))
    return read_labels_frame(pd.read_csv(path, dtype=str, keep_default_na=False),
                             schema, allow_out_of_range=True)


def write_embeddings(path: str, embeddings: Matrix, dtype: str = 'f64') -> None:
    """
    Write a matrix as a JSON header line ({version, n, d, dtype,
    order}) followed by the little-endian row-major values.
    """

    embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    header = {'version': FORMAT_VERSION,
              'n': int(embeddings.shape[0]),
              'd': int(embeddings.shape[1]),
              'dtype': dtype,
              'order': 'row-major'}
    with open(path, 'wb') as f:
        f.write(dumps(header, sort_keys=True).encode('utf-8') + b'\n')
        f.write(np.ascontiguousarray(embeddings, dtype=DTYPES[dtype]).tobytes())


def read_embeddings(path: str) -> Matrix:
    """
    Read a matrix written by `write_embeddings`.

    :raises FileNotFoundError: if the file does not exist
    :raises ValueError: if the header or the payload is malformed
    """

    if not exists(path):
        raise FileNotFoundError('{0} does not exist.'.format(path))
    with open(path, 'rb') as f:
        try:
            header = Schema({'version': FORMAT_VERSION,
                             'n': And(int, lambda x: x >= 0),
                             'd': And(int, lambda x: x > 0),
                             'dtype': And(str, lambda x: x in DTYPES),
                             'order': 'row-major'}
                            ).validate(loads(f.readline().decode('utf-8')))
        except (SchemaError, ValueError, UnicodeDecodeError) as e:
            raise ValueError('Malformed embeddings header in {0}: {1}'
                             .format(path, e))
        payload = f.read()
    values = np.frombuffer(payload, dtype=DTYPES[header['dtype']])
    if values.size != header['n']*header['d']:
        raise ValueError('{0} holds {1} values, expected {2} x {3}.'
                         .format(path, values.size, header['n'], header['d']))
    return values.astype(np.float64).reshape(header['n'], header['d'])


def generate(spec: GeneratorSpec, rng_seed: Seed = None) -> Corpus:
    """
    Generate a fully labeled corpus.

    :param spec: generator specification
    :type spec: GeneratorSpec
    :param rng_seed: seed (or `RandomState`)
    :type rng_seed: int, np.random.RandomState or None

    :returns: corpus (labels equal the ground truth)
    :rtype: Corpus
    """

    prng = get_random_state(rng_seed)
    schema = spec.schema
    n = spec.n_speakers
    columns = []
    for attr in schema.attributes:
        if attr.is_categorical:
            codes = prng.choice(attr.n_classes, size=n, p=spec.proportions[attr.name])
            columns.append([attr.classes[code] for code in codes])
        else:
            a, b = attr.value_range
            columns.append([float(value) for value in prng.uniform(a, b, size=n)])
    truth = [MultiLabel([column[i] for column in columns], schema)
             for i in range(n)]
    embeddings = (np.stack([spec.centroid(true) for true in truth])
                  + spec.noise*prng.randn(n, spec.d))
    split = np.array([TRAIN]*n, dtype=object)
    split[prng.permutation(n)[:int(round(spec.val_fraction*n))]] = VAL
    loginfo('Generated {0} items (d={1}, separation={2}, {3} for validation).'
            .format(n, spec.d, spec.separation, int((split == VAL).sum())))
    return Corpus(schema, embeddings, truth, truth, split)


def oracle_posteriors(spec: GeneratorSpec,
                      E: Matrix,
                      attr: Union[int, str]) -> Matrix:
    """
    Exact posterior over the classes of a categorical attribute under
    the generator, for every row of `E`.
    """

    index = spec.schema.index(attr)
    spec_attr = spec.schema.attributes[index]
    if not spec_attr.is_categorical:
        raise ValueError('Attribute "{0}" is continuous.'.format(spec_attr.name))
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    spec.schema.check_dim(E.shape[1])
    projections = E.dot(spec.directions()[spec_attr.name])
    centers = spec.class_radius*np.eye(spec_attr.n_classes)
    scores = np.stack([-0.5*np.sum((projections - center)**2, axis=1)
                       for center in centers], axis=1)/spec.noise**2
    with np.errstate(divide='ignore'):
        scores = scores + np.log(spec.proportions[spec_attr.name])[np.newaxis, :]
    return np.exp(scores - logsumexp(scores, axis=1)[:, np.newaxis])


def oracle_values(spec: GeneratorSpec,
                  E: Matrix,
                  attr: Union[int, str]) -> List[LabelValue]:
    """
    Oracle predictions for every row of `E`: the most probable class of
    a categorical attribute, or the least-squares value of a continuous
    one (not clipped).
    """

    index = spec.schema.index(attr)
    spec_attr = spec.schema.attributes[index]
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    if spec_attr.is_categorical:
        codes = np.argmax(oracle_posteriors(spec, E, index), axis=1)
        return [spec_attr.classes[code] for code in codes]
    spec.schema.check_dim(E.shape[1])
    a, b = spec_attr.value_range
    values = (E.dot(spec.directions()[spec_attr.name][:, 0])/spec.value_scale
              + 0.5*(a + b))
    return [float(value) for value in values]


def oracle_classify(spec: GeneratorSpec,
                    e: Vector,
                    attr: Union[int, str]) -> LabelValue:
    """
    Oracle prediction for a single embedding.

    :raises ValueError: if the attribute does not exist
    """

    return oracle_values(spec, np.asarray(e, dtype=np.float64).reshape(1, -1),
                         attr)[0]


def oracle_label(spec: GeneratorSpec,
                 E: Matrix,
                 attrs: Sequence[str]) -> List[MultiLabel]:
    """
    Post-hoc labels for arbitrary embeddings: the named attributes are
    set from the oracle (continuous values clipped into their range),
    every other attribute is unobserved.
    """

    schema = spec.schema
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    columns = [[None]*E.shape[0] for _ in schema.attributes]
    for name in attrs:
        index = schema.index(name)
        values = oracle_values(spec, E, index)
        attr = schema.attributes[index]
        if not attr.is_categorical:
            a, b = attr.value_range
            values = [min(max(value, a), b) for value in values]
        columns[index] = values
    return [MultiLabel([column[i] for column in columns], schema)
            for i in range(E.shape[0])]


def drop_labels(corpus: Corpus,
                attr: str,
                keep_fraction: float,
                rng_seed: Seed = None) -> Corpus:
    """
    Hide an attribute on a random subset of the items where it is
    observed, keeping round(keep_fraction * n_observed) of them. The
    ground truth is untouched.

    :raises ValueError: if `keep_fraction` is outside [0, 1]
    """

    if not 0.0 <= keep_fraction <= 1.0:
        raise ValueError('Keep fraction must be in [0, 1], got {0}.'
                         .format(keep_fraction))
    index = corpus.schema.index(attr)
    prng = get_random_state(rng_seed)
    observed = np.array([row for row, label in enumerate(corpus.labels)
                         if label.values[index] is not None], dtype=np.int64)
    n_keep = int(round(keep_fraction*observed.size))
    dropped = set(prng.permutation(observed)[n_keep:].tolist())
    if dropped:
        logwarn('Hiding "{0}" on {1} of {2} labeled items.'
                .format(attr, len(dropped), observed.size))
    labels = [label.with_value(index, None, corpus.schema) if row in dropped
              else label for row, label in enumerate(corpus.labels)]
    return Corpus(corpus.schema, corpus.embeddings, labels, corpus.truth,
                  corpus.split)
