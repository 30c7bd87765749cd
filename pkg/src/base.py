"""
The partitioned conditional base distribution p(z | y).

The base variable z is split into one section per attribute plus a
residual section. Every section is an independent unit-variance
isotropic Gaussian whose mean depends on the attribute value; an
unobserved (empty) value is handled by marginalizing the section
against the attribute's prior (a Gaussian mixture for categorical
attributes, a Bhattacharjee density per coordinate for continuous
ones).
"""
import logging
from json import (dump,
                  load)
from collections import Counter

import numpy as np
import torch
from typing import (Any,
                    Dict,
                    List,
                    Tuple,
                    Union,
                    Optional,
                    Sequence)
from schema import (And,
                    Use,
                    Schema,
                    SchemaError,
                    Optional as Default)
from scipy.special import logsumexp

from src import (Seed,
                 Vector,
                 Matrix,
                 LabelValue,
                 FORMAT_VERSION,
                 get_random_state)
from src.distributions import (LOG_2PI,
                               bhattacharjee_logpdf,
                               bhattacharjee_log_prob)

logger = logging.getLogger('src.base')
loginfo = logger.info
logdebug = logger.debug
logwarn = logger.warning
logerr = logger.error

CATEGORICAL = 'categorical'
CONTINUOUS = 'continuous'
KINDS = frozenset({CATEGORICAL, CONTINUOUS})
DEFAULT_SHIFT = 6.0
DEFAULT_SNR_RANGE = (25.0, 55.0)
PRIOR_TOLERANCE = 1e-9

# Encoded value used for an unobserved categorical attribute (continuous
# attributes use NaN)
EMPTY_CODE = -1


class AttributeSpec(object):
    """
    Description of one attribute section of the base variable.

    Categorical attributes have an ordered list of classes, a prior
    and a shift: class j has mean j * shift in every coordinate of the
    section. Continuous attributes have a range [a, b] and the mean is
    the value itself, replicated across the section.
    """

    def __init__(self,
                 name: str,
                 kind: str,
                 width: int = 1,
                 classes: Optional[Sequence[str]] = None,
                 prior: Optional[Sequence[float]] = None,
                 shift: float = DEFAULT_SHIFT,
                 value_range: Optional[Tuple[float, float]] = None) \
        -> 'AttributeSpec':
        """
        Initialize object.

        :param name: attribute name (identifier)
        :type name: str
        :param kind: "categorical" or "continuous"
        :type kind: str
        :param width: number of base dimensions of the section
        :type width: int
        :param classes: ordered class names (categorical only)
        :type classes: list or None
        :param prior: class probabilities (categorical only; defaults
                      to uniform)
        :type prior: list or None
        :param shift: distance between consecutive class means
                      (categorical only)
        :type shift: float
        :param value_range: (a, b) with a < b (continuous only)
        :type value_range: tuple or None

        :raises ValueError: if the attribute definition is invalid
        """

        if not name or not isinstance(name, str):
            raise ValueError('Attribute name must be a non-empty string.')
        if kind not in KINDS:
            raise ValueError('Unrecognized attribute kind for "{0}": {1}. '
                             'Expected one of: {2}.'
                             .format(name, kind, ', '.join(sorted(KINDS))))
        if isinstance(width, bool) or not isinstance(width, int) or width < 1:
            raise ValueError('Width of "{0}" must be a positive integer, got '
                             '{1}.'.format(name, width))
        self.name = name
        self.kind = kind
        self.width = width

        if kind == CATEGORICAL:
            classes = [str(c) for c in (classes or [])]
            if len(classes) < 2:
                raise ValueError('Categorical attribute "{0}" needs at least two '
                                 'classes.'.format(name))
            if len(set(classes)) != len(classes):
                raise ValueError('Classes of "{0}" must be unique: {1}.'
                                 .format(name, classes))
            if prior is None:
                prior = np.full(len(classes), 1.0/len(classes))
            prior = np.array(prior, dtype=np.float64).ravel()
            if (prior.size != len(classes) or np.any(prior < 0)
                or abs(prior.sum() - 1.0) > PRIOR_TOLERANCE):
                raise ValueError('Prior of "{0}" must be a probability vector '
                                 'over {1} classes, got {2}.'
                                 .format(name, len(classes), prior.tolist()))
            if not np.isfinite(shift):
                raise ValueError('Shift of "{0}" must be finite.'.format(name))
            self.classes = tuple(classes)
            self.prior = prior/prior.sum()
            self.prior.setflags(write=False)
            self.shift = float(shift)
            self.value_range = None
        else:
            if value_range is None or len(value_range) != 2:
                raise ValueError('Continuous attribute "{0}" needs a range '
                                 '(a, b).'.format(name))
            a, b = float(value_range[0]), float(value_range[1])
            if not a < b:
                raise ValueError('Range of "{0}" must satisfy a < b, got [{1}, '
                                 '{2}].'.format(name, a, b))
            self.classes = None
            self.prior = None
            self.shift = None
            self.value_range = (a, b)

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    @property
    def n_classes(self) -> int:
        return len(self.classes) if self.is_categorical else 0

    @property
    def class_means(self) -> np.ndarray:
        """
        Scalar mean (replicated over the section) of every class.
        """

        return self.shift*np.arange(self.n_classes, dtype=np.float64)

    def class_index(self, value: str) -> int:
        """
        Index of a class.

        :raises ValueError: if the value is not one of the classes
        """

        try:
            return self.classes.index(str(value))
        except ValueError:
            raise ValueError('Invalid value "{0}" for attribute "{1}". Valid '
                             'classes: {2}.'
                             .format(value, self.name, ', '.join(self.classes)))

    def parse_value(self, value: Any, allow_out_of_range: bool = False) -> LabelValue:
        """
        Validate (and normalize) a single label value. None means the
        value is unobserved.

        :param value: class name, number (or numeric string), or None
        :type value: str, float or None
        :param allow_out_of_range: accept continuous values outside
                                   [a, b]
        :type allow_out_of_range: bool

        :returns: normalized value
        :rtype: str, float or None

        :raises ValueError: if the value is invalid for the attribute
        """

        if value is None:
            return None
        if self.is_categorical:
            return self.classes[self.class_index(value)]
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise ValueError('Invalid value "{0}" for continuous attribute '
                             '"{1}".'.format(value, self.name))
        if not np.isfinite(value):
            raise ValueError('Value for "{0}" must be finite.'.format(self.name))
        a, b = self.value_range
        if not allow_out_of_range and not a <= value <= b:
            raise ValueError('Value {0} for "{1}" is outside its range [{2}, '
                             '{3}].'.format(value, self.name, a, b))
        return value

    def with_prior(self, prior: Sequence[float]) -> 'AttributeSpec':
        """
        Copy of a categorical attribute with a different prior.
        """

        if not self.is_categorical:
            raise ValueError('Attribute "{0}" is not categorical.'
                             .format(self.name))
        return AttributeSpec(self.name, self.kind, self.width,
                             classes=self.classes, prior=prior,
                             shift=self.shift)

    def to_dict(self) -> Dict[str, Any]:
        document = {'name': self.name, 'kind': self.kind, 'width': self.width}
        if self.is_categorical:
            document.update({'classes': list(self.classes),
                             'prior': self.prior.tolist(),
                             'shift': self.shift})
        else:
            document['range'] = list(self.value_range)
        return document

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> 'AttributeSpec':
        validated = Schema(
            {'name': str,
             'kind': And(str, lambda x: x in KINDS),
             'width': And(int, lambda x: x > 0),
             Default('classes'): [Use(str)],
             Default('prior'): [Use(float)],
             Default('shift'): Use(float),
             Default('range'): And([Use(float)], lambda x: len(x) == 2)}
            ).validate(document)
        return cls(validated['name'],
                   validated['kind'],
                   validated['width'],
                   classes=validated.get('classes'),
                   prior=validated.get('prior'),
                   shift=validated.get('shift', DEFAULT_SHIFT),
                   value_range=validated.get('range'))

    def __eq__(self, other: Any) -> bool:
        return isinstance(other, AttributeSpec) and self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return 'AttributeSpec({0})'.format(self.to_dict())


class LabelSchema(object):
    """
    Ordered attribute sections followed by the residual section. The
    total dimension d is the residual width plus the attribute widths.
    """

    def __init__(self,
                 attributes: Sequence[AttributeSpec],
                 residual_width: int) -> 'LabelSchema':
        """
        Initialize object.

        :param attributes: attribute specifications (may be empty)
        :type attributes: list
        :param residual_width: width of the residual section
        :type residual_width: int

        :raises ValueError: if names repeat or the residual width is
                            not positive
        """

        self.attributes = tuple(attributes)
        names = [attr.name for attr in self.attributes]
        if len(set(names)) != len(names):
            raise ValueError('Attribute names must be unique: {0}.'
                             .format(', '.join(names)))
        if (isinstance(residual_width, bool) or not isinstance(residual_width, int)
            or residual_width < 1):
            raise ValueError('Residual width must be a positive integer, got '
                             '{0}.'.format(residual_width))
        self.residual_width = residual_width
        self.names = tuple(names)

        # Section boundaries
        self.slices = []
        start = 0
        for attr in self.attributes:
            self.slices.append(slice(start, start + attr.width))
            start += attr.width
        self.residual_slice = slice(start, start + residual_width)
        self.d = start + residual_width

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    def index(self, attr: Union[int, str]) -> int:
        """
        Resolve an attribute index from an index or a name.

        :raises ValueError: if the attribute does not exist
        """

        if isinstance(attr, (int, np.integer)) and not isinstance(attr, bool):
            if not 0 <= attr < self.n_attributes:
                raise ValueError('Attribute index {0} out of range (schema has '
                                 '{1} attributes).'
                                 .format(attr, self.n_attributes))
            return int(attr)
        if attr not in self.names:
            raise ValueError('Unknown attribute "{0}". Known attributes: {1}.'
                             .format(attr, ', '.join(self.names)))
        return self.names.index(attr)

    def attribute(self, attr: Union[int, str]) -> AttributeSpec:
        return self.attributes[self.index(attr)]

    def check_dim(self, d: int) -> None:
        if d != self.d:
            raise ValueError('Dimension mismatch: the schema has dimension {0}, '
                             'got {1}.'.format(self.d, d))

    def with_priors(self, priors: Dict[str, Sequence[float]]) -> 'LabelSchema':
        """
        Copy of the schema with some categorical priors replaced.

        :param priors: attribute names mapped to prior vectors
        :type priors: dict

        :returns: new schema
        :rtype: LabelSchema
        """

        for name in priors:
            self.index(name)
        return LabelSchema([attr.with_prior(priors[attr.name])
                            if attr.name in priors else attr
                            for attr in self.attributes],
                           self.residual_width)

    def with_empirical_priors(self, labels: Sequence['MultiLabel']) -> 'LabelSchema':
        """
        Copy of the schema whose categorical priors are the class
        frequencies among the observed labels (uniform when an
        attribute has no observed values).

        :param labels: multi-labels
        :type labels: list

        :returns: new schema
        :rtype: LabelSchema
        """

        priors = {}
        for i, attr in enumerate(self.attributes):
            if not attr.is_categorical:
                continue
            counts = Counter(label.values[i] for label in labels
                             if label.values[i] is not None)
            total = sum(counts.values())
            if not total:
                logwarn('No observed labels for "{0}"; using a uniform prior.'
                        .format(attr.name))
                priors[attr.name] = np.full(attr.n_classes, 1.0/attr.n_classes)
            else:
                priors[attr.name] = np.array([counts[c] for c in attr.classes],
                                             dtype=np.float64)/total
        return self.with_priors(priors)

    def to_dict(self) -> Dict[str, Any]:
        return {'version': FORMAT_VERSION,
                'd': self.d,
                'residual_width': self.residual_width,
                'attributes': [attr.to_dict() for attr in self.attributes]}

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> 'LabelSchema':
        """
        Deserialize a dictionary produced by `to_dict`.

        :raises SchemaError: if the document is malformed or the
                             declared dimension is inconsistent
        """

        validated = Schema({'version': FORMAT_VERSION,
                            Default('d'): And(int, lambda x: x > 0),
                            'residual_width': And(int, lambda x: x > 0),
                            'attributes': [dict]},
                           ignore_extra_keys=True).validate(document)
        schema = cls([AttributeSpec.from_dict(attr)
                      for attr in validated['attributes']],
                     validated['residual_width'])
        if 'd' in validated and validated['d'] != schema.d:
            raise SchemaError('Declared dimension {0} does not match the '
                              'partition widths (total {1}).'
                              .format(validated['d'], schema.d))
        return schema

    def save(self, path: str) -> None:
        with open(path, 'w') as f:
            dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> 'LabelSchema':
        with open(path) as f:
            return cls.from_dict(load(f))

    def __eq__(self, other: Any) -> bool:
        return isinstance(other, LabelSchema) and self.to_dict() == other.to_dict()


class MultiLabel(object):
    """
    A tuple of label values, one per attribute of a schema, where None
    marks an unobserved value.
    """

    def __init__(self,
                 values: Sequence[LabelValue],
                 schema: LabelSchema,
                 allow_out_of_range: bool = False) -> 'MultiLabel':
        """
        Initialize object.

        :param values: one value (or None) per attribute
        :type values: list
        :param schema: label schema
        :type schema: LabelSchema
        :param allow_out_of_range: accept continuous values outside
                                   their range
        :type allow_out_of_range: bool

        :raises ValueError: if the values do not conform to the schema
        """

        values = list(values)
        if len(values) != schema.n_attributes:
            raise ValueError('Expected {0} label values, got {1}.'
                             .format(schema.n_attributes, len(values)))
        self.values = tuple(attr.parse_value(value,
                                             allow_out_of_range=allow_out_of_range)
                            for attr, value in zip(schema.attributes, values))

    @classmethod
    def empty(cls, schema: LabelSchema) -> 'MultiLabel':
        return cls([None]*schema.n_attributes, schema)

    @classmethod
    def from_assignments(cls,
                         assignments: Dict[str, Optional[str]],
                         schema: LabelSchema,
                         allow_out_of_range: bool = False) -> 'MultiLabel':
        """
        Build a label from a mapping of attribute names to values;
        attributes that are not mentioned are unobserved.

        :raises ValueError: if an unknown attribute is named
        """

        for name in assignments:
            schema.index(name)
        return cls([assignments.get(name) for name in schema.names], schema,
                   allow_out_of_range=allow_out_of_range)

    def with_value(self, index: int, value: LabelValue,
                   schema: LabelSchema) -> 'MultiLabel':
        values = list(self.values)
        values[index] = value
        return MultiLabel(values, schema, allow_out_of_range=True)

    @property
    def observed(self) -> Tuple[bool, ...]:
        return tuple(value is not None for value in self.values)

    def __eq__(self, other: Any) -> bool:
        return isinstance(other, MultiLabel) and self.values == other.values

    def __hash__(self) -> int:
        return hash(self.values)

    def __repr__(self) -> str:
        return 'MultiLabel({0})'.format(', '.join('_' if v is None else str(v)
                                                  for v in self.values))


def encode_labels(labels: Sequence[MultiLabel],
                  schema: LabelSchema) -> List[np.ndarray]:
    """
    Encode a list of multi-labels as one array per attribute: class
    indices (`EMPTY_CODE` when unobserved) for categorical attributes,
    values (NaN when unobserved) for continuous ones.

    :param labels: multi-labels conforming to `schema`
    :type labels: list
    :param schema: label schema
    :type schema: LabelSchema

    :returns: list of arrays of length len(labels)
    :rtype: list
    """

    encoded = []
    for i, attr in enumerate(schema.attributes):
        if attr.is_categorical:
            encoded.append(np.array([EMPTY_CODE if label.values[i] is None
                                     else attr.class_index(label.values[i])
                                     for label in labels], dtype=np.int64))
        else:
            encoded.append(np.array([np.nan if label.values[i] is None
                                     else label.values[i]
                                     for label in labels], dtype=np.float64))
    return encoded


def _section_terms(Z: Matrix,
                   encoded: Sequence[np.ndarray],
                   schema: LabelSchema) -> np.ndarray:
    # Residual section
    zu = Z[:, schema.residual_slice]
    ll = -0.5*schema.residual_width*LOG_2PI - 0.5*np.sum(zu**2, axis=1)

    for attr, section, values in zip(schema.attributes, schema.slices, encoded):
        zi = Z[:, section]
        width = attr.width
        if attr.is_categorical:
            observed = values != EMPTY_CODE

            # n x C matrix of log N(z^i; mu_j, I)
            sq = np.stack([np.sum((zi - mean)**2, axis=1)
                           for mean in attr.class_means], axis=1)
            log_comp = -0.5*width*LOG_2PI - 0.5*sq
            if np.any(observed):
                idx = np.flatnonzero(observed)
                ll[idx] += log_comp[idx, values[idx]]
            if np.any(~observed):
                idx = np.flatnonzero(~observed)
                with np.errstate(divide='ignore'):
                    log_joint = np.log(attr.prior)[np.newaxis, :] + log_comp[idx]
                ll[idx] += logsumexp(log_joint, axis=1)
        else:
            observed = ~np.isnan(values)
            a, b = attr.value_range
            if np.any(observed):
                idx = np.flatnonzero(observed)
                diff = zi[idx] - values[idx][:, np.newaxis]
                ll[idx] += -0.5*width*LOG_2PI - 0.5*np.sum(diff**2, axis=1)
            if np.any(~observed):
                idx = np.flatnonzero(~observed)
                ll[idx] += np.sum(bhattacharjee_logpdf(zi[idx], a, b), axis=1)
    return ll


def _check_batch(Z: Matrix,
                 encoded: Sequence[np.ndarray],
                 schema: LabelSchema) -> Matrix:
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    schema.check_dim(Z.shape[1])
    if len(encoded) != schema.n_attributes:
        raise ValueError('Expected encoded labels for {0} attributes, got {1}.'
                         .format(schema.n_attributes, len(encoded)))
    for values in encoded:
        if values.shape[0] != Z.shape[0]:
            raise ValueError('Got {0} points but {1} labels.'
                             .format(Z.shape[0], values.shape[0]))
    return Z


def base_loglik_batch(Z: Matrix,
                      encoded: Sequence[np.ndarray],
                      schema: LabelSchema) -> np.ndarray:
    """
    Base log-likelihood of every row of `Z` under its encoded label
    (see `encode_labels`).

    :param Z: n x d matrix
    :type Z: np.ndarray
    :param encoded: encoded labels
    :type encoded: list
    :param schema: label schema
    :type schema: LabelSchema

    :returns: vector of n log-likelihoods
    :rtype: np.ndarray
    """

    Z = _check_batch(Z, encoded, schema)
    return _section_terms(Z, encoded, schema)


def base_log_prob(Z: torch.Tensor,
                  encoded: Sequence[np.ndarray],
                  schema: LabelSchema) -> torch.Tensor:
    """
    Differentiable base log-likelihood of the rows of a float64 tensor,
    with the same terms as `base_loglik_batch`. Observed and unobserved
    rows are scattered into the result separately, so no gradient flows
    through the unused term of a row.

    :param Z: n x d tensor
    :type Z: torch.Tensor
    :param encoded: encoded labels
    :type encoded: list
    :param schema: label schema
    :type schema: LabelSchema

    :returns: tensor of n log-likelihoods
    :rtype: torch.Tensor
    """

    schema.check_dim(Z.shape[1])
    log_2pi = float(LOG_2PI)
    zu = Z[:, schema.residual_slice]
    ll = -0.5*schema.residual_width*log_2pi - 0.5*torch.sum(zu**2, dim=1)
    for attr, section, values in zip(schema.attributes, schema.slices, encoded):
        zi = Z[:, section]
        width = attr.width
        if attr.is_categorical:
            means = torch.as_tensor(attr.class_means, dtype=Z.dtype)
            sq = torch.sum((zi.unsqueeze(2) - means)**2, dim=1)
            log_comp = -0.5*width*log_2pi - 0.5*sq
            observed = np.flatnonzero(values != EMPTY_CODE)
            if observed.size:
                idx = torch.from_numpy(observed)
                codes = torch.from_numpy(values[observed])
                ll = ll.index_add(0, idx, log_comp[idx, codes])
            empty = np.flatnonzero(values == EMPTY_CODE)
            if empty.size:
                idx = torch.from_numpy(empty)
                with np.errstate(divide='ignore'):
                    log_prior = torch.as_tensor(np.log(attr.prior), dtype=Z.dtype)
                ll = ll.index_add(0, idx, torch.logsumexp(log_comp[idx] + log_prior,
                                                          dim=1))
        else:
            a, b = attr.value_range
            observed = np.flatnonzero(~np.isnan(values))
            if observed.size:
                idx = torch.from_numpy(observed)
                diff = zi[idx] - torch.from_numpy(values[observed]).unsqueeze(1)
                ll = ll.index_add(0, idx, -0.5*width*log_2pi
                                          - 0.5*torch.sum(diff**2, dim=1))
            empty = np.flatnonzero(np.isnan(values))
            if empty.size:
                idx = torch.from_numpy(empty)
                ll = ll.index_add(0, idx,
                                  torch.sum(bhattacharjee_log_prob(zi[idx], a, b),
                                            dim=1))
    return ll


def base_loglik(z: Vector, y: MultiLabel, schema: LabelSchema) -> float:
    """
    Log-likelihood of a single base vector under a (possibly partial)
    multi-label.

    :param z: vector of dimension d
    :type z: np.ndarray
    :param y: multi-label conforming to `schema`
    :type y: MultiLabel
    :param schema: label schema
    :type schema: LabelSchema

    :returns: log-likelihood
    :rtype: float

    :raises ValueError: on a shape mismatch or an invalid label
    """

    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    return float(base_loglik_batch(z, encode_labels([y], schema), schema)[0])


def base_sample_batch(encoded: Sequence[np.ndarray],
                      schema: LabelSchema,
                      rng_seed: Seed = None) -> Matrix:
    """
    Draw one base vector per encoded label. Unobserved categorical
    sections draw a class from the prior first; unobserved continuous
    sections draw a value uniformly from [a, b] for every coordinate.

    :param encoded: encoded labels
    :type encoded: list
    :param schema: label schema
    :type schema: LabelSchema
    :param rng_seed: seed (or `RandomState`)
    :type rng_seed: int, np.random.RandomState or None

    :returns: n x d matrix
    :rtype: np.ndarray
    """

    prng = get_random_state(rng_seed)
    n = encoded[0].shape[0] if encoded else 1
    Z = prng.randn(n, schema.d)
    for attr, section, values in zip(schema.attributes, schema.slices, encoded):
        if attr.is_categorical:
            codes = values.copy()
            empty = codes == EMPTY_CODE
            if np.any(empty):
                codes[empty] = prng.choice(attr.n_classes, size=int(empty.sum()),
                                           p=attr.prior)
            Z[:, section] += attr.class_means[codes][:, np.newaxis]
        else:
            a, b = attr.value_range
            centers = np.repeat(values[:, np.newaxis], attr.width, axis=1)
            empty = np.isnan(values)
            if np.any(empty):
                centers[empty] = prng.uniform(a, b, size=(int(empty.sum()),
                                                          attr.width))
            Z[:, section] += centers
    return Z


def base_sample(y: MultiLabel,
                schema: LabelSchema,
                rng_seed: Seed = None,
                n: Optional[int] = None) -> Matrix:
    """
    Draw from p(z | y). Returns a single d-vector, or an n x d matrix
    when `n` is given.

    :param y: multi-label (continuous observed values are checked
              against their ranges when the label is built)
    :type y: MultiLabel
    :param schema: label schema
    :type schema: LabelSchema
    :param rng_seed: seed (or `RandomState`)
    :type rng_seed: int, np.random.RandomState or None
    :param n: number of draws (None for a single vector)
    :type n: int or None

    :returns: sample(s)
    :rtype: np.ndarray
    """

    if n is not None and n < 1:
        raise ValueError('Number of samples must be at least 1, got {0}.'
                         .format(n))
    encoded = encode_labels([y]*(n or 1), schema)
    Z = base_sample_batch(encoded, schema, rng_seed=rng_seed)
    return Z[0] if n is None else Z


def _categorical(schema: LabelSchema, attr_index: Union[int, str]) \
    -> Tuple[int, AttributeSpec]:
    index = schema.index(attr_index)
    attr = schema.attributes[index]
    if not attr.is_categorical:
        raise ValueError('Attribute "{0}" is continuous; use '
                         '`read_continuous` instead.'.format(attr.name))
    return index, attr


def classify_batch(Z: Matrix,
                   schema: LabelSchema,
                   attr_index: Union[int, str]) -> Matrix:
    """
    Bayes posterior over the classes of a categorical attribute for
    every row of `Z`.

    :param Z: n x d matrix
    :type Z: np.ndarray
    :param schema: label schema
    :type schema: LabelSchema
    :param attr_index: attribute index or name
    :type attr_index: int or str

    :returns: n x C matrix of posteriors
    :rtype: np.ndarray

    :raises ValueError: if the attribute is continuous
    """

    index, attr = _categorical(schema, attr_index)
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    schema.check_dim(Z.shape[1])
    zi = Z[:, schema.slices[index]]
    scores = np.stack([-0.5*np.sum((zi - mean)**2, axis=1)
                       for mean in attr.class_means], axis=1)
    with np.errstate(divide='ignore'):
        scores = scores + np.log(attr.prior)[np.newaxis, :]
    return np.exp(scores - logsumexp(scores, axis=1)[:, np.newaxis])


def classify(z: Vector,
             schema: LabelSchema,
             attr_index: Union[int, str]) -> np.ndarray:
    """
    Bayes posterior over the classes of a categorical attribute for a
    single base vector; the argmax is the predicted class.

    :returns: vector of class probabilities
    :rtype: np.ndarray
    """

    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    return classify_batch(z, schema, attr_index)[0]


def read_continuous_batch(Z: Matrix,
                          schema: LabelSchema,
                          attr_index: Union[int, str]) -> np.ndarray:
    """
    Continuous attribute estimate (mean of the section coordinates)
    for every row of `Z`. Values are not clipped to the range.

    :raises ValueError: if the attribute is categorical
    """

    index = schema.index(attr_index)
    attr = schema.attributes[index]
    if attr.is_categorical:
        raise ValueError('Attribute "{0}" is categorical; use `classify` '
                         'instead.'.format(attr.name))
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    schema.check_dim(Z.shape[1])
    return Z[:, schema.slices[index]].mean(axis=1)


def read_continuous(z: Vector,
                    schema: LabelSchema,
                    attr_index: Union[int, str]) -> float:
    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    return float(read_continuous_batch(z, schema, attr_index)[0])


def default_schema(d: int = 256,
                   shift: float = DEFAULT_SHIFT,
                   snr_range: Tuple[float, float] = DEFAULT_SNR_RANGE) -> LabelSchema:
    """
    The (gender, age-group, SNR) schema with width-1 attribute sections
    and a residual of d - 3 dimensions.

    :param d: total dimension (at least 4)
    :type d: int
    :param shift: class shift for the binary attributes
    :type shift: float
    :param snr_range: (a, b) range of the SNR attribute
    :type snr_range: tuple

    :returns: schema
    :rtype: LabelSchema
    """

    if d < 4:
        raise ValueError('The default schema needs d >= 4, got {0}.'.format(d))
    return LabelSchema([AttributeSpec('gender', CATEGORICAL, 1,
                                      classes=['F', 'M'], shift=shift),
                        AttributeSpec('age', CATEGORICAL, 1,
                                      classes=['adult', 'child'], shift=shift),
                        AttributeSpec('snr', CONTINUOUS, 1,
                                      value_range=snr_range)],
                       d - 3)
