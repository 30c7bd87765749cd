"""
Masked affine autoregressive flow with a partitioned conditional base.

The flow maps an embedding e to a base vector z through a stack of
masked affine autoregressive layers. Conditioning lives entirely in the
base distribution (see `src.base`), so the same invertible map serves
density evaluation, Bayes classification, conditional generation and
attribute editing.

The layers are `torch` modules in float64; training uses autograd and
`torch.optim.Adam`. All randomness (initialization, shuffling,
regularization draws) comes from numpy random states, so a seed fixes a
run completely.
"""
import logging
from json import (dump,
                  load)

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from cytoolz import partition_all
from typing import (Any,
                    Dict,
                    List,
                    Tuple,
                    Union,
                    Callable,
                    Optional,
                    Sequence)
from schema import (And,
                    Or,
                    Use,
                    Schema,
                    SchemaError)
from sklearn.neighbors import NearestNeighbors

from src import (Seed,
                 Vector,
                 Matrix,
                 LabelValue,
                 FORMAT_VERSION,
                 get_random_state)
from src.base import (EMPTY_CODE,
                      MultiLabel,
                      LabelSchema,
                      encode_labels,
                      classify_batch,
                      base_log_prob,
                      base_sample_batch,
                      base_loglik_batch,
                      read_continuous_batch)
from src.distributions import GmmModel
from src.supporting import SupportingPool

logger = logging.getLogger('src.flow')
loginfo = logger.info
logdebug = logger.debug
logwarn = logger.warning
logerr = logger.error

DEFAULT_N_LAYERS = 5
LOG_SCALE_BOUND = 5.0
MIN_HIDDEN_SIZE = 64
PERTURBATION_FACTOR = 0.05

# Labeler for regularization embeddings: maps an n x d matrix to n
# (partial) multi-labels
Labeler = Callable[[Matrix], List[MultiLabel]]
Encoded = List[np.ndarray]


def default_hidden_sizes(d: int) -> List[int]:
    width = max(2*d, MIN_HIDDEN_SIZE)
    return [width, width]


def alternating_orderings(d: int, n_layers: int) -> List[np.ndarray]:
    """
    Orderings for a stack of layers: consecutive layers reverse each
    other and the last layer uses the canonical order.
    """

    canonical = np.arange(d)
    return [canonical.copy() if (n_layers - 1 - k) % 2 == 0 else canonical[::-1].copy()
            for k in range(n_layers)]


def _degrees(ordering: np.ndarray, hidden_sizes: Sequence[int]) -> List[np.ndarray]:
    """
    Degrees of the input dimensions (1-based position in `ordering`)
    followed by the degrees of every hidden layer.
    """

    d = ordering.size
    degrees_in = np.empty(d, dtype=np.int64)
    degrees_in[ordering] = np.arange(1, d + 1)
    return [degrees_in] + [np.arange(size) % max(1, d - 1) + min(1, d - 1)
                           for size in hidden_sizes]


def _masks(ordering: np.ndarray, hidden_sizes: Sequence[int]) -> List[np.ndarray]:
    """
    Connectivity masks (out x in, like `nn.Linear` weights) for a masked
    network. An output slot may only see hidden units of strictly
    smaller degree than its input dimension.
    """

    degrees = _degrees(ordering, hidden_sizes)
    masks = [(cur[:, np.newaxis] >= prev[np.newaxis, :]).astype(np.float64)
             for prev, cur in zip(degrees[:-1], degrees[1:])]
    masks.append((degrees[0][:, np.newaxis] > degrees[-1][np.newaxis, :])
                 .astype(np.float64))
    return masks


class MaskedLinear(nn.Linear):
    """
    Linear map whose weight is multiplied by a fixed 0/1 mask.
    """

    def __init__(self, in_features: int, out_features: int, mask: np.ndarray):
        super().__init__(in_features, out_features, dtype=torch.float64)
        self.register_buffer('mask', torch.as_tensor(mask, dtype=torch.float64))

    def masked_weight(self) -> torch.Tensor:
        return self.weight*self.mask

    def forward(self, inputs: torch.Tensor) -> torch.Tensor:
        return F.linear(inputs, self.masked_weight(), self.bias)


class MafLayer(nn.Module):
    """
    Masked affine autoregressive layer.

    Forward (density) direction: u_i = (x_i - m_i) * exp(-s_i), where
    (m_i, s_i) are produced by a masked tanh network from the inputs
    that precede i in the layer's ordering. The log-scale passes through
    bound * tanh(s / bound).
    """

    def __init__(self,
                 d: int,
                 ordering: Optional[Sequence[int]] = None,
                 hidden_sizes: Optional[Sequence[int]] = None,
                 log_scale_bound: float = LOG_SCALE_BOUND,
                 rng_seed: Seed = None,
                 output_scale: float = 0.0) -> 'MafLayer':
        """
        Initialize object.

        :param d: dimension
        :type d: int
        :param ordering: permutation of range(d) (default: canonical)
        :type ordering: list or None
        :param hidden_sizes: widths of the hidden layers (default:
                             two layers of width max(2d, 64))
        :type hidden_sizes: list or None
        :param log_scale_bound: bound of the log-scale clamp
        :type log_scale_bound: float
        :param rng_seed: seed (or `RandomState`) for the weights
        :type rng_seed: int, np.random.RandomState or None
        :param output_scale: scale of the random output weights; 0
                             makes the layer start as the identity
        :type output_scale: float

        :raises ValueError: on an invalid ordering or hidden size
        """

        super().__init__()
        if d < 1:
            raise ValueError('Dimension must be positive, got {0}.'.format(d))
        ordering = (np.arange(d) if ordering is None
                    else np.asarray(ordering, dtype=np.int64))
        if ordering.shape != (d,) or not np.array_equal(np.sort(ordering),
                                                         np.arange(d)):
            raise ValueError('Ordering must be a permutation of range({0}).'
                             .format(d))
        hidden_sizes = list(hidden_sizes or default_hidden_sizes(d))
        if not hidden_sizes or any(size < 1 for size in hidden_sizes):
            raise ValueError('Hidden sizes must be positive, got {0}.'
                             .format(hidden_sizes))
        if not log_scale_bound > 0:
            raise ValueError('Log-scale bound must be positive, got {0}.'
                             .format(log_scale_bound))
        self.d = d
        self.ordering = ordering
        self.hidden_sizes = hidden_sizes
        self.log_scale_bound = float(log_scale_bound)

        masks = _masks(ordering, hidden_sizes)
        sizes = [d] + hidden_sizes
        self.hidden = nn.ModuleList([MaskedLinear(n_in, n_out, mask)
                                     for n_in, n_out, mask
                                     in zip(sizes[:-1], sizes[1:], masks[:-1])])
        self.shift = MaskedLinear(sizes[-1], d, masks[-1])
        self.log_scale = MaskedLinear(sizes[-1], d, masks[-1])

        # hidden units grouped by degree, for the sequential inverse
        self._by_degree = [[torch.from_numpy(np.flatnonzero(degrees == k))
                            for k in range(d)]
                           for degrees in _degrees(ordering, hidden_sizes)[1:]]

        prng = get_random_state(rng_seed)
        with torch.no_grad():
            fan_in = d
            for linear, size in zip(self.hidden, hidden_sizes):
                linear.weight.copy_(torch.from_numpy(
                    prng.randn(fan_in, size).T/np.sqrt(fan_in + 1)))
                linear.bias.zero_()
                fan_in = size
            scale = output_scale/np.sqrt(fan_in + 1)
            for head in (self.shift, self.log_scale):
                head.weight.copy_(torch.from_numpy(scale*prng.randn(fan_in, d).T))
                head.bias.zero_()

    def _clamp(self, s_raw: torch.Tensor) -> torch.Tensor:
        return self.log_scale_bound*torch.tanh(s_raw/self.log_scale_bound)

    def shift_and_log_scale(self, X: torch.Tensor) -> Tuple[torch.Tensor,
                                                             torch.Tensor]:
        """
        Shift and (clamped) log-scale for every row of `X`.
        """

        h = X
        for linear in self.hidden:
            h = torch.tanh(linear(h))
        return self.shift(h), self._clamp(self.log_scale(h))

    def forward(self, X: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Map rows of `X` towards the base space.

        :returns: (U, logdet)
        :rtype: tuple
        """

        m, s = self.shift_and_log_scale(X)
        return (X - m)*torch.exp(-s), -torch.sum(s, dim=1)

    @torch.no_grad()
    def inverse(self, U: torch.Tensor) -> torch.Tensor:
        """
        Map rows of `U` back towards the data space, one dimension at a
        time along the ordering. Before dimension k of the ordering is
        recovered, only the hidden units of degree k - 1 are computed,
        so every hidden unit is evaluated once.
        """

        X = torch.zeros_like(U)
        hidden = [torch.zeros(U.shape[0], size, dtype=U.dtype)
                  for size in self.hidden_sizes]
        layers = [(linear.masked_weight(), linear.bias) for linear in self.hidden]
        Wm = self.shift.masked_weight()
        Ws = self.log_scale.masked_weight()
        for k, i in enumerate(self.ordering.tolist()):
            h = X
            for out, (W, b), units in zip(hidden, layers, self._by_degree):
                rows = units[k]
                if rows.numel():
                    out[:, rows] = torch.tanh(h.matmul(W[rows].T) + b[rows])
                h = out
            m = h.matmul(Wm[i]) + self.shift.bias[i]
            s = self._clamp(h.matmul(Ws[i]) + self.log_scale.bias[i])
            X[:, i] = U[:, i]*torch.exp(s) + m
        return X

    def to_dict(self) -> Dict[str, Any]:
        return {'ordering': self.ordering.tolist(),
                'hidden_sizes': list(self.hidden_sizes),
                'log_scale_bound': self.log_scale_bound,
                'params': {name: param.detach().numpy().tolist()
                           for name, param in self.named_parameters()}}

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> 'MafLayer':
        validated = Schema({'ordering': [int],
                            'hidden_sizes': [And(int, lambda x: x > 0)],
                            'log_scale_bound': Use(float),
                            'params': {str: list}}).validate(document)
        try:
            layer = cls(len(validated['ordering']),
                        ordering=validated['ordering'],
                        hidden_sizes=validated['hidden_sizes'],
                        log_scale_bound=validated['log_scale_bound'])
        except ValueError as e:
            raise SchemaError(str(e))
        params = validated['params']
        named = dict(layer.named_parameters())
        missing = set(named).difference(params)
        if missing:
            raise SchemaError('Missing layer parameters: {0}.'
                              .format(', '.join(sorted(missing))))
        with torch.no_grad():
            for name, param in named.items():
                value = torch.as_tensor(np.array(params[name], dtype=np.float64))
                if value.shape != param.shape:
                    raise SchemaError('Parameter "{0}" has shape {1}, expected '
                                      '{2}.'.format(name, tuple(value.shape),
                                                    tuple(param.shape)))
                param.copy_(value)
        return layer


class FlowModel(nn.Module):
    """
    Stack of `MafLayer`s (data -> base order) over a partitioned
    conditional base distribution.
    """

    def __init__(self,
                 schema: LabelSchema,
                 n_layers: int = DEFAULT_N_LAYERS,
                 hidden_sizes: Optional[Sequence[int]] = None,
                 log_scale_bound: float = LOG_SCALE_BOUND,
                 rng_seed: Seed = None,
                 output_scale: float = 0.0,
                 layers: Optional[Sequence[MafLayer]] = None) -> 'FlowModel':
        """
        Initialize object.

        :param schema: label schema (defines d)
        :type schema: LabelSchema
        :param n_layers: number of layers
        :type n_layers: int
        :param hidden_sizes: hidden widths of every masked network
        :type hidden_sizes: list or None
        :param log_scale_bound: bound of the log-scale clamp
        :type log_scale_bound: float
        :param rng_seed: seed (or `RandomState`) for the weights
        :type rng_seed: int, np.random.RandomState or None
        :param output_scale: scale of the random output weights (0
                             gives an identity-initialized model)
        :type output_scale: float
        :param layers: pre-built layers (overrides the other
                       construction parameters)
        :type layers: list or None

        :raises ValueError: if the layer dimensions do not match the
                            schema
        """

        super().__init__()
        self.schema = schema
        if layers is None:
            if n_layers < 1:
                raise ValueError('Number of layers must be positive, got {0}.'
                                 .format(n_layers))
            prng = get_random_state(rng_seed)
            layers = [MafLayer(schema.d, ordering=ordering,
                               hidden_sizes=hidden_sizes,
                               log_scale_bound=log_scale_bound,
                               rng_seed=prng, output_scale=output_scale)
                      for ordering in alternating_orderings(schema.d, n_layers)]
        for layer in layers:
            schema.check_dim(layer.d)
        self.layers = nn.ModuleList(layers)

    @property
    def d(self) -> int:
        return self.schema.d

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def _check_input(self, X: Matrix, what: str) -> Matrix:
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.ndim != 2:
            raise ValueError('Expected a vector or a matrix of {0}.'.format(what))
        self.schema.check_dim(X.shape[1])
        if not np.all(np.isfinite(X)):
            raise ValueError('Non-finite values in {0}.'.format(what))
        return X

    def forward(self, X: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        logdet = torch.zeros(X.shape[0], dtype=X.dtype)
        for layer in self.layers:
            X, layer_logdet = layer(X)
            logdet = logdet + layer_logdet
        return X, logdet

    def inverse(self, Z: torch.Tensor) -> torch.Tensor:
        for layer in reversed(self.layers):
            Z = layer.inverse(Z)
        return Z

    def log_prob(self, X: torch.Tensor, encoded: Encoded) -> torch.Tensor:
        """
        Differentiable log p(e | y) of every row of `X`.
        """

        Z, logdet = self(X)
        return base_log_prob(Z, encoded, self.schema) + logdet

    def forward_batch(self, E: Matrix) -> Tuple[Matrix, np.ndarray]:
        """
        Map embeddings to the base space.

        :param E: n x d matrix of embeddings
        :type E: np.ndarray

        :returns: n x d base matrix and the vector of log-determinants
        :rtype: tuple

        :raises ValueError: on a dimension mismatch or non-finite input
        """

        X = self._check_input(E, 'embeddings')
        with torch.no_grad():
            Z, logdet = self(torch.from_numpy(X))
        return Z.numpy(), logdet.numpy()

    def inverse_batch(self, Z: Matrix) -> Matrix:
        """
        Map base vectors back to embeddings.

        :raises ValueError: on a dimension mismatch or non-finite input
        """

        X = self._check_input(Z, 'base vectors')
        return self.inverse(torch.from_numpy(X)).numpy()

    def loglik_encoded(self, E: Matrix, encoded: Encoded) -> np.ndarray:
        Z, logdet = self.forward_batch(E)
        return base_loglik_batch(Z, encoded, self.schema) + logdet

    def loglik_batch(self, E: Matrix, labels: Sequence[MultiLabel]) -> np.ndarray:
        """
        Log-likelihood of every embedding under its (possibly partial)
        label.
        """

        return self.loglik_encoded(E, encode_labels(labels, self.schema))

    def loss(self, batches: Sequence[Tuple[Matrix, Encoded]]) -> torch.Tensor:
        """
        Sum over batches of the mean negative log-likelihood.

        :param batches: (n x d embeddings, encoded labels) pairs
        :type batches: list

        :returns: scalar loss tensor
        :rtype: torch.Tensor
        """

        total = torch.zeros((), dtype=torch.float64)
        for E, encoded in batches:
            X = torch.from_numpy(self._check_input(E, 'embeddings'))
            total = total - torch.mean(self.log_prob(X, encoded))
        return total

    def to_dict(self) -> Dict[str, Any]:
        return {'version': FORMAT_VERSION,
                'kind': 'flow',
                'schema': self.schema.to_dict(),
                'layers': [layer.to_dict() for layer in self.layers]}

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> 'FlowModel':
        validated = Schema({'version': FORMAT_VERSION,
                            'kind': 'flow',
                            'schema': dict,
                            'layers': And([dict], len)}).validate(document)
        schema = LabelSchema.from_dict(validated['schema'])
        layers = [MafLayer.from_dict(layer) for layer in validated['layers']]
        try:
            return cls(schema, layers=layers)
        except ValueError as e:
            raise SchemaError(str(e))

    def save(self, path: str) -> None:
        with open(path, 'w') as f:
            dump(self.to_dict(), f, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> 'FlowModel':
        with open(path) as f:
            return cls.from_dict(load(f))


def forward(model: FlowModel, e: Vector) -> Tuple[Vector, float]:
    """
    Map a single embedding to the base space.

    :returns: (z, logdet)
    :rtype: tuple
    """

    Z, logdet = model.forward_batch(np.asarray(e, dtype=np.float64).reshape(1, -1))
    return Z[0], float(logdet[0])


def inverse(model: FlowModel, z: Vector) -> Vector:
    return model.inverse_batch(np.asarray(z, dtype=np.float64).reshape(1, -1))[0]


def loglik(model: FlowModel, e: Vector, y: MultiLabel) -> float:
    """
    log p(e | y): base log-likelihood of the mapped point plus the
    log-determinant of the Jacobian.
    """

    e = np.asarray(e, dtype=np.float64).reshape(1, -1)
    return float(model.loglik_batch(e, [y])[0])


def sample(model: FlowModel,
           y: MultiLabel,
           n: int,
           rng_seed: Seed = None) -> Matrix:
    """
    Draw `n` embeddings conditioned on a (possibly partial) label.

    :param model: flow model
    :type model: FlowModel
    :param y: multi-label
    :type y: MultiLabel
    :param n: number of samples
    :type n: int
    :param rng_seed: seed (or `RandomState`)
    :type rng_seed: int, np.random.RandomState or None

    :returns: n x d matrix
    :rtype: np.ndarray
    """

    if n < 1:
        raise ValueError('Number of samples must be at least 1, got {0}.'
                         .format(n))
    encoded = encode_labels([y]*n, model.schema)
    return model.inverse_batch(base_sample_batch(encoded, model.schema,
                                                 rng_seed=rng_seed))


def sample_labels(model: FlowModel,
                  labels: Sequence[MultiLabel],
                  rng_seed: Seed = None) -> Matrix:
    """
    Draw one embedding per label.
    """

    if not labels:
        raise ValueError('No labels to sample from.')
    encoded = encode_labels(labels, model.schema)
    return model.inverse_batch(base_sample_batch(encoded, model.schema,
                                                 rng_seed=rng_seed))


def edit_batch(model: FlowModel,
               E: Matrix,
               attr: Union[int, str],
               value: LabelValue = None,
               delta: Optional[float] = None) -> Matrix:
    """
    Edit an attribute of embeddings: map to the base space, overwrite
    (or, for continuous attributes, shift by `delta`) the attribute's
    section and map back. Every other coordinate is left unchanged.

    :param model: flow model
    :type model: FlowModel
    :param E: n x d matrix of embeddings
    :type E: np.ndarray
    :param attr: attribute index or name
    :type attr: int or str
    :param value: new class (categorical) or value (continuous; may
                  lie outside the training range)
    :type value: str, float or None
    :param delta: increment of a continuous attribute
    :type delta: float or None

    :returns: n x d matrix of edited embeddings
    :rtype: np.ndarray

    :raises ValueError: if both or neither of `value` and `delta` are
                        given, or the value is invalid
    """

    schema = model.schema
    index = schema.index(attr)
    spec = schema.attributes[index]
    if (value is None) == (delta is None):
        raise ValueError('Exactly one of a new value and a delta must be given '
                         'for "{0}".'.format(spec.name))
    Z = model.forward_batch(E)[0]
    section = schema.slices[index]
    if spec.is_categorical:
        if delta is not None:
            raise ValueError('A delta cannot be applied to the categorical '
                             'attribute "{0}".'.format(spec.name))
        Z[:, section] = spec.class_means[spec.class_index(value)]
    elif delta is not None:
        if not np.isfinite(delta):
            raise ValueError('Delta must be finite, got {0}.'.format(delta))
        Z[:, section] += float(delta)
    else:
        Z[:, section] = spec.parse_value(value, allow_out_of_range=True)
    return model.inverse_batch(Z)


def edit(model: FlowModel,
         e: Vector,
         attr: Union[int, str],
         value: LabelValue = None,
         delta: Optional[float] = None) -> Vector:
    e = np.asarray(e, dtype=np.float64).reshape(1, -1)
    return edit_batch(model, e, attr, value=value, delta=delta)[0]


def classify_embeddings(model: FlowModel,
                        E: Matrix,
                        attr: Union[int, str]) -> Matrix:
    """
    Bayes posteriors over the classes of a categorical attribute for
    every embedding.
    """

    return classify_batch(model.forward_batch(E)[0], model.schema, attr)


def read_embeddings(model: FlowModel,
                    E: Matrix,
                    attr: Union[int, str]) -> np.ndarray:
    """
    Continuous attribute readout for every embedding.
    """

    return read_continuous_batch(model.forward_batch(E)[0], model.schema, attr)


def pseudo_label(model: FlowModel,
                 E: Matrix,
                 perturbation_scale: float,
                 rng_seed: Seed = None) -> Encoded:
    """
    Predict categorical labels for perturbed copies E + eps * eta of the
    embeddings (eta standard normal). Continuous attributes are left
    unobserved.

    :returns: encoded labels
    :rtype: list
    """

    prng = get_random_state(rng_seed)
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    if perturbation_scale > 0:
        E = E + perturbation_scale*prng.randn(*E.shape)
    Z = model.forward_batch(E)[0]
    encoded = []
    for index, attr in enumerate(model.schema.attributes):
        if attr.is_categorical:
            encoded.append(np.argmax(classify_batch(Z, model.schema, index),
                                     axis=1).astype(np.int64))
        else:
            encoded.append(np.full(E.shape[0], np.nan))
    return encoded


def median_nn_distance(E: Matrix) -> float:
    """
    Median Euclidean distance of every embedding to its nearest
    neighbour.
    """

    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    if E.shape[0] < 2:
        return 0.0
    distances = NearestNeighbors(n_neighbors=2).fit(E).kneighbors(E)[0]
    return float(np.median(distances[:, 1]))


class TrainConfig(object):
    """
    Class for representing a set of configuration options for flow
    training.
    """

    def __init__(self,
                 batch_size: int = 64,
                 reg_batch_size: int = 64,
                 perturbation_scale: Optional[float] = None,
                 learning_rate: float = 1e-3,
                 max_epochs: int = 200,
                 patience: int = 10,
                 n_layers: int = DEFAULT_N_LAYERS,
                 hidden_size: Optional[int] = None,
                 log_scale_bound: float = LOG_SCALE_BOUND,
                 rng_seed: Optional[int] = None) -> 'TrainConfig':
        """
        Initialize object.

        :param batch_size: number of corpus items per step (N)
        :type batch_size: int
        :param reg_batch_size: number of regularization embeddings per
                               step (M)
        :type reg_batch_size: int
        :param perturbation_scale: standard deviation of the input
                                   perturbation used for pseudo-labels
                                   (None: 0.05 times the median
                                   nearest-neighbour distance of the
                                   training embeddings)
        :type perturbation_scale: float or None
        :param learning_rate: step size
        :type learning_rate: float
        :param max_epochs: maximum number of passes over the corpus
        :type max_epochs: int
        :param patience: epochs without validation improvement before
                         stopping
        :type patience: int
        :param n_layers: number of flow layers
        :type n_layers: int
        :param hidden_size: width of the two hidden layers of every
                            masked network (None: max(2d, 64))
        :type hidden_size: int or None
        :param log_scale_bound: bound of the log-scale clamp
        :type log_scale_bound: float
        :param rng_seed: seed for initialization, shuffling and
                         regularization draws
        :type rng_seed: int or None

        :raises SchemaError: if the parameters are invalid
        """

        params = dict(locals())
        del params['self']
        positive_int = And(int, lambda x: x > 0)
        try:
            self.validated = Schema(
                {'batch_size': positive_int,
                 'reg_batch_size': positive_int,
                 'perturbation_scale': Or(None, And(Use(float),
                                                    lambda x: x >= 0.0)),
                 'learning_rate': And(Use(float), lambda x: x > 0.0),
                 'max_epochs': positive_int,
                 'patience': positive_int,
                 'n_layers': positive_int,
                 'hidden_size': Or(None, positive_int),
                 'log_scale_bound': And(Use(float), lambda x: x > 0.0),
                 'rng_seed': Or(None, And(int, lambda x: x >= 0))}
                ).validate(params)
        except SchemaError as e:
            logerr('Invalid training configuration: {0}'.format(e))
            raise e
        for key, value in self.validated.items():
            setattr(self, key, value)

    def hidden_sizes(self, d: int) -> List[int]:
        if self.hidden_size is None:
            return default_hidden_sizes(d)
        return [self.hidden_size, self.hidden_size]

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.validated)


class FlowTrainer(object):
    """
    Semi-supervised maximum-likelihood training of a `FlowModel`.

    Every step combines a mini-batch of corpus items with their
    (partial) labels and, when supporting distributions are given, a
    batch of regularization embeddings labeled with pseudo-labels
    predicted by the current model on perturbed copies.
    """

    def __init__(self,
                 schema: LabelSchema,
                 config: Optional[TrainConfig] = None,
                 supporting: Optional[Union[GmmModel, SupportingPool]] = None,
                 labeler: Optional[Labeler] = None) -> 'FlowTrainer':
        """
        Initialize object.

        :param schema: label schema (priors are replaced by the
                       empirical class frequencies of the training
                       labels)
        :type schema: LabelSchema
        :param config: training configuration
        :type config: TrainConfig or None
        :param supporting: supporting GMM or pool for regularization
                           data (None disables regularization)
        :type supporting: GmmModel, SupportingPool or None
        :param labeler: post-hoc labeler for the continuous attributes
                        of regularization embeddings
        :type labeler: callable or None
        """

        self.cfg_ = config or TrainConfig()
        self.schema_ = schema
        if isinstance(supporting, GmmModel):
            supporting = SupportingPool.single(supporting, schema)
        if supporting is not None:
            schema.check_dim(supporting.d)
        self.supporting_ = supporting
        self.labeler_ = labeler
        self.history_ = []
        self.perturbation_scale_ = None
        self.best_epoch_ = None

    def _check_corpus(self, E: Matrix, labels: Sequence[MultiLabel], what: str) \
        -> Matrix:
        E = np.asarray(E, dtype=np.float64)
        if E.ndim != 2 or not E.shape[0]:
            raise ValueError('The {0} corpus is empty.'.format(what))
        self.schema_.check_dim(E.shape[1])
        if len(labels) != E.shape[0]:
            raise ValueError('The {0} corpus has {1} embeddings but {2} labels.'
                             .format(what, E.shape[0], len(labels)))
        return E

    def regularization_batch(self,
                             model: FlowModel,
                             prng: np.random.RandomState) -> Tuple[Matrix, Encoded]:
        """
        Draw M regularization embeddings with their labels: values known
        from the pool templates, categorical pseudo-labels elsewhere and
        continuous labels from the post-hoc labeler when there is one.
        """

        cfg = self.cfg_
        E, templates = self.supporting_.sample(cfg.reg_batch_size, prng)
        encoded = encode_labels(templates, model.schema)
        predicted = pseudo_label(model, E, self.perturbation_scale_, prng)
        if self.labeler_ is not None:
            posthoc = encode_labels(self.labeler_(E), model.schema)
        for index, attr in enumerate(model.schema.attributes):
            if attr.is_categorical:
                empty = encoded[index] == EMPTY_CODE
                encoded[index][empty] = predicted[index][empty]
            elif self.labeler_ is not None:
                empty = np.isnan(encoded[index])
                encoded[index][empty] = posthoc[index][empty]
        return E, encoded

    def fit(self,
            train_embeddings: Matrix,
            train_labels: Sequence[MultiLabel],
            val_embeddings: Matrix,
            val_labels: Sequence[MultiLabel]) -> FlowModel:
        """
        Train a flow with early stopping on the validation
        log-likelihood.

        :returns: the model with the best validation log-likelihood
        :rtype: FlowModel

        :raises ValueError: if a corpus is empty or dimensions do not
                            match
        """

        cfg = self.cfg_
        E_train = self._check_corpus(train_embeddings, train_labels, 'training')
        E_val = self._check_corpus(val_embeddings, val_labels, 'validation')
        schema = self.schema_.with_empirical_priors(train_labels)
        prng = get_random_state(cfg.rng_seed)
        model = FlowModel(schema,
                          n_layers=cfg.n_layers,
                          hidden_sizes=cfg.hidden_sizes(schema.d),
                          log_scale_bound=cfg.log_scale_bound,
                          rng_seed=prng)
        self.perturbation_scale_ = (PERTURBATION_FACTOR*median_nn_distance(E_train)
                                    if cfg.perturbation_scale is None
                                    else cfg.perturbation_scale)
        loginfo('Training a {0}-layer flow on {1} items (d={2}, validation: {3} '
                'items, regularization: {4}, perturbation scale: {5:.4g}).'
                .format(model.n_layers, E_train.shape[0], schema.d,
                        E_val.shape[0],
                        'off' if self.supporting_ is None
                        else '{0} per step'.format(cfg.reg_batch_size),
                        self.perturbation_scale_))

        encoded_train = encode_labels(train_labels, schema)
        encoded_val = encode_labels(val_labels, schema)
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
        best_val = -np.inf
        best_state = {name: value.clone() for name, value
                      in model.state_dict().items()}
        self.best_epoch_ = 0
        self.history_ = []
        epochs_without_improvement = 0
        for epoch in range(1, cfg.max_epochs + 1):
            losses = []
            for rows in partition_all(cfg.batch_size,
                                      prng.permutation(E_train.shape[0])):
                rows = np.array(rows)
                batches = [(E_train[rows], [codes[rows] for codes in encoded_train])]
                if self.supporting_ is not None:
                    batches.append(self.regularization_batch(model, prng))
                optimizer.zero_grad()
                loss = model.loss(batches)
                loss.backward()
                optimizer.step()
                losses.append(float(loss))

            val_loglik = float(np.mean(model.loglik_encoded(E_val, encoded_val)))
            train_loss = float(np.mean(losses))
            if not np.isfinite(val_loglik):
                logwarn('Non-finite validation log-likelihood at epoch {0}; '
                        'stopping.'.format(epoch))
                break
            if val_loglik > best_val:
                best_val = val_loglik
                best_state = {name: value.clone() for name, value
                              in model.state_dict().items()}
                self.best_epoch_ = epoch
                epochs_without_improvement = 0
            else:
                epochs_without_improvement += 1
            self.history_.append({'epoch': epoch,
                                  'train_loss': train_loss,
                                  'val_loglik': val_loglik})
            loginfo('Epoch {0}: train loss = {1:.4f}, validation log-likelihood '
                    '= {2:.4f}, epochs without improvement = {3}.'
                    .format(epoch, train_loss, val_loglik,
                            epochs_without_improvement))
            if epochs_without_improvement >= cfg.patience:
                loginfo('Stopping early after epoch {0} (best epoch: {1}).'
                        .format(epoch, self.best_epoch_))
                break

        model.load_state_dict(best_state)
        return model


def train(train_corpus,
          val_corpus,
          supporting: Optional[Union[GmmModel, SupportingPool]],
          schema: LabelSchema,
          config: Optional[TrainConfig] = None,
          labeler: Optional[Labeler] = None) -> FlowModel:
    """
    Train a flow on a corpus (anything with `embeddings` and `labels`),
    with early stopping on a validation corpus.

    :param train_corpus: training corpus
    :type train_corpus: Corpus
    :param val_corpus: validation corpus
    :type val_corpus: Corpus
    :param supporting: supporting GMM or pool for regularization data
                       (None disables regularization)
    :type supporting: GmmModel, SupportingPool or None
    :param schema: label schema
    :type schema: LabelSchema
    :param config: training configuration
    :type config: TrainConfig or None
    :param labeler: post-hoc labeler for continuous attributes of the
                    regularization data
    :type labeler: callable or None

    :returns: trained model
    :rtype: FlowModel
    """

    trainer = FlowTrainer(schema, config=config, supporting=supporting,
                          labeler=labeler)
    return trainer.fit(train_corpus.embeddings, train_corpus.labels,
                       val_corpus.embeddings, val_corpus.labels)
