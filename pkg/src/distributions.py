"""
Elementary densities, sampling and EM fitting of isotropic Gaussian
mixtures.

Every other module builds on these functions: the base distribution
evaluates its marginals with `logsumexp` and `bhattacharjee_logpdf`,
the supporting distributions and the conditional-GMM baseline are
`GmmModel` instances fitted with `gmm_fit_em`.
"""
import logging
from json import (dump,
                  load)

import numpy as np
import torch
from typing import (Any,
                    Dict,
                    Tuple,
                    Optional,
                    Sequence)
from schema import (And,
                    Or,
                    Use,
                    Schema,
                    SchemaError,
                    Optional as Default)
from scipy.special import (ndtr,
                           log_ndtr,
                           logsumexp as _logsumexp)
from sklearn.cluster import kmeans_plusplus

from src import (SEED,
                 Seed,
                 Vector,
                 Matrix,
                 Numeric,
                 FORMAT_VERSION,
                 get_random_state)

logger = logging.getLogger('src.distributions')
loginfo = logger.info
logdebug = logger.debug
logwarn = logger.warning
logerr = logger.error

LOG_2PI = np.log(2.0*np.pi)
VAR_FLOOR = 1e-6
DEFAULT_K = 10
WEIGHT_TOLERANCE = 1e-9


def logsumexp(xs: Sequence[float]) -> float:
    """
    Compute log(sum(exp(xs))) without overflow.

    :param xs: non-empty sequence of reals (-inf allowed)
    :type xs: list or np.ndarray

    :returns: log of the summed exponentials (-inf if every element is
              -inf)
    :rtype: float

    :raises ValueError: if `xs` is empty
    """

    xs = np.asarray(xs, dtype=np.float64).ravel()
    if not xs.size:
        raise ValueError('logsumexp requires a non-empty input.')
    if np.all(np.isneginf(xs)):
        return -np.inf
    return float(_logsumexp(xs))


def std_normal_cdf(x: Numeric) -> float:
    """
    Standard normal cumulative distribution function.

    :param x: finite real
    :type x: float

    :returns: Phi(x)
    :rtype: float
    """

    return float(ndtr(x))


def _check_dims(x: np.ndarray, mean: np.ndarray) -> None:
    if x.shape[-1] != mean.shape[-1]:
        raise ValueError('Dimension mismatch: got a vector of length {0} and a '
                         'mean of length {1}.'
                         .format(x.shape[-1], mean.shape[-1]))


def gaussian_iso_logpdf(x: Vector, mean: Vector, var: Numeric):
    """
    Log-density of an isotropic Gaussian N(mean, var * I).

    `x` may also be an n x d matrix, in which case a vector of n
    log-densities is returned.

    :param x: point(s) of dimension d
    :type x: np.ndarray
    :param mean: mean vector of dimension d
    :type mean: np.ndarray
    :param var: positive scalar variance
    :type var: float

    :returns: log-density (or array of log-densities)
    :rtype: float or np.ndarray

    :raises ValueError: on a dimension mismatch or a non-positive
                        variance
    """

    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    if np.ndim(x) == 0:
        x = x.reshape(1)
    if np.ndim(mean) == 0:
        mean = mean.reshape(1)
    _check_dims(x, mean)
    if not var > 0:
        raise ValueError('Variance must be positive, got {0}.'.format(var))
    d = x.shape[-1]
    sq = np.sum((x - mean)**2, axis=-1)
    result = -0.5*d*(LOG_2PI + np.log(var)) - sq/(2.0*var)
    return float(result) if np.ndim(result) == 0 else result


def _log1mexp(x: np.ndarray) -> np.ndarray:
    """
    log(1 - exp(x)) for x <= 0, switching between the `expm1` and the
    `log1p` forms at -log(2).
    """

    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide='ignore'):
        return np.where(x > -np.log(2.0),
                        np.log(-np.expm1(np.minimum(x, 0.0))),
                        np.log1p(-np.exp(np.minimum(x, -np.log(2.0)))))


def _log_cdf_difference(z: np.ndarray, a: float, b: float) -> np.ndarray:
    """
    log(Phi(z - a) - Phi(z - b)) for a < b, evaluated on the tail that
    avoids cancellation: above the midpoint the difference is rewritten
    as Phi(b - z) - Phi(a - z).
    """

    z = np.asarray(z, dtype=np.float64)
    upper = z > 0.5*(a + b)
    hi = np.where(upper, b - z, z - a)
    lo = np.where(upper, a - z, z - b)
    log_hi = log_ndtr(hi)
    return log_hi + _log1mexp(log_ndtr(lo) - log_hi)


def _check_range(a: float, b: float) -> None:
    if not a < b:
        raise ValueError('Range lower bound must be smaller than the upper '
                         'bound, got [{0}, {1}].'.format(a, b))


def bhattacharjee_logpdf(z, a: float, b: float):
    """
    Log-density of the marginal of N(z; y, 1) under y ~ uniform(a, b),
    i.e., log[(Phi(z - a) - Phi(z - b)) / (b - a)].

    :param z: real (or array of reals)
    :type z: float or np.ndarray
    :param a: lower end of the uniform range
    :type a: float
    :param b: upper end of the uniform range
    :type b: float

    :returns: log-density (or array of log-densities)
    :rtype: float or np.ndarray

    :raises ValueError: if a >= b
    """

    _check_range(a, b)
    result = _log_cdf_difference(z, a, b) - np.log(b - a)
    return float(result) if np.ndim(result) == 0 else result


def _log1mexp_tensor(x: torch.Tensor) -> torch.Tensor:
    """
    Torch counterpart of `_log1mexp`. Both branches only ever see inputs
    from their own side of -log(2), so their gradients stay finite.
    """

    cut = -float(np.log(2.0))
    return torch.where(x > cut,
                       torch.log(-torch.expm1(torch.clamp(x, min=cut, max=0.0))),
                       torch.log1p(-torch.exp(torch.clamp(x, max=cut))))


def bhattacharjee_log_prob(z: torch.Tensor, a: float, b: float) -> torch.Tensor:
    """
    Differentiable version of `bhattacharjee_logpdf` for a tensor of
    reals, used when training flows.

    :param z: tensor of reals
    :type z: torch.Tensor
    :param a: lower end of the uniform range
    :type a: float
    :param b: upper end of the uniform range
    :type b: float

    :returns: element-wise log-densities
    :rtype: torch.Tensor

    :raises ValueError: if a >= b
    """

    _check_range(a, b)
    a, b = float(a), float(b)
    upper = z > 0.5*(a + b)
    hi = torch.where(upper, b - z, z - a)
    lo = torch.where(upper, a - z, z - b)
    log_hi = torch.special.log_ndtr(hi)
    return (log_hi + _log1mexp_tensor(torch.special.log_ndtr(lo) - log_hi)
            - float(np.log(b - a)))


def _squared_distances(X: Matrix, means: Matrix) -> np.ndarray:
    """
    n x K matrix of squared Euclidean distances, one component at a
    time (no expansion of the square, so small variances around large
    means keep their precision).
    """

    return np.stack([np.sum((X - mean)**2, axis=1) for mean in means], axis=1)


def _component_logpdfs(X: Matrix,
                       weights: np.ndarray,
                       means: Matrix,
                       variances: np.ndarray) -> np.ndarray:
    d = X.shape[1]
    with np.errstate(divide='ignore'):
        log_weights = np.log(weights)
    return (log_weights[np.newaxis, :]
            - 0.5*d*(LOG_2PI + np.log(variances))[np.newaxis, :]
            - _squared_distances(X, means)/(2.0*variances[np.newaxis, :]))


class GmmModel(object):
    """
    Isotropic Gaussian mixture: K components, each with a weight, a
    d-dimensional mean and one scalar variance.

    Instances are treated as immutable once constructed.
    """

    def __init__(self,
                 weights: Sequence[float],
                 means: Matrix,
                 variances: Sequence[float],
                 var_floor: float = VAR_FLOOR) -> 'GmmModel':
        """
        Initialize object.

        :param weights: K mixture weights (non-negative, summing to 1)
        :type weights: list or np.ndarray
        :param means: K x d matrix of component means
        :type means: np.ndarray
        :param variances: K scalar variances (floored at `var_floor`)
        :type variances: list or np.ndarray
        :param var_floor: minimum variance
        :type var_floor: float

        :raises ValueError: if the parameters are inconsistent or
                            invalid
        """

        weights = np.array(weights, dtype=np.float64).ravel()
        means = np.array(means, dtype=np.float64)
        variances = np.array(variances, dtype=np.float64).ravel()
        if means.ndim == 1:
            means = means.reshape(-1, 1)
        K = weights.size
        if K < 1:
            raise ValueError('A mixture needs at least one component.')
        if means.shape[0] != K or variances.size != K:
            raise ValueError('Inconsistent component counts: {0} weights, {1} '
                             'means and {2} variances.'
                             .format(K, means.shape[0], variances.size))
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError('Mixture weights must be non-negative and sum to '
                             '1, got {0}.'.format(weights.tolist()))
        if not np.all(np.isfinite(means)):
            raise ValueError('Mixture means must be finite.')
        if not var_floor > 0:
            raise ValueError('The variance floor must be positive.')
        if np.any(~np.isfinite(variances)) or np.any(variances < var_floor):
            raise ValueError('Mixture variances must be finite and at least {0}.'
                             .format(var_floor))

        self.weights = weights
        self.means = means
        self.variances = variances
        self.var_floor = var_floor
        for array in (self.weights, self.means, self.variances):
            array.setflags(write=False)

        # Log-likelihood trace of the EM run that produced the model,
        # if any (not serialized)
        self.fit_history = ()

    @property
    def K(self) -> int:
        return self.weights.size

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def component_logpdfs(self, X: Matrix) -> np.ndarray:
        """
        Compute log(weight_k) + log N(x; mean_k, var_k I) for every row
        of `X` and every component.

        :param X: n x d matrix
        :type X: np.ndarray

        :returns: n x K matrix
        :rtype: np.ndarray
        """

        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.d:
            raise ValueError('Dimension mismatch: the model has dimension {0}, '
                             'got data of dimension {1}.'
                             .format(self.d, X.shape[1]))
        return _component_logpdfs(X, self.weights, self.means, self.variances)

    def logpdf(self, X: Matrix) -> np.ndarray:
        """
        Log-density of every row of `X`.

        :param X: n x d matrix
        :type X: np.ndarray

        :returns: vector of n log-densities
        :rtype: np.ndarray
        """

        return _logsumexp(self.component_logpdfs(X), axis=1)

    def to_dict(self) -> Dict[str, Any]:
        """
        Serialize to a JSON-compatible dictionary.

        :returns: dictionary with the keys `version`, `d`, `K`,
                  `weights`, `means` and `variances`
        :rtype: dict
        """

        return {'version': FORMAT_VERSION,
                'd': self.d,
                'K': self.K,
                'weights': self.weights.tolist(),
                'means': self.means.tolist(),
                'variances': self.variances.tolist()}

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> 'GmmModel':
        """
        Deserialize a dictionary produced by `to_dict`.

        :param document: serialized model
        :type document: dict

        :returns: model
        :rtype: GmmModel

        :raises SchemaError: if the document is malformed
        """

        validated = Schema({'version': FORMAT_VERSION,
                            'd': And(int, lambda x: x > 0),
                            'K': And(int, lambda x: x > 0),
                            'weights': [Or(float, int)],
                            'means': [[Or(float, int)]],
                            'variances': [Or(float, int)],
                            Default('kind'): str},
                           ignore_extra_keys=True).validate(document)
        try:
            model = cls(validated['weights'], validated['means'],
                        validated['variances'],
                        var_floor=min([VAR_FLOOR] + validated['variances']))
        except ValueError as e:
            raise SchemaError(str(e))
        if model.d != validated['d'] or model.K != validated['K']:
            raise SchemaError('Declared shape (d={0}, K={1}) does not match the '
                              'parameter arrays.'
                              .format(validated['d'], validated['K']))
        return model

    def save(self, path: str) -> None:
        document = self.to_dict()
        document['kind'] = 'gmm'
        with open(path, 'w') as f:
            dump(document, f, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> 'GmmModel':
        with open(path) as f:
            return cls.from_dict(load(f))


def gmm_logpdf(x: Vector, model: GmmModel):
    """
    Log-density of a point (or the rows of a matrix) under a mixture.

    :param x: vector of dimension d, or n x d matrix
    :type x: np.ndarray
    :param model: mixture
    :type model: GmmModel

    :returns: log-density (or vector of log-densities)
    :rtype: float or np.ndarray

    :raises ValueError: on a dimension mismatch
    """

    x = np.asarray(x, dtype=np.float64)
    if x.ndim <= 1:
        if x.reshape(-1).size != model.d:
            raise ValueError('Dimension mismatch: the model has dimension {0}, '
                             'got a vector of length {1}.'
                             .format(model.d, x.reshape(-1).size))
        return float(model.logpdf(x.reshape(1, -1))[0])
    return model.logpdf(x)


def gmm_sample(model: GmmModel, n: int, rng_seed: Seed = None) -> Matrix:
    """
    Draw `n` points by ancestral sampling: a component by weight, then
    an isotropic Gaussian draw.

    :param model: mixture
    :type model: GmmModel
    :param n: number of points
    :type n: int
    :param rng_seed: seed (or `RandomState`)
    :type rng_seed: int, np.random.RandomState or None

    :returns: n x d matrix
    :rtype: np.ndarray

    :raises ValueError: if n < 1
    """

    if n < 1:
        raise ValueError('Number of samples must be at least 1, got {0}.'
                         .format(n))
    prng = get_random_state(rng_seed)
    components = prng.choice(model.K, size=n, p=model.weights)
    noise = prng.randn(n, model.d)
    return (model.means[components]
            + np.sqrt(model.variances[components])[:, np.newaxis]*noise)


class EmConfig(object):
    """
    Class for representing a set of configuration options for
    `gmm_fit_em`.
    """

    def __init__(self,
                 max_iters: int = 200,
                 tol: float = 1e-6,
                 var_floor: float = VAR_FLOOR,
                 rng_seed: Optional[int] = None) -> 'EmConfig':
        """
        Initialize object.

        :param max_iters: maximum number of EM iterations
        :type max_iters: int
        :param tol: stop when the log-likelihood improves by less than
                    this amount
        :type tol: float
        :param var_floor: minimum component variance
        :type var_floor: float
        :param rng_seed: seed for the k-means++ initialization
        :type rng_seed: int or None

        :raises SchemaError: if the parameters are invalid
        """

        params = dict(locals())
        del params['self']
        try:
            self.validated = Schema(
                {'max_iters': And(int, lambda x: x > 0),
                 'tol': And(Use(float), lambda x: x >= 0.0),
                 'var_floor': And(Use(float), lambda x: x > 0.0),
                 'rng_seed': Or(None, And(int, lambda x: x >= 0))}
                ).validate(params)
        except SchemaError as e:
            logerr('Invalid EM configuration: {0}'.format(e))
            raise e
        self.max_iters = self.validated['max_iters']
        self.tol = self.validated['tol']
        self.var_floor = self.validated['var_floor']
        self.rng_seed = self.validated['rng_seed']

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.validated)


def _e_step(X: Matrix,
            weights: np.ndarray,
            means: Matrix,
            variances: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Compute the total log-likelihood and the n x K responsibilities.
    """

    log_probs = _component_logpdfs(X, weights, means, variances)
    log_norm = _logsumexp(log_probs, axis=1)
    return float(np.sum(log_norm)), np.exp(log_probs - log_norm[:, np.newaxis])


def gmm_fit_em(data: Matrix,
               K: int = DEFAULT_K,
               config: Optional[EmConfig] = None) -> GmmModel:
    """
    Fit an isotropic Gaussian mixture by expectation-maximization,
    starting from k-means++ seeds.

    The log-likelihood of the training data never decreases from one
    iteration to the next; the run stops after `config.max_iters`
    iterations or when the improvement falls below `config.tol`. The
    sequence of log-likelihoods is kept in the `fit_history` attribute
    of the returned model.

    :param data: n x d matrix
    :type data: np.ndarray
    :param K: number of components
    :type K: int
    :param config: EM options (defaults to `EmConfig()`)
    :type config: EmConfig or None

    :returns: fitted mixture
    :rtype: GmmModel

    :raises ValueError: if there are fewer points than components
    """

    config = config or EmConfig()
    X = np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n, d = X.shape
    if K < 1:
        raise ValueError('K must be positive, got {0}.'.format(K))
    if n < K:
        raise ValueError('Cannot fit {0} components to {1} points.'.format(K, n))
    if not np.all(np.isfinite(X)):
        raise ValueError('Data must be finite.')

    # Initialization
    floor = config.var_floor
    means, _ = kmeans_plusplus(X, K,
                               random_state=(SEED if config.rng_seed is None
                                             else config.rng_seed))
    means = means.astype(np.float64)
    weights = np.full(K, 1.0/K)
    variances = np.full(K, max(float(np.mean(X.var(axis=0))), floor))

    history = []
    for iteration in range(config.max_iters):
        ll, resp = _e_step(X, weights, means, variances)
        history.append(ll)
        logdebug('EM iteration {0}: log-likelihood {1:.6f}'
                 .format(iteration, ll))
        if len(history) > 1 and history[-1] - history[-2] < config.tol:
            break

        # M-step
        Nk = resp.sum(axis=0)
        alive = Nk > 10*np.finfo(np.float64).tiny
        weights = Nk/Nk.sum()
        new_means = resp.T.dot(X)/np.where(alive, Nk, 1.0)[:, np.newaxis]
        means = np.where(alive[:, np.newaxis], new_means, means)
        sq = _squared_distances(X, means)
        new_variances = np.sum(resp*sq, axis=0)/(d*np.where(alive, Nk, 1.0))
        variances = np.maximum(np.where(alive, new_variances, variances), floor)
    else:
        history.append(_e_step(X, weights, means, variances)[0])

    model = GmmModel(weights/weights.sum(), means, variances, var_floor=floor)
    model.fit_history = tuple(history)
    return model
