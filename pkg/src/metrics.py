"""
Evaluation metrics for generated embeddings: nearest-neighbour cosine
distance statistics, clique-number estimates of the number of distinct
voices, correlation of conditioned and measured values, and attribute
accuracy.
"""
import logging

import numpy as np
import pandas as pd
import networkx as nx
from typing import (Any,
                    Dict,
                    List,
                    Tuple,
                    Optional,
                    Sequence)
from scipy.stats import pearsonr
from sklearn.metrics import accuracy_score
from sklearn.metrics.pairwise import cosine_distances

from src import (Vector,
                 Matrix)

logger = logging.getLogger('src.metrics')
loginfo = logger.info
logdebug = logger.debug
logwarn = logger.warning
logerr = logger.error

# Exact clique search is only attempted on small graphs
MAX_EXACT_CLIQUE_POINTS = 40


def _check_nonzero(X: Matrix, what: str) -> Matrix:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.size and np.any(np.linalg.norm(X, axis=1) == 0):
        raise ValueError('Cosine distance is undefined for zero vectors ({0}).'
                         .format(what))
    return X


def cos_distance(a: Vector, b: Vector) -> float:
    """
    Cosine distance 1 - a.b / (|a| |b|), in [0, 2].

    :raises ValueError: on a zero vector or a length mismatch
    """

    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError('Vectors have different lengths: {0} and {1}.'
                         .format(a.size, b.size))
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise ValueError('Cosine distance is undefined for zero vectors.')
    return float(np.clip(1.0 - a.dot(b)/(norm_a*norm_b), 0.0, 2.0))


def pairwise_cos_distances(A: Matrix, B: Optional[Matrix] = None) -> Matrix:
    A = _check_nonzero(A, 'first set')
    B = A if B is None else _check_nonzero(B, 'second set')
    if A.shape[1] != B.shape[1]:
        raise ValueError('Point sets have different dimensions: {0} and {1}.'
                         .format(A.shape[1], B.shape[1]))
    return np.clip(cosine_distances(A, B), 0.0, 2.0)


def nn_distance(set_a: Matrix, set_b: Matrix, exclude_self: bool = False) -> float:
    """
    Mean over the points of `set_a` of the cosine distance to the
    nearest point of `set_b`. With `exclude_self` the two sets must be
    the same and a point is never its own neighbour.

    :param set_a: n x d matrix
    :type set_a: np.ndarray
    :param set_b: m x d matrix
    :type set_b: np.ndarray
    :param exclude_self: exclude the point itself
    :type exclude_self: bool

    :returns: mean nearest-neighbour distance
    :rtype: float

    :raises ValueError: on empty sets, or with `exclude_self` when the
                        sets differ or have fewer than 2 points
    """

    A = np.atleast_2d(np.asarray(set_a, dtype=np.float64))
    B = np.atleast_2d(np.asarray(set_b, dtype=np.float64))
    if not A.size or not B.size:
        raise ValueError('Point sets must be non-empty.')
    if exclude_self:
        if A.shape != B.shape or not np.array_equal(A, B):
            raise ValueError('Self-exclusion requires comparing a set with '
                             'itself.')
        if A.shape[0] < 2:
            raise ValueError('Self-excluded nearest-neighbour distance needs at '
                             'least 2 points, got {0}.'.format(A.shape[0]))
    D = pairwise_cos_distances(A, B)
    if exclude_self:
        np.fill_diagonal(D, np.inf)
    return float(np.mean(D.min(axis=1)))


class DistanceReport(object):
    """
    Nearest-neighbour cosine distance statistics between real (s) and
    generated (g) sets. `s2t_s` compares every real embedding with its
    own reconstruction and is an approximation; it is None when no
    reconstructions are given.
    """

    def __init__(self, s2s: float, s2g: float, g2g: float,
                 s2t_s: Optional[float] = None) -> 'DistanceReport':
        for name, value in [('s2s', s2s), ('s2g', s2g), ('g2g', g2g),
                            ('s2t_s', s2t_s)]:
            if value is not None and not 0.0 <= value <= 2.0:
                raise ValueError('{0} must be in [0, 2], got {1}.'
                                 .format(name, value))
        self.s2s = s2s
        self.s2g = s2g
        self.g2g = g2g
        self.s2t_s = s2t_s

    def to_rows(self) -> List[Tuple[str, float]]:
        rows = [('s2s', self.s2s), ('s2g', self.s2g), ('g2g', self.g2g)]
        if self.s2t_s is not None:
            rows.append(('s2t_s', self.s2t_s))
        return rows

    def to_dict(self) -> Dict[str, float]:
        return dict(self.to_rows())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.to_rows(), columns=['metric', 'value'])


def distance_report(real: Matrix,
                    generated: Matrix,
                    reconstructed: Optional[Matrix] = None) -> DistanceReport:
    """
    Compute s2s, s2g, g2g and (when reconstructions of the real set are
    given) the matched real-to-reconstruction distance s2t_s.

    :param real: n x d matrix of real embeddings
    :type real: np.ndarray
    :param generated: m x d matrix of generated embeddings
    :type generated: np.ndarray
    :param reconstructed: n x d reconstructions, row-aligned with `real`
    :type reconstructed: np.ndarray or None

    :returns: report
    :rtype: DistanceReport
    """

    s2t_s = None
    if reconstructed is not None:
        R = _check_nonzero(real, 'real set')
        T = _check_nonzero(reconstructed, 'reconstructions')
        if R.shape != T.shape:
            raise ValueError('Reconstructions must be row-aligned with the real '
                             'set: {0} vs {1}.'.format(T.shape, R.shape))
        cosines = np.sum(R*T, axis=1)/(np.linalg.norm(R, axis=1)
                                       *np.linalg.norm(T, axis=1))
        s2t_s = float(np.mean(np.clip(1.0 - cosines, 0.0, 2.0)))
    return DistanceReport(nn_distance(real, real, exclude_self=True),
                          nn_distance(real, generated),
                          nn_distance(generated, generated, exclude_self=True),
                          s2t_s)


def distance_graph(points: Matrix, threshold: float) -> np.ndarray:
    """
    Boolean adjacency matrix linking points whose cosine distance is at
    least `threshold`.
    """

    if not threshold > 0:
        raise ValueError('Threshold must be positive, got {0}.'.format(threshold))
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if not points.size:
        return np.zeros((0, 0), dtype=bool)
    adjacency = pairwise_cos_distances(points) >= threshold
    np.fill_diagonal(adjacency, False)
    return adjacency


def _greedy_clique(adjacency: np.ndarray) -> int:
    candidates = np.ones(adjacency.shape[0], dtype=bool)
    size = 0
    while np.any(candidates):
        degrees = np.where(candidates,
                           adjacency[:, candidates].sum(axis=1), -1)
        vertex = int(np.argmax(degrees))
        size += 1
        candidates &= adjacency[vertex]
    return size


def clique_number(points: Matrix, threshold: float) -> int:
    """
    Greedy lower bound of the clique number of the graph that links
    points at cosine distance >= `threshold`: repeatedly add the
    candidate with the most candidate neighbours (lowest index on ties)
    and keep only its neighbours as candidates.
    The greedy estimate is not monotone in `threshold`; callers that
    need a monotone curve over thresholds should use `clique_curve`.

    :param points: n x d matrix
    :type points: np.ndarray
    :param threshold: distance threshold (positive)
    :type threshold: float

    :returns: clique size (0 for an empty set)
    :rtype: int
    """

    return _greedy_clique(distance_graph(points, threshold))


def exact_clique_number(points: Matrix, threshold: float) -> int:
    """
    Exact clique number of the same graph as `clique_number`. Only meant
    for small point sets.

    :raises ValueError: if there are too many points
    """

    adjacency = distance_graph(points, threshold)
    if adjacency.shape[0] > MAX_EXACT_CLIQUE_POINTS:
        raise ValueError('Exact clique search is limited to {0} points, got '
                         '{1}.'.format(MAX_EXACT_CLIQUE_POINTS,
                                       adjacency.shape[0]))
    if not adjacency.shape[0]:
        return 0
    graph = nx.from_numpy_array(adjacency.astype(np.int64))
    return len(nx.max_weight_clique(graph, weight=None)[0])


def clique_curve(points: Matrix, thresholds: Sequence[float]) -> List[int]:
    """
    Greedy clique estimates over a grid of thresholds, made monotone
    non-increasing in the threshold by carrying the best estimate found
    at a larger threshold down to smaller ones. Every value stays a
    lower bound of the clique number.

    :returns: estimates aligned with `thresholds`
    :rtype: list
    """

    thresholds = [float(threshold) for threshold in thresholds]
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    D = pairwise_cos_distances(points) if points.size else None
    estimates = {}
    best = 0
    for threshold in sorted(set(thresholds), reverse=True):
        if not threshold > 0:
            raise ValueError('Threshold must be positive, got {0}.'
                             .format(threshold))
        if D is None:
            estimates[threshold] = 0
            continue
        adjacency = D >= threshold
        np.fill_diagonal(adjacency, False)
        best = max(best, _greedy_clique(adjacency))
        estimates[threshold] = best
    return [estimates[threshold] for threshold in thresholds]


def snr_bin_cliques(points: Matrix,
                    values: Sequence[float],
                    bin_width: float,
                    threshold: float) -> pd.DataFrame:
    """
    Clique-number estimates of the points falling in uniform bins of a
    continuous attribute (e.g., 10 dB SNR intervals).

    :param points: n x d matrix
    :type points: np.ndarray
    :param values: attribute value of every point
    :type values: list
    :param bin_width: width of the bins
    :type bin_width: float
    :param threshold: distance threshold
    :type threshold: float

    :returns: data frame with columns bin_low, bin_high, n_items and
              clique_number (one row per non-empty bin, ascending)
    :rtype: pd.DataFrame
    """

    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size != points.shape[0]:
        raise ValueError('Got {0} points but {1} values.'
                         .format(points.shape[0], values.size))
    if not bin_width > 0:
        raise ValueError('Bin width must be positive, got {0}.'.format(bin_width))
    rows = []
    if values.size:
        bins = np.floor(values/bin_width).astype(np.int64)
        for b in np.unique(bins):
            members = bins == b
            rows.append({'bin_low': b*bin_width,
                         'bin_high': (b + 1)*bin_width,
                         'n_items': int(members.sum()),
                         'clique_number': clique_number(points[members],
                                                        threshold)})
    return pd.DataFrame(rows, columns=['bin_low', 'bin_high', 'n_items',
                                       'clique_number'])


def pearson_r(xs: Sequence[float], ys: Sequence[float]) -> float:
    """
    Sample Pearson correlation.

    :raises ValueError: on a length mismatch, fewer than 2 values or a
                        constant input
    """

    xs = np.asarray(xs, dtype=np.float64).ravel()
    ys = np.asarray(ys, dtype=np.float64).ravel()
    if xs.size != ys.size:
        raise ValueError('Inputs have different lengths: {0} and {1}.'
                         .format(xs.size, ys.size))
    if xs.size < 2:
        raise ValueError('Pearson correlation needs at least 2 values.')
    if np.all(xs == xs[0]) or np.all(ys == ys[0]):
        raise ValueError('Pearson correlation is undefined for a constant '
                         'input.')
    return float(np.clip(pearsonr(xs, ys)[0], -1.0, 1.0))


def attribute_accuracy(predicted: Sequence[Any], truth: Sequence[Any]) -> float:
    """
    Fraction of exact matches.

    :raises ValueError: on a length mismatch or empty input
    """

    predicted = list(predicted)
    truth = list(truth)
    if len(predicted) != len(truth):
        raise ValueError('Got {0} predictions but {1} true values.'
                         .format(len(predicted), len(truth)))
    if not truth:
        raise ValueError('Accuracy is undefined for empty inputs.')
    return float(accuracy_score([str(value) for value in truth],
                                [str(value) for value in predicted]))
