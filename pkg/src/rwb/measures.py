"""Discrete measures, weighted measure collections and ground costs.

Points are stored as rows of a ``(n, d)`` float64 array. Every container
here is immutable after construction: arrays are copied and flagged
read-only, so instances can be shared freely between workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, ParseError

WEIGHT_SUM_TOL = 1e-9

Metric = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


def as_points(points, d=None):
    """Coerce ``points`` to a finite ``(n, d)`` float64 array.

    A 1-D input is read as ``n`` points on the line.
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InputError(f"points must be a 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("point coordinates must be finite")
    if d is not None and arr.shape[1] != d:
        raise InputError(f"dimension mismatch: expected d={d}, got d={arr.shape[1]}")
    return arr


def euclidean(X, Y):
    """Pairwise Euclidean distances between the rows of ``X`` and ``Y``."""
    diff = X[:, None, :] - Y[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


@dataclass(frozen=True)
class CostMatrix:
    """Ground cost ``entries[i, j] = dist(x_i, y_j) ** z``."""

    entries: np.ndarray
    z: float

    def __post_init__(self):
        object.__setattr__(self, "entries", _frozen(self.entries))

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    @property
    def shape(self):
        return self.entries.shape


def build_cost_matrix(X, Y, z=2.0, metric: Metric = euclidean) -> CostMatrix:
    """Cost matrix between two point sets.

    Parameters
    ----------
    X : array-like, shape (n, d)
    Y : array-like, shape (n', d)
    z : float
        Exponent applied to the ground distance, ``z >= 1``.
    metric : callable, optional
        Pairwise distance function; Euclidean by default.
    """
    if not z >= 1:
        raise InputError(f"z must be >= 1, got {z}")
    X = as_points(X)
    Y = as_points(Y, d=X.shape[1])
    D = metric(X, Y)
    if z == 1:
        C = D
    elif z == 2:
        C = D * D
    else:
        C = D**z
    return CostMatrix(C, float(z))


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finite probability measure ``sum_i weights[i] * delta(locations[i])``."""

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        loc = as_points(self.locations)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if loc.shape[0] == 0:
            raise InputError("a measure needs at least one atom")
        if w.shape[0] != loc.shape[0]:
            raise InputError(
                f"{loc.shape[0]} locations but {w.shape[0]} weights"
            )
        if not np.all(np.isfinite(w)):
            raise InputError("weights must be finite")
        if np.any(w < 0):
            raise InputError("weights must be nonnegative")
        total = math.fsum(w)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise InputError(f"weights sum to {total!r}, expected 1")
        object.__setattr__(self, "locations", _frozen(loc))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def normalized(cls, locations, weights):
        """Build a measure after rescaling ``weights`` to unit mass."""
        w = np.asarray(weights, dtype=np.float64)
        s = w.sum()
        if not s > 0:
            raise InputError("cannot normalize weights with nonpositive total")
        return cls(locations, w / s)

    @classmethod
    def uniform(cls, locations):
        loc = as_points(locations)
        return cls(loc, np.full(loc.shape[0], 1.0 / loc.shape[0]))

    @classmethod
    def dirac(cls, point):
        return cls(np.atleast_2d(np.asarray(point, dtype=np.float64)), [1.0])

    @property
    def n(self):
        return self.locations.shape[0]

    @property
    def dim(self):
        return self.locations.shape[1]

    def with_weights(self, weights):
        return DiscreteMeasure(self.locations, weights)

    def with_locations(self, locations):
        return DiscreteMeasure(locations, self.weights)

    def to_dict(self):
        return {"points": self.locations.tolist(), "weights": self.weights.tolist()}

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return np.array_equal(self.locations, other.locations) and np.array_equal(
            self.weights, other.weights
        )

    def __hash__(self):
        return hash((self.locations.tobytes(), self.weights.tobytes()))


@dataclass(frozen=True)
class WeightedMeasureSet:
    """Collection of measures with positive set weights (the input family,
    or a coreset of it)."""

    measures: tuple
    set_weights: np.ndarray = field(default=None)

    def __post_init__(self):
        measures = tuple(self.measures)
        if not measures:
            raise InputError("a measure set needs at least one measure")
        for mu in measures:
            if not isinstance(mu, DiscreteMeasure):
                raise InputError("every element must be a DiscreteMeasure")
        d = measures[0].dim
        if any(mu.dim != d for mu in measures):
            raise InputError("all measures must share the same dimension")
        if self.set_weights is None:
            w = np.ones(len(measures))
        else:
            w = np.asarray(self.set_weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != len(measures):
            raise InputError(
                f"{len(measures)} measures but {w.shape[0]} set weights"
            )
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InputError("set weights must be finite and > 0")
        object.__setattr__(self, "measures", measures)
        object.__setattr__(self, "set_weights", _frozen(w))

    def __len__(self):
        return len(self.measures)

    def __iter__(self):
        return iter(self.measures)

    def __getitem__(self, i):
        return self.measures[i]

    @property
    def m(self):
        return len(self.measures)

    @property
    def dim(self):
        return self.measures[0].dim

    @property
    def total_weight(self):
        return float(math.fsum(self.set_weights))

    def subset(self, indices, weights=None):
        idx = list(indices)
        w = self.set_weights[idx] if weights is None else weights
        return WeightedMeasureSet(tuple(self.measures[i] for i in idx), w)

    def to_dict(self):
        return {
            "measures": [mu.to_dict() for mu in self.measures],
            "set_weights": self.set_weights.tolist(),
        }


# ---------------------------------------------------------------------------
# JSON I/O
# ---------------------------------------------------------------------------


def _reject_constant(name):
    raise ValueError(f"non-finite literal {name} is not allowed")


def _read_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: cannot read file ({exc})") from exc
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{path}:{exc.lineno}:{exc.colno}: malformed JSON ({exc.msg})"
        ) from exc
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def measure_from_dict(obj, where="measure", normalize=False):
    if not isinstance(obj, dict) or "points" not in obj or "weights" not in obj:
        raise ParseError(f"{where}: expected an object with 'points' and 'weights'")
    try:
        if normalize:
            return DiscreteMeasure.normalized(obj["points"], obj["weights"])
        return DiscreteMeasure(obj["points"], obj["weights"])
    except (InputError, TypeError, ValueError) as exc:
        raise ParseError(f"{where}: {exc}") from exc


def dataset_from_dict(obj, where="dataset", normalize=False):
    if not isinstance(obj, dict) or "measures" not in obj:
        raise ParseError(f"{where}: expected an object with 'measures'")
    measures = [
        measure_from_dict(m, f"{where}: measures[{i}]", normalize)
        for i, m in enumerate(obj["measures"])
    ]
    try:
        return WeightedMeasureSet(tuple(measures), obj.get("set_weights"))
    except InputError as exc:
        raise ParseError(f"{where}: {exc}") from exc


def load_measure(path, normalize=False) -> DiscreteMeasure:
    """Read a measure file ``{"points": [[...], ...], "weights": [...]}``.

    Weights must already sum to one within 1e-9 unless ``normalize`` is set.
    """
    return measure_from_dict(_read_json(path), str(path), normalize)


def save_measure(measure: DiscreteMeasure, path):
    Path(path).write_text(json.dumps(measure.to_dict()))


def load_dataset(path, normalize=False) -> WeightedMeasureSet:
    """Read ``{"measures": [...], "set_weights": [...]}``; set weights
    default to ones when absent."""
    return dataset_from_dict(_read_json(path), str(path), normalize)


def save_dataset(dataset: WeightedMeasureSet, path, extra=None):
    obj = dataset.to_dict()
    if extra:
        obj.update(extra)
    Path(path).write_text(json.dumps(obj))


def load_json(path):
    return _read_json(path)


def stack_supports(measures: Sequence[DiscreteMeasure]):
    """Pad a list of measures into dense arrays.

    Returns ``(X, A)`` with ``X`` of shape (m, n_max, d) and ``A`` of shape
    (m, n_max); padded atoms get weight 0 and copy the first location.
    """
    n_max = max(mu.n for mu in measures)
    d = measures[0].dim
    X = np.empty((len(measures), n_max, d))
    A = np.zeros((len(measures), n_max))
    for l, mu in enumerate(measures):
        X[l, : mu.n] = mu.locations
        X[l, mu.n :] = mu.locations[0]
        A[l, : mu.n] = mu.weights
    return X, A
