"""Synthetic measure sets, contamination, point-cloud quantization and
evaluation of computed barycenters."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .fixed import rwb_cost
from .measures import DiscreteMeasure, WeightedMeasureSet, as_points
from .ot import wasserstein_distance


def gen_gaussian_dataset(
    m,
    n,
    d,
    cluster_spread,
    rng_seed,
    n_clusters=4,
    center_scale=3.0,
    spread_dispersion=0.0,
) -> WeightedMeasureSet:
    """Measures scattered around shared cluster centers.

    Centers are drawn uniformly in ``[0, center_scale]^d``. Atom ``i`` of
    every measure sits near center ``i mod n_clusters`` with Gaussian noise
    of standard deviation ``cluster_spread * s_l``. The per-measure factor
    ``s_l`` is log-normal with log-scale ``spread_dispersion``, so some
    measures are much noisier than the rest; 0 gives ``s_l = 1``. Atom
    weights are uniform.
    """
    m, n, d = int(m), int(n), int(d)
    if min(m, n, d) < 1:
        raise InputError("m, n and d must be >= 1")
    if cluster_spread < 0 or spread_dispersion < 0:
        raise InputError("spreads must be >= 0")
    rng = np.random.default_rng(rng_seed)
    k = max(1, min(int(n_clusters), n))
    centers = rng.uniform(0.0, center_scale, size=(k, d))
    scale = np.exp(spread_dispersion * rng.standard_normal(m))
    owner = np.arange(n) % k
    measures = []
    for l in range(m):
        X = centers[owner] + cluster_spread * scale[l] * rng.standard_normal((n, d))
        measures.append(DiscreteMeasure(X, np.full(n, 1.0 / n)))
    return WeightedMeasureSet(tuple(measures))


@dataclass(frozen=True)
class ContaminationSpec:
    """Gaussian noise mass per measure plus random location shifts."""

    zeta: float
    noise_mean: float = 0.0
    noise_std: float = 1.0
    shift_count: int = 0
    shift_std: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.zeta < 1.0:
            raise InputError(f"zeta must lie in [0, 1), got {self.zeta}")
        if self.noise_std < 0 or self.shift_std < 0:
            raise InputError("standard deviations must be >= 0")
        if self.shift_count < 0:
            raise InputError("shift_count must be >= 0")


def noise_atoms(n):
    return max(1, math.ceil(n / 4))


def contaminate(dataset: WeightedMeasureSet, spec: ContaminationSpec) -> WeightedMeasureSet:
    """Mix every measure with Gaussian noise, then shift some measures.

    Measure ``mu`` with ``n`` atoms becomes ``(1 - zeta) mu + zeta eta``,
    where ``eta`` is uniform on ``ceil(n / 4)`` atoms drawn coordinatewise
    from ``N(noise_mean, noise_std^2)``. Then ``shift_count`` measures,
    chosen without replacement, are translated by a ``N(0, shift_std^2)``
    vector.
    """
    if spec.shift_count > dataset.m:
        raise InputError(f"shift_count {spec.shift_count} exceeds m={dataset.m}")
    rng = np.random.default_rng(spec.rng_seed)
    d = dataset.dim
    out = []
    for mu in dataset:
        X, w = mu.locations, mu.weights
        if spec.zeta > 0:
            k = noise_atoms(mu.n)
            noise = rng.normal(spec.noise_mean, spec.noise_std, size=(k, d))
            X = np.vstack([X, noise])
            w = np.concatenate([(1.0 - spec.zeta) * w, np.full(k, spec.zeta / k)])
        out.append((np.array(X), np.array(w)))
    if spec.shift_count:
        chosen = rng.choice(dataset.m, size=spec.shift_count, replace=False)
        for l in chosen:
            out[l] = (out[l][0] + rng.normal(0.0, spec.shift_std, size=d), out[l][1])
    measures = tuple(DiscreteMeasure.normalized(X, w) for X, w in out)
    return WeightedMeasureSet(measures, dataset.set_weights)


def _kmeans_pp(X, k, rng):
    idx = [int(rng.integers(X.shape[0]))]
    d2 = np.sum((X - X[idx[0]]) ** 2, axis=1)
    for _ in range(1, k):
        s = d2.sum()
        i = int(rng.choice(X.shape[0], p=d2 / s)) if s > 0 else int(rng.integers(X.shape[0]))
        idx.append(i)
        d2 = np.minimum(d2, np.sum((X - X[i]) ** 2, axis=1))
    return X[idx].copy()


def lloyd(X, k, rng_seed, max_iter=100):
    """k-means by Lloyd's algorithm from k-means++ seeds.

    Returns ``(centers, labels, history)`` where ``history`` lists the
    within-cluster sum of squares after every assignment step.
    """
    X = as_points(X)
    k = int(k)
    if not 1 <= k <= X.shape[0]:
        raise InputError(f"k must lie in [1, {X.shape[0]}], got {k}")
    rng = np.random.default_rng(rng_seed)
    centers = _kmeans_pp(X, k, rng)
    history, labels = [], None
    for _ in range(max_iter):
        D = np.sum((X[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new = np.argmin(D, axis=1)
        history.append(float(D[np.arange(X.shape[0]), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = X[members].mean(axis=0)
    return centers, labels, history


def quantize_pointcloud(points, k, rng_seed, max_iter=100) -> DiscreteMeasure:
    """Summarize a point cloud by ``k`` cluster centers.

    Each center's weight is the share of points assigned to it.
    """
    centers, labels, _ = lloyd(points, k, rng_seed, max_iter)
    counts = np.bincount(labels, minlength=centers.shape[0]).astype(np.float64)
    return DiscreteMeasure(centers, counts / counts.sum())


@dataclass(frozen=True)
class EvalReport:
    runtime: float | None
    wd: float
    cost: float

    def to_dict(self):
        return {"runtime": self.runtime, "wd": self.wd, "cost": self.cost}


def evaluate(
    clean: WeightedMeasureSet,
    nu: DiscreteMeasure,
    nu_ref: DiscreteMeasure,
    z=2.0,
    runtime=None,
    threads=None,
) -> EvalReport:
    """Distance of ``nu`` to a reference barycenter and its plain
    barycenter cost on the clean measures."""
    wd = wasserstein_distance(nu, nu_ref, z)
    cost = rwb_cost(clean, nu, 0.0, z, threads)
    return EvalReport(runtime, wd, cost)


REPORT_COLUMNS = ("method", "zeta", "noise_mean", "noise_std", "runtime_s", "wd", "cost")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_csv(rows) -> str:
    """CSV text with one line per row dict, columns :data:`REPORT_COLUMNS`."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in REPORT_COLUMNS])
    return buf.getvalue()
