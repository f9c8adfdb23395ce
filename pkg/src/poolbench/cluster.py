"""Standardize, PCA-project and K-means cluster station feature vectors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

MAX_ITER = 300
DEFAULT_K_CAP = 200


@dataclass(frozen=True)
class Standardized:
    z: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    constant: np.ndarray  # bool per column


def standardize(features) -> Standardized:
    """Column z-scores with population sd; constant columns become zeros and are flagged."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("standardize needs a 2-D matrix with at least 2 rows")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature value")
    means = X.mean(axis=0)
    sds = X.std(axis=0)
    # tolerate round-off in columns that are constant up to the last ulp
    constant = sds <= 1e-12 * np.maximum(np.abs(means), 1.0)
    safe = np.where(constant, 1.0, sds)
    z = (X - means) / safe
    z[:, constant] = 0.0
    return Standardized(z, means, sds, constant)


@dataclass(frozen=True)
class PcaBasis:
    means: np.ndarray
    sds: np.ndarray
    components: np.ndarray  # (n_features_in, n_features) rows are orthonormal directions
    explained_variance_ratio: np.ndarray
    n_components: int
    threshold: float

    def transform(self, z: np.ndarray, n: int | None = None) -> np.ndarray:
        n = self.n_components if n is None else n
        return np.asarray(z) @ self.components[:n].T

    def inverse_transform(self, scores: np.ndarray) -> np.ndarray:
        n = scores.shape[1]
        return scores @ self.components[:n]


def fit_pca(z, threshold: float = 0.9, means=None, sds=None) -> PcaBasis:
    """Principal axes of ``z`` via SVD of the centred matrix.

    ``n_components`` is the smallest count whose cumulative explained
    variance ratio reaches ``threshold``. Each component is signed so its
    largest-magnitude entry is positive.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise DataError("fit_pca needs at least 2 rows")
    if not np.all(np.isfinite(z)):
        raise DataError("non-finite input to PCA")
    if not 0.0 < threshold <= 1.0:
        raise ConfigError(f"threshold must lie in (0, 1], got {threshold}")
    zc = z - z.mean(axis=0)
    _, s, vt = np.linalg.svd(zc, full_matrices=True)
    var = np.zeros(vt.shape[0])
    var[: len(s)] = s**2
    total = var.sum()
    if total == 0:
        ratio = np.zeros_like(var)
        ratio[0] = 1.0
    else:
        ratio = var / total
    idx = np.argmax(np.abs(vt), axis=1)
    signs = np.sign(vt[np.arange(len(vt)), idx])
    vt = vt * np.where(signs == 0, 1.0, signs)[:, None]
    cum = np.cumsum(ratio)
    # cumulative sums can land a few ulps short of an exact threshold
    n = int(np.searchsorted(cum, threshold - 1e-12, side="left")) + 1
    n = min(n, len(ratio))
    return PcaBasis(
        means=np.zeros(z.shape[1]) if means is None else np.asarray(means),
        sds=np.ones(z.shape[1]) if sds is None else np.asarray(sds),
        components=vt,
        explained_variance_ratio=ratio,
        n_components=n,
        threshold=threshold,
    )


# -- k-means -----------------------------------------------------------------

@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    J: float
    history: list[float] = field(default_factory=list)
    n_iter: int = 0


def _sqdist(X, C):
    d = (X**2).sum(1)[:, None] - 2 * X @ C.T + (C**2).sum(1)[None, :]
    return np.maximum(d, 0.0)


def wss(X, labels, centroids=None) -> float:
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    total = 0.0
    for c in np.unique(labels):
        pts = X[labels == c]
        mu = pts.mean(axis=0) if centroids is None else centroids[c]
        total += float(((pts - mu) ** 2).sum())
    return total


def n_distinct(X) -> int:
    return len(np.unique(np.asarray(X), axis=0))


def _kmeanspp(X, k, rng):
    n = len(X)
    C = np.empty((k, X.shape[1]))
    C[0] = X[rng.integers(n)]
    d2 = ((X - C[0]) ** 2).sum(1)
    for j in range(1, k):
        tot = d2.sum()
        if tot <= 0:
            i = int(rng.integers(n))
        else:
            i = int(np.searchsorted(np.cumsum(d2), rng.random() * tot, side="right"))
            i = min(i, n - 1)
        C[j] = X[i]
        d2 = np.minimum(d2, ((X - C[j]) ** 2).sum(1))
    return C


def lloyd(X, C, max_iter: int = MAX_ITER) -> KMeansResult:
    """Lloyd iterations from initial centroids ``C`` until the assignment is fixed.

    A cluster that loses all its points is re-seeded with the point farthest
    from its assigned centroid (taken from a cluster with points to spare),
    which cannot increase J.
    """
    X = np.asarray(X, dtype=np.float64)
    C = np.array(C, dtype=np.float64)
    k = len(C)
    labels = None
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d = _sqdist(X, C)
        new = np.argmin(d, axis=1)
        for c in range(k):
            if not np.any(new == c):
                own = d[np.arange(len(X)), new]
                # steal the worst-served point from a cluster that can spare it
                counts = np.bincount(new, minlength=k)
                order = np.argsort(-own, kind="stable")
                for i in order:
                    if counts[new[i]] > 1:
                        counts[new[i]] -= 1
                        new[i] = c
                        break
        for c in range(k):
            C[c] = X[new == c].mean(axis=0)
        history.append(wss(X, new, C))
        if labels is not None and np.array_equal(new, labels):
            labels = new
            break
        labels = new
    return KMeansResult(labels, C, history[-1], history, it)


def kmeans(points, k: int, seed: int = 0, n_restarts: int = 10, init=None) -> KMeansResult:
    """Best-of-restarts K-means with k-means++ seeding.

    ``init`` adds one extra run started from the given centroids.
    """
    X = np.asarray(points, dtype=np.float64)
    if k < 1:
        raise ConfigError("k must be positive")
    if k > n_distinct(X):
        raise DataError(f"k={k} exceeds the number of distinct points ({n_distinct(X)})")
    if n_restarts < 1:
        raise ConfigError("n_restarts must be positive")
    best = None
    starts = []
    if init is not None:
        starts.append(np.asarray(init, dtype=np.float64))
    for r in range(n_restarts):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k, r]))
        starts.append(_kmeanspp(X, k, rng))
    for C0 in starts:
        res = lloyd(X, C0)
        if best is None or res.J < best.J:
            best = res
    return best


def silhouette(points, labels) -> float:
    """Mean silhouette; points in singleton clusters score 0, and 0/0 counts as 0."""
    X = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise DataError("silhouette needs at least 2 clusters")
    D = cdist(X, X)
    s = np.zeros(len(X))
    member = [labels == c for c in uniq]
    sizes = np.array([m.sum() for m in member])
    sums = np.stack([D[:, m].sum(1) for m in member], axis=1)
    pos = np.searchsorted(uniq, labels)
    for i in range(len(X)):
        own = pos[i]
        if sizes[own] == 1:
            continue
        a = sums[i, own] / (sizes[own] - 1)
        other = np.delete(sums[i] / sizes, own)
        b = other.min()
        m = max(a, b)
        s[i] = 0.0 if m == 0 else (b - a) / m
    return float(s.mean())


@dataclass(frozen=True)
class Knee:
    k: int
    linear: bool  # True when the curve has no interior knee


def find_knee(ks, J) -> Knee:
    """Kneedle on a decreasing convex curve: argmax of (1 - x) - y after scaling both to [0, 1]."""
    ks = np.asarray(ks)
    J = np.asarray(J, dtype=np.float64)
    if len(ks) < 3 or len(ks) != len(J):
        raise DataError("knee detection needs at least 3 points")
    if np.any(np.diff(ks) <= 0):
        raise DataError("k grid must be strictly increasing")
    if np.any(np.diff(J) > 1e-9 * max(1.0, abs(J[0]))):
        raise DataError("WSS curve must be non-increasing")
    x = (ks - ks[0]) / (ks[-1] - ks[0])
    span = J[0] - J[-1]
    if span <= 0:
        return Knee(int(ks[0]), True)
    y = (J - J[-1]) / span
    d = (1.0 - x) - y
    i = int(np.argmax(d))
    if d[i] <= 1e-9:
        return Knee(int(ks[0]), True)
    return Knee(int(ks[i]), False)


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    labels: pd.Series  # station -> cluster id
    centroids: np.ndarray
    wss_curve: dict[int, float]
    silhouette_curve: dict[int, float]
    knee_k: int
    basis: PcaBasis
    warnings: tuple[str, ...] = ()

    def diagnostics(self) -> pd.DataFrame:
        ks = sorted(self.wss_curve)
        return pd.DataFrame(
            {"k": ks, "wss": [self.wss_curve[k] for k in ks], "silhouette": [self.silhouette_curve[k] for k in ks]}
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"station_id": self.labels.index, "cluster": self.labels.to_numpy()})


def _relabel(labels, centroids):
    # canonical ids: clusters numbered by first appearance in station order
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    old = np.unique(labels)[order]
    mapping = np.empty(len(centroids), dtype=np.int64)
    mapping[old] = np.arange(len(old))
    return mapping[labels], centroids[old]


def cluster_stations(
    features: pd.DataFrame,
    threshold: float = 0.9,
    k_min: int = 2,
    k_max: int | None = None,
    seed: int = 0,
    n_restarts: int = 10,
    k_cap: int = DEFAULT_K_CAP,
) -> ClusterAssignment:
    """Standardize -> PCA -> K-means over a k grid -> knee of the WSS curve.

    Each k after the first also tries a warm start from the previous solution
    plus the point farthest from it, so the stored WSS curve is non-increasing.
    """
    st = standardize(features.to_numpy(dtype=np.float64))
    basis = fit_pca(st.z, threshold, st.means, st.sds)
    P = basis.transform(st.z)
    n_unique = n_distinct(P)
    if n_unique < 3:
        raise DataError("need >= 3 distinct stations to cluster")
    top = n_unique - 1 if k_max is None else k_max
    if top > n_unique - 1:
        raise ConfigError(f"k_max={top} exceeds distinct stations - 1 ({n_unique - 1})")
    top = min(top, k_cap)
    if k_min < 2 or k_min > top:
        raise ConfigError(f"empty k grid [{k_min}, {top}]")
    ks = list(range(k_min, top + 1))
    results, wcurve, scurve = {}, {}, {}
    prev = None
    for k in ks:
        init = None
        if prev is not None:
            far = np.argmax(_sqdist(P, prev.centroids).min(axis=1))
            init = np.vstack([prev.centroids, P[far]])
        res = kmeans(P, k, seed=seed, n_restarts=n_restarts, init=init)
        results[k] = res
        wcurve[k] = res.J
        scurve[k] = silhouette(P, res.labels)
        prev = res
    warnings = []
    if len(ks) >= 3:
        knee = find_knee(ks, [wcurve[k] for k in ks])
        if knee.linear:
            warnings.append("WSS curve has no interior knee; smallest k chosen")
        knee_k = knee.k
    else:
        knee_k = ks[0]
        warnings.append(f"k grid has {len(ks)} point(s); smallest k chosen")
    sil_k = max(ks, key=lambda k: (scurve[k], -k))
    if sil_k > 2 * knee_k or knee_k > 2 * sil_k:
        warnings.append(f"silhouette prefers k={sil_k}, knee gives k={knee_k}")
    for w in warnings:
        log.warning(w)
    best = results[knee_k]
    labels, cents = _relabel(best.labels, best.centroids)
    return ClusterAssignment(
        k=knee_k,
        labels=pd.Series(labels, index=features.index, name="cluster"),
        centroids=cents,
        wss_curve=wcurve,
        silhouette_curve=scurve,
        knee_k=knee_k,
        basis=basis,
        warnings=tuple(warnings),
    )
