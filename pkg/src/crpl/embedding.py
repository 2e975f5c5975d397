"""Vector-space primitives shared by every other module.

All arithmetic is done in float64 regardless of how embeddings are stored
on disk (float32); downstream finite-difference gradient checks need the
extra precision. Visual embeddings come in two flavors: the raw,
pre-normalization vector ``z_pre`` and its unit-norm projection
``z = z_pre / ||z_pre||``. Both are kept because centroid-distance
weighting operates on raw vectors while all similarity scoring operates
on the unit sphere.

Everything here is a pure function over immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyInput, ZeroVector

ZERO_NORM_TOL = 1e-12
UNIT_NORM_TOL = 1e-9


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Project a vector (or each row of a matrix) onto the unit sphere.

    Args:
        v: array of shape (d,) or (n, d).

    Returns:
        float64 array of the same shape with unit L2 norm along the last
        axis.

    Raises:
        ZeroVector: if any norm is <= 1e-12.
    """
    v = np.asarray(v, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms <= ZERO_NORM_TOL):
        raise ZeroVector("cannot normalize a vector with norm <= 1e-12")
    return v / norms


def is_unit(v: np.ndarray, tol: float = UNIT_NORM_TOL) -> bool:
    """True when every row of ``v`` has unit norm within ``tol``."""
    norms = np.linalg.norm(np.asarray(v, dtype=np.float64), axis=-1)
    return bool(np.all(np.abs(norms - 1.0) <= tol))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1].

    The clamp protects downstream code from rounding drift just outside
    the interval.

    Raises:
        DimensionMismatch: when the vectors differ in length.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape {a.shape} vs {b.shape}")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def tempered_softmax(logits: np.ndarray, gamma: float) -> np.ndarray:
    """Softmax of ``logits / gamma``, computed in max-shifted form.

    The max shift keeps ``exp`` overflow-safe for small temperatures
    (gamma = 0.01 scales cosine logits by 100). Order of the logits is
    preserved: argmax of the output equals argmax of the input for any
    gamma > 0.

    Raises:
        EmptyInput: when ``logits`` is empty.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise EmptyInput("tempered_softmax over empty logits")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    scaled = logits / gamma
    scaled = scaled - np.max(scaled, axis=-1, keepdims=True)
    e = np.exp(scaled)
    return e / np.sum(e, axis=-1, keepdims=True)


@dataclass(frozen=True)
class DomainDataset:
    """Frozen embeddings for one domain.

    ``raw`` holds pre-normalization vectors, ``unit`` their unit-norm
    projections. ``labels`` is present iff the domain is a labeled
    source; the target domain carries none so the training path cannot
    see them.
    """

    domain_id: str
    raw: np.ndarray                      # (n, d) float64
    unit: np.ndarray = field(default=None)  # derived when omitted
    labels: np.ndarray | None = None     # (n,) int, sources only

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=np.float64)
        object.__setattr__(self, "raw", raw)
        if raw.ndim != 2:
            raise DimensionMismatch("raw embeddings must be a (n, d) matrix")
        if not np.all(np.isfinite(raw)):
            raise ValueError(f"domain {self.domain_id!r}: non-finite raw embedding")
        unit = self.unit
        if unit is None:
            unit = l2_normalize(raw)
        else:
            unit = np.asarray(unit, dtype=np.float64)
            if unit.shape != raw.shape:
                raise DimensionMismatch("raw and unit must have equal shape")
            if not is_unit(unit):
                raise ValueError("unit embeddings drifted off the unit sphere")
        object.__setattr__(self, "unit", unit)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (raw.shape[0],):
                raise DimensionMismatch("labels must align with embeddings")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.raw.shape[0]

    @property
    def dim(self) -> int:
        return self.raw.shape[1]

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None


@dataclass(frozen=True)
class CentroidTable:
    """Per-(domain, class) means of raw embeddings.

    ``centroids[i, k]`` is the arithmetic mean of domain i's raw vectors
    with label k; ``present[i, k]`` is False when domain i has no sample
    of class k (the cell is then NaN and must not be read).
    """

    centroids: np.ndarray  # (n_domains, K, d) float64
    present: np.ndarray    # (n_domains, K) bool

    @property
    def n_domains(self) -> int:
        return self.centroids.shape[0]

    @property
    def n_classes(self) -> int:
        return self.centroids.shape[1]


def compute_centroids(sources: list[DomainDataset], n_classes: int) -> CentroidTable:
    """Mean raw embedding per (source domain, class).

    Means are taken over pre-normalization vectors. Classes absent from
    a domain are flagged, not an error.

    Args:
        sources: labeled source datasets.
        n_classes: number of classes K; every label must be < K.
    """
    if not sources:
        raise EmptyInput("compute_centroids needs at least one source")
    dim = sources[0].dim
    cents = np.full((len(sources), n_classes, dim), np.nan, dtype=np.float64)
    present = np.zeros((len(sources), n_classes), dtype=bool)
    for i, ds in enumerate(sources):
        if not ds.is_labeled:
            raise ValueError(f"domain {ds.domain_id!r} is unlabeled")
        if ds.dim != dim:
            raise DimensionMismatch("all sources must share one embedding dim")
        if np.any(ds.labels >= n_classes) or np.any(ds.labels < 0):
            raise ValueError(f"domain {ds.domain_id!r}: label out of range")
        for k in range(n_classes):
            mask = ds.labels == k
            if np.any(mask):
                cents[i, k] = ds.raw[mask].mean(axis=0)
                present[i, k] = True
    return CentroidTable(centroids=cents, present=present)
