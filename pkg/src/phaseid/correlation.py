"""Pearson correlation of consumer voltages against three-phase reference meters.

Three inputs are supported:

* J1 - the raw voltage magnitude series;
* J2 - hour-to-hour voltage differences, restricted to the hours where the
  reference moves by more than a zone threshold ``beta`` on some phase;
* J3 - voltage magnitudes at those salient hours and the hour after each.

Undefined correlations (a constant series) are NaN throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

METRICS = ("J1", "J2", "J3")
MIN_SALIENT = 3


class InsufficientSalientError(ValueError):
    """Fewer than ``MIN_SALIENT`` salient hours: J2/J3 undefined for this reference."""


@dataclass(frozen=True, eq=False)
class ReferenceMatrix:
    """T x 3 phase voltages (A, B, C) of a three-phase meter."""

    values: np.ndarray
    node_id: int = 0
    zone: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"reference matrix must be T x 3, got {v.shape}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class ConsumerMatrix:
    """T x L voltages; column j belongs to consumer ``consumers[j]``."""

    values: np.ndarray
    consumers: tuple = ()
    zone: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError(f"consumer matrix must be T x L, got {v.shape}")
        object.__setattr__(self, "values", v)
        if not self.consumers:
            object.__setattr__(self, "consumers", tuple(range(v.shape[1])))


@dataclass(frozen=True, eq=False)
class CorrelationTensor:
    """Stacked L x 3 correlation matrices, one per usable reference (shape M x L x 3)."""

    values: np.ndarray
    metric: str = "J1"
    references: tuple = ()
    excluded: tuple = ()
    zone: int = 0

    @property
    def n_references(self) -> int:
        return self.values.shape[0]

    @property
    def n_consumers(self) -> int:
        return self.values.shape[1]


def _values(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=float)


def pearson(x, y) -> float:
    """Pearson coefficient of two equal-length series; NaN if either is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-D series of equal length")
    if x.size < 3:
        raise ValueError("pearson needs at least 3 samples")
    if np.all(x == x[0]) or np.all(y == y[0]):
        return float("nan")
    dx = x - x.mean()
    dy = y - y.mean()
    return float(np.clip((dx @ dy) / np.sqrt((dx @ dx) * (dy @ dy)), -1.0, 1.0))


def cross_pearson(a, b) -> np.ndarray:
    """Column-wise Pearson matrix: entry (i, j) = pearson(a[:, i], b[:, j])."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]} samples")
    if a.shape[0] < 3:
        raise ValueError("correlation needs at least 3 samples")
    da = a - a.mean(axis=0)
    db = b - b.mean(axis=0)
    na = np.sqrt((da * da).sum(axis=0))
    nb = np.sqrt((db * db).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = (da.T @ db) / np.outer(na, nb)
    const_a = np.all(a == a[:1], axis=0)
    const_b = np.all(b == b[:1], axis=0)
    rho[const_a, :] = np.nan
    rho[:, const_b] = np.nan
    return np.clip(rho, -1.0, 1.0)


def corr_J1(ref, cons) -> np.ndarray:
    """L x 3 correlations of each consumer series with each reference phase."""
    r, c = _values(ref), _values(cons)
    if c.shape[1] == 0:
        return np.zeros((0, 3))
    return cross_pearson(c, r)


def salient_indices(ref, beta: float) -> np.ndarray:
    """Hours t (0-based, into the T-1 differences) where some phase moves by more than ``beta``.

    Difference row t is ``V[t + 1] - V[t]``.
    """
    dv = np.diff(_values(ref), axis=0)
    return np.flatnonzero((np.abs(dv) > beta).any(axis=1))


def corr_J2(ref, cons, beta: float) -> np.ndarray:
    """Correlation of voltage differences at the reference's salient hours."""
    r, c = _values(ref), _values(cons)
    if r.shape[0] != c.shape[0]:
        raise ValueError(f"length mismatch: {r.shape[0]} vs {c.shape[0]} samples")
    idx = salient_indices(r, beta)
    if idx.size < MIN_SALIENT:
        raise InsufficientSalientError(f"{idx.size} salient hours at beta={beta:g}")
    if c.shape[1] == 0:
        return np.zeros((0, 3))
    return cross_pearson(np.diff(c, axis=0)[idx], np.diff(r, axis=0)[idx])


def augmented_indices(salient) -> np.ndarray:
    """Salient hours together with the hour after each, without duplicates."""
    s = np.asarray(salient, dtype=int)
    return np.unique(np.concatenate([s, s + 1]))


def corr_J3(ref, cons, beta: float) -> np.ndarray:
    """Correlation of voltage magnitudes on the salient hours and their successors."""
    r, c = _values(ref), _values(cons)
    if r.shape[0] != c.shape[0]:
        raise ValueError(f"length mismatch: {r.shape[0]} vs {c.shape[0]} samples")
    sal = salient_indices(r, beta)
    if sal.size < MIN_SALIENT:
        raise InsufficientSalientError(f"{sal.size} salient hours at beta={beta:g}")
    if c.shape[1] == 0:
        return np.zeros((0, 3))
    idx = augmented_indices(sal)
    return cross_pearson(c[idx], r[idx])


def correlate(metric: str, ref, cons, beta: float = 0.0) -> np.ndarray:
    if metric == "J1":
        return corr_J1(ref, cons)
    if metric == "J2":
        return corr_J2(ref, cons, beta)
    if metric == "J3":
        return corr_J3(ref, cons, beta)
    raise ValueError(f"unknown metric {metric!r}")


def correlation_tensor(refs: Sequence, cons, metric: str = "J1", beta: float = 0.0,
                       ref_ids: Sequence | None = None, zone: int = 0) -> CorrelationTensor:
    """Correlate ``cons`` against every reference; references without enough
    salient hours are dropped and listed in ``excluded``."""
    ids = list(ref_ids) if ref_ids is not None else [getattr(r, "node_id", k) for k, r in enumerate(refs)]
    mats, used, excluded = [], [], []
    n_cons = _values(cons).shape[1]
    for rid, ref in zip(ids, refs):
        try:
            mats.append(correlate(metric, ref, cons, beta))
            used.append(rid)
        except InsufficientSalientError as exc:
            logger.warning("zone %s: reference %s excluded from %s (%s)", zone, rid, metric, exc)
            excluded.append(rid)
    values = np.stack(mats) if mats else np.zeros((0, n_cons, 3))
    return CorrelationTensor(values, metric, tuple(used), tuple(excluded), zone)
