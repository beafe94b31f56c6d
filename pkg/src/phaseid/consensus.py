"""Phase estimates from one reference (S0) and consensus over several (S1-S4).

Phases are integers 0, 1, 2 for A, B, C. Argmax ties go to the lowest phase
and are flagged on the estimate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .correlation import CorrelationTensor

logger = logging.getLogger(__name__)

SCHEMES = ("S0", "S1", "S2", "S3", "S4")
WEIGHTED = ("S2", "S3", "S4")


class ConsensusError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PhaseEstimate:
    """Estimated phase per consumer with the weights that produced it (L x 3)."""

    phases: np.ndarray
    weights: np.ndarray
    metric: str = "J1"
    scheme: str = "S0"
    references: tuple = ()
    ties: np.ndarray | None = None

    def __len__(self):
        return len(self.phases)

    @property
    def n_ties(self) -> int:
        return 0 if self.ties is None else int(np.count_nonzero(self.ties))


@dataclass(frozen=True, eq=False)
class ConsensusWeights:
    G: np.ndarray
    scheme: str


def nan_argmax(m) -> tuple[np.ndarray, np.ndarray]:
    """Row argmax with NaN treated as -inf; returns (index, tie flag)."""
    m = np.asarray(m, dtype=float)
    if m.shape[0] == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=bool)
    filled = np.where(np.isnan(m), -np.inf, m)
    dead = np.all(np.isnan(m), axis=1)
    if np.any(dead):
        raise ConsensusError(f"rows {np.flatnonzero(dead).tolist()} have no defined correlation")
    idx = np.argmax(filled, axis=1)
    best = filled[np.arange(len(idx)), idx]
    ties = (filled == best[:, None]).sum(axis=1) > 1
    return idx, ties


def estimate_naive(rho, metric: str = "J1", reference=None) -> PhaseEstimate:
    """S0: per-consumer argmax of one reference's correlation matrix."""
    rho = np.asarray(getattr(rho, "values", rho), dtype=float)
    if rho.ndim == 3:
        if rho.shape[0] != 1:
            raise ConsensusError("naive estimate takes exactly one reference")
        rho = rho[0]
    phases, ties = nan_argmax(rho)
    if ties.any():
        logger.info("S0: %d tied rows resolved to the lowest phase", ties.sum())
    refs = () if reference is None else (reference,)
    return PhaseEstimate(phases, rho, metric, "S0", refs, ties)


def per_reference_estimates(tensor: CorrelationTensor) -> list[PhaseEstimate]:
    return [estimate_naive(tensor.values[k], tensor.metric, r) for k, r in enumerate(tensor.references)]


def consensus_majority(estimates: Sequence[PhaseEstimate], tensor: CorrelationTensor | None = None) -> PhaseEstimate:
    """S1: modal phase over references; weights are vote shares.

    Ties between phases with equal votes go to the phase whose correlations,
    summed over references, are largest (needs ``tensor``); without it, or if
    that ties too, to the lowest phase. Either way the row is flagged.
    """
    if not estimates:
        raise ConsensusError("majority vote needs at least one reference")
    votes = np.stack([e.phases for e in estimates])  # M x L
    m, n = votes.shape
    counts = np.stack([(votes == p).sum(axis=0) for p in range(3)], axis=1).astype(float)
    shares = counts / m
    top = counts.max(axis=1, keepdims=True)
    tied = (counts == top).sum(axis=1) > 1
    phases = np.argmax(counts, axis=1)
    if tied.any() and tensor is not None:
        summed = np.nansum(tensor.values, axis=0)
        for w in np.flatnonzero(tied):
            cand = np.flatnonzero(counts[w] == top[w, 0])
            phases[w] = cand[np.argmax(summed[w, cand])]
    metric = estimates[0].metric
    refs = tuple(r for e in estimates for r in e.references)
    return PhaseEstimate(phases, shares, metric, "S1", refs, tied)


def consensus_weights(tensor: CorrelationTensor | np.ndarray, scheme: str) -> np.ndarray:
    """Normalised L x 3 consensus weights G for S2, S3 or S4."""
    rho = np.asarray(getattr(tensor, "values", tensor), dtype=float)
    if rho.ndim != 3 or rho.shape[0] == 0:
        raise ConsensusError("consensus needs at least one reference")
    defined = ~np.all(np.isnan(rho), axis=0)
    if scheme == "S2":
        num = np.nansum(rho, axis=0)
        # a negative signed total would flip the argmax
        den = np.abs(num.sum(axis=1))
    elif scheme == "S3":
        num = np.nansum(np.abs(rho), axis=0)
        den = num.sum(axis=1)
    elif scheme == "S4":
        num = np.fmax.reduce(np.abs(rho), axis=0)
        den = np.fmax.reduce(num, axis=1)
    else:
        raise ValueError(f"unknown weighted scheme {scheme!r}")
    if np.any(den == 0) or np.any(np.isnan(den)):
        bad = np.flatnonzero((den == 0) | np.isnan(den)).tolist()
        raise ConsensusError(f"{scheme}: zero normaliser for consumer rows {bad}")
    G = num / den[:, None]
    return np.where(defined, G, np.nan)


def consensus_weighted(tensor: CorrelationTensor, scheme: str) -> tuple[ConsensusWeights, PhaseEstimate]:
    """S2 (signed sum), S3 (absolute sum) or S4 (maximum absolute) weighting, then argmax."""
    G = consensus_weights(tensor, scheme)
    phases, ties = nan_argmax(G)
    est = PhaseEstimate(phases, G, tensor.metric, scheme, tuple(tensor.references), ties)
    return ConsensusWeights(G, scheme), est


def estimate(tensor: CorrelationTensor, scheme: str) -> PhaseEstimate:
    """Dispatch on ``scheme``; S0 uses the first reference of the tensor."""
    if scheme == "S0":
        return estimate_naive(tensor.values[:1], tensor.metric, tensor.references[0] if tensor.references else None)
    if scheme == "S1":
        return consensus_majority(per_reference_estimates(tensor), tensor)
    return consensus_weighted(tensor, scheme)[1]
