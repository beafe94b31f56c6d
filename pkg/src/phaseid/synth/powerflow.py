"""Three-phase unbalanced backward-forward sweep for radial feeders.

Voltages are complex phase-to-neutral phasors in pu. Loads are constant
power. All routines accept a leading batch axis so a whole time series is
swept at once; every batch member converges independently of the others.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..network import NetworkModel, phase_impedance, tree_order

logger = logging.getLogger(__name__)

TOLERANCE = 1e-8
MAX_ITER = 100
COLLAPSE_PU = 0.5
_ROTATION = np.exp(-2j * np.pi / 3 * np.arange(3))


class PowerFlowError(RuntimeError):
    """Sweep failed. ``index`` is the offending batch (time) index, if any."""

    def __init__(self, message: str, index: int | None = None, mismatch: float | None = None):
        super().__init__(message if index is None else f"t={index}: {message}")
        self.index = index
        self.mismatch = mismatch


class NonConvergenceError(PowerFlowError):
    pass


class VoltageCollapseError(PowerFlowError):
    pass


@dataclass(frozen=True)
class SweepStructure:
    """Precomputed radial ordering and phase impedances for one neutral mode."""

    order: tuple[int, ...]
    parent: np.ndarray
    z: np.ndarray
    slack: int
    n_buses: int

    @classmethod
    def build(cls, net: NetworkModel, neutral_mode: str = "eq1") -> "SweepStructure":
        order, parent, feeder = tree_order(net)
        n = net.n_buses
        par = np.full(n, -1)
        z = np.zeros((n, 3, 3), dtype=complex)
        for v, u in parent.items():
            par[v] = u
            z[v] = phase_impedance(net.branches[feeder[v]], neutral_mode)
        return cls(tuple(order), par, z, net.slack - 1, n)


def slack_voltage(magnitude: float = 1.0) -> np.ndarray:
    return magnitude * _ROTATION


def solve_power_flow(net: NetworkModel | SweepStructure, s_load, neutral_mode: str = "eq1",
                     v_slack: float = 1.0, tol: float = TOLERANCE, max_iter: int = MAX_ITER,
                     return_currents: bool = False):
    """Nodal phase voltages for constant-power loads.

    ``s_load`` has shape (..., N, 3): complex power drawn per bus and phase in
    pu (positive = consumption). Returns complex voltages of the same shape,
    and the branch current feeding each bus when ``return_currents`` is set
    (zero for the slack).
    """
    st = net if isinstance(net, SweepStructure) else SweepStructure.build(net, neutral_mode)
    s = np.asarray(s_load, dtype=complex)
    if s.shape[-2:] != (st.n_buses, 3):
        raise ValueError(f"load array must end with ({st.n_buses}, 3), got {s.shape}")
    batch = s.shape[:-2]
    s = s.reshape((-1, st.n_buses, 3))
    v0 = slack_voltage(v_slack)
    v = np.broadcast_to(v0, s.shape).copy()
    downstream = st.order[:0:-1]
    forward = st.order[1:]
    mismatch = np.inf
    for it in range(1, max_iter + 1):
        j = np.conj(s / v)
        for b in downstream:
            j[:, st.parent[b]] += j[:, b]
        v_new = np.empty_like(v)
        v_new[:, st.slack] = v0
        for b in forward:
            v_new[:, b] = v_new[:, st.parent[b]] - j[:, b] @ st.z[b].T
        delta = np.abs(v_new - v).max(axis=(1, 2))
        v = v_new
        mismatch = delta.max()
        low = np.abs(v).min(axis=(1, 2))
        if np.any(low < COLLAPSE_PU) or not np.all(np.isfinite(low)):
            bad = int(np.argmax(~(low >= COLLAPSE_PU)))
            raise VoltageCollapseError(f"voltage collapse (|V| = {low[bad]:.4f} pu)", bad if batch else None)
        if mismatch < tol:
            break
    else:
        bad = int(np.argmax(delta))
        raise NonConvergenceError(
            f"no convergence after {max_iter} iterations (worst mismatch {mismatch:.3e} pu)",
            bad if batch else None, float(mismatch),
        )
    logger.debug("sweep converged in %d iterations (mismatch %.2e)", it, mismatch)
    v = v.reshape(batch + (st.n_buses, 3))
    if not return_currents:
        return v
    j = np.conj(s / v.reshape(s.shape))
    for b in downstream:
        j[:, st.parent[b]] += j[:, b]
    j[:, st.slack] = 0
    return v, j.reshape(batch + (st.n_buses, 3))


def power_balance(net: NetworkModel, s_load, v, neutral_mode: str = "eq1") -> np.ndarray:
    """Slack injection minus (total load + series losses), per batch member.

    Uses the converged voltages only: branch currents are rebuilt from the
    load currents and losses are the voltage drop across each branch times the
    conjugate current.
    """
    st = SweepStructure.build(net, neutral_mode)
    s = np.asarray(s_load, dtype=complex).reshape((-1, st.n_buses, 3))
    v = np.asarray(v).reshape(s.shape)
    j = np.conj(s / v)
    for b in st.order[:0:-1]:
        j[:, st.parent[b]] += j[:, b]
    injection = (v[:, st.slack] * np.conj(j[:, st.slack])).sum(axis=1)
    losses = np.zeros(len(s), dtype=complex)
    for b in st.order[1:]:
        drop = v[:, st.parent[b]] - v[:, b]
        losses += (drop * np.conj(j[:, b])).sum(axis=1)
    return injection - (s.sum(axis=(1, 2)) + losses)
