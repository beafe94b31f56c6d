"""Voltage time series panels: simulation, metering noise and file IO."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..network import NetworkModel
from .mapping import PhaseMapping
from .powerflow import PowerFlowError, SweepStructure, solve_power_flow
from .profiles import LoadSeries

_MAGIC = b"VPANEL"
_VERSION = 1
_HEADER = struct.Struct("<6sHII")


@dataclass(frozen=True, eq=False)
class VoltagePanel:
    """Voltage magnitudes in pu, shape (T, N, 3); bus ``k+1`` is column ``k``."""

    magnitudes: np.ndarray
    angles: np.ndarray | None = None

    @property
    def T(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def n_buses(self) -> int:
        return self.magnitudes.shape[1]

    def bus(self, bus_id: int) -> np.ndarray:
        """T x 3 matrix of one bus."""
        return self.magnitudes[:, bus_id - 1, :]

    def __eq__(self, other):
        if not isinstance(other, VoltagePanel):
            return NotImplemented
        return np.array_equal(self.magnitudes, other.magnitudes)

    __hash__ = None


def nodal_loads(net: NetworkModel, mapping: PhaseMapping, loads: LoadSeries) -> np.ndarray:
    """Complex per-phase bus loads, shape (T, N, 3)."""
    s = np.zeros((loads.T, net.n_buses, 3), dtype=complex)
    sd = loads.p + 1j * loads.q
    for k, d in enumerate(net.devices):
        if d.single_phase:
            s[:, d.bus_id - 1, mapping.phases[k]] += sd[k]
        else:
            s[:, d.bus_id - 1, :] += sd[k][:, None] / 3.0
    return s


def simulate_timeseries(net: NetworkModel, mapping: PhaseMapping, loads: LoadSeries,
                        neutral_mode: str = "eq1", v_slack: float = 1.0,
                        keep_angles: bool = False) -> VoltagePanel:
    """One power flow per hour; all hours are swept as a single batch."""
    s = nodal_loads(net, mapping, loads)
    st = SweepStructure.build(net, neutral_mode)
    v = solve_power_flow(st, s, v_slack=v_slack)
    mags = np.abs(v)
    if mags.min() <= 0.5 or mags.max() >= 1.5:
        t = int(np.argmax((mags <= 0.5).any(axis=(1, 2)) | (mags >= 1.5).any(axis=(1, 2))))
        raise PowerFlowError("voltage magnitude outside the (0.5, 1.5) pu sanity band", t)
    return VoltagePanel(mags, np.angle(v) if keep_angles else None)


def multiplicative_noise(shape, tau: float, rng: np.random.Generator) -> np.ndarray:
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if tau == 0:
        return np.ones(shape)
    return rng.normal(1.0, tau / 3.0, size=shape)


def inject_noise(values, tau: float, seed):
    """Multiply every value by an independent Norm(1, tau/3) draw.

    ``tau`` is the metering tolerance met by 99.7 % of readings. Accepts a
    ``VoltagePanel`` or any array; ``seed`` may be an int, a ``SeedSequence``
    or a ``Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if isinstance(values, VoltagePanel):
        if tau == 0:
            return values
        mags = values.magnitudes * multiplicative_noise(values.magnitudes.shape, tau, rng)
        return VoltagePanel(mags, values.angles)
    arr = np.asarray(values, dtype=float)
    if tau == 0:
        return arr.copy()
    return arr * multiplicative_noise(arr.shape, tau, rng)


def write_panel_csv(panel: VoltagePanel, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "bus", "phase", "v_pu"])
        for t in range(panel.T):
            for b in range(panel.n_buses):
                for p, name in enumerate("ABC"):
                    w.writerow([t + 1, b + 1, name, repr(float(panel.magnitudes[t, b, p]))])


def read_panel_csv(path) -> VoltagePanel:
    recs = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            recs.append((int(rec["t"]), int(rec["bus"]), "ABC".index(rec["phase"]), float(rec["v_pu"])))
    T = max(r[0] for r in recs)
    N = max(r[1] for r in recs)
    mags = np.full((T, N, 3), np.nan)
    for t, b, p, v in recs:
        mags[t - 1, b - 1, p] = v
    if np.isnan(mags).any():
        raise ValueError(f"{path}: panel CSV is missing entries")
    return VoltagePanel(mags)


def write_panel_binary(panel: VoltagePanel, path) -> None:
    """Columnar little-endian file: header, then one float64 column per (bus, phase)."""
    T, N, _ = panel.magnitudes.shape
    cols = np.ascontiguousarray(panel.magnitudes.transpose(1, 2, 0), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, T, N))
        fh.write(cols.tobytes())


def read_panel_binary(path) -> VoltagePanel:
    with open(path, "rb") as fh:
        magic, version, T, N = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a voltage panel file")
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported panel version {version}")
        cols = np.frombuffer(fh.read(), dtype="<f8")
    if cols.size != T * N * 3:
        raise ValueError(f"{path}: truncated panel file")
    return VoltagePanel(cols.reshape(N, 3, T).transpose(2, 0, 1).copy())


def consumer_series(panel: VoltagePanel, net: NetworkModel, mapping: PhaseMapping,
                    devices: Sequence[int]) -> np.ndarray:
    """T x L matrix of the voltage seen by each single-phase device on its own phase."""
    cols = [panel.magnitudes[:, net.devices[k].bus_id - 1, mapping.phases[k]] for k in devices]
    return np.stack(cols, axis=1) if cols else np.zeros((panel.T, 0))
