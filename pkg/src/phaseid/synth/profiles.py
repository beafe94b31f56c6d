"""Hourly residential load profiles scaled to annual energy."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..network import Device

HOURS_PER_YEAR = 8760
POWER_FACTOR = 0.95
NOISE_SIGMA = 0.3


def _two_peak(h):
    return (
        0.35
        + 0.55 * np.exp(-0.5 * ((h - 7.5) / 1.5) ** 2)
        + 1.0 * np.exp(-0.5 * ((h - 19.0) / 2.0) ** 2)
        + 0.25 * np.exp(-0.5 * ((h - 13.0) / 2.0) ** 2)
    )


def diurnal_shape(hours=None) -> np.ndarray:
    """Two-peak residential shape with unit mean over a day."""
    h = np.arange(24.0) if hours is None else np.asarray(hours, dtype=float) % 24
    return _two_peak(h) / _two_peak(np.arange(24.0)).mean()


def solar_shape(hours) -> np.ndarray:
    h = np.asarray(hours, dtype=float) % 24
    return np.clip(np.sin(np.pi * (h - 6.0) / 12.0), 0.0, None)


@dataclass(frozen=True, eq=False)
class LoadSeries:
    """Per-device hourly active/reactive power in pu, shape (n_devices, T).

    ``scale`` holds the factor applied to each device so that the series
    carries exactly ``annual_kwh * T / 8760`` of energy.
    """

    p: np.ndarray
    q: np.ndarray
    scale: np.ndarray

    @property
    def T(self) -> int:
        return self.p.shape[1]

    def __eq__(self, other):
        if not isinstance(other, LoadSeries):
            return NotImplemented
        return np.array_equal(self.p, other.p) and np.array_equal(self.q, other.q)

    __hash__ = None


def kw_to_pu(kw, base_power: float):
    """Single-phase device power in kW to pu of the per-phase base (base_power / 3)."""
    return np.asarray(kw) * 1000.0 / (base_power / 3.0)


def generate_load_profiles(devices: Sequence[Device], T: int, seed: int, base_power: float,
                           sigma: float = NOISE_SIGMA, constant_shape: bool = False,
                           correlated: bool = False, power_factor: float = POWER_FACTOR) -> LoadSeries:
    """Shape x annual_kwh/8760 x mean-one lognormal noise, per device.

    Each device draws from its own stream (``SeedSequence([seed, k])``) so the
    result does not depend on device ordering or on how devices are split over
    workers. With ``correlated`` every device reuses stream 0, giving
    identical shapes scaled by annual energy. PV devices inject
    ``p_avail`` x a half-sine daylight shape (negative load).
    """
    if T < 24:
        raise ValueError("T must be at least 24 hours")
    t = np.arange(T)
    shape = np.ones(T) if constant_shape else diurnal_shape(t)
    tan_phi = math.tan(math.acos(power_factor))
    n = len(devices)
    p = np.zeros((n, T))
    scale = np.ones(n)
    for k, d in enumerate(devices):
        stream = 0 if correlated else k
        rng = np.random.default_rng(np.random.SeedSequence([seed, stream]))
        if sigma > 0:
            noise = rng.lognormal(-0.5 * sigma**2, sigma, size=T)
        else:
            noise = np.ones(T)
        if d.kind == "pv":
            p[k] = -(d.p_avail or 0.0) * solar_shape(t) * noise
            continue
        kw = shape * noise * d.annual_kwh / HOURS_PER_YEAR
        target = d.annual_kwh * T / HOURS_PER_YEAR
        scale[k] = target / kw.sum() if kw.sum() > 0 else 1.0
        p[k] = kw * scale[k]
    p_pu = kw_to_pu(p, base_power)
    q_pu = np.where(p_pu > 0, p_pu * tan_phi, 0.0)
    return LoadSeries(p_pu, q_pu, scale)


def write_profiles_csv(loads: LoadSeries, path, device_ids: Sequence[str] | None = None) -> None:
    ids = device_ids or [str(k) for k in range(loads.p.shape[0])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["device_id", "t", "p_pu", "q_pu"])
        for k, did in enumerate(ids):
            for t in range(loads.T):
                w.writerow([did, t + 1, repr(float(loads.p[k, t])), repr(float(loads.q[k, t]))])


def read_profiles_csv(path, device_ids: Sequence[str] | None = None) -> LoadSeries:
    """Read a long-format profile CSV. Rows may come in any order; t is 1-based."""
    rows: dict[str, dict[int, tuple[float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(rec["device_id"], {})[int(rec["t"])] = (float(rec["p_pu"]), float(rec["q_pu"]))
    ids = list(device_ids) if device_ids is not None else sorted(rows, key=lambda s: (len(s), s))
    T = max(max(r) for r in rows.values())
    p = np.zeros((len(ids), T))
    q = np.zeros((len(ids), T))
    for k, did in enumerate(ids):
        series = rows[did]
        if sorted(series) != list(range(1, T + 1)):
            raise ValueError(f"device {did}: time index is not 1..{T}")
        for t, (pv, qv) in series.items():
            p[k, t - 1] = pv
            q[k, t - 1] = qv
    return LoadSeries(p, q, np.ones(len(ids)))
