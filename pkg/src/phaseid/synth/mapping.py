"""Random phase assignment of single-phase devices and its load balance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..network import Device

PHASES = "ABC"


@dataclass(frozen=True)
class PhaseMapping:
    """Phase (0=A, 1=B, 2=C) of each single-phase device, keyed by device index."""

    phases: Mapping[int, int] = field(default_factory=dict)
    scenario_id: int = 0

    def __len__(self):
        return len(self.phases)

    def letters(self) -> dict[int, str]:
        return {k: PHASES[v] for k, v in self.phases.items()}


def random_phase_mapping(devices: Sequence[Device], seed: int, scenario_id: int = 0) -> PhaseMapping:
    """Draw A, B or C with equal probability, independently for each single-phase device."""
    idx = [k for k, d in enumerate(devices) if d.single_phase]
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, 3, size=len(idx))
    return PhaseMapping({k: int(p) for k, p in zip(idx, draws)}, scenario_id)


def phase_loads(mapping: PhaseMapping, devices: Sequence[Device]) -> np.ndarray:
    """Annual energy per phase. Three-phase devices load each phase equally."""
    loads = np.zeros(3)
    for k, d in enumerate(devices):
        if d.single_phase:
            if k not in mapping.phases:
                raise KeyError(f"device {k} has no phase in the mapping")
            loads[mapping.phases[k]] += d.annual_kwh
        else:
            loads += d.annual_kwh / 3.0
    return loads


def aepl(mapping: PhaseMapping, devices: Sequence[Device], include_three_phase: bool = False) -> float:
    """Absolute error in phase load for one scenario: mean over phases of |L_phase - mean|."""
    if include_three_phase:
        loads = phase_loads(mapping, devices)
    else:
        loads = np.zeros(3)
        for k, p in mapping.phases.items():
            loads[p] += devices[k].annual_kwh
    return float(np.abs(loads - loads.mean()).sum() / 3.0)


def max_relative_deviation(loads) -> float:
    loads = np.asarray(loads, dtype=float)
    mean = loads.mean()
    if mean == 0:
        return 0.0
    return float(np.max(np.abs(loads - mean)) / mean)


def classify_loads(loads) -> str:
    dev = max_relative_deviation(loads)
    if dev < 0.02:
        return "C1"
    if dev < 0.10:
        return "C2"
    return "C3"


def classify_mapping_balance(mapping: PhaseMapping, devices: Sequence[Device]) -> str:
    """C1 (<2 % max per-phase deviation from the mean), C2 (<10 %) or C3."""
    loads = np.zeros(3)
    for k, p in mapping.phases.items():
        loads[p] += devices[k].annual_kwh
    return classify_loads(loads)


def find_mapping(devices: Sequence[Device], balance_class: str, seed: int,
                 max_draws: int = 100_000, skip: int = 0) -> PhaseMapping:
    """First random mapping (scanning scenario ids from ``seed``) that falls in ``balance_class``.

    ``skip`` returns the (skip+1)-th hit instead, for drawing several mappings of a class.
    """
    hits = 0
    for s in range(max_draws):
        m = random_phase_mapping(devices, seed + s, scenario_id=seed + s)
        if classify_mapping_balance(m, devices) == balance_class:
            if hits == skip:
                return m
            hits += 1
    raise RuntimeError(f"no {balance_class} mapping found in {max_draws} draws")


def mapping_statistics(devices: Sequence[Device], n_scenarios: int, seed: int) -> dict:
    """Monte Carlo summary of random mappings: AEPL and per-phase deviation relative to the mean load."""
    idx = [k for k, d in enumerate(devices) if d.single_phase]
    kwh = np.array([devices[k].annual_kwh for k in idx])
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, 3, size=(n_scenarios, len(idx)))
    loads = np.stack([(kwh * (draws == p)).sum(axis=1) for p in range(3)], axis=1)
    mean = loads.mean(axis=1, keepdims=True)
    rel = np.abs(loads - mean) / mean
    return {
        "aepl": float(np.abs(loads - mean).sum(axis=1).mean() / 3.0),
        "mean_relative_deviation": float(rel.mean()),
        "max_relative_deviation": float(rel.max()),
        "phase_frequency": [float((draws == p).mean()) for p in range(3)],
    }
