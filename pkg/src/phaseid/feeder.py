"""Synthetic multi-feeder LV network generator and cable library.

``generate_feeder`` writes a network document in the flat JSON format plus a
manifest of the counts it planted (buses, switches, references, feeder
membership), which the tests use as ground truth for the parser and the
topology routines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np


def _cable(r_phase, r_neutral, x_self, x_mutual):
    """4x4 series impedance in ohm/km: a, b, c, n with purely reactive couplings."""
    z = np.full((4, 4), 1j * x_mutual, dtype=complex)
    np.fill_diagonal(z, [r_phase + 1j * x_self] * 3 + [r_neutral + 1j * x_self])
    return z


# ohm/km, buried four-core aluminium cables
CABLES = {
    "NAYY4x150": _cable(0.206, 0.206, 0.600, 0.520),
    "NAYY4x95": _cable(0.320, 0.320, 0.610, 0.530),
    "NAYY4x50": _cable(0.641, 0.641, 0.620, 0.535),
    "NAYY3x150+70": _cable(0.206, 0.443, 0.600, 0.515),
}


@dataclass
class FeederSpec:
    trunk: tuple[int, ...] = (16, 14, 14)
    laterals: tuple[int, ...] = (5, 5, 0)
    cabinet_switches: int = 1
    consumers: int = 40
    three_phase_devices: int = 3
    trunk_cable: str = "NAYY4x50"
    lateral_cable: str = "NAYY4x50"
    segment_m: tuple[float, float] = (35.0, 70.0)
    head_m: float = 0.0
    head_cable: str = "NAYY4x150"
    median_kwh: float = 7000.0
    base_va: float = 100e3
    base_v: float = 400.0
    transformer_z_pu: complex = 0.002 + 0.008j
    seed: int = 7


def generate_feeder(spec: FeederSpec | None = None) -> tuple[dict, dict]:
    """Return ``(network_document, manifest)``.

    Layout: MV slack -- transformer -- LV busbar, then per feeder a switch to
    a terminal node, a trunk of cable segments and optionally a lateral from
    the trunk midpoint. ``cabinet_switches`` extra switches split trunks at a
    cable cabinet. Reference points: busbar, every trunk head and tail, and
    every lateral end.
    """
    spec = spec or FeederSpec()
    rng = np.random.default_rng(spec.seed)

    buses: list[dict] = []
    branches: list[dict] = []

    def bus(original, slack=False):
        buses.append({"id": len(buses) + 1, "original_id": original, "slack": slack})
        return len(buses)

    def cable(f, t, name, metres=None):
        length = (float(rng.uniform(*spec.segment_m)) if metres is None else metres) / 1000.0
        z = CABLES[name]
        branches.append({
            "from": f, "to": t,
            "r_ohm_per_km": z.real.tolist(), "x_ohm_per_km": z.imag.tolist(),
            "length_km": round(length, 4), "cable": name, "switch": False,
        })

    def switch(f, t):
        zero = np.zeros((4, 4)).tolist()
        branches.append({"from": f, "to": t, "r": zero, "x": zero, "switch": True})

    mv = bus("MV", slack=True)
    busbar = bus("LV-busbar")
    zt = spec.transformer_z_pu * np.eye(3)
    branches.append({"from": mv, "to": busbar, "r": zt.real.tolist(), "x": zt.imag.tolist(),
                     "switch": False, "transformer": True})

    references = [busbar]
    feeders: list[list[int]] = []
    load_buses: list[int] = []
    cabinets_left = spec.cabinet_switches
    for f, (n_trunk, n_lat) in enumerate(zip(spec.trunk, spec.laterals), start=1):
        members = []
        term = bus(f"F{f}-terminal")
        switch(busbar, term)
        members.append(term)
        prev = term
        trunk_nodes = []
        for k in range(1, n_trunk + 1):
            node = bus(f"F{f}-T{k:02d}")
            if k == 1 and spec.head_m > 0:
                cable(prev, node, spec.head_cable, spec.head_m)
            else:
                cable(prev, node, spec.trunk_cable)
            trunk_nodes.append(node)
            members.append(node)
            prev = node
            if cabinets_left and k == n_trunk // 2 + 1:
                cab = bus(f"F{f}-cabinet")
                switch(node, cab)
                members.append(cab)
                prev = cab
                cabinets_left -= 1
        references += [trunk_nodes[0], trunk_nodes[-1]]
        load_buses += trunk_nodes[1:]
        if n_lat:
            prev = trunk_nodes[len(trunk_nodes) // 2 - 1]
            for k in range(1, n_lat + 1):
                node = bus(f"F{f}-L{k:02d}")
                cable(prev, node, spec.lateral_cable)
                members.append(node)
                load_buses.append(node)
                prev = node
            references.append(prev)
        feeders.append(members)

    # consumers: distinct buses, drawn without replacement from the load buses
    n_cons = min(spec.consumers, len(load_buses))
    cons_buses = sorted(rng.choice(load_buses, size=n_cons, replace=False).tolist())
    kwh = np.clip(rng.lognormal(np.log(spec.median_kwh), 0.35, size=n_cons), 2000, 20000)
    devices = [
        {"bus": int(b), "kind": "household", "annual_kwh": round(float(e), 1), "phases": "1",
         "p_avail": None, "q_avail": None, "name": f"C{k + 1:02d}"}
        for k, (b, e) in enumerate(zip(cons_buses, kwh))
    ]
    three = rng.choice(load_buses, size=spec.three_phase_devices, replace=False)
    for k, b in enumerate(sorted(three.tolist())):
        devices.append({"bus": int(b), "kind": "other", "annual_kwh": round(float(rng.uniform(8000, 20000)), 1),
                        "phases": "3", "p_avail": None, "q_avail": None, "name": f"P{k + 1:02d}"})

    doc = {
        "base": {"s_va": spec.base_va, "v_volt": spec.base_v},
        "buses": buses,
        "branches": branches,
        "devices": devices,
        "references": references,
    }

    n_switch = sum(b["switch"] for b in branches)
    # head terminals fold into the busbar, cabinet nodes into their trunk node
    merged = {}
    for b in branches:
        if b["switch"]:
            merged[b["to"]] = merged.get(b["from"], b["from"])
    survivors = [b["id"] for b in buses if b["id"] not in merged]
    new_id = {old: k + 1 for k, old in enumerate(survivors)}
    renum = {b["id"]: new_id[merged.get(b["id"], b["id"])] for b in buses}
    manifest = {
        "seed": spec.seed,
        "n_buses": len(buses),
        "n_branches": len(branches),
        "n_switches": n_switch,
        "n_buses_after_switch_removal": len(buses) - n_switch,
        "n_branches_after_switch_removal": len(branches) - n_switch,
        "n_devices": len(devices),
        "n_single_phase": n_cons,
        "n_feeders": len(feeders),
        "references": references,
        "references_after_switch_removal": list(dict.fromkeys(renum[r] for r in references)),
        "slack_after_switch_removal": renum[mv],
        "busbar_after_switch_removal": renum[busbar],
        "feeders_after_switch_removal": [sorted({renum[m] for m in members} - {renum[busbar]}) for members in feeders],
        "is_radial": True,
    }
    return doc, manifest


def bundled_feeder_text() -> str:
    return resources.files("phaseid.data").joinpath("feeder_desk.json").read_text(encoding="utf-8")


def bundled_manifest() -> dict:
    return json.loads(resources.files("phaseid.data").joinpath("feeder_desk.manifest.json").read_text(encoding="utf-8"))


def load_bundled_feeder():
    from .network import parse_network

    return parse_network(bundled_feeder_text())
