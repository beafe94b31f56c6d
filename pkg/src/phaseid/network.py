"""
Low-voltage network model: buses, branches and consumer devices in per-unit.

The on-disk format is a flat JSON document (see ``parse_network``). Branch
impedances are stored as 3x3 (phases a, b, c) or 4x4 (a, b, c, n) complex
matrices; the neutral is eliminated on demand by ``reduce_neutral``,
``kron_reduce`` or ``drop_neutral``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEVICE_KINDS = ("household", "pv", "chp", "other")
LOAD_KINDS = ("household", "other")
NEUTRAL_MODES = ("eq1", "kron", "drop")
SYMMETRY_TOL = 1e-9


class NetworkError(ValueError):
    """Invalid network data. ``path`` locates the offending JSON element."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class TopologyError(NetworkError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    original_id: str
    is_slack: bool = False


@dataclass(frozen=True, eq=False)
class Branch:
    from_bus: int
    to_bus: int
    impedance: np.ndarray
    length_scaled: bool = False
    is_switch: bool = False

    def __post_init__(self):
        z = np.array(self.impedance, dtype=complex)
        z.setflags(write=False)
        object.__setattr__(self, "impedance", z)

    @property
    def n_wires(self) -> int:
        return self.impedance.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Branch):
            return NotImplemented
        return (
            (self.from_bus, self.to_bus, self.length_scaled, self.is_switch)
            == (other.from_bus, other.to_bus, other.length_scaled, other.is_switch)
            and np.array_equal(self.impedance, other.impedance)
        )

    __hash__ = None


@dataclass(frozen=True)
class Device:
    bus_id: int
    kind: str = "household"
    annual_kwh: float = 0.0
    phases: str = "1"
    p_avail: float | None = None
    q_avail: float | None = None
    name: str | None = None

    @property
    def single_phase(self) -> bool:
        return self.phases == "1"


@dataclass(frozen=True)
class NetworkModel:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    devices: tuple[Device, ...]
    base_power: float
    base_voltage: float
    references: tuple[int, ...] = ()

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def slack(self) -> int:
        return next(b.id for b in self.buses if b.is_slack)

    @property
    def base_impedance(self) -> float:
        return self.base_voltage**2 / self.base_power

    def single_phase_devices(self) -> list[int]:
        """Indices of devices whose phase connection is unknown."""
        return [k for k, d in enumerate(self.devices) if d.single_phase]


@dataclass(frozen=True)
class TopologyReport:
    is_radial: bool
    is_connected: bool
    cycle_edges: tuple[int, ...] = field(default_factory=tuple)


# --------------------------------------------------------------------------
# neutral elimination
# --------------------------------------------------------------------------

def reduce_neutral(z4) -> np.ndarray:
    """Fold a sparsely grounded neutral into the phase impedances.

    ``z[p, q] - z[n, q] - z[p, n] + z[n, n]`` for p, q in a, b, c. Exact when
    the neutral is grounded only at the source and voltages are taken
    phase-to-neutral.
    """
    z4 = np.asarray(z4, dtype=complex)
    if z4.shape == (3, 3):
        return z4.copy()
    _check_square4(z4)
    zp = z4[:3, :3]
    zn_row = z4[3, :3]  # z[n, q]
    zn_col = z4[:3, 3]  # z[p, n]
    return zp - zn_row[None, :] - zn_col[:, None] + z4[3, 3]


def kron_reduce(z4) -> np.ndarray:
    """Schur complement of the neutral (multi-grounded, zero neutral voltage)."""
    z4 = np.asarray(z4, dtype=complex)
    if z4.shape == (3, 3):
        return z4.copy()
    _check_square4(z4)
    znn = z4[3, 3]
    if znn == 0:
        raise np.linalg.LinAlgError("neutral self-impedance is zero; Kron reduction undefined")
    return z4[:3, :3] - np.outer(z4[:3, 3], z4[3, :3]) / znn


def drop_neutral(z4) -> np.ndarray:
    z4 = np.asarray(z4, dtype=complex)
    return z4[:3, :3].copy()


_REDUCERS = {"eq1": reduce_neutral, "kron": kron_reduce, "drop": drop_neutral}


def phase_impedance(branch: Branch, mode: str = "eq1") -> np.ndarray:
    try:
        reducer = _REDUCERS[mode]
    except KeyError:
        raise ValueError(f"unknown neutral mode {mode!r}; expected one of {NEUTRAL_MODES}") from None
    return reducer(branch.impedance)


def _check_square4(z):
    if z.shape != (4, 4):
        raise ValueError(f"expected a 4x4 impedance matrix, got shape {z.shape}")


# --------------------------------------------------------------------------
# parsing / serialisation
# --------------------------------------------------------------------------

def _require(obj: Mapping, key: str, path: str, types) -> Any:
    if not isinstance(obj, Mapping):
        raise NetworkError("expected an object", path)
    if key not in obj:
        raise NetworkError(f"missing field {key!r}", path)
    value = obj[key]
    if types is not None and (not isinstance(value, types) or isinstance(value, bool) and bool not in _as_tuple(types)):
        raise NetworkError(f"wrong type {type(value).__name__}", f"{path}.{key}")
    return value


def _as_tuple(t):
    return t if isinstance(t, tuple) else (t,)


def _matrix(value, path: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise NetworkError("impedance must be numeric", path) from None
    if arr.ndim == 1 and arr.size in (9, 16):
        n = int(math.isqrt(arr.size))
        arr = arr.reshape(n, n)
    if arr.shape not in ((3, 3), (4, 4)):
        raise NetworkError(f"impedance must be 3x3 or 4x4, got shape {arr.shape}", path)
    if not np.all(np.isfinite(arr)):
        raise NetworkError("non-finite impedance entry", path)
    return arr


def parse_network(text: str | bytes | Mapping) -> NetworkModel:
    """Build a validated ``NetworkModel`` from the flat JSON network format.

    Buses are renumbered 1..N in document order; branch and device bus
    references use the document ids. Branches carry ``r`` and ``x`` in pu, or
    ``r_ohm_per_km``/``x_ohm_per_km`` with ``length_km`` (converted through the
    base impedance).
    """
    doc = json.loads(text) if isinstance(text, (str, bytes)) else text
    if not isinstance(doc, Mapping):
        raise NetworkError("document must be a JSON object")

    base = _require(doc, "base", "$", Mapping)
    s_va = float(_require(base, "s_va", "$.base", (int, float)))
    v_volt = float(_require(base, "v_volt", "$.base", (int, float)))
    if not (s_va > 0 and v_volt > 0 and math.isfinite(s_va) and math.isfinite(v_volt)):
        raise NetworkError("bases must be positive and finite", "$.base")
    z_base = v_volt**2 / s_va

    raw_buses = _require(doc, "buses", "$", list)
    if not raw_buses:
        raise NetworkError("network has no buses", "$.buses")
    renumber: dict[Any, int] = {}
    buses = []
    for k, rb in enumerate(raw_buses):
        path = f"$.buses[{k}]"
        bid = _require(rb, "id", path, (int, str))
        if bid in renumber:
            raise NetworkError(f"duplicate bus id {bid!r}", f"{path}.id")
        slack = rb.get("slack", False)
        if not isinstance(slack, bool):
            raise NetworkError("wrong type", f"{path}.slack")
        original = rb.get("original_id", str(bid))
        renumber[bid] = len(buses) + 1
        buses.append(Bus(len(buses) + 1, str(original), slack))
    n_slack = sum(b.is_slack for b in buses)
    if n_slack != 1:
        raise NetworkError(f"expected exactly one slack bus, found {n_slack}", "$.buses")

    def bus_ref(value, path):
        if value not in renumber:
            raise NetworkError(f"references unknown bus {value!r}", path)
        return renumber[value]

    branches = []
    for k, rb in enumerate(_require(doc, "branches", "$", list)):
        path = f"$.branches[{k}]"
        f = bus_ref(_require(rb, "from", path, (int, str)), f"{path}.from")
        t = bus_ref(_require(rb, "to", path, (int, str)), f"{path}.to")
        if f == t:
            raise NetworkError("branch connects a bus to itself", path)
        is_switch = rb.get("switch", False)
        if not isinstance(is_switch, bool):
            raise NetworkError("wrong type", f"{path}.switch")
        scaled = "r_ohm_per_km" in rb
        if "length_scaled" in rb and not isinstance(rb["length_scaled"], bool):
            raise NetworkError("wrong type", f"{path}.length_scaled")
        if scaled:
            length = float(_require(rb, "length_km", path, (int, float)))
            r = _matrix(rb["r_ohm_per_km"], f"{path}.r_ohm_per_km") * length / z_base
            x = _matrix(_require(rb, "x_ohm_per_km", path, None), f"{path}.x_ohm_per_km") * length / z_base
        else:
            r = _matrix(_require(rb, "r", path, None), f"{path}.r")
            x = _matrix(_require(rb, "x", path, None), f"{path}.x")
            # serialised networks keep the provenance flag of converted cables
            scaled = rb.get("length_scaled", False)
        if r.shape != x.shape:
            raise NetworkError("r and x shapes differ", path)
        z = r + 1j * x
        if not np.allclose(z, z.T, rtol=0, atol=SYMMETRY_TOL):
            raise NetworkError("impedance matrix is not symmetric", path)
        if not is_switch and not np.any(z):
            raise NetworkError("zero-impedance branch must be flagged as a switch", path)
        branches.append(Branch(f, t, z, length_scaled=scaled, is_switch=is_switch))

    devices = []
    for k, rd in enumerate(doc.get("devices", [])):
        path = f"$.devices[{k}]"
        bus = bus_ref(_require(rd, "bus", path, (int, str)), f"{path}.bus")
        kind = rd.get("kind", "household")
        if kind not in DEVICE_KINDS:
            raise NetworkError(f"unknown device kind {kind!r}", f"{path}.kind")
        kwh = float(_require(rd, "annual_kwh", path, (int, float)))
        if kind in LOAD_KINDS and not kwh > 0:
            raise NetworkError("load devices need annual_kwh > 0", f"{path}.annual_kwh")
        phases = str(rd.get("phases", "1"))
        if phases not in ("1", "3"):
            raise NetworkError(f"phases must be '1' or '3', got {phases!r}", f"{path}.phases")
        p_avail = rd.get("p_avail")
        q_avail = rd.get("q_avail")
        for name, v in (("p_avail", p_avail), ("q_avail", q_avail)):
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
                raise NetworkError("wrong type", f"{path}.{name}")
        devices.append(Device(
            bus, kind, kwh, phases,
            None if p_avail is None else float(p_avail),
            None if q_avail is None else float(q_avail),
            rd.get("name"),
        ))

    references = tuple(
        bus_ref(r, f"$.references[{k}]") for k, r in enumerate(doc.get("references", []))
    )
    net = NetworkModel(tuple(buses), tuple(branches), tuple(devices), s_va, v_volt, references)
    report = validate_radial(net, include_switches=True)
    if not report.is_connected:
        raise TopologyError("network is not connected", "$.branches")
    return net


def network_to_dict(net: NetworkModel) -> dict:
    doc = {
        "base": {"s_va": net.base_power, "v_volt": net.base_voltage},
        "buses": [{"id": b.id, "original_id": b.original_id, "slack": b.is_slack} for b in net.buses],
        "branches": [
            {
                "from": br.from_bus,
                "to": br.to_bus,
                "r": br.impedance.real.tolist(),
                "x": br.impedance.imag.tolist(),
                "switch": br.is_switch,
                **({"length_scaled": True} if br.length_scaled else {}),
            }
            for br in net.branches
        ],
        "devices": [],
    }
    for d in net.devices:
        rec = {"bus": d.bus_id, "kind": d.kind, "annual_kwh": d.annual_kwh, "phases": d.phases,
               "p_avail": d.p_avail, "q_avail": d.q_avail}
        if d.name is not None:
            rec["name"] = d.name
        doc["devices"].append(rec)
    if net.references:
        doc["references"] = list(net.references)
    return doc


def serialize_network(net: NetworkModel) -> str:
    return json.dumps(network_to_dict(net), indent=1)


def load_network(path) -> NetworkModel:
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


# --------------------------------------------------------------------------
# topology
# --------------------------------------------------------------------------

class _DisjointSet:
    def __init__(self, items: Iterable[int]):
        self.parent = {i: i for i in items}

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def validate_radial(net: NetworkModel, include_switches: bool = False) -> TopologyReport:
    """Report connectivity and the branches that close cycles.

    Switch branches are ignored unless ``include_switches`` is set.
    """
    ds = _DisjointSet(b.id for b in net.buses)
    cycles = []
    for k, br in enumerate(net.branches):
        if br.is_switch and not include_switches:
            continue
        if not ds.union(br.from_bus, br.to_bus):
            cycles.append(k)
    roots = {ds.find(b.id) for b in net.buses}
    connected = len(roots) == 1
    return TopologyReport(connected and not cycles, connected, tuple(cycles))


def remove_switches(net: NetworkModel) -> tuple[NetworkModel, dict[int, int]]:
    """Contract every switch branch and renumber buses 1..N'.

    Returns the new network and the old-id -> new-id mapping. Devices and
    reference points on merged buses move to the surviving bus (the slack if
    the group holds it, else the lowest id).
    """
    ds = _DisjointSet(b.id for b in net.buses)
    slack_of: dict[int, int] = {b.id: b.id for b in net.buses if b.is_slack}
    for br in net.branches:
        if not br.is_switch:
            continue
        ra, rb = ds.find(br.from_bus), ds.find(br.to_bus)
        if ra == rb:
            continue
        sa, sb = slack_of.get(ra), slack_of.get(rb)
        if sa is not None and sb is not None:
            raise TopologyError(f"switch {br.from_bus}-{br.to_bus} would merge two slack buses")
        ds.union(ra, rb)
        root = ds.find(ra)
        slack_of.pop(ra, None)
        slack_of.pop(rb, None)
        if sa is not None or sb is not None:
            slack_of[root] = sa if sa is not None else sb

    survivors = {}
    for b in net.buses:
        root = ds.find(b.id)
        keep = slack_of.get(root, root)
        survivors.setdefault(root, keep)
    order = sorted(set(survivors.values()))
    new_id = {old: k + 1 for k, old in enumerate(order)}
    mapping = {b.id: new_id[survivors[ds.find(b.id)]] for b in net.buses}

    old = {b.id: b for b in net.buses}
    buses = tuple(Bus(new_id[o], old[o].original_id, any(
        old[b].is_slack for b in old if mapping[b] == new_id[o])) for o in order)
    branches = []
    for br in net.branches:
        if br.is_switch:
            continue
        f, t = mapping[br.from_bus], mapping[br.to_bus]
        if f == t:
            raise TopologyError(f"branch {br.from_bus}-{br.to_bus} collapses onto a single bus after switch removal")
        branches.append(replace(br, from_bus=f, to_bus=t))
    devices = tuple(replace(d, bus_id=mapping[d.bus_id]) for d in net.devices)
    refs = tuple(dict.fromkeys(mapping[r] for r in net.references))
    out = NetworkModel(buses, tuple(branches), devices, net.base_power, net.base_voltage, refs)
    report = validate_radial(out)
    if not report.is_radial:
        raise TopologyError(f"network is not radial after switch removal (cycle branches {report.cycle_edges})")
    return out, mapping


def tree_order(net: NetworkModel) -> tuple[list[int], dict[int, int], dict[int, int]]:
    """Breadth-first order from the slack, parent of each bus, and the branch feeding it.

    Bus ids in the returned structures are 0-based indices (id - 1).
    """
    report = validate_radial(net)
    if not report.is_radial:
        raise TopologyError(
            f"power flow needs a connected radial network (connected={report.is_connected}, "
            f"cycle branches {report.cycle_edges})"
        )
    adj: dict[int, list[tuple[int, int]]] = {b.id - 1: [] for b in net.buses}
    for k, br in enumerate(net.branches):
        if br.is_switch:
            continue
        adj[br.from_bus - 1].append((br.to_bus - 1, k))
        adj[br.to_bus - 1].append((br.from_bus - 1, k))
    root = net.slack - 1
    order, parent, feeder = [root], {}, {}
    head = 0
    while head < len(order):
        u = order[head]
        head += 1
        for v, k in adj[u]:
            if v != root and v not in parent:
                parent[v] = u
                feeder[v] = k
                order.append(v)
    return order, parent, feeder


def adjacency_pairs(net: NetworkModel) -> Sequence[tuple[int, int]]:
    return [(br.from_bus, br.to_bus) for br in net.branches]
