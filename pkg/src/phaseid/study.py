"""Case studies on a synthetic scenario.

A scenario is a switch-free network, a true phase mapping, load profiles and
the noise-free voltage panel they produce. The four studies are

* cs1 - every metric/consensus model on mappings of each balance class;
* cs2 - consensus built from references one, two, ... zone hops away;
* cs3 - a sweep over metering tolerance;
* cs4 - panels simulated under each neutral reduction.

Results are long-format rows ``zone, metric, scheme, tau, A, F, D`` plus
study-specific keys.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .evaluation import ALL_MODELS, Model, ModelResult, ZoneTask, overall_accuracy, rank_models, run_monte_carlo
from .network import NetworkModel, remove_switches
from .synth.mapping import PhaseMapping, classify_mapping_balance, find_mapping
from .synth.panel import VoltagePanel, simulate_timeseries
from .synth.profiles import LoadSeries, generate_load_profiles
from .zoning import Zoning, build_zoning, cluster_network, select_cluster_count, zone_beta, zone_level_map

logger = logging.getLogger(__name__)

ROW_KEYS = ("zone", "metric", "scheme", "tau", "A", "F", "D")


def prepare_network(net: NetworkModel) -> NetworkModel:
    if any(b.is_switch for b in net.branches):
        net, _ = remove_switches(net)
    return net


@dataclass(frozen=True, eq=False)
class Scenario:
    net: NetworkModel
    mapping: PhaseMapping
    loads: LoadSeries
    panel: VoltagePanel
    neutral_mode: str = "eq1"

    @property
    def consumers(self) -> list[int]:
        return self.net.single_phase_devices()

    def truth(self, devices: Sequence[int]) -> np.ndarray:
        return np.array([self.mapping.phases[k] for k in devices], dtype=int)

    def consumer_series(self, devices: Sequence[int]) -> np.ndarray:
        m = self.panel.magnitudes
        cols = [m[:, self.net.devices[k].bus_id - 1, self.mapping.phases[k]] for k in devices]
        return np.stack(cols, axis=1) if cols else np.zeros((self.panel.T, 0))


def build_scenario(net: NetworkModel, mapping: PhaseMapping, T: int = 720, load_seed: int = 0,
                   neutral_mode: str = "eq1", v_slack: float = 1.0,
                   loads: LoadSeries | None = None) -> Scenario:
    net = prepare_network(net)
    if loads is None:
        loads = generate_load_profiles(net.devices, T, load_seed, net.base_power)
    panel = simulate_timeseries(net, mapping, loads, neutral_mode, v_slack)
    return Scenario(net, mapping, loads, panel, neutral_mode)


def make_zoning(net: NetworkModel, clusters: int = 0, cluster_range=(2, 10), seed: int = 0,
                weights: str = "admittance", restarts: int = 20,
                threads: int = 1) -> tuple[Zoning, dict[int, float]]:
    """Zone the network; ``clusters=0`` takes the silhouette argmax over ``cluster_range``."""
    net = prepare_network(net)
    lo, hi = cluster_range
    hi = min(hi, net.n_buses - 1)
    best, curve = select_cluster_count(net, range(lo, hi + 1), seed, clusters or None, weights, restarts, threads)
    labels, score = cluster_network(net, best, seed, weights, restarts, threads)
    return build_zoning(net, labels, score), curve


def zone_tasks(scen: Scenario, zoning: Zoning, betas: Mapping[int, float],
               references: Mapping[int, Sequence[int]] | None = None,
               naive_reference: int | None = None) -> list[ZoneTask]:
    """One task per zone with consumers. ``references`` overrides the in-zone rosters."""
    tasks = []
    for c in range(1, zoning.n_zones + 1):
        devs = zoning.consumers.get(c, ())
        if not devs:
            continue
        refs = tuple(zoning.references.get(c, ()) if references is None else references.get(c, ()))
        naive = None if naive_reference is None else scen.panel.bus(naive_reference)
        tasks.append(ZoneTask(
            zone=c, consumers=scen.consumer_series(devs), truth=scen.truth(devs),
            references=tuple(scen.panel.bus(r) for r in refs), reference_ids=refs,
            beta=betas[c], naive_reference=naive, naive_reference_id=naive_reference,
            consumer_ids=tuple(devs),
        ))
    return tasks


def select_models(metrics: Sequence[str], schemes: Sequence[str]) -> list[Model]:
    """All requested (metric, scheme) pairs; S0 only with J1."""
    return [m for m in ALL_MODELS if m.metric in metrics and m.scheme in schemes]


def result_rows(results: Sequence[ModelResult], tau: float, **extra) -> list[dict]:
    rows = []
    for r in results:
        s = r.summary()
        s["tau"] = tau
        s.update(extra)
        rows.append(s)
    return rows


def _overall(results, model: Model) -> dict:
    sel = [r for r in results if r.model == model and r.accuracy]
    if not sel:
        return {"A": float("nan"), "F": float("nan"), "D": float("nan")}
    return {
        "A": overall_accuracy(sel, model),
        "F": float(np.mean([r.mean_confidence for r in sel])),
        "D": float(np.mean([r.sensitivity for r in sel])),
    }


# --------------------------------------------------------------------------
# the four studies
# --------------------------------------------------------------------------

@dataclass
class StudyContext:
    """Everything shared by the studies: the network, its zoning and the run settings."""

    net: NetworkModel
    zoning: Zoning
    T: int = 720
    load_seed: int = 22
    mapping_seed: int = 11
    noise_seed: int = 33
    neutral_mode: str = "eq1"
    v_slack: float = 1.05
    beta_fraction: float = 0.4
    Q: int = 100
    threads: int = 1
    naive_reference: int | None = None
    loads: LoadSeries | None = None

    def __post_init__(self):
        self.net = prepare_network(self.net)
        if self.naive_reference is None:
            self.naive_reference = self.net.references[0] if self.net.references else self.net.slack

    def scenario(self, mapping: PhaseMapping | None = None, neutral_mode: str | None = None) -> Scenario:
        mapping = mapping or find_mapping(self.net.devices, "C2", self.mapping_seed)
        return build_scenario(self.net, mapping, self.T, self.load_seed, neutral_mode or self.neutral_mode, self.v_slack,
                              self.loads)

    def betas(self, scen: Scenario) -> dict[int, float]:
        return zone_beta(scen.panel, self.zoning, self.beta_fraction)

    def run(self, scen: Scenario, models, tau_ref: float, tau_cons: float, references=None,
            naive_reference: int | None = None, seed_offset: int = 0) -> list[ModelResult]:
        naive = self.naive_reference if naive_reference is None else naive_reference
        tasks = zone_tasks(scen, self.zoning, self.betas(scen), references, naive)
        return run_monte_carlo(tasks, models, tau_ref, tau_cons, self.Q, self.noise_seed + seed_offset, self.threads)


def run_cs1(ctx: StudyContext, classes=("C1", "C2", "C3"), per_class: int = 3, tau: float = 0.01,
            models: Sequence[Model] = ALL_MODELS) -> dict:
    """Model comparison over mappings of each balance class, with rankings per (zone, mapping)."""
    rows, winners, class_F = [], {}, {}
    for cls in classes:
        fs = []
        for i in range(per_class):
            mapping = find_mapping(ctx.net.devices, cls, ctx.mapping_seed, skip=i)
            assert classify_mapping_balance(mapping, ctx.net.devices) == cls
            res = ctx.run(ctx.scenario(mapping), models, tau, tau)
            cell = result_rows(res, tau, balance_class=cls, mapping=mapping.scenario_id)
            rows += cell
            for zone in sorted({r["zone"] for r in cell}):
                ranked = rank_models([r for r in cell if r["zone"] == zone and not np.isnan(r["A"])])
                for rank, rep in ranked:
                    if rank == 1:
                        name = f"{rep['scheme']}-{rep['metric']}"
                        winners[name] = winners.get(name, 0) + 1
            fs += [r["F"] for r in cell if r["metric"] == "J1" and r["scheme"] == "S3"]
        class_F[cls] = float(np.mean(fs)) if fs else float("nan")
    n_cells = len({(r["balance_class"], r["mapping"], r["zone"]) for r in rows})
    return {"study": "cs1", "rows": rows, "winners": winners, "cells": n_cells, "mean_F_S3_J1": class_F}


def level_references(zoning: Zoning, levels: Mapping[int, list[list[int]]], k: int) -> dict[int, tuple]:
    """Per zone, the references of the zones ``k`` hops away (empty if none)."""
    out = {}
    for c, rings in levels.items():
        zones = rings[k] if k < len(rings) else []
        out[c] = tuple(r for z in zones for r in zoning.references.get(z, ()))
    return out


def run_cs2(ctx: StudyContext, tau: float = 0.01, max_level: int = 3, mode: str = "single",
            models: Sequence[Model] = (Model("J1", "S3"),), mapping: PhaseMapping | None = None) -> dict:
    """Reference proximity: consumers of zone c against references at level L0, L1, ...

    ``mode="single"`` estimates with each reference of a level on its own (S0)
    and averages A, F and D over those references; ``mode="consensus"`` fuses
    all references of the level with ``models``.
    """
    scen = ctx.scenario(mapping)
    levels = zone_level_map(ctx.zoning, ctx.net)
    rows = []
    if mode == "consensus":
        for k in range(max_level + 1):
            refs = level_references(ctx.zoning, levels, k)
            if not any(refs.values()):
                continue
            res = ctx.run(scen, models, tau, tau, references=refs)
            for row in result_rows(res, tau, level=f"L{k}", mode=mode):
                if refs.get(row["zone"]):
                    rows.append(row)
    elif mode == "single":
        s0 = Model("J1", "S0")
        per_ref = {}
        for r in ctx.net.references:
            res = ctx.run(scen, [s0], tau, tau, naive_reference=r)
            per_ref[r] = {x.zone: x for x in res if x.accuracy}
        for k in range(max_level + 1):
            refs = level_references(ctx.zoning, levels, k)
            for c, rs in sorted(refs.items()):
                got = [per_ref[r][c] for r in rs if c in per_ref.get(r, {})]
                if not got:
                    continue
                rows.append({
                    "zone": c, "metric": "J1", "scheme": "S0", "tau": tau, "level": f"L{k}", "mode": mode,
                    "A": float(np.mean([g.mean_accuracy for g in got])),
                    "F": float(np.mean([g.mean_confidence for g in got])),
                    "D": float(np.mean([g.sensitivity for g in got])),
                    "Q": ctx.Q, "L": got[0].n_consumers, "references": list(rs),
                })
    else:
        raise ValueError(f"unknown proximity mode {mode!r}")
    return {"study": "cs2", "rows": rows, "levels": {c: v for c, v in levels.items()}, "mode": mode}


def run_cs3(ctx: StudyContext, tau_grid=(0.0, 0.01, 0.02, 0.05, 0.10),
            models: Sequence[Model] = ALL_MODELS, mapping: PhaseMapping | None = None) -> dict:
    """Noise sweep; the same tolerance is applied at both ends."""
    scen = ctx.scenario(mapping)
    rows, overall = [], {}
    for tau in tau_grid:
        res = ctx.run(scen, models, tau, tau)
        rows += result_rows(res, tau)
        for m in models:
            overall[f"{m.name}@{tau:g}"] = {"tau": tau, "metric": m.metric, "scheme": m.scheme, **_overall(res, m)}
    return {"study": "cs3", "rows": rows, "overall": overall}


def run_cs4(ctx: StudyContext, modes=("eq1", "kron", "drop"), tau: float = 0.05,
            models: Sequence[Model] = (Model("J1", "S3"),), mapping: PhaseMapping | None = None) -> dict:
    """Identification on panels simulated under each neutral reduction, same mapping and loads."""
    mapping = mapping or find_mapping(ctx.net.devices, "C2", ctx.mapping_seed)
    rows, overall, panels = [], {}, {}
    for mode in modes:
        scen = ctx.scenario(mapping, mode)
        panels[mode] = scen.panel.magnitudes
        res = ctx.run(scen, models, tau, tau)
        rows += result_rows(res, tau, neutral_mode=mode)
        for m in models:
            overall[f"{m.name}@{mode}"] = {"neutral_mode": mode, "metric": m.metric, "scheme": m.scheme, **_overall(res, m)}
    diffs = {f"{a}-{b}": float(np.abs(panels[a] - panels[b]).max())
             for i, a in enumerate(modes) for b in modes[i + 1:]}
    return {"study": "cs4", "rows": rows, "overall": overall, "max_abs_dv": diffs}


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if np.isnan(obj) else float(obj)
    return obj


def write_report(report: dict, directory) -> Path:
    """``report.json`` plus the long table ``results.csv`` under ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "report.json").write_text(json.dumps(_clean(report), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    rows = report.get("rows", [])
    extra = sorted({k for r in rows for k in r} - set(ROW_KEYS))
    with open(d / "results.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(ROW_KEYS) + extra)
        for r in rows:
            w.writerow([r.get(k, "") for k in ROW_KEYS + tuple(extra)])
    return d
