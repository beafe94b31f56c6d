"""Command line entry point.

Every command is a pure function of its inputs and the resolved config: it
recomputes whatever it needs upstream from the seeds and writes into a fresh
``run-NNN`` directory under the configured output path, together with the
resolved config. Exit codes: 1 config error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import HELP, SECTIONS, ConfigError, PipelineConfig, dump_config, load_config
from .evaluation import Model, accuracy, estimate_zone, noisy_measurements, zone_rng
from .feeder import FeederSpec, bundled_feeder_text, generate_feeder
from .network import NetworkError, load_network, parse_network, remove_switches, validate_radial
from .study import (StudyContext, build_scenario, make_zoning, prepare_network, run_cs1, run_cs2, run_cs3,
                    run_cs4, select_models, write_report, zone_tasks)
from .synth.mapping import PHASES, aepl, classify_mapping_balance, find_mapping
from .synth.panel import VoltagePanel, write_panel_binary, write_panel_csv
from .synth.powerflow import PowerFlowError
from .synth.profiles import read_profiles_csv, write_profiles_csv
from .zoning import ClusteringError, zone_beta

logger = logging.getLogger("phaseid")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 1, 2, 3


class DataError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def fresh_run_dir(parent) -> Path:
    parent = Path(parent)
    parent.mkdir(parents=True, exist_ok=True)
    n = 1 + max((int(p.name[4:]) for p in parent.glob("run-[0-9][0-9][0-9]*") if p.name[4:].isdigit()), default=0)
    while True:
        d = parent / f"run-{n:03d}"
        try:
            d.mkdir()
            return d
        except FileExistsError:
            n += 1


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_input_network(cfg: PipelineConfig):
    if not cfg.network:
        return parse_network(bundled_feeder_text())
    p = Path(cfg.network)
    if not p.is_file():
        raise DataError(f"{p}: network file not found")
    return load_network(p)


def load_input_profiles(cfg: PipelineConfig, net):
    if not cfg.profiles:
        return None
    p = Path(cfg.profiles)
    if not p.is_file():
        raise DataError(f"{p}: profile file not found")
    return read_profiles_csv(p, [d.name or str(k) for k, d in enumerate(net.devices)])


def build_from_config(cfg: PipelineConfig, threads: int = 1):
    """(switch-free network, scenario, zoning, silhouette curve) for a config."""
    net = prepare_network(load_input_network(cfg))
    mapping = find_mapping(net.devices, "C2", cfg.mapping_seed)
    loads = load_input_profiles(cfg, net)
    scen = build_scenario(net, mapping, cfg.T, cfg.load_seed, cfg.neutral_mode, cfg.v_slack, loads)
    zoning, curve = make_zoning(net, cfg.clusters, tuple(cfg.cluster_range), cfg.cluster_seed,
                                cfg.weights, cfg.restarts, threads)
    return net, scen, zoning, curve


def study_context(cfg: PipelineConfig, net, zoning, threads: int) -> StudyContext:
    return StudyContext(net, zoning, T=cfg.T, load_seed=cfg.load_seed, mapping_seed=cfg.mapping_seed,
                        noise_seed=cfg.noise_seed, neutral_mode=cfg.neutral_mode, v_slack=cfg.v_slack,
                        beta_fraction=cfg.beta_fraction, Q=cfg.Q, threads=threads,
                        naive_reference=cfg.naive_reference or None, loads=load_input_profiles(cfg, net))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_parse(args, cfg, out: Path) -> None:
    path = Path(args.network or cfg.network) if (args.network or cfg.network) else None
    if path is not None and not path.is_file():
        raise DataError(f"{path}: network file not found")
    net = load_network(path) if path else parse_network(bundled_feeder_text())
    reduced, mapping = remove_switches(net)
    report = validate_radial(net, include_switches=True)
    summary = {
        "n_buses": net.n_buses, "n_branches": len(net.branches),
        "n_switches": sum(b.is_switch for b in net.branches), "n_devices": len(net.devices),
        "n_single_phase": len(net.single_phase_devices()), "references": list(net.references),
        "topology": {"is_radial": report.is_radial, "is_connected": report.is_connected,
                     "cycle_edges": [list(e) for e in report.cycle_edges]},
        "after_switch_removal": {"n_buses": reduced.n_buses, "n_branches": len(reduced.branches),
                                 "references": list(reduced.references)},
        "bus_mapping": {str(k): v for k, v in sorted(mapping.items())},
    }
    _dump_json(summary, out / "network_summary.json")
    print(json.dumps({k: summary[k] for k in ("n_buses", "n_branches", "n_switches", "topology")}))


def cmd_genfeeder(args, cfg, out: Path) -> None:
    spec = FeederSpec(seed=args.seed, consumers=args.consumers)
    if args.trunk:
        spec.trunk = tuple(args.trunk)
        spec.laterals = tuple(args.laterals or [0] * len(args.trunk))
    if len(spec.laterals) != len(spec.trunk):
        raise ConfigError("--laterals needs one entry per trunk")
    doc, manifest = generate_feeder(spec)
    _dump_json(doc, out / "feeder.json")
    _dump_json(manifest, out / "feeder.manifest.json")
    print(f"{manifest['n_buses']} buses, {manifest['n_single_phase']} single-phase consumers, "
          f"{len(manifest['references'])} reference nodes -> {out / 'feeder.json'}")


def _write_simulation(scen, out: Path) -> None:
    net = scen.net
    names = [d.name or str(k) for k, d in enumerate(net.devices)]
    _dump_json({
        "scenario_id": scen.mapping.scenario_id,
        "balance_class": classify_mapping_balance(scen.mapping, net.devices),
        "aepl_kwh": aepl(scen.mapping, net.devices),
        "phases": {names[k]: PHASES[p] for k, p in sorted(scen.mapping.phases.items())},
    }, out / "mapping.json")
    write_profiles_csv(scen.loads, out / "profiles.csv", names)
    write_panel_csv(scen.panel, out / "panel_truth.csv")
    write_panel_binary(scen.panel, out / "panel_truth.vpanel")


def noisy_panel(panel: VoltagePanel, references, tau_ref: float, tau_cons: float, seed: int) -> VoltagePanel:
    """Metered panel: reference buses carry ``tau_ref`` noise, every other bus ``tau_cons``."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFE]))
    m = panel.magnitudes
    tau = np.full(m.shape[1], tau_cons)
    tau[[r - 1 for r in references]] = tau_ref
    noise = 1.0 + rng.standard_normal(m.shape) * (tau / 3.0)[None, :, None]
    return VoltagePanel(m * noise)


def cmd_simulate(args, cfg, out: Path, threads: int = 1) -> None:
    net, scen, _, _ = build_from_config(cfg, threads)
    _write_simulation(scen, out)
    noisy = noisy_panel(scen.panel, net.references, cfg.tau_ref, cfg.tau_consumer, cfg.noise_seed)
    write_panel_csv(noisy, out / "panel_noisy.csv")
    m = scen.panel.magnitudes
    print(f"T={scen.panel.T}, buses={net.n_buses}, |V| in [{m.min():.4f}, {m.max():.4f}] pu")


def _write_zoning(zoning, curve, net, out: Path) -> None:
    _dump_json({
        "n_zones": zoning.n_zones, "silhouette": zoning.silhouette, "labels": zoning.to_json(),
        "references": {str(c): list(r) for c, r in zoning.references.items()},
        "consumers": {str(c): [net.devices[k].name for k in v] for c, v in zoning.consumers.items()},
        "counts": {str(c): zoning.counts(c) for c in range(1, zoning.n_zones + 1)},
        "flagged": zoning.flagged(),
    }, out / "zoning.json")
    with open(out / "silhouette.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["clusters", "silhouette"])
        for c, s in sorted(curve.items()):
            w.writerow([c, repr(float(s))])


def cmd_cluster(args, cfg, out: Path, threads: int = 1) -> None:
    net = prepare_network(load_input_network(cfg))
    zoning, curve = make_zoning(net, cfg.clusters, tuple(cfg.cluster_range), cfg.cluster_seed,
                                cfg.weights, cfg.restarts, threads)
    _write_zoning(zoning, curve, net, out)
    print(f"C={zoning.n_zones} silhouette={zoning.silhouette:.4f} curve=" +
          ", ".join(f"{c}:{s:.3f}" for c, s in sorted(curve.items())))


def identify(cfg: PipelineConfig, net, scen, zoning) -> tuple[list[list], list[dict]]:
    """One noisy realisation (run 0 of the Monte Carlo stream) and every requested model."""
    models = select_models(cfg.metrics, cfg.schemes)
    betas = zone_beta(scen.panel, zoning, cfg.beta_fraction)
    naive = cfg.naive_reference or (net.references[0] if net.references else net.slack)
    rows, summary = [], []
    for task in zone_tasks(scen, zoning, betas, naive_reference=naive):
        cons, refs, nref = noisy_measurements(task, cfg.tau_ref, cfg.tau_consumer, zone_rng(cfg.noise_seed, task.zone, 0))
        for model, est in estimate_zone(task, models, cons, refs, nref).items():
            if est is None:
                continue
            for j, k in enumerate(task.consumer_ids):
                rows.append([net.devices[k].bus_id, task.zone, model.metric, model.scheme,
                             PHASES[est.phases[j]], *[repr(float(x)) for x in est.weights[j]]])
            summary.append({"zone": task.zone, "metric": model.metric, "scheme": model.scheme,
                            "A": accuracy(est, task.truth), "ties": est.n_ties, "references": list(est.references)})
    return rows, summary


def cmd_identify(args, cfg, out: Path, threads: int = 1) -> None:
    net, scen, zoning, curve = build_from_config(cfg, threads)
    rows, summary = identify(cfg, net, scen, zoning)
    with open(out / "estimates.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["consumer_node", "zone", "metric", "scheme", "phase", "weightA", "weightB", "weightC"])
        w.writerows(rows)
    _dump_json(summary, out / "identify_summary.json")
    for m in select_models(cfg.metrics, cfg.schemes):
        sel = [s for s in summary if s["metric"] == m.metric and s["scheme"] == m.scheme]
        if sel:
            print(f"{m.name}: " + " ".join(f"z{s['zone']}={s['A']:.1f}" for s in sel))


def run_studies(cfg: PipelineConfig, net, zoning, out: Path, threads: int) -> dict:
    ctx = study_context(cfg, net, zoning, threads)
    models = select_models(cfg.metrics, cfg.schemes)
    s3j1 = [m for m in models if m.scheme == "S3" and m.metric == "J1"] or models[:1]
    headline = {}
    for case in cfg.case_studies:
        if case == "cs1":
            rep = run_cs1(ctx, cfg.balance_classes, cfg.mappings_per_class, cfg.tau_consumer, models)
            headline[case] = {"winners": rep["winners"], "mean_F_S3_J1": rep["mean_F_S3_J1"]}
        elif case == "cs2":
            rep = run_cs2(ctx, cfg.tau_consumer)
        elif case == "cs3":
            rep = run_cs3(ctx, cfg.tau_grid, s3j1 + [Model("J1", "S0")] if "S0" in cfg.schemes else s3j1)
            headline[case] = {k: round(v["A"], 2) for k, v in rep["overall"].items()}
        else:
            rep = run_cs4(ctx, cfg.neutral_modes, max(cfg.tau_consumer, 0.05), s3j1)
            headline[case] = {k: round(v["A"], 2) for k, v in rep["overall"].items()}
        write_report(rep, out / case)
    return headline


def cmd_evaluate(args, cfg, out: Path, threads: int = 1) -> None:
    net = prepare_network(load_input_network(cfg))
    zoning, curve = make_zoning(net, cfg.clusters, tuple(cfg.cluster_range), cfg.cluster_seed,
                                cfg.weights, cfg.restarts, threads)
    headline = run_studies(cfg, net, zoning, out, threads)
    print(json.dumps(headline, sort_keys=True))


def cmd_pipeline(args, cfg, out: Path, threads: int = 1) -> None:
    net, scen, zoning, curve = build_from_config(cfg, threads)
    _write_simulation(scen, out)
    _write_zoning(zoning, curve, net, out)
    rows, summary = identify(cfg, net, scen, zoning)
    with open(out / "estimates.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["consumer_node", "zone", "metric", "scheme", "phase", "weightA", "weightB", "weightC"])
        w.writerows(rows)
    _dump_json(summary, out / "identify_summary.json")
    headline = run_studies(cfg, net, zoning, out, threads)
    print(json.dumps(headline, sort_keys=True))


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _config_epilog() -> str:
    lines = ["config keys (TOML tables):"]
    for sec, keys in SECTIONS.items():
        lines.append(f"  [{sec}]")
        defaults = PipelineConfig()
        for k in keys:
            lines.append(f"    {k} = {getattr(defaults, k)!r}  - {HELP[k]}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file (see the key list below)")
    common.add_argument("--output", help="parent directory for run-NNN folders (config: output)")
    common.add_argument("--network", help="network JSON (config: network)")
    common.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")
    common.add_argument("--clusters", type=int, help="zone count, 0 for the silhouette argmax")
    common.add_argument("--cluster-range", type=int, nargs=2, metavar=("MIN", "MAX"), help="silhouette range")
    common.add_argument("--beta-fraction", type=float, help="salient threshold fraction")
    common.add_argument("--neutral-mode", choices=("eq1", "kron", "drop"))
    common.add_argument("--tau", type=float, help="set both tau_ref and tau_consumer")
    common.add_argument("--Q", type=int, help="Monte Carlo runs")
    common.add_argument("-v", "--verbose", action="store_true")

    epilog = _config_epilog()
    fmt = argparse.RawDescriptionHelpFormatter
    p = argparse.ArgumentParser(prog="phaseid", description="Consensus phase identification on LV networks.",
                                epilog=epilog, formatter_class=fmt)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("parse", parents=[common], epilog=epilog, formatter_class=fmt,
                   help="validate a network file and report its topology")
    g = sub.add_parser("genfeeder", parents=[common], epilog=epilog, formatter_class=fmt,
                       help="write a synthetic multi-feeder network and its manifest")
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--consumers", type=int, default=40)
    g.add_argument("--trunk", type=int, nargs="+", help="trunk nodes per feeder")
    g.add_argument("--laterals", type=int, nargs="+", help="lateral nodes per feeder")
    for name, text in (("simulate", "voltage panels (truth and metered)"),
                       ("cluster", "zoning and silhouette curve"),
                       ("identify", "phase estimates of every requested model"),
                       ("evaluate", "Monte Carlo case studies"),
                       ("pipeline", "everything above, end to end")):
        sub.add_parser(name, parents=[common], epilog=epilog, formatter_class=fmt, help=text)
    return p


def resolve_config(args) -> PipelineConfig:
    over = {
        "output": args.output, "network": args.network, "clusters": args.clusters,
        "cluster_range": list(args.cluster_range) if args.cluster_range else None,
        "beta_fraction": args.beta_fraction, "neutral_mode": args.neutral_mode, "Q": args.Q,
        "tau_ref": args.tau, "tau_consumer": args.tau,
    }
    return load_config(args.config, **over)


COMMANDS = {
    "parse": cmd_parse, "genfeeder": cmd_genfeeder, "simulate": cmd_simulate, "cluster": cmd_cluster,
    "identify": cmd_identify, "evaluate": cmd_evaluate, "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        threads = min(args.threads, os.cpu_count() or 1)
        out = fresh_run_dir(cfg.output)
        (out / "config.toml").write_text(dump_config(cfg), encoding="utf-8")
        fn = COMMANDS[args.command]
        if args.command in ("parse", "genfeeder"):
            fn(args, cfg, out)
        else:
            fn(args, cfg, out, threads)
        print(f"output: {out}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, NetworkError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (PowerFlowError, ClusteringError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
