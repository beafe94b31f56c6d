"""Pipeline configuration: a flat set of keys grouped into TOML tables.

Every seed is explicit. The worker count is a runtime flag, not a config
key, since results do not depend on it. ``load_config`` merges a TOML file over the defaults
and validates the result; ``dump_config`` writes the fully resolved config
back out for provenance.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib as tomli
except ImportError:  # Python < 3.11
    import tomli
import tomli_w

from .network import NEUTRAL_MODES


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    # [paths]
    network: str = ""
    profiles: str = ""
    output: str = "out"
    # [seeds]
    mapping_seed: int = 11
    load_seed: int = 22
    noise_seed: int = 33
    cluster_seed: int = 44
    # [simulation]
    T: int = 720
    neutral_mode: str = "eq1"
    v_slack: float = 1.05
    tau_ref: float = 0.01
    tau_consumer: float = 0.01
    # [clustering]
    clusters: int = 3
    cluster_range: list = field(default_factory=lambda: [2, 10])
    beta_fraction: float = 0.4
    weights: str = "admittance"
    restarts: int = 20
    # [identification]
    metrics: list = field(default_factory=lambda: ["J1", "J2", "J3"])
    schemes: list = field(default_factory=lambda: ["S0", "S1", "S2", "S3", "S4"])
    Q: int = 1000
    naive_reference: int = 0
    # [study]
    case_studies: list = field(default_factory=lambda: ["cs1", "cs2", "cs3", "cs4"])
    balance_classes: list = field(default_factory=lambda: ["C1", "C2", "C3"])
    mappings_per_class: int = 3
    tau_grid: list = field(default_factory=lambda: [0.0, 0.01, 0.02, 0.05, 0.10])
    neutral_modes: list = field(default_factory=lambda: ["eq1", "kron", "drop"])


SECTIONS = {
    "paths": ("network", "profiles", "output"),
    "seeds": ("mapping_seed", "load_seed", "noise_seed", "cluster_seed"),
    "simulation": ("T", "neutral_mode", "v_slack", "tau_ref", "tau_consumer"),
    "clustering": ("clusters", "cluster_range", "beta_fraction", "weights", "restarts"),
    "identification": ("metrics", "schemes", "Q", "naive_reference"),
    "study": ("case_studies", "balance_classes", "mappings_per_class", "tau_grid", "neutral_modes"),
}

HELP = {
    "network": "network JSON file; empty selects the bundled desk feeder",
    "profiles": "optional load profile CSV (device_id,t,p_pu,q_pu); empty generates profiles",
    "output": "parent directory for run-NNN output folders",
    "mapping_seed": "seed of the random phase mapping",
    "load_seed": "seed of the synthetic load profiles",
    "noise_seed": "master seed of the metering-noise Monte Carlo",
    "cluster_seed": "seed of the k-means restarts",
    "T": "number of hourly samples (>= 24)",
    "neutral_mode": "four-wire reduction: eq1, kron or drop",
    "v_slack": "slack voltage magnitude in pu",
    "tau_ref": "metering tolerance at reference meters",
    "tau_consumer": "metering tolerance at consumer meters",
    "clusters": "zone count; 0 picks the silhouette argmax over cluster_range",
    "cluster_range": "inclusive [min, max] zone counts for the silhouette curve",
    "beta_fraction": "salient threshold as a fraction of the widest voltage swing in a zone",
    "weights": "clustering edge weights: admittance or incidence",
    "restarts": "k-means++ restarts",
    "metrics": "correlation inputs among J1, J2, J3",
    "schemes": "estimators among S0 (naive) and S1-S4 (consensus)",
    "Q": "Monte Carlo noise realisations (100 is a quick mode)",
    "naive_reference": "bus used by S0; 0 means the busbar (first listed reference)",
    "case_studies": "studies run by 'evaluate' and 'pipeline' among cs1-cs4",
    "balance_classes": "mapping balance classes compared in cs1",
    "mappings_per_class": "mappings drawn per balance class in cs1",
    "tau_grid": "tolerances swept in cs3",
    "neutral_modes": "neutral reductions compared in cs4",
}


def validate(cfg: PipelineConfig) -> PipelineConfig:
    def bad(key, msg):
        raise ConfigError(f"{key}: {msg}")

    if cfg.T < 24:
        bad("T", "must be at least 24")
    for key in ("tau_ref", "tau_consumer", "beta_fraction"):
        if getattr(cfg, key) < 0:
            bad(key, "must be non-negative")
    if any(t < 0 for t in cfg.tau_grid):
        bad("tau_grid", "tolerances must be non-negative")
    if cfg.neutral_mode not in NEUTRAL_MODES:
        bad("neutral_mode", f"expected one of {NEUTRAL_MODES}")
    if any(m not in NEUTRAL_MODES for m in cfg.neutral_modes):
        bad("neutral_modes", f"expected entries from {NEUTRAL_MODES}")
    if any(m not in ("J1", "J2", "J3") for m in cfg.metrics) or not cfg.metrics:
        bad("metrics", "expected a non-empty list from J1, J2, J3")
    if any(s not in ("S0", "S1", "S2", "S3", "S4") for s in cfg.schemes) or not cfg.schemes:
        bad("schemes", "expected a non-empty list from S0..S4")
    if any(c not in ("cs1", "cs2", "cs3", "cs4") for c in cfg.case_studies):
        bad("case_studies", "expected entries from cs1..cs4")
    if any(c not in ("C1", "C2", "C3") for c in cfg.balance_classes):
        bad("balance_classes", "expected entries from C1, C2, C3")
    if len(cfg.cluster_range) != 2 or cfg.cluster_range[0] < 2 or cfg.cluster_range[0] > cfg.cluster_range[1]:
        bad("cluster_range", "expected [min, max] with 2 <= min <= max")
    if cfg.clusters < 0:
        bad("clusters", "must be >= 0")
    if cfg.Q < 1:
        bad("Q", "must be >= 1")
    if cfg.restarts < 1 or cfg.mappings_per_class < 1:
        bad("restarts/mappings_per_class", "must be >= 1")
    if cfg.weights not in ("admittance", "incidence"):
        bad("weights", "expected admittance or incidence")
    return cfg


def config_from_dict(doc: dict) -> PipelineConfig:
    known = {f.name: f for f in fields(PipelineConfig)}
    values = {}
    for section, body in doc.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, val in body.items():
            if key not in SECTIONS[section]:
                raise ConfigError(f"[{section}] has unknown key {key!r}")
            default = getattr(PipelineConfig(), key)
            if isinstance(default, bool) or (not isinstance(val, type(default))
                                              and not (isinstance(default, float) and isinstance(val, int))):
                raise ConfigError(f"[{section}].{key}: expected {type(default).__name__}, got {type(val).__name__}")
            values[key] = float(val) if isinstance(default, float) else val
    assert set(values) <= set(known)
    return validate(PipelineConfig(**values))


def load_config(path=None, **overrides) -> PipelineConfig:
    doc = {}
    if path:
        p = Path(path)
        try:
            doc = tomli.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"{p}: config file not found") from exc
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from exc
    cfg = config_from_dict(doc)
    cfg = dataclasses.replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return validate(cfg)


def config_to_dict(cfg: PipelineConfig) -> dict:
    return {sec: {k: getattr(cfg, k) for k in keys} for sec, keys in SECTIONS.items()}


def dump_config(cfg: PipelineConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))
