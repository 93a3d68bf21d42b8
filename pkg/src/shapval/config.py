"""Run configuration: one TOML file drives every pipeline command.

All randomness downstream flows from the single ``seed`` through named
sub-streams, and every artifact embeds ``config_hash`` so reruns are
checkable byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import SchemaError

_KNOWN_TOP = {"seed", "out_dir", "dataset", "models", "amortizer", "variants",
              "metrics", "oracle", "study", "simulate", "analysis"}


@dataclass(frozen=True)
class RunConfig:
    seed: int
    out_dir: str
    dataset_name: str
    dataset_csv: str
    label_column: str = "label"
    threshold: float = 0.5
    model_families: tuple[str, ...] = ("logistic", "gbdt")
    logistic: dict = field(default_factory=dict)
    gbdt: dict = field(default_factory=dict)
    amortizer: dict = field(default_factory=dict)
    hidden: tuple[int, ...] = (128, 128, 128)
    variants: dict = field(default_factory=dict)      # variant name -> param overrides
    n_eval: int = 40
    n_boot: int = 50
    delta: float = 1e-6
    sensitivity_draws: int = 4
    oracle_per_dim: int = 2048
    bind_host: str = "127.0.0.1"
    bind_port: int = 8765
    study_model: str = "logistic"
    cases_per_session: int = 9
    n_analysts: int = 20
    planted: dict = field(default_factory=dict)       # outcome -> planted value
    analysis_time_boot: int = 50

    def config_hash(self) -> str:
        body = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(body.encode()).hexdigest()[:16]


def load_config(path, seed: int | None = None, out_dir: str | None = None) -> RunConfig:
    """Parse and validate a TOML config; --seed/--out override the file."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    unknown = set(raw) - _KNOWN_TOP
    if unknown:
        raise SchemaError(f"unknown config sections: {sorted(unknown)}")

    if seed is None:
        seed = raw.get("seed")
    if seed is None:
        raise SchemaError("config must set a seed (or pass --seed)")
    resolved_out = out_dir or raw.get("out_dir")
    if not resolved_out:
        raise SchemaError("config must set out_dir (or pass --out)")

    ds = raw.get("dataset", {})
    if "csv" not in ds:
        raise SchemaError("config [dataset] must set csv")
    csv_path = ds["csv"]
    if not os.path.exists(csv_path):
        raise SchemaError(f"dataset csv does not exist: {csv_path}")

    models = raw.get("models", {})
    metrics = raw.get("metrics", {})
    study = raw.get("study", {})
    simulate = raw.get("simulate", {})
    amort = dict(raw.get("amortizer", {}))
    hidden = tuple(int(h) for h in amort.pop("hidden", (128, 128, 128)))

    return RunConfig(
        seed=int(seed),
        out_dir=str(resolved_out),
        dataset_name=str(ds.get("name", os.path.splitext(os.path.basename(csv_path))[0])),
        dataset_csv=str(csv_path),
        label_column=str(ds.get("label_column", "label")),
        threshold=float(ds.get("threshold", 0.5)),
        model_families=tuple(models.get("families", ("logistic", "gbdt"))),
        logistic=dict(models.get("logistic", {})),
        gbdt=dict(models.get("gbdt", {})),
        amortizer=amort,
        hidden=hidden,
        variants={k: dict(v) for k, v in raw.get("variants", {}).items()},
        n_eval=int(metrics.get("n_eval", 40)),
        n_boot=int(metrics.get("n_boot", 50)),
        delta=float(metrics.get("delta", 1e-6)),
        sensitivity_draws=int(metrics.get("sensitivity_draws", 4)),
        oracle_per_dim=int(raw.get("oracle", {}).get("per_dim_budget", 2048)),
        bind_host=str(study.get("host", "127.0.0.1")),
        bind_port=int(study.get("port", 8765)),
        study_model=str(study.get("model", "logistic")),
        cases_per_session=int(study.get("cases_per_session", 9)),
        n_analysts=int(simulate.get("n_analysts", 20)),
        planted={k: float(v) for k, v in simulate.get("planted", {}).items()},
        analysis_time_boot=int(raw.get("analysis", {}).get("time_boot", 50)),
    )
