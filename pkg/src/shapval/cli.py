"""Pipeline commands: one TOML config in, reproducible artifacts out.

Each command reads the artifacts of the previous stage from --out and
rewrites its own outputs deterministically, so rerunning any command with
unchanged inputs yields byte-identical files. Failures exit non-zero with
a machine-readable JSON error on stderr.
"""

from __future__ import annotations

import functools
import json
import logging
import os
import sys

import click
import numpy as np

from . import __version__
from .amortizer import Amortizer, TrainConfig, predict_attributions, train_amortizer
from .analysis import AlignmentRegressionSpec, alignment_regression, analyze_logs
from .config import RunConfig, load_config
from .dataset import (CATEGORICAL, PreprocessState, Splits, clean_sentinels, fit_preprocess,
                      load_csv, stratified_split, transform)
from .datagen import demo_credit, demo_maternal, save_csv
from .errors import SchemaError
from .gbdt import GBDTConfig, TreeEnsemble, train_gbdt
from .metrics import (MarginalRemover, aggregate_report, attribution_error, compute_agreement,
                      contrastivity, default_perturb_spec, deletion_auc, insertion_auc,
                      perturbation_sensitivity, recall_at_k, sparsity_ratio)
from .models import LogisticConfig, LogisticModel, roc_auc, train_logistic
from .oracle import MAX_ENUM_DIM, exact_shapley, kernelshap_estimate, reference_budget
from .seeding import substream
from .simulate import FakeClock, PlantedEffects, run_scripted_study
from .study import EXPLANATION_ARMS, StudyService, assemble_context
from .valuefunctions import (CounterfactualSearchError, VARIANTS, ValueFunctionSpec,
                             build_background, generate_counterfactual)

_LOG = logging.getLogger("shapval")


def _guarded(fn):
    """Exit non-zero with a JSON error line on stderr for any failure."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (click.ClickException, click.Abort, SystemExit):
            raise
        except Exception as exc:
            sys.stderr.write(json.dumps(
                {"error": type(exc).__name__, "message": str(exc)}, sort_keys=True) + "\n")
            raise SystemExit(1)

    return wrapper


def _pipeline_options(fn):
    fn = click.option("--out", "out_dir", default=None,
                      help="Output directory (overrides the config).")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Global seed (overrides the config).")(fn)
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=True, dir_okay=False),
                      help="TOML run configuration.")(fn)
    return fn


@click.group()
@click.version_option(__version__, prog_name="shapval")
def main():
    """Shapley value-function workbench pipeline."""
    level = os.environ.get("SHAPVAL_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


# ---- artifact plumbing --------------------------------------------------------


def _path(cfg: RunConfig, *parts: str) -> str:
    p = os.path.join(cfg.out_dir, *parts)
    os.makedirs(os.path.dirname(p), exist_ok=True)
    return p


def _dump_json(path: str, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _read_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _write_csv(path: str, body: str, cfg: RunConfig):
    with open(path, "w") as fh:
        fh.write(f"# config_hash={cfg.config_hash()}\n")
        fh.write(body)


def _tuplify(v):
    return tuple(_tuplify(x) for x in v) if isinstance(v, (list, tuple)) else v


def _spec_for(cfg: RunConfig, variant: str) -> ValueFunctionSpec:
    params = {k: _tuplify(v) for k, v in cfg.variants.get(variant, {}).items()}
    if variant in ("counterfactual", "filtered_conditional"):
        params.setdefault("threshold", cfg.threshold)
    return ValueFunctionSpec(variant, seed=cfg.seed, **params)


class _Prepared:
    """Artifacts of prepare-data, reloaded and transformed."""

    def __init__(self, cfg: RunConfig):
        meta = _read_json(_path(cfg, "data", "prepared.json"))
        self.state = PreprocessState.from_json(json.dumps(meta["preprocess"]))
        self.splits = Splits.from_json(json.dumps(meta["splits"]))
        self.ds = load_csv(_path(cfg, "data", "cleaned.csv"), meta["label_column"],
                           schema=self.state.schema, name=meta["dataset"])
        self.X = transform(self.ds, self.state)
        self.y = self.ds.y
        self.cat_mask = np.array([fs.kind == CATEGORICAL for fs in self.state.schema])
        self.cat_levels = {j: len(self.state.levels[fs.name])
                           for j, fs in enumerate(self.state.schema)
                           if fs.kind == CATEGORICAL}

    @property
    def train_X(self):
        return self.X[self.splits.train]

    def eval_rows(self, cfg: RunConfig) -> np.ndarray:
        n = min(cfg.n_eval, len(self.splits.test))
        return np.asarray(self.splits.test[:n])


def _model_path(cfg: RunConfig, family: str) -> str:
    return _path(cfg, "models", f"{family}.json")


def _load_model(cfg: RunConfig, family: str):
    obj = _read_json(_model_path(cfg, family))
    text = json.dumps(obj["checkpoint"])
    if family == "logistic":
        return LogisticModel.from_json(text)
    if family == "gbdt":
        return TreeEnsemble.from_json(text)
    raise SchemaError(f"unknown model family {family!r}")


def _load_amortizer(cfg: RunConfig, family: str, variant: str) -> Amortizer:
    obj = _read_json(_path(cfg, "amortizers", family, f"{variant}.json"))
    return Amortizer.from_json(json.dumps(obj["checkpoint"]))


# ---- data commands -------------------------------------------------------------


@main.command("make-demo-data")
@click.option("--out", "out_dir", required=True, help="Directory for the demo CSV files.")
@click.option("--seed", type=int, default=0)
@_guarded
def make_demo_data(out_dir: str, seed: int):
    """Write the two synthetic demo datasets as CSV."""
    os.makedirs(out_dir, exist_ok=True)
    for ds in (demo_credit(seed), demo_maternal(seed)):
        path = os.path.join(out_dir, f"{ds.name}.csv")
        save_csv(ds, path)
        click.echo(f"wrote {path} ({ds.n} rows, {ds.d} features, "
                   f"{int(ds.y.sum())} positives)")


@main.command("prepare-data")
@_pipeline_options
@_guarded
def prepare_data(config_path, seed, out_dir):
    """Clean sentinels, split, and fit the preprocessing state."""
    cfg = load_config(config_path, seed, out_dir)
    ds = load_csv(cfg.dataset_csv, cfg.label_column, name=cfg.dataset_name)
    ds, report = clean_sentinels(ds)
    splits = stratified_split(ds.y, cfg.seed)
    state = fit_preprocess(ds.take(np.asarray(splits.train)))
    save_csv(ds, _path(cfg, "data", "cleaned.csv"), cfg.label_column)
    _dump_json(_path(cfg, "data", "prepared.json"), {
        "config_hash": cfg.config_hash(),
        "dataset": ds.name,
        "label_column": cfg.label_column,
        "n_rows": ds.n,
        "sentinel_report": {"dropped": report.dropped, "imputed": report.imputed},
        "splits": json.loads(splits.to_json()),
        "preprocess": json.loads(state.to_json()),
    })
    click.echo(f"prepared {ds.name}: {ds.n} rows "
               f"(train {len(splits.train)}, val {len(splits.val)}, test {len(splits.test)}); "
               f"dropped {report.dropped}, imputed {report.imputed}")


@main.command("train-models")
@_pipeline_options
@_guarded
def train_models(config_path, seed, out_dir):
    """Fit both model families on the prepared split."""
    cfg = load_config(config_path, seed, out_dir)
    prep = _Prepared(cfg)
    tr, va, te = (np.asarray(prep.splits.train), np.asarray(prep.splits.val),
                  np.asarray(prep.splits.test))
    report = {"config_hash": cfg.config_hash(), "dataset": prep.ds.name, "families": {}}
    for family in cfg.model_families:
        if family == "logistic":
            model = train_logistic(prep.X[tr], prep.y[tr],
                                   LogisticConfig(**cfg.logistic),
                                   feature_names=prep.ds.feature_names)
        elif family == "gbdt":
            params = {"seed": cfg.seed, **cfg.gbdt}
            model = train_gbdt(prep.X[tr], prep.y[tr], GBDTConfig(**params),
                               X_val=prep.X[va], y_val=prep.y[va],
                               feature_names=prep.ds.feature_names)
        else:
            raise SchemaError(f"unknown model family {family!r}")
        _dump_json(_model_path(cfg, family),
                   {"config_hash": cfg.config_hash(),
                    "checkpoint": json.loads(model.to_json())})
        aucs = {split: round(roc_auc(prep.y[idx], model.score(prep.X[idx])), 6)
                for split, idx in (("train", tr), ("val", va), ("test", te))}
        report["families"][family] = {"auc": aucs, "fingerprint": model.fingerprint()}
        click.echo(f"{family}: AUC train {aucs['train']:.3f} "
                   f"val {aucs['val']:.3f} test {aucs['test']:.3f}")
    _dump_json(_path(cfg, "models", "report.json"), report)


# ---- explanation commands -------------------------------------------------------


@main.command("train-amortizers")
@_pipeline_options
@click.option("--variant", "only_variant", default=None,
              help="Train a single variant instead of all 8.")
@_guarded
def train_amortizers(config_path, seed, out_dir, only_variant):
    """Fit one attribution net per (model family, variant)."""
    cfg = load_config(config_path, seed, out_dir)
    prep = _Prepared(cfg)
    variants = (only_variant,) if only_variant else VARIANTS
    tc = TrainConfig(seed=cfg.seed, **cfg.amortizer)
    for family in cfg.model_families:
        model = _load_model(cfg, family)
        manifest = {"config_hash": cfg.config_hash(), "variants": {}}
        for variant in variants:
            spec = _spec_for(cfg, variant)
            net, history = train_amortizer(
                prep.train_X, model, spec, tc, cat_levels=prep.cat_levels,
                hidden=cfg.hidden, model_fingerprint=model.fingerprint())
            _dump_json(_path(cfg, "amortizers", family, f"{variant}.json"),
                       {"config_hash": cfg.config_hash(),
                        "checkpoint": json.loads(net.to_json()),
                        "epochs": len(history),
                        "final_loss": history[-1]})
            manifest["variants"][variant] = {"epochs": len(history),
                                             "final_loss": history[-1],
                                             "spec_fingerprint": spec.fingerprint()}
            click.echo(f"{family}/{variant}: {len(history)} epochs, "
                       f"final loss {history[-1]:.6f}")
        _dump_json(_path(cfg, "amortizers", family, "manifest.json"), manifest)


def _reference_attribution(x, spec, prep, model, cfg):
    bg = build_background(prep.train_X, spec, model=model, x=x, cat_mask=prep.cat_mask)
    d = prep.X.shape[1]
    if d <= MAX_ENUM_DIM:
        return exact_shapley(x, bg, model)
    return kernelshap_estimate(x, bg, model, n_samples=reference_budget(d, cfg.oracle_per_dim),
                               seed=cfg.seed)


@main.command("compute-oracle")
@_pipeline_options
@_guarded
def compute_oracle(config_path, seed, out_dir):
    """Reference attributions for the evaluation slice of the test split."""
    cfg = load_config(config_path, seed, out_dir)
    prep = _Prepared(cfg)
    rows = prep.eval_rows(cfg)
    d = prep.X.shape[1]
    method = "exact" if d <= MAX_ENUM_DIM else "kernelshap"
    for family in cfg.model_families:
        model = _load_model(cfg, family)
        out = {"config_hash": cfg.config_hash(), "dataset": prep.ds.name,
               "family": family, "method": method,
               "case_ids": [f"c{i:04d}" for i in range(len(rows))],
               "rows": [int(r) for r in rows], "variants": {}}
        for variant in VARIANTS:
            spec = _spec_for(cfg, variant)
            phis, bases, preds = [], [], []
            for r in rows:
                av = _reference_attribution(prep.X[r], spec, prep, model, cfg)
                phis.append([float(p) for p in av.phi])
                bases.append(float(av.base_value))
                preds.append(float(av.prediction))
            out["variants"][variant] = {"phi": phis, "base": bases, "pred": preds}
            click.echo(f"{family}/{variant}: {len(rows)} instances ({method})")
        _dump_json(_path(cfg, "oracle", f"{family}.json"), out)


def _make_explainer(source, spec, prep, model, cfg, family, variant, static_bg):
    """Callable z -> phi consistent with how the pipeline explains z."""
    if source == "oracle":
        def explain(z):
            return _reference_attribution(z, spec, prep, model, cfg).phi
        return explain
    net = _load_amortizer(cfg, family, variant)

    def explain(z):
        if static_bg is not None:
            base = static_bg.base_value
        else:
            base = build_background(prep.train_X, spec, model=model, x=z,
                                    cat_mask=prep.cat_mask).base_value
        return predict_attributions(net, z, model, base).phi

    return explain


@main.command("evaluate-metrics")
@_pipeline_options
@click.option("--source", type=click.Choice(["oracle", "amortizer"]), default="oracle",
              help="Which attributions to score.")
@_guarded
def evaluate_metrics(config_path, seed, out_dir, source):
    """Per-instance quality metrics, aggregated across variants."""
    cfg = load_config(config_path, seed, out_dir)
    prep = _Prepared(cfg)
    rows = prep.eval_rows(cfg)
    per_instance: dict = {}
    per_case: dict = {}
    for family in cfg.model_families:
        model = _load_model(cfg, family)
        oracle = _read_json(_path(cfg, "oracle", f"{family}.json"))
        case_ids = oracle["case_ids"]
        remover = MarginalRemover(prep.train_X, model, seed=cfg.seed)
        pspec = default_perturb_spec(prep.train_X, prep.cat_mask)
        # Contrast partner: a searched counterfactual across the threshold,
        # shared by every variant so their contrastivity values compare.
        cf_partner: list[np.ndarray | None] = []
        for i, r in enumerate(rows):
            try:
                cf_partner.append(generate_counterfactual(
                    prep.X[r], model, prep.train_X, cat_mask=prep.cat_mask,
                    threshold=cfg.threshold,
                    rng=substream(cfg.seed, "contrast", family, i)))
            except CounterfactualSearchError:
                cf_partner.append(None)

        fam_phis: dict[str, np.ndarray] = {}
        per_instance[(prep.ds.name, family)] = {}
        per_case[family] = {}
        for variant in VARIANTS:
            spec = _spec_for(cfg, variant)
            ref = oracle["variants"][variant]
            phi_ref = np.asarray(ref["phi"], dtype=np.float64)
            static_bg = None
            if variant not in ("counterfactual", "filtered_conditional"):
                static_bg = build_background(prep.train_X, spec, model=model,
                                             cat_mask=prep.cat_mask)
            explain = _make_explainer(source, spec, prep, model, cfg, family, variant,
                                      static_bg)
            vals = {m: [] for m in ("deletion_auc", "insertion_auc", "sparsity",
                                    "sensitivity", "contrastivity", "attribution_error",
                                    "recall@1", "recall@3", "recall@5")}
            phis = np.empty_like(phi_ref)
            for i, r in enumerate(rows):
                x = prep.X[r]
                phi = np.asarray(explain(x), dtype=np.float64)
                phis[i] = phi
                vals["deletion_auc"].append(deletion_auc(x, phi, model, remover))
                vals["insertion_auc"].append(insertion_auc(x, phi, model, remover))
                vals["sparsity"].append(sparsity_ratio(phi))
                rng = substream(cfg.seed, "sensitivity", family, variant, i)
                vals["sensitivity"].append(perturbation_sensitivity(
                    x, explain, model, pspec, delta=cfg.delta,
                    n_draws=cfg.sensitivity_draws, rng=rng))
                if cf_partner[i] is not None:
                    vals["contrastivity"].append(contrastivity(
                        x, cf_partner[i], explain, model, delta=cfg.delta))
                else:
                    vals["contrastivity"].append(None)
                vals["attribution_error"].append(attribution_error(phi, phi_ref[i]))
                for k in (1, 3, 5):
                    vals[f"recall@{k}"].append(recall_at_k(phi, phi_ref[i], k))
            per_instance[(prep.ds.name, family)][variant] = vals
            fam_phis[variant] = phis
            per_case[family][variant] = {
                cid: {m: vals[m][i] for m in vals} for i, cid in enumerate(case_ids)}
            click.echo(f"{family}/{variant}: metrics on {len(rows)} instances ({source})")

        agreement = compute_agreement(fam_phis)
        _write_csv(_path(cfg, "metrics", f"agreement-{family}.csv"), agreement.to_csv(), cfg)
        with open(_path(cfg, "metrics", f"agreement-{family}.json"), "w") as fh:
            fh.write(agreement.to_json() + "\n")

    meta = {"config_hash": cfg.config_hash(), "dataset": prep.ds.name, "source": source,
            "families": list(cfg.model_families)}
    report = aggregate_report(per_instance, n_boot=cfg.n_boot, seed=cfg.seed, meta=meta)
    with open(_path(cfg, "metrics", "report.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    _write_csv(_path(cfg, "metrics", "report.csv"), report.to_csv(), cfg)
    _dump_json(_path(cfg, "metrics", "per_case.json"),
               {"config_hash": cfg.config_hash(), "source": source, "families": per_case})
    click.echo(f"wrote metrics report ({len(per_instance)} dataset-model pairs)")


# ---- study commands --------------------------------------------------------------


def _build_service(cfg: RunConfig, log_path: str, clock=None) -> StudyService:
    prep = _Prepared(cfg)
    family = cfg.study_model
    model = _load_model(cfg, family)
    oracle = _read_json(_path(cfg, "oracle", f"{family}.json"))
    rows = np.asarray(oracle["rows"])
    attributions = {v: np.asarray(oracle["variants"][v]["phi"], dtype=np.float64)
                    for v in VARIANTS}
    bases = {v: np.asarray(oracle["variants"][v]["base"], dtype=np.float64)
             for v in VARIANTS}
    fingerprints = {v: _spec_for(cfg, v).fingerprint() for v in VARIANTS}
    fingerprints["none"] = ""

    pool_ds = prep.ds.take(rows)
    pool_raw = [{name: col[i] for name, col in zip(prep.ds.feature_names, pool_ds.columns)}
                for i in range(pool_ds.n)]
    train_ds = prep.ds.take(np.asarray(prep.splits.train))
    train_raw = {name: col for name, col in zip(prep.ds.feature_names, train_ds.columns)}
    schema_kinds = {fs.name: fs.kind for fs in prep.state.schema}

    context = assemble_context(
        dataset=prep.ds.name, feature_names=prep.ds.feature_names,
        schema_kinds=schema_kinds, pool_raw=pool_raw,
        pool_scores=model.score(prep.X[rows]), pool_labels=prep.y[rows],
        val_scores=model.score(prep.X[np.asarray(prep.splits.val)]),
        threshold=cfg.threshold, attributions=attributions, bases=bases,
        fingerprints=fingerprints, train_raw=train_raw, train_y=train_ds.y,
        cases_per_session=cfg.cases_per_session)
    return StudyService(context, log_path, clock=clock)


@main.command("serve-study")
@_pipeline_options
@_guarded
def serve_study(config_path, seed, out_dir):
    """Run the case-review HTTP service until interrupted."""
    import uvicorn

    from .webapp import create_app

    cfg = load_config(config_path, seed, out_dir)
    service = _build_service(cfg, _path(cfg, "study", "review-log.jsonl"))
    click.echo(f"serving {service.ctx.dataset} on "
               f"http://{cfg.bind_host}:{cfg.bind_port} "
               f"({len(service.ctx.cases)} cases)")
    uvicorn.run(create_app(service), host=cfg.bind_host, port=cfg.bind_port,
                log_level=os.environ.get("SHAPVAL_LOG_LEVEL", "warning").lower())


def _planted_from(cfg: RunConfig, accuracy_or, confidence_shift) -> PlantedEffects:
    acc_or = accuracy_or if accuracy_or is not None else cfg.planted.get("accuracy_or")
    conf = (confidence_shift if confidence_shift is not None
            else cfg.planted.get("confidence_shift"))
    clar_or = cfg.planted.get("clarity_or")
    time_lm = cfg.planted.get("time_logmult")
    mk = lambda v: {a: float(v) for a in EXPLANATION_ARMS} if v is not None else {}
    return PlantedEffects(
        accuracy=mk(np.log(acc_or) if acc_or is not None else None),
        confidence=mk(conf), clarity=mk(np.log(clar_or) if clar_or is not None else None),
        time=mk(time_lm))


@main.command("simulate-analysts")
@_pipeline_options
@click.option("--n", "n_analysts", type=int, default=None,
              help="Number of simulated analysts (default from config).")
@click.option("--planted-accuracy-or", type=float, default=None,
              help="Odds ratio on decision accuracy planted in every explanation arm.")
@click.option("--planted-confidence-shift", type=float, default=None,
              help="Latent confidence shift planted in every explanation arm.")
@_guarded
def simulate_analysts(config_path, seed, out_dir, n_analysts, planted_accuracy_or,
                      planted_confidence_shift):
    """Write a synthetic review log through the real service."""
    cfg = load_config(config_path, seed, out_dir)
    log_path = _path(cfg, "study", "review-log.jsonl")
    if os.path.exists(log_path):
        os.remove(log_path)
    clock = FakeClock()
    service = _build_service(cfg, log_path, clock=clock)
    n = n_analysts if n_analysts is not None else cfg.n_analysts
    planted = _planted_from(cfg, planted_accuracy_or, planted_confidence_shift)
    written = run_scripted_study(service, n, cfg.seed, planted, clock)
    export = service.export_ndjson()
    with open(_path(cfg, "study", "export.ndjson"), "w") as fh:
        fh.write(export)
    click.echo(f"simulated {n} analysts -> {written} records "
               f"({log_path}; export.ndjson alongside)")


@main.command("analyze-logs")
@_pipeline_options
@click.option("--log", "log_file", default=None,
              help="Review log (NDJSON); defaults to the study export in --out.")
@_guarded
def analyze_logs_cmd(config_path, seed, out_dir, log_file):
    """Fit the outcome models and the metric-alignment regressions."""
    from .study import import_ndjson

    cfg = load_config(config_path, seed, out_dir)
    path = log_file or _path(cfg, "study", "export.ndjson")
    with open(path) as fh:
        records = import_ndjson(fh.read())
    if not records:
        raise SchemaError(f"no records in {path}")

    report = analyze_logs(records, n_time_boot=cfg.analysis_time_boot, seed=cfg.seed)
    _dump_json(_path(cfg, "analysis", "report.json"),
               {"config_hash": cfg.config_hash(), "report": json.loads(report.to_json())})
    _write_csv(_path(cfg, "analysis", "effects.csv"), report.to_csv(), cfg)

    # Alignment joins the served metric values; drop rows with undefined ones.
    per_case = _read_json(_path(cfg, "metrics", "per_case.json"))
    fam = per_case["families"].get(cfg.study_model, {})
    metrics = ("sparsity", "insertion_auc", "sensitivity", "contrastivity")
    joined = {}
    for variant, by_case in fam.items():
        for cid, vals in by_case.items():
            if all(vals.get(m) is not None for m in metrics):
                joined[(cid, variant)] = {m: vals[m] for m in metrics}
    lines = ["response,metric,effect,ci_low,ci_high,se"]
    for response in ("clarity", "confidence"):
        spec = AlignmentRegressionSpec(response, metrics)
        for eff in alignment_regression(records, joined, spec):
            lines.append(f"{response},{eff.name.removeprefix('metric_')},"
                         f"{eff.effect:.6f},{eff.ci_low:.6f},{eff.ci_high:.6f},{eff.se:.6f}")
    _write_csv(_path(cfg, "analysis", "alignment.csv"), "\n".join(lines) + "\n", cfg)
    click.echo(f"analyzed {len(records)} records -> effects.csv, alignment.csv")


if __name__ == "__main__":
    main()
