"""Command-line entry point: ``hwstcl synth | graphs | pretrain | train | eval | saliency | sweep``."""
from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np
from pydantic import ValidationError

from . import experiments
from .config import RunConfig, describe_error, desk_profile
from .model import HWSTCLModel
from .saliency import UntrainedModelError, saliency, saliency_pairs, write_report
from .signal_io import CohortError, load_manifest, save_cohort_binary, synth_cohort, write_cohort
from .training import (cross_validate, evaluate, load_model, pretrain_stage1, save_model,
                       seed_streams, write_csv, write_cv_run)

log = logging.getLogger("hwstcl")


class UsageFailure(click.ClickException):
    """Bad configuration or missing input; exits with status 2 like click usage errors."""

    exit_code = 2

    def show(self, file=None):
        click.echo(f"error: {self.format_message()}", err=True, file=file)


# -- configuration --------------------------------------------------------

_FLAG_KEYS = {
    "T": "window.T", "tau": "graph.tau", "lambda_hw": "train.lambda_hw", "seed": "train.seed",
    "folds": "train.folds", "repeats": "train.repeats", "stage1_epochs": "train.stage1.epochs",
    "stage2_epochs": "train.stage2.epochs",
}


def config_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="RunConfig JSON file."),
        click.option("--profile", type=click.Choice(["paper", "desk"]), default=None,
                     help="Base defaults when no --config is given (default: paper)."),
        click.option("--T", "T", type=int, help="Number of windows."),
        click.option("--tau", type=float, help="Sparsification threshold."),
        click.option("--lambda-hw", type=float, help="Weight of the contrastive term in stage 2."),
        click.option("--seed", type=int),
        click.option("--folds", type=int),
        click.option("--repeats", type=int),
        click.option("--stage1-epochs", type=int),
        click.option("--stage2-epochs", type=int),
        click.option("--no-pretrain", is_flag=True, help="Skip stage 1."),
        click.option("--no-prior", is_flag=True, help="Bypass the distance-decay prior."),
        click.option("--decoupled", is_flag=True, help="Drop cross-window edges from the operator."),
        click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
                     help="Dotted override, value parsed as JSON (e.g. model.hidden=32)."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def resolve_config(config_path=None, profile=None, sets=(), no_pretrain=False, no_prior=False,
                   decoupled=False, fallback: Path | None = None, **flags) -> RunConfig:
    try:
        if config_path:
            cfg = RunConfig.from_file(config_path)
        elif fallback is not None and fallback.is_file():
            cfg = RunConfig.from_file(fallback)
        else:
            cfg = desk_profile() if profile == "desk" else RunConfig()
        overrides = {_FLAG_KEYS[k]: v for k, v in flags.items() if k in _FLAG_KEYS and v is not None}
        if no_pretrain:
            overrides["train.pretrain"] = False
        if no_prior:
            overrides["graph.use_distance_prior"] = False
        if decoupled:
            overrides["model.joint_temporal"] = False
        for item in sets:
            key, sep, raw = item.partition("=")
            if not sep:
                raise UsageFailure(f"--set expects KEY=VALUE, got {item!r}")
            try:
                overrides[key] = json.loads(raw)
            except json.JSONDecodeError:
                overrides[key] = raw
        return cfg.with_overrides(overrides) if overrides else cfg
    except ValidationError as e:
        raise UsageFailure("invalid configuration\n" + describe_error(e)) from None
    except KeyError as e:
        raise UsageFailure(str(e.args[0])) from None


def _cohort(cfg: RunConfig, cohort_path):
    path = cohort_path or cfg.paths.cohort
    if not path:
        raise UsageFailure("missing required field 'paths.cohort' (pass --cohort)")
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    if not p.exists():
        raise UsageFailure(f"paths.cohort: {p} does not exist")
    try:
        return load_manifest(p, min_timepoints=cfg.window.min_timepoints,
                             on_short=cfg.window.on_short)
    except CohortError as e:
        raise UsageFailure(f"cohort {p}: {e}") from None


def _graphs(cfg: RunConfig, cohort):
    try:
        return experiments.build_graphs(cohort, cfg)
    except (CohortError, ValueError) as e:
        raise UsageFailure(str(e)) from None


def _out(cfg: RunConfig, out) -> Path:
    p = Path(out or cfg.paths.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _config_record(cfg: RunConfig, cohort_path, out: Path) -> dict:
    data = cfg.model_dump(mode="json")
    data["paths"]["cohort"] = str(cohort_path) if cohort_path else cfg.paths.cohort
    data["paths"]["out_dir"] = str(out)
    return data


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*a, **kw):
        try:
            return fn(*a, **kw)
        except UntrainedModelError as e:
            raise UsageFailure(str(e)) from None
    return wrapper


# -- commands ---------------------------------------------------------------


@click.group(invoke_without_command=True)
@click.option("--log-level", default="WARNING", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]))
@click.option("--schema", is_flag=True, help="Print the RunConfig JSON schema and exit.")
@click.pass_context
def main(ctx, log_level, schema):
    """Hawkes-weighted spatio-temporal graph classifier for ROI time series."""
    logging.basicConfig(level=log_level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    if schema:
        click.echo(RunConfig.schema_json(), nl=False)
        ctx.exit(0)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())
        ctx.exit(2)


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n-subjects", type=int, default=200, show_default=True)
@click.option("--rois", type=int, default=20, show_default=True)
@click.option("--timepoints", type=int, default=240, show_default=True)
@click.option("--tr", type=float, default=2.0, show_default=True)
@click.option("--effect", type=float, default=0.8, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--binary", is_flag=True, help="Write cohort.hwst instead of CSV files.")
def synth(seed, n_subjects, rois, timepoints, tr, effect, out, binary):
    """Generate a labeled synthetic cohort with a planted effect."""
    try:
        cohort = synth_cohort(seed, n_subjects, rois, timepoints, tr, effect)
    except CohortError as e:
        raise UsageFailure(str(e)) from None
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if binary:
        path = out / "cohort.hwst"
        save_cohort_binary(cohort, path)
    else:
        path = write_cohort(cohort, out)
    click.echo(str(path))


@main.command()
@config_options
@click.option("--cohort", "cohort_path", type=click.Path())
@click.option("--out", type=click.Path(file_okay=False))
def graphs(cohort_path, out, **opts):
    """Build window graphs and write adjacency/feature CSVs plus graphs.json."""
    cfg = resolve_config(**opts)
    cohort = _cohort(cfg, cohort_path)
    g = _graphs(cfg, cohort)
    out = _out(cfg, out)
    for s in g.subjects:
        d = out / s.subject_id
        d.mkdir(exist_ok=True)
        for t in range(s.T):
            np.savetxt(d / f"adjacency_t{t + 1:02d}.csv", s.A[t], delimiter=",", fmt="%.17g")
            np.savetxt(d / f"features_t{t + 1:02d}.csv", s.X[t], delimiter=",", fmt="%.17g")
    side = {"T": cfg.window.T, "S": g.S, "d": g.d, "tau": cfg.graph.tau,
            "sigma_mm": None if not np.isfinite(g.sigma_mm) else g.sigma_mm,
            "use_distance_prior": cfg.graph.use_distance_prior,
            "bin_freqs_hz": [float(f) for f in g.bin_freqs_hz],
            "mean_edges": experiments.mean_edge_count(g),
            "subjects": [{"subject_id": s.subject_id, "label": s.label} for s in g.subjects]}
    (out / "graphs.json").write_text(json.dumps(side, indent=2) + "\n")
    click.echo(str(out / "graphs.json"))


@main.command()
@config_options
@click.option("--cohort", "cohort_path", type=click.Path())
@click.option("--out", type=click.Path(file_okay=False))
def pretrain(cohort_path, out, **opts):
    """Stage 1 only: contrastive pretraining of encoder and kernel on the whole cohort."""
    cfg = resolve_config(**opts)
    g = _graphs(cfg, _cohort(cfg, cohort_path))
    out = _out(cfg, out)
    init_rng, pre_rng, _, _ = seed_streams(cfg.train.seed, 0, 999_999)
    model = HWSTCLModel(g.d, cfg.model_config_(), init_rng)
    logs = pretrain_stage1(g, model, cfg.hwcl_config(), cfg.train_config().stage1, pre_rng)
    (out / "logs").mkdir(exist_ok=True)
    write_csv(out / "logs" / "stage1.csv", logs)
    save_model(out / "pretrained.hwst", model.state_dict(), model.config_dict(), 1)
    (out / "config.json").write_text(
        json.dumps(_config_record(cfg, cohort_path, out), indent=2, sort_keys=True) + "\n")
    last = logs[-1] if logs else {}
    click.echo(json.dumps({"checkpoint": str(out / "pretrained.hwst"), **last}))


@main.command()
@config_options
@click.option("--cohort", "cohort_path", type=click.Path())
@click.option("--out", type=click.Path(file_okay=False))
@click.option("--workers", type=int, default=None, help="Override HWSTCL_THREADS.")
@click.option("--pretrained", type=click.Path(exists=True, dir_okay=False),
              help="Stage-1 checkpoint used by every fold instead of per-fold pretraining.")
def train(cohort_path, out, workers, pretrained, **opts):
    """Cross-validated two-stage training; writes a run directory."""
    cfg = resolve_config(**opts)
    g = _graphs(cfg, _cohort(cfg, cohort_path))
    out = _out(cfg, out)
    shared = None
    if pretrained:
        base = load_model(pretrained)
        shared = {k: v.data.copy() for k, v in base.encoder_parameters().items()}
    try:
        result = cross_validate(g, cfg.model_config_(), cfg.hwcl_config(),
                                cfg.train_config(), workers=workers, pretrained=shared)
    except ValueError as e:
        raise UsageFailure(str(e)) from None
    write_cv_run(out, result, _config_record(cfg, cohort_path, out))
    click.echo(json.dumps({m: round(v["mean"], 4) for m, v in result.summary.items()}))


@main.command(name="eval")
@config_options
@click.option("--checkpoint", type=click.Path(dir_okay=False))
@click.option("--cohort", "cohort_path", type=click.Path())
@click.option("--out", type=click.Path(file_okay=False))
@handle_errors
def eval_cmd(checkpoint, cohort_path, out, **opts):
    """Evaluate a trained checkpoint on a cohort."""
    ckpt = checkpoint
    if not ckpt:
        cfg0 = resolve_config(**opts)
        ckpt = cfg0.paths.checkpoint
    if not ckpt:
        raise UsageFailure("missing required field 'checkpoint' (pass --checkpoint or set "
                           "paths.checkpoint)")
    ckpt = Path(ckpt)
    if not ckpt.exists():
        raise UsageFailure(f"checkpoint: {ckpt} does not exist")
    cfg = resolve_config(fallback=ckpt.parent.parent / "config.json", **opts)
    model = load_model(ckpt)
    if model.trained_stage < 2:
        raise UntrainedModelError(f"{ckpt} holds a stage-{model.trained_stage} model; "
                                  "evaluation needs a stage-2 checkpoint")
    g = _graphs(cfg, _cohort(cfg, cohort_path))
    report = evaluate(model, g, cfg.train.threshold)
    row = report.as_row()
    if out:
        out = _out(cfg, out)
        write_csv(out / "eval.csv", [row])
    click.echo(json.dumps(row))


@main.command(name="saliency")
@config_options
@click.option("--run-dir", type=click.Path(exists=True, file_okay=False),
              help="Training run; each fold model is scored on its own test split.")
@click.option("--checkpoint", "checkpoints", multiple=True, type=click.Path(dir_okay=False),
              help="Checkpoint(s) scored on the whole cohort (repeatable).")
@click.option("--cohort", "cohort_path", type=click.Path())
@click.option("--out", type=click.Path(file_okay=False))
@click.option("--top-edges", type=int)
@click.option("--top-rois", type=int)
@click.option("--signed", is_flag=True, help="Average signed gradients before taking magnitudes.")
@click.option("--correct-only", is_flag=True, help="Only subjects the model classifies correctly.")
@handle_errors
def saliency_cmd(run_dir, checkpoints, cohort_path, out, top_edges, top_rois, signed,
                 correct_only, **opts):
    """Gradient saliency of connections and ROIs."""
    if not run_dir and not checkpoints:
        raise UsageFailure("missing required field 'checkpoint' (pass --run-dir or --checkpoint)")
    fallback = Path(run_dir) / "config.json" if run_dir else None
    cfg = resolve_config(fallback=fallback, **opts)
    sal = cfg.saliency.model_dump()
    if top_edges is not None:
        sal["top_edges"] = top_edges
    if top_rois is not None:
        sal["top_rois"] = top_rois
    sal["absolute"] = sal["absolute"] and not signed
    sal["correct_only"] = sal["correct_only"] or correct_only
    try:
        cfg = cfg.with_overrides({f"saliency.{k}": v for k, v in sal.items()})
    except ValidationError as e:
        raise UsageFailure("invalid configuration\n" + describe_error(e)) from None
    if run_dir and not cohort_path:
        cohort_path = json.loads((Path(run_dir) / "config.json").read_text())["paths"]["cohort"]
    g = _graphs(cfg, _cohort(cfg, cohort_path))
    kw = cfg.saliency.model_dump()
    if run_dir:
        run = Path(run_dir)
        folds = json.loads((run / "folds.json").read_text())
        last = max(f["repeat"] for f in folds)
        by_id = {s.subject_id: s for s in g.subjects}
        pairs = []
        for f in folds:
            if f["repeat"] != last:
                continue
            m = load_model(run / "checkpoints" / f"r{f['repeat']:02d}_f{f['fold']:02d}.hwst")
            pairs.append((m, [by_id[i] for i in f["test_ids"]]))
        report = saliency_pairs(pairs, **kw)
    else:
        missing = [c for c in checkpoints if not Path(c).exists()]
        if missing:
            raise UsageFailure(f"checkpoint: {missing[0]} does not exist")
        report = saliency([load_model(c) for c in checkpoints], g, **kw)
    out = _out(cfg, out)
    write_report(report, out)
    click.echo(json.dumps({"top_rois": [i for i, _ in report.top_rois],
                           "top_edges": [[i, j] for i, j, _ in report.top_edges]}))


@main.command(name="sweep")
@config_options
@click.option("--param", type=click.Choice(sorted(experiments.SWEEP_PARAMS)), required=True)
@click.option("--grid", help="Comma-separated values (default: the config's sweep grid).")
@click.option("--cohort", "cohort_path", type=click.Path())
@click.option("--out", type=click.Path(file_okay=False))
@click.option("--workers", type=int, default=None)
def sweep_cmd(param, grid, cohort_path, out, workers, **opts):
    """One cross-validation per grid value; writes sweep_<param>.csv."""
    cfg = resolve_config(**opts)
    if grid:
        cast = int if param == "T" else float
        try:
            values = [cast(v) for v in grid.split(",") if v.strip()]
        except ValueError:
            raise UsageFailure(f"sweep.{param}: cannot parse grid {grid!r}") from None
    else:
        values = list(getattr(cfg.sweep, param))
    if not values:
        raise UsageFailure(f"sweep.{param}: grid is empty")
    cohort = _cohort(cfg, cohort_path)
    out = _out(cfg, out)
    try:
        rows = experiments.sweep(param, values, cohort, cfg, workers)
    except ValidationError as e:
        raise UsageFailure("invalid configuration\n" + describe_error(e)) from None
    except (CohortError, ValueError) as e:
        raise UsageFailure(str(e)) from None
    write_csv(out / f"sweep_{param}.csv", rows)
    (out / "config.json").write_text(
        json.dumps(_config_record(cfg, cohort_path, out), indent=2, sort_keys=True) + "\n")
    click.echo(str(out / f"sweep_{param}.csv"))


if __name__ == "__main__":
    main()
