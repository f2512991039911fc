"""Command-line interface.

Exit codes: 0 success, 1 usage problems (bad flags, conflicting options),
2 data problems (missing or invalid files, failed validation), 3 numeric
failures.  All file outputs are byte-deterministic for a given input and
seed; the benchmark CSV's ``seconds`` column is the one measured quantity
and therefore the one exception.
"""
from __future__ import annotations

import json
import sys
from dataclasses import asdict

import click

from . import backend as _backend
from .bags import Dataset
from .bench import run_bench, write_csv
from .cv import cross_validate
from .dataio import (load_dataset, load_model, save_dataset, save_model,
                     save_predictions)
from .errors import ContractViolation, DataError, NumericFailure
from .metrics import dummy_baselines, evaluate, predict_dataset
from .synth import SynthSpec, generate
from .train import TrainConfig, em_train, em_train_stochastic, fit_kernel


def _load_validated(path: str) -> Dataset:
    ds, report = load_dataset(path)
    for finding in report.warnings():
        click.echo(str(finding), err=True)
    if report.fatal:
        raise DataError(f"{path}: dataset failed validation:\n"
                        + "\n".join(str(f) for f in report.fatals()))
    return ds


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise click.UsageError(f"{flag} expects comma-separated integers")
    if not values:
        raise click.UsageError(f"{flag} expects at least one value")
    return values


@click.group()
@click.option("--threads", default=1, show_default=True,
              help="Worker-thread bound for commands that can fan out.")
@click.pass_context
def cli(ctx, threads):
    """Instance annotation for multi-instance multi-label data."""
    if threads < 1:
        raise click.UsageError("--threads must be at least 1")
    ctx.obj = {"threads": threads}


def _train_options(fn):
    fn = click.option("--seed", default=0, show_default=True,
                      help="RNG seed for sampling and dictionaries.")(fn)
    fn = click.option("--dict-frac", type=float, default=None,
                      help="Kernel dictionary fraction (requires --kernel).")(fn)
    fn = click.option("--kernel-s", type=float, default=None,
                      help="Kernel width scale (requires --kernel).")(fn)
    fn = click.option("--kernel", is_flag=True,
                      help="Train on RBF similarity features.")(fn)
    fn = click.option("--prune-frac", default=0.0, show_default=True,
                      help="Fraction of heaviest bags dropped before training.")(fn)
    fn = click.option("--sample-frac", default=1.0, show_default=True,
                      help="Bag fraction per EM iteration (<1: stochastic).")(fn)
    fn = click.option("--l2", default=0.0, show_default=True,
                      help="L2 penalty strength.")(fn)
    fn = click.option("--iters", default=50, show_default=True,
                      help="EM iterations.")(fn)
    return fn


def _build_config(iters, l2, sample_frac, prune_frac, seed) -> TrainConfig:
    try:
        return TrainConfig(em_iterations=iters, l2=l2,
                           sample_fraction=sample_frac,
                           prune_fraction=prune_frac, seed=seed)
    except ContractViolation as exc:
        raise click.UsageError(str(exc)) from None


def _fit(ds, cfg, kernel, kernel_s, dict_frac):
    if (kernel_s is not None or dict_frac is not None) and not kernel:
        raise click.UsageError("--kernel-s and --dict-frac require --kernel")
    if kernel:
        return fit_kernel(ds, cfg, scale=kernel_s if kernel_s else 1.0,
                          dictionary_fraction=dict_frac if dict_frac else 1.0)
    if cfg.sample_fraction < 1.0:
        return em_train_stochastic(ds, cfg)
    return em_train(ds, cfg)


@cli.command()
@click.option("--data", "data_path", required=True,
              help="Training dataset (JSONL).")
@click.option("--out", "out_path", required=True,
              help="Where to write the model (JSON).")
@_train_options
@click.option("--trace", "trace_path", default=None,
              help="Optional objective-trace JSON (no wall times).")
def train(data_path, out_path, iters, l2, sample_frac, prune_frac, kernel,
          kernel_s, dict_frac, seed, trace_path):
    """Train a model with EM and write it to --out."""
    ds = _load_validated(data_path)
    cfg = _build_config(iters, l2, sample_frac, prune_frac, seed)
    model, trace = _fit(ds, cfg, kernel, kernel_s, dict_frac)
    save_model(model, out_path)
    if trace_path:
        # Timing fields stay out so repeated runs are byte-identical.
        doc = {
            "surrogate": trace.surrogate,
            "log_likelihood": trace.log_likelihood,
            "backtrack_steps": trace.backtrack_steps,
            "final_log_likelihood": trace.final_log_likelihood,
        }
        with open(trace_path, "w", encoding="utf-8") as out:
            json.dump(doc, out, sort_keys=True)
            out.write("\n")
    click.echo(f"trained {model.mode} model on {len(ds)} bags -> {out_path}")


@cli.command()
@click.option("--model", "model_path", required=True)
@click.option("--data", "data_path", required=True)
@click.option("--mode", type=click.Choice(["inductive", "transductive"]),
              default="inductive", show_default=True)
@click.option("--out", "out_path", required=True,
              help="Where to write predictions (JSONL).")
def predict(model_path, data_path, mode, out_path):
    """Annotate every instance of a dataset with a trained model."""
    model = load_model(model_path)
    ds = _load_validated(data_path)
    if ds.feature_dim != model.input_dim:
        raise DataError(f"model expects {model.input_dim}-dim features, "
                        f"dataset has {ds.feature_dim}")
    preds = predict_dataset(model, ds, mode)
    save_predictions(preds, out_path)
    click.echo(f"wrote {mode} predictions for {len(ds)} bags -> {out_path}")


@cli.command("evaluate")
@click.option("--model", "model_path", required=True)
@click.option("--data", "data_path", required=True)
@click.option("--dummy-train", "dummy_path", default=None,
              help="Dataset for the dummy baseline (default: --data).")
@click.option("--raw-coverage", is_flag=True,
              help="Report coverage without the 1/C normalization.")
@click.option("--out", "out_path", default=None,
              help="Write the report JSON here instead of stdout.")
def evaluate_cmd(model_path, data_path, dummy_path, raw_coverage, out_path):
    """Score a model on a dataset, next to the no-features baseline."""
    model = load_model(model_path)
    ds = _load_validated(data_path)
    if ds.feature_dim != model.input_dim:
        raise DataError(f"model expects {model.input_dim}-dim features, "
                        f"dataset has {ds.feature_dim}")
    dummy_ds = _load_validated(dummy_path) if dummy_path else ds
    dummy_preds, _ = dummy_baselines(dummy_ds, ds)
    report = {
        "inductive": evaluate(predict_dataset(model, ds, "inductive"),
                              ds, raw_coverage).to_dict(),
        "transductive": evaluate(predict_dataset(model, ds, "transductive"),
                                 ds, raw_coverage).to_dict(),
        "dummy": evaluate(dummy_preds, ds, raw_coverage).to_dict(),
    }
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as out:
            out.write(text)
    else:
        click.echo(text, nl=False)


@cli.command()
@click.option("--data", "data_path", required=True)
@click.option("--folds", default=10, show_default=True)
@_train_options
@click.option("--out", "out_path", default=None,
              help="Write the per-fold report JSON here instead of stdout.")
@click.pass_context
def cv(ctx, data_path, folds, iters, l2, sample_frac, prune_frac, kernel,
       kernel_s, dict_frac, seed, out_path):
    """K-fold cross-validated training and evaluation."""
    if (kernel_s is not None or dict_frac is not None) and not kernel:
        raise click.UsageError("--kernel-s and --dict-frac require --kernel")
    ds = _load_validated(data_path)
    cfg = _build_config(iters, l2, sample_frac, prune_frac, seed)
    try:
        result = cross_validate(
            ds, cfg, folds, split_seed=seed, kernel=kernel,
            kernel_scale=kernel_s if kernel_s else 1.0,
            dictionary_fraction=dict_frac if dict_frac else 1.0,
            stochastic=cfg.sample_fraction < 1.0,
            threads=ctx.obj["threads"])
    except ContractViolation as exc:
        raise click.UsageError(str(exc)) from None
    text = json.dumps(result.to_dict(), sort_keys=True, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as out:
            out.write(text)
    else:
        click.echo(text, nl=False)


@cli.command()
@click.option("--out", "out_path", required=True)
@click.option("--classes", default=8, show_default=True)
@click.option("--dim", default=10, show_default=True)
@click.option("--bags", default=300, show_default=True)
@click.option("--instances", nargs=2, type=int, default=(3, 8),
              show_default=True, help="Min and max instances per bag.")
@click.option("--labels", nargs=2, type=int, default=(1, 3),
              show_default=True, help="Min and max labels per bag.")
@click.option("--sep", default=4.0, show_default=True,
              help="Class separation (cluster radius / ring gap).")
@click.option("--noise", default=1.0, show_default=True)
@click.option("--geometry", type=click.Choice(["clusters", "ring"]),
              default="clusters", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--name", default="", help="Dataset name for the header.")
def generate_cmd(out_path, classes, dim, bags, instances, labels, sep,
                 noise, geometry, seed, name):
    """Write a synthetic dataset with known instance labels.

    The class geometry (cluster centers) is part of the seed, so two
    seeds describe two unrelated worlds: held-out evaluation should
    split one generated file (as `cv` does), not generate a second one.
    """
    try:
        spec = SynthSpec(num_classes=classes, feature_dim=dim,
                         num_bags=bags, instances_low=instances[0],
                         instances_high=instances[1], labels_low=labels[0],
                         labels_high=labels[1], separation=sep, noise=noise,
                         geometry=geometry, seed=seed, name=name)
    except ContractViolation as exc:
        raise click.UsageError(str(exc)) from None
    ds = generate(spec)
    save_dataset(ds, out_path)
    click.echo(f"wrote {len(ds)} bags ({ds.num_instances} instances) "
               f"-> {out_path}")


@cli.command()
@click.option("--engine", "engines", multiple=True,
              type=click.Choice(["forward", "fast", "brute"]),
              help="Engines to time (repeatable; default forward and fast).")
@click.option("--nb", default="8,16,32,64,128", show_default=True,
              help="Comma-separated bag sizes.")
@click.option("--card", default="3", show_default=True,
              help="Comma-separated label-set sizes.")
@click.option("--bags", default=64, show_default=True,
              help="Bags per measurement point.")
@click.option("--repeats", default=3, show_default=True,
              help="Timings per point (best is reported).")
@click.option("--seed", default=0, show_default=True)
@click.option("--backend", "backend_name",
              type=click.Choice(["auto", "compiled", "python"]),
              default="auto", show_default=True,
              help="Kernel implementation to time.")
@click.option("--out", "out_path", default=None,
              help="Write the CSV here instead of stdout.")
def bench(engines, nb, card, bags, repeats, seed, backend_name, out_path):
    """Time the posterior engines over a sweep of bag shapes (CSV)."""
    nb_values = _parse_int_list(nb, "--nb")
    cards = _parse_int_list(card, "--card")
    if backend_name == "compiled" and "compiled" not in _backend.available():
        raise click.UsageError("compiled backend is not built")
    try:
        rows = run_bench(engines or ("forward", "fast"), nb_values, cards,
                         bags, repeats, seed, backend_name)
    except ContractViolation as exc:
        raise click.UsageError(str(exc)) from None
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as out:
            write_csv(rows, out)
    else:
        write_csv(rows, sys.stdout)


def main(argv=None) -> int:
    """Entry point translating failures into the documented exit codes."""
    try:
        cli.main(args=argv, prog_name="mimla", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except DataError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except NumericFailure as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        return 3
    except ContractViolation as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
