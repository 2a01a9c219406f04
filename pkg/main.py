"""
lsor - Self-organized longitudinal representations on synthetic cohorts
Main entry point: gen, train, analyze, probe, ablate and runs subcommands
"""

import argparse
import json
import platform
import shutil
import sys
import time
import traceback
from contextlib import contextmanager
from dataclasses import fields
from datetime import datetime
from pathlib import Path

import numpy as np
import psutil

from analysis import (PROBE_TASKS, age_bin_mass_centers, age_bins, cell_factor_maps,
                      cell_prototypes, cross_validate_probe, dcor_report,
                      diagnostic_group_averages, embed_cohort, evaluate_representation,
                      example_subjects, group_average_grid, is_nondecreasing, pca_project,
                      probe_dataset, subject_grid_sequence, subject_trajectories, write_csv,
                      write_grid_csv, write_pca_csv, write_probe_csv, write_sample_table)
from config import Config, GROUPS
from database import RunRegistry
from errors import ConfigError, DataError, LsorError
from logger import RunLogger
from synthdata import Cohort, generate_cohort
from trainer import ABLATIONS, TrainConfig, fit, load_checkpoint
from ui import render_heatmap_svg, render_trajectory_field_svg, write_svg

COMMANDS = ("gen", "train", "analyze", "probe", "ablate", "runs")

FLAG_HELP = {
    "lambda_commit": "weight of the commitment loss",
    "lambda_som": "weight of the SOM loss",
    "lambda_dir": "weight of the direction loss",
    "learning_rate": "Adam learning rate",
    "weight_decay": "decoupled weight decay",
    "pretrain_epochs": "reconstruction-only epochs before k-means init",
    "train_epochs": "epochs of the full objective",
    "batch_size": "pairs per batch",
    "ema_alpha": "keep rate of the reference-trajectory EMA",
    "tau_min": "final neighbourhood width factor",
    "tau_max": "initial neighbourhood width factor",
    "n_rows": "SOM grid rows",
    "n_cols": "SOM grid columns",
    "seed": "seed for initialization and batch order",
    "latent_dim": "latent dimension D",
    "hidden_dims": "hidden layer widths of the encoder (mirrored in the decoder)",
    "leaky_slope": "negative slope of the leaky rectifier",
    "hard_som": "hard-assignment SOM instead of soft neighbourhood weights",
    "checkpoint_every": "epochs between intermediate checkpoints (0 disables them)",
    "augment_sigma": "std of additive noise on training observations",
    "kmeans_max_iter": "Lloyd iterations of the k-means initialization",
}


def host_snapshot():
    """Machine facts recorded in each manifest."""
    memory = psutil.virtual_memory()
    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "cpu_count": psutil.cpu_count(logical=True),
        "memory_total_mb": round(memory.total / 2 ** 20),
        "memory_percent": memory.percent,
        "timestamp": datetime.now().isoformat(),
    }


class RunSession:
    """
    Run directory, logger, registry record and manifest of one command.
    A failed command leaves no run directory behind.
    """

    def __init__(self, command, seed, args, config=None):
        self.command = command
        self.seed = seed
        self.config = config or {}
        self.runs_root = Path(args.runs_root)
        self.registry = RunRegistry(Config.get_database_path(self.runs_root))
        self.run_dir = self._make_run_dir(args.run_dir, args.force)
        try:
            self.logger = RunLogger(self.run_dir / Config.LOG_FILE, console=not args.quiet,
                                    name=f"lsor.{command}", console_level=args.log_level)
        except Exception:
            shutil.rmtree(self.run_dir, ignore_errors=True)
            raise
        self.run_id = None
        self.inputs = {}
        self.artifacts = {}
        self.timings = {}
        self.summary = {}

    def _make_run_dir(self, run_dir, force):
        if run_dir:
            path = Path(run_dir)
        else:
            stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
            base = Config.get_runs_path(self.runs_root) / f"{stamp}_seed{self.seed}_{self.command}"
            path, suffix = base, 2
            while path.exists():
                path = base.with_name(f"{base.name}_{suffix}")
                suffix += 1

        if path.exists() and any(path.iterdir()):
            if not force:
                raise ConfigError(f"run directory {path} is not empty; pass --force to overwrite")
            shutil.rmtree(path)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def __enter__(self):
        self.started = time.perf_counter()
        self.start_time = datetime.now().isoformat()
        try:
            self.run_id = self.registry.create_run(self.command, self.seed, self.run_dir,
                                                   self.config)
        except Exception:
            self.logger.close()
            shutil.rmtree(self.run_dir, ignore_errors=True)
            raise
        self.logger.log_event("SYSTEM", f"{self.command} run {self.run_id} in {self.run_dir}")
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.add_artifact("events", self.logger.export_events(self.path(Config.EVENTS_NAME)))
            self.write_manifest()
            self.registry.complete_run(self.run_id, self.summary)
            self.logger.log_event("SYSTEM", f"{self.command} finished in "
                                            f"{time.perf_counter() - self.started:.1f}s")
            self.logger.close()
            return False

        self.logger.log_error(exc_type.__name__, str(exc),
                              ''.join(traceback.format_exception(exc_type, exc, tb)))
        self.registry.fail_run(self.run_id, str(exc))
        self.logger.close()
        shutil.rmtree(self.run_dir, ignore_errors=True)
        return False

    @contextmanager
    def phase(self, name):
        start = time.perf_counter()
        self.logger.log_event("SYSTEM", f"phase {name} started")
        yield
        self.timings[name] = round(time.perf_counter() - start, 3)

    def add_artifact(self, name, path):
        path = Path(path)
        self.artifacts[name] = str(path.relative_to(self.run_dir))
        self.registry.store_artifact(self.run_id, name, path)
        return path

    def path(self, name):
        return self.run_dir / name

    def write_manifest(self):
        manifest = {
            "app": Config.APP_NAME,
            "version": Config.APP_VERSION,
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "defaults": Config.get_config_dict(),
            "inputs": self.inputs,
            "artifacts": self.artifacts,
            "timings": {
                "start": self.start_time,
                "end": datetime.now().isoformat(),
                "seconds": round(time.perf_counter() - self.started, 3),
                "phases": self.timings,
            },
            "summary": self.summary,
            "log": self.logger.event_counts(),
            "host": host_snapshot(),
        }
        self.path(Config.MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_cohort(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"cohort file not found: {path}")
    return Cohort.from_csv(path)


def load_manifest(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: malformed manifest ({e})") from None
    if manifest.get("command") not in ("train", "ablate") or "config" not in manifest:
        raise ConfigError(f"{path}: not a training manifest")
    return manifest


def resolve_train_config(args):
    """Defaults, then --manifest or --config file, then explicit flags."""
    cohort = getattr(args, "cohort", None)
    if getattr(args, "manifest", None):
        manifest = load_manifest(args.manifest)
        base = TrainConfig.from_dict(manifest["config"])
        cohort = cohort or manifest.get("inputs", {}).get("cohort")
    elif args.config:
        base = TrainConfig.from_file(args.config)
    else:
        base = TrainConfig()

    if not cohort:
        raise ConfigError("no cohort given; pass --cohort or --manifest")
    overrides = {f.name: getattr(args, f.name, None) for f in fields(TrainConfig)}
    return base.merged(overrides).check(), Path(cohort)


# Subcommands

def cmd_gen(args):
    out = Path(args.out)
    if out.exists() and not args.force:
        raise ConfigError(f"{out} exists; pass --force to overwrite")
    if args.min_visits < 2 or args.max_visits < args.min_visits:
        raise ConfigError("visits need 2 <= --min-visits <= --max-visits")

    logger = RunLogger(None, console=not args.quiet, name="lsor.gen", console_level=args.log_level)
    cohort = generate_cohort(args.subjects, (args.min_visits, args.max_visits), args.input_dim,
                             seed=args.seed, noise_sigma=args.noise_sigma,
                             subject_sigma=args.subject_sigma)
    out.parent.mkdir(parents=True, exist_ok=True)
    cohort.to_csv(out)

    counts = {g: sum(s.group == g for s in cohort.subjects) for g in GROUPS}
    logger.log_event("DATA", f"wrote {len(cohort.subjects)} subjects, {cohort.n_observations} "
                             f"visits to {out}", extra_data=counts)
    logger.close()
    return 0


def _store_pretrain(session, history):
    rows = [[epoch, recon] for epoch, recon in enumerate(history)]
    path = session.path("pretrain_metrics.csv")
    write_csv(path, ["epoch", "recon"], rows)
    session.add_artifact("pretrain_metrics", path)
    for epoch, recon in enumerate(history):
        session.registry.store_epoch_metrics(session.run_id, "PRETRAIN",
                                             {"epoch": epoch, "recon": recon})


def cmd_train(args):
    config, cohort_path = resolve_train_config(args)
    cohort = load_cohort(cohort_path)

    with RunSession("train", config.seed, args, config.to_dict()) as session:
        session.inputs["cohort"] = str(cohort_path.resolve())

        def record(metrics):
            session.registry.store_epoch_metrics(session.run_id, "TRAIN", metrics.to_dict())

        with session.phase("fit"):
            run = fit(cohort, config, session.run_dir, session.logger, record)

        for path in run.result.checkpoints:
            session.add_artifact(path.stem, path)
        session.add_artifact("metrics", run.result.metrics_path)
        _store_pretrain(session, run.pretrain_history)

        final = run.result.history[-1].to_dict() if run.result.history else {}
        session.summary = {"iterations": run.result.iterations,
                           "final": final,
                           "uninit_cells": run.refs.uninitialized_count()}
    return 0


def _write_grid(session, name, matrix, title, vmin=None, vmax=None):
    write_grid_csv(session.path(f"{name}.csv"), matrix)
    session.add_artifact(f"{name}_csv", session.path(f"{name}.csv"))
    svg = render_heatmap_svg(matrix, title, vmin=vmin, vmax=vmax)
    session.add_artifact(f"{name}_svg", write_svg(session.path(f"{name}.svg"), svg))


def cmd_analyze(args):
    checkpoint = load_checkpoint(args.checkpoint)
    cohort = load_cohort(args.cohort)

    with RunSession("analyze", checkpoint.config.seed, args, checkpoint.config.to_dict()) as session:
        session.inputs.update(checkpoint=str(Path(args.checkpoint).resolve()),
                              cohort=str(Path(args.cohort).resolve()))
        logger = session.logger

        with session.phase("embed"):
            table = embed_cohort(checkpoint.model, checkpoint.som, cohort)
        write_sample_table(session.path("samples.csv"), table)
        session.add_artifact("samples", session.path("samples.csv"))

        with session.phase("dcor"):
            report = dcor_report(table)
        write_csv(session.path("dcor.csv"), ["covariate", "n", "dcor"],
                  ([r["covariate"], r["n"], r["dcor"]] for r in report))
        session.add_artifact("dcor", session.path("dcor.csv"))
        for row in report:
            logger.log_event("EVAL", f"dCor(grid, {row['covariate']}) = {row['dcor']:.3f}")

        with session.phase("grids"):
            for group, grid in diagnostic_group_averages(table).items():
                _write_grid(session, f"group_{group}", grid.rho, f"average similarity: {group}", 0.0)

            edges, bins = age_bins(table.ages, args.age_bins)
            for b in range(args.age_bins):
                grid = group_average_grid(table, lambda t, b=b: bins == b, f"age bin {b}")
                _write_grid(session, f"age_bin_{b}", grid.rho,
                            f"ages {edges[b]:.1f}-{edges[b + 1]:.1f}", 0.0)

            for group in (g for g in GROUPS if np.any(table.groups == g)):
                for b in range(args.age_bins):
                    members = (table.groups == group) & (bins == b)
                    if not members.any():
                        continue
                    grid = group_average_grid(table, lambda t, m=members: m)
                    _write_grid(session, f"group_{group}_age_bin_{b}", grid.rho,
                                f"{group}, ages {edges[b]:.1f}-{edges[b + 1]:.1f}", 0.0)

            subjects = args.subjects or list(example_subjects(table).values())
            for subject_id in subjects:
                sequence = subject_grid_sequence(table, subject_id)
                for visit, (time_point, grid) in enumerate(sequence):
                    _write_grid(session, f"subject_{subject_id}_visit{visit}", grid.rho,
                                f"subject {subject_id}, t = {time_point:.2f}", 0.0)

            centers = age_bin_mass_centers(table, args.age_bins)
            write_csv(session.path("age_bins.csv"), ["bin", "lower", "upper", "count", "mass_center"],
                      ([i, c.lower, c.upper, c.count, c.mass_center] for i, c in enumerate(centers)))
            session.add_artifact("age_bins", session.path("age_bins.csv"))

            for name, matrix in cell_factor_maps(table).items():
                _write_grid(session, f"cell_{name}", matrix, name.replace("_", " "))

        with session.phase("prototypes"):
            prototypes = cell_prototypes(table, checkpoint.som, args.neighbors)
            n_rows, n_cols = checkpoint.som.shape
            write_csv(session.path("prototypes.csv"),
                      ["row", "col", *[f"x{d}" for d in range(prototypes.shape[-1])]],
                      ([r, c, *prototypes[r, c]] for r in range(n_rows) for c in range(n_cols)))
            session.add_artifact("prototypes", session.path("prototypes.csv"))

        with session.phase("pca"):
            starts, deltas = subject_trajectories(table)
            projection = pca_project(table.latents[starts], checkpoint.som, checkpoint.refs, deltas)
            write_pca_csv(session.path("pca.csv"), projection, checkpoint.som.shape)
            session.add_artifact("pca", session.path("pca.csv"))
            svg = render_trajectory_field_svg(projection, "trajectory field",
                                              group_labels=table.groups[starts])
            session.add_artifact("trajectory_field",
                                 write_svg(session.path("trajectory_field.svg"), svg))

        session.summary = {
            "dcor": {r["covariate"]: r["dcor"] for r in report},
            "age_bin_mass_centers": [c.mass_center for c in centers],
            "mass_center_monotone": is_nondecreasing([c.mass_center for c in centers]),
        }
    return 0


def cmd_probe(args):
    checkpoint = load_checkpoint(args.checkpoint)
    cohort = load_cohort(args.cohort)

    with RunSession("probe", args.seed, args, checkpoint.config.to_dict()) as session:
        session.inputs.update(checkpoint=str(Path(args.checkpoint).resolve()),
                              cohort=str(Path(args.cohort).resolve()))
        table = embed_cohort(checkpoint.model, checkpoint.som, cohort)
        reports = []
        for task in args.tasks:
            kind, latents, targets, subjects = probe_dataset(table, task)
            with session.phase(task):
                report = cross_validate_probe(latents, targets, kind, subjects, args.seed,
                                              args.folds, name=task, epochs=args.epochs)
            reports.append(report)
            session.logger.log_event("EVAL", f"{task}: {json.dumps(report.summary)}")

        write_probe_csv(session.path("probe_metrics.csv"), reports)
        session.add_artifact("probe_metrics", session.path("probe_metrics.csv"))
        session.summary = {r.task: r.summary for r in reports}
    return 0


ABLATION_COLUMNS = ["variant", "repeat", "seed", "final_total", "empty_clusters",
                    "dcor_age_factor", "dcor_cognitive", "dcor_age", "mass_center_monotone"]


def cmd_ablate(args):
    config, cohort_path = resolve_train_config(args)
    cohort = load_cohort(cohort_path)
    unknown = [v for v in args.variants if v not in ABLATIONS]
    if unknown:
        raise ConfigError(f"unknown ablation variants: {', '.join(unknown)}")
    if args.repeats < 1:
        raise ConfigError("--repeats must be >= 1")

    with RunSession("ablate", config.seed, args, config.to_dict()) as session:
        session.inputs["cohort"] = str(cohort_path.resolve())
        rows, columns = [], list(ABLATION_COLUMNS)

        for variant in args.variants:
            for repeat in range(args.repeats):
                variant_config = config.merged({**ABLATIONS[variant],
                                                "seed": config.seed + repeat}).check()
                variant_dir = session.path(f"{variant}_r{repeat}")
                variant_dir.mkdir()
                session.logger.log_event("TRAIN", f"variant {variant} repeat {repeat}")
                with session.phase(f"{variant}_r{repeat}"):
                    run = fit(cohort, variant_config, variant_dir, session.logger)
                    summary = evaluate_representation(run.model, run.som, cohort, args.probe,
                                                      variant_config.seed)
                session.add_artifact(f"{variant}_r{repeat}_checkpoint",
                                     variant_dir / Config.CHECKPOINT_NAME)

                row = {"variant": variant, "repeat": repeat, "seed": variant_config.seed,
                       "final_total": run.result.history[-1].total if run.result.history
                       else float("nan"), **summary}
                for key in row:
                    if key not in columns:
                        columns.append(key)
                rows.append(row)

        write_csv(session.path("ablation.csv"), columns,
                  ([row.get(c, "") for c in columns] for row in rows))
        session.add_artifact("ablation", session.path("ablation.csv"))
        session.summary = _ablation_summary(rows)
    return 0


def _ablation_summary(rows):
    summary = {}
    for variant in dict.fromkeys(r["variant"] for r in rows):
        members = [r for r in rows if r["variant"] == variant]
        summary[variant] = {
            key: float(np.mean([float(r[key]) for r in members]))
            for key, value in members[0].items()
            if isinstance(value, (int, float, np.floating)) and key not in ("repeat", "seed")
        }
    return summary


def cmd_runs(args):
    registry = RunRegistry(Config.get_database_path(args.runs_root))
    if args.stats:
        print(json.dumps(registry.get_statistics_summary(), indent=2))
        return 0
    if args.export:
        count = registry.export_to_json(args.export)
        print(f"exported {count} runs to {args.export}")
        return 0
    if args.metrics is not None:
        if registry.get_run_by_id(args.metrics) is None:
            raise ConfigError(f"no run with id {args.metrics}")
        rows = registry.get_run_metrics(args.metrics, args.phase)
        columns = ["phase", "epoch", "recon_loss", "commit_loss", "som_loss", "dir_loss",
                   "total_loss", "tau", "uninit_cells", "excluded_dir_samples"]
        print(",".join(columns))
        for row in rows:
            print(",".join("" if row[c] is None else str(row[c]) for c in columns))
        return 0
    if args.id is not None:
        run = registry.get_run_by_id(args.id)
        if run is None:
            raise ConfigError(f"no run with id {args.id}")
        run["artifacts"] = registry.get_run_artifacts(args.id)
        print(json.dumps(run, indent=2, default=str))
        return 0

    if args.filter_command or args.status:
        runs = registry.search_runs(args.filter_command, args.status)[:args.limit]
    else:
        runs = registry.get_recent_runs(args.limit)
    for run in runs:
        print(f"{run['id']:>5}  {run['command']:<8} seed={run['seed']:<6} "
              f"{run['status']:<10} {run['start_time']}  {run['run_dir']}")
    return 0


# Argument parsing

def add_train_config_flags(parser):
    defaults = TrainConfig()
    group = parser.add_argument_group(
        "training config", "precedence: flags > --config/--manifest file > defaults")
    for f in fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        default = getattr(defaults, f.name)
        help_text = f"{FLAG_HELP.get(f.name, f.name)} (default: {default})"
        if isinstance(default, bool):
            group.add_argument(flag, dest=f.name, default=None, help=help_text,
                               action=argparse.BooleanOptionalAction)
        elif isinstance(default, list):
            group.add_argument(flag, dest=f.name, type=int, nargs="+", default=None,
                               metavar="N", help=help_text)
        else:
            group.add_argument(flag, dest=f.name, type=type(default), default=None,
                               help=help_text)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--runs-root", default=Config.RUNS_FOLDER,
                        help=f"directory holding run folders and the registry (default: {Config.RUNS_FOLDER})")
    common.add_argument("--log-level", default=Config.LOG_LEVEL, choices=list(RunLogger.LEVELS),
                        help=f"console log level (default: {Config.LOG_LEVEL})")
    common.add_argument("--quiet", action="store_true", help="no console logging (default: off)")

    run_dir = argparse.ArgumentParser(add_help=False)
    run_dir.add_argument("--run-dir", default=None,
                         help="output directory (default: <runs-root>/<timestamp>_seed<seed>_<command>)")
    run_dir.add_argument("--force", action="store_true",
                         help="overwrite an existing output (default: off)")

    parser = argparse.ArgumentParser(
        prog=Config.APP_NAME,
        description="Self-organized longitudinal representations on synthetic aging cohorts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {Config.APP_VERSION}")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="generate a synthetic cohort CSV")
    gen.add_argument("--subjects", type=int, default=Config.GEN_SUBJECTS,
                     help=f"number of subjects (default: {Config.GEN_SUBJECTS})")
    gen.add_argument("--min-visits", type=int, default=Config.GEN_MIN_VISITS,
                     help=f"fewest visits per subject (default: {Config.GEN_MIN_VISITS})")
    gen.add_argument("--max-visits", type=int, default=Config.GEN_MAX_VISITS,
                     help=f"most visits per subject (default: {Config.GEN_MAX_VISITS})")
    gen.add_argument("--input-dim", type=int, default=Config.GEN_INPUT_DIM,
                     help=f"observation dimension (default: {Config.GEN_INPUT_DIM})")
    gen.add_argument("--noise-sigma", type=float, default=Config.GEN_NOISE_SIGMA,
                     help=f"observation noise std (default: {Config.GEN_NOISE_SIGMA})")
    gen.add_argument("--subject-sigma", type=float, default=Config.GEN_SUBJECT_SIGMA,
                     help=f"per-subject anatomy offset std (default: {Config.GEN_SUBJECT_SIGMA})")
    gen.add_argument("--seed", type=int, default=0, help="generator seed (default: 0)")
    gen.add_argument("--out", default="cohort.csv", help="output CSV path (default: cohort.csv)")
    gen.add_argument("--force", action="store_true", help="overwrite --out (default: off)")
    gen.set_defaults(handler=cmd_gen)

    train = sub.add_parser("train", parents=[common, run_dir],
                           help="train encoder, decoder and SOM on a cohort")
    train.add_argument("--cohort", help="cohort CSV written by gen")
    train.add_argument("--config", help="JSON file of training config keys")
    train.add_argument("--manifest", help="re-run the config and cohort of an earlier train manifest")
    add_train_config_flags(train)
    train.set_defaults(handler=cmd_train)

    analyze = sub.add_parser("analyze", parents=[common, run_dir],
                             help="similarity grids, dCor, PCA field and heatmaps")
    analyze.add_argument("--checkpoint", required=True, help="checkpoint JSON written by train")
    analyze.add_argument("--cohort", required=True, help="cohort CSV to embed")
    analyze.add_argument("--age-bins", type=int, default=Config.AGE_BINS,
                         help=f"ordered age bins (default: {Config.AGE_BINS})")
    analyze.add_argument("--neighbors", type=int, default=Config.PROTOTYPE_NEIGHBORS,
                         help=f"latents averaged per cell prototype (default: {Config.PROTOTYPE_NEIGHBORS})")
    analyze.add_argument("--subjects", type=int, nargs="+", default=None, metavar="ID",
                         help="subjects whose per-visit grids are written "
                              "(default: one subject with the most visits per group)")
    analyze.set_defaults(handler=cmd_analyze)

    probe = sub.add_parser("probe", parents=[common, run_dir],
                           help="cross-validated probes on frozen latents")
    probe.add_argument("--checkpoint", required=True, help="checkpoint JSON written by train")
    probe.add_argument("--cohort", required=True, help="cohort CSV to embed")
    probe.add_argument("--tasks", nargs="+", choices=list(PROBE_TASKS), default=list(PROBE_TASKS),
                       help=f"probe tasks (default: {' '.join(PROBE_TASKS)})")
    probe.add_argument("--folds", type=int, default=Config.PROBE_FOLDS,
                       help=f"subject-level folds (default: {Config.PROBE_FOLDS})")
    probe.add_argument("--epochs", type=int, default=Config.PROBE_EPOCHS,
                       help=f"probe training epochs (default: {Config.PROBE_EPOCHS})")
    probe.add_argument("--seed", type=int, default=0, help="probe seed (default: 0)")
    probe.set_defaults(handler=cmd_probe)

    ablate = sub.add_parser("ablate", parents=[common, run_dir],
                            help="train comparison variants and tabulate them")
    ablate.add_argument("--cohort", help="cohort CSV written by gen")
    ablate.add_argument("--config", help="JSON file of training config keys")
    ablate.add_argument("--variants", nargs="+", default=list(ABLATIONS),
                        help=f"variants among {', '.join(ABLATIONS)} (default: all)")
    ablate.add_argument("--repeats", type=int, default=1,
                        help="repetitions per variant with seeds seed, seed+1, ... (default: 1)")
    ablate.add_argument("--probe", action="store_true",
                        help="add cross-validated probe scores (default: off)")
    add_train_config_flags(ablate)
    ablate.set_defaults(handler=cmd_ablate)

    runs = sub.add_parser("runs", parents=[common], help="list recorded runs")
    runs.add_argument("--limit", type=int, default=20, help="runs to list (default: 20)")
    runs.add_argument("--command", dest="filter_command", choices=COMMANDS,
                      help="filter by command")
    runs.add_argument("--status", choices=("running", "completed", "failed"), help="filter by status")
    runs.add_argument("--id", type=int, help="show one run with its artifacts")
    runs.add_argument("--stats", action="store_true", help="print registry statistics")
    runs.add_argument("--metrics", type=int, metavar="RUN_ID",
                      help="print the per-epoch metrics of one run as CSV")
    runs.add_argument("--phase", choices=("PRETRAIN", "TRAIN"),
                      help="restrict --metrics to one phase (default: both)")
    runs.add_argument("--export", metavar="PATH",
                      help="write the whole registry to a JSON file")
    runs.set_defaults(handler=cmd_runs)

    return parser


def run(argv=None):
    """Parse argv and execute one subcommand. Returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        return args.handler(args)
    except (LsorError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main():
    """Application entry point."""
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
