"""End-to-end tests of the command line through main.run."""

import csv
import json
from dataclasses import fields

import pytest

from main import COMMANDS, run
from trainer import TrainConfig

TINY_TRAIN = ["--pretrain-epochs", "1", "--train-epochs", "2", "--batch-size", "16",
              "--n-rows", "2", "--n-cols", "2", "--latent-dim", "3", "--hidden-dims", "6",
              "--checkpoint-every", "0", "--seed", "4"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A generated cohort and one trained run shared by the pipeline tests."""
    root = tmp_path_factory.mktemp("cli")
    cohort = root / "cohort.csv"
    assert run(["gen", "--subjects", "16", "--input-dim", "5", "--seed", "1",
                "--out", str(cohort), "--quiet"]) == 0
    runs = root / "runs"
    assert run(["train", "--cohort", str(cohort), "--runs-root", str(runs),
                "--run-dir", str(root / "train"), "--quiet", *TINY_TRAIN]) == 0
    return root


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_gen_is_deterministic(tmp_path):
    for name in ("a.csv", "b.csv"):
        assert run(["gen", "--subjects", "5", "--seed", "9", "--out", str(tmp_path / name),
                    "--quiet"]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_gen_refuses_to_overwrite_without_force(tmp_path, capsys):
    out = tmp_path / "c.csv"
    assert run(["gen", "--subjects", "3", "--out", str(out), "--quiet"]) == 0
    assert run(["gen", "--subjects", "3", "--out", str(out), "--quiet"]) == 1
    assert "--force" in capsys.readouterr().err
    assert run(["gen", "--subjects", "4", "--out", str(out), "--force", "--quiet"]) == 0


def test_train_with_missing_cohort_names_path(tmp_path, capsys):
    missing = tmp_path / "absent.csv"
    code = run(["train", "--cohort", str(missing), "--runs-root", str(tmp_path / "runs"),
                "--run-dir", str(tmp_path / "out"), "--quiet"])
    assert code != 0
    assert str(missing) in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_train_rejects_invalid_config(tmp_path, capsys):
    code = run(["train", "--cohort", "x.csv", "--ema-alpha", "1.5", "--quiet",
                "--runs-root", str(tmp_path)])
    assert code == 1
    assert "ema_alpha" in capsys.readouterr().err


@pytest.mark.parametrize("command", COMMANDS)
def test_every_subcommand_has_help(command, capsys):
    assert run([command, "--help"]) == 0
    assert "(default:" in capsys.readouterr().out


@pytest.mark.parametrize("command", ["train", "ablate"])
def test_help_prints_training_defaults(command, capsys):
    assert run([command, "--help"]) == 0
    text = " ".join(capsys.readouterr().out.split())
    defaults = TrainConfig()
    for f in fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        assert flag in text, flag
        assert f"(default: {getattr(defaults, f.name)})" in text, f.name


def test_unknown_flag_is_a_usage_error(capsys):
    assert run(["train", "--no-such-flag"]) == 2
    assert "unrecognized arguments" in capsys.readouterr().err


def test_train_writes_manifest_and_artifacts(workspace):
    train_dir = workspace / "train"
    manifest = json.loads((train_dir / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["seed"] == 4
    assert manifest["config"]["n_cols"] == 2
    assert manifest["config"]["hidden_dims"] == [6]
    assert {"checkpoint", "metrics", "pretrain_metrics"} <= set(manifest["artifacts"])
    for relative in manifest["artifacts"].values():
        assert (train_dir / relative).is_file()
    assert "fit" in manifest["timings"]["phases"]
    assert manifest["host"]["cpu_count"] >= 1
    assert manifest["defaults"]["probe_folds"] == 5
    assert manifest["log"]["by_category"]["PRETRAIN"] >= 1

    rows = read_csv(train_dir / "metrics.csv")
    assert len(rows) == 3
    assert (train_dir / "run.log").is_file()


def test_train_from_manifest_reproduces_checkpoint(workspace):
    again = workspace / "train_again"
    assert run(["train", "--manifest", str(workspace / "train" / "manifest.json"),
                "--runs-root", str(workspace / "runs"), "--run-dir", str(again), "--quiet"]) == 0
    assert (again / "checkpoint.json").read_bytes() == \
        (workspace / "train" / "checkpoint.json").read_bytes()
    assert (again / "metrics.csv").read_bytes() == (workspace / "train" / "metrics.csv").read_bytes()


def test_non_empty_run_dir_needs_force(workspace, capsys):
    code = run(["train", "--cohort", str(workspace / "cohort.csv"), "--runs-root",
                str(workspace / "runs"), "--run-dir", str(workspace / "train"), "--quiet",
                *TINY_TRAIN])
    assert code == 1
    assert "--force" in capsys.readouterr().err
    assert (workspace / "train" / "checkpoint.json").is_file()


def test_analyze_writes_tables_and_figures(workspace):
    out = workspace / "analyze"
    assert run(["analyze", "--checkpoint", str(workspace / "train" / "checkpoint.json"),
                "--cohort", str(workspace / "cohort.csv"), "--runs-root", str(workspace / "runs"),
                "--run-dir", str(out), "--age-bins", "2", "--neighbors", "3", "--quiet"]) == 0

    for name in ("samples.csv", "dcor.csv", "age_bins.csv", "prototypes.csv", "pca.csv",
                 "trajectory_field.svg", "age_bin_0.svg", "age_bin_1.csv", "cell_count.svg"):
        assert (out / name).is_file(), name

    samples = read_csv(out / "samples.csv")
    assert samples[0][:4] == ["subject_id", "time", "eps_row", "eps_col"]
    dcor = {row[0]: float(row[2]) for row in read_csv(out / "dcor.csv")[1:]}
    assert set(dcor) == {"age", "age_factor", "cognitive_score", "severe_decline"}
    assert all(0.0 <= v <= 1.0 for v in dcor.values())
    assert (out / "trajectory_field.svg").read_text().startswith("<svg")

    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["summary"]["age_bin_mass_centers"]) == 2
    assert "events" in manifest["artifacts"]
    assert manifest["log"]["by_category"]["EVAL"] == 4
    for relative in manifest["artifacts"].values():
        assert (out / relative).is_file(), relative

    header = samples[0]
    group_at, subject_at = header.index("group"), header.index("subject_id")
    groups = sorted({row[group_at] for row in samples[1:]})
    for group in groups:
        written = [name for name in manifest["artifacts"]
                   if name.startswith(f"group_{group}_age_bin_") and name.endswith("_svg")]
        assert 1 <= len(written) <= 2, group

        visits = {}
        for row in samples[1:]:
            if row[group_at] == group:
                visits[int(row[subject_at])] = visits.get(int(row[subject_at]), 0) + 1
        example = min(visits, key=lambda s: (-visits[s], s))
        for visit in range(visits[example]):
            assert f"subject_{example}_visit{visit}_svg" in manifest["artifacts"]
            assert f"subject_{example}_visit{visit}_csv" in manifest["artifacts"]


def test_analyze_writes_requested_subject_sequences(workspace, capsys):
    args = ["analyze", "--checkpoint", str(workspace / "train" / "checkpoint.json"),
            "--cohort", str(workspace / "cohort.csv"), "--runs-root", str(workspace / "runs"),
            "--age-bins", "2", "--neighbors", "3", "--quiet"]
    out = workspace / "analyze_subject"
    assert run([*args, "--run-dir", str(out), "--subjects", "0"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    subject_grids = [n for n in manifest["artifacts"] if n.startswith("subject_")]
    assert subject_grids and all(n.startswith("subject_0_visit") for n in subject_grids)
    rows = read_csv(out / "subject_0_visit0.csv")
    assert rows[0] == ["col0", "col1"]

    assert run([*args, "--run-dir", str(workspace / "analyze_missing"), "--subjects", "999"]) == 1
    assert "subject 999" in capsys.readouterr().err


def test_probe_writes_fold_metrics(workspace):
    out = workspace / "probe"
    assert run(["probe", "--checkpoint", str(workspace / "train" / "checkpoint.json"),
                "--cohort", str(workspace / "cohort.csv"), "--runs-root", str(workspace / "runs"),
                "--run-dir", str(out), "--tasks", "cognitive_score", "--folds", "2",
                "--epochs", "10", "--quiet"]) == 0
    rows = read_csv(out / "probe_metrics.csv")
    assert [r[1] for r in rows[1:]] == ["0", "1", "mean", "std"]


def test_failed_command_leaves_no_run_dir_and_is_recorded(workspace, capsys):
    out = workspace / "failed"
    code = run(["analyze", "--checkpoint", str(workspace / "train" / "checkpoint.json"),
                "--cohort", str(workspace / "cohort.csv"), "--runs-root", str(workspace / "runs"),
                "--run-dir", str(out), "--age-bins", "1000", "--quiet"])
    assert code == 1
    assert "age bins" in capsys.readouterr().err
    assert not out.exists()

    assert run(["runs", "--runs-root", str(workspace / "runs"), "--status", "failed"]) == 0
    assert "analyze" in capsys.readouterr().out


def test_ablate_tabulates_variants(workspace):
    out = workspace / "ablate"
    assert run(["ablate", "--cohort", str(workspace / "cohort.csv"), "--runs-root",
                str(workspace / "runs"), "--run-dir", str(out), "--variants", "lsor", "plain_ae",
                "--quiet", *TINY_TRAIN]) == 0
    rows = read_csv(out / "ablation.csv")
    assert rows[0][:3] == ["variant", "repeat", "seed"]
    assert [r[0] for r in rows[1:]] == ["lsor", "plain_ae"]
    assert (out / "plain_ae_r0" / "checkpoint.json").is_file()


def test_ablate_rejects_unknown_variant(workspace, capsys):
    assert run(["ablate", "--cohort", str(workspace / "cohort.csv"), "--runs-root",
                str(workspace / "runs"), "--variants", "mystery", "--quiet"]) == 1
    assert "mystery" in capsys.readouterr().err


def test_runs_lists_and_shows_records(workspace, capsys):
    assert run(["runs", "--runs-root", str(workspace / "runs"), "--command", "train"]) == 0
    listing = capsys.readouterr().out
    assert "train" in listing

    assert run(["runs", "--runs-root", str(workspace / "runs"), "--id", "1"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["command"] == "train"
    assert "checkpoint" in record["artifacts"]

    assert run(["runs", "--runs-root", str(workspace / "runs"), "--stats"]) == 0
    assert "total_runs" in capsys.readouterr().out

    assert run(["runs", "--runs-root", str(workspace / "runs"), "--limit", "1"]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 1


def test_runs_prints_epoch_metrics(workspace, capsys):
    assert run(["runs", "--runs-root", str(workspace / "runs"), "--metrics", "1"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("phase,epoch,recon_loss")
    phases = [line.split(",")[0] for line in lines[1:]]
    assert phases.count("TRAIN") == 2 and phases.count("PRETRAIN") == 1

    assert run(["runs", "--runs-root", str(workspace / "runs"), "--metrics", "1",
                "--phase", "PRETRAIN"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and lines[1].split(",")[3] == ""

    assert run(["runs", "--runs-root", str(workspace / "runs"), "--metrics", "9999"]) == 1
    assert "9999" in capsys.readouterr().err


def test_runs_exports_registry(workspace, tmp_path, capsys):
    out = tmp_path / "registry.json"
    assert run(["runs", "--runs-root", str(workspace / "runs"), "--export", str(out)]) == 0
    assert "exported" in capsys.readouterr().out
    exported = json.loads(out.read_text())
    first = next(r for r in exported["runs"] if r["id"] == 1)
    assert first["config"]["n_rows"] == 2
    assert {"checkpoint", "metrics"} <= {a["name"] for a in exported["artifacts"]
                                         if a["run_id"] == 1}


def test_unusable_runs_root_leaves_no_run_dir(tmp_path, workspace, capsys):
    blocked = tmp_path / "not_a_dir"
    blocked.write_text("")
    out = tmp_path / "out"
    code = run(["train", "--cohort", str(workspace / "cohort.csv"), "--runs-root", str(blocked),
                "--run-dir", str(out), "--quiet", *TINY_TRAIN])
    assert code == 1
    assert capsys.readouterr().err.startswith("error:")
    assert not out.exists()
