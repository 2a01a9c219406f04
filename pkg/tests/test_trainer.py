"""Tests for the training configuration, objective, loop and checkpoints."""

import csv
import json

import numpy as np
import pytest

import diffcore as dc
from errors import CheckpointError, ConfigError, TrainingError
from longitudinal import BatchTrajectoryStats, ReferenceTrajectories
from model import Autoencoder
from som import SomGrid, TauSchedule, cluster_counts, nearest_indices
from synthdata import PairBatch, PairSampler
from trainer import (ABLATIONS, METRIC_COLUMNS, TrainConfig, canonicalize_orientation, fit,
                     load_checkpoint, pretrain, save_checkpoint, total_loss, train)


def make_batch(rng, batch=4, input_dim=5):
    x_u = rng.normal(size=(batch, input_dim))
    return PairBatch(x_u=x_u, x_v=x_u + 0.3 * rng.normal(size=(batch, input_dim)),
                     delta_t=rng.uniform(0.5, 2.0, size=batch), subject_ids=np.arange(batch),
                     age_u=np.full(batch, 70.0), group=np.array(["NC"] * batch, dtype=object),
                     cognitive_u=np.zeros(batch))


@pytest.fixture
def objective(rng):
    """D=8, 2x2 grid, batch of 4, with every reference cell initialized."""
    model = Autoencoder.initialize(5, 8, [6], rng)
    som = SomGrid.random(2, 2, 8, rng)
    refs = ReferenceTrajectories(2, 2, 8, values=rng.normal(size=(2, 2, 8)),
                                 initialized=np.ones((2, 2), dtype=bool))
    config = TrainConfig(n_rows=2, n_cols=2, latent_dim=8, hidden_dims=[6])
    return model, som, refs, config, make_batch(rng)


def test_default_config_is_valid():
    valid, errors = TrainConfig().validate()
    assert valid, errors


def test_validate_collects_every_error():
    config = TrainConfig(learning_rate=0.0, ema_alpha=1.0, tau_min=2.0, batch_size=0)
    valid, errors = config.validate()
    assert not valid
    assert len(errors) == 4
    with pytest.raises(ConfigError, match="learning_rate"):
        config.check()


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="lambda_typo"):
        TrainConfig.from_dict({"lambda_typo": 1.0})


def test_from_file_reads_json(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"lambda_dir": 0.0, "n_cols": 6, "hidden_dims": [16]}))
    config = TrainConfig.from_file(path)
    assert config.lambda_dir == 0.0
    assert config.n_cols == 6
    assert config.hidden_dims == [16]
    assert config.batch_size == TrainConfig().batch_size


def test_from_file_malformed_and_missing(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="malformed"):
        TrainConfig.from_file(path)
    with pytest.raises(ConfigError, match="not found"):
        TrainConfig.from_file(tmp_path / "missing.json")


def test_merged_applies_only_given_overrides():
    base = TrainConfig(lambda_som=2.0)
    merged = base.merged({"lambda_som": None, "batch_size": 32.0, "hard_som": True})
    assert merged.lambda_som == 2.0
    assert merged.batch_size == 32 and isinstance(merged.batch_size, int)
    assert merged.hard_som is True
    with pytest.raises(ConfigError):
        base.merged({"batch_size": 2.5})


def test_ablation_variants_are_valid_configs():
    for overrides in ABLATIONS.values():
        TrainConfig().merged(overrides).check()
    assert TrainConfig().merged(ABLATIONS["plain_ae"]).lambda_som == 0.0


def test_total_loss_combines_weighted_components(objective):
    model, som, refs, config, batch = objective
    result = total_loss(batch, model, som, refs, config, t=0, schedule=TauSchedule(0.1, 1.0, 10))
    b = result.breakdown
    expected = b.recon + config.lambda_commit * b.commit + config.lambda_som * b.som \
        + config.lambda_dir * b.dir
    assert b.total == pytest.approx(expected)
    assert b.tau == pytest.approx(4 * 1.0)
    assert b.uninit_cells == 0
    assert result.delta_z.shape == (4, 8)


def test_total_loss_reads_tau_from_the_phase_schedule(objective):
    model, som, refs, config, batch = objective
    config = config.merged({"train_epochs": 4, "tau_min": 0.1, "tau_max": 1.0})
    schedule = config.tau_schedule(batches_per_epoch=5)
    assert schedule.total_iterations == 20

    result = total_loss(batch, model, som, refs, config, 10, schedule)
    assert result.breakdown.tau == pytest.approx(4 * 1.0 * 0.1 ** 0.5)
    assert result.breakdown.tau > 4 * config.tau_min

    with pytest.raises(TypeError):
        total_loss(batch, model, som, refs, config, 10)


@pytest.mark.parametrize("component", ["total", "recon", "commit", "som", "dir"])
def test_objective_gradients_match_finite_differences(objective, component):
    model, som, refs, config, batch = objective
    weights = {"recon": (0.0, 0.0, 0.0), "commit": (1.0, 0.0, 0.0), "som": (0.0, 1.0, 0.0),
               "dir": (0.0, 0.0, 1.0), "total": None}[component]
    if weights is not None:
        config = config.merged(dict(zip(("lambda_commit", "lambda_som", "lambda_dir"), weights)))
    schedule = TauSchedule(0.1, 1.0, 10)

    def fn():
        loss = total_loss(batch, model, som, refs, config, 3, schedule).loss
        if component in ("commit", "som", "dir"):
            recon = total_loss(batch, model, som, refs, config.merged(
                {"lambda_commit": 0.0, "lambda_som": 0.0, "lambda_dir": 0.0}), 3, schedule).loss
            loss = loss - recon
        return loss

    params = [model.encoder.weights[0], model.encoder.biases[-1], model.decoder.weights[-1],
              som.representations]
    dc.backward(fn())
    for param in params:
        analytic = np.zeros_like(param.values) if param.grad is None else param.grad.copy()
        np.testing.assert_allclose(analytic, dc.numerical_gradient(fn, param),
                                   rtol=1e-4, atol=1e-6, err_msg=f"{component}: {param.name}")


def test_direction_loss_leaves_references_untouched(objective):
    model, som, refs, config, batch = objective
    before = refs.values.copy()
    result = total_loss(batch, model, som, refs, config, 0, TauSchedule(0.1, 1.0, 10))
    dc.backward(result.loss)
    np.testing.assert_array_equal(refs.values, before)


def test_trajectory_stats_cover_every_batch(small_cohort, tiny_config):
    model = Autoencoder.initialize(small_cohort.input_dim, 4, [8], np.random.default_rng(0))
    som = SomGrid(2, 3, 4)
    refs = ReferenceTrajectories(2, 3, 4)
    sampler = PairSampler(small_cohort, tiny_config.batch_size, seed=0)
    pretrain(model, som, small_cohort, tiny_config.merged({"pretrain_epochs": 1}), sampler)
    for epoch in range(5):
        for batch in sampler.epoch(epoch):
            result = total_loss(batch, model, som, refs, tiny_config, 0,
                                tiny_config.tau_schedule(sampler.batches_per_epoch))
            stats = BatchTrajectoryStats.from_batch(result.delta_z, result.eps_u, som.n_cells)
            assert stats.counts.sum() == len(batch)


def test_pretrain_reduces_reconstruction_and_initializes_grid(small_cohort, tiny_config):
    config = tiny_config.merged({"pretrain_epochs": 40, "learning_rate": 1e-2})
    model = Autoencoder.initialize(small_cohort.input_dim, 4, [8], np.random.default_rng(0))
    som = SomGrid(2, 3, 4)
    history = pretrain(model, som, small_cohort, config)
    assert len(history) == 40
    assert history[-1] < 0.5 * history[0]
    assert np.any(som.vectors())
    assert len({tuple(v) for v in som.vectors()}) == som.n_cells


def test_fit_writes_checkpoints_and_metrics(tmp_path, small_cohort, tiny_config, memory_logger):
    run = fit(small_cohort, tiny_config, tmp_path, memory_logger)
    names = sorted(p.name for p in run.result.checkpoints)
    assert names == ["checkpoint.json", "checkpoint_epoch002.json"]
    assert len(run.pretrain_history) == tiny_config.pretrain_epochs

    with open(run.result.metrics_path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == METRIC_COLUMNS
    assert len(rows) == tiny_config.train_epochs + 1
    assert all(np.isfinite(float(x)) for x in rows[1][1:6])
    assert run.result.iterations == tiny_config.train_epochs * PairSampler(
        small_cohort, tiny_config.batch_size).batches_per_epoch
    assert memory_logger.events(category="TRAIN")


def test_fit_is_reproducible(tmp_path, small_cohort, tiny_config):
    fit(small_cohort, tiny_config, tmp_path / "a")
    fit(small_cohort, tiny_config, tmp_path / "b")
    for name in ("checkpoint.json", "checkpoint_epoch002.json", "metrics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_checkpoint_round_trip(tmp_path, small_cohort, tiny_config):
    run = fit(small_cohort, tiny_config, None)
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, run.model, run.som, run.refs, run.config, 17)
    loaded = load_checkpoint(path)
    assert loaded.iteration == 17
    assert loaded.config == run.config
    np.testing.assert_array_equal(loaded.som.vectors(), run.som.vectors())
    np.testing.assert_array_equal(loaded.refs.values, run.refs.values)
    x = small_cohort.visit_table().observations
    np.testing.assert_array_equal(loaded.model.encoder(x).values, run.model.encoder(x).values)


def test_load_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"format": "other", "version": 1}))
    with pytest.raises(CheckpointError, match="unsupported"):
        load_checkpoint(bad)


def test_canonical_orientation_points_trajectories_forward(small_cohort, tiny_config):
    run = fit(small_cohort, tiny_config, None)
    canonicalize_orientation(run.model, run.som, run.refs, small_cohort)
    table = small_cohort.visit_table()
    u_rows, v_rows = small_cohort.pair_rows()
    cells = nearest_indices(run.som, run.model.encoder(table.observations).values)
    cols = cells % run.som.n_cols
    rows = cells // run.som.n_cols
    assert np.mean(cols[v_rows] - cols[u_rows]) >= 0
    assert np.mean(rows[v_rows] - rows[u_rows]) >= 0


def test_non_finite_loss_names_component(small_cohort, tiny_config):
    model = Autoencoder.initialize(small_cohort.input_dim, 4, [8], np.random.default_rng(0))
    som = SomGrid.random(2, 3, 4, np.random.default_rng(1))
    model.decoder.biases[-1].values = np.full_like(model.decoder.biases[-1].values, np.inf)
    with pytest.raises(TrainingError, match="recon"):
        train(model, som, ReferenceTrajectories(2, 3, 4), small_cohort, tiny_config)


@pytest.mark.slow
def test_hard_som_leaves_more_empty_clusters_than_soft_som():
    from synthdata import generate_cohort

    cohort = generate_cohort(200, input_dim=32, seed=0)
    config = TrainConfig(seed=0)
    lsor = fit(cohort, config)
    hard = fit(cohort, config.merged(ABLATIONS["hard_som"]))

    observations = cohort.visit_table().observations
    lsor_empty = int((cluster_counts(lsor.som, lsor.model.encoder(observations).values) == 0).sum())
    hard_empty = int((cluster_counts(hard.som, hard.model.encoder(observations).values) == 0).sum())
    assert hard_empty > lsor_empty
