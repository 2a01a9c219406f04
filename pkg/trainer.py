"""
Trainer - Two-phase training of the self-organized longitudinal representation
Reconstruction pretraining, k-means SOM init, full objective, checkpoints
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

import diffcore as dc
from config import Config
from errors import CheckpointError, ConfigError, TrainingError
from logger import quiet_logger
from longitudinal import (BatchTrajectoryStats, ReferenceTrajectories, direction_loss,
                          ema_update, trajectory)
from model import Autoencoder, encode, make_latent_pair, recon_loss
from som import (SomGrid, TauSchedule, commit_loss, gather_representations, hard_weight_matrix,
                 kmeans_init, nearest_indices, soft_weight_matrix, som_loss, tau_at)
from synthdata import Cohort, PairSampler

CHECKPOINT_FORMAT = "lsor-checkpoint"
CHECKPOINT_VERSION = 1

METRIC_COLUMNS = ["epoch", "recon", "commit", "som", "dir", "total", "tau",
                  "uninit_cells", "excluded_dir_samples"]


@dataclass
class TrainConfig:
    """Training hyperparameters; field names double as config-file keys."""
    lambda_commit: float = 0.5
    lambda_som: float = 1.0
    lambda_dir: float = 0.2
    learning_rate: float = 5e-4
    weight_decay: float = 1e-5
    pretrain_epochs: int = 10
    train_epochs: int = 40
    batch_size: int = 64
    ema_alpha: float = 0.99
    tau_min: float = 0.1
    tau_max: float = 1.0
    n_rows: int = 4
    n_cols: int = 8
    seed: int = 0
    latent_dim: int = Config.LATENT_DIM
    hidden_dims: list = field(default_factory=lambda: list(Config.HIDDEN_DIMS))
    leaky_slope: float = Config.LEAKY_SLOPE
    hard_som: bool = False
    checkpoint_every: int = 10
    augment_sigma: float = 0.0
    kmeans_max_iter: int = 100

    def validate(self):
        """
        Validate hyperparameters.
        Returns tuple (valid, errors).
        """
        errors = []

        for name in ("lambda_commit", "lambda_som", "lambda_dir", "weight_decay", "augment_sigma"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be >= 0")
        if not self.learning_rate > 0:
            errors.append("learning_rate must be > 0")
        if not (0 < self.ema_alpha < 1):
            errors.append("ema_alpha must lie in (0, 1)")
        if not (0 < self.tau_min <= self.tau_max):
            errors.append("tau_min and tau_max must satisfy 0 < tau_min <= tau_max")
        for name in ("batch_size", "n_rows", "n_cols", "latent_dim", "kmeans_max_iter"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be >= 1")
        for name in ("pretrain_epochs", "train_epochs", "checkpoint_every"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be >= 0")
        if any(h < 1 for h in self.hidden_dims):
            errors.append("hidden_dims entries must be >= 1")
        if not (0 <= self.leaky_slope < 1):
            errors.append("leaky_slope must lie in [0, 1)")

        return (len(errors) == 0, errors)

    def check(self):
        valid, errors = self.validate()
        if not valid:
            raise ConfigError("invalid training config: " + "; ".join(errors))
        return self

    def tau_schedule(self, batches_per_epoch):
        """Neighbourhood schedule spanning every iteration of the SOM phase."""
        return TauSchedule(self.tau_min, self.tau_max,
                           max(1, self.train_epochs * batches_per_epoch))

    def to_dict(self):
        data = asdict(self)
        data['hidden_dims'] = list(self.hidden_dims)
        return data

    @classmethod
    def from_dict(cls, data):
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls().merged(data)

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: malformed JSON ({e})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object of config keys")
        return cls.from_dict(data)

    def merged(self, overrides):
        """Copy with non-None overrides applied, coerced to each field's type."""
        data = self.to_dict()
        for f in fields(self):
            value = overrides.get(f.name)
            if value is None:
                continue
            try:
                data[f.name] = _coerce(f.name, data[f.name], value)
            except (TypeError, ValueError):
                raise ConfigError(f"config key {f.name}: cannot use value {value!r}") from None
        return TrainConfig(**data)


# Config overrides of the comparison variants run by `ablate`
ABLATIONS = {
    "lsor": {},
    "hard_som": {"hard_som": True},
    "no_dir": {"lambda_dir": 0.0},
    "plain_ae": {"lambda_som": 0.0, "lambda_dir": 0.0},
}


def _coerce(name, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError(name)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or float(value) != int(value):
            raise ValueError(name)
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool):
            raise TypeError(name)
        return float(value)
    if isinstance(default, list):
        return [int(v) for v in value]
    return value


@dataclass
class LossBreakdown:
    """Scalar components of one iteration's objective."""
    recon: float
    commit: float
    som: float
    dir: float
    total: float
    tau: float
    uninit_cells: int
    excluded_dir_samples: int

    def components(self):
        return {"recon": self.recon, "commit": self.commit, "som": self.som, "dir": self.dir}


@dataclass
class LossResult:
    loss: dc.Tensor
    breakdown: LossBreakdown
    eps_u: np.ndarray
    delta_z: np.ndarray


@dataclass
class EpochMetrics:
    epoch: int
    recon: float
    commit: float
    som: float
    dir: float
    total: float
    tau: float
    uninit_cells: int
    excluded_dir_samples: int

    @classmethod
    def average(cls, epoch, breakdowns):
        """Epoch means of the losses; tau and uninit_cells at epoch end; exclusions summed."""
        def mean_of(name):
            return float(np.mean([getattr(b, name) for b in breakdowns]))

        last = breakdowns[-1]
        return cls(epoch, mean_of("recon"), mean_of("commit"), mean_of("som"),
                   mean_of("dir"), mean_of("total"), last.tau, last.uninit_cells,
                   int(sum(b.excluded_dir_samples for b in breakdowns)))

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    history: list
    iterations: int
    checkpoints: list
    metrics_path: Path | None


@dataclass
class TrainingRun:
    model: Autoencoder
    som: SomGrid
    refs: ReferenceTrajectories
    config: TrainConfig
    pretrain_history: list
    result: TrainResult


@dataclass
class Checkpoint:
    model: Autoencoder
    som: SomGrid
    refs: ReferenceTrajectories
    config: TrainConfig
    iteration: int


def _observations(cohort):
    return cohort.visit_table().observations


def pretrain(model: Autoencoder, som: SomGrid, data: Cohort, config: TrainConfig,
             sampler=None, logger=None):
    """
    Minimize only the latent reconstruction terms for pretrain_epochs, then
    initialize the SOM grid by k-means over the latents of every visit.
    Returns the per-epoch mean reconstruction losses.
    """
    logger = logger or quiet_logger()
    sampler = sampler or PairSampler(data, config.batch_size, config.seed, config.augment_sigma)
    optimizer = dc.AdamState(lr=config.learning_rate, weight_decay=config.weight_decay)
    params = model.parameters()
    history = []

    for epoch in range(config.pretrain_epochs):
        losses = []
        for batch in sampler.epoch(epoch):
            pair = make_latent_pair(model.encoder, batch.x_u, batch.x_v, batch.delta_t)
            loss = recon_loss(batch.x_u, batch.x_v, pair.z_u, pair.z_v, None, None, model.decoder)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"pretraining epoch {epoch}: non-finite recon loss")
            dc.backward(loss)
            dc.adam_step(params, optimizer)
            losses.append(value)
        history.append(float(np.mean(losses)))
        logger.log_epoch("PRETRAIN", {"epoch": epoch, "recon": history[-1]})

    latents = encode(model.encoder, _observations(data)).values
    centers = kmeans_init(latents, som.n_cells, config.seed, config.kmeans_max_iter)
    som.assign(centers)
    logger.log_event("PRETRAIN", f"SOM initialized by k-means over {latents.shape[0]} latents")
    return history


def total_loss(batch, model: Autoencoder, som: SomGrid, refs: ReferenceTrajectories,
               config: TrainConfig, t, schedule: TauSchedule) -> LossResult:
    """
    L = L_recon + l_commit L_commit + l_som L_som + l_dir L_dir on one tape.
    tau is read from schedule at iteration t.
    """
    pair = make_latent_pair(model.encoder, batch.x_u, batch.x_v, batch.delta_t)

    eps_u = nearest_indices(som, pair.z_u)
    eps_v = nearest_indices(som, pair.z_v)
    g_u = gather_representations(som, eps_u)
    g_v = gather_representations(som, eps_v)

    recon = recon_loss(batch.x_u, batch.x_v, pair.z_u, pair.z_v, g_u, g_v, model.decoder)
    commit = commit_loss(pair.z_u, pair.z_v, g_u, g_v)

    tau = tau_at(schedule, som, t)
    if config.hard_som:
        w_u = hard_weight_matrix(eps_u, som.n_cells)
        w_v = hard_weight_matrix(eps_v, som.n_cells)
    else:
        w_u = soft_weight_matrix(eps_u, som.shape, tau)
        w_v = soft_weight_matrix(eps_v, som.shape, tau)
    som_term = som_loss(som, pair.z_u, pair.z_v, w_u, w_v)

    delta_z = trajectory(pair.z_u, pair.z_v, pair.delta_t)
    direction = direction_loss(delta_z, refs, eps_u)

    loss = recon + dc.scale(commit, config.lambda_commit) \
        + dc.scale(som_term, config.lambda_som) \
        + dc.scale(direction.loss, config.lambda_dir)

    breakdown = LossBreakdown(
        recon=recon.item(), commit=commit.item(), som=som_term.item(),
        dir=direction.loss.item(), total=loss.item(), tau=float(tau),
        uninit_cells=refs.uninitialized_count(), excluded_dir_samples=direction.excluded)
    return LossResult(loss, breakdown, eps_u, delta_z.values.copy())


def _check_finite(breakdown, t):
    for name, value in breakdown.components().items():
        if not math.isfinite(value):
            raise TrainingError(f"iteration {t}: non-finite {name} loss ({value})")
    if not math.isfinite(breakdown.total):
        raise TrainingError(f"iteration {t}: non-finite total loss")


def canonicalize_orientation(model: Autoencoder, som: SomGrid, refs: ReferenceTrajectories,
                             data: Cohort):
    """
    Reflect the grid so that later visits sit, on average, at larger row and
    column indices than earlier ones. Reflection leaves every loss unchanged.
    Returns the flipped axes.
    """
    table = data.visit_table()
    u_rows, v_rows = data.pair_rows()
    cells = nearest_indices(som, encode(model.encoder, table.observations).values)
    rows, cols = np.divmod(cells, som.n_cols)
    flipped = []
    for axis, position in ((0, rows), (1, cols)):
        if np.mean(position[v_rows] - position[u_rows]) < 0:
            som.flip(axis)
            refs.flip(axis)
            flipped.append(axis)
    return flipped


def train(model: Autoencoder, som: SomGrid, refs: ReferenceTrajectories, data: Cohort,
          config: TrainConfig, run_dir=None, sampler=None, logger=None,
          epoch_callback=None) -> TrainResult:
    """
    SOM phase: per iteration forward, backward, Adam step on encoder, decoder
    and SOM, then EMA of the reference trajectories from detached dz.
    """
    logger = logger or quiet_logger()
    sampler = sampler or PairSampler(data, config.batch_size, config.seed, config.augment_sigma)
    run_dir = Path(run_dir) if run_dir else None
    if run_dir:
        run_dir.mkdir(parents=True, exist_ok=True)

    schedule = config.tau_schedule(sampler.batches_per_epoch)
    optimizer = dc.AdamState(lr=config.learning_rate, weight_decay=config.weight_decay)
    params = model.parameters() + [som.representations]
    history, checkpoints = [], []
    t = 0

    for epoch in range(config.train_epochs):
        breakdowns = []
        for batch in sampler.epoch(config.pretrain_epochs + epoch):
            result = total_loss(batch, model, som, refs, config, t, schedule)
            _check_finite(result.breakdown, t)
            dc.backward(result.loss)
            dc.adam_step(params, optimizer)

            stats = BatchTrajectoryStats.from_batch(result.delta_z, result.eps_u, som.n_cells)
            ema_update(refs, stats, config.ema_alpha, t)
            breakdowns.append(result.breakdown)
            t += 1

        metrics = EpochMetrics.average(epoch, breakdowns)
        history.append(metrics)
        logger.log_epoch("TRAIN", metrics.to_dict())
        if epoch_callback:
            epoch_callback(metrics)

        if run_dir and config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0 \
                and epoch + 1 < config.train_epochs:
            path = run_dir / f"checkpoint_epoch{epoch + 1:03d}.json"
            save_checkpoint(path, model, som, refs, config, t)
            checkpoints.append(path)

    flipped = canonicalize_orientation(model, som, refs, data)
    if flipped:
        logger.log_event("TRAIN", f"grid reflected along axes {flipped} for canonical orientation")

    if refs.uninitialized_count():
        logger.log_event("TRAIN", f"{refs.uninitialized_count()} reference cells never received "
                                  "a trajectory", "WARNING")

    metrics_path = None
    if run_dir:
        path = run_dir / Config.CHECKPOINT_NAME
        save_checkpoint(path, model, som, refs, config, t)
        checkpoints.append(path)
        metrics_path = run_dir / Config.METRICS_NAME
        write_metrics_csv(metrics_path, history)

    return TrainResult(history, t, checkpoints, metrics_path)


def fit(data: Cohort, config: TrainConfig, run_dir=None, logger=None,
        epoch_callback=None) -> TrainingRun:
    """Pretraining, k-means initialization and the SOM phase in one call."""
    config.check()
    logger = logger or quiet_logger()
    rng = np.random.default_rng(config.seed)

    model = Autoencoder.initialize(data.input_dim, config.latent_dim, config.hidden_dims,
                                   rng, config.leaky_slope)
    som = SomGrid(config.n_rows, config.n_cols, config.latent_dim)
    refs = ReferenceTrajectories(config.n_rows, config.n_cols, config.latent_dim)
    sampler = PairSampler(data, config.batch_size, config.seed, config.augment_sigma)
    logger.log_event("DATA", f"{len(data.subjects)} subjects, {len(sampler)} pairs, "
                             f"{sampler.batches_per_epoch} batches per epoch")

    pretrain_history = pretrain(model, som, data, config, sampler, logger)
    result = train(model, som, refs, data, config, run_dir, sampler, logger, epoch_callback)
    return TrainingRun(model, som, refs, config, pretrain_history, result)


def _format(value):
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def write_metrics_csv(path, history):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(METRIC_COLUMNS)
        for metrics in history:
            row = metrics.to_dict()
            writer.writerow([_format(row[column]) for column in METRIC_COLUMNS])


def save_checkpoint(path, model, som, refs, config, iteration=0):
    """Deterministic JSON: layer dims, flat parameter buffers, grid, refs, config."""
    record = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'code_version': Config.APP_VERSION,
        'iteration': int(iteration),
        'config': config.to_dict(),
        'model': model.to_dict(),
        'som': som.to_dict(),
        'refs': refs.to_dict()
    }
    Path(path).write_text(json.dumps(record, sort_keys=True))


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        record = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: not a checkpoint ({e})") from None
    if record.get('format') != CHECKPOINT_FORMAT or record.get('version') != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint format {record.get('format')!r} "
            f"version {record.get('version')!r}")

    try:
        som = SomGrid.from_dict(record['som'])
        refs = ReferenceTrajectories.from_dict(record['refs'], som.n_rows, som.n_cols, som.latent_dim)
        return Checkpoint(Autoencoder.from_dict(record['model']), som, refs,
                          TrainConfig.from_dict(record['config']), record['iteration'])
    except (KeyError, ConfigError) as e:
        raise CheckpointError(f"{path}: incomplete checkpoint ({e})") from None
