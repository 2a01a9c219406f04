"""
Analysis - Interpretability and evaluation of a trained grid
Similarity grids, group averages, distance correlation, PCA field, probes
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform
from scipy.special import expit, softmax
from scipy.stats import rankdata

import diffcore as dc
from config import Config, SEVERE_GROUPS
from errors import AnalysisError, ShapeError
from model import Autoencoder, Network, encode
from som import SomGrid, nearest_indices
from synthdata import Cohort, subject_folds

COVARIATES = ("age", "age_factor", "cognitive_score", "severe_decline")

PROBE_TASKS = {
    "nc_vs_ad": ("classification", ("NC", "AD")),
    "smci_vs_pmci": ("classification", ("sMCI", "pMCI")),
    "cognitive_score": ("regression", None),
}


@dataclass
class SimilarityGrid:
    """Distribution rho over grid cells and the distance scale gamma behind it."""
    rho: np.ndarray
    gamma: float

    @property
    def shape(self):
        return self.rho.shape

    def argmax(self):
        return np.unravel_index(int(np.argmax(self.rho)), self.rho.shape)


def _latent_rows(z, latent_dim):
    z = np.atleast_2d(z.values if isinstance(z, dc.Tensor) else np.asarray(z, dtype=np.float64))
    if z.shape[1] != latent_dim:
        raise ShapeError(f"similarity grid: latent dim {z.shape[1]} vs grid dim {latent_dim}")
    return z


def similarity_grids(latents, grid: SomGrid):
    """
    Batched rho = softmax(-d / gamma) with d the squared distances to every
    representation and gamma their population standard deviation. Rows with
    gamma below the guard get the uniform grid and gamma = inf.
    Returns (rho of shape (n, N_r, N_c), gamma of shape (n,)).
    """
    z = _latent_rows(latents, grid.latent_dim)
    d = cdist(z, grid.vectors(), "sqeuclidean")
    gamma = d.std(axis=1)
    degenerate = gamma < Config.GAMMA_EPS

    rho = np.full_like(d, 1.0 / grid.n_cells)
    live = ~degenerate
    if live.any():
        rho[live] = softmax(-d[live] / gamma[live, None], axis=1)
    gamma = np.where(degenerate, np.inf, gamma)
    return rho.reshape(-1, grid.n_rows, grid.n_cols), gamma


def similarity_grid(z, grid: SomGrid) -> SimilarityGrid:
    rho, gamma = similarity_grids(z, grid)
    return SimilarityGrid(rho[0], float(gamma[0]))


def average_grids(grids) -> SimilarityGrid:
    grids = list(grids)
    if not grids:
        raise AnalysisError("cannot average an empty list of similarity grids")
    rho = np.mean([g.rho for g in grids], axis=0)
    return SimilarityGrid(rho, float(np.mean([g.gamma for g in grids])))


@dataclass
class SampleTable:
    """Per-visit latents, grid assignments, similarity grids and covariates."""
    subject_ids: np.ndarray
    groups: np.ndarray
    times: np.ndarray
    ages: np.ndarray
    age_factors: np.ndarray
    cognitive_scores: np.ndarray
    observations: np.ndarray
    latents: np.ndarray
    cells: np.ndarray
    rho: np.ndarray
    gamma: np.ndarray
    grid_shape: tuple

    def __len__(self):
        return len(self.subject_ids)

    @property
    def severe_decline(self):
        return np.isin(self.groups, SEVERE_GROUPS).astype(np.float64)

    def grid_coordinates(self):
        """(n, 2) row and column of each sample's nearest cell."""
        rows, cols = np.divmod(self.cells, self.grid_shape[1])
        return np.stack([rows, cols], axis=1).astype(np.float64)

    def covariate(self, name):
        if name == "age":
            return self.ages
        if name == "age_factor":
            return self.age_factors
        if name == "cognitive_score":
            return self.cognitive_scores
        if name == "severe_decline":
            return self.severe_decline
        raise AnalysisError(f"unknown covariate {name!r}; expected one of {', '.join(COVARIATES)}")

    def grid(self, index) -> SimilarityGrid:
        return SimilarityGrid(self.rho[index], float(self.gamma[index]))

    def subset(self, mask) -> SampleTable:
        mask = np.asarray(mask)
        names = ('subject_ids', 'groups', 'times', 'ages', 'age_factors', 'cognitive_scores',
                 'observations', 'latents', 'cells', 'rho', 'gamma')
        return SampleTable(*(getattr(self, name)[mask] for name in names), self.grid_shape)


def embed_cohort(model: Autoencoder, som: SomGrid, cohort: Cohort) -> SampleTable:
    """Encode every visit with the frozen encoder and place it on the grid."""
    table = cohort.visit_table()
    latents = encode(model.encoder, table.observations).values
    rho, gamma = similarity_grids(latents, som)
    return SampleTable(
        table.subject_ids, table.groups, table.times, table.ages, table.age_factors,
        table.cognitive_scores, table.observations, latents, nearest_indices(som, latents),
        rho, gamma, som.shape)


def group_average_grid(table: SampleTable, predicate: Callable, label=None) -> SimilarityGrid:
    """
    Elementwise mean of the similarity grids of the samples selected by
    predicate(table) -> boolean mask.
    """
    mask = np.asarray(predicate(table), dtype=bool)
    if not mask.any():
        name = label or getattr(predicate, '__name__', repr(predicate))
        raise AnalysisError(f"no samples match group {name}")
    return SimilarityGrid(table.rho[mask].mean(axis=0), float(np.mean(table.gamma[mask])))


def diagnostic_group_averages(table: SampleTable):
    """Average grid per diagnostic group present in the table."""
    averages = {}
    for group in dict.fromkeys(table.groups):
        averages[group] = group_average_grid(table, lambda t, g=group: t.groups == g, group)
    return averages


def distance_correlation(x, y) -> float:
    """
    Distance correlation from double-centered Euclidean distance matrices:
    sqrt(dCov^2 / sqrt(dVar_x^2 dVar_y^2)). Zero when either variable is
    constant.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x = x.reshape(len(x), -1)
    y = y.reshape(len(y), -1)
    if x.shape[0] != y.shape[0]:
        raise AnalysisError(f"distance correlation: {x.shape[0]} vs {y.shape[0]} samples")
    if x.shape[0] < 2:
        raise AnalysisError("distance correlation needs at least two samples")

    a = _double_centered(x)
    b = _double_centered(y)
    dcov2 = (a * b).mean()
    dvar_x = (a * a).mean()
    dvar_y = (b * b).mean()
    if dvar_x < Config.DCOR_VARIANCE_EPS or dvar_y < Config.DCOR_VARIANCE_EPS:
        return 0.0
    return float(math.sqrt(max(dcov2, 0.0) / math.sqrt(dvar_x * dvar_y)))


def _double_centered(values):
    d = squareform(pdist(values, "euclidean"))
    return d - d.mean(axis=0, keepdims=True) - d.mean(axis=1, keepdims=True) + d.mean()


def dcor_report(table: SampleTable):
    """dCor between per-sample grid coordinates and each covariate."""
    coordinates = table.grid_coordinates()
    return [{'covariate': name, 'n': len(table),
             'dcor': distance_correlation(coordinates, table.covariate(name))}
            for name in COVARIATES]


@dataclass
class PcaProjection:
    """Two principal axes of the SOM representations and everything projected onto them."""
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    points: np.ndarray
    nodes: np.ndarray
    edges: list
    reference_arrows: np.ndarray | None
    reference_mask: np.ndarray | None
    arrows: np.ndarray | None

    def reconstruct(self, points):
        return self.mean + np.asarray(points) @ self.components


def lattice_edges(n_rows, n_cols):
    """Row-major index pairs of horizontally and vertically adjacent cells."""
    edges = []
    for r in range(n_rows):
        for c in range(n_cols):
            here = r * n_cols + c
            if c + 1 < n_cols:
                edges.append((here, here + 1))
            if r + 1 < n_rows:
                edges.append((here, here + n_cols))
    return edges


def pca_project(vectors, grid: SomGrid, refs=None, trajectories=None) -> PcaProjection:
    """
    Project latents, the grid lattice and trajectory arrows onto the top two
    principal axes of the SOM representations. The first nonzero loading
    of each axis is made positive.
    """
    representations = grid.vectors()
    if representations.shape[0] < 2:
        raise AnalysisError("PCA needs at least two SOM representations")

    mean = representations.mean(axis=0)
    centered = representations - mean
    covariance = centered.T @ centered / representations.shape[0]
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues, eigenvectors = eigenvalues[order], eigenvectors[:, order]

    scale = max(1.0, float(abs(eigenvalues[0])))
    if eigenvalues.size < 2 or eigenvalues[1] <= Config.PCA_EIGEN_EPS * scale:
        raise AnalysisError("PCA: SOM representations span fewer than two dimensions")

    components = eigenvectors[:, :2].T.copy()
    for axis in range(2):
        loadings = components[axis]
        first = np.flatnonzero(np.abs(loadings) > Config.PCA_EIGEN_EPS)[0]
        if loadings[first] < 0:
            components[axis] = -loadings

    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if vectors.shape[1] != grid.latent_dim:
        raise ShapeError(f"pca_project: latent dim {vectors.shape[1]} vs grid dim {grid.latent_dim}")

    reference_arrows = reference_mask = arrows = None
    if refs is not None:
        reference_arrows = refs.flat_values() @ components.T
        reference_mask = refs.flat_initialized().copy()
    if trajectories is not None:
        trajectories = np.asarray(trajectories, dtype=np.float64)
        if trajectories.shape != vectors.shape:
            raise ShapeError(f"pca_project: {trajectories.shape} trajectories for "
                             f"{vectors.shape} latents")
        arrows = trajectories @ components.T

    return PcaProjection(
        mean=mean, components=components, explained_variance=eigenvalues[:2].copy(),
        points=(vectors - mean) @ components.T, nodes=centered @ components.T,
        edges=lattice_edges(grid.n_rows, grid.n_cols), reference_arrows=reference_arrows,
        reference_mask=reference_mask, arrows=arrows)


def subject_trajectories(table: SampleTable):
    """
    Consecutive-visit trajectories of every subject.
    Returns (row index of the earlier visit, dz) with dz = (z^v - z^u) / dt.
    """
    starts, deltas = [], []
    for subject in dict.fromkeys(table.subject_ids):
        rows = np.flatnonzero(table.subject_ids == subject)
        rows = rows[np.argsort(table.times[rows], kind="stable")]
        for u, v in zip(rows[:-1], rows[1:]):
            dt = table.times[v] - table.times[u]
            starts.append(u)
            deltas.append((table.latents[v] - table.latents[u]) / dt)
    if not starts:
        return np.zeros(0, dtype=np.intp), np.zeros((0, table.latents.shape[1]))
    return np.asarray(starts, dtype=np.intp), np.vstack(deltas)


@dataclass
class ProbeMetrics:
    task: str
    bacc: float = float("nan")
    auc: float = float("nan")
    r2: float = float("nan")
    rmse: float = float("nan")

    def to_dict(self):
        return asdict(self)


def _binary_labels(labels):
    labels = np.asarray(labels)
    values = np.unique(labels)
    if values.size != 2 or not np.all(np.isin(values, (0, 1))):
        raise AnalysisError(f"classification needs both classes 0 and 1, got {values.tolist()}")
    return labels.astype(np.int64)


def classification_metrics(scores, labels):
    """
    Balanced accuracy at threshold 0.5 and rank-based AUC (ties count 1/2).
    Returns (bacc, auc).
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = _binary_labels(labels).ravel()
    if scores.shape != labels.shape:
        raise AnalysisError(f"classification metrics: {scores.size} scores, {labels.size} labels")

    predicted = scores >= 0.5
    positives = labels == 1
    recall_pos = predicted[positives].mean()
    recall_neg = (~predicted[~positives]).mean()
    bacc = 0.5 * (recall_pos + recall_neg)

    n_pos = int(positives.sum())
    n_neg = labels.size - n_pos
    ranks = rankdata(scores)
    auc = (ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return float(bacc), float(auc)


def regression_metrics(preds, targets):
    """R2 = 1 - SS_res / SS_tot and RMSE. Returns (r2, rmse)."""
    preds = np.asarray(preds, dtype=np.float64).ravel()
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if preds.shape != targets.shape:
        raise AnalysisError(f"regression metrics: {preds.size} predictions, {targets.size} targets")
    if targets.size < 2:
        raise AnalysisError("regression metrics need at least two samples")
    ss_tot = float(np.sum((targets - targets.mean()) ** 2))
    if ss_tot < Config.DCOR_VARIANCE_EPS:
        raise AnalysisError("R2 undefined: targets have zero variance")
    residual = preds - targets
    r2 = 1.0 - float(np.sum(residual ** 2)) / ss_tot
    return r2, float(np.sqrt(np.mean(residual ** 2)))


class Standardizer:
    """Column means and scales of a training split, reused on held-out data."""

    def __init__(self, values):
        values = np.asarray(values, dtype=np.float64)
        self.mean = values.mean(axis=0)
        scale = values.std(axis=0)
        self.scale = np.where(scale < Config.DCOR_VARIANCE_EPS, 1.0, scale)

    def __call__(self, values):
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.scale

    def invert(self, values):
        return np.asarray(values) * self.scale + self.mean


def _probe_loss(network, x, y, task):
    s = network.forward(x)
    y = dc.Tensor(y.reshape(-1, 1))
    if task == "classification":
        return dc.mean(dc.softplus(s) - y * s)
    return dc.mean((s - y) * (s - y))


def fit_probe(x_train, y_train, x_val, y_val, task, seed=0, hidden=Config.PROBE_HIDDEN,
              epochs=Config.PROBE_EPOCHS, learning_rate=Config.PROBE_LEARNING_RATE):
    """
    Full-batch Adam on a two-layer network over standardized latents;
    the weights with the lowest validation loss are kept.
    Returns a predict function mapping latents to probabilities or values.
    """
    if task not in ("classification", "regression"):
        raise AnalysisError(f"unknown probe task {task!r}")
    if task == "classification":
        _binary_labels(y_train)
    if len(x_val) == 0:
        x_val, y_val = x_train, y_train

    x_scaler = Standardizer(x_train)
    y_scaler = Standardizer(np.asarray(y_train, dtype=np.float64).reshape(-1, 1)) \
        if task == "regression" else None

    def targets(y):
        y = np.asarray(y, dtype=np.float64)
        return y_scaler(y.reshape(-1, 1)).ravel() if y_scaler else y

    xt, yt = x_scaler(x_train), targets(y_train)
    xv, yv = x_scaler(x_val), targets(y_val)

    rng = np.random.default_rng(seed)
    network = Network.initialize([xt.shape[1], hidden, 1], rng, name="probe")
    params = network.parameters()
    optimizer = dc.AdamState(lr=learning_rate)
    best_loss, best_values = math.inf, [p.values.copy() for p in params]

    for _ in range(epochs):
        loss = _probe_loss(network, xt, yt, task)
        dc.backward(loss)
        dc.adam_step(params, optimizer)
        val_loss = _probe_loss(network, xv, yv, task).item()
        if val_loss < best_loss:
            best_loss, best_values = val_loss, [p.values.copy() for p in params]

    for p, values in zip(params, best_values):
        p.values = values

    def predict(latents):
        out = network.forward(x_scaler(latents)).values.ravel()
        if task == "classification":
            return expit(out)
        return y_scaler.invert(out.reshape(-1, 1)).ravel()

    return predict


def _evaluate(predict, x, y, task, name):
    out = predict(x)
    if task == "classification":
        bacc, auc = classification_metrics(out, y)
        return ProbeMetrics(name, bacc=bacc, auc=auc)
    r2, rmse = regression_metrics(out, y)
    return ProbeMetrics(name, r2=r2, rmse=rmse)


def _split_groups(groups, fraction, rng):
    unique = np.unique(groups)
    n_held = min(max(1, int(round(fraction * unique.size))), unique.size - 1)
    held = rng.permutation(unique)[:n_held]
    mask = np.isin(groups, held)
    return ~mask, mask


def train_probe(latents, targets, task, seed=0, groups=None, test_fraction=0.2,
                val_fraction=Config.PROBE_VAL_FRACTION, **probe_options) -> ProbeMetrics:
    """
    Train a probe on frozen latents and score it on a held-out split.
    Splits are made over groups (subject ids) when given, over samples otherwise.
    """
    latents = np.asarray(latents, dtype=np.float64)
    targets = np.asarray(targets)
    groups = np.arange(len(targets)) if groups is None else np.asarray(groups)
    if not (len(latents) == len(targets) == len(groups)):
        raise AnalysisError("train_probe: latents, targets and groups differ in length")

    rng = np.random.default_rng(seed)
    train_mask, test_mask = _split_groups(groups, test_fraction, rng)
    fit_mask, val_mask = _split_groups(groups[train_mask], val_fraction, rng)
    x_train, y_train = latents[train_mask], targets[train_mask]

    predict = fit_probe(x_train[fit_mask], y_train[fit_mask], x_train[val_mask], y_train[val_mask],
                        task, seed, **probe_options)
    return _evaluate(predict, latents[test_mask], targets[test_mask], task, task)


@dataclass
class ProbeReport:
    task: str
    folds: list
    summary: dict


def _summarize(folds):
    summary = {}
    for key in ("bacc", "auc", "r2", "rmse"):
        values = np.array([getattr(f, key) for f in folds], dtype=np.float64)
        if np.all(np.isnan(values)):
            continue
        summary[key] = {'mean': float(np.mean(values)), 'std': float(np.std(values))}
    return summary


def cross_validate_probe(latents, targets, task, subject_ids, seed=0, n_folds=Config.PROBE_FOLDS,
                         val_fraction=Config.PROBE_VAL_FRACTION, name=None,
                         **probe_options) -> ProbeReport:
    """
    Subject-level k-fold evaluation; in each fold a share of the training
    subjects is held out for validation-based weight selection.
    """
    latents = np.asarray(latents, dtype=np.float64)
    targets = np.asarray(targets)
    subject_ids = np.asarray(subject_ids)
    name = name or task
    rng = np.random.default_rng(seed)

    folds = []
    for index, fold in enumerate(subject_folds(subject_ids, n_folds, seed)):
        test_mask = np.isin(subject_ids, fold)
        train_ids = subject_ids[~test_mask]
        fit_mask, val_mask = _split_groups(train_ids, val_fraction, rng)
        x_train, y_train = latents[~test_mask], targets[~test_mask]
        predict = fit_probe(x_train[fit_mask], y_train[fit_mask], x_train[val_mask],
                            y_train[val_mask], task, seed + index, **probe_options)
        folds.append(_evaluate(predict, latents[test_mask], targets[test_mask], task, name))
    return ProbeReport(name, folds, _summarize(folds))


def probe_dataset(table: SampleTable, task_name):
    """Latents, targets and subject ids for one of PROBE_TASKS."""
    if task_name not in PROBE_TASKS:
        raise AnalysisError(f"unknown probe task {task_name!r}; expected one of "
                            f"{', '.join(PROBE_TASKS)}")
    kind, classes = PROBE_TASKS[task_name]
    if kind == "regression":
        return kind, table.latents, table.cognitive_scores, table.subject_ids
    mask = np.isin(table.groups, classes)
    labels = (table.groups[mask] == classes[1]).astype(np.int64)
    return kind, table.latents[mask], labels, table.subject_ids[mask]


@dataclass
class CellFactorMaps:
    """Per-cell sample count and covariate means; NaN where a cell is empty."""
    count: np.ndarray
    mean_age: np.ndarray
    mean_age_factor: np.ndarray
    severe_fraction: np.ndarray
    mean_cognitive: np.ndarray

    def items(self):
        return asdict(self).items()


def cell_factor_maps(table: SampleTable) -> CellFactorMaps:
    n_cells = table.grid_shape[0] * table.grid_shape[1]
    count = np.bincount(table.cells, minlength=n_cells).astype(np.float64)

    def cell_mean(values):
        sums = np.bincount(table.cells, weights=values, minlength=n_cells)
        with np.errstate(invalid="ignore", divide="ignore"):
            means = np.where(count > 0, sums / count, np.nan)
        return means.reshape(table.grid_shape)

    return CellFactorMaps(
        count=count.reshape(table.grid_shape),
        mean_age=cell_mean(table.ages),
        mean_age_factor=cell_mean(table.age_factors),
        severe_fraction=cell_mean(table.severe_decline),
        mean_cognitive=cell_mean(table.cognitive_scores))


def cell_prototypes(table: SampleTable, som: SomGrid, k=Config.PROTOTYPE_NEIGHBORS):
    """Mean observation of the k latents nearest each SOM representation."""
    k = min(int(k), len(table))
    if k < 1:
        raise AnalysisError("cell prototypes need at least one sample")
    distances = cdist(som.vectors(), table.latents, "sqeuclidean")
    nearest = np.argsort(distances, axis=1, kind="stable")[:, :k]
    prototypes = table.observations[nearest].mean(axis=1)
    return prototypes.reshape(som.n_rows, som.n_cols, -1)


def subject_grid_sequence(table: SampleTable, subject_id):
    """(time, SimilarityGrid) for each visit of one subject, in visit order."""
    rows = np.flatnonzero(table.subject_ids == subject_id)
    if rows.size == 0:
        raise AnalysisError(f"subject {subject_id} not found")
    rows = rows[np.argsort(table.times[rows], kind="stable")]
    return [(float(table.times[r]), table.grid(r)) for r in rows]


def example_subjects(table: SampleTable):
    """One subject per diagnostic group: the lowest id among those with the most visits."""
    chosen = {}
    for group in dict.fromkeys(table.groups):
        ids, visits = np.unique(table.subject_ids[table.groups == group], return_counts=True)
        chosen[group] = int(ids[np.argmax(visits)])
    return chosen


def expected_column(rho):
    """Expected grid column under each rho (n, N_r, N_c) or a single grid."""
    rho = np.asarray(rho, dtype=np.float64)
    column_mass = rho.sum(axis=-2)
    return column_mass @ np.arange(rho.shape[-1], dtype=np.float64)


@dataclass
class AgeBin:
    lower: float
    upper: float
    count: int
    mass_center: float


def age_bins(ages, n_bins=Config.AGE_BINS):
    """Quantile bin edges of ages and the bin of every sample, youngest first."""
    ages = np.asarray(ages, dtype=np.float64)
    if len(ages) < n_bins:
        raise AnalysisError(f"{len(ages)} samples cannot fill {n_bins} age bins")
    edges = np.quantile(ages, np.linspace(0.0, 1.0, n_bins + 1))
    bins = np.clip(np.searchsorted(edges, ages, side="right") - 1, 0, n_bins - 1)
    return edges, bins


def age_bin_mass_centers(table: SampleTable, n_bins=Config.AGE_BINS, ages=None):
    """Mean expected column per quantile bin of age, youngest bin first."""
    edges, bins = age_bins(table.ages if ages is None else ages, n_bins)
    centers = expected_column(table.rho)

    result = []
    for b in range(n_bins):
        members = bins == b
        center = float(centers[members].mean()) if members.any() else float("nan")
        result.append(AgeBin(float(edges[b]), float(edges[b + 1]), int(members.sum()), center))
    return result


def is_nondecreasing(values):
    values = np.asarray(values, dtype=np.float64)
    return bool(np.all(np.diff(values) >= 0))


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def write_grid_csv(path, matrix):
    matrix = np.asarray(matrix, dtype=np.float64)
    write_csv(path, [f"col{c}" for c in range(matrix.shape[1])], matrix.tolist())


def write_sample_table(path, table: SampleTable):
    n_rows, n_cols = table.grid_shape
    rho_columns = [f"rho_{r}_{c}" for r in range(n_rows) for c in range(n_cols)]
    header = ["subject_id", "time", "eps_row", "eps_col", *rho_columns, "gamma",
              "group", "age", "age_factor", "cognitive_score", "severe_decline"]
    coordinates = table.grid_coordinates().astype(np.int64)
    severe = table.severe_decline.astype(np.int64)
    rows = ([table.subject_ids[i], table.times[i], coordinates[i, 0], coordinates[i, 1],
             *table.rho[i].ravel(), table.gamma[i], table.groups[i], table.ages[i],
             table.age_factors[i], table.cognitive_scores[i], severe[i]]
            for i in range(len(table)))
    write_csv(path, header, rows)


def write_pca_csv(path, projection: PcaProjection, grid_shape):
    """Node and sample rows with their 2-D positions and projected arrows."""
    n_cols = grid_shape[1]
    header = ["kind", "index", "row", "col", "pc1", "pc2", "arrow_pc1", "arrow_pc2"]
    rows = []
    for i, (x, y) in enumerate(projection.nodes):
        arrow = ["", ""]
        if projection.reference_arrows is not None and projection.reference_mask[i]:
            arrow = list(projection.reference_arrows[i])
        rows.append(["node", i, i // n_cols, i % n_cols, x, y, *arrow])
    for i, (x, y) in enumerate(projection.points):
        arrow = list(projection.arrows[i]) if projection.arrows is not None else ["", ""]
        rows.append(["sample", i, "", "", x, y, *arrow])
    write_csv(path, header, rows)


def write_probe_csv(path, reports):
    """Per-fold rows followed by mean and std rows for every report."""
    header = ["task", "fold", "bacc", "auc", "r2", "rmse"]
    rows = []
    for report in reports:
        for index, fold in enumerate(report.folds):
            rows.append([report.task, index, fold.bacc, fold.auc, fold.r2, fold.rmse])
        for stat in ("mean", "std"):
            rows.append([report.task, stat] + [
                report.summary[key][stat] if key in report.summary else float("nan")
                for key in ("bacc", "auc", "r2", "rmse")])
    write_csv(path, header, rows)


def evaluate_representation(model: Autoencoder, som: SomGrid, cohort: Cohort, probe=False,
                            seed=0, n_folds=Config.PROBE_FOLDS, **probe_options):
    """
    Summary numbers used to compare training variants: empty clusters,
    dCor of grid coordinates against the aging covariates, monotonicity of
    the age-bin mass centers and, optionally, cross-validated probe scores.
    """
    table = embed_cohort(model, som, cohort)
    counts = np.bincount(table.cells, minlength=som.n_cells)
    coordinates = table.grid_coordinates()
    centers = [b.mass_center for b in age_bin_mass_centers(table)]
    summary = {
        'empty_clusters': int((counts == 0).sum()),
        'dcor_age_factor': distance_correlation(coordinates, table.age_factors),
        'dcor_cognitive': distance_correlation(coordinates, table.cognitive_scores),
        'dcor_age': distance_correlation(coordinates, table.ages),
        'mass_center_monotone': is_nondecreasing(centers),
    }
    if probe:
        for task in PROBE_TASKS:
            kind, x, y, ids = probe_dataset(table, task)
            report = cross_validate_probe(x, y, kind, ids, seed, n_folds, name=task,
                                          **probe_options)
            key = "auc" if kind == "classification" else "r2"
            summary[f"{key}_{task}"] = report.summary[key]['mean']
    return summary
