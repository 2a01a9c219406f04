"""
Synthetic Cohort - Longitudinal vector data standing in for an imaging study
Subjects age at group-specific rates; observations encode the latent age factor
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy.special import expit

from config import GROUPS
from errors import DataError

# Brain-age years gained per calendar year, by diagnostic group
GROUP_RATES = {"NC": 1.0, "sMCI": 1.4, "pMCI": 2.0, "AD": 2.6}

# Group proportions of the reference cohort (185 / 193 / 135 / 119 of 632)
DEFAULT_GROUP_MIX = {"NC": 185 / 632, "sMCI": 193 / 632, "pMCI": 135 / 632, "AD": 119 / 632}

BASELINE_AGE_MEAN = 75.0
BASELINE_AGE_STD = 5.5
RATE_LOG_STD = 0.1
FACTOR_SCALE = 5.0
SIGMOIDS_PER_DIM = 3

BASE_COLUMNS = ["subject_id", "group", "time", "cognitive_score", "age", "age_factor"]


@dataclass
class Visit:
    time: float
    observation: np.ndarray
    cognitive_score: float
    age_factor: float


@dataclass
class Subject:
    subject_id: int
    group: str
    baseline_age: float
    progression_rate: float
    visits: list = field(default_factory=list)

    def __post_init__(self):
        if self.group not in GROUPS:
            raise DataError(f"subject {self.subject_id}: unknown group {self.group!r}")
        if len(self.visits) < 2:
            raise DataError(f"subject {self.subject_id}: needs at least two visits")
        times = [visit.time for visit in self.visits]
        if any(later <= earlier for earlier, later in zip(times, times[1:])):
            raise DataError(f"subject {self.subject_id}: visit times must strictly increase")


@dataclass
class VisitTable:
    """Flat per-visit arrays of a cohort, in subject then time order."""
    subject_ids: np.ndarray
    groups: np.ndarray
    times: np.ndarray
    ages: np.ndarray
    age_factors: np.ndarray
    cognitive_scores: np.ndarray
    observations: np.ndarray

    def __len__(self):
        return len(self.subject_ids)

    def subset(self, mask):
        return VisitTable(*(getattr(self, name)[mask] for name in (
            'subject_ids', 'groups', 'times', 'ages', 'age_factors',
            'cognitive_scores', 'observations')))


@dataclass
class Cohort:
    subjects: list
    input_dim: int

    def __post_init__(self):
        if not self.subjects:
            raise DataError("cohort has no subjects")

    @property
    def n_observations(self):
        return sum(len(subject.visits) for subject in self.subjects)

    def visit_table(self) -> VisitTable:
        rows = [(s.subject_id, s.group, v.time, s.baseline_age + v.time, v.age_factor,
                 v.cognitive_score, v.observation)
                for s in self.subjects for v in s.visits]
        ids, groups, times, ages, factors, scores, observations = zip(*rows)
        return VisitTable(
            np.asarray(ids, dtype=np.int64), np.asarray(groups, dtype=object),
            np.asarray(times), np.asarray(ages), np.asarray(factors),
            np.asarray(scores), np.vstack(observations))

    def pair_rows(self):
        """
        All ordered within-subject pairs (u before v, any gap) as row
        indices into visit_table().
        """
        u_rows, v_rows = [], []
        offset = 0
        for subject in self.subjects:
            n = len(subject.visits)
            for u in range(n):
                for v in range(u + 1, n):
                    u_rows.append(offset + u)
                    v_rows.append(offset + v)
            offset += n
        return np.asarray(u_rows, dtype=np.intp), np.asarray(v_rows, dtype=np.intp)

    def to_csv(self, path):
        """One row per visit; floats written at full round-trip precision."""
        header = BASE_COLUMNS + [f"x{d}" for d in range(self.input_dim)]
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for subject in self.subjects:
                for visit in subject.visits:
                    writer.writerow(
                        [str(subject.subject_id), subject.group, repr(float(visit.time)),
                         repr(float(visit.cognitive_score)),
                         repr(float(subject.baseline_age + visit.time)),
                         repr(float(visit.age_factor))]
                        + [repr(float(x)) for x in visit.observation])

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        if not path.is_file():
            raise DataError(f"cohort file not found: {path}")

        with open(path, newline='') as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or header[:len(BASE_COLUMNS)] != BASE_COLUMNS:
                raise DataError(f"{path}: header must start with {','.join(BASE_COLUMNS)}")
            input_dim = len(header) - len(BASE_COLUMNS)
            if input_dim < 1:
                raise DataError(f"{path}: no observation columns")

            records = {}
            for line_number, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise DataError(f"{path}:{line_number}: expected {len(header)} fields, got {len(row)}")
                try:
                    subject_id = int(row[0])
                    time, score, age, factor = (float(x) for x in row[2:6])
                    observation = np.array([float(x) for x in row[6:]])
                except ValueError as e:
                    raise DataError(f"{path}:{line_number}: {e}") from None
                records.setdefault(subject_id, (row[1], []))[1].append(
                    (age - time, Visit(time, observation, score, factor)))

        subjects = []
        for subject_id, (group, entries) in records.items():
            visits = [visit for _, visit in entries]
            first, last = visits[0], visits[-1]
            span = last.time - first.time
            rate = (last.age_factor - first.age_factor) / span if span > 0 else 0.0
            subjects.append(Subject(subject_id, group, entries[0][0], rate, visits))
        return cls(subjects, input_dim)


@dataclass
class ObservationModel:
    """
    Fixed smooth map from the latent age factor to input_dim features:
    a linear trend plus a sum of scaled sigmoids per feature.
    """
    linear: np.ndarray
    amplitudes: np.ndarray
    slopes: np.ndarray
    centers: np.ndarray

    @classmethod
    def random(cls, input_dim, rng):
        shape = (input_dim, SIGMOIDS_PER_DIM)
        return cls(
            linear=rng.normal(0.0, 0.5, size=input_dim),
            amplitudes=rng.normal(0.0, 1.0, size=shape),
            slopes=rng.uniform(0.5, 2.0, size=shape),
            centers=rng.uniform(-2.0, 2.0, size=shape))

    def __call__(self, age_factor):
        s = (np.atleast_1d(np.asarray(age_factor, dtype=np.float64)) - BASELINE_AGE_MEAN) / FACTOR_SCALE
        s = s[:, None, None]
        curves = (self.amplitudes * expit(self.slopes * (s - self.centers))).sum(axis=-1)
        return curves + self.linear * s[:, :, 0]


def cognitive_score(age_factor, noise):
    """ADAS-Cog-like score rising with brain age, clipped to [0, 70]."""
    score = 2.0 + 45.0 * expit((np.asarray(age_factor) - 82.0) / 4.0) + noise
    return np.clip(score, 0.0, 70.0)


def generate_cohort(n_subjects, visits_range=(2, 4), input_dim=32, group_mix=None, seed=0,
                    noise_sigma=0.05, subject_sigma=0.2) -> Cohort:
    """
    Draw a seeded cohort. Each subject has a group, a baseline age, a
    progression rate around its group's mean, 2+ visits at increasing
    times, and observations generated from baseline_age + rate * time.
    """
    if n_subjects < 1:
        raise DataError(f"n_subjects must be >= 1, got {n_subjects}")
    min_visits, max_visits = visits_range
    if min_visits < 2 or max_visits < min_visits:
        raise DataError(f"visits range must satisfy 2 <= min <= max, got {visits_range}")
    if input_dim < 1:
        raise DataError(f"input_dim must be >= 1, got {input_dim}")

    group_mix = dict(DEFAULT_GROUP_MIX if group_mix is None else group_mix)
    unknown = set(group_mix) - set(GROUPS)
    if unknown:
        raise DataError(f"group mix names unknown groups {sorted(unknown)}")
    weights = np.array([group_mix.get(group, 0.0) for group in GROUPS])
    if np.any(weights < 0) or not math.isclose(weights.sum(), 1.0, abs_tol=1e-9):
        raise DataError(f"group mix must be nonnegative and sum to 1, got {weights.sum():.12g}")

    model_seed, subject_seed = np.random.SeedSequence(seed).spawn(2)
    observe = ObservationModel.random(input_dim, np.random.default_rng(model_seed))
    rng = np.random.default_rng(subject_seed)

    subjects = []
    for subject_id in range(n_subjects):
        group = GROUPS[rng.choice(len(GROUPS), p=weights / weights.sum())]
        baseline_age = rng.normal(BASELINE_AGE_MEAN, BASELINE_AGE_STD)
        rate = GROUP_RATES[group] * math.exp(rng.normal(0.0, RATE_LOG_STD))
        n_visits = int(rng.integers(min_visits, max_visits + 1))
        times = np.concatenate([[0.0], np.cumsum(rng.uniform(0.5, 1.5, size=n_visits - 1))])

        factors = baseline_age + rate * times
        anatomy = subject_sigma * rng.normal(size=input_dim)
        observations = observe(factors) + anatomy + noise_sigma * rng.normal(size=(n_visits, input_dim))
        scores = cognitive_score(factors, rng.normal(0.0, 1.0, size=n_visits))

        visits = [Visit(float(t), obs, float(score), float(factor))
                  for t, obs, score, factor in zip(times, observations, scores, factors)]
        subjects.append(Subject(subject_id, group, float(baseline_age), float(rate), visits))

    return Cohort(subjects, input_dim)


@dataclass
class PairBatch:
    """Aligned (x^u, x^v, dt) pairs with covariates at the earlier visit."""
    x_u: np.ndarray
    x_v: np.ndarray
    delta_t: np.ndarray
    subject_ids: np.ndarray
    age_u: np.ndarray
    group: np.ndarray
    cognitive_u: np.ndarray

    def __post_init__(self):
        if np.any(~(self.delta_t > 0)):
            raise DataError("pair batch: every delta_t must be positive")

    def __len__(self):
        return len(self.delta_t)


class PairSampler:
    """
    Uniform shuffles of the pair set S, one permutation per epoch seeded
    by (seed, epoch), cut into batches; the last batch may be short.
    """

    def __init__(self, cohort: Cohort, batch_size, seed=0, augment_sigma=0.0):
        if batch_size < 1:
            raise DataError(f"batch size must be >= 1, got {batch_size}")
        self.table = cohort.visit_table()
        self.u_rows, self.v_rows = cohort.pair_rows()
        if self.u_rows.size == 0:
            raise DataError("cohort yields no longitudinal pairs")
        self.batch_size = int(batch_size)
        self.seed = seed
        self.augment_sigma = float(augment_sigma)

    def __len__(self):
        return int(self.u_rows.size)

    @property
    def batches_per_epoch(self):
        return math.ceil(len(self) / self.batch_size)

    def epoch(self, epoch) -> Iterator[PairBatch]:
        rng = np.random.default_rng([self.seed, epoch])
        order = rng.permutation(len(self))
        for start in range(0, len(self), self.batch_size):
            yield self._batch(order[start:start + self.batch_size], rng)

    def _batch(self, picks, rng):
        u, v = self.u_rows[picks], self.v_rows[picks]
        table = self.table
        x_u, x_v = table.observations[u], table.observations[v]
        if self.augment_sigma > 0:
            x_u = x_u + self.augment_sigma * rng.normal(size=x_u.shape)
            x_v = x_v + self.augment_sigma * rng.normal(size=x_v.shape)
        return PairBatch(
            x_u=x_u, x_v=x_v,
            delta_t=table.times[v] - table.times[u],
            subject_ids=table.subject_ids[u],
            age_u=table.ages[u],
            group=table.groups[u],
            cognitive_u=table.cognitive_scores[u])


def sample_pairs(cohort: Cohort, batch_size, seed=0, epoch=0):
    """One epoch of batches drawn without replacement from S."""
    return list(PairSampler(cohort, batch_size, seed).epoch(epoch))


def subject_folds(subject_ids, n_folds, seed=0):
    """Split unique subject ids into n_folds disjoint, seeded groups."""
    unique = np.unique(np.asarray(subject_ids))
    if n_folds < 2 or n_folds > unique.size:
        raise DataError(f"cannot split {unique.size} subjects into {n_folds} folds")
    shuffled = np.random.default_rng(seed).permutation(unique)
    return [np.sort(fold) for fold in np.array_split(shuffled, n_folds)]
