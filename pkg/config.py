"""
Configuration Management - Application settings and constants
Centralized defaults for data generation, models, analysis and run bookkeeping
"""

from pathlib import Path


class Config:
    """
    Application configuration class.
    Training hyperparameters live in trainer.TrainConfig; the values here
    are the application-wide defaults the CLI and analysis fall back on.
    """

    # Application Metadata
    APP_NAME = "lsor"
    APP_VERSION = "1.0.0"

    # Run bookkeeping
    RUNS_FOLDER = "runs"
    DATABASE_NAME = "lsor_runs.db"
    MANIFEST_NAME = "manifest.json"
    CHECKPOINT_NAME = "checkpoint.json"
    METRICS_NAME = "metrics.csv"

    # Logging Configuration
    LOG_FILE = "run.log"
    EVENTS_NAME = "events.json"
    LOG_LEVEL = "INFO"  # DEBUG, INFO, WARNING, ERROR, CRITICAL
    CONSOLE_LOGGING = True
    MAX_MEMORY_LOGS = 1000

    # Synthetic cohort defaults
    GEN_SUBJECTS = 200
    GEN_MIN_VISITS = 2
    GEN_MAX_VISITS = 4
    GEN_INPUT_DIM = 32
    GEN_NOISE_SIGMA = 0.05
    GEN_SUBJECT_SIGMA = 0.2

    # Model defaults
    LATENT_DIM = 64
    HIDDEN_DIMS = (64, 64)
    LEAKY_SLOPE = 0.2

    # Numerical guards
    DIRECTION_NORM_EPS = 1e-12
    GAMMA_EPS = 1e-12
    DCOR_VARIANCE_EPS = 1e-12
    PCA_EIGEN_EPS = 1e-12

    # Analysis defaults
    AGE_BINS = 4
    PROBE_HIDDEN = 64
    PROBE_EPOCHS = 300
    PROBE_LEARNING_RATE = 1e-2
    PROBE_FOLDS = 5
    PROBE_VAL_FRACTION = 0.1
    PROTOTYPE_NEIGHBORS = 20

    @classmethod
    def get_runs_path(cls, root=None):
        """Get or create the runs root directory."""
        runs_dir = Path(root) if root else Path(cls.RUNS_FOLDER)
        runs_dir.mkdir(parents=True, exist_ok=True)
        return runs_dir

    @classmethod
    def get_database_path(cls, root=None):
        """Registry database path inside the runs root."""
        return cls.get_runs_path(root) / cls.DATABASE_NAME

    @classmethod
    def validate_config(cls):
        """
        Validate configuration values.
        Returns tuple (valid, errors).
        """
        errors = []

        if cls.GEN_MIN_VISITS < 2:
            errors.append("Subjects need at least two visits")
        if cls.GEN_MAX_VISITS < cls.GEN_MIN_VISITS:
            errors.append("Max visits must be >= min visits")
        if cls.GEN_NOISE_SIGMA < 0 or cls.GEN_SUBJECT_SIGMA < 0:
            errors.append("Noise levels must be nonnegative")
        if not (0 < cls.LEAKY_SLOPE < 1):
            errors.append("Leaky slope must be between 0 and 1")
        if not (0 < cls.PROBE_VAL_FRACTION < 1):
            errors.append("Probe validation fraction must be between 0 and 1")
        if cls.PROBE_FOLDS < 2:
            errors.append("Probe cross-validation needs at least 2 folds")

        return (len(errors) == 0, errors)

    @classmethod
    def get_config_dict(cls):
        """
        Get configuration as dictionary.
        Written into run manifests.
        """
        return {
            'app_name': cls.APP_NAME,
            'version': cls.APP_VERSION,
            'log_level': cls.LOG_LEVEL,
            'latent_dim': cls.LATENT_DIM,
            'hidden_dims': list(cls.HIDDEN_DIMS),
            'leaky_slope': cls.LEAKY_SLOPE,
            'age_bins': cls.AGE_BINS,
            'probe_hidden': cls.PROBE_HIDDEN,
            'probe_folds': cls.PROBE_FOLDS,
            'probe_val_fraction': cls.PROBE_VAL_FRACTION,
            'prototype_neighbors': cls.PROTOTYPE_NEIGHBORS
        }


# Diagnostic groups of the synthetic cohort, ordered by progression speed
GROUPS = ("NC", "sMCI", "pMCI", "AD")

# Groups counted as "severe cognitive decline"
SEVERE_GROUPS = ("pMCI", "AD")
