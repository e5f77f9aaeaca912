import logging
import os

from .errors import ConfigError
from .logging_utils import MODEL_LEVEL_NAME

logger = logging.getLogger(__name__)


class Config:
    """Configuration class for the osteorisk CLI."""

    def __init__(self):
        """Initialize configuration from environment variables."""
        # Paths
        self.output_dir = os.getenv("OSTEO_OUTPUT_DIR", "reports")
        self.schema_path = os.getenv("OSTEO_SCHEMA_PATH", os.path.join("config", "schema.json"))
        self.csv_path = os.getenv("OSTEO_CSV_PATH", os.path.join("data", "osteoporosis.csv"))

        # Experiment protocol
        self.seed = self._get_int("OSTEO_SEED", "42")
        self.test_fraction = self._get_float("OSTEO_TEST_FRACTION", "0.2")
        self.folds = self._get_int("OSTEO_FOLDS", "5")
        self.n_jobs = self._get_int("OSTEO_N_JOBS", "1")

        # Logging configuration
        self.log_level = os.getenv("LOG_LEVEL", "INFO").upper()
        self.model_log_level = os.getenv("MODEL_LOG_LEVEL", MODEL_LEVEL_NAME).upper()
        self.logs_dir = os.getenv("LOGS_DIR", "")
        self.exclude_library_logs = os.getenv("EXCLUDE_LIBRARY_LOGS", "false").lower() == "true"

        self._validate()

    def _get_int(self, key: str, default: str) -> int:
        """Read an integer environment variable."""
        raw = os.getenv(key, default)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"Environment variable {key} must be an integer, got {raw!r}")

    def _get_float(self, key: str, default: str) -> float:
        """Read a float environment variable."""
        raw = os.getenv(key, default)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"Environment variable {key} must be a number, got {raw!r}")

    def _validate(self):
        """Validate configuration values."""
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("OSTEO_TEST_FRACTION must lie strictly between 0 and 1")

        if self.folds < 2:
            raise ConfigError("OSTEO_FOLDS must be at least 2")

        if self.n_jobs < 1:
            raise ConfigError("OSTEO_N_JOBS must be at least 1")

        valid_levels = {"DEBUG", "INFO", MODEL_LEVEL_NAME, "WARNING", "ERROR", "CRITICAL"}
        if self.log_level not in valid_levels:
            raise ConfigError(f"Invalid LOG_LEVEL. Must be one of: {sorted(valid_levels)}")
        if self.model_log_level not in valid_levels:
            raise ConfigError(f"Invalid MODEL_LOG_LEVEL. Must be one of: {sorted(valid_levels)}")

        logger.debug("Configuration loaded:")
        logger.debug(f"  Output directory: {self.output_dir}")
        logger.debug(f"  Schema path: {self.schema_path}")
        logger.debug(f"  CSV path: {self.csv_path}")
        logger.debug(f"  Seed: {self.seed}")
        logger.debug(f"  Test fraction: {self.test_fraction}")
        logger.debug(f"  Folds: {self.folds}")
        logger.debug(f"  Workers: {self.n_jobs}")
        logger.debug(f"  Log level: {self.log_level}")
        logger.debug(f"  Model log level: {self.model_log_level}")
        logger.debug(f"  Logs directory: {self.logs_dir or 'disabled'}")
        logger.debug(f"  Exclude library logs: {self.exclude_library_logs}")
