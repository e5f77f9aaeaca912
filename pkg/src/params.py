import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from .errors import ConfigError, DataIOError, UsageError
from .families import DEFAULT_PARAMS, merge_params, resolve_family

logger = logging.getLogger(__name__)


class ParamsConfig:
    """Manages the hyperparameter file of one model family."""

    def __init__(self, family: str, config_path: Optional[str] = None):
        """Initialize the hyperparameter configuration."""
        self.family = resolve_family(family)
        if config_path is None:
            # Try different locations in order of preference
            possible_paths = [
                os.path.join("config", "params", f"{self.family}.json"),  # Working directory
                os.path.join(os.path.dirname(__file__), "..", "config", "params", f"{self.family}.json"),  # Relative to src/
            ]

            self.config_path = None
            for path in possible_paths:
                if os.path.exists(path):
                    self.config_path = path
                    break
            self.explicit = False
        else:
            if not os.path.exists(config_path):
                raise UsageError(f"Params file not found: {config_path}")
            self.config_path = config_path
            self.explicit = True

        self.params = self._load_params()

    def _load_params(self) -> Dict[str, Any]:
        """Load and validate parameters from the configuration file."""
        if self.config_path is None:
            logger.warning(f"No params file found for {self.family}, using built-in defaults")
            return self._get_default_params()
        try:
            with open(Path(self.config_path), "r", encoding="utf-8") as f:
                raw = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise DataIOError(f"Cannot read params file {self.config_path}: {e}")

        if not isinstance(raw, dict):
            raise ConfigError(f"Params file {self.config_path} must hold a JSON object")
        # Accept both {"family": ..., "params": {...}} and a bare parameter object
        if "params" in raw:
            declared = raw.get("family")
            if declared is not None and resolve_family(declared) != self.family:
                raise ConfigError(f"Params file {self.config_path} is for '{declared}', not '{self.family}'")
            raw = raw["params"]
        logger.info(f"Loaded {self.family} parameters from {self.config_path}")
        return merge_params(self.family, raw)

    def _get_default_params(self) -> Dict[str, Any]:
        """Get the built-in tuned parameters as fallback."""
        return merge_params(self.family, DEFAULT_PARAMS[self.family])

    def get_param(self, name: str) -> Any:
        """
        Get one parameter value.

        Args:
            name: Parameter name, e.g. ``max_depth``

        Returns:
            The configured value
        """
        if name not in self.params:
            raise ConfigError(f"{self.family} has no parameter '{name}'")
        return self.params[name]

    @property
    def source(self) -> str:
        """Where the parameters came from, for report provenance."""
        return self.config_path or "built-in defaults"
