#!/usr/bin/env python3
"""
Test that environment variables and parameter files are loaded correctly
without needing a .env file.
"""
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

# Add the repository root to the path so `src` imports resolve
sys.path.insert(0, str(Path(__file__).parent))

from src.config import Config
from src.errors import ConfigError, UsageError
from src.families import REPORTED_PARAMS
from src.params import ParamsConfig

CONFIG_KEYS = (
    'OSTEO_OUTPUT_DIR', 'OSTEO_SCHEMA_PATH', 'OSTEO_CSV_PATH', 'OSTEO_SEED', 'OSTEO_TEST_FRACTION',
    'OSTEO_FOLDS', 'OSTEO_N_JOBS', 'LOG_LEVEL', 'MODEL_LOG_LEVEL', 'LOGS_DIR', 'EXCLUDE_LIBRARY_LOGS',
)


class _Environment:
    """Temporarily replace the configuration variables."""

    def __init__(self, **values):
        self.values = values
        self.saved = {}

    def __enter__(self):
        self.saved = {key: os.environ.pop(key, None) for key in CONFIG_KEYS}
        os.environ.update(self.values)
        return self

    def __exit__(self, *exc):
        for key in CONFIG_KEYS:
            os.environ.pop(key, None)
            if self.saved.get(key) is not None:
                os.environ[key] = self.saved[key]
        return False


def test_defaults():
    """Without any variables the documented defaults apply."""
    print("=== Testing Default Configuration ===")
    with _Environment():
        config = Config()
    assert config.seed == 42
    assert config.test_fraction == 0.2
    assert config.folds == 5
    assert config.n_jobs == 1
    assert config.output_dir == "reports"
    assert config.csv_path == os.path.join("data", "osteoporosis.csv")
    assert config.schema_path == os.path.join("config", "schema.json")
    assert config.log_level == "INFO" and config.model_log_level == "MODEL"
    assert config.logs_dir == "" and config.exclude_library_logs is False
    print("✓ Defaults applied correctly for every variable")
    return True


def test_env_config():
    """Test that environment variables are loaded correctly."""
    print("\n=== Testing Environment Variable Configuration ===")
    with tempfile.TemporaryDirectory() as temp_dir:
        test_env_vars = {
            'OSTEO_OUTPUT_DIR': os.path.join(temp_dir, 'bundle'),
            'OSTEO_CSV_PATH': os.path.join(temp_dir, 'rows.csv'),
            'OSTEO_SEED': '7',
            'OSTEO_TEST_FRACTION': '0.25',
            'OSTEO_FOLDS': '3',
            'OSTEO_N_JOBS': '2',
            'LOG_LEVEL': 'debug',
            'EXCLUDE_LIBRARY_LOGS': 'TRUE',
        }
        with _Environment(**test_env_vars):
            config = Config()
        print("✓ Configuration loaded successfully")

        assert config.output_dir == test_env_vars['OSTEO_OUTPUT_DIR']
        assert config.csv_path == test_env_vars['OSTEO_CSV_PATH']
        assert config.seed == 7
        assert config.test_fraction == 0.25
        assert config.folds == 3
        assert config.n_jobs == 2
        assert config.log_level == 'DEBUG'
        assert config.exclude_library_logs is True
        print("✓ All configuration values match environment variables")
    return True


def test_invalid_values():
    """Malformed or out-of-range variables raise ConfigError."""
    print("\n=== Testing Invalid Configuration ===")
    cases = (
        {'OSTEO_SEED': 'abc'},
        {'OSTEO_TEST_FRACTION': 'half'},
        {'OSTEO_TEST_FRACTION': '1.0'},
        {'OSTEO_FOLDS': '1'},
        {'OSTEO_N_JOBS': '0'},
        {'LOG_LEVEL': 'LOUD'},
        {'MODEL_LOG_LEVEL': 'VERBOSE'},
    )
    for values in cases:
        with _Environment(**values):
            try:
                Config()
            except ConfigError:
                continue
        raise AssertionError(f"Expected ConfigError for {values}")
    print(f"✓ {len(cases)} invalid settings rejected")
    return True


def test_params_config():
    """Parameter files: shipped, explicit, mismatched and bare."""
    print("\n=== Testing Parameter Files ===")
    shipped = ParamsConfig("xgb")
    assert shipped.config_path is not None and shipped.source.endswith("xgb.json")
    for name, value in REPORTED_PARAMS["xgb"].items():
        assert shipped.get_param(name) == value, name
    print("✓ Shipped xgb parameters match the tuned values")

    with tempfile.TemporaryDirectory() as temp_dir:
        try:
            ParamsConfig("rf", os.path.join(temp_dir, "absent.json"))
            raise AssertionError("Expected UsageError for a missing params file")
        except UsageError:
            pass

        mismatched = Path(temp_dir) / "mismatched.json"
        mismatched.write_text(json.dumps({"family": "adaboost", "params": {"n_estimators": 5}}), encoding="utf-8")
        try:
            ParamsConfig("rf", str(mismatched))
            raise AssertionError("Expected ConfigError for a family mismatch")
        except ConfigError:
            pass

        bare = Path(temp_dir) / "bare.json"
        bare.write_text(json.dumps({"n_estimators": 12, "max_depth": 3}), encoding="utf-8")
        config = ParamsConfig("random_forest", str(bare))
        assert config.get_param("n_estimators") == 12
        assert config.get_param("max_depth") == 3
        assert config.explicit and config.source == str(bare)
        try:
            config.get_param("num_leaves")
            raise AssertionError("Expected ConfigError for an unknown parameter")
        except ConfigError:
            pass
    print("✓ Missing file, family mismatch and bare objects handled")
    return True


def test_dotenv_optional():
    """Test that the CLI works when no .env file is present."""
    print("\n=== Testing dotenv Optional Behavior ===")

    env_file = Path('.env')
    if env_file.exists():
        print("Found existing .env file - this test verifies it's not required")
    else:
        print("No .env file found - testing without it")

    try:
        from dotenv import load_dotenv
        load_dotenv(override=False)
        print("✓ load_dotenv(override=False) works without .env file")
        return True
    except Exception as e:
        raise AssertionError(f"load_dotenv failed: {e}")


def main():
    """Run all environment configuration tests."""
    print("Testing environment variable configuration...")
    print(f"Python path: {sys.path[0]}")
    print(f"Current directory: {os.getcwd()}")

    logging.basicConfig(level=logging.INFO, format='%(levelname)s: %(message)s')

    success = True
    success &= test_dotenv_optional()
    success &= test_defaults()
    success &= test_env_config()
    success &= test_invalid_values()
    success &= test_params_config()

    if success:
        print("\n🎉 All environment configuration tests passed!")
        sys.exit(0)
    else:
        print("\n❌ Some tests failed!")
        sys.exit(1)


if __name__ == '__main__':
    main()
