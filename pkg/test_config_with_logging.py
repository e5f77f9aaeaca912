#!/usr/bin/env python3
"""
Test that the configuration loads correctly together with the logging setup.

This test verifies:
1. Configuration loads the logging options from the environment
2. Logging writes MODEL records to the log file
3. Third-party records are dropped when library logs are excluded
"""

import logging
import os
import sys
import tempfile
from pathlib import Path

# Add the repository root to the path so `src` imports resolve
sys.path.insert(0, str(Path(__file__).parent))


def _reset_root_logger():
    root = logging.getLogger()
    for handler in list(root.handlers):
        handler.close()
        root.removeHandler(handler)


def test_configuration_with_logging():
    """Test configuration loading with logging options."""
    print("=== Testing Configuration with Logging Options ===")

    test_env = {
        'LOG_LEVEL': 'MODEL',
        'MODEL_LOG_LEVEL': 'MODEL',
        'EXCLUDE_LIBRARY_LOGS': 'true',
    }
    saved = {key: os.environ.get(key) for key in test_env}
    for key, value in test_env.items():
        os.environ[key] = value

    try:
        from src.config import Config
        from src.logging_utils import LOG_FILE_NAME, MODEL_LEVEL, configure_logging, get_model_logger

        config = Config()
        assert config.log_level == 'MODEL', f"Expected LOG_LEVEL=MODEL, got {config.log_level}"
        assert config.model_log_level == 'MODEL'
        assert config.exclude_library_logs is True
        print("✓ Configuration loaded with logging options")

        with tempfile.TemporaryDirectory() as temp_dir:
            logs_dir = Path(temp_dir) / "logs"
            configure_logging(
                log_level=config.log_level,
                logs_dir=str(logs_dir),
                exclude_library_logs=config.exclude_library_logs,
                model_log_level=config.model_log_level,
            )
            try:
                model_logger = get_model_logger('src.ensemble')
                assert hasattr(model_logger, 'model'), "Model logger should have model() method"
                assert logging.getLogger().level == MODEL_LEVEL

                model_logger.model("boosting round 1: train log-loss 0.5")
                logging.getLogger('src.data').info("below the MODEL level")
                logging.getLogger('joblib.pool').error("worker chatter")

                text = (logs_dir / LOG_FILE_NAME).read_text(encoding="utf-8")
                assert "boosting round 1" in text
                assert " - MODEL - " in text
                assert "below the MODEL level" not in text
                assert "worker chatter" not in text
                print("✓ MODEL records reach the log file, library records are filtered")
            finally:
                _reset_root_logger()

        return True

    finally:
        for key, value in saved.items():
            if value is None:
                os.environ.pop(key, None)
            else:
                os.environ[key] = value


def test_fitting_loggers_follow_model_level():
    """Fitting loggers stay at MODEL even when the base level is WARNING."""
    print("\n=== Testing Fitting Logger Levels ===")
    from src.logging_utils import MODEL_LEVEL, configure_logging

    configure_logging(log_level='WARNING', model_log_level='MODEL')
    try:
        assert logging.getLogger().level == logging.WARNING
        for name in ('src.ensemble', 'src.linear', 'src.tuning', 'src.explain'):
            assert logging.getLogger(name).level == MODEL_LEVEL, name
        stream = logging.getLogger().handlers[0]
        assert getattr(stream, 'stream', None) is sys.stderr
        print("✓ Fitting loggers at MODEL, console logs on stderr")
        return True
    finally:
        _reset_root_logger()


def test_library_filter():
    """The filter matches excluded logger names by prefix."""
    print("\n=== Testing Library Log Filter ===")
    from src.logging_utils import LibraryLogFilter

    log_filter = LibraryLogFilter()

    def record(name):
        return logging.LogRecord(name, logging.ERROR, __file__, 1, "message", None, None)

    assert not log_filter.filter(record('joblib.externals.loky'))
    assert not log_filter.filter(record('hypothesis'))
    assert log_filter.filter(record('src.main'))
    print("✓ joblib and hypothesis dropped, src kept")
    return True


def test_logging_import():
    """Test that logging components can be imported."""
    print("\n=== Testing Logging Import ===")

    try:
        from src.logging_utils import MODEL_LEVEL, LibraryLogFilter, configure_logging, get_model_logger
        from src.config import Config

        print("✓ All logging components imported successfully")
        return True

    except ImportError as e:
        raise AssertionError(f"Import failed: {e}")


def main():
    """Run all tests."""
    print("Testing configuration with logging...\n")

    try:
        success = True
        success &= test_logging_import()
        success &= test_configuration_with_logging()
        success &= test_fitting_loggers_follow_model_level()
        success &= test_library_filter()

        if success:
            print("\n=== All Tests Passed! ===")
            print("✅ Configuration loads correctly with logging options")
            print("✅ Logging components work as expected")
        else:
            print("\n❌ Some tests failed!")

        return success

    except Exception as e:
        print(f"\n❌ Unexpected error: {e}")
        import traceback
        traceback.print_exc()
        return False


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
