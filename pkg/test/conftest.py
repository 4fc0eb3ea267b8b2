import tempfile
from pathlib import Path

import numpy as np
import pytest

from dataset import generate_dataset
from logger import Logger, LogConfig, LogLevel
from riddles import default_registry
from signals import SignalHandler


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def temp_log_dir(temp_dir):
    """Create a temporary log directory."""
    log_dir = temp_dir / "logs"
    log_dir.mkdir()
    return log_dir


@pytest.fixture
def logger_config(temp_log_dir):
    """Create a logger configuration for testing."""
    return LogConfig(
        log_file=temp_log_dir / "test.log",
        log_dir=temp_log_dir,
        level=LogLevel.DEBUG,
        console_print=False
    )


@pytest.fixture
def logger(logger_config):
    """Create a logger instance for testing."""
    return Logger(logger_config)


@pytest.fixture
def temp_csv_file(temp_dir):
    """Create a path for a temporary CSV file."""
    return temp_dir / "test.csv"


@pytest.fixture
def rng():
    """A seeded numpy generator."""
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def clear_shutdown():
    """Every test starts without a pending shutdown request."""
    SignalHandler().reset()
    yield
    SignalHandler().reset()


@pytest.fixture(scope="session")
def registry():
    """The task roster from config/tasks.yaml."""
    return default_registry()


@pytest.fixture(scope="session")
def small_dataset(registry):
    """A 24-sample separate-task dataset of task 1 (split 16/4/4)."""
    return generate_dataset([1], 24, seed=7, registry=registry)


@pytest.fixture(scope="session")
def small_joint_dataset(registry):
    """A 12-sample dataset drawn from the canonical tasks."""
    return generate_dataset(registry.canonical_ids, 12, seed=11, workers=2, registry=registry)
