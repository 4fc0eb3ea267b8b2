from pathlib import Path
from typing import Optional, Tuple

import yaml

from logger import LogLevel

ROOT_PATH = Path(__file__).parent

# Sections searched, in order, by attribute-style access.
_SECTIONS = ('paths', 'logging', 'dataset', 'model', 'training', 'threading')


class Config:
    """
    Handles loading the configuration from config.yaml and provides access to the settings.
    Supports nested sections for paths, dataset, model, training, threading and logging.
    """

    def __init__(self, config_path: Optional[Path] = None):
        """
        Loads the configuration and resolves file paths.

        Args:
            config_path: Optional override of the default `config/config.yaml`.
        """
        if config_path is None:
            config_path = ROOT_PATH / 'config/config.yaml'

        with open(config_path, 'r') as f:
            self._config_data = yaml.safe_load(f) or {}

        self._resolve_paths()

    def _resolve_paths(self):
        """Resolves all file paths in the config to be absolute."""
        paths_config = self._config_data.setdefault('paths', {})
        for key in ('data_dir', 'checkpoint_dir', 'report_dir', 'tasks_file', 'human_accuracy_file'):
            if key in paths_config:
                paths_config[key] = ROOT_PATH / paths_config[key]

        logging_config = self._config_data.setdefault('logging', {})
        if 'log_dir' in logging_config:
            logging_config['log_dir'] = ROOT_PATH / logging_config['log_dir']
        if 'log_file' in logging_config:
            log_dir = logging_config.get('log_dir')
            if log_dir:
                # Combine log_dir and log_file into the full path.
                logging_config['log_file'] = Path(log_dir) / logging_config['log_file']
            else:
                logging_config['log_file'] = ROOT_PATH / logging_config['log_file']

    def __getattr__(self, name):
        """Provides attribute-style access to the configuration settings."""
        if name.startswith('_'):
            raise AttributeError(name)

        if name in self._config_data:
            return self._config_data[name]

        for section in _SECTIONS:
            section_config = self._config_data.get(section) or {}
            if name in section_config:
                return section_config[name]

        raise AttributeError(f"'Config' object has no attribute '{name}'")

    def _section(self, name: str) -> dict:
        """Returns a nested section, or an empty dict when it is missing."""
        return self._config_data.get(name) or {}

    def get_log_level(self) -> LogLevel:
        """
        Returns the LogLevel enum based on the log level config value.
        Validates the configured level and defaults to INFO if invalid.

        Returns:
            LogLevel: The configured log level (defaults to INFO if invalid).
        """
        level_str = str(self._section('logging').get('level', 'INFO')).upper()
        try:
            return LogLevel[level_str]
        except KeyError:
            print(f"Warning: Invalid log level '{level_str}' in config. Using INFO.")
            return LogLevel.INFO

    def get_console_print(self) -> bool:
        """Returns whether console printing is enabled (default: True)."""
        return self._section('logging').get('console_print', True)

    def get_worker_count(self) -> int:
        """
        Returns the number of worker threads for generation and separate-task suites.

        Returns:
            int: The number of threads (default: 4, minimum: 1).
        """
        thread_count = self._section('threading').get('thread_count', 4)
        return max(1, int(thread_count))

    def is_threading_enabled(self) -> bool:
        """Returns whether the thread pool is used (default: True)."""
        return self._section('threading').get('enabled', True)

    def get_batch_size(self) -> int:
        """Returns the training batch size (default: 32)."""
        return int(self._section('training').get('batch_size', 32))

    def get_learning_rate(self) -> float:
        """Returns the Adam learning rate (default: 0.001)."""
        return float(self._section('training').get('learning_rate', 0.001))

    def get_adam_betas(self) -> Tuple[float, float]:
        """Returns the Adam moment decay rates (default: (0.9, 0.999))."""
        training = self._section('training')
        return float(training.get('beta1', 0.9)), float(training.get('beta2', 0.999))

    def get_adam_epsilon(self) -> float:
        """Returns the Adam epsilon (default: 1e-8)."""
        return float(self._section('training').get('epsilon', 1e-8))

    def get_epoch_budget(self) -> int:
        """Returns the default epoch budget (default: 20)."""
        return int(self._section('training').get('epoch_budget', 20))

    def get_patience(self) -> int:
        """Returns the early-stopping patience in epochs (default: 10)."""
        return int(self._section('training').get('patience', 10))

    def get_precision(self) -> str:
        """Returns the training float precision, "float32" or "float64"."""
        precision = str(self._section('training').get('precision', 'float32'))
        return precision if precision in ('float32', 'float64') else 'float32'

    def get_human_average(self) -> float:
        """Returns the average human accuracy used as fallback threshold (default: 0.668)."""
        return float(self._section('training').get('human_average', 0.668))

    def get_layer_width(self) -> int:
        """Returns the default layer width N (default: 32)."""
        return int(self._section('model').get('layer_width', 32))

    def get_dropout_rate(self) -> float:
        """Returns the dropout rate (default: 0.3)."""
        return float(self._section('model').get('dropout_rate', 0.3))

    def get_leak(self) -> float:
        """Returns the SNU leak lambda (default: 0.8)."""
        return float(self._section('model').get('leak', 0.8))

    def get_bias_init(self) -> float:
        """Returns the SNU bias initial value (default: -1.0)."""
        return float(self._section('model').get('bias_init', -1.0))

    def get_surrogate(self) -> Tuple[str, float]:
        """Returns the surrogate gradient kind and width (default: triangular, 1.0)."""
        surrogate = self._section('model').get('surrogate') or {}
        return str(surrogate.get('kind', 'triangular')), float(surrogate.get('width', 1.0))

    def get_dataset_seed(self) -> int:
        """Returns the default dataset seed (default: 1234)."""
        return int(self._section('dataset').get('seed', 1234))

    def get_per_task_size(self) -> int:
        """Returns the separate-task dataset size (default: 3840)."""
        return int(self._section('dataset').get('per_task_size', 3840))

    def get_joint_size(self) -> int:
        """Returns the joint dataset size (default: 108000)."""
        return int(self._section('dataset').get('joint_size', 108000))

    def get_max_retries(self) -> int:
        """Returns the generator retry budget per frame set (default: 64)."""
        return max(1, int(self._section('dataset').get('max_retries', 64)))


# Create a single instance of the Config class to be used throughout the application
config = Config()
