"""
Training and evaluation harness for the separate-task and joint setups.
"""
import sys
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import yaml

from checkpoint import load_checkpoint, save_checkpoint
from config import config
from dataset import Dataset, SplitView, default_dataset_path, generate_dataset, load_dataset, save_dataset, split
from errors import ConfigurationError, DatasetIntegrityError, RangeError
from files import FileHandler
from layers import Module
from logger import Logger
from optim import Adam
from oren import OReN
from recurrent import RECURRENT_KINDS, SurrogateSpec
from riddles import TaskRegistry, default_registry
from saccadic import SaccadicNet
from signals import SignalHandler
from vision import DEFAULT_LAYOUT, INPUT_SIZE, TINY_LAYOUT

SETUPS = ('separate', 'joint')
MODEL_KINDS = ('oren',) + RECURRENT_KINDS
LAYOUTS = {'default': DEFAULT_LAYOUT, 'tiny': TINY_LAYOUT}


@dataclass
class ExperimentConfig:
    """
    One training run. Defaults come from config/config.yaml.

    A separate-setup run binds exactly one task id; a joint run uses every
    registered task.
    """
    setup: str = 'separate'
    model: str = 'ssnu'
    width: int = field(default_factory=config.get_layer_width)
    task_id: Optional[int] = 1
    dataset_size: Optional[int] = None
    dataset_seed: int = field(default_factory=config.get_dataset_seed)
    dataset_path: Optional[str] = None
    train_seed: int = 0
    eval_seed: int = 0
    epochs: int = field(default_factory=config.get_epoch_budget)
    patience: int = field(default_factory=config.get_patience)
    batch_size: int = field(default_factory=config.get_batch_size)
    learning_rate: float = field(default_factory=config.get_learning_rate)
    beta1: float = field(default_factory=lambda: config.get_adam_betas()[0])
    beta2: float = field(default_factory=lambda: config.get_adam_betas()[1])
    epsilon: float = field(default_factory=config.get_adam_epsilon)
    precision: str = field(default_factory=config.get_precision)
    dropout_rate: float = field(default_factory=config.get_dropout_rate)
    leak: float = field(default_factory=config.get_leak)
    bias_init: float = field(default_factory=config.get_bias_init)
    surrogate: str = field(default_factory=lambda: config.get_surrogate()[0])
    surrogate_width: float = field(default_factory=lambda: config.get_surrogate()[1])
    input_size: int = INPUT_SIZE
    channels: int = 32
    layout: str = 'default'
    human_threshold: Optional[float] = None
    checkpoint_dir: Optional[str] = None
    report_dir: Optional[str] = None

    @property
    def name(self) -> str:
        scope = f"task{self.task_id:02d}" if self.setup == 'separate' else 'joint'
        return f"{self.model}_N{self.width}_{scope}_seed{self.train_seed}"

    @property
    def dtype(self):
        return np.float64 if self.precision == 'float64' else np.float32

    def task_ids(self, registry: TaskRegistry) -> List[int]:
        return [self.task_id] if self.setup == 'separate' else registry.ids

    def size(self) -> int:
        if self.dataset_size is not None:
            return self.dataset_size
        return config.get_per_task_size() if self.setup == 'separate' else config.get_joint_size()

    def validate(self, registry: Optional[TaskRegistry] = None) -> "ExperimentConfig":
        """
        Checks every setting before any work starts.

        Raises:
            ConfigurationError: Naming the first offending key.
        """
        registry = registry or default_registry()
        if self.setup not in SETUPS:
            raise ConfigurationError(f"setup must be one of {SETUPS}, got {self.setup!r}")
        if self.model not in MODEL_KINDS:
            raise ConfigurationError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.setup == 'separate' and (self.task_id is None or self.task_id not in registry):
            raise ConfigurationError(f"separate setup needs one registered task_id, got {self.task_id!r}")
        if self.setup == 'joint' and self.task_id is not None:
            raise ConfigurationError("joint setup uses every registered task; task_id must be unset")
        if self.width < 1:
            raise ConfigurationError(f"width must be >= 1, got {self.width}")
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.patience < 1:
            raise ConfigurationError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.size() <= 0 or self.size() % 6 != 0:
            raise ConfigurationError(f"dataset_size must be a positive multiple of 6, got {self.size()}")
        if self.precision not in ('float32', 'float64'):
            raise ConfigurationError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.layout not in LAYOUTS:
            raise ConfigurationError(f"layout must be one of {tuple(LAYOUTS)}, got {self.layout!r}")
        try:
            SurrogateSpec(self.surrogate, self.surrogate_width)
        except RangeError as e:
            raise ConfigurationError(str(e)) from e
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def joint_defaults(data: dict) -> dict:
    """Unsets the task id of a joint setup that does not name one."""
    if data.get('setup') == 'joint' and 'task_id' not in data:
        return {**data, 'task_id': None}
    return data


def load_experiment_config(path: Path, **overrides) -> ExperimentConfig:
    """
    Reads an experiment from a YAML key-value file.

    Raises:
        ConfigurationError: For unknown keys or invalid values.
    """
    with open(path, 'r') as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a key-value mapping")
    data.update({k: v for k, v in overrides.items() if v is not None})
    data = joint_defaults(data)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"{path}: unknown experiment keys {unknown}")
    return ExperimentConfig(**data)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: Optional[float]
    val_accuracy: float


@dataclass
class RunReport:
    """Per-epoch metrics plus the final, once-only test evaluation."""
    name: str
    config: dict
    epochs: List[EpochMetrics] = field(default_factory=list)
    best_epoch: int = 0
    test_accuracy: Optional[float] = None
    threshold: float = 0.668
    epochs_to_threshold: Optional[int] = None
    parameter_count: int = 0
    wall_clock: float = 0.0
    interrupted: bool = False

    @property
    def val_accuracies(self) -> List[float]:
        """Validation accuracy of epochs 1..n (the untrained epoch 0 excluded)."""
        return [m.val_accuracy for m in self.epochs if m.epoch > 0]

    def to_dict(self) -> dict:
        return asdict(self)


def build_model(cfg: ExperimentConfig, rng: np.random.Generator) -> Module:
    """Instantiates the model the config names."""
    layout = LAYOUTS[cfg.layout]
    if cfg.model == 'oren':
        return OReN(cfg.width, rng, cfg.input_size, cfg.channels, layout, cfg.dropout_rate, cfg.dtype)
    return SaccadicNet(cfg.model, cfg.width, rng, cfg.input_size, cfg.channels, layout, cfg.dropout_rate,
                       leak=cfg.leak, bias_init=cfg.bias_init,
                       surrogate=SurrogateSpec(cfg.surrogate, cfg.surrogate_width), dtype=cfg.dtype)


def evaluate_accuracy(model, view: SplitView, seed: int = 0, batch_size: int = 32) -> float:
    """
    Fraction of samples whose predicted oddity matches the label (inference mode).

    Raises:
        DatasetIntegrityError: If the split is empty.
    """
    if len(view) == 0:
        raise DatasetIntegrityError(f"cannot evaluate the empty {view.name} split")
    correct = 0
    for indices, frames, labels, _ in view.batches(batch_size):
        correct += int(np.sum(model.predict(frames, indices, seed) == labels))
    return correct / len(view)


def epochs_to_threshold(report: Union[RunReport, Sequence[float]], threshold: float) -> Optional[int]:
    """
    First epoch (1-based) whose validation accuracy reaches `threshold`, or None.

    Accepts a RunReport or the validation accuracies of epochs 1..n.
    """
    accuracies = report.val_accuracies if isinstance(report, RunReport) else list(report)
    for epoch, accuracy in enumerate(accuracies, start=1):
        if accuracy >= threshold:
            return epoch
    return None


def human_threshold(cfg: ExperimentConfig) -> float:
    """The task's human accuracy when tabulated, else the human average."""
    if cfg.human_threshold is not None:
        return cfg.human_threshold
    if cfg.setup == 'separate':
        table = FileHandler.load_human_accuracy(config.human_accuracy_file)
        if cfg.task_id in table:
            return table[cfg.task_id]
    return config.get_human_average()


def obtain_dataset(cfg: ExperimentConfig, registry: TaskRegistry, logger: Logger) -> Dataset:
    """Loads the configured dataset, generating and saving it first when missing."""
    task_ids = cfg.task_ids(registry)
    path = Path(cfg.dataset_path) if cfg.dataset_path else default_dataset_path(task_ids, cfg.dataset_seed)
    if path.exists():
        logger.log_info("Loading dataset", path=path)
        dataset = load_dataset(path)
        if len(dataset) != cfg.size():
            raise ConfigurationError(f"{path} holds {len(dataset)} samples, config expects {cfg.size()}")
        return dataset
    workers = config.get_worker_count() if config.is_threading_enabled() else 1
    dataset = generate_dataset(task_ids, cfg.size(), cfg.dataset_seed, workers=workers,
                               registry=registry, logger=logger, max_retries=config.get_max_retries())
    save_dataset(dataset, path)
    logger.log_info("Dataset saved", path=path, size=len(dataset))
    return dataset


def run_experiment(cfg: ExperimentConfig, logger: Optional[Logger] = None, registry: Optional[TaskRegistry] = None,
                   dataset: Optional[Dataset] = None, save: bool = True) -> RunReport:
    """
    Trains with early stopping on validation accuracy, then tests the best checkpoint once.

    Epoch 0 is the untrained evaluation. A shutdown request stops training
    after the current batch; the best checkpoint is still tested and reported.

    Raises:
        ConfigurationError: Before any training, for an invalid config.
    """
    logger = logger or Logger.null()
    registry = registry or default_registry()
    cfg.validate(registry)
    started = time.perf_counter()

    if dataset is None:
        dataset = obtain_dataset(cfg, registry, logger)
    train_view, val_view, test_view = split(dataset)

    rng = np.random.default_rng(cfg.train_seed)
    model = build_model(cfg, rng)
    optimizer = Adam(model.trainable_parameters(), cfg.learning_rate, (cfg.beta1, cfg.beta2), cfg.epsilon)
    report = RunReport(name=cfg.name, config=cfg.to_dict(), parameter_count=model.parameter_count(),
                       threshold=human_threshold(cfg))
    checkpoint_dir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else config.checkpoint_dir
    checkpoint_path = checkpoint_dir / f"{cfg.name}.ockp"
    metadata = {'model': cfg.model, 'N': cfg.width, 'seed': cfg.train_seed}

    best = evaluate_accuracy(model, val_view, cfg.eval_seed, cfg.batch_size)
    report.epochs.append(EpochMetrics(epoch=0, train_loss=None, val_accuracy=best))
    save_checkpoint(checkpoint_path, model, {**metadata, 'epoch': 0}, optimizer)
    logger.log_info("Experiment started", name=cfg.name, parameters=report.parameter_count, val_accuracy=best)

    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        order = rng.permutation(len(train_view))
        for _, frames, labels, _ in train_view.batches(cfg.batch_size, order):
            if SignalHandler().is_shutdown_requested:
                report.interrupted = True
                break
            losses.append(model.train_batch(frames, labels, optimizer, rng))
        if report.interrupted:
            logger.log_warning("Shutdown requested, stopping training", name=cfg.name, epoch=epoch)
            break

        accuracy = evaluate_accuracy(model, val_view, cfg.eval_seed, cfg.batch_size)
        report.epochs.append(EpochMetrics(epoch=epoch, train_loss=float(np.mean(losses)), val_accuracy=accuracy))
        logger.log_info("Epoch finished", name=cfg.name, epoch=epoch, loss=float(np.mean(losses)),
                        val_accuracy=accuracy)
        if accuracy > best:
            best, stale = accuracy, 0
            report.best_epoch = epoch
            save_checkpoint(checkpoint_path, model, {**metadata, 'epoch': epoch}, optimizer)
        else:
            stale += 1
            if stale >= cfg.patience:
                logger.log_info("Early stopping", name=cfg.name, epoch=epoch, best_epoch=report.best_epoch)
                break

    load_checkpoint(checkpoint_path, model)
    report.test_accuracy = evaluate_accuracy(model, test_view, cfg.eval_seed, cfg.batch_size)
    report.epochs_to_threshold = epochs_to_threshold(report, report.threshold)
    report.wall_clock = time.perf_counter() - started
    logger.log_info("Experiment finished", name=cfg.name, test_accuracy=report.test_accuracy,
                    best_epoch=report.best_epoch, epochs_to_threshold=report.epochs_to_threshold)
    if save:
        save_report(report, Path(cfg.report_dir) if cfg.report_dir else config.report_dir)
    return report


REPORT_COLUMNS = ('epoch', 'train_loss', 'val_accuracy')


def save_report(report: RunReport, directory: Path) -> Path:
    """Writes <name>.json and a per-epoch <name>.csv; returns the JSON path."""
    directory = FileHandler.ensure_dir(directory)
    FileHandler.write_csv(directory / f"{report.name}.csv", REPORT_COLUMNS,
                          ([m.epoch, '' if m.train_loss is None else m.train_loss, m.val_accuracy]
                           for m in report.epochs))
    return FileHandler.write_json(directory / f"{report.name}.json", report.to_dict())


def load_report(path: Path) -> RunReport:
    data = FileHandler.read_json(path)
    data['epochs'] = [EpochMetrics(**m) for m in data.get('epochs', [])]
    return RunReport(**data)


def run_separate_suite(base: ExperimentConfig, task_ids: Optional[Sequence[int]] = None, workers: int = 1,
                       logger: Optional[Logger] = None, registry: Optional[TaskRegistry] = None) -> List[RunReport]:
    """
    Runs one separate-setup experiment per task in a thread pool.

    Failed tasks are logged and left out; reports come back sorted by task id.
    """
    logger = logger or Logger.null()
    registry = registry or default_registry()
    task_ids = list(task_ids) if task_ids else registry.ids
    configs = {}
    for task_id in task_ids:
        cfg = ExperimentConfig(**{**base.to_dict(), 'setup': 'separate', 'task_id': task_id, 'dataset_path': None})
        configs[task_id] = cfg.validate(registry)

    logger.log_info("Separate suite started", tasks=len(task_ids), workers=workers)
    reports = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        futures = {
            executor.submit(run_experiment, cfg, logger, registry): task_id
            for task_id, cfg in configs.items()
        }
        for future in as_completed(futures):
            task_id = futures[future]
            try:
                reports[task_id] = future.result()
            except Exception:
                error_details = SignalHandler.format_exception(*sys.exc_info(), thread_name=f"task{task_id:02d}")
                logger.log_error(f"Experiment for task {task_id} failed", details=error_details)
            if SignalHandler().is_shutdown_requested:
                for pending in futures:
                    pending.cancel()
    return [reports[t] for t in sorted(reports)]
