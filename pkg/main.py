import argparse
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from checkpoint import load_checkpoint
from config import config
from dataset import default_dataset_path, export_png_manifest, generate_dataset, load_dataset, save_dataset, split
from errors import ConfigurationError, OddityLabError
from experiment import (ExperimentConfig, build_model, evaluate_accuracy, joint_defaults, load_experiment_config,
                        load_report, obtain_dataset, run_experiment, run_separate_suite)
from files import FileHandler
from gradcheck import standard_checks
from logger import Logger, LogConfig
from oren import OReN
from riddles import default_registry
from saccadic import evaluation_stream
from signals import SignalHandler
from viz import emit_accuracy_table, oren_activity, render_activity_maps, saccadic_activity, write_potentials_csv

# Exit codes.
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_LAB_ERROR = 2

# CLI flags that map one-to-one onto ExperimentConfig fields.
_EXPERIMENT_FLAGS = ('setup', 'model', 'width', 'task_id', 'dataset_size', 'dataset_seed', 'dataset_path',
                     'train_seed', 'eval_seed', 'epochs', 'patience', 'batch_size', 'learning_rate', 'precision',
                     'layout', 'checkpoint_dir', 'report_dir')


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    """Flags shared by train, eval and viz."""
    parser.add_argument('--config', type=Path, help="Experiment YAML key-value file.")
    parser.add_argument('--setup', choices=('separate', 'joint'))
    parser.add_argument('--model', help="oren, snn, snn_r, ssnu, ssnu_r or lstm.")
    parser.add_argument('--width', '-N', type=int, help="Layer width N.")
    parser.add_argument('--task-id', type=int)
    parser.add_argument('--dataset-size', type=int)
    parser.add_argument('--dataset-seed', type=int)
    parser.add_argument('--dataset-path', type=str)
    parser.add_argument('--train-seed', '--seed', type=int)
    parser.add_argument('--eval-seed', type=int)
    parser.add_argument('--epochs', type=int)
    parser.add_argument('--patience', type=int)
    parser.add_argument('--batch-size', type=int)
    parser.add_argument('--learning-rate', type=float)
    parser.add_argument('--precision', choices=('float32', 'float64'))
    parser.add_argument('--layout', choices=('default', 'tiny'))
    parser.add_argument('--checkpoint-dir', type=str)
    parser.add_argument('--report-dir', type=str)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='oddlab', description="Visual oddity riddles and the networks that solve them.")
    commands = parser.add_subparsers(dest='command', required=True)

    gen = commands.add_parser('gen', help="Generate a dataset container.")
    gen.add_argument('--task-id', type=int, action='append', help="Task id (repeatable); omit with --joint.")
    gen.add_argument('--joint', action='store_true', help="Use every registered task.")
    gen.add_argument('--size', type=int, help="Sample count, a multiple of 6.")
    gen.add_argument('--seed', type=int, default=None)
    gen.add_argument('--out', type=Path, help="Container path (default under the data directory).")
    gen.add_argument('--workers', type=int, default=None)

    train = commands.add_parser('train', help="Train one model, or every task with --suite.")
    _add_experiment_flags(train)
    train.add_argument('--suite', action='store_true', help="Run one separate-setup experiment per task.")
    train.add_argument('--tasks', type=int, nargs='*', help="Task ids for --suite (default: all).")

    evaluate = commands.add_parser('eval', help="Evaluate a checkpoint on a dataset split.")
    _add_experiment_flags(evaluate)
    evaluate.add_argument('--checkpoint', type=Path, required=True)
    evaluate.add_argument('--split', choices=('train', 'val', 'test'), default='test')

    viz = commands.add_parser('viz', help="Dump activity heatmaps for one test sample.")
    _add_experiment_flags(viz)
    viz.add_argument('--checkpoint', type=Path, help="Trained weights (untrained model if omitted).")
    viz.add_argument('--index', type=int, default=0, help="Sample index within the test split.")
    viz.add_argument('--out', type=Path, required=True)

    grad = commands.add_parser('gradcheck', help="Finite-difference check of every differentiable op.")
    grad.add_argument('--seed', type=int, default=0)
    grad.add_argument('--only', nargs='*', help="Subset of checks by name.")

    export = commands.add_parser('export-png', help="Write dataset frames as PNG files plus a JSON manifest.")
    export.add_argument('dataset', type=Path)
    export.add_argument('--out', type=Path, required=True)
    export.add_argument('--limit', type=int)

    table = commands.add_parser('table', help="Accuracy table from saved run reports.")
    table.add_argument('reports', type=Path, nargs='+', help="Report JSON files or directories holding them.")
    table.add_argument('--out', type=Path, required=True)
    return parser


class MainApplication:
    """
    Command-line application for the oddity lab.
    Parses a subcommand, sets up logging and signal handling, and dispatches.
    """

    def __init__(self):
        """Initialize the application with all instance variables set to None."""
        # Logger instance for application-wide logging.
        self.logger = None
        # Signal handler for graceful shutdown coordination.
        self.signal_handler = None
        # Task roster loaded from config/tasks.yaml.
        self.registry = None
        # Parsed command-line arguments.
        self.args = None

    def _setup_logger(self):
        """Set up the logger with config-driven settings."""
        log_config = LogConfig(
            log_file=config.log_file,
            log_dir=config.log_dir,
            level=config.get_log_level(),
            console_print=config.get_console_print()
        )
        self.logger = Logger(log_config)

    def _setup_signal_handlers(self):
        """Set up signal handlers for graceful shutdown."""
        self.signal_handler = SignalHandler()
        self.signal_handler.reset()
        self.signal_handler.setup_signal_handlers()

    def _initialize(self, argv: Optional[List[str]]):
        """Parse arguments, then bring up logging, signals and the task roster."""
        self.args = build_parser().parse_args(argv)
        self._setup_logger()
        self._setup_signal_handlers()
        self.registry = default_registry()
        self.logger.log_debug("Initialized", command=self.args.command, tasks=len(self.registry))

    def _workers(self, requested: Optional[int] = None) -> int:
        if requested is not None:
            return max(1, requested)
        return config.get_worker_count() if config.is_threading_enabled() else 1

    def _experiment_config(self) -> ExperimentConfig:
        """ExperimentConfig from --config (if given) with explicit flags on top."""
        overrides = {name: getattr(self.args, name, None) for name in _EXPERIMENT_FLAGS}
        overrides = {name: value for name, value in overrides.items() if value is not None}
        if self.args.config:
            cfg = load_experiment_config(self.args.config, **overrides)
        else:
            cfg = ExperimentConfig(**joint_defaults(overrides))
        return cfg.validate(self.registry)

    def _model_from_checkpoint(self, cfg: ExperimentConfig, checkpoint: Optional[Path]):
        model = build_model(cfg, np.random.default_rng(cfg.train_seed))
        if checkpoint is not None:
            metadata = load_checkpoint(checkpoint, model)
            self.logger.log_info("Checkpoint loaded", path=checkpoint, epoch=metadata.get('epoch'))
        return model

    def _cmd_gen(self) -> int:
        if self.args.joint and self.args.task_id:
            raise ConfigurationError("--joint and --task-id are mutually exclusive")
        if not self.args.joint and not self.args.task_id:
            raise ConfigurationError("give --task-id or --joint")
        task_ids = self.registry.ids if self.args.joint else self.args.task_id
        size = self.args.size
        if size is None:
            size = config.get_per_task_size() if len(task_ids) == 1 else config.get_joint_size()
        seed = config.get_dataset_seed() if self.args.seed is None else self.args.seed
        out = self.args.out or default_dataset_path(task_ids, seed)

        dataset = generate_dataset(task_ids, size, seed, workers=self._workers(self.args.workers),
                                   registry=self.registry, logger=self.logger,
                                   max_retries=config.get_max_retries())
        save_dataset(dataset, out)
        self.logger.log_info("Dataset written", path=out, size=len(dataset), mode=dataset.task_mode)
        return EXIT_OK

    def _cmd_train(self) -> int:
        cfg = self._experiment_config()
        if self.args.suite:
            reports = run_separate_suite(cfg, self.args.tasks, workers=self._workers(),
                                         logger=self.logger, registry=self.registry)
            self.logger.log_info("Suite finished", reports=len(reports))
            return EXIT_OK
        report = run_experiment(cfg, self.logger, self.registry)
        return EXIT_OK if not report.interrupted else EXIT_FAILURE

    def _cmd_eval(self) -> int:
        cfg = self._experiment_config()
        model = self._model_from_checkpoint(cfg, self.args.checkpoint)
        views = dict(zip(('train', 'val', 'test'), split(obtain_dataset(cfg, self.registry, self.logger))))
        accuracy = evaluate_accuracy(model, views[self.args.split], cfg.eval_seed, cfg.batch_size)
        self.logger.log_info("Evaluation finished", name=cfg.name, split=self.args.split, accuracy=accuracy)
        return EXIT_OK

    def _cmd_viz(self) -> int:
        cfg = self._experiment_config()
        model = self._model_from_checkpoint(cfg, self.args.checkpoint)
        test_view = split(obtain_dataset(cfg, self.registry, self.logger))[2]
        if not 0 <= self.args.index < len(test_view):
            raise ConfigurationError(f"--index must be in [0, {len(test_view)}), got {self.args.index}")
        index = test_view.indices[self.args.index]
        frames = test_view.dataset.frames[index]

        if isinstance(model, OReN):
            paths = render_activity_maps(oren_activity(model, frames), self.args.out)
        else:
            activity = saccadic_activity(model, frames, evaluation_stream(cfg.eval_seed, index))
            paths = render_activity_maps(activity, self.args.out)
            paths.append(write_potentials_csv(activity.trace.potentials, self.args.out / 'potentials.csv'))
        self.logger.log_info("Activity maps written", out=self.args.out, files=len(paths), index=index)
        return EXIT_OK

    def _cmd_gradcheck(self) -> int:
        reports = standard_checks(seed=self.args.seed, include=self.args.only)
        failed = 0
        for name, report in reports.items():
            if report.passed:
                self.logger.log_info("Gradient check passed", check=name, max_error=report.max_error)
            else:
                failed += 1
                self.logger.log_error("Gradient check failed", check=name, max_error=report.max_error,
                                      block=report.worst())
        return EXIT_OK if failed == 0 else EXIT_FAILURE

    def _cmd_export_png(self) -> int:
        manifest = export_png_manifest(load_dataset(self.args.dataset, mmap=True), self.args.out, self.args.limit)
        self.logger.log_info("PNG export written", manifest=manifest)
        return EXIT_OK

    def _cmd_table(self) -> int:
        paths = []
        for entry in self.args.reports:
            found = sorted(entry.glob('*.json')) if entry.is_dir() else [entry]
            paths.extend(path for path in found if not path.name.endswith('.ockp.json'))
        if not paths:
            raise ConfigurationError("no run reports found")
        reports = [load_report(path) for path in paths]
        human = FileHandler.load_human_accuracy(config.human_accuracy_file)
        csv_path, md_path = emit_accuracy_table(reports, self.args.out, human, config.get_human_average())
        self.logger.log_info("Accuracy table written", csv=csv_path, markdown=md_path, rows=len(reports))
        return EXIT_OK

    def run(self, argv: Optional[List[str]] = None) -> int:
        """Run one subcommand; returns the process exit code."""
        self._initialize(argv)
        handlers = {
            'gen': self._cmd_gen,
            'train': self._cmd_train,
            'eval': self._cmd_eval,
            'viz': self._cmd_viz,
            'gradcheck': self._cmd_gradcheck,
            'export-png': self._cmd_export_png,
            'table': self._cmd_table,
        }
        try:
            return handlers[self.args.command]()
        except OddityLabError as e:
            self.logger.log_error(str(e), command=self.args.command, error=type(e).__name__)
            return EXIT_LAB_ERROR
        except Exception:
            error_details = SignalHandler.format_exception(*sys.exc_info())
            self.logger.log_error("Unexpected failure", command=self.args.command, details=error_details)
            return EXIT_FAILURE
        finally:
            self.logger.log_debug("Command finished", command=self.args.command)


def main(argv: Optional[List[str]] = None):
    """
    Main entry point for the oddlab command.
    """
    app = MainApplication()
    sys.exit(app.run(argv))


if __name__ == "__main__":
    main()
