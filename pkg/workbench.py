"""
Reservoir Mask Workbench - Main Unified Facade
Brings together configuration, training, reporting and plotting
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

from config import RESOLVED_CONFIG_NAME, ExperimentConfig, setup_logging
from modules.base import BaseComponent
from modules.plotting import plot_curves, read_curve_csv
from modules.trainer import (ConvergenceReport, LearningCurve, RunConfig, Trainer,
                             report_from_curves, run_suite)


class ReservoirWorkbench(BaseComponent):
    """
    Entry point tying an experiment document to its output directory
    """

    def __init__(self, config: Optional[ExperimentConfig] = None, out_dir: Union[str, Path, None] = None):
        """
        Initialize the workbench

        Args:
            config: Experiment document (defaults plus environment overrides when omitted)
            out_dir: Output directory; overrides config.suite.out_dir
        """
        super().__init__()
        self.config = config or ExperimentConfig.from_env()
        if out_dir is not None:
            self.config.suite.out_dir = str(out_dir)
        self._log_handler: Optional[logging.Handler] = None

    @classmethod
    def from_file(cls, config_path: Union[str, Path], out_dir: Union[str, Path, None] = None) -> 'ReservoirWorkbench':
        return cls(ExperimentConfig.from_file(config_path).apply_env(), out_dir)

    @property
    def out_dir(self) -> Path:
        return Path(self.config.suite.out_dir)

    def prepare_output(self) -> Path:
        """
        Create the output directory and check that it accepts files

        Raises:
            OSError: when the directory cannot be created or written
        """
        self.out_dir.mkdir(parents=True, exist_ok=True)
        marker = self.out_dir / ".write_check"
        marker.write_text("")
        marker.unlink()
        return self.out_dir

    def echo_config(self) -> Path:
        """Write the resolved config next to the outputs"""
        path = self.out_dir / RESOLVED_CONFIG_NAME
        self.config.save_to_file(path)
        return path

    def run_configs(self, seeds: Optional[List[int]] = None) -> List[RunConfig]:
        return self.config.run_configs(seeds)

    def train(self, run_config: RunConfig, seed: int) -> LearningCurve:
        """
        Train a single run, writing its curve CSV into the output directory

        Args:
            run_config: One expanded run
            seed: Master seed

        Returns:
            LearningCurve
        """
        return Trainer(run_config, seed, self.out_dir).train()

    def run(self, seeds: Optional[List[int]] = None) -> ConvergenceReport:
        """
        Execute every variant and seed, then write <name>_report.csv

        Returns:
            ConvergenceReport (failed runs listed in report.failures)
        """
        configs = self.run_configs(seeds)
        self.prepare_output()
        self.echo_config()
        self.logger.info(f"Running {len(configs)} configs x {len(configs[0].training.seeds)} seeds "
                         f"with {self.config.suite.workers} workers into {self.out_dir}")
        report = run_suite(configs, self.config.suite.workers, self.out_dir)
        report.write_csv(self.report_path)
        for label in report.labels():
            summary = report.summary(label)
            if summary:
                self.logger.info(f"{label}: median {summary.median}, range [{summary.minimum}, {summary.maximum}], "
                                 f"converged {summary.converged}/{summary.runs}")
        return report

    @property
    def report_path(self) -> Path:
        return self.out_dir / f"{self.config.name}_report.csv"

    @staticmethod
    def load_curves(csv_paths: Sequence[Union[str, Path]]) -> List[LearningCurve]:
        return [read_curve_csv(p) for p in csv_paths]

    def plot(self, csv_paths: Sequence[Union[str, Path]], output_svg: Union[str, Path],
             window: Optional[int] = None) -> Path:
        """Render curve CSVs into one SVG"""
        window = window or self.config.suite.plot_window
        return plot_curves(self.load_curves(csv_paths), output_svg, window, self.config.suite.plot_title)

    def report(self, csv_paths: Sequence[Union[str, Path]], threshold: float, window: int) -> ConvergenceReport:
        """Convergence report over existing curve CSVs"""
        return report_from_curves(self.load_curves(csv_paths), threshold, window)

    def __enter__(self):
        """Attach workbench.log in the output directory"""
        self.prepare_output()
        setup_logging(self.config.suite.log_level, self.out_dir / "workbench.log")
        self._log_handler = logging.getLogger().handlers[-1]
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        """Close the log file"""
        if self._log_handler is not None:
            logging.getLogger().removeHandler(self._log_handler)
            self._log_handler.close()
            self._log_handler = None
