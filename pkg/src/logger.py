"""
Run logger for NAVAR training, scoring and benchmarks.

Colored console lines on a selectable stream, optionally mirrored without
color codes to a per-run log file under config.LOG_DIR.
"""

import os
import re
import sys
import time
from datetime import datetime
from enum import Enum

import config

_ANSI = re.compile(r"\033\[[0-9;]*m")


class Color(Enum):
    """ANSI escape codes used by the run logger."""

    RESET = "\033[0m"
    BOLD = "\033[1m"

    RED = "\033[31m"
    GREEN = "\033[32m"
    YELLOW = "\033[33m"
    CYAN = "\033[36m"
    WHITE = "\033[37m"

    BRIGHT_BLACK = "\033[90m"
    BRIGHT_YELLOW = "\033[93m"
    BRIGHT_MAGENTA = "\033[95m"
    BRIGHT_CYAN = "\033[96m"
    BRIGHT_WHITE = "\033[97m"


class RunLogger:
    """Console and file logging for one process."""

    Color = Color

    def __init__(self, log_to_file=None, log_dir=None, stream=None, verbose=True):
        """
        Args:
            log_to_file (bool, optional): Mirror output to a log file. Defaults to config.LOG_TO_FILE.
            log_dir (str, optional): Directory for log files. Defaults to config.LOG_DIR.
            stream (file, optional): Console stream. Defaults to sys.stdout at print time.
            verbose (bool): Print to the console at all.
        """
        self.log_to_file = config.LOG_TO_FILE if log_to_file is None else log_to_file
        self.log_dir = log_dir or config.LOG_DIR
        self.stream = stream
        self.verbose = verbose
        self.log_file = None

        if self.log_to_file:
            os.makedirs(self.log_dir, exist_ok=True)
            stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
            self.log_file = open(os.path.join(self.log_dir, f"navar_run_{stamp}.log"), "a")

    def __del__(self):
        if getattr(self, "log_file", None):
            self.log_file.close()

    def _mirror(self, line):
        if self.log_file:
            self.log_file.write(_ANSI.sub("", line) + "\n")
            self.log_file.flush()

    def print(self, text, color=None, bold=False):
        """
        Print one line, colored on the console and plain in the log file.

        Args:
            text (str): Line to print.
            color (Color, optional): Foreground color.
            bold (bool): Bold face.
        """
        codes = ("" if color is None else color.value) + (Color.BOLD.value if bold else "")
        line = f"{codes}{text}{Color.RESET.value}" if codes else text
        if self.verbose:
            print(line, file=self.stream or sys.stdout)
        self._mirror(line)

    def header(self, text, color=Color.CYAN):
        """Boxed title line."""
        rule = f"+{'-' * (len(text) + 2)}+"
        self.print("")
        for line in (rule, f"| {text} |", rule):
            self.print(line, color, bold=True)

    def run_start(self, navar_config, n_variables, n_train, n_val):
        self.header(
            f"TRAINING NAVAR ({navar_config.backbone_kind.value.upper()}) "
            f"N={n_variables} SAMPLES train={n_train} val={n_val}",
            Color.BRIGHT_MAGENTA,
        )
        for key, value in navar_config.to_dict().items():
            self.print(f"  {key}: {value}", Color.BRIGHT_BLACK)

    def epoch(self, epoch, total, train_loss, val_mse=None):
        line = f"epoch {epoch:>5}/{total}  train_loss={train_loss:.6f}"
        if val_mse is not None:
            line += f"  val_mse={val_mse:.6f}"
        self.print(line, Color.WHITE)

    def run_end(self, report):
        summary = f"TRAINING FINISHED AFTER {report.epochs} EPOCHS ({report.seconds:.1f}s)"
        if report.val_mse:
            summary += f" val_mse={report.val_mse[-1]:.6f}"
        self.header(summary, Color.GREEN)

    def event(self, text, color=Color.YELLOW):
        self.print(f"EVENT: {text}", color, bold=True)

    def error(self, text):
        self.print(f"ERROR: {text}", Color.RED, bold=True)

    def warning(self, text):
        self.print(f"WARNING: {text}", Color.YELLOW, bold=True)

    def log_trial_issue(self, scm, trial, issue_type, details):
        """
        Report a failed benchmark trial; with file logging on, the line is
        also appended to <log_dir>/trial_issues/<scm>_issues.log.

        Args:
            scm (str): Generating system name.
            trial (int): Trial number.
            issue_type (str): Exception class name.
            details (str): Exception message.
        """
        message = f"[{time.strftime('%Y-%m-%d %H:%M:%S')}] TRIAL ISSUE: {scm} trial {trial} - {issue_type} - {details}"
        self.print(message, Color.BRIGHT_YELLOW, bold=True)

        if self.log_to_file:
            issue_dir = os.path.join(self.log_dir, "trial_issues")
            os.makedirs(issue_dir, exist_ok=True)
            with open(os.path.join(issue_dir, f"{scm}_issues.log"), "a") as f:
                f.write(message + "\n")

    def stats(self, stats_dict, title="RUN STATISTICS"):
        """Boxed title followed by one key: value line per entry (floats at 6 decimals)."""
        self.header(title, Color.BRIGHT_CYAN)
        for key, value in stats_dict.items():
            shown = f"{value:.6f}" if isinstance(value, float) else value
            self.print(f"{key}: {shown}", Color.BRIGHT_WHITE)
