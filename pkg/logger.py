"""
Run Logger - Unified logging for data generation, training and evaluation
Keeps a categorized trail of every run, on disk and in memory
"""

import json
import logging
import threading
from collections import Counter
from datetime import datetime


class RunLogger:
    """
    Logging for a single run.
    Records carry a category (SYSTEM, DATA, PRETRAIN, TRAIN, EVAL, ERROR),
    a level and optional metadata; the latest ones stay in memory so the
    run session can export them next to the manifest. Thread-safe.
    """

    LEVELS = {
        'DEBUG': logging.DEBUG,
        'INFO': logging.INFO,
        'WARNING': logging.WARNING,
        'ERROR': logging.ERROR,
        'CRITICAL': logging.CRITICAL
    }

    def __init__(self, log_file=None, console=True, name="lsor",
                 console_level="INFO", max_memory_logs=1000):
        """
        Args:
            log_file: Path of the run log, or None for no file output
            console: Also echo records to stderr
            name: Name of the underlying stdlib logger
            console_level: Minimum level echoed to the console
            max_memory_logs: Records kept in memory
        """
        self.log_file = str(log_file) if log_file else None
        self.console = console
        self.name = name
        self.console_level = console_level
        self.lock = threading.Lock()
        self.memory_buffer = []
        self.max_memory_logs = max_memory_logs

        self.setup_logger()

    def setup_logger(self):
        """Attach file and console handlers with the pipe-separated format."""
        self.logger = logging.getLogger(self.name)
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False
        self.close()

        formatter = logging.Formatter(
            '%(asctime)s | %(levelname)-8s | %(category)-8s | %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

        if self.log_file:
            file_handler = logging.FileHandler(self.log_file)
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(formatter)
            self.logger.addHandler(file_handler)

        if self.console:
            console_handler = logging.StreamHandler()
            console_handler.setLevel(self.LEVELS.get(self.console_level, logging.INFO))
            console_handler.setFormatter(formatter)
            self.logger.addHandler(console_handler)

        if not self.logger.handlers:
            self.logger.addHandler(logging.NullHandler())

    def log_event(self, category, message, level="INFO", extra_data=None):
        """
        Record one event.

        Args:
            category: SYSTEM, DATA, PRETRAIN, TRAIN, EVAL or ERROR
            message: Event description
            level: DEBUG, INFO, WARNING, ERROR or CRITICAL; anything else is INFO
            extra_data: Optional mapping kept with the buffered record
        """
        if level not in self.LEVELS:
            level = "INFO"
        entry = {
            'timestamp': datetime.now().isoformat(),
            'category': category,
            'level': level,
            'message': message,
            'extra_data': extra_data
        }
        with self.lock:
            self.memory_buffer.append(entry)
            del self.memory_buffer[:-self.max_memory_logs]
            self.logger.log(self.LEVELS[level], message, extra={'category': category})

    def log_epoch(self, phase, metrics):
        """
        Log the averaged losses of one epoch.

        Args:
            phase: PRETRAIN or TRAIN
            metrics: Mapping of metric name to value, must include 'epoch'
        """
        parts = [f"{key}={value:.6g}" if isinstance(value, float) else f"{key}={value}"
                 for key, value in metrics.items() if key != 'epoch']
        message = f"epoch {metrics['epoch']}: " + " ".join(parts)
        self.log_event(phase, message, "INFO", dict(metrics))

    def log_error(self, error_type, error_message, stack_trace=None):
        """Record a failure under ERROR, keeping the stack trace as metadata."""
        extra_data = {'error_type': error_type}
        if stack_trace:
            extra_data['stack_trace'] = stack_trace

        self.log_event("ERROR", f"{error_type}: {error_message}", "ERROR", extra_data)

    def events(self, category=None, level=None):
        """Buffered records, oldest first, optionally filtered."""
        with self.lock:
            entries = list(self.memory_buffer)
        return [e for e in entries
                if (category is None or e['category'] == category)
                and (level is None or e['level'] == level)]

    def event_counts(self):
        """Buffered record counts by category and by level."""
        entries = self.events()
        return {
            'total': len(entries),
            'by_category': dict(Counter(e['category'] for e in entries)),
            'by_level': dict(Counter(e['level'] for e in entries)),
        }

    def export_events(self, output_file):
        """Write the buffered records as a JSON list. Returns the path."""
        with open(output_file, 'w') as f:
            json.dump(self.events(), f, indent=2, default=str)
        return output_file

    def close(self):
        """Flush and detach all handlers."""
        for handler in self.logger.handlers[:]:
            handler.close()
            self.logger.removeHandler(handler)


def quiet_logger():
    """Buffer-only logger used when library calls are made without one."""
    return RunLogger(log_file=None, console=False, name="lsor.quiet")
