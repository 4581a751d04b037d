"""
Logging system for the simulator.
Handles mission event logging, error tracking, and system messages.
"""

import os
import json
import logging
import traceback
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union


@dataclass
class MissionEvent:
    """One entry of a trial's event log; times are simulated seconds"""
    t: float
    kind: str  # transition, spray, plan_failure, perception, abort, ...
    state: str
    details: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class ErrorLogEntry:
    """Structure for error log entries"""
    trial: Optional[int]
    error_type: str
    error_message: str
    stack_trace: str
    context: Dict[str, Any]
    severity: str  # low, medium, high, critical


def configure_logging(level: Optional[str] = None) -> None:
    """Root log level from the argument or SPRAYSIM_LOG_LEVEL (default INFO)"""
    name = (level or os.getenv("SPRAYSIM_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=getattr(logging, name, logging.INFO),
                        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    logging.getLogger().setLevel(getattr(logging, name, logging.INFO))


class MissionLogger:
    """Mission, error and system logs for simulation runs"""

    def __init__(self, log_dir: Union[str, Path, None] = None):
        self.log_dir = Path(log_dir or os.getenv("SPRAYSIM_LOG_DIR", "logs"))
        self.setup_logging()

    def setup_logging(self):
        """Configure the named file loggers"""
        self.log_dir.mkdir(parents=True, exist_ok=True)

        detailed_formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - [trial %(trial)s] - %(message)s'
        )
        simple_formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s')

        self.mission_logger = self._file_logger('mission', logging.INFO, 'mission.log', detailed_formatter)
        self.error_logger = self._file_logger('error', logging.ERROR, 'errors.log', detailed_formatter)
        self.system_logger = self._file_logger('system', logging.INFO, 'system.log', simple_formatter)

        # Console handler for development
        if os.getenv('SPRAYSIM_ENV') == 'development':
            console_handler = logging.StreamHandler()
            console_handler.setFormatter(simple_formatter)
            self.system_logger.addHandler(console_handler)

    def _file_logger(self, name: str, level: int, filename: str, formatter: logging.Formatter) -> logging.Logger:
        log = logging.getLogger(name)
        log.setLevel(level)
        target = str((self.log_dir / filename).resolve())
        if not any(getattr(h, 'baseFilename', None) == target for h in log.handlers):
            handler = logging.FileHandler(target)
            handler.setFormatter(formatter)
            log.addHandler(handler)
        return log

    def log_event(self, trial: int, event: MissionEvent):
        """Log a mission event to the mission log"""
        try:
            self.mission_logger.info(
                f"t={event.t:.2f} [{event.state}] {event.kind} {json.dumps(event.details, sort_keys=True)}",
                extra={'trial': trial}
            )
        except Exception:
            pass

    def log_error(self, trial: Optional[int], error: Exception,
                  context: Optional[Dict[str, Any]] = None, severity: str = "medium") -> ErrorLogEntry:
        """Log an error with full context"""
        entry = ErrorLogEntry(
            trial=trial,
            error_type=type(error).__name__,
            error_message=str(error),
            stack_trace=traceback.format_exc(),
            context=context or {},
            severity=severity,
        )
        try:
            self.error_logger.error(f"{entry.error_type}: {entry.error_message}",
                                    extra={'trial': trial}, exc_info=True)
        except Exception:
            pass
        try:
            if severity == "critical":
                self.system_logger.critical(f"CRITICAL ERROR in trial {trial}: {entry.error_message}")
        except Exception:
            pass
        return entry

    def log_system_event(self, event: str, details: Optional[Dict[str, Any]] = None):
        """Log system events"""
        try:
            self.system_logger.info(f"{event}: {json.dumps(details, sort_keys=True) if details else ''}")
        except Exception:
            pass


def write_events(path: Union[str, Path], events: Iterable[MissionEvent]) -> int:
    """Write events as JSON lines; returns the count"""
    count = 0
    with open(path, "w") as f:
        for event in events:
            f.write(event.to_json() + "\n")
            count += 1
    return count


def read_events(path: Union[str, Path]) -> List[MissionEvent]:
    with open(path) as f:
        return [MissionEvent(**json.loads(line)) for line in f if line.strip()]


_mission_logger: Optional[MissionLogger] = None


def get_mission_logger() -> MissionLogger:
    """Process-wide logger instance, created on first use"""
    global _mission_logger
    if _mission_logger is None:
        _mission_logger = MissionLogger()
    return _mission_logger


# Convenience functions
def log_event(trial: int, event: MissionEvent):
    """Convenience function for logging mission events"""
    get_mission_logger().log_event(trial, event)


def log_error(trial: Optional[int], error: Exception, context: Dict[str, Any] = None, severity: str = "medium"):
    """Convenience function for logging errors"""
    get_mission_logger().log_error(trial, error, context, severity)


def log_system(event: str, details: Dict[str, Any] = None):
    """Convenience function for logging system events"""
    get_mission_logger().log_system_event(event, details)
