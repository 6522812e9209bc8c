"""
Run Session - Run directory with event tracking
Owns one output directory per CLI invocation: run log, JSON event stream,
error log, summary and a human-readable report
"""

import json
import logging
import threading
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

from config import config


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item"):
        return value.item()
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


class RunSession:
    """
    Session-scoped logging for one command

    Result files written by the commands are timestamp-free; timestamps
    live only in the session files kept here.
    """

    def __init__(self, command: str, out_dir: Optional[str] = None, seed: Optional[int] = None):
        """
        Args:
            command: CLI subcommand name
            out_dir: run directory (defaults to RUNS_DIR/<command>_<timestamp>)
            seed: master seed, recorded in the summary
        """
        self.command = command
        self.start = datetime.now()
        self.run_dir = Path(out_dir) if out_dir else \
            Path(config.RUNS_DIR) / f"{command}_{self.start.strftime('%Y%m%d_%H%M%S')}"
        self.run_dir.mkdir(parents=True, exist_ok=True)

        self.data = {
            'command': command,
            'seed': seed,
            'start_time': self.start.isoformat(),
            'end_time': None,
            'status': 'RUNNING',
            'outputs': [],
            'metrics': {},
            'errors': [],
            'warnings': [],
        }
        self.lock = threading.Lock()

        self.log_file = self.run_dir / "run.log"
        self.events_file = self.run_dir / "events.jsonl"
        self.errors_file = self.run_dir / "errors.log"
        self._attach_file_handler()

        self.log_event('RUN_START', {'command': command, 'seed': seed, 'run_dir': str(self.run_dir)})

    def _attach_file_handler(self):
        """Mirror every wavecal logger record into run.log"""
        self.handler = logging.FileHandler(self.log_file)
        self.handler.setLevel(logging.DEBUG)
        self.handler.setFormatter(logging.Formatter('%(asctime)s | %(levelname)8s | %(name)s | %(message)s',
                                                    datefmt='%Y-%m-%d %H:%M:%S'))
        from src.utils.logger import CalibrationLogger
        CalibrationLogger.add_handler(self.handler)

    def path(self, name: str) -> Path:
        return self.run_dir / name

    def log_event(self, event_type: str, data: Dict[str, Any]):
        with self.lock:
            event = {'timestamp': datetime.now().isoformat(), 'type': event_type, 'data': _jsonable(data)}
            with open(self.events_file, 'a') as f:
                f.write(json.dumps(event) + '\n')

    def record_output(self, path: Path):
        with self.lock:
            self.data['outputs'].append(Path(path).name)

    def log_error(self, error_type: str, message: str, details: Optional[Dict] = None):
        with self.lock:
            error = {'timestamp': datetime.now().isoformat(), 'type': error_type,
                     'message': message, 'details': _jsonable(details or {})}
            self.data['errors'].append(error)
            with open(self.errors_file, 'a') as f:
                f.write(f"{error['timestamp']} | {error_type}: {message}\n")
                if details:
                    f.write(f"  Details: {json.dumps(error['details'])}\n")

    def log_warning(self, warning_type: str, message: str):
        with self.lock:
            self.data['warnings'].append({'timestamp': datetime.now().isoformat(),
                                          'type': warning_type, 'message': message})

    def update_metrics(self, metrics: Dict[str, Any]):
        with self.lock:
            self.data['metrics'].update(_jsonable(metrics))

    def end(self, status: str = "OK"):
        """Write run_summary.json and run_report.txt, detach the file handler"""
        with self.lock:
            self.data['end_time'] = datetime.now().isoformat()
            self.data['status'] = status
            self.data['duration_seconds'] = (datetime.now() - self.start).total_seconds()
        self.log_event('RUN_END', {'status': status, 'duration_seconds': self.data['duration_seconds']})

        with open(self.run_dir / "run_summary.json", 'w') as f:
            json.dump(self.data, f, indent=2)
        self._write_report()

        from src.utils.logger import CalibrationLogger
        CalibrationLogger.remove_handler(self.handler)
        self.handler.close()

    def _write_report(self):
        with open(self.run_dir / "run_report.txt", 'w') as f:
            f.write("=" * 80 + "\n")
            f.write(f"WAVECAL RUN REPORT - {self.command}\n")
            f.write("=" * 80 + "\n\n")
            f.write(f"Status: {self.data['status']}\n")
            f.write(f"Seed: {self.data['seed']}\n")
            f.write(f"Start Time: {self.data['start_time']}\n")
            f.write(f"End Time: {self.data['end_time']}\n")
            duration = self.data.get('duration_seconds', 0.0)
            f.write(f"Duration: {int(duration // 3600):02d}:{int(duration % 3600 // 60):02d}:{int(duration % 60):02d}\n")

            f.write("\n" + "=" * 80 + "\n")
            f.write("METRICS\n")
            f.write("=" * 80 + "\n\n")
            for key, value in self.data['metrics'].items():
                f.write(f"{key}: {value}\n")

            f.write("\n" + "=" * 80 + "\n")
            f.write("OUTPUTS\n")
            f.write("=" * 80 + "\n\n")
            for name in self.data['outputs']:
                f.write(f"  {name}\n")

            f.write("\n" + "=" * 80 + "\n")
            f.write("ERRORS & WARNINGS\n")
            f.write("=" * 80 + "\n\n")
            f.write(f"Total Errors: {len(self.data['errors'])}\n")
            f.write(f"Total Warnings: {len(self.data['warnings'])}\n")
            for error in self.data['errors'][-10:]:
                f.write(f"  [{error['timestamp']}] {error['type']}: {error['message']}\n")
            f.write("\n" + "=" * 80 + "\n")
            f.write("END OF REPORT\n")
            f.write("=" * 80 + "\n")
