"""
WAVECAL Run Journal
CSV records of calibration runs: evolution history, final archive,
ensemble audit, per-run experiment records and the grouped report
"""

import math
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd

from src.core.metrics import METRIC_NAMES
from src.core.param_space import ParameterVector
from src.engines.robust_engine import AuditRow
from src.engines.spea2_engine import EvolutionResult, Individual
from src.utils.logger import CalibrationLogger

logger = CalibrationLogger.get_logger(__name__)

HISTORY_COLUMNS = ["generation", "individual", "drg", "cfw", "stpm", "obj_rmse", "obj_mae", "fitness", "in_archive"]
ARCHIVE_COLUMNS = ["rank", "drg", "cfw", "stpm", "obj_rmse", "obj_mae", "fitness"]
AUDIT_COLUMNS = ["generation", "individual", "member", "obj_rmse", "obj_mae", "selected"]
SETS = ("calibration", "validation")


def _objective_pair(objectives) -> tuple:
    return (objectives[0], objectives[1] if len(objectives) > 1 else float("nan"))


def history_frame(result: EvolutionResult) -> pd.DataFrame:
    rows = []
    for record in result.history:
        for row in record.rows:
            rows.append((row.generation, row.individual, row.genotype.drg, row.genotype.cfw,
                         row.genotype.stpm, *_objective_pair(row.objectives), row.fitness,
                         int(row.in_archive)))
    return pd.DataFrame(rows, columns=HISTORY_COLUMNS)


def archive_frame(archive: Sequence[Individual]) -> pd.DataFrame:
    rows = [(k, ind.genotype.drg, ind.genotype.cfw, ind.genotype.stpm,
             *_objective_pair(ind.objectives), ind.fitness) for k, ind in enumerate(archive)]
    return pd.DataFrame(rows, columns=ARCHIVE_COLUMNS)


def audit_frame(rows: Sequence[AuditRow]) -> pd.DataFrame:
    frame = pd.DataFrame([asdict(r) for r in rows], columns=AUDIT_COLUMNS)
    frame["selected"] = frame["selected"].astype(int)
    return frame


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


@dataclass
class RunRecord:
    """One calibration run of one algorithm on one scenario"""
    scenario: int
    group: str
    algorithm: str
    repeat: int
    seed: int
    status: str = "ok"
    genotype: Optional[ParameterVector] = None
    errors: Dict[str, Dict[str, float]] = field(default_factory=dict)        # set -> metric -> meters
    improvements: Dict[str, Dict[str, float]] = field(default_factory=dict)  # set -> metric -> percent
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> Dict:
        data = {
            'scenario': self.scenario,
            'group': self.group,
            'algorithm': self.algorithm,
            'repeat': self.repeat,
            'seed': self.seed,
            'status': self.status,
        }
        for name in ("drg", "cfw", "stpm"):
            data[name] = self.genotype.get(name) if self.genotype is not None else float("nan")
        for set_name in SETS:
            for metric in METRIC_NAMES:
                data[f"{set_name}_{metric}"] = self.errors.get(set_name, {}).get(metric, float("nan"))
                data[f"{set_name}_{metric}_improvement"] = \
                    self.improvements.get(set_name, {}).get(metric, float("nan"))
        data['message'] = self.message
        return data

    @classmethod
    def from_row(cls, row: Dict) -> "RunRecord":
        genotype = None
        if not any(isinstance(row[n], float) and math.isnan(row[n]) for n in ("drg", "cfw", "stpm")):
            genotype = ParameterVector(float(row["drg"]), float(row["cfw"]), float(row["stpm"]))
        errors = {s: {m: float(row[f"{s}_{m}"]) for m in METRIC_NAMES} for s in SETS}
        improvements = {s: {m: float(row[f"{s}_{m}_improvement"]) for m in METRIC_NAMES} for s in SETS}
        message = row.get("message", "")
        return cls(int(row["scenario"]), str(row["group"]), str(row["algorithm"]), int(row["repeat"]),
                   int(row["seed"]), str(row["status"]), genotype, errors, improvements,
                   "" if isinstance(message, float) else str(message))


class RunJournal:
    """Thread-safe collector of experiment run records"""

    def __init__(self):
        self.records: List[RunRecord] = []
        self.lock = threading.Lock()

    def add(self, record: RunRecord):
        with self.lock:
            self.records.append(record)
        if record.ok:
            logger.log_run({'scenario': record.scenario, 'algorithm': record.algorithm,
                            'repeat': record.repeat, 'theta': record.genotype.as_dict()})
        else:
            logger.warning(f"Run failed: scenario {record.scenario} {record.algorithm} "
                           f"repeat {record.repeat}: {record.message}")

    @property
    def failures(self) -> int:
        with self.lock:
            return sum(1 for r in self.records if not r.ok)

    def sorted_records(self) -> List[RunRecord]:
        """Deterministic order regardless of completion order"""
        with self.lock:
            return sorted(self.records, key=lambda r: (r.scenario, r.algorithm, r.repeat))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_dict() for r in self.sorted_records()])

    def write(self, path: Path) -> Path:
        return write_frame(self.to_frame(), path)


def read_runs(path: Path) -> List[RunRecord]:
    frame = pd.read_csv(path, dtype={"group": str, "message": str}, keep_default_na=True)
    return [RunRecord.from_row(row) for row in frame.to_dict("records")]
