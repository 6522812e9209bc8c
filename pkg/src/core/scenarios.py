"""
WAVECAL Scenarios
Calibration/validation splits of the observation stations: one singleton
per station, seeded mid-size subsets, and seeded all-but-one subsets
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import config
from src.core.exceptions import ConfigError
from src.core.wave_model import StationSet

ALL_GROUP = "All"


@dataclass(frozen=True)
class Scenario:
    id: int
    calibration: Tuple[str, ...]
    validation: Tuple[str, ...]
    group: str

    def __post_init__(self):
        if not self.calibration or not self.validation:
            raise ConfigError(f"Scenario {self.id}: calibration and validation sets must be non-empty")
        if set(self.calibration) & set(self.validation):
            raise ConfigError(f"Scenario {self.id}: calibration and validation sets overlap")


def _group_label(first: int, last: int) -> str:
    return f"{first}-{last}"


def build_scenarios(stations: StationSet, seed: int,
                    mid_sizes: Sequence[int] = config.MID_SUBSET_SIZES,
                    mid_count: int = config.MID_SCENARIOS,
                    large_count: int = config.LARGE_SCENARIOS,
                    large_size: Optional[int] = config.LARGE_SUBSET_SIZE) -> List[Scenario]:
    """
    Singleton, mid and large calibration scenarios, numbered from 1

    With 9 stations this yields scenarios 1-9, 10-14 and 15-18. Subset
    sizes are capped at n - 1 so every validation set is non-empty.
    """
    ids = stations.ids
    n = len(ids)
    if n < 3:
        raise ConfigError(f"Scenarios need at least 3 stations, got {n}")
    if not mid_sizes or any(s < 1 for s in mid_sizes):
        raise ConfigError(f"Mid subset sizes must be positive, got {list(mid_sizes)}")
    large_size = n - 1 if large_size is None else int(large_size)
    if not 1 <= large_size <= n - 1:
        raise ConfigError(f"Large subset size must lie in [1, {n - 1}], got {large_size}")

    rng = np.random.default_rng(seed)

    def split(scenario_id: int, chosen: Sequence[int], group: str) -> Scenario:
        chosen = set(int(c) for c in chosen)
        calibration = tuple(ids[k] for k in range(n) if k in chosen)
        validation = tuple(ids[k] for k in range(n) if k not in chosen)
        return Scenario(scenario_id, calibration, validation, group)

    scenarios = []
    singles = _group_label(1, n)
    for k in range(n):
        scenarios.append(split(k + 1, [k], singles))

    first = n + 1
    mid = _group_label(first, first + mid_count - 1)
    for j in range(mid_count):
        size = min(int(rng.choice(list(mid_sizes))), n - 1)
        scenarios.append(split(first + j, rng.choice(n, size=size, replace=False), mid))

    first += mid_count
    large = _group_label(first, first + large_count - 1)
    if large_size == n - 1:
        excluded = rng.choice(n, size=large_count, replace=large_count > n)
        for j, out in enumerate(excluded):
            scenarios.append(split(first + j, [k for k in range(n) if k != out], large))
    else:
        for j in range(large_count):
            scenarios.append(split(first + j, rng.choice(n, size=large_size, replace=False), large))

    return scenarios


def select_scenarios(scenarios: Sequence[Scenario], scenario_ids: Optional[Sequence[int]]) -> List[Scenario]:
    if not scenario_ids:
        return list(scenarios)
    by_id = {s.id: s for s in scenarios}
    unknown = [i for i in scenario_ids if i not in by_id]
    if unknown:
        raise ConfigError(f"Unknown scenario ids {unknown} (valid: 1-{len(scenarios)})")
    return [by_id[i] for i in scenario_ids]
