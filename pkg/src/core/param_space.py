"""
WAVECAL Parameter Space
Calibratable physics triple (drg, cfw, stpm), bounds, default configuration
and Latin-hypercube initialization

The drag multiplier is also written DRF in older setups; drg is used throughout.
"""

import math
from dataclasses import dataclass, asdict
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from config import config
from src.core.exceptions import BoundsError, ConfigError, EmptyRequestError
from src.utils.logger import CalibrationLogger

logger = CalibrationLogger.get_logger(__name__)

PARAMETER_NAMES: Tuple[str, ...] = tuple(config.PARAMETER_NAMES)


@dataclass(frozen=True)
class ParameterVector:
    """Genotype of one model configuration"""
    drg: float   # wind-drag multiplier
    cfw: float   # Collins bottom friction
    stpm: float  # whitecapping steepness

    def __post_init__(self):
        for name in PARAMETER_NAMES:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ConfigError(f"Parameter {name} is not finite: {value}")

    def as_array(self) -> np.ndarray:
        return np.array([self.drg, self.cfw, self.stpm], dtype=float)

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)

    def get(self, name: str) -> float:
        if name not in PARAMETER_NAMES:
            raise ConfigError(f"Unknown parameter: {name}")
        return getattr(self, name)

    def replace(self, **values) -> "ParameterVector":
        data = self.as_dict()
        for name, value in values.items():
            if name not in PARAMETER_NAMES:
                raise ConfigError(f"Unknown parameter: {name}")
            data[name] = float(value)
        return ParameterVector(**data)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "ParameterVector":
        if len(values) != len(PARAMETER_NAMES):
            raise ConfigError(f"Expected {len(PARAMETER_NAMES)} values, got {len(values)}")
        return cls(*(float(v) for v in values))

    @classmethod
    def from_mapping(cls, data: Mapping[str, float]) -> "ParameterVector":
        unknown = set(data) - set(PARAMETER_NAMES)
        if unknown:
            raise ConfigError(f"Unknown parameters: {sorted(unknown)}")
        missing = set(PARAMETER_NAMES) - set(data)
        if missing:
            raise ConfigError(f"Missing parameters: {sorted(missing)}")
        return cls(**{name: float(data[name]) for name in PARAMETER_NAMES})


@dataclass(frozen=True)
class ParameterBounds:
    """Closed interval per parameter"""
    drg: Tuple[float, float]
    cfw: Tuple[float, float]
    stpm: Tuple[float, float]

    def __post_init__(self):
        for name in PARAMETER_NAMES:
            interval = getattr(self, name)
            if len(interval) != 2:
                raise BoundsError(f"Bound for {name} must be [lo, hi], got {interval}")
            lo, hi = interval
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
                raise BoundsError(f"Invalid bound for {name}: [{lo}, {hi}]")

    @property
    def lower(self) -> np.ndarray:
        return np.array([getattr(self, n)[0] for n in PARAMETER_NAMES], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([getattr(self, n)[1] for n in PARAMETER_NAMES], dtype=float)

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def interval(self, name: str) -> Tuple[float, float]:
        if name not in PARAMETER_NAMES:
            raise ConfigError(f"Unknown parameter: {name}")
        return getattr(self, name)

    def contains(self, p: ParameterVector) -> bool:
        values = p.as_array()
        return bool(np.all(values >= self.lower) and np.all(values <= self.upper))

    def strictly_contains(self, p: ParameterVector) -> bool:
        values = p.as_array()
        return bool(np.all(values > self.lower) and np.all(values < self.upper))

    def as_dict(self) -> Dict[str, List[float]]:
        return {name: list(getattr(self, name)) for name in PARAMETER_NAMES}

    @classmethod
    def from_mapping(cls, data: Mapping[str, Sequence[float]]) -> "ParameterBounds":
        merged = {name: tuple(config.BOUNDS[name]) for name in PARAMETER_NAMES}
        for name, interval in data.items():
            if name not in PARAMETER_NAMES:
                raise BoundsError(f"Unknown parameter in bounds: {name}")
            try:
                merged[name] = (float(interval[0]), float(interval[1]))
            except (TypeError, IndexError, ValueError) as e:
                raise BoundsError(f"Bound for {name} must be [lo, hi]: {e}") from e
        return cls(**merged)

    @classmethod
    def default(cls) -> "ParameterBounds":
        return cls.from_mapping({})


DEFAULT_CONFIGURATION = ParameterVector.from_mapping(config.DEFAULT_THETA)


def default_configuration(bounds: Optional[ParameterBounds] = None,
                          overrides: Optional[Mapping[str, float]] = None) -> ParameterVector:
    """
    Reference configuration used as the improvement baseline

    Args:
        bounds: bounds the default must lie strictly inside of
        overrides: per-parameter replacement values

    Returns:
        ParameterVector
    """
    theta = DEFAULT_CONFIGURATION
    if overrides:
        theta = theta.replace(**overrides)
    if bounds is not None and not bounds.strictly_contains(theta):
        raise BoundsError(f"Default configuration {theta} is not strictly inside bounds {bounds.as_dict()}")
    return theta


def clamp(p: ParameterVector, bounds: ParameterBounds) -> ParameterVector:
    """Project each coordinate into its interval"""
    values = p.as_array()
    clipped = np.clip(values, bounds.lower, bounds.upper)
    if np.array_equal(clipped, values):
        return p
    return ParameterVector.from_array(clipped)


def lhs_sample(n: int, bounds: ParameterBounds, seed: int,
               log_scaled: bool = False) -> List[ParameterVector]:
    """
    Latin hypercube sample: one point per stratum per dimension, uniformly
    placed inside its stratum

    Args:
        n: number of vectors
        bounds: parameter bounds
        seed: RNG seed, output is bitwise reproducible for a fixed seed
        log_scaled: stratify cfw and stpm in log space

    Returns:
        list of n ParameterVector
    """
    if n < 1:
        raise EmptyRequestError(f"LHS sample size must be >= 1, got {n}")
    if not isinstance(bounds, ParameterBounds):
        raise BoundsError(f"Expected ParameterBounds, got {type(bounds).__name__}")

    sampler = qmc.LatinHypercube(d=len(PARAMETER_NAMES), seed=np.random.default_rng(seed))
    unit = sampler.random(n)

    lower, upper = bounds.lower, bounds.upper
    if log_scaled:
        log_dims = np.array([name in ("cfw", "stpm") for name in PARAMETER_NAMES])
        if np.any(lower[log_dims] <= 0):
            raise BoundsError("Log-scaled sampling requires positive cfw/stpm bounds")
        lo = np.where(log_dims, np.log(lower), lower)
        hi = np.where(log_dims, np.log(upper), upper)
        scaled = qmc.scale(unit, lo, hi)
        scaled[:, log_dims] = np.exp(scaled[:, log_dims])
    else:
        scaled = qmc.scale(unit, lower, upper)

    scaled = np.clip(scaled, lower, upper)
    samples = [ParameterVector.from_array(row) for row in scaled]
    logger.debug(f"LHS sampled {n} vectors (seed={seed}, log_scaled={log_scaled})")
    return samples
