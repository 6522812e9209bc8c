"""
WAVECAL SPEA2 Engine
Baseline multi-objective evolutionary calibration: Pareto dominance,
strength/density fitness, archive truncation by nearest-neighbour crowding,
binary tournament mating, uniform crossover + bounded Gaussian mutation
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from threading import Lock
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from config import config
from src.core.exceptions import ConfigError, EmptyRequestError, EvaluationError, ShapeError
from src.core.param_space import ParameterBounds, ParameterVector, lhs_sample
from src.utils.logger import CalibrationLogger

logger = CalibrationLogger.get_logger(__name__)

ObjectiveVector = Tuple[float, ...]
Evaluator = Callable[[ParameterVector], Sequence[float]]


@dataclass
class Individual:
    """Genotype plus assigned objectives and SPEA2 fitness"""
    genotype: ParameterVector
    objectives: Optional[ObjectiveVector] = None
    fitness: Optional[float] = None
    strength: int = 0
    raw_fitness: float = 0.0
    density: float = 0.0

    def copy(self) -> "Individual":
        return Individual(self.genotype, self.objectives)


@dataclass
class EvolutionConfig:
    """SPEA2 run settings"""
    population_size: int = config.POPULATION_SIZE
    generations: int = config.GENERATIONS
    archive_size: int = config.ARCHIVE_SIZE
    crossover_rate: float = config.CROSSOVER_RATE
    mutation_rate: float = config.MUTATION_RATE
    seed: int = config.MASTER_SEED
    mutation_scale: float = config.MUTATION_SCALE
    early_stop: bool = config.EARLY_STOP
    stagnation_generations: int = config.STAGNATION_GENERATIONS
    log_scaled_init: bool = config.LOG_SCALE_SAMPLING

    def __post_init__(self):
        for name in ("population_size", "archive_size", "stagnation_generations"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.generations < 0:
            raise ConfigError(f"generations must be >= 0, got {self.generations}")
        for name in ("crossover_rate", "mutation_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {rate}")
        if self.mutation_scale < 0:
            raise ConfigError(f"mutation_scale must be >= 0, got {self.mutation_scale}")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], **overrides) -> "EvolutionConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown evolution keys: {sorted(unknown)}")
        merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**merged)


@dataclass
class HistoryRow:
    generation: int
    individual: int
    genotype: ParameterVector
    objectives: ObjectiveVector
    fitness: float
    in_archive: bool


@dataclass
class GenerationRecord:
    generation: int
    best_objectives: ObjectiveVector
    archive: List[ParameterVector]
    rows: List[HistoryRow] = field(default_factory=list)


@dataclass
class EvolutionResult:
    archive: List[Individual]
    history: List[GenerationRecord]
    evaluations: int = 0

    def best(self) -> Individual:
        """Smallest mean objective, ties by first objective then archive order"""
        return select_best(self.archive)


def select_best(archive: Sequence[Individual]) -> Individual:
    if not archive:
        raise EmptyRequestError("Cannot pick a best individual from an empty archive")
    keyed = [(float(np.mean(ind.objectives)), ind.objectives[0], k) for k, ind in enumerate(archive)]
    return archive[min(keyed)[2]]


# ============================================================================
# Operators
# ============================================================================

def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """a no worse everywhere and strictly better somewhere (minimization)"""
    if len(a) != len(b):
        raise ShapeError(f"Objective vectors differ in length: {len(a)} vs {len(b)}")
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def _objective_matrix(pool: Sequence[Individual]) -> np.ndarray:
    if any(ind.objectives is None for ind in pool):
        raise ConfigError("Every individual needs objectives before fitness assignment")
    lengths = {len(ind.objectives) for ind in pool}
    if len(lengths) > 1:
        raise ShapeError(f"Mixed objective lengths in pool: {sorted(lengths)}")
    return np.array([ind.objectives for ind in pool], dtype=float)


def assign_fitness(pool: Sequence[Individual]) -> np.ndarray:
    """
    SPEA2 fitness F = R + D over the union of population and archive

    S(i): members i dominates; R(i): sum of S over members dominating i;
    D(i) = 1 / (sigma_k + 2) with sigma_k the distance to the k-th nearest
    neighbour in objective space, k = round(sqrt(pool size)).

    Returns:
        fitness array, also written onto each individual
    """
    if not pool:
        return np.zeros(0)
    objs = _objective_matrix(pool)
    n = len(pool)

    le = np.all(objs[:, None, :] <= objs[None, :, :], axis=2)
    lt = np.any(objs[:, None, :] < objs[None, :, :], axis=2)
    dom = le & lt                                   # dom[i, j]: i dominates j
    strength = dom.sum(axis=1)
    raw = (dom * strength[:, None]).sum(axis=0).astype(float)

    if n > 1:
        k = min(int(round(math.sqrt(n))), n - 1)
        dist = cdist(objs, objs)
        np.fill_diagonal(dist, np.inf)
        dist.sort(axis=1)
        sigma_k = dist[:, k - 1]
    else:
        sigma_k = np.zeros(1)
    density = 1.0 / (sigma_k + 2.0)
    fitness = raw + density

    for ind, s, r, d, f in zip(pool, strength, raw, density, fitness):
        ind.strength = int(s)
        ind.raw_fitness = float(r)
        ind.density = float(d)
        ind.fitness = float(f)
    return fitness


def environmental_selection(pool: Sequence[Individual], archive_size: int) -> List[Individual]:
    """
    Next archive: every individual with fitness < 1; truncated by crowding
    when over capacity, filled with the best dominated ones when under
    """
    if archive_size < 1:
        raise ConfigError(f"Archive size must be >= 1, got {archive_size}")
    if not pool:
        return []
    if any(ind.fitness is None for ind in pool):
        raise ConfigError("Fitness must be assigned before environmental selection")

    fitness = np.array([ind.fitness for ind in pool])
    chosen = [i for i in range(len(pool)) if fitness[i] < 1.0]

    if len(chosen) < archive_size:
        dominated = sorted((i for i in range(len(pool)) if fitness[i] >= 1.0), key=lambda i: (fitness[i], i))
        chosen = sorted(chosen + dominated[:archive_size - len(chosen)])
    elif len(chosen) > archive_size:
        objs = _objective_matrix(pool)
        remaining = list(chosen)
        while len(remaining) > archive_size:
            sub = objs[remaining]
            dist = cdist(sub, sub)
            np.fill_diagonal(dist, np.inf)
            dist.sort(axis=1)
            nearest = dist[:, 0]
            second = dist[:, 1] if dist.shape[1] > 1 else np.full(len(remaining), np.inf)
            victim = int(np.lexsort((np.arange(len(remaining)), second, nearest))[0])
            remaining.pop(victim)
        chosen = remaining

    return [pool[i] for i in chosen]


def binary_tournament(archive: Sequence[Individual], count: int, rng: np.random.Generator) -> List[Individual]:
    """Each pick is the lower-fitness of two uniform draws; ties keep the first"""
    if count <= 0:
        return []
    if not archive:
        raise EmptyRequestError("Tournament needs a non-empty archive")
    picks = []
    n = len(archive)
    for _ in range(count):
        a, b = rng.integers(0, n, size=2)
        picks.append(archive[b] if archive[b].fitness < archive[a].fitness else archive[a])
    return picks


def vary(pool: Sequence[Individual], bounds: ParameterBounds, crossover_rate: float,
         mutation_rate: float, rng: np.random.Generator,
         mutation_scale: float = config.MUTATION_SCALE) -> List[Individual]:
    """
    Offspring by uniform per-gene crossover of consecutive pairs and
    Gaussian mutation with SD mutation_scale * (hi - lo), clamped to bounds

    Offspring whose genes are unchanged keep their parent's objectives.
    """
    if not (0.0 <= crossover_rate <= 1.0 and 0.0 <= mutation_rate <= 1.0):
        raise ConfigError(f"Rates must lie in [0, 1]: crossover={crossover_rate}, mutation={mutation_rate}")
    if not pool:
        return []

    parents = np.vstack([ind.genotype.as_array() for ind in pool])
    genes = parents.copy()
    n, d = genes.shape

    for a in range(0, n - 1, 2):
        if rng.random() < crossover_rate:
            mask = rng.random(d) < 0.5
            swap = genes[a, mask].copy()
            genes[a, mask] = genes[a + 1, mask]
            genes[a + 1, mask] = swap

    mutate = rng.random((n, d)) < mutation_rate
    noise = rng.standard_normal((n, d)) * (mutation_scale * bounds.span)
    genes = np.where(mutate, genes + noise, genes)
    genes = np.clip(genes, bounds.lower, bounds.upper)

    offspring = []
    for k in range(n):
        if np.array_equal(genes[k], parents[k]):
            offspring.append(pool[k].copy())
        else:
            offspring.append(Individual(ParameterVector.from_array(genes[k])))
    return offspring


# ============================================================================
# Engine
# ============================================================================

class SPEA2Engine:
    """
    SPEA2 loop: LHS init -> evaluate -> fitness -> environmental selection
    -> tournament -> variation, for a fixed generation budget

    Objectives are cached per genotype (the evaluator is deterministic), so
    archive members and unchanged offspring are never re-evaluated.
    Evaluation may use a thread pool; results do not depend on the worker
    count since selection and variation draw from per-generation RNG
    substreams only.
    """

    def __init__(self, evaluator: Evaluator, evo_config: EvolutionConfig,
                 bounds: Optional[ParameterBounds] = None, jobs: int = 1,
                 objective_names: Sequence[str] = ("rmse", "mae")):
        self.evaluator = evaluator
        self.config = evo_config
        self.bounds = bounds or ParameterBounds.default()
        self.jobs = max(1, int(jobs))
        self.objective_names = tuple(objective_names)
        self.cache: Dict[ParameterVector, ObjectiveVector] = {}
        self.cache_lock = Lock()
        self.evaluations = 0

    def _evaluate_one(self, genotype: ParameterVector) -> ObjectiveVector:
        try:
            values = tuple(float(v) for v in self.evaluator(genotype))
        except EvaluationError as e:
            if e.genotype is None:
                e.genotype = genotype
            raise
        except Exception as e:
            raise EvaluationError(f"Evaluation failed for {genotype}: {e}", genotype=genotype) from e
        if not values or not all(math.isfinite(v) for v in values):
            raise EvaluationError(f"Non-finite objectives {values} for {genotype}", genotype=genotype)
        return values

    def evaluate(self, individuals: Sequence[Individual]):
        """Assign objectives to every individual lacking them"""
        with self.cache_lock:
            pending = []
            for ind in individuals:
                if ind.objectives is None and ind.genotype not in self.cache and ind.genotype not in pending:
                    pending.append(ind.genotype)

        if pending:
            if self.jobs > 1 and len(pending) > 1:
                with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                    results = list(pool.map(self._evaluate_one, pending))
            else:
                results = [self._evaluate_one(g) for g in pending]
            with self.cache_lock:
                for genotype, values in zip(pending, results):
                    self.cache[genotype] = values
                self.evaluations += len(pending)

        expected = None
        for ind in individuals:
            if ind.objectives is None:
                ind.objectives = self.cache[ind.genotype]
            if expected is None:
                expected = len(ind.objectives)
            elif len(ind.objectives) != expected:
                raise EvaluationError(f"Objective count changed within a run for {ind.genotype}",
                                      genotype=ind.genotype)

    def _record(self, generation: int, pool: Sequence[Individual],
                archive: Sequence[Individual]) -> GenerationRecord:
        archive_ids = {id(ind) for ind in archive}
        rows = [
            HistoryRow(generation, k, ind.genotype, ind.objectives, ind.fitness, id(ind) in archive_ids)
            for k, ind in enumerate(pool)
        ]
        objs = np.array([ind.objectives for ind in archive], dtype=float)
        best = tuple(float(v) for v in objs.min(axis=0))
        return GenerationRecord(generation, best, [ind.genotype for ind in archive], rows)

    def run(self) -> EvolutionResult:
        cfg = self.config
        logger.info(
            f"SPEA2 run: population={cfg.population_size}, generations={cfg.generations}, "
            f"archive={cfg.archive_size}, seed={cfg.seed}, jobs={self.jobs}"
        )

        population = [Individual(g) for g in lhs_sample(cfg.population_size, self.bounds, cfg.seed,
                                                        log_scaled=cfg.log_scaled_init)]
        self.evaluate(population)
        archive: List[Individual] = []
        history: List[GenerationRecord] = []
        stagnant = 0

        for generation in range(cfg.generations + 1):
            pool = population + archive
            assign_fitness(pool)
            archive = environmental_selection(pool, cfg.archive_size)
            record = self._record(generation, pool, archive)
            history.append(record)

            if generation % 10 == 0 or generation == cfg.generations:
                logger.log_generation({
                    'generation': generation,
                    'best': [round(v, 5) for v in record.best_objectives],
                    'archive': len(archive),
                    'evaluations': self.evaluations,
                })

            if len(history) > 1 and record.best_objectives == history[-2].best_objectives:
                stagnant += 1
            else:
                stagnant = 0
            if cfg.early_stop and stagnant >= cfg.stagnation_generations:
                logger.info(f"Early stop at generation {generation}: no archive improvement "
                            f"for {stagnant} generations")
                break
            if generation == cfg.generations:
                break

            rng = np.random.default_rng([cfg.seed, generation + 1])
            mating = binary_tournament(archive, cfg.population_size, rng)
            population = vary(mating, self.bounds, cfg.crossover_rate, cfg.mutation_rate, rng,
                              cfg.mutation_scale)
            self.evaluate(population)

        logger.info(f"SPEA2 completed: {self.evaluations} evaluations, archive of {len(archive)}")
        return EvolutionResult(archive=archive, history=history, evaluations=self.evaluations)


def run_baseline(evaluator: Evaluator, evo_config: EvolutionConfig,
                 bounds: Optional[ParameterBounds] = None, jobs: int = 1) -> EvolutionResult:
    """
    Baseline calibration with a deterministic evaluator

    Args:
        evaluator: genotype -> objective vector (minimized)
        evo_config: SPEA2 settings
        bounds: parameter bounds (defaults from config)
        jobs: concurrent evaluations

    Returns:
        EvolutionResult with the final archive and per-generation history
    """
    return SPEA2Engine(evaluator, evo_config, bounds, jobs).run()
