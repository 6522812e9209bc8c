"""
WAVECAL Forcing Noise Engine
Stochastic ensemble of perturbed wind forcings: randomly scattered noise
sources whose spreading is controlled by time-spatial correlation terms,
plus calm-period suppression of perturbed model output
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import config
from src.core.exceptions import ConfigError, EmptyRequestError, ShapeError
from src.utils.logger import CalibrationLogger

logger = CalibrationLogger.get_logger(__name__)

COMPONENTS = ("u", "v")


@dataclass(frozen=True)
class WindField:
    """Gridded U (eastward) / V (northward) wind in m/s, shape (nt, ny, nx)"""
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype="datetime64[s]")
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

        if u.ndim != 3 or u.shape != v.shape:
            raise ShapeError(f"U/V must share a (nt, ny, nx) shape, got {u.shape} and {v.shape}")
        if times.ndim != 1 or times.shape[0] != u.shape[0]:
            raise ShapeError(f"{times.shape[0] if times.ndim == 1 else times.shape} timestamps for {u.shape[0]} steps")
        if u.shape[0] < 2:
            raise ShapeError("Wind field needs at least two time steps")
        if min(u.shape[1:]) < 1:
            raise ShapeError(f"Empty wind grid: {u.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ShapeError("Wind field contains non-finite values")
        if np.any(np.diff(times.astype(np.int64)) <= 0):
            raise ShapeError("Wind timestamps must be strictly increasing")

    @property
    def nt(self) -> int:
        return self.u.shape[0]

    @property
    def ny(self) -> int:
        return self.u.shape[1]

    @property
    def nx(self) -> int:
        return self.u.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.u.shape

    def speed(self) -> np.ndarray:
        return np.hypot(self.u, self.v)

    def component(self, name: str) -> np.ndarray:
        if name not in COMPONENTS:
            raise ConfigError(f"Unknown wind component: {name}")
        return self.u if name == "u" else self.v

    def series(self, ix: int, iy: int, name: str) -> np.ndarray:
        """Time series of one component at one cell"""
        return self.component(name)[:, iy, ix]

    def with_components(self, u: np.ndarray, v: np.ndarray) -> "WindField":
        return WindField(self.times.copy(), u, v)


@dataclass(frozen=True)
class NoiseSourceSet:
    """Grid cells acting as noise origins"""
    locations: Tuple[Tuple[int, int], ...]  # (ix, iy)

    def __post_init__(self):
        if len(set(self.locations)) != len(self.locations):
            raise ConfigError("Noise source locations must be distinct")

    def __len__(self):
        return len(self.locations)

    def validate(self, nx: int, ny: int):
        for ix, iy in self.locations:
            if not (0 <= ix < nx and 0 <= iy < ny):
                raise ConfigError(f"Noise source ({ix}, {iy}) outside {nx}x{ny} grid")


@dataclass
class ForcingEnsemble:
    """Base forcing plus its perturbed members"""
    base: WindField
    members: List[WindField]
    sigma: float
    seed: int
    sources: Optional[NoiseSourceSet] = None
    spacing: int = config.NOISE_SOURCE_SPACING

    def __post_init__(self):
        if len(self.members) < 1:
            raise EmptyRequestError("Ensemble needs at least one member")
        for k, member in enumerate(self.members):
            if member.shape != self.base.shape or not np.array_equal(member.times, self.base.times):
                raise ShapeError(f"Member {k} does not match the base forcing dimensions/timestamps")

    def __len__(self):
        return len(self.members)

    @classmethod
    def identical(cls, base: WindField, n: int) -> "ForcingEnsemble":
        """n unperturbed copies of the base forcing"""
        if n < 1:
            raise EmptyRequestError("Ensemble needs at least one member")
        return cls(base=base, members=[base] * n, sigma=0.0, seed=0)


# ============================================================================
# Correlation helpers
# ============================================================================

def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    """Pearson correlation; a zero-variance operand gives 0"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"Correlation operands differ in shape: {a.shape} vs {b.shape}")
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt(np.sum(da * da) * np.sum(db * db))
    if denom == 0.0:
        return 0.0
    return float(np.sum(da * db) / denom)


def _column_correlations(cells: np.ndarray, sources: np.ndarray) -> np.ndarray:
    """Pearson correlation of every cell series with every source series

    cells: (nt, ncell), sources: (nt, nsrc) -> (ncell, nsrc)
    """
    dc = cells - cells.mean(axis=0)
    ds = sources - sources.mean(axis=0)
    nc = np.sqrt(np.sum(dc * dc, axis=0))
    ns = np.sqrt(np.sum(ds * ds, axis=0))
    num = dc.T @ ds
    denom = np.outer(nc, ns)
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(denom > 0.0, num / np.where(denom > 0.0, denom, 1.0), 0.0)
    return corr


def lag1_autocorrelation(wind: WindField, component: str) -> float:
    """Lag-1 autocorrelation of the field-mean component series"""
    mean_series = wind.component(component).mean(axis=(1, 2))
    return pearson(mean_series[1:], mean_series[:-1])


def absolute_sigma(sigma: float, wind: WindField, component: str) -> float:
    """Relative sigma scaled by the mean component magnitude over the field"""
    return float(sigma * np.mean(np.abs(wind.component(component))))


# ============================================================================
# Operations
# ============================================================================

def scatter_sources(nx: int, ny: int, spacing: int, seed: int) -> NoiseSourceSet:
    """
    One source per spacing x spacing block, jittered uniformly in the block

    A spacing larger than the grid leaves the whole grid as one block.
    """
    if spacing < 1:
        raise ConfigError(f"Source spacing must be >= 1, got {spacing}")
    if nx < 1 or ny < 1:
        raise ShapeError(f"Empty grid: {nx}x{ny}")

    rng = np.random.default_rng(seed)
    locations = []
    for y0 in range(0, ny, spacing):
        y1 = min(y0 + spacing, ny)
        for x0 in range(0, nx, spacing):
            x1 = min(x0 + spacing, nx)
            ix = int(rng.integers(x0, x1))
            iy = int(rng.integers(y0, y1))
            locations.append((ix, iy))
    return NoiseSourceSet(tuple(locations))


def source_noise(j: Tuple[int, int], t: int, sigma: float, wind: WindField,
                 rng: np.random.Generator) -> Tuple[float, float]:
    """
    Noise emitted by source j at step t for (U, V):
    N(0, sigma_abs) * corr(U_j, V_j) * corr(C_t, C_{t-1})

    Args:
        j: source cell (ix, iy)
        t: time step, >= 1
        sigma: relative noise scale
        wind: base forcing the correlation terms are taken from
        rng: generator, U is drawn before V

    Returns:
        (f_u, f_v)
    """
    if sigma < 0:
        raise ConfigError(f"Noise sigma must be >= 0, got {sigma}")
    if not 1 <= t < wind.nt:
        raise ConfigError(f"Noise step must lie in [1, {wind.nt - 1}], got {t}")

    ix, iy = j
    uv = pearson(wind.series(ix, iy, "u"), wind.series(ix, iy, "v"))
    values = []
    for component in COMPONENTS:
        draw = rng.normal(0.0, absolute_sigma(sigma, wind, component))
        values.append(float(draw * uv * lag1_autocorrelation(wind, component)))
    return values[0], values[1]


def aggregate_noise(i: Tuple[int, int], t: int, sources: NoiseSourceSet, wind: WindField,
                    per_source_noises: Sequence[float], component: str = "u") -> float:
    """
    Noise at data point i: sum over sources of f*(j, t) * corr(C_i, C_j)

    Args:
        i: data point (ix, iy)
        t: time step (kept for symmetry with source_noise)
        sources: noise sources, same order as per_source_noises
        wind: base forcing
        per_source_noises: f*(j, t) for the requested component
        component: "u" or "v"
    """
    if len(per_source_noises) != len(sources):
        raise ShapeError(f"{len(per_source_noises)} noise values for {len(sources)} sources")
    target = wind.series(i[0], i[1], component)
    total = 0.0
    for (jx, jy), noise in zip(sources.locations, per_source_noises):
        total += float(noise) * pearson(target, wind.series(jx, jy, component))
    return total


class NoiseFieldGenerator:
    """
    Vectorized ensemble generator

    Correlation terms come from the base field and are computed once, so
    members are i.i.d. around the base. Member k draws from its own RNG
    substream derived from (seed, k).
    """

    def __init__(self, base: WindField, sources: NoiseSourceSet, sigma: float, seed: int):
        if sigma < 0:
            raise ConfigError(f"Noise sigma must be >= 0, got {sigma}")
        sources.validate(base.nx, base.ny)
        self.base = base
        self.sources = sources
        self.sigma = float(sigma)
        self.seed = int(seed)

        nt, ny, nx = base.shape
        src_x = np.array([ix for ix, _ in sources.locations], dtype=int)
        src_y = np.array([iy for _, iy in sources.locations], dtype=int)

        u_src = base.u[:, src_y, src_x]
        v_src = base.v[:, src_y, src_x]
        uv_corr = np.array([pearson(u_src[:, k], v_src[:, k]) for k in range(len(sources))])

        # Per-component source amplitude and spatial spreading matrix
        self._scale = {}
        self._spread = {}
        for name, src in (("u", u_src), ("v", v_src)):
            comp = base.component(name)
            lag = lag1_autocorrelation(base, name)
            self._scale[name] = absolute_sigma(self.sigma, base, name) * uv_corr * lag
            self._spread[name] = _column_correlations(comp.reshape(nt, ny * nx), src)

        logger.debug(
            f"NoiseFieldGenerator: {len(sources)} sources, sigma={self.sigma}, "
            f"scale_u={np.abs(self._scale['u']).max(initial=0.0):.4f}, "
            f"scale_v={np.abs(self._scale['v']).max(initial=0.0):.4f}"
        )

    def member_noise(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """(noise_u, noise_v) fields of member k, shape (nt, ny, nx); step 0 is noise-free"""
        nt, ny, nx = self.base.shape
        rng = np.random.default_rng([self.seed, k])
        draws = rng.standard_normal((nt - 1, 2, len(self.sources)))
        fields = []
        for c, name in enumerate(COMPONENTS):
            per_source = draws[:, c, :] * self._scale[name]          # (nt-1, nsrc)
            noise = np.zeros((nt, ny * nx))
            noise[1:] = per_source @ self._spread[name].T
            fields.append(noise.reshape(nt, ny, nx))
        return fields[0], fields[1]

    def member(self, k: int) -> WindField:
        if self.sigma == 0.0:
            return self.base
        noise_u, noise_v = self.member_noise(k)
        return self.base.with_components(self.base.u + noise_u, self.base.v + noise_v)


def generate_ensemble(base: WindField, n: int, sigma: float = config.NOISE_SIGMA,
                      spacing: int = config.NOISE_SOURCE_SPACING, seed: int = 0,
                      workers: int = 1) -> ForcingEnsemble:
    """
    Perturbed ensemble {base + aggregated noise} of n members

    Args:
        base: unperturbed forcing
        n: member count
        sigma: relative noise scale (0.25 -> 25% of the mean component magnitude)
        spacing: source block size in cells
        seed: master seed; (seed, k) fully determines member k
        workers: threads used to build members

    Returns:
        ForcingEnsemble
    """
    if n < 1:
        raise EmptyRequestError(f"Ensemble size must be >= 1, got {n}")
    sources = scatter_sources(base.nx, base.ny, spacing, seed)
    generator = NoiseFieldGenerator(base, sources, sigma, seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            members = list(pool.map(generator.member, range(n)))
    else:
        members = [generator.member(k) for k in range(n)]

    logger.info(f"Generated forcing ensemble: {n} members, sigma={sigma}, {len(sources)} sources, seed={seed}")
    return ForcingEnsemble(base=base, members=members, sigma=float(sigma), seed=int(seed),
                           sources=sources, spacing=spacing)


def _clamp_speed(member_u, member_v, base_u, base_v, calm_threshold: float, calm_overshoot: float):
    """Scale member (u, v) so its speed stays within base speed * (1 + overshoot) where base is calm"""
    mu, mv, bu, bv = (np.asarray(a, dtype=float) for a in (member_u, member_v, base_u, base_v))
    if not (mu.shape == mv.shape == bu.shape == bv.shape):
        raise ShapeError(f"Member components {mu.shape}/{mv.shape} differ from base {bu.shape}/{bv.shape}")
    base_speed = np.hypot(bu, bv)
    member_speed = np.hypot(mu, mv)
    cap = base_speed * (1.0 + calm_overshoot)
    excess = (base_speed < calm_threshold) & (member_speed > cap)
    scale = np.divide(cap, member_speed, out=np.ones_like(member_speed), where=excess)
    return mu * scale, mv * scale


def suppress_calm(member, base, calm_threshold: float = config.CALM_THRESHOLD,
                  calm_overshoot: float = config.CALM_OVERSHOOT):
    """
    Clamp the member's magnitude to |base| * (1 + overshoot) wherever |base| < threshold

    Accepted inputs:
        - station series exposing `hs` (a copy with clamped hs is returned)
        - WindField pairs, compared by speed per step and cell; clamped
          vectors keep their direction
        - (u, v) array pairs, treated like wind fields
        - aligned value arrays; signed values keep their sign

    Near-peak variability is left untouched. The threshold is in the units of
    the input: metres of Hs for model output, m/s for wind.
    """
    if hasattr(member, "hs") and hasattr(base, "hs"):
        if not np.array_equal(member.times, base.times):
            raise ShapeError(f"Member and base series for {getattr(member, 'station_id', '?')} are not aligned")
        return replace(member, hs=suppress_calm(member.hs, base.hs, calm_threshold, calm_overshoot))

    if isinstance(member, WindField) and isinstance(base, WindField):
        if member.shape != base.shape or not np.array_equal(member.times, base.times):
            raise ShapeError(f"Member wind {member.shape} is not aligned with base wind {base.shape}")
        u, v = _clamp_speed(member.u, member.v, base.u, base.v, calm_threshold, calm_overshoot)
        return WindField(member.times, u, v)
    if isinstance(member, WindField) or isinstance(base, WindField):
        raise ShapeError("Wind fields can only be clamped against another wind field")

    if isinstance(member, tuple) and isinstance(base, tuple):
        if len(member) != 2 or len(base) != 2:
            raise ShapeError(f"Expected (u, v) pairs, got {len(member)} and {len(base)} components")
        return _clamp_speed(*member, *base, calm_threshold, calm_overshoot)

    member_arr = np.asarray(member, dtype=float)
    base_arr = np.asarray(base, dtype=float)
    if member_arr.shape != base_arr.shape:
        raise ShapeError(f"Member shape {member_arr.shape} differs from base {base_arr.shape}")
    base_size = np.abs(base_arr)
    cap = base_size * (1.0 + calm_overshoot)
    calm = base_size < calm_threshold
    return np.where(calm & (np.abs(member_arr) > cap), np.sign(member_arr) * cap, member_arr)


def ensemble_rms_perturbation(ensemble: ForcingEnsemble) -> float:
    """RMS of (member - base) over all members, components and cells"""
    sq = 0.0
    count = 0
    for member in ensemble.members:
        du = member.u - ensemble.base.u
        dv = member.v - ensemble.base.v
        sq += float(np.sum(du * du) + np.sum(dv * dv))
        count += du.size + dv.size
    return float(np.sqrt(sq / count))
