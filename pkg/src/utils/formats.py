"""
File formats
WFLD v1 wind fields, BATH v1 bathymetry, station CSV (time,station,hs_m)
and station list CSV (station,ix,iy)
"""

from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import pandas as pd

from src.core.exceptions import InputFormatError, ShapeError
from src.core.forcing_noise import WindField
from src.core.wave_model import BathymetryGrid, Station, StationSeries, StationSet

PathLike = Union[str, Path]

STATION_CSV_COLUMNS = ["time", "station", "hs_m"]
STATION_LIST_COLUMNS = ["station", "ix", "iy"]


def _fmt(value: float) -> str:
    return repr(float(value))


def _iso(ts: np.datetime64) -> str:
    return str(np.datetime_as_string(ts, unit="s"))


def _open_lines(path: PathLike) -> List[str]:
    path = Path(path)
    if not path.exists():
        raise InputFormatError(f"File not found: {path}")
    return path.read_text().splitlines()


def _parse_row(line: str, expected: int, path, lineno: int) -> np.ndarray:
    try:
        values = np.array([float(tok) for tok in line.split()], dtype=float)
    except ValueError as e:
        raise InputFormatError(f"{path}:{lineno}: non-numeric value ({e})") from e
    if values.size != expected:
        raise InputFormatError(f"{path}:{lineno}: expected {expected} values, got {values.size}")
    return values


# ============================================================================
# WFLD v1
# ============================================================================

def write_wind_field(wind: WindField, path: PathLike):
    """`WFLD 1 nx ny nt`, then per step: timestamp, ny rows U, ny rows V"""
    lines = [f"WFLD 1 {wind.nx} {wind.ny} {wind.nt}"]
    for t in range(wind.nt):
        lines.append(_iso(wind.times[t]))
        for grid in (wind.u[t], wind.v[t]):
            for row in grid:
                lines.append(" ".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_wind_field(path: PathLike) -> WindField:
    lines = _open_lines(path)
    if not lines:
        raise InputFormatError(f"{path}: empty wind file")
    header = lines[0].split()
    if len(header) != 5 or header[0] != "WFLD" or header[1] != "1":
        raise InputFormatError(f"{path}: expected header 'WFLD 1 nx ny nt', got '{lines[0]}'")
    try:
        nx, ny, nt = (int(tok) for tok in header[2:])
    except ValueError as e:
        raise InputFormatError(f"{path}: bad dimensions in header ({e})") from e

    block = 1 + 2 * ny
    if len(lines) - 1 < nt * block:
        raise InputFormatError(f"{path}: expected {nt} steps of {block} lines, file has {len(lines) - 1} lines")

    times = []
    u = np.empty((nt, ny, nx))
    v = np.empty((nt, ny, nx))
    pos = 1
    for t in range(nt):
        try:
            times.append(np.datetime64(lines[pos].strip(), "s"))
        except ValueError as e:
            raise InputFormatError(f"{path}:{pos + 1}: bad timestamp '{lines[pos]}'") from e
        pos += 1
        for target in (u, v):
            for y in range(ny):
                target[t, y] = _parse_row(lines[pos], nx, path, pos + 1)
                pos += 1
    try:
        return WindField(np.array(times, dtype="datetime64[s]"), u, v)
    except ShapeError as e:
        raise InputFormatError(f"{path}: {e}") from e


# ============================================================================
# BATH v1
# ============================================================================

def write_bathymetry(bathy: BathymetryGrid, path: PathLike):
    lines = [f"BATH 1 {bathy.nx} {bathy.ny}"]
    lines += [" ".join(_fmt(v) for v in row) for row in bathy.depth]
    Path(path).write_text("\n".join(lines) + "\n")


def read_bathymetry(path: PathLike) -> BathymetryGrid:
    lines = [ln for ln in _open_lines(path) if ln.strip()]
    if not lines:
        raise InputFormatError(f"{path}: empty bathymetry file")
    header = lines[0].split()
    if len(header) != 4 or header[0] != "BATH" or header[1] != "1":
        raise InputFormatError(f"{path}: expected header 'BATH 1 nx ny', got '{lines[0]}'")
    try:
        nx, ny = int(header[2]), int(header[3])
    except ValueError as e:
        raise InputFormatError(f"{path}: bad dimensions in header ({e})") from e
    if len(lines) - 1 != ny:
        raise InputFormatError(f"{path}: expected {ny} depth rows, got {len(lines) - 1}")
    depth = np.vstack([_parse_row(lines[1 + y], nx, path, 2 + y) for y in range(ny)])
    return BathymetryGrid(depth)


# ============================================================================
# Station CSVs
# ============================================================================

def write_station_csv(series: List[StationSeries], path: PathLike):
    """One row per (time, station), rows ordered by time then station order"""
    frames = [
        pd.DataFrame({"time": [_iso(t) for t in s.times], "station": s.station_id, "hs_m": s.hs,
                      "_order": k})
        for k, s in enumerate(series)
    ]
    if frames:
        df = pd.concat(frames, ignore_index=True)
        df = df.sort_values(["time", "_order"], kind="stable").drop(columns="_order")
    else:
        df = pd.DataFrame(columns=STATION_CSV_COLUMNS)
    df.to_csv(path, index=False, columns=STATION_CSV_COLUMNS)


def read_station_csv(path: PathLike) -> Dict[str, StationSeries]:
    """Station id -> series, stations in order of first appearance"""
    path = Path(path)
    if not path.exists():
        raise InputFormatError(f"File not found: {path}")
    try:
        df = pd.read_csv(path, dtype={"station": str})
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise InputFormatError(f"{path}: unreadable station CSV ({e})") from e

    if list(df.columns) != STATION_CSV_COLUMNS:
        raise InputFormatError(f"{path}: expected header {','.join(STATION_CSV_COLUMNS)}, got {','.join(map(str, df.columns))}")
    if df.empty:
        raise InputFormatError(f"{path}: header present but no data rows (expected one row per time and station)")

    try:
        times = pd.to_datetime(df["time"], format="ISO8601")
        hs = pd.to_numeric(df["hs_m"])
    except (ValueError, TypeError) as e:
        raise InputFormatError(f"{path}: bad time or hs_m value ({e})") from e

    df = df.assign(time=times.values.astype("datetime64[s]"), hs_m=hs)
    result = {}
    for station_id in pd.unique(df["station"]):
        rows = df[df["station"] == station_id].sort_values("time", kind="stable")
        try:
            result[str(station_id)] = StationSeries(str(station_id), rows["time"].to_numpy(),
                                                    rows["hs_m"].to_numpy(dtype=float))
        except (ShapeError, InputFormatError) as e:
            raise InputFormatError(f"{path}: {e}") from e
    return result


def write_station_list(stations: StationSet, path: PathLike):
    df = pd.DataFrame([(s.id, s.ix, s.iy) for s in stations], columns=STATION_LIST_COLUMNS)
    df.to_csv(path, index=False)


def read_station_list(path: PathLike) -> StationSet:
    path = Path(path)
    if not path.exists():
        raise InputFormatError(f"File not found: {path}")
    try:
        df = pd.read_csv(path, dtype={"station": str})
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise InputFormatError(f"{path}: unreadable station list ({e})") from e
    if list(df.columns) != STATION_LIST_COLUMNS:
        raise InputFormatError(f"{path}: expected header {','.join(STATION_LIST_COLUMNS)}")
    return StationSet(tuple(Station(str(r.station), int(r.ix), int(r.iy)) for r in df.itertuples()))
