"""Brownian driver paths on dyadic time grids.

A path is generated once at a coarse level and deepened by Brownian-bridge
midpoint refinement.  Every refinement level draws its noise from a
counter-based stream keyed by (seed, level), so generating a path at level
L + j is bit-identical to generating at level L and refining j times, and
ensembles are reproducible no matter how work is split across workers.

Usage::

    path = generate_path(seed=7, horizon=1.0, level=10)
    fine = refine(path, levels=2)
    w = evaluate(path, [0.25, 0.5])
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DyadicGrid",
    "BrownianPath",
    "PathError",
    "ResourceCapError",
    "generate_path",
    "refine",
    "evaluate",
    "restrict",
    "save_path",
    "load_path",
    "save_path_csv",
    "load_path_csv",
]

# Hard cap on stored grid points per path (2^26 doubles per component).
MAX_POINTS = 1 << 26


class PathError(Exception):
    """Invalid path construction or query."""


class ResourceCapError(PathError):
    """A requested grid would exceed the in-memory point cap."""


@dataclass(frozen=True)
class DyadicGrid:
    """Uniform grid 0, T/2^L, 2T/2^L, ..., T."""

    horizon: float
    level: int

    def __post_init__(self):
        if not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise PathError(f"horizon must be positive and finite, got {self.horizon}")
        if self.level < 0:
            raise PathError(f"level must be >= 0, got {self.level}")
        if self.n_points > MAX_POINTS:
            raise ResourceCapError(
                f"level {self.level} needs {self.n_points} points, cap is {MAX_POINTS}"
            )

    @property
    def n_steps(self) -> int:
        return 1 << self.level

    @property
    def n_points(self) -> int:
        return (1 << self.level) + 1

    @property
    def spacing(self) -> float:
        return self.horizon / self.n_steps

    def times(self) -> np.ndarray:
        return np.arange(self.n_points) * self.spacing

    def index_of(self, t: float) -> int:
        """Index of a grid-aligned time, snapping within a relative 1e-9."""
        k = t / self.spacing
        ki = int(round(k))
        if abs(k - ki) > 1e-9 * max(1.0, abs(k)) or not (0 <= ki <= self.n_steps):
            raise PathError(f"time {t} is not on the level-{self.level} grid")
        return ki


@dataclass
class BrownianPath:
    """Values of one Brownian driver on a dyadic grid.

    ``values`` has shape (n_points, d) with values[0] = 0.  ``seed`` and the
    generation scheme determine every entry; ``source`` records whether the
    path is a root generation or a restriction of one.
    """

    grid: DyadicGrid
    values: np.ndarray
    seed: int
    d: int = 1
    source: tuple = field(default=("root",))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.n_points, self.d):
            raise PathError(
                f"values shape {self.values.shape} does not match grid/dimension"
            )

    @property
    def level(self) -> int:
        return self.grid.level

    @property
    def horizon(self) -> float:
        return self.grid.horizon

    def times(self) -> np.ndarray:
        return self.grid.times()

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)


def _level_rng(seed: int, level: int) -> np.random.Generator:
    # One Philox stream per (path seed, refinement level); the block counter
    # inside the stream supplies the per-index part.
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(level)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_path_seed(master_seed: int, index: int) -> int:
    """Seed for ensemble member ``index`` under ``master_seed``.

    Arithmetic on purpose: distinct (master, index) pairs map to distinct
    64-bit keys, and the mapping is independent of batching or worker count.
    """
    return ((master_seed & 0xFFFFFFFF) << 28) ^ (index & 0x0FFFFFFF)


def generate_path(seed: int, horizon: float = 1.0, level: int = 10, d: int = 1) -> BrownianPath:
    """Generate a Brownian path on the dyadic grid of the given level.

    Parameters
    ----------
    seed : int
        Path identity; same (seed, horizon, level, d) gives bit-identical
        values on one platform.
    horizon : float
        Terminal time T.
    level : int
        Dyadic depth; the grid has 2^level steps.
    d : int
        Spatial dimension of the driver.

    Returns
    -------
    BrownianPath
    """
    grid = DyadicGrid(horizon, level)
    if d < 1:
        raise PathError(f"dimension must be >= 1, got {d}")
    # Level 0: endpoint only.
    endpoint = _level_rng(seed, 0).standard_normal((1, d)) * np.sqrt(horizon)
    values = np.concatenate([np.zeros((1, d)), endpoint], axis=0)
    path = BrownianPath(DyadicGrid(horizon, 0), values, seed, d)
    for _ in range(level):
        path = refine(path)
    return path


def refine(path: BrownianPath, levels: int = 1) -> BrownianPath:
    """Deepen a path by bridge midpoint insertion.

    Each new midpoint is the neighbor average plus centered Gaussian noise of
    variance (old spacing)/4, drawn from the stream keyed by the target level.
    Restricted paths refine with the same streams as their parent, so shared
    grid points stay bit-identical.
    """
    if levels < 0:
        raise PathError("levels must be >= 0")
    out = path
    for _ in range(levels):
        grid = out.grid
        new_grid = DyadicGrid(grid.horizon, grid.level + 1)
        v = out.values
        # A restriction draws fewer midpoints from the parent's stream; C-order
        # fill makes those the leading block of the parent's own draws, so
        # shared points agree bit-for-bit with refine-then-restrict.
        rng = _level_rng(out.seed, _stream_level(out) + 1)
        noise = rng.standard_normal((grid.n_steps, out.d)) * np.sqrt(grid.spacing / 4.0)
        mids = 0.5 * (v[:-1] + v[1:]) + noise
        new_values = np.empty((new_grid.n_points, out.d))
        new_values[0::2] = v
        new_values[1::2] = mids
        out = BrownianPath(new_grid, new_values, out.seed, out.d, source=_child_source(out))
    return out


def _stream_level(path: BrownianPath) -> int:
    # Restrictions keep the parent's stream numbering so refinement noise
    # matches the parent path on shared points.
    if path.source[0] == "restricted":
        return path.source[1]
    return path.level


def _child_source(path: BrownianPath) -> tuple:
    if path.source[0] == "restricted":
        return ("restricted", path.source[1] + 1)
    return ("root",)


def evaluate(path: BrownianPath, t) -> np.ndarray:
    """Piecewise-linear evaluation between grid points.

    Returns shape (d,) for scalar t, else (len(t), d).
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(t_arr < 0) or np.any(t_arr > path.horizon * (1 + 1e-12)):
        raise PathError("evaluation time outside [0, T]")
    times = path.times()
    out = np.empty((t_arr.size, path.d))
    for j in range(path.d):
        out[:, j] = np.interp(t_arr, times, path.values[:, j])
    if np.isscalar(t) or np.ndim(t) == 0:
        return out[0]
    return out


def restrict(path: BrownianPath, t_end: float) -> BrownianPath:
    """Restrict to [0, t_end] where t_end is a dyadic fraction 2^-j of T.

    The result keeps the parent's seed and refinement streams, so refining a
    restriction agrees bit-exactly with restricting a refinement.
    """
    k = path.grid.index_of(t_end)
    if k == 0:
        raise PathError("restriction needs t_end > 0")
    j = int(np.log2(k))
    if (1 << j) != k:
        raise PathError("t_end must sit at a power-of-two grid index")
    sub_grid = DyadicGrid(t_end, j)
    src = ("restricted", _stream_level(path))
    return BrownianPath(sub_grid, path.values[: k + 1].copy(), path.seed, path.d, source=src)


def save_path(path: BrownianPath, file) -> None:
    """Binary dump; round-trips bit-exactly."""
    np.savez(
        file,
        horizon=path.horizon,
        level=path.level,
        d=path.d,
        seed=path.seed,
        values=path.values,
        source_kind=path.source[0],
        source_rest=np.array(path.source[1:], dtype=np.int64),
    )


def load_path(file) -> BrownianPath:
    with np.load(file, allow_pickle=False) as z:
        grid = DyadicGrid(float(z["horizon"]), int(z["level"]))
        src = (str(z["source_kind"]),) + tuple(int(v) for v in z["source_rest"])
        return BrownianPath(grid, z["values"], int(z["seed"]), int(z["d"]), source=src)


def save_path_csv(path: BrownianPath, file) -> None:
    header = f"T={path.horizon!r} level={path.level} d={path.d} seed={path.seed}"
    data = np.column_stack([path.times(), path.values])
    cols = ",".join(["t"] + [f"w{j}" for j in range(path.d)])
    np.savetxt(file, data, delimiter=",", header=header + "\n" + cols, fmt="%.17g")


def load_path_csv(file) -> BrownianPath:
    with open(file) as fh:
        meta = fh.readline().lstrip("# ").split()
    kv = dict(item.split("=") for item in meta)
    data = np.loadtxt(file, delimiter=",", skiprows=2, ndmin=2)
    grid = DyadicGrid(float(kv["T"]), int(kv["level"]))
    return BrownianPath(grid, data[:, 1:], int(kv["seed"]), int(kv["d"]))
