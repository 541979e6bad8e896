"""Super-Gaussian mixture terrains.

A terrain is a sum of eight rotated Super-Gaussian bumps over a
16 m x 8 m field (x is the direction of travel). Each bump has eight
parameters and the whole terrain is encoded as a flat genome of 64
numbers, nominally in [-1, 1], that an optimizer can mutate freely.
Out-of-range genomes are clipped, then rescaled affinely into the
physical parameter ranges before the height field is evaluated.

Genome field order per component: (mu_x, mu_y, sigma_x, sigma_y,
p_x, p_y, theta, w), components concatenated. This order is frozen
here and in the genome file format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit, prange

TERRAIN_LENGTH_M = 16.0  # x axis
TERRAIN_WIDTH_M = 8.0  # y axis
N_COMPONENTS = 8
PARAMS_PER_COMPONENT = 8
GENOME_SIZE = N_COMPONENTS * PARAMS_PER_COMPONENT
DEFAULT_RESOLUTION_M = 0.05

# (name, min, max) per genome slot within a component; -1 maps to min, +1 to max
PARAM_BOUNDS = (
    ("mu_x", 6.0, 10.0),
    ("mu_y", 2.0, 6.0),
    ("sigma_x", 0.5, 3.0),
    ("sigma_y", 0.5, 3.0),
    ("p_x", 1.0, 4.0),
    ("p_y", 1.0, 4.0),
    ("theta", -math.pi, math.pi),
    ("w", -0.25, 0.25),
)

# n components times |w| <= 0.25
MAX_ABS_HEIGHT_M = 2.0

# exp(-t) for t above this is < 3e-20, below any tolerance we care about
_EXP_CUTOFF = 45.0


class GenomeError(ValueError):
    """Raised for genomes that violate the encoding contract."""


@dataclass(frozen=True)
class SuperGaussianParams:
    """Physical parameters of one rotated Super-Gaussian bump."""

    mu_x: float
    mu_y: float
    sigma_x: float
    sigma_y: float
    p_x: float
    p_y: float
    theta: float
    w: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.mu_x, self.mu_y, self.sigma_x, self.sigma_y,
             self.p_x, self.p_y, self.theta, self.w],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class Heightmap:
    """Rasterized terrain heights sampled at cell centers.

    ``heights`` is row-major with one row per x index, shape
    (length_m / resolution_m, width_m / resolution_m).
    """

    resolution_m: float
    heights: np.ndarray
    length_m: float = TERRAIN_LENGTH_M
    width_m: float = TERRAIN_WIDTH_M

    def __post_init__(self) -> None:
        nx, ny = self.heights.shape
        if abs(nx * self.resolution_m - self.length_m) > self.resolution_m:
            raise ValueError("heights x-dimension inconsistent with resolution")
        if abs(ny * self.resolution_m - self.width_m) > self.resolution_m:
            raise ValueError("heights y-dimension inconsistent with resolution")


def _as_genome_array(genome) -> np.ndarray:
    arr = np.asarray(genome, dtype=np.float64)
    if arr.ndim != 1 or arr.size != GENOME_SIZE:
        raise GenomeError(f"genome must have exactly {GENOME_SIZE} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise GenomeError(f"genome entry {bad} is not finite")
    return arr


def clip_genome(genome) -> np.ndarray:
    """Clamp every genome entry into [-1, 1]. Idempotent."""
    return np.clip(_as_genome_array(genome), -1.0, 1.0)


def rescale(genome) -> list[SuperGaussianParams]:
    """Map a clipped genome affinely into physical parameter ranges.

    Each slot maps -1 to the slot minimum and +1 to the slot maximum.
    Raises GenomeError for entries outside [-1, 1]; clip first.
    """
    arr = _as_genome_array(genome)
    if np.any(arr < -1.0) or np.any(arr > 1.0):
        bad = int(np.flatnonzero((arr < -1.0) | (arr > 1.0))[0])
        raise GenomeError(f"genome entry {bad} outside [-1, 1]; apply clip_genome first")
    components = []
    for block in arr.reshape(N_COMPONENTS, PARAMS_PER_COMPONENT):
        values = []
        for slot, (_, lo, hi) in zip(block, PARAM_BOUNDS):
            values.append(lo + (slot + 1.0) * 0.5 * (hi - lo))
        components.append(SuperGaussianParams(*values))
    return components


def _params_matrix(components) -> np.ndarray:
    mat = np.stack([c.as_array() for c in components])
    if mat.shape[0] == 0:
        raise ValueError("at least one component is required")
    return np.ascontiguousarray(mat, dtype=np.float64)


@njit(cache=True, inline="always")
def _component_terms(params):  # pragma: no cover - compiled
    # hoist the per-component constants out of the per-cell loops
    n = params.shape[0]
    terms = np.empty((n, 7), dtype=np.float64)
    for i in range(n):
        terms[i, 0] = params[i, 0]  # mu_x
        terms[i, 1] = params[i, 1]  # mu_y
        terms[i, 2] = np.cos(params[i, 6])
        terms[i, 3] = np.sin(params[i, 6])
        terms[i, 4] = 2.0 * params[i, 4]  # x exponent
        terms[i, 5] = 2.0 * params[i, 5]  # y exponent
        terms[i, 6] = params[i, 7]  # w
    return terms


@njit(cache=True, inline="always")
def _point_height(params, terms, x, y):  # pragma: no cover - compiled
    h = 0.0
    for i in range(params.shape[0]):
        dx = x - terms[i, 0]
        dy = y - terms[i, 1]
        ct = terms[i, 2]
        st = terms[i, 3]
        x_rot = ct * dx - st * dy
        y_rot = st * dx + ct * dy
        ux = (abs(x_rot) / params[i, 2]) ** terms[i, 4]
        if ux > _EXP_CUTOFF:
            continue
        uy = (abs(y_rot) / params[i, 3]) ** terms[i, 5]
        if ux + uy > _EXP_CUTOFF:
            continue
        h += terms[i, 6] * np.exp(-ux) * np.exp(-uy)
    return h


@njit(cache=True)
def _mixture_kernel(params, xs, ys, out):  # pragma: no cover - compiled
    terms = _component_terms(params)
    for k in range(xs.size):
        out[k] = _point_height(params, terms, xs[k], ys[k])


@njit(cache=True, parallel=True)
def _mixture_kernel_grid(params, xs, ys, out):  # pragma: no cover - compiled
    # same per-point math as _mixture_kernel, parallel over x rows
    terms = _component_terms(params)
    for ii in prange(xs.size):
        x = xs[ii]
        for jj in range(ys.size):
            out[ii, jj] = _point_height(params, terms, x, ys[jj])


def height_at(components, x: float, y: float) -> float:
    """Evaluate the Super-Gaussian mixture at one point (meters)."""
    params = _params_matrix(components)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("query point must be finite")
    out = np.empty(1, dtype=np.float64)
    _mixture_kernel(params, np.array([float(x)]), np.array([float(y)]), out)
    return float(out[0])


def heights_at(components, xs, ys) -> np.ndarray:
    """Vectorized `height_at` over flat coordinate arrays."""
    params = _params_matrix(components)
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    if xs.shape != ys.shape:
        raise ValueError("xs and ys must have matching shapes")
    out = np.empty(xs.size, dtype=np.float64)
    _mixture_kernel(params, xs.ravel(), ys.ravel(), out)
    return out.reshape(xs.shape)


def grid_shape(resolution_m: float) -> tuple[int, int]:
    if not (resolution_m > 0.0 and math.isfinite(resolution_m)):
        raise ValueError("resolution_m must be positive")
    nx = int(round(TERRAIN_LENGTH_M / resolution_m))
    ny = int(round(TERRAIN_WIDTH_M / resolution_m))
    if nx < 1 or ny < 1:
        raise ValueError("resolution_m too coarse for the terrain extent")
    if abs(nx * resolution_m - TERRAIN_LENGTH_M) > resolution_m:
        raise ValueError("resolution_m must divide the 16 m length to within one cell")
    if abs(ny * resolution_m - TERRAIN_WIDTH_M) > resolution_m:
        raise ValueError("resolution_m must divide the 8 m width to within one cell")
    return nx, ny


def rasterize(genome, resolution_m: float = DEFAULT_RESOLUTION_M) -> Heightmap:
    """Rasterize a genome onto the cell-center grid.

    heights[i][j] samples the field at ((i + 0.5) * res, (j + 0.5) * res),
    after clipping and rescaling the genome.
    """
    nx, ny = grid_shape(resolution_m)
    params = _params_matrix(rescale(clip_genome(genome)))
    xs = (np.arange(nx, dtype=np.float64) + 0.5) * resolution_m
    ys = (np.arange(ny, dtype=np.float64) + 0.5) * resolution_m
    out = np.empty((nx, ny), dtype=np.float64)
    _mixture_kernel_grid(params, xs, ys, out)
    return Heightmap(resolution_m=resolution_m, heights=out)


# ---------------------------------------------------------------------------
# file formats


def save_genome(genome, path) -> None:
    arr = _as_genome_array(genome)
    Path(path).write_text(json.dumps({"params": [float(v) for v in arr]}) + "\n")


def load_genome(path) -> np.ndarray:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GenomeError(f"genome file is not valid JSON at offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(doc, dict) or "params" not in doc:
        raise GenomeError("genome file must be a JSON object with a 'params' array")
    params = doc["params"]
    if not isinstance(params, list) or len(params) != GENOME_SIZE:
        got = len(params) if isinstance(params, list) else type(params).__name__
        raise GenomeError(f"'params' must be an array of {GENOME_SIZE} numbers, got {got}")
    return _as_genome_array(params)


def heightmap_to_csv(heightmap: Heightmap) -> str:
    """Plain-text grid, one row of comma-separated heights per x index."""
    lines = []
    for row in heightmap.heights:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def save_heightmap_csv(heightmap: Heightmap, path) -> None:
    Path(path).write_text(heightmap_to_csv(heightmap))


def load_heightmap_csv(path, resolution_m: float) -> Heightmap:
    rows = []
    for line in Path(path).read_text().splitlines():
        if line:
            rows.append([float(tok) for tok in line.split(",")])
    return Heightmap(resolution_m=resolution_m, heights=np.array(rows, dtype=np.float64))


def save_heightmap_pgm(heightmap: Heightmap, path) -> None:
    """16-bit binary PGM; heights map affinely from [-2, 2] m to [0, 65535]."""
    h = np.clip(heightmap.heights, -MAX_ABS_HEIGHT_M, MAX_ABS_HEIGHT_M)
    scaled = np.rint((h + MAX_ABS_HEIGHT_M) / (2.0 * MAX_ABS_HEIGHT_M) * 65535.0)
    pixels = scaled.astype(">u2")
    nx, ny = pixels.shape
    header = f"P5\n{ny} {nx}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + pixels.tobytes())
