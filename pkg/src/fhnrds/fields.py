"""Scalar fields on a truncated box standing in for R^N.

Cell-centered grid on [-L, L]^dim with a choice of boundary closure for the
discrete Laplacian.  All integrals are plain Riemann sums weighted by the
cell measure, so the L^p norms, superlevel-set measures, and truncation
tails used by the diagnostics are mutually consistent by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BOUNDARIES = ("dirichlet0", "neumann0", "periodic")


@dataclass(frozen=True)
class Grid:
    dim: int = 1
    half_width: float = 32.0
    n: int = 1024
    boundary: str = "dirichlet0"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.n < 3:
            raise ValueError("need at least 3 points per axis")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")

    @property
    def spacing(self):
        return 2.0 * self.half_width / self.n

    @property
    def cell_measure(self):
        return self.spacing**self.dim

    @property
    def shape(self):
        return (self.n,) * self.dim

    def axis_coords(self):
        h = self.spacing
        return -self.half_width + (np.arange(self.n) + 0.5) * h

    def coords(self):
        """Cell-center coordinates; shape (n,) in 1-D, (n, n, 2) in 2-D."""
        x = self.axis_coords()
        if self.dim == 1:
            return x
        return np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1)


class ScalarField:
    """Grid sample of a real function; finite values only."""

    __slots__ = ("grid", "values")

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        self.grid = grid
        self.values = values

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid, fn):
        x = grid.coords()
        if grid.dim == 1:
            return cls(grid, fn(x))
        return cls(grid, fn(x[..., 0], x[..., 1]))

    def copy(self):
        return ScalarField(self.grid, self.values.copy())


def _axis_second_diff(v, axis, boundary):
    if boundary == "periodic":
        return np.roll(v, 1, axis=axis) + np.roll(v, -1, axis=axis) - 2.0 * v
    pad = [(0, 0)] * v.ndim
    pad[axis] = (1, 1)
    mode = "constant" if boundary == "dirichlet0" else "edge"
    vp = np.pad(v, pad, mode=mode)
    lo = [slice(None)] * v.ndim
    hi = [slice(None)] * v.ndim
    lo[axis] = slice(0, -2)
    hi[axis] = slice(2, None)
    return vp[tuple(lo)] + vp[tuple(hi)] - 2.0 * v


def laplacian_values(values, grid):
    """Second-order central Laplacian on raw values (hot path helper)."""
    h2 = grid.spacing**2
    out = _axis_second_diff(values, 0, grid.boundary)
    if grid.dim == 2:
        out = out + _axis_second_diff(values, 1, grid.boundary)
    return out / h2


def laplacian(f):
    return ScalarField(f.grid, laplacian_values(f.values, f.grid))


def norm_p(f, p):
    """(sum |f_i|^p * h^dim)^(1/p)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if p == 2:
        return float(np.sqrt(np.sum(f.values * f.values) * f.grid.cell_measure))
    return float((np.sum(np.abs(f.values) ** p) * f.grid.cell_measure) ** (1.0 / p))


def l2_sq(values, grid):
    v = values.ravel()
    return float(np.dot(v, v) * grid.cell_measure)


def lp_p(values, grid, p):
    """Integral of |f|^p (no root), on raw values."""
    if p == 4:
        v2 = values * values
        v2 = v2.ravel()
        return float(np.dot(v2, v2) * grid.cell_measure)
    return float(np.sum(np.abs(values) ** p) * grid.cell_measure)


def superlevel_measure(f, M):
    """Measure of the set {|f| >= M}."""
    if M <= 0:
        raise ValueError("M must be positive")
    return float(np.count_nonzero(np.abs(f.values) >= M) * f.grid.cell_measure)


def truncate_plus(f, M):
    """(f - M)_+ cellwise."""
    if M <= 0:
        raise ValueError("M must be positive")
    return ScalarField(f.grid, np.maximum(f.values - M, 0.0))


def tail_integral(f, M, p):
    """Integral of |f|^p over the superlevel set {|f| >= M} (M = 0 allowed)."""
    if M < 0:
        raise ValueError("M must be nonnegative")
    if p < 1:
        raise ValueError("p must be >= 1")
    a = np.abs(f.values)
    mask = a >= M
    return float(np.sum(a[mask] ** p) * f.grid.cell_measure)


def inner(f, g):
    return float(np.sum(f.values * g.values) * f.grid.cell_measure)


SNAPSHOT_MAGIC = "FHNFIELD"


def write_snapshot(f, path, time):
    """Text snapshot: `FHNFIELD v1 dim n L time`, one value per line."""
    g = f.grid
    with open(path, "w") as fh:
        fh.write(f"{SNAPSHOT_MAGIC} v1 {g.dim} {g.n} {g.half_width:.17g} {time:.17g}\n")
        for v in f.values.ravel():
            fh.write(f"{v:.17g}\n")


def read_snapshot(path, boundary="dirichlet0"):
    """Returns (ScalarField, time)."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 6 or header[0] != SNAPSHOT_MAGIC or header[1] != "v1":
            raise ValueError(f"{path}: not a field snapshot")
        dim, n = int(header[2]), int(header[3])
        half_width, time = float(header[4]), float(header[5])
        values = np.loadtxt(fh).reshape((n,) * dim)
    grid = Grid(dim=dim, half_width=half_width, n=n, boundary=boundary)
    return ScalarField(grid, values), time


def bump(x, center=0.0, width=1.0):
    """Smooth compactly supported profile, max 1 at the center."""
    r2 = ((np.asarray(x, dtype=float) - center) / width) ** 2
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return out


def bump_field(grid, center=0.0, width=1.0, amplitude=1.0):
    if grid.dim == 1:
        return ScalarField(grid, amplitude * bump(grid.coords(), center, width))
    c = grid.coords()
    vals = amplitude * bump(c[..., 0], center, width) * bump(c[..., 1], center, width)
    return ScalarField(grid, vals)
