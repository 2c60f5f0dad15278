"""Spatial discretization of C^n ~ R^{2n}: uniform midpoint grids, quadrature, norms.

The box (-R, R)^{2n} is sampled at cell centers -R + (j + 1/2) h, h = 2R/N, so no
node sits on the boundary and quadrature of Gaussian-decaying data is spectrally
accurate.  Node ordering is row-major over the axes (x_1..x_n, y_1..y_n); every
array of samples in the package follows this ordering.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class GridMismatchError(ValueError):
    """Two grid functions that must share a grid do not."""


@dataclass(frozen=True)
class Grid:
    """Uniform midpoint discretization of the box (-R, R)^{2n} in C^n ~ R^{2n}."""

    n: int
    R: float
    N: int

    def __post_init__(self):
        if self.n < 1 or int(self.n) != self.n:
            raise ValueError(f"complex dimension n must be a positive integer, got {self.n}")
        if self.R <= 0:
            raise ValueError(f"box half-width R must be positive, got {self.R}")
        if self.N <= 0 or self.N % 2 != 0:
            raise ValueError(f"points per axis N must be even and positive, got {self.N}")

    @property
    def h(self) -> float:
        return 2.0 * self.R / self.N

    @property
    def ndim(self) -> int:
        return 2 * self.n

    @property
    def num_nodes(self) -> int:
        return self.N ** (2 * self.n)

    @property
    def weight(self) -> float:
        """Quadrature weight per node, h^{2n}."""
        return self.h ** (2 * self.n)

    @cached_property
    def axis(self) -> np.ndarray:
        """1-D midpoint nodes -R + (j + 1/2) h, shared by every axis."""
        return -self.R + (np.arange(self.N) + 0.5) * self.h

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * (2 * self.n)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Flat coordinate arrays, one per axis, in (x_1..x_n, y_1..y_n) order."""
        mesh = np.meshgrid(*([self.axis] * (2 * self.n)), indexing="ij")
        return tuple(m.reshape(-1) for m in mesh)

    @cached_property
    def radius_sq(self) -> np.ndarray:
        """|z|^2 = sum x_j^2 + y_j^2 at every node (flat)."""
        return sum(c * c for c in self.coords)

    def x(self, j: int) -> np.ndarray:
        """Flat x_j coordinate array, j = 1..n."""
        return self.coords[j - 1]

    def y(self, j: int) -> np.ndarray:
        """Flat y_j coordinate array, j = 1..n."""
        return self.coords[self.n + j - 1]


def make_grid(n: int, R: float, N: int) -> Grid:
    """Build a grid; Gaussian-decay data needs N >= 8 and R >= 4 to be representable."""
    grid = Grid(n=n, R=float(R), N=int(N))
    if N < 8:
        raise ValueError(f"N must be at least 8, got {N}")
    if R < 4:
        raise ValueError(f"R must be at least 4, got {R}")
    return grid


@dataclass(frozen=True)
class GridFunction:
    """Complex samples of a function of z on a Grid (one time slice)."""

    grid: Grid
    values: np.ndarray
    meta: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.complex128).reshape(-1)
        object.__setattr__(self, "values", vals)
        if vals.size != self.grid.num_nodes:
            raise ValueError(
                f"value count {vals.size} does not match grid with {self.grid.num_nodes} nodes"
            )
        if not (self.meta or {}).get("allow_nonfinite") and not np.all(np.isfinite(vals.view(np.float64))):
            raise ValueError("grid function contains non-finite samples")

    @property
    def shaped(self) -> np.ndarray:
        """Values reshaped to (N,)*2n, axes ordered (x_1..x_n, y_1..y_n)."""
        return self.values.reshape(self.grid.shape)

    def with_values(self, values: np.ndarray, meta: dict | None = None) -> "GridFunction":
        return GridFunction(self.grid, values, meta if meta is not None else self.meta)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _require_same_grid(self, other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _require_same_grid(self, other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c) -> "GridFunction":
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__


def _require_same_grid(f: GridFunction, g: GridFunction) -> None:
    if f.grid != g.grid:
        raise GridMismatchError(f"grids differ: {f.grid} vs {g.grid}")


def quadrature(f: GridFunction) -> complex:
    """Midpoint quadrature of f over the box: sum of samples times h^{2n}."""
    return complex(f.values.sum() * f.grid.weight)


def inner_product(f: GridFunction, g: GridFunction) -> complex:
    """L^2 pairing <f, g> = integral of f * conj(g); conjugate-linear in g."""
    _require_same_grid(f, g)
    return complex(np.vdot(g.values, f.values) * f.grid.weight)


def lp_norm(f: GridFunction, p: float) -> float:
    """L^p norm by quadrature; p = inf is the max of |f| over nodes."""
    if p == np.inf:
        return float(np.abs(f.values).max(initial=0.0))
    if p < 1:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    a = np.abs(f.values)
    if p == 2:
        return float(np.sqrt((a * a).sum() * f.grid.weight))
    return float(((a**p).sum() * f.grid.weight) ** (1.0 / p))


# ---------------------------------------------------------------------------
# serialization: header line "n,R,N", then one "re,im" line per node in the
# deterministic node order; '#'-prefixed lines before the header carry metadata
# ---------------------------------------------------------------------------

def save_grid_function(f: GridFunction, path: str | Path, header_comments: list[str] | None = None) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for line in header_comments or []:
            fh.write(f"# {line}\n")
        fh.write(f"{f.grid.n},{f.grid.R!r},{f.grid.N}\n")
        re = f.values.real
        im = f.values.imag
        for k in range(f.values.size):
            fh.write(f"{re[k]!r},{im[k]!r}\n")


def load_grid_function(path: str | Path, grid: Grid | None = None) -> GridFunction:
    path = Path(path)
    with path.open() as fh:
        header = None
        rows = []
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line
                continue
            re_s, im_s = line.split(",")
            rows.append(complex(float(re_s), float(im_s)))
    if header is None:
        raise ValueError(f"{path}: missing 'n,R,N' header line")
    n_s, R_s, N_s = header.split(",")
    parsed = Grid(n=int(n_s), R=float(R_s), N=int(N_s))
    if grid is not None and grid != parsed:
        raise GridMismatchError(f"{path}: file grid {parsed} does not match expected {grid}")
    return GridFunction(parsed if grid is None else grid, np.array(rows, dtype=np.complex128))


def save_grid_function_npz(f: GridFunction, path: str | Path, **extra) -> None:
    """Compact binary dump (convenience alongside the CSV interface)."""
    np.savez_compressed(Path(path), n=f.grid.n, R=f.grid.R, N=f.grid.N, values=f.values, **extra)


def load_grid_function_npz(path: str | Path) -> GridFunction:
    data = np.load(Path(path))
    grid = Grid(n=int(data["n"]), R=float(data["R"]), N=int(data["N"]))
    return GridFunction(grid, data["values"])
