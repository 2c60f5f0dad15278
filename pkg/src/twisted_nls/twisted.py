"""Twisted differential operators L_j = d/dx_j + i y_j/2, M_j = d/dy_j - i x_j/2,
the twisted Laplacian, twisted convolution, and the first-order magnetic Sobolev
and mixed space-time norms built from them.

Derivatives are 6th-order centered finite differences with one-sided 6th-order
stencils in the 3 boundary layers (flagged in metadata as lower-accuracy).  The
stencil choice keeps the operators independent of the eigenbasis, so eigenvalue
and commutation checks against the spectral propagator are genuine cross-checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import Grid, GridFunction, lp_norm, _require_same_grid

STENCIL_ORDER = 6
BOUNDARY_LAYERS = 3
CONVOLUTION_CAP = 96  # max N per axis for the O(N^4) direct twisted convolution


# ---------------------------------------------------------------------------
# finite-difference stencils (weights generated by a Vandermonde solve, so the
# one-sided coefficient tables cannot be mistyped)
# ---------------------------------------------------------------------------

def _fd_weights(offsets: tuple[int, ...], deriv: int) -> np.ndarray:
    """Weights w with sum_j w_j f(x + o_j h) = h^deriv f^(deriv)(x) + O(h^{len-deriv})."""
    o = np.array(offsets, dtype=float)
    m = len(o)
    A = np.vander(o, m, increasing=True).T  # A[i, j] = o_j^i
    b = np.zeros(m)
    b[deriv] = math.factorial(deriv)
    return np.linalg.solve(A, b)


@lru_cache(maxsize=None)
def _stencil_rows(deriv: int) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """(centered interior weights, per-boundary-layer (offsets, weights)) at 6th order."""
    half = 3 if deriv == 1 else 3
    interior = _fd_weights(tuple(range(-half, half + 1)), deriv)
    npts = 7 if deriv == 1 else 8
    rows = []
    for layer in range(BOUNDARY_LAYERS):
        offs = tuple(range(-layer, npts - layer))
        rows.append((np.array(offs), _fd_weights(offs, deriv)))
    return interior, rows


def _differentiate(values: np.ndarray, axis: int, h: float, deriv: int) -> np.ndarray:
    """Apply the 6th-order stencil along one axis of an ndarray."""
    f = np.moveaxis(values, axis, 0)
    out = np.empty_like(f)
    interior, rows = _stencil_rows(deriv)
    half = 3
    acc = interior[0] * f[: -2 * half]
    for i, w in enumerate(interior[1:], start=1):
        end = f.shape[0] - 2 * half + i
        acc = acc + w * f[i:end]
    out[half:-half] = acc
    for layer, (offs, w) in enumerate(rows):
        lo = sum(wj * f[layer + oj] for oj, wj in zip(offs, w))
        out[layer] = lo
        hi = sum(wj * f[f.shape[0] - 1 - layer - oj] for oj, wj in zip(offs, w))
        out[f.shape[0] - 1 - layer] = hi if deriv % 2 == 0 else -hi
    out /= h**deriv
    return np.moveaxis(out, 0, axis)


def _deriv_meta(f: GridFunction) -> dict:
    meta = dict(f.meta or {})
    meta["boundary_layers"] = BOUNDARY_LAYERS
    meta["stencil_order"] = STENCIL_ORDER
    return meta


def derivative(f: GridFunction, axis: int, deriv: int = 1) -> GridFunction:
    """d^deriv/dw^deriv along a flat axis index (0..2n-1) by finite differences."""
    vals = _differentiate(f.shaped, axis, f.grid.h, deriv).reshape(-1)
    return GridFunction(f.grid, vals, _deriv_meta(f))


def apply_Lj(f: GridFunction, j: int = 1) -> GridFunction:
    """L_j f = (d/dx_j + i y_j / 2) f, j = 1..n."""
    _check_axis(f.grid, j)
    dx = _differentiate(f.shaped, j - 1, f.grid.h, 1).reshape(-1)
    return GridFunction(f.grid, dx + 0.5j * f.grid.y(j) * f.values, _deriv_meta(f))


def apply_Mj(f: GridFunction, j: int = 1) -> GridFunction:
    """M_j f = (d/dy_j - i x_j / 2) f, j = 1..n."""
    _check_axis(f.grid, j)
    dy = _differentiate(f.shaped, f.grid.n + j - 1, f.grid.h, 1).reshape(-1)
    return GridFunction(f.grid, dy - 0.5j * f.grid.x(j) * f.values, _deriv_meta(f))


def _check_axis(grid: Grid, j: int) -> None:
    if not 1 <= j <= grid.n:
        raise ValueError(f"axis j must be in 1..{grid.n}, got {j}")


def apply_twisted_laplacian(f: GridFunction) -> GridFunction:
    """-Delta f + |z|^2 f / 4 - i sum_j (x_j d/dy_j - y_j d/dx_j) f."""
    grid = f.grid
    shaped = f.shaped
    n = grid.n
    lap = np.zeros_like(shaped)
    for ax in range(2 * n):
        lap += _differentiate(shaped, ax, grid.h, 2)
    rot = np.zeros(grid.num_nodes, dtype=np.complex128)
    for j in range(1, n + 1):
        dyj = _differentiate(shaped, n + j - 1, grid.h, 1).reshape(-1)
        dxj = _differentiate(shaped, j - 1, grid.h, 1).reshape(-1)
        rot += grid.x(j) * dyj - grid.y(j) * dxj
    vals = -lap.reshape(-1) + 0.25 * grid.radius_sq * f.values - 1j * rot
    return GridFunction(grid, vals, _deriv_meta(f))


# ---------------------------------------------------------------------------
# magnetic Sobolev report and mixed space-time norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SobolevReport:
    """Per-operator L^p norms entering the first-order magnetic Sobolev norm."""

    base: float
    lj: tuple[float, ...]
    mj: tuple[float, ...]

    @property
    def norm(self) -> float:
        return max((self.base, *self.lj, *self.mj))


def sobolev_norm(f: GridFunction, p: float = 2) -> SobolevReport:
    """max{ ||f||_p, ||L_j f||_p, ||M_j f||_p } with its constituents."""
    lj = tuple(lp_norm(apply_Lj(f, j), p) for j in range(1, f.grid.n + 1))
    mj = tuple(lp_norm(apply_Mj(f, j), p) for j in range(1, f.grid.n + 1))
    return SobolevReport(lp_norm(f, p), lj, mj)


@dataclass(frozen=True)
class SpaceTimeFunction:
    """Grid functions on the uniform time lattice t0 + m*dt, m = -Mt..Mt."""

    grid: Grid
    t0: float
    T: float
    values: np.ndarray  # (2*Mt+1, num_nodes) complex

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.complex128)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 2 or vals.shape[1] != self.grid.num_nodes:
            raise ValueError("values must have shape (2*Mt+1, num_nodes)")
        if vals.shape[0] % 2 != 1 or vals.shape[0] < 3:
            raise ValueError("time lattice must have an odd node count >= 3")
        if self.T <= 0:
            raise ValueError("half-width T must be positive")

    @property
    def Mt(self) -> int:
        return (self.values.shape[0] - 1) // 2

    @property
    def dt(self) -> float:
        return self.T / self.Mt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + (np.arange(-self.Mt, self.Mt + 1)) * self.dt

    def slice(self, m: int) -> GridFunction:
        """Slice at lattice index m counted from the left end (0..2Mt)."""
        return GridFunction(self.grid, self.values[m])

    @property
    def center_index(self) -> int:
        return self.Mt

    @classmethod
    def from_slices(cls, slices: list[GridFunction], t0: float, T: float) -> "SpaceTimeFunction":
        grid = slices[0].grid
        for s in slices[1:]:
            _require_same_grid(slices[0], s)
        return cls(grid, t0, T, np.stack([s.values for s in slices]))


def _time_weights(nt: int, dt: float) -> np.ndarray:
    """Lattice time quadrature: trapezoid weights (half at the ends), total 2T."""
    w = np.full(nt, dt)
    w[0] = w[-1] = dt / 2
    return w


def mixed_norm(u: SpaceTimeFunction, p: float, q: float) -> float:
    """L^q-in-time of the L^p-in-space norms over [t0-T, t0+T]; q = inf is the max."""
    slice_norms = np.array([lp_norm(u.slice(m), p) for m in range(u.values.shape[0])])
    return _time_reduce(slice_norms, q, u.dt)


def mixed_sobolev_norm(u: SpaceTimeFunction, p: float, q: float) -> float:
    """Same, with the first-order magnetic Sobolev norm per slice."""
    slice_norms = np.array([sobolev_norm(u.slice(m), p).norm for m in range(u.values.shape[0])])
    return _time_reduce(slice_norms, q, u.dt)


def _time_reduce(slice_norms: np.ndarray, q: float, dt: float) -> float:
    if q == np.inf:
        return float(slice_norms.max())
    if q < 1:
        raise ValueError(f"q must be >= 1 or inf, got {q}")
    w = _time_weights(slice_norms.size, dt)
    return float(((slice_norms**q) * w).sum() ** (1.0 / q))


@dataclass(frozen=True)
class GradientBoundReport:
    """Pointwise check of |d|u|/dx_j| <= |L_j u| (and the M_j analogue)."""

    max_violation: float
    nodes_checked: int
    threshold: float


def gradient_abs_inequality(u: GridFunction, rel_threshold: float = 1e-8) -> GradientBoundReport:
    """Max over interior nodes with |u| > rel_threshold * max|u| of the excess
    max(|D_{x_j}|u|| - |L_j u|, |D_{y_j}|u|| - |M_j u|, 0), all axes."""
    grid = u.grid
    absu = GridFunction(grid, np.abs(u.values).astype(np.complex128))
    cutoff = rel_threshold * np.abs(u.values).max(initial=0.0)
    interior = np.ones(grid.shape, dtype=bool)
    b = BOUNDARY_LAYERS
    for ax in range(2 * grid.n):
        sl = [slice(None)] * 2 * grid.n
        sl[ax] = slice(0, b)
        interior[tuple(sl)] = False
        sl[ax] = slice(-b, None)
        interior[tuple(sl)] = False
    mask = interior.reshape(-1) & (np.abs(u.values) > cutoff)
    worst = 0.0
    for j in range(1, grid.n + 1):
        d_abs_x = np.abs(_differentiate(absu.shaped, j - 1, grid.h, 1).reshape(-1))
        d_abs_y = np.abs(_differentiate(absu.shaped, grid.n + j - 1, grid.h, 1).reshape(-1))
        lj = np.abs(apply_Lj(u, j).values)
        mj = np.abs(apply_Mj(u, j).values)
        if mask.any():
            worst = max(
                worst,
                float(np.maximum(d_abs_x - lj, 0.0)[mask].max(initial=0.0)),
                float(np.maximum(d_abs_y - mj, 0.0)[mask].max(initial=0.0)),
            )
    return GradientBoundReport(worst, int(mask.sum()), float(cutoff))


# ---------------------------------------------------------------------------
# twisted convolution (n=1, direct O(N^4) summation; the independent oracle
# against the spectral propagator, never the production path)
# ---------------------------------------------------------------------------

_MIDPOINT_W = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0  # 4th-order half-cell interpolation


def _difference_table(shaped: np.ndarray, N: int) -> np.ndarray:
    """f interpolated at the (2N-1)^2 lattice of node differences m*h (which sit
    exactly halfway between samples); zero outside the box."""
    pad = np.zeros((N + 4, N + 4), dtype=np.complex128)
    pad[2:-2, 2:-2] = shaped
    m = np.arange(-(N - 1), N)
    base = m + N // 2 + 1  # pad index of the left neighbor sample
    idxs = [np.clip(base + o, 0, N + 3) for o in (-1, 0, 1, 2)]
    out = np.zeros((m.size, m.size), dtype=np.complex128)
    for a, wa in zip(idxs, _MIDPOINT_W):
        row = np.zeros_like(out)
        for b, wb in zip(idxs, _MIDPOINT_W):
            row += wb * pad[np.ix_(a, b)]
        out += wa * row
    return out


def _check_convolution_grid(grid: Grid, cap: int) -> None:
    if grid.n != 1:
        raise NotImplementedError("direct twisted convolution is implemented for n=1 only")
    if grid.N > cap:
        raise ValueError(
            f"N={grid.N} exceeds the twisted-convolution cap {cap}; "
            "use a reduced-resolution grid for the convolution oracle"
        )


def twisted_convolve(f: GridFunction, g: GridFunction, cap: int = CONVOLUTION_CAP) -> GridFunction:
    """(f x g)(z) = sum_w f(z-w) g(w) e^{(i/2) Im(z conj(w))} h^2 over grid nodes w,
    with f at the off-lattice differences z-w interpolated (4th-order midpoint
    scheme) and treated as 0 outside the box."""
    _require_same_grid(f, g)
    grid = f.grid
    _check_convolution_grid(grid, cap)
    N = grid.N
    ax = grid.axis
    F = _difference_table(f.shaped, N)
    G = g.shaped
    out = np.empty((N, N), dtype=np.complex128)
    idx = np.arange(N)
    phase_u = np.exp(0.5j * np.outer(ax, ax))    # [b, c] = e^{i y_b u_c / 2}
    phase_v = np.exp(-0.5j * np.outer(ax, ax))   # [a, d] = e^{-i x_a v_d / 2}
    ac = idx[:, None] - idx[None, :] + N - 1
    for b in range(N):
        bd = b - idx + N - 1
        Fsub = F[ac[:, :, None], bd[None, None, :]]
        T = G * phase_u[b][:, None]
        S = np.einsum("acd,cd->ad", Fsub, T)
        out[:, b] = (S * phase_v).sum(axis=1)
    return GridFunction(grid, out.reshape(-1) * grid.weight)


def _refined_values(shaped: np.ndarray, N: int, S: int) -> np.ndarray:
    """Samples interpolated onto the S-fold refined midpoint lattice of the same
    box (separable 4-point Lagrange interpolation; exact copy at S=1)."""
    pos = (np.arange(S * N) + 0.5) / S - 0.5  # refined nodes in sample-lattice units
    j0 = np.floor(pos).astype(int)
    frac = pos - j0
    weights = []
    for off in (-1, 0, 1, 2):
        wj = np.ones_like(frac)
        for other in (-1, 0, 1, 2):
            if other != off:
                wj = wj * (frac - other) / (off - other)
        weights.append(wj)
    pad = np.zeros((N + 4, N + 4), dtype=np.complex128)
    pad[2:-2, 2:-2] = shaped
    rows = np.zeros((S * N, N + 4), dtype=np.complex128)
    for off, wj in zip((-1, 0, 1, 2), weights):
        rows += wj[:, None] * pad[np.clip(j0 + off + 2, 0, N + 3), :]
    out = np.zeros((S * N, S * N), dtype=np.complex128)
    for off, wj in zip((-1, 0, 1, 2), weights):
        out += wj[None, :] * rows[:, np.clip(j0 + off + 2, 0, N + 3)]
    return out


def twisted_convolve_chirp(f: GridFunction, prefactor: complex, gamma: float,
                           oversample: int = 4, cap: int = CONVOLUTION_CAP) -> GridFunction:
    """f x K for the chirp kernel K(z) = prefactor * e^{i gamma |z|^2}.

    Uses the substitution w -> z - w' in the twisted-convolution integral,

        (f x K)(z) = int f(w') K(z - w') e^{-(i/2) Im(z conj(w'))} dw',

    which puts the quadrature support exactly on f's own box (no truncation
    outside it, where f is taken to be 0), evaluates the kernel analytically at
    the off-lattice points z - w', and refines the w'-quadrature `oversample`-
    fold per axis because the kernel's quadratic phase is too oscillatory for
    the node-rate midpoint sum at the capped resolutions.  The chirp separates
    per axis, so each output column is two matrix products."""
    grid = f.grid
    _check_convolution_grid(grid, cap)
    S = int(oversample)
    if S < 1:
        raise ValueError("oversample must be a positive integer")
    N = grid.N
    delta = grid.h / S
    sub = -grid.R + (np.arange(S * N) + 0.5) * delta
    F = _refined_values(f.shaped, N, S)                      # f(w') on the refined lattice
    ax = grid.axis
    # x-chirp e^{i gamma (x_a - u')^2} and the twist halves
    C = np.exp(1j * gamma * (ax[:, None] - sub[None, :]) ** 2)   # (a, c')
    E2 = np.exp(0.5j * np.outer(sub, ax))                        # (d', a) = e^{i v' x_a / 2}
    out = np.empty((N, N), dtype=np.complex128)
    for b in range(N):
        col_b = np.exp(1j * gamma * (ax[b] - sub) ** 2)          # (d',) y-chirp
        inner = F @ (E2 * col_b[:, None])                        # (c', a)
        t_b = np.exp(-0.5j * ax[b] * sub)                        # (c',) twist
        out[:, b] = (C * inner.T) @ t_b
    return GridFunction(grid, out.reshape(-1) * (prefactor * delta * delta))
