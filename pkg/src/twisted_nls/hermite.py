"""Hermite and Laguerre functions, the Fourier-Wigner transform, and the
special Hermite eigenbasis Phi_{mu,nu} = V(h_mu, h_nu).

Hermite values come from the normalized three-term recurrence
    h_{k+1}(x) = x sqrt(2/(k+1)) h_k(x) - sqrt(k/(k+1)) h_{k-1}(x),
    h_0(x) = pi^{-1/4} e^{-x^2/2},
which is stable for every degree this package supports; the Rodrigues-type
product form overflows beyond k ~ 15 and is used only as a low-degree test
oracle.  For |x| large enough that h_0 underflows, all values are exactly 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import Grid, GridFunction

# xi-quadrature used by the Fourier-Wigner transform: midpoint rule on
# [-1.5 R, 1.5 R] with 2N points.  Generous enough that the Gaussian-decaying
# integrand is fully resolved at every supported degree; see the degradation
# test for what happens when this is starved.
XI_RANGE_FACTOR = 1.5
XI_DENSITY_FACTOR = 2

# dedicated 1-D lattice for the table's self-checks (orthonormality, ladder
# relations).  Finer than any production axis so 4th-order differencing of
# degree <= 20 functions stays below the 1e-4 residual budget.
CHECK_HALF_WIDTH = 16.0
CHECK_POINTS = 2048


def hermite_all(kmax: int, x: np.ndarray) -> np.ndarray:
    """All orthonormal Hermite functions h_0..h_kmax at x; shape (kmax+1, *x.shape)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((kmax + 1,) + x.shape)
    out[0] = np.pi ** -0.25 * np.exp(-x * x / 2.0)
    if kmax >= 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for k in range(1, kmax):
        out[k + 1] = x * np.sqrt(2.0 / (k + 1)) * out[k] - np.sqrt(k / (k + 1.0)) * out[k - 1]
    return out


def hermite_eval(k: int, x):
    """Orthonormal Hermite function h_k(x) (scalar or array x)."""
    if k < 0 or int(k) != k:
        raise ValueError(f"degree must be a nonnegative integer, got {k}")
    arr = np.asarray(x, dtype=float)
    val = hermite_all(k, arr)[k]
    return float(val) if np.isscalar(x) or arr.shape == () else val


def laguerre_eval(k: int, a: float, r):
    """Laguerre function L_k^a(r) by the three-term recurrence
    (k+1) L_{k+1}^a = (2k+1+a-r) L_k^a - (k+a) L_{k-1}^a."""
    if k < 0 or int(k) != k:
        raise ValueError(f"degree must be a nonnegative integer, got {k}")
    if a < 0:
        raise ValueError(f"Laguerre parameter must be >= 0, got {a}")
    arr = np.asarray(r, dtype=float)
    prev = np.ones_like(arr)
    if k == 0:
        out = prev
    else:
        cur = 1.0 + a - arr
        for m in range(1, k):
            prev, cur = cur, ((2 * m + 1 + a - arr) * cur - (m + a) * prev) / (m + 1)
        out = cur
    return float(out) if np.isscalar(r) or arr.shape == () else out


@dataclass(frozen=True)
class HermiteTable:
    """h_k values, 0 <= k <= kmax, tabulated on a grid axis and on the
    xi-quadrature abscissae; carries its own fine check lattice."""

    kmax: int
    axis_points: np.ndarray
    axis_values: np.ndarray   # (kmax+1, len(axis_points))
    xi_points: np.ndarray
    xi_values: np.ndarray     # (kmax+1, len(xi_points))

    @classmethod
    def for_grid(cls, grid: Grid, kmax: int = 64) -> "HermiteTable":
        xi = xi_nodes(grid)
        return cls(kmax, grid.axis, hermite_all(kmax, grid.axis), xi, hermite_all(kmax, xi))


def check_lattice() -> tuple[np.ndarray, float]:
    """The module's own 1-D quadrature lattice for Hermite self-checks."""
    h = 2 * CHECK_HALF_WIDTH / CHECK_POINTS
    return -CHECK_HALF_WIDTH + (np.arange(CHECK_POINTS) + 0.5) * h, h


def hermite_orthonormality_defect(kmax: int) -> float:
    """Max entrywise deviation of the 1-D Gram matrix from identity."""
    x, h = check_lattice()
    H = hermite_all(kmax, x)
    G = (H * h) @ H.T
    return float(np.abs(G - np.eye(kmax + 1)).max())


def hermite_ladder_residuals(kmax: int) -> np.ndarray:
    """L^2 residuals of (-d/dx + x) h_k - sqrt(2k+2) h_{k+1}, k = 0..kmax,
    with the derivative taken by 4th-order centered differences on the check
    lattice (endpoint layers excluded from the norm)."""
    x, h = check_lattice()
    H = hermite_all(kmax + 1, x)
    res = np.zeros(kmax + 1)
    for k in range(kmax + 1):
        d = np.zeros_like(x)
        f = H[k]
        d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
        lhs = -d + x * f
        diff = lhs - np.sqrt(2.0 * k + 2.0) * H[k + 1]
        res[k] = np.sqrt((diff[2:-2] ** 2).sum() * h)
    return res


def xi_nodes(grid: Grid) -> np.ndarray:
    """Midpoint xi-quadrature abscissae for the Fourier-Wigner integral."""
    R_xi = XI_RANGE_FACTOR * grid.R
    N_xi = XI_DENSITY_FACTOR * grid.N
    h_xi = 2 * R_xi / N_xi
    return -R_xi + (np.arange(N_xi) + 0.5) * h_xi


def fourier_wigner_plane(f, g, x_axis: np.ndarray, y_axis: np.ndarray,
                         xi: np.ndarray) -> np.ndarray:
    """One coordinate-pair factor of the Fourier-Wigner transform,

        V(f,g)(x,y) = (2 pi)^{-1/2} int e^{i x xi} f(xi + y/2) conj(g)(xi - y/2) dxi,

    on arbitrary rectangular (x, y) axes.  f and g are evaluated directly at
    the shifted abscissae (no interpolation); returns shape (len(x), len(y)).
    """
    h_xi = xi[1] - xi[0]
    fp = np.asarray(f(xi[None, :] + y_axis[:, None] / 2.0))
    gm = np.asarray(g(xi[None, :] - y_axis[:, None] / 2.0))
    W = (fp * np.conj(gm)).astype(np.complex128)        # (ny, nxi)
    E = np.exp(1j * x_axis[:, None] * xi[None, :])      # (nx, nxi)
    return (2 * np.pi) ** -0.5 * h_xi * (E @ W.T)


def fourier_wigner(f, g, grid: Grid) -> GridFunction:
    """V(f, g) sampled on the grid.  For n=1, f and g are callables on 1-D
    arrays; for n>1, sequences of per-axis callables (V separates into a
    product of per-coordinate-pair factors)."""
    fs = (f,) if callable(f) else tuple(f)
    gs = (g,) if callable(g) else tuple(g)
    if len(fs) != grid.n or len(gs) != grid.n:
        raise ValueError(f"need {grid.n} per-axis factors, got {len(fs)} and {len(gs)}")
    xi = xi_nodes(grid)
    planes = [fourier_wigner_plane(fj, gj, grid.axis, grid.axis, xi) for fj, gj in zip(fs, gs)]
    return GridFunction(grid, _tensor_planes(planes, grid))


def _tensor_planes(planes: list[np.ndarray], grid: Grid) -> np.ndarray:
    """Combine per-axis (x_j, y_j) factors into flat node ordering (x_1..x_n, y_1..y_n)."""
    n = grid.n
    out = planes[0]
    if n == 1:
        return out.reshape(-1)
    # build with axes (x_1, y_1, x_2, y_2, ...) then permute to (x..., y...)
    for p in planes[1:]:
        out = np.multiply.outer(out, p)
    perm = [2 * j for j in range(n)] + [2 * j + 1 for j in range(n)]
    return out.transpose(perm).reshape(-1)


def multi_indices(n: int, order_max: int) -> list[tuple[int, ...]]:
    """All multi-indices in n components with |mu| <= order_max, ordered by
    (order, lexicographic) — the deterministic basis enumeration."""
    if n == 1:
        return [(k,) for k in range(order_max + 1)]
    raw: list[tuple[int, ...]] = []

    def rec(prefix: tuple[int, ...], remaining: int, budget: int) -> None:
        if remaining == 0:
            raw.append(prefix)
            return
        for k in range(budget + 1):
            rec(prefix + (k,), remaining - 1, budget - k)

    rec((), n, order_max)
    raw.sort(key=lambda t: (sum(t), t))
    return raw


def as_multi_index(mu, n: int) -> tuple[int, ...]:
    """Normalize an int (n=1) or sequence into a validated multi-index tuple."""
    if np.isscalar(mu):
        mu = (int(mu),)
    mu = tuple(int(m) for m in mu)
    if len(mu) != n:
        raise ValueError(f"multi-index {mu} has {len(mu)} components, expected {n}")
    if any(m < 0 for m in mu):
        raise ValueError(f"multi-index components must be nonnegative, got {mu}")
    return mu


def special_hermite(mu, nu, grid: Grid) -> GridFunction:
    """Phi_{mu,nu} = V(h_mu, h_nu) on the grid (product of 1-D factors for n>1)."""
    mu = as_multi_index(mu, grid.n)
    nu = as_multi_index(nu, grid.n)
    fs = [lambda x, k=m: hermite_all(k, x)[k] for m in mu]
    gs = [lambda x, k=m: hermite_all(k, x)[k] for m in nu]
    return fourier_wigner(fs, gs, grid)


def phi_k(k: int, grid: Grid) -> GridFunction:
    """Laguerre function phi_k(z) = L_k^{n-1}(|z|^2/2) e^{-|z|^2/4}, the kernel of
    the spectral projection onto the eigenvalue 2k+n."""
    r2 = grid.radius_sq
    vals = laguerre_eval(k, grid.n - 1, r2 / 2.0) * np.exp(-r2 / 4.0)
    return GridFunction(grid, vals.astype(np.complex128))


@lru_cache(maxsize=8)
def _plane_table(n: int, R: float, N: int, K: int) -> np.ndarray:
    """All 1-D Fourier-Wigner planes V(h_a, h_b), a,b <= K, on the grid axis.
    Shape (K+1, K+1, N, N); the building block for the bulk basis."""
    grid = Grid(n=n, R=R, N=N)
    xi = xi_nodes(grid)
    ax = grid.axis
    h_xi = xi[1] - xi[0]
    Hp = hermite_all(K, xi[None, :] + ax[:, None] / 2.0)   # (K+1, N, Nxi)
    Hm = hermite_all(K, xi[None, :] - ax[:, None] / 2.0)
    E = np.exp(1j * ax[:, None] * xi[None, :])
    W = (Hp[:, None, :, :] * Hm[None, :, :, :]).reshape((K + 1) ** 2 * N, xi.size)
    V = (E @ W.T).T.reshape(K + 1, K + 1, N, N).transpose(0, 1, 3, 2)
    return V * ((2 * np.pi) ** -0.5 * h_xi)


def special_hermite_planes(grid: Grid, K: int) -> np.ndarray:
    """Cached (K+1, K+1, N, N) table of 1-D planes for the grid's axis."""
    return _plane_table(grid.n, grid.R, grid.N, K)
