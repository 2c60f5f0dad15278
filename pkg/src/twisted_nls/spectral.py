"""Analysis/synthesis in the special Hermite basis, spectral projections, and the
Schrodinger propagator of the twisted Laplacian by two independent routes.

The production propagator is always the diagonal multiplier e^{-it(2|nu|+n)} in
coefficient space (an exact isometry there).  The twisted-convolution kernel
route exists purely as an independent correctness oracle: its prefactor
(4 pi i sin t)^{-n} blows up at t in pi*Z, where only the spectral sum makes
sense.  The kernel constant is evaluated as an integer power of the complex
product 4*pi*i*sin(t), which fixes the branch for either sign of sin t; the
choice is validated against the eigen route at t = pi/2 and 3*pi/2.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid import Grid, GridFunction
from .hermite import as_multi_index, multi_indices, phi_k, special_hermite_planes
from .twisted import twisted_convolve, twisted_convolve_chirp, CONVOLUTION_CAP

PARSEVAL_GATE = 1e-6
KERNEL_TIME_MARGIN = 0.2


class RepresentabilityError(RuntimeError):
    """Data is not representable at the requested truncation order."""


@dataclass(frozen=True)
class SpectralBasis:
    """Special Hermite functions Phi_{mu,nu}, |mu|,|nu| <= K, flattened on a grid."""

    grid: Grid
    K: int
    pairs: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    eigenvalues: np.ndarray      # 2|nu| + n per pair
    matrix: np.ndarray           # (num_pairs, num_nodes)

    @cached_property
    def analysis_matrix(self) -> np.ndarray:
        """Contiguous (num_nodes, num_pairs) conjugate transpose, precomputed so
        per-slice analysis is a single streaming matmul."""
        return np.ascontiguousarray(self.matrix.conj().T)

    @property
    def num_pairs(self) -> int:
        return len(self.pairs)

    def index_of(self, mu, nu) -> int:
        mu = as_multi_index(mu, self.grid.n)
        nu = as_multi_index(nu, self.grid.n)
        return self.pairs.index((mu, nu))

    def gram_defect(self) -> float:
        G = (self.matrix.conj() * self.grid.weight) @ self.matrix.T
        return float(np.abs(G - np.eye(self.num_pairs)).max())


_BASIS_CACHE: dict[tuple, SpectralBasis] = {}


def basis_for(grid: Grid, K: int) -> SpectralBasis:
    """Build (or fetch) the order-K basis on a grid."""
    key = (grid.n, grid.R, grid.N, K)
    basis = _BASIS_CACHE.get(key)
    if basis is None:
        basis = _build_basis(grid, K)
        _BASIS_CACHE[key] = basis
    return basis


def clear_basis_cache() -> None:
    _BASIS_CACHE.clear()


def _build_basis(grid: Grid, K: int) -> SpectralBasis:
    planes = special_hermite_planes(grid, K)  # (K+1, K+1, N, N) per-axis factors
    idxs = multi_indices(grid.n, K)
    pairs = tuple((mu, nu) for mu in idxs for nu in idxs)
    eigs = np.array([2 * sum(nu) + grid.n for _, nu in pairs], dtype=float)
    n, N = grid.n, grid.N
    if n == 1:
        mat = np.array([planes[mu[0], nu[0]].reshape(-1) for mu, nu in pairs])
    else:
        perm = [2 * j for j in range(n)] + [2 * j + 1 for j in range(n)]
        rows = []
        for mu, nu in pairs:
            acc = planes[mu[0], nu[0]]
            for j in range(1, n):
                acc = np.multiply.outer(acc, planes[mu[j], nu[j]])
            rows.append(acc.transpose(perm).reshape(-1))
        mat = np.array(rows)
    return SpectralBasis(grid, K, pairs, eigs, mat)


@dataclass(frozen=True)
class SpectralCoeffs:
    """Coefficients c_{mu,nu} = <f, Phi_{mu,nu}> on the truncated basis, with the
    relative Parseval residual of the analyzed function reported alongside."""

    grid: Grid
    K: int
    c: np.ndarray
    parseval_residual: float

    def copy_with(self, c: np.ndarray) -> "SpectralCoeffs":
        return SpectralCoeffs(self.grid, self.K, np.asarray(c, dtype=np.complex128), self.parseval_residual)

    @property
    def l2_norm(self) -> float:
        return float(np.sqrt((np.abs(self.c) ** 2).sum()))


def analyze(f: GridFunction, K: int) -> SpectralCoeffs:
    """Expand f over the order-K basis; the Parseval residual
    | sum |c|^2 - ||f||_2^2 | / ||f||_2^2 measures what the truncation misses."""
    basis = basis_for(f.grid, K)
    c = (f.values @ basis.analysis_matrix) * f.grid.weight
    l2sq = float((np.abs(f.values) ** 2).sum() * f.grid.weight)
    csq = float((np.abs(c) ** 2).sum())
    residual = abs(csq - l2sq) / l2sq if l2sq > 0 else 0.0
    return SpectralCoeffs(f.grid, K, c, residual)


def synthesize(coeffs: SpectralCoeffs) -> GridFunction:
    """sum c_{mu,nu} Phi_{mu,nu} on the coefficients' grid."""
    basis = basis_for(coeffs.grid, coeffs.K)
    return GridFunction(coeffs.grid, basis.matrix.T @ coeffs.c)


def analyze_batch(values: np.ndarray, grid: Grid, K: int) -> np.ndarray:
    """Coefficients for a stack of flattened slices, shape (m, nodes) -> (m, nb)."""
    basis = basis_for(grid, K)
    return (values @ basis.analysis_matrix) * grid.weight


def synthesize_batch(coeff_rows: np.ndarray, grid: Grid, K: int) -> np.ndarray:
    """Inverse of analyze_batch on exactly band-limited data: (m, nb) -> (m, nodes)."""
    basis = basis_for(grid, K)
    return coeff_rows @ basis.matrix


def parseval_residuals(values: np.ndarray, coeff_rows: np.ndarray, grid: Grid) -> np.ndarray:
    l2sq = (np.abs(values) ** 2).sum(axis=1) * grid.weight
    csq = (np.abs(coeff_rows) ** 2).sum(axis=1)
    out = np.zeros(l2sq.shape)
    nz = l2sq > 0
    out[nz] = np.abs(csq[nz] - l2sq[nz]) / l2sq[nz]
    return out


def require_representable(f: GridFunction, K: int, gate: float = PARSEVAL_GATE,
                          what: str = "data") -> SpectralCoeffs:
    coeffs = analyze(f, K)
    if coeffs.parseval_residual > gate:
        raise RepresentabilityError(
            f"{what} is not representable at order K={K}: Parseval residual "
            f"{coeffs.parseval_residual:.3e} exceeds the gate {gate:.1e}"
        )
    return coeffs


def project_k(f: GridFunction, k: int, method: str = "galerkin", K: int | None = None,
              cap: int = CONVOLUTION_CAP) -> GridFunction:
    """Spectral projection onto the eigenvalue 2k+n, either by zeroing all other
    coefficients (galerkin) or by (2 pi)^{-n} (f x phi_k) twisted convolution."""
    if k < 0:
        raise ValueError("projection level k must be >= 0")
    if method == "galerkin":
        order = K if K is not None else max(k + 4, 8)
        coeffs = analyze(f, order)
        basis = basis_for(f.grid, order)
        keep = np.array([sum(nu) == k for _, nu in basis.pairs])
        return synthesize(coeffs.copy_with(np.where(keep, coeffs.c, 0.0)))
    if method == "laguerre":
        conv = twisted_convolve(f, phi_k(k, f.grid), cap=cap)
        return conv * ((2 * np.pi) ** -f.grid.n)
    raise ValueError(f"unknown projection method {method!r}")


def propagator_phases(eigenvalues: np.ndarray, t) -> np.ndarray:
    """Diagonal multipliers e^{-i t (2|nu|+n)} (t may be an array)."""
    t = np.asarray(t, dtype=float)
    return np.exp(-1j * np.multiply.outer(t, eigenvalues))


def propagate_coeffs(coeffs: SpectralCoeffs, t: float) -> SpectralCoeffs:
    """Exact propagator in coefficient space (an isometry)."""
    basis = basis_for(coeffs.grid, coeffs.K)
    return coeffs.copy_with(coeffs.c * np.exp(-1j * t * basis.eigenvalues))


def propagate_eigen(f, t: float, K: int = 8) -> GridFunction:
    """e^{-it L} f by the spectral sum; f may be a GridFunction (gated through
    the Parseval residual) or ready-made SpectralCoeffs."""
    if isinstance(f, SpectralCoeffs):
        coeffs = f
    else:
        coeffs = require_representable(f, K, what="propagator input")
    return synthesize(propagate_coeffs(coeffs, t))


def schrodinger_kernel_parameters(t: float, n: int) -> tuple[complex, float]:
    """(prefactor, gamma) with K_{it}(z) = prefactor * e^{i gamma |z|^2}:
    prefactor = (4 pi i sin t)^{-n} (integer power of the complex product, which
    fixes the branch for either sign of sin t), gamma = cot(t)/4."""
    s = np.sin(t)
    pref = complex((4 * np.pi * 1j * s) ** (-n))
    return pref, float(np.cos(t) / s / 4.0)


def propagate_kernel(f: GridFunction, t: float, oversample: int = 4,
                     cap: int = CONVOLUTION_CAP) -> GridFunction:
    """e^{-it L} f = f x K_{it} by direct twisted convolution (oracle route).

    Requires dist(t, pi Z) >= 0.2: the kernel prefactor diverges like
    (sin t)^{-n} at the singular times, where only the spectral route works.
    """
    dist = abs(t / np.pi - round(t / np.pi)) * np.pi
    if dist < KERNEL_TIME_MARGIN:
        raise ValueError(
            f"t={t} is within {KERNEL_TIME_MARGIN} of a singular time (multiple of pi); "
            "the kernel route is numerically hopeless there — use the spectral propagator"
        )
    pref, gamma = schrodinger_kernel_parameters(t, f.grid.n)
    return twisted_convolve_chirp(f, pref, gamma, oversample=oversample, cap=cap)


# ---------------------------------------------------------------------------
# admissible exponent pairs
# ---------------------------------------------------------------------------

def is_admissible(q: float, p: float, n: int) -> tuple[bool, str]:
    """Check 2 < q < inf and 1/q >= n (1/2 - 1/p) >= 0, with the reason."""
    if not np.isfinite(q) or q <= 2:
        return False, f"q must exceed 2 (and be finite); got q={q}"
    if p < 2:
        return False, f"1/2 - 1/p must be >= 0, i.e. p >= 2; got p={p}"
    lhs = 1.0 / q
    rhs = n * (0.5 - 1.0 / p)
    if lhs < rhs - 1e-15:
        return False, f"1/q = {lhs:.6g} < n(1/2 - 1/p) = {rhs:.6g}"
    return True, "admissible"


@dataclass(frozen=True)
class AdmissiblePair:
    """A time/space exponent pair (q, p) satisfying the admissibility window."""

    q: float
    p: float
    n: int = 1

    def __post_init__(self):
        ok, reason = is_admissible(self.q, self.p, self.n)
        if not ok:
            raise ValueError(f"(q={self.q}, p={self.p}) inadmissible for n={self.n}: {reason}")

    @property
    def q_conj(self) -> float:
        return self.q / (self.q - 1.0)

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0) if self.p != np.inf else 1.0

    @property
    def theta(self) -> float:
        """The local-time gain exponent (q - q') / (q q')."""
        return (self.q - self.q_conj) / (self.q * self.q_conj)

    @property
    def timescale_exponent(self) -> float:
        """q q' / (q - q'), the exponent converting the contraction budget to T0."""
        return (self.q * self.q_conj) / (self.q - self.q_conj)
