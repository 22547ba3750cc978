"""Plane-wave band structure of the cos^2 lattice and real Wannier states.

The single-well potential W cos^2(k_L x) is solved in the frame centered on a
well, i.e. as W sin^2(k_L x) = W/2 - (W/4)(e^{2i k_L x} + c.c.), which keeps
the constant offset so absolute level positions feed total-depth bookkeeping.
Units: energies in E_R, wavevectors in k_L (so the lattice spacing is d = pi
and reciprocal vectors are 2).

Bloch functions are expanded as psi_{n,k}(x) = sum_q a_{n,q}(k) e^{i(k+2q)x}.
Eigenvector phases are fixed per (n, k) so that the Wannier states

    w_{n,r}(x) = N_k^{-1/2} sum_k e^{-i k r pi} psi_{n,k}(x)

are real with parity (-1)^n about the well center.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy.linalg import eigh_tridiagonal


class BandSolverError(RuntimeError):
    """Raised when the plane-wave diagonalization fails to converge."""


def default_q_cutoff(depth: float) -> int:
    return max(16, math.ceil(2 * math.sqrt(max(depth, 1.0))) + 8)


@dataclass(frozen=True)
class BlochSpectrum:
    """Fourier coefficients and band energies of one lattice depth.

    coefficients[j, n, i] is a_{n, q_i}(k_j) with q_i = i - q_cutoff;
    energies[j, n] is eps_n(k_j) in E_R, offset retained (potential >= 0).
    """

    depth: float
    n_bands: int
    k_grid: np.ndarray          # (N_k,), units of k_L, symmetric offset grid
    q_cutoff: int
    coefficients: np.ndarray    # (N_k, n_bands, 2*q_cutoff+1), complex
    energies: np.ndarray        # (N_k, n_bands), E_R

    @property
    def q_values(self) -> np.ndarray:
        return np.arange(-self.q_cutoff, self.q_cutoff + 1)

    def plane_wavevectors(self) -> np.ndarray:
        """kappa[j, i] = k_j + 2 q_i, units of k_L."""
        return self.k_grid[:, None] + 2.0 * self.q_values[None, :]

    def band_energy(self, n: int) -> float:
        """BZ-averaged energy of band n (the vibrational level eps_n)."""
        return float(self.energies[:, n].mean())

    def compatible_grid(self, other: "BlochSpectrum") -> bool:
        return (self.q_cutoff == other.q_cutoff
                and self.k_grid.shape == other.k_grid.shape
                and np.allclose(self.k_grid, other.k_grid))


@dataclass(frozen=True)
class WannierState:
    """One band's localized state at a lattice site."""

    spectrum: BlochSpectrum
    band: int
    site: int

    def __call__(self, x):
        """Evaluate w_{n,r}(x) at positions x (units of 1/k_L).

        Normalized so that the integral of |w|^2 dx over the line is 1.
        """
        x = np.asarray(x, dtype=float)
        spec = self.spectrum
        kappa = spec.plane_wavevectors().ravel()             # (N_k * N_q,)
        coef = spec.coefficients[:, self.band, :].ravel()
        norm = spec.k_grid.size * math.sqrt(math.pi)
        # w(x) = (N_k sqrt(d))^{-1} sum_{k,q} a e^{i kappa (x - r d)}; the
        # e^{-i k r d} site phase is absorbed since e^{i 2 q r pi} = 1.
        xr = np.atleast_1d(x) - self.site * math.pi
        w = np.empty(xr.shape, dtype=complex)
        chunk = max(1, 2_000_000 // kappa.size)
        for i in range(0, xr.size, chunk):
            block = xr[i:i + chunk]
            w[i:i + chunk] = np.exp(1j * np.multiply.outer(block, kappa)) @ coef
        w = w / norm
        if np.isscalar(x) or np.ndim(x) == 0:
            w = w[0]
        return np.real_if_close(w, tol=1e6)


def _solve_single_k(k: float, depth: float, n_bands: int, q_cutoff: int):
    q = np.arange(-q_cutoff, q_cutoff + 1)
    diag = (k + 2.0 * q) ** 2 + depth / 2.0
    off = np.full(2 * q_cutoff, -depth / 4.0)
    vals, vecs = eigh_tridiagonal(diag, off, select="i",
                                  select_range=(0, n_bands - 1))
    return vals, vecs.T  # vecs[n, i]


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    """Apply the reality/parity phase convention to real eigenvectors.

    Even bands: sum_q a_q carries the sign (-1)^(n/2); odd bands: coefficients
    are -i times a real vector whose sum_q sign(q) a_q carries the sign
    (-1)^((n-1)/2).  This makes the Wannier functions real with parity (-1)^n
    about the well center and matches the harmonic-oscillator ladder phases
    (even wavefunctions alternate sign at the center every two levels), so
    Franck-Condon signs agree with displacement-operator matrix elements.
    """
    n_bands, n_q = vecs.shape
    q = np.arange(n_q) - (n_q - 1) // 2
    out = np.empty_like(vecs, dtype=complex)
    for n in range(n_bands):
        v = vecs[n]
        if n % 2 == 0:
            s = np.sum(v)
        else:
            s = np.sum(np.sign(q) * v)
        want = -1.0 if (n // 2) % 2 else 1.0
        sign = want if s >= 0 else -want
        out[n] = (sign * v) if n % 2 == 0 else (-1j * sign * v)
    return out


def solve_bands(depth: float, n_bands: int = 16, k_points: int = 64,
                q_cutoff: int | None = None,
                residual_tol: float = 1e-9) -> BlochSpectrum:
    """Diagonalize the central equation for a lattice of the given depth.

    The k grid is symmetric about zero and excludes the zone boundary
    (k_j = -1 + (2j+1)/N_k), so every k has a -k partner and the phase-fixed
    Wannier states come out real.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if q_cutoff is None:
        q_cutoff = default_q_cutoff(depth)
    if n_bands > 2 * q_cutoff + 1:
        raise ValueError("n_bands exceeds plane-wave basis size")

    k_grid = -1.0 + (2.0 * np.arange(k_points) + 1.0) / k_points
    n_q = 2 * q_cutoff + 1
    coeffs = np.empty((k_points, n_bands, n_q), dtype=complex)
    energies = np.empty((k_points, n_bands))
    q = np.arange(-q_cutoff, q_cutoff + 1)
    for j, k in enumerate(k_grid):
        vals, vecs = _solve_single_k(k, depth, n_bands, q_cutoff)
        # Residual check against the full operator.
        diag = (k + 2.0 * q) ** 2 + depth / 2.0
        for n in range(n_bands):
            v = vecs[n]
            hv = diag * v
            hv[1:] += -depth / 4.0 * v[:-1]
            hv[:-1] += -depth / 4.0 * v[1:]
            res = np.linalg.norm(hv - vals[n] * v)
            if res > residual_tol * max(1.0, abs(vals[n])):
                raise BandSolverError(
                    f"eigen-residual {res:.2e} above tolerance at band {n}, k={k:.4f}")
        energies[j] = vals
        coeffs[j] = _fix_phases(vecs)
    return BlochSpectrum(depth=float(depth), n_bands=n_bands, k_grid=k_grid,
                         q_cutoff=q_cutoff, coefficients=coeffs,
                         energies=energies)


def wannier(spectrum: BlochSpectrum, band: int, site: int = 0) -> WannierState:
    if band >= spectrum.n_bands:
        raise ValueError("band index out of range")
    return WannierState(spectrum=spectrum, band=band, site=site)


def wannier_overlap(a: WannierState, b: WannierState) -> float:
    """<a|b> from the plane-wave coefficients (same spectrum grid required)."""
    if not a.spectrum.compatible_grid(b.spectrum):
        raise ValueError("mismatched spectra grids")
    ka = a.spectrum.k_grid
    phase = np.exp(1j * ka * (a.site - b.site) * math.pi)
    inner = np.einsum("ki,ki->k", np.conj(a.spectrum.coefficients[:, a.band, :]),
                      b.spectrum.coefficients[:, b.band, :])
    val = np.sum(phase * inner) / ka.size
    return float(np.real(val))


@lru_cache(maxsize=64)
def _cached_bands(depth: float, n_bands: int, k_points: int,
                  q_cutoff: int | None) -> BlochSpectrum:
    return solve_bands(depth, n_bands=n_bands, k_points=k_points,
                       q_cutoff=q_cutoff)


def cached_bands(depth: float, n_bands: int = 16, k_points: int = 64,
                 q_cutoff: int | None = None) -> BlochSpectrum:
    """Memoized solve_bands for sweep workloads (spectra are immutable)."""
    return _cached_bands(round(float(depth), 12), n_bands, k_points, q_cutoff)
