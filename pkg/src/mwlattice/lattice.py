"""Spin-dependent lattice geometry and derived trap parameters.

Converts physical inputs (wavelengths, depth, polarization angle) into the
per-spin potential parameters and Lamb-Dicke parameters that the band solver,
spectroscopy and cooling modules consume.

The two lattice beams are linearly polarized with an angle ``theta`` between
them, equivalent to two circular standing waves delayed by ``2 theta``.  The
"up" spin couples to the sigma+ wave only (at the magic wavelength), the
"down" spin to a weighted mix of both, which makes its contrast, total depth
and well position depend on ``theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from scipy import constants as si

HBAR = si.hbar
KB = si.k

# Cs 6S1/2 clock splitting, exact by definition of the SI second.
_CS_HYPERFINE_HZ = 9_192_631_770.0
_CS_MASS_KG = 132.905451931 * si.atomic_mass


@dataclass(frozen=True)
class AtomConstants:
    """Atomic species inputs: mass and the D-line wavelengths."""

    mass: float               # kg
    d1_wavelength: float      # nm
    d2_wavelength: float      # nm
    hyperfine_splitting: float  # rad/s

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if not self.d1_wavelength >= self.d2_wavelength > 0:
            raise ValueError("require d1_wavelength >= d2_wavelength > 0")


def cesium() -> AtomConstants:
    return AtomConstants(
        mass=_CS_MASS_KG,
        d1_wavelength=894.6,
        d2_wavelength=852.3,
        hyperfine_splitting=2 * math.pi * _CS_HYPERFINE_HZ,
    )


@dataclass(frozen=True)
class LatticeGeometry:
    """Lattice wavelength, depth and polarization configuration.

    ``depth_up`` is the contrast W_up of the spin-up lattice in units of the
    lattice recoil.  The sigma+/sigma- weights seen by the down spin default
    to the magic-wavelength values 1/8 and 7/8 but are configurable so that
    non-magic wavelengths can be modeled.
    """

    lattice_wavelength: float   # nm
    depth_up: float             # E_R
    polarization_angle: float   # rad
    sigma_plus_weight_down: float = 1.0 / 8.0
    sigma_minus_weight_down: float = 7.0 / 8.0

    def __post_init__(self):
        if self.depth_up <= 0:
            raise ValueError("depth_up must be positive")
        if not 0.0 <= self.polarization_angle <= math.pi / 2:
            raise ValueError("polarization_angle must lie in [0, pi/2]")
        if abs(self.sigma_plus_weight_down + self.sigma_minus_weight_down - 1.0) > 1e-12:
            raise ValueError("sigma weights must sum to 1")

    @property
    def spacing(self) -> float:
        """Lattice spacing d = lambda_L / 2, in nm."""
        return self.lattice_wavelength / 2.0

    def with_angle(self, theta: float) -> "LatticeGeometry":
        return replace(self, polarization_angle=theta)

    def with_depth(self, depth_up: float) -> "LatticeGeometry":
        return replace(self, depth_up=depth_up)


@dataclass(frozen=True)
class SpinPotential:
    """One spin state's lattice parameters in the W cos^2 form."""

    contrast: float       # W_s, E_R
    total_depth: float    # U_s^tot, E_R (<= 0)
    center: float         # x_s^0, units of d
    trap_frequency: float  # omega_vib, rad/s, harmonic approximation


@dataclass(frozen=True)
class LambDicke:
    """Spatial and momentum Lamb-Dicke parameters; eta = eta_k + i eta_x."""

    eta_x: float
    eta_k: float

    @property
    def eta(self) -> complex:
        return complex(self.eta_k, self.eta_x)


def recoil_energy(atom: AtomConstants, wavelength_nm: float) -> float:
    """Photon recoil energy hbar^2 k^2 / 2m in joules."""
    k = 2 * math.pi / (wavelength_nm * 1e-9)
    return HBAR**2 * k**2 / (2 * atom.mass)


def trap_frequency(contrast_recoils: float, atom: AtomConstants,
                   lattice_wavelength_nm: float) -> float:
    """Harmonic vibration frequency of a W cos^2 well: (2/hbar) sqrt(W E_R)."""
    er = recoil_energy(atom, lattice_wavelength_nm)
    return 2.0 / HBAR * math.sqrt(contrast_recoils * er * er)


def ground_state_width(atom: AtomConstants, omega_vib: float) -> float:
    """rms width x_0 = sqrt(hbar / (2 m omega)) of the ground state, meters."""
    return math.sqrt(HBAR / (2 * atom.mass * omega_vib))


def magic_wavelength(atom: AtomConstants) -> float:
    """Lattice wavelength at which the up spin sees the sigma+ wave only (nm)."""
    l1, l2 = atom.d1_wavelength, atom.d2_wavelength
    return l2 + (l1 - l2) / (2 * l1 / l2 + 1)


def potentials_from_angle(geom: LatticeGeometry, atom: AtomConstants
                          ) -> tuple[SpinPotential, SpinPotential, float]:
    """Spin potentials and their relative shift for a polarization angle.

    Returns ``(up, down, dx)`` with ``dx = x_up^0 - x_down^0`` in units of d.
    The down-spin lattice is the sum of two cos^2 waves with phases -theta/2
    and +theta/2 and weights ``sigma_plus_weight_down``/``sigma_minus_weight_down``;
    collapsing the sum back to a single cos^2 gives its contrast, total depth
    and (nonlinearly shifted) center.
    """
    theta = geom.polarization_angle
    w_up = geom.depth_up
    wp, wm = geom.sigma_plus_weight_down, geom.sigma_minus_weight_down

    # Sum of the two circular standing waves as one cos^2 of reduced contrast.
    w_down = w_up * math.sqrt(
        math.cos(theta) ** 2 + (wm - wp) ** 2 * math.sin(theta) ** 2
    )
    u_up_tot = -w_up
    u_down_tot = -(w_up + w_down) / 2.0

    # Well centers in units of d (k_L d = pi).  The up lattice center moves
    # linearly with theta; the down center picks up the arctan correction.
    x_up = theta / (2 * math.pi)
    if theta >= math.pi / 2 - 1e-12:
        phi = math.pi / 2  # analytic limit of arctan[(wm-wp) tan(theta)]
    else:
        phi = math.atan((wm - wp) * math.tan(theta))
    x_down = -phi / (2 * math.pi)
    dx = x_up - x_down

    lam = geom.lattice_wavelength
    up = SpinPotential(w_up, u_up_tot, x_up, trap_frequency(w_up, atom, lam))
    down = SpinPotential(w_down, u_down_tot, x_down,
                         trap_frequency(w_down, atom, lam))
    return up, down, dx


def lamb_dicke(dx_nm: float, omega_vib: float, atom: AtomConstants,
               k_opt: float) -> LambDicke:
    """Lamb-Dicke parameters for a shift ``dx_nm`` and photon wavevector ``k_opt``.

    eta_x = dx / (2 x_0) and eta_k = hbar k_opt / (2 p_0) = k_opt x_0 with
    x_0, p_0 the position/momentum rms widths of the motional ground state.
    """
    if dx_nm < 0:
        raise ValueError("dx must be >= 0")
    x0 = ground_state_width(atom, omega_vib)
    eta_x = dx_nm * 1e-9 / (2 * x0)
    eta_k = k_opt * x0
    return LambDicke(eta_x=eta_x, eta_k=eta_k)
