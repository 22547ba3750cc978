"""Microwave sideband spectra: pulsed spin-motion dynamics, thermal
inhomogeneous broadening over the transverse Boltzmann distribution, and
nonlinear least-squares extraction of lattice parameters from spectra.

The dynamics live in the rotating frame at the microwave frequency with the
rotating-wave approximation applied (9.2 GHz carrier vs kHz couplings).
Basis ordering: index n = |up, n>, index (n_max+1) + n = |down, n>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares
from scipy.signal import find_peaks
from scipy.special import roots_laguerre

from .lattice import (
    HBAR, KB, AtomConstants, LatticeGeometry, SpinPotential,
    potentials_from_angle, recoil_energy, trap_frequency,
)
from .bands import cached_bands, default_q_cutoff
from .franck_condon import fcf_exact

FOUR_LN2 = 4.0 * math.log(2.0)


@dataclass(frozen=True)
class PulseSpec:
    """Microwave pulse: envelope shape, peak Rabi frequency, detuning.

    envelope: "gaussian" (fwhm seconds), "rectangular" (duration seconds) or
    "adiabatic_chirp" (duration seconds, linear sweep rad/s across the pulse,
    sin^2 amplitude ramp).  ``detuning`` is delta_MW = omega_MW - omega_HS.
    """

    envelope: str
    peak_rabi: float            # rad/s
    detuning: float = 0.0       # rad/s
    fwhm: float = 0.0           # s, gaussian
    duration: float = 0.0       # s, rectangular / chirp
    sweep: float = 0.0          # rad/s, chirp total sweep width

    def __post_init__(self):
        if self.peak_rabi < 0:
            raise ValueError("peak_rabi must be >= 0")
        if self.envelope not in ("gaussian", "rectangular", "adiabatic_chirp"):
            raise ValueError(f"unknown envelope {self.envelope!r}")
        if self.envelope == "gaussian" and self.fwhm <= 0:
            raise ValueError("gaussian pulse needs fwhm > 0")
        if self.envelope != "gaussian" and self.duration <= 0:
            raise ValueError("pulse needs duration > 0")

    @property
    def support(self) -> float:
        """Total simulated pulse length in seconds (finite envelope support)."""
        if self.envelope == "gaussian":
            return 4.0 * self.fwhm
        return self.duration

    def rabi(self, t: float) -> float:
        """Instantaneous Rabi frequency Omega(t) on [0, support]."""
        if self.envelope == "gaussian":
            tc = self.support / 2.0
            return self.peak_rabi * math.exp(-FOUR_LN2 * (t - tc) ** 2 / self.fwhm ** 2)
        if self.envelope == "rectangular":
            return self.peak_rabi
        return self.peak_rabi * math.sin(math.pi * t / self.duration) ** 2

    def instantaneous_detuning(self, t: float) -> float:
        if self.envelope == "adiabatic_chirp":
            return self.detuning + self.sweep * (t / self.duration - 0.5)
        return self.detuning


def gaussian_pi_pulse(fwhm: float, detuning: float = 0.0) -> PulseSpec:
    """Gaussian pulse with unit-coupling area pi (carrier pi-pulse)."""
    peak = math.pi / (fwhm * math.sqrt(math.pi / FOUR_LN2))
    return PulseSpec("gaussian", peak_rabi=peak, detuning=detuning, fwhm=fwhm)


@dataclass
class SpinMotionState:
    """Amplitudes over {|up, n>, |down, n>}, n = 0..n_max."""

    amplitudes: np.ndarray

    @classmethod
    def basis(cls, n_max: int, spin: str, n: int) -> "SpinMotionState":
        amp = np.zeros(2 * (n_max + 1), dtype=complex)
        amp[(0 if spin == "up" else n_max + 1) + n] = 1.0
        return cls(amp)

    @property
    def n_max(self) -> int:
        return self.amplitudes.size // 2 - 1

    def populations(self, spin: str) -> np.ndarray:
        half = self.amplitudes.size // 2
        block = self.amplitudes[:half] if spin == "up" else self.amplitudes[half:]
        return np.abs(block) ** 2

    def transfer_probability(self) -> float:
        """Total population in the down spin."""
        return float(self.populations("down").sum())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class SidebandSystem:
    """Energies and couplings of the truncated spin x vibration space.

    ``energy_up``/``energy_down`` are eps_{s,n}/hbar in rad/s (total depth
    offsets included); ``fc_matrix[n_down, n_up]`` is the Franck-Condon
    overlap entering H_MW.
    """

    energy_up: np.ndarray      # (n_max+1,), rad/s
    energy_down: np.ndarray    # (n_max+1,), rad/s
    fc_matrix: np.ndarray      # (n_max+1, n_max+1)
    shift: float               # units of d
    potential_up: SpinPotential
    potential_down: SpinPotential

    @property
    def n_max(self) -> int:
        return self.energy_up.size - 1

    @property
    def dim(self) -> int:
        return 2 * self.energy_up.size

    def resonance(self, n_up: int, n_down: int) -> float:
        """Microwave detuning of the |up,n> -> |down,n'> transition (rad/s)."""
        return float(self.energy_up[n_up] - self.energy_down[n_down])

    def hamiltonian_parts(self):
        """(diagonal base, up-projector diagonal, coupling matrix).

        Rotating frame: H(t)/hbar = diag(base) - delta * diag(up_proj)
        - Omega(t)/2 * C, with C symmetric carrying the FC couplings.
        """
        m = self.energy_up.size
        base = np.concatenate([self.energy_up, self.energy_down])
        up_proj = np.concatenate([np.ones(m), np.zeros(m)])
        c = np.zeros((2 * m, 2 * m))
        c[:m, m:] = self.fc_matrix.T
        c[m:, :m] = self.fc_matrix
        return base, up_proj, c


def build_system(geom: LatticeGeometry, atom: AtomConstants, n_max: int = 15,
                 k_points: int = 64, q_cutoff: int | None = None,
                 depth_scale: float = 1.0) -> SidebandSystem:
    """Assemble a SidebandSystem from the lattice geometry.

    ``depth_scale`` rescales both contrasts and total depths (transverse
    Gaussian-profile factor); the shift dx is polarization-set and unscaled.
    """
    up, down, dx = potentials_from_angle(geom, atom)
    return system_from_potentials(
        w_up=up.contrast * depth_scale,
        w_down=down.contrast * depth_scale,
        u_down_tot=down.total_depth * depth_scale,
        shift=dx, atom=atom, lattice_wavelength=geom.lattice_wavelength,
        n_max=n_max, k_points=k_points, q_cutoff=q_cutoff)


def system_from_potentials(w_up: float, w_down: float, u_down_tot: float,
                           shift: float, atom: AtomConstants,
                           lattice_wavelength: float, n_max: int = 15,
                           k_points: int = 64,
                           q_cutoff: int | None = None) -> SidebandSystem:
    """SidebandSystem from raw per-spin parameters (fit parameterization)."""
    if q_cutoff is None:
        q_cutoff = default_q_cutoff(max(w_up, w_down))
    n_bands = n_max + 1
    spec_up = cached_bands(w_up, n_bands=n_bands, k_points=k_points,
                           q_cutoff=q_cutoff)
    spec_down = cached_bands(w_down, n_bands=n_bands, k_points=k_points,
                             q_cutoff=q_cutoff)
    er_w = recoil_energy(atom, lattice_wavelength) / HBAR   # E_R in rad/s
    u_up_tot = -w_up
    eps_up = (u_up_tot + np.array([spec_up.band_energy(n)
                                   for n in range(n_bands)])) * er_w
    eps_down = (u_down_tot + np.array([spec_down.band_energy(n)
                                       for n in range(n_bands)])) * er_w
    fc = fcf_exact(spec_down, spec_up, shift).matrix
    lam = lattice_wavelength
    pot_up = SpinPotential(w_up, u_up_tot, shift, trap_frequency(w_up, atom, lam))
    pot_down = SpinPotential(w_down, u_down_tot, 0.0,
                             trap_frequency(w_down, atom, lam))
    return SidebandSystem(energy_up=eps_up, energy_down=eps_down,
                          fc_matrix=fc, shift=shift,
                          potential_up=pot_up, potential_down=pot_down)


def propagate_detunings(system: SidebandSystem, pulse: PulseSpec,
                        initial: SpinMotionState, detunings: np.ndarray,
                        dt: float | None = None) -> np.ndarray:
    """Final-state matrix (n_detunings, dim) after the pulse, one column batch.

    Second-order Strang splitting: exact diagonal phases, exact coupling
    rotation via a single eigendecomposition of the coupling matrix.  Each
    step is unitary, so the norm is conserved to machine precision.
    """
    detunings = np.atleast_1d(np.asarray(detunings, dtype=float))
    base, up_proj, c = system.hamiltonian_parts()
    psi = np.tile(initial.amplitudes, (detunings.size, 1)).astype(complex)
    diag = base[None, :] - np.multiply.outer(detunings, up_proj)  # (Nd, dim)
    # Subtract the per-detuning mean: a constant on the diagonal is a global
    # phase and only the spread limits the split-step accuracy.
    diag = diag - diag.mean(axis=1, keepdims=True)
    if dt is None:
        scale = float(np.max(np.abs(diag))) + pulse.peak_rabi + abs(pulse.sweep)
        dt = min(0.05 / max(scale, 1.0), pulse.support / 400.0)
    n_steps = max(1, int(math.ceil(pulse.support / dt)))
    dt = pulse.support / n_steps

    lam, q = np.linalg.eigh(c)

    chirped = pulse.envelope == "adiabatic_chirp"
    if chirped:
        for i in range(n_steps):
            tm = (i + 0.5) * dt
            dd = pulse.instantaneous_detuning(tm) - pulse.detuning
            half = np.exp(-0.5j * dt * (diag - dd * up_proj[None, :]))
            psi *= half
            omega = pulse.rabi(tm)
            if omega != 0.0:
                rot = np.exp(0.5j * dt * omega * lam)
                psi = (psi @ q) * rot[None, :] @ q.T
            psi *= half
        return psi

    # Time-independent diagonal: merge adjacent half steps of the Strang
    # composition so each step costs one phase multiply and one rotation.
    half = np.exp(-0.5j * dt * diag)
    full = half * half
    psi *= half
    for i in range(n_steps):
        omega = pulse.rabi((i + 0.5) * dt)
        if omega != 0.0:
            rot = np.exp(0.5j * dt * omega * lam)
            psi = (psi @ q) * rot[None, :] @ q.T
        psi *= full if i < n_steps - 1 else half
    return psi


def evolve_pulse(system: SidebandSystem, pulse: PulseSpec,
                 initial: SpinMotionState, dt: float | None = None,
                 method: str = "split", rtol: float = 1e-10,
                 atol: float = 1e-12) -> SpinMotionState:
    """Integrate one pulse; ``method`` is "split" (default) or "ode".

    The ODE path integrates the Schroedinger equation with an adaptive
    Runge-Kutta and serves as the accuracy cross-check for the split-step
    propagator.
    """
    if method == "split":
        out = propagate_detunings(system, pulse, initial,
                                  np.array([pulse.detuning]), dt=dt)
        return SpinMotionState(out[0])
    if method != "ode":
        raise ValueError(f"unknown method {method!r}")

    base, up_proj, c = system.hamiltonian_parts()

    def rhs(t, y):
        psi = y.view(complex)
        delta = pulse.instantaneous_detuning(t)
        h = (base - delta * up_proj) * psi - 0.5 * pulse.rabi(t) * (c @ psi)
        return (-1j * h).view(float)

    y0 = initial.amplitudes.astype(complex).view(float)
    sol = solve_ivp(rhs, (0.0, pulse.support), y0, rtol=rtol, atol=atol,
                    method="DOP853")
    if not sol.success:
        raise RuntimeError(f"pulse integration failed: {sol.message}")
    return SpinMotionState(sol.y[:, -1].view(complex).copy())


@dataclass(frozen=True)
class ThermalEnsemble:
    """Transverse 2-D Boltzmann ensemble, frozen during the pulse.

    Radial density P(rho) = (rho/sigma^2) exp(-rho^2 / 2 sigma^2) with
    sigma = sqrt(kB T / (m omega_rad^2)).  ``nodes`` returns Gauss-Laguerre
    abscissas in rho with weights summing to 1.
    """

    temperature: float        # K
    omega_rad: float          # rad/s
    n_samples: int = 16

    def sigma(self, atom: AtomConstants) -> float:
        return math.sqrt(KB * self.temperature / (atom.mass * self.omega_rad ** 2))

    def nodes(self, atom: AtomConstants) -> tuple[np.ndarray, np.ndarray]:
        if self.temperature <= 0.0:
            return np.array([0.0]), np.array([1.0])
        # substitute u = rho^2 / (2 sigma^2): integral of f(rho) e^-u du
        u, w = roots_laguerre(self.n_samples)
        rho = self.sigma(atom) * np.sqrt(2.0 * u)
        return rho, w / w.sum()


def beam_waist(geom: LatticeGeometry, atom: AtomConstants,
               omega_rad: float) -> float:
    """Waist w0 from the transverse harmonic expansion of the Gaussian beam.

    The full depth W_up relaxes transversely as exp(-2 rho^2 / w0^2); matching
    the quadratic term to m omega_rad^2 rho^2 / 2 gives
    w0 = sqrt(4 W_up / (m omega_rad^2)).
    """
    w_joule = geom.depth_up * recoil_energy(atom, geom.lattice_wavelength)
    return math.sqrt(4.0 * w_joule / (atom.mass * omega_rad ** 2))


def radial_depth_scale(rho: float, waist: float) -> float:
    return math.exp(-2.0 * rho ** 2 / waist ** 2)


def radial_parameters(geom: LatticeGeometry, atom: AtomConstants, rho: float,
                      omega_rad: float) -> tuple[SpinPotential, SpinPotential, float]:
    """Spin potentials at transverse offset rho (depths Gaussian-rescaled)."""
    g = radial_depth_scale(rho, beam_waist(geom, atom, omega_rad))
    up, down, dx = potentials_from_angle(geom, atom)
    def scaled(p: SpinPotential) -> SpinPotential:
        return SpinPotential(p.contrast * g, p.total_depth * g, p.center,
                             p.trap_frequency * math.sqrt(g))
    return scaled(up), scaled(down), dx


def boltzmann_populations(n_max: int, omega_vib: float,
                          temperature: float) -> np.ndarray:
    """Truncated thermal distribution over vibrational levels."""
    if temperature <= 0:
        p = np.zeros(n_max + 1)
        p[0] = 1.0
        return p
    x = HBAR * omega_vib / (KB * temperature)
    p = np.exp(-x * np.arange(n_max + 1))
    return p / p.sum()


@dataclass(frozen=True)
class SpectrumPeak:
    center: float   # rad/s
    height: float


@dataclass
class SpectrumResult:
    """Transfer probability vs microwave detuning, plus peak metadata."""

    detunings: np.ndarray     # rad/s
    transfer: np.ndarray      # [0, 1]
    sigma: np.ndarray | None = None
    peaks: list[SpectrumPeak] = field(default_factory=list)

    def locate_peaks(self, min_height: float = 0.02,
                     prominence: float = 0.02) -> list[SpectrumPeak]:
        idx, _ = find_peaks(self.transfer, height=min_height,
                            prominence=prominence)
        out = []
        for i in idx:
            # quadratic refinement of the peak center
            if 0 < i < self.transfer.size - 1:
                y0, y1, y2 = self.transfer[i - 1:i + 2]
                denom = y0 - 2 * y1 + y2
                frac = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
                step = self.detunings[i + 1] - self.detunings[i]
                out.append(SpectrumPeak(float(self.detunings[i] + frac * step),
                                        float(y1)))
            else:
                out.append(SpectrumPeak(float(self.detunings[i]),
                                        float(self.transfer[i])))
        self.peaks = out
        return out


@dataclass(frozen=True)
class SpectroscopyConfig:
    """Solver knobs shared by spectrum simulation and fitting."""

    n_max: int = 15
    k_points: int = 32
    q_cutoff: int | None = None
    omega_rad: float = 2 * math.pi * 1e3
    thermal_samples: int = 8
    axial_temperature: float = 0.0   # K; 0 = ground state
    dt: float | None = None          # s; None = automatic step size


def simulate_spectrum(geom: LatticeGeometry, atom: AtomConstants,
                      pulse: PulseSpec, detunings: np.ndarray,
                      ensemble: ThermalEnsemble | None = None,
                      initial_populations: np.ndarray | None = None,
                      cfg: SpectroscopyConfig = SpectroscopyConfig(),
                      ) -> SpectrumResult:
    """Thermal-weighted microwave spectrum starting from the up spin.

    For each frozen transverse radius the depths are rescaled, bands and
    Franck-Condon tables re-derived, and the pulse propagated over the whole
    detuning grid at once.  Valid when omega_rad << Omega_0 (frozen-position
    approximation).
    """
    detunings = np.asarray(detunings, dtype=float)
    q_cut = cfg.q_cutoff or default_q_cutoff(geom.depth_up)
    if ensemble is None:
        ensemble = ThermalEnsemble(0.0, cfg.omega_rad, 1)
    waist = beam_waist(geom, atom, ensemble.omega_rad)
    rhos, weights = ensemble.nodes(atom)

    transfer = np.zeros(detunings.size)
    for rho, w_rho in zip(rhos, weights):
        g = radial_depth_scale(rho, waist)
        system = build_system(geom, atom, n_max=cfg.n_max,
                              k_points=cfg.k_points, q_cutoff=q_cut,
                              depth_scale=g)
        if initial_populations is None:
            if cfg.axial_temperature > 0:
                pops = boltzmann_populations(
                    cfg.n_max, system.potential_up.trap_frequency,
                    cfg.axial_temperature)
            else:
                pops = np.zeros(cfg.n_max + 1)
                pops[0] = 1.0
        else:
            pops = np.asarray(initial_populations, dtype=float)
            pops = pops / pops.sum()
        for n0, p0 in enumerate(pops):
            if p0 < 1e-6:
                continue
            psi0 = SpinMotionState.basis(cfg.n_max, "up", n0)
            out = propagate_detunings(system, pulse, psi0, detunings, dt=cfg.dt)
            m = cfg.n_max + 1
            transfer += w_rho * p0 * np.sum(np.abs(out[:, m:]) ** 2, axis=1)
    result = SpectrumResult(detunings=detunings, transfer=transfer)
    result.locate_peaks()
    return result


def binomial_sigma(successes: np.ndarray, trials: int) -> np.ndarray:
    """Binomial standard error with rule-of-succession smoothing.

    Uses p_eff = (k+1)/(N+2) so zero- and full-count points keep a finite,
    honest uncertainty instead of sigma = 0 (which would make the weighted
    fit treat them as exact).
    """
    k = np.asarray(successes, dtype=float)
    p = (k + 1.0) / (trials + 2.0)
    return np.sqrt(p * (1.0 - p) / trials)


@dataclass
class FitResult:
    params: dict[str, float]
    stderr: dict[str, float]
    cost: float
    success: bool
    message: str


def _fit_forward(theta: np.ndarray, w_up: float, atom: AtomConstants,
                 lattice_wavelength: float, pulse: PulseSpec,
                 detunings: np.ndarray, cfg: SpectroscopyConfig,
                 initial_populations: np.ndarray | None) -> np.ndarray:
    dx, w_down, du_tot, t2d = theta
    u_down_tot = -w_up - du_tot
    q_cut = cfg.q_cutoff or default_q_cutoff(w_up)
    ens = ThermalEnsemble(t2d, cfg.omega_rad, cfg.thermal_samples)
    # transverse scaling uses the up-spin full depth, as in simulate_spectrum
    waist = math.sqrt(4.0 * w_up * recoil_energy(atom, lattice_wavelength)
                      / (atom.mass * cfg.omega_rad ** 2))
    rhos, weights = ens.nodes(atom)
    transfer = np.zeros(detunings.size)
    for rho, w_rho in zip(rhos, weights):
        g = radial_depth_scale(rho, waist)
        system = system_from_potentials(
            w_up * g, w_down * g, u_down_tot * g, dx, atom,
            lattice_wavelength, n_max=cfg.n_max, k_points=cfg.k_points,
            q_cutoff=q_cut)
        if initial_populations is None:
            pops = np.zeros(cfg.n_max + 1)
            pops[0] = 1.0
        else:
            pops = np.asarray(initial_populations, dtype=float)
            pops = pops / pops.sum()
        m = cfg.n_max + 1
        for n0, p0 in enumerate(pops):
            if p0 < 1e-6:
                continue
            psi0 = SpinMotionState.basis(cfg.n_max, "up", n0)
            out = propagate_detunings(system, pulse, psi0, detunings, dt=cfg.dt)
            transfer += w_rho * p0 * np.sum(np.abs(out[:, m:]) ** 2, axis=1)
    return transfer


def fit_spectrum(detunings: np.ndarray, observed: np.ndarray,
                 sigma: np.ndarray, initial_guess: dict[str, float],
                 w_up: float, atom: AtomConstants, lattice_wavelength: float,
                 pulse: PulseSpec,
                 cfg: SpectroscopyConfig = SpectroscopyConfig(),
                 initial_populations: np.ndarray | None = None,
                 max_nfev: int = 200) -> FitResult:
    """Weighted least squares over {dx, w_down, du_tot, t2d}.

    ``dx`` in units of d, depths in E_R, ``t2d`` in kelvin.  Standard errors
    come from the Jacobian at the solution (linearized covariance).
    """
    names = ["dx", "w_down", "du_tot", "t2d"]
    x0 = np.array([initial_guess[k] for k in names], dtype=float)
    detunings = np.asarray(detunings, dtype=float)
    observed = np.asarray(observed, dtype=float)
    sigma = np.maximum(np.asarray(sigma, dtype=float), 1e-4)
    scale = np.array([max(abs(v), 1e-3) for v in x0])

    def residuals(z):
        theta = z * scale
        model = _fit_forward(theta, w_up, atom, lattice_wavelength, pulse,
                             detunings, cfg, initial_populations)
        return (model - observed) / sigma

    lower = np.array([0.0, 1.0, -np.inf, 0.0]) / scale
    res = least_squares(residuals, x0 / scale, bounds=(lower, np.inf),
                        diff_step=1e-4, xtol=1e-12, ftol=1e-12, gtol=1e-12,
                        max_nfev=max_nfev)
    theta = res.x * scale
    # covariance from J^T J; flag degeneracy instead of crashing
    jac = res.jac / scale[None, :]
    jtj = jac.T @ jac
    dof = max(1, detunings.size - 4)
    try:
        cov = np.linalg.inv(jtj) * 2 * res.cost / dof
        err = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        err = np.full(4, np.nan)
    success = res.status > 0
    message = res.message
    if np.linalg.cond(jtj) > 1e12:
        message += " [degenerate Jacobian]"
    return FitResult(params=dict(zip(names, theta)),
                     stderr=dict(zip(names, err)),
                     cost=float(res.cost), success=success, message=message)
