"""Lindblad model of microwave sideband cooling with three internal states.

The cooling cycle couples |up,n> -> |down,n-1> with a microwave resonant on
that first sideband while optical pumping recycles |down> and the auxiliary
state |a> back to |up>; photon momentum kicks and the spatial shift between
the spin potentials feed heating back in.  The optically excited state is
adiabatically eliminated, leaving jump operators |s,n><s',n'| with effective
rates combining branching ratios, pump rates and displaced-state overlaps.

Internally the generator is expressed in units of the vibrational frequency
(time in 1/omega_vib), which keeps its entries O(1); public inputs stay in
SI rates.  Basis index: spin * (n_max+1) + n with spins ordered (up, down,
aux).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import expm_multiply

from .lattice import HBAR, KB
from .franck_condon import fcf_harmonic_matrix

SPIN_UP, SPIN_DOWN, SPIN_AUX = 0, 1, 2
SPIN_NAMES = ("up", "down", "aux")

# Branching ratios of the optically excited state into (up, down, aux),
# from angular-momentum coupling of its spontaneous decay channels.
DEFAULT_BRANCHING = (7.0 / 15.0, 5.0 / 12.0, 7.0 / 60.0)


@dataclass(frozen=True)
class CoolingParams:
    """Inputs of the sideband-cooling master equation.

    Rates in 1/s, frequencies in rad/s.  ``eta_x`` is the spatial and
    ``eta_k`` the momentum Lamb-Dicke parameter; ``branching`` is
    (alpha_up, alpha_down, alpha_aux) for decay out of the excited state.
    ``aux_shifted`` places the auxiliary potential on the up-potential site
    (so down <-> aux transfers see the full shift); set False to co-locate
    it with the down potential instead.
    """

    omega_0: float                   # bare microwave Rabi frequency, rad/s
    omega_vib: float                 # vibrational frequency, rad/s
    eta_x: float
    eta_k: float
    r_down: float                    # repump rate out of |down>, 1/s
    r_aux: float                     # pump rate out of |aux>, 1/s
    r_up: float = 0.0                # lattice scattering rate in |up>, 1/s
    branching: tuple[float, float, float] = DEFAULT_BRANCHING
    n_max: int = 15
    emission_nodes: int = 16
    aux_shifted: bool = True

    def __post_init__(self):
        if min(self.r_down, self.r_aux, self.r_up) < 0:
            raise ValueError("rates must be >= 0")
        if self.omega_0 < 0 or self.omega_vib <= 0:
            raise ValueError("omega_0 >= 0 and omega_vib > 0 required")
        if any(b < 0 for b in self.branching) or abs(sum(self.branching) - 1.0) > 1e-9:
            raise ValueError("branching ratios must be >= 0 and sum to 1")

    @property
    def levels(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return 3 * self.levels


@dataclass(frozen=True)
class JumpChannel:
    """All |source,n'> -> |target,n> jumps of one optical process.

    ``rates[n, n']`` in 1/s; each (n, n') pair is a separate Lindblad
    operator |target,n><source,n'|.
    """

    source_spin: int
    target_spin: int
    rates: np.ndarray

    def total_rate_from(self, n_prime: int) -> float:
        return float(self.rates[:, n_prime].sum())


@dataclass
class DensityMatrix:
    """Density matrix over |s, n> with validation helpers."""

    matrix: np.ndarray
    n_max: int

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def populations(self, spin: int) -> np.ndarray:
        m = self.n_max + 1
        return np.real(np.diag(self.matrix))[spin * m:(spin + 1) * m]

    def motional_distribution(self) -> np.ndarray:
        """Population per n, summed over internal states."""
        return (self.populations(SPIN_UP) + self.populations(SPIN_DOWN)
                + self.populations(SPIN_AUX))

    def p_ground(self) -> float:
        return float(self.motional_distribution()[0])

    def mean_n(self) -> float:
        dist = self.motional_distribution()
        return float(np.arange(dist.size) @ dist / dist.sum())

    def validate(self, tol: float = 1e-8) -> None:
        if abs(self.trace() - 1.0) > tol:
            raise ValueError(f"trace {self.trace()} differs from 1")
        if np.abs(self.matrix - self.matrix.conj().T).max() > tol:
            raise ValueError("density matrix not Hermitian")
        if np.linalg.eigvalsh(self.matrix).min() < -tol:
            raise ValueError("density matrix not positive semidefinite")


def emission_average_overlap_sq(eta_x: float, eta_k: float, n_max: int,
                                nodes: int = 16) -> np.ndarray:
    """<|M[n, n']|^2> averaged over the spontaneous-photon direction.

    M = <n| T_{dk} T_{dx} |n'> in the harmonic basis with total momentum
    transfer dk x_0 = eta_k (1 + u), u = cos(angle to the lattice axis)
    uniform on [-1, 1] (isotropic emission).  Gauss-Legendre quadrature.
    """
    if eta_k == 0.0:
        m = fcf_harmonic_matrix(complex(eta_x, 0.0), n_max)
        return np.abs(m) ** 2
    u, w = np.polynomial.legendre.leggauss(nodes)
    w = w / w.sum()
    out = np.zeros((n_max + 1, n_max + 1))
    for ui, wi in zip(u, w):
        m = fcf_harmonic_matrix(complex(eta_x, eta_k * (1.0 + ui)), n_max)
        out += wi * np.abs(m) ** 2
    return out


def decay_rates(params: CoolingParams) -> list[JumpChannel]:
    """Jump channels of the three optical processes.

    Repumping out of |down> and |aux> branches into all three spins;
    lattice scattering in |up> is elastic.  The displacement entering M is
    the shift between source and target potentials (eta_x or 0) plus the
    direction-averaged photon recoil.
    """
    n_max = params.n_max
    aux_site = SPIN_UP if params.aux_shifted else SPIN_DOWN

    def site(spin: int) -> int:
        return aux_site if spin == SPIN_AUX else spin

    def overlap(src: int, dst: int) -> np.ndarray:
        dx = params.eta_x if site(src) != site(dst) else 0.0
        return emission_average_overlap_sq(dx, params.eta_k, n_max,
                                           params.emission_nodes)

    channels = []
    pump = {SPIN_DOWN: params.r_down, SPIN_AUX: params.r_aux}
    for src, rate in pump.items():
        if rate == 0.0:
            continue
        for dst, alpha in zip((SPIN_UP, SPIN_DOWN, SPIN_AUX), params.branching):
            if alpha == 0.0:
                continue
            channels.append(JumpChannel(src, dst, alpha * rate * overlap(src, dst)))
    if params.r_up > 0.0:
        channels.append(JumpChannel(SPIN_UP, SPIN_UP,
                                    params.r_up * overlap(SPIN_UP, SPIN_UP)))
    return channels


def hamiltonian(params: CoolingParams, sideband_only: bool = False) -> np.ndarray:
    """Rotating-frame Hamiltonian in units of hbar*omega_vib.

    The microwave is resonant with |up,1> -> |down,0>, so the up ladder is
    offset by -1 relative to the down ladder.  ``sideband_only`` zeroes all
    couplings except the resonant first sideband (diagnostic mode for the
    dark-state test).
    """
    m = params.levels
    n = np.arange(m, dtype=float)
    h = np.zeros((params.dim, params.dim))
    h[np.arange(m), np.arange(m)] = n - 1.0                 # up block
    h[m + np.arange(m), m + np.arange(m)] = n               # down block
    h[2 * m + np.arange(m), 2 * m + np.arange(m)] = n       # aux block (uncoupled)
    k = np.real(fcf_harmonic_matrix(complex(params.eta_x, 0.0), params.n_max))
    if sideband_only:
        mask = np.zeros_like(k)
        mask[np.arange(m - 1), np.arange(1, m)] = 1.0       # <n-1|...|n>
        k = k * mask
    g = 0.5 * params.omega_0 / params.omega_vib
    h[m:2 * m, :m] -= g * k          # <down,n'| H |up,n>
    h[:m, m:2 * m] -= g * k.T
    return h


def build_liouvillian(params: CoolingParams,
                      sideband_only: bool = False) -> np.ndarray:
    """Dense matrix of the generator, acting on vec(rho), in omega_vib units.

    drho/dt = -i [H, rho] + sum_j gamma_j (L rho L+ - {L+L, rho}/2) with
    elementary jump operators L = |dst,n><src,n'|.  Columns sum to zero
    (trace annihilation) by construction.
    """
    dim = params.dim
    if dim > 120:
        raise ValueError(f"state space {dim} too large (density matrix "
                         f"{dim * dim} x {dim * dim})")
    m = params.levels
    eye = np.eye(dim)
    h = hamiltonian(params, sideband_only)
    lio = -1j * (np.kron(h, eye) - np.kron(eye, h.T)).astype(complex)

    decay_diag = np.zeros(dim)   # accumulated L+L diagonal, omega_vib units
    for ch in decay_rates(params):
        g = ch.rates / params.omega_vib
        src0, dst0 = ch.source_spin * m, ch.target_spin * m
        for n_ket in range(m):
            j = src0 + n_ket
            for n_bra in range(m):
                rate = g[n_bra, n_ket]
                if rate == 0.0:
                    continue
                i = dst0 + n_bra
                # L rho L+ term: rho[j, j] feeds rho[i, i]
                lio[i * dim + i, j * dim + j] += rate
            decay_diag[j] += g[:, n_ket].sum()
    # anticommutator term -{L+L, rho}/2, diagonal in this jump basis
    lio -= 0.5 * (np.kron(np.diag(decay_diag), eye)
                  + np.kron(eye, np.diag(decay_diag)))
    return lio


@dataclass
class SteadyStateResult:
    rho: DensityMatrix
    residual: float
    degenerate: bool


def steady_state(params: CoolingParams, lio: np.ndarray | None = None,
                 check_degenerate: bool = True) -> SteadyStateResult:
    """Kernel of the Liouvillian, normalized to unit trace.

    Solves the linear system with one row replaced by the trace constraint;
    a second solve with a different replaced row cross-checks that the
    kernel is one-dimensional.
    """
    if lio is None:
        lio = build_liouvillian(params)
    dim = params.dim
    trace_idx = [i * dim + i for i in range(dim)]

    def solve(row: int) -> np.ndarray | None:
        a = lio.copy()
        a[row, :] = 0.0
        a[row, trace_idx] = 1.0
        b = np.zeros(dim * dim, dtype=complex)
        b[row] = 1.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with np.errstate(all="ignore"):
                try:
                    x = lu_solve(lu_factor(a), b)
                except np.linalg.LinAlgError:
                    return None
        if not np.all(np.isfinite(x)):
            return None
        rho = x.reshape(dim, dim)
        rho = 0.5 * (rho + rho.conj().T)
        tr = float(np.real(np.trace(rho)))
        if abs(tr) < 1e-12:
            return None
        return rho / tr

    rho = solve(0)
    if rho is None:
        # Singular even with the trace constraint: kernel has dimension > 1.
        return SteadyStateResult(_kernel_state_svd(lio, params), np.nan, True)
    residual = float(np.linalg.norm(lio @ rho.reshape(-1)))
    degenerate = False
    if check_degenerate:
        rho2 = solve(dim * dim - 1)
        degenerate = rho2 is None or bool(np.abs(rho - rho2).max() > 1e-6)
    return SteadyStateResult(DensityMatrix(rho, params.n_max), residual,
                             degenerate)


def _kernel_state_svd(lio: np.ndarray, params: CoolingParams) -> DensityMatrix:
    """Any unit-trace Hermitian kernel element, via the smallest singular
    vectors (fallback path when the kernel is degenerate)."""
    _, s, vh = np.linalg.svd(lio)
    null = vh[s < max(1e-10 * s[0], 1e-12)].conj()
    dim = params.dim
    for vec in null:
        rho = vec.reshape(dim, dim)
        rho = 0.5 * (rho + rho.conj().T)
        tr = float(np.real(np.trace(rho)))
        if abs(tr) > 1e-9:
            return DensityMatrix(rho / tr, params.n_max)
    raise RuntimeError("no unit-trace state found in the Liouvillian kernel")


def evolve(params: CoolingParams, rho0: np.ndarray, duration: float,
           lio: np.ndarray | None = None,
           method: str = "auto") -> DensityMatrix:
    """Propagate rho0 for ``duration`` seconds under the master equation.

    ``method``: "eig" (dense eigendecomposition of the generator; exact at
    any time, cost independent of duration), "krylov" (sparse
    expm_multiply), or "auto" (eig for small generators).
    """
    if lio is None:
        lio = build_liouvillian(params)
    t = duration * params.omega_vib
    v0 = rho0.reshape(-1).astype(complex)
    if method == "auto":
        method = "eig" if lio.shape[0] <= 1600 else "krylov"
    if method == "eig":
        w, v = np.linalg.eig(lio)
        vec = v @ (np.exp(w * t) * np.linalg.solve(v, v0))
    elif method == "krylov":
        vec = expm_multiply(csr_matrix(lio) * t, v0)
    else:
        raise ValueError(f"unknown method {method!r}")
    rho = vec.reshape(params.dim, params.dim)
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho, params.n_max)


def thermal_state(params: CoolingParams, n_bar: float,
                  spin: int = SPIN_UP) -> np.ndarray:
    """Thermal motional distribution in one spin state (truncated)."""
    m = params.levels
    if n_bar <= 0:
        p = np.zeros(m)
        p[0] = 1.0
    else:
        x = n_bar / (n_bar + 1.0)
        p = x ** np.arange(m)
        p /= p.sum()
    rho = np.zeros((params.dim, params.dim), dtype=complex)
    idx = spin * m + np.arange(m)
    rho[idx, idx] = p
    return rho


@dataclass
class CoolingMap:
    """Steady-state ground population over an (eta_x, omega_0) grid."""

    eta_x: np.ndarray
    omega_0: np.ndarray          # rad/s
    p_ground: np.ndarray         # (len(eta_x), len(omega_0))
    failures: list[tuple[int, int, str]] = field(default_factory=list)


def cooling_map(base: CoolingParams, eta_x_grid: np.ndarray,
                omega_0_grid: np.ndarray,
                check_degenerate: bool = False) -> CoolingMap:
    eta_x_grid = np.asarray(eta_x_grid, dtype=float)
    omega_0_grid = np.asarray(omega_0_grid, dtype=float)
    p = np.full((eta_x_grid.size, omega_0_grid.size), np.nan)
    failures = []
    for i, ex in enumerate(eta_x_grid):
        # jump rates depend on eta_x only: share them across the Rabi axis
        row_params = replace(base, eta_x=float(ex))
        for j, om in enumerate(omega_0_grid):
            cell = replace(row_params, omega_0=float(om))
            try:
                res = steady_state(cell, check_degenerate=check_degenerate)
                p[i, j] = res.rho.p_ground()
            except Exception as exc:  # noqa: BLE001 - recorded, not fatal
                failures.append((i, j, str(exc)))
    return CoolingMap(eta_x_grid, omega_0_grid, p, failures)


def energy_balance(eta_x: float, eta_k: float) -> dict[str, float]:
    """Per-cycle energy changes in units of hbar*omega_vib.

    Recoil heating 2 eta_k^2 (three-dimensional, both photons), projection
    heating eta_x^2, and one vibrational quantum removed by the sideband:
    total eta_x^2 + 2 eta_k^2 - 1.  Cooling requires |eta| < 1 with
    eta = eta_k + i eta_x (generalized Lamb-Dicke regime).
    """
    de_rec = 2.0 * eta_k ** 2
    de_proj = eta_x ** 2
    return {"recoil": de_rec, "projection": de_proj,
            "total": de_proj + de_rec - 1.0}


def projection_heating_general(spectrum, band: int, shift: float,
                               x_span: float = 6.0,
                               n_points: int = 4001) -> float:
    """Mean energy gained projecting Wannier state ``band`` onto the
    potential displaced by ``shift`` (units of d); returned in E_R.

    Evaluates <n| V(x - dx) - V(x) |n> by position-space quadrature (the
    kinetic term cancels).  Equals sum_m (eps_m - eps_n) |I_n^m|^2 over the
    displaced eigenbasis.
    """
    from scipy.integrate import trapezoid
    from .bands import wannier

    w = wannier(spectrum, band)
    d = math.pi
    x = np.linspace(-x_span * d, x_span * d, n_points)
    prob = np.abs(np.asarray(w(x), dtype=complex)) ** 2
    depth = spectrum.depth
    dv = depth * (np.sin(x - shift * d) ** 2 - np.sin(x) ** 2)
    return float(trapezoid(prob * dv, x))


def projection_heating_fc_sum(spectrum, band: int, shift: float) -> float:
    """FC-table form of the projection heating (E_R): the same quantity as
    ``projection_heating_general`` computed from sum_m (eps_m - eps_n) |I|^2.
    """
    from .franck_condon import fcf_exact

    table = fcf_exact(spectrum, spectrum, shift)
    amps2 = table.matrix[:, band] ** 2
    eps = np.array([spectrum.band_energy(n) for n in range(spectrum.n_bands)])
    return float(amps2 @ eps / amps2.sum() - eps[band])


def temperature_from_sidebands(h_blue: float, h_red: float,
                               omega_vib: float) -> dict[str, float]:
    """Mean occupation and temperature from sideband heights.

    ``h_blue`` is the cooling sideband |up,n> -> |down,n-1> (vanishes for a
    ground-state atom), ``h_red`` the heating sideband; for a thermal state
    h_blue / h_red = <n> / (<n> + 1).
    """
    if h_blue < 0 or h_red <= 0:
        raise ValueError("need h_blue >= 0 and h_red > 0")
    ratio = h_blue / h_red
    if ratio >= 1.0:
        raise ValueError("sideband ratio >= 1 has no thermal solution")
    n_bar = ratio / (1.0 - ratio)
    if n_bar == 0.0:
        return {"n_bar": 0.0, "temperature": 0.0}
    temperature = HBAR * omega_vib / (KB * math.log(1.0 + 1.0 / n_bar))
    return {"n_bar": n_bar, "temperature": temperature}
