"""Motional-state engineering sequences and population measurement.

Builds on the sideband machinery: microwave pulses (including adiabatic
passage) between the two spin manifolds, instantaneous lattice shifts,
projective repumping, and the filter/push-out scheme that measures the
vibrational population distribution through cumulative survival plateaus.

The default motional model is the harmonic ladder with displaced-oscillator
couplings D[n', n](eta_x); sequences track the current shift so every pulse
uses the coupling table of the shift at which it is applied.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .franck_condon import fcf_harmonic_matrix
from .spectroscopy import PulseSpec

# ---------------------------------------------------------------------------
# sequence steps


@dataclass(frozen=True)
class MicrowavePulse:
    """Microwave pulse step; ``target`` = (n_up, n_down) selects the
    transition the detuning is set on (resonant unless ``detuning_offset``)."""

    pulse: PulseSpec
    target: tuple[int, int] = (0, 0)
    detuning_offset: float = 0.0    # rad/s added to the resonance


@dataclass(frozen=True)
class LatticeShift:
    """Set the relative shift to ``eta_x`` (instantaneous, i.e. timed so
    vibrational populations are preserved exactly)."""

    eta_x: float
    mode: str = "instantaneous"

    def __post_init__(self):
        if self.mode != "instantaneous":
            raise ValueError("only instantaneous shifts are implemented")


@dataclass(frozen=True)
class RepumpPulse:
    """Optical pumping of the down manifold into up at the current shift,
    conditioned on the atom ending in up (recoil neglected)."""


@dataclass(frozen=True)
class PushOut:
    """State-selective removal of one spin's population; survival is
    tracked as the remaining trace."""

    spin: str = "up"
    efficiency: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must be in [0, 1]")


@dataclass(frozen=True)
class Wait:
    duration: float  # s


SequenceStep = MicrowavePulse | LatticeShift | RepumpPulse | PushOut | Wait


# ---------------------------------------------------------------------------
# engine


@dataclass
class SequenceState:
    """Density matrix over {|up,n>, |down,n>}, current shift, and the
    accumulated survival probability (trace lost to push-out steps)."""

    rho: np.ndarray
    eta_x: float
    n_max: int
    survival: float = 1.0

    @classmethod
    def pure(cls, n_max: int, spin: str, n: int,
             eta_x: float = 0.0) -> "SequenceState":
        dim = 2 * (n_max + 1)
        amp = np.zeros(dim, dtype=complex)
        amp[(0 if spin == "up" else n_max + 1) + n] = 1.0
        return cls(np.outer(amp, amp.conj()), eta_x, n_max)

    def populations(self, spin: str) -> np.ndarray:
        m = self.n_max + 1
        diag = np.real(np.diag(self.rho))
        return diag[:m] if spin == "up" else diag[m:]

    def fidelity(self, spin: str, n: int) -> float:
        return float(self.populations(spin)[n])


@dataclass(frozen=True)
class HarmonicModel:
    """Harmonic-ladder engineering model: equal trap frequencies for both
    spins and displaced-oscillator couplings."""

    omega_vib: float       # rad/s
    n_max: int = 15
    dt: float | None = None

    def coupling(self, eta_x: float) -> np.ndarray:
        """K[n_down, n_up] at the given shift."""
        return np.real(fcf_harmonic_matrix(complex(eta_x, 0.0), self.n_max))

    def resonance(self, n_up: int, n_down: int) -> float:
        """Detuning of |up,n> -> |down,n'> relative to the carrier."""
        return (n_up - n_down) * self.omega_vib


def pulse_unitary(model: HarmonicModel, pulse: PulseSpec,
                  eta_x: float) -> np.ndarray:
    """Unitary of one pulse in the rotating frame at omega_MW.

    Same Strang splitting as the spectroscopy propagator, applied to the
    full basis at once.  Time-dependent detuning (chirp) supported.
    """
    m = model.n_max + 1
    n = np.arange(m, dtype=float)
    base = np.concatenate([n * model.omega_vib, n * model.omega_vib])
    up_proj = np.concatenate([np.ones(m), np.zeros(m)])
    k = model.coupling(eta_x)
    c = np.zeros((2 * m, 2 * m))
    c[:m, m:] = k.T
    c[m:, :m] = k

    diag0 = base - pulse.detuning * up_proj
    diag0 = diag0 - diag0.mean()
    dt = model.dt
    if dt is None:
        scale = float(np.max(np.abs(diag0))) + pulse.peak_rabi + abs(pulse.sweep)
        dt = min(0.05 / max(scale, 1.0), pulse.support / 400.0)
    n_steps = max(1, int(math.ceil(pulse.support / dt)))
    dt = pulse.support / n_steps

    lam, q = np.linalg.eigh(c)
    u = np.eye(2 * m, dtype=complex)
    for i in range(n_steps):
        tm = (i + 0.5) * dt
        dd = pulse.instantaneous_detuning(tm) - pulse.detuning
        half = np.exp(-0.5j * dt * (diag0 - dd * up_proj))
        u = half[:, None] * u
        omega = pulse.rabi(tm)
        if omega != 0.0:
            rot = np.exp(0.5j * dt * omega * lam)
            u = q @ (rot[:, None] * (q.T @ u))
        u = half[:, None] * u
    return u


def run_sequence(initial: SequenceState, steps: list[SequenceStep],
                 model: HarmonicModel) -> SequenceState:
    """Apply the steps in order; returns the final state.

    Push-out steps leave the density matrix unnormalized (its trace is the
    survival probability, also accumulated in ``state.survival``).
    """
    state = replace(initial, rho=initial.rho.copy())
    m = model.n_max + 1
    for step in steps:
        if isinstance(step, LatticeShift):
            state.eta_x = step.eta_x
        elif isinstance(step, Wait):
            continue   # rotating-frame phases are irrelevant to populations
        elif isinstance(step, MicrowavePulse):
            n_up, n_down = step.target
            detuning = model.resonance(n_up, n_down) + step.detuning_offset
            pulse = replace(step.pulse, detuning=detuning)
            u = pulse_unitary(model, pulse, state.eta_x)
            state.rho = u @ state.rho @ u.conj().T
        elif isinstance(step, RepumpPulse):
            k = model.coupling(state.eta_x)
            # |up,n> <down,n'| weighted by the displaced overlap
            a = np.zeros((2 * m, 2 * m))
            a[:m, m:] = k.T
            rho = a @ state.rho @ a.T
            tr = float(np.real(np.trace(rho)))
            if tr <= 0:
                raise RuntimeError("repump applied to empty down manifold")
            state.rho = rho / tr
        elif isinstance(step, PushOut):
            keep = np.ones(2 * m)
            sl = slice(0, m) if step.spin == "up" else slice(m, 2 * m)
            keep[sl] = math.sqrt(1.0 - step.efficiency)
            state.rho = keep[:, None] * state.rho * keep[None, :]
            state.survival = float(np.real(np.trace(state.rho)))
        else:
            raise TypeError(f"unknown step {step!r}")
    return state


# ---------------------------------------------------------------------------
# canned preparations


def coupling_maximizing_shift(model: HarmonicModel, n_up: int,
                              n_down: int) -> float:
    """Shift eta_x maximizing |K[n_down, n_up]| (searched on (0, 4])."""
    def neg(eta):
        return -abs(model.coupling(eta)[n_down, n_up])
    res = minimize_scalar(neg, bounds=(1e-3, 4.0), method="bounded")
    return float(res.x)


def zero_coupling_shift(model: HarmonicModel, n: int) -> float:
    """Smallest positive shift where the diagonal coupling K[n, n] vanishes.

    For n = 2 this is the shift used to make the carrier blind to the
    |down,2> component (first zero of the Laguerre polynomial L_2).
    """
    grid = np.linspace(1e-3, 4.0, 2000)
    vals = np.array([model.coupling(e)[n, n] for e in grid])
    sign = np.sign(vals)
    idx = np.nonzero(np.diff(sign))[0]
    if idx.size == 0:
        raise ValueError(f"K[{n},{n}] has no zero crossing below eta_x = 4")
    i = idx[0]
    # bisection refinement
    lo, hi = grid[i], grid[i + 1]
    flo = vals[i]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = model.coupling(mid)[n, n]
        if fm == 0.0:
            return float(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def adiabatic_passage_pulse(model: HarmonicModel, coupling: float,
                            peak_rabi: float = 2 * math.pi * 8e3,
                            sweep: float = 2 * math.pi * 50e3,
                            duration: float = 4e-3) -> PulseSpec:
    """Linear-chirp Landau-Zener sweep through one sideband resonance.

    Adiabaticity: the effective gap coupling*peak_rabi and sweep rate
    sweep/duration give a Landau-Zener exponent
    pi (coupling*peak_rabi)^2 duration / (2 sweep) >> 1.
    """
    if coupling <= 0:
        raise ValueError("need a nonzero sideband coupling")
    return PulseSpec("adiabatic_chirp", peak_rabi=peak_rabi, sweep=sweep,
                     duration=duration)


def prepare_fock(model: HarmonicModel, m: int,
                 pulse: PulseSpec | None = None) -> tuple[SequenceState, float]:
    """|up,0> -> |down,m> by adiabatic passage on the m-th sideband at the
    coupling-maximizing shift.  Returns (final state, fidelity)."""
    if m == 0:
        eta = 0.0
        coupling = 1.0
    else:
        eta = coupling_maximizing_shift(model, 0, m)
        coupling = abs(model.coupling(eta)[m, 0])
    if pulse is None:
        pulse = adiabatic_passage_pulse(model, coupling)
    steps = [LatticeShift(eta), MicrowavePulse(pulse, target=(0, m))]
    state = run_sequence(SequenceState.pure(model.n_max, "up", 0), steps, model)
    return state, state.fidelity("down", m)


def superposition_sequence(model: HarmonicModel, area: float,
                           pulse_rabi: float = 2 * math.pi * 10e3
                           ) -> SequenceState:
    """Two-pulse sequence creating cos|down,0> + sin|down,2> populations.

    First pulse (area*pi on |up,0> -> |down,2> at the coupling-maximizing
    shift) splits the population; the lattice then moves to the K[2,2] = 0
    point so the closing carrier pi-pulse transfers the |up,0> remainder to
    |down,0> without touching the |down,2> component.
    """
    eta1 = coupling_maximizing_shift(model, 0, 2)
    k1 = abs(model.coupling(eta1)[2, 0])
    t1 = area * math.pi / (pulse_rabi * k1)
    pulse1 = PulseSpec("rectangular", peak_rabi=pulse_rabi, duration=t1)

    eta2 = zero_coupling_shift(model, 2)
    k2 = abs(model.coupling(eta2)[0, 0])
    t2 = math.pi / (pulse_rabi * k2)
    pulse2 = PulseSpec("rectangular", peak_rabi=pulse_rabi, duration=t2)

    steps = [
        LatticeShift(eta1),
        MicrowavePulse(pulse1, target=(0, 2)),
        LatticeShift(eta2),
        MicrowavePulse(pulse2, target=(0, 0)),
    ]
    return run_sequence(SequenceState.pure(model.n_max, "up", 0), steps, model)


def prepare_coherent(model: HarmonicModel, eta_x: float,
                     exact_table: np.ndarray | None = None
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Repump |down,0> while the lattice is displaced by eta_x.

    Returns (populations over n in up, expected Poisson distribution).
    With ``exact_table`` (an FC matrix I[n_up, n_down=0] from the exact
    Wannier solver) the projection uses it instead of the harmonic kernel.
    """
    if exact_table is not None:
        amps = np.asarray(exact_table, dtype=float)[:, 0]
    else:
        amps = np.real(fcf_harmonic_matrix(complex(eta_x, 0.0),
                                           model.n_max))[:, 0]
    pops = amps ** 2
    pops = pops / pops.sum()
    n = np.arange(model.n_max + 1)
    expected = np.exp(-eta_x ** 2) * eta_x ** (2 * n) / \
        np.array([math.factorial(int(i)) for i in n])
    return pops, expected


# ---------------------------------------------------------------------------
# filtering measurement


@dataclass(frozen=True)
class PopulationDistribution:
    """Vibrational populations p_m and the cumulative F_n = sum_{m<n} p_m."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if (p < -1e-12).any():
            raise ValueError("populations must be nonnegative")
        if p.sum() > 1.0 + 1e-9:
            raise ValueError("populations must sum to at most 1")
        object.__setattr__(self, "p", p)

    @classmethod
    def thermal(cls, n_bar: float, n_max: int) -> "PopulationDistribution":
        if n_bar <= 0:
            p = np.zeros(n_max + 1)
            p[0] = 1.0
            return cls(p)
        x = n_bar / (n_bar + 1.0)
        p = (1 - x) * x ** np.arange(n_max + 1)
        return cls(p / p.sum())

    def cumulative(self, n: int) -> float:
        """F_n = probability of occupying a level below n."""
        return float(self.p[:n].sum())


def effective_efficiency(f: float, repetitions: int) -> float:
    """Transfer efficiency of ``repetitions`` filter passes:
    f' = 1 - (1 - f)^N."""
    if not 0.0 <= f <= 1.0:
        raise ValueError("f must be in [0, 1]")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    return 1.0 - (1.0 - f) ** repetitions


def filter_survival(dist: PopulationDistribution, n: int, f: float,
                    repetitions: int = 1, loss_per_pass: float = 1.0) -> float:
    """Survival probability after filtering out levels >= n.

    Levels below n are untouched (survive); levels >= n are transferred and
    pushed out with probability f' = 1-(1-f)^N.  ``loss_per_pass`` models
    off-resonant losses multiplicatively per repetition.
    """
    f_prime = effective_efficiency(f, repetitions)
    fn = dist.cumulative(n)
    return (fn + (1.0 - f_prime) * (1.0 - fn)) * loss_per_pass ** repetitions


def reconstruct_distribution(plateaus: np.ndarray, f: float = 1.0,
                             repetitions: int = 1,
                             ceiling: float | None = None,
                             noise_tolerance: float = 0.05) -> PopulationDistribution:
    """Invert plateau survivals S_n (n = 0 .. n_max+1) back to populations.

    S_n = ceiling * (F_n + (1-f')(1-F_n)); p_n = F_{n+1} - F_n.  A ceiling
    below 1 (off-resonant loss) is divided out; if not given it is taken
    from the last plateau (where F = 1).  Negative differences beyond
    ``noise_tolerance`` raise; smaller ones are clipped with a warning.
    """
    s = np.asarray(plateaus, dtype=float)
    if s.ndim != 1 or s.size < 2:
        raise ValueError("need plateaus for at least n = 0 and n = 1")
    f_prime = effective_efficiency(f, repetitions)
    if f_prime <= 0:
        raise ValueError("filter with zero efficiency cannot be inverted")
    if ceiling is None:
        ceiling = float(s[-1])
    if ceiling <= 0:
        raise ValueError("ceiling must be positive")
    fn = (s / ceiling - (1.0 - f_prime)) / f_prime
    diffs = np.diff(fn)
    if (diffs < -noise_tolerance).any():
        raise ValueError("plateaus decrease with n beyond the noise tolerance")
    if (diffs < 0).any():
        warnings.warn("clipping small negative population estimates",
                      stacklevel=2)
    p = np.clip(diffs, 0.0, None)
    total = p.sum()
    if total > 1.0:
        p = p / total
    return PopulationDistribution(p)
