"""
AXY-8 pulse schedules and the microwave pulse model.

One period τ holds two composite blocks of five π pulses (20 pulses per
AXY-8 pair XY or YX, 10 per τ). Inside a block spanning half a period the
pulses sit at angles x1, x2, π/2, π - x2, π - x1 of the phase 2πt/τ, with

    x1 = π/5 - w,   x2 = π/5 + w,

so that w = π/10 is the uniform spacing. The first harmonic of the
modulation function is then

    f_1 = (4/π) [1 - 4 cos(π/5) sin w],

and w is chosen by a bracketed root solve to reach a target f_k. Composite
X blocks use phases [π/6, 0, π/2, 0, π/6], Y blocks add π/2, and the blocks
follow XY XY YX YX over four periods.

The antisymmetric arrangement is the symmetric one delayed by -τ/4: it
starts with the fourth pulse of a block and the pulses that would fall
before t = 0 are appended at the end of the train.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .operators import SIGMA_X, SIGMA_Y, SIGMA_Z, IDENTITY_2, expm_hermitian

TWO_PI = 2 * np.pi
BLOCK_PHASES = np.array([np.pi / 6, 0.0, np.pi / 2, 0.0, np.pi / 6])
AXY8_PATTERN = ("XY", "XY", "YX", "YX")
PULSES_PER_PERIOD = 10
DEFAULT_RABI = TWO_PI * 40e6
FLAVORS = ("symmetric", "antisymmetric")


@dataclass(frozen=True)
class PulseParams:
    """Microwave π-pulse parameters.

    ``rabi`` is the nominal Rabi frequency (rad/s) that fixes the π-pulse
    duration π/rabi; the delivered Rabi frequency is (1 + rabi_error)·rabi.
    ``instantaneous`` replaces every pulse by an ideal zero-length flip.
    """

    rabi: float = DEFAULT_RABI
    detuning: float = 0.0
    rabi_error: float = 0.0
    instantaneous: bool = False

    @property
    def duration(self):
        return 0.0 if self.instantaneous else np.pi / self.rabi


@dataclass(frozen=True, eq=False)
class PulseSequence:
    """A timed, phased π-pulse train.

    Attributes
    ----------
    flavor : str
        "symmetric" or "antisymmetric".
    tau : float
        Period of the modulation function in seconds.
    n_periods : int
        Number of periods N; the gate time is N·τ.
    centers, durations, phases : numpy.ndarray
        Pulse centres (s), durations (s) and rotation-axis phases (rad).
    pulse : PulseParams
        Error model shared by all pulses.
    harmonic : int
        Driven harmonic k̃.
    f_target : float
        Requested Fourier coefficient at ``harmonic``.
    spacing : float
        Block parameter w.
    """

    flavor: str
    tau: float
    n_periods: int
    centers: np.ndarray
    durations: np.ndarray
    phases: np.ndarray
    pulse: PulseParams = field(default_factory=PulseParams)
    harmonic: int = 1
    f_target: float = 0.0
    spacing: float = np.pi / 10

    @property
    def n_pulses(self):
        return len(self.centers)

    @property
    def total_time(self):
        """N·τ, the nominal gate time."""
        return self.n_periods * self.tau

    @property
    def t_end(self):
        """End of the last pulse window or N·τ, whichever is later."""
        if self.n_pulses == 0:
            return self.total_time
        return max(self.total_time, float(self.centers[-1] + self.durations[-1] / 2))

    @property
    def instantaneous(self):
        return self.pulse.instantaneous

    def block_times(self):
        """Pulse centres of the first composite block (s)."""
        return _block_angles(self.spacing) * self.tau / TWO_PI

    def windows(self):
        """(start, stop) of every pulse window."""
        half = self.durations / 2
        return np.stack([self.centers - half, self.centers + half], axis=1)

    def ideal_product(self):
        """Product of ideal π rotations, last pulse leftmost (electron 2×2)."""
        u = IDENTITY_2.copy()
        for p in self.phases:
            u = ideal_pulse(p) @ u
        return u

    def with_pulse(self, pulse):
        return PulseSequence(
            self.flavor, self.tau, self.n_periods, self.centers,
            np.full_like(self.centers, pulse.duration), self.phases, pulse,
            self.harmonic, self.f_target, self.spacing,
        )

    def to_table(self):
        """Schedule as delimiter-separated text in SI units."""
        lines = [
            f"# flavor={self.flavor} tau_s={self.tau:.12g} n_periods={self.n_periods} "
            f"harmonic={self.harmonic} f_target={self.f_target:.12g}",
            "center_s,duration_s,phase_rad",
        ]
        lines += [
            f"{c:.12e},{d:.12e},{p:.12f}"
            for c, d, p in zip(self.centers, self.durations, self.phases)
        ]
        return "\n".join(lines) + "\n"


def ideal_pulse(phase):
    """Ideal π rotation exp(-i π/2 (cos φ σx + sin φ σy))."""
    return -1j * (np.cos(phase) * SIGMA_X + np.sin(phase) * SIGMA_Y)


def _block_angles(w):
    x1, x2 = np.pi / 5 - w, np.pi / 5 + w
    return np.array([x1, x2, np.pi / 2, np.pi - x2, np.pi - x1])


def block_harmonic(w, k):
    """Closed-form cosine coefficient f_k of the symmetric train for parameter w."""
    if k % 2 == 0:
        return 0.0
    x1, x2 = np.pi / 5 - w, np.pi / 5 + w
    return 4 / (k * np.pi) * (np.sin(k * np.pi / 2) + 2 * np.sin(k * x1) - 2 * np.sin(k * x2))


def _spacing_bounds(tau, duration, margin=0.0):
    """Admissible w range keeping finite pulses apart and inside the block."""
    dx = TWO_PI * (duration + margin) / tau
    lo = dx / 2                   # x2 - x1 = 2w >= pulse width
    hi = min(np.pi / 5 - dx / 2,  # first window starts at or after t = 0
             3 * np.pi / 10 - dx)  # x2 window ends before the centre pulse window
    return lo, hi


def solve_spacing(f_target, harmonic, tau, duration=0.0, grid=4001):
    """Find the block parameter w giving f_{harmonic} = f_target.

    Brackets every sign change of f_k(w) - f_target on a uniform grid,
    refines each with Brent's method and returns the root closest to uniform
    spacing.

    Raises
    ------
    ValueError
        If f_target is not reachable with non-overlapping pulses.
    """
    if harmonic < 1 or harmonic % 2 == 0:
        raise ValueError("only odd harmonics are generated by the AXY block")
    lo, hi = _spacing_bounds(tau, duration)
    if not lo < hi:
        raise ValueError("period too short to fit the pulses")
    ws = np.linspace(lo, hi, grid)
    vals = block_harmonic(ws, harmonic) - f_target
    xtol = max(TWO_PI * 1e-12 / tau, 1e-15)
    roots = list(ws[vals == 0])
    for i in np.nonzero(vals[:-1] * vals[1:] < 0)[0]:
        roots.append(
            brentq(lambda w: block_harmonic(w, harmonic) - f_target,
                   ws[i], ws[i + 1], xtol=xtol, rtol=4 * np.finfo(float).eps)
        )
    if not roots:
        raise ValueError(
            f"f_target={f_target} unreachable at harmonic {harmonic} "
            f"(range {vals.min() + f_target:.4f}..{vals.max() + f_target:.4f})"
        )
    roots = np.array(roots)
    return float(roots[np.argmin(np.abs(roots - np.pi / 10))])


def axy8_schedule(flavor, tau, harmonic=1, f_target=0.0, n_periods=4, pulse=None):
    """Build an AXY-8 pulse train.

    Parameters
    ----------
    flavor : {"symmetric", "antisymmetric"}
    tau : float
        Period in seconds (for resonance with ω_l use τ = 2π k̃/ω_l).
    harmonic : int
        Odd harmonic k̃ whose coefficient is set to ``f_target``.
    f_target : float
        Cosine (symmetric) or sine (antisymmetric) coefficient at k̃.
    n_periods : int
        Number of periods N.
    pulse : PulseParams, optional
        Pulse model; ideal 12.5 ns pulses by default.

    Returns
    -------
    PulseSequence
    """
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}")
    if n_periods < 1:
        raise ValueError("n_periods must be positive")
    pulse = PulseParams() if pulse is None else pulse
    duration = pulse.duration
    # Antisymmetric coefficients pick up sin(k π/2) from the quarter shift.
    sign = 1.0 if flavor == "symmetric" else float(np.sin(harmonic * np.pi / 2))
    w = solve_spacing(f_target * sign, harmonic, tau, duration)
    block = _block_angles(w) * tau / TWO_PI

    half = tau / 2
    centers, phases = [], []
    for p in range(n_periods):
        for h, letter in enumerate(AXY8_PATTERN[p % 4]):
            shift = 0.0 if letter == "X" else np.pi / 2
            centers.append(p * tau + h * half + block)
            phases.append(BLOCK_PHASES + shift)
    centers = np.concatenate(centers)
    phases = np.concatenate(phases)

    if flavor == "antisymmetric":
        centers = centers - tau / 4
        early = centers < 1e-9 * tau
        centers = np.concatenate([centers[~early], centers[early] + n_periods * tau])
        phases = np.concatenate([phases[~early], phases[early]])

    return PulseSequence(
        flavor=flavor, tau=float(tau), n_periods=int(n_periods),
        centers=centers, durations=np.full_like(centers, duration),
        phases=phases, pulse=pulse, harmonic=int(harmonic),
        f_target=float(f_target), spacing=w,
    )


def modulation_value(seq, t):
    """Modulation function F(t): +1 before any pulse, flipping at each centre."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    flips = np.searchsorted(seq.centers, t, side="right")
    return 1 - 2 * (np.asarray(flips) % 2)


def _first_period_flips(seq):
    eps = 1e-9 * seq.tau
    c = seq.centers
    return c[(c > eps) & (c < seq.tau - eps)]


def modulation_fourier(seq, k, kind=None):
    """Fourier coefficient of F over the first period.

    Parameters
    ----------
    seq : PulseSequence
    k : int
        Harmonic index, k >= 1.
    kind : {"cos", "sin"}, optional
        Defaults to "cos" for symmetric and "sin" for antisymmetric trains.

    Returns
    -------
    float
        (2/τ) ∫_0^τ F(t) {cos, sin}(2πkt/τ) dt, integrated exactly over the
        piecewise-constant segments.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    kind = kind or ("cos" if seq.flavor == "symmetric" else "sin")
    tau = seq.tau
    inner = _first_period_flips(seq)
    edges = np.concatenate([[0.0], inner, [tau]])
    values = 1 - 2 * (np.arange(len(edges) - 1) % 2)
    wk = TWO_PI * k / tau
    if kind == "cos":
        prim = np.sin(wk * edges) / wk
    elif kind == "sin":
        prim = -np.cos(wk * edges) / wk
    else:
        raise ValueError("kind must be 'cos' or 'sin'")
    return float(2 / tau * np.sum(values * np.diff(prim)))


def modulation_mean(seq):
    """DC component of F over the first period."""
    tau = seq.tau
    inner = _first_period_flips(seq)
    edges = np.concatenate([[0.0], inner, [tau]])
    values = 1 - 2 * (np.arange(len(edges) - 1) % 2)
    return float(np.sum(values * np.diff(edges)) / tau)


def pulse_generator(seq, index):
    """Electron 2×2 generator (rad/s) of pulse ``index`` in the drive frame."""
    p = seq.pulse
    if seq.durations[index] == 0:
        raise ValueError("instantaneous pulses have no generator")
    omega = (1 + p.rabi_error) * np.pi / seq.durations[index]
    phi = seq.phases[index]
    return (omega / 2 * (np.cos(phi) * SIGMA_X + np.sin(phi) * SIGMA_Y)
            + p.detuning / 2 * SIGMA_Z)


def pulse_hamiltonian(seq, index, t):
    """Pulse Hamiltonian at time ``t`` inside the window of pulse ``index``.

    (Ω_eff/2)(cos φ σx + sin φ σy) + (Λ/2) σz with Ω_eff = (1 + RFE)·π/duration.
    """
    start, stop = seq.windows()[index]
    if not start <= t <= stop:
        raise ValueError(f"t={t} outside pulse window [{start}, {stop}]")
    return pulse_generator(seq, index)


def pulse_unitary(seq, index):
    """Propagator of one rectangular pulse (electron only)."""
    return expm_hermitian(pulse_generator(seq, index), seq.durations[index])


def required_f(phi_target, g, n_periods, tau, m_s=1):
    """Fourier coefficient giving a conditional phase φ = (m_s/4) f g N τ."""
    if g == 0 or n_periods < 1:
        raise ValueError("g must be non-zero and N >= 1")
    return 4 * phi_target / (m_s * g * n_periods * tau)


def write_schedule(seq, path):
    with open(path, "w") as fh:
        fh.write(seq.to_table())
