"""
Time-ordered propagation of the NV register under pulse trains and rf fields.

The electron lives in the frame rotating with its microwave drive. Nuclei
are propagated in an interaction picture with respect to ``-ω_ref Σ Iz``
(ω_ref = ω_rf when decoupling is on, else ω); this transformation is exact
and is undone at the end, so the returned propagator is the one of the
electron rotating frame with nuclei in the lab. Working in the rotating
picture removes the fast nuclear Larmor phase from every step, so a
fourth-order commutator-free Magnus step (the default) or the second-order
midpoint rule stays accurate at modest step counts.

Between pulses the Hamiltonian is block diagonal in the electron basis, so
each branch (|m_s>, |0>) is propagated on the nuclear space alone. Without
internuclear couplings the nuclear propagator factorises into closed-form
SU(2) steps; with couplings the secular H_nn (which commutes with Σ Iz) is
included by symmetric splitting around the single-spin steps. Pulse windows
are propagated on the full space with the same step rule, using
eigendecomposition for the exponentials.
"""

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .control import PulseParams, axy8_schedule, ideal_pulse
from .effective import (
    bare_frame, dressed_parameters, frame_rotation, nuclear_frame, resonance_frequency,
    _axis_terms,
)
from .operators import (
    SIGMA_X, SIGMA_Y, SIGMA_Z, batched_kron, expm_hermitian_batch, kron_all,
    spin_half_ops, spin_operators, su2_exp, expm_hermitian, quaternion_matrix,
    quaternion_product, su2_quaternion,
)
from .system import secular_dipolar_hamiltonian

TWO_PI = 2 * np.pi
FRAMES = ("electron_rotating", "nuclear_interaction")


@dataclass(frozen=True)
class EvolutionPolicy:
    """Step-size policy.

    The step is min(dt_max, phase_cap/‖H‖, T_fastest/steps_per_period), with
    T_fastest = 2π/max(ω_rf, ω, ω_c) between pulses and the pulse Rabi
    frequency added inside pulse windows. ``frame`` selects the nuclear
    reference rotation (``electron_rotating`` keeps nuclei in the lab).
    ``split_couplings`` toggles symmetric splitting of H_nn between pulses
    (otherwise each step is diagonalised on the nuclear space). ``order``
    selects the exponential midpoint rule (2) or the fourth-order
    commutator-free Magnus rule with two Gauss nodes (4). ``coupling_dt``
    is the longest block of single-spin steps between two half-steps of
    the coupling H_nn.
    """

    dt_max: float = np.inf
    phase_cap: float = 0.1
    frame: str = "nuclear_interaction"
    steps_per_period: int = 40
    split_couplings: bool = True
    dt_min: float = 1e-15
    order: int = 4
    coupling_dt: float = 1e-8

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ValueError(f"unknown frame {self.frame!r}")
        if self.phase_cap <= 0 or self.steps_per_period < 1:
            raise ValueError("invalid policy parameters")
        if self.order not in (2, 4):
            raise ValueError("order must be 2 (midpoint) or 4 (two-node Magnus)")

    def scaled(self, factor):
        """Policy with every step-size bound multiplied by ``factor``."""
        return replace(self, dt_max=self.dt_max * factor,
                       phase_cap=self.phase_cap * factor,
                       steps_per_period=max(1, int(round(self.steps_per_period / factor))))


def reference_frequency(fields, policy):
    if policy.frame == "electron_rotating":
        return 0.0
    if fields.decouple is not None and fields.decouple.amplitude != 0:
        return fields.decouple.freq
    return fields.larmor


class _FieldModel:
    """Per-nucleus effective fields h(t) in the nuclear interaction frame."""

    def __init__(self, register, fields, omega_ref):
        self.A = register.hyperfine
        self.n = register.n_nuclei
        self.m_s = register.m_s
        self.omega = fields.larmor
        self.ref = omega_ref
        self.dec = fields.decouple
        self.ctl = fields.control

    def max_norm(self):
        a = np.max(np.linalg.norm(self.A, axis=1)) if self.n else 0.0
        h = abs(self.omega - self.ref) + abs(self.m_s) * a
        if self.dec is not None:
            h += 2 * abs(self.dec.amplitude)
        if self.ctl is not None:
            h += 2 * abs(self.ctl.amplitude)
        return h

    def fastest(self):
        w = [abs(self.omega)]
        if self.dec is not None:
            w.append(abs(self.dec.freq))
        if self.ctl is not None:
            w.append(abs(self.ctl.freq))
        return max(w)

    def __call__(self, t, c):
        """Fields (len(t), n, 3) for electron-branch coefficient ``c``."""
        t = np.asarray(t, dtype=float)
        lab = np.broadcast_to(c * self.A, t.shape + (self.n, 3)).copy()
        if self.dec is not None:
            lab += (2 * self.dec.amplitude * np.cos(self.dec.freq * t))[:, None, None] * self.dec.axis
        if self.ctl is not None:
            amp = 2 * self.ctl.amplitude * np.cos(self.ctl.freq * t + self.ctl.phase)
            lab += amp[:, None, None] * self.ctl.axis
        th = self.ref * t
        ct, st = np.cos(th)[:, None], np.sin(th)[:, None]
        out = np.empty_like(lab)
        out[..., 0] = lab[..., 0] * ct - lab[..., 1] * st
        out[..., 1] = lab[..., 0] * st + lab[..., 1] * ct
        out[..., 2] = lab[..., 2] + (self.ref - self.omega)
        return out


_SQ3 = np.sqrt(3) / 6


def _scheme(order):
    """Nodes (fractions of a step) and per-exponential weights, first applied first."""
    if order == 2:
        return np.array([0.5]), np.array([[1.0]])
    a1, a2 = 0.25 - _SQ3, 0.25 + _SQ3
    return np.array([0.5 - _SQ3, 0.5 + _SQ3]), np.array([[a2, a1], [a1, a2]])


def _combined(values, weights):
    return [sum(w * v for w, v in zip(row, values)) for row in weights]


def _step_counts(lengths, dt):
    n = np.maximum(1, np.ceil(lengths / dt - 1e-9).astype(int))
    n[lengths <= 0] = 0
    return n


def _by_length(counts):
    """Permutation sorting intervals by step count (descending) and the active-prefix sizes."""
    perm = np.argsort(-counts, kind="stable")
    neg = -counts[perm]
    return perm, lambda s: int(np.searchsorted(neg, -s, side="left"))


def _advance(acc, model, t0, h, coeffs, nodes, weights):
    """One integration step of per-nucleus quaternions ``acc`` (k, n, 4)."""
    c = coeffs[:, None, None]
    for f in _combined([model(t0 + x * h, c) for x in nodes], weights):
        acc[:] = quaternion_product(su2_quaternion(f, h[:, None]), acc)
    return acc


def _single_spin_products(model, starts, lengths, coeffs, dt, order=4):
    """Per-nucleus SU(2) propagators over free intervals, shape (m, n, 2, 2)."""
    m, n = len(starts), model.n
    counts = _step_counts(lengths, dt)
    perm, active = _by_length(counts)
    st, ln, co, cn = starts[perm], lengths[perm], coeffs[perm], counts[perm]
    h = np.where(cn > 0, ln / np.maximum(cn, 1), 0.0)
    nodes, weights = _scheme(order)
    acc = np.zeros((m, n, 4))
    acc[..., 0] = 1.0
    for s in range(int(counts.max(initial=0))):
        k = active(s)
        _advance(acc[:k], model, st[:k] + s * h[:k], h[:k], co[:k], nodes, weights)
    out = np.empty_like(acc)
    out[perm] = acc
    return quaternion_matrix(out)


def _free_propagators(model, hnn, starts, lengths, coeffs, dt, split=True, order=4, macro=1):
    """Nuclear-space propagators of free intervals.

    Parameters
    ----------
    model : _FieldModel
    hnn : numpy.ndarray or None
        Secular coupling on the nuclear space, or None.
    starts, lengths : numpy.ndarray
        Interval start times and lengths (s), shape (m,).
    coeffs : numpy.ndarray
        Electron-branch coefficient of each interval (m_s or 0), shape (m,).
    dt : float
        Maximum step.
    split : bool
        Include H_nn by symmetric splitting around blocks of ``macro``
        single-spin steps; otherwise diagonalise the full nuclear
        Hamiltonian at every step.
    order : {2, 4}
        Integration rule, see :class:`EvolutionPolicy`.

    Returns
    -------
    numpy.ndarray
        Shape (m, d, d) with d = 2**n.
    """
    m = len(starts)
    n = model.n
    d = 2**n
    if n == 0:
        return np.ones((m, 1, 1), dtype=complex)
    coupled = hnn is not None and np.any(hnn != 0)
    if not coupled:
        acc = _single_spin_products(model, starts, lengths, coeffs, dt, order)
        return batched_kron([acc[:, j] for j in range(n)])

    counts = _step_counts(lengths, dt)
    perm, active = _by_length(counts)
    st, ln, co, cn = starts[perm], lengths[perm], coeffs[perm], counts[perm]
    h = np.where(cn > 0, ln / np.maximum(cn, 1), 0.0)
    nodes, weights = _scheme(order)
    acc = np.broadcast_to(np.eye(d, dtype=complex), (m, d, d)).copy()

    if not split:
        ops = spin_half_ops(n)
        for s in range(int(counts.max(initial=0))):
            k = active(s)
            t0 = st[:k] + s * h[:k]
            for f in _combined([model(t0 + x * h[:k], co[:k, None, None]) for x in nodes],
                               weights):
                H = np.einsum("pja,jaxy->pxy", f, ops) + hnn * weights[0].sum()
                acc[:k] = expm_hermitian_batch(H, h[:k]) @ acc[:k]
        out = np.empty_like(acc)
        out[perm] = acc
        return out

    w, v = np.linalg.eigh(hnn)
    vh = v.conj().T
    macro = max(1, int(macro))
    n_steps = int(counts.max(initial=0))
    for q in range(0, n_steps, macro):
        k = active(q)
        blk = np.zeros((k, n, 4))
        blk[..., 0] = 1.0
        for s in range(q, min(q + macro, n_steps)):
            ks = active(s)
            _advance(blk[:ks], model, st[:ks] + s * h[:ks], h[:ks], co[:ks], nodes, weights)
        span = (np.minimum(cn[:k], q + macro) - q) * h[:k]
        half = (v * np.exp(-0.5j * np.outer(span, w))[:, None, :]) @ vh
        blk = quaternion_matrix(blk)
        kron = batched_kron([blk[:, j] for j in range(n)])
        acc[:k] = half @ (kron @ (half @ acc[:k]))
    out = np.empty_like(acc)
    out[perm] = acc
    return out


def _pulse_propagators(model, hnn, seq, idx, dt, order=4):
    """Full-space propagators of the pulse windows ``idx``."""
    n = model.n
    d = 2**n
    dur = seq.durations[idx]
    starts = seq.centers[idx] - dur / 2
    counts = _step_counts(dur, dt)
    h = dur / counts
    pulse = seq.pulse
    omega_eff = (1 + pulse.rabi_error) * np.pi / dur
    phi = seq.phases[idx]
    he = (omega_eff / 2)[:, None, None] * (
        np.cos(phi)[:, None, None] * SIGMA_X + np.sin(phi)[:, None, None] * SIGMA_Y
    ) + pulse.detuning / 2 * SIGMA_Z
    eye = np.eye(d)
    H_e = np.einsum("pab,xy->paxby", he, eye).reshape(len(idx), 2 * d, 2 * d)
    ops = spin_half_ops(n)
    hnn = np.zeros((d, d), dtype=complex) if hnn is None else hnn
    nodes, weights = _scheme(order)

    def full_h(tm, act):
        H = H_e[act].copy()
        for b, c in enumerate((model.m_s, 0.0)):
            if n:
                f = model(tm, np.full((len(act), 1, 1), c))
                hb = np.einsum("pja,jaxy->pxy", f, ops) + hnn
                H[:, b * d:(b + 1) * d, b * d:(b + 1) * d] += hb
        return H

    acc = np.broadcast_to(np.eye(2 * d, dtype=complex), (len(idx), 2 * d, 2 * d)).copy()
    for s in range(int(counts.max())):
        act = np.nonzero(s < counts)[0]
        t0 = starts[act] + s * h[act]
        for H in _combined([full_h(t0 + x * h[act], act) for x in nodes], weights):
            acc[act] = expm_hermitian_batch(H, h[act]) @ acc[act]
    return acc


def ordered_product(mats):
    """mats[-1] @ ... @ mats[0] by pairwise reduction."""
    mats = np.asarray(mats)
    if len(mats) == 0:
        raise ValueError("empty product")
    while len(mats) > 1:
        if len(mats) % 2:
            eye = np.broadcast_to(np.eye(mats.shape[-1]), (1,) + mats.shape[1:])
            mats = np.concatenate([mats, eye], axis=0)
        mats = mats[1::2] @ mats[0::2]
    return mats[0]


@dataclass
class Evolution:
    """Result of :func:`evolve` with bookkeeping for reports."""

    unitary: np.ndarray
    t_end: float
    n_steps: int
    wall_time: float


def _bounds(model, hnn, policy, detuning, rabi=None):
    norm = model.n * model.max_norm() / 2 + abs(detuning) / 2
    if hnn is not None:
        norm += np.linalg.norm(hnn, 2)
    fastest = model.fastest()
    if rabi is not None:
        norm += rabi / 2
        fastest = max(fastest, rabi)
    dt = min(policy.dt_max, TWO_PI / fastest / policy.steps_per_period)
    if norm > 0:
        dt = min(dt, policy.phase_cap / norm)
    if dt < policy.dt_min:
        raise ValueError(f"step size {dt:g} s below the policy minimum")
    return dt


def evolve(register, fields, sequence=None, policy=None, t_end=None, return_info=False):
    """Propagator of the register from 0 to ``t_end``.

    Parameters
    ----------
    register : SpinRegister
    fields : FieldConfig
    sequence : PulseSequence, optional
        Pulse train; free evolution when None.
    policy : EvolutionPolicy, optional
    t_end : float, optional
        Defaults to ``sequence.t_end``. Pulse windows may not straddle it.

    Returns
    -------
    numpy.ndarray
        Unitary of dimension 2**(1+n) in the electron rotating frame, basis
        electron ⊗ nuclei with electron order [|m_s>, |0>].
    """
    t0 = time.perf_counter()
    policy = policy or EvolutionPolicy()
    if t_end is None:
        if sequence is None:
            raise ValueError("t_end is required without a pulse sequence")
        t_end = sequence.t_end
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    n = register.n_nuclei
    d = 2**n
    ref = reference_frequency(fields, policy)
    model = _FieldModel(register, fields, ref)
    hnn = secular_dipolar_hamiltonian(register, include_electron=False) if n >= 2 else None
    if hnn is not None and not np.any(hnn):
        hnn = None

    pulse = sequence.pulse if sequence is not None else PulseParams()
    detuning = pulse.detuning if sequence is not None else 0.0
    if sequence is not None and sequence.n_pulses:
        # a zero-width pulse sitting on t_end belongs to the sequence
        tol = 1e-12 * max(t_end, sequence.tau)
        begin = sequence.centers - sequence.durations / 2
        keep = begin < t_end + (tol if sequence.instantaneous else 0.0)
        windows = sequence.windows()[keep]
        if len(windows) and windows[-1, 1] > t_end + 1e-15:
            raise ValueError("t_end cuts through a pulse window")
        idx = np.nonzero(keep)[0]
    else:
        windows = np.zeros((0, 2))
        idx = np.zeros(0, dtype=int)

    edges_a = np.concatenate([[0.0], windows[:, 1]])
    edges_b = np.concatenate([windows[:, 0], [t_end]])
    lengths = np.maximum(edges_b - edges_a, 0.0)

    dt = _bounds(model, hnn, policy, detuning)
    m = len(edges_a)
    starts = np.concatenate([edges_a, edges_a])
    coeffs = np.concatenate([np.full(m, float(register.m_s)), np.zeros(m)])
    props = _free_propagators(model, hnn, starts, np.concatenate([lengths, lengths]),
                              coeffs, dt, policy.split_couplings, policy.order,
                              macro=policy.coupling_dt / dt)
    steps = int(2 * _step_counts(lengths, dt).sum())
    phase = np.exp(-1j * detuning * lengths / 2)
    free = np.zeros((m, 2 * d, 2 * d), dtype=complex)
    free[:, :d, :d] = phase[:, None, None] * props[:m]
    free[:, d:, d:] = phase.conj()[:, None, None] * props[m:]

    if len(idx) and not sequence.instantaneous:
        rabi = (1 + pulse.rabi_error) * np.pi / sequence.durations[idx].min()
        dtp = _bounds(model, hnn, policy, detuning, rabi)
        pulses = _pulse_propagators(model, hnn, sequence, idx, dtp, policy.order)
        steps += int(_step_counts(sequence.durations[idx], dtp).sum())
    elif len(idx):
        eye = np.eye(d)
        pulses = np.array([np.kron(ideal_pulse(p), eye) for p in sequence.phases[idx]])
    else:
        pulses = np.zeros((0, 2 * d, 2 * d), dtype=complex)

    chain = np.empty((m + len(pulses), 2 * d, 2 * d), dtype=complex)
    chain[0::2] = free
    chain[1::2] = pulses
    u = ordered_product(chain)
    if ref != 0 and n:
        rz = np.exp(1j * ref * t_end * _total_iz_diag(n))
        u = np.tile(rz, 2)[:, None] * u
    if return_info:
        return Evolution(u, float(t_end), steps, time.perf_counter() - t0)
    return u


def _total_iz_diag(n):
    """Diagonal of Σ Iz on n spins (basis |↑>=index 0)."""
    bits = (np.arange(2**n)[:, None] >> np.arange(n)[::-1]) & 1
    return (0.5 - bits).sum(axis=1)


def coherence(u):
    """L = 1 - 2 Tr[ρ(t) |+><+| ⊗ 1] for ρ(0) = |+><+| ⊗ 1/d."""
    dim = u.shape[0] // 2
    m = 0.5 * (u[:dim, :dim] + u[:dim, dim:] + u[dim:, :dim] + u[dim:, dim:])
    return float(1 - 2 * np.sum(np.abs(m) ** 2) / dim)


def gate_fidelity(a, b):
    """|Tr(A B†)| / sqrt(Tr(A A†) Tr(B B†))."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    num = abs(np.vdot(b, a))
    den = np.sqrt(np.vdot(a, a).real * np.vdot(b, b).real)
    return float(num / den)


# ---------------------------------------------------------------------------
# Frames and gates


def register_frames(register, fields, dp=None):
    """Reference frame of every nucleus (dressed when decoupling is on).

    Nuclei whose coupling vector vanishes still get a precession axis; their
    x/y axes are then arbitrary.
    """
    frames = []
    for nuc in register.nuclei:
        try:
            if dp is not None:
                frames.append(nuclear_frame(nuc.hyperfine, dp, register.m_s))
            else:
                frames.append(bare_frame(nuc.hyperfine, fields.larmor, register.m_s))
        except ValueError:
            frames.append(_fallback_frame(nuc.hyperfine, fields, dp, register.m_s))
    return frames


def _fallback_frame(A, fields, dp, m_s):
    from .effective import NuclearFrame
    if dp is not None:
        a, b = _axis_terms(A[2], dp, m_s)
        w = np.hypot(a, b)
        n_j = dp.in_frame([a / w, 0.0, b / w])
        kind = "dressed"
    else:
        h = np.array([0.0, 0.0, -fields.larmor]) + m_s / 2 * np.asarray(A)
        w = np.linalg.norm(h)
        n_j = h / w
        kind = "bare"
    trial = np.array([1.0, 0.0, 0.0]) if abs(n_j[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = trial - np.dot(trial, n_j) * n_j
    x /= np.linalg.norm(x)
    return NuclearFrame(float(w), n_j, 0.0, x, np.cross(n_j, x), kind)


def fields_dressing(fields):
    dec = fields.decouple
    if dec is None or dec.amplitude == 0:
        return None
    return dressed_parameters(fields.B_z, dec.axis, dec.amplitude, dec.freq, fields.gyro)


def frame_operator(register, fields, sequence, t):
    """Electron ideal-pulse product ⊗ per-nucleus reference rotations at ``t``."""
    dp = fields_dressing(fields)
    frames = register_frames(register, fields, dp)
    nuc = [frame_rotation(fr, t, dp) for fr in frames]
    if sequence is not None and sequence.n_pulses:
        keep = sequence.centers <= t
        p = np.eye(2, dtype=complex)
        for ph in sequence.phases[keep]:
            p = ideal_pulse(ph) @ p
    else:
        p = np.eye(2, dtype=complex)
    return kron_all([p] + nuc) if nuc else p


def realized_gate(register, fields, sequence, policy=None, t_end=None, return_info=False):
    """Propagator expressed in the nuclear reference frames.

    Returns (P ⊗ R_1 ⊗ ... ⊗ R_n)† U where U is the simulated propagator, P
    the ideal electron pulse product and R_j the per-nucleus frame chain
    (dressed or bare). The result is directly comparable to gates written
    with I_j^{x,y,z} = x̂_j·I, ŷ_j·I, ẑ_j·I.
    """
    info = evolve(register, fields, sequence, policy, t_end, return_info=True)
    frame = frame_operator(register, fields, sequence, info.t_end)
    u = frame.conj().T @ info.unitary
    if return_info:
        info.unitary = u
        return info
    return u


def nuclear_axis_operator(register, j, axis):
    """v·I_j embedded on the full electron ⊗ nuclei space."""
    n = register.n_nuclei
    ops = spin_operators("half")
    local = sum(c * o for c, o in zip(axis, ops))
    mats = [np.eye(2)] + [local if k == j else np.eye(2) for k in range(n)]
    return kron_all(mats)


def target_gate(register, fields, j, kind, axis, angle):
    """Target unitary for nucleus ``j``.

    kind "entangling": exp(-i angle σz I_j^axis); kind "single":
    exp(-i angle I_j^axis). ``axis`` is "x" or "y" in the frame of nucleus j.
    Spectator nuclei and (for single gates) the electron carry identities.
    """
    dp = fields_dressing(fields)
    frame = register_frames(register, fields, dp)[j]
    vec = frame.x_j if axis == "x" else frame.y_j
    op = nuclear_axis_operator(register, j, vec)
    if kind == "entangling":
        sz = np.kron(SIGMA_Z, np.eye(2**register.n_nuclei))
        gen = sz @ op
    elif kind == "single":
        gen = op
    else:
        raise ValueError(f"unknown gate kind {kind!r}")
    return expm_hermitian(gen, angle)


# ---------------------------------------------------------------------------
# Scans


@dataclass(frozen=True)
class ScheduleFamily:
    """Recipe turning a drive frequency into an AXY-8 pulse train."""

    flavor: str = "symmetric"
    harmonic: int = 1
    f: float = 0.0
    n_periods: int = 600
    pulse: PulseParams = field(default_factory=PulseParams)

    def build(self, drive_freq):
        tau = TWO_PI * self.harmonic / drive_freq
        return axy8_schedule(self.flavor, tau, self.harmonic, self.f, self.n_periods, self.pulse)


def _scan_point(args):
    register, fields, family, freq, policy = args
    seq = family.build(freq)
    return coherence(evolve(register, fields, seq, policy))


def map_points(fn, items, workers=1):
    """Deterministic ordered map, optionally over worker processes."""
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def coherence_scan(register, fields, family, frequency_grid, policy=None, workers=1):
    """Coherence L at every drive frequency of ``frequency_grid`` (rad/s).

    Returns
    -------
    numpy.ndarray
        Shape (m, 2): drive angular frequency and L.
    """
    grid = np.asarray(frequency_grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("frequency grid is empty")
    policy = policy or EvolutionPolicy()
    vals = map_points(_scan_point, [(register, fields, family, f, policy) for f in grid], workers)
    return np.column_stack([grid, vals])


# ---------------------------------------------------------------------------
# Decoupling-field approximation


def _nuclear_free_evolution(fields, times, policy, chunks=4096):
    """Single bare nucleus (no electron coupling) propagators at ``times``."""
    from .system import Nucleus, SpinRegister
    reg = SpinRegister((Nucleus(hyperfine=np.zeros(3)),))
    ref = reference_frequency(fields, policy)
    model = _FieldModel(reg, fields, ref)
    times = np.asarray(times, dtype=float)
    t_max = times.max()
    edges = np.union1d(np.linspace(0, t_max, chunks + 1), times)
    dt = _bounds(model, None, policy, 0.0)
    props = _free_propagators(model, None, edges[:-1], np.diff(edges),
                              np.zeros(len(edges) - 1), dt, order=policy.order)
    out = {}
    acc = np.eye(2, dtype=complex)
    wanted = set(np.round(times, 15))
    if 0.0 in wanted:
        out[0.0] = acc.copy()
    for k, u in enumerate(props):
        acc = u @ acc
        t = edges[k + 1]
        if np.round(t, 15) in wanted:
            rz = np.diag(np.exp(1j * ref * t * np.array([0.5, -0.5])))
            out[np.round(t, 15)] = rz @ acc
    return np.array([out[np.round(t, 15)] for t in times])


def refined_effective_propagator(dp, t):
    """exp(-i ω_rf t Iz) exp(-i ξ t ñ·I) exp(-i H_eff t) for a bare nucleus."""
    hx = dp.Delta * dp.nt_x + dp.omega_x / 2 * (1 - dp.nt_x**2 - dp.nt_z)
    hz = dp.Delta * dp.nt_z + dp.omega_x / 2 * dp.nt_x * (1 - dp.nt_z)
    h = dp.in_frame([hx, 0.0, hz])
    u = su2_exp(h, t)
    u = su2_exp(dp.xi * dp.n_tilde, t) @ u
    return su2_exp(np.array([0.0, 0.0, dp.omega_rf]), t) @ u


def rwa_propagator(fields, t):
    """exp(+i ω_rf t Iz) exp(-i [-(ω - ω_rf) Iz + Ω (n_x Ix + n_y Iy)] t)."""
    dec = fields.decouple
    h = np.array([dec.amplitude * dec.axis[0], dec.amplitude * dec.axis[1],
                  -(fields.larmor - dec.freq)])
    u = su2_exp(h, t)
    return su2_exp(np.array([0.0, 0.0, -dec.freq]), t) @ u


def tilted_axis(base, angle, direction):
    """Rotate ``base`` by ``angle`` towards the unit vector ``direction``."""
    base = np.asarray(base, dtype=float)
    direction = np.asarray(direction, dtype=float)
    direction = direction - np.dot(direction, base) * base
    direction /= np.linalg.norm(direction)
    return np.cos(angle) * base + np.sin(angle) * direction


def rwa_comparison(B_z, Delta, misalignment, t_grid, policy=None, directions=None):
    """Fidelity of the refined and plain-RWA descriptions of a dressed nucleus.

    The rf amplitude and frequency are solved on the magic angle for an
    ideal x axis; the actual field is tilted by ``misalignment`` (rad)
    towards each of ``directions`` (default ±y, ±z). Both effective models
    use the actual tilted axis.

    Returns
    -------
    dict
        ``t`` and, per direction label, arrays ``refined`` and ``rwa``.
    """
    from .effective import solve_magic_angle
    from .system import DecouplingField, FieldConfig
    policy = policy or EvolutionPolicy()
    t_grid = np.asarray(t_grid, dtype=float)
    ox, wrf = solve_magic_angle(B_z, Delta)
    if directions is None:
        directions = {"+y": (0, 1, 0), "-y": (0, -1, 0), "+z": (0, 0, 1), "-z": (0, 0, -1)}
    out = {"t": t_grid, "omega_x": ox, "omega_rf": wrf}
    for label, direction in directions.items():
        axis = tilted_axis([1.0, 0.0, 0.0], misalignment, direction)
        fields = FieldConfig(B_z, DecouplingField(ox, wrf, axis))
        exact = _nuclear_free_evolution(fields, t_grid, policy)
        dp = fields_dressing(fields)
        ref = np.array([refined_effective_propagator(dp, t) for t in t_grid])
        rwa = np.array([rwa_propagator(fields, t) for t in t_grid])
        out[label] = {
            "refined": np.array([gate_fidelity(a, b) for a, b in zip(exact, ref)]),
            "rwa": np.array([gate_fidelity(a, b) for a, b in zip(exact, rwa)]),
        }
    return out
