"""
Closed-form effective theory of the rf-dressed nuclear register.

The nuclear Zeeman and rf terms are moved into a counter-rotating frame
(rotation ω_rf about z) and a second frame rotating at ξ = 2ω_rf about the
dressed axis ñ. The remaining static field on nucleus j has magnitude ω_j
along n̂_j, and the hyperfine component (A·z)(z·ñ)ñ, seen from that frame,
couples the electron to the nucleus with strength g_j.

Vectors carrying a direction are expressed in the simulation frame. When the
rf axis has a y component, every derived vector is rotated about z by the
azimuth of the rf axis.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .operators import su2_exp

TWO_PI = 2 * np.pi
SQRT2 = np.sqrt(2.0)
DEGENERATE_SIN = 1e-6


def _rot_z(psi):
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _axis_components(axis):
    """Split an axis into (signed in-plane component, z component, azimuth)."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    perp = np.hypot(axis[0], axis[1])
    if perp == 0:
        return 0.0, axis[2], 0.0
    psi = np.arctan2(axis[1], axis[0])
    if psi > np.pi / 2:
        psi -= np.pi
    elif psi <= -np.pi / 2:
        psi += np.pi
    signed = axis[0] * np.cos(psi) + axis[1] * np.sin(psi)
    return signed, axis[2], psi


@dataclass(frozen=True, eq=False)
class DressedParameters:
    """Derived quantities of the rf-dressed frame (all rates in rad/s).

    ``nt_x`` and ``nt_z`` are the components of ñ in the plane spanned by z
    and the rf axis; ``n_tilde`` is the same unit vector in the simulation
    frame.
    """

    omega: float
    omega_rf: float
    omega_x: float
    omega_z: float
    omega_tilde: float
    nt_x: float
    nt_z: float
    Delta: float
    xi: float
    delta: float
    azimuth: float = 0.0

    @property
    def n_tilde(self):
        return _rot_z(self.azimuth) @ np.array([self.nt_x, 0.0, self.nt_z])

    def in_frame(self, v):
        """Map a vector from the rf plane (x, z) into the simulation frame."""
        return _rot_z(self.azimuth) @ np.asarray(v, dtype=float)


def _dressed_delta(omega, omega_rf, omega_x):
    # ω̃ - 2ω_rf written without cancellation between large numbers.
    s = omega + omega_rf
    x2 = (omega_x / s) ** 2
    return s * x2 / (np.sqrt(1 + x2) + 1) + (omega - omega_rf)


def dressed_parameters(B_z, axis, amplitude, omega_rf, gyro=None):
    """Dressed-frame parameters for a decoupling field 2Ω cos(ω_rf t) n̂·I.

    Parameters
    ----------
    B_z : float
        Static field in tesla.
    axis : array_like
        rf axis n̂.
    amplitude : float
        Ω in rad/s (the field term is 2Ω cos(ω_rf t)).
    omega_rf : float
        rf angular frequency.

    Returns
    -------
    DressedParameters
    """
    from .system import GAMMA_N
    gyro = GAMMA_N if gyro is None else gyro
    omega = gyro * B_z
    n_perp, n_z, psi = _axis_components(axis)
    omega_x = amplitude * n_perp
    omega_z = amplitude * n_z
    s = omega + omega_rf
    omega_tilde = np.hypot(s, omega_x)
    Delta = _dressed_delta(omega, omega_rf, omega_x)
    if Delta == 0:
        raise ValueError("degenerate dressing: Delta = 0")
    nt_x, nt_z = omega_x / omega_tilde, -s / omega_tilde
    delta = nt_x + omega_x / (2 * Delta) * (1 - nt_x**2 - nt_z)
    return DressedParameters(
        omega=omega, omega_rf=omega_rf, omega_x=omega_x, omega_z=omega_z,
        omega_tilde=omega_tilde, nt_x=nt_x, nt_z=nt_z, Delta=Delta,
        xi=2 * omega_rf, delta=delta, azimuth=psi,
    )


def magic_angle_residual(dp):
    """Difference of the two sides of the hyperfine-free magic-angle relation."""
    r = dp.omega_x / (2 * dp.Delta)
    lhs = dp.nt_x + r * (1 - dp.nt_x**2 - dp.nt_z)
    rhs = SQRT2 * (dp.nt_z + r * dp.nt_x * (1 - dp.nt_z))
    return lhs - rhs


def solve_magic_angle(B_z, Delta_target, axis=(1.0, 0.0, 0.0), gyro=None,
                      init=None, max_iter=200, tol=1e-12):
    """Solve for (Ω_x, ω_rf) giving the requested Δ on the magic angle.

    Damped Newton iteration on the scaled unknowns (Ω_x/Δ, (ω - ω_rf)/Δ)
    with a finite-difference Jacobian, started from Ω_x = √2 Δ,
    ω_rf = ω - Δ unless ``init`` is given.

    Returns
    -------
    tuple of float
        (Ω_x, ω_rf) in rad/s. The rf amplitude is Ω = Ω_x / n_⊥.

    Raises
    ------
    RuntimeError
        If the residual does not drop below ``tol`` within ``max_iter`` steps.
    """
    from .system import GAMMA_N
    if Delta_target == 0:
        raise ValueError("Delta_target must be non-zero")
    n_perp, _, _ = _axis_components(axis)
    if n_perp == 0:
        raise ValueError("rf axis needs a component perpendicular to z")
    gyro = GAMMA_N if gyro is None else gyro
    omega = gyro * B_z
    D = Delta_target

    def unpack(u):
        return u[0] * D, omega - u[1] * D

    def residual(u):
        ox, wrf = unpack(u)
        dp = dressed_parameters(B_z, axis, ox / n_perp, wrf, gyro)
        return np.array([dp.Delta / D - 1.0, magic_angle_residual(dp)])

    u = np.array([SQRT2, 1.0]) if init is None else np.array(
        [init[0] / D, (omega - init[1]) / D])
    r = residual(u)
    for _ in range(max_iter):
        if np.max(np.abs(r)) < tol:
            ox, wrf = unpack(u)
            return float(ox), float(wrf)
        h = 1e-7
        jac = np.empty((2, 2))
        for i in range(2):
            du = np.zeros(2)
            du[i] = h
            jac[:, i] = (residual(u + du) - residual(u - du)) / (2 * h)
        step = np.linalg.solve(jac, -r)
        lam = 1.0
        while lam > 1e-4:
            trial = u + lam * step
            rt = residual(trial)
            if np.all(np.isfinite(rt)) and np.linalg.norm(rt) < np.linalg.norm(r):
                break
            lam /= 2
        u, r = trial, rt
    raise RuntimeError("magic-angle solver did not converge")


def magic_angle_parameters(B_z, Delta_target, axis=(1.0, 0.0, 0.0), gyro=None):
    """Dressed parameters at the magic-angle operating point."""
    ox, wrf = solve_magic_angle(B_z, Delta_target, axis, gyro)
    n_perp, _, _ = _axis_components(axis)
    return dressed_parameters(B_z, axis, ox / n_perp, wrf, gyro)


def _axis_terms(A_z, dp, m_s):
    a = dp.Delta * dp.delta + m_s / 2 * dp.nt_z * dp.nt_x * A_z
    b = dp.Delta * dp.delta / SQRT2 + m_s / 2 * dp.nt_z**2 * A_z
    return a, b


def resonance_frequency(A_z, dp, m_s=1):
    """Low-branch resonance ω_j = |Δ| sqrt([δ + c_x A_z]^2 + [δ/√2 + c_z A_z]^2)."""
    a, b = _axis_terms(np.asarray(A_z, dtype=float), dp, m_s)
    return np.hypot(a, b)


@dataclass(frozen=True, eq=False)
class NuclearFrame:
    """Precession frequency, axis and coupling frame of one nucleus."""

    omega_j: float
    n_j: np.ndarray
    g_j: float
    x_j: np.ndarray
    y_j: np.ndarray
    kind: str = "dressed"

    @property
    def z_j(self):
        return self.n_j

    def basis(self):
        return np.array([self.x_j, self.y_j, self.z_j])


def _frame_from_vector(omega_j, n_j, coupling_vec, kind):
    x_vec = coupling_vec - np.dot(coupling_vec, n_j) * n_j
    g = np.linalg.norm(x_vec)
    if g <= DEGENERATE_SIN * max(np.linalg.norm(coupling_vec), 1e-300):
        raise ValueError("degenerate axis: coupling vector parallel to precession axis")
    x_hat = x_vec / g
    return NuclearFrame(float(omega_j), n_j, float(g), x_hat, np.cross(n_j, x_hat), kind)


def nuclear_frame(A, dp, m_s=1):
    """Dressed-frame resonance, axis n̂_j, coupling g_j and frame of a nucleus.

    The frame vectors follow x_j ∝ γ3 - (γ3·n̂_j) n̂_j and y_j = n̂_j × x̂_j
    with γ3 = (A·z)(z·ñ) ñ, so g_j = |A_z ñ_z sin θ(ñ, n̂_j)|.

    Raises
    ------
    ValueError
        If A_z = 0 or ñ is parallel to n̂_j (g_j undefined).
    """
    A = np.asarray(A, dtype=float)
    a, b = _axis_terms(A[2], dp, m_s)
    omega_j = np.hypot(a, b)
    n_j = dp.in_frame([a / omega_j, 0.0, b / omega_j])
    gamma3 = A[2] * dp.nt_z * dp.n_tilde
    return _frame_from_vector(omega_j, n_j, gamma3, "dressed")


def coupling_strength(A_z, dp, m_s=1):
    """g_j without building the frame; zero when A_z = 0."""
    a, b = _axis_terms(np.asarray(A_z, dtype=float), dp, m_s)
    n_j = np.stack([a, b], -1) / np.hypot(a, b)[..., None]
    sin = np.abs(dp.nt_x * n_j[..., 1] - dp.nt_z * n_j[..., 0])
    return np.abs(A_z * dp.nt_z) * sin


def bare_resonance(A, omega, m_s=1):
    """|ω z - (m_s/2) A| for a nucleus without rf dressing."""
    A = np.asarray(A, dtype=float)
    h = -(m_s / 2) * A
    h = h + np.array([0.0, 0.0, omega])
    return np.linalg.norm(h, axis=-1)


def bare_frame(A, omega, m_s=1):
    """Frame of a nucleus precessing about -ω z + (m_s/2) A (no decoupling).

    g_l = |A - (A·ĥ) ĥ| with ĥ the precession axis.
    """
    A = np.asarray(A, dtype=float)
    h = np.array([0.0, 0.0, -omega]) + m_s / 2 * A
    omega_l = np.linalg.norm(h)
    return _frame_from_vector(omega_l, h / omega_l, A, "bare")


def frame_rotation(frame, t, dp=None):
    """Nuclear 2×2 reference propagator of the interaction-frame chain.

    Dressed: exp(-i ω_rf t Iz) exp(-i ξ t ñ·I) exp(-i ω_j t n̂_j·I).
    Bare: exp(-i ω_l t n̂_l·I).
    """
    u = su2_exp(frame.omega_j * frame.n_j, t)
    if frame.kind == "dressed":
        if dp is None:
            raise ValueError("dressed frames need the dressed parameters")
        u = su2_exp(dp.xi * dp.n_tilde, t) @ u
        u = su2_exp(np.array([0.0, 0.0, dp.omega_rf]), t) @ u
    return u


def branch_map(A, dp, n_c=(0.0, 0.0, 1.0), m_s=1):
    """Decomposition of hyperfine and control couplings into resonance branches.

    Returns
    -------
    dict
        ``terms``: list of records with the vector, its components
        perpendicular/parallel to n̂_j and the carrier frequencies (rad/s) of
        each component; ``frame``: the NuclearFrame used.
    """
    A = np.asarray(A, dtype=float)
    z = np.array([0.0, 0.0, 1.0])
    nt = dp.n_tilde
    frame = nuclear_frame(A, dp, m_s)
    n_j = frame.n_j
    w, wrf = frame.omega_j, dp.omega_rf
    xi = dp.xi

    def split3(v):
        return v - np.dot(v, nt) * nt, np.cross(nt, v), np.dot(v, nt) * nt

    A_perp = A - A[2] * z
    a1, a2, a3 = split3(A_perp)
    b1, b2, b3 = split3(np.cross(z, A))
    g1, g2, g3 = split3(A[2] * z)
    n_c = np.asarray(n_c, dtype=float)
    nc = [n_c - n_c[2] * z, np.cross(z, n_c), n_c[2] * z]
    m = [split3(v) for v in nc]

    both = lambda f: sorted({abs(f + w), abs(f - w)})
    carriers = {
        "xi*rf": both(xi + wrf) + both(xi - wrf),
        "rf": both(wrf),
        "xi": both(xi),
        "static": [w],
    }
    parallel = {"xi*rf": [xi + wrf, abs(xi - wrf)], "rf": [wrf], "xi": [xi], "static": [0.0]}
    layout = [
        ("alpha1", a1, "xi*rf"), ("alpha2", a2, "xi*rf"), ("alpha3", a3, "rf"),
        ("beta1", b1, "xi*rf"), ("beta2", b2, "xi*rf"), ("beta3", b3, "rf"),
        ("gamma1", g1, "xi"), ("gamma2", g2, "xi"), ("gamma3", g3, "static"),
    ]
    for i in range(3):
        layout += [(f"m{i + 1}1", m[i][0], "xi*rf" if i < 2 else "xi"),
                   (f"m{i + 1}2", m[i][1], "xi*rf" if i < 2 else "xi"),
                   (f"m{i + 1}3", m[i][2], "rf" if i < 2 else "static")]
    terms = []
    for name, vec, kind in layout:
        par = np.dot(vec, n_j)
        perp = vec - par * n_j
        terms.append({
            "name": name,
            "vector": vec,
            "perp_norm": float(np.linalg.norm(perp)),
            "parallel": float(par),
            "carriers": carriers[kind],
            "parallel_carriers": parallel[kind],
        })
    return {"frame": frame, "terms": terms}


def control_coupling(A, dp, n_c=(0.0, 0.0, 1.0), m_s=1):
    """Signed low-branch control coupling along x̂_j per unit λ.

    A resonant control field 2λ cos(ω_j t + φ_c) n̂_c·I produces
    λ·κ (cos φ_c I^x + sin φ_c I^y) with κ = (m33)_⊥·x̂_j = n_cz g_j / A_z.
    """
    frame = nuclear_frame(A, dp, m_s)
    n_c = np.asarray(n_c, dtype=float)
    m33 = n_c[2] * dp.nt_z * dp.n_tilde
    return float(np.dot(m33, frame.x_j))


def predicted_dip(f, g, t, m_s=1):
    """Coherence at resonance, L = -cos((m_s/4) f g t)."""
    return -np.cos(m_s / 4 * f * g * t)


def gate_phase(f, g, t, m_s=1):
    """Conditional phase φ = (m_s/4) f g t."""
    return m_s / 4 * f * g * t


# ---------------------------------------------------------------------------
# Diagnostics


@dataclass
class Thresholds:
    hyperfine_ratio: float = 0.2
    magic_residual: float = 1e-6
    coupling_ratio: float = 0.05
    leakage: float = 0.05
    suppressed_coupling: float = TWO_PI * 50.0


def validate_conditions(register, dp=None, f=None, target=None, thresholds=None,
                        omega=None):
    """Check the validity conditions of the effective description.

    Parameters
    ----------
    register : SpinRegister
    dp : DressedParameters, optional
        Without it the bare (undressed) resonances are used and the
        dressing-specific rows are skipped.
    f : float, optional
        Fourier coefficient of the drive, needed for leakage rows.
    target : int, optional
        Index of the driven nucleus, needed for leakage rows.
    omega : float, optional
        Bare Larmor frequency, required when ``dp`` is None.

    Returns
    -------
    list of dict
        One row per condition (and per nucleus or pair) with keys
        ``name``, ``value``, ``threshold``, ``ok``.
    """
    th = thresholds or Thresholds()
    rows = []
    A = register.hyperfine
    n = register.n_nuclei
    m_s = register.m_s

    def add(name, value, threshold, ok):
        rows.append({"name": name, "value": float(value),
                     "threshold": float(threshold), "ok": bool(ok)})

    if dp is not None:
        ratio = np.max(np.abs(A[:, 2])) / abs(2 * dp.Delta) if n else 0.0
        add("max|A_z|/|2Delta|", ratio, th.hyperfine_ratio, ratio <= th.hyperfine_ratio)
        res = abs(magic_angle_residual(dp))
        add("magic_angle_residual", res, th.magic_residual, res <= th.magic_residual)
        freqs = resonance_frequency(A[:, 2], dp, m_s) if n else np.zeros(0)
        gs = np.array([coupling_strength(a, dp, m_s) for a in A[:, 2]])
    else:
        if omega is None:
            raise ValueError("omega is required without dressed parameters")
        freqs = bare_resonance(A, omega, m_s) if n else np.zeros(0)
        gs = np.array([_safe_bare_g(a, omega, m_s) for a in A])

    g = register.coupling_matrix()
    for j in range(n):
        for k in range(j):
            r = abs(g[j, k]) / min(freqs[j], freqs[k])
            add(f"g_{k + 1}{j + 1}/omega", r, th.coupling_ratio, r <= th.coupling_ratio)
            if dp is not None:
                s = max(abs(A[j, 2]), abs(A[k, 2])) / abs(2 * dp.Delta) * abs(g[j, k])
                add(f"suppressed_g_{k + 1}{j + 1}", s, th.suppressed_coupling,
                    s <= th.suppressed_coupling)
    if f is not None and target is not None:
        for j in range(n):
            if j == target:
                continue
            det = freqs[target] - freqs[j]
            leak = np.inf if det == 0 else abs(f * gs[j] / (4 * det))
            add(f"leakage_{j + 1}", leak, th.leakage, leak <= th.leakage)
    return rows


def _safe_bare_g(A, omega, m_s):
    try:
        return bare_frame(A, omega, m_s).g_j
    except ValueError:
        return 0.0
