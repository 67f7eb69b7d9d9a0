"""
Physical model of the NV register.

Geometry of the diamond lattice, hyperfine and internuclear dipolar couplings,
the register/field containers and the full Hamiltonian in the frame rotating
with the electron transition.

All couplings are angular frequencies (rad/s); positions are in nm; the
electron is a two-level system with basis ordering ``[|m_s>, |0>]`` so that
``sigma_z = |m_s><m_s| - |0><0|`` is ``diag(1, -1)``.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import constants

from .operators import SIGMA_Z, IDENTITY_2, embed, spin_operators

TWO_PI = 2 * np.pi

GAMMA_N = TWO_PI * 10.705e6      # 13C, rad/s/T
GAMMA_E = TWO_PI * 28.024e9      # NV electron magnitude, rad/s/T
LATTICE_A = 0.3567               # nm
NM3 = 1e-27

# (mu0 / 4 pi) hbar gamma_1 gamma_2 per nm^3, in rad/s
_MU0_HBAR = constants.mu_0 / (4 * np.pi) * constants.hbar / NM3

# Simulation frame: x along [1,-1,0], z along the NV axis [1,1,1].
_EZ = np.array([1.0, 1.0, 1.0]) / np.sqrt(3)
_EX = np.array([1.0, -1.0, 0.0]) / np.sqrt(2)
LATTICE_ROTATION = np.array([_EX, np.cross(_EZ, _EX), _EZ])

NN_DISTANCE = LATTICE_A * np.sqrt(3) / 4
NITROGEN_POSITION = LATTICE_ROTATION @ (-np.ones(3) * LATTICE_A / 4)

DIMER_COUPLING = TWO_PI * 685.0  # lattice nearest-neighbour dimer, rad/s


def hyperfine_prefactor(gamma_e=GAMMA_E, gamma_n=GAMMA_N):
    """Dipolar electron-nuclear prefactor in rad/s·nm^3."""
    return _MU0_HBAR * gamma_e * gamma_n


def _raw_internuclear(sep, gamma=GAMMA_N):
    r = np.linalg.norm(sep)
    nz = sep[2] / r
    return _MU0_HBAR * gamma**2 * (1 - 3 * nz**2) / r**3


def _dimer_calibration():
    # Nearest-neighbour bond off the NV axis makes cos(theta) = -1/3 with z.
    bond = LATTICE_ROTATION @ (np.array([-1.0, 1.0, 1.0]) * LATTICE_A / 4)
    return DIMER_COUPLING / abs(_raw_internuclear(bond))


DIPOLAR_CALIBRATION = _dimer_calibration()


def hyperfine_vector(r, gamma_e=GAMMA_E, gamma_n=GAMMA_N):
    """Hyperfine vector A = K [z - 3 (z·r̂) r̂] / r^3 for a nucleus at ``r`` (nm).

    Parameters
    ----------
    r : array_like
        Position relative to the NV centre in nm, shape (3,) or (n, 3).
    gamma_e, gamma_n : float
        Gyromagnetic ratios in rad/s/T.

    Returns
    -------
    numpy.ndarray
        Hyperfine vector(s) in rad/s.
    """
    r = np.asarray(r, dtype=float)
    dist = np.linalg.norm(r, axis=-1)
    if np.any(dist <= 0.1):
        raise ValueError("nucleus closer than 0.1 nm to the NV centre")
    rhat = r / dist[..., None]
    zdot = rhat[..., 2]
    vec = -3 * zdot[..., None] * rhat
    vec[..., 2] += 1.0
    return hyperfine_prefactor(gamma_e, gamma_n) * vec / dist[..., None] ** 3


def internuclear_coupling(rj, rk, gamma=GAMMA_N, calibration=None):
    """Secular dipolar coupling g_jk between nuclei at ``rj`` and ``rk`` (nm).

    The standard (mu0/4pi) hbar gamma^2 (1 - 3 n_z^2) / r^3 is scaled by
    ``DIPOLAR_CALIBRATION`` so that the lattice nearest-neighbour dimer gives
    2π×685 Hz.
    """
    sep = np.asarray(rj, dtype=float) - np.asarray(rk, dtype=float)
    if np.linalg.norm(sep) == 0:
        raise ValueError("coincident nuclei")
    cal = DIPOLAR_CALIBRATION if calibration is None else calibration
    return cal * _raw_internuclear(sep, gamma)


def _as_vec(v):
    return None if v is None else np.asarray(v, dtype=float).reshape(3)


@dataclass(frozen=True, eq=False)
class Nucleus:
    """A 13C nucleus.

    Attributes
    ----------
    hyperfine : numpy.ndarray
        Hyperfine vector in rad/s.
    position : numpy.ndarray or None
        Position in nm relative to the NV centre.
    gyro : float
        Gyromagnetic ratio in rad/s/T.
    """

    hyperfine: np.ndarray
    position: Optional[np.ndarray] = None
    gyro: float = GAMMA_N
    label: str = ""

    @classmethod
    def create(cls, position=None, hyperfine=None, label="", tol=1e-3):
        """Build a nucleus from a position, a hyperfine vector, or both.

        When both are given they must agree to relative tolerance ``tol``.
        """
        position, hyperfine = _as_vec(position), _as_vec(hyperfine)
        if position is None and hyperfine is None:
            raise ValueError("nucleus needs a position or a hyperfine vector")
        if hyperfine is None:
            hyperfine = hyperfine_vector(position)
        elif position is not None:
            derived = hyperfine_vector(position)
            if np.linalg.norm(derived - hyperfine) > tol * np.linalg.norm(derived):
                raise ValueError(
                    f"nucleus {label!r}: hyperfine vector disagrees with position"
                )
        return cls(hyperfine=hyperfine, position=position, label=label)


@dataclass(frozen=True, eq=False)
class SpinRegister:
    """NV electron (two-level) plus a list of nuclei.

    ``couplings`` optionally overrides the position-derived internuclear
    matrix (symmetric, rad/s, zero diagonal).
    """

    nuclei: tuple = ()
    m_s: int = 1
    couplings: Optional[np.ndarray] = None
    electron_model: str = "two_level"

    def __post_init__(self):
        object.__setattr__(self, "nuclei", tuple(self.nuclei))
        if self.m_s not in (1, -1):
            raise ValueError("m_s must be +1 or -1")
        if self.electron_model != "two_level":
            raise ValueError("only the two-level electron model is supported")
        if self.couplings is not None:
            g = np.asarray(self.couplings, dtype=float)
            n = len(self.nuclei)
            if g.shape != (n, n) or not np.allclose(g, g.T):
                raise ValueError("couplings must be a symmetric n×n matrix")
            object.__setattr__(self, "couplings", g)

    @property
    def n_nuclei(self):
        return len(self.nuclei)

    @property
    def dim(self):
        return 2 ** (1 + self.n_nuclei)

    @property
    def hyperfine(self):
        """Hyperfine vectors stacked as (n, 3)."""
        if not self.nuclei:
            return np.zeros((0, 3))
        return np.array([nuc.hyperfine for nuc in self.nuclei])

    def coupling_matrix(self):
        """Internuclear couplings g_jk (rad/s), zero where positions are missing."""
        n = self.n_nuclei
        if self.couplings is not None:
            g = self.couplings.copy()
            np.fill_diagonal(g, 0.0)
            return g
        g = np.zeros((n, n))
        for j in range(n):
            for k in range(j):
                pj, pk = self.nuclei[j].position, self.nuclei[k].position
                if pj is not None and pk is not None:
                    g[j, k] = g[k, j] = internuclear_coupling(pj, pk)
        return g

    def subset(self, indices):
        idx = list(indices)
        g = None if self.couplings is None else self.couplings[np.ix_(idx, idx)]
        return SpinRegister(tuple(self.nuclei[i] for i in idx), self.m_s, g)

    def without_couplings(self):
        return SpinRegister(self.nuclei, self.m_s, np.zeros((self.n_nuclei,) * 2))


def _unit(v, name):
    v = np.asarray(v, dtype=float).reshape(3)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError(f"{name} must be non-zero")
    if abs(n - 1) > 1e-12:
        v = v / n
    return v


@dataclass(frozen=True, eq=False)
class DecouplingField:
    """rf decoupling field 2Ω cos(ω_rf t) n̂·I (Ω and ω_rf in rad/s)."""

    amplitude: float
    freq: float
    axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self):
        object.__setattr__(self, "axis", _unit(self.axis, "decoupling axis"))


@dataclass(frozen=True, eq=False)
class ControlField:
    """rf control field 2λ cos(ω_c t + φ_c) n̂_c·I."""

    amplitude: float
    freq: float
    phase: float = 0.0
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        object.__setattr__(self, "axis", _unit(self.axis, "control axis"))


@dataclass(frozen=True, eq=False)
class FieldConfig:
    """Static field (tesla) plus optional decoupling and control rf fields."""

    B_z: float
    decouple: Optional[DecouplingField] = None
    control: Optional[ControlField] = None
    gyro: float = GAMMA_N

    def __post_init__(self):
        if self.B_z <= 0:
            raise ValueError("B_z must be positive")
        if self.decouple is not None and self.decouple.amplitude != 0 and self.B_z <= 0.1:
            raise ValueError("decoupling requires B_z > 0.1 T")

    @property
    def larmor(self):
        """Bare nuclear Larmor frequency ω = γ_n B_z (rad/s)."""
        return self.gyro * self.B_z

    def with_control(self, control):
        return FieldConfig(self.B_z, self.decouple, control, self.gyro)

    def without_decoupling(self):
        return FieldConfig(self.B_z, None, self.control, self.gyro)


def secular_dipolar_hamiltonian(register, include_electron=True):
    """Σ_{j>k} g_jk [Iz Iz - (Ix Ix + Iy Iy)/2] on the register space.

    With ``include_electron`` the result acts on the full electron ⊗ nuclei
    space, otherwise on the nuclear space alone.
    """
    n = register.n_nuclei
    offset = 1 if include_electron else 0
    dims = [2] * (n + offset)
    dim = int(np.prod(dims)) if dims else 1
    h = np.zeros((dim, dim), dtype=complex)
    if n < 2:
        return h
    g = register.coupling_matrix()
    ops = [[embed(s, j + offset, dims) for s in spin_operators("half")] for j in range(n)]
    for j in range(n):
        for k in range(j):
            if g[j, k] == 0:
                continue
            xj, yj, zj = ops[j]
            xk, yk, zk = ops[k]
            h += g[j, k] * (zj @ zk - 0.5 * (xj @ xk + yj @ yk))
    return h


def rotating_frame_hamiltonian(register, fields, F=1, t=0.0):
    """Full register Hamiltonian in the electron rotating frame.

    H = -ω Σ Iz + (m_s/2)[F σz + 1] Σ A_j·I_j + 2Ω cos(ω_rf t) Σ n̂·I_j
        + 2λ cos(ω_c t + φ_c) Σ n̂_c·I_j + H_nn

    Parameters
    ----------
    register : SpinRegister
    fields : FieldConfig
    F : {+1, -1}
        Modulation function value (parity of applied π pulses).
    t : float
        Time in seconds.
    """
    n = register.n_nuclei
    dims = [2] * (n + 1)
    sx, sy, sz = spin_operators("half")
    ident = np.eye(2 ** n)
    electron = register.m_s / 2 * (F * SIGMA_Z + IDENTITY_2)
    field_vec = np.array([0.0, 0.0, -fields.larmor])
    if fields.decouple is not None:
        dec = fields.decouple
        field_vec = field_vec + 2 * dec.amplitude * np.cos(dec.freq * t) * dec.axis
    if fields.control is not None:
        c = fields.control
        field_vec = field_vec + 2 * c.amplitude * np.cos(c.freq * t + c.phase) * c.axis
    h = np.zeros((2 ** (n + 1),) * 2, dtype=complex)
    for j, nuc in enumerate(register.nuclei):
        ops = [embed(s, j + 1, dims) for s in (sx, sy, sz)]
        local = sum(b * o for b, o in zip(field_vec, ops))
        hf = sum(a * o for a, o in zip(nuc.hyperfine, ops))
        h += local + np.kron(electron, ident) @ hf
    return h + secular_dipolar_hamiltonian(register)


# ---------------------------------------------------------------------------
# Lattice sampling


@lru_cache(maxsize=8)
def _lattice_sites(r_min, r_max):
    a4 = LATTICE_A / 4
    m = int(np.ceil(r_max / a4)) + 2
    rng = np.arange(-m, m + 1)
    grid = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), -1).reshape(-1, 3)
    even = np.all(grid % 2 == 0, axis=1) & (grid.sum(axis=1) % 4 == 0)
    odd = np.all(grid % 2 == 1, axis=1) & ((grid + 1).sum(axis=1) % 4 == 0)
    pts = grid[even | odd] * a4
    pts = pts @ LATTICE_ROTATION.T
    d = np.linalg.norm(pts, axis=1)
    keep = (d >= r_min) & (d <= r_max) & (d > 1e-9)
    pts, d = pts[keep], d[keep]
    keep = np.linalg.norm(pts - NITROGEN_POSITION, axis=1) > 1e-9
    pts, d = pts[keep], d[keep]
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], np.round(d, 9)))
    out = pts[order]
    out.setflags(write=False)
    return out


def lattice_sites(r_min, r_max):
    """Carbon sites of the diamond lattice in the shell [r_min, r_max] (nm).

    The vacancy sits at the origin and the nitrogen at -(a/4)(1,1,1); both
    are excluded. Sites are expressed in the NV frame (z along the NV axis)
    and sorted by distance.
    """
    if not r_min < r_max:
        raise ValueError("r_min must be smaller than r_max")
    return _lattice_sites(float(r_min), float(r_max))


def make_rng(seed):
    """Counter-based Philox generator for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def occupied_indices(rng, n_sites, abundance):
    """Indices of occupied sites, each occupied independently with ``abundance``.

    Uses geometric gaps, which has the same law as one Bernoulli draw per site
    but costs one draw per occupied site.
    """
    if abundance <= 0:
        return np.zeros(0, dtype=int)
    expected = n_sites * abundance
    chunk = int(expected + 6 * np.sqrt(expected) + 16)
    idx = []
    pos = -1
    while True:
        gaps = rng.geometric(abundance, size=chunk)
        cum = pos + np.cumsum(gaps)
        inside = cum[cum < n_sites]
        idx.append(inside)
        if len(inside) < chunk:
            break
        pos = cum[-1]
    return np.concatenate(idx)


def generate_sample(seed, abundance, r_min, r_max, rng=None):
    """Random 13C positions on the diamond lattice inside a spherical shell.

    Parameters
    ----------
    seed : int
        Seed of the Philox generator (ignored when ``rng`` is given).
    abundance : float
        Occupation probability per carbon site, 0 < abundance < 1.
    r_min, r_max : float
        Shell radii in nm.

    Returns
    -------
    numpy.ndarray
        Positions (n, 3) in nm, ordered by distance.
    """
    if not 0 <= abundance < 1:
        raise ValueError("abundance must lie in [0, 1)")
    sites = lattice_sites(r_min, r_max)
    if len(sites) == 0:
        raise ValueError("no lattice sites in the requested shell")
    rng = make_rng(seed) if rng is None else rng
    return sites[occupied_indices(rng, len(sites), abundance)]


def classify_sample(A_z, dA_min, A_max=None, mode="pairwise"):
    """Decide whether a sample offers three addressable nuclei.

    Parameters
    ----------
    A_z : array_like
        Hyperfine z-components (rad/s) of every nucleus in the sample.
    dA_min : float
        Required spectral separation (rad/s).
    A_max : float, optional
        Every nucleus must satisfy |A_z| <= A_max; skipped when None.
    mode : {"pairwise", "isolated"}
        ``pairwise``: some three nuclei are mutually separated by dA_min.
        ``isolated``: at least three nuclei are separated by dA_min from
        every other nucleus in the sample.
    """
    a = np.sort(np.asarray(A_z, dtype=float))
    if a.size < 3:
        return False
    if A_max is not None and np.max(np.abs(a)) > A_max:
        return False
    if mode == "pairwise":
        count, last = 1, a[0]
        for v in a[1:]:
            if v - last >= dA_min:
                count, last = count + 1, v
                if count >= 3:
                    return True
        return False
    if mode == "isolated":
        return isolated_count(a, dA_min) >= 3
    raise ValueError(f"unknown mode {mode!r}")


def isolated_count(sorted_a, dA_min):
    """Number of entries whose nearest neighbour is at least dA_min away."""
    if sorted_a.size == 0:
        return 0
    gaps = np.diff(sorted_a)
    left = np.concatenate([[np.inf], gaps])
    right = np.concatenate([gaps, [np.inf]])
    return int(np.sum((left >= dA_min) & (right >= dA_min)))


# ---------------------------------------------------------------------------
# Sample files

_KHZ = TWO_PI * 1e3


def write_sample(path, positions=None, hyperfine=None):
    """Write a sample file: one nucleus per line, units in the header."""
    rows, cols = [], []
    n = len(positions) if positions is not None else len(hyperfine)
    if positions is not None:
        cols += ["x_nm", "y_nm", "z_nm"]
    if hyperfine is not None:
        cols += ["Ax_kHz_x2pi", "Ay_kHz_x2pi", "Az_kHz_x2pi"]
    for i in range(n):
        vals = []
        if positions is not None:
            vals += [f"{v:.10g}" for v in positions[i]]
        if hyperfine is not None:
            vals += [f"{v / _KHZ:.10g}" for v in hyperfine[i]]
        rows.append(",".join(vals))
    with open(path, "w") as fh:
        fh.write("# " + ",".join(cols) + "\n")
        fh.write("\n".join(rows) + ("\n" if rows else ""))


def read_sample(path, tol=1e-3):
    """Read a sample file written by :func:`write_sample` into nuclei."""
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing header line")
        cols = [c.strip() for c in header[1:].split(",")]
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    pos = hf = None
    if data.size == 0:
        return []
    if {"x_nm", "y_nm", "z_nm"} <= set(cols):
        pos = data[:, [cols.index(c) for c in ("x_nm", "y_nm", "z_nm")]]
    if {"Ax_kHz_x2pi", "Ay_kHz_x2pi", "Az_kHz_x2pi"} <= set(cols):
        hf = data[:, [cols.index(c) for c in ("Ax_kHz_x2pi", "Ay_kHz_x2pi", "Az_kHz_x2pi")]] * _KHZ
    if pos is None and hf is None:
        raise ValueError(f"{path}: no recognised columns in {cols}")
    n = len(data)
    return [
        Nucleus.create(
            position=None if pos is None else pos[i],
            hyperfine=None if hf is None else hf[i],
            label=str(i + 1),
            tol=tol,
        )
        for i in range(n)
    ]


__all__ = [
    "GAMMA_N", "GAMMA_E", "LATTICE_A", "TWO_PI", "DIPOLAR_CALIBRATION",
    "Nucleus", "SpinRegister", "DecouplingField", "ControlField", "FieldConfig",
    "hyperfine_vector", "internuclear_coupling", "secular_dipolar_hamiltonian",
    "rotating_frame_hamiltonian", "lattice_sites", "generate_sample",
    "classify_sample", "make_rng", "write_sample", "read_sample",
]
