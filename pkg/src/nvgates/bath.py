"""
Electron coherence in a large 13C bath, and sample-occurrence statistics.

Bath nuclei are treated independently: with instantaneous pulses and no
bath-internal couplings, each nucleus evolves under one of two conditional
propagators depending on the initial electron state, and the electron
coherence is the product of the single-nucleus overlaps.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .propagate import (
    EvolutionPolicy, _FieldModel, _bounds, _single_spin_products, map_points, ordered_product,
    reference_frequency,
)
from .system import (
    Nucleus, SpinRegister, classify_sample, hyperfine_vector, lattice_sites, make_rng,
    occupied_indices,
)


@dataclass(frozen=True)
class BathSpec:
    """Random bath on the diamond lattice.

    Exactly ``n_nuclei`` sites are drawn when it is set, otherwise each site
    is occupied with probability ``abundance``. Sites closer than
    ``exclusion_radius`` (nm) to any position in ``exclude`` are skipped so
    register nuclei are never duplicated.
    """

    seed: int
    abundance: float = 0.0027
    r_min: float = 1.3
    r_max: float = 4.9
    n_nuclei: Optional[int] = None
    exclude: tuple = ()
    exclusion_radius: float = 1e-3

    def positions(self):
        sites = lattice_sites(self.r_min, self.r_max)
        if self.exclude:
            ex = np.asarray(self.exclude, dtype=float).reshape(-1, 3)
            dist = np.linalg.norm(sites[:, None, :] - ex[None], axis=-1)
            sites = sites[np.all(dist > self.exclusion_radius, axis=1)]
        if len(sites) == 0:
            raise ValueError("bath shell contains no free lattice sites")
        rng = make_rng(self.seed)
        if self.n_nuclei is not None:
            if self.n_nuclei > len(sites):
                raise ValueError("more bath nuclei requested than sites available")
            idx = np.sort(rng.choice(len(sites), size=self.n_nuclei, replace=False))
        else:
            idx = occupied_indices(rng, len(sites), self.abundance)
        return sites[idx]

    def nuclei(self):
        return [Nucleus(hyperfine_vector(p), p, label=f"b{i}")
                for i, p in enumerate(self.positions())]


def _branch_schedule(sequence, t_end, start):
    """Free intervals and electron-branch coefficient for an ideal flip train.

    ``start`` = 1 for an electron initially in |m_s>, 0 for |0>.
    """
    if sequence is not None and not sequence.instantaneous:
        raise ValueError("bath propagation requires instantaneous pulses")
    centers = np.zeros(0) if sequence is None else sequence.centers[sequence.centers < t_end]
    edges = np.concatenate([[0.0], centers, [t_end]])
    occupation = (start + np.arange(len(edges) - 1)) % 2
    return edges[:-1], np.diff(edges), occupation


def conditional_propagators(nuclei, fields, sequence, t_end=None, m_s=1, policy=None):
    """Per-nucleus propagators for the two initial electron states.

    Parameters
    ----------
    nuclei : Nucleus or sequence of Nucleus
    fields : FieldConfig
    sequence : PulseSequence or None
        Must use instantaneous pulses; None means no pulses (F = +1).
    t_end : float, optional
        Defaults to ``sequence.t_end``.

    Returns
    -------
    (numpy.ndarray, numpy.ndarray)
        U⁰ and U¹ of shape (n, 2, 2) (or (2, 2) for a single nucleus): the
        nuclear propagators with the electron starting in |0> and |m_s>.
    """
    single = isinstance(nuclei, Nucleus)
    nuclei = [nuclei] if single else list(nuclei)
    policy = policy or EvolutionPolicy()
    if t_end is None:
        if sequence is None:
            raise ValueError("t_end is required without a pulse sequence")
        t_end = sequence.t_end
    ref = reference_frequency(fields, policy)
    model = _FieldModel(SpinRegister(tuple(nuclei), m_s), fields, ref)
    dt = _bounds(_FieldModel(SpinRegister(tuple(nuclei[:1]), m_s), fields, ref),
                 None, policy, 0.0)
    rz = np.diag(np.exp(1j * ref * t_end * np.array([0.5, -0.5])))
    out = []
    for start in (0, 1):
        starts, lengths, occ = _branch_schedule(sequence, t_end, start)
        props = _single_spin_products(model, starts, lengths, m_s * occ.astype(float), dt,
                                      policy.order)
        out.append(rz @ ordered_product(props))
    u0, u1 = out
    if single:
        return u0[0], u1[0]
    return u0, u1


def overlap_factors(u0, u1):
    """Complex single-nucleus overlaps Tr(U⁰ U¹†)/2."""
    return np.einsum("...ab,...ab->...", u0, u1.conj()) / 2


def factorized_coherence(nuclei, fields, sequence, t_end=None, m_s=1, policy=None,
                         chunk=64):
    """L_bath = Π_j |Tr(U_j⁰ U_j¹†)|/2 over unpolarised bath nuclei.

    Returns 1 for an empty bath.
    """
    nuclei = list(nuclei)
    if not nuclei:
        return 1.0
    logs = 0.0
    for i in range(0, len(nuclei), chunk):
        u0, u1 = conditional_propagators(nuclei[i:i + chunk], fields, sequence, t_end,
                                         m_s, policy)
        logs += np.sum(np.log(np.abs(overlap_factors(u0, u1))))
    return float(np.exp(logs))


def electron_coherence_magnitude(u):
    """|<σ+>|-type coherence magnitude 2|Tr ρ_{m0}| for ρ(0) = |+><+| ⊗ 1/d.

    Insensitive to the final electron pulse product, so it compares directly
    with :func:`factorized_coherence`.
    """
    dim = u.shape[0] // 2
    um, u0 = u[:, :dim], u[:, dim:]
    rho = (um + u0) @ (um + u0).conj().T / (2 * dim)
    return float(2 * max(abs(np.trace(rho[:dim, dim:])), abs(np.trace(rho[dim:, :dim]))))


def register_with_bath_L(L_reg, L_bath):
    """Total coherence L_reg·L_bath (bath dephasing factorises)."""
    if not -1 <= L_reg <= 1:
        raise ValueError("register coherence must lie in [-1, 1]")
    if not 0 <= L_bath <= 1:
        raise ValueError("bath factor must lie in [0, 1]")
    return L_reg * L_bath


def bath_record(spec, fields, sequence, m_s=1, policy=None):
    """One bath sample: seed, L_bath, d_min, d_max and size."""
    nuc = spec.nuclei()
    d = np.array([np.linalg.norm(n.position) for n in nuc]) if nuc else np.zeros(1)
    return {
        "seed": spec.seed,
        "n_nuclei": len(nuc),
        "L_bath": factorized_coherence(nuc, fields, sequence, m_s=m_s, policy=policy),
        "d_min_nm": float(d.min()),
        "d_max_nm": float(d.max()),
    }


# ---------------------------------------------------------------------------
# Census


@dataclass(frozen=True)
class CensusResult:
    trials: int
    hits: int
    fraction: float
    ci_low: float
    ci_high: float
    criteria: dict = field(default_factory=dict)


def trial_seed(seed, index):
    """64-bit seed for trial ``index`` derived from the master ``seed``."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


def _census_chunk(args):
    seed, start, stop, abundance, r_min, r_max, dA_min, A_max, mode = args
    sites = lattice_sites(r_min, r_max)
    a_z = hyperfine_vector(sites)[:, 2]
    hits = 0
    for trial in range(start, stop):
        rng = make_rng(trial_seed(seed, trial))
        idx = occupied_indices(rng, len(sites), abundance)
        hits += classify_sample(a_z[idx], dA_min, A_max, mode)
    return hits


def sample_census(seed, trials, abundance=0.011, r_min=0.0, r_max=4.7, dA_min=0.0,
                  A_max=None, mode="isolated", workers=1, z=1.96):
    """Monte Carlo fraction of random samples passing :func:`classify_sample`.

    Each trial uses its own generator derived from (seed, trial index), so
    results do not depend on the number of workers. The interval is the
    normal approximation fraction ± z·sqrt(p(1-p)/trials), clipped to [0, 1].
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    n_chunks = max(1, min(trials, 16 * max(1, workers)))
    bounds = np.linspace(0, trials, n_chunks + 1).astype(int)
    jobs = [(seed, int(a), int(b), abundance, r_min, r_max, dA_min, A_max, mode)
            for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    hits = int(sum(map_points(_census_chunk, jobs, workers)))
    p = hits / trials
    half = z * math.sqrt(p * (1 - p) / trials)
    return CensusResult(trials, hits, p, max(0.0, p - half), min(1.0, p + half), {
        "abundance": abundance, "r_min_nm": r_min, "r_max_nm": r_max,
        "dA_min": dA_min, "A_max": A_max, "mode": mode,
    })
