import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvgates.operators import SIGMA_X, SIGMA_Y, SIGMA_Z, is_hermitian
from nvgates.system import (
    DIPOLAR_CALIBRATION, GAMMA_E, GAMMA_N, LATTICE_A, DecouplingField, FieldConfig, Nucleus,
    SpinRegister, classify_sample, generate_sample, hyperfine_prefactor, hyperfine_vector,
    internuclear_coupling, lattice_sites, read_sample, rotating_frame_hamiltonian,
    secular_dipolar_hamiltonian, write_sample,
)

TWO_PI = 2 * np.pi
KHZ = TWO_PI * 1e3
MU0_HBAR_4PI = 1e-7 * 1.054571817e-34 * 1e27  # (μ0/4π)ħ in T·m/A·J·s scaled to nm^3


def test_hyperfine_prefactor():
    # (μ0/4π) ħ γe γn / (1 nm)^3 in rad/s
    expected = MU0_HBAR_4PI * GAMMA_E * GAMMA_N
    assert hyperfine_prefactor() == pytest.approx(expected, rel=1e-6)
    assert hyperfine_prefactor() / TWO_PI == pytest.approx(19.88e3, rel=2e-3)


def test_hyperfine_on_axis():
    # Nucleus on the NV axis: A = K (z - 3z)/r^3 = -2K/r^3 ẑ
    a = hyperfine_vector([0, 0, 1.0])
    assert np.allclose(a, [0, 0, -2 * hyperfine_prefactor()])


@settings(max_examples=50, deadline=None)
@given(st.tuples(*[st.floats(-3, 3) for _ in range(3)]))
def test_hyperfine_matches_dipolar_tensor(r):
    r = np.array(r)
    if np.linalg.norm(r) < 0.2:
        r = r + np.array([0.3, 0.0, 0.0])
    d = np.linalg.norm(r)
    tensor = (np.eye(3) - 3 * np.outer(r, r) / d**2) / d**3
    assert np.allclose(hyperfine_vector(r), hyperfine_prefactor() * tensor[:, 2], rtol=1e-12)


def test_hyperfine_rejects_origin():
    with pytest.raises(ValueError):
        hyperfine_vector([0.0, 0.0, 0.05])


def test_dimer_coupling_calibration():
    # Nearest-neighbour bond along a lattice direction other than the NV axis
    sites = lattice_sites(0.0, 1.0)
    d = np.linalg.norm(sites[:, None] - sites[None], axis=-1)
    i, j = np.argwhere(np.isclose(d, LATTICE_A * np.sqrt(3) / 4))[0]
    sep = sites[i] - sites[j]
    g = internuclear_coupling(sites[i], sites[j])
    cos = sep[2] / np.linalg.norm(sep)
    if np.isclose(abs(cos), 1):
        assert abs(g) / TWO_PI == pytest.approx(2 * 685.0, rel=1e-9)
    else:
        assert abs(g) / TWO_PI == pytest.approx(685.0, rel=1e-9)
    assert 0.3 < DIPOLAR_CALIBRATION < 1.0


def test_fig2_dimer_coupling(fig2b):
    g = fig2b.register.coupling_matrix() / TWO_PI
    assert g[1, 2] == pytest.approx(684.109328, rel=1e-6)
    assert abs(g[0, 1]) < 1 and abs(g[0, 2]) < 1


def test_two_spin_hnn_spectrum():
    g = TWO_PI * 500.0
    reg = SpinRegister((Nucleus(np.zeros(3)), Nucleus(np.zeros(3))),
                       couplings=np.array([[0, g], [g, 0]]))
    ev = np.linalg.eigvalsh(secular_dipolar_hamiltonian(reg, include_electron=False))
    # triplet m=±1: g/4, triplet m=0: -g/2, singlet: 0
    assert np.allclose(np.sort(ev), np.sort([g / 4, g / 4, -g / 2, 0.0]))


def test_explicit_couplings_override(table1):
    g = table1.register.coupling_matrix() / TWO_PI
    assert g[0, 1] == pytest.approx(1.64)
    assert g[0, 2] == pytest.approx(1.40)
    assert g[1, 2] == pytest.approx(-186.76)
    assert np.allclose(g, g.T)


def _hand_built_hamiltonian(reg, fields):
    """Independent construction with explicit Kronecker products (t = 0, F = +1)."""
    n = reg.n_nuclei
    paulis = [SIGMA_X / 2, SIGMA_Y / 2, SIGMA_Z / 2]

    def op(s, j):
        mats = [np.eye(2)] + [s if k == j else np.eye(2) for k in range(n)]
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    up = np.kron(np.diag([1.0, 0.0]), np.eye(2**n))
    dec = fields.decouple
    h = np.zeros((2 ** (n + 1),) * 2, dtype=complex)
    for j, nuc in enumerate(reg.nuclei):
        I = [op(s, j) for s in paulis]
        h += -fields.larmor * I[2]
        h += 2 * dec.amplitude * sum(a * o for a, o in zip(dec.axis, I))
        h += reg.m_s * up @ sum(a * o for a, o in zip(nuc.hyperfine, I))
    g = reg.coupling_matrix()
    for j in range(n):
        for k in range(j):
            Ij = [op(s, j) for s in paulis]
            Ik = [op(s, k) for s in paulis]
            h += g[j, k] * (Ij[2] @ Ik[2] - 0.5 * (Ij[0] @ Ik[0] + Ij[1] @ Ik[1]))
    return h


def test_fig2_hamiltonian_golden(fig2b):
    h = rotating_frame_hamiltonian(fig2b.register, fig2b.fields, F=1, t=0.0)
    assert h.shape == (16, 16)
    assert is_hermitian(h)
    assert np.allclose(h, _hand_built_hamiltonian(fig2b.register, fig2b.fields), atol=1e-6)
    ev = np.linalg.eigvalsh(h)
    # frozen checksum of the construction
    assert np.linalg.norm(h) == pytest.approx(466094245.4217512, rel=1e-10)
    assert ev.min() == pytest.approx(-201846508.25777128, rel=1e-10)
    assert ev.max() == pytest.approx(201848660.3483256, rel=1e-10)


def test_site_counts_against_brute_force():
    a = LATTICE_A
    fcc = np.array([[0, 0, 0], [0, .5, .5], [.5, 0, .5], [.5, .5, 0]])
    basis = np.concatenate([fcc, fcc - 0.25])
    n = 15
    g = np.stack(np.meshgrid(*[np.arange(-n, n + 1)] * 3, indexing="ij"), -1).reshape(-1, 3)
    pts = (g[:, None, :] + basis[None]).reshape(-1, 3) * a
    d = np.linalg.norm(pts, axis=1)
    nitrogen = -np.ones(3) * a / 4
    keep = (d <= 4.7) & (d > 1e-9) & (np.linalg.norm(pts - nitrogen, axis=1) > 1e-9)
    assert keep.sum() == len(lattice_sites(0.0, 4.7)) == 76729
    assert len(lattice_sites(0.0, 4.9)) == 86885


def test_lattice_frame_is_rotation_of_cubic_lattice():
    sites = lattice_sites(0.0, 0.5)
    d = np.sort(np.linalg.norm(sites, axis=1))
    # shells of the diamond lattice seen from a vacancy site
    assert d[0] == pytest.approx(LATTICE_A * np.sqrt(3) / 4)
    assert np.sum(np.isclose(d, d[0])) == 3  # the fourth neighbour is the nitrogen


def test_generate_sample_deterministic():
    a = generate_sample(7, 0.011, 0.0, 2.0)
    b = generate_sample(7, 0.011, 0.0, 2.0)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, generate_sample(8, 0.011, 0.0, 2.0))


def test_generate_sample_abundance():
    n_sites = len(lattice_sites(0.0, 4.7))
    counts = [len(generate_sample(s, 0.011, 0.0, 4.7)) for s in range(40)]
    assert np.mean(counts) == pytest.approx(0.011 * n_sites, rel=0.02)


def test_classify_sample_modes():
    a = np.array([-20, -5, 10, 30]) * KHZ
    assert classify_sample(a, 13 * KHZ, mode="pairwise")
    # -20 and -5 are only 15 apart, 10 is 15 from -5: all four isolated at 13
    assert classify_sample(a, 13 * KHZ, mode="isolated")
    assert not classify_sample(a, 16 * KHZ, mode="isolated")
    assert not classify_sample(a, 13 * KHZ, A_max=25 * KHZ)
    assert not classify_sample(a[:2], 1.0)


def test_nucleus_create_consistency():
    r = np.array([0.3, 0.4, 0.9])
    ok = Nucleus.create(position=r, hyperfine=hyperfine_vector(r))
    assert np.allclose(ok.hyperfine, hyperfine_vector(r))
    with pytest.raises(ValueError):
        Nucleus.create(position=r, hyperfine=1.1 * hyperfine_vector(r))
    with pytest.raises(ValueError):
        Nucleus.create()


def test_sample_file_roundtrip(tmp_path):
    pos = lattice_sites(0.3, 0.8)[:5]
    path = tmp_path / "sample.csv"
    write_sample(path, positions=pos, hyperfine=hyperfine_vector(pos))
    nuc = read_sample(path)
    assert len(nuc) == 5
    assert np.allclose([n.position for n in nuc], pos)


def test_field_config_validation():
    with pytest.raises(ValueError):
        FieldConfig(0.0)
    with pytest.raises(ValueError):
        FieldConfig(0.05, DecouplingField(1.0, 1.0))
    with pytest.raises(ValueError):
        SpinRegister((), m_s=0)
