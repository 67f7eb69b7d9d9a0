"""
Dense linear-algebra kernel for small spin registers.

Operators are plain complex ``numpy`` arrays. The helpers here build spin
matrices, embed single-site operators into a tensor-product space and
exponentiate Hermitian generators through their eigendecomposition.
"""

from functools import reduce

import numpy as np

HERMITIAN_RTOL = 1e-12
UNITARY_TOL = 1e-8

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


def spin_operators(spin="half"):
    """Return the angular-momentum matrices (Sx, Sy, Sz).

    Parameters
    ----------
    spin : {"half", "one"}
        Spin quantum number.

    Returns
    -------
    tuple of numpy.ndarray
        Hermitian matrices satisfying [Sx, Sy] = i Sz.
    """
    if spin == "half":
        return SIGMA_X / 2, SIGMA_Y / 2, SIGMA_Z / 2
    if spin == "one":
        s = 1 / np.sqrt(2)
        sx = s * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)
        sy = s * np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex)
        sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
        return sx, sy, sz
    raise ValueError(f"unknown spin {spin!r}; expected 'half' or 'one'")


def kron_all(ops):
    """Kronecker product of a sequence of matrices, left to right."""
    return reduce(np.kron, ops)


def embed(op, site, site_dims):
    """Embed ``op`` acting on ``site`` into the full tensor-product space.

    Parameters
    ----------
    op : array_like
        Square matrix of size ``site_dims[site]``.
    site : int
        Index of the subsystem the operator acts on.
    site_dims : sequence of int
        Dimensions of all subsystems, ordered as in the tensor product.

    Returns
    -------
    numpy.ndarray
        Matrix of size ``prod(site_dims)``.
    """
    op = np.asarray(op, dtype=complex)
    site_dims = [int(d) for d in site_dims]
    if not 0 <= site < len(site_dims):
        raise IndexError(f"site {site} out of range for {len(site_dims)} subsystems")
    if op.shape != (site_dims[site], site_dims[site]):
        raise ValueError(
            f"operator shape {op.shape} does not match site dimension {site_dims[site]}"
        )
    left = int(np.prod(site_dims[:site], dtype=int))
    right = int(np.prod(site_dims[site + 1:], dtype=int))
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


def is_hermitian(h, rtol=HERMITIAN_RTOL):
    h = np.asarray(h)
    scale = max(np.linalg.norm(h), 1.0)
    return np.linalg.norm(h - h.conj().T) <= rtol * scale


def is_unitary(u, tol=UNITARY_TOL):
    u = np.asarray(u)
    dim = u.shape[0]
    return np.linalg.norm(u.conj().T @ u - np.eye(dim)) <= tol * dim


def expm_hermitian(h, t=1.0):
    """Return exp(-i h t) for Hermitian ``h`` using an eigendecomposition.

    Raises
    ------
    ValueError
        If ``h`` is not Hermitian within ``HERMITIAN_RTOL`` (relative
        Frobenius norm).
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("expected a square matrix")
    if not is_hermitian(h):
        raise ValueError("matrix is not Hermitian")
    return expm_hermitian_batch(h, t)


def expm_hermitian_batch(h, t=1.0):
    """exp(-i h t) over a stack of Hermitian matrices, without validation.

    ``h`` has shape (..., d, d); ``t`` broadcasts against the leading axes.
    """
    w, v = np.linalg.eigh(h)
    phase = np.exp(-1j * w * np.asarray(t, dtype=float)[..., None])
    return (v * phase[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def su2_quaternion(field, t):
    """exp(-i t field·σ/2) as a unit quaternion (w, x, y, z).

    The matrix is w·1 - i(xσx + yσy + zσz); see :func:`quaternion_matrix`.
    ``field`` has shape (..., 3) and ``t`` broadcasts against its leading axes.
    """
    field = np.asarray(field, dtype=float)
    norm = np.sqrt(np.einsum("...i,...i->...", field, field))
    theta = norm * np.asarray(t, dtype=float) / 2
    scale = np.sin(theta) / np.where(norm > 0, norm, 1.0)
    out = np.empty(field.shape[:-1] + (4,))
    out[..., 0] = np.cos(theta)
    out[..., 1:] = field * scale[..., None]
    return out


def quaternion_product(q1, q2):
    """Quaternion of the matrix product U(q1) @ U(q2)."""
    w1, x1, y1, z1 = (q1[..., k] for k in range(4))
    w2, x2, y2, z2 = (q2[..., k] for k in range(4))
    out = np.empty(np.broadcast_shapes(q1.shape, q2.shape))
    out[..., 0] = w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2
    out[..., 1] = w1 * x2 + w2 * x1 + y1 * z2 - z1 * y2
    out[..., 2] = w1 * y2 + w2 * y1 + z1 * x2 - x1 * z2
    out[..., 3] = w1 * z2 + w2 * z1 + x1 * y2 - y1 * x2
    return out


def quaternion_matrix(q):
    """2×2 complex matrices w·1 - i v·σ for quaternions of shape (..., 4)."""
    w, x, y, z = (q[..., k] for k in range(4))
    out = np.empty(q.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = w - 1j * z
    out[..., 1, 1] = w + 1j * z
    out[..., 0, 1] = -1j * x - y
    out[..., 1, 0] = -1j * x + y
    return out


def su2_exp(field, t):
    """Closed-form exp(-i t field·σ/2) for stacked 3-vectors ``field``.

    Parameters
    ----------
    field : numpy.ndarray
        Shape (..., 3), angular frequencies.
    t : float or numpy.ndarray
        Time step, broadcast against the leading axes of ``field``.

    Returns
    -------
    numpy.ndarray
        Shape (..., 2, 2).
    """
    return quaternion_matrix(su2_quaternion(field, t))


def batched_kron(mats):
    """Kronecker product over the last two axes of a list of stacked matrices."""
    out = mats[0]
    for m in mats[1:]:
        a, b = out.shape[-1], m.shape[-1]
        out = (out[..., :, None, :, None] * m[..., None, :, None, :]).reshape(
            out.shape[:-2] + (a * b, a * b)
        )
    return out


def spin_half_ops(n_spins):
    """Embedded (Ix, Iy, Iz) for each of ``n_spins`` spin-1/2 particles.

    Returns an array of shape (n_spins, 3, 2**n, 2**n).
    """
    dims = [2] * n_spins
    single = spin_operators("half")
    if n_spins == 0:
        return np.zeros((0, 3, 1, 1), dtype=complex)
    return np.array([[embed(s, j, dims) for s in single] for j in range(n_spins)])
