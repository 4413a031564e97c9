"""The three concrete chain models and the exact free-fermion XY solver.

Single-site basis convention everywhere: index 0 is spin-down, index 1 is
spin-up, so the Pauli matrices read

    SX = [[0, 1], [1, 0]]   SY = [[0, i], [-i, 0]]   SZ = [[-1, 0], [0, 1]]

which still satisfy SX @ SY = i SZ.  Spin-up is the occupied fermion state
under the Jordan-Wigner mapping used for the XY chain.

The XY field parameter is called ``field_h`` (CLI alias ``lambda``) to keep
it apart from the transfer-matrix eigenvalue.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConvergenceError
from .mps import SiteTensorSet, normalize_tensors
from .rdm import ReducedDensityMatrix

ID2 = np.eye(2, dtype=complex)
SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SY = np.array([[0.0, 1.0j], [-1.0j, 0.0]], dtype=complex)
SZ = np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=complex)

#: Largest XY block solved by the Pauli-string expansion (4^n Pfaffians).
XY_SITE_CAP = 7


@dataclass(frozen=True)
class ThreeBodyParams:
    """Coupling g of the three-body chain with an exact D=2 ground state."""

    g: float


@dataclass(frozen=True)
class XxzParams:
    """Anisotropy of the XXZ chain ``sum_i XX + YY + delta * ZZ``."""

    delta: float


@dataclass(frozen=True)
class XyParams:
    """Anisotropy gamma in [0, 1] and transverse field of the XY chain."""

    gamma: float
    field_h: float


def three_body_tensors(params: ThreeBodyParams) -> SiteTensorSet:
    """Exact D=2 ground-state tensors of the three-body chain, normalized.

    The chain ``sum_i J3 Z X Z + Jz Z Z - B X`` with J3 = (g-1)^2,
    Jz = 2(g^2-1), B = (1+g)^2 has the product of these matrices as its
    exact ground state; g = -1 is the cluster state, g = 1 is fully
    x-polarized, and the transition sits at g = 0.
    """
    m_down = np.array([[0.0, 0.0], [1.0, 1.0]], dtype=complex)
    m_up = np.array([[1.0, params.g], [0.0, 0.0]], dtype=complex)
    return normalize_tensors(SiteTensorSet((np.stack([m_down, m_up]),)))


def xxz_term(params: XxzParams) -> np.ndarray:
    """Two-site XXZ bond term XX + YY + delta * ZZ."""
    return (
        np.kron(SX, SX) + np.kron(SY, SY) + params.delta * np.kron(SZ, SZ)
    )


def xy_term(params: XyParams) -> np.ndarray:
    """Two-site XY bond term with the field split evenly across bonds.

    Each site's field appears in two bonds, so every bond carries half of
    the per-site contribution.  gamma = 1 is the transverse-field Ising
    bond, gamma = 0 the XX bond.
    """
    g = params.gamma
    h = params.field_h
    field = np.kron(SZ, ID2) + np.kron(ID2, SZ)
    return (
        -0.5 * ((1 + g) / 2 * np.kron(SX, SX) + (1 - g) / 2 * np.kron(SY, SY))
        - (h / 4.0) * field
    )


# ---------------------------------------------------------------------------
# Exact XY chain via Majorana correlations and Wick's theorem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MajoranaCorrelations:
    """Connected Majorana two-point functions of an n-site XY block.

    ``matrix`` is the real antisymmetric G with <a_p a_q> = delta_pq +
    i G_pq; site l owns Majoranas 2l (x type) and 2l+1 (y type).
    """

    n_sites: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2 * self.n_sites, 2 * self.n_sites):
            raise ValueError("correlation matrix must be 2n x 2n")
        if np.abs(m + m.T).max() > 1e-12:
            raise ValueError("correlation matrix must be antisymmetric")
        object.__setattr__(self, "matrix", m)


def _xy_symbol(params: XyParams, k: np.ndarray) -> np.ndarray:
    """Bogoliubov phase factor f(k)/|f(k)| of the XY chain."""
    f = params.field_h - np.cos(k) - 1j * params.gamma * np.sin(k)
    return f / np.abs(f)


def _xy_g_quadrature(params: XyParams, rs: np.ndarray, nodes: int) -> np.ndarray:
    """Fourier coefficients g_r of the Bogoliubov phase by Gauss-Legendre.

    Integrates over k = pi (1 - cos u) so endpoint derivatives vanish,
    which keeps convergence fast through the critical field.
    """
    u, w = np.polynomial.legendre.leggauss(nodes)
    u = 0.5 * math.pi * (u + 1.0)
    w = w * (0.5 * math.pi) * math.pi * np.sin(u)
    k = math.pi * (1.0 - np.cos(u))
    phase = _xy_symbol(params, k)
    kernel = np.exp(1j * np.outer(rs, k))
    return (kernel * phase) @ w / (2.0 * math.pi)


def _xy_g_xx_exact(params: XyParams, rs: np.ndarray) -> np.ndarray:
    """Closed-form g_r for gamma = 0, where the symbol is a sign function."""
    lam = params.field_h
    out = np.zeros(len(rs))
    if abs(lam) >= 1.0:
        out[rs == 0] = math.copysign(1.0, lam)
        return out
    kc = math.acos(lam)
    for i, r in enumerate(rs):
        if r == 0:
            out[i] = 1.0 - 2.0 * kc / math.pi
        else:
            out[i] = -2.0 * math.sin(kc * r) / (math.pi * r)
    return out


def xy_majorana_correlations(
    params: XyParams,
    n: int,
    cap: int = XY_SITE_CAP,
    nodes: int = 2048,
    tol: float = 1e-10,
    max_nodes: int = 1 << 16,
) -> MajoranaCorrelations:
    """Ground-state Majorana correlation matrix of ``n`` consecutive sites.

    The Fourier coefficients of the Bogoliubov phase are evaluated by
    Gauss-Legendre quadrature, doubling the node count until they move by
    less than ``tol`` (gamma = 0 uses the closed form instead).
    """
    if not 1 <= n <= cap:
        raise ValueError(f"XY solver supports 1 <= n <= {cap}")
    rs = np.arange(-(n - 1), n)
    if params.gamma == 0.0:
        g = _xy_g_xx_exact(params, rs)
    else:
        g = _xy_g_quadrature(params, rs, nodes).real
        while True:
            if nodes >= max_nodes:
                raise ConvergenceError(
                    f"quadrature not converged at {nodes} nodes"
                )
            nodes *= 2
            refined = _xy_g_quadrature(params, rs, nodes).real
            change = np.abs(refined - g).max()
            g = refined
            if change < tol:
                break
    coeff = {int(r): g[i] for i, r in enumerate(rs)}
    gamma = np.zeros((2 * n, 2 * n))
    for l in range(n):
        for m in range(n):
            gamma[2 * l, 2 * m + 1] = coeff[m - l]
            gamma[2 * m + 1, 2 * l] = -coeff[m - l]
    return MajoranaCorrelations(n, gamma)


def pfaffian(a: np.ndarray) -> float:
    """Pfaffian of a real antisymmetric matrix.

    Parlett-Reid tridiagonalization with partial pivoting; satisfies
    ``pfaffian(a)**2 == det(a)`` up to roundoff.
    """
    a = np.asarray(a, dtype=float)
    dim = a.shape[0]
    if a.shape != (dim, dim) or dim % 2:
        raise ValueError("pfaffian needs an even-dimensional square matrix")
    if dim and np.abs(a + a.T).max() > 1e-10 * max(1.0, np.abs(a).max()):
        raise ValueError("matrix is not antisymmetric")
    if dim == 0:
        return 1.0
    a = a.copy()
    value = 1.0
    for k in range(0, dim - 1, 2):
        pivot = k + 1 + int(np.argmax(np.abs(a[k + 1:, k])))
        if pivot != k + 1:
            a[[k + 1, pivot], :] = a[[pivot, k + 1], :]
            a[:, [k + 1, pivot]] = a[:, [pivot, k + 1]]
            value = -value
        if a[k + 1, k] == 0.0:
            return 0.0
        value *= a[k, k + 1]
        if k + 2 < dim:
            tau = a[k, k + 2:] / a[k, k + 1]
            col = a[k + 2:, k + 1]
            a[k + 2:, k + 2:] += np.outer(tau, col) - np.outer(col, tau)
    return float(value)


def _majorana_monomials(n: int):
    """(mask, phase) of every length-n Pauli string, ordered base-4 MSB first.

    Site l maps to X -> i^l a_0..a_{2l}, Y -> i^l a_0..a_{2l-1} a_{2l+1},
    Z -> -i a_{2l} a_{2l+1}; masks multiply in the Majorana Clifford algebra
    with the transposition sign tracked by bit counting.
    """
    site_ops = []
    for l in range(n):
        tail = (1 << (2 * l)) - 1
        site_ops.append(
            (
                (0, 1.0 + 0.0j),
                (tail | (1 << (2 * l)), (1j) ** l),
                (tail | (1 << (2 * l + 1)), (1j) ** l),
                ((0b11 << (2 * l)), -1.0j),
            )
        )

    def mask_product(m1, p1, m2, p2):
        sign = 1
        t = m2
        while t:
            low = t & -t
            idx = low.bit_length()  # bits of m1 strictly above this index
            if (m1 >> idx).bit_count() & 1:
                sign = -sign
            t ^= low
        return m1 ^ m2, sign * p1 * p2

    level = [(0, 1.0 + 0.0j)]
    for l in range(n):
        nxt = []
        for mask, phase in level:
            for op_mask, op_phase in site_ops[l]:
                nxt.append(mask_product(mask, phase, op_mask, op_phase))
        level = nxt
    return level


def xy_block_rdm(correlations: MajoranaCorrelations) -> ReducedDensityMatrix:
    """Block density matrix from Majorana correlations via Wick's theorem.

    Expands rho over all 4^n Pauli strings; each string expectation is a
    Pfaffian of the matching correlation submatrix, with Jordan-Wigner
    strings internal to the block already folded into the Majorana masks.
    """
    n = correlations.n_sites
    gamma = correlations.matrix
    coeffs = np.zeros(4 ** n, dtype=complex)
    worst_imag = 0.0
    for idx, (mask, phase) in enumerate(_majorana_monomials(n)):
        count = mask.bit_count()
        if count % 2:
            continue
        if count == 0:
            value = phase
        else:
            sel = [b for b in range(2 * n) if mask >> b & 1]
            value = phase * (1j) ** (count // 2) * pfaffian(gamma[np.ix_(sel, sel)])
        worst_imag = max(worst_imag, abs(value.imag))
        coeffs[idx] = value
    if worst_imag > 1e-7:
        raise RuntimeError(
            f"non-real Pauli expectation ({worst_imag:.3e}); "
            "correlation matrix or Pfaffian is inconsistent"
        )
    paulis = np.stack([ID2, SX, SY, SZ])
    arr = coeffs.real.astype(complex).reshape((4,) * n)
    for _ in range(n):
        arr = np.tensordot(arr, paulis, axes=([0], [0]))
    perm = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
    entries = arr.transpose(perm).reshape(2 ** n, 2 ** n) / 2 ** n
    rho = ReducedDensityMatrix(n, entries)
    min_eig = float(np.linalg.eigvalsh((entries + entries.conj().T) / 2).min())
    if min_eig < -1e-7:
        raise RuntimeError(
            f"XY block RDM not positive (min eigenvalue {min_eig:.3e})"
        )
    return rho
