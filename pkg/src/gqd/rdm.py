"""Reduced density matrices of consecutive site blocks of an infinite MPS.

Entry (k, m) of an n-site block RDM is ``left @ (conj(S_k) kron S_m) @ right``
with ``S_k`` the ordered product of site matrices along bit string k.  Bit
strings are read with the leftmost site as the most significant bit; basis
index 0 is spin-down, index 1 is spin-up.

For two-site unit cells a block may start at either position.  The left and
right boundary vectors are then shifted fixed points of the cell transfer
matrix: starting at position B uses ``left @ T_A``, and a block whose right
edge falls inside a cell uses ``T_B @ right``.  With normalized tensors all
four alignments give unit trace with no extra factors.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CapacityExceeded
from .mps import DominantEigenpair, SiteTensorSet, position_transfer

BASIS_CONVENTION = "leftmost site = most significant bit; 0 = down, 1 = up"

#: Default cap on dense block construction (4**n complex entries).
DENSE_RDM_CAP = 14


@dataclass(frozen=True)
class ReducedDensityMatrix:
    """Dense 2^n x 2^n block density matrix with its basis convention."""

    n_sites: int
    entries: np.ndarray
    basis_convention: str = BASIS_CONVENTION

    def __post_init__(self):
        dim = 2 ** self.n_sites
        entries = np.asarray(self.entries, dtype=complex)
        if entries.shape != (dim, dim):
            raise ValueError(f"expected {dim}x{dim} entries for n={self.n_sites}")
        object.__setattr__(self, "entries", entries)


def environment_pairs(tensors, eig, n, start=0):
    """Boundary (row, column) vector pairs for an n-site block at ``start``.

    One pair per dominant-eigenspace direction; expectation values average
    over them.  For two-site cells the vectors are shifted through the
    appropriate position transfer matrices so any alignment of the block
    inside the cell keeps unit trace.
    """
    out = []
    for left, right in eig.pairs():
        if tensors.unit_cell == 2:
            if start % 2 == 1:
                left = left @ position_transfer(tensors, 0)
            if (start + n) % 2 == 1:
                right = position_transfer(tensors, 1) @ right
        out.append((left, right))
    return out


def _string_products(tensors, n, start=0):
    """All 2^n ordered products of site matrices, most significant bit first."""
    d = tensors.bond_dimension
    strings = np.eye(d, dtype=complex)[None, :, :]
    for depth in range(n):
        m = tensors.tensors[(start + depth) % tensors.unit_cell]
        strings = np.einsum("kab,jbc->kjac", strings, m).reshape(-1, d, d)
    return strings


def block_rdm(
    tensors: SiteTensorSet,
    eig: DominantEigenpair,
    n: int,
    start: int = 0,
    cap: int = DENSE_RDM_CAP,
) -> ReducedDensityMatrix:
    """Dense density matrix of a consecutive ``n``-site block.

    ``start`` selects the unit-cell position of the first site (only
    relevant for two-site cells).  Raises :class:`CapacityExceeded` when
    ``n`` exceeds ``cap``.
    """
    if n < 1:
        raise ValueError("block length must be positive")
    if n > cap:
        raise CapacityExceeded(f"dense block of {n} sites exceeds cap {cap}")
    d = tensors.bond_dimension
    left, right = block_environments(tensors, eig, n, start)
    lmat = left.reshape(d, d)
    rmat = right.reshape(d, d)
    strings = _string_products(tensors, n, start)
    bra = strings.reshape(2 ** n, d * d).conj()
    ket = (lmat @ strings @ rmat.T).reshape(2 ** n, d * d)
    return ReducedDensityMatrix(n, bra @ ket.T)


def single_site_rdm(
    tensors: SiteTensorSet,
    eig: DominantEigenpair,
    position: int = 0,
) -> ReducedDensityMatrix:
    """2x2 density matrix of one site at the given unit-cell position."""
    return block_rdm(tensors, eig, 1, start=position)


def partial_trace_last(rho: ReducedDensityMatrix) -> ReducedDensityMatrix:
    """Trace out the last (least significant) site of a block RDM."""
    if rho.n_sites < 2:
        raise ValueError("cannot trace the last site of a single-site RDM")
    half = 2 ** (rho.n_sites - 1)
    reshaped = rho.entries.reshape(half, 2, half, 2)
    return ReducedDensityMatrix(rho.n_sites - 1, np.einsum("asbs->ab", reshaped))


@dataclass(frozen=True)
class RdmValidation:
    """Physicality report for a density matrix."""

    hermiticity_defect: float
    trace_defect: float
    min_eigenvalue: float
    tol: float
    passed: bool = field(init=False)

    def __post_init__(self):
        ok = (
            self.hermiticity_defect <= self.tol
            and self.trace_defect <= self.tol
            and self.min_eigenvalue >= -self.tol
        )
        object.__setattr__(self, "passed", bool(ok))


def validate_rdm(rho, tol: float = 1e-10) -> RdmValidation:
    """Report Hermiticity, trace and positivity defects of ``rho``."""
    entries = rho.entries if isinstance(rho, ReducedDensityMatrix) else np.asarray(rho)
    herm = float(np.abs(entries - entries.conj().T).max())
    trace = float(abs(entries.trace() - 1.0))
    eigs = np.linalg.eigvalsh((entries + entries.conj().T) / 2.0)
    return RdmValidation(herm, trace, float(eigs.min()), tol)


_HEADER = struct.Struct("<Q")


def dump_rdm(rho: ReducedDensityMatrix, path) -> None:
    """Write ``rho`` as an 8-byte little-endian site count plus raw complex128."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(rho.n_sites))
        fh.write(np.ascontiguousarray(rho.entries, dtype=np.complex128).tobytes())


def load_rdm(path) -> ReducedDensityMatrix:
    """Read a density matrix written by :func:`dump_rdm`."""
    with open(path, "rb") as fh:
        (n,) = _HEADER.unpack(fh.read(_HEADER.size))
        dim = 2 ** n
        data = np.frombuffer(fh.read(), dtype=np.complex128).reshape(dim, dim)
    return ReducedDensityMatrix(int(n), data.copy())
