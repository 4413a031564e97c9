"""Uniform infinite MPS, transfer matrices and dominant eigenpairs.

A state is held as one pair of D x D complex matrices (M[0] for spin-down,
M[1] for spin-up) per unit-cell position.  Everything downstream (reduced
density matrices, measured diagonals, entropies) is expressed through the
transfer matrix of the unit cell and its dominant left/right eigenvectors.

Conventions fixed here and relied on everywhere else:

* ``kron(A, B)`` pairs the conjugated (bra) path with the first factor, so
  the transfer matrix is ``sum_j kron(conj(M_j), M_j)``.
* Tensors are normalized so the dominant cell eigenvalue is 1, and the
  eigenvectors obey ``left . right == 1``.  Block density matrices built
  from such a pair have unit trace with no further factors.
* The phase of the right eigenvector is fixed by making its first
  significant component real positive, so repeated runs are reproducible.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .exceptions import DegenerateDominantEigenvalue

#: Above this transfer-matrix dimension the dense eigensolver is replaced
#: by ARPACK iteration.  D <= 32 stays dense, which covers D = 16 runs.
DENSE_EIG_LIMIT = 1024

#: Relative spectral gap below which the dominant eigenvalue is treated as
#: degenerate.
DEFAULT_GAP_THRESHOLD = 1e-8


@dataclass(frozen=True)
class SiteTensorSet:
    """Tensors of a uniform (unit cell 1 or 2) infinite MPS.

    ``tensors`` holds one array of shape (2, D, D) per unit-cell position;
    index 0 is spin-down, index 1 is spin-up.
    """

    tensors: tuple

    def __post_init__(self):
        if len(self.tensors) not in (1, 2):
            raise ValueError("unit cell must contain 1 or 2 positions")
        tensors = tuple(np.asarray(t, dtype=complex) for t in self.tensors)
        d = tensors[0].shape[-1]
        for t in tensors:
            if t.shape != (2, d, d):
                raise ValueError(
                    f"every position needs a pair of {d}x{d} matrices, got {t.shape}"
                )
        object.__setattr__(self, "tensors", tensors)

    @property
    def bond_dimension(self):
        return self.tensors[0].shape[-1]

    @property
    def unit_cell(self):
        return len(self.tensors)


def position_transfer(tensors: SiteTensorSet, position: int) -> np.ndarray:
    """Single-position transfer matrix ``sum_j conj(M_j) (x) M_j``."""
    m = tensors.tensors[position % tensors.unit_cell]
    return sum(np.kron(m[j].conj(), m[j]) for j in range(2))


def build_transfer_matrix(tensors: SiteTensorSet) -> np.ndarray:
    """Transfer matrix of one unit cell.

    For a single-site cell this is ``sum_j conj(M_j) (x) M_j``; for a
    two-site cell it is the ordered product ``T_A @ T_B``.
    """
    t = position_transfer(tensors, 0)
    for p in range(1, tensors.unit_cell):
        t = t @ position_transfer(tensors, p)
    return t


@dataclass(frozen=True)
class DominantEigenpair:
    """Dominant eigenvalue of a transfer matrix with its eigenvectors.

    ``left`` is a row fixed point (``left @ T = eigenvalue * left``) and
    ``right`` a column fixed point, scaled so ``left @ right == 1``.
    ``spectral_gap`` is the relative distance to the next eigenvalue
    modulus outside the dominant cluster.

    When a symmetric degeneracy is explicitly allowed, ``degeneracy`` > 1
    and ``left_stack`` / ``right_stack`` hold a biorthonormal basis of the
    dominant eigenspace; expectation values then average over the pairs,
    which reproduces the periodic-trace thermodynamic limit.
    """

    eigenvalue: complex
    left: np.ndarray
    right: np.ndarray
    spectral_gap: float
    degeneracy: int = 1
    left_stack: np.ndarray | None = None
    right_stack: np.ndarray | None = None

    def pairs(self):
        """Biorthonormal (left, right) pairs of the dominant eigenspace."""
        if self.left_stack is None:
            return [(self.left, self.right)]
        return list(zip(self.left_stack, self.right_stack))


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    """Rotate ``vec`` so its first significant component is real positive."""
    idx = np.flatnonzero(np.abs(vec) > 1e-12 * np.abs(vec).max())
    pivot = vec[idx[0]]
    return vec * (abs(pivot) / pivot)


def _degenerate_pair(transfer, vals, vecs, cluster, gap, gap_threshold):
    """Biorthonormal basis of a symmetric dominant cluster."""
    lam = vals[cluster[0]]
    if np.abs(vals[cluster] - lam).max() > gap_threshold * abs(lam):
        raise DegenerateDominantEigenvalue(
            "dominant eigenvalues are degenerate in modulus but differ in "
            "phase; no stationary state exists"
        )
    right = np.stack(
        [_fix_phase(vecs[:, i] / np.linalg.norm(vecs[:, i])) for i in cluster]
    )
    lvals, lvecs = scipy.linalg.eig(transfer.T)
    lorder = np.argsort(-np.abs(lvals))[: len(cluster)]
    left = np.stack([lvecs[:, i] / np.linalg.norm(lvecs[:, i]) for i in lorder])
    gram = left @ right.T
    if np.linalg.cond(gram) > 1e8:
        raise DegenerateDominantEigenvalue(
            "dominant eigenvalue is defective (nondiagonalizable cluster)"
        )
    left = np.linalg.solve(gram, left)
    return DominantEigenpair(
        complex(lam),
        left[0],
        right[0],
        float(gap),
        degeneracy=len(cluster),
        left_stack=left,
        right_stack=right,
    )


def dominant_eigenpair(
    transfer: np.ndarray,
    tol: float = 0.0,
    gap_threshold: float = DEFAULT_GAP_THRESHOLD,
    allow_symmetric_degeneracy: bool = False,
) -> DominantEigenpair:
    """Dominant eigenpair of ``transfer`` by modulus.

    Raises :class:`DegenerateDominantEigenvalue` when the relative gap to
    the subdominant modulus falls below ``gap_threshold``, unless
    ``allow_symmetric_degeneracy`` is set and the dominant cluster shares
    one eigenvalue, in which case the full eigenspace is returned (used for
    cat-like fixed points such as the three-body chain at its transition).
    """
    transfer = np.asarray(transfer, dtype=complex)
    dim = transfer.shape[0]
    if transfer.shape != (dim, dim):
        raise ValueError("transfer matrix must be square")
    if tol < 0:
        raise ValueError("tol must be nonnegative")

    if dim == 1:
        lam = complex(transfer[0, 0])
        return DominantEigenpair(lam, np.ones(1, dtype=complex),
                                 np.ones(1, dtype=complex), np.inf)

    if dim <= DENSE_EIG_LIMIT:
        vals, vecs = scipy.linalg.eig(transfer)
        order = np.argsort(-np.abs(vals))
        mods = np.abs(vals[order])
        cluster_size = int(np.sum(mods > mods[0] * (1.0 - gap_threshold)))
        cluster_size = min(cluster_size, dim)
        if cluster_size > 1:
            if not allow_symmetric_degeneracy:
                raise DegenerateDominantEigenvalue(
                    f"relative spectral gap {(mods[0] - mods[1]) / mods[0]:.3e} "
                    f"below threshold {gap_threshold:.1e}"
                )
            gap = (
                (mods[0] - mods[cluster_size]) / mods[0]
                if cluster_size < dim
                else np.inf
            )
            return _degenerate_pair(
                transfer, vals, vecs, order[:cluster_size], gap, gap_threshold
            )
        lam = vals[order[0]]
        gap = (mods[0] - mods[1]) / mods[0]
        right = vecs[:, order[0]]
        lvals, lvecs = scipy.linalg.eig(transfer.T)
        left = lvecs[:, np.argmax(np.abs(lvals))]
    else:
        vals, vecs = scipy.sparse.linalg.eigs(transfer, k=2, which="LM", tol=tol)
        order = np.argsort(-np.abs(vals))
        lam = vals[order[0]]
        gap = (np.abs(lam) - np.abs(vals[order[1]])) / np.abs(lam)
        right = vecs[:, order[0]]
        lvals, lvecs = scipy.sparse.linalg.eigs(transfer.T, k=2, which="LM", tol=tol)
        left = lvecs[:, np.argmax(np.abs(lvals))]

    if gap < gap_threshold:
        raise DegenerateDominantEigenvalue(
            f"relative spectral gap {gap:.3e} below threshold {gap_threshold:.1e}"
        )

    right = _fix_phase(right / np.linalg.norm(right))
    overlap = left @ right
    if abs(overlap) < 1e-14:
        raise DegenerateDominantEigenvalue(
            "left and right dominant eigenvectors are orthogonal"
        )
    left = left / overlap
    return DominantEigenpair(complex(lam), left, right, float(gap))


def normalize_tensors(
    tensors: SiteTensorSet,
    gap_threshold: float = DEFAULT_GAP_THRESHOLD,
    allow_symmetric_degeneracy: bool = False,
) -> SiteTensorSet:
    """Rescale so the unit-cell transfer matrix has dominant eigenvalue 1.

    Every position is divided by ``|lambda|**(1 / (2 * unit_cell))``, which
    leaves the physical state unchanged.
    """
    eig = dominant_eigenpair(
        build_transfer_matrix(tensors),
        gap_threshold=gap_threshold,
        allow_symmetric_degeneracy=allow_symmetric_degeneracy,
    )
    scale = abs(eig.eigenvalue) ** (1.0 / (2 * tensors.unit_cell))
    return SiteTensorSet(tuple(t / scale for t in tensors.tensors))


def fixed_points(
    tensors: SiteTensorSet,
    gap_threshold: float = DEFAULT_GAP_THRESHOLD,
    allow_symmetric_degeneracy: bool = False,
) -> DominantEigenpair:
    """Dominant eigenpair of the unit-cell transfer matrix of ``tensors``."""
    return dominant_eigenpair(
        build_transfer_matrix(tensors),
        gap_threshold=gap_threshold,
        allow_symmetric_degeneracy=allow_symmetric_degeneracy,
    )
