"""Dense reference implementations used to validate every fast path.

Everything here works on explicit 2^n x 2^n density matrices: measured
diagonals through an explicitly built multi-site rotation, discord through
dense partial traces and entropies, plus the two standard two-qubit
measures (Wootters concurrence, Horodecki CHSH bound) used for the XXZ
cross-checks.
"""

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.optimize

from .exceptions import CapacityExceeded
from .engine import (
    GqdConfig,
    GqdResult,
    RotationAngles,
    _grid_then_simplex,
    _plogp,
    canonical_angles,
    rotation_matrix,
    von_neumann_entropy,
)
from .models import SX, SY, SZ
from .rdm import ReducedDensityMatrix

#: Dense matrices stay at or below 2^10 x 2^10.
DENSE_ORACLE_CAP = 10


def _entries(rho) -> np.ndarray:
    if isinstance(rho, ReducedDensityMatrix):
        return rho.entries
    return np.asarray(rho, dtype=complex)


def _site_count(entries: np.ndarray) -> int:
    n = int(round(math.log2(entries.shape[0])))
    if entries.shape != (2 ** n, 2 ** n):
        raise ValueError("density matrix dimension is not a power of two")
    return n


def kron_all(matrices) -> np.ndarray:
    return reduce(np.kron, matrices)


def reduce_to_site(entries: np.ndarray, n: int, site: int) -> np.ndarray:
    """Single-site reduced matrix of site ``site`` (0 = leftmost = MSB)."""
    tensor = entries.reshape((2,) * (2 * n))
    trace_pairs = [(ax, n + ax) for ax in range(n) if ax != site]
    # trace axes from the back so remaining positions stay valid
    out = tensor
    for a, b in sorted(trace_pairs, reverse=True):
        out = np.trace(out, axis1=a, axis2=b)
    return out.reshape(2, 2)


def dense_measured_diagonals(rho, angles, cap: int = DENSE_ORACLE_CAP) -> np.ndarray:
    """Diagonal of R^(x)n^dagger  rho  R^(x)n, built explicitly."""
    entries = _entries(rho)
    n = _site_count(entries)
    if n > cap:
        raise CapacityExceeded(f"dense measurement of {n} sites exceeds cap {cap}")
    if isinstance(angles, RotationAngles) and angles.per_site is not None:
        rots = [rotation_matrix(pair) for pair in angles.per_site]
    elif isinstance(angles, (list, tuple)) and angles and isinstance(angles[0], tuple):
        rots = [rotation_matrix(pair) for pair in angles]
    else:
        rots = [rotation_matrix(angles)] * n
    big = kron_all(rots)
    return np.einsum("ij,jk,ki->i", big.conj().T, entries, big).real


def _dense_angle_part(entries, n, singles, angles):
    """Angle part of the objective; ``angles`` is (theta, phi) or one pair per site."""
    per_site = isinstance(angles, list)
    diag = dense_measured_diagonals(entries, angles, cap=n)
    site_total = 0.0
    for j in range(n):
        r = rotation_matrix(angles[j] if per_site else angles)
        site_total += _plogp(np.diag(r.conj().T @ singles[j] @ r).real)
    return site_total - _plogp(diag)


def brute_force_gqd(rho, config: GqdConfig = GqdConfig()) -> GqdResult:
    """Discord of an explicit density matrix by dense minimization.

    Same optimizer contract as the fast path: coarse grid, then
    Nelder-Mead restarts, value clipped at zero.
    """
    entries = _entries(rho)
    n = _site_count(entries)
    if n > DENSE_ORACLE_CAP:
        raise CapacityExceeded(f"brute force limited to {DENSE_ORACLE_CAP} sites")
    singles = [reduce_to_site(entries, n, j) for j in range(n)]
    site_sum = float(sum(von_neumann_entropy(s) for s in singles))
    block_entropy = von_neumann_entropy(entries)
    const_part = site_sum - block_entropy

    def objective(x):
        return _dense_angle_part(entries, n, singles, x)

    best_fun, best_x, trace, converged = _grid_then_simplex(objective, config)
    theta, phi = canonical_angles(*best_x)
    per_site = None
    if config.per_site:
        res = scipy.optimize.minimize(
            lambda x: _dense_angle_part(
                entries, n, singles, list(zip(x[0::2], x[1::2]))
            ),
            np.array([theta, phi] * n),
            method="Nelder-Mead",
            options={"xatol": config.xatol, "fatol": config.fatol,
                     "maxiter": 4 * n * config.max_refine_iter},
        )
        trace = list(trace) + [{
            "stage": "per-site", "fun": float(res.fun),
            "nfev": int(res.nfev), "success": bool(res.success),
        }]
        if res.fun < best_fun:
            best_fun = float(res.fun)
            per_site = tuple(
                canonical_angles(t, p) for t, p in zip(res.x[0::2], res.x[1::2])
            )

    if per_site is not None:
        pairs = list(per_site)
        diag = dense_measured_diagonals(entries, pairs, cap=n)
        site_plogp = sum(
            _plogp(np.diag(rotation_matrix(pairs[j]).conj().T @ singles[j]
                           @ rotation_matrix(pairs[j])).real)
            for j in range(n)
        )
    else:
        diag = dense_measured_diagonals(entries, (theta, phi), cap=n)
        r = rotation_matrix((theta, phi))
        site_plogp = sum(
            _plogp(np.diag(r.conj().T @ singles[j] @ r).real) for j in range(n)
        )
    raw = best_fun + const_part
    return GqdResult(
        value=max(0.0, raw),
        angles=RotationAngles(theta, phi, per_site=per_site),
        terms=(-site_plogp, -_plogp(diag), site_sum, block_entropy),
        raw_value=raw,
        converged=converged,
        optimizer_trace=tuple(trace),
        entropy_method="dense",
    )


def concurrence(rho2) -> float:
    """Wootters concurrence of a two-qubit density matrix."""
    entries = _entries(rho2)
    if entries.shape != (4, 4):
        raise ValueError("concurrence needs a 4x4 density matrix")
    yy = np.kron(SY, SY)
    flipped = entries @ yy @ entries.conj() @ yy
    mu = np.sort(np.abs(np.linalg.eigvals(flipped)))[::-1]
    roots = np.sqrt(mu)
    return float(max(0.0, roots[0] - roots[1] - roots[2] - roots[3]))


def chsh_violation(rho2) -> float:
    """Maximal CHSH expectation 2 sqrt(u1 + u2) from the correlation matrix."""
    entries = _entries(rho2)
    if entries.shape != (4, 4):
        raise ValueError("CHSH needs a 4x4 density matrix")
    paulis = (SX, SY, SZ)
    t = np.array(
        [[np.trace(entries @ np.kron(a, b)).real for b in paulis] for a in paulis]
    )
    u = np.sort(np.linalg.eigvalsh(t.T @ t))[::-1]
    return float(2.0 * math.sqrt(max(u[0] + u[1], 0.0)))


@dataclass(frozen=True)
class TwoSiteMeasures:
    """Concurrence, CHSH bound and two-site discord of one state."""

    concurrence: float
    chsh_value: float
    discord_g2: float


def two_site_measures(rho2, config: GqdConfig = GqdConfig()) -> TwoSiteMeasures:
    return TwoSiteMeasures(
        concurrence=concurrence(rho2),
        chsh_value=chsh_violation(rho2),
        discord_g2=brute_force_gqd(rho2, config).value,
    )
