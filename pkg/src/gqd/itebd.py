"""Imaginary-time evolution of a two-site-unit-cell MPS to the ground state.

Vidal-form iTEBD: the state is Gamma_A lambda_A Gamma_B lambda_B repeated,
gates exp(-dt h) act on alternating bonds, and each update truncates back
to the working bond dimension.  A random initial state lets discrete
symmetries break spontaneously; identical seeds reproduce identical runs.

Energies reported to callers go through the transfer-matrix path (exact
fixed points), so they do not rely on the evolved state being perfectly
canonical.
"""

import hashlib
import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import ConvergenceError
from .mps import SiteTensorSet, fixed_points, normalize_tensors
from .rdm import block_rdm

#: Singular values below this floor are treated as zero when inverting
#: bond weights and when reducing D for the uniform-MPS export.
SINGULAR_FLOOR = 1e-14


@dataclass(frozen=True)
class TrotterSchedule:
    """Annealing stages (dt, max_steps) with an energy-plateau stop rule.

    A stage ends once the energy moves less than ``convergence`` over
    ``window`` steps; only the final stage is required to reach that
    plateau.
    """

    stages: tuple
    convergence: float = 1e-10
    window: int = 100

    def __post_init__(self):
        stages = tuple((float(dt), int(steps)) for dt, steps in self.stages)
        if not stages or any(dt <= 0 for dt, _ in stages):
            raise ValueError("schedule needs positive time steps")
        if any(s1[0] <= s2[0] for s1, s2 in zip(stages[1:], stages)):
            raise ValueError("time steps must decrease across stages")
        object.__setattr__(self, "stages", stages)

    def digest(self) -> str:
        payload = json.dumps(
            {"stages": self.stages, "convergence": self.convergence,
             "window": self.window}
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def default_schedule() -> TrotterSchedule:
    return TrotterSchedule(
        stages=((0.1, 10000), (0.01, 10000), (1e-3, 10000),
                (1e-4, 10000), (1e-5, 10000))
    )


@dataclass(frozen=True)
class CanonicalUnitCell:
    """Two-site Vidal form: site tensors (2, D, D) and bond weights (D,)."""

    gamma_a: np.ndarray
    gamma_b: np.ndarray
    lambda_a: np.ndarray
    lambda_b: np.ndarray

    @property
    def bond_dimension(self):
        return len(self.lambda_a)


def two_site_gate(hamiltonian_term: np.ndarray, dt: float) -> np.ndarray:
    """exp(-dt h) of a Hermitian 4x4 bond term, via eigendecomposition."""
    h = np.asarray(hamiltonian_term, dtype=complex)
    if np.abs(h - h.conj().T).max() > 1e-12:
        raise ValueError("bond term must be Hermitian")
    vals, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(-dt * vals)) @ vecs.conj().T


def _random_state(d: int, seed: int) -> CanonicalUnitCell:
    rng = np.random.default_rng(seed)
    shape = (2, d, d)
    ga = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    gb = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    la = np.sort(rng.random(d))[::-1]
    lb = np.sort(rng.random(d))[::-1]
    return CanonicalUnitCell(ga, gb, la / np.linalg.norm(la),
                             lb / np.linalg.norm(lb))


def _theta(gamma_1, lam_mid, gamma_2, lam_out):
    """Bond wavefunction lam_out g1 lam_mid g2 lam_out, legs (s1, s2, l, r)."""
    left = lam_out[:, None] * gamma_1 * lam_mid[None, :]
    t = np.einsum("alm,bmr->ablr", left, gamma_2 * lam_out[None, :])
    return t


def _bond_update(gamma_1, lam_mid, gamma_2, lam_out, gate, d):
    """Apply a two-site gate across one bond and re-truncate to d."""
    theta = _theta(gamma_1, lam_mid, gamma_2, lam_out)
    theta = np.einsum("cdab,ablr->cdlr", gate.reshape(2, 2, 2, 2), theta)
    matrix = theta.transpose(0, 2, 1, 3).reshape(2 * len(lam_out), -1)
    u, s, vh = scipy.linalg.svd(matrix, full_matrices=False,
                                lapack_driver="gesvd")
    s = s[:d]
    new_mid = s / np.linalg.norm(s)
    inv_out = 1.0 / np.maximum(lam_out, SINGULAR_FLOOR)
    new_1 = (
        u[:, :d].reshape(2, len(lam_out), d) * inv_out[None, :, None]
    )
    new_2 = vh[:d].reshape(d, 2, len(lam_out)).transpose(1, 0, 2) \
        * inv_out[None, None, :]
    return new_1, new_mid, new_2


def _sweep(state: CanonicalUnitCell, gate, d) -> CanonicalUnitCell:
    """One full step: update bond A-B, then bond B-A."""
    ga, la, gb = _bond_update(state.gamma_a, state.lambda_a, state.gamma_b,
                              state.lambda_b, gate, d)
    state = CanonicalUnitCell(ga, gb, la, state.lambda_b)
    gb, lb, ga = _bond_update(state.gamma_b, state.lambda_b, state.gamma_a,
                              state.lambda_a, gate, d)
    return CanonicalUnitCell(ga, gb, state.lambda_a, lb)


def _bond_energy(state, hamiltonian_term):
    """Cheap bond-averaged energy from the Vidal form (used for stopping)."""
    h = hamiltonian_term.reshape(2, 2, 2, 2)
    total = 0.0
    for g1, lm, g2, lo in (
        (state.gamma_a, state.lambda_a, state.gamma_b, state.lambda_b),
        (state.gamma_b, state.lambda_b, state.gamma_a, state.lambda_a),
    ):
        theta = _theta(g1, lm, g2, lo)
        norm = np.einsum("ablr,ablr->", theta.conj(), theta).real
        ham = np.einsum("abcd,cdlr->ablr", h, theta)
        total += np.einsum("ablr,ablr->", theta.conj(), ham).real / norm
    return total / 2.0


def ground_state(
    hamiltonian_term: np.ndarray,
    d: int,
    schedule: TrotterSchedule | None = None,
    seed: int = 0,
    canonical_sweeps: int = 200,
    energy_trace: list | None = None,
) -> CanonicalUnitCell:
    """Evolve a random seed state to the ground state of a two-site term.

    Raises :class:`ConvergenceError` (with the energy trace attached) when
    the final, smallest time step fails to reach its energy plateau.  Pass
    a list as ``energy_trace`` to collect (dt, step, energy) checkpoints.
    """
    if d < 2:
        raise ValueError("bond dimension must be at least 2")
    schedule = schedule or default_schedule()
    state = _random_state(d, seed)
    trace = energy_trace if energy_trace is not None else []
    for stage, (dt, max_steps) in enumerate(schedule.stages):
        gate = two_site_gate(hamiltonian_term, dt)
        previous = None
        converged = False
        for step in range(1, max_steps + 1):
            state = _sweep(state, gate, d)
            if step % schedule.window == 0:
                energy = _bond_energy(state, hamiltonian_term)
                trace.append((dt, step, energy))
                if previous is not None and abs(energy - previous) < schedule.convergence:
                    converged = True
                    break
                previous = energy
        if not converged and stage == len(schedule.stages) - 1:
            raise ConvergenceError(
                f"final stage dt={dt} did not plateau within {max_steps} steps",
                trace=trace,
            )
    identity = np.eye(4, dtype=complex)
    for _ in range(canonical_sweeps):
        state = _sweep(state, identity, d)
    return state


def to_uniform_mps(state: CanonicalUnitCell) -> SiteTensorSet:
    """Absorb bond weights symmetrically into a unit-cell-2 tensor set.

    Position A becomes sqrt(lambda_B) Gamma_A sqrt(lambda_A) and position B
    the mirror image.  Bond directions whose weight sits below the singular
    floor are dropped, shrinking D.
    """
    keep_a = state.lambda_a > SINGULAR_FLOOR
    keep_b = state.lambda_b > SINGULAR_FLOOR
    d_eff = max(int(keep_a.sum()), int(keep_b.sum()), 1)
    la = state.lambda_a[:d_eff]
    lb = state.lambda_b[:d_eff]
    ga = state.gamma_a[:, :d_eff, :d_eff]
    gb = state.gamma_b[:, :d_eff, :d_eff]
    sqrt_a = np.sqrt(np.clip(la, 0.0, None))
    sqrt_b = np.sqrt(np.clip(lb, 0.0, None))
    m_a = sqrt_b[None, :, None] * ga * sqrt_a[None, None, :]
    m_b = sqrt_a[None, :, None] * gb * sqrt_b[None, None, :]
    return normalize_tensors(SiteTensorSet((m_a, m_b)))


def energy_per_site(state: CanonicalUnitCell, hamiltonian_term) -> float:
    """Bond-term expectation averaged over the A-B and B-A bonds.

    Evaluated through exact transfer-matrix fixed points, so the value is
    gauge independent.
    """
    tensors = to_uniform_mps(state)
    eig = fixed_points(tensors)
    h = np.asarray(hamiltonian_term, dtype=complex)
    e_ab = np.trace(block_rdm(tensors, eig, 2, start=0).entries @ h).real
    e_ba = np.trace(block_rdm(tensors, eig, 2, start=1).entries @ h).real
    return (e_ab + e_ba) / 2.0


def canonical_residuals(state: CanonicalUnitCell) -> float:
    """Largest defect of the four Vidal orthonormality conditions."""
    worst = 0.0
    for gamma, lam_left, lam_right in (
        (state.gamma_a, state.lambda_b, state.lambda_a),
        (state.gamma_b, state.lambda_a, state.lambda_b),
    ):
        left = lam_left[None, :, None] * gamma
        cond = sum(left[s].conj().T @ left[s] for s in range(2))
        worst = max(worst, np.abs(cond - np.eye(len(lam_right))).max())
        right = gamma * lam_right[None, None, :]
        cond = sum(right[s] @ right[s].conj().T for s in range(2))
        worst = max(worst, np.abs(cond - np.eye(len(lam_left))).max())
    return float(worst)


def vidal_block_rdm(state: CanonicalUnitCell, n: int, start: int = 0):
    """Block RDM contracted directly in the Vidal gauge (n <= 4, tests).

    Assumes canonical environments, unlike the transfer-matrix route, so
    agreement between the two paths measures gauge quality.
    """
    if n > 4:
        raise ValueError("direct Vidal contraction is limited to n <= 4")
    cells = [(state.gamma_a, state.lambda_a), (state.gamma_b, state.lambda_b)]
    lam_out = cells[(start - 1) % 2][1]
    psi = np.diag(lam_out.astype(complex))[None, ...]  # legs (phys, l, r)
    for j in range(n):
        gamma, lam = cells[(start + j) % 2]
        site = gamma * lam[None, None, :]
        psi = np.einsum("klm,smr->kslr", psi, site)
        psi = psi.reshape(-1, psi.shape[-2], psi.shape[-1])
    rho = np.einsum("klr,mlr->km", psi, psi.conj())
    from .rdm import ReducedDensityMatrix

    return ReducedDensityMatrix(n, rho / np.trace(rho).real)


FORMAT_VERSION = 1


def save_checkpoint(path, state: CanonicalUnitCell, metadata: dict) -> None:
    """Write the state plus run metadata to a versioned npz container."""
    np.savez_compressed(
        path,
        format_version=np.array(FORMAT_VERSION),
        gamma_a=state.gamma_a,
        gamma_b=state.gamma_b,
        lambda_a=state.lambda_a,
        lambda_b=state.lambda_b,
        metadata=np.frombuffer(
            json.dumps(metadata, sort_keys=True).encode(), dtype=np.uint8
        ),
    )


def load_checkpoint(path):
    """Read a checkpoint; returns (state, metadata)."""
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        state = CanonicalUnitCell(
            data["gamma_a"], data["gamma_b"],
            data["lambda_a"], data["lambda_b"],
        )
        metadata = json.loads(bytes(data["metadata"]).decode())
    return state, metadata
