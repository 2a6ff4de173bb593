"""Control objective, analytic landscape gradient, and local-surjectivity tests.

The central object is the end-point map psi: control grid -> U_T in SU(N).
This module evaluates J = Tr[O_hat U_T rho0 U_T^dag], differentiates J exactly
through the piecewise-constant propagator, expresses the differential of psi
in left-translated orthonormal su(N) coordinates, and decides whether that
differential is surjective, including the one-sided (cone) case when controls
sit at the amplitude bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear

from .qdyn import (
    BasisSet,
    ControlGrid,
    NumericalFault,
    assemble_segment_hamiltonian,
    expm_with_directional_derivatives,
)

__all__ = [
    "QuantumSystem",
    "ObjectiveRange",
    "LandscapeGradient",
    "TangentMap",
    "objective",
    "objective_range",
    "gradient",
    "psi_tangent_map",
    "unitary_objective_gradient",
    "local_surjectivity_rank",
    "active_set",
    "boundary_cone_surjectivity",
    "kappa_threshold",
]

SYSTEM_TOL = 1e-12
OBJECTIVE_UNITARITY_TOL = 1e-10
OBJECTIVE_IMAG_TOL = 1e-10
TANGENT_ROW_TOL = 1e-10
DEFAULT_RANK_TOL = 1e-8
DEFAULT_ACTIVE_TOL = 1e-9
CONE_RESIDUAL_TOL = 1e-8
DEFAULT_CONE_SAMPLES = 64


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class QuantumSystem:
    """Initial density matrix and measured observable of an N-level system."""

    dim: int
    rho0: np.ndarray
    observable: np.ndarray

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"dimension must be >= 2, got {self.dim}")
        rho = np.asarray(self.rho0, dtype=complex)
        obs = np.asarray(self.observable, dtype=complex)
        shape = (self.dim, self.dim)
        if rho.shape != shape or obs.shape != shape:
            raise ValueError(
                f"expected {shape} matrices, got rho0 {rho.shape}, "
                f"observable {obs.shape}"
            )
        if np.max(np.abs(rho - rho.conj().T)) > SYSTEM_TOL:
            raise ValueError("rho0 is not Hermitian")
        if np.max(np.abs(obs - obs.conj().T)) > SYSTEM_TOL:
            raise ValueError("observable is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > SYSTEM_TOL or abs(np.trace(rho).imag) > SYSTEM_TOL:
            raise ValueError(f"Tr rho0 = {np.trace(rho)}, expected 1")
        if np.min(np.linalg.eigvalsh(rho)) < -SYSTEM_TOL:
            raise ValueError("rho0 has a negative eigenvalue")
        object.__setattr__(self, "rho0", _frozen(rho))
        object.__setattr__(self, "observable", _frozen(obs))


@dataclass(frozen=True)
class ObjectiveRange:
    """Attainable interval of J over all unitaries (von Neumann pairing)."""

    j_min: float
    j_max: float

    def __post_init__(self):
        if not (np.isfinite(self.j_min) and np.isfinite(self.j_max)):
            raise ValueError("range endpoints must be finite")
        if self.j_min > self.j_max + 1e-12:
            raise ValueError(f"j_min {self.j_min} exceeds j_max {self.j_max}")

    @property
    def width(self) -> float:
        return self.j_max - self.j_min


@dataclass(frozen=True)
class LandscapeGradient:
    """Exact partials dJ/d eps_{j,z}, same (num_controls, Z) layout as the grid."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError(f"gradient must be a 2-D matrix, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("gradient entries must be finite")
        object.__setattr__(self, "values", _frozen(vals))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class TangentMap:
    """Differential of psi in left-translated orthonormal su(N) coordinates.

    Row j*Z + (z-1) holds the coordinates of -i U_T^dag (dU_T/d eps_{j,z})
    in the unit-Frobenius basis {B_k / sqrt(2)}; rows flatten like
    ControlGrid.values.
    """

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            raise ValueError(f"rows must be a 2-D matrix, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ValueError("tangent-map entries must be finite")
        n = rows.shape[1]
        dim = round(np.sqrt(n + 1))
        if dim * dim - 1 != n or dim < 2:
            raise ValueError(f"{n} columns does not match any su(N) dimension")
        object.__setattr__(self, "rows", _frozen(rows))

    @property
    def dim(self) -> int:
        return round(np.sqrt(self.rows.shape[1] + 1))

    def reassemble(self, basis: BasisSet, r: int) -> np.ndarray:
        """Row r as the su(N) matrix sum_k rows[r, k] B_k / sqrt(2)."""
        return np.tensordot(self.rows[r] / np.sqrt(2.0), basis.stack, axes=1)


def objective(system: QuantumSystem, U: np.ndarray) -> float:
    """J = Re Tr[O_hat U rho0 U^dag] for a unitary U."""
    U = np.asarray(U, dtype=complex)
    if U.shape != (system.dim, system.dim):
        raise ValueError(f"expected a {system.dim}x{system.dim} unitary, got {U.shape}")
    if np.linalg.norm(U.conj().T @ U - np.eye(system.dim)) > OBJECTIVE_UNITARITY_TOL:
        raise ValueError("U is not unitary within tolerance")
    val = np.trace(system.observable @ U @ system.rho0 @ U.conj().T)
    if abs(val.imag) >= OBJECTIVE_IMAG_TOL:
        raise NumericalFault(f"objective trace has imaginary part {val.imag}")
    return float(val.real)


def objective_range(system: QuantumSystem) -> ObjectiveRange:
    """[j_min, j_max] from increasing-sorted spectra of rho0 and the observable.

    The maximum pairs same-rank eigenvalues, the minimum pairs opposite-rank
    ones.
    """
    r = np.linalg.eigvalsh(system.rho0)
    o = np.linalg.eigvalsh(system.observable)
    return ObjectiveRange(float(r[::-1] @ o), float(r @ o))


def _segment_products(grid: ControlGrid, basis: BasisSet):
    """Per-segment unitaries, their derivative stacks, and prefix products.

    Returns (prefix, units, dunits) with prefix[z] = U_z ... U_1 (prefix[0]
    = I), units[z-1] = U_z, and dunits[z-1][j] the derivative of U_z along
    generator j.
    """
    if basis.size != grid.num_controls:
        raise ValueError(
            f"grid has {grid.num_controls} control rows but the basis "
            f"provides {basis.size} generators"
        )
    dt = grid.dt
    prefix = [np.eye(basis.dim, dtype=complex)]
    units = []
    dunits = []
    for z in range(1, grid.segments + 1):
        H = assemble_segment_hamiltonian(grid, z, basis)
        U, dU = expm_with_directional_derivatives(H, dt, basis.stack)
        units.append(U)
        dunits.append(dU)
        prefix.append(U @ prefix[-1])
    return prefix, units, dunits


def gradient(system: QuantumSystem, grid: ControlGrid, basis: BasisSet) -> LandscapeGradient:
    """Analytic gradient of J at the grid.

    dU_T/d eps_{j,z} = U_Z ... U_{z+1} (dU_z/d eps_{j,z}) U_{z-1} ... U_1 and
    dJ = 2 Re Tr[O_hat (dU_T) rho0 U_T^dag]; each trace reduces to a pairing
    of the segment derivative with one N x N weight built from the prefix
    and suffix products.
    """
    if system.dim != basis.dim:
        raise ValueError(f"system dim {system.dim} != basis dim {basis.dim}")
    Z = grid.segments
    prefix, units, dunits = _segment_products(grid, basis)
    total = prefix[Z]
    # suffix[z] = U_Z ... U_{z+1}, suffix[Z] = I
    suffix = [None] * (Z + 1)
    suffix[Z] = np.eye(basis.dim, dtype=complex)
    for z in range(Z - 1, -1, -1):
        suffix[z] = suffix[z + 1] @ units[z]
    C = system.rho0 @ total.conj().T @ system.observable
    vals = np.empty((grid.num_controls, Z))
    for z in range(1, Z + 1):
        W = prefix[z - 1] @ C @ suffix[z]
        vals[:, z - 1] = 2.0 * np.einsum("jab,ba->j", dunits[z - 1], W).real
    return LandscapeGradient(vals)


def psi_tangent_map(grid: ControlGrid, basis: BasisSet) -> TangentMap:
    """Left-translated differential of the end-point map, one row per control.

    -i U_T^dag (dU_T/d eps_{j,z}) = -i P_{z-1}^dag U_z^dag (dU_z/d eps_{j,z})
    P_{z-1} with P_{z-1} = U_{z-1} ... U_1, so only prefix products enter.
    Each row is checked to be Hermitian traceless before projection onto
    {B_k / sqrt(2)}.
    """
    Z = grid.segments
    n = basis.size
    prefix, units, dunits = _segment_products(grid, basis)
    rows = np.empty((grid.num_controls * Z, n))
    for z in range(1, Z + 1):
        P = prefix[z - 1]
        Uh = units[z - 1].conj().T
        for j in range(grid.num_controls):
            A = -1j * P.conj().T @ (Uh @ dunits[z - 1][j]) @ P
            if np.max(np.abs(A - A.conj().T)) > TANGENT_ROW_TOL:
                raise NumericalFault(
                    f"tangent row ({j}, {z}) is not Hermitian within tolerance"
                )
            if abs(np.trace(A)) > TANGENT_ROW_TOL:
                raise NumericalFault(f"tangent row ({j}, {z}) is not traceless")
            rows[j * Z + (z - 1)] = (
                np.einsum("kab,ba->k", basis.stack, A).real / np.sqrt(2.0)
            )
    return TangentMap(rows)


def unitary_objective_gradient(
    system: QuantumSystem, U: np.ndarray, basis: BasisSet
) -> np.ndarray:
    """Gradient of phi(U) = Tr[O_hat U rho0 U^dag] in left su(N) coordinates.

    Component k is Tr[(B_k/sqrt(2)) i[rho0, U^dag O_hat U]]; pairing these
    with tangent-map rows reproduces dJ/d eps by the chain rule.
    """
    U = np.asarray(U, dtype=complex)
    M = U.conj().T @ system.observable @ U
    comm = 1j * (system.rho0 @ M - M @ system.rho0)
    return np.einsum("kab,ba->k", basis.stack, comm).real / np.sqrt(2.0)


def local_surjectivity_rank(tm: TangentMap, tol: float = DEFAULT_RANK_TOL) -> tuple:
    """(rank, surjective): singular values above tol x largest, vs N^2 - 1."""
    s = np.linalg.svd(tm.rows, compute_uv=False)
    if s.size == 0 or s[0] <= 0.0:
        rank = 0
    else:
        rank = int(np.sum(s > tol * s[0]))
    return rank, rank == tm.rows.shape[1]


def active_set(grid: ControlGrid, active_tol: float = DEFAULT_ACTIVE_TOL) -> list:
    """Controls at the bound: (j, z, side) with z 1-based and side '+' or '-'.

    A control is active when kappa - |eps| <= active_tol * kappa; the side is
    the sign of the bound it touches.
    """
    out = []
    thresh = active_tol * grid.kappa
    for j in range(grid.num_controls):
        for z0 in range(grid.segments):
            e = grid.values[j, z0]
            if grid.kappa - abs(e) <= thresh:
                out.append((j, z0 + 1, "+" if e >= 0.0 else "-"))
    return out


def _variation_bounds(grid: ControlGrid, active_tol: float) -> tuple:
    """Elementwise (lower, upper) bounds on admissible one-sided variations."""
    thresh = active_tol * grid.kappa
    vals = grid.values.ravel()
    at_upper = vals >= grid.kappa - thresh
    at_lower = vals <= -(grid.kappa - thresh)
    lb = np.where(at_lower, 0.0, -np.inf)
    ub = np.where(at_upper, 0.0, np.inf)
    return lb, ub


def boundary_cone_surjectivity(
    grid: ControlGrid,
    tm: TangentMap,
    active_tol: float = DEFAULT_ACTIVE_TOL,
    samples: int = DEFAULT_CONE_SAMPLES,
    seed: int = 0,
) -> tuple:
    """(surjective, witness): can admissible variations reach all of su(N)?

    Variations are constrained one-sidedly at active bounds (<= 0 at +kappa,
    >= 0 at -kappa, free otherwise). For each of `samples` seeded random unit
    directions w the sign-constrained least-squares problem min |M^T d - w|
    is solved; any residual above 1e-8 certifies w outside the attainable
    cone and the worst such w is returned as witness.
    """
    if tm.rows.shape[0] != grid.num_controls * grid.segments:
        raise ValueError(
            f"tangent map has {tm.rows.shape[0]} rows, grid has "
            f"{grid.num_controls * grid.segments} controls"
        )
    if samples < 1:
        raise ValueError(f"need at least one sample direction, got {samples}")
    A = tm.rows.T
    n = A.shape[0]
    lb, ub = _variation_bounds(grid, active_tol)
    rng = np.random.default_rng(seed)
    worst_residual = 0.0
    witness = None
    for _ in range(samples):
        w = rng.standard_normal(n)
        nrm = np.linalg.norm(w)
        while nrm < 1e-12:
            w = rng.standard_normal(n)
            nrm = np.linalg.norm(w)
        w /= nrm
        fit = lsq_linear(A, w, bounds=(lb, ub))
        residual = float(np.linalg.norm(A @ fit.x - w))
        if residual > CONE_RESIDUAL_TOL and residual > worst_residual:
            worst_residual = residual
            witness = w
    return witness is None, witness


def kappa_threshold(basis: BasisSet, T: float, Z: int) -> float:
    """Largest kappa keeping the segment duration below 2 pi / spectral spread.

    For N = 2 the worst-case spread of sum_j eps_j sigma_j over the box is
    exactly 2 sqrt(3) kappa, giving pi Z / (sqrt(3) T). For N > 2 the spread
    is bounded by kappa sum_j spread(B_j), so the returned threshold is
    conservative.
    """
    if not (T > 0.0 and np.isfinite(T)):
        raise ValueError(f"horizon must be positive, got {T}")
    if Z < 1:
        raise ValueError(f"segment count must be >= 1, got {Z}")
    if basis.dim == 2:
        return np.pi * Z / (np.sqrt(3.0) * T)
    spread = 0.0
    for B in basis.elements:
        lam = np.linalg.eigvalsh(B)
        spread += float(lam[-1] - lam[0])
    return 2.0 * np.pi * Z / (T * spread)
