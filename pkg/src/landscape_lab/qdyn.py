"""su(N) generator bases, piecewise-constant Hamiltonians, and exact propagators.

All evolution here is closed-system with hbar = 1: a control grid assigns one
real amplitude per generator per time segment, each segment evolves under
U_z = exp(-i H_z dt), and the horizon propagator is the time-ordered product
U_Z ... U_2 U_1 (later segments on the left).
"""

from __future__ import annotations

from dataclasses import dataclass, InitVar

import numpy as np

__all__ = [
    "NumericalFault",
    "BasisSet",
    "ControlGrid",
    "PropagationResult",
    "build_su_basis",
    "assemble_segment_hamiltonian",
    "expm_step",
    "expm_frechet",
    "expm_with_directional_derivatives",
    "propagate",
]

# Construction-time tolerances for the domain types.
BASIS_HERMITICITY_TOL = 1e-14
BASIS_TRACE_TOL = 1e-14
BASIS_ORTHOGONALITY_TOL = 1e-12
UNITARITY_TOL = 1e-12
DETERMINANT_TOL = 1e-10
HERMITICITY_TOL = 1e-10


class NumericalFault(RuntimeError):
    """A computed quantity broke an internal invariant (not a bad input)."""


def _is_hermitian(M: np.ndarray, tol: float) -> bool:
    return bool(np.max(np.abs(M - M.conj().T)) <= tol)


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class BasisSet:
    """Ordered Hermitian traceless generators with Tr[B_i B_j] = 2 delta_ij.

    For dim == 2 the elements are exactly the Pauli matrices (x, y, z order).
    """

    dim: int
    elements: tuple

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"basis dimension must be >= 2, got {self.dim}")
        n = self.dim * self.dim - 1
        if len(self.elements) != n:
            raise ValueError(
                f"expected {n} generators for dim {self.dim}, got {len(self.elements)}"
            )
        elems = []
        for k, B in enumerate(self.elements):
            B = np.asarray(B, dtype=complex)
            if B.shape != (self.dim, self.dim):
                raise ValueError(f"generator {k} has shape {B.shape}")
            if not _is_hermitian(B, BASIS_HERMITICITY_TOL):
                raise ValueError(f"generator {k} is not Hermitian")
            if abs(np.trace(B)) > BASIS_TRACE_TOL:
                raise ValueError(f"generator {k} is not traceless")
            elems.append(_frozen(B))
        stack = np.stack(elems)
        gram = np.einsum("iab,jba->ij", stack, stack)
        if np.max(np.abs(gram - 2.0 * np.eye(n))) > BASIS_ORTHOGONALITY_TOL:
            raise ValueError("generators do not satisfy Tr[B_i B_j] = 2 delta_ij")
        object.__setattr__(self, "elements", tuple(elems))
        object.__setattr__(self, "_stack", _frozen(stack))

    @property
    def size(self) -> int:
        """Number of generators, dim**2 - 1."""
        return self.dim * self.dim - 1

    @property
    def stack(self) -> np.ndarray:
        """All generators as one (size, dim, dim) read-only array."""
        return self._stack


@dataclass(frozen=True)
class ControlGrid:
    """Bounded piecewise-constant control amplitudes on Z equal time segments.

    ``values[j, z]`` is the amplitude of generator j on segment z (0-based
    array indices; segment z covers the half-open slice
    ((z) * T/Z, (z+1) * T/Z] in 1-based counting). Every entry must satisfy
    |value| <= kappa unless validation is explicitly skipped for internal
    probing of the objective outside the admissible box.
    """

    horizon: float
    kappa: float
    values: np.ndarray
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool):
        if not (self.horizon > 0.0 and np.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not (self.kappa >= 0.0 and np.isfinite(self.kappa)):
            raise ValueError(f"bound must be nonnegative, got {self.kappa}")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ValueError(f"values must be a 2-D matrix, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("control values must be finite")
        if validate and np.any(np.abs(vals) > self.kappa):
            worst = float(np.max(np.abs(vals)))
            raise ValueError(
                f"control amplitude {worst} exceeds the bound {self.kappa}"
            )
        object.__setattr__(self, "values", _frozen(vals))

    @property
    def segments(self) -> int:
        return self.values.shape[1]

    @property
    def num_controls(self) -> int:
        return self.values.shape[0]

    @property
    def dt(self) -> float:
        return self.horizon / self.segments

    def segment_bounds(self, z: int) -> tuple:
        """Half-open time interval (t0, t1] covered by segment z (1-based)."""
        if not 1 <= z <= self.segments:
            raise ValueError(f"segment index {z} outside 1..{self.segments}")
        return ((z - 1) * self.dt, z * self.dt)

    def with_values(self, values: np.ndarray, validate: bool = True) -> "ControlGrid":
        """Same horizon and bound, different amplitudes."""
        return ControlGrid(self.horizon, self.kappa, values, validate=validate)

    @classmethod
    def constant(
        cls, horizon: float, kappa: float, num_controls: int, segments: int, fill: float
    ) -> "ControlGrid":
        return cls(horizon, kappa, np.full((num_controls, segments), float(fill)))

    @classmethod
    def zeros(
        cls, horizon: float, kappa: float, num_controls: int, segments: int
    ) -> "ControlGrid":
        return cls.constant(horizon, kappa, num_controls, segments, 0.0)

    @classmethod
    def uniform_random(
        cls,
        horizon: float,
        kappa: float,
        num_controls: int,
        segments: int,
        rng: np.random.Generator,
    ) -> "ControlGrid":
        vals = rng.uniform(-kappa, kappa, size=(num_controls, segments))
        return cls(horizon, kappa, vals)


@dataclass(frozen=True)
class PropagationResult:
    """Per-segment unitaries and their ordered product over the horizon."""

    segment_unitaries: tuple
    total: np.ndarray

    def __post_init__(self):
        if len(self.segment_unitaries) < 1:
            raise ValueError("need at least one segment unitary")
        dim = self.segment_unitaries[0].shape[0]
        eye = np.eye(dim)
        segs = []
        for z, U in enumerate(self.segment_unitaries):
            U = np.asarray(U, dtype=complex)
            if U.shape != (dim, dim):
                raise ValueError(f"segment {z} has shape {U.shape}")
            if np.linalg.norm(U.conj().T @ U - eye) > UNITARITY_TOL:
                raise NumericalFault(f"segment unitary {z} failed the unitarity check")
            segs.append(_frozen(U))
        total = np.asarray(self.total, dtype=complex)
        if np.linalg.norm(total.conj().T @ total - eye) > UNITARITY_TOL:
            raise NumericalFault("total propagator failed the unitarity check")
        if abs(np.linalg.det(total) - 1.0) > DETERMINANT_TOL:
            raise NumericalFault("total propagator is not special unitary")
        prod = eye.astype(complex)
        for U in segs:
            prod = U @ prod
        if np.max(np.abs(prod - total)) > UNITARITY_TOL:
            raise NumericalFault("total does not equal the ordered segment product")
        object.__setattr__(self, "segment_unitaries", tuple(segs))
        object.__setattr__(self, "total", _frozen(total))

    @property
    def dim(self) -> int:
        return self.total.shape[0]


def build_su_basis(N: int) -> BasisSet:
    """Generalized Gell-Mann generators of su(N), normalized to Tr[B_i B_j] = 2 d_ij.

    Ordering: symmetric pair matrices, then antisymmetric pair matrices (both
    in lexicographic (j, k) order), then the diagonal ladder. For N = 2 this
    yields exactly (sigma_x, sigma_y, sigma_z).
    """
    if not isinstance(N, (int, np.integer)) or N < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {N!r}")
    mats = []
    for j in range(N):
        for k in range(j + 1, N):
            M = np.zeros((N, N), dtype=complex)
            M[j, k] = 1.0
            M[k, j] = 1.0
            mats.append(M)
    for j in range(N):
        for k in range(j + 1, N):
            M = np.zeros((N, N), dtype=complex)
            M[j, k] = -1.0j
            M[k, j] = 1.0j
            mats.append(M)
    for l in range(1, N):
        diag = np.zeros(N, dtype=complex)
        diag[:l] = 1.0
        diag[l] = -float(l)
        mats.append(np.sqrt(2.0 / (l * (l + 1))) * np.diag(diag))
    return BasisSet(int(N), tuple(mats))


def assemble_segment_hamiltonian(
    grid: ControlGrid, z: int, basis: BasisSet
) -> np.ndarray:
    """Hamiltonian of segment z (1-based): sum_j values[j, z-1] * B_j."""
    if basis.size != grid.num_controls:
        raise ValueError(
            f"grid has {grid.num_controls} control rows but the basis "
            f"provides {basis.size} generators"
        )
    if not 1 <= z <= grid.segments:
        raise ValueError(f"segment index {z} outside 1..{grid.segments}")
    return np.tensordot(grid.values[:, z - 1], basis.stack, axes=1)


def expm_step(H: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i H dt) for Hermitian H, via eigendecomposition.

    Exactly unitary up to roundoff because the eigenphases have unit modulus.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if dt < 0.0:
        raise ValueError(f"time step must be nonnegative, got {dt}")
    scale = max(1.0, float(np.max(np.abs(H))))
    if not _is_hermitian(H, HERMITICITY_TOL * scale):
        raise ValueError("matrix is not Hermitian within tolerance")
    lam, V = np.linalg.eigh((H + H.conj().T) / 2.0)
    return (V * np.exp(-1j * lam * dt)) @ V.conj().T


def _phase_divided_difference(lam: np.ndarray, dt: float) -> np.ndarray:
    """Divided-difference table of f(x) = exp(-i x dt) over the eigenvalues.

    Off-diagonal entries are (f(a) - f(b)) / (a - b); pairs closer than the
    degeneracy threshold fall back to the limit f'(a) = -i dt f(a), which
    avoids catastrophic cancellation.
    """
    f = np.exp(-1j * lam * dt)
    dlam = lam[:, None] - lam[None, :]
    tau = 1e-10 * max(1.0, float(np.max(np.abs(lam))))
    near = np.abs(dlam) <= tau
    safe = np.where(near, 1.0, dlam)
    return np.where(near, -1j * dt * f[:, None], (f[:, None] - f[None, :]) / safe)


def expm_frechet(H: np.ndarray, dt: float, D: np.ndarray) -> np.ndarray:
    """Directional derivative d/ds exp(-i (H + s D) dt) at s = 0.

    Both H and D must be Hermitian and of equal dimension. Computed in the
    eigenbasis of H with the divided-difference kernel of exp(-i x dt).
    """
    H = np.asarray(H, dtype=complex)
    D = np.asarray(D, dtype=complex)
    if H.shape != D.shape or H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"shape mismatch: H {H.shape}, D {D.shape}")
    for name, M in (("H", H), ("D", D)):
        scale = max(1.0, float(np.max(np.abs(M))))
        if not _is_hermitian(M, HERMITICITY_TOL * scale):
            raise ValueError(f"{name} is not Hermitian within tolerance")
    lam, V = np.linalg.eigh((H + H.conj().T) / 2.0)
    K = _phase_divided_difference(lam, dt)
    return V @ (K * (V.conj().T @ D @ V)) @ V.conj().T


def expm_with_directional_derivatives(
    H: np.ndarray, dt: float, directions: np.ndarray
) -> tuple:
    """exp(-i H dt) together with its derivative along each given direction.

    ``directions`` is a (m, dim, dim) stack of Hermitian matrices; one
    eigendecomposition of H is shared by all m derivatives.
    """
    H = np.asarray(H, dtype=complex)
    lam, V = np.linalg.eigh((H + H.conj().T) / 2.0)
    U = (V * np.exp(-1j * lam * dt)) @ V.conj().T
    K = _phase_divided_difference(lam, dt)
    Vh = V.conj().T
    tilted = np.einsum("ab,kbc,cd->kad", Vh, np.asarray(directions, dtype=complex), V)
    dUs = np.einsum("ab,kbc,cd->kad", V, K[None, :, :] * tilted, Vh)
    return U, dUs


def propagate(grid: ControlGrid, basis: BasisSet) -> PropagationResult:
    """Segment unitaries and the horizon propagator U_Z ... U_1."""
    if basis.size != grid.num_controls:
        raise ValueError(
            f"grid has {grid.num_controls} control rows but the basis "
            f"provides {basis.size} generators"
        )
    dt = grid.dt
    segs = []
    total = np.eye(basis.dim, dtype=complex)
    for z in range(1, grid.segments + 1):
        U = expm_step(assemble_segment_hamiltonian(grid, z, basis), dt)
        segs.append(U)
        total = U @ total
    return PropagationResult(tuple(segs), total)
