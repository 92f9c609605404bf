"""Matrix Lie groups, exponential-Euler group SDEs and their one-point motions.

Right-invariant generators are realised as ``xi^G(g) = xi @ g``, so the
exponential-Euler step ``g_{k+1} = expm(dxi_k) @ g_k`` commutes exactly with
right translation ``g -> g @ h``.  The left-invariant convention used for the
stochastic exponential steps ``g_{k+1} = g_k @ expm(dxi_k)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import IO, Callable, Sequence

import numpy as np
import scipy.linalg

from .noise import DrivingPath, Role, TimeGrid, format_float
from .sde import Trajectory

ADJOINT_RESIDUAL_TOL = 1e-10


class GroupKind(str, enum.Enum):
    AFFINE1 = "affine1"
    POS_DIAG = "posdiag"
    SO3 = "so3"
    HEISENBERG = "heisenberg"
    CUSTOM = "custom"


class Side(str, enum.Enum):
    #: right-invariant generators ``xi g``; solutions translate on the right
    LEFT_ACTION_RIGHT_INVARIANT = "right-invariant"
    #: left-invariant generators ``g xi`` (stochastic exponential)
    RIGHT_ACTION_LEFT_INVARIANT = "left-invariant"


class BasisError(ValueError):
    """A matrix could not be re-expressed in the algebra basis."""


@dataclass(frozen=True, eq=False)
class MatrixLieGroup:
    name: str
    kind: GroupKind
    basis: np.ndarray  # (l, d, d)
    membership_tol: float = 1e-8
    _pinv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        basis = np.array(self.basis, dtype=float)
        if basis.ndim != 3 or basis.shape[1] != basis.shape[2]:
            raise ValueError("basis must be a stack of square matrices")
        flat = basis.reshape(basis.shape[0], -1)
        if np.linalg.matrix_rank(flat) != basis.shape[0]:
            raise ValueError("basis matrices must be linearly independent")
        if self.kind is GroupKind.SO3 and not np.allclose(basis, -np.swapaxes(basis, 1, 2)):
            raise ValueError("so(3) basis matrices must be skew-symmetric")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "_pinv", np.linalg.pinv(flat.T))

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    @property
    def l(self) -> int:
        return self.basis.shape[0]

    @property
    def identity(self) -> np.ndarray:
        return np.eye(self.d)

    def to_matrix(self, coords) -> np.ndarray:
        return np.tensordot(np.asarray(coords, dtype=float), self.basis, axes=1)

    def coords(self, xi, tol: float = ADJOINT_RESIDUAL_TOL) -> np.ndarray:
        """Coordinates of an algebra matrix in the basis; raises if it is not in the span."""
        xi = np.asarray(xi, dtype=float)
        c = self._pinv @ xi.reshape(-1)
        residual = float(np.max(np.abs(self.to_matrix(c) - xi), initial=0.0))
        if residual > tol * max(1.0, float(np.max(np.abs(xi), initial=0.0))):
            raise BasisError(f"matrix is not in the span of the {self.name} basis (residual {residual:.3g})")
        return c

    def defect(self, g) -> float:
        """Violation of the group's membership conditions (0 for custom groups)."""
        g = np.asarray(g, dtype=float)
        if not np.all(np.isfinite(g)):
            return float("inf")
        if self.kind is GroupKind.SO3:
            return float(np.max(np.abs(g.T @ g - np.eye(3))))
        if self.kind is GroupKind.POS_DIAG:
            if np.any(np.diag(g) <= 0):
                return float("inf")
            return float(np.max(np.abs(g - np.diag(np.diag(g))), initial=0.0))
        if self.kind is GroupKind.AFFINE1:
            if g[0, 0] <= 0:
                return float("inf")
            return float(max(abs(g[1, 0]), abs(g[1, 1] - 1.0)))
        if self.kind is GroupKind.HEISENBERG:
            return float(np.max(np.abs(np.tril(g) - np.eye(self.d))))
        return 0.0


def affine1() -> MatrixLieGroup:
    """Affine maps ``x -> a1 x + a0`` as ``[[a1, a0], [0, 1]]``; basis (xi0, xi1)."""
    xi0 = np.array([[0.0, 1.0], [0.0, 0.0]])
    xi1 = np.array([[1.0, 0.0], [0.0, 0.0]])
    return MatrixLieGroup("Affine1", GroupKind.AFFINE1, np.stack([xi0, xi1]))


def pos_diag(n: int) -> MatrixLieGroup:
    """``(R_+)^n`` as positive diagonal matrices."""
    basis = np.zeros((n, n, n))
    for i in range(n):
        basis[i, i, i] = 1.0
    return MatrixLieGroup(f"PosDiag({n})", GroupKind.POS_DIAG, basis)


L_X = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
L_Y = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
L_Z = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
NORTH_POLE = np.array([0.0, 0.0, 1.0])


def so3() -> MatrixLieGroup:
    """Rotations with basis ``(L_x, L_y, L_z)``; ``L_z`` spans the isotropy of the north pole."""
    return MatrixLieGroup("SO(3)", GroupKind.SO3, np.stack([L_X, L_Y, L_Z]))


def heisenberg() -> MatrixLieGroup:
    """Unipotent upper-triangular 3x3 matrices with basis ``(E12, E13, E23)``."""
    basis = np.zeros((3, 3, 3))
    basis[0, 0, 1] = basis[1, 0, 2] = basis[2, 1, 2] = 1.0
    return MatrixLieGroup("Heisenberg", GroupKind.HEISENBERG, basis)


def custom_group(name: str, basis, membership_tol: float = 1e-8) -> MatrixLieGroup:
    return MatrixLieGroup(name, GroupKind.CUSTOM, basis, membership_tol)


def expm(xi) -> np.ndarray:
    """Matrix exponential (Pade scaling and squaring); accepts stacks ``(..., d, d)``."""
    return scipy.linalg.expm(np.asarray(xi, dtype=float))


def adjoint(G: MatrixLieGroup, g, xi) -> np.ndarray:
    """Coordinates of ``Ad_g(xi) = g xi g^-1``; ``xi`` is a matrix or a coordinate vector."""
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        xi = G.to_matrix(xi)
    g = np.asarray(g, dtype=float)
    return G.coords(g @ xi @ np.linalg.inv(g))


def ad_matrix(G: MatrixLieGroup, xi) -> np.ndarray:
    """Matrix of ``ad(xi) = [xi, .]`` in the basis (column j is ``[xi, xi_j]``)."""
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        xi = G.to_matrix(xi)
    return np.column_stack([G.coords(xi @ e - e @ xi) for e in G.basis])


@dataclass(frozen=True, eq=False)
class GroupTrajectory:
    grid: TimeGrid
    elements: np.ndarray  # (K+1, d, d)
    defects: np.ndarray  # (K+1,)
    side: Side = Side.LEFT_ACTION_RIGHT_INVARIANT
    tol: float = 1e-8

    @property
    def defect(self) -> float:
        return float(np.max(self.defects))

    @property
    def flagged(self) -> bool:
        return not self.defect <= self.tol

    def write_csv(self, fh: IO[str]) -> None:
        d = self.elements.shape[1]
        header = ["t"] + [f"m{i}{j}" for i in range(d) for j in range(d)] + ["defect"]
        fh.write(",".join(header) + "\n")
        for t, g, dft in zip(self.grid.nodes, self.elements, self.defects):
            fh.write(",".join([format_float(t)] + [format_float(v) for v in g.reshape(-1)]
                              + [format_float(dft)]) + "\n")


def _defects(G: MatrixLieGroup, elements: np.ndarray) -> np.ndarray:
    return np.array([G.defect(g) for g in elements])


def integrate_group_sde(G: MatrixLieGroup, path: DrivingPath, g0=None,
                        side: Side = Side.LEFT_ACTION_RIGHT_INVARIANT, tol: float | None = None) -> GroupTrajectory:
    """Exponential-Euler solution of ``dg = sum_i xi_i^G(g) o dX^i``."""
    side = Side(side)
    if path.dim != G.l:
        raise ValueError(f"{G.name} needs a {G.l}-dimensional driving path, got {path.dim}")
    g = G.identity if g0 is None else np.array(g0, dtype=float)
    if g.shape != (G.d, G.d):
        raise ValueError(f"initial element must be {G.d}x{G.d}")
    steps = expm(np.tensordot(path.increments, G.basis, axes=1))
    K = path.grid.steps
    elements = np.empty((K + 1, G.d, G.d))
    elements[0] = g
    if side is Side.LEFT_ACTION_RIGHT_INVARIANT:
        for k in range(K):
            g = steps[k] @ g
            elements[k + 1] = g
    else:
        for k in range(K):
            g = g @ steps[k]
            elements[k + 1] = g
    return GroupTrajectory(path.grid, elements, _defects(G, elements), side,
                           G.membership_tol if tol is None else tol)


def stochastic_exponential(G: MatrixLieGroup, path: DrivingPath) -> GroupTrajectory:
    """Left-invariant solution started at the identity."""
    return integrate_group_sde(G, path, None, Side.RIGHT_ACTION_LEFT_INVARIANT)


def translate_solution(traj_e: GroupTrajectory, g, G: MatrixLieGroup | None = None) -> GroupTrajectory:
    """Solution from ``g`` obtained by translating the identity-started one."""
    g = np.asarray(g, dtype=float)
    d = traj_e.elements.shape[1]
    if np.max(np.abs(traj_e.elements[0] - np.eye(d))) > 1e-12:
        raise ValueError("translate_solution needs a trajectory that starts at the identity")
    if traj_e.side is Side.LEFT_ACTION_RIGHT_INVARIANT:
        elements = traj_e.elements @ g
    else:
        elements = g @ traj_e.elements
    defects = _defects(G, elements) if G is not None else np.zeros(len(elements))
    return GroupTrajectory(traj_e.grid, elements, defects, traj_e.side, traj_e.tol)


def matrix_action(g: np.ndarray, z: np.ndarray) -> np.ndarray:
    return g @ z


def affine_action(g: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Action of a homogeneous-coordinates matrix on R^(d-1), e.g. ``x -> a1 x + a0``."""
    z = np.asarray(z, dtype=float)
    return g[:-1, :-1] @ z + g[:-1, -1]


def one_point_motion(traj: GroupTrajectory, action: Callable, z0) -> Trajectory:
    z0 = np.asarray(z0, dtype=float)
    states = np.array([np.asarray(action(g, z0), dtype=float) for g in traj.elements])
    return Trajectory(traj.grid, states.reshape(len(traj.elements), -1))


def project_homogeneous(traj: GroupTrajectory, base_point, G: MatrixLieGroup | None = None) -> Trajectory:
    """Push a group trajectory down to ``G/H`` realised as the orbit of ``base_point``.

    For SO(3) the orbit is the unit sphere; the base point must be unit norm
    and the returned ``defect`` is the largest deviation of ``|Gamma_k|`` from 1.
    """
    o = np.asarray(base_point, dtype=float)
    sphere = G is not None and G.kind is GroupKind.SO3
    if sphere and abs(np.linalg.norm(o) - 1.0) > 1e-12:
        raise ValueError("the sphere base point must have unit norm")
    states = traj.elements @ o
    defect = float(np.max(np.abs(np.linalg.norm(states, axis=1) - 1.0))) if sphere else None
    return Trajectory(traj.grid, states, defect=defect)


def homogeneous_brownian_path(G: MatrixLieGroup, m_indices: Sequence[int], brownian: DrivingPath,
                              drift=None) -> DrivingPath:
    """Algebra-valued driver ``sum_{i in m} xi_i B^i + u t`` for the reductive construction.

    ``drift`` is the coordinate vector ``u = sum_i U(xi_i, xi_i)``; ``None`` is the
    symmetric case ``U = 0``.
    """
    m_indices = list(m_indices)
    if brownian.dim != len(m_indices):
        raise ValueError("one Brownian component per complement generator")
    W = np.zeros((G.l, brownian.dim))
    for col, i in enumerate(m_indices):
        W[i, col] = 1.0
    values = brownian.values @ W.T
    if drift is not None:
        values = values + np.outer(brownian.times, np.asarray(drift, dtype=float))
    return DrivingPath(brownian.grid, values, (Role.CUSTOM,) * G.l, brownian.seed, brownian.path_index)


def write_group_csv(traj: GroupTrajectory, fh: IO[str]) -> None:
    traj.write_csv(fh)


def flatten_elements(elements: np.ndarray) -> np.ndarray:
    """Row-major flattening ``(K+1, d, d) -> (K+1, d*d)``."""
    elements = np.asarray(elements)
    return elements.reshape(elements.shape[:-2] + (-1,))


def right_invariant_system(G: MatrixLieGroup):
    """The group SDE as a linear polynomial system on flattened matrices.

    ``vec(xi @ g) = kron(xi, I) vec(g)`` for row-major ``vec``.
    """
    from .fields import PolyVectorField
    from .sde import StratonovichSystem

    fields = [PolyVectorField.linear(np.kron(xi, np.eye(G.d))) for xi in G.basis]
    return StratonovichSystem(fields, np.eye(G.l))
