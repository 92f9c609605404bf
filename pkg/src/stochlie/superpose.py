"""Superposition rules and a harness that checks them on shared noise paths."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import IO, Callable, Sequence

import numpy as np

from .group import MatrixLieGroup, flatten_elements, integrate_group_sde
from .noise import DrivingPath, format_float
from .sde import StratonovichSystem, homogeneous_part, integrate_heun

#: Central finite-difference step for rule gradients.
FD_STEP = 1e-6


class RuleKind(str, enum.Enum):
    LINEAR = "linear"
    GROUP_TRANSLATION = "group-translation"
    USER = "user"


class ParticularKind(str, enum.Enum):
    FULL = "full"
    HOMOGENEOUS = "homogeneous"


Integrator = Callable[[StratonovichSystem, DrivingPath, np.ndarray], np.ndarray]


def heun_states(sys: StratonovichSystem, path: DrivingPath, z0) -> np.ndarray:
    return integrate_heun(sys, path, z0).states


@dataclass(frozen=True, eq=False)
class SuperpositionRule:
    """``Gamma^z = phi(z, particulars)`` with ``particulars`` of shape ``(m, n)``.

    ``particular_kinds[a]`` says whether particular solution ``a`` solves the
    full system or only its homogeneous part.
    """

    kind: RuleKind
    n: int
    m: int
    phi: Callable[[np.ndarray, np.ndarray], np.ndarray]
    particular_kinds: tuple[ParticularKind, ...] = ()
    default_particulars: np.ndarray | None = None
    gradient: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    integrator: Integrator | None = None

    def __post_init__(self):
        if not self.particular_kinds:
            object.__setattr__(self, "particular_kinds", (ParticularKind.FULL,) * self.m)
        if len(self.particular_kinds) != self.m:
            raise ValueError("one particular kind per particular solution")

    def __call__(self, z, particulars) -> np.ndarray:
        return np.asarray(self.phi(np.asarray(z, dtype=float), np.asarray(particulars, dtype=float)), dtype=float)

    def jacobians(self, z, particulars) -> np.ndarray:
        """``d phi / d q_a`` as an array ``(m, n, n)``; central differences unless a gradient is supplied."""
        z = np.asarray(z, dtype=float)
        q = np.array(particulars, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(z, q), dtype=float)
        J = np.empty((self.m, self.n, self.n))
        for a in range(self.m):
            for i in range(self.n):
                qp, qm = q.copy(), q.copy()
                qp[a, i] += FD_STEP
                qm[a, i] -= FD_STEP
                J[a, :, i] = (self(z, qp) - self(z, qm)) / (2 * FD_STEP)
        return J


def linear_rule(n: int) -> SuperpositionRule:
    """``phi(z; s_1..s_n, sbar) = sum_j z^j s_j + sbar``.

    ``s_j`` solve the homogeneous part from ``e_j``; ``sbar`` solves the full
    system from 0.
    """
    def phi(z, s):
        return z @ s[:n] + s[n]

    def gradient(z, s):
        J = np.empty((n + 1, n, n))
        for j in range(n):
            J[j] = z[j] * np.eye(n)
        J[n] = np.eye(n)
        return J

    kinds = (ParticularKind.HOMOGENEOUS,) * n + (ParticularKind.FULL,)
    particulars = np.vstack([np.eye(n), np.zeros(n)])
    return SuperpositionRule(RuleKind.LINEAR, n, n + 1, phi, kinds, particulars, gradient)


def group_translation_rule(G: MatrixLieGroup) -> SuperpositionRule:
    """``phi(g; h) = h g`` on flattened ``d x d`` matrices, with ``h`` started at the identity.

    The attached integrator is the exponential-Euler group scheme, under which
    the rule holds exactly up to round-off.
    """
    d = G.d

    def phi(z, s):
        return (s[0].reshape(d, d) @ z.reshape(d, d)).reshape(-1)

    def integrator(sys, path, z0):
        traj = integrate_group_sde(G, path, np.asarray(z0, dtype=float).reshape(d, d))
        return flatten_elements(traj.elements)

    return SuperpositionRule(RuleKind.GROUP_TRANSLATION, d * d, 1, phi,
                             default_particulars=np.eye(d).reshape(1, -1), integrator=integrator)


def user_rule(n: int, m: int, phi, gradient=None, particular_kinds=None, integrator=None) -> SuperpositionRule:
    kinds = tuple(ParticularKind(k) for k in particular_kinds) if particular_kinds else ()
    return SuperpositionRule(RuleKind.USER, n, m, phi, kinds, None, gradient, integrator)


@dataclass(frozen=True, eq=False)
class VerificationReport:
    deviations: np.ndarray  # max node-wise deviation per start
    tol: float
    seed: int | None = None

    @property
    def max_dev(self) -> float:
        return float(np.max(self.deviations))

    @property
    def passed(self) -> bool:
        return bool(self.max_dev <= self.tol)

    def __bool__(self):
        return self.passed


def _system_for(sys: StratonovichSystem, kind: ParticularKind) -> StratonovichSystem:
    return homogeneous_part(sys) if kind is ParticularKind.HOMOGENEOUS else sys


def verify_rule(sys: StratonovichSystem, rule: SuperpositionRule, init_particulars, z_list, path: DrivingPath,
                tol: float, integrator: Integrator | None = None) -> VerificationReport:
    """Integrate the particular solutions and each direct solution on one path and compare.

    Deviation is ``max_k |phi(z; Gamma_1(t_k), ...) - Gamma^z(t_k)|`` over the
    nodes before any solver exit.
    """
    if integrator is None:
        integrator = rule.integrator or heun_states
    if init_particulars is None:
        init_particulars = rule.default_particulars
    P = np.atleast_2d(np.asarray(init_particulars, dtype=float))
    if P.shape != (rule.m, rule.n):
        raise ValueError(f"need {rule.m} particular initial points in R^{rule.n}, got shape {P.shape}")
    for a in range(rule.m):
        for b in range(a + 1, rule.m):
            if np.array_equal(P[a], P[b]):
                raise ValueError(f"particular initial points {a} and {b} coincide")

    particulars = np.stack([integrator(_system_for(sys, kind), path, p)
                            for p, kind in zip(P, rule.particular_kinds)], axis=1)  # (K+1, m, n)
    devs = []
    for z in np.atleast_2d(np.asarray(z_list, dtype=float)):
        direct = integrator(sys, path, z)
        ok = np.all(np.isfinite(direct), axis=1) & np.all(np.isfinite(particulars), axis=(1, 2))
        predicted = np.array([rule(z, particulars[k]) for k in np.flatnonzero(ok)])
        diff = np.linalg.norm(predicted - direct[ok], axis=1) if len(predicted) else np.array([np.inf])
        devs.append(float(np.max(diff)))
    return VerificationReport(np.array(devs), tol, path.seed)


def verify_across_seeds(sys, rule, init_particulars, z_list, seeds: Sequence[int], path_factory,
                        tol: float, integrator=None) -> list[VerificationReport]:
    """``verify_rule`` on ``path_factory(seed)`` for each seed."""
    return [verify_rule(sys, rule, init_particulars, z_list, path_factory(s), tol, integrator) for s in seeds]


def write_report_csv(reports: Sequence[VerificationReport], fh: IO[str]) -> None:
    fh.write("z_index,seed,max_dev,pass\n")
    for rep in reports:
        for i, dev in enumerate(rep.deviations):
            fh.write(f"{i},{rep.seed},{format_float(dev)},{int(dev <= rep.tol)}\n")


@dataclass(frozen=True)
class TangencyReport:
    residuals: np.ndarray  # per sample, max over noise components

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals))


def tangency_check(sys: StratonovichSystem, rule: SuperpositionRule, samples, x=None) -> TangencyReport:
    """Residual of the tangency condition of the diagonal extensions on ``{Psi_z = 0}``.

    Each sample is ``(z, particulars)``; the point is completed to the level set
    by ``q_0 = phi(z; particulars)``.  For every noise component ``j`` the
    residual is ``|S_j(x, q_0) - sum_a dphi/dq_a S_j^(a)(x, q_a)|`` with
    ``S^(a)`` the system particular ``a`` solves.
    """
    x = np.zeros(sys.l) if x is None else np.asarray(x, dtype=float)
    systems = [_system_for(sys, k) for k in rule.particular_kinds]
    out = []
    for z, q in samples:
        z = np.asarray(z, dtype=float)
        q = np.atleast_2d(np.asarray(q, dtype=float))
        q0 = rule(z, q)
        J = rule.jacobians(z, q)
        lhs = sys.operator(x, q0)  # (n, l)
        rhs = sum(J[a] @ systems[a].operator(x, q[a]) for a in range(rule.m))
        out.append(float(np.max(np.linalg.norm(lhs - rhs, axis=0))))
    return TangencyReport(np.array(out))
