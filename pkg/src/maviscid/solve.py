"""Sparse direct solves, damped Newton iteration, and epsilon continuation.

The nonlinear scheme is solved by Newton's method with residual-norm
backtracking (factor 1/2).  Robust starts at small epsilon come from a
continuation ladder: solve at a large epsilon first, halve until the target,
warm-starting each solve from the previous solution.  The first solve is
seeded with the interpolant of the convex quadratic |x - c|^2 / 2, with
boundary dofs pinned to the Dirichlet data.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from maviscid.assembly import (
    PenaltyParams,
    SparseMatrix,
    apply_dirichlet,
    assemble_nonlinear_residual,
    assemble_residual_and_jacobian,
)
from maviscid.elements import interpolate

__all__ = [
    "NewtonConfig",
    "SolveReport",
    "SingularMatrixError",
    "NewtonError",
    "sparse_solve",
    "newton_solve",
    "continuation_solve",
]


class SingularMatrixError(RuntimeError):
    """Numerically singular factorization; ``row`` names the suspect row."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class NewtonError(RuntimeError):
    """Non-convergence of the Newton iteration.

    ``reason`` is one of "max_iters", "damping_floor", "singular_jacobian",
    "nonfinite_residual"; ``report`` holds the partial iteration history and
    ``epsilon`` the continuation rung if applicable.
    """

    def __init__(self, message, reason, report, epsilon=None):
        super().__init__(message)
        self.reason = reason
        self.report = report
        self.epsilon = epsilon


@dataclass(frozen=True)
class NewtonConfig:
    """Iteration controls; the damping backtracking factor is fixed at 1/2."""

    abs_tol: float = 1e-10
    max_iters: int = 50
    max_halvings: int = 20
    continuation_schedule: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.abs_tol <= 0:
            raise ValueError("abs_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        sched = self.continuation_schedule
        if sched is not None:
            sched = tuple(float(e) for e in sched)
            if len(sched) == 0 or min(sched) <= 0:
                raise ValueError("schedule entries must be positive")
            if any(b >= a for a, b in zip(sched, sched[1:])):
                raise ValueError("schedule must be strictly decreasing")
            object.__setattr__(self, "continuation_schedule", sched)


@dataclass
class SolveReport:
    """Iteration counts and residual history of one solve (or a ladder)."""

    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    rungs: list = field(default_factory=list)


def sparse_solve(A, b):
    """Direct sparse LU solve of a square interior system.

    Solves with SuperLU (partial pivoting; the operator is non-symmetric)
    and checks the relative residual below 1e-10.
    """
    csr = A.csr if isinstance(A, SparseMatrix) else sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = csr.shape[0]
    if csr.shape[0] != csr.shape[1] or b.shape != (n,):
        raise ValueError("need a square matrix and a matching vector")
    try:
        lu = spla.splu(csr.tocsc())
        x = lu.solve(b)
    except RuntimeError as exc:
        row = _suspect_row(csr)
        raise SingularMatrixError(
            f"singular factorization (suspect row {row}): {exc}", row=row
        ) from exc
    resid = np.abs(csr @ x - b).max() if n else 0.0
    denom = _inf_norm_matrix(csr) * np.abs(x).max() + np.abs(b).max() if n else 1.0
    if denom == 0.0:
        denom = 1.0
    if not np.isfinite(resid) or resid / denom >= 1e-10:
        row = int(np.argmax(np.abs(csr @ x - b))) if np.isfinite(resid) else _suspect_row(csr)
        raise SingularMatrixError(
            f"numerically singular system: relative residual {resid / denom:.2e} "
            f"(worst row {row})",
            row=row,
        )
    return x


def _inf_norm_matrix(csr):
    return np.abs(csr).sum(axis=1).max() if csr.shape[0] else 0.0


def _suspect_row(csr):
    """Row with the smallest max-abs entry: the usual culprit of a breakdown."""
    if csr.shape[0] == 0:
        return 0
    row_max = np.zeros(csr.shape[0])
    coo = csr.tocoo()
    np.maximum.at(row_max, coo.row, np.abs(coo.data))
    return int(np.argmin(row_max))


def newton_solve(f, g_data, params, config=None, initial=None):
    """Damped Newton iteration for the nonlinear scheme.

    ``initial`` must satisfy the Dirichlet dofs; each accepted step strictly
    reduces the residual infinity norm.  Returns the solution and a report;
    raises NewtonError with a distinct reason otherwise.
    """
    if initial is None:
        raise ValueError("newton_solve needs an initial FeFunction")
    config = config or NewtonConfig()
    space = initial.space
    ii = space.interior_dofs
    u = initial.copy()
    report = SolveReport()
    t0 = time.perf_counter()
    try:
        while True:
            r, J = assemble_residual_and_jacobian(u, f, g_data, params)
            rn = float(np.abs(r).max())
            report.residual_history.append(rn)
            if not np.isfinite(rn):
                raise NewtonError(
                    "residual is not finite", "nonfinite_residual", report
                )
            if rn <= config.abs_tol:
                report.converged = True
                return u, report
            if report.iterations >= config.max_iters:
                raise NewtonError(
                    f"no convergence in {config.max_iters} iterations "
                    f"(residual {rn:.3e})",
                    "max_iters",
                    report,
                )
            try:
                step = sparse_solve(
                    SparseMatrix(J.csr[np.ix_(ii, ii)]), -r[ii]
                )
            except SingularMatrixError as exc:
                raise NewtonError(
                    f"singular Jacobian: {exc}", "singular_jacobian", report
                ) from exc
            t = 1.0
            for _ in range(config.max_halvings + 1):
                trial = u.copy()
                trial.coeffs[ii] += t * step
                rt = assemble_nonlinear_residual(trial, f, g_data, params)
                rtn = float(np.abs(rt).max())
                if np.isfinite(rtn) and rtn < rn:
                    break
                t *= 0.5
            else:
                raise NewtonError(
                    f"damping floor reached (residual stuck at {rn:.3e})",
                    "damping_floor",
                    report,
                )
            u = trial
            report.iterations += 1
    finally:
        report.wall_time = time.perf_counter() - t0


def default_ladder(eps_target):
    """Halving ladder from max(0.5, eps_target) down to eps_target."""
    if eps_target <= 0:
        raise ValueError("eps_target must be positive")
    eps = max(0.5, float(eps_target))
    ladder = [eps]
    while eps > eps_target:
        eps = max(0.5 * eps, float(eps_target))
        ladder.append(eps)
    return ladder


def convex_seed(space, g, center=None):
    """Interpolant of |x - c|^2 / 2 with boundary dofs pinned to g."""
    if center is None:
        center = np.full(space.dim, 0.5)
    center = np.asarray(center, dtype=float)
    seed = interpolate(space, lambda p: 0.5 * ((p - center) ** 2).sum(axis=1))
    bvals, _ = apply_dirichlet(space, g)
    seed.coeffs[space.boundary_dofs] = bvals
    return seed


def continuation_solve(space, f, g_data, sigma, eps_target, config=None,
                       weight_mode="full", data_factory=None, center=None):
    """Solve the nonlinear scheme at eps_target via a decreasing epsilon ladder.

    ``data_factory(eps) -> (f, g_data)`` lets the source and boundary data
    depend on the rung (manufactured data usually does); otherwise the given
    ``f`` and ``g_data`` are used on every rung.  Each rung is warm-started
    from the previous solution with re-pinned boundary dofs.
    """
    config = config or NewtonConfig()
    if config.continuation_schedule is not None:
        ladder = list(config.continuation_schedule)
        if abs(ladder[-1] - eps_target) > 1e-14 * max(1.0, eps_target):
            raise ValueError("schedule must end at eps_target")
    else:
        ladder = default_ladder(eps_target)
    total = SolveReport()
    t0 = time.perf_counter()
    u = None
    try:
        for eps in ladder:
            params = PenaltyParams(sigma, eps, weight_mode)
            if data_factory is not None:
                f_eps, g_eps = data_factory(eps)
            else:
                f_eps, g_eps = f, g_data
            if u is None:
                u = convex_seed(space, g_eps.g, center)
            else:
                bvals, _ = apply_dirichlet(space, g_eps.g)
                u.coeffs[space.boundary_dofs] = bvals
            try:
                u, rep = newton_solve(f_eps, g_eps, params, config, u)
            except NewtonError as exc:
                total.rungs.append((eps, exc.report))
                total.iterations += exc.report.iterations
                total.residual_history.extend(exc.report.residual_history)
                raise NewtonError(
                    f"continuation failed at eps = {eps:g}: {exc}",
                    exc.reason,
                    total,
                    epsilon=eps,
                ) from exc
            total.rungs.append((eps, rep))
            total.iterations += rep.iterations
            total.residual_history.extend(rep.residual_history)
        total.converged = True
        return u, total
    finally:
        total.wall_time = time.perf_counter() - t0
