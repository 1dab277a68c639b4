"""Convex-order checks for discrete measures via martingale-coupling LPs.

mu is dominated by nu in convex order iff a martingale coupling exists:
a nonnegative matrix with row sums mu, column sums nu, and each row's
conditional barycenter equal to its own atom (Strassen).  That is a
pure LP feasibility problem.  When it is infeasible, LP duality yields
a piecewise-linear convex witness phi (a max of affine functions) with
integral phi d(mu) > integral phi d(nu).  Both certificates are
re-verified arithmetically; nothing is trusted from the solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import DimMismatch, MassMismatch, SolverFailure, ZeroMass
from .measures import ParticleMeasure

N_MAX = 500          # atoms per side; coarsen first beyond this
MASS_TOL = 1e-9
PLAN_TOL = 1e-9
WITNESS_MARGIN = 1e-9
_LP_OPTS = {"presolve": True, "primal_feasibility_tolerance": 1e-10}


@dataclass(frozen=True)
class CouplingPlan:
    """Martingale transport plan: mass[i, j] moved from mu atom i to nu atom j."""

    mass: np.ndarray

    def verify(self, mu: ParticleMeasure, nu: ParticleMeasure) -> dict:
        """Residuals of the plan invariants; all must pass stated tolerances."""
        row = self.mass.sum(axis=1)
        col = self.mass.sum(axis=0)
        row_err = float(np.max(np.abs(row - mu.weights), initial=0.0))
        col_err = float(np.max(np.abs(col - nu.weights), initial=0.0))
        cond = self.mass @ nu.points - mu.weights[:, None] * mu.points
        scale = mu.weights * (1.0 + np.linalg.norm(mu.points, axis=1))
        mart_err = float(np.max(np.abs(cond) / scale[:, None], initial=0.0))
        return {"row": row_err, "col": col_err, "martingale": mart_err}

    def is_valid(self, mu, nu) -> bool:
        r = self.verify(mu, nu)
        return r["row"] <= PLAN_TOL and r["col"] <= PLAN_TOL and r["martingale"] <= PLAN_TOL


@dataclass(frozen=True)
class ConvexWitness:
    """phi(y) = max_i (intercepts[i] + slopes[i] . y), convex piecewise linear."""

    slopes: np.ndarray      # (k, L)
    intercepts: np.ndarray  # (k,)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.max(points @ self.slopes.T + self.intercepts, axis=1)

    def gap(self, mu: ParticleMeasure, nu: ParticleMeasure) -> float:
        """integral phi d(mu) - integral phi d(nu); positive refutes domination."""
        return float(mu.weights @ self(mu.points) - nu.weights @ self(nu.points))


@dataclass(frozen=True)
class CxResult:
    dominated: bool
    plan: Optional[CouplingPlan] = None
    witness: Optional[ConvexWitness] = None


def _check_inputs(mu: ParticleMeasure, nu: ParticleMeasure):
    if mu.dim != nu.dim:
        raise DimMismatch(f"dimensions differ: {mu.dim} vs {nu.dim}")
    if mu.total_mass <= 0 or nu.total_mass <= 0:
        raise ZeroMass("convex-order check needs positive-mass measures")
    if abs(mu.total_mass - nu.total_mass) > MASS_TOL * max(1.0, mu.total_mass):
        raise MassMismatch(
            f"total masses differ: {mu.total_mass} vs {nu.total_mass}"
        )
    if mu.n_atoms > N_MAX or nu.n_atoms > N_MAX:
        raise ValueError(
            f"too many atoms ({mu.n_atoms} x {nu.n_atoms}); coarsen below {N_MAX}"
        )


def _feasibility_plan(mu, nu) -> Optional[np.ndarray]:
    n, m = mu.n_atoms, nu.n_atoms
    L = mu.dim
    nv = n * m
    rows: List[sp.csr_matrix] = []
    # row sums
    data = np.ones(nv)
    ridx = np.repeat(np.arange(n), m)
    cidx = np.arange(nv)
    rows.append(sp.csr_matrix((data, (ridx, cidx)), shape=(n, nv)))
    # column sums
    ridx = np.tile(np.arange(m), n)
    rows.append(sp.csr_matrix((data, (ridx, cidx)), shape=(m, nv)))
    # martingale rows: sum_j pi_ij (y_j - x_i) = 0
    diff = nu.points[None, :, :] - mu.points[:, None, :]   # (n, m, L)
    mart = sp.csr_matrix(
        (
            diff.transpose(0, 2, 1).reshape(n * L, m).ravel(),
            (
                np.repeat(np.arange(n * L), m),
                (np.repeat(np.arange(n), L)[:, None] * m + np.arange(m)).ravel(),
            ),
        ),
        shape=(n * L, nv),
    )
    rows.append(mart)
    A = sp.vstack(rows, format="csr")
    b = np.concatenate([mu.weights, nu.weights, np.zeros(n * L)])
    res = linprog(
        c=np.zeros(nv), A_eq=A, b_eq=b, bounds=(0, None),
        method="highs", options=_LP_OPTS,
    )
    if res.status == 0:
        return res.x.reshape(n, m)
    if res.status == 2:
        return None
    raise SolverFailure(f"coupling LP ended with status {res.status}: {res.message}")


def _separating_witness(mu, nu) -> ConvexWitness:
    """Max of the bounded Farkas dual: a_i + c_j + g_i.(y_j - x_i) <= 0,
    maximizing a.u + c.v; a positive optimum certifies infeasibility."""
    n, m = mu.n_atoms, nu.n_atoms
    L = mu.dim
    nvar = n + m + n * L    # a, c, G (row-major)
    cons_rows = []
    cons_cols = []
    cons_vals = []
    row = 0
    for i in range(n):
        diff = nu.points - mu.points[i]   # (m, L)
        for j in range(m):
            cons_rows += [row, row]
            cons_cols += [i, n + j]
            cons_vals += [1.0, 1.0]
            gcols = n + m + i * L + np.arange(L)
            cons_rows += [row] * L
            cons_cols += gcols.tolist()
            cons_vals += diff[j].tolist()
            row += 1
    A_ub = sp.csr_matrix((cons_vals, (cons_rows, cons_cols)), shape=(row, nvar))
    c = np.zeros(nvar)
    c[:n] = -mu.weights
    c[n:n + m] = -nu.weights
    res = linprog(
        c=c, A_ub=A_ub, b_ub=np.zeros(row), bounds=(-1, 1),
        method="highs", options=_LP_OPTS,
    )
    if res.status != 0:
        raise SolverFailure(f"witness LP ended with status {res.status}: {res.message}")
    a = res.x[:n]
    G = res.x[n + m:].reshape(n, L)
    return ConvexWitness(slopes=G, intercepts=a - np.einsum("il,il->i", G, mu.points))


def is_cx_dominated(mu: ParticleMeasure, nu: ParticleMeasure) -> CxResult:
    """Decide mu <=_cx nu with a re-verified certificate either way."""
    _check_inputs(mu, nu)
    mu = mu.merge_duplicates()
    nu = nu.merge_duplicates()
    plan_matrix = _feasibility_plan(mu, nu)
    if plan_matrix is not None:
        plan = CouplingPlan(plan_matrix)
        if not plan.is_valid(mu, nu):
            raise SolverFailure(
                f"solver plan failed re-verification: {plan.verify(mu, nu)}"
            )
        return CxResult(dominated=True, plan=plan)
    witness = _separating_witness(mu, nu)
    if witness.gap(mu, nu) <= WITNESS_MARGIN:
        raise SolverFailure(
            "LP infeasible but the dual witness gap is not positive"
        )
    return CxResult(dominated=False, witness=witness)


def cx_chain_check(measures: List[ParticleMeasure]) -> bool:
    """True iff each consecutive pair is dominated (empty chains pass)."""
    for a, b in zip(measures, measures[1:]):
        if not is_cx_dominated(a, b).dominated:
            return False
    return True
