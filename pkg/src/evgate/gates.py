"""Existence gates and optimal e-variables for finite discrete hypotheses.

For outcome probabilities P_1..P_L (nulls) and Q_1..Q_M (alternatives),
the existence of nontrivial e/p-variables reduces to geometry:

  span gate:       exact e-variables exist iff Span(P) misses Conv(Q);
  convex gate:     e-variables exist iff Conv(P) misses Conv(Q).

Each verdict carries a certificate that is re-checked numerically:
mixture coefficients witnessing an intersection, or a separating vector
witnessing disjointness.  On top of the gates sit two constructions:
the margin-maximizing LP e-variable and the KKT/Newton maximizer of
e-power under exactness constraints.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog, lsq_linear

from .errors import (
    Infeasible,
    InfeasibleExactness,
    NewtonDivergence,
    SizeOverflow,
    SolverFailure,
)

MODES = ("span_membership", "conv_membership", "span_conv_disjoint", "conv_conv_disjoint")
_LP_OPTS = {"presolve": True, "primal_feasibility_tolerance": 1e-10}
CERT_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteHypothesis:
    """Finite outcome space with L null and M alternative distributions."""

    outcomes: tuple
    null: np.ndarray   # (L, m)
    alt: np.ndarray    # (M, m)

    def __post_init__(self):
        null = np.atleast_2d(np.asarray(self.null, dtype=np.float64))
        alt = np.atleast_2d(np.asarray(self.alt, dtype=np.float64))
        m = len(self.outcomes)
        if m < 2:
            raise ValueError("need at least two outcomes")
        if null.shape[1] != m or alt.shape[1] != m:
            raise ValueError("probability rows must match the outcome count")
        for name, rows in (("null", null), ("alt", alt)):
            if rows.shape[0] < 1:
                raise ValueError(f"need at least one {name} measure")
            if np.any(rows < 0) or np.any(np.abs(rows.sum(axis=1) - 1) > 1e-12):
                raise ValueError(f"{name} rows must be probability vectors")
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        object.__setattr__(self, "null", null)
        object.__setattr__(self, "alt", alt)

    @property
    def L(self) -> int:
        return self.null.shape[0]

    @property
    def M(self) -> int:
        return self.alt.shape[0]

    @property
    def m(self) -> int:
        return len(self.outcomes)

    def rn_cloud(self, alt_index: int = 0):
        """Likelihood-ratio cloud of the nulls against alternative j."""
        from .measures import ParticleMeasure, Provenance, RNCloud

        q = self.alt[alt_index]
        keep = q > 0
        if not np.all(self.null[:, ~keep] == 0):
            raise ValueError("nulls put mass where the alternative has none")
        pts = (self.null[:, keep] / q[keep]).T
        return RNCloud(ParticleMeasure(pts, q[keep]), Provenance("exact_discrete"))

    def to_json(self) -> dict:
        return {
            "outcomes": list(self.outcomes),
            "null": self.null.tolist(),
            "alt": self.alt.tolist(),
        }

    @staticmethod
    def from_json(obj: dict) -> "DiscreteHypothesis":
        return DiscreteHypothesis(
            tuple(obj["outcomes"]), np.asarray(obj["null"]), np.asarray(obj["alt"])
        )


@dataclass(frozen=True)
class GateVerdict:
    """Answer plus a re-verified certificate.

    answer=True means disjoint (the e/p-variable existence condition
    holds); answer=False means the sets intersect.  The certificate is
    mixture coefficients for an intersection, or a separating outcome
    vector with its margin for disjointness.
    """

    mode: str
    answer: bool
    borderline: bool = False
    alpha: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    separator: Optional[np.ndarray] = None
    margin: Optional[float] = None

    def to_json(self) -> dict:
        obj = {
            "mode": self.mode,
            "answer": "disjoint" if self.answer else "intersect",
            "borderline": self.borderline,
        }
        if self.alpha is not None:
            obj["alpha"] = np.asarray(self.alpha).tolist()
        if self.beta is not None:
            obj["beta"] = np.asarray(self.beta).tolist()
        if self.separator is not None:
            obj["separator"] = np.asarray(self.separator).tolist()
        if self.margin is not None:
            obj["margin"] = float(self.margin)
        return obj


def _phase1_gap(A_eq: np.ndarray, b_eq: np.ndarray, n_free: int, n_nonneg: int):
    """Minimal l1 residual of A z = b with z = (free block, nonneg block).

    Returns (gap, z).  Artificial slacks make the program always
    feasible, so the optimum is the true infeasibility gap.
    """
    n_rows = A_eq.shape[0]
    nz = n_free + n_nonneg
    A = np.hstack([A_eq, np.eye(n_rows), -np.eye(n_rows)])
    c = np.concatenate([np.zeros(nz), np.ones(2 * n_rows)])
    bounds = (
        [(None, None)] * n_free + [(0, None)] * n_nonneg + [(0, None)] * (2 * n_rows)
    )
    res = linprog(c=c, A_eq=A, b_eq=b_eq, bounds=bounds, method="highs", options=_LP_OPTS)
    if res.status != 0:
        raise SolverFailure(f"phase-1 LP status {res.status}: {res.message}")
    return float(res.fun), res.x[:nz]


def _margin_lp(h: DiscreteHypothesis, mode: str):
    """Best separating vector for the given mode; returns (X, margin)."""
    P, Q, m = h.null, h.alt, h.m
    if mode in ("span_membership", "span_conv_disjoint"):
        # max eps: X.p_i = 0, X.q_j >= eps, |X| <= 1
        c = np.zeros(m + 1)
        c[-1] = -1.0
        A_eq = np.hstack([P, np.zeros((h.L, 1))])
        b_eq = np.zeros(h.L)
        A_ub = np.hstack([-Q, np.ones((h.M, 1))])
        b_ub = np.zeros(h.M)
        bounds = [(-1, 1)] * m + [(None, None)]
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=bounds, method="highs", options=_LP_OPTS)
        if res.status != 0:
            raise SolverFailure(f"margin LP status {res.status}: {res.message}")
        return res.x[:m], float(res.x[-1])
    # conv modes: max eps: X.q_j >= s + eps, X.p_i <= s, 0 <= X <= 1
    c = np.zeros(m + 2)
    c[-1] = -1.0
    A_ub = np.vstack(
        [
            np.hstack([P, -np.ones((h.L, 1)), np.zeros((h.L, 1))]),
            np.hstack([-Q, np.ones((h.M, 1)), np.ones((h.M, 1))]),
        ]
    )
    b_ub = np.zeros(h.L + h.M)
    bounds = [(0, 1)] * m + [(None, None), (None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs", options=_LP_OPTS)
    if res.status != 0:
        raise SolverFailure(f"margin LP status {res.status}: {res.message}")
    return res.x[:m], float(res.x[-1])


def gate(h: DiscreteHypothesis, mode: str) -> GateVerdict:
    """Decide the existence geometry for the requested mode.

    Membership modes require a single alternative and test Q against
    Span(P) or Conv(P); the disjoint modes test Span/Conv(P) against
    Conv(Q).  Intersection is declared when the phase-1 residual is at
    most 1e-9*m, with a borderline flag up to 1e-6*m.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    P, Q, m = h.null, h.alt, h.m
    L, M = h.L, h.M
    if mode in ("span_membership", "conv_membership") and M != 1:
        raise ValueError("membership modes need exactly one alternative")

    if mode == "span_membership":
        alpha, *_ = np.linalg.lstsq(P.T, Q[0], rcond=None)
        gap = float(np.abs(P.T @ alpha - Q[0]).sum())
        coeff = (alpha, None)
    elif mode == "conv_membership":
        A = np.vstack([P.T, np.ones((1, L))])
        b = np.concatenate([Q[0], [1.0]])
        gap, z = _phase1_gap(A, b, n_free=0, n_nonneg=L)
        coeff = (z[:L], None)
    elif mode == "span_conv_disjoint":
        A = np.vstack(
            [
                np.hstack([P.T, -Q.T]),
                np.hstack([np.ones((1, L)), np.zeros((1, M))]),
                np.hstack([np.zeros((1, L)), np.ones((1, M))]),
            ]
        )
        b = np.concatenate([np.zeros(m), [1.0, 1.0]])
        gap, z = _phase1_gap(A, b, n_free=L, n_nonneg=M)
        coeff = (z[:L], z[L:L + M])
    else:
        A = np.vstack(
            [
                np.hstack([P.T, -Q.T]),
                np.hstack([np.ones((1, L)), np.zeros((1, M))]),
                np.hstack([np.zeros((1, L)), np.ones((1, M))]),
            ]
        )
        b = np.concatenate([np.zeros(m), [1.0, 1.0]])
        gap, z = _phase1_gap(A, b, n_free=0, n_nonneg=L + M)
        coeff = (z[:L], z[L:L + M])

    intersects = gap <= CERT_TOL * m
    borderline = CERT_TOL * m < gap <= 1e-6 * m or (
        intersects and gap > 0.5 * CERT_TOL * m
    )
    if intersects:
        alpha, beta = coeff
        _verify_intersection(h, mode, alpha, beta)
        return GateVerdict(mode, answer=False, borderline=borderline,
                           alpha=alpha, beta=beta)
    X, margin = _margin_lp(h, mode)
    if margin <= CERT_TOL:
        raise SolverFailure(
            f"gate disagreement: phase-1 gap {gap:.3g} yet margin {margin:.3g}"
        )
    _verify_separator(h, mode, X, margin)
    return GateVerdict(mode, answer=True, borderline=borderline,
                       separator=X, margin=margin)


def _verify_intersection(h, mode, alpha, beta):
    P, Q = h.null, h.alt
    lhs = alpha @ P
    if mode in ("span_membership", "conv_membership"):
        rhs = Q[0]
    else:
        rhs = beta @ Q
    if np.max(np.abs(lhs - rhs)) > 1e-8:
        raise SolverFailure("intersection certificate failed re-verification")
    if mode != "span_membership" and abs(alpha.sum() - 1) > 1e-8:
        raise SolverFailure("intersection coefficients do not sum to one")


def _verify_separator(h, mode, X, margin):
    P, Q = h.null, h.alt
    if mode in ("span_membership", "span_conv_disjoint"):
        if np.max(np.abs(P @ X)) > 1e-7:
            raise SolverFailure("separator is not orthogonal to the null span")
        if np.min(Q @ X) < margin - 1e-9:
            raise SolverFailure("separator margin failed re-verification")
    else:
        if np.min(Q @ X) - np.max(P @ X) < margin - 1e-9:
            raise SolverFailure("separator margin failed re-verification")


def product_power(h: DiscreteHypothesis, k: int) -> DiscreteHypothesis:
    """k-fold iid product hypothesis on the product outcome space."""
    if k < 1:
        raise ValueError("power must be a positive integer")
    if h.m ** k > 10 ** 6:
        raise SizeOverflow(f"product space of size {h.m}**{k} exceeds 1e6")
    if k == 1:
        return h
    outcomes = tuple(
        ",".join(t) for t in itertools.product([str(o) for o in h.outcomes], repeat=k)
    )

    def kron_rows(rows):
        out = []
        for r in rows:
            acc = r
            for _ in range(k - 1):
                acc = np.kron(acc, r)
            out.append(acc)
        return np.array(out)

    return DiscreteHypothesis(outcomes, kron_rows(h.null), kron_rows(h.alt))


def lp_evariable(
    h: DiscreteHypothesis, exact: bool = True, bound: float = 100.0
) -> Tuple[np.ndarray, float]:
    """Margin-maximizing e-variable: bounded X with E_{P_i}[X] = 1 (or <= 1)
    and E_{Q_j}[X] >= 1 + eps, maximizing eps.  Returns (X, eps)."""
    P, Q, m = h.null, h.alt, h.m
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-Q, np.ones((h.M, 1))])
    b_ub = -np.ones(h.M)
    kw = {}
    if exact:
        kw["A_eq"] = np.hstack([P, np.zeros((h.L, 1))])
        kw["b_eq"] = np.ones(h.L)
    else:
        A_ub = np.vstack([A_ub, np.hstack([P, np.zeros((h.L, 1))])])
        b_ub = np.concatenate([b_ub, np.ones(h.L)])
    bounds = [(0, bound)] * m + [(-2 * bound, 2 * bound)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs",
                  options=_LP_OPTS, **kw)
    if res.status == 2:
        raise Infeasible("no bounded e-variable satisfies the constraints")
    if res.status != 0:
        raise SolverFailure(f"e-variable LP status {res.status}: {res.message}")
    X, eps = res.x[:m], float(res.x[-1])
    if eps <= 0:
        raise Infeasible(f"LP margin {eps:.3g} is not positive; gate should be disjoint")
    return X, eps


def max_epower_exact(
    h: DiscreteHypothesis, max_iter: int = 200, tol: float = 1e-10
) -> Tuple[np.ndarray, float, np.ndarray]:
    """E-power maximizer among exact (not necessarily pivotal) e-variables.

    Solves max sum_w q_w log X_w subject to E_{P_i}[X] = 1 and X >= 0
    for the single alternative q via the KKT form X_w = q_w/(lambda.p_w)
    on {q_w > 0}, with a damped Newton iteration on the convex dual
    D(lambda) = sum_i lambda_i t_i - sum_w q_w log(lambda.p_w).  Outcomes
    with q_w = 0 receive the minimum-norm nonnegative completion of the
    residual constraints.  Returns (X, e-power, lambda).
    """
    if h.M != 1:
        raise ValueError("e-power maximization needs a single alternative")
    P, q = h.null, h.alt[0]
    L, m = h.L, h.m
    pos = q > 0
    if np.any(P[:, pos].max(axis=0) == 0):
        raise InfeasibleExactness(
            "the alternative has mass where every null vanishes; e-power is unbounded"
        )
    Pp, qp = P[:, pos], q[pos]
    P0 = P[:, ~pos]
    x0 = np.zeros(P0.shape[1])
    lam = np.full(L, 1.0 / L)

    def newton(lam, targets):
        for it in range(max_iter):
            dens = lam @ Pp
            grad = targets - Pp @ (qp / dens)
            if np.max(np.abs(grad)) <= tol:
                return lam, it
            H = (Pp * (qp / dens ** 2)) @ Pp.T
            try:
                step = np.linalg.solve(H, -grad)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(H, -grad, rcond=None)[0]
            t = 1.0
            dval = lam @ targets - qp @ np.log(dens)
            for _ in range(60):
                cand = lam + t * step
                nd = cand @ Pp
                if np.min(nd) > 1e-12:
                    nval = cand @ targets - qp @ np.log(nd)
                    if nval < dval + 1e-14:
                        lam = cand
                        break
                t /= 2.0
            else:
                raise NewtonDivergence("dual Newton line search stalled")
            if np.max(np.abs(lam)) > 1e8:
                raise InfeasibleExactness("dual iterates diverge; exactness infeasible")
        dens = lam @ Pp
        if np.max(np.abs(targets - Pp @ (qp / dens))) > 1e-9:
            raise NewtonDivergence(
                f"residual above tolerance after {max_iter} iterations"
            )
        return lam, max_iter

    targets = np.ones(L)
    for _ in range(20):
        lam, _ = newton(lam, targets)
        if P0.shape[1] == 0:
            break
        resid = 1.0 - Pp @ (qp / (lam @ Pp))
        # minimum-norm nonnegative completion on the zero-mass outcomes
        reg = np.vstack([P0, 1e-7 * np.eye(P0.shape[1])])
        rhs = np.concatenate([resid, np.zeros(P0.shape[1])])
        sol = lsq_linear(reg, rhs, bounds=(0, np.inf), tol=1e-14)
        x0 = sol.x
        new_targets = 1.0 - P0 @ x0
        if np.max(np.abs(new_targets - targets)) < 1e-13:
            targets = new_targets
            lam, _ = newton(lam, targets)
            break
        targets = new_targets
    X = np.zeros(m)
    X[pos] = qp / (lam @ Pp)
    X[~pos] = x0
    resid = np.max(np.abs(P @ X - 1.0))
    if resid > 1e-9:
        raise InfeasibleExactness(
            f"exactness constraints violated by {resid:.3g} after completion"
        )
    epower = float(qp @ np.log(X[pos]))
    return X, epower, lam
