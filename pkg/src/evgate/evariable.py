"""E-variables and p-variables recovered from split trees.

A depth-s tree partitions the likelihood-ratio cloud into leaf regions
whose barycenters b_k sit on the diagonal.  Assigning the constant
1/b_k to region k yields an e-variable that is exact (unit expectation
under every null) and pivotal (same law under every null), both
identities holding leaf-wise by construction.  The randomized
descending rank of that e-variable under its common null law is an
exact p-variable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import UnroutablePoint
from .measures import TOL_GEOM, ParticleMeasure, RNCloud
from .rng import stream
from .shine import ShineNode, ShineTree


def _leaf_stats(tree: ShineTree, values: Optional[np.ndarray]):
    leaves = tree.leaves()
    mass = np.array([lf.mass for lf in leaves])
    bary = np.array([lf.bary_scalar for lf in leaves])
    if values is None:
        values = 1.0 / bary
    return leaves, mass, bary, np.asarray(values, dtype=np.float64)


@dataclass(frozen=True)
class RegionEVariable:
    """Piecewise-constant e-variable over the leaf regions of a tree."""

    tree: ShineTree
    values: np.ndarray

    @staticmethod
    def from_tree(tree: ShineTree, values: Optional[Sequence[float]] = None):
        _, _, _, vals = _leaf_stats(tree, None if values is None else np.asarray(values))
        if np.any(vals < 0):
            raise ValueError("e-variable values must be nonnegative")
        return RegionEVariable(tree, vals)

    def leaf_masses(self) -> np.ndarray:
        return np.array([lf.mass for lf in self.tree.leaves()])

    def leaf_barys(self) -> np.ndarray:
        return np.array([lf.bary_scalar for lf in self.tree.leaves()])

    def leaf_moments(self) -> np.ndarray:
        """Unnormalized first moments of the leaf measures, shape (K, L)."""
        return np.array([lf.measure.first_moment() for lf in self.tree.leaves()])

    def route(self, points: np.ndarray, rng: Optional[np.random.Generator] = None):
        """Leaf index for each point; boundary hits follow the stored
        fractional rule through the supplied randomization stream."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if rng is None:
            rng = stream(0, "route")
        leaves = self.tree.leaves()
        leaf_ids = {id(lf): k for k, lf in enumerate(leaves)}
        out = np.empty(len(points), dtype=int)

        def descend(node: ShineNode, idx: np.ndarray):
            if node.is_leaf:
                if node.mass <= 0:
                    raise UnroutablePoint(
                        "point landed in a region carrying no mass"
                    )
                out[idx] = leaf_ids[id(node)]
                return
            s = node.halfspace.signed_distance(points[idx])
            lower = s < -TOL_GEOM
            upper = s > TOL_GEOM
            boundary = ~(lower | upper)
            if boundary.any():
                frac = np.full(boundary.sum(), 0.5)
                if node.boundary_fractions:
                    bpos = node.measure.points[
                        sorted(node.boundary_fractions.keys())
                    ]
                    bf = np.array(
                        [node.boundary_fractions[k]
                         for k in sorted(node.boundary_fractions.keys())]
                    )
                    pb = points[idx][boundary]
                    d = np.linalg.norm(pb[:, None, :] - bpos[None, :, :], axis=2)
                    nearest = d.argmin(axis=1)
                    matched = d[np.arange(len(pb)), nearest] <= 1e-8
                    frac = np.where(matched, bf[nearest], 0.5)
                go_low = rng.random(boundary.sum()) < frac
                lower = lower.copy()
                lower[np.flatnonzero(boundary)[go_low]] = True
                upper = ~lower
            descend(node.children[0], idx[lower])
            descend(node.children[1], idx[upper])

        descend(self.tree.root, np.arange(len(points)))
        return out

    def __call__(self, points: np.ndarray, rng=None) -> np.ndarray:
        return self.values[self.route(points, rng)]

    def to_json(self) -> dict:
        return {
            "kind": "shine_regions",
            "tree": self.tree.to_json(),
            "values": self.values.tolist(),
        }


@dataclass(frozen=True)
class OutcomeEVariable:
    """E-variable given by one value per outcome of a finite space."""

    values: np.ndarray
    outcomes: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if np.any(v < 0):
            raise ValueError("e-variable values must be nonnegative")
        object.__setattr__(self, "values", v)

    def __call__(self, idx, rng=None) -> np.ndarray:
        return self.values[np.asarray(idx, dtype=int)]

    def to_json(self) -> dict:
        obj = {"kind": "outcome_vector", "values": self.values.tolist()}
        if self.outcomes:
            obj["outcomes"] = list(self.outcomes)
        return obj


@dataclass(frozen=True)
class ClosedFormEVariable:
    """E-variable given by an analytic function of the raw observation."""

    fn: object
    spec: object = None

    def __call__(self, raw, rng=None) -> np.ndarray:
        return self.fn(raw)


def recover_evariable(tree: ShineTree) -> RegionEVariable:
    """Leaf e-variable X = 1/barycenter per region (constant 1 at depth 0)."""
    return RegionEVariable.from_tree(tree)


def calibrate(X, b: float):
    """Rescale toward one: Y = (1-b) + b*X, b in (0, 1].

    Preserves exactness and pivotality; for small b the result has
    positive e-power whenever E_Q[X] > 1.
    """
    if not 0.0 < b <= 1.0:
        raise ValueError("calibration parameter must lie in (0, 1]")
    if isinstance(X, RegionEVariable):
        return RegionEVariable(X.tree, (1.0 - b) + b * X.values)
    if isinstance(X, OutcomeEVariable):
        return OutcomeEVariable((1.0 - b) + b * X.values, X.outcomes)
    return ClosedFormEVariable(lambda raw: (1.0 - b) + b * np.asarray(X(raw)), getattr(X, "spec", None))


def e_power(X, gamma) -> float:
    """E_Q[log X].

    Region e-variables over their own source cloud are evaluated
    leaf-wise (exact); any other cloud is routed point by point.
    Outcome e-variables take a DiscreteHypothesis-like object exposing
    alt probabilities.
    """
    if isinstance(X, OutcomeEVariable):
        q = np.asarray(gamma.alt)[0]
        mask = q > 0
        return float(q[mask] @ np.log(X.values[mask]))
    if isinstance(X, RegionEVariable) and gamma is X.tree.gamma_ref:
        mass = X.leaf_masses()
        keep = mass > 0
        return float(mass[keep] @ np.log(X.values[keep]))
    base = gamma.base if isinstance(gamma, RNCloud) else gamma
    vals = X(base.points, stream(0, "epower"))
    return float(base.weights @ np.log(vals) / base.total_mass)


def null_expectations(X, gamma) -> np.ndarray:
    """Vector of E_{P_i}[X] for the L nulls.

    For region e-variables this is sum_k value_k * moment_k where
    moment_k is the leaf's unnormalized first moment, so exactness is
    an algebraic identity once leaf barycenters are diagonal.
    """
    if isinstance(X, OutcomeEVariable):
        return np.asarray(gamma.null) @ X.values
    if isinstance(X, RegionEVariable) and gamma is X.tree.gamma_ref:
        return X.values @ X.leaf_moments()
    base = gamma.base if isinstance(gamma, RNCloud) else gamma
    vals = X(base.points, stream(0, "nullexp"))
    return (base.weights * vals) @ base.points / base.total_mass


def _sup_cdf_distance(values: np.ndarray, weight_rows: np.ndarray) -> float:
    """Max over row pairs of the sup distance between weighted cdfs."""
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weight_rows[:, order]
    # collapse ties so cdfs are compared at distinct support points
    boundaries = np.flatnonzero(np.diff(v) > 0)
    cuts = np.concatenate([boundaries, [len(v) - 1]])
    cdf = np.cumsum(w, axis=1)[:, cuts]
    cdf = cdf / cdf[:, -1:].clip(min=1e-300)
    gap = 0.0
    for i in range(len(cdf)):
        for j in range(i + 1, len(cdf)):
            gap = max(gap, float(np.max(np.abs(cdf[i] - cdf[j]))))
    return gap


def pivotality_gap(X, gamma) -> float:
    """Sup-distance between the laws of X under the different nulls.

    The law under P_i is the cloud reweighted by coordinate i; zero iff
    the e-variable is pivotal across the nulls (up to the cloud).
    """
    if isinstance(X, OutcomeEVariable):
        return _sup_cdf_distance(X.values, np.asarray(gamma.null))
    if isinstance(X, RegionEVariable) and gamma is X.tree.gamma_ref:
        return _sup_cdf_distance(X.values, X.leaf_moments().T)
    base = gamma.base if isinstance(gamma, RNCloud) else gamma
    vals = X(base.points, stream(0, "pivot"))
    rows = (base.weights[None, :] * base.points.T)
    return _sup_cdf_distance(vals, rows)


@dataclass(frozen=True)
class PVariable:
    """Randomized descending-rank p-variable of a region e-variable.

    p = (null mass of regions with strictly larger X) + U * (null mass
    of the own X-block), U uniform.  Exactly uniform under every null;
    stochastically smaller than uniform under the alternative.
    """

    evar: RegionEVariable
    block_of_leaf: np.ndarray   # leaf index -> block index
    f_above: np.ndarray         # block -> null mass strictly above
    f_block: np.ndarray         # block -> own null mass
    q_above: np.ndarray
    q_block: np.ndarray
    seed: int = 0

    @staticmethod
    def from_evariable(evar: RegionEVariable, seed: int = 0) -> "PVariable":
        mass = evar.leaf_masses()
        bary = evar.leaf_barys()
        f_leaf = mass * bary       # common null mass of each region
        v = evar.values
        order = np.argsort(-v, kind="stable")
        blocks: List[List[int]] = []
        for k in order:
            if blocks and abs(v[blocks[-1][0]] - v[k]) <= 1e-12:
                blocks[-1].append(k)
            else:
                blocks.append([k])
        nb = len(blocks)
        f_b = np.array([sum(f_leaf[k] for k in blk) for blk in blocks])
        q_b = np.array([sum(mass[k] for k in blk) for blk in blocks])
        f_above = np.concatenate([[0.0], np.cumsum(f_b)[:-1]])
        q_above = np.concatenate([[0.0], np.cumsum(q_b)[:-1]])
        block_of_leaf = np.empty(len(v), dtype=int)
        for bi, blk in enumerate(blocks):
            for k in blk:
                block_of_leaf[k] = bi
        return PVariable(evar, block_of_leaf, f_above, f_b, q_above, q_b, seed)

    def __call__(self, points: np.ndarray, rng=None) -> np.ndarray:
        if rng is None:
            rng = stream(self.seed, "pvar")
        leaf_idx = self.evar.route(points, rng)
        blk = self.block_of_leaf[leaf_idx]
        u = rng.random(len(blk))
        return self.f_above[blk] + u * self.f_block[blk]

    def alpha_grid(self) -> np.ndarray:
        """Block-boundary levels alpha where the null cdf is exact."""
        return self.f_above + self.f_block

    def null_cdf(self, alpha: np.ndarray) -> np.ndarray:
        """P_i(p <= alpha) at block boundaries equals alpha exactly."""
        return np.asarray(alpha, dtype=float)

    def q_cdf_at_grid(self) -> np.ndarray:
        """Q(p <= alpha) at the block-boundary grid, computed leaf-wise."""
        return self.q_above + self.q_block

    def seed_evariable(self) -> RegionEVariable:
        """Conditional expectation of 2 - 2p per region: an exact e-variable."""
        mids = self.f_above + 0.5 * self.f_block
        vals = 2.0 - 2.0 * mids[self.block_of_leaf]
        return RegionEVariable(self.evar.tree, vals)


def recover_pvariable(X: RegionEVariable, seed: int = 0) -> PVariable:
    return PVariable.from_evariable(X, seed)
