"""Iterated separating-hyperplane splits and the diagonal measures they induce.

Starting from an RN cloud (mass 1, barycenter at the all-ones vector),
each step splits every live leaf at its own diagonal barycenter into two
pieces whose barycenters again lie on the diagonal.  Collapsing the
leaves to their barycenters yields a sequence of diagonal measures that
increases in convex order and stays dominated by the cloud; the leaf
values 1/barycenter form a pivotal exact e-variable (see `evariable`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterator, List, Optional, Tuple

import numpy as np

from . import hyperplane
from .errors import DegenerateNode, NoSignChange
from .measures import HalfSpace, ParticleMeasure, RNCloud

FREEZE_SCM = 1e-14        # (1e-7)^2 second-central-moment freeze threshold
FREEZE_MASS = 1e-12
LEAF_CAP = 2 ** 14


@dataclass(frozen=True)
class ShineNode:
    """One node of the split tree: a sub-measure with diagonal barycenter."""

    measure: ParticleMeasure
    bary_scalar: float
    mass: float
    halfspace: Optional[HalfSpace] = None       # set on internal nodes
    boundary_fractions: dict = field(default_factory=dict)
    children: Tuple["ShineNode", ...] = ()
    frozen: bool = False

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class ShineTree:
    root: ShineNode
    depth: int
    gamma_ref: RNCloud

    def leaves(self) -> List[ShineNode]:
        out: List[ShineNode] = []

        def walk(node: ShineNode):
            if node.is_leaf:
                out.append(node)
            else:
                for ch in node.children:
                    walk(ch)

        walk(self.root)
        return out

    def n_leaves(self) -> int:
        return len(self.leaves())

    def iter_nodes(self) -> Iterator[Tuple[str, ShineNode]]:
        """Yield (path, node) pairs; path is a string of 0/1 child turns."""
        stack = [("", self.root)]
        while stack:
            path, node = stack.pop()
            yield path, node
            for i, ch in enumerate(reversed(node.children)):
                stack.append((path + str(len(node.children) - 1 - i), ch))

    def to_json(self) -> dict:
        def enc(node: ShineNode) -> dict:
            obj = {
                "bary_scalar": node.bary_scalar,
                "mass": node.mass,
                "frozen": node.frozen,
            }
            if node.halfspace is not None:
                obj["halfspace"] = node.halfspace.to_json()
            if node.children:
                obj["children"] = [enc(ch) for ch in node.children]
            return obj

        return {
            "depth": self.depth,
            "dim": self.gamma_ref.dim,
            "gamma": self.gamma_ref.to_json(),
            "root": enc(self.root),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass(frozen=True)
class DiagonalMeasure:
    """Discrete measure on the nonnegative diagonal ray, as (value, weight)."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(v < 0) or np.any(w < 0):
            raise ValueError("diagonal measure needs nonnegative values and weights")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    @property
    def mean(self) -> float:
        return float(self.values @ self.weights)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def cdf(self, x: float) -> float:
        return float(self.weights[self.values <= x].sum())

    def as_particles(self, dim: int) -> ParticleMeasure:
        return ParticleMeasure(np.outer(self.values, np.ones(dim)), self.weights)


def build_tree(gamma: RNCloud) -> ShineTree:
    """Depth-0 tree: the whole cloud as a single leaf at barycenter 1."""
    b = gamma.base.barycenter()
    root = ShineNode(
        measure=gamma.base,
        bary_scalar=float(b.mean()),
        mass=gamma.base.total_mass,
    )
    return ShineTree(root=root, depth=0, gamma_ref=gamma)


def _should_freeze(m: ParticleMeasure) -> bool:
    return m.total_mass <= FREEZE_MASS or m.second_central_moment() <= FREEZE_SCM


def shine_step(tree: ShineTree) -> ShineTree:
    """Split every live leaf at its own barycenter; returns a deeper tree."""
    leaves = tree.leaves()
    live = [lf for lf in leaves if not lf.frozen]
    budget = LEAF_CAP - len(leaves)
    to_freeze: set[int] = set()
    if len(live) > budget:
        order = sorted(range(len(live)), key=lambda i: (live[i].mass, i))
        to_freeze = set(order[: len(live) - budget])

    split_of: dict[int, ShineNode] = {}
    live_idx = 0

    def rebuild(node: ShineNode, path: str) -> ShineNode:
        nonlocal live_idx
        if not node.is_leaf:
            kids = tuple(
                rebuild(ch, path + str(i)) for i, ch in enumerate(node.children)
            )
            return replace(node, children=kids)
        if node.frozen:
            return node
        idx = live_idx
        live_idx += 1
        if idx in to_freeze or _should_freeze(node.measure):
            return replace(node, frozen=True)
        try:
            split = hyperplane.separate(node.measure, node.bary_scalar)
        except DegenerateNode:
            return replace(node, frozen=True)
        except NoSignChange as err:
            raise NoSignChange(f"at node path '{path or 'root'}': {err}") from err
        lo = ShineNode(
            measure=split.lower,
            bary_scalar=split.b_lower,
            mass=split.lower.total_mass,
        )
        hi = ShineNode(
            measure=split.upper,
            bary_scalar=split.b_upper,
            mass=split.upper.total_mass,
        )
        return replace(
            node,
            halfspace=split.halfspace,
            boundary_fractions=dict(split.boundary_fractions),
            children=(lo, hi),
        )

    new_root = rebuild(tree.root, "")
    return ShineTree(root=new_root, depth=tree.depth + 1, gamma_ref=tree.gamma_ref)


def diagonal_measure(tree: ShineTree, merge_tol: float = 1e-12) -> DiagonalMeasure:
    """Collapse leaves to (barycenter, mass); merges values closer than tol."""
    leaves = tree.leaves()
    vals = np.array([lf.bary_scalar for lf in leaves])
    ws = np.array([lf.mass for lf in leaves])
    order = np.argsort(vals, kind="stable")
    vals, ws = vals[order], ws[order]
    out_v: List[float] = []
    out_w: List[float] = []
    for v, w in zip(vals, ws):
        if out_v and abs(v - out_v[-1]) <= merge_tol:
            tot = out_w[-1] + w
            out_v[-1] = (out_v[-1] * out_w[-1] + v * w) / tot
            out_w[-1] = tot
        else:
            out_v.append(float(v))
            out_w.append(float(w))
    return DiagonalMeasure(np.array(out_v), np.array(out_w))


def coupling_kernel(tree: ShineTree) -> List[dict]:
    """Per-node transition probabilities of the natural leaf-coupling chain.

    Internal nodes transition to each child with probability proportional
    to the child's mass; frozen leaves self-transition with probability 1.
    """
    rows: List[dict] = []
    for path, node in tree.iter_nodes():
        if node.children:
            tot = sum(ch.mass for ch in node.children)
            if tot <= 0:
                raise ZeroDivisionError(f"zero-mass child pair at '{path or 'root'}'")
            for i, ch in enumerate(node.children):
                rows.append(
                    {
                        "path": path or "root",
                        "child": i,
                        "value": ch.bary_scalar,
                        "prob": ch.mass / tot,
                    }
                )
        elif node.frozen or node.is_leaf:
            rows.append(
                {
                    "path": path or "root",
                    "child": -1,
                    "value": node.bary_scalar,
                    "prob": 1.0,
                }
            )
    return rows


def tree_e_power(tree: ShineTree) -> float:
    """E^Q[log X] of the leaf e-variable, computed leaf-wise exactly."""
    return float(
        -sum(lf.mass * np.log(lf.bary_scalar) for lf in tree.leaves() if lf.mass > 0)
    )


def run(
    gamma: RNCloud, steps: int, stop_eps: float = 0.0
) -> Tuple[ShineTree, List[dict]]:
    """Iterate shine_step up to `steps` times with an e-power stop rule.

    Returns the final tree and a trace of dicts with keys
    (step, e_power, n_leaves); stops early when one step improves the
    e-power by less than stop_eps.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    tree = build_tree(gamma)
    trace = [{"step": 0, "e_power": tree_e_power(tree), "n_leaves": tree.n_leaves()}]
    for s in range(1, steps + 1):
        new_tree = shine_step(tree)
        ep_prev, ep_new = tree_e_power(tree), tree_e_power(new_tree)
        tree = new_tree
        trace.append({"step": s, "e_power": ep_new, "n_leaves": tree.n_leaves()})
        if stop_eps > 0 and ep_new - ep_prev < stop_eps:
            break
    return tree, trace
