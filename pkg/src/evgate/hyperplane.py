"""Separating half-spaces through diagonal points.

Given a particle measure whose barycenter lies on the nonnegative
diagonal at x*(1,...,1), `separate` finds a closed half-space through
that point splitting the measure into two pieces whose barycenters both
lie on the diagonal.  Atoms landing exactly on the boundary line are
divided fractionally so the balance equation holds exactly rather than
approximately.

For L = 2 the admissible normals form an open half-circle and the
balance residual is a step function of the angle, so a scan plus
bisection locates every root.  For L >= 3 the search runs damped Newton
on the unit sphere of normals and is best-effort.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import DegenerateNode, NewtonDivergence, NoSignChange
from .measures import TOL_BARY, TOL_GEOM, HalfSpace, ParticleMeasure

DEGENERATE_SCM = 1e-14      # second central moment below which a node is a point
ROOT_TOL = 1e-10            # |balance residual| accepted as zero (relative)
SCAN_SIZES = (64, 512, 4096)
BISECT_DEPTH = 80


@dataclass(frozen=True)
class SplitResult:
    """Outcome of one separating split.

    lower + upper equals the input measure in mass and first moment;
    both barycenters sit on the diagonal, with b_lower <= x <= b_upper.
    """

    halfspace: HalfSpace
    lower: ParticleMeasure
    upper: ParticleMeasure
    b_lower: float
    b_upper: float
    boundary_fractions: Dict[int, float]


def _diag_complement_basis(dim: int) -> np.ndarray:
    """Orthonormal basis (columns) of the hyperplane orthogonal to 1."""
    return scipy.linalg.null_space(np.ones((1, dim)))


def _off_diag_moment(basis, pts, w, mask_or_frac) -> np.ndarray:
    """Components orthogonal to the diagonal of sum w_i f_i x_i."""
    m = (w * mask_or_frac) @ pts
    return basis.T @ m


def _solve_fractions(basis, pts, w, strict_in, bidx, scale):
    """Fractions for boundary atoms zeroing the off-diagonal moment.

    Solves  B^T (M_strict + sum_j f_j w_j y_j) = 0  for f in [0,1]^k,
    preferring the solution closest to 1/2 per coordinate when the
    system is underdetermined.  Returns None if no box solution exists.
    """
    r0 = _off_diag_moment(basis, pts, w, strict_in.astype(float))
    if len(bidx) == 0:
        return {} if np.max(np.abs(r0), initial=0.0) <= ROOT_TOL * scale else None
    a = (w[bidx, None] * pts[bidx]) @ basis  # k x (L-1)
    target = -r0
    half = np.full(len(bidx), 0.5)
    corr, *_ = np.linalg.lstsq(a.T, target - a.T @ half, rcond=None)
    f = half + corr
    if np.all((f >= -1e-12) & (f <= 1 + 1e-12)):
        f = np.clip(f, 0.0, 1.0)
        if np.max(np.abs(a.T @ f - target), initial=0.0) <= ROOT_TOL * scale:
            return {int(i): float(v) for i, v in zip(bidx, f)}
    res = scipy.optimize.lsq_linear(a.T, target, bounds=(0.0, 1.0), tol=1e-14)
    if np.max(np.abs(a.T @ res.x - target), initial=0.0) > ROOT_TOL * scale:
        return None
    return {int(i): float(v) for i, v in zip(bidx, np.clip(res.x, 0.0, 1.0))}


def _build_candidate(m, basis, v, x, scale):
    """Assemble a validated split for normal v, or None."""
    c = x * float(v.sum())
    hs = HalfSpace(v, c)
    s = m.points @ v - c
    bidx = np.flatnonzero(np.abs(s) <= TOL_GEOM)
    strict_in = s < -TOL_GEOM
    fr = _solve_fractions(basis, m.points, m.weights, strict_in, bidx, scale)
    if fr is None:
        return None
    lower, upper = m.restrict_split(hs, fr)
    if lower.total_mass <= 0 or upper.total_mass <= 0:
        return None
    bl, bu = lower.barycenter(), upper.barycenter()
    tol = TOL_BARY * (1.0 + abs(x))
    if np.max(np.abs(bl - bl.mean())) > tol or np.max(np.abs(bu - bu.mean())) > tol:
        return None
    b_lo, b_up = float(bl.mean()), float(bu.mean())
    if b_lo > x + tol or b_up < x - tol:
        return None
    return SplitResult(hs, lower, upper, b_lo, b_up, fr)


def _separate_2d(m: ParticleMeasure, x: float) -> SplitResult:
    pts, w = m.points, m.weights
    scale = float(w @ np.linalg.norm(pts, axis=1)) + 1e-300
    basis = _diag_complement_basis(2)

    def g(phi: float) -> float:
        # strict membership: the residual then jumps exactly at atom
        # crossings, so bisection lands where the atom sits on the line
        v = np.array([np.cos(phi), np.sin(phi)])
        s = pts @ v - x * v.sum()
        mom = (w * (s <= 0.0)) @ pts
        return float(mom[1] - mom[0])

    def normal(phi: float) -> np.ndarray:
        v = np.array([np.cos(phi), np.sin(phi)])
        return v / np.linalg.norm(v)

    lo, hi = -np.pi / 4 + 1e-7, 3 * np.pi / 4 - 1e-7
    ztol = ROOT_TOL * scale
    for n_scan in SCAN_SIZES:
        phis = np.linspace(lo, hi, n_scan + 1)
        gs = np.array([g(p) for p in phis])
        roots: List[float] = []
        # maximal runs of (numerically) zero residual: report the midpoint
        # of the zero plateau so symmetric inputs return symmetric normals
        i = 0
        while i <= n_scan:
            if abs(gs[i]) <= ztol:
                j = i
                while j + 1 <= n_scan and abs(gs[j + 1]) <= ztol:
                    j += 1
                left = phis[i]
                if i > 0:
                    a, b = phis[i - 1], phis[i]
                    for _ in range(BISECT_DEPTH):
                        mid = 0.5 * (a + b)
                        if abs(g(mid)) <= ztol:
                            b = mid
                        else:
                            a = mid
                    left = b
                right = phis[j]
                if j < n_scan:
                    a, b = phis[j], phis[j + 1]
                    for _ in range(BISECT_DEPTH):
                        mid = 0.5 * (a + b)
                        if abs(g(mid)) <= ztol:
                            a = mid
                        else:
                            b = mid
                    right = a
                roots.append(0.5 * (left + right))
                i = j + 1
            else:
                i += 1
        # strict sign changes: bisect to the jump angle
        for i in range(n_scan):
            ga, gb = gs[i], gs[i + 1]
            if ga > ztol and gb < -ztol or ga < -ztol and gb > ztol:
                a, b = phis[i], phis[i + 1]
                fa = ga
                for _ in range(BISECT_DEPTH):
                    mid = 0.5 * (a + b)
                    fm = g(mid)
                    if abs(fm) <= ztol:
                        a = b = mid
                        break
                    if (fa > 0) == (fm > 0):
                        a, fa = mid, fm
                    else:
                        b = mid
                roots.append(0.5 * (a + b))
        candidates = []
        for phi in roots:
            cand = _build_candidate(m, basis, normal(phi), x, scale)
            if cand is not None:
                candidates.append((phi, cand))
        if candidates:
            seen = {}
            for phi, cand in sorted(candidates, key=lambda t: t[0]):
                key = (round(cand.lower.total_mass, 12), round(cand.b_lower, 10))
                seen.setdefault(key, (phi, cand))
            best = min(seen.values(), key=lambda t: (-t[1].lower.total_mass, t[0]))
            return best[1]
    raise NoSignChange(
        "no separating angle found; the balance residual keeps one sign"
    )


def _newton_seeds(m: ParticleMeasure, x: float) -> List[np.ndarray]:
    L = m.dim
    seeds = [np.ones(L) / np.sqrt(L)]
    for i in range(L):
        for j in range(i + 1, L):
            rest = [k for k in range(L) if k not in (i, j)]
            red_pts = np.stack(
                [m.points[:, [i, j]].mean(axis=1), m.points[:, rest].mean(axis=1)],
                axis=1,
            )
            red = ParticleMeasure(red_pts, m.weights)
            b = red.barycenter()
            if np.max(np.abs(b - x)) > TOL_BARY * (1 + abs(x)) * 10:
                continue
            try:
                sub = _separate_2d(red, x)
            except (NoSignChange, DegenerateNode):
                continue
            a2, b2 = sub.halfspace.normal
            v = np.zeros(L)
            v[i] = v[j] = a2 / 2.0
            for k in rest:
                v[k] = b2 / len(rest)
            n = np.linalg.norm(v)
            if n > 0 and v.sum() > 0:
                seeds.append(v / n)
    return seeds


def _separate_newton(m: ParticleMeasure, x: float) -> SplitResult:
    pts, w = m.points, m.weights
    L = m.dim
    scale = float(w @ np.linalg.norm(pts, axis=1)) + 1e-300
    basis = _diag_complement_basis(L)

    def residual(v: np.ndarray) -> np.ndarray:
        s = pts @ v - x * v.sum()
        return _off_diag_moment(basis, pts, w, (s <= 0.0).astype(float))

    found = []
    for seed in _newton_seeds(m, x):
        v = seed.copy()
        r = residual(v)
        ok = False
        for _ in range(200):
            if np.max(np.abs(r)) <= ROOT_TOL * scale:
                ok = True
                break
            tang = scipy.linalg.null_space(v[None, :])
            h = 1e-4
            J = np.empty((L - 1, L - 1))
            for k in range(L - 1):
                vp = v + h * tang[:, k]
                vp /= np.linalg.norm(vp)
                J[:, k] = (residual(vp) - r) / h
            try:
                du = np.linalg.lstsq(J, -r, rcond=None)[0]
            except np.linalg.LinAlgError:
                break
            step, improved = 1.0, False
            for _ in range(30):
                vn = v + step * (tang @ du)
                nn = np.linalg.norm(vn)
                if nn > 0:
                    vn = vn / nn
                    if vn.sum() > 0:
                        rn = residual(vn)
                        if np.max(np.abs(rn)) < np.max(np.abs(r)):
                            v, r, improved = vn, rn, True
                            break
                step /= 2.0
            if not improved:
                break
        if ok:
            cand = _build_candidate(m, basis, v, x, scale)
            if cand is not None:
                found.append(cand)
    if not found:
        raise NewtonDivergence(
            f"sphere Newton found no separating normal in dimension {L}"
        )
    return min(
        found,
        key=lambda c: (-c.lower.total_mass, tuple(np.round(c.halfspace.normal, 12))),
    )


def separate(m: ParticleMeasure, x: float) -> SplitResult:
    """Split m (barycenter x*1) into two diagonal-barycenter pieces.

    Raises DegenerateNode when all mass already sits at x*1,
    NoSignChange when no balancing angle exists (L = 2), and
    NewtonDivergence when the sphere search fails (L >= 3).
    """
    if x < 0:
        raise ValueError("diagonal point must be nonnegative")
    if m.n_atoms < 1 or m.total_mass <= 0:
        raise DegenerateNode("empty measure")
    b = m.barycenter()
    if np.max(np.abs(b - x)) > TOL_BARY * (1.0 + abs(x)):
        raise ValueError(f"barycenter {b} is not on the diagonal at {x}")
    if m.second_central_moment() <= DEGENERATE_SCM:
        raise DegenerateNode("all mass concentrated at a single diagonal point")
    if m.dim == 1:
        # 1-d: split at the barycenter itself
        basis = np.zeros((1, 0))
        hs = HalfSpace(np.array([1.0]), x)
        s = m.points[:, 0] - x
        fr = {int(i): 1.0 for i in np.flatnonzero(np.abs(s) <= TOL_GEOM)}
        lower, upper = m.restrict_split(hs, fr)
        if lower.total_mass <= 0 or upper.total_mass <= 0:
            raise DegenerateNode("one-sided 1-d split")
        return SplitResult(
            hs, lower, upper,
            float(lower.barycenter()[0]), float(upper.barycenter()[0]), fr,
        )
    if m.dim == 2:
        return _separate_2d(m, x)
    return _separate_newton(m, x)
