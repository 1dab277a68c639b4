"""Finite weighted particle measures in R^L.

A ParticleMeasure is the computational carrier for every measure in the
pipeline: clouds of likelihood-ratio vectors, sub-measures produced by
half-space splits, and discrete diagonal measures.  Measures are
immutable value objects; every operation returns a new measure, so tree
nodes built from them stay auditable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DimMismatch, InvalidFraction, ZeroMass

TOL_GEOM = 1e-10      # boundary classification for half-space splits
TOL_BARY = 1e-8       # relative tolerance for diagonal barycenter checks
WEIGHT_FLOOR = 1e-15  # relative weight below which split atoms are dropped


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ParticleMeasure:
    """Finite nonnegative measure sum_i w_i * delta_{x_i} on R^L."""

    points: np.ndarray   # shape (n, L)
    weights: np.ndarray  # shape (n,)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if pts.shape[0] != w.shape[0]:
            raise ValueError("points and weights must have equal length")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(w)):
            raise ValueError("points and weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def barycenter(self) -> np.ndarray:
        m = self.total_mass
        if m <= 0:
            raise ZeroMass("barycenter of a zero-mass measure")
        return self.weights @ self.points / m

    def first_moment(self) -> np.ndarray:
        """Unnormalized first moment sum_i w_i x_i."""
        return self.weights @ self.points

    def second_central_moment(self) -> float:
        """Trace of the covariance; zero iff all mass at one point."""
        m = self.total_mass
        if m <= 0:
            return 0.0
        b = self.weights @ self.points / m
        return float(self.weights @ np.sum((self.points - b) ** 2, axis=1) / m)

    def normalize(self) -> "ParticleMeasure":
        m = self.total_mass
        if m <= 0:
            raise ZeroMass("cannot normalize a zero-mass measure")
        return ParticleMeasure(self.points, self.weights / m)

    def scale(self, t: float) -> "ParticleMeasure":
        if t < 0:
            raise ValueError("scale factor must be nonnegative")
        return ParticleMeasure(self.points, self.weights * t)

    def restrict_split(
        self, halfspace: "HalfSpace", boundary_fractions: Mapping[int, float]
    ) -> tuple["ParticleMeasure", "ParticleMeasure"]:
        """Split into (inside, outside) pieces of a half-space.

        Strictly interior atoms go wholly to their side.  Atom i on the
        boundary (|v.x_i - c| <= TOL_GEOM) contributes f*w_i to the
        inside piece and (1-f)*w_i to the outside piece, where
        f = boundary_fractions[i]; the mapping's keys must be exactly
        the boundary atom indices.  Mass and first moment are conserved
        atom by atom.
        """
        s = self.points @ halfspace.normal - halfspace.offset
        on_boundary = np.abs(s) <= TOL_GEOM
        expected = set(np.flatnonzero(on_boundary).tolist())
        got = set(int(k) for k in boundary_fractions)
        if expected != got:
            raise InvalidFraction(
                f"boundary_fractions keys {sorted(got)} do not match "
                f"boundary atoms {sorted(expected)}"
            )
        frac = np.where(s <= 0, 1.0, 0.0)
        for i, f in boundary_fractions.items():
            f = float(f)
            if not (0.0 <= f <= 1.0):
                raise InvalidFraction(f"fraction {f} for atom {i} outside [0, 1]")
            frac[int(i)] = f
        w_in = self.weights * frac
        w_out = self.weights * (1.0 - frac)
        floor = WEIGHT_FLOOR * max(self.total_mass, 1.0)
        keep_in = w_in > floor
        keep_out = w_out > floor
        m_in = ParticleMeasure(self.points[keep_in], w_in[keep_in])
        m_out = ParticleMeasure(self.points[keep_out], w_out[keep_out])
        return m_in, m_out

    def merge_duplicates(self, tol: float = 0.0) -> "ParticleMeasure":
        """Merge atoms at (near-)identical positions, summing weights."""
        if self.n_atoms == 0:
            return self
        if tol > 0:
            key = np.round(self.points / tol).astype(np.int64)
        else:
            key = self.points
        _, inv = np.unique(key, axis=0, return_inverse=True)
        k = inv.max() + 1
        w = np.zeros(k)
        np.add.at(w, inv, self.weights)
        pts = np.zeros((k, self.dim))
        np.add.at(pts, inv, self.weights[:, None] * self.points)
        nz = w > 0
        pts[nz] /= w[nz, None]
        order = np.lexsort(pts[nz].T[::-1])
        return ParticleMeasure(pts[nz][order], w[nz][order])

    def coarsen(self, step: float) -> "ParticleMeasure":
        """Cluster atoms to a regular grid of the given step.

        All atoms in a cell merge into one atom at the cell's
        conditional barycenter, so mass and first moment are preserved
        exactly and the result is dominated by the original measure in
        convex order.
        """
        if step <= 0:
            raise ValueError("grid step must be positive")
        cells = np.floor(self.points / step).astype(np.int64)
        _, inv = np.unique(cells, axis=0, return_inverse=True)
        k = inv.max() + 1 if self.n_atoms else 0
        w = np.zeros(k)
        np.add.at(w, inv, self.weights)
        pts = np.zeros((k, self.dim))
        np.add.at(pts, inv, self.weights[:, None] * self.points)
        nz = w > 0
        pts[nz] /= w[nz, None]
        order = np.lexsort(pts[nz].T[::-1])
        return ParticleMeasure(pts[nz][order], w[nz][order])

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
        }

    @staticmethod
    def from_json(obj: dict) -> "ParticleMeasure":
        m = ParticleMeasure(np.asarray(obj["points"]), np.asarray(obj["weights"]))
        if m.dim != int(obj["dim"]):
            raise DimMismatch("declared dim does not match point dimension")
        return m

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass(frozen=True)
class HalfSpace:
    """Closed half-space {x : v.x <= c} with unit normal v."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        v = np.asarray(self.normal, dtype=np.float64).ravel()
        n = np.linalg.norm(v)
        if abs(n - 1.0) > 1e-12:
            raise ValueError("half-space normal must be a unit vector")
        object.__setattr__(self, "normal", _frozen(v))
        object.__setattr__(self, "offset", float(self.offset))

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.atleast_2d(points) @ self.normal - self.offset

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        return self.signed_distance(points) <= tol

    def to_json(self) -> dict:
        return {"normal": self.normal.tolist(), "offset": self.offset}

    @staticmethod
    def from_json(obj: dict) -> "HalfSpace":
        return HalfSpace(np.asarray(obj["normal"]), float(obj["offset"]))


@dataclass(frozen=True)
class Provenance:
    """How an RN cloud was generated; quadrature and exact clouds carry
    deterministic metadata, Monte Carlo clouds carry (seed, n_samples)."""

    kind: str  # "exact_discrete" | "monte_carlo" | "quadrature"
    seed: int | None = None
    n_samples: int | None = None
    rule: str | None = None
    n_nodes: int | None = None

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class RNCloud:
    """Law of the likelihood-ratio vector (dP_1/dQ, ..., dP_L/dQ) under Q.

    Mass-one particle measure on the nonnegative orthant whose
    barycenter is the all-ones vector: exactly for exact_discrete and
    quadrature provenance, statistically for monte_carlo.
    """

    base: ParticleMeasure
    provenance: Provenance = field(default_factory=lambda: Provenance("exact_discrete"))

    def __post_init__(self):
        if abs(self.base.total_mass - 1.0) > 1e-9:
            raise ValueError("RN cloud must have total mass 1")
        if np.any(self.base.points < -TOL_GEOM):
            raise ValueError("RN cloud coordinates must be nonnegative")
        b = self.base.barycenter()
        err = np.max(np.abs(b - 1.0))
        if self.provenance.kind == "monte_carlo":
            n = self.provenance.n_samples or self.base.n_atoms
            spread = float(np.max(self.base.points.std(axis=0))) + 1e-12
            tol = 10.0 * spread / np.sqrt(n)
        else:
            tol = TOL_BARY
        if err > tol:
            raise ValueError(f"RN cloud barycenter off the all-ones vector by {err:.3g}")

    @property
    def dim(self) -> int:
        return self.base.dim

    def to_json(self) -> dict:
        return {"base": self.base.to_json(), "provenance": self.provenance.to_json()}

    @staticmethod
    def from_json(obj: dict) -> "RNCloud":
        return RNCloud(
            ParticleMeasure.from_json(obj["base"]),
            Provenance(**obj.get("provenance", {"kind": "exact_discrete"})),
        )
