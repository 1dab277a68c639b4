"""Closed-form reference models: Gaussian shift families, the symmetric
three-null Gaussian family, Bernoulli families, and the three-atom
piecewise-uniform example.

Each oracle can produce its likelihood-ratio cloud either by exact
deterministic quadrature or by Monte Carlo, can sample raw data under
any of its measures, and (for the Gaussian families) knows its optimal
e-variable and e-power in closed form.

Quadrature clouds use equal-probability cells whose atoms sit at the
exact conditional barycenter of the cell (computed from truncated
normal-exponential moments), so the cloud's barycenter is the all-ones
vector to machine precision and the cloud is dominated in convex order
by the continuous law it discretizes.  For the Gaussian shift family
the grid additionally places cell edges at the boundary of the first
separating half-space (where the likelihood-ratio coordinates sum to
two), which removes the cell-quantization error from the first split.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import roots_hermitenorm
from scipy.stats import norm

from .errors import ZeroMass
from .measures import ParticleMeasure, Provenance, RNCloud
from .rng import stream

SQRT_E = float(np.sqrt(np.e))

_SYM3_MEANS = {
    "P1": np.array([0.0, 1.0]),
    "P2": np.array([-np.sqrt(3) / 2, -0.5]),
    "P3": np.array([np.sqrt(3) / 2, -0.5]),
    "Q": np.array([0.0, 0.0]),
}


def _truncated_exp_moment(t: float, sigma: float, a: np.ndarray, b: np.ndarray):
    """E[e^{t Z} 1{a < Z <= b}] for Z ~ N(0, sigma^2), vectorized in (a, b)."""
    s = t * sigma
    return np.exp(s * s / 2.0) * (norm.cdf(b / sigma - s) - norm.cdf(a / sigma - s))


def _equal_mass_edges(n: int, sigma: float, align: Sequence[float] = ()) -> np.ndarray:
    """n-cell equal-probability grid for N(0, sigma^2); optionally snap the
    nearest interior edge to each requested alignment point."""
    edges = sigma * norm.ppf(np.linspace(0.0, 1.0, n + 1))
    for target in align:
        k = int(np.argmin(np.abs(edges[1:-1] - target))) + 1
        edges[k] = target
    return edges


def _logcosh(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(z, -z) - np.log(2.0)


@dataclass(frozen=True)
class OracleSpec:
    """A reference testing problem with closed-form structure.

    name: "gauss_shift" (L=2 nulls N(-+1,...) vs N(0,...), n_obs
    observations per data point), "gauss_sym3" (three unit-variance
    planar Gaussians at the cube roots of unity vs the centered one),
    "bernoulli" (Ber(p_i) nulls vs Ber(q)), or "atom_example" (the
    three-interval piecewise-uniform pair of nulls vs uniform).
    """

    name: str
    n_obs: int = 1
    p_list: tuple = ()
    q: float | None = None

    def __post_init__(self):
        if self.name not in ("gauss_shift", "gauss_sym3", "bernoulli", "atom_example"):
            raise ValueError(f"unknown oracle '{self.name}'")
        if self.name == "gauss_shift" and self.n_obs < 1:
            raise ValueError("gauss_shift needs n_obs >= 1")
        if self.name == "bernoulli":
            probs = tuple(self.p_list) + ((self.q,) if self.q is not None else ())
            if not probs or not all(0.0 < p < 1.0 for p in probs):
                raise ValueError("bernoulli probabilities must lie in (0, 1)")

    # -- discrete specs double as hypothesis tables -----------------------
    def hypothesis_table(self):
        """(outcomes, null rows, alt rows) for the discrete oracles."""
        if self.name == "bernoulli":
            outcomes = ["0", "1"]
            null = [[1.0 - p, p] for p in self.p_list]
            alt = [[1.0 - self.q, self.q]]
        elif self.name == "atom_example":
            outcomes = ["[0,1]", "[1,2]", "[2,3]"]
            null = [[0.2, 0.5, 0.3], [0.3, 0.6, 0.1]]
            alt = [[1 / 3, 1 / 3, 1 / 3]]
        else:
            raise ValueError(f"oracle '{self.name}' has no finite outcome space")
        return outcomes, np.array(null), np.array(alt)

    @property
    def regimes(self) -> tuple:
        if self.name == "gauss_sym3":
            return ("P1", "P2", "P3", "Q")
        if self.name == "bernoulli":
            return tuple(f"P{i+1}" for i in range(len(self.p_list))) + ("Q",)
        return ("P1", "P2", "Q")

    def to_json(self) -> dict:
        obj = {"name": self.name, "n_obs": self.n_obs}
        if self.p_list:
            obj["p_list"] = list(self.p_list)
        if self.q is not None:
            obj["q"] = self.q
        return obj

    @staticmethod
    def from_json(obj: dict) -> "OracleSpec":
        return OracleSpec(
            name=obj["name"],
            n_obs=int(obj.get("n_obs", 1)),
            p_list=tuple(obj.get("p_list", ())),
            q=obj.get("q"),
        )

    # -- raw data and likelihood-ratio coordinates -------------------------
    def sample_raw(self, regime: str, size: int, rng: np.random.Generator):
        """Draw `size` raw observations under the given measure."""
        if self.name == "gauss_shift":
            shift = {"P1": -1.0, "P2": 1.0, "Q": 0.0}[regime]
            return rng.normal(shift, 1.0, size=(size, self.n_obs))
        if self.name == "gauss_sym3":
            return _SYM3_MEANS[regime] + rng.normal(0.0, 1.0, size=(size, 2))
        outcomes, null, alt = self.hypothesis_table()
        probs = alt[0] if regime == "Q" else null[int(regime[1:]) - 1]
        return rng.choice(len(outcomes), size=size, p=probs)

    def rn_points(self, raw: np.ndarray) -> np.ndarray:
        """Map raw observations to (dP_1/dQ, ..., dP_L/dQ) vectors."""
        if self.name == "gauss_shift":
            s = np.atleast_2d(raw).sum(axis=1)
            n = self.n_obs
            return np.stack([np.exp(-s - n / 2), np.exp(s - n / 2)], axis=1)
        if self.name == "gauss_sym3":
            raw = np.atleast_2d(raw)
            x1, x2 = raw[:, 0], raw[:, 1]
            return np.stack(
                [
                    np.exp(x1 - 0.5),
                    np.exp((-x1 - np.sqrt(3) * x2 - 1) / 2),
                    np.exp((-x1 + np.sqrt(3) * x2 - 1) / 2),
                ],
                axis=1,
            )
        _, null, alt = self.hypothesis_table()
        q = alt[0]
        idx = np.asarray(raw, dtype=int)
        return (null[:, idx] / q[idx]).T


def gamma_cloud(
    spec: OracleSpec,
    method: str = "quadrature",
    nodes: int = 256,
    n_samples: int = 20000,
    seed: int = 0,
) -> RNCloud:
    """Likelihood-ratio cloud of an oracle.

    method "quadrature" builds the deterministic equal-probability-cell
    cloud (`nodes` cells; per axis for the two-dimensional gauss_sym3);
    method "monte_carlo" samples under Q with the counter-based stream
    keyed by (seed, "gamma").  Discrete oracles are always exact.
    """
    if spec.name in ("bernoulli", "atom_example"):
        _, null, alt = spec.hypothesis_table()
        q = alt[0]
        keep = q > 0
        pts = (null[:, keep] / q[keep]).T
        return RNCloud(ParticleMeasure(pts, q[keep]), Provenance("exact_discrete"))

    if method == "monte_carlo":
        rng = stream(seed, "gamma", spec.name, spec.n_obs)
        raw = spec.sample_raw("Q", n_samples, rng)
        pts = spec.rn_points(raw)
        w = np.full(len(pts), 1.0 / len(pts))
        return RNCloud(
            ParticleMeasure(pts, w),
            Provenance("monte_carlo", seed=seed, n_samples=n_samples),
        )
    if method != "quadrature":
        raise ValueError(f"unknown cloud method '{method}'")

    if spec.name == "gauss_shift":
        n = spec.n_obs
        sigma = np.sqrt(n)
        cut = float(np.arccosh(np.exp(n / 2)))
        edges = _equal_mass_edges(nodes, sigma, align=(-cut, cut))
        a, b = edges[:-1], edges[1:]
        w = norm.cdf(b / sigma) - norm.cdf(a / sigma)
        scale = np.exp(-n / 2)
        up = scale * _truncated_exp_moment(1.0, sigma, a, b) / w
        dn = scale * _truncated_exp_moment(-1.0, sigma, a, b) / w
        pts = np.stack([dn, up], axis=1)
        return RNCloud(
            ParticleMeasure(pts, w),
            Provenance("quadrature", rule="equal_mass_cell_bary", n_nodes=nodes),
        )

    if spec.name == "gauss_sym3":
        edges = _equal_mass_edges(nodes, 1.0)
        a, b = edges[:-1], edges[1:]
        w1 = norm.cdf(b) - norm.cdf(a)
        # coordinate means factor over the product cells
        e_p1 = _truncated_exp_moment(1.0, 1.0, a, b) / w1       # E[e^{x1}|cell]
        e_m05 = _truncated_exp_moment(-0.5, 1.0, a, b) / w1     # E[e^{-x1/2}|cell]
        s = np.sqrt(3) / 2
        e_p = _truncated_exp_moment(s, 1.0, a, b) / w1
        e_m = _truncated_exp_moment(-s, 1.0, a, b) / w1
        c1 = np.repeat(np.exp(-0.5) * e_p1, nodes)
        c2 = np.exp(-0.5) * np.outer(e_m05, e_m).ravel()
        c3 = np.exp(-0.5) * np.outer(e_m05, e_p).ravel()
        w = np.outer(w1, w1).ravel()
        pts = np.stack([c1, c2, c3], axis=1)
        return RNCloud(
            ParticleMeasure(pts, w),
            Provenance("quadrature", rule="equal_mass_cell_bary", n_nodes=nodes),
        )
    raise ValueError(f"no quadrature cloud for '{spec.name}'")


def closed_form_mu_cdf(x: float) -> float:
    """CDF of the convex-order-maximal diagonal measure for gauss_shift(1)."""
    if x < np.exp(-0.5):
        return 0.0
    return float(2.0 * norm.cdf(np.log(SQRT_E * x + np.sqrt(np.e * x * x - 1.0))) - 1.0)


def optimal_epower(spec: OracleSpec, tol: float = 1e-10) -> float:
    """Maximum e-power n/2 - E[log cosh N(0, n)] of the gauss_shift family.

    Gauss-Hermite quadrature with node doubling until two successive
    estimates agree to `tol`.
    """
    if spec.name != "gauss_shift":
        raise ValueError("optimal_epower is defined for the gauss_shift family")
    n = spec.n_obs
    prev = None
    k = 64
    while k <= 8192:
        x, w = roots_hermitenorm(k)
        w = w / np.sqrt(2 * np.pi)
        val = n / 2 - float(w @ _logcosh(np.sqrt(n) * x))
        if prev is not None and abs(val - prev) < tol:
            return val
        prev = val
        k *= 2
    return prev


def closed_form_evariable(spec: OracleSpec):
    """The known optimal pivotal exact e-variable, as a raw-data callable."""
    from .evariable import ClosedFormEVariable

    if spec.name == "gauss_shift":
        n = spec.n_obs

        def fn(raw: np.ndarray) -> np.ndarray:
            s = np.atleast_2d(raw).sum(axis=1)
            # exp(n/2 - logcosh) stays finite for |s| far beyond overflow
            return np.exp(n / 2 - _logcosh(s))

        return ClosedFormEVariable(fn, spec)
    if spec.name == "gauss_sym3":

        def fn(raw: np.ndarray) -> np.ndarray:
            raw = np.atleast_2d(raw)
            x1, x2 = raw[:, 0], raw[:, 1]
            h = (
                np.exp(x1)
                + np.exp((-x1 - np.sqrt(3) * x2) / 2)
                + np.exp((-x1 + np.sqrt(3) * x2) / 2)
            )
            return 3.0 * SQRT_E / h

        return ClosedFormEVariable(fn, spec)
    raise ValueError(f"no closed-form e-variable for '{spec.name}'")
