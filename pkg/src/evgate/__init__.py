"""evgate: exact, pivotal, and powerful e/p-variables for finite composite
hypotheses.

The package decides when nontrivial e-values and p-values exist for a
finite set of nulls against a finite set of alternatives (LP gates over
the outcome simplex), constructs optimal ones (margin LPs, exactness-
constrained e-power maximization, and the iterative separating-
hyperplane construction over likelihood-ratio clouds), and audits the
resulting sequential wealth processes by simulation.
"""

from .convex_order import CouplingPlan, ConvexWitness, CxResult, cx_chain_check, is_cx_dominated
from .evariable import (
    ClosedFormEVariable,
    OutcomeEVariable,
    PVariable,
    RegionEVariable,
    calibrate,
    e_power,
    null_expectations,
    pivotality_gap,
    recover_evariable,
    recover_pvariable,
)
from .gates import (
    DiscreteHypothesis,
    GateVerdict,
    gate,
    lp_evariable,
    max_epower_exact,
    product_power,
)
from .hyperplane import SplitResult, separate
from .martingale import WealthPath, batched_vs_product, simulate, simulate_matrix
from .measures import HalfSpace, ParticleMeasure, Provenance, RNCloud
from .oracles import (
    OracleSpec,
    closed_form_evariable,
    closed_form_mu_cdf,
    gamma_cloud,
    optimal_epower,
)
from .shine import (
    DiagonalMeasure,
    ShineNode,
    ShineTree,
    build_tree,
    coupling_kernel,
    diagonal_measure,
    run,
    shine_step,
    tree_e_power,
)

__version__ = "0.1.0"

__all__ = [
    "CouplingPlan", "ConvexWitness", "CxResult", "cx_chain_check", "is_cx_dominated",
    "ClosedFormEVariable", "OutcomeEVariable", "PVariable", "RegionEVariable",
    "calibrate", "e_power", "null_expectations", "pivotality_gap",
    "recover_evariable", "recover_pvariable",
    "DiscreteHypothesis", "GateVerdict", "gate", "lp_evariable",
    "max_epower_exact", "product_power",
    "SplitResult", "separate",
    "WealthPath", "batched_vs_product", "simulate", "simulate_matrix",
    "HalfSpace", "ParticleMeasure", "Provenance", "RNCloud",
    "OracleSpec", "closed_form_evariable", "closed_form_mu_cdf",
    "gamma_cloud", "optimal_epower",
    "DiagonalMeasure", "ShineNode", "ShineTree", "build_tree",
    "coupling_kernel", "diagonal_measure", "run", "shine_step", "tree_e_power",
]
