"""Minimaxity condition checkers and shrink-constant calculators.

A shrinkage rule improves uniformly on the unshrunk X_1 (whose constant
risk tr(V_1 Q) is the minimax value) when the relevant trace ratio
tr(M Q)/Ch_max(M Q) exceeds 2 and the shrink function stays inside the
matching upper bound while being monotone the right way in each argument.
The matrix M is V_1 - A for single shrinkage toward the pooled mean,
additionally A itself for the double-shrinkage term, and
sum_i d_i^2 V_i - (sum_i d_i)^2 A for linear combinations.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .model import ModelSpec
from .numerics import chmax_product, trace_product
from .statistics import lincomb_deviation_matrix, pooled_matrix

__all__ = [
    "MinimaxReport",
    "check_shrink_function",
    "double_shrinkage_report",
    "lincomb_shrinkage_report",
    "optimal_eb_constant",
    "optimal_heb_constants",
    "single_shrinkage_report",
    "solve_hb_a",
    "solve_hb_a_from_ratio",
]

_CHMAX_TOL = 1e-12


@dataclass(frozen=True)
class MinimaxReport:
    """Trace-ratio condition and the resulting shrink-function bounds.

    ``phi_upper_single`` is the bound 2(ratio - 2)/(n + 2) for pure
    single-shrinkage rules; ``phi_upper_double`` is the halved bound
    (ratio - 2)/(n + 2) that applies to the first factor of a
    double-shrinkage rule; ``psi_upper_double`` is the analogous bound
    built from the pooled matrix product A Q (present only on
    double-shrinkage reports).
    """

    trace: float
    chmax: float
    ratio: float
    condition_holds: bool
    phi_upper_single: float
    phi_upper_double: float
    psi_upper_double: float | None = None
    trace_pooled: float | None = None
    chmax_pooled: float | None = None
    ratio_pooled: float | None = None

    def as_dict(self) -> dict:
        return {key: val for key, val in asdict(self).items() if val is not None}


def _product_stats(m: np.ndarray, q: np.ndarray) -> tuple[float, float, float, bool]:
    tr = trace_product(m, q)
    ch = chmax_product(m, q)
    if ch <= _CHMAX_TOL * max(1.0, abs(tr)):
        return tr, 0.0, float("nan"), False
    ratio = tr / ch
    return tr, ch, ratio, ratio > 2.0


def single_shrinkage_report(spec: ModelSpec) -> MinimaxReport:
    """Condition and bounds for rules shrinking X_1 toward the pooled mean:
    built from the matrix product (V_1 - A) Q."""
    a = pooled_matrix(spec.V)
    m = spec.V[0] - a
    tr, ch, ratio, holds = _product_stats(m, spec.Q)
    scale = 2.0 * (ratio - 2.0) / (spec.n + 2.0)
    return MinimaxReport(
        trace=tr,
        chmax=ch,
        ratio=ratio,
        condition_holds=holds,
        phi_upper_single=scale,
        phi_upper_double=0.5 * scale,
    )


def double_shrinkage_report(spec: ModelSpec) -> MinimaxReport:
    """Condition and bounds for double-shrinkage rules, which additionally
    pull the pooled mean toward 0: requires the trace ratio of both
    (V_1 - A) Q and A Q to exceed 2."""
    base = single_shrinkage_report(spec)
    a = pooled_matrix(spec.V)
    tr_a, ch_a, ratio_a, holds_a = _product_stats(a, spec.Q)
    return MinimaxReport(
        trace=base.trace,
        chmax=base.chmax,
        ratio=base.ratio,
        condition_holds=base.condition_holds and holds_a,
        phi_upper_single=base.phi_upper_single,
        phi_upper_double=base.phi_upper_double,
        psi_upper_double=(ratio_a - 2.0) / (spec.n + 2.0),
        trace_pooled=tr_a,
        chmax_pooled=ch_a,
        ratio_pooled=ratio_a,
    )


def lincomb_shrinkage_report(spec: ModelSpec, d: Sequence[float]) -> MinimaxReport:
    """Condition and bounds for estimating the linear combination
    sum_i d_i mu_i: built from M_d = sum_i d_i^2 V_i - (sum_i d_i)^2 A.

    With d = e_1 this reduces exactly to the single-shrinkage report.
    When d is proportional to the pooling weights, M_d is numerically
    zero and the condition fails with chmax = 0.
    """
    m = lincomb_deviation_matrix(spec.V, d)
    tr, ch, ratio, holds = _product_stats(m, spec.Q)
    scale = 2.0 * (ratio - 2.0) / (spec.n + 2.0)
    return MinimaxReport(
        trace=tr,
        chmax=ch,
        ratio=ratio,
        condition_holds=holds,
        phi_upper_single=scale,
        phi_upper_double=0.5 * scale,
    )


def optimal_eb_constant(spec: ModelSpec) -> float:
    """EB constant minimizing the risk upper bound: (ratio - 2)/(n + 2),
    half of the admissible range for a single-shrinkage rule."""
    report = single_shrinkage_report(spec)
    if not report.condition_holds:
        raise ValueError("trace-ratio condition fails: no positive EB constant exists")
    return (report.ratio - 2.0) / (spec.n + 2.0)


def optimal_heb_constants(spec: ModelSpec) -> tuple[float, float]:
    """HEB constants minimizing the risk upper bound: the midpoints of the
    double-shrinkage ranges, ((ratio-2)/(2(n+2)), (ratio_pooled-2)/(2(n+2)))."""
    report = double_shrinkage_report(spec)
    if not report.condition_holds:
        raise ValueError("trace-ratio conditions fail: no positive HEB constants exist")
    return (
        0.5 * (report.ratio - 2.0) / (spec.n + 2.0),
        0.5 * (report.ratio_pooled - 2.0) / (spec.n + 2.0),
    )


def solve_hb_a_from_ratio(ratio: float, p: int, k: int, n: int, c: float = 1.0) -> float:
    """Closed-form solution of the HB constant equation

        (p(k-1) + 2a) / (n - 2(a + c)) * (n + 2) = ratio - 2,

    which is linear in a:
        a = [R(n - 2c) - p(k-1)(n + 2)] / [2(n + 2) + 2R],  R = ratio - 2.

    Raises if R <= 0 or the solution leaves the HB parameter domain
    (a > -p(k-1)/2 and a + c < n/2).
    """
    r = ratio - 2.0
    if not r > 0.0:
        raise ValueError("trace-ratio condition fails: HB constant is undefined")
    pk = p * (k - 1.0)
    a = (r * (n - 2.0 * c) - pk * (n + 2.0)) / (2.0 * (n + 2.0) + 2.0 * r)
    if not a > -0.5 * pk:
        raise ValueError(
            f"solution a = {a} violates the lower bound a > -p(k-1)/2 = {-0.5 * pk}"
        )
    if not a + c < 0.5 * n:
        raise ValueError(
            f"solution a = {a} violates the upper bound a + c < n/2 = {0.5 * n}"
        )
    return a


def solve_hb_a(spec: ModelSpec, c: float = 1.0) -> float:
    """Solve for the HB prior constant a that makes the supremum of the HB
    shrink function sit exactly at the double-shrinkage bound; see
    ``solve_hb_a_from_ratio`` for the equation.

    Raises if the trace-ratio condition fails for the model.
    """
    report = single_shrinkage_report(spec)
    if not report.condition_holds:
        raise ValueError("trace-ratio condition fails: HB constant is undefined")
    return solve_hb_a_from_ratio(report.ratio, spec.p, spec.k, spec.n, c)


def check_shrink_function(
    phi,
    bound: float,
    F_grid: Sequence[float],
    S_grid: Sequence[float],
    tol: float = 1e-12,
) -> tuple[bool, list[dict]]:
    """Numerically verify the minimaxity conditions for a shrink function
    on a grid: 0 < phi <= bound everywhere, nondecreasing along F,
    nonincreasing along S.

    ``phi`` must broadcast over ndarray arguments.  Violations are
    returned as data, one dict per offending grid point.
    """
    f = np.asarray(F_grid, dtype=float)
    s = np.asarray(S_grid, dtype=float)
    if f.ndim != 1 or s.ndim != 1 or np.any(np.diff(f) <= 0) or np.any(np.diff(s) <= 0):
        raise ValueError("grids must be strictly increasing 1-d sequences")
    ff, ss = np.meshgrid(f, s, indexing="ij")
    vals = np.asarray(phi(ff, ss), dtype=float)
    if vals.shape != ff.shape:
        vals = np.broadcast_to(vals, ff.shape)

    violations: list[dict] = []

    def record(kind: str, ii: np.ndarray, jj: np.ndarray):
        for i, j in zip(ii, jj):
            violations.append(
                {
                    "kind": kind,
                    "F": float(f[i]),
                    "S": float(s[j]),
                    "value": float(vals[i, j]),
                }
            )

    bad = vals <= 0.0
    if np.any(bad):
        record("positivity", *np.nonzero(bad))
    bad = vals > bound + tol
    if np.any(bad):
        record("bound", *np.nonzero(bad))
    diff_f = np.diff(vals, axis=0)
    bad = diff_f < -tol * np.maximum(1.0, np.abs(vals[:-1, :]))
    if np.any(bad):
        ii, jj = np.nonzero(bad)
        record("monotone_F", ii + 1, jj)
    diff_s = np.diff(vals, axis=1)
    bad = diff_s > tol * np.maximum(1.0, np.abs(vals[:, :-1]))
    if np.any(bad):
        ii, jj = np.nonzero(bad)
        record("monotone_S", ii, jj + 1)
    return len(violations) == 0, violations
