"""Point estimators of the first population mean mu_1.

All shrinkage rules here pull the direct observation X_1 toward the pooled
mean nu_hat (and, for double-shrinkage rules, additionally pull nu_hat
toward the origin).  The amount of shrinkage is a scalar factor driven by
the scale-free statistics F (dispersion around nu_hat) and G (size of
nu_hat), both normalized by the chi-square statistic S:

* preliminary-test (PT): all-or-nothing, keyed to an F-test threshold;
* James-Stein (JS): shrinks X_1 toward 0 using X_1 and S only;
* empirical Bayes (EB): clipped linear shrink min(a0/F, 1);
* hierarchical Bayes (HB): smooth shrink phi_hb(F, S)/F obtained by
  integrating the shrinkage weight against a second-stage prior;
* hierarchical empirical Bayes (HEB): EB-style double shrinkage;
* oracle Bayes rules with known variance components, and the generic
  single/double/linear-combination shrinkage classes.

Degenerate statistics follow a continuity convention: a clipped factor
min(a0/F, 1) is taken to be 1 at F = 0 (full shrink, a measure-zero
event), and the HB factor uses its analytic small-F limit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import ModelSpec, Sample
from .numerics import (
    adaptive_quad_multi,
    f_quantile,
    log_lower_inc_beta,
    reg_upper_gamma,
)
from .statistics import compute_pooled_stats

__all__ = [
    "ESTIMATOR_KINDS",
    "EstimatorConfig",
    "ShrinkFunction",
    "bayes_oracle_normal",
    "bayes_oracle_uniform",
    "class1_estimate",
    "class2_estimate",
    "default_eb_constant",
    "default_heb_constants",
    "eb_estimate",
    "estimate",
    "heb_estimate",
    "hb_estimate",
    "hb_small_f_factor",
    "js_estimate",
    "lincomb_estimate",
    "phi_hb",
    "pt_estimate",
    "pt_threshold",
]

# A shrink function maps (F, S) -> phi >= 0 (or (G, S) -> psi); handles must
# accept ndarray arguments and broadcast.
ShrinkFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]

ESTIMATOR_KINDS = ("PT", "JS", "EB", "HB", "HEB", "LINCOMB", "CLASS1", "CLASS2")


@dataclass(frozen=True)
class EstimatorConfig:
    """Which estimator to run, with its tuning constants.

    Required fields by kind:
      PT      -> alpha in (0, 1)
      JS      -> none
      EB      -> a0 > 0
      HB      -> a, c (and L >= 0); a > -p(k-1)/2 and a + c < n/2
      HEB     -> a0 > 0, b0 > 0
      LINCOMB -> d (k weights) and phi
      CLASS1  -> phi
      CLASS2  -> phi and psi
    """

    kind: str
    alpha: float | None = None
    a0: float | None = None
    b0: float | None = None
    a: float | None = None
    c: float | None = None
    L: float | None = None
    d: tuple[float, ...] | None = None
    phi: ShrinkFunction | None = None
    psi: ShrinkFunction | None = None
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", str(self.kind).upper())
        if self.d is not None:
            object.__setattr__(self, "d", tuple(float(x) for x in self.d))

    @property
    def name(self) -> str:
        return self.label if self.label is not None else self.kind

    def validate(self, spec: ModelSpec | None = None) -> list[str]:
        """Field-level validation; returns violation messages."""
        errors: list[str] = []
        if self.kind not in ESTIMATOR_KINDS:
            return [f"kind: unknown estimator {self.kind!r}"]
        if self.kind == "PT":
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                errors.append(f"alpha: must be in (0, 1), got {self.alpha}")
        if self.kind in ("EB", "HEB"):
            if self.a0 is None or not self.a0 > 0.0:
                errors.append(f"a0: must be positive, got {self.a0}")
        if self.kind == "HEB":
            if self.b0 is None or not self.b0 > 0.0:
                errors.append(f"b0: must be positive, got {self.b0}")
        if self.kind == "HB":
            if self.a is None:
                errors.append("a: required for HB")
            if self.c is None:
                errors.append("c: required for HB")
            if self.L is not None and self.L < 0.0:
                errors.append(f"L: must be nonnegative, got {self.L}")
            if spec is not None and self.a is not None and self.c is not None:
                q = 0.5 * spec.p * (spec.k - 1)
                if not self.a > -q:
                    errors.append(f"a: must exceed -p(k-1)/2 = {-q}, got {self.a}")
                if not self.a + self.c < 0.5 * spec.n:
                    errors.append(
                        f"a + c: must be below n/2 = {0.5 * spec.n}, got {self.a + self.c}"
                    )
        if self.kind == "LINCOMB":
            if self.d is None:
                errors.append("d: weight vector required for LINCOMB")
            elif spec is not None and len(self.d) != spec.k:
                errors.append(f"d: expected {spec.k} weights, got {len(self.d)}")
            if self.phi is None:
                errors.append("phi: shrink function required for LINCOMB")
        if self.kind in ("CLASS1", "CLASS2") and self.phi is None:
            errors.append(f"phi: shrink function required for {self.kind}")
        if self.kind == "CLASS2" and self.psi is None:
            errors.append("psi: shrink function required for CLASS2")
        return errors


def default_eb_constant(p: int, k: int, n: int) -> float:
    """Marginal-likelihood EB constant (p(k-1) - 2) / (n + 2)."""
    return (p * (k - 1) - 2.0) / (n + 2.0)


def default_heb_constants(p: int, k: int, n: int) -> tuple[float, float]:
    """Marginal-likelihood HEB constants ((p(k-1) - 2)/(n + 2), (p - 2)/(n + 2))."""
    return (p * (k - 1) - 2.0) / (n + 2.0), (p - 2.0) / (n + 2.0)


# ---------------------------------------------------------------------------
# Hierarchical Bayes shrink function
# ---------------------------------------------------------------------------


def _check_hb_domain(p: int, k: int, n: int, a: float, c: float, L: float):
    q = 0.5 * p * (k - 1)
    if not a > -q:
        raise ValueError(f"a must exceed -p(k-1)/2 = {-q}, got {a}")
    if not a + c < 0.5 * n:
        raise ValueError(f"a + c must be below n/2 = {0.5 * n}, got {a + c}")
    if L < 0.0:
        raise ValueError(f"L must be nonnegative, got {L}")


def hb_small_f_factor(p: int, k: int, a: float) -> float:
    """Limit of phi_hb(F, S)/F as F -> 0: (q + a)/(q + a + 1), q = p(k-1)/2."""
    q = 0.5 * p * (k - 1)
    return (q + a) / (q + a + 1.0)


def _phi_hb_zero_l(F: np.ndarray, qa: float, m: float) -> np.ndarray:
    """phi_hb for L = 0, where the inner scale integral is a complete gamma
    integral and cancels, leaving the one-dimensional ratio

        int_0^F x^qa (1+x)^-(m+1) dx / int_0^F x^(qa-1) (1+x)^-(m+1) dx.

    The substitution z = x/(1+x) turns each integral into an incomplete
    beta function, evaluated in log space so the ratio survives tiny F.
    """
    a_num, b_num = qa + 1.0, m - qa
    a_den, b_den = qa, m - qa + 1.0
    z = F / (1.0 + F)
    out = np.zeros_like(z)
    pos = z > 0.0
    if np.any(pos):
        log_num = np.atleast_1d(log_lower_inc_beta(a_num, b_num, z[pos]))
        log_den = np.atleast_1d(log_lower_inc_beta(a_den, b_den, z[pos]))
        out[pos] = np.exp(log_num - log_den)
    return out


def _phi_hb_quad(F: float, S: float, qa: float, m: float, L: float, rel_tol: float) -> float:
    """phi_hb for L > 0: the inner scale integral becomes an upper
    incomplete gamma factor and the outer integrals are computed by
    adaptive quadrature on shared panels."""
    half_ls = 0.5 * L * S

    def integrands(x: np.ndarray) -> np.ndarray:
        tail = reg_upper_gamma(m + 1.0, half_ls * (x + 1.0))
        log_base = -(m + 1.0) * np.log1p(x)
        num = np.exp(qa * np.log(x) + log_base) * tail
        den = np.exp((qa - 1.0) * np.log(x) + log_base) * tail
        return np.stack([num, den])

    values, _, _ = adaptive_quad_multi(integrands, 0.0, float(F), rel_tol=rel_tol)
    return float(values[0] / values[1])


def phi_hb(F, S, p: int, k: int, n: int, a: float, c: float, L: float = 0.0):
    """The hierarchical Bayes shrink function phi_hb(F, S).

    Defined as the ratio of two double integrals over the shrinkage weight
    lambda in (0, 1) and the precision eta >= L; after the substitutions
    x = F lambda and v = S eta this is

        int_0^F int_{LS}^inf x^(q+a) v^m exp(-v(x+1)/2) dv dx
        -----------------------------------------------------
        int_0^F int_{LS}^inf x^(q+a-1) v^m exp(-v(x+1)/2) dv dx

    with q = p(k-1)/2 and m = (n + p(k-1))/2 - c.  Nonnegative, bounded by
    (p(k-1) + 2a)/(n - 2(a+c)), nondecreasing in F and nonincreasing in S;
    for L = 0 it does not depend on S at all.

    Broadcasts over array-valued F (and S).  Requires a > -p(k-1)/2 and
    a + c < n/2.
    """
    _check_hb_domain(p, k, n, a, c, L)
    q = 0.5 * p * (k - 1)
    m = 0.5 * (n + p * (k - 1)) - c
    qa = q + a
    farr = np.asarray(F, dtype=float)
    sarr = np.asarray(S, dtype=float)
    if np.any(farr < 0.0):
        raise ValueError("F must be nonnegative")
    scalar = farr.ndim == 0 and sarr.ndim == 0
    fv, sv = np.broadcast_arrays(np.atleast_1d(farr), np.atleast_1d(sarr))
    fv = fv.astype(float)

    # Below this point the integrands are numerically pure power laws and
    # the ratio equals its analytic small-F limit to machine precision.
    tiny = fv < 1e-150
    out = np.where(tiny, fv * (qa / (qa + 1.0)), 0.0)

    live = ~tiny
    if np.any(live):
        if L == 0.0:
            out[live] = _phi_hb_zero_l(fv[live], qa, m)
        else:
            if np.any(sv[live] <= 0.0):
                raise ValueError("S must be positive when L > 0")
            vals = [
                _phi_hb_quad(f, s, qa, m, L, rel_tol=1e-12)
                for f, s in zip(fv[live], sv[live])
            ]
            out[live] = vals
    if scalar:
        return float(out[0])
    return out.reshape(np.broadcast_shapes(farr.shape, sarr.shape))


# ---------------------------------------------------------------------------
# Point estimators
# ---------------------------------------------------------------------------


def pt_threshold(p: int, k: int, n: int, alpha: float) -> float:
    """Rejection threshold for F: (p(k-1)/n) * F_{p(k-1), n, alpha}."""
    d1 = p * (k - 1)
    return (d1 / n) * f_quantile(d1, n, alpha)


def pt_estimate(sample: Sample, spec: ModelSpec, alpha: float = 0.05) -> np.ndarray:
    """Preliminary-test estimator: X_1 when the equal-means hypothesis is
    rejected at level alpha, the pooled mean nu_hat otherwise."""
    st = compute_pooled_stats(sample, spec.V, spec.Q)
    if st.F > pt_threshold(spec.p, spec.k, spec.n, alpha):
        return sample.X[0].copy()
    return st.nu_hat


def js_estimate(sample: Sample, spec: ModelSpec) -> np.ndarray:
    """James-Stein estimator X_1 - ((p-2)/(n+2)) (S/||X_1||^2_{V_1^{-1}}) X_1.

    Uses X_1 and S only.  Returns the shrink target 0 when X_1 = 0.
    """
    x1 = sample.X[0]
    norm2 = float(x1 @ np.linalg.solve(spec.V[0], x1))
    if norm2 == 0.0:
        return np.zeros_like(x1)
    coef = (spec.p - 2.0) / (spec.n + 2.0) * sample.S / norm2
    return x1 - coef * x1


def class1_estimate(sample: Sample, spec: ModelSpec, phi: ShrinkFunction) -> np.ndarray:
    """Generic single-shrinkage rule X_1 - (phi(F, S)/F)(X_1 - nu_hat).

    At F = 0 the deviation X_1 - nu_hat vanishes, so X_1 is returned.
    """
    st = compute_pooled_stats(sample, spec.V, spec.Q)
    factor = float(phi(st.F, sample.S)) / st.F if st.F > 0.0 else 0.0
    return sample.X[0] - factor * (sample.X[0] - st.nu_hat)


def class2_estimate(
    sample: Sample, spec: ModelSpec, phi: ShrinkFunction, psi: ShrinkFunction
) -> np.ndarray:
    """Generic double-shrinkage rule
    X_1 - (phi(F, S)/F)(X_1 - nu_hat) - (psi(G, S)/G) nu_hat."""
    st = compute_pooled_stats(sample, spec.V, spec.Q)
    f_factor = float(phi(st.F, sample.S)) / st.F if st.F > 0.0 else 0.0
    g_factor = float(psi(st.G, sample.S)) / st.G if st.G > 0.0 else 0.0
    return sample.X[0] - f_factor * (sample.X[0] - st.nu_hat) - g_factor * st.nu_hat


def eb_estimate(sample: Sample, spec: ModelSpec, a0: float) -> np.ndarray:
    """Empirical Bayes estimator X_1 - min(a0/F, 1)(X_1 - nu_hat); at F = 0
    the clipped factor is 1 and the pooled mean is returned."""
    st = compute_pooled_stats(sample, spec.V, spec.Q)
    factor = min(a0 / st.F, 1.0) if st.F > 0.0 else 1.0
    return sample.X[0] - factor * (sample.X[0] - st.nu_hat)


def hb_estimate(
    sample: Sample, spec: ModelSpec, a: float, c: float = 1.0, L: float = 0.0
) -> np.ndarray:
    """Hierarchical Bayes estimator X_1 - (phi_hb(F, S)/F)(X_1 - nu_hat);
    at F = 0 the analytic small-F factor (q+a)/(q+a+1) is used."""
    st = compute_pooled_stats(sample, spec.V, spec.Q)
    if st.F > 0.0:
        factor = float(phi_hb(st.F, sample.S, spec.p, spec.k, spec.n, a, c, L)) / st.F
    else:
        _check_hb_domain(spec.p, spec.k, spec.n, a, c, L)
        factor = hb_small_f_factor(spec.p, spec.k, a)
    return sample.X[0] - factor * (sample.X[0] - st.nu_hat)


def heb_estimate(sample: Sample, spec: ModelSpec, a0: float, b0: float) -> np.ndarray:
    """Hierarchical empirical Bayes double-shrinkage estimator
    X_1 - min(a0/F, 1)(X_1 - nu_hat) - min(b0/G, 1) nu_hat."""
    st = compute_pooled_stats(sample, spec.V, spec.Q)
    f_factor = min(a0 / st.F, 1.0) if st.F > 0.0 else 1.0
    g_factor = min(b0 / st.G, 1.0) if st.G > 0.0 else 1.0
    return sample.X[0] - f_factor * (sample.X[0] - st.nu_hat) - g_factor * st.nu_hat


def bayes_oracle_uniform(
    sample: Sample, spec: ModelSpec, tau2: float, sigma2: float
) -> np.ndarray:
    """Oracle Bayes rule under a flat prior on the common mean:
    X_1 - (sigma2/(tau2 + sigma2))(X_1 - nu_hat)."""
    if not (tau2 > 0.0 and sigma2 > 0.0):
        raise ValueError("tau2 and sigma2 must be positive")
    st = compute_pooled_stats(sample, spec.V, spec.Q)
    w = sigma2 / (tau2 + sigma2)
    return sample.X[0] - w * (sample.X[0] - st.nu_hat)


def bayes_oracle_normal(
    sample: Sample, spec: ModelSpec, tau2: float, gamma2: float, sigma2: float
) -> np.ndarray:
    """Oracle Bayes rule under a centered normal prior on the common mean:
    the flat-prior rule with an extra pull of nu_hat toward 0 by
    sigma2/(gamma2 + tau2 + sigma2)."""
    if not (tau2 > 0.0 and gamma2 > 0.0 and sigma2 > 0.0):
        raise ValueError("tau2, gamma2 and sigma2 must be positive")
    st = compute_pooled_stats(sample, spec.V, spec.Q)
    w1 = sigma2 / (tau2 + sigma2)
    w2 = sigma2 / (gamma2 + tau2 + sigma2)
    return sample.X[0] - w1 * (sample.X[0] - st.nu_hat) - w2 * st.nu_hat


def lincomb_estimate(
    sample: Sample, spec: ModelSpec, d: Sequence[float], phi: ShrinkFunction
) -> np.ndarray:
    """Estimator of the linear combination sum_i d_i mu_i:
    sum_i d_i [X_i - (phi(F, S)/F)(X_i - nu_hat)]."""
    dv = np.asarray(d, dtype=float).reshape(-1)
    if dv.size != spec.k:
        raise ValueError(f"expected {spec.k} weights, got {dv.size}")
    st = compute_pooled_stats(sample, spec.V, spec.Q)
    factor = float(phi(st.F, sample.S)) / st.F if st.F > 0.0 else 0.0
    shrunk = sample.X - factor * (sample.X - st.nu_hat)
    return dv @ shrunk


def estimate(sample: Sample, spec: ModelSpec, config: EstimatorConfig) -> np.ndarray:
    """Evaluate the estimator described by ``config`` on one sample."""
    errors = config.validate(spec)
    if errors:
        raise ValueError("; ".join(errors))
    kind = config.kind
    if kind == "PT":
        return pt_estimate(sample, spec, config.alpha)
    if kind == "JS":
        return js_estimate(sample, spec)
    if kind == "EB":
        return eb_estimate(sample, spec, config.a0)
    if kind == "HB":
        return hb_estimate(
            sample, spec, config.a, config.c, config.L if config.L is not None else 0.0
        )
    if kind == "HEB":
        return heb_estimate(sample, spec, config.a0, config.b0)
    if kind == "LINCOMB":
        return lincomb_estimate(sample, spec, config.d, config.phi)
    if kind == "CLASS1":
        return class1_estimate(sample, spec, config.phi)
    if kind == "CLASS2":
        return class2_estimate(sample, spec, config.phi, config.psi)
    raise ValueError(f"unknown estimator kind {kind!r}")
