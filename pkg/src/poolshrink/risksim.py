"""Monte Carlo risk and PRIAL engine, benchmark presets, and samplers for
the Stein / chi-square integration-by-parts identities.

Determinism contract: replication r draws from an RNG stream derived
deterministically from (seed, r), chunks have a fixed size independent of
the worker count, and partial sums are reduced in chunk order.  A plan
therefore produces bit-identical reports for any degree of parallelism.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, Sequence

import numpy as np

from .estimators import (
    EstimatorConfig,
    estimate,
    hb_small_f_factor,
    phi_hb,
    pt_threshold,
)
from .minimax import optimal_eb_constant, optimal_heb_constants, solve_hb_a
from .model import ModelSpec, sample_draw, scalar_spec, validate_spec
from .numerics import trace_product

__all__ = [
    "EstimatorRisk",
    "IdentityCheck",
    "RiskReport",
    "SimPlan",
    "SimulationError",
    "TABLE1_MEANS",
    "chisq_identity_check",
    "simulate_risk",
    "stein_identity_check",
    "table1_preset",
]

# Fixed chunk size: results must not depend on how chunks map to workers.
_CHUNK_SIZE = 2048


class SimulationError(RuntimeError):
    """An estimator failed during simulation; message carries the
    replication index and seed."""


@dataclass(frozen=True, eq=False)
class SimPlan:
    """A full simulation request: model, estimators, replication count,
    seed, and whether all estimators see the same draws."""

    spec: ModelSpec
    estimators: tuple[EstimatorConfig, ...]
    replications: int
    seed: int
    common_random_numbers: bool = True

    def __post_init__(self):
        object.__setattr__(self, "estimators", tuple(self.estimators))

    def validate(self) -> list[str]:
        errors = validate_spec(self.spec)
        if self.replications < 1:
            errors.append(f"replications: must be >= 1, got {self.replications}")
        for idx, cfg in enumerate(self.estimators):
            for msg in cfg.validate(self.spec):
                errors.append(f"estimators[{idx}] ({cfg.name}): {msg}")
        return errors


@dataclass(frozen=True)
class EstimatorRisk:
    """Estimated risk and PRIAL of one estimator."""

    name: str
    risk: float
    std_error: float
    prial: float
    prial_std_error: float


@dataclass(frozen=True)
class RiskReport:
    """Risk estimates for every estimator in a plan plus the unshrunk
    baseline X_1, whose exact risk is tr(V_1 Q)."""

    baseline_risk: float
    baseline_std_error: float
    trace_v1q: float
    replications: int
    seed: int
    estimators: tuple[EstimatorRisk, ...]


# ---------------------------------------------------------------------------
# Deterministic replication streams
# ---------------------------------------------------------------------------


def replication_rng(seed: int, rep: int, substream: int | None = None) -> np.random.Generator:
    """Independent generator for one replication, derived from (seed, rep).

    ``substream`` separates per-estimator draws when common random numbers
    are disabled.
    """
    key = (rep,) if substream is None else (rep, substream)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=key)))


def _draw_chunk(
    spec: ModelSpec, seed: int, start: int, stop: int, substream: int | None
) -> tuple[np.ndarray, np.ndarray]:
    """Draws for replications [start, stop): X of shape (B, k, p), S of (B,)."""
    nrep = stop - start
    xs = np.empty((nrep, spec.k, spec.p))
    ss = np.empty(nrep)
    chol = spec.chol_scaled
    mu = spec.mu_stack
    half_n = 0.5 * spec.n
    for i in range(nrep):
        rng = replication_rng(seed, start + i, substream)
        z = rng.standard_normal((spec.k, spec.p))
        xs[i] = mu + np.einsum("kij,kj->ki", chol, z)
        ss[i] = spec.sigma2 * rng.gamma(half_n, 2.0)
    return xs, ss


# ---------------------------------------------------------------------------
# Vectorized evaluation over a chunk of replications
# ---------------------------------------------------------------------------


def _batch_stats(spec: ModelSpec, xs: np.ndarray, ss: np.ndarray):
    """Pooled mean and the F, G statistics for a whole chunk at once."""
    winv = spec.v_inv
    prec = winv.sum(axis=0)
    prec = 0.5 * (prec + prec.T)
    a = np.linalg.solve(prec, np.eye(spec.p))
    a = 0.5 * (a + a.T)
    weighted = np.einsum("kij,bkj->bi", winv, xs)
    nu = weighted @ a
    dev = xs - nu[:, None, :]
    quad = np.einsum("bki,kij,bkj->b", dev, winv, dev)
    f_stat = quad / ss
    g_stat = np.einsum("bi,ij,bj->b", nu, prec, nu) / ss
    return nu, f_stat, g_stat


def _batch_estimate(
    cfg: EstimatorConfig,
    spec: ModelSpec,
    xs: np.ndarray,
    ss: np.ndarray,
    nu: np.ndarray,
    f_stat: np.ndarray,
    g_stat: np.ndarray,
) -> np.ndarray:
    """Vectorized estimator evaluation; one row per replication.

    Mirrors the per-sample functions in ``estimators``; agreement between
    the two paths is covered by tests.
    """
    kind = cfg.kind
    x1 = xs[:, 0, :]
    if kind == "PT":
        thr = pt_threshold(spec.p, spec.k, spec.n, cfg.alpha)
        return np.where((f_stat > thr)[:, None], x1, nu)
    if kind == "JS":
        norm2 = np.einsum("bi,ij,bj->b", x1, spec.v_inv[0], x1)
        coef = np.zeros_like(norm2)
        okay = norm2 > 0.0
        coef[okay] = (spec.p - 2.0) / (spec.n + 2.0) * ss[okay] / norm2[okay]
        return x1 - coef[:, None] * x1
    if kind == "EB":
        factor = np.ones_like(f_stat)
        pos = f_stat > 0.0
        factor[pos] = np.minimum(cfg.a0 / f_stat[pos], 1.0)
        return x1 - factor[:, None] * (x1 - nu)
    if kind == "HB":
        ell = cfg.L if cfg.L is not None else 0.0
        factor = np.full_like(f_stat, hb_small_f_factor(spec.p, spec.k, cfg.a))
        pos = f_stat > 0.0
        phi_vals = phi_hb(f_stat[pos], ss[pos], spec.p, spec.k, spec.n, cfg.a, cfg.c, ell)
        factor[pos] = phi_vals / f_stat[pos]
        return x1 - factor[:, None] * (x1 - nu)
    if kind == "HEB":
        f_factor = np.ones_like(f_stat)
        pos = f_stat > 0.0
        f_factor[pos] = np.minimum(cfg.a0 / f_stat[pos], 1.0)
        g_factor = np.ones_like(g_stat)
        pos = g_stat > 0.0
        g_factor[pos] = np.minimum(cfg.b0 / g_stat[pos], 1.0)
        return x1 - f_factor[:, None] * (x1 - nu) - g_factor[:, None] * nu
    if kind in ("CLASS1", "CLASS2", "LINCOMB"):
        factor = np.zeros_like(f_stat)
        pos = f_stat > 0.0
        phi_vals = np.broadcast_to(
            np.asarray(cfg.phi(f_stat[pos], ss[pos]), dtype=float), f_stat[pos].shape
        )
        factor[pos] = phi_vals / f_stat[pos]
        if kind == "LINCOMB":
            dv = np.asarray(cfg.d, dtype=float)
            shrunk = xs - factor[:, None, None] * (xs - nu[:, None, :])
            return np.einsum("k,bki->bi", dv, shrunk)
        est = x1 - factor[:, None] * (x1 - nu)
        if kind == "CLASS2":
            g_factor = np.zeros_like(g_stat)
            pos = g_stat > 0.0
            psi_vals = np.broadcast_to(
                np.asarray(cfg.psi(g_stat[pos], ss[pos]), dtype=float), g_stat[pos].shape
            )
            g_factor[pos] = psi_vals / g_stat[pos]
            est = est - g_factor[:, None] * nu
        return est
    raise ValueError(f"unknown estimator kind {kind!r}")


def _batch_loss(est: np.ndarray, spec: ModelSpec) -> np.ndarray:
    diff = est - spec.mu[0]
    return np.einsum("bi,ij,bj->b", diff, spec.Q, diff) / spec.sigma2


def _locate_failure(plan: SimPlan, cfg: EstimatorConfig, start: int, stop: int, substream) -> int:
    """Re-run a failed chunk one replication at a time to name the culprit."""
    for rep in range(start, stop):
        rng = replication_rng(plan.seed, rep, substream)
        sample = sample_draw(plan.spec, rng)
        try:
            val = estimate(sample, plan.spec, cfg)
            if not np.all(np.isfinite(val)):
                return rep
        except Exception:
            return rep
    return start


def _chunk_sums(plan: SimPlan, chunk: tuple[int, int]) -> np.ndarray:
    """Loss accumulators for replications [start, stop).

    Layout: [count, sum_l1, sumsq_l1] + per estimator [sum_l, sumsq_l,
    sum_d, sumsq_d] where d is the per-replication loss difference
    l1 - l_est (paired draws under common random numbers).
    """
    start, stop = chunk
    spec = plan.spec
    n_est = len(plan.estimators)
    out = np.zeros(3 + 4 * n_est)
    out[0] = stop - start

    crn = plan.common_random_numbers
    xs, ss = _draw_chunk(spec, plan.seed, start, stop, None if crn else 0)
    base_loss = _batch_loss(xs[:, 0, :], spec)
    out[1] = base_loss.sum()
    out[2] = (base_loss**2).sum()
    if crn:
        nu, f_stat, g_stat = _batch_stats(spec, xs, ss)

    for idx, cfg in enumerate(plan.estimators):
        substream = None if crn else idx + 1
        try:
            if crn:
                est = _batch_estimate(cfg, spec, xs, ss, nu, f_stat, g_stat)
                pair_base = base_loss
            else:
                xs_e, ss_e = _draw_chunk(spec, plan.seed, start, stop, substream)
                nu_e, f_e, g_e = _batch_stats(spec, xs_e, ss_e)
                est = _batch_estimate(cfg, spec, xs_e, ss_e, nu_e, f_e, g_e)
                pair_base = base_loss
            est_loss = _batch_loss(est, spec)
            if not np.all(np.isfinite(est_loss)):
                raise FloatingPointError("non-finite loss")
        except Exception as exc:
            rep = _locate_failure(plan, cfg, start, stop, substream)
            raise SimulationError(
                f"estimator {cfg.name} failed at replication {rep} (seed {plan.seed}): {exc}"
            ) from exc
        diff = pair_base - est_loss
        base = 3 + 4 * idx
        out[base] = est_loss.sum()
        out[base + 1] = (est_loss**2).sum()
        out[base + 2] = diff.sum()
        out[base + 3] = (diff**2).sum()
    return out


def _mean_se(total: float, total_sq: float, count: float) -> tuple[float, float]:
    mean = total / count
    if count < 2:
        return mean, float("nan")
    var = max((total_sq - total * total / count) / (count - 1.0), 0.0)
    return mean, float(np.sqrt(var / count))


def simulate_risk(plan: SimPlan, workers: int = 1) -> RiskReport:
    """Estimate the risk of every estimator in the plan by Monte Carlo.

    Evaluates all estimators on the same draws when common random numbers
    are enabled (the default), and reports PRIAL relative to the unshrunk
    X_1 with a standard error computed from the paired per-replication
    loss differences.  The report is bit-identical for any ``workers``.
    """
    errors = plan.validate()
    if errors:
        raise ValueError("invalid simulation plan: " + "; ".join(errors))
    chunks = [
        (start, min(start + _CHUNK_SIZE, plan.replications))
        for start in range(0, plan.replications, _CHUNK_SIZE)
    ]
    worker = partial(_chunk_sums, plan)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(worker, chunks))
    else:
        partials = [worker(chunk) for chunk in chunks]

    sums = np.zeros_like(partials[0])
    for part in partials:  # fixed chunk order keeps the reduction deterministic
        sums += part

    count = sums[0]
    base_risk, base_se = _mean_se(sums[1], sums[2], count)
    reports = []
    for idx, cfg in enumerate(plan.estimators):
        base = 3 + 4 * idx
        risk, se = _mean_se(sums[base], sums[base + 1], count)
        d_mean, d_se = _mean_se(sums[base + 2], sums[base + 3], count)
        prial = 100.0 * d_mean / base_risk
        prial_se = 100.0 * d_se / base_risk
        reports.append(
            EstimatorRisk(
                name=cfg.name,
                risk=risk,
                std_error=se,
                prial=prial,
                prial_std_error=prial_se,
            )
        )
    return RiskReport(
        baseline_risk=base_risk,
        baseline_std_error=base_se,
        trace_v1q=trace_product(plan.spec.V[0], plan.spec.Q),
        replications=plan.replications,
        seed=plan.seed,
        estimators=tuple(reports),
    )


# ---------------------------------------------------------------------------
# Benchmark preset
# ---------------------------------------------------------------------------

# Mean constants for the 11 benchmark configurations: mean i is the constant
# times the all-ones vector.  The first four are equal-means cases, the next
# three have means summing to zero, and the last four are unbalanced.
TABLE1_MEANS: tuple[tuple[float, ...], ...] = (
    (0.0, 0.0, 0.0, 0.0, 0.0),
    (1.0, 1.0, 1.0, 1.0, 1.0),
    (2.0, 2.0, 2.0, 2.0, 2.0),
    (3.0, 3.0, 3.0, 3.0, 3.0),
    (-0.4, -0.2, 0.0, 0.2, 0.4),
    (2.0, -0.5, -0.5, -0.5, -0.5),
    (4.0, -1.0, -1.0, -1.0, -1.0),
    (1.2, 1.4, 1.6, 1.8, 2.0),
    (0.2, 2.0, 2.0, 2.0, 2.0),
    (0.4, 4.0, 4.0, 4.0, 4.0),
    (2.0, 0.0, 0.0, 0.0, 0.0),
)


def _mean_label(means: Sequence[float]) -> str:
    return "(" + ",".join(format(m, "g") for m in means) + ")"


def preset_estimators(spec: ModelSpec, alpha: float = 0.05) -> tuple[EstimatorConfig, ...]:
    """The five benchmark estimators with bound-optimal constants derived
    from the model: PT(alpha), JS, EB, HB (c=1, L=0), HEB."""
    a0_eb = optimal_eb_constant(spec)
    a0_heb, b0_heb = optimal_heb_constants(spec)
    a_hb = solve_hb_a(spec, c=1.0)
    return (
        EstimatorConfig(kind="PT", alpha=alpha),
        EstimatorConfig(kind="JS"),
        EstimatorConfig(kind="EB", a0=a0_eb),
        EstimatorConfig(kind="HB", a=a_hb, c=1.0, L=0.0),
        EstimatorConfig(kind="HEB", a0=a0_heb, b0=b0_heb),
    )


def table1_preset(
    replications: int = 100_000,
    seed: int = 0,
    alpha: float = 0.05,
) -> list[tuple[str, SimPlan]]:
    """The benchmark experiment: p = k = 5, n = 20, V_i = 0.1 i I,
    Q = V_1^{-1}, variance scale 4, and the 11 mean configurations of
    ``TABLE1_MEANS``, each run with the five preset estimators.

    The variance scale is the square of the nominal scale parameter 2;
    the squared-scale convention is the one under which the benchmark's
    published PRIAL values are reproducible (the James-Stein column pins
    the mean-to-noise ratio through its closed-form risk).

    All plans share the same seed, so translation-equivariant estimators
    produce identical PRIAL values across mean configurations that differ
    by a common shift.
    """
    plans = []
    for means in TABLE1_MEANS:
        spec = scalar_spec(
            p=5,
            k=5,
            n=20,
            v_scalars=[0.1 * i for i in range(1, 6)],
            sigma2=4.0,
            mu_scalars=means,
        )
        plan = SimPlan(
            spec=spec,
            estimators=preset_estimators(spec, alpha=alpha),
            replications=replications,
            seed=seed,
        )
        plans.append((_mean_label(means), plan))
    return plans


# ---------------------------------------------------------------------------
# Integration-by-parts identity validators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IdentityCheck:
    """Monte Carlo estimates of both sides of an identity and the standard
    error of their paired difference."""

    lhs: float
    rhs: float
    std_error: float

    @property
    def difference(self) -> float:
        return self.lhs - self.rhs

    def agrees(self, n_sigma: float = 4.0) -> bool:
        return abs(self.difference) <= n_sigma * self.std_error


_ID_CHUNK = 50_000


def stein_identity_check(
    h: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    mu: np.ndarray,
    sigma: np.ndarray,
    replications: int = 100_000,
    seed: int = 0,
) -> IdentityCheck:
    """Monte Carlo check of the Stein identity for Y ~ N_p(mu, Sigma):

        E[(Y - mu)' h(Y)] = E[tr(Sigma grad h(Y)')].

    ``h`` maps (B, p) -> (B, p); ``jacobian`` maps (B, p) -> (B, p, p)
    with entry [b, i, j] = d h_i / d y_j.
    """
    mu = np.asarray(mu, dtype=float).reshape(-1)
    sigma = np.asarray(sigma, dtype=float)
    chol = np.linalg.cholesky(0.5 * (sigma + sigma.T))
    rng = np.random.default_rng(seed)
    sums = np.zeros(5)  # count, sum_lhs, sum_rhs, sum_d, sumsq_d
    remaining = replications
    while remaining > 0:
        block = min(_ID_CHUNK, remaining)
        z = rng.standard_normal((block, mu.size))
        y = mu + z @ chol.T
        hy = np.asarray(h(y), dtype=float)
        jac = np.asarray(jacobian(y), dtype=float)
        lhs = np.einsum("bi,bi->b", y - mu, hy)
        rhs = np.einsum("ij,bij->b", sigma, jac)
        diff = lhs - rhs
        sums += [block, lhs.sum(), rhs.sum(), diff.sum(), (diff**2).sum()]
        remaining -= block
    count = sums[0]
    _, d_se = _mean_se(sums[3], sums[4], count)
    return IdentityCheck(lhs=sums[1] / count, rhs=sums[2] / count, std_error=d_se)


def chisq_identity_check(
    g: Callable[[np.ndarray], np.ndarray],
    g_prime: Callable[[np.ndarray], np.ndarray],
    n: int,
    sigma2: float,
    replications: int = 100_000,
    seed: int = 0,
) -> IdentityCheck:
    """Monte Carlo check of the chi-square identity for S/sigma^2 ~ chi^2_n:

        E[S g(S)] = sigma^2 E[n g(S) + 2 S g'(S)].
    """
    rng = np.random.default_rng(seed)
    sums = np.zeros(5)
    remaining = replications
    while remaining > 0:
        block = min(_ID_CHUNK, remaining)
        s = sigma2 * rng.gamma(0.5 * n, 2.0, size=block)
        gs = np.asarray(g(s), dtype=float)
        lhs = s * gs
        rhs = sigma2 * (n * gs + 2.0 * s * np.asarray(g_prime(s), dtype=float))
        diff = lhs - rhs
        sums += [block, lhs.sum(), rhs.sum(), diff.sum(), (diff**2).sum()]
        remaining -= block
    count = sums[0]
    _, d_se = _mean_se(sums[3], sums[4], count)
    return IdentityCheck(lhs=sums[1] / count, rhs=sums[2] / count, std_error=d_se)
