"""The canonical k-sample normal model: k independent p-variate draws
X_i ~ N_p(mu_i, sigma^2 V_i) with known SPD scale matrices V_i, together
with an independent chi-square scale statistic S / sigma^2 ~ chi^2_n.

Estimators of mu_1 are judged by the scaled quadratic loss
(d - mu_1)' Q (d - mu_1) / sigma^2 for a known SPD weight matrix Q.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .numerics import symmetrize, validate_spd

__all__ = ["ModelSpec", "Sample", "loss", "sample_draw", "scalar_spec", "validate_spec"]


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Immutable description of the k-sample model.

    Attributes
    ----------
    p : int
        Dimension of each population mean.
    k : int
        Number of populations (>= 2 so that pooling is defined).
    n : int
        Degrees of freedom of the chi-square scale statistic.
    V : tuple of ndarray
        The k known SPD scale matrices, each p x p.
    Q : ndarray
        SPD loss weight matrix, p x p.
    sigma2 : float
        Unknown-in-theory, known-to-the-simulator scale.
    mu : tuple of ndarray
        The k population means, each of length p.
    """

    p: int
    k: int
    n: int
    V: tuple[np.ndarray, ...]
    Q: np.ndarray
    sigma2: float
    mu: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "V", tuple(np.array(v, dtype=float) for v in self.V)
        )
        object.__setattr__(self, "Q", np.array(self.Q, dtype=float))
        object.__setattr__(
            self, "mu", tuple(np.array(m, dtype=float).reshape(-1) for m in self.mu)
        )

    @cached_property
    def mu_stack(self) -> np.ndarray:
        """Means stacked as a (k, p) array."""
        return np.stack(self.mu)

    @cached_property
    def chol_scaled(self) -> np.ndarray:
        """Cholesky factors of sigma^2 V_i, stacked (k, p, p).

        Cached because factorization dominates the per-draw cost otherwise.
        """
        return np.stack(
            [np.linalg.cholesky(self.sigma2 * symmetrize(v)) for v in self.V]
        )

    @cached_property
    def v_inv(self) -> np.ndarray:
        """Inverses of the scale matrices, stacked (k, p, p); used by the
        pooled statistics."""
        eye = np.eye(self.p)
        return np.stack([np.linalg.solve(v, eye) for v in self.V])


@dataclass(frozen=True, eq=False)
class Sample:
    """One draw from the model: the k observation vectors and the scale
    statistic S > 0."""

    X: np.ndarray  # (k, p)
    S: float

    def __post_init__(self):
        object.__setattr__(self, "X", np.array(self.X, dtype=float))
        object.__setattr__(self, "S", float(self.S))


def scalar_spec(
    p: int,
    k: int,
    n: int,
    v_scalars: Sequence[float],
    sigma2: float,
    mu_scalars: Sequence[float],
    q_scalar: float | None = None,
) -> ModelSpec:
    """Convenience constructor for the scalar-matrix case V_i = c_i * I.

    ``mu_scalars`` gives one constant per population; mean i is that
    constant times the all-ones vector.  ``q_scalar`` defaults to
    1 / v_scalars[0], i.e. Q = V_1^{-1}.
    """
    eye = np.eye(p)
    if q_scalar is None:
        q_scalar = 1.0 / float(v_scalars[0])
    return ModelSpec(
        p=p,
        k=k,
        n=n,
        V=tuple(float(c) * eye for c in v_scalars),
        Q=float(q_scalar) * eye,
        sigma2=float(sigma2),
        mu=tuple(float(c) * np.ones(p) for c in mu_scalars),
    )


def validate_spec(spec: ModelSpec) -> list[str]:
    """Check every model invariant; returns a list of violation messages
    (empty when the spec is valid).

    Beyond the field-level invariants this confirms that V_1 - A is
    positive definite, where A is the pooled scale matrix; that condition
    underpins the shrinkage risk bounds downstream.
    """
    errors: list[str] = []
    if spec.p < 1:
        errors.append(f"p: dimension must be >= 1, got {spec.p}")
    if spec.k < 2:
        errors.append(f"k: at least two populations are required, got {spec.k}")
    if spec.n < 1:
        errors.append(f"n: chi-square degrees of freedom must be >= 1, got {spec.n}")
    if not spec.sigma2 > 0.0:
        errors.append(f"sigma2: must be positive, got {spec.sigma2}")
    if len(spec.V) != spec.k:
        errors.append(f"V: expected {spec.k} matrices, got {len(spec.V)}")
    if len(spec.mu) != spec.k:
        errors.append(f"mu: expected {spec.k} vectors, got {len(spec.mu)}")

    v_ok = []
    for i, v in enumerate(spec.V):
        if v.shape != (spec.p, spec.p):
            errors.append(f"V[{i}]: expected shape ({spec.p}, {spec.p}), got {v.shape}")
            continue
        try:
            v_ok.append(validate_spd(v, f"V[{i}]"))
        except ValueError as exc:
            errors.append(str(exc))
    if spec.Q.shape != (spec.p, spec.p):
        errors.append(f"Q: expected shape ({spec.p}, {spec.p}), got {spec.Q.shape}")
    else:
        try:
            validate_spd(spec.Q, "Q")
        except ValueError as exc:
            errors.append(str(exc))
    for i, m in enumerate(spec.mu):
        if m.shape != (spec.p,):
            errors.append(f"mu[{i}]: expected length {spec.p}, got shape {m.shape}")

    if not errors and spec.k >= 2 and len(v_ok) == spec.k:
        eye = np.eye(spec.p)
        precision_sum = sum(np.linalg.solve(v, eye) for v in v_ok)
        pooled = np.linalg.solve(precision_sum, eye)
        try:
            validate_spd(spec.V[0] - 0.5 * (pooled + pooled.T), "V[0] - A")
        except ValueError:
            errors.append("V: V[0] - A is not positive definite")
    return errors


def sample_draw(spec: ModelSpec, rng: np.random.Generator) -> Sample:
    """Draw one sample: X_i = mu_i + L_i z_i with L_i the cached Cholesky
    factor of sigma^2 V_i, and S = sigma^2 * Gamma(n/2, scale=2).

    The gamma draw is exactly a sigma^2-scaled chi-square with n degrees
    of freedom but costs O(1) regardless of n.
    """
    z = rng.standard_normal((spec.k, spec.p))
    x = spec.mu_stack + np.einsum("kij,kj->ki", spec.chol_scaled, z)
    s = spec.sigma2 * rng.gamma(0.5 * spec.n, 2.0)
    return Sample(X=x, S=float(s))


def loss(delta: np.ndarray, mu1: np.ndarray, sigma2: float, Q: np.ndarray) -> float:
    """Scaled quadratic loss (delta - mu1)' Q (delta - mu1) / sigma2."""
    delta = np.asarray(delta, dtype=float).reshape(-1)
    mu1 = np.asarray(mu1, dtype=float).reshape(-1)
    Q = np.asarray(Q, dtype=float)
    if delta.shape != mu1.shape or Q.shape != (delta.size, delta.size):
        raise ValueError(
            f"dimension mismatch: delta {delta.shape}, mu1 {mu1.shape}, Q {Q.shape}"
        )
    if not sigma2 > 0.0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    diff = delta - mu1
    return float(diff @ Q @ diff) / sigma2
