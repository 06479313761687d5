"""Multivariate logistic regression via Newton/IRLS."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SeparationError(RuntimeError):
    """Perfect separation: the MLE diverges."""


@dataclass(frozen=True)
class LogisticModel:
    """Coefficients beta_0..beta_p (intercept first), their standard
    errors, odds ratios with 95% CIs, and convergence diagnostics."""

    coefficients: np.ndarray
    standard_errors: np.ndarray
    odds_ratios: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    iterations: int
    converged: bool
    log_likelihood: float

    def to_dict(self) -> dict:
        return {
            "coefficients": self.coefficients.tolist(),
            "standard_errors": self.standard_errors.tolist(),
            "odds_ratios": self.odds_ratios.tolist(),
            "ci_lower": self.ci_lower.tolist(),
            "ci_upper": self.ci_upper.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "log_likelihood": self.log_likelihood,
        }


_BETA_DIVERGENCE = 30.0
_RIDGE = 1e-8


def logistic_fit(X, y, max_iter: int = 100, tol: float = 1e-10) -> LogisticModel:
    """Maximize the log-likelihood of logit(P(y=1)) = b0 + X b.

    X is (n, p) without the intercept column (p may be 0 for an
    intercept-only model). Raises SeparationError when the coefficient
    norm diverges (perfectly separated data).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64).ravel()
    n = len(y)
    if X.shape[0] != n:
        raise ValueError("X and y must have the same number of rows")
    if not set(np.unique(y)) <= {0.0, 1.0}:
        raise ValueError("y must be binary 0/1")
    if y.sum() == 0 or y.sum() == n:
        raise ValueError("need at least one observation of each class")
    if X.shape[1] and np.any(np.all(X == 0.0, axis=0)):
        raise ValueError("constant-zero covariate column")

    A = np.column_stack([np.ones(n), X])
    p_dim = A.shape[1]
    beta = np.zeros(p_dim)

    def log_lik(b):
        eta = A @ b
        return float(np.sum(y * eta - np.logaddexp(0.0, eta)))

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = A @ beta
        mu = 1.0 / (1.0 + np.exp(-np.clip(eta, -500, 500)))
        w = mu * (1.0 - mu)
        info = A.T @ (A * w[:, None]) + _RIDGE * np.eye(p_dim)
        grad = A.T @ (y - mu)
        step = np.linalg.solve(info, grad)
        beta = beta + step
        if float(np.max(np.abs(beta))) > _BETA_DIVERGENCE:
            raise SeparationError(
                "coefficient norm diverged; data are (quasi-)separated"
            )
        if float(np.max(np.abs(step))) < tol:
            converged = True
            break

    eta = A @ beta
    mu = 1.0 / (1.0 + np.exp(-np.clip(eta, -500, 500)))
    w = mu * (1.0 - mu)
    info = A.T @ (A * w[:, None]) + _RIDGE * np.eye(p_dim)
    cov = np.linalg.inv(info)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return LogisticModel(
        coefficients=beta,
        standard_errors=se,
        odds_ratios=np.exp(beta),
        ci_lower=np.exp(beta - 1.96 * se),
        ci_upper=np.exp(beta + 1.96 * se),
        iterations=it,
        converged=converged,
        log_likelihood=log_lik(beta),
    )
