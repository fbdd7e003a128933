"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual is written over 2n variables beta = (alpha, alpha*) with signs
s = (+1, ..., -1, ...)::

    min  1/2 beta' Q beta + p' beta
    s.t. s' beta = 0,  0 <= beta <= C,
    Q_tu = s_t s_u K(x_t, x_u),  p = (eps - y, eps + y)

and solved by sequential minimal optimization with second-order working
set selection (Fan, Chen & Lin 2005).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericalError
from ..transform import FeatureMatrix
from .base import DEFAULTS, TrainedModel
from .knn import squared_distances

TAU = 1e-12


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * squared_distances(A, B))


def scale_gamma(X: np.ndarray) -> float:
    var = X.var()
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


@dataclass(frozen=True)
class SmoResult:
    beta: np.ndarray
    grad: np.ndarray
    bias: float
    iterations: int
    violation: float


def dual_objective(beta: np.ndarray, K: np.ndarray, y: np.ndarray, epsilon: float) -> float:
    n = len(y)
    coef = beta[:n] - beta[n:]
    return 0.5 * coef @ K @ coef + epsilon * beta.sum() - y @ coef


def smo_solve(K: np.ndarray, y: np.ndarray, C: float, epsilon: float, tol: float = 1e-4,
              max_iter: int = 1_000_000) -> SmoResult:
    n = len(y)
    s = np.concatenate([np.ones(n), -np.ones(n)])
    beta = np.zeros(2 * n)
    grad = np.concatenate([epsilon - y, epsilon + y])
    diag = np.diag(K)

    it = 0
    while True:
        minus_sg = -s * grad
        up = ((s > 0) & (beta < C)) | ((s < 0) & (beta > 0))
        low = ((s > 0) & (beta > 0)) | ((s < 0) & (beta < C))
        if not up.any() or not low.any():
            violation = 0.0
            break
        cand = np.where(up, minus_sg, -np.inf)
        i = int(np.argmax(cand))
        m_up = cand[i]
        m_low = np.min(np.where(low, minus_sg, np.inf))
        violation = m_up - m_low
        if violation <= tol:
            break
        if it >= max_iter:
            raise NumericalError(f"SMO did not converge in {max_iter} iterations; "
                                 f"max KKT violation {violation:.3g}")
        # Second-order choice of j among violating low-set members.
        ii = i % n
        b = m_up - minus_sg
        ok = low & (b > 0)
        idx = np.flatnonzero(ok)
        jj_all = idx % n
        a = diag[ii] + diag[jj_all] - 2.0 * K[ii, jj_all]
        a = np.where(a > 0, a, TAU)
        j = int(idx[np.argmin(-(b[idx] ** 2) / a)])
        jj = j % n
        a_ij = max(diag[ii] + diag[jj] - 2.0 * K[ii, jj], TAU)

        # Move beta_i by s_i t and beta_j by -s_j t, keeping s'beta fixed.
        t = b[j] / a_ij
        t = min(t, C - beta[i] if s[i] > 0 else beta[i])
        t = min(t, beta[j] if s[j] > 0 else C - beta[j])
        beta[i] += s[i] * t
        beta[j] -= s[j] * t
        # Snap to bounds to avoid drift from the clipping arithmetic.
        for k in (i, j):
            if beta[k] < 1e-14 * C:
                beta[k] = 0.0
            elif beta[k] > C * (1 - 1e-14):
                beta[k] = C
        col = K[:, ii] - K[:, jj]
        grad += t * s * np.concatenate([col, col])
        it += 1

    return SmoResult(beta, grad, _bias(beta, grad, s, C), it, float(violation))


def _bias(beta, grad, s, C) -> float:
    sg = s * grad
    at_upper = beta >= C
    at_lower = beta <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        rho = sg[free].mean()
    else:
        ub_mask = (at_upper & (s < 0)) | (at_lower & (s > 0))
        lb_mask = (at_upper & (s > 0)) | (at_lower & (s < 0))
        ub = sg[ub_mask].min() if ub_mask.any() else np.inf
        lb = sg[lb_mask].max() if lb_mask.any() else -np.inf
        rho = 0.5 * (ub + lb)
    return float(-rho)


@dataclass(frozen=True, eq=False)
class SvrModel(TrainedModel):
    names: tuple
    hyperparams: dict
    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    gamma: float
    violation: float = 0.0

    family = "svr"

    def _predict(self, X):
        if self.dual_coefs.size == 0:
            return np.full(X.shape[0], self.bias)
        return rbf_kernel(X, self.support_vectors, self.gamma) @ self.dual_coefs + self.bias

    def _state(self):
        return {"support_vectors": self.support_vectors, "dual_coefs": self.dual_coefs,
                "bias": self.bias, "gamma": self.gamma, "violation": self.violation}

    @classmethod
    def _from_state(cls, names, hp, st):
        return cls(names, hp, st["support_vectors"], st["dual_coefs"], st["bias"], st["gamma"],
                   st["violation"])


def fit_svr(m: FeatureMatrix, C: float = 1.0, epsilon: float = 0.1, gamma="scale", tol: float = 1e-4,
            max_iter: int = 1_000_000, return_solution: bool = False):
    hp = {**DEFAULTS["svr"], "C": C, "epsilon": epsilon, "gamma": gamma, "tol": tol, "max_iter": max_iter}
    if not C > 0:
        raise ConfigError("C must be > 0")
    if epsilon < 0:
        raise ConfigError("epsilon must be >= 0")
    X, y = m.values, m.require_target()
    g = scale_gamma(X) if gamma == "scale" else float(gamma)
    if not g > 0:
        raise ConfigError("gamma must be > 0")
    K = rbf_kernel(X, X, g)
    sol = smo_solve(K, y, float(C), float(epsilon), tol, int(max_iter))
    n = len(y)
    alpha, alpha_star = sol.beta[:n].copy(), sol.beta[n:].copy()
    # alpha_i * alpha*_i = 0 at any optimum with eps > 0; remove round-off overlap.
    overlap = np.minimum(alpha, alpha_star)
    alpha -= overlap
    alpha_star -= overlap
    coef = alpha - alpha_star
    sv = np.flatnonzero(coef != 0)
    model = SvrModel(m.names, hp, X[sv].copy(), coef[sv], sol.bias, g, sol.violation)
    if return_solution:
        return model, sol, K
    return model
