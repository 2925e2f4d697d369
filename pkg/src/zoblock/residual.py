"""Stationarity residuals of the smoothed constrained problem.

The residual at x with parameter beta is

    G(x) = beta * (x - P_X[x - grad f_eta(x) / beta])

and vanishes exactly at stationary points of min_X f_eta. A zero residual
makes x a 2*eta-Clarke stationary point of the original problem; a small one
only certifies approximate stationarity of the smoothed problem.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracle import GradientEstimate, smoothed_gradient_reference


@dataclass
class ResidualReport:
    x: np.ndarray
    beta: float
    eta: float
    G: np.ndarray
    norm: float
    grad_se: float
    samples: int
    analytic: bool
    epsilon: float | None = None

    @property
    def certified(self):
        return self.epsilon is not None and self.norm <= self.epsilon

    def summary(self):
        head = f"|G_(eta={self.eta:g}, beta={self.beta:g})(x)| = {self.norm:.6g}"
        if self.analytic:
            head += " (analytic gradient)"
        else:
            head += f" (reference gradient, M={self.samples}, max se={self.grad_se:.3g})"
        if self.epsilon is None:
            return head
        if self.certified:
            return (head + f"\n  <= {self.epsilon:g}: {self.epsilon:g}-stationary for the "
                    f"{self.eta:g}-smoothed problem, hence approximate {2 * self.eta:g}-Clarke stationary")
        return head + f"\n  > {self.epsilon:g}: not certified"

    def as_row(self):
        return {"residual_norm": self.norm, "residual_se": self.grad_se}


def _check_beta(beta):
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")


def residual_map(feasible, x, beta, grad):
    """beta * (x - P_X[x - grad / beta])."""
    _check_beta(beta)
    x = np.asarray(x, dtype=float)
    return beta * (x - feasible.project(x - np.asarray(grad, dtype=float) / beta))


def residual(oracle, feasible, x, eta, beta, grad: GradientEstimate | np.ndarray, epsilon=None) -> ResidualReport:
    """Residual report at x from an analytic or reference gradient."""
    if isinstance(grad, GradientEstimate):
        g, se = grad.g, grad.se
        analytic, samples = grad.analytic, grad.samples
    else:
        g, se, analytic, samples = np.asarray(grad, dtype=float), None, True, 0
    G = residual_map(feasible, x, beta, g)
    grad_se = 0.0 if analytic or se is None else float(np.max(se))
    return ResidualReport(np.array(x, dtype=float), float(beta), float(eta), G, float(np.linalg.norm(G)),
                          grad_se, int(samples), bool(analytic), epsilon)


def residual_tilde(feasible, x, eta, beta, grad, e_tilde):
    """The residual map with grad + e_tilde in place of the true smoothed gradient."""
    return residual_map(feasible, x, beta, np.asarray(grad, dtype=float) + np.asarray(e_tilde, dtype=float))


def check_residual_inequality(feasible, x, eta, beta, grad, e_tilde, atol=1e-9):
    """Verify |G|^2 <= 2|G~|^2 + 2|e~|^2; returns (holds, lhs, rhs)."""
    G = residual_map(feasible, x, beta, grad)
    Gt = residual_tilde(feasible, x, eta, beta, grad, e_tilde)
    e = np.asarray(e_tilde, dtype=float)
    lhs = float(G @ G)
    rhs = float(2 * (Gt @ Gt) + 2 * (e @ e))
    return lhs <= rhs + atol, lhs, rhs


def measure_residual(oracle, feasible, x, eta, beta, M, rng, epsilon=None, use_analytic=True):
    """Residual at x using the analytic smoothed gradient when declared, else an M-sample reference."""
    grad = smoothed_gradient_reference(oracle, x, eta, M, rng, use_analytic=use_analytic)
    return residual(oracle, feasible, x, eta, beta, grad, epsilon)


def reference_samples_for(epsilon, se_per_sample, fraction=0.05, z=4.0):
    """Sample count making z * se <= fraction * epsilon, given the one-sample standard deviation."""
    return int(np.ceil((z * se_per_sample / (fraction * epsilon)) ** 2))
