"""Proximal operators for the functions used by the solvers.

A ProxFn bundles a function value with its proximal map
prox(tau, v) = argmin_u  f(u) + ||u - v||^2 / (2 tau), tau > 0.
Dual updates always go through conjugate_prox, which derives the
conjugate's prox from the primal one via the Moreau identity, so there
is a single source of truth per function.
"""

import numpy as np

from . import linops
from .errors import ConstructionError, ParameterError


class ProxFn:
    """Function with an exact proximal map.

    Parameters
    ----------
    value : callable
        Maps a point to a float (np.inf allowed for indicators).
    prox_impl : callable
        Maps (tau, v) to the proximal point.
    is_indicator : bool
        True when the function only takes values {0, inf}; solvers use
        this to produce feasible iterates before evaluating objectives.
    """

    def __init__(self, value, prox_impl, is_indicator=False, label=""):
        self._value = value
        self._prox = prox_impl
        self.is_indicator = is_indicator
        self.label = label

    def value(self, x):
        if self._value is None:
            raise ParameterError(
                f"{self.label or 'prox'}: no closed-form value available")
        return float(self._value(x))

    def prox(self, tau, v):
        tau = float(tau)
        if not np.isfinite(tau) or tau <= 0.0:
            raise ParameterError(f"{self.label or 'prox'}: step must be positive, got {tau}")
        return self._prox(tau, v)

    def __repr__(self):
        return f"ProxFn({self.label or 'anonymous'})"


def prox_zero():
    """The zero function; its prox is the identity."""
    return ProxFn(lambda x: 0.0, lambda tau, v: v, label="zero")


def prox_sq_l2(b):
    """f(x) = 0.5 ||x - b||^2 with prox (v + tau b) / (1 + tau)."""
    b = np.asarray(b, dtype=float)

    def value(x):
        d = np.asarray(x) - b
        return 0.5 * float(np.vdot(d, d).real)

    return ProxFn(value, lambda tau, v: (v + tau * b) / (1.0 + tau), label="sq_l2")


def prox_l1(lam=1.0):
    """f(x) = lam * sum |x_i| with the soft-threshold prox."""
    lam = float(lam)
    if lam < 0:
        raise ParameterError("prox_l1: weight must be nonnegative")

    def prox_impl(tau, v):
        t = tau * lam
        return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)

    return ProxFn(lambda x: lam * float(np.abs(x).sum()), prox_impl, label="l1")


def prox_l21(lam=1.0):
    """Group norm lam * sum_p ||x[:, p]|| over axis 0, with group shrinkage."""
    lam = float(lam)
    if lam < 0:
        raise ParameterError("prox_l21: weight must be nonnegative")

    def value(x):
        return lam * float(np.sqrt((np.asarray(x) ** 2).sum(axis=0)).sum())

    def prox_impl(tau, v):
        nrm = np.sqrt((v ** 2).sum(axis=0))
        scale = np.maximum(0.0, 1.0 - tau * lam / np.maximum(nrm, 1e-300))
        return v * scale

    return ProxFn(value, prox_impl, label="l21")


def project_ball(b, eps):
    """Indicator of the closed ball ||x - b|| <= eps; prox is the projection.

    The projection ignores tau. eps = 0 pins the point to b. Feasibility in
    value() allows a 1e-9 relative slack so projected points never read as
    infeasible through roundoff.
    """
    b = np.asarray(b)
    eps = float(eps)
    if eps < 0:
        raise ParameterError("project_ball: radius must be nonnegative")
    slack = 1e-9 * (1.0 + eps)

    def value(x):
        return 0.0 if linops.norm(np.asarray(x) - b) <= eps + slack else np.inf

    def prox_impl(tau, v):
        d = v - b
        nd = linops.norm(d)
        if nd <= eps or nd == 0.0:
            return v.copy() if hasattr(v, "copy") else v
        return b + d * (eps / nd)

    return ProxFn(value, prox_impl, is_indicator=True, label="ball")


def conjugate_prox(p):
    """ProxFn of the convex conjugate, via the Moreau identity.

    prox_{tau f*}(v) = v - tau * prox_{f / tau}(v / tau). The conjugate's
    value is not available in closed form here; solvers only need its prox.
    """

    def prox_impl(tau, v):
        return v - tau * p.prox(1.0 / tau, v * (1.0 / tau))

    return ProxFn(None, prox_impl, label=f"conj({p.label})")


def prox_composed(p, a, alpha, probes=8, tol=1e-8, seed=0):
    """ProxFn of g(x) = p(A x) for an operator with A A* = alpha I.

    The row identity is verified on random probes at construction and a
    ConstructionError is raised when it fails, because the prox formula
    prox(tau, x) = x + (1/alpha) A*(prox_{alpha tau} p (Ax) - Ax)
    is only exact under it.
    """
    alpha = float(alpha)
    if alpha <= 0:
        raise ParameterError("prox_composed: alpha must be positive")
    rng = np.random.default_rng(seed)
    for _ in range(probes):
        u = a.cod.random(rng)
        gap = linops.norm(a.apply(a.adjoint(u)) - alpha * u)
        if gap > tol * alpha * max(1.0, linops.norm(u)):
            raise ConstructionError(
                f"prox_composed: A A* != {alpha} I (probe residual {gap:.2e})")

    def value(x):
        return p.value(a.apply(x))

    def prox_impl(tau, x):
        ax = a.apply(x)
        inner = p.prox(alpha * tau, ax) - ax
        return x + (1.0 / alpha) * a.adjoint(inner)

    return ProxFn(value, prox_impl, is_indicator=p.is_indicator,
                  label=f"{p.label}oA")
