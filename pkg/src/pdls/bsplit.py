"""Complementary operator splitting.

Given A and a step parameter theta with theta <= 1/||A||^2, build an
operator B satisfying A A* + B B* = theta^{-1} I on the codomain of A.
The pair (A, B) is what the reflected-splitting solvers consume; the
identity is verified on random probes at construction time and the
worst residual is stored in the pair's report.
"""

from dataclasses import dataclass, field

import numpy as np

from . import linops
from .errors import ConstructionError, DimensionError, ParameterError, ResourceError

DENSE_DIM_GUARD = 20000
_PROBES = 20
_PROBE_TOL = 1e-6


@dataclass
class SplitPair:
    """Operator pair with A A* + B B* = theta^{-1} I, plus a build report."""

    a: linops.LinOp
    b: linops.LinOp
    theta: float
    report: dict = field(default_factory=dict)


def default_theta(a, iters=200, seed=0):
    """Step parameter 0.9 / ||A||^2 from a power-iteration norm estimate."""
    nrm = linops.op_norm_estimate(a, iters=iters, seed=seed)
    if nrm == 0.0:
        raise ParameterError("default_theta: operator norm estimate is zero")
    return 0.9 / nrm ** 2


def _verify_identity(pair, seed=101):
    rng = np.random.default_rng(seed)
    inv_theta = 1.0 / pair.theta
    worst = 0.0
    for _ in range(_PROBES):
        y = pair.a.cod.random(rng)
        lhs = pair.a.apply(pair.a.adjoint(y)) + pair.b.apply(pair.b.adjoint(y))
        gap = linops.norm(lhs - inv_theta * y)
        worst = max(worst, gap / max(1.0, inv_theta * linops.norm(y)))
    pair.report["max_identity_residual"] = worst
    pair.report["probes"] = _PROBES
    if worst > _PROBE_TOL:
        raise ConstructionError(
            f"splitting identity failed: probe residual {worst:.3e} > {_PROBE_TOL}")
    return pair


def build_dense_B(a, theta, max_dense_dim=DENSE_DIM_GUARD, allow_large=False):
    """Dense Cholesky complement B = chol(theta^{-1} I - A A*).

    Works for any A with a real codomain of moderate size: A A* is
    densified column by column, so memory grows with the square of the
    codomain dimension. Codomains above max_dense_dim are refused unless
    allow_large is set.

    Returns a SplitPair whose B maps a flat real vector (length = codomain
    size) onto the codomain of A.
    """
    if a.cod.is_block or a.cod.kind != "f":
        raise DimensionError("build_dense_B needs a real, non-block codomain")
    theta = float(theta)
    if theta <= 0:
        raise ParameterError("theta must be positive")
    nrm = linops.op_norm_estimate(a, iters=200, seed=0)
    if theta > 0.9999 / nrm ** 2:
        raise ParameterError(
            f"theta = {theta:.4g} exceeds the stability bound "
            f"0.9999 / ||A||^2 = {0.9999 / nrm ** 2:.4g}")
    ncod = a.cod.size
    if ncod > max_dense_dim and not allow_large:
        raise ResourceError(
            f"dense split of a {ncod}-dimensional codomain needs "
            f"{ncod}x{ncod} storage; pass allow_large=True to override "
            f"(guard at {max_dense_dim})")

    cod_shape = a.cod.shape
    gram = np.empty((ncod, ncod))
    basis = np.zeros(ncod)
    for j in range(ncod):
        basis[j] = 1.0
        gram[:, j] = np.asarray(
            a.apply(a.adjoint(basis.reshape(cod_shape)))).reshape(-1)
        basis[j] = 0.0
    gram = 0.5 * (gram + gram.T)

    inv_theta = 1.0 / theta
    target = inv_theta * np.eye(ncod) - gram
    jitter = 0.0
    chol = None
    for attempt in range(4):
        try:
            chol = np.linalg.cholesky(target + jitter * np.eye(ncod))
            break
        except np.linalg.LinAlgError:
            jitter = 1e-12 * inv_theta if jitter == 0.0 else jitter * 100.0
    if chol is None:
        raise ConstructionError(
            "theta^{-1} I - A A* is not positive definite even after jitter; "
            "theta is too large for this operator")

    dom = linops.Space((ncod,), "f")
    b = linops.LinOp(dom, a.cod,
                     lambda w: (chol @ w).reshape(cod_shape),
                     lambda y: chol.T @ np.asarray(y).reshape(-1),
                     label="denseB")
    pair = SplitPair(a=a, b=b, theta=theta,
                     report={"jitter": jitter, "kind": "dense", "dim": ncod})
    return _verify_identity(pair)


def build_mri_B(mask, ramp, theta, phase, wavelet, fft):
    """Matrix-free complement for the homodyne compressed-sensing operator.

    The forward operator is assembled here as
        A = wavelet o Re o phase o fft^{-1} o ramp o zero-fill
    acting on the vector of collected k-space samples, and the complement
        B = wavelet o Re o phase o fft^{-1} o Q
    acts on a full complex grid, where Q is the pointwise square root of
    theta^{-1} - ramp^2 * mask. That diagonal must be nonnegative, which
    bounds theta from above by 1 / max(ramp^2 * mask).

    Parameters
    ----------
    mask : bool grid, collected k-space positions.
    ramp : real grid, the homodyne row weighting.
    theta : float, split parameter.
    phase : complex grid of unit modulus, the phase estimate.
    wavelet, fft : LinOps (orthogonal transform, centered unitary DFT).
    """
    mask = np.asarray(mask, dtype=bool)
    ramp = np.asarray(ramp, dtype=float)
    phase = np.asarray(phase, dtype=np.complex128)
    if mask.shape != ramp.shape or mask.shape != phase.shape:
        raise DimensionError("mask, ramp and phase grids must share a shape")
    theta = float(theta)
    if theta <= 0:
        raise ParameterError("theta must be positive")
    if np.max(np.abs(np.abs(phase) - 1.0)) > 1e-9:
        raise ConstructionError("phase grid must have unit modulus")

    inv_theta = 1.0 / theta
    diag_sq = inv_theta - ramp ** 2 * mask
    if np.min(diag_sq) < 0.0:
        i, j = np.unravel_index(int(np.argmin(diag_sq)), diag_sq.shape)
        raise ConstructionError(
            f"complement diagonal negative at cell ({i}, {j}): "
            f"theta^-1 = {inv_theta:.4g} < ramp^2 = {ramp[i, j] ** 2:.4g}; "
            f"theta must not exceed {1.0 / np.max(ramp ** 2 * mask):.4g}")

    select = linops.mask_select(mask)
    ramp_mul = linops.diag_grid(ramp.astype(np.complex128))
    phase_mul = linops.diag_grid(phase)
    re = linops.real_part(mask.shape)
    inv_fft = linops.LinOp(fft.cod, fft.dom, fft._adj, fft._fwd, label="ifft")

    # adjoint of mask_select is the zero-filling map, so A itself is the
    # composition applied to the selected-sample vector
    zero_fill = linops.LinOp(select.cod, select.dom, select._adj, select._fwd,
                             label="zfill")
    a = linops.compose(wavelet, re, phase_mul, inv_fft, ramp_mul, zero_fill)

    q_mul = linops.diag_grid(np.sqrt(diag_sq).astype(np.complex128))
    b = linops.compose(wavelet, re, phase_mul, inv_fft, q_mul)

    pair = SplitPair(a=a, b=b, theta=theta,
                     report={"jitter": 0.0, "kind": "mri", "dim": a.cod.size})
    return _verify_identity(pair)
