"""Benchmark problem generators.

Four families: a dense regularized least-squares problem, 1-D and 2-D
total-variation denoising, and an undersampled-Fourier imaging problem
combining a sparsity prior with a conjugate-symmetry weighting derived
from a phase estimate. Every generator is pure given its seed and
verifies the operator adjoint (and the split identity when one is built)
before returning.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from . import bsplit, linops
from . import prox as proxfns
from .errors import ConstructionError, InvalidInputError, ParameterError
from .solvers import SaddleProblem

CENTER_BLOCK = 8  # fully sampled square at the grid center of random masks


@dataclass
class SamplingMask:
    """Binary grid of collected positions on an n-by-m frequency grid."""

    grid: np.ndarray

    @property
    def burden(self):
        """Fraction of positions collected."""
        return float(self.grid.mean())


@dataclass
class ProblemInstance:
    """A generated benchmark: the saddle problem plus its provenance.

    data is the measurement the data-fit term references; truth is the
    ground truth when the instance is synthetic. meta holds the generator
    parameters; extras holds problem-specific objects (masks, phase grid,
    reconstruction operator, ...).
    """

    problem: SaddleProblem
    data: np.ndarray
    truth: np.ndarray = None
    meta: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)


def _verify_adjoint(op, seed=0, tol=1e-8):
    # random-probe check of <A x, y> = <x, A* y> in the real inner product
    rng = np.random.default_rng(seed)
    for _ in range(3):
        x = op.dom.random(rng)
        y = op.cod.random(rng)
        lhs = linops.vdot_real(op.apply(x), y)
        rhs = linops.vdot_real(x, op.adjoint(y))
        scale = max(1.0, abs(lhs), abs(rhs))
        if abs(lhs - rhs) > tol * scale:
            raise ConstructionError(
                f"adjoint mismatch for {op.label or 'operator'}: "
                f"{lhs!r} vs {rhs!r}")


def synthetic_image(n=77, m=77):
    """Deterministic piecewise-smooth test image in [0, 1].

    A linear gradient background with a disc, a dark rectangle and a small
    bright disc; enough structure for denoising and sparsity experiments
    without bundling binary assets.
    """
    yy, xx = np.mgrid[0:n, 0:m].astype(float)
    yy /= max(n - 1, 1)
    xx /= max(m - 1, 1)
    img = 0.25 + 0.35 * xx
    img[(yy - 0.38) ** 2 + (xx - 0.36) ** 2 <= 0.23 ** 2] = 0.85
    img[(yy >= 0.55) & (yy <= 0.85) & (xx >= 0.15) & (xx <= 0.45)] = 0.30
    img[(yy - 0.32) ** 2 + (xx - 0.74) ** 2 <= 0.12 ** 2] = 0.95
    return np.clip(img, 0.0, 1.0)


def synthetic_phantom(n, m, phase_scale=np.pi / 16):
    """Complex test object: positive piecewise-smooth magnitude, smooth phase.

    The phase is a wide Gaussian bump normalized to span exactly
    [-phase_scale, phase_scale] across the frame, so its total swing is
    2*phase_scale and its spatial variation is gentle.  Phase correction
    from a narrow symmetrically-sampled band can only track phase whose
    total swing stays within a few tenths of a radian on small grids, so
    the default keeps the swing inside that budget; phase_scale = 0 yields
    a strictly positive real object.
    """
    mag = 0.05 + 0.95 * synthetic_image(n, m)
    yy, xx = np.mgrid[0:n, 0:m].astype(float)
    yy /= max(n - 1, 1)
    xx /= max(m - 1, 1)
    bump = np.exp(-(((yy - 0.5) ** 2) + (xx - 0.55) ** 2) / (2 * 1.2 ** 2))
    lo, hi = bump.min(), bump.max()
    if hi > lo:
        bump = (bump - lo) / (hi - lo)
    phase = phase_scale * (2.0 * bump - 1.0)
    return mag * np.exp(1j * phase)


def gen_lasso(n, lam=1.0, seed=0):
    """Dense random regularized least squares: 1/2 ||x - b||^2 + lam ||A x||_1.

    A has independent standard-normal entries scaled by 1/sqrt(n), the usual
    normalization that keeps the operator norm O(1) as n grows; b is
    standard normal. The split complement is built densely so every solver
    can run.
    """
    n = int(n)
    if n < 2:
        raise ParameterError("gen_lasso: n must be at least 2")
    if lam <= 0:
        raise ParameterError("gen_lasso: lam must be positive")
    rng = np.random.default_rng(seed)
    mat = rng.standard_normal((n, n)) / np.sqrt(n)
    b = rng.standard_normal(n)
    a = linops.from_matrix(mat)
    split = bsplit.build_dense_B(a, bsplit.default_theta(a))
    prob = SaddleProblem(proxfns.prox_sq_l2(b), proxfns.prox_l1(lam), a, split)
    _verify_adjoint(a, seed)
    return ProblemInstance(prob, data=b,
                           meta={"kind": "lasso", "n": n, "lam": float(lam),
                                 "seed": int(seed)},
                           extras={"matrix": mat})


def gen_tv1d(num_segs, len_segs, noise_sigma=1.0, lam=1.0, seed=0):
    """1-D total-variation denoising of a noisy piecewise-constant signal.

    The truth takes num_segs random integer levels in [-5, 5], each held
    for len_segs samples; data adds white noise of the given deviation.
    Objective: 1/2 ||x - b||^2 + lam ||grad x||_1 with circular differences.
    """
    num_segs, len_segs = int(num_segs), int(len_segs)
    if num_segs < 1 or len_segs < 1:
        raise ParameterError("gen_tv1d: num_segs and len_segs must be >= 1")
    if noise_sigma < 0 or lam <= 0:
        raise ParameterError("gen_tv1d: need noise_sigma >= 0 and lam > 0")
    rng = np.random.default_rng(seed)
    levels = rng.integers(-5, 6, size=num_segs).astype(float)
    truth = np.repeat(levels, len_segs)
    n = num_segs * len_segs
    data = truth + noise_sigma * rng.standard_normal(n)
    a = linops.grad1d(n)
    split = bsplit.build_dense_B(a, bsplit.default_theta(a))
    prob = SaddleProblem(proxfns.prox_sq_l2(data), proxfns.prox_l1(lam), a,
                         split)
    _verify_adjoint(a, seed)
    return ProblemInstance(prob, data=data, truth=truth,
                           meta={"kind": "tv1d", "num_segs": num_segs,
                                 "len_segs": len_segs, "n": n,
                                 "noise_sigma": float(noise_sigma),
                                 "lam": float(lam), "seed": int(seed)})


def gen_tv2d(image=None, noise_sigma=0.08, seed=0, with_split=False):
    """2-D total-variation denoising: 1/2 ||x - b||^2 + ||grad x||_{2,1}.

    image defaults to the bundled synthetic test image at 77x77; values
    must lie in [0, 1]. The split complement is dense and quadratic in the
    pixel count, so it is only built on request.
    """
    if image is None:
        image = synthetic_image()
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise InvalidInputError("gen_tv2d: image must be a 2-D array")
    if not np.all(np.isfinite(image)):
        raise InvalidInputError("gen_tv2d: image must be finite")
    if image.min() < 0.0 or image.max() > 1.0:
        raise InvalidInputError("gen_tv2d: image values must lie in [0, 1]")
    if noise_sigma < 0:
        raise ParameterError("gen_tv2d: noise_sigma must be nonnegative")
    n, m = image.shape
    rng = np.random.default_rng(seed)
    data = image + noise_sigma * rng.standard_normal((n, m))
    a = linops.grad2d(n, m)
    split = None
    if with_split:
        split = bsplit.build_dense_B(a, bsplit.default_theta(a))
    prob = SaddleProblem(proxfns.prox_sq_l2(data), proxfns.prox_l21(1.0), a,
                         split)
    _verify_adjoint(a, seed)
    return ProblemInstance(prob, data=data, truth=image,
                           meta={"kind": "tv2d", "n": n, "m": m,
                                 "noise_sigma": float(noise_sigma),
                                 "seed": int(seed)})


def _pf_rows(n, nu):
    return int(math.ceil(nu * n - 1e-12))


def gen_masks(n, m, nu, burden, seed=0):
    """Sampling masks: asymmetric row mask, random density mask, and their AND.

    pf fully collects the top ceil(nu * n) rows of the centered grid (which
    contain the symmetric center band). vd draws exactly
    round(burden * n * m) positions by weighted sampling without
    replacement, density decaying with radius, with a fully sampled square
    at the center. both is the elementwise intersection.
    """
    n, m = int(n), int(m)
    if not (0.5 < nu <= 1.0):
        raise ParameterError("gen_masks: nu must lie in (1/2, 1]")
    if not (0.0 < burden <= 1.0):
        raise ParameterError("gen_masks: burden must lie in (0, 1]")

    pf = np.zeros((n, m), dtype=bool)
    pf[:_pf_rows(n, nu)] = True

    count = int(round(burden * n * m))
    side_n = min(CENTER_BLOCK, max(1, n // 2))
    side_m = min(CENTER_BLOCK, max(1, m // 2))
    r0, c0 = n // 2 - side_n // 2, m // 2 - side_m // 2
    if count < side_n * side_m:
        raise ParameterError(
            f"gen_masks: burden {burden} gives {count} samples, fewer than "
            f"the {side_n}x{side_m} fully sampled center")
    rng = np.random.default_rng(seed)
    ii, jj = np.mgrid[0:n, 0:m]
    r = np.hypot(ii - n // 2, jj - m // 2)
    w = (1.0 + r / 4.0) ** -3.0
    keys = rng.random((n, m)) ** (1.0 / w)
    keys[r0:r0 + side_n, c0:c0 + side_m] = 2.0
    vd = np.zeros(n * m, dtype=bool)
    vd[np.argpartition(keys.ravel(), -count)[-count:]] = True
    vd = vd.reshape(n, m)

    return (SamplingMask(pf), SamplingMask(vd), SamplingMask(pf & vd))


def _taper_half_width(n, nu):
    return _pf_rows(n, nu) - 1 - n // 2


def _ramp_rows(n, nu):
    # row weights: double the rows whose mirror is never collected, taper
    # smoothly across the symmetric band so mirrored pairs sum to 2, zero
    # the uncollected rows, and keep the self-mirrored edge row at 1
    k = _pf_rows(n, nu)
    h = _taper_half_width(n, nu)
    rows = np.zeros(n)
    for row in range(n):
        f = row - n // 2
        if row == 0:
            rows[row] = 1.0 if k >= 1 else 0.0
        elif abs(f) <= h:
            rows[row] = 1.0 - np.sin(0.5 * np.pi * f / h) if h > 0 else 1.0
        elif f < 0:
            rows[row] = 2.0
        elif row < k:
            rows[row] = 2.0
        else:
            rows[row] = 0.0
    return rows


def homodyne_phase(data, mask, nu):
    """Phase estimate and conjugate-symmetry weighting from asymmetric data.

    data is the zero-filled k-space grid and mask the collected rows'
    pattern; the mask must fully contain the symmetric center band implied
    by nu. Returns (phi, ramp) as diagonal LinOps on the complex grid, with
    the diagonal grids attached as .diag. phi has unit modulus; ramp weights
    each row so that a real image survives Re o phi o F^{-1} o ramp o F.
    """
    data = np.asarray(data, dtype=np.complex128)
    mask = np.asarray(mask, dtype=bool)
    if data.ndim != 2 or data.shape != mask.shape:
        raise InvalidInputError(
            "homodyne_phase: data and mask must be 2-D grids of equal shape")
    n, m = data.shape
    if not (0.5 < nu <= 1.0):
        raise ParameterError("homodyne_phase: nu must lie in (1/2, 1]")
    k = _pf_rows(n, nu)
    h = _taper_half_width(n, nu)
    if k == n:
        band = np.arange(n)
    else:
        band = np.arange(n // 2 - h, n // 2 + h + 1)
    if not mask[band, :].all():
        raise ParameterError(
            "homodyne_phase: sampling mask must fully contain the symmetric "
            f"center band (rows {band[0]}..{band[-1]})")

    lowpass = np.zeros((n, m))
    lowpass[band, :] = 1.0
    fft = linops.dft2_unitary(n, m, centered=True)
    smooth = fft.adjoint(lowpass * data)
    phase = np.exp(-1j * np.angle(smooth))

    ramp = np.tile(_ramp_rows(n, nu)[:, None], (1, m))
    phi_op = linops.diag_grid(phase)
    phi_op.diag = phase
    ramp_op = linops.diag_grid(ramp)
    ramp_op.diag = ramp
    return phi_op, ramp_op


def gen_mri_problem(n, m, nu, burden, noise_sigma=0.0, eps=0.0, seed=0,
                    phase_scale=np.pi / 16):
    """Undersampled-Fourier reconstruction with a sparsity prior.

    Simulates collecting the centered unitary DFT of a complex phantom at
    the intersection-mask positions (complex white noise of deviation
    noise_sigma added per sample), estimates the phase from the symmetric
    center band, and poses: find collected-spectrum values xi within eps of
    the data whose weighted, phase-corrected image has minimal l1 norm
    under the orthogonal wavelet transform. The unknown is the collected
    vector itself; the adjoint of collection zero-fills. extras carries the
    masks, phase and ramp grids, the linear reconstruction operator
    (vector -> real image), and a plain zero-filled baseline image.
    """
    n, m = int(n), int(m)
    if noise_sigma < 0:
        raise ParameterError("gen_mri_problem: noise_sigma must be >= 0")
    if eps < 0:
        raise ParameterError("gen_mri_problem: eps must be >= 0")
    wavelet = linops.dwt_ortho(n, m)
    fft = linops.dft2_unitary(n, m, centered=True)

    pf, vd, both = gen_masks(n, m, nu, burden, seed)
    phantom = synthetic_phantom(n, m, phase_scale)
    truth = np.abs(phantom)

    collect = linops.mask_select(both.grid)
    k_full = fft.apply(phantom)
    data = collect.apply(k_full)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape)
        data = data + (noise_sigma / np.sqrt(2.0)) * noise
    data_grid = collect.adjoint(data)

    phi_op, ramp_op = homodyne_phase(data_grid, pf.grid, nu)
    weighted = ramp_op.diag ** 2 * both.grid
    theta = 0.9 / float(weighted.max())
    split = bsplit.build_mri_B(both.grid, ramp_op.diag, theta, phi_op.diag,
                               wavelet, fft)
    prob = SaddleProblem(proxfns.project_ball(data, eps), proxfns.prox_l1(1.0),
                         split.a, split)
    _verify_adjoint(split.a, seed)

    recon_op = linops.compose(linops.real_part((n, m)), phi_op,
                              linops.adjoint_op(fft), ramp_op,
                              linops.adjoint_op(collect))
    zero_fill = np.abs(fft.adjoint(data_grid))
    return ProblemInstance(
        prob, data=data, truth=truth,
        meta={"kind": "mri", "n": n, "m": m, "nu": float(nu),
              "burden": float(burden), "noise_sigma": float(noise_sigma),
              "eps": float(eps), "seed": int(seed),
              "phase_scale": float(phase_scale)},
        extras={"pf": pf, "vd": vd, "both": both, "phase": phi_op.diag,
                "ramp": ramp_op.diag, "recon_op": recon_op,
                "wavelet_op": wavelet, "zero_fill": zero_fill,
                "phantom": phantom})


def load_image(path):
    """Read a grayscale image as floats in [0, 1].

    .npy holds float values directly; 8- and 16-bit PNG/PGM/TIFF are
    scaled by their integer range; float TIFF is clipped to [0, 1].
    """
    path = str(path)
    if path.endswith(".npy"):
        img = np.asarray(np.load(path), dtype=float)
    else:
        pil = Image.open(path)
        if pil.mode in ("F", "I"):
            img = np.asarray(pil, dtype=float)
            if pil.mode == "I":
                img = img / 65535.0
        else:
            pil = pil.convert("L")
            img = np.asarray(pil, dtype=float) / 255.0
    if img.ndim != 2:
        raise InvalidInputError(f"{path}: expected a single-channel image")
    return np.clip(img, 0.0, 1.0)


def save_image(path, img):
    """Write a [0, 1] float image: .npy keeps floats, others are 8-bit."""
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or not np.all(np.isfinite(img)):
        raise InvalidInputError("save_image: expected a finite 2-D array")
    if img.min() < 0.0 or img.max() > 1.0:
        raise InvalidInputError("save_image: values must lie in [0, 1]")
    path = str(path)
    if path.endswith(".npy"):
        np.save(path, img)
        return
    if path.endswith((".tif", ".tiff")):
        Image.fromarray(img.astype(np.float32), mode="F").save(path)
        return
    Image.fromarray(np.round(img * 255.0).astype(np.uint8), mode="L").save(path)
