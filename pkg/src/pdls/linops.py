"""Matrix-free linear operators with explicit adjoints.

Every operator carries its domain and codomain as `Space` objects and
validates inputs on each application. Adjoints are exact transposes of
the forward maps; the test suite checks them against densified matrices
and inner-product identities. Complex spaces are treated as real Hilbert
spaces under Re<x, y>, which is the pairing every solver in this
library uses.
"""

import numpy as np

from .errors import DimensionError, InvalidInputError, ParameterError


class Space:
    """A real or complex array space, or a block product of spaces.

    Parameters
    ----------
    shape : tuple of int, optional
        Array shape for a plain space.
    kind : str
        "f" for float64, "c" for complex128.
    parts : tuple of Space, optional
        Component spaces for a block space. Mutually exclusive with shape.
    """

    def __init__(self, shape=None, kind="f", parts=None):
        if (shape is None) == (parts is None):
            raise ParameterError("give exactly one of shape or parts")
        self.shape = tuple(shape) if shape is not None else None
        self.kind = kind
        self.parts = tuple(parts) if parts is not None else None

    @property
    def is_block(self):
        return self.parts is not None

    @property
    def dtype(self):
        return np.complex128 if self.kind == "c" else np.float64

    @property
    def size(self):
        if self.is_block:
            return sum(p.size for p in self.parts)
        return int(np.prod(self.shape))

    def validate(self, x, who="operator"):
        """Check shape, dtype kind and finiteness; return a cast array."""
        if self.is_block:
            if not isinstance(x, BlockVec) or len(x.parts) != len(self.parts):
                raise DimensionError(f"{who}: expected a {len(self.parts)}-block vector")
            return BlockVec(tuple(s.validate(p, who) for s, p in zip(self.parts, x.parts)))
        x = np.asarray(x)
        if x.shape != self.shape:
            raise DimensionError(f"{who}: expected shape {self.shape}, got {x.shape}")
        if self.kind == "f" and x.dtype.kind == "c":
            raise InvalidInputError(f"{who}: complex input to a real-domain operator")
        x = x.astype(self.dtype, copy=False)
        if not np.all(np.isfinite(x)):
            raise InvalidInputError(f"{who}: input contains non-finite entries")
        return x

    def zeros(self):
        if self.is_block:
            return BlockVec(tuple(p.zeros() for p in self.parts))
        return np.zeros(self.shape, dtype=self.dtype)

    def random(self, rng):
        if self.is_block:
            return BlockVec(tuple(p.random(rng) for p in self.parts))
        if self.kind == "c":
            return rng.standard_normal(self.shape) + 1j * rng.standard_normal(self.shape)
        return rng.standard_normal(self.shape)

    def same_as(self, other):
        if self.is_block != other.is_block:
            return False
        if self.is_block:
            return len(self.parts) == len(other.parts) and all(
                a.same_as(b) for a, b in zip(self.parts, other.parts)
            )
        return self.shape == other.shape and self.kind == other.kind

    def __repr__(self):
        if self.is_block:
            return f"Space(parts={self.parts!r})"
        return f"Space(shape={self.shape}, kind={self.kind!r})"


class BlockVec:
    """Tuple of arrays behaving like one stacked vector."""

    __array_priority__ = 100.0  # keep numpy from absorbing scalar products

    def __init__(self, parts):
        self.parts = tuple(np.asarray(p) for p in parts)

    def __add__(self, other):
        return BlockVec(tuple(a + b for a, b in zip(self.parts, other.parts)))

    def __sub__(self, other):
        return BlockVec(tuple(a - b for a, b in zip(self.parts, other.parts)))

    def __mul__(self, c):
        return BlockVec(tuple(c * a for a in self.parts))

    __rmul__ = __mul__

    def __neg__(self):
        return BlockVec(tuple(-a for a in self.parts))

    def copy(self):
        return BlockVec(tuple(a.copy() for a in self.parts))

    def norm(self):
        return float(np.sqrt(sum(np.vdot(a, a).real for a in self.parts)))


def vdot_real(x, y):
    """Real inner product Re<x, y>; works on arrays and block vectors."""
    if isinstance(x, BlockVec):
        return float(sum(np.vdot(a, b).real for a, b in zip(x.parts, y.parts)))
    return float(np.vdot(x, y).real)


def norm(x):
    if isinstance(x, BlockVec):
        return x.norm()
    return float(np.linalg.norm(x))


class LinOp:
    """Linear operator defined by a forward map and its adjoint."""

    def __init__(self, dom, cod, fwd, adj, label=""):
        self.dom = dom
        self.cod = cod
        self._fwd = fwd
        self._adj = adj
        self.label = label

    def apply(self, x):
        x = self.dom.validate(x, self.label or "linop")
        return self._fwd(x)

    def adjoint(self, y):
        y = self.cod.validate(y, (self.label or "linop") + "*")
        return self._adj(y)

    def __repr__(self):
        return f"LinOp({self.label or 'anonymous'}: {self.dom!r} -> {self.cod!r})"


def apply(op, x):
    """Apply op to x (module-level alias for op.apply)."""
    return op.apply(x)


def adjoint_apply(op, y):
    """Apply the adjoint of op to y."""
    return op.adjoint(y)


def from_matrix(mat):
    """Wrap a dense 2-D array as a LinOp."""
    mat = np.asarray(mat)
    if mat.ndim != 2:
        raise DimensionError("from_matrix expects a 2-D array")
    kind = "c" if mat.dtype.kind == "c" else "f"
    dom = Space((mat.shape[1],), kind)
    cod = Space((mat.shape[0],), kind)
    mh = mat.conj().T
    return LinOp(dom, cod, lambda x: mat @ x, lambda y: mh @ y, label="dense")


def identity(space):
    return LinOp(space, space, lambda x: x, lambda y: y, label="identity")


def scaled(op, c):
    """c * op for a real scalar c."""
    c = float(c)
    return LinOp(op.dom, op.cod, lambda x: c * op._fwd(x), lambda y: c * op._adj(y),
                 label=f"{c}*{op.label}")


def adjoint_op(op):
    """The adjoint of op as a LinOp in its own right."""
    return LinOp(op.cod, op.dom, op._adj, op._fwd,
                 label=(op.label or "op") + "*")


def grad1d(n):
    """Circular backward difference on length-n signals.

    (Gx)_i = x_i - x_{i-1} with wraparound, so (Gx)_1 = x_1 - x_n.
    The adjoint is (G*y)_i = y_i - y_{i+1} with wraparound.
    """
    if n < 2:
        raise ParameterError("grad1d needs n >= 2")
    sp = Space((n,), "f")
    return LinOp(sp, sp,
                 lambda x: x - np.roll(x, 1),
                 lambda y: y - np.roll(y, -1),
                 label="grad1d")


def grad2d(n, m):
    """Periodic forward differences on n x m images, two channels.

    Channel 0 holds row differences x[i+1, j] - x[i, j], channel 1 holds
    column differences x[i, j+1] - x[i, j], both with wraparound. Output
    shape is (2, n, m).
    """
    if n < 2 or m < 2:
        raise ParameterError("grad2d needs n, m >= 2")
    dom = Space((n, m), "f")
    cod = Space((2, n, m), "f")

    def fwd(x):
        out = np.empty((2, n, m))
        out[0] = np.roll(x, -1, axis=0) - x
        out[1] = np.roll(x, -1, axis=1) - x
        return out

    def adj(y):
        return (np.roll(y[0], 1, axis=0) - y[0]) + (np.roll(y[1], 1, axis=1) - y[1])

    return LinOp(dom, cod, fwd, adj, label="grad2d")


def dft2_unitary(n, m, centered=False):
    """Unitary 2-D DFT on complex n x m grids.

    With centered=True the spectrum is shifted so the DC bin sits at
    (n//2, m//2), which is the k-space convention the sampling masks and
    the homodyne ramp use.
    """
    sp = Space((n, m), "c")
    if centered:
        fwd = lambda x: np.fft.fftshift(np.fft.fft2(x, norm="ortho"))
        adj = lambda y: np.fft.ifft2(np.fft.ifftshift(y), norm="ortho")
    else:
        fwd = lambda x: np.fft.fft2(x, norm="ortho")
        adj = lambda y: np.fft.ifft2(y, norm="ortho")
    return LinOp(sp, sp, fwd, adj, label="dft2")


# Daubechies-4 analysis pair (two vanishing moments), periodic extension.
_SQ3 = np.sqrt(3.0)
_DB4_LO = np.array([1 + _SQ3, 3 + _SQ3, 3 - _SQ3, 1 - _SQ3]) / (4 * np.sqrt(2.0))
_DB4_HI = np.array([(-1) ** k * _DB4_LO[3 - k] for k in range(4)])


def _dwt_axis0(x, lo, hi):
    # one analysis step along axis 0: x has shape (n, ...), n even
    n = x.shape[0]
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(len(lo))[None, :]) % n
    windows = x[idx]  # (n//2, taps, ...)
    a = np.tensordot(lo, np.moveaxis(windows, 1, 0), axes=(0, 0))
    d = np.tensordot(hi, np.moveaxis(windows, 1, 0), axes=(0, 0))
    return np.concatenate([a, d], axis=0)


def _idwt_axis0(c, lo, hi):
    # exact transpose of _dwt_axis0 (orthogonal, so also the inverse)
    n = c.shape[0]
    a, d = c[: n // 2], c[n // 2 :]
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(len(lo))[None, :]) % n
    out = np.zeros_like(c)
    vals = a[:, None] * lo.reshape((1, -1) + (1,) * (c.ndim - 1)) \
        + d[:, None] * hi.reshape((1, -1) + (1,) * (c.ndim - 1))
    np.add.at(out, idx.reshape(-1), vals.reshape((-1,) + c.shape[1:]))
    return out


def _dwt2_level(x):
    x = _dwt_axis0(x.T, _DB4_LO, _DB4_HI).T  # columns
    return _dwt_axis0(x, _DB4_LO, _DB4_HI)   # rows


def _idwt2_level(c):
    c = _idwt_axis0(c, _DB4_LO, _DB4_HI)
    return _idwt_axis0(c.T, _DB4_LO, _DB4_HI).T


def dwt_ortho(n, m, levels=None):
    """Orthogonal periodic Daubechies-4 wavelet transform on n x m images.

    Coefficients use the usual nested layout: at each level the top-left
    block holds the approximation and is transformed again by the next
    level. levels defaults to floor(log2(min(n, m))) - 2, floored at 1.
    Both dimensions must be divisible by 2**levels.
    """
    if levels is None:
        levels = max(1, int(np.floor(np.log2(min(n, m)))) - 2)
    if levels < 1:
        raise ParameterError("dwt_ortho needs levels >= 1")
    div = 2 ** levels
    if n % div or m % div:
        raise DimensionError(
            f"dwt_ortho: {n}x{m} not divisible by 2**levels = {div}")
    sp = Space((n, m), "f")

    def fwd(x):
        out = x.copy()
        ni, mi = n, m
        for _ in range(levels):
            out[:ni, :mi] = _dwt2_level(out[:ni, :mi])
            ni //= 2
            mi //= 2
        return out

    def adj(c):
        out = c.copy()
        sizes = [(n >> l, m >> l) for l in range(levels)]
        for ni, mi in reversed(sizes):
            out[:ni, :mi] = _idwt2_level(out[:ni, :mi])
        return out

    op = LinOp(sp, sp, fwd, adj, label="dwt")
    op.levels = levels
    return op


def real_part(shape):
    """Restriction of a complex grid to its real part.

    The adjoint embeds a real grid back with zero imaginary part; under
    the Re<., .> pairing this is an exact adjoint pair.
    """
    dom = Space(tuple(shape), "c")
    cod = Space(tuple(shape), "f")
    return LinOp(dom, cod,
                 lambda x: np.ascontiguousarray(x.real),
                 lambda y: y.astype(np.complex128),
                 label="re")


def mask_select(mask):
    """Select the masked entries of a complex grid as a vector.

    The adjoint zero-fills the vector back onto the grid. Entries are
    ordered row-major over the True positions of the mask.
    """
    mask = np.asarray(mask, dtype=bool)
    k = int(mask.sum())
    if k == 0:
        raise ParameterError("mask_select: empty mask")
    dom = Space(mask.shape, "c")
    cod = Space((k,), "c")

    def adj(v):
        out = np.zeros(mask.shape, dtype=np.complex128)
        out[mask] = v
        return out

    return LinOp(dom, cod, lambda x: x[mask], adj, label="mask")


def diag_grid(d):
    """Pointwise multiplication by a fixed complex grid."""
    d = np.asarray(d, dtype=np.complex128)
    dc = d.conj()
    sp = Space(d.shape, "c")
    return LinOp(sp, sp, lambda x: d * x, lambda y: dc * y, label="diag")


def diag_grid_real(d):
    """Pointwise multiplication of a real grid by a fixed real grid."""
    d = np.asarray(d, dtype=np.float64)
    sp = Space(d.shape, "f")
    return LinOp(sp, sp, lambda x: d * x, lambda y: d * y, label="rdiag")


def compose(*ops):
    """compose(A, B, ...) applies right to left: compose(A, B)(x) = A(B(x))."""
    if not ops:
        raise ParameterError("compose needs at least one operator")
    for left, right in zip(ops[:-1], ops[1:]):
        if not left.dom.same_as(right.cod):
            raise DimensionError(
                f"compose: {right.label or '?'} feeds {left.label or '?'} "
                f"but {right.cod!r} != {left.dom!r}")

    def fwd(x):
        for op in reversed(ops):
            x = op._fwd(x)
        return x

    def adj(y):
        for op in ops:
            y = op._adj(y)
        return y

    label = "o".join(op.label or "?" for op in ops)
    return LinOp(ops[-1].dom, ops[0].cod, fwd, adj, label=label)


def block_row(ops):
    """Row block [A1 A2 ...]: maps a block vector to sum A_i x_i."""
    ops = tuple(ops)
    cod = ops[0].cod
    for op in ops[1:]:
        if not op.cod.same_as(cod):
            raise DimensionError("block_row: codomains differ")
    dom = Space(parts=tuple(op.dom for op in ops))

    def fwd(x):
        out = ops[0]._fwd(x.parts[0])
        for op, p in zip(ops[1:], x.parts[1:]):
            out = out + op._fwd(p)
        return out

    def adj(y):
        return BlockVec(tuple(op._adj(y) for op in ops))

    return LinOp(dom, cod, fwd, adj, label="[" + " ".join(o.label or "?" for o in ops) + "]")


def op_norm_estimate(op, iters=200, seed=0):
    """Estimate ||op|| by power iteration on op* op.

    Deterministic for a fixed seed. The estimate approaches the true norm
    from below, so it never exceeds it by more than roundoff.
    """
    if iters < 1:
        raise ParameterError("op_norm_estimate needs iters >= 1")
    rng = np.random.default_rng(seed)
    v = op.dom.random(rng)
    nv = norm(v)
    if nv == 0.0:
        return 0.0
    v = v * (1.0 / nv)
    for _ in range(iters):
        w = op._adj(op._fwd(v))
        nw = norm(w)
        if nw == 0.0:
            return 0.0
        v = w * (1.0 / nw)
    return norm(op._fwd(v))
