"""Dense float64 tensor type and a reproducible random source.

Every numeric value that crosses a module boundary in this package is a
``Tensor``: an immutable, C-contiguous, 64-bit float array with a finiteness
guarantee (any public operation that would produce NaN/Inf raises
``NonFiniteError`` instead). Layout is row-major and reductions run in a
fixed order so repeated runs produce identical bits on the same platform.

``Rng`` is a counter-based splitmix64 generator (Steele/Lea/Vigna mixing
constants), implemented here rather than taken from a library so that the
exact stream is documented and reproducible from the seed alone:

    state_i = seed + (counter + i + 1) * 0x9E3779B97F4A7C15   (mod 2^64)
    out_i   = mix(state_i)    # xor-shift / multiply finalizer

Uniform doubles take the top 53 bits: ``(out >> 11) * 2^-53`` in [0, 1).
Normal deviates use the Box-Muller transform on consecutive uniform pairs
(u1, u2): ``r = sqrt(-2 ln(1 - u1))``, ``z0 = r cos(2 pi u2)``,
``z1 = r sin(2 pi u2)``, emitted in the order z0, z1.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NonFiniteError, ShapeError

__all__ = [
    "Tensor",
    "tensor",
    "zeros",
    "ones",
    "full",
    "eye",
    "matmul",
    "elementwise",
    "concat",
    "reduce",
    "Rng",
    "rand_uniform",
    "rand_normal",
    "fnv1a64",
]


class Tensor:
    """Immutable n-dimensional float64 array in row-major order."""

    __slots__ = ("data",)

    def __init__(self, values, check=True):
        arr = np.array(values, dtype=np.float64, order="C", copy=True)
        if check and arr.size and not np.isfinite(arr).all():
            raise NonFiniteError("tensor contains NaN or Inf")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def _wrap(cls, arr: np.ndarray, check: bool = True) -> "Tensor":
        # Internal fast path: takes ownership of arr without copying.
        if check and arr.size and not np.isfinite(arr).all():
            raise NonFiniteError("operation produced NaN or Inf")
        t = object.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        arr.flags.writeable = False
        object.__setattr__(t, "data", arr)
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _item_err()

    def tolist(self):
        return self.data.tolist()

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        n = int(np.prod(shape)) if shape else 1
        if n != self.size:
            raise ShapeError(f"cannot reshape {self.shape} to {shape}")
        return Tensor._wrap(self.data.reshape(shape), check=False)

    def __getitem__(self, idx) -> "Tensor":
        out = self.data[idx]
        if np.isscalar(out) or out.ndim == 0:
            out = np.asarray(out)
        return Tensor._wrap(np.ascontiguousarray(out), check=False)

    def __setattr__(self, name, value):
        raise AttributeError("Tensor is immutable")

    def __repr__(self):
        return f"Tensor(shape={self.shape})"

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self):
        return id(self)

    # arithmetic sugar; shape rules are the same as elementwise()
    def __add__(self, other):
        return elementwise("add", self, other)

    def __sub__(self, other):
        return elementwise("sub", self, other)

    def __mul__(self, other):
        return elementwise("mul", self, other)

    def __rmul__(self, other):
        return elementwise("scale", self, other)

    def __neg__(self):
        return elementwise("scale", self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _item_err():
    raise ShapeError("item() requires a single-element tensor")


def tensor(values) -> Tensor:
    return values if isinstance(values, Tensor) else Tensor(values)


def zeros(shape) -> Tensor:
    return Tensor._wrap(np.zeros(shape, dtype=np.float64), check=False)


def ones(shape) -> Tensor:
    return Tensor._wrap(np.ones(shape, dtype=np.float64), check=False)


def full(shape, value: float) -> Tensor:
    return Tensor._wrap(np.full(shape, float(value), dtype=np.float64))


def eye(n: int) -> Tensor:
    return Tensor._wrap(np.eye(n, dtype=np.float64), check=False)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a [m,k] and b [k,n]."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner extents differ: {a.shape} x {b.shape}")
    return Tensor._wrap(a.data @ b.data)


_ELEMENTWISE_BINARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}
_ELEMENTWISE_UNARY = {
    "abs": np.abs,
    "sign": np.sign,  # sign(0) = 0
}


def elementwise(op_kind: str, a: Tensor, b=None) -> Tensor:
    """Elementwise op on equal-shape tensors, or tensor-scalar for scale.

    op_kind is one of add, sub, mul (tensor [or scalar] second operand),
    scale (scalar second operand), abs, sign (no second operand).
    """
    if op_kind in _ELEMENTWISE_UNARY:
        if b is not None:
            raise ShapeError(f"{op_kind} takes no second operand")
        return Tensor._wrap(_ELEMENTWISE_UNARY[op_kind](a.data))
    if op_kind == "scale":
        if not np.isscalar(b) and not isinstance(b, (int, float)):
            raise ShapeError("scale needs a scalar second operand")
        return Tensor._wrap(a.data * float(b))
    if op_kind not in _ELEMENTWISE_BINARY:
        raise ShapeError(f"unknown elementwise op {op_kind!r}")
    if isinstance(b, (int, float)):
        return Tensor._wrap(_ELEMENTWISE_BINARY[op_kind](a.data, float(b)))
    if not isinstance(b, Tensor):
        raise ShapeError("second operand must be a Tensor or scalar")
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return Tensor._wrap(_ELEMENTWISE_BINARY[op_kind](a.data, b.data))


def concat(a: Tensor, b: Tensor, axis: int) -> Tensor:
    """Join two tensors along axis; all other extents must match."""
    if a.ndim != b.ndim:
        raise ShapeError(f"rank mismatch: {a.shape} vs {b.shape}")
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"axis {axis} out of range for rank {a.ndim}")
    axis %= a.ndim
    for d in range(a.ndim):
        if d != axis and a.shape[d] != b.shape[d]:
            raise ShapeError(f"incompatible shapes {a.shape} and {b.shape} on axis {d}")
    return Tensor._wrap(np.concatenate([a.data, b.data], axis=axis), check=False)


def reduce(op_kind: str, a: Tensor, axis=None) -> Tensor:
    """sum / mean / max over one axis or over all elements (axis=None)."""
    if a.size == 0:
        raise ShapeError("cannot reduce an empty tensor")
    if axis is not None and not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"axis {axis} out of range for rank {a.ndim}")
    if op_kind == "sum":
        out = np.sum(a.data, axis=axis)
    elif op_kind == "mean":
        out = np.mean(a.data, axis=axis)
    elif op_kind == "max":
        out = np.max(a.data, axis=axis)
    else:
        raise ShapeError(f"unknown reduce op {op_kind!r}")
    return Tensor._wrap(np.asarray(out))


# ---------------------------------------------------------------------------
# random source


_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GAMMA = 0x9E3779B97F4A7C15
_TWO_NEG53 = 2.0 ** -53


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer over uint64 state values."""
    with np.errstate(over="ignore"):
        z = x
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def fnv1a64(text: str) -> int:
    """FNV-1a 64-bit hash of a UTF-8 string; used to derive child seeds."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


class Rng:
    """Deterministic counter-based splitmix64 stream.

    Single-owner: callers that need independent streams derive children
    with spawn() instead of sharing one instance.
    """

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.counter = 0

    def spawn(self, token: str) -> "Rng":
        """Child stream with seed = parent_seed XOR fnv1a64(token)."""
        return Rng(self.seed ^ fnv1a64(token))

    def next_u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            state = np.uint64(self.seed) + idx * np.uint64(_GAMMA)
        return _splitmix64(state)

    def next_double(self, n: int) -> np.ndarray:
        """n doubles uniform in [0, 1): top 53 bits of each output word."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * _TWO_NEG53

    def uniform(self, shape, lo: float = 0.0, hi: float = 1.0) -> Tensor:
        if not lo < hi:
            raise ShapeError(f"invalid range [{lo}, {hi})")
        shape = tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = self.next_double(n)
        return Tensor._wrap((lo + u * (hi - lo)).reshape(shape))

    def normal(self, shape, mu: float = 0.0, sigma: float = 1.0) -> Tensor:
        if sigma <= 0:
            raise ShapeError(f"sigma must be positive, got {sigma}")
        shape = tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        u = self.next_double(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = (2.0 * math.pi) * u2
        z = np.empty(2 * pairs, dtype=np.float64)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return Tensor._wrap((mu + sigma * z[:n]).reshape(shape))

    def shuffle(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n), high index first."""
        perm = np.arange(n)
        if n > 1:
            u = self.next_double(n - 1)
            for k, i in enumerate(range(n - 1, 0, -1)):
                j = int(u[k] * (i + 1))  # bias < 2^-42 for n below a million
                perm[i], perm[j] = perm[j], perm[i]
        return perm


def rand_uniform(rng: Rng, shape, lo: float, hi: float) -> Tensor:
    return rng.uniform(shape, lo, hi)


def rand_normal(rng: Rng, shape, mu: float, sigma: float) -> Tensor:
    return rng.normal(shape, mu, sigma)
