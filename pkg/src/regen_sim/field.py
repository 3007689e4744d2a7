"""Prime-field arithmetic and dense linear algebra over GF(q).

Matrices are plain ``numpy`` int64 arrays whose entries lie in ``[0, q)``.
Moduli are capped below 2**31 so a single product of two reduced entries
fits in a signed 64-bit integer; sums of products are reduced after every
rank-one update.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivideByZero, NonPrimeModulus, SingularSystem

MAX_MODULUS = 2**31

_INV_TABLES: dict[int, np.ndarray] = {}

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for every n < 3.3e24."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def next_prime(n: int) -> int:
    """Smallest prime >= n."""
    n = max(n, 2)
    while not is_prime(n):
        n += 1
    return n


@dataclass(frozen=True)
class FieldElement:
    value: int
    q: int

    def _check(self, other: "FieldElement") -> None:
        if not isinstance(other, FieldElement) or other.q != self.q:
            raise TypeError("operands must be elements of the same field")

    def __add__(self, other):
        self._check(other)
        return FieldElement((self.value + other.value) % self.q, self.q)

    def __sub__(self, other):
        self._check(other)
        return FieldElement((self.value - other.value) % self.q, self.q)

    def __mul__(self, other):
        self._check(other)
        return FieldElement(self.value * other.value % self.q, self.q)

    def __truediv__(self, other):
        self._check(other)
        if other.value == 0:
            raise DivideByZero(f"division by zero in GF({self.q})")
        return FieldElement(self.value * pow(other.value, -1, self.q) % self.q, self.q)

    def __neg__(self):
        return FieldElement(-self.value % self.q, self.q)

    def __int__(self):
        return self.value

    def __repr__(self):
        return f"{self.value} (mod {self.q})"


class FieldContext:
    """Arithmetic in GF(q) for a prime q, plus matrix helpers.

    Instances hold no mutable state and may be shared between threads.
    """

    def __init__(self, q: int):
        q = int(q)
        if q < 2 or not is_prime(q):
            raise NonPrimeModulus(f"{q} is not prime")
        if q >= MAX_MODULUS:
            raise NonPrimeModulus(f"modulus {q} exceeds the supported bound 2**31")
        self.q = q

    def __repr__(self):
        return f"FieldContext(q={self.q})"

    def __eq__(self, other):
        return isinstance(other, FieldContext) and other.q == self.q

    def __hash__(self):
        return hash(("GF", self.q))

    # scalars

    def element(self, value: int) -> FieldElement:
        return FieldElement(int(value) % self.q, self.q)

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.q

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.q

    def mul(self, a: int, b: int) -> int:
        return a * b % self.q

    def inv(self, a: int) -> int:
        if a % self.q == 0:
            raise DivideByZero(f"0 has no inverse in GF({self.q})")
        return pow(int(a), -1, self.q)

    def div(self, a: int, b: int) -> int:
        return a * self.inv(b) % self.q

    def arith(self, a, b, op: str):
        """Apply ``op`` in {add, sub, mul, div} to two elements of this field.

        Accepts ints or FieldElements; returns the same kind as ``a``.
        """
        fn = {"add": self.add, "sub": self.sub, "mul": self.mul, "div": self.div}.get(op)
        if fn is None:
            raise ValueError(f"unknown operation {op!r}")
        wrap = isinstance(a, FieldElement)
        if wrap and a.q != self.q or isinstance(b, FieldElement) and b.q != self.q:
            raise TypeError("operand from a different field")
        r = fn(int(a), int(b))
        return FieldElement(r, self.q) if wrap else r

    # matrices

    def matrix(self, rows) -> np.ndarray:
        return np.asarray(rows, dtype=np.int64) % self.q

    def random_matrix(self, rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
        return rng.integers(0, self.q, size=(rows, cols), dtype=np.int64)

    def matmul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        if a.shape[1] != b.shape[0]:
            raise ValueError(f"shape mismatch {a.shape} x {b.shape}")
        out = np.zeros((a.shape[0], b.shape[1]), dtype=np.int64)
        for k in range(a.shape[1]):
            out += np.outer(a[:, k], b[k, :])
            out %= self.q
        return out

    def row_reduce(self, m: np.ndarray) -> tuple[np.ndarray, list[int]]:
        """Reduced row echelon form and pivot columns.

        Pivots are taken leftmost column first, topmost eligible row first,
        so results are reproducible.
        """
        q = self.q
        a = np.array(m, dtype=np.int64) % q
        rows, cols = a.shape
        pivots: list[int] = []
        r = 0
        for c in range(cols):
            if r == rows:
                break
            nz = np.flatnonzero(a[r:, c])
            if nz.size == 0:
                continue
            p = r + int(nz[0])
            if p != r:
                a[[r, p]] = a[[p, r]]
            a[r] = a[r] * pow(int(a[r, c]), -1, q) % q
            col = a[:, c].copy()
            col[r] = 0
            if col.any():
                a -= np.outer(col, a[r])
                a %= q
            pivots.append(c)
            r += 1
        return a, pivots

    def rank(self, m: np.ndarray) -> int:
        m = np.asarray(m)
        if m.size == 0:
            return 0
        return len(self.row_reduce(m)[1])

    def solve(self, a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Unique x with ``a @ x == rhs`` for ``a`` of full column rank."""
        a = np.asarray(a, dtype=np.int64)
        rhs = np.asarray(rhs, dtype=np.int64)
        vec = rhs.ndim == 1
        if vec:
            rhs = rhs[:, None]
        rows, cols = a.shape
        if rhs.shape[0] != rows:
            raise ValueError(f"rhs has {rhs.shape[0]} rows, expected {rows}")
        red, pivots = self.row_reduce(np.hstack([a, rhs]))
        if pivots[:cols] != list(range(cols)) or len(pivots) < cols:
            raise SingularSystem(f"coefficient matrix has rank < {cols}")
        if len(pivots) > cols:
            raise SingularSystem("inconsistent system: rhs outside the column space")
        x = red[:cols, cols:]
        return x[:, 0] if vec else x

    def full_column_rank_batch(self, mats: np.ndarray) -> np.ndarray:
        """For a stack of ``(count, rows, cols)`` matrices, which have rank ``cols``."""
        q = self.q
        a = np.array(mats, dtype=np.int64) % q
        count, rows, cols = a.shape
        ok = np.ones(count, dtype=bool)
        if cols > rows:
            return np.zeros(count, dtype=bool)
        idx = np.arange(count)
        for c in range(cols):
            nz = a[:, c:, c] != 0
            has = nz.any(axis=1)
            ok &= has
            piv = c + np.argmax(nz, axis=1)
            top = a[idx, c].copy()
            a[idx, c] = a[idx, piv]
            a[idx, piv] = top
            inv = self._inverses(a[:, c, c])
            a[:, c] = a[:, c] * inv[:, None] % q
            factors = a[:, c + 1:, c].copy()
            a[:, c + 1:] = (a[:, c + 1:] - factors[:, :, None] * a[:, c][:, None, :]) % q
        return ok

    def _inverses(self, values: np.ndarray) -> np.ndarray:
        """Elementwise inverse with 0 mapped to 0."""
        q = self.q
        if q <= 1 << 16:
            table = _INV_TABLES.get(q)
            if table is None:
                table = np.zeros(q, dtype=np.int64)
                table[1:] = [pow(x, -1, q) for x in range(1, q)]
                _INV_TABLES[q] = table
            return table[values]
        return np.array([pow(int(x), -1, q) if x else 0 for x in values], dtype=np.int64)

    def vandermonde(self, points, rows: int) -> np.ndarray:
        """``rows x len(points)`` matrix with entry (r, c) = points[c]**r."""
        pts = np.asarray(points, dtype=np.int64) % self.q
        out = np.ones((rows, len(pts)), dtype=np.int64)
        for r in range(1, rows):
            out[r] = out[r - 1] * pts % self.q
        return out


def field_context(q: int) -> FieldContext:
    return FieldContext(q)


class CountingField(FieldContext):
    """FieldContext that tallies every arithmetic call in ``ops``.

    Used as a probe wherever code must not compute.
    """

    def __init__(self, q: int):
        super().__init__(q)
        self.ops = 0

    def _tally(name):
        base = getattr(FieldContext, name)

        def counted(self, *args, **kwargs):
            self.ops += 1
            return base(self, *args, **kwargs)
        counted.__name__ = name
        return counted

    for _name in ("add", "sub", "mul", "inv", "div", "arith", "matmul", "row_reduce",
                  "rank", "solve"):
        locals()[_name] = _tally(_name)
    del _name, _tally
