"""Code parameters, the storage/bandwidth tradeoff and the field-size bound."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

from .errors import FieldTooSmall, InvalidParams
from .field import is_prime, next_prime


@dataclass(frozen=True)
class TradeoffPoint:
    ell: int
    alpha: Fraction
    beta: Fraction


@dataclass(frozen=True)
class SystemParams:
    """One code instance with beta normalized to 1 and d = n - 1."""

    n: int
    k: int
    ell: int
    q: int
    alpha: int
    B: int
    d: int
    beta: int = 1

    @property
    def num_symbols(self) -> int:
        return self.n * self.alpha

    def column(self, node: int, j: int) -> int:
        """Column of node ``node`` (1-based), symbol ``j`` (1-based) in E."""
        return (node - 1) * self.alpha + (j - 1)

    def symbol(self, column: int) -> tuple[int, int]:
        """(node, j) of a column of E, both 1-based."""
        return column // self.alpha + 1, column % self.alpha + 1

    def node_columns(self, node: int) -> list[int]:
        start = (node - 1) * self.alpha
        return list(range(start, start + self.alpha))

    def group_columns(self, nodes) -> list[int]:
        return [c for i in sorted(nodes) for c in self.node_columns(i)]

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "ell": self.ell, "q": self.q,
                "alpha": self.alpha, "B": self.B, "d": self.d, "beta": self.beta}

    @classmethod
    def from_dict(cls, data: dict, allow_small_field: bool = False) -> "SystemParams":
        p = normalized_params(data["n"], data["k"], data["ell"], data["q"],
                              allow_small_field=allow_small_field)
        for key in ("alpha", "B", "d"):
            if key in data and data[key] != getattr(p, key):
                raise InvalidParams(f"{key}={data[key]} inconsistent with (n, k, ell)")
        return p


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def tradeoff_bound(alpha, beta, k: int, d: int) -> Fraction:
    """Largest file size supportable with storage ``alpha`` and per-helper bandwidth ``beta``."""
    alpha, beta = _frac(alpha), _frac(beta)
    if alpha <= 0 or beta <= 0:
        raise InvalidParams("alpha and beta must be positive")
    if not 1 <= k <= d:
        raise InvalidParams(f"need 1 <= k <= d, got k={k}, d={d}")
    return sum((min(alpha, (d - i + 1) * beta) for i in range(1, k + 1)), Fraction(0))


def vertex_point(ell: int, B, k: int, d: int) -> TradeoffPoint:
    """The ``ell``-th corner of the tradeoff curve for file size ``B``.

    ``ell = k`` is the minimum-storage corner, ``ell = 1`` the
    minimum-bandwidth one.
    """
    if not 1 <= ell <= k <= d:
        raise InvalidParams(f"need 1 <= ell <= k <= d, got ell={ell}, k={k}, d={d}")
    B = _frac(B)
    if B <= 0:
        raise InvalidParams("file size must be positive")
    scale = 2 * B / (2 * k * (d - ell + 1) - (k - ell) * (k - ell + 1))
    return TradeoffPoint(ell=ell, alpha=scale * (d - ell + 1), beta=scale)


def tradeoff_vertices(B, k: int, d: int) -> list[TradeoffPoint]:
    return [vertex_point(ell, B, k, d) for ell in range(1, k + 1)]


def min_field_size(n: int, alpha: int, B: int) -> int:
    """Field size sufficient for the coefficient search to always have a solution."""
    if n < 1 or alpha < 1 or B < 1:
        raise InvalidParams("n, alpha and B must be positive")
    if B > n * alpha:
        raise InvalidParams(f"B={B} exceeds n*alpha={n * alpha}")
    return comb(n * alpha, B) - comb((n - 1) * alpha, B)


def file_size(n: int, k: int, ell: int) -> int:
    alpha = n - ell
    return k * alpha - (k - ell) * (k - ell + 1) // 2


def normalized_params(n: int, k: int, ell: int, q: int,
                      allow_small_field: bool = False) -> SystemParams:
    """Integer parameters at tradeoff corner ``ell`` with beta = 1 and d = n - 1.

    Raises FieldTooSmall when q is below :func:`min_field_size` unless
    ``allow_small_field`` is set; q must be prime either way.
    """
    d = n - 1
    if not 1 <= ell <= k <= d:
        raise InvalidParams(f"need 1 <= ell <= k <= n-1, got n={n}, k={k}, ell={ell}")
    if not is_prime(q):
        raise InvalidParams(f"q={q} is not prime")
    alpha = n - ell
    B = file_size(n, k, ell)
    if tradeoff_bound(alpha, 1, k, d) != B:
        raise InvalidParams("normalized parameters do not meet the tradeoff bound with equality")
    bound = min_field_size(n, alpha, B)
    if q < bound and not allow_small_field:
        raise FieldTooSmall(q, bound)
    return SystemParams(n=n, k=k, ell=ell, q=q, alpha=alpha, B=B, d=d)


def auto_field_size(n: int, k: int, ell: int) -> int:
    """Smallest prime meeting both the coefficient-search bound and the
    distinct-point requirement of the initial Vandermonde encoding."""
    alpha = n - ell
    B = file_size(n, k, ell)
    return next_prime(max(min_field_size(n, alpha, B), n * alpha + 1))
