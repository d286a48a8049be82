"""Irreducible permutations, the Rauzy operations and Veech's matrices.

Permutations are stored 1-indexed: ``Permutation((3, 2, 1))`` is the map
1 -> 3, 2 -> 2, 3 -> 1.  Interval ``j`` of an interval exchange with this
combinatorics is placed at position ``pi(j)`` after the exchange.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, ValidationError

__all__ = [
    "Permutation",
    "RauzyClass",
    "RauzyEdge",
    "is_irreducible",
    "rauzy_a",
    "rauzy_b",
    "matrix_a",
    "matrix_b",
    "integer_det",
    "rauzy_class",
    "DEFAULT_CLASS_CAP",
]

DEFAULT_CLASS_CAP = 10**6


@dataclass(frozen=True, order=True)
class Permutation:
    image: tuple[int, ...]

    def __post_init__(self):
        image = tuple(int(v) for v in self.image)
        m = len(image)
        if m == 0 or sorted(image) != list(range(1, m + 1)):
            raise ValidationError(f"{self.image!r} is not a bijection of {{1..{m}}}")
        object.__setattr__(self, "image", image)

    @classmethod
    def parse(cls, text: str) -> "Permutation":
        """Parse ``"3,2,1"`` or ``"3 2 1"``."""
        parts = text.replace(",", " ").split()
        try:
            return cls(tuple(int(p) for p in parts))
        except ValueError as exc:
            raise ValidationError(f"cannot parse permutation {text!r}") from exc

    @property
    def m(self) -> int:
        return len(self.image)

    def __call__(self, j: int) -> int:
        return self.image[j - 1]

    def inverse(self, v: int) -> int:
        return self.image.index(v) + 1

    @property
    def inverse_image(self) -> tuple[int, ...]:
        inv = [0] * self.m
        for j, v in enumerate(self.image, start=1):
            inv[v - 1] = j
        return tuple(inv)

    def __str__(self):
        return "(" + " ".join(map(str, self.image)) + ")"


def is_irreducible(pi: Permutation) -> bool:
    """True iff no proper prefix ``{1..k}``, ``k < m``, is mapped onto itself."""
    running_max = 0
    for k, v in enumerate(pi.image[:-1], start=1):
        running_max = max(running_max, v)
        if running_max == k:
            return False
    return True


def _require_irreducible(pi: Permutation):
    if not is_irreducible(pi):
        raise ValidationError(f"permutation {pi} is reducible")
    if pi.m < 2:
        raise ValidationError("Rauzy operations need at least two symbols")


def rauzy_a(pi: Permutation) -> Permutation:
    _require_irreducible(pi)
    m = pi.m
    k = pi.inverse(m)
    out = []
    for j in range(1, m + 1):
        if j <= k:
            out.append(pi(j))
        elif j == k + 1:
            out.append(pi(m))
        else:
            out.append(pi(j - 1))
    return Permutation(tuple(out))


def rauzy_b(pi: Permutation) -> Permutation:
    _require_irreducible(pi)
    m = pi.m
    pm = pi(m)
    out = []
    for j in range(1, m + 1):
        v = pi(j)
        if v <= pm:
            out.append(v)
        elif v < m:
            out.append(v + 1)
        else:
            out.append(pm + 1)
    return Permutation(tuple(out))


def matrix_a(pi: Permutation) -> np.ndarray:
    """``A(pi, a) = sum_{i<=k} E_ii + E_{m,k+1} + sum_{i=k}^{m-1} E_{i,i+1}``, ``k = pi^-1(m)``."""
    _require_irreducible(pi)
    m = pi.m
    k = pi.inverse(m)
    A = np.zeros((m, m), dtype=np.int64)
    for i in range(1, k + 1):
        A[i - 1, i - 1] = 1
    A[m - 1, k] = 1
    for i in range(k, m):
        A[i - 1, i] = 1
    return A


def matrix_b(pi: Permutation) -> np.ndarray:
    """``A(pi, b) = E + E_{m,k}``, ``k = pi^-1(m)``."""
    _require_irreducible(pi)
    m = pi.m
    A = np.eye(m, dtype=np.int64)
    A[m - 1, pi.inverse(m) - 1] += 1
    return A


def integer_det(A) -> int:
    """Exact determinant of an integer matrix (fraction-free Bareiss elimination)."""
    M = [[int(v) for v in row] for row in np.asarray(A)]
    n = len(M)
    if n == 0:
        return 1
    sign = 1
    prev = 1
    for k in range(n - 1):
        if M[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if M[i][k] != 0), None)
            if swap is None:
                return 0
            M[k], M[swap] = M[swap], M[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                M[i][j] = (M[i][j] * M[k][k] - M[i][k] * M[k][j]) // prev
        prev = M[k][k]
    return sign * M[n - 1][n - 1]


@dataclass(frozen=True)
class RauzyEdge:
    source: Permutation
    label: str
    target: Permutation
    matrix: np.ndarray = field(compare=False)


@dataclass(frozen=True)
class RauzyClass:
    members: tuple[Permutation, ...]
    edges: tuple[RauzyEdge, ...]

    def __len__(self):
        return len(self.members)

    def __contains__(self, pi):
        return pi in set(self.members)

    def edge(self, source: Permutation, label: str) -> RauzyEdge:
        for e in self.edges:
            if e.source == source and e.label == label:
                return e
        raise KeyError((source, label))

    def to_dict(self) -> dict:
        return {
            "size": len(self.members),
            "members": [list(p.image) for p in self.members],
            "edges": [
                {
                    "source": list(e.source.image),
                    "label": e.label,
                    "target": list(e.target.image),
                    "matrix": e.matrix.tolist(),
                    "det": integer_det(e.matrix),
                }
                for e in self.edges
            ],
        }


def rauzy_class(pi: Permutation, cap: int = DEFAULT_CLASS_CAP) -> RauzyClass:
    """Breadth-first closure of ``pi`` under the two Rauzy operations.

    Raises BudgetError once more than ``cap`` members have been discovered.
    """
    _require_irreducible(pi)
    seen = {pi}
    order = [pi]
    edges = []
    queue = deque([pi])
    while queue:
        p = queue.popleft()
        for label, op, mat in (("a", rauzy_a, matrix_a), ("b", rauzy_b, matrix_b)):
            q = op(p)
            edges.append(RauzyEdge(p, label, q, mat(p)))
            if q not in seen:
                if len(seen) >= cap:
                    raise BudgetError(f"Rauzy class exceeds cap of {cap} members")
                seen.add(q)
                order.append(q)
                queue.append(q)
    return RauzyClass(tuple(order), tuple(edges))
