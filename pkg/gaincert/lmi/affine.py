"""Affine expressions in decision variables and symmetric matrices built from them.

There is no product of two AffineExpr, so everything assembled here is affine.
"""

from typing import Dict, Iterable, Iterator, Mapping, Optional, Tuple

import numpy as np


class AffineExpr:
    """
    constant + sum_k coef_k * x[var_k].

    Attributes:
        constant (float): Constant term.
        terms (Dict[int, float]): Variable id to coefficient; zero coefficients are dropped.
    """

    __slots__ = ('constant', 'terms')

    def __init__(self, constant: float = 0.0, terms: Optional[Mapping[int, float]] = None):
        self.constant = float(constant)
        self.terms: Dict[int, float] = {}
        for var, coef in (terms or {}).items():
            coef = float(coef)
            if not np.isfinite(coef):
                raise ValueError(f"Non-finite coefficient {coef} for variable {var}")
            if coef != 0.0:
                self.terms[int(var)] = self.terms.get(int(var), 0.0) + coef
        if not np.isfinite(self.constant):
            raise ValueError(f"Non-finite constant {self.constant}")

    @classmethod
    def var(cls, var_id: int, coef: float = 1.0) -> 'AffineExpr':
        return cls(0.0, {var_id: coef})

    @classmethod
    def combination(cls, coefs: Iterable[float], var_ids: Iterable[int], constant: float = 0.0) -> 'AffineExpr':
        """constant + sum coefs[k] * x[var_ids[k]], merging repeated ids."""
        terms: Dict[int, float] = {}
        for coef, var in zip(coefs, var_ids):
            terms[int(var)] = terms.get(int(var), 0.0) + float(coef)
        return cls(constant, terms)

    @property
    def is_constant(self) -> bool:
        return not self.terms

    def variables(self) -> Tuple[int, ...]:
        return tuple(sorted(self.terms))

    def evaluate(self, x: np.ndarray) -> float:
        return self.constant + sum(coef * x[var] for var, coef in self.terms.items())

    def __add__(self, other) -> 'AffineExpr':
        if not isinstance(other, AffineExpr):
            return AffineExpr(self.constant + float(other), self.terms)
        terms = dict(self.terms)
        for var, coef in other.terms.items():
            terms[var] = terms.get(var, 0.0) + coef
        return AffineExpr(self.constant + other.constant, terms)

    __radd__ = __add__

    def __neg__(self) -> 'AffineExpr':
        return AffineExpr(-self.constant, {var: -coef for var, coef in self.terms.items()})

    def __sub__(self, other) -> 'AffineExpr':
        return self + (-other)

    def __rsub__(self, other) -> 'AffineExpr':
        return (-self) + other

    def __mul__(self, scalar: float) -> 'AffineExpr':
        scalar = float(scalar)
        return AffineExpr(self.constant * scalar, {var: coef * scalar for var, coef in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, AffineExpr):
            return self.is_constant and self.constant == other
        return self.constant == other.constant and self.terms == other.terms

    def __hash__(self):
        return hash((self.constant, tuple(sorted(self.terms.items()))))

    def __repr__(self) -> str:
        parts = [f"{self.constant:g}"] + [f"{coef:+g}*x[{var}]" for var, coef in sorted(self.terms.items())]
        return f"AffineExpr({' '.join(parts)})"


ZERO = AffineExpr()


class AffineMatrix:
    """
    Symmetric dim x dim matrix with AffineExpr entries; only the lower triangle is stored.

    Attributes:
        dim (int): Matrix dimension.
        entries (Dict[Tuple[int, int], AffineExpr]): Non-zero lower-triangle entries keyed (row, col), row >= col.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"Matrix dimension must be positive, got {dim}")
        self.dim = dim
        self.entries: Dict[Tuple[int, int], AffineExpr] = {}

    @staticmethod
    def _key(row: int, col: int) -> Tuple[int, int]:
        return (row, col) if row >= col else (col, row)

    def __getitem__(self, index: Tuple[int, int]) -> AffineExpr:
        return self.entries.get(self._key(*index), ZERO)

    def __setitem__(self, index: Tuple[int, int], value):
        row, col = index
        if not (0 <= row < self.dim and 0 <= col < self.dim):
            raise IndexError(f"Entry {index} outside a {self.dim}x{self.dim} matrix")
        value = value if isinstance(value, AffineExpr) else AffineExpr(value)
        key = self._key(row, col)
        if value == ZERO:
            self.entries.pop(key, None)
        else:
            self.entries[key] = value

    def set_diagonal(self, start: int, size: int, value):
        for k in range(start, start + size):
            self[k, k] = value

    def lower_entries(self) -> Iterator[Tuple[int, int, AffineExpr]]:
        """Stored entries sorted column-major over the lower triangle."""
        for (row, col) in sorted(self.entries, key=lambda rc: (rc[1], rc[0])):
            yield row, col, self.entries[(row, col)]

    def variables(self) -> Tuple[int, ...]:
        found = set()
        for expr in self.entries.values():
            found.update(expr.terms)
        return tuple(sorted(found))

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Numeric symmetric matrix at decision vector x."""
        out = np.zeros((self.dim, self.dim))
        for (row, col), expr in self.entries.items():
            out[row, col] = out[col, row] = expr.evaluate(x)
        return out

    def max_eigenvalue(self, x: np.ndarray) -> float:
        return float(np.linalg.eigvalsh(self.evaluate(x))[-1])

    @classmethod
    def from_constant(cls, matrix: np.ndarray) -> 'AffineMatrix':
        matrix = np.asarray(matrix, dtype=float)
        out = cls(matrix.shape[0])
        for row in range(out.dim):
            for col in range(row + 1):
                out[row, col] = matrix[row, col]
        return out
