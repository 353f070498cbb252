"""Bit-packed GF(2) row spaces.

Rows are Python integers used as bitsets (bit ``i`` is variable ``i``), so XOR
of two rows is a word-parallel operation.  Insertions reduce the new row
against an echelon basis keyed by leading bit; a fully reduced form is built
lazily for canonical coset representatives.
"""

from __future__ import annotations

from collections import Counter
from math import comb, factorial
from typing import Iterable


def support_to_bits(support: Iterable[int], n: int) -> int:
    v = 0
    for i in support:
        i = int(i)
        if not 0 <= i < n:
            raise IndexError(f"index {i} out of range for n={n}")
        v ^= 1 << i
    return v


def bits_to_support(v: int) -> list[int]:
    out = []
    while v:
        low = v & -v
        out.append(low.bit_length() - 1)
        v ^= low
    return out


class Gf2System:
    """Homogeneous parity constraints on ``n`` binary variables."""

    def __init__(self, n: int):
        if n < 0:
            raise ValueError("n must be non-negative")
        self.n = n
        self.rows: list[int] = []
        self._basis: dict[int, int] = {}  # leading bit -> echelon row
        self._rref: dict[int, int] | None = None
        self._pivot_mask = 0

    def __repr__(self):
        return f"Gf2System(n={self.n}, rows={len(self.rows)}, rank={self.rank})"

    @property
    def rank(self) -> int:
        return len(self._basis)

    def copy(self) -> "Gf2System":
        other = Gf2System(self.n)
        other.rows = list(self.rows)
        other._basis = dict(self._basis)
        other._pivot_mask = self._pivot_mask
        return other

    def add_row(self, support: Iterable[int]) -> int:
        return self.add_bits(support_to_bits(support, self.n))

    def add_bits(self, v: int) -> int:
        """Insert a row given as a bitset; returns the rank increase (0 or 1)."""
        self.rows.append(v)
        basis = self._basis
        while v:
            lead = v.bit_length() - 1
            b = basis.get(lead)
            if b is None:
                basis[lead] = v
                self._pivot_mask |= 1 << lead
                self._rref = None
                return 1
            v ^= b
        return 0

    def _reduce(self, v: int) -> int:
        basis = self._basis
        while v:
            b = basis.get(v.bit_length() - 1)
            if b is None:
                return v
            v ^= b
        return 0

    def in_row_space(self, support: Iterable[int]) -> bool:
        return self.bits_in_row_space(support_to_bits(support, self.n))

    def bits_in_row_space(self, v: int) -> bool:
        return self._reduce(v) == 0

    def rref(self) -> dict[int, int]:
        """Fully reduced basis: each row carries exactly one pivot bit."""
        if self._rref is None:
            mask = self._pivot_mask
            red: dict[int, int] = {}
            for p in sorted(self._basis):
                row = self._basis[p]
                below = row & mask & ((1 << p) - 1)
                while below:
                    lead = below.bit_length() - 1
                    row ^= red[lead]
                    below ^= 1 << lead
                red[p] = row
            self._rref = red
        return self._rref

    def coset_key(self, v: int) -> int:
        """Canonical representative of ``v`` modulo the row space (zero iff in it)."""
        red = self.rref()
        piv = v & self._pivot_mask
        while piv:
            lead = piv.bit_length() - 1
            v ^= red[lead]
            piv ^= 1 << lead
        return v

    def variable_classes(self) -> list[int]:
        """Coset representative of every unit vector e_i."""
        red = self.rref()
        out = []
        for i in range(self.n):
            row = red.get(i)
            out.append((1 << i) if row is None else row ^ (1 << i))
        return out

    def determined(self) -> list[int]:
        """Variables i whose unit vector lies in the row space."""
        red = self.rref()
        return [p for p, row in red.items() if row == 1 << p]


def _even_multiplicity_counts(counts: Iterable[int], k_max: int) -> list[int]:
    """E_j = number of j-tuples over the given classes with every class used an
    even number of times, for j = 0..k_max."""
    poly = [1] + [0] * k_max
    for m in counts:
        new = list(poly)
        for a, pa in enumerate(poly):
            if pa:
                for b in range(2, k_max + 1 - a, 2):
                    new[a + b] += pa * comb(a + b, b) * m**b
        poly = new
    return poly


def _peel(class_counts: Counter) -> tuple[Counter, list[int]]:
    """Split nonzero classes into a core and a peeled part.

    A class owning a bit that no other remaining class has can only appear an
    even number of times in a zero-sum tuple; such classes are peeled
    repeatedly.  Returns (core counts, multiplicities of peeled classes).
    """
    core = Counter({c: m for c, m in class_counts.items() if c != 0})
    peeled: list[int] = []
    changed = True
    while changed and core:
        changed = False
        seen_once = 0
        seen_twice = 0
        for c in core:
            seen_twice |= seen_once & c
            seen_once |= c
        private = seen_once & ~seen_twice
        if private:
            for c in [c for c in core if c & private]:
                peeled.append(core.pop(c))
            changed = True
    return core, peeled


def _core_zero_sum_counts(core: Counter, zero_count: int, k_max: int) -> list[int]:
    """M_r = number of r-tuples over (core classes + zero class) with XOR zero."""
    items = dict(core)
    if zero_count:
        items[0] = items.get(0, 0) + zero_count
    # D[a] maps xor-value -> number of a-tuples
    dists: list[dict[int, int]] = [{0: 1}]
    half = (k_max + 1) // 2
    for _ in range(half):
        prev = dists[-1]
        nxt: dict[int, int] = {}
        for v, w in prev.items():
            for c, m in items.items():
                key = v ^ c
                nxt[key] = nxt.get(key, 0) + w * m
        dists.append(nxt)
    out = []
    for r in range(k_max + 1):
        a = r // 2
        b = r - a
        da, db = dists[a], dists[b]
        if len(da) > len(db):
            da, db = db, da
        out.append(sum(w * db.get(v, 0) for v, w in da.items()))
    return out


def zero_sum_tuple_counts(classes: Iterable[int], k_max: int) -> list[int]:
    """N_j for j = 0..k_max: number of ordered j-tuples of variables (repetition
    allowed) whose coset classes XOR to zero."""
    counts = Counter(classes)
    zero = counts.pop(0, 0)
    core, peeled = _peel(counts)
    even = _even_multiplicity_counts(peeled, k_max)
    core_counts = _core_zero_sum_counts(core, zero, k_max)
    return [
        sum(comb(j, e) * even[e] * core_counts[j - e] for e in range(0, j + 1, 2))
        for j in range(k_max + 1)
    ]


def _set_partitions_shape(k: int):
    """Yield block-size multisets of all set partitions of {1..k} with multiplicity."""
    def rec(elems):
        if not elems:
            yield []
            return
        first, rest = elems[0], elems[1:]
        for part in rec(rest):
            for i in range(len(part)):
                yield part[:i] + [[first] + part[i]] + part[i + 1:]
            yield [[first]] + part
    for part in rec(list(range(k))):
        yield [len(b) for b in part]


def distinct_zero_sum_count(classes: list[int], k: int) -> int:
    """Number of ordered k-tuples of *distinct* variables whose classes XOR to zero.

    Moebius inversion over set partitions: a block of even size cancels and
    ranges over all n variables; an odd block behaves like a single variable.
    """
    n = len(classes)
    N = zero_sum_tuple_counts(classes, k)
    total = 0
    for sizes in _set_partitions_shape(k):
        mu = 1
        for b in sizes:
            mu *= (-1) ** (b - 1) * factorial(b - 1)
        odd = sum(1 for b in sizes if b % 2)
        even = len(sizes) - odd
        total += mu * n**even * N[odd]
    return total


__all__ = [
    "Gf2System",
    "support_to_bits",
    "bits_to_support",
    "zero_sum_tuple_counts",
    "distinct_zero_sum_count",
]
