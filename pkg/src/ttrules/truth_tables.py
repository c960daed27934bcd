"""Truth tables of LTT blocks, one-hot don't-care masks, and two-level minimisation.

Rows are indexed MSB-first: row ``r`` assigns ``x0`` the most significant bit
of ``r`` and ``x_{n-1}`` the least significant one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CATEGORICAL
from .exceptions import ContractError
from .ttnet import MAX_PATCH_BITS, LttBlock, block_forward

# Node budget of the exact cover search; beyond it the best cover found so far is kept.
COVER_NODE_BUDGET = 20_000


def all_assignments(n: int) -> np.ndarray:
    """(2^n, n) int8 matrix; row r holds the bits of r, x0 most significant."""
    r = np.arange(2 ** n)
    return ((r[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1).astype(np.int8)


def bits_to_rows(bits) -> np.ndarray:
    """Inverse of :func:`all_assignments` along the last axis."""
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.shape[-1]
    return (bits << (n - 1 - np.arange(n))).sum(axis=-1)


@dataclass(frozen=True)
class TruthTable:
    n: int
    outputs: np.ndarray
    filter_id: int = 0

    def __post_init__(self):
        if self.n > MAX_PATCH_BITS or len(self.outputs) != 2 ** self.n:
            raise ContractError(f"truth table of length {len(self.outputs)} for n={self.n}")

    def to_hex(self) -> str:
        return bits_to_hex(self.outputs)

    @classmethod
    def from_hex(cls, text: str, n: int, filter_id: int = 0) -> "TruthTable":
        return cls(n, hex_to_bits(text, 2 ** n), filter_id)


def bits_to_hex(bits) -> str:
    bits = [int(b) for b in bits]
    width = (len(bits) + 3) // 4
    value = 0
    for b in bits:
        value = (value << 1) | b
    value <<= width * 4 - len(bits)
    return f"{value:0{width}x}"


def hex_to_bits(text: str, length: int) -> np.ndarray:
    width = (length + 3) // 4
    value = int(text, 16) >> (width * 4 - length)
    return np.array([(value >> (length - 1 - i)) & 1 for i in range(length)], dtype=np.int8)


@dataclass(frozen=True)
class DcMask:
    dont_care: np.ndarray
    patch_id: int = 0


def enumerate_block(block: LttBlock, filter_id: int = 0) -> TruthTable:
    """Evaluate the block on all 2^n input patches."""
    n = block.spec.n
    if n > MAX_PATCH_BITS:
        raise ContractError(f"cannot enumerate a {n}-input block")
    return TruthTable(n, block_forward(block, all_assignments(n)).astype(np.int8), filter_id)


def dc_mask_for_patch(schema, patch_columns, polarity=None, patch_id: int = 0) -> DcMask:
    """Rows of the patch's table that no one-hot-valid input can produce.

    ``polarity[j]`` says how bit j relates to its column: 1 if the bit equals
    the column value, 0 if it is the negation, None if the bit does not
    determine the column (that column then imposes nothing). A row is a
    don't-care iff some one-hot group has two or more of its columns set.
    """
    patch_columns = list(patch_columns)
    n = len(patch_columns)
    if polarity is None:
        polarity = [1] * n
    rows = all_assignments(n)
    dc = np.zeros(2 ** n, dtype=bool)
    members: dict[int, list[int]] = {}
    for j, c in enumerate(patch_columns):
        col = schema.columns[c]
        if col.kind == CATEGORICAL and polarity[j] is not None:
            members.setdefault(col.group_id, []).append(j)
    for bits in members.values():
        if len(bits) < 2:
            continue
        hot = sum((rows[:, j] == polarity[j]).astype(int) for j in bits)
        dc |= hot >= 2
    return DcMask(dc.astype(np.int8), patch_id)


@dataclass(frozen=True)
class Dnf:
    """OR of AND-clauses; a literal is (bit index, polarity) with polarity 1 for x, 0 for NOT x.

    No clauses means constant false; a clause without literals is constant true.
    """

    clauses: tuple[tuple[tuple[int, int], ...], ...]

    def __post_init__(self):
        seen = set()
        for clause in self.clauses:
            idx = [i for i, _ in clause]
            if len(set(idx)) != len(idx):
                raise ContractError(f"clause {clause} repeats a variable")
            key = frozenset(clause)
            if key in seen:
                raise ContractError(f"duplicate clause {clause}")
            seen.add(key)

    @classmethod
    def from_cubes(cls, cubes, n: int) -> "Dnf":
        clauses = []
        for mask, value in cubes:
            lits = [(i, (value >> (n - 1 - i)) & 1) for i in range(n) if (mask >> (n - 1 - i)) & 1]
            lits.sort(key=lambda lit: (-lit[1], lit[0]))
            clauses.append(tuple(lits))
        return cls(tuple(clauses))

    @property
    def n_literals(self) -> int:
        return sum(len(c) for c in self.clauses)

    def variables(self) -> list[int]:
        return sorted({i for c in self.clauses for i, _ in c})

    def evaluate(self, bits):
        """Truth value for bits of shape (..., n)."""
        bits = np.asarray(bits)
        out = np.zeros(bits.shape[:-1], dtype=bool)
        for clause in self.clauses:
            term = np.ones(bits.shape[:-1], dtype=bool)
            for i, pol in clause:
                term &= bits[..., i] == pol
            out |= term
        return out

    def truth_table(self, n: int) -> np.ndarray:
        return self.evaluate(all_assignments(n)).astype(np.int8)

    def to_list(self):
        return [[[i, p] for i, p in c] for c in self.clauses]

    @classmethod
    def from_list(cls, data):
        return cls(tuple(tuple((int(i), int(p)) for i, p in c) for c in data))

    def __str__(self):
        if not self.clauses:
            return "FALSE"
        parts = []
        for c in self.clauses:
            if not c:
                parts.append("TRUE")
                continue
            lits = [f"x{i}" if p else f"NOT x{i}" for i, p in c]
            parts.append("(" + " AND ".join(lits) + ")")
        return " OR ".join(parts)


def _popcount(x: int) -> int:
    return bin(x).count("1")


def prime_implicants(n: int, on, dc) -> list[tuple[int, int]]:
    """All prime implicants of on ∪ dc as (care mask, value) pairs, by merging cubes."""
    full = (1 << n) - 1
    current = {(full, m) for m in set(on) | set(dc)}
    primes = set()
    while current:
        by_mask: dict[int, set[int]] = {}
        for mask, value in current:
            by_mask.setdefault(mask, set()).add(value)
        merged, used = set(), set()
        for mask, values in by_mask.items():
            for value in values:
                bit = mask
                while bit:
                    low = bit & -bit
                    bit ^= low
                    if not value & low and (value | low) in values:
                        merged.add((mask & ~low, value))
                        used.add((mask, value))
                        used.add((mask, value | low))
        primes |= current - used
        current = merged
    return sorted(primes, key=lambda c: (_popcount(c[0]), c[0], c[1]))


def _covered_rows(cube, n):
    mask, value = cube
    free = [b for b in range(n) if not (mask >> b) & 1]
    rows = []
    for k in range(1 << len(free)):
        r = value
        for t, b in enumerate(free):
            if (k >> t) & 1:
                r |= 1 << b
        rows.append(r)
    return rows


def _exact_cover(costs, covers, universe, budget):
    """Minimum-cost subset of ``covers`` (bitsets) whose union is ``universe``.

    Branch and bound: branch on the uncovered element with fewest candidate
    sets, bound with a disjoint-element lower bound. Returns (chosen indices,
    proven_optimal).
    """
    n_sets = len(covers)
    element_sets: dict[int, list[int]] = {}
    u = universe
    while u:
        low = u & -u
        u ^= low
        element_sets[low] = [i for i in range(n_sets) if covers[i] & low]

    # greedy incumbent
    chosen, left = [], universe
    while left:
        best = min((i for i in range(n_sets) if covers[i] & left),
                   key=lambda i: (costs[i] / _popcount(covers[i] & left), i))
        chosen.append(best)
        left &= ~covers[best]
    best_sel = sorted(chosen)
    best_cost = sum(costs[i] for i in best_sel)
    nodes = 0
    exhausted = False

    def lower_bound(left):
        lb, blocked = 0, 0
        u = left
        while u:
            low = u & -u
            u ^= low
            sets = element_sets[low]
            union = 0
            for i in sets:
                union |= covers[i]
            if union & blocked:
                continue
            lb += min(costs[i] for i in sets)
            blocked |= union
        return lb

    def search(left, sel, cost):
        nonlocal best_sel, best_cost, nodes, exhausted
        if not left:
            if cost < best_cost:
                best_cost, best_sel = cost, sorted(sel)
            return
        nodes += 1
        if nodes > budget:
            exhausted = True
            return
        if cost + lower_bound(left) >= best_cost:
            return
        u, pick, fewest = left, None, None
        while u:
            low = u & -u
            u ^= low
            k = len(element_sets[low])
            if fewest is None or k < fewest:
                pick, fewest = low, k
        for i in sorted(element_sets[pick], key=lambda i: (costs[i], i)):
            sel.append(i)
            search(left & ~covers[i], sel, cost + costs[i])
            sel.pop()
            if exhausted:
                return

    search(universe, [], 0)
    return best_sel, not exhausted


def quine_mccluskey(outputs, dont_care=None, budget: int = COVER_NODE_BUDGET) -> Dnf:
    """Minimum-literal DNF agreeing with ``outputs`` on every non-don't-care row.

    Prime implicants come from iterated cube merging; the cover is chosen by an
    exact branch-and-bound search (essential primes fall out of it), with a
    greedy cover kept if the node budget runs out.
    """
    outputs = np.asarray(outputs).astype(bool)
    size = len(outputs)
    n = size.bit_length() - 1
    if size != 1 << n or n > MAX_PATCH_BITS:
        raise ContractError(f"table length {size} is not 2^n with n <= {MAX_PATCH_BITS}")
    dc = np.zeros(size, dtype=bool) if dont_care is None else np.asarray(dont_care).astype(bool)
    if len(dc) != size:
        raise ContractError("outputs and dont_care lengths differ")
    on = [int(r) for r in np.flatnonzero(outputs & ~dc)]
    if not on:
        return Dnf(())
    dcs = [int(r) for r in np.flatnonzero(dc)]
    primes = prime_implicants(n, on, dcs)
    on_bit = {r: 1 << k for k, r in enumerate(on)}
    covers, costs, kept = [], [], []
    for cube in primes:
        bits = 0
        for r in _covered_rows(cube, n):
            bits |= on_bit.get(r, 0)
        if bits:
            covers.append(bits)
            costs.append(_popcount(cube[0]))
            kept.append(cube)
    chosen, _ = _exact_cover(costs, covers, (1 << len(on)) - 1, budget)
    cubes = sorted((kept[i] for i in chosen), key=lambda c: (_popcount(c[0]), c[0], c[1]))
    return Dnf.from_cubes(cubes, n)


def realized_dont_cares(dnf: Dnf, dont_care, n: int) -> dict[int, int]:
    """Value the minimised formula assigns to each don't-care row."""
    rows = np.flatnonzero(np.asarray(dont_care).astype(bool))
    if len(rows) == 0:
        return {}
    values = dnf.evaluate(all_assignments(n)[rows])
    return {int(r): int(v) for r, v in zip(rows, values)}
