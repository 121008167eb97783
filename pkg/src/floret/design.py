"""Design matrices, edge-probability vectors, and structural properties."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from floret.errors import ModelError
from floret.tree import Floret, SequentialTree

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Integer ``J x I`` matrix counting edge-parameter occurrences per leaf path.

    Rows are grouped in contiguous blocks, one per floret, in the order the
    florets were declared. Columns follow the tree's leaf order.
    """

    entries: np.ndarray
    florets: tuple[Floret, ...]
    leaf_labels: tuple[str, ...]

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.int64)
        if entries.ndim != 2:
            raise ModelError("design matrix must be two-dimensional")
        if entries.shape[0] != sum(f.arity for f in self.florets):
            raise ModelError("design matrix rows do not match floret arities")
        if entries.shape[1] != len(self.leaf_labels):
            raise ModelError("design matrix columns do not match leaf count")
        if (entries < 0).any():
            raise ModelError("design matrix entries must be non-negative")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def n_leaves(self) -> int:
        return self.entries.shape[1]

    @property
    def n_params(self) -> int:
        return self.entries.shape[0]

    @property
    def n_florets(self) -> int:
        return len(self.florets)

    @property
    def floret_ids(self) -> tuple[str, ...]:
        return tuple(f.id for f in self.florets)

    @cached_property
    def row_blocks(self) -> dict[str, slice]:
        out, start = {}, 0
        for f in self.florets:
            out[f.id] = slice(start, start + f.arity)
            start += f.arity
        return out

    def block(self, floret_id: str) -> np.ndarray:
        return self.entries[self.row_blocks[floret_id]]

    def row_labels(self) -> list[str]:
        return [f"{f.id}:{o}" for f in self.florets for o in f.outcomes]

    def reduced_labels(self) -> list[str]:
        """Labels of the non-redundant parameters (last outcome of each floret dropped)."""
        return [f"{f.id}:{o}" for f in self.florets for o in f.outcomes[:-1]]

    def reduced_index(self) -> np.ndarray:
        """Row indices of the non-redundant parameters within the full vector."""
        return np.concatenate(
            [np.arange(s.start, s.stop - 1) for s in self.row_blocks.values()]
        )


def build_design_matrix(tree: SequentialTree) -> DesignMatrix:
    """Count how often each edge parameter lies on each root-to-leaf path."""
    offset, start = {}, 0
    for f in tree.florets:
        offset[f.id] = start
        start += f.arity
    entries = np.zeros((start, tree.n_leaves), dtype=np.int64)

    def descend(k: int, counts: np.ndarray) -> None:
        node = tree.nodes[k]
        for j, child in enumerate(node.children):
            step = counts.copy()
            step[offset[node.floret] + j] += 1
            if child.is_leaf:
                entries[:, child.index] = step
            else:
                descend(child.index, step)

    descend(0, np.zeros(start, dtype=np.int64))
    return DesignMatrix(entries, tree.florets, tuple(tree.leaf_labels()))


def _rational_rank(rows: Iterable[Sequence[int | Fraction]]) -> int:
    m = [[Fraction(x) for x in row] for row in rows]
    if not m:
        return 0
    n_cols = len(m[0])
    rank = 0
    for col in range(n_cols):
        pivot = next((r for r in range(rank, len(m)) if m[r][col] != 0), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        piv = m[rank][col]
        for r in range(rank + 1, len(m)):
            factor = m[r][col] / piv
            if factor:
                m[r] = [a - factor * b for a, b in zip(m[r], m[rank])]
        rank += 1
        if rank == len(m):
            break
    return rank


def in_row_space(rows: np.ndarray, vector: Sequence[int]) -> bool:
    """Exact test of whether ``vector`` is a rational combination of ``rows``."""
    rows = [list(map(int, r)) for r in np.asarray(rows)]
    return _rational_rank(rows + [list(vector)]) == _rational_rank(rows)


def floret_has_overall_effect(m: DesignMatrix, floret_id: str) -> bool:
    """True iff the all-ones row lies in the row space of the floret's block.

    An overall effect forces the floret's exposure ratio to 1. The converse
    holds for one-floret models but not in general: a floret reached only
    through an earlier floret that has an overall effect also has ratio 1.
    """
    return in_row_space(m.block(floret_id), [1] * m.n_leaves)


def overall_effects(m: DesignMatrix) -> dict[str, bool]:
    return {f: floret_has_overall_effect(m, f) for f in m.floret_ids}


def degrees_of_freedom(m: DesignMatrix) -> int:
    df = (m.n_leaves - 1) - sum(f.arity - 1 for f in m.florets)
    if df < 0:
        raise ModelError(
            f"model has {m.n_params - m.n_florets} free parameters "
            f"but only {m.n_leaves - 1} degrees of freedom in the data"
        )
    return df


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """Edge probabilities grouped by floret.

    Every block must sum to one. Components may be zero, which represents a
    point on the simplex boundary (a boundary MLE or a degenerate simulation
    setting); operations that need an interior point check :attr:`is_interior`.
    """

    floret_ids: tuple[str, ...]
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.floret_ids) != len(self.blocks):
            raise ModelError("one probability block is needed per floret")
        frozen = []
        for fid, b in zip(self.floret_ids, self.blocks):
            b = np.array(b, dtype=float)
            if b.ndim != 1 or b.size < 2:
                raise ModelError(f"floret {fid!r}: need a vector of at least 2 probabilities")
            if not np.all(np.isfinite(b)) or (b < 0).any():
                raise ModelError(f"floret {fid!r}: probabilities must be finite and non-negative")
            if abs(b.sum() - 1.0) > SIMPLEX_TOL:
                raise ModelError(f"floret {fid!r}: probabilities sum to {b.sum()!r}, not 1")
            b.setflags(write=False)
            frozen.append(b)
        object.__setattr__(self, "blocks", tuple(frozen))

    @classmethod
    def from_mapping(
        cls,
        florets: Sequence[Floret] | DesignMatrix | SequentialTree,
        values: Mapping[str, Sequence[float]],
    ) -> ParameterVector:
        """Build from ``{floret_id: probabilities}``.

        A block may omit its last component, which is then set to one minus
        the sum of the others.
        """
        florets = tuple(getattr(florets, "florets", florets))
        unknown = set(values) - {f.id for f in florets}
        if unknown:
            raise ModelError(f"unknown florets {sorted(unknown)}")
        blocks = []
        for f in florets:
            if f.id not in values:
                raise ModelError(f"no probabilities given for floret {f.id!r}")
            v = [float(x) for x in values[f.id]]
            if len(v) == f.arity - 1:
                v.append(1.0 - sum(v))
            if len(v) != f.arity:
                raise ModelError(
                    f"floret {f.id!r} has {f.arity} outcomes, got {len(v)} probabilities"
                )
            blocks.append(v)
        return cls(tuple(f.id for f in florets), tuple(blocks))

    @classmethod
    def from_reduced(cls, m: DesignMatrix, reduced: Sequence[float]) -> ParameterVector:
        reduced = np.asarray(reduced, dtype=float)
        if reduced.size != m.n_params - m.n_florets:
            raise ModelError("reduced vector has the wrong length")
        blocks, start = [], 0
        for f in m.florets:
            head = reduced[start : start + f.arity - 1]
            blocks.append(np.append(head, 1.0 - head.sum()))
            start += f.arity - 1
        return cls(m.floret_ids, tuple(blocks))

    @classmethod
    def uniform(cls, florets: Sequence[Floret] | DesignMatrix | SequentialTree) -> ParameterVector:
        florets = tuple(getattr(florets, "florets", florets))
        return cls(
            tuple(f.id for f in florets),
            tuple(np.full(f.arity, 1.0 / f.arity) for f in florets),
        )

    def block(self, floret_id: str) -> np.ndarray:
        return self.blocks[self.floret_ids.index(floret_id)]

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(self.blocks)

    @property
    def reduced(self) -> np.ndarray:
        """Non-redundant components: every block without its last entry."""
        return np.concatenate([b[:-1] for b in self.blocks])

    @property
    def is_interior(self) -> bool:
        return all((b > 0).all() for b in self.blocks)

    def as_dict(self) -> dict[str, list[float]]:
        return {f: b.tolist() for f, b in zip(self.floret_ids, self.blocks)}

    def check_matches(self, m: DesignMatrix) -> None:
        if self.floret_ids != m.floret_ids or any(
            b.size != f.arity for b, f in zip(self.blocks, m.florets)
        ):
            raise ModelError("parameter vector does not match the design matrix florets")


def leaf_probabilities(m: DesignMatrix, theta: ParameterVector) -> np.ndarray:
    """Leaf probabilities ``p_i = prod_fj theta_fj ** mu_fji``."""
    theta.check_matches(m)
    # 0.0 ** 0 == 1, so boundary points give the limiting distribution
    p = np.prod(theta.flat[:, None] ** m.entries, axis=0)
    total = p.sum()
    if abs(total - 1.0) > 1e-10:
        raise AssertionError(f"leaf probabilities sum to {total!r}")
    return p


def leaf_probabilities_exact(m: DesignMatrix, theta: Sequence[Fraction]) -> list[Fraction]:
    """Exact leaf probabilities for a flat vector of rational edge probabilities."""
    if len(theta) != m.n_params:
        raise ModelError("parameter vector does not match the design matrix")
    out = []
    for col in m.entries.T:
        p = Fraction(1)
        for t, mu in zip(theta, col):
            if mu:
                p *= t ** int(mu)
        out.append(p)
    return out
