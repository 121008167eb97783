"""Sequential-design trees with floret partitions.

A model file is a JSON document::

    {
      "florets": [{"id": "infection", "outcomes": ["Yes", "No"]}],
      "tree": {"floret": "infection",
               "children": {"Yes": {"floret": "infection",
                                    "children": {"Yes": "leaf", "No": "leaf"}},
                            "No": "leaf"}}
    }

Leaves are numbered depth-first, visiting the children of every node in the
order the node's floret lists its outcomes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator, Mapping, NamedTuple

from floret.errors import ModelError

LEAF = "leaf"


@dataclass(frozen=True)
class Floret:
    """A class of nodes sharing one outcome distribution."""

    id: str
    outcomes: tuple[str, ...]

    def __post_init__(self):
        if len(self.outcomes) < 2:
            raise ModelError(
                f"floret {self.id!r} needs at least 2 outcomes, got {len(self.outcomes)}"
            )
        if len(set(self.outcomes)) != len(self.outcomes):
            raise ModelError(f"floret {self.id!r} has duplicate outcome labels")

    @property
    def arity(self) -> int:
        return len(self.outcomes)


class Child(NamedTuple):
    is_leaf: bool
    index: int  # node index, or leaf index when is_leaf


@dataclass(frozen=True)
class Node:
    floret: str
    path: tuple[str, ...]
    children: tuple[Child, ...]  # aligned with the floret's outcomes


@dataclass(frozen=True)
class SequentialTree:
    """A validated experiment tree.

    ``nodes[0]`` is the root. ``leaves[i]`` is the outcome-label path from the
    root to leaf ``i``.
    """

    florets: tuple[Floret, ...]
    nodes: tuple[Node, ...]
    leaves: tuple[tuple[str, ...], ...]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_florets(self) -> int:
        return len(self.florets)

    @property
    def floret_ids(self) -> tuple[str, ...]:
        return tuple(f.id for f in self.florets)

    def floret(self, floret_id: str) -> Floret:
        for f in self.florets:
            if f.id == floret_id:
                return f
        raise KeyError(floret_id)

    def members(self) -> dict[str, tuple[int, ...]]:
        """Node indices belonging to each floret."""
        out: dict[str, list[int]] = {f.id: [] for f in self.florets}
        for k, node in enumerate(self.nodes):
            out[node.floret].append(k)
        return {f: tuple(v) for f, v in out.items()}

    def leaf_edges(self, leaf: int) -> Iterator[tuple[str, int]]:
        """Yield ``(floret_id, outcome_index)`` for each edge on a leaf's path."""
        node = self.nodes[0]
        path = self.leaves[leaf]
        for depth, label in enumerate(path):
            j = self.floret(node.floret).outcomes.index(label)
            yield node.floret, j
            child = node.children[j]
            if child.is_leaf:
                if depth != len(path) - 1:
                    raise AssertionError("leaf path ended early")
                return
            node = self.nodes[child.index]

    def leaf_labels(self) -> list[str]:
        return ["/".join(p) for p in self.leaves]

    def leaf_index(self, label: str | tuple[str, ...]) -> int:
        path = tuple(label.split("/")) if isinstance(label, str) else tuple(label)
        try:
            return self.leaves.index(path)
        except ValueError:
            raise ModelError(f"unknown leaf path {'/'.join(path)!r}") from None

    def to_dict(self) -> dict[str, Any]:
        def build(k: int) -> dict[str, Any]:
            node = self.nodes[k]
            outcomes = self.floret(node.floret).outcomes
            return {
                "floret": node.floret,
                "children": {
                    lab: LEAF if c.is_leaf else build(c.index)
                    for lab, c in zip(outcomes, node.children)
                },
            }

        return {
            "florets": [{"id": f.id, "outcomes": list(f.outcomes)} for f in self.florets],
            "tree": build(0),
        }


def validate_tree(spec: Mapping[str, Any]) -> SequentialTree:
    """Validate a raw model description and number its leaves.

    Raises:
        ModelError: on unknown florets, arity mismatches, duplicate labels,
            cycles or shared subtrees, unused florets, or fewer than 2 leaves.
    """
    if not isinstance(spec, Mapping):
        raise ModelError("model must be a JSON object with 'florets' and 'tree'")
    if "florets" not in spec or "tree" not in spec:
        raise ModelError("model must define both 'florets' and 'tree'")

    raw_florets = spec["florets"]
    if not isinstance(raw_florets, list) or not raw_florets:
        raise ModelError("'florets' must be a non-empty array")
    florets: list[Floret] = []
    seen_ids: set[str] = set()
    for n, rf in enumerate(raw_florets):
        if not isinstance(rf, Mapping) or "id" not in rf or "outcomes" not in rf:
            raise ModelError(f"florets[{n}] must have 'id' and 'outcomes'")
        fid = str(rf["id"])
        if fid in seen_ids:
            raise ModelError(f"duplicate floret id {fid!r}")
        seen_ids.add(fid)
        if not isinstance(rf["outcomes"], list):
            raise ModelError(f"florets[{n}].outcomes must be an array")
        florets.append(Floret(fid, tuple(str(o) for o in rf["outcomes"])))
    by_id = {f.id: f for f in florets}

    nodes: list[Node | None] = []
    leaves: list[tuple[str, ...]] = []
    on_stack: set[int] = set()
    visited: set[int] = set()

    def where(path: tuple[str, ...]) -> str:
        return "tree" + "".join(f"/{p}" for p in path)

    def visit(raw: Any, path: tuple[str, ...]) -> int:
        if not isinstance(raw, Mapping):
            raise ModelError(f"{where(path)}: node must be an object or \"leaf\"")
        key = id(raw)
        if key in on_stack:
            raise ModelError(f"{where(path)}: cycle detected")
        if key in visited:
            raise ModelError(f"{where(path)}: node reachable by more than one path")
        fid = raw.get("floret")
        if fid is None:
            raise ModelError(f"{where(path)}: node has no 'floret'")
        if str(fid) not in by_id:
            raise ModelError(f"{where(path)}: unknown floret {fid!r}")
        floret = by_id[str(fid)]
        children = raw.get("children")
        if not isinstance(children, Mapping):
            raise ModelError(f"{where(path)}: 'children' must be an object")
        if len(children) != floret.arity:
            raise ModelError(
                f"{where(path)}: node declares {len(children)} children "
                f"for {floret.arity}-outcome floret {floret.id!r}"
            )
        extra = set(map(str, children)) - set(floret.outcomes)
        if extra:
            raise ModelError(
                f"{where(path)}: labels {sorted(extra)} are not outcomes of floret {floret.id!r}"
            )

        on_stack.add(key)
        visited.add(key)
        k = len(nodes)
        nodes.append(None)
        refs = []
        for label in floret.outcomes:
            sub = children[label]
            if sub == LEAF:
                refs.append(Child(True, len(leaves)))
                leaves.append(path + (label,))
            else:
                refs.append(Child(False, visit(sub, path + (label,))))
        on_stack.discard(key)
        nodes[k] = Node(floret.id, path, tuple(refs))
        return k

    visit(spec["tree"], ())

    if len(leaves) < 2:
        raise ModelError(f"tree must have at least 2 leaves, found {len(leaves)}")
    used = {n.floret for n in nodes}
    unused = [f.id for f in florets if f.id not in used]
    if unused:
        raise ModelError(f"florets {unused} are not assigned to any node")

    return SequentialTree(tuple(florets), tuple(nodes), tuple(leaves))


def parse_model(text: str, source: str = "<model>") -> SequentialTree:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return validate_tree(raw)
    except ModelError as exc:
        raise ModelError(f"{source}: {exc}") from None


def load_model(path: str | Path) -> SequentialTree:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelError(f"cannot read model file {path}: {exc.strerror}") from None
    return parse_model(text, str(path))
