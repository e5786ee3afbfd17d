"""Relationship matrices between predictors.

A relationship matrix ``R`` is built from a hierarchy of predictor groups.
For two predictors the deepest group containing both sets the strength::

    r = exp(depth / max_depth) / size

where ``depth`` is that group's depth (top-level groups have depth 1),
``size`` is the number of predictors under it and ``max_depth`` is the
deepest group depth of the whole tree.  Predictors that only share the root
get 0.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class HierarchyError(ValueError):
    pass


@dataclass
class HierarchyNode:
    """A group of predictors.

    ``members`` are the predictor indices placed directly in this group;
    predictors in ``children`` belong to this group as well.
    """

    name: str
    children: list["HierarchyNode"] = field(default_factory=list)
    members: list[int] = field(default_factory=list)

    def all_members(self) -> list[int]:
        out = list(self.members)
        for child in self.children:
            out.extend(child.all_members())
        return out

    def to_dict(self) -> dict:
        d: dict = {"name": self.name}
        if self.members:
            d["members"] = list(self.members)
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HierarchyNode":
        return cls(
            name=str(d.get("name", "")),
            children=[cls.from_dict(c) for c in d.get("children", [])],
            members=[int(m) for m in d.get("members", [])],
        )


def _walk(node: HierarchyNode, depth: int, path: tuple, out: dict):
    if not node.members and not node.children:
        raise HierarchyError(f"group {node.name!r} is empty")
    for m in node.members:
        if m in out:
            raise HierarchyError(f"predictor {m} appears in more than one group")
        out[m] = (depth, path)
    for k, child in enumerate(node.children):
        _walk(child, depth + 1, path + (k,), out)


def build_relationship_matrix(tree: HierarchyNode) -> np.ndarray:
    """Relationship matrix for the predictors indexed in ``tree``.

    ``tree`` is the root (depth 0).  Predictor indices must be exactly
    ``0..p-1``.
    """
    placement: dict[int, tuple[int, tuple]] = {}
    _walk(tree, 0, (), placement)
    p = len(placement)
    if sorted(placement) != list(range(p)):
        raise HierarchyError("predictor indices must be contiguous from 0")
    max_depth = max(d for d, _ in placement.values())
    if max_depth == 0:
        return np.zeros((p, p))

    # subtree sizes keyed by path
    sizes: dict[tuple, int] = {}
    for _, path in placement.values():
        for k in range(len(path) + 1):
            sizes[path[:k]] = sizes.get(path[:k], 0) + 1

    paths = [placement[j][1] for j in range(p)]
    R = np.zeros((p, p))
    for j in range(p):
        for k in range(j + 1, p):
            a, b = paths[j], paths[k]
            depth = 0
            while depth < min(len(a), len(b)) and a[depth] == b[depth]:
                depth += 1
            if depth == 0:
                continue
            val = math.exp(depth / max_depth) / sizes[a[:depth]]
            R[j, k] = R[k, j] = val
    return R


def simulation_tree(blocks: int = 15, block_size: int = 20) -> HierarchyNode:
    """Block hierarchy of the simulation design.

    Each block of ``block_size`` predictors is split in quarters: the first
    quarter sits directly in the block, the second forms a subcategory, and
    the last half forms a second subcategory whose final quarter is a
    sub-subcategory.
    """
    if block_size % 4:
        raise HierarchyError("block_size must be divisible by 4")
    q = block_size // 4
    root = HierarchyNode("root")
    for b in range(blocks):
        o = b * block_size
        sub_a = HierarchyNode(f"block{b + 1}.a", members=list(range(o + q, o + 2 * q)))
        subsub = HierarchyNode(f"block{b + 1}.b.1", members=list(range(o + 3 * q, o + 4 * q)))
        sub_b = HierarchyNode(f"block{b + 1}.b", children=[subsub],
                              members=list(range(o + 2 * q, o + 3 * q)))
        root.children.append(HierarchyNode(f"block{b + 1}", children=[sub_a, sub_b],
                                           members=list(range(o, o + q))))
    return root


def simulation_R(blocks: int = 15, block_size: int = 20) -> np.ndarray:
    return build_relationship_matrix(simulation_tree(blocks, block_size))


def validate_relationship_matrix(R, atol: float = 1e-12) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError(f"relationship matrix must be square, got shape {R.shape}")
    if not np.all(np.isfinite(R)):
        raise ValueError("relationship matrix has non-finite entries")
    if not np.allclose(R, R.T, atol=atol, rtol=0):
        raise ValueError("relationship matrix must be symmetric")
    if np.any(np.abs(np.diag(R)) > atol):
        raise ValueError("relationship matrix must have a zero diagonal")
    if np.any(R < -atol):
        raise ValueError("relationship matrix entries must be non-negative")
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 0.0)
    return np.maximum(R, 0.0)


# ---------------------------------------------------------------------------
# file formats

_TEXT_LINE = re.compile(r"^(?P<indent>\s*)(?P<name>[^:]+?)\s*(?::\s*(?P<members>.*))?$")


def parse_hierarchy_text(text: str) -> HierarchyNode:
    """Parse an indented hierarchy.

    One group per line, children indented deeper than their parent.  Direct
    members follow a colon as whitespace- or comma-separated indices::

        fruit: 0 1
          citrus: 2 3
        dairy
          fermented: 4
    """
    root = HierarchyNode("root")
    stack: list[tuple[int, HierarchyNode]] = [(-1, root)]
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        m = _TEXT_LINE.match(raw.rstrip())
        if m is None:
            raise HierarchyError(f"line {lineno}: cannot parse {raw!r}")
        indent = len(m.group("indent").expandtabs(4))
        members = []
        if m.group("members"):
            try:
                members = [int(t) for t in re.split(r"[\s,]+", m.group("members").strip()) if t]
            except ValueError as exc:
                raise HierarchyError(f"line {lineno}: members must be integers") from exc
        node = HierarchyNode(m.group("name").strip(), members=members)
        while stack[-1][0] >= indent:
            stack.pop()
        stack[-1][1].children.append(node)
        stack.append((indent, node))
    return root


def load_hierarchy(path) -> HierarchyNode:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        return HierarchyNode.from_dict(json.loads(text))
    return parse_hierarchy_text(text)


def write_R_csv(path, R: np.ndarray, names=None) -> None:
    p = R.shape[0]
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(p)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in R:
            w.writerow([repr(float(v)) for v in row])


def read_R_csv(path) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty relationship matrix file")
    names = rows[0]
    try:
        R = np.array([[float(v) for v in row] for row in rows[1:]])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry in relationship matrix") from exc
    if R.shape != (len(names), len(names)):
        raise ValueError(f"{path}: expected a {len(names)}x{len(names)} matrix, got {R.shape}")
    return validate_relationship_matrix(R), names
