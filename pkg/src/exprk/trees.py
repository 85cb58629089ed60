"""Rooted trees indexing the stiff order conditions.

Three node flavours appear:

  * a white leaf standing for the first derivative of the solution,
  * higher-derivative leaves (representable but never enumerated into
    conditions), and
  * black interior nodes combining child trees.

Two families matter for the condition table: trees whose children are all
white leaves ("quadrature" trees, one per order) and trees with at least one
non-leaf child ("nested" trees). Enumeration up to order 6 yields 36 trees,
and 16 up to order 5; these counts are asserted hard in the test suite.

Trees are immutable and canonical: children are stored sorted under a fixed
total order, so structurally equal trees compare and hash equal.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import factorial, prod

__all__ = [
    "Tree",
    "LEAF",
    "leaf",
    "bullet",
    "node",
    "quadrature_tree",
    "TreeTable",
    "enumerate_trees",
]


@dataclass(frozen=True)
class Tree:
    """A rooted tree in canonical form.

    kind is "white" (leaf), "bullet" (k-th derivative leaf, k >= 2) or
    "node" (black interior vertex with a sorted tuple of children).
    """

    kind: str
    k: int = 0
    children: tuple["Tree", ...] = field(default=())

    def __post_init__(self):
        if self.kind == "white":
            if self.k or self.children:
                raise ValueError("white leaf carries no data")
        elif self.kind == "bullet":
            if self.k < 2 or self.children:
                raise ValueError("derivative leaf needs k >= 2 and no children")
        elif self.kind == "node":
            if not self.children:
                raise ValueError("interior node needs at least one child")
        else:
            raise ValueError(f"unknown tree kind {self.kind!r}")

    # -- structural queries ------------------------------------------------

    @property
    def order(self) -> int:
        return _order(self)

    @property
    def symmetry(self) -> int:
        return _symmetry(self)

    def is_quadrature(self) -> bool:
        """All children are white leaves (the single b-weight tree per order)."""
        return self.kind == "node" and all(c.kind == "white" for c in self.children)

    def is_nested(self) -> bool:
        """Interior tree with at least one non-leaf child, recursively valid."""
        if self.kind != "node":
            return False
        if all(c.kind == "white" for c in self.children):
            return False
        return all(
            c.kind == "white" or c.is_quadrature() or c.is_nested()
            for c in self.children
        )

    def sort_key(self):
        return _sort_key(self)

    def bracket(self) -> str:
        """Serialized form, e.g. "[•,•]" or "[[•],•]"."""
        if self.kind == "white":
            return "•"
        if self.kind == "bullet":
            return f"•^{self.k}"
        return "[" + ",".join(c.bracket() for c in self.children) + "]"

    def __repr__(self):
        return f"Tree({self.bracket()})"


@functools.cache
def _order(t: Tree) -> int:
    if t.kind == "white":
        return 1
    if t.kind == "bullet":
        return t.k
    return 1 + sum(_order(c) for c in t.children)


@functools.cache
def _symmetry(t: Tree) -> int:
    if t.kind in ("white", "bullet"):
        return factorial(_order(t))
    sym = 1
    for child, count in _child_classes(t):
        sym *= factorial(count) * _symmetry(child) ** count
    return sym


def _child_classes(t: Tree):
    classes: list[tuple[Tree, int]] = []
    for c in t.children:
        if classes and classes[-1][0] == c:
            classes[-1] = (c, classes[-1][1] + 1)
        else:
            classes.append((c, 1))
    return classes


@functools.cache
def _sort_key(t: Tree):
    if t.kind == "white":
        return (0, 0, ())
    if t.kind == "bullet":
        return (1, t.k, ())
    return (2, _order(t), tuple(_sort_key(c) for c in t.children))


LEAF = Tree("white")


def leaf() -> Tree:
    return LEAF


def bullet(k: int) -> Tree:
    return Tree("bullet", k=k)


def node(*children: Tree) -> Tree:
    """Interior node; children are canonicalized, larger subtrees first."""
    return Tree("node", children=tuple(sorted(children, key=_sort_key, reverse=True)))


def quadrature_tree(q: int) -> Tree:
    """The order-q tree whose q-1 children are all white leaves."""
    if q < 2:
        raise ValueError("quadrature trees start at order 2")
    return node(*([LEAF] * (q - 1)))


@dataclass(frozen=True)
class TreeTable:
    """All condition trees up to max_order in the stable numbering.

    Sorted by order; within each order the quadrature tree comes first,
    then nested trees in canonical key order. Numbering is 1-based.
    """

    max_order: int
    trees: tuple[Tree, ...]

    def __len__(self):
        return len(self.trees)

    def __iter__(self):
        return iter(self.trees)

    def number_of(self, t: Tree) -> int:
        return self.trees.index(t) + 1

    def counts_per_order(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for t in self.trees:
            counts[t.order] = counts.get(t.order, 0) + 1
        return counts


def _nested_trees_of_order(q: int, universe: dict[int, list[Tree]]) -> list[Tree]:
    """All nested trees of order q given child candidates per order < q."""
    found = set()
    target = q - 1

    def compositions(remaining: int, max_part: int):
        # weakly decreasing child-order lists summing to `remaining`
        if remaining == 0:
            yield ()
            return
        for part in range(min(remaining, max_part), 0, -1):
            for rest in compositions(remaining - part, part):
                yield (part,) + rest

    for orders in compositions(target, target):
        if all(o == 1 for o in orders):
            continue  # all-leaf children form the quadrature tree
        pools = {}
        for o in set(orders):
            pools[o] = universe[o]
        # choose a multiset of children per repeated order block
        def expand(i, chosen):
            if i == len(orders):
                found.add(node(*chosen))
                return
            o = orders[i]
            run = 1
            while i + run < len(orders) and orders[i + run] == o:
                run += 1
            for combo in combinations_with_replacement(pools[o], run):
                expand(i + run, chosen + list(combo))

        expand(0, [])
    return sorted(found, key=_sort_key)


def enumerate_trees(p: int) -> TreeTable:
    """Duplicate-free table of all condition trees with order <= p."""
    if not 2 <= p <= 8:
        raise ValueError("tree enumeration supports orders 2..8")
    universe: dict[int, list[Tree]] = {1: [LEAF]}
    per_order: dict[int, list[Tree]] = {}
    for q in range(2, p + 1):
        nested = _nested_trees_of_order(q, universe)
        per_order[q] = [quadrature_tree(q)] + nested
        universe[q] = per_order[q]
    trees: list[Tree] = []
    for q in range(2, p + 1):
        trees.extend(per_order[q])
    return TreeTable(max_order=p, trees=tuple(trees))
