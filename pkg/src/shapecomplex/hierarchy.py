"""Label trees: the source, super-labels (branches) and leaves.

Label ids are dense integers ``0..n-1`` and id 0 is always the source.
Children keep insertion order, which makes every traversal (and therefore
every solver run) reproducible.
"""
from collections import deque

from .exceptions import (
    CycleDetected,
    DegenerateHierarchy,
    DisconnectedLabel,
    InvalidHierarchy,
    MultipleParents,
    UnknownLabel,
)

SOURCE = 0
SOURCE_NAME = "source"


class LabelHierarchy:
    """Immutable rooted label tree.

    Build instances with :func:`build_hierarchy` or :meth:`from_records`;
    the constructor assumes its inputs were already validated.
    """

    __slots__ = ("_parent", "_children", "_names", "_leaves", "_top_down")

    def __init__(self, parent, children, names):
        self._parent = tuple(parent)
        self._children = tuple(tuple(c) for c in children)
        self._names = tuple(names)
        self._leaves = tuple(
            i for i in range(len(self._children)) if i != SOURCE and not self._children[i]
        )
        self._top_down = _bfs(self._children)

    @classmethod
    def from_records(cls, records):
        """Build from ``[{"name": ..., "parent": ...}, ...]``.

        ``"source"`` is the reserved root name; label ids follow record order
        starting at 1.
        """
        names = [SOURCE_NAME]
        for rec in records:
            try:
                name, parent = rec["name"], rec["parent"]
            except (KeyError, TypeError) as exc:
                raise InvalidHierarchy(f"bad hierarchy record {rec!r}") from exc
            if name == SOURCE_NAME:
                raise InvalidHierarchy('"source" is a reserved label name')
            if name in names:
                raise MultipleParents(f"label {name!r} declared twice")
            names.append(name)
        index = {n: i for i, n in enumerate(names)}
        edges = []
        for rec in records:
            if rec["parent"] not in index:
                raise DisconnectedLabel(f"unknown parent {rec['parent']!r} for {rec['name']!r}")
            edges.append((index[rec["parent"]], index[rec["name"]]))
        return build_hierarchy(edges, names=names)

    def to_records(self):
        return [
            {"name": self._names[i], "parent": self._names[self._parent[i]]}
            for i in range(1, self.n_labels)
        ]

    def edges(self):
        return [(self._parent[i], i) for i in self._top_down if i != SOURCE]

    @property
    def n_labels(self):
        return len(self._children)

    @property
    def names(self):
        return self._names

    @property
    def leaves(self):
        return self._leaves

    @property
    def branches(self):
        return tuple(i for i in self._top_down if i != SOURCE and self._children[i])

    def parent(self, label):
        self._check(label)
        if label == SOURCE:
            raise UnknownLabel("the source has no parent")
        return self._parent[label]

    def children(self, label):
        self._check(label)
        return self._children[label]

    def is_leaf(self, label):
        self._check(label)
        return label != SOURCE and not self._children[label]

    def is_branch(self, label):
        self._check(label)
        return label != SOURCE and bool(self._children[label])

    def label_id(self, name):
        try:
            return self._names.index(name)
        except ValueError:
            raise UnknownLabel(name) from None

    def depth(self):
        depth = {SOURCE: 0}
        for label in self._top_down[1:]:
            depth[label] = depth[self._parent[label]] + 1
        return max(depth.values())

    def _check(self, label):
        if not isinstance(label, int) or not 0 <= label < self.n_labels:
            raise UnknownLabel(label)

    def __eq__(self, other):
        if not isinstance(other, LabelHierarchy):
            return NotImplemented
        return (self._parent, self._children, self._names) == (
            other._parent, other._children, other._names)

    def __hash__(self):
        return hash((self._parent, self._children, self._names))

    def __repr__(self):
        return f"LabelHierarchy({self.to_records()!r})"


def _bfs(children):
    order = []
    queue = deque([SOURCE])
    while queue:
        label = queue.popleft()
        order.append(label)
        queue.extend(children[label])
    return tuple(order)


def build_hierarchy(edges, names=None):
    """Validate a ``(parent, child)`` edge list and return a :class:`LabelHierarchy`.

    Raises :class:`CycleDetected`, :class:`MultipleParents`,
    :class:`DisconnectedLabel` or :class:`DegenerateHierarchy`.
    """
    edges = [(int(p), int(c)) for p, c in edges]
    if not edges:
        raise DegenerateHierarchy("empty edge list")

    parent = {}
    for p, c in edges:
        if p == c:
            raise CycleDetected(f"label {c} is its own parent")
        if c in parent and parent[c] != p:
            raise MultipleParents(f"label {c} has parents {parent[c]} and {p}")
        parent[c] = p
    if SOURCE in parent:
        raise CycleDetected("the source cannot have a parent")

    ids = {SOURCE} | {p for p, _ in edges} | {c for _, c in edges}
    n = max(ids) + 1
    if min(ids) < 0 or len(ids) != n:
        missing = sorted(set(range(n)) - ids)
        raise DisconnectedLabel(f"label ids must be dense 0..{n - 1}; missing {missing}")

    for label in range(1, n):
        seen = {label}
        node = label
        while node != SOURCE:
            if node not in parent:
                raise DisconnectedLabel(f"label {label} is not connected to the source")
            node = parent[node]
            if node in seen:
                raise CycleDetected(f"cycle through label {node}")
            seen.add(node)

    children = [[] for _ in range(n)]
    for p, c in edges:
        if c not in children[p]:
            children[p].append(c)

    root_children = children[SOURCE]
    if len(root_children) < 2 and not any(children[c] for c in root_children):
        raise DegenerateHierarchy("a single leaf under the source is forced to 1 everywhere")

    if names is None:
        names = [SOURCE_NAME] + [f"L{i}" for i in range(1, n)]
    elif len(names) != n:
        raise InvalidHierarchy(f"{len(names)} names given for {n} labels")
    parents = [-1] + [parent[i] for i in range(1, n)]
    return LabelHierarchy(parents, children, names)


def top_down_order(h):
    """Every parent before any of its children (breadth first, insertion order)."""
    return list(h._top_down)


def bottom_up_order(h):
    return list(reversed(h._top_down))


def descendant_leaves(h, label):
    """Leaves in the subtree rooted at ``label``; ``{label}`` for a leaf."""
    h._check(label)
    if h.is_leaf(label):
        return {label}
    out = set()
    stack = list(h.children(label))
    while stack:
        node = stack.pop()
        kids = h.children(node)
        if kids:
            stack.extend(kids)
        else:
            out.add(node)
    return out


def flat_hierarchy(n_leaves, names=None):
    """Potts-style tree: ``n_leaves`` leaves directly under the source."""
    edges = [(SOURCE, i) for i in range(1, n_leaves + 1)]
    if names is not None:
        names = [SOURCE_NAME] + list(names)
    return build_hierarchy(edges, names=names)
