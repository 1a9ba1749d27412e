"""Dependency resolution, the rebuild set, and deterministic build ordering.

Edges point dependent -> dependency. Exactly one version of each dependency
name is resolved per graph: the constraints of every dependent are intersected
over the corpus versions and the maximum surviving version wins, so
conflicting exact pins surface as UnsatisfiableConstraint instead of a
diamond.
"""
from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass, field

from .errors import (
    DependencyCycle,
    UnknownDependency,
    UnknownNode,
    UnsatisfiableConstraint,
)
from .recipes import Corpus
from .targets import Target
from .versions import VersionConstraint, max_version

Node = tuple[str, str]


@dataclass(frozen=True)
class DependencyGraph:
    nodes: frozenset[Node]
    edges: frozenset[tuple[Node, Node]]

    def direct_deps(self, node: Node) -> list[Node]:
        return sorted(dep for (src, dep) in self.edges if src == node)

    def direct_dependents(self, node: Node) -> list[Node]:
        return sorted(src for (src, dep) in self.edges if dep == node)


@dataclass(frozen=True)
class BuildPlan:
    """Ordered (name, version, target) jobs for one commit event."""

    jobs: tuple[tuple[str, str, Target], ...]
    rationale: dict[Node, str] = field(default_factory=dict)
    event_id: str = ""

    def lines(self) -> list[str]:
        from .targets import target_id

        return [
            f"{name}/{version} {target_id(t)} {self.rationale[(name, version)]}"
            for name, version, t in self.jobs
        ]


def resolve_constraint(c: VersionConstraint, available: set[str]) -> str:
    """Maximum available version satisfying ``c``."""
    satisfying = [v for v in available if c.accepts(v)]
    if not satisfying:
        raise UnsatisfiableConstraint(
            f"no version satisfies {c} among {sorted(available)}"
        )
    return max_version(satisfying)


def build_graph(corpus: Corpus) -> DependencyGraph:
    """Resolve every dependency against the corpus and verify acyclicity."""
    constraints: dict[str, list[tuple[Node, VersionConstraint]]] = defaultdict(list)
    for recipe in corpus.recipes.values():
        for dep in recipe.dependencies:
            available = corpus.versions_of(dep.name)
            if not available:
                raise UnknownDependency(
                    f"{recipe.name}/{recipe.version} depends on unknown {dep.name!r}"
                )
            constraints[dep.name].append((recipe.key, dep.constraint))

    chosen: dict[str, str] = {}
    for name, wanted in constraints.items():
        available = corpus.versions_of(name)
        satisfying = [
            v for v in available if all(c.accepts(v) for (_, c) in wanted)
        ]
        if not satisfying:
            detail = ", ".join(f"{n}/{v} wants {c}" for ((n, v), c) in wanted)
            raise UnsatisfiableConstraint(
                f"no version of {name} satisfies all of: {detail} "
                f"(available: {sorted(available)})"
            )
        chosen[name] = max_version(satisfying)

    edges = set()
    for recipe in corpus.recipes.values():
        for dep in recipe.dependencies:
            edges.add((recipe.key, (dep.name, chosen[dep.name])))

    graph = DependencyGraph(
        nodes=frozenset(corpus.recipes), edges=frozenset(edges)
    )
    cycle = _find_cycle(graph)
    if cycle:
        raise DependencyCycle(cycle)
    return graph


def _find_cycle(graph: DependencyGraph) -> list[Node] | None:
    adjacency = defaultdict(list)
    for src, dep in graph.edges:
        adjacency[src].append(dep)
    state: dict[Node, int] = {}  # 1 = on stack, 2 = done
    stack: list[Node] = []

    def visit(node: Node) -> list[Node] | None:
        state[node] = 1
        stack.append(node)
        for nxt in sorted(adjacency[node]):
            mark = state.get(nxt)
            if mark == 1:
                return stack[stack.index(nxt):] + [nxt]
            if mark is None:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        state[node] = 2
        return None

    for node in sorted(graph.nodes):
        if node not in state:
            found = visit(node)
            if found:
                return found
    return None


def rebuild_set(graph: DependencyGraph, changed: set[Node]) -> set[Node]:
    """Changed nodes plus every transitive dependent (reverse reachability)."""
    unknown = changed - graph.nodes
    if unknown:
        raise UnknownNode(f"not in graph: {sorted(unknown)}")
    dependents = defaultdict(list)
    for src, dep in graph.edges:
        dependents[dep].append(src)
    result = set(changed)
    frontier = list(changed)
    while frontier:
        node = frontier.pop()
        for dependent in dependents[node]:
            if dependent not in result:
                result.add(dependent)
                frontier.append(dependent)
    return result


def build_order(graph: DependencyGraph, subset: set[Node]) -> list[Node]:
    """Topological order of ``subset`` (dependencies first); among the valid
    orders, the lexicographically least by (name, version)."""
    unknown = subset - graph.nodes
    if unknown:
        raise UnknownNode(f"not in graph: {sorted(unknown)}")
    pending_deps: dict[Node, set[Node]] = {
        node: {dep for (src, dep) in graph.edges if src == node and dep in subset}
        for node in subset
    }
    dependents = defaultdict(list)
    for src, dep in graph.edges:
        if src in subset and dep in subset:
            dependents[dep].append(src)

    ready = [node for node, deps in pending_deps.items() if not deps]
    heapq.heapify(ready)
    order: list[Node] = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for dependent in dependents[node]:
            pending_deps[dependent].discard(node)
            if not pending_deps[dependent]:
                heapq.heappush(ready, dependent)
    assert len(order) == len(subset), "graph verified acyclic at construction"
    return order
