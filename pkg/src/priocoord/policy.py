"""First-come priority assignment: whoever can reach the conflict first goes first."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .coordination import STRIP, CrossSection, PriorityGraph, oriented
from .kinodynamics import SystemState, time_to_reach


@dataclass(frozen=True)
class ArrivalEstimate:
    robot: int
    pair: tuple
    time: float  # 0 once the robot is at or past the entry


def arrival(s: SystemState, rid, sec: CrossSection, pair) -> ArrivalEstimate:
    """Earliest arrival of ``rid`` at the section's entry along its own (``u``) axis."""
    u_lo = sec.bounds()[0]
    st = s.robot(rid)
    return ArrivalEstimate(rid, pair, time_to_reach(st, s.models[s.index[rid]], u_lo))


def orient_pair(s: SystemState, i, j, sec: CrossSection) -> tuple | None:
    """Edge for the pair, or None when the section is empty.

    A robot already through the section arrives at time 0, so it keeps priority; the
    edge is inert since the other robot can never block it again.
    """
    if sec is None or sec.empty:
        return None
    xi, xj = s.x[s.index[i]], s.x[s.index[j]]
    if sec.kind == STRIP:
        gap = xi - xj - sec.offset
        return (i, j) if gap > 0 or (gap == 0 and i < j) else (j, i)
    ai = arrival(s, i, sec, (i, j)).time
    aj = arrival(s, j, sec.transpose(), (i, j)).time
    if ai < aj or (ai == aj and i < j):
        return (i, j)
    return (j, i)


def assign_priorities(s: SystemState, sections: Mapping[tuple, CrossSection]) -> PriorityGraph:
    g = PriorityGraph(vertices=set(s.ids))
    ids = s.ids
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            i, j = ids[a], ids[b]
            e = orient_pair(s, i, j, oriented(sections, i, j))
            if e is not None:
                g.add_edge(*e)
    return g


def new_robot_edges(graph: PriorityGraph, new_id, s: SystemState, section_of,
                    acyclic: bool = False) -> list:
    """Edges between ``new_id`` and each existing robot of ``s``.

    ``section_of(r)`` returns the section oriented ``(x_r, x_new)`` or None. With
    ``acyclic`` the arrival rule is overridden only where it would close a cycle: the
    newcomer also yields to every robot that already precedes, through ``graph``, some
    robot it yields to.
    """
    edges, live = {}, set()
    for r in s.ids:
        if r == new_id:
            continue
        sec = section_of(r)
        e = orient_pair(s, r, new_id, sec)
        if e is not None:
            edges[r] = e
            if s.x[s.index[r]] < sec.bounds()[1]:
                live.add(r)
    if acyclic:
        # robots already through the conflict cannot take part in a blocking cycle
        ahead = [r for r, e in edges.items() if e[0] == r and r in live]
        pred = {}
        for a, b in graph.edges:
            pred.setdefault(b, []).append(a)
        seen = set(ahead)
        stack = list(ahead)
        while stack:
            for a in pred.get(stack.pop(), ()):
                if a not in seen:
                    seen.add(a)
                    stack.append(a)
        for r, e in edges.items():
            if e[0] == new_id and r in seen:
                edges[r] = (r, new_id)
    return [edges[r] for r in s.ids if r in edges]


def extend_priorities(graph: PriorityGraph, new_id, s: SystemState,
                      sections: Mapping[tuple, CrossSection], acyclic: bool = False) -> PriorityGraph:
    """Copy of ``graph`` with edges between ``new_id`` and every conflicting robot.

    Existing edges are never reoriented.
    """
    g = graph.copy()
    g.vertices.add(new_id)
    for e in new_robot_edges(graph, new_id, s, lambda r: oriented(sections, r, new_id), acyclic):
        g.add_edge(*e)
    return g
