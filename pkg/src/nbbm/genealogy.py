"""Ancestry forest with pruning, MRCA queries and spine extraction.

The forest stores particle *lifetime segments* as nodes of binary trees: a
branch event closes the parent segment and opens two child segments, a kill
closes a segment for good.  Pruning runs on every death: segments without
living descendants are dropped and single-child segments are spliced out, so
the retained topology stays O(N) regardless of run length.  Branch positions
("marks"), kept only when requested, are merged along spliced edges, which is
what the spine query consumes.

MRCA convention: the most recent common ancestor of the living population is
the deepest retained segment ancestral to every living particle, and its time
is the branch event that ends it (the divergence moment).  ``mrca_age``
returns None when the living particles descend from distinct roots, matching
"tau = infinity" semantics without a sentinel number.
"""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from .errors import QueryError

__all__ = ["GenealogyForest"]

_OPEN = float("inf")


class GenealogyForest:
    """Append-mostly genealogy with reference-count pruning."""

    def __init__(self, ids: Iterable[int], time0: float = 0.0,
                 positions: Optional[np.ndarray] = None,
                 record_positions: bool = False, prune: bool = True):
        ids = [int(i) for i in ids]
        if len(set(ids)) != len(ids):
            raise ValueError("initial particle ids must be unique")
        self.record_positions = record_positions
        self.prune = prune
        self.time0 = float(time0)
        # node columns
        self._parent: list[int] = []
        self._birth: list[float] = []
        self._end: list[float] = []
        self._child0: list[int] = []
        self._child1: list[int] = []
        self._origin: list[int] = []
        self._marks: list[Optional[list]] = []
        self._prefix: list[Optional[list]] = []
        self._free: list[int] = []
        self._node_of: dict[int, int] = {}      # particle id -> open node
        self._alive_by_origin: dict[int, int] = {}
        self._root_ids = set(ids)
        self._next_particle_id = max(ids) + 1
        for j, pid in enumerate(ids):
            node = self._new_node(-1, self.time0, pid)
            if record_positions and positions is not None:
                self._marks[node].append((self.time0, np.array(positions[j], dtype=float)))
            self._node_of[pid] = node
            self._alive_by_origin[pid] = self._alive_by_origin.get(pid, 0) + 1

    @classmethod
    def from_configuration(cls, config, record_positions: bool = False,
                           prune: bool = True) -> "GenealogyForest":
        return cls(config.ids, config.time, config.positions,
                   record_positions=record_positions, prune=prune)

    # -- node store ----------------------------------------------------------

    def _new_node(self, parent: int, birth: float, origin: int) -> int:
        if self._free:
            i = self._free.pop()
            self._parent[i] = parent
            self._birth[i] = birth
            self._end[i] = _OPEN
            self._child0[i] = -1
            self._child1[i] = -1
            self._origin[i] = origin
            self._marks[i] = [] if self.record_positions else None
            self._prefix[i] = [] if self.record_positions else None
        else:
            i = len(self._parent)
            self._parent.append(parent)
            self._birth.append(birth)
            self._end.append(_OPEN)
            self._child0.append(-1)
            self._child1.append(-1)
            self._origin.append(origin)
            self._marks.append([] if self.record_positions else None)
            self._prefix.append([] if self.record_positions else None)
        return i

    def _recycle(self, i: int):
        self._parent[i] = -2
        self._marks[i] = None
        self._prefix[i] = None
        self._free.append(i)

    def node_count(self) -> int:
        return len(self._parent) - len(self._free)

    def alive_count(self) -> int:
        return len(self._node_of)

    def alive_ids(self):
        return sorted(self._node_of)

    # -- event ingestion -----------------------------------------------------

    def record_branch(self, parent_id: int, time: float,
                      parent_position=None, child_id: Optional[int] = None) -> int:
        """Split the parent's segment; returns the new particle's id."""
        try:
            node = self._node_of[parent_id]
        except KeyError:
            raise ValueError(f"unknown or dead parent particle {parent_id}") from None
        if child_id is None:
            child_id = self._next_particle_id
        self._next_particle_id = max(self._next_particle_id, child_id + 1)
        self._end[node] = time
        if self.record_positions:
            if parent_position is None:
                raise ValueError("position recording is on: branch needs a position")
            self._marks[node].append((time, np.array(parent_position, dtype=float)))
        origin = self._origin[node]
        a = self._new_node(node, time, origin)   # continuation of parent particle
        b = self._new_node(node, time, origin)   # the new particle
        self._child0[node] = a
        self._child1[node] = b
        self._node_of[parent_id] = a
        self._node_of[child_id] = b
        self._alive_by_origin[origin] = self._alive_by_origin.get(origin, 0) + 1
        return child_id

    def record_mark(self, particle_id: int, time: float, position=None):
        """Log a no-op branch point on a living particle's segment."""
        if not self.record_positions:
            return
        try:
            node = self._node_of[particle_id]
        except KeyError:
            raise ValueError(f"unknown or dead particle {particle_id}") from None
        if position is None:
            raise ValueError("position recording is on: mark needs a position")
        self._marks[node].append((time, np.array(position, dtype=float)))

    def record_death(self, particle_id: int, time: float):
        try:
            node = self._node_of.pop(particle_id)
        except KeyError:
            raise ValueError(f"unknown or dead particle {particle_id}") from None
        self._end[node] = time
        origin = self._origin[node]
        left = self._alive_by_origin[origin] - 1
        if left:
            self._alive_by_origin[origin] = left
        else:
            del self._alive_by_origin[origin]
        if not self.prune:
            return
        # The dead segment is a leaf: drop it, then splice its parent if that
        # leaves a single-child pass-through segment.
        p = self._parent[node]
        self._recycle(node)
        if p == -1:
            return
        if self._child0[p] == node:
            self._child0[p] = self._child1[p]
        self._child1[p] = -1
        c = self._child0[p]
        gp = self._parent[p]
        self._parent[c] = gp
        if gp != -1:
            if self._child0[gp] == p:
                self._child0[gp] = c
            else:
                self._child1[gp] = c
        if self.record_positions:
            merged = self._prefix[p] + self._marks[p] + self._prefix[c]
            self._prefix[c] = merged
        self._recycle(p)

    def apply_event(self, t: float, parent_id: int, killed_id: int,
                    child_id: int, position=None):
        """Ingest one engine event (child_id < 0 marks a no-op)."""
        if child_id < 0:
            self.record_mark(parent_id, t, position)
            return
        self.record_branch(parent_id, t, position, child_id=child_id)
        self.record_death(killed_id, t)

    def apply_events(self, times, parents, killed, children, positions, n: int):
        rec = self.record_positions
        for i in range(n):
            pos = positions[i] if (rec and positions is not None) else None
            self.apply_event(float(times[i]), int(parents[i]), int(killed[i]),
                             int(children[i]), pos)

    # -- queries ---------------------------------------------------------------

    def has_living_descendant(self, root_id: int) -> bool:
        """True iff some living particle descends from this time-0 particle."""
        if root_id not in self._root_ids:
            raise ValueError(f"{root_id} is not a time-0 particle id")
        return self._alive_by_origin.get(root_id, 0) > 0

    def _mrca_node(self) -> Optional[int]:
        if not self._node_of:
            raise QueryError("no living particles")
        if len(self._alive_by_origin) > 1:
            return None
        if self.prune:
            node = next(iter(self._node_of.values()))
            while self._parent[node] != -1:
                node = self._parent[node]
            return node
        # Unpruned: deepest node common to every living particle's chain.
        chains = []
        for node in self._node_of.values():
            chain = []
            while node != -1:
                chain.append(node)
                node = self._parent[node]
            chains.append(chain[::-1])
        common = None
        for level in zip(*chains):
            if all(x == level[0] for x in level):
                common = level[0]
            else:
                break
        return common

    def mrca_age(self, t: float) -> Optional[float]:
        """Age tau(t) of the most recent common ancestor, or None if the
        living particles descend from distinct roots."""
        node = self._mrca_node()
        if node is None:
            return None
        end = self._end[node]
        if end == _OPEN:
            return 0.0                       # a single living lineage
        return t - end

    def spine_path(self, t: float):
        """(times, positions) along the ancestry of the current MRCA.

        Covers branch events from time 0 up to the MRCA's divergence; this is
        the skeleton of the immortal line X_*(s) for s <= t - tau(t).
        """
        if not self.record_positions:
            raise QueryError("forest was built without position recording")
        node = self._mrca_node()
        if node is None:
            raise QueryError("no common ancestor: living particles have distinct roots")
        if self.prune:
            marks = list(self._prefix[node]) + list(self._marks[node])
        else:
            chain = []
            while node != -1:
                chain.append(node)
                node = self._parent[node]
            marks = []
            for u in chain[::-1]:
                marks.extend(self._prefix[u])
                marks.extend(self._marks[u])
        times = np.array([m[0] for m in marks])
        positions = np.array([m[1] for m in marks])
        return times, positions

    # -- export -----------------------------------------------------------------

    def to_newick(self, t: float) -> str:
        """Newick serialisation of the retained forest, one tree per line.

        Leaves are living particles labelled p<particle-id>; branch lengths
        are segment durations (open segments run to t).
        """
        particle_of = {node: pid for pid, node in self._node_of.items()}
        roots = sorted({self._mrca_root(n) for n in self._node_of.values()})
        lines = []
        for root in roots:
            lines.append(self._newick_node(root, t, particle_of) + ";")
        return "\n".join(lines)

    def _mrca_root(self, node: int) -> int:
        while self._parent[node] != -1:
            node = self._parent[node]
        return node

    def _newick_node(self, root: int, t: float, particle_of) -> str:
        # Iterative post-order assembly; retained trees can be deep.
        out: dict[int, str] = {}
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            kids = [c for c in (self._child0[node], self._child1[node]) if c != -1]
            if kids and not expanded:
                stack.append((node, True))
                stack.extend((c, False) for c in kids)
                continue
            end = self._end[node]
            length = (t if end == _OPEN else end) - self._birth[node]
            if not kids:
                label = f"p{particle_of[node]}" if node in particle_of else ""
                out[node] = f"{label}:{length:.6f}"
            else:
                inner = ",".join(out.pop(c) for c in kids)
                out[node] = f"({inner}):{length:.6f}"
        return out[root]
