"""Occlusion constraints and the stacking order.

Matrix semantics, fixed once for the whole engine:

* ``hard[i, j] = 1`` — layer i is occluded by layer j (pixel evidence).
* ``soft[i, j] = 1`` — depth hints place i nearer the camera than j.
* ``reach[i, j] = 1`` — i is in front of j (after propagation).
* ``scores[i]``     — out-degree of i in ``reach``; higher = nearer.

Propagation turns hard edges around (an occluder is in front of what it
occludes), admits soft edges only where they do not contradict a hard edge,
repairs any remaining cycles by dropping the weakest soft-derived edges,
then closes the graph transitively and reads depth scores off out-degrees.
The final stacking permutation sorts by score, front-most first, and is
monotone in the scores by construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import HardConstraintCycle
from .model import Environment

DEFAULT_DEPTH_MARGIN = 0.05


class MissingVisibleMasksWarning(UserWarning):
    """No explicit pairs and no visible masks: hard constraints are empty."""


@dataclass
class OcclusionGraph:
    """Constraint matrices plus the propagated reachability and depth scores."""

    ids: list[str]
    hard: np.ndarray
    soft: np.ndarray
    reach: np.ndarray
    scores: np.ndarray
    hints: list[Optional[float]] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.ids)

    def index(self, layer_id: str) -> int:
        return self.ids.index(layer_id)

    def score_of(self, layer_id: str) -> int:
        return int(self.scores[self.index(layer_id)])

    def hard_pairs(self) -> list[tuple[str, str]]:
        """Hard constraints as (occluded_id, occluder_id) pairs."""
        out = []
        for i, j in zip(*np.nonzero(self.hard)):
            out.append((self.ids[int(i)], self.ids[int(j)]))
        return out

    def copy(self) -> "OcclusionGraph":
        return OcclusionGraph(
            ids=list(self.ids),
            hard=self.hard.copy(),
            soft=self.soft.copy(),
            reach=self.reach.copy(),
            scores=self.scores.copy(),
            hints=list(self.hints),
        )

    def as_dict(self) -> dict:
        return {
            "ids": self.ids,
            "hard": self.hard.astype(int).tolist(),
            "soft": self.soft.astype(int).tolist(),
            "reach": self.reach.astype(int).tolist(),
            "scores": {i: int(s) for i, s in zip(self.ids, self.scores)},
        }


def derive_hard_constraints(env: Environment) -> tuple[list[str], np.ndarray]:
    """Pairwise hard occlusion matrix over the visible layers.

    Explicit bundle pairs win when present.  Otherwise ``O[i, j] = 1`` iff
    some canvas pixel is amodal for i, hidden in i's visible mask, and
    visible in j — i.e. j covers a hidden part of i.  With neither source
    available the matrix is all zeros and a MissingVisibleMasksWarning is
    emitted (callers then rely on soft constraints alone).
    """
    layers = env.visible_layers()
    ids = [l.id for l in layers]
    n = len(ids)
    hard = np.zeros((n, n), dtype=bool)

    if env.explicit_occlusion is not None:
        index = {lid: k for k, lid in enumerate(ids)}
        for occluded, occluder in env.explicit_occlusion:
            if occluded in index and occluder in index and occluded != occluder:
                hard[index[occluded], index[occluder]] = True
        return ids, hard

    if not any(l.visible_mask is not None for l in layers):
        if n > 1:
            warnings.warn(
                "bundle has no explicit occlusion pairs and no visible masks; "
                "hard constraints are empty", MissingVisibleMasksWarning)
        return ids, hard

    # Canvas-space masks; a missing visible mask means "fully visible".
    amodal = [l.canvas_mask(env.canvas, "amodal") for l in layers]
    visible = [
        l.canvas_mask(env.canvas, "visible") if l.visible_mask is not None else amodal[k]
        for k, l in enumerate(layers)
    ]
    for i in range(n):
        hidden_i = amodal[i] & ~visible[i]
        if not hidden_i.any():
            continue
        for j in range(n):
            if i == j:
                continue
            if (hidden_i & visible[j]).any():
                hard[i, j] = True
    return ids, hard


def derive_soft_constraints(env: Environment, margin: float = DEFAULT_DEPTH_MARGIN) -> tuple[list[str], np.ndarray]:
    """Depth-hint ordering: ``soft[i, j] = 1`` iff hint_i + margin < hint_j."""
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    layers = env.visible_layers()
    ids = [l.id for l in layers]
    n = len(ids)
    soft = np.zeros((n, n), dtype=bool)
    for i in range(n):
        hi = layers[i].depth_hint
        if hi is None:
            continue
        for j in range(n):
            hj = layers[j].depth_hint
            if i == j or hj is None:
                continue
            if hi + margin < hj:
                soft[i, j] = True
    return ids, soft


def _transitive_closure(g: np.ndarray) -> np.ndarray:
    """Boolean fixpoint of G <- G | G.G."""
    closed = g.copy()
    while True:
        step = closed | ((closed.astype(np.uint8) @ closed.astype(np.uint8)) > 0)
        if np.array_equal(step, closed):
            return closed
        closed = step


def _strongly_connected_components(g: np.ndarray) -> list[list[int]]:
    """SCCs via pairwise reachability; fine at layer-count scale."""
    closed = _transitive_closure(g)
    n = g.shape[0]
    mutual = closed & closed.T
    seen: set[int] = set()
    comps: list[list[int]] = []
    for i in range(n):
        if i in seen:
            continue
        comp = [i] + [j for j in range(n) if j != i and mutual[i, j]]
        seen.update(comp)
        comps.append(sorted(comp))
    return comps


def propagate(
    hard: np.ndarray,
    soft: np.ndarray,
    ids: Optional[Sequence[str]] = None,
    hints: Optional[Sequence[Optional[float]]] = None,
) -> OcclusionGraph:
    """Run constraint propagation and return the full occlusion graph.

    Phase 1 reverses hard edges into the front-of graph; phase 2 admits each
    soft edge unless the opposite edge already exists; cycles that survive
    are repaired by deleting, one at a time, the soft-derived edge with the
    smallest depth margin (ties: lexicographically smallest index pair).  A
    cycle made of hard edges alone is a contradiction and raises
    HardConstraintCycle.  Phase 3 closes the graph transitively; phase 4
    reads depth scores off node out-degrees.
    """
    hard = np.asarray(hard, dtype=bool)
    soft = np.asarray(soft, dtype=bool)
    n = hard.shape[0]
    if hard.shape != (n, n) or soft.shape != (n, n):
        raise ValueError("hard and soft must be square matrices of equal size")
    if hard.diagonal().any() or soft.diagonal().any():
        raise ValueError("constraint matrices must have zero diagonals")
    id_list = list(ids) if ids is not None else [str(k) for k in range(n)]
    hint_list = list(hints) if hints is not None else [None] * n

    # Phase 1: hard occlusion. i occluded by j => j in front of i.
    g = hard.T.copy()

    # Phase 2: soft depth, sequentially, guarded by the reverse edge.
    soft_derived: set[tuple[int, int]] = set()
    for i in range(n):
        for j in range(n):
            if soft[i, j] and not g[j, i]:
                if not g[i, j]:
                    soft_derived.add((i, j))
                g[i, j] = True

    # Cycle repair: hard edges are sacrosanct, soft edges are negotiable.
    def edge_margin(i: int, j: int) -> float:
        hi, hj = hint_list[i], hint_list[j]
        if hi is None or hj is None:
            return 0.0
        return hj - hi

    while True:
        sccs = [c for c in _strongly_connected_components(g) if len(c) > 1]
        if not sccs:
            break
        comp = sccs[0]
        members = set(comp)
        candidates = [
            (i, j) for (i, j) in sorted(soft_derived)
            if i in members and j in members and g[i, j]
        ]
        if not candidates:
            cyc = ", ".join(id_list[k] for k in comp)
            raise HardConstraintCycle(
                f"hard occlusion constraints form a cycle among [{cyc}]",
                layers=[id_list[k] for k in comp])
        weakest = min(candidates, key=lambda e: (edge_margin(*e), e))
        g[weakest[0], weakest[1]] = False
        soft_derived.discard(weakest)

    # Phase 3: transitive closure.
    g = _transitive_closure(g)
    if (g & g.T).any():
        raise HardConstraintCycle("propagation left a cycle after repair")

    # Phase 4: depth score = out-degree.
    scores = g.sum(axis=1).astype(np.int64)
    return OcclusionGraph(ids=id_list, hard=hard.copy(), soft=soft.copy(),
                          reach=g, scores=scores, hints=hint_list)


def stacking_order(graph: OcclusionGraph, env: Environment) -> list[str]:
    """Deterministic front-most-first permutation; writes scores and order back.

    Sort key: depth score descending, then depth hint ascending (layers
    without hints sort behind hinted ones), then id.
    """
    score = {lid: int(s) for lid, s in zip(graph.ids, graph.scores)}

    def key(lid: str):
        layer = env.layer(lid)
        hint = layer.depth_hint
        return (-score[lid], hint is None, hint if hint is not None else 0.0, lid)

    pi = sorted(graph.ids, key=key)
    for lid in graph.ids:
        env.layer(lid).depth_score = score[lid]
    env.stacking = pi
    env.occlusion = graph
    return pi


def order_environment(env: Environment, margin: float = DEFAULT_DEPTH_MARGIN) -> OcclusionGraph:
    """Full ordering pass: derive constraints, propagate, write the stacking."""
    ids, hard = derive_hard_constraints(env)
    _, soft = derive_soft_constraints(env, margin)
    hints = [env.layer(lid).depth_hint for lid in ids]
    graph = propagate(hard, soft, ids=ids, hints=hints)
    stacking_order(graph, env)
    return graph


def insert_into_graph(
    graph: OcclusionGraph,
    new_id: str,
    front_of: Sequence[str] = (),
    behind: Sequence[str] = (),
    hint: Optional[float] = None,
) -> OcclusionGraph:
    """Extend the constraint set with a new layer and re-propagate.

    ``front_of`` targets become occluded by the new layer; ``behind``
    targets occlude it.  Raw hard/soft inputs are extended, not the closed
    reachability, so the result is a fresh, fully consistent propagation.
    """
    if new_id in graph.ids:
        raise ValueError(f"id {new_id!r} already present in the occlusion graph")
    n = graph.n
    ids = graph.ids + [new_id]
    hard = np.zeros((n + 1, n + 1), dtype=bool)
    soft = np.zeros((n + 1, n + 1), dtype=bool)
    hard[:n, :n] = graph.hard
    soft[:n, :n] = graph.soft
    for target in front_of:
        hard[graph.index(target), n] = True
    for target in behind:
        hard[n, graph.index(target)] = True
    return propagate(hard, soft, ids=ids, hints=graph.hints + [hint])


def remove_from_graph(graph: OcclusionGraph, layer_id: str) -> OcclusionGraph:
    """Drop a layer from the constraint set and re-propagate."""
    k = graph.index(layer_id)
    keep = [i for i in range(graph.n) if i != k]
    ids = [graph.ids[i] for i in keep]
    sel = np.ix_(keep, keep)
    return propagate(graph.hard[sel], graph.soft[sel], ids=ids,
                     hints=[graph.hints[i] for i in keep])
