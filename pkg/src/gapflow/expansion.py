"""Tree re-expansion of effective potentials and paths over rectangle families.

A stored potential is unfolded backwards through the flow: at each earlier
step it either passed through unchanged, or it was assembled from a
commutator series applied to the potentials of its growth channels. Each
surviving term of that unfolding is a branch: an ordered list of generator
rectangles applied to one leaf potential. Branches are the countable
objects the norm bookkeeping (weights, paths, component decompositions)
is built on.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .flow import FlowState
from .geometry import LatticeSpec, Rect, enumerate_steps, g_set, minimal_rectangle
from .tensor import LocalOp, embed, op_norm

BRANCH_PRUNE_NORM = 1e-14


@dataclass
class Branch:
    """One term of the re-expansion.

    ``labels`` are the generator rectangles, outermost application first
    (strictly descending in the flow order); ``leaf`` is the support of the
    potential the commutator maps act on.
    """

    labels: tuple[Rect, ...]
    leaf: Rect
    leaf_kind: str  # "diagonalized" or "initial"
    leaf_norm: float
    op: LocalOp

    @property
    def rects(self) -> tuple[Rect, ...]:
        """Role-ordered rectangle sequence: labels then leaf."""
        return self.labels + (self.leaf,)

    @property
    def rect_set(self) -> frozenset[Rect]:
        return frozenset(self.rects)


@dataclass
class BranchExpansion:
    target: Rect
    root_step: Rect
    branches: list[Branch]
    complete: bool
    measured_c: float
    min_size_ratio: float | None  # empirical min of |R_b| * k / r over branches


@dataclass
class PathOfRects:
    """Sequence of pairwise-overlapping, consecutively distinct rectangles."""

    seq: list[Rect]

    def __post_init__(self) -> None:
        for a, b in zip(self.seq, self.seq[1:]):
            if a == b:
                raise ValueError("consecutive path rectangles must differ")
            if not a.overlaps(b):
                raise ValueError(f"consecutive path rectangles must overlap: {a}, {b}")

    @property
    def steps(self) -> list[tuple[Rect, Rect]]:
        return list(zip(self.seq, self.seq[1:]))

    @property
    def length(self) -> int:
        return len(self.seq) - 1

    @property
    def support(self) -> set[Rect]:
        return set(self.seq)

    @property
    def is_closed(self) -> bool:
        return len(self.seq) >= 1 and self.seq[0] == self.seq[-1]


@dataclass
class ComponentDecomposition:
    """Same-size connected components of a rectangle family, by circumference."""

    components: dict[int, list[list[Rect]]]

    @property
    def sizes(self) -> list[int]:
        return sorted(self.components)

    def counts(self) -> dict[int, list[int]]:
        return {rho: [len(c) for c in comps] for rho, comps in self.components.items()}

    def total(self) -> int:
        return sum(len(c) for comps in self.components.values() for c in comps)


def _overlap_components(rects: list[Rect]) -> list[list[Rect]]:
    """Connected components of the shared-site overlap graph."""
    remaining = list(rects)
    comps = []
    while remaining:
        frontier = [remaining.pop()]
        comp = []
        while frontier:
            cur = frontier.pop()
            comp.append(cur)
            still = []
            for other in remaining:
                if cur.overlaps(other):
                    frontier.append(other)
                else:
                    still.append(other)
            remaining = still
        comps.append(comp)
    return comps


def is_connected_family(rects) -> bool:
    rects = list(rects)
    return len(_overlap_components(rects)) <= 1


def decompose_components(rects) -> ComponentDecomposition:
    """Group by circumference, split each group into overlap components."""
    rects = list(rects)
    if not is_connected_family(rects):
        raise ValueError("rectangle family is not connected")
    by_size: dict[int, list[Rect]] = defaultdict(list)
    for r in rects:
        by_size[r.circumference].append(r)
    return ComponentDecomposition(
        {rho: _overlap_components(group) for rho, group in by_size.items()}
    )


def closed_path(rects, root: Rect | None = None) -> PathOfRects:
    """Closed path over a same-size connected family with length 2n - 2.

    The path is the double traversal of a spanning tree of the overlap
    graph, so every rectangle is visited and every step is an overlap.
    """
    rects = list(dict.fromkeys(rects))
    if not rects:
        raise ValueError("empty rectangle family")
    sizes = {r.circumference for r in rects}
    if len(sizes) != 1:
        raise ValueError(f"rectangles must share one circumference, got {sorted(sizes)}")
    if not is_connected_family(rects):
        raise ValueError("rectangle family is not connected")
    start = root if root is not None else rects[0]
    if start not in rects:
        raise ValueError("root must belong to the family")
    children: dict[Rect, list[Rect]] = {r: [] for r in rects}
    seen = {start}
    order = [start]
    queue = [start]
    while queue:
        cur = queue.pop(0)
        for other in rects:
            if other not in seen and cur.overlaps(other):
                seen.add(other)
                children[cur].append(other)
                queue.append(other)
    if len(seen) != len(rects):
        raise ValueError("rectangle family is not connected")

    def tour(u: Rect) -> list[Rect]:
        out = [u]
        for v in children[u]:
            out.extend(tour(v))
            out.append(u)
        return out

    return PathOfRects(tour(start))


def build_gamma(decomp: ComponentDecomposition) -> PathOfRects:
    """Path visiting every rectangle with the per-component step budget.

    Sizes are processed upward from the smallest; each new component is
    spliced in as a closed excursion at the first rectangle of the current
    path that overlaps it (one step out, one step back).
    """
    sizes = decomp.sizes
    if not sizes:
        raise ValueError("empty decomposition")
    lowest = decomp.components[sizes[0]]
    if len(lowest) != 1:
        raise ValueError(
            f"expected exactly one component at the lowest size, got {len(lowest)}"
        )
    seq = closed_path(lowest[0]).seq
    for rho in sizes[1:]:
        for comp in decomp.components[rho]:
            members = set(comp)
            spot = None
            for i, x in enumerate(seq):
                hit = next((y for y in comp if x.overlaps(y)), None)
                if hit is not None:
                    spot = (i, hit)
                    break
            if spot is None:
                raise ValueError(
                    f"component of size {rho} never touches the smaller-size path"
                )
            i, y = spot
            excursion = closed_path(comp, root=y).seq
            seq = seq[: i + 1] + excursion + seq[i:]
    return PathOfRects(seq)


def direction_count(s: int, s_prime: int, d: int, lat: LatticeSpec) -> int:
    """Exact maximum number of distinct rectangles of circumference s' that
    overlap a rectangle of circumference s, by exhaustive scan."""
    from .geometry import all_rects

    pool = all_rects(lat)
    of_s = [r for r in pool if r.circumference == s]
    of_sp = [r for r in pool if r.circumference == s_prime]
    if not of_s or not of_sp:
        raise ValueError(f"no rectangles of the requested sizes fit in N={lat.N}")
    best = 0
    for a in of_s:
        count = sum(1 for b in of_sp if b != a and a.overlaps(b))
        best = max(best, count)
    return best


class _Expander:
    """Backward unfolding of one stored potential through the flow history."""

    def __init__(self, state: FlowState, lat: LatticeSpec, depth_limit: int | None):
        if state.initial_map is None:
            raise ValueError("flow state is missing its initial interaction map")
        self.lat = lat
        self.steps = enumerate_steps(lat)
        self.initial_map = state.initial_map
        self.case_b = {rec.rect: rec.case_b_value for rec in state.history}
        self.generators = {rect: s for rect, s in state.generator_log}
        self.depth_limit = depth_limit
        self.memo: dict[tuple[int, Rect], list[Branch]] = {}
        self.unitaries: dict[Rect, np.ndarray] = {}
        self.measured_c = 0.0
        self.t = state.spec.t
        self.v1_norms = {
            rec.rect: rec.v1_norm for rec in state.history if not rec.skipped
        }
        self.truncated = False

    def unitary_on(self, label: Rect, common: Rect) -> np.ndarray:
        if label not in self.unitaries:
            self.unitaries[label] = expm(self.generators[label].matrix)
        u = self.unitaries[label]
        M = self.generators[label].M
        return embed(LocalOp(label, u, M), common).matrix

    def apply_a(self, label: Rect, x: LocalOp) -> LocalOp | None:
        """Commutator series of the step generator applied to x; None if zero."""
        if label not in self.generators:
            return None
        if not label.overlaps(x.support):
            return None
        common = minimal_rectangle(label, x.support)
        u = self.unitary_on(label, common)
        xm = embed(x, common).matrix
        out = u @ xm @ u.conj().T - xm
        result = LocalOp(common, out, x.M)
        nrm = op_norm(result)
        if nrm <= BRANCH_PRUNE_NORM:
            return None
        denom = self.t * self.v1_norms.get(label, 0.0) * op_norm(x)
        if denom > 0:
            self.measured_c = max(self.measured_c, nrm / denom)
        return result

    def expand(self, level: int, support: Rect, depth: int) -> list[Branch]:
        if self.depth_limit is not None and depth > self.depth_limit:
            self.truncated = True
            return []
        # subtree results are depth independent only without a cutoff
        memoize = self.depth_limit is None
        key = (level, support)
        if memoize and key in self.memo:
            return self.memo[key]
        if level < 0:
            op = self.initial_map.get(support)
            out = [] if op is None else [Branch((), support, "initial", op_norm(op), op)]
            if memoize:
                self.memo[key] = out
            return out
        step = self.steps[level]
        if step == support:
            op = self.case_b.get(step)
            out = (
                []
                if op is None
                else [Branch((), support, "diagonalized", op_norm(op), op)]
            )
            if memoize:
                self.memo[key] = out
            return out
        out = list(self.expand(level - 1, support, depth + 1))
        if support.contains(step) and step != support:
            members = g_set(step, support, self.lat) | {support}
            for member in sorted(members, key=lambda r: (r.k, r.q)):
                for sub in self.expand(level - 1, member, depth + 1):
                    new_op = self.apply_a(step, sub.op)
                    if new_op is None:
                        continue
                    out.append(
                        Branch(
                            (step,) + sub.labels,
                            sub.leaf,
                            sub.leaf_kind,
                            sub.leaf_norm,
                            new_op,
                        )
                    )
        if memoize:
            self.memo[key] = out
        return out


def enumerate_branches(
    target: Rect,
    root_step: Rect,
    flow_history: FlowState,
    depth_limit: int | None = None,
) -> BranchExpansion:
    """All nonzero branches of the stored potential on ``target`` as of the
    completion of ``root_step``."""
    lat = flow_history.spec.lat
    steps = enumerate_steps(lat)
    try:
        root_idx = steps.index(root_step)
    except ValueError:
        raise ValueError(f"{root_step} is not a flow step") from None
    done = [rec.rect for rec in flow_history.history]
    if root_step not in done:
        raise ValueError(f"flow has not completed step {root_step}")
    expander = _Expander(flow_history, lat, depth_limit)
    branches = expander.expand(root_idx, target, 0)
    ratios = [
        len(b.rect_set) * root_step.circumference / target.circumference
        for b in branches
        if b.labels
    ]
    return BranchExpansion(
        target=target,
        root_step=root_step,
        branches=branches,
        complete=not expander.truncated,
        measured_c=expander.measured_c,
        min_size_ratio=min(ratios) if ratios else None,
    )


def branch_sum(expansion: BranchExpansion, M: int) -> LocalOp:
    """Sum of all branch operators, embedded on the expansion target."""
    dim = M**expansion.target.n_sites
    total = np.zeros((dim, dim), dtype=complex)
    for b in expansion.branches:
        total += embed(b.op, expansion.target).matrix
    return LocalOp(expansion.target, total, M)


def weighted_branch_sum(
    expansion: BranchExpansion,
    t: float,
    v1_norms: dict[Rect, float],
    c: float | None = None,
) -> tuple[float, float]:
    """(sum of branch-operator norms, weighted path bound); lhs <= rhs.

    Each generator rectangle contributes c*t times the norm of the
    potential its step consumed; the leaf contributes its own norm. ``c``
    defaults to the constant measured during the expansion.
    """
    cc = expansion.measured_c if c is None else c
    lhs = 0.0
    rhs = 0.0
    for b in expansion.branches:
        lhs += op_norm(b.op)
        w = b.leaf_norm
        for label in b.labels:
            w *= cc * t * v1_norms[label]
        rhs += w
    return lhs, rhs
