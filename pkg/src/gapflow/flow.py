"""Global block-diagonalization driver.

Walks the steps in flow order and updates the interaction map per step:
the step rectangle's potential is replaced by its block-diagonal series,
every stored potential on a strict superset is conjugated, and every
stored potential overlapping the step rectangle (neither nested way)
contributes a commutator-series term to the minimal rectangle covering it
together with the step rectangle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Rect,
    enumerate_steps,
    initial_step,
    minimal_rectangle,
)
from .model import ModelSpec, initial_interactions
from .schwinger import (
    GAP_FLOOR,
    GapError,
    StepOperators,
    assemble_g,
    check_g_gap,
    lie_schwinger_series,
)
from .tensor import LocalOp, embed, op_norm

PRUNE_THRESHOLD = 1e-14


class InteractionMap:
    """Association rectangle -> stored potential; absence means zero.

    Entries with norm below the prune threshold are dropped on insertion.
    Updates return new maps; entry matrices are shared, never mutated.
    """

    def __init__(self, entries: dict[Rect, LocalOp] | None = None):
        self.entries: dict[Rect, LocalOp] = {}
        if entries:
            for key, op in entries.items():
                self.set(key, op)

    def set(self, key: Rect, op: LocalOp) -> None:
        if op.support != key:
            raise ValueError(f"entry support {op.support} does not match key {key}")
        if op_norm(op) <= PRUNE_THRESHOLD:
            self.entries.pop(key, None)
        else:
            self.entries[key] = op

    def get(self, key: Rect) -> LocalOp | None:
        return self.entries.get(key)

    def items(self):
        return self.entries.items()

    def copy(self) -> "InteractionMap":
        new = InteractionMap()
        new.entries = dict(self.entries)
        return new

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: Rect) -> bool:
        return key in self.entries


@dataclass
class StepRecord:
    """Per-step diagnostics and the data needed to replay the step later."""

    index: int
    rect: Rect
    circumference: int
    g_gap: float
    e0: float
    e0_cross: float
    s_norm: float
    v1_norm: float
    tail_bound: float
    tail_certified: bool
    od_residual: float
    spectrum_drift: float
    regime: str
    term_norms: list[float] = field(default_factory=list)
    majorant_b: list[float] = field(default_factory=list)
    case_b_value: LocalOp | None = None
    residual: float | None = None
    skipped: bool = False


@dataclass
class FlowState:
    """Flow progress: last completed step, current map, generators, diagnostics."""

    spec: ModelSpec
    step: Rect
    interactions: InteractionMap
    generator_log: list[tuple[Rect, LocalOp]] = field(default_factory=list)
    history: list[StepRecord] = field(default_factory=list)
    map_snapshots: list[InteractionMap] | None = None
    initial_map: InteractionMap | None = None
    status: str = "running"
    failures: list[str] = field(default_factory=list)


def initial_state(spec: ModelSpec, keep_history: bool = False) -> FlowState:
    imap = InteractionMap(initial_interactions(spec))
    return FlowState(
        spec=spec,
        step=initial_step(spec.lat),
        interactions=imap,
        map_snapshots=[] if keep_history else None,
        initial_map=imap.copy(),
    )


def regime_of(J_step: Rect, J_target: Rect) -> str:
    """Diagnostic tag for a step size against a target size.

    Large steps win boundary ties; the small-step range is closed on its
    upper end, matching the defining inequalities.
    """
    k = J_step.circumference
    r = J_target.circumference
    cut = int(np.floor(r**0.25))
    if k >= r - cut:
        return "R3"
    if k <= cut:
        return "R1"
    return "R2"


def _vacuum_cross_energy(J: Rect, interactions: InteractionMap, t: float) -> float:
    """Independent vacuum energy: t times the summed vacuum expectations of
    every strictly smaller stored potential (on-site terms contribute zero)."""
    total = 0.0
    for key, op in interactions.items():
        if key.circumference >= 1 and J.contains(key) and key != J:
            total += float(op.matrix[0, 0].real)
    return t * total


def apply_step(
    state: FlowState,
    J: Rect,
    spec: ModelSpec,
    j_max: int = 12,
    force: bool = False,
) -> tuple[FlowState, StepOperators | None]:
    """Advance the flow by the single step labelled ``J``."""
    from .geometry import successor

    expected = successor(state.step, spec.lat)
    if expected != J:
        raise ValueError(f"steps must run in order: expected {expected}, got {J}")
    index = len(state.history)
    regime = regime_of(J, spec.lat.full_rect())

    v1 = state.interactions.get(J)
    if v1 is None:
        # nothing to rotate, but the inductive gap claim still concerns this
        # step's local operator
        g, e0 = assemble_g(J, dict(state.interactions.items()), spec.t)
        gap = check_g_gap(g, e0, J)
        if gap < GAP_FLOOR and not force:
            raise GapError(
                f"gap of the local operator on {J} is {gap:.6g} < {GAP_FLOOR}; "
                "the inductive gap hypothesis fails at this coupling"
            )
        record = StepRecord(
            index=index,
            rect=J,
            circumference=J.circumference,
            g_gap=gap,
            e0=e0,
            e0_cross=_vacuum_cross_energy(J, state.interactions, spec.t),
            s_norm=0.0,
            v1_norm=0.0,
            tail_bound=0.0,
            tail_certified=True,
            od_residual=0.0,
            spectrum_drift=0.0,
            regime=regime,
            skipped=True,
        )
        new_state = FlowState(
            spec=spec,
            step=J,
            interactions=state.interactions,
            generator_log=list(state.generator_log),
            history=state.history + [record],
            map_snapshots=state.map_snapshots,
            initial_map=state.initial_map,
            status=state.status,
            failures=list(state.failures),
        )
        if new_state.map_snapshots is not None:
            new_state.map_snapshots.append(new_state.interactions.copy())
        return new_state, None

    g, e0 = assemble_g(J, dict(state.interactions.items()), spec.t)
    e0_cross = _vacuum_cross_energy(J, state.interactions, spec.t)
    ops = lie_schwinger_series(J, g, e0, v1, spec.t, j_max=j_max)
    if ops.gap < GAP_FLOOR and not force:
        raise GapError(
            f"gap of the local operator on {J} is {ops.gap:.6g} < {GAP_FLOOR}; "
            "the inductive gap hypothesis fails at this coupling"
        )

    new_map = state.interactions.copy()
    new_map.set(J, ops.v_diag_total)

    # every target strictly containing the step rectangle gets conjugated;
    # overlapping non-nested entries feed their commutator series into the
    # minimal rectangle they span together with the step rectangle
    contributions: dict[Rect, np.ndarray] = {}
    for key, op in state.interactions.items():
        if key == J or not key.overlaps(J):
            continue
        if key.contains(J) or J.contains(key):
            continue
        target = minimal_rectangle(J, key)
        x = embed(op, target).matrix
        contributions.setdefault(target, np.zeros_like(x))
        contributions[target] += x

    targets = set(contributions)
    targets.update(
        key for key, _ in state.interactions.items() if key.contains(J) and key != J
    )
    for target in targets:
        u = embed(LocalOp(J, ops.unitary, v1.M), target).matrix
        old = state.interactions.get(target)
        base = embed(old, target).matrix if old is not None else None
        extra = contributions.get(target)
        y = (base if base is not None else 0) + (extra if extra is not None else 0)
        new_val = u @ y @ u.conj().T
        if extra is not None:
            new_val = new_val - extra
        new_map.set(target, LocalOp(target, new_val, v1.M))

    record = StepRecord(
        index=index,
        rect=J,
        circumference=J.circumference,
        g_gap=ops.gap,
        e0=ops.e0,
        e0_cross=e0_cross,
        s_norm=op_norm(ops.s_total),
        v1_norm=ops.v1_norm,
        tail_bound=ops.tail_bound,
        tail_certified=ops.tail_certified,
        od_residual=ops.od_residual,
        spectrum_drift=ops.spectrum_drift,
        regime=regime,
        term_norms=list(ops.term_norms),
        majorant_b=list(ops.majorant.b[: len(ops.term_norms)]) if ops.majorant else [],
        case_b_value=ops.v_diag_total,
    )
    new_state = FlowState(
        spec=spec,
        step=J,
        interactions=new_map,
        generator_log=state.generator_log + [(J, ops.s_total)],
        history=state.history + [record],
        map_snapshots=state.map_snapshots,
        initial_map=state.initial_map,
        status=state.status,
        failures=list(state.failures),
    )
    if new_state.map_snapshots is not None:
        new_state.map_snapshots.append(new_map.copy())
    return new_state, ops


def assemble_hamiltonian(state: FlowState, spec: ModelSpec) -> LocalOp:
    """Full-lattice operator: on-site entries plus t times all other entries."""
    full = spec.lat.full_rect()
    dim = spec.M**spec.lat.n_sites
    total = np.zeros((dim, dim), dtype=complex)
    for key, op in state.interactions.items():
        coeff = 1.0 if key.circumference == 0 else spec.t
        total += coeff * embed(op, full).matrix
    return LocalOp(full, total, spec.M)


def consistency_check(
    state_before: FlowState,
    state_after: FlowState,
    J: Rect,
    spec: ModelSpec,
) -> float:
    """Norm distance between the recombined map and the honest conjugation."""
    from scipy.linalg import expm

    assembled = assemble_hamiltonian(state_after, spec).matrix
    before = assemble_hamiltonian(state_before, spec).matrix
    if len(state_after.generator_log) == len(state_before.generator_log):
        # the step carried no potential, so nothing was conjugated
        return float(np.linalg.norm(assembled - before, 2))
    rect, gen = state_after.generator_log[-1]
    if rect != J:
        raise ValueError(f"last generator belongs to {rect}, not to step {J}")
    full = spec.lat.full_rect()
    s_full = embed(gen, full).matrix
    u = expm(s_full)
    conj = u @ before @ u.conj().T
    return float(np.linalg.norm(assembled - conj, 2))


@dataclass
class Tolerances:
    spectral: float = 1e-8
    projector: float = 1e-12
    consistency: float = 1e-8
    gap_slack: float = 1e-6


def run_flow(
    spec: ModelSpec,
    j_max: int = 12,
    tolerances: Tolerances | None = None,
    check_consistency: str = "auto",
    force: bool = False,
    keep_history: bool = False,
) -> FlowState:
    """Execute every step in order and leave final verdicts to the verifier.

    ``check_consistency``: one of ``never | final | every-step | auto``
    (auto = every step for N <= 3, final step only otherwise).
    """
    tol = tolerances or Tolerances()
    if check_consistency == "auto":
        check_consistency = "every-step" if spec.lat.N <= 3 else "final"
    if check_consistency not in ("never", "final", "every-step"):
        raise ValueError(f"unknown consistency mode {check_consistency!r}")

    state = initial_state(spec, keep_history=keep_history)
    steps = enumerate_steps(spec.lat)
    for i, J in enumerate(steps):
        prev = state
        state, _ = apply_step(state, J, spec, j_max=j_max, force=force)
        want_check = check_consistency == "every-step" or (
            check_consistency == "final" and i == len(steps) - 1
        )
        if want_check:
            residual = consistency_check(prev, state, J, spec)
            state.history[-1].residual = residual
            if residual > tol.consistency:
                if not force:
                    raise RuntimeError(
                        f"consistency residual {residual:.3g} above tolerance "
                        f"{tol.consistency:.3g} at step {J}"
                    )
                state.failures.append(f"consistency residual {residual:.3g} at step {J}")
        rec = state.history[-1]
        if rec.g_gap < GAP_FLOOR:
            state.failures.append(f"gap {rec.g_gap:.6g} below 1/2 at step {J}")

    # audit the norm-decay hypothesis; violations downgrade, never abort
    for r, worst in max_norm_by_circumference(state).items():
        if r >= 2 and worst > abs(spec.t) ** ((r - 1) / 4.0) + 1e-12:
            state.status = "hypothesis-violated"
            state.failures.append(
                f"norm decay hypothesis violated at circumference {r}: "
                f"{worst:.6g} > t^({r - 1}/4)"
            )
    if state.status == "running":
        state.status = "completed"
    return state


def max_norm_by_circumference(state: FlowState) -> dict[int, float]:
    out: dict[int, float] = {}
    for key, op in state.interactions.items():
        r = key.circumference
        if r >= 1:
            out[r] = max(out.get(r, 0.0), op_norm(op))
    return out
