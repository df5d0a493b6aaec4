"""Columnar executor with decision hooks at late-bind operator boundaries.

Operators materialize their outputs fully, so when a late-bind node is about
to run, its input cardinality is exact.  At that boundary the engine builds
the componentwise risk vector (planner-side risk from the plan's estimates
and statistics staleness, executor-side runtime signals, accelerator
amortization risk from the active thresholds) and asks the policy for a
decision per the execution mode.  Baseline never consults the policy.

Costs are charged through the pluggable clock from the *true* cost model at
observed cardinalities; which formula applies is exactly the executed
variant's, which is how an inappropriate early binding shows up as latency.
Noise events are keyed by (query seed, node position), never by mode or
decision outcome, so latency differences between modes reflect decisions
alone.

A switch decision discards no work: variants start from the same
materialized input, whose cost was charged once.  A re-evaluation re-arms
the hook exactly once; the re-fired evaluation may keep or switch but not
re-evaluate again, which rules out oscillation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Callable, Optional

import numpy as np

from . import policy as policy_mod
from .clock import SimulatedClock, WallClock
from .datagen import Table
from .errors import ConfigurationError, MemoryBudgetExceeded, ValidationError
from .planner import (ACCELERATOR, AnnotatedPlan, CPU, CostModel, HASH_JOIN,
                      PlanNode, cost as model_cost, predicted_cost)
from .policy import (BASELINE, Decision, MODES, NodeContext, ORCHESTRATED,
                     RiskVector, Thresholds)
from .rng import derive_seed
from .stats import risk_value

Clock = SimulatedClock | WallClock


@dataclass(frozen=True)
class RuntimeSignals:
    observed_input_cardinality: int
    estimate_ratio: float
    memory_pressure: float       # clamped to 1.0; see memory_clamped
    elapsed_deviation: float
    memory_clamped: bool = False

    def __post_init__(self):
        if self.observed_input_cardinality < 0 or self.estimate_ratio < 0 \
                or self.memory_pressure < 0 or self.elapsed_deviation < 0:
            raise ValidationError("runtime signals must be >= 0")


@dataclass
class EngineConfig:
    memory_budget_bytes: int = 64 * 1024 * 1024
    spill_multiplier: float = 3.0
    hard_memory_factor: float = 4.0     # budget * factor exhausts the query
    batch_size: int = 1024
    nl_pair_cap: int = 4_000_000        # see _nested_loop_join
    true_cost_model: Optional[CostModel] = None  # defaults to the plan's model


@dataclass
class NodeRecord:
    node_id: str
    kind: str
    planned_variant: str
    executed_variant: str
    n_est: float
    n_obs: int
    decisions: tuple[str, ...]   # empty unless late_bind
    charged_cost: float
    spilled: bool = False


@dataclass
class ExecutionTrace:
    records: list[NodeRecord] = field(default_factory=list)
    total_latency: float = 0.0
    decision_count: int = 0
    failed: bool = False
    failure: str = ""


@dataclass(frozen=True)
class QueryResult:
    value: int


def observe(node: PlanNode, n_obs: int, held_bytes: int, memory_budget: int,
            charged_so_far: float, predicted_so_far: float) -> RuntimeSignals:
    """Executor-side signals for one late-bind boundary."""
    est = node.est_input.value
    pressure = held_bytes / memory_budget if memory_budget > 0 else math.inf
    clamped = pressure > 1.0
    return RuntimeSignals(
        observed_input_cardinality=n_obs,
        estimate_ratio=n_obs / max(1.0, est),
        memory_pressure=min(pressure, 1.0),
        elapsed_deviation=charged_so_far / max(predicted_so_far, 1e-9),
        memory_clamped=clamped,
    )


def decision_hook(node: PlanNode, signals: RuntimeSignals, mode: str,
                  thresholds: Thresholds, r_opt: Optional[float],
                  r_acc: Optional[float], build_exceeds_budget: bool,
                  ) -> tuple[str, tuple[str, ...]]:
    """Resolve the variant to execute at a late-bind boundary.

    Returns (variant, decision labels).  One re-evaluation re-arms the hook
    a single time; the second evaluation cannot re-evaluate again.
    """
    if not node.late_bind:
        raise ValidationError(f"{node.node_id}: decision hook on a non-late-bind node")
    if mode == BASELINE:
        return node.chosen, ("keep",)
    urs = RiskVector(r_opt=r_opt if mode == ORCHESTRATED else None,
                     r_exec=signals, r_acc=r_acc)
    ctx = NodeContext(kind=node.kind, current=node.chosen, variants=node.variants,
                      build_exceeds_budget=build_exceeds_budget)
    decision = policy_mod.decide(urs, ctx, thresholds, mode)
    labels = [_label(decision)]
    if decision.action == policy_mod.REEVALUATE:
        decision = policy_mod.decide(urs, ctx, thresholds, mode, reevaluate_armed=False)
        labels.append(_label(decision))
    variant = decision.target if decision.action == policy_mod.SWITCH else node.chosen
    return variant, tuple(labels)


def _label(decision: Decision) -> str:
    if decision.action == policy_mod.SWITCH:
        return f"switch:{decision.target}"
    return decision.action


# ── kernels ────────────────────────────────────────────────────────────────


def _hash_join(probe_key: np.ndarray, build_key: np.ndarray,
               carried: dict[str, np.ndarray], build_carried: dict[str, np.ndarray],
               ) -> tuple[int, dict[str, np.ndarray]]:
    """Equi-join emitting probe-major output; carried columns are gathered
    into the output multiset."""
    order = np.argsort(build_key, kind="stable")
    sorted_key = build_key[order]
    lo = np.searchsorted(sorted_key, probe_key, side="left")
    hi = np.searchsorted(sorted_key, probe_key, side="right")
    counts = hi - lo
    total = int(counts.sum())
    out: dict[str, np.ndarray] = {}
    for name, col in carried.items():
        out[name] = np.repeat(col, counts)
    if build_carried:
        # per-probe ranges expanded into indices of the sorted build side
        expand = np.repeat(lo, counts) + _ranges_arange(counts)
        gather = order[expand]
        for name, col in build_carried.items():
            out[name] = col[gather]
    return total, out


def _ranges_arange(counts: np.ndarray) -> np.ndarray:
    """[0..c0) ++ [0..c1) ++ ... as one vector."""
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    return np.arange(total, dtype=np.int64) - starts


def _nested_loop_join(probe_key: np.ndarray, build_key: np.ndarray,
                      carried: dict[str, np.ndarray], build_carried: dict[str, np.ndarray],
                      block: int, pair_cap: int) -> tuple[int, dict[str, np.ndarray]]:
    """Blocked all-pairs comparison, probe-major like the hash kernel.

    Beyond pair_cap comparisons the same multiset is produced through the
    hash kernel instead: the variant choice governs the charged cost model,
    not the bits of the result, and literal quadratic scans of drifted
    inputs would dominate harness runtime for no informational gain.
    """
    pairs = probe_key.size * build_key.size
    if pairs > pair_cap:
        return _hash_join(probe_key, build_key, carried, build_carried)
    total = 0
    out_chunks: dict[str, list[np.ndarray]] = {name: [] for name in (*carried, *build_carried)}
    for start in range(0, probe_key.size, block):
        p = probe_key[start:start + block]
        hits = p[:, None] == build_key[None, :]
        p_idx, b_idx = np.nonzero(hits)
        total += p_idx.size
        for name, col in carried.items():
            out_chunks[name].append(col[start:start + block][p_idx])
        for name, col in build_carried.items():
            out_chunks[name].append(col[b_idx])
    out = {name: (np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64))
           for name, chunks in out_chunks.items()}
    return total, out


def brute_force_join_count(left_key: np.ndarray, right_key: np.ndarray) -> int:
    """All-pairs oracle; intended for tests on small inputs."""
    return int(sum(int((right_key == k).sum()) for k in left_key))


# ── execution ──────────────────────────────────────────────────────────────


def _needed_columns(plan: AnnotatedPlan) -> tuple[list[str], list[str], Optional[str], str]:
    """Columns to materialize per side, plus the aggregate column and its side."""
    q = plan.query
    left_cols = {q.left_key}
    right_cols = {q.right_key}
    if q.left_filter:
        left_cols.add(q.left_filter.column)
    if q.right_filter:
        right_cols.add(q.right_filter.column)
    agg_col = q.aggregate.column
    agg_side = ""
    if q.aggregate.op == "sum":
        if agg_col in plan.stats[q.left_table].columns:
            left_cols.add(agg_col)
            agg_side = "left"
        elif agg_col in plan.stats[q.right_table].columns:
            right_cols.add(agg_col)
            agg_side = "right"
        else:
            raise ValidationError(f"aggregate column {agg_col!r} not found on either side")
    return sorted(left_cols), sorted(right_cols), agg_col, agg_side


def execute(plan: AnnotatedPlan, tables: dict[str, Table], mode: str,
            thresholds: Thresholds, clock: Clock, seed: int,
            config: Optional[EngineConfig] = None) -> tuple[Optional[QueryResult], ExecutionTrace]:
    """Run one annotated plan; returns (result, trace), result None on failure."""
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}")
    if mode != BASELINE and not thresholds.calibrated:
        raise ConfigurationError(f"{mode} mode requires calibrated thresholds")
    config = config or EngineConfig()
    true_model = config.true_cost_model or plan.cost_model
    q = plan.query
    for name in (q.left_table, q.right_table):
        if name not in tables:
            raise ValidationError(f"table {name!r} not provided")
        if tables[name].generation < plan.stats[name].captured_generation:
            raise ValidationError(f"table {name!r} regressed below its statistics generation")

    staleness = {name: tables[name].generation - plan.stats[name].captured_generation
                 for name in (q.left_table, q.right_table)}
    left_cols, right_cols, agg_col, agg_side = _needed_columns(plan)
    noise_seed = derive_seed(seed, "clock")
    node_order = {node.node_id: i for i, node in enumerate(plan.nodes())}

    trace = ExecutionTrace()
    budget = config.memory_budget_bytes
    hard_cap = budget * config.hard_memory_factor
    held = 0
    charged_total = 0.0
    predicted_total = 0.0

    def bytes_of(cols: dict[str, np.ndarray]) -> int:
        return sum(arr.nbytes for arr in cols.values())

    def run_node(node: PlanNode, variant: str, cards: tuple[float, ...],
                 n_obs: int, decisions: tuple[str, ...],
                 kernel: Callable[[], object], extra_bytes: int = 0,
                 out_bytes_of: Callable[[object], int] = lambda _: 0) -> object:
        nonlocal held, charged_total, predicted_total
        base = model_cost(node.kind, variant, cards, true_model)
        modeled_only = variant == ACCELERATOR
        out, charged = clock.charge(base, noise_seed, node_order[node.node_id],
                                    work=kernel, modeled_only=modeled_only)
        out_bytes = out_bytes_of(out)
        working = held + extra_bytes + out_bytes
        spilled = working > budget
        if working > hard_cap:
            raise MemoryBudgetExceeded(
                f"{node.node_id}: working set {working} exceeds hard cap {hard_cap:.0f}")
        if spilled:
            charged *= config.spill_multiplier
        held += out_bytes
        charged_total += charged
        predicted_total += predicted_cost(plan, node)
        trace.records.append(NodeRecord(
            node_id=node.node_id, kind=node.kind, planned_variant=node.chosen,
            executed_variant=variant, n_est=node.est_input.value, n_obs=n_obs,
            decisions=decisions, charged_cost=charged, spilled=spilled))
        if decisions:
            trace.decision_count += len(decisions)
        return out

    def hook(node: PlanNode, n_obs: int, node_staleness: int,
             build_exceeds: bool = False) -> tuple[str, tuple[str, ...]]:
        signals = observe(node, n_obs, held, budget, charged_total, predicted_total)
        if mode == BASELINE:
            return node.chosen, ("keep",)
        r_opt = risk_value(node.est_input.variance_proxy, node_staleness,
                           thresholds.w_variance, thresholds.w_staleness)
        r_acc = None
        if node.kind in thresholds.n_star:
            r_acc = thresholds.n_star[node.kind] / max(1, n_obs)
        return decision_hook(node, signals, mode, thresholds, r_opt, r_acc, build_exceeds)

    def run_branch(side: str, scan_node: PlanNode, filter_node: Optional[PlanNode],
                   table: Table, cols: list[str]) -> dict[str, np.ndarray]:
        nonlocal held
        n = table.row_count
        out = run_node(scan_node, CPU, (float(n),), n, (),
                       kernel=lambda: {c: table.column(c) for c in cols},
                       out_bytes_of=bytes_of)
        if filter_node is None:
            return out
        variant, decisions = hook(filter_node, n, staleness[table.name])
        pred = filter_node.predicate

        def apply_filter() -> dict[str, np.ndarray]:
            mask = pred.mask(out[pred.column])
            return {name: arr[mask] for name, arr in out.items()}

        filtered = run_node(filter_node, variant, (float(n),),
                            n, decisions, kernel=apply_filter, out_bytes_of=bytes_of)
        held -= bytes_of(out)  # scan output consumed
        return filtered

    try:
        left = run_branch("left", plan.left_scan, plan.left_filter,
                          tables[q.left_table], left_cols)
        right = run_branch("right", plan.right_scan, plan.right_filter,
                           tables[q.right_table], right_cols)

        n_probe = int(left[q.left_key].size)
        n_build = int(right[q.right_key].size)
        build_bytes = bytes_of(right)
        join_staleness = max(staleness.values())
        join_exceeds = held + build_bytes > budget
        variant, decisions = hook(plan.join, n_probe, join_staleness,
                                  build_exceeds=join_exceeds)

        carried = {agg_col: left[agg_col]} if agg_side == "left" else {}
        build_carried = {agg_col: right[agg_col]} if agg_side == "right" else {}

        def run_join() -> tuple[int, dict[str, np.ndarray]]:
            if variant == HASH_JOIN:
                return _hash_join(left[q.left_key], right[q.right_key],
                                  carried, build_carried)
            return _nested_loop_join(left[q.left_key], right[q.right_key],
                                     carried, build_carried,
                                     config.batch_size, config.nl_pair_cap)

        extra = build_bytes if variant == HASH_JOIN else 0
        n_join, join_out = run_node(
            plan.join, variant, (float(n_probe), float(n_build)), n_probe, decisions,
            kernel=run_join, extra_bytes=extra,
            out_bytes_of=lambda pair: bytes_of(pair[1]))
        held -= bytes_of(left) + bytes_of(right)

        variant, decisions = hook(plan.aggregate, n_join, join_staleness)

        def run_agg() -> int:
            if q.aggregate.op == "count":
                return n_join
            return int(join_out[agg_col].sum(dtype=np.int64)) if n_join else 0

        value = run_node(plan.aggregate, variant, (float(n_join),), n_join, decisions,
                         kernel=run_agg)
        held -= bytes_of(join_out)
    except MemoryBudgetExceeded as exc:
        trace.failed = True
        trace.failure = str(exc)
        trace.total_latency = charged_total
        return None, trace

    trace.total_latency = charged_total
    return QueryResult(value=int(value)), trace


def trace_csv(trace: ExecutionTrace, out: IO[str]) -> None:
    """One row per executed node; decisions joined by '+'."""
    out.write("node_id,kind,planned_variant,executed_variant,n_est,n_obs,"
              "decisions,charged_cost,spilled\n")
    for r in trace.records:
        out.write(f"{r.node_id},{r.kind},{r.planned_variant},{r.executed_variant},"
                  f"{r.n_est!r},{r.n_obs},{'+'.join(r.decisions)},{r.charged_cost!r},"
                  f"{int(r.spilled)}\n")
