from __future__ import annotations

import dataclasses
import io
import itertools

import pytest

from latebind.clock import SimulatedClock, WallClock
from latebind.datagen import ColumnSpec, DriftSpec, TableSpec, apply_drift, generate_table
from latebind.engine import (EngineConfig, RuntimeSignals, brute_force_join_count,
                             execute, observe, trace_csv)
from latebind.errors import ConfigurationError, ValidationError
from latebind.planner import (ACCELERATOR, CPU, HASH_JOIN, NESTED_LOOP, AggSpec,
                              CostModel, Query, plan)
from latebind.policy import (BASELINE, INDEPENDENT_GATES, ORCHESTRATED, Thresholds,
                             static_thresholds)
from latebind.stats import Predicate, capture_statistics


def forced(plan_, join=None, left_filter=None, aggregate=None):
    """Copy of the plan with chosen variants overridden."""
    p = dataclasses.replace(plan_)
    if join:
        p.join = dataclasses.replace(plan_.join, chosen=join)
    if left_filter:
        p.left_filter = dataclasses.replace(plan_.left_filter, chosen=left_filter)
    if aggregate:
        p.aggregate = dataclasses.replace(plan_.aggregate, chosen=aggregate)
    return p


def brute_force_join_sum(left_key, right_key, left_val) -> int:
    total = 0
    for k, v in zip(left_key.tolist(), left_val.tolist()):
        total += v * int((right_key == k).sum())
    return total


@pytest.fixture
def drift_setup(default_model):
    fact = generate_table(TableSpec("fact", 2000, (
        ColumnSpec("fk", 0, 1999), ColumnSpec("v", 0, 999))), seed=61)
    dim = generate_table(TableSpec("dim", 2000, (ColumnSpec("pk", 0, 1999),)), seed=62)
    stats = {"fact": capture_statistics(fact), "dim": capture_statistics(dim)}
    p = plan(Query("fact", "dim", "fk", "pk", AggSpec("sum", "v")), stats, default_model)
    drifted = apply_drift(fact, DriftSpec(scale_factor=20.0), seed=63)
    thr = static_thresholds(default_model)
    return p, fact, drifted, dim, thr


def test_result_identical_across_modes(small_plan, small_tables, default_model):
    clock = SimulatedClock(sigma=0.05)
    thr = static_thresholds(default_model)
    values = set()
    for mode in (BASELINE, INDEPENDENT_GATES, ORCHESTRATED):
        result, trace = execute(small_plan, small_tables, mode, thr, clock, seed=5)
        assert not trace.failed
        values.add(result.value)
    assert len(values) == 1


def test_forced_variants_identical_and_match_oracle(small_plan, small_tables):
    clock = SimulatedClock(sigma=0.0)
    left, right = small_tables["l"], small_tables["r"]
    expected_sum = brute_force_join_sum(left.column("k"), right.column("k"), left.column("v"))
    expected_count = brute_force_join_count(left.column("k"), right.column("k"))
    for join, agg in itertools.product((HASH_JOIN, NESTED_LOOP), (CPU, ACCELERATOR)):
        p = forced(small_plan, join=join, aggregate=agg)
        result, trace = execute(p, small_tables, BASELINE, Thresholds(), clock, seed=5)
        assert result.value == expected_sum
        join_record = next(r for r in trace.records if r.kind == "join")
        assert join_record.executed_variant == join
        agg_record = next(r for r in trace.records if r.kind == "aggregate")
        assert agg_record.n_obs == expected_count


def test_simulated_clock_bitwise_determinism(small_plan, small_tables):
    clock = SimulatedClock(sigma=0.05)
    _, t1 = execute(small_plan, small_tables, BASELINE, Thresholds(), clock, seed=9)
    _, t2 = execute(small_plan, small_tables, BASELINE, Thresholds(), clock, seed=9)
    assert t1.total_latency == t2.total_latency
    assert [r.charged_cost for r in t1.records] == [r.charged_cost for r in t2.records]
    _, t3 = execute(small_plan, small_tables, BASELINE, Thresholds(), clock, seed=10)
    assert t1.total_latency != t3.total_latency


def test_observe_ratio_examples(small_plan):
    node = dataclasses.replace(small_plan.join,
                               est_input=dataclasses.replace(small_plan.join.est_input,
                                                             value=1000.0))
    s1 = observe(node, 1000, held_bytes=0, memory_budget=100, charged_so_far=0.0,
                 predicted_so_far=1.0)
    assert s1.estimate_ratio == pytest.approx(1.0)
    s2 = observe(node, 12000, held_bytes=0, memory_budget=100, charged_so_far=0.0,
                 predicted_so_far=1.0)
    assert s2.estimate_ratio == pytest.approx(12.0)


def test_observe_memory_pressure_ratio(small_plan):
    s = observe(small_plan.join, 10, held_bytes=80 * 2**20, memory_budget=100 * 2**20,
                charged_so_far=0.0, predicted_so_far=1.0)
    assert s.memory_pressure == pytest.approx(0.8)
    assert not s.memory_clamped
    clamped = observe(small_plan.join, 10, held_bytes=150, memory_budget=100,
                      charged_so_far=0.0, predicted_so_far=1.0)
    assert clamped.memory_pressure == 1.0
    assert clamped.memory_clamped


def test_runtime_signals_validation():
    with pytest.raises(ValidationError):
        RuntimeSignals(observed_input_cardinality=-1, estimate_ratio=1.0,
                       memory_pressure=0.0, elapsed_deviation=0.0)


def test_baseline_rigidity_under_drift(drift_setup):
    p, _, drifted, dim, thr = drift_setup
    clock = SimulatedClock(sigma=0.05)
    _, trace = execute(p, {"fact": drifted, "dim": dim}, BASELINE, thr, clock, seed=3)
    for record in trace.records:
        assert record.executed_variant == record.planned_variant
        if record.decisions:
            assert record.decisions == ("keep",)


def test_orchestrated_switches_join_under_drift(drift_setup):
    p, _, drifted, dim, thr = drift_setup
    clock = SimulatedClock(sigma=0.05)
    result_b, trace_b = execute(p, {"fact": drifted, "dim": dim}, BASELINE, thr, clock, seed=3)
    result_o, trace_o = execute(p, {"fact": drifted, "dim": dim}, ORCHESTRATED, thr,
                                clock, seed=3)
    assert result_b.value == result_o.value
    join = next(r for r in trace_o.records if r.kind == "join")
    assert join.executed_variant == HASH_JOIN
    assert join.decisions == (f"switch:{HASH_JOIN}",)
    assert trace_o.total_latency < trace_b.total_latency


def test_orchestrated_returns_to_cpu_when_shrunk(default_model):
    # estimates promise an accelerator-sized input; the actual table shrank 20x
    fact = generate_table(TableSpec("fact", 20000, (
        ColumnSpec("fk", 0, 999), ColumnSpec("v", 0, 999), ColumnSpec("a", 0, 99))), seed=71)
    dim = generate_table(TableSpec("dim", 1000, (ColumnSpec("pk", 0, 999),)), seed=72)
    stats = {"fact": capture_statistics(fact), "dim": capture_statistics(dim)}
    p = plan(Query("fact", "dim", "fk", "pk", AggSpec("count"),
                   left_filter=Predicate("a", ">=", 0)), stats, default_model)
    assert p.left_filter.chosen == ACCELERATOR  # est 20000 >= break-even
    shrunk = apply_drift(fact, DriftSpec(scale_factor=0.05), seed=73)
    thr = static_thresholds(default_model)
    clock = SimulatedClock(sigma=0.0)
    _, trace = execute(p, {"fact": shrunk, "dim": dim}, ORCHESTRATED, thr, clock, seed=4)
    flt = next(r for r in trace.records if r.kind == "filter")
    assert flt.executed_variant == CPU
    assert flt.decisions == (f"switch:{CPU}",)


def test_charged_cost_accounting_exact(small_plan, small_tables):
    clock = SimulatedClock(sigma=0.05)
    _, trace = execute(small_plan, small_tables, BASELINE, Thresholds(), clock, seed=6)
    total = 0.0
    for record in trace.records:
        total += record.charged_cost
    assert trace.total_latency == total  # same accumulation order, bitwise equal


def test_decisions_only_at_late_bind_nodes(small_plan, small_tables):
    clock = SimulatedClock(sigma=0.0)
    _, trace = execute(small_plan, small_tables, ORCHESTRATED,
                       static_thresholds(CostModel.default()), clock, seed=6)
    for record in trace.records:
        if record.kind == "scan":
            assert record.decisions == ()
        else:
            assert len(record.decisions) >= 1
    assert trace.decision_count == sum(len(r.decisions) for r in trace.records)
    assert len(trace.records) == len(small_plan.nodes())


def test_spill_inflates_charged_cost(small_plan, small_tables, default_model):
    clock = SimulatedClock(sigma=0.0)
    roomy = EngineConfig()
    _, base_trace = execute(forced(small_plan, join=HASH_JOIN), small_tables,
                            BASELINE, Thresholds(), clock, seed=8, config=roomy)
    base_join = next(r for r in base_trace.records if r.kind == "join")
    # budget below the held working set at the join, hard cap far above
    tight = EngineConfig(memory_budget_bytes=1200, hard_memory_factor=1000.0)
    _, spill_trace = execute(forced(small_plan, join=HASH_JOIN), small_tables,
                             BASELINE, Thresholds(), clock, seed=8, config=tight)
    spill_join = next(r for r in spill_trace.records if r.kind == "join")
    assert spill_join.spilled
    assert spill_join.charged_cost == pytest.approx(3.0 * base_join.charged_cost)


def test_memory_pressure_backs_hash_join_off_to_nested_loop(drift_setup):
    # forced hash build over a tight budget: rule 2 swaps in the streaming join
    p, fact, _, dim, thr = drift_setup
    hash_bound = forced(p, join=HASH_JOIN)
    clock = SimulatedClock(sigma=0.0)
    # held at the join = fact cols (2 * 2000 * 8) + dim col (2000 * 8) = 48000
    tight = EngineConfig(memory_budget_bytes=56000, hard_memory_factor=1000.0)
    for mode in (ORCHESTRATED, INDEPENDENT_GATES):
        result, trace = execute(hash_bound, {"fact": fact, "dim": dim}, mode, thr,
                                clock, seed=5, config=tight)
        join = next(r for r in trace.records if r.kind == "join")
        assert join.planned_variant == HASH_JOIN
        assert join.executed_variant == NESTED_LOOP
        assert join.decisions == (f"switch:{NESTED_LOOP}",)
    _, baseline_trace = execute(hash_bound, {"fact": fact, "dim": dim}, BASELINE, thr,
                                clock, seed=5, config=tight)
    assert next(r for r in baseline_trace.records
                if r.kind == "join").executed_variant == HASH_JOIN


def test_concurrent_queries_match_sequential(small_plan, small_tables, default_model):
    from concurrent.futures import ThreadPoolExecutor

    clock = SimulatedClock(sigma=0.05)
    thr = static_thresholds(default_model)

    def run(seed: int):
        result, trace = execute(small_plan, small_tables, ORCHESTRATED, thr, clock, seed)
        return result.value, trace.total_latency

    sequential = [run(seed) for seed in range(16)]
    with ThreadPoolExecutor(max_workers=8) as pool:
        concurrent = list(pool.map(run, range(16)))
    assert concurrent == sequential


def test_memory_exhaustion_fails_query(small_plan, small_tables):
    clock = SimulatedClock(sigma=0.0)
    config = EngineConfig(memory_budget_bytes=64, hard_memory_factor=1.0)
    result, trace = execute(small_plan, small_tables, BASELINE, Thresholds(), clock,
                            seed=8, config=config)
    assert result is None
    assert trace.failed
    assert "hard cap" in trace.failure


def test_disabled_thresholds_match_baseline_exactly(drift_setup):
    p, _, drifted, dim, _ = drift_setup
    clock = SimulatedClock(sigma=0.05)
    _, t_base = execute(p, {"fact": drifted, "dim": dim}, BASELINE,
                        Thresholds(), clock, seed=12)
    _, t_off = execute(p, {"fact": drifted, "dim": dim}, ORCHESTRATED,
                       Thresholds.disabled(), clock, seed=12)
    assert t_base.total_latency == t_off.total_latency
    assert [r.charged_cost for r in t_base.records] == [r.charged_cost for r in t_off.records]
    assert [r.executed_variant for r in t_base.records] == \
        [r.executed_variant for r in t_off.records]


def test_uncalibrated_thresholds_rejected_for_hooked_modes(small_plan, small_tables):
    clock = SimulatedClock(sigma=0.0)
    with pytest.raises(ConfigurationError):
        execute(small_plan, small_tables, ORCHESTRATED, Thresholds(), clock, seed=1)
    with pytest.raises(ConfigurationError):
        execute(small_plan, small_tables, INDEPENDENT_GATES, Thresholds(), clock, seed=1)


def test_missing_table_rejected(small_plan, small_tables):
    clock = SimulatedClock(sigma=0.0)
    with pytest.raises(ValidationError):
        execute(small_plan, {"l": small_tables["l"]}, BASELINE, Thresholds(), clock, seed=1)


def test_wall_clock_runs_and_reports_positive_latency(small_plan, small_tables):
    result, trace = execute(small_plan, small_tables, BASELINE, Thresholds(),
                            WallClock(), seed=1)
    assert result is not None
    assert trace.total_latency > 0.0


def test_trace_csv_schema(small_plan, small_tables):
    clock = SimulatedClock(sigma=0.0)
    _, trace = execute(small_plan, small_tables, BASELINE, Thresholds(), clock, seed=2)
    buf = io.StringIO()
    trace_csv(trace, buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == ("node_id,kind,planned_variant,executed_variant,n_est,n_obs,"
                       "decisions,charged_cost,spilled")
    assert len(lines) == 1 + len(trace.records)
    assert any(line.startswith("join,") for line in lines[1:])


def test_nested_loop_kernel_matches_hash_kernel_bits(default_model):
    # run both join kernels on the same inputs through forced plans
    fact = generate_table(TableSpec("fact", 800, (
        ColumnSpec("fk", 0, 49), ColumnSpec("v", 0, 99))), seed=91)
    dim = generate_table(TableSpec("dim", 700, (ColumnSpec("pk", 0, 49),)), seed=92)
    stats = {"fact": capture_statistics(fact), "dim": capture_statistics(dim)}
    p = plan(Query("fact", "dim", "fk", "pk", AggSpec("sum", "v")), stats, default_model)
    clock = SimulatedClock(sigma=0.0)
    tables = {"fact": fact, "dim": dim}
    r_nl, _ = execute(forced(p, join=NESTED_LOOP), tables, BASELINE, Thresholds(),
                      clock, seed=1)
    r_hj, _ = execute(forced(p, join=HASH_JOIN), tables, BASELINE, Thresholds(),
                      clock, seed=1)
    assert r_nl.value == r_hj.value
    assert r_nl.value == brute_force_join_sum(fact.column("fk"), dim.column("pk"),
                                              fact.column("v"))
