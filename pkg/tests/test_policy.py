from __future__ import annotations

import io
import math

import pytest

from latebind.accel import BreakEven
from latebind.engine import RuntimeSignals
from latebind.errors import ConfigurationError, ValidationError
from latebind.planner import (ACCELERATOR, AGGREGATE, CPU, CostModel, FILTER,
                              HASH_JOIN, JOIN, NESTED_LOOP)
from latebind.policy import (BASELINE, Decision, INDEPENDENT_GATES, KEEP,
                             NodeContext, ORCHESTRATED, REEVALUATE, RiskVector,
                             SWITCH, Thresholds, calibrate, calibration_report,
                             decide, dump_thresholds, load_thresholds,
                             static_thresholds)


def signals(n_obs=1000, ratio=1.0, pressure=0.1, deviation=1.0) -> RuntimeSignals:
    return RuntimeSignals(observed_input_cardinality=n_obs, estimate_ratio=ratio,
                          memory_pressure=pressure, elapsed_deviation=deviation)


def calibrated(**overrides) -> Thresholds:
    base = Thresholds(**overrides)
    return calibrate({FILTER: BreakEven(FILTER, 10000.0, 10000.0),
                      AGGREGATE: BreakEven(AGGREGATE, 10000.0, 10000.0)}, base)


JOIN_CTX_NL = NodeContext(kind=JOIN, current=NESTED_LOOP,
                          variants=(HASH_JOIN, NESTED_LOOP))
JOIN_CTX_HASH = NodeContext(kind=JOIN, current=HASH_JOIN,
                            variants=(HASH_JOIN, NESTED_LOOP))
FILTER_CTX_CPU = NodeContext(kind=FILTER, current=CPU, variants=(ACCELERATOR, CPU))
FILTER_CTX_ACC = NodeContext(kind=FILTER, current=ACCELERATOR, variants=(ACCELERATOR, CPU))


def test_nominal_signals_keep():
    urs = RiskVector(r_opt=0.0, r_exec=signals(), r_acc=0.5)
    assert decide(urs, JOIN_CTX_NL, calibrated(), ORCHESTRATED) == Decision.keep()
    assert decide(urs, FILTER_CTX_ACC, calibrated(), ORCHESTRATED) == Decision.keep()


def test_rule1_ratio_triggers_hash_join():
    urs = RiskVector(r_opt=0.0, r_exec=signals(ratio=12.0), r_acc=None)
    assert decide(urs, JOIN_CTX_NL, calibrated(), ORCHESTRATED) == Decision.switch(HASH_JOIN)


def test_rule1_needs_nested_loop_current():
    urs = RiskVector(r_opt=0.0, r_exec=signals(ratio=12.0), r_acc=None)
    assert decide(urs, JOIN_CTX_HASH, calibrated(), ORCHESTRATED) == Decision.keep()


def test_rule2_memory_backoff_to_nested_loop():
    urs = RiskVector(r_opt=0.0, r_exec=signals(pressure=0.9), r_acc=None)
    ctx = NodeContext(kind=JOIN, current=HASH_JOIN,
                      variants=(HASH_JOIN, NESTED_LOOP), build_exceeds_budget=True)
    assert decide(urs, ctx, calibrated(), ORCHESTRATED) == Decision.switch(NESTED_LOOP)
    # without the build actually exceeding the budget the rule stays quiet
    ctx2 = NodeContext(kind=JOIN, current=HASH_JOIN, variants=(HASH_JOIN, NESTED_LOOP))
    assert decide(urs, ctx2, calibrated(), ORCHESTRATED) == Decision.keep()


def test_rule3_offload_at_margin():
    thr = calibrated()  # offload threshold = 1.1 * 10000 = 11000
    at = RiskVector(r_opt=0.0, r_exec=signals(n_obs=11000), r_acc=10000 / 11000)
    assert decide(at, FILTER_CTX_CPU, thr, ORCHESTRATED) == Decision.switch(ACCELERATOR)


def test_rule3_just_below_margin_keep_or_reevaluate():
    thr = calibrated()
    below_trusted = RiskVector(r_opt=0.0, r_exec=signals(n_obs=10999), r_acc=10000 / 10999)
    assert decide(below_trusted, FILTER_CTX_CPU, thr, ORCHESTRATED) == Decision.keep()
    below_distrusted = RiskVector(r_opt=1.5, r_exec=signals(n_obs=10999), r_acc=10000 / 10999)
    assert decide(below_distrusted, FILTER_CTX_CPU, thr, ORCHESTRATED) == Decision.reevaluate()


def test_rule4_unamortized_returns_to_cpu():
    urs = RiskVector(r_opt=0.0, r_exec=signals(n_obs=5000), r_acc=2.0)
    assert decide(urs, FILTER_CTX_ACC, calibrated(), ORCHESTRATED) == Decision.switch(CPU)


def test_rule4_sentinel_forces_cpu():
    urs = RiskVector(r_opt=0.0, r_exec=signals(n_obs=50000), r_acc=math.inf)
    assert decide(urs, FILTER_CTX_ACC, calibrated(), ORCHESTRATED) == Decision.switch(CPU)


def test_rule5_band_with_distrust_reevaluates():
    thr = calibrated()
    urs = RiskVector(r_opt=2.0, r_exec=signals(ratio=9.0), r_acc=None)  # 9 in [10/1.2, 10)
    assert decide(urs, JOIN_CTX_NL, thr, ORCHESTRATED) == Decision.reevaluate()
    # once the re-arm is used, the same inputs keep
    assert decide(urs, JOIN_CTX_NL, thr, ORCHESTRATED,
                  reevaluate_armed=False) == Decision.keep()


def test_rule5_band_without_distrust_keeps():
    urs = RiskVector(r_opt=0.5, r_exec=signals(ratio=9.0), r_acc=None)
    assert decide(urs, JOIN_CTX_NL, calibrated(), ORCHESTRATED) == Decision.keep()


def test_independent_gates_run_local_rules_only():
    thr = static_thresholds(CostModel.default())
    # rule 1 still fires: the ratio is an executor-local quantity
    hot = RiskVector(r_opt=None, r_exec=signals(ratio=12.0), r_acc=None)
    assert decide(hot, JOIN_CTX_NL, thr, INDEPENDENT_GATES) == Decision.switch(HASH_JOIN)
    # the re-evaluation rule never fires, no matter the planner risk
    band = RiskVector(r_opt=99.0, r_exec=signals(ratio=9.0), r_acc=None)
    assert decide(band, JOIN_CTX_NL, thr, INDEPENDENT_GATES) == Decision.keep()


def test_baseline_mode_rejected():
    urs = RiskVector(r_opt=0.0, r_exec=signals(), r_acc=None)
    with pytest.raises(ConfigurationError):
        decide(urs, JOIN_CTX_NL, calibrated(), BASELINE)


def test_uncalibrated_orchestrated_rejected():
    urs = RiskVector(r_opt=0.0, r_exec=signals(), r_acc=None)
    with pytest.raises(ConfigurationError):
        decide(urs, JOIN_CTX_NL, Thresholds(), ORCHESTRATED)


def test_switch_target_must_be_variant():
    urs = RiskVector(r_opt=0.0, r_exec=signals(ratio=12.0), r_acc=None)
    ctx = NodeContext(kind=JOIN, current=NESTED_LOOP, variants=(NESTED_LOOP,))
    with pytest.raises(ValidationError):
        decide(urs, ctx, calibrated(), ORCHESTRATED)


def test_missing_signals_keep():
    urs = RiskVector(r_opt=5.0, r_exec=None, r_acc=None)
    assert decide(urs, JOIN_CTX_NL, calibrated(), ORCHESTRATED) == Decision.keep()


def test_decision_monotone_in_ratio():
    thr = calibrated()
    rank = {KEEP: 0, REEVALUATE: 1, SWITCH: 2}
    last = -1
    for ratio in [r / 10 for r in range(10, 250, 5)]:
        urs = RiskVector(r_opt=2.0, r_exec=signals(ratio=ratio), r_acc=None)
        decision = decide(urs, JOIN_CTX_NL, thr, ORCHESTRATED)
        assert rank[decision.action] >= last
        last = rank[decision.action]
    assert last == rank[SWITCH]


def test_decide_is_pure():
    urs = RiskVector(r_opt=1.0, r_exec=signals(ratio=9.5), r_acc=0.9)
    thr = calibrated()
    assert decide(urs, JOIN_CTX_NL, thr, ORCHESTRATED) == \
        decide(urs, JOIN_CTX_NL, thr, ORCHESTRATED)


# ── calibration ────────────────────────────────────────────────────────────


def test_calibrate_applies_margin():
    thr = calibrate({FILTER: BreakEven(FILTER, 10000.0, 10100.0)})
    assert thr.offload_thresholds[FILTER] == pytest.approx(11000.0)
    assert thr.n_star[FILTER] == pytest.approx(10000.0)
    assert thr.calibrated


def test_calibrate_disables_missing_break_even():
    thr = calibrate({FILTER: None})
    assert thr.offload_thresholds[FILTER] == math.inf


def test_calibrate_distinct_kinds_distinct_thresholds():
    thr = calibrate({FILTER: BreakEven(FILTER, 10000.0, 10000.0),
                     AGGREGATE: BreakEven(AGGREGATE, 4000.0, 4000.0)})
    assert thr.offload_thresholds[FILTER] != thr.offload_thresholds[AGGREGATE]
    assert thr.offload_thresholds[AGGREGATE] == pytest.approx(4400.0)


def test_calibrate_requires_input():
    with pytest.raises(ValidationError):
        calibrate({})


def test_static_thresholds_from_model():
    thr = static_thresholds(CostModel.default())
    assert thr.source == "static"
    assert thr.offload_thresholds[FILTER] == pytest.approx(11000.0)
    miscal = static_thresholds(CostModel.default().scaled_accel_setup(0.5))
    assert miscal.offload_thresholds[FILTER] == pytest.approx(5500.0)


def test_threshold_validation():
    with pytest.raises(ValidationError):
        Thresholds(rho_join=1.0)
    with pytest.raises(ValidationError):
        Thresholds(offload_margin=0.9)
    with pytest.raises(ValidationError):
        Thresholds(reevaluate_band=0.5)


def test_disabled_thresholds_never_fire():
    thr = Thresholds.disabled()
    extreme = RiskVector(r_opt=99.0, r_exec=signals(n_obs=10**9, ratio=1e9, pressure=1.0),
                         r_acc=None)
    assert decide(extreme, JOIN_CTX_NL, thr, ORCHESTRATED) == Decision.keep()
    assert decide(extreme, FILTER_CTX_CPU, thr, ORCHESTRATED) == Decision.keep()


def test_thresholds_roundtrip_including_disabled():
    for thr in (calibrated(rho_join=7.5), Thresholds.disabled()):
        buf = io.StringIO()
        dump_thresholds(thr, buf)
        buf.seek(0)
        assert load_thresholds(buf) == thr


def test_thresholds_unknown_keys_rejected():
    buf = io.StringIO('{"rho_join": 5.0, "bogus": 1}')
    with pytest.raises(ValidationError):
        load_thresholds(buf)


def test_calibration_report_mentions_kinds():
    text = calibration_report(calibrate({FILTER: BreakEven(FILTER, 10000.0, 10000.0),
                                         AGGREGATE: None}))
    assert "offload[filter]" in text
    assert "disabled" in text


# ── componentwise integrity ────────────────────────────────────────────────


def test_risk_vector_exposes_no_scalar_fold():
    fields = {"r_opt", "r_exec", "r_acc"}
    public = {name for name in vars(RiskVector)
              if not name.startswith("_") and name not in ("__doc__",)}
    # dataclass adds no public methods; the only public surface is the components
    assert public <= fields | {"__dataclass_fields__", "__dataclass_params__"}
    assert not hasattr(RiskVector, "__float__")
    assert not hasattr(RiskVector, "__int__")
    for forbidden in ("total", "scalar", "combined", "fold", "magnitude", "score"):
        assert not hasattr(RiskVector, forbidden)


def test_risk_vector_components_optional():
    rv = RiskVector()
    assert rv.r_opt is None and rv.r_exec is None and rv.r_acc is None
