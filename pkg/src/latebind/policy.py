"""Unified risk signal and the runtime decision rules.

The risk vector stays componentwise: planner-side risk, executor-side
runtime signals, and accelerator amortization risk are carried as separate
(optional) components and consulted by an ordered rule table.  Nothing in
this module folds them into one scalar; the components exist at different
points in time and a scalar blend would erase exactly the information the
runtime decision needs.

Modes: the orchestrated mode runs the full rule table against calibrated
thresholds; the independent-gates mode runs only the executor-local rules
against thresholds derived statically from the planner's own cost model
(its ablation contract: no planner-risk rule, no measured calibration).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import IO, TYPE_CHECKING, Optional

from .accel import BreakEven
from .errors import ConfigurationError, ValidationError
from .planner import (ACCELERATOR, CPU, CostModel, HASH_JOIN, JOIN, NESTED_LOOP,
                      OFFLOADABLE_KINDS, model_break_even)

if TYPE_CHECKING:  # runtime signals are produced by the engine
    from .engine import RuntimeSignals

BASELINE = "baseline"
INDEPENDENT_GATES = "independent_gates"
ORCHESTRATED = "orchestrated"
MODES = (BASELINE, INDEPENDENT_GATES, ORCHESTRATED)

KEEP = "keep"
SWITCH = "switch"
REEVALUATE = "reevaluate"

UNCALIBRATED = "uncalibrated"


@dataclass(frozen=True)
class RiskVector:
    """Componentwise risk; missing components are explicitly None.

    Deliberately exposes no scalar fold of its components.
    """

    r_opt: Optional[float] = None
    r_exec: Optional["RuntimeSignals"] = None
    r_acc: Optional[float] = None


@dataclass(frozen=True)
class Decision:
    action: str
    target: Optional[str] = None

    @staticmethod
    def keep() -> "Decision":
        return Decision(KEEP)

    @staticmethod
    def switch(target: str) -> "Decision":
        return Decision(SWITCH, target)

    @staticmethod
    def reevaluate() -> "Decision":
        return Decision(REEVALUATE)


@dataclass(frozen=True)
class NodeContext:
    """What the decision rules need to know about the node at the hook."""

    kind: str
    current: str
    variants: tuple[str, ...]
    build_exceeds_budget: bool = False


@dataclass(frozen=True)
class Thresholds:
    rho_join: float = 10.0        # estimate-ratio trigger for join re-selection
    mem_high: float = 0.8         # memory-pressure trigger
    opt_distrust: float = 1.0     # planner risk above which runtime evidence outweighs estimates
    offload_margin: float = 1.1   # safety multiplier on the break-even size
    reevaluate_band: float = 1.2  # multiplicative half-width of the near-threshold band
    w_variance: float = 1.0       # planner-risk weights
    w_staleness: float = 1.0
    offload_thresholds: dict[str, float] = field(default_factory=dict)  # kind -> margin * N*
    n_star: dict[str, float] = field(default_factory=dict)              # kind -> N*
    source: str = UNCALIBRATED    # uncalibrated | calibrated | static | manual

    def __post_init__(self):
        if not (self.rho_join > 1):
            raise ValidationError(f"rho_join must be > 1, got {self.rho_join}")
        if not (0 < self.mem_high):
            raise ValidationError(f"mem_high must be > 0, got {self.mem_high}")
        if not (self.offload_margin >= 1):
            raise ValidationError(f"offload_margin must be >= 1, got {self.offload_margin}")
        if not (self.reevaluate_band >= 1):
            raise ValidationError(f"reevaluate_band must be >= 1, got {self.reevaluate_band}")
        if not (self.opt_distrust > 0):
            raise ValidationError(f"opt_distrust must be > 0, got {self.opt_distrust}")

    @property
    def calibrated(self) -> bool:
        return self.source != UNCALIBRATED

    @staticmethod
    def disabled() -> "Thresholds":
        """All triggers unreachable: the hook never fires a change."""
        return Thresholds(rho_join=math.inf, mem_high=math.inf, opt_distrust=math.inf,
                          reevaluate_band=1.0,
                          offload_thresholds={k: math.inf for k in OFFLOADABLE_KINDS},
                          n_star={k: math.inf for k in OFFLOADABLE_KINDS},
                          source="manual")


def _in_band(value: float, threshold: float, band: float) -> bool:
    if not math.isfinite(threshold) or threshold <= 0 or band <= 1.0:
        return False
    ratio = value / threshold
    return 1.0 / band <= ratio <= band


def decide(urs: RiskVector, ctx: NodeContext, thresholds: Thresholds, mode: str,
           reevaluate_armed: bool = True) -> Decision:
    """Evaluate the rule table top-down; first matching rule wins.

    reevaluate_armed is cleared by the engine when a node re-fires after a
    re-evaluation, which is what bounds the hook to a single re-arm.
    """
    if mode == BASELINE:
        raise ConfigurationError("baseline mode never consults the decision rules")
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}")
    if mode == ORCHESTRATED and not thresholds.calibrated:
        raise ConfigurationError("orchestrated mode requires calibrated thresholds")

    signals = urs.r_exec
    if signals is None:
        return Decision.keep()

    def switch_to(target: str) -> Decision:
        if target not in ctx.variants:
            raise ValidationError(
                f"switch target {target!r} not among node variants {ctx.variants}")
        return Decision.switch(target)

    # (1) join inputs far above estimate while on the quadratic strategy
    if (ctx.kind == JOIN and ctx.current == NESTED_LOOP
            and signals.estimate_ratio >= thresholds.rho_join):
        return switch_to(HASH_JOIN)

    # (2) hash build would not fit: back off to the streaming strategy
    if (ctx.kind == JOIN and ctx.current == HASH_JOIN
            and signals.memory_pressure >= thresholds.mem_high
            and ctx.build_exceeds_budget):
        return switch_to(NESTED_LOOP)

    if ctx.kind in OFFLOADABLE_KINDS:
        offload_at = thresholds.offload_thresholds.get(ctx.kind, math.inf)
        # (3) input large enough that up-front costs amortize with margin
        if ctx.current == CPU and signals.observed_input_cardinality >= offload_at:
            return switch_to(ACCELERATOR)
        # (4) bound to the accelerator but the input will not amortize it
        if ctx.current == ACCELERATOR and urs.r_acc is not None and urs.r_acc > 1.0:
            return switch_to(CPU)

    # (5) near a threshold with an untrustworthy plan: ask to look again
    if mode == ORCHESTRATED and reevaluate_armed and urs.r_opt is not None \
            and urs.r_opt >= thresholds.opt_distrust:
        band = thresholds.reevaluate_band
        near = False
        if ctx.kind == JOIN:
            near = _in_band(signals.estimate_ratio, thresholds.rho_join, band)
        elif ctx.kind in OFFLOADABLE_KINDS:
            near = _in_band(signals.observed_input_cardinality,
                            thresholds.offload_thresholds.get(ctx.kind, math.inf), band)
        if near:
            return Decision.reevaluate()

    # (6) nothing fired
    return Decision.keep()


def calibrate(break_evens: dict[str, Optional[BreakEven]],
              base: Optional[Thresholds] = None) -> Thresholds:
    """Turn measured break-evens into runtime thresholds.

    Kinds whose benchmark found no break-even get an unreachable threshold:
    offloading is disabled for them rather than guessed at.
    """
    if not break_evens:
        raise ValidationError("calibration requires at least one op kind's break-even result")
    base = base or Thresholds()
    offload = {}
    n_star = {}
    for kind, be in sorted(break_evens.items()):
        if be is None:
            offload[kind] = math.inf
            n_star[kind] = math.inf
        else:
            offload[kind] = base.offload_margin * be.n_star_estimated
            n_star[kind] = be.n_star_estimated
    return replace(base, offload_thresholds=offload, n_star=n_star, source="calibrated")


def static_thresholds(model: CostModel, base: Optional[Thresholds] = None) -> Thresholds:
    """Thresholds for the independent-gates ablation: break-evens read off
    the planner's cost model coefficients instead of measurements."""
    base = base or Thresholds()
    offload = {}
    n_star = {}
    for kind in sorted(model.accel):
        analytic = model_break_even(model, kind)
        if analytic is None:
            offload[kind] = math.inf
            n_star[kind] = math.inf
        else:
            offload[kind] = base.offload_margin * analytic
            n_star[kind] = analytic
    return replace(base, offload_thresholds=offload, n_star=n_star, source="static")


def calibration_report(thresholds: Thresholds) -> str:
    lines = [f"thresholds (source={thresholds.source})",
             f"  rho_join          {thresholds.rho_join}",
             f"  mem_high          {thresholds.mem_high}",
             f"  opt_distrust      {thresholds.opt_distrust}",
             f"  offload_margin    {thresholds.offload_margin}",
             f"  reevaluate_band   {thresholds.reevaluate_band}"]
    for kind in sorted(thresholds.offload_thresholds):
        n_star = thresholds.n_star.get(kind, math.inf)
        at = thresholds.offload_thresholds[kind]
        if math.isfinite(at):
            lines.append(f"  offload[{kind}]  n*={n_star:.2f}  threshold={at:.2f}")
        else:
            lines.append(f"  offload[{kind}]  disabled (no break-even)")
    return "\n".join(lines) + "\n"


def dump_thresholds(thresholds: Thresholds, out: IO[str]) -> None:
    doc = {
        "rho_join": thresholds.rho_join,
        "mem_high": thresholds.mem_high,
        "opt_distrust": thresholds.opt_distrust,
        "offload_margin": thresholds.offload_margin,
        "reevaluate_band": thresholds.reevaluate_band,
        "w_variance": thresholds.w_variance,
        "w_staleness": thresholds.w_staleness,
        "offload_thresholds": thresholds.offload_thresholds,
        "n_star": thresholds.n_star,
        "source": thresholds.source,
    }
    json.dump(doc, out, indent=2, sort_keys=True)
    out.write("\n")


def load_thresholds(fh: IO[str]) -> Thresholds:
    doc = json.load(fh)
    known = {"rho_join", "mem_high", "opt_distrust", "offload_margin", "reevaluate_band",
             "w_variance", "w_staleness", "offload_thresholds", "n_star", "source"}
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"unknown threshold keys: {sorted(unknown)}")
    doc["offload_thresholds"] = {k: float(v) for k, v in doc.get("offload_thresholds", {}).items()}
    doc["n_star"] = {k: float(v) for k, v in doc.get("n_star", {}).items()}
    return Thresholds(**doc)
