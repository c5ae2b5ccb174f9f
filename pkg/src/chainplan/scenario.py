"""Synthetic retail world for end-to-end evaluation.

The generator builds a monthly history per department and SKU from a
multiplicative demand model:

    units = base * dept_factor * sku_factor * season(month)
                 * (1 + promo_uplift(month)) * (1 + eps)

Seasonality and the promotion calendar are month-keyed config maps.
Every default factor is a dyadic rational (denominators are powers of
two) and the unit price is a constant power of two, so with sigma = 0
every cell, every monthly total, and every plan derived from them is
exact in float arithmetic: the model is 12-month periodic, a
seasonal-naive plan hits the realized demand with deviation exactly
0.0, and revenue totals are an exact power-of-two multiple of unit
totals. The noise term eps is uniform on [-sqrt(3)*sigma,
+sqrt(3)*sigma] (standard deviation sigma), drawn from a per-cell
seeded generator so any cell is reproducible in isolation.

The last generated month is withheld from the agent: sessions plan for
it from the preceding history, then simulate_execution realizes the
withheld demand, optionally scaled by injected factor shocks, and
reports factor metrics shaped for cause attribution. Factor metrics
are measured in demand units. A factor's realized level is the same
per-cell rounded sum that drives the revenue actuals, so the deviation
of the shocked factor is bit-identical to the revenue deviation and
attribution recovers the injected cause even when a shock lands on the
flagging threshold's knife edge.
"""

from __future__ import annotations

import math
import random
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, fields
from fractions import Fraction

from .agents import Orchestrator
from .config import SessionConfig, parse_kv_file
from .correction import attribute_cause, detect_deviation
from .dates import Period, epoch_days, format_iso_date
from .errors import ConfigError, ScenarioError
from .gateway import RulebasedBackend
from .report import Plan, PlanReport
from .table import Catalog, Column, Table
from .toolbox import in_stock_rate, plan_deviation

_SQRT3 = math.sqrt(3.0)

# Dyadic per-month demand multipliers; November carries the single
# default promotion. Unit price is a power of two so revenue is an
# exact binary shift of units.
DEFAULT_SEASONALITY = (
    "1:1.625, 2:1.3125, 3:1.0, 4:1.4375, 5:1.125, 6:1.5625,"
    " 7:1.25, 8:1.6875, 9:1.375, 10:1.0625, 11:1.5, 12:1.1875"
)
DEFAULT_PROMOS = "11:0.5"
UNIT_PRICE = 16.0

SHOCK_FACTORS = ("promo", "traffic")


def parse_month_map(text: str, field_name: str) -> dict[int, float]:
    """Parse "month:value, month:value" pairs."""
    out: dict[int, float] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        raw_month, sep, raw_value = part.partition(":")
        if not sep:
            raise ConfigError(
                f"expected month:value, got {part!r}", field=field_name
            )
        try:
            month = int(raw_month.strip())
            value = float(raw_value.strip())
        except ValueError:
            raise ConfigError(
                f"expected month:value, got {part!r}", field=field_name
            ) from None
        if not 1 <= month <= 12:
            raise ConfigError(
                f"month out of range: {month}", field=field_name
            )
        if month in out:
            raise ConfigError(
                f"duplicate month {month}", field=field_name
            )
        out[month] = value
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    sigma: float = 0.0
    departments: int = 2
    skus_per_dept: int = 3
    months: int = 25
    start: str = "2023-01"
    base_demand: float = 1000.0
    seasonality: str = DEFAULT_SEASONALITY
    promos: str = DEFAULT_PROMOS
    lead_time: int = 1
    service_z: float = 1.645
    plan_sub_periods: int = 4
    threshold: float = 0.10

    @classmethod
    def from_mapping(cls, mapping: dict[str, str],
                     base: ScenarioConfig | None = None) -> ScenarioConfig:
        values = {f.name: getattr(base, f.name) for f in fields(cls)} if base \
            else {f.name: f.default for f in fields(cls)}
        types = {f.name: f.type for f in fields(cls)}
        for key, raw in mapping.items():
            if key not in values:
                raise ConfigError(f"unknown scenario key: {key}", field=key)
            try:
                if types[key] == "int":
                    values[key] = int(raw)
                elif types[key] == "float":
                    values[key] = float(raw)
                else:
                    values[key] = raw
            except ValueError:
                raise ConfigError(
                    f"bad value for {key}: {raw!r}", field=key
                ) from None
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def season_map(self) -> dict[int, float]:
        return parse_month_map(self.seasonality, "seasonality")

    def promo_map(self) -> dict[int, float]:
        return parse_month_map(self.promos, "promos")

    def validate(self) -> None:
        if self.months < 13:
            raise ConfigError(
                "months must be at least 13 (12 history plus the target)",
                field="months",
            )
        if self.departments < 1:
            raise ConfigError("departments must be positive", field="departments")
        if self.skus_per_dept < 1:
            raise ConfigError("skus_per_dept must be positive",
                              field="skus_per_dept")
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative", field="sigma")
        if self.base_demand <= 0:
            raise ConfigError("base_demand must be positive", field="base_demand")
        for month, mult in self.season_map().items():
            if mult <= 0:
                raise ConfigError(
                    f"seasonality multiplier for month {month} must be "
                    f"positive, got {mult}",
                    field="seasonality",
                )
        for month, uplift in self.promo_map().items():
            if 1.0 + uplift <= 0:
                raise ConfigError(
                    f"promo uplift for month {month} leaves no demand: "
                    f"{uplift}",
                    field="promos",
                )
        if self.lead_time < 0:
            raise ConfigError("lead_time must be non-negative", field="lead_time")
        if self.plan_sub_periods < 1:
            raise ConfigError("plan_sub_periods must be positive",
                              field="plan_sub_periods")
        if self.threshold < 0:
            raise ConfigError("threshold must be non-negative", field="threshold")
        try:
            Period.parse(self.start)
        except ValueError as exc:
            raise ConfigError(str(exc), field="start") from None


def load_scenario_config(path: str) -> ScenarioConfig:
    return ScenarioConfig.from_mapping(parse_kv_file(path))


def _cell_noise(seed: int, dept_i: int, sku_i: int, period: Period,
                sigma: float) -> float:
    if sigma == 0.0:
        return 0.0
    rng = random.Random(f"{seed}:{dept_i}:{sku_i}:{period}")
    half = _SQRT3 * sigma
    return rng.uniform(-half, half)


@dataclass(frozen=True)
class World:
    """Agent-facing catalog plus the withheld target-month ground truth."""
    config: ScenarioConfig
    catalog: Catalog
    target_period: Period
    dept_ids: tuple[str, ...]
    naive_units: dict[str, float]
    target_cells: dict[str, tuple[float, ...]]


def _dept_table(name: str, column: str, entries: list[tuple]) -> Table:
    return Table(
        name=name,
        columns=(
            Column("year", "int"),
            Column("month", "int"),
            Column("dept_id", "string"),
            Column(column, "float"),
        ),
        rows=tuple(entries),
    )


def generate_history(cfg: ScenarioConfig) -> World:
    """Build the catalog the agent reads: sales, traffic, users, and
    inventory, covering every month except the last. traffic, users,
    and inventory are per-department monthly snapshots derived from the
    same demand cells by power-of-two factors, so they stay exact
    whenever the cells are. The withheld month's per-SKU demand cells
    ride along as ground truth for execution simulation, and identical
    configs produce identical worlds.
    """
    cfg.validate()
    season = cfg.season_map()
    promo = cfg.promo_map()
    start = Period.parse(cfg.start)
    periods = [start.plus(i) for i in range(cfg.months)]
    target = periods[-1]
    naive_period = target.plus(-12)
    dept_ids = tuple(f"D{d + 1}" for d in range(cfg.departments))

    sales_rows = []
    traffic_rows = []
    users_rows = []
    inventory_rows = []
    naive_units = {d: 0.0 for d in dept_ids}
    target_cells: dict[str, tuple[float, ...]] = {}
    for period in periods:
        is_target = period == target
        order_date = epoch_days(period.year, period.month, 15)
        season_f = season.get(period.month, 1.0)
        promo_f = 1.0 + promo.get(period.month, 0.0)
        for dept_i, dept in enumerate(dept_ids):
            dept_f = 1.0 + dept_i / 8.0
            dept_units = 0.0
            cells = []
            for sku_i in range(cfg.skus_per_dept):
                sku_f = 1.0 + sku_i / 16.0
                eps = _cell_noise(cfg.seed, dept_i, sku_i, period, cfg.sigma)
                units = (cfg.base_demand * dept_f * sku_f * season_f
                         * promo_f * (1.0 + eps))
                if is_target:
                    cells.append(units)
                    continue
                dept_units += units
                if period == naive_period:
                    naive_units[dept] += units
                sales_rows.append((
                    period.year,
                    period.month,
                    order_date,
                    dept,
                    f"{dept}-S{sku_i + 1:02d}",
                    units,
                    UNIT_PRICE,
                    units * UNIT_PRICE,
                ))
            if is_target:
                target_cells[dept] = tuple(cells)
            else:
                snapshot = (period.year, period.month, dept)
                traffic_rows.append(snapshot + (dept_units * 32.0,))
                users_rows.append(snapshot + (dept_units * 2.0,))
                inventory_rows.append(snapshot + (dept_units * 4.0,))

    catalog = Catalog()
    catalog.register(Table(
        name="sales",
        columns=(
            Column("year", "int"),
            Column("month", "int"),
            Column("order_date", "date"),
            Column("dept_id", "string"),
            Column("sku_id", "string"),
            Column("units", "float"),
            Column("price", "float"),
            Column("sales", "float"),
        ),
        rows=tuple(sales_rows),
    ))
    catalog.register(_dept_table("traffic", "pv", traffic_rows))
    catalog.register(_dept_table("users", "user_cnt", users_rows))
    catalog.register(_dept_table("inventory", "on_hand", inventory_rows))
    return World(
        config=cfg,
        catalog=catalog,
        target_period=target,
        dept_ids=dept_ids,
        naive_units=naive_units,
        target_cells=target_cells,
    )


def split_total(total: float, parts: int) -> list[float]:
    """Equal split, last part absorbs the remainder; mirrors how plans
    lay out sub-period targets, and sums back to the input exactly."""
    if parts < 1:
        raise ScenarioError("parts must be positive")
    per = total / parts
    out = [per] * (parts - 1)
    out.append(total - per * (parts - 1))
    return out


@dataclass(frozen=True)
class ServiceTrace:
    """Per sub-period: stock on hand at the demand moment, and demand."""
    on_hand: tuple[float, ...]
    demand: tuple[float, ...]


def simulate_service(planned_total: float, actual_total: float,
                     sub_periods: int, lead_time: int, z: float,
                     sigma: float) -> ServiceTrace:
    """Order-up-to replenishment over the month's sub-periods, exact
    rational arithmetic, lost sales when stock runs out.

    The base-stock level covers lead time plus one review period at the
    planned demand rate, plus a z-scaled safety term. The trace reports
    opening stock after arrivals against that period's demand.
    """
    if sub_periods < 1:
        raise ScenarioError("sub_periods must be positive")
    if lead_time < 0:
        raise ScenarioError("lead_time must be non-negative")
    rate = Fraction(planned_total) / sub_periods
    demands = [Fraction(x) for x in split_total(actual_total, sub_periods)]
    safety = Fraction(0)
    if z != 0.0 and sigma != 0.0:
        safety = Fraction(abs(z * sigma * float(rate)) *
                          math.sqrt(lead_time + 1))
    level = rate * (lead_time + 1) + safety
    queue = [rate] * lead_time
    on_hand = level - rate * lead_time
    held: list[float] = []
    for demand in demands:
        if queue:
            on_hand += queue.pop(0)
        held.append(float(on_hand))
        on_hand -= min(demand, on_hand)
        order = level - (on_hand + sum(queue, Fraction(0)))
        if order < 0:
            order = Fraction(0)
        if lead_time:
            queue.append(order)
        else:
            on_hand += order
    return ServiceTrace(
        on_hand=tuple(held),
        demand=tuple(float(d) for d in demands),
    )


@dataclass(frozen=True)
class SimulationResult:
    """Realized execution of one plan: revenue actuals, sub-period
    demand, factor metrics shaped for attribute_cause, service trace."""
    department: str
    actual_total: float
    demand: tuple[float, ...]
    factors: dict[str, tuple[float, float]]
    trace: ServiceTrace


def _shocked_units(cells: Sequence[float],
                   multipliers: Sequence[float]) -> float:
    total = 0.0
    for cell in cells:
        for m in multipliers:
            cell *= m
        total += cell
    return total


def simulate_execution(plan: Plan, world: World,
                       shocks: Mapping[str, float] | None = None,
                       ) -> SimulationResult:
    """Realize the withheld month against the plan, scaling demand by
    the injected factor multipliers (keys: promo, traffic).

    Factor metrics report each factor's planned level against its
    realized level, both in demand units: the planned level is the
    seasonal-naive baseline, an unshocked factor realizes it exactly,
    and a shocked factor realizes the per-cell scaled sum. Identity
    shocks change nothing.
    """
    dept = plan.department
    if dept not in world.target_cells:
        raise ScenarioError(
            f"plan names no generated department (got {dept!r})"
        )
    if plan.period != str(world.target_period):
        raise ScenarioError(
            f"plan period {plan.period} is outside the generated horizon; "
            f"only {world.target_period} was withheld for execution"
        )
    shocks = dict(shocks or {})
    for name, multiplier in sorted(shocks.items()):
        if name not in SHOCK_FACTORS:
            raise ScenarioError(
                f"unknown shock factor {name!r}; "
                f"supported: {', '.join(SHOCK_FACTORS)}"
            )
        if not multiplier > 0:
            raise ScenarioError(
                f"shock multiplier for {name} must be positive, "
                f"got {multiplier}"
            )

    cfg = world.config
    cells = world.target_cells[dept]
    combined = [shocks[name] for name in sorted(shocks)]
    actual_units = _shocked_units(cells, combined)
    actual_total = actual_units * UNIT_PRICE
    naive = world.naive_units[dept]
    factors = {
        name: (naive,
               _shocked_units(cells, [shocks[name]])
               if name in shocks else naive)
        for name in SHOCK_FACTORS
    }
    return SimulationResult(
        department=dept,
        actual_total=actual_total,
        demand=tuple(split_total(actual_total, cfg.plan_sub_periods)),
        factors=factors,
        trace=simulate_service(
            planned_total=plan.target,
            actual_total=actual_total,
            sub_periods=cfg.plan_sub_periods,
            lead_time=cfg.lead_time,
            z=cfg.service_z,
            sigma=cfg.sigma,
        ),
    )


@dataclass(frozen=True)
class SessionRun:
    """One planned and simulated session, ready for scoring."""
    plan: Plan
    simulation: SimulationResult
    flagged: bool = False
    cause: str = ""


@dataclass(frozen=True)
class SessionEval:
    dept_id: str
    period: str
    target: float
    actual: float
    deviation: float
    flagged: bool
    cause: str
    in_stock_rate: float


@dataclass(frozen=True)
class EvalMetrics:
    sessions: int
    deviation_below_5pct_share: float
    mean_abs_deviation: float
    in_stock_rate: float
    session_details: tuple[SessionEval, ...]


def evaluate(sessions: Sequence[SessionRun]) -> EvalMetrics:
    """Score finished sessions: per-plan deviation of realized revenue
    against the planned total, the share of plans within 5%, and the
    in-stock rate averaged over sessions."""
    if not sessions:
        raise ScenarioError("no sessions to evaluate")
    rows = []
    for run in sessions:
        plan = run.plan
        name = plan.department or plan.period
        if plan.target <= 0:
            raise ScenarioError(
                f"session {name}: planned total must be positive, "
                f"got {plan.target}"
            )
        trace = run.simulation.trace
        rows.append(SessionEval(
            dept_id=run.simulation.department,
            period=plan.period,
            target=plan.target,
            actual=run.simulation.actual_total,
            deviation=plan_deviation(plan.target, run.simulation.actual_total),
            flagged=run.flagged,
            cause=run.cause,
            in_stock_rate=in_stock_rate(list(trace.on_hand),
                                        list(trace.demand)),
        ))
    n = len(rows)
    below = sum(1 for r in rows if abs(r.deviation) < 0.05)
    mean_abs = sum(abs(r.deviation) for r in rows) / n
    mean_rate = float(
        sum((Fraction(r.in_stock_rate) for r in rows), Fraction(0)) / n
    )
    return EvalMetrics(
        sessions=n,
        deviation_below_5pct_share=below / n,
        mean_abs_deviation=mean_abs,
        in_stock_rate=mean_rate,
        session_details=tuple(rows),
    )


def metrics_to_dict(metrics: EvalMetrics) -> dict:
    return {
        "sessions": metrics.sessions,
        "deviation_below_5pct_share": metrics.deviation_below_5pct_share,
        "mean_abs_deviation": metrics.mean_abs_deviation,
        "in_stock_rate": metrics.in_stock_rate,
        "session_details": [
            {
                "dept_id": r.dept_id,
                "period": r.period,
                "target": r.target,
                "actual": r.actual,
                "deviation": r.deviation,
                "flagged": r.flagged,
                "cause": r.cause,
                "in_stock_rate": r.in_stock_rate,
            }
            for r in metrics.session_details
        ],
    }


def render_metrics_table(metrics: EvalMetrics) -> str:
    """Aligned text table: one row per session, then the aggregates."""
    headers = ("session", "period", "target", "actual", "deviation",
               "flagged", "cause", "in_stock")
    body = [
        (
            r.dept_id,
            r.period,
            f"{r.target:.3f}",
            f"{r.actual:.3f}",
            f"{r.deviation:+.6f}",
            "yes" if r.flagged else "no",
            r.cause or "-",
            f"{r.in_stock_rate:.4f}",
        )
        for r in metrics.session_details
    ]
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in body)) if body
        else len(headers[i])
        for i in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip()
    ]
    for row in body:
        lines.append(
            "  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip()
        )
    lines.append("")
    lines.append(f"sessions: {metrics.sessions}")
    lines.append(
        f"deviation_below_5pct_share: {metrics.deviation_below_5pct_share}"
    )
    lines.append(f"mean_abs_deviation: {metrics.mean_abs_deviation}")
    lines.append(f"in_stock_rate: {metrics.in_stock_rate}")
    return "\n".join(lines) + "\n"


def _session_config(cfg: ScenarioConfig, world: World) -> SessionConfig:
    # Evaluation sessions plan the pure seasonal baseline: no promotion
    # uplift, so a zero-noise world realizes the plan exactly.
    return SessionConfig(
        backend="rulebased",
        primary_table="sales",
        reference_date=format_iso_date(world.target_period.first_day()),
        promo_uplift_pct=0.0,
        promo_budget_increase_pct=0.0,
        plan_sub_periods=cfg.plan_sub_periods,
        season_length=12,
        deviation_threshold=cfg.threshold,
    )


def run_plan_session(cfg: ScenarioConfig, world: World,
                     dept: str) -> PlanReport:
    orchestrator = Orchestrator(
        _session_config(cfg, world), world.catalog, RulebasedBackend()
    )
    question = (
        f"Formulate a sales plan for department {dept} "
        f"covering {world.target_period}."
    )
    report, _ = orchestrator.run_session(question)
    if report.plan is None:
        raise ScenarioError(f"session for {dept} produced no plan")
    return report


def run_eval(cfg: ScenarioConfig,
             shocks: Mapping[str, float] | None = None) -> EvalMetrics:
    """The whole chain: generate the world, plan one session per
    department, simulate execution with any injected shocks, monitor
    each plan and attribute flagged deviations, then score."""
    world = generate_history(cfg)
    sessions = []
    for dept in world.dept_ids:
        report = run_plan_session(cfg, world, dept)
        plan = report.plan
        sim = simulate_execution(plan, world, shocks)
        monitored = detect_deviation(
            list(plan.sub_targets), list(sim.demand), threshold=cfg.threshold
        )
        cause = ""
        if monitored.flagged:
            cause = attribute_cause(monitored, sim.factors).cause
        sessions.append(SessionRun(
            plan=plan,
            simulation=sim,
            flagged=monitored.flagged,
            cause=cause,
        ))
    return evaluate(sessions)
