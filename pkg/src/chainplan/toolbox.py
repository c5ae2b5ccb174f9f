"""Typed tool registry plus the built-in planning analytics tools.

Every call is validated against the tool's declared parameters and
returns a ToolResult carrying the value and an audit record. The
standard toolbox registers:

    seasonal_naive   repeat the last full season forward
    moving_average   flat forecast from the trailing-window mean
    forecast         either method over a (period, value) series
    order_up_to      target d*(L+R) + z*sigma*sqrt(L+R) and order qty
    in_stock_rate    share of periods with on-hand covering demand
    plan_deviation   (actual - planned) / planned
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .dates import Period
from .errors import HistoryError, ToolArgumentError, UnknownToolError

Number = int | float


def _is_number(v: object) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_finite(name: str, v: float) -> None:
    if math.isnan(v) or math.isinf(v):
        raise ToolArgumentError(f"{name} must be finite, got {v!r}", param=name)


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str                 # number | int | number_list
    required: bool = True
    default: object = None


@dataclass(frozen=True)
class ToolSpec:
    name: str
    summary: str
    params: tuple[ParamSpec, ...]


@dataclass(frozen=True)
class ToolResult:
    tool: str
    args: dict
    value: object


def _check_type(spec: ParamSpec, value: object) -> object:
    if spec.type == "number":
        if not _is_number(value):
            raise ToolArgumentError(
                f"{spec.name} must be a number, got {type(value).__name__}",
                param=spec.name,
            )
        _check_finite(spec.name, float(value))
        return value
    if spec.type == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ToolArgumentError(
                f"{spec.name} must be an int, got {type(value).__name__}",
                param=spec.name,
            )
        return value
    if spec.type == "number_list":
        if not isinstance(value, (list, tuple)) or not value:
            raise ToolArgumentError(
                f"{spec.name} must be a non-empty list of numbers",
                param=spec.name,
            )
        for i, v in enumerate(value):
            if not _is_number(v):
                raise ToolArgumentError(
                    f"{spec.name}[{i}] must be a number, got {type(v).__name__}",
                    param=spec.name,
                )
            _check_finite(f"{spec.name}[{i}]", float(v))
        return list(value)
    if spec.type == "string":
        if not isinstance(value, str):
            raise ToolArgumentError(
                f"{spec.name} must be a string, got {type(value).__name__}",
                param=spec.name,
            )
        return value
    if spec.type == "series":
        return _check_series(spec.name, value)
    raise ToolArgumentError(f"unknown parameter type {spec.type!r}", param=spec.name)


def _check_series(name: str, value: object) -> list[tuple[Period, float]]:
    """A sales series: (YYYY-MM, value) pairs over consecutive months,
    values non-negative."""
    if not isinstance(value, (list, tuple)) or not value:
        raise ToolArgumentError(
            f"{name} must be a non-empty list of (period, value) pairs",
            param=name,
        )
    out: list[tuple[Period, float]] = []
    for i, entry in enumerate(value):
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise ToolArgumentError(
                f"{name}[{i}] must be a (period, value) pair", param=name
            )
        raw_period, raw_value = entry
        try:
            period = (raw_period if isinstance(raw_period, Period)
                      else Period.parse(raw_period))
        except (TypeError, ValueError) as exc:
            raise ToolArgumentError(
                f"{name}[{i}]: {exc}", param=name
            ) from None
        if not _is_number(raw_value):
            raise ToolArgumentError(
                f"{name}[{i}] value must be a number", param=name
            )
        _check_finite(f"{name}[{i}]", float(raw_value))
        if raw_value < 0:
            raise ToolArgumentError(
                f"{name}[{i}] value must be non-negative", param=name
            )
        if out and period.index() != out[-1][0].index() + 1:
            raise ToolArgumentError(
                f"{name} must cover consecutive months; "
                f"{out[-1][0]} is followed by {period}",
                param=name,
            )
        out.append((period, float(raw_value)))
    return out


class Toolbox:
    def __init__(self) -> None:
        self._specs: dict[str, ToolSpec] = {}
        self._fns: dict[str, Callable[..., object]] = {}

    def register(self, spec: ToolSpec, fn: Callable[..., object]) -> None:
        if spec.name in self._specs:
            raise ToolArgumentError(
                f"tool {spec.name!r} already registered", param="name"
            )
        self._specs[spec.name] = spec
        self._fns[spec.name] = fn

    def names(self) -> list[str]:
        return sorted(self._specs)

    def spec(self, name: str) -> ToolSpec:
        if name not in self._specs:
            raise UnknownToolError(name, self.names())
        return self._specs[name]

    def describe(self) -> str:
        """Deterministic catalog text for prompts."""
        lines = []
        for name in self.names():
            spec = self._specs[name]
            params = ", ".join(
                p.name if p.required else f"{p.name}={p.default!r}"
                for p in spec.params
            )
            lines.append(f"- {name}({params}): {spec.summary}")
        return "\n".join(lines)

    def call(self, name: str, args: dict) -> ToolResult:
        if name not in self._specs:
            raise UnknownToolError(name, self.names())
        spec = self._specs[name]
        known = {p.name for p in spec.params}
        for key in args:
            if key not in known:
                raise ToolArgumentError(
                    f"{name} has no parameter {key!r}", param=key
                )
        bound: dict[str, object] = {}
        for p in spec.params:
            if p.name in args:
                bound[p.name] = _check_type(p, args[p.name])
            elif p.required:
                raise ToolArgumentError(
                    f"{name} needs parameter {p.name!r}", param=p.name
                )
            else:
                bound[p.name] = p.default
        value = self._fns[name](**bound)
        return ToolResult(tool=name, args=dict(bound), value=value)


# --- built-in tools -------------------------------------------------------------

def seasonal_naive(values: list[Number], season_length: int = 12,
                   horizon: int = 1) -> list[float]:
    """Forecast by repeating the most recent full season."""
    if season_length < 1:
        raise ToolArgumentError(
            "season_length must be at least 1", param="season_length"
        )
    if horizon < 0:
        raise ToolArgumentError("horizon must be >= 0", param="horizon")
    if len(values) < season_length:
        raise HistoryError(
            f"seasonal_naive needs at least {season_length} points, "
            f"got {len(values)}"
        )
    season = values[-season_length:]
    return [float(season[(h - 1) % season_length]) for h in range(1, horizon + 1)]


def moving_average(values: list[Number], window: int,
                   horizon: int = 1) -> list[float]:
    """Flat forecast: the trailing-window mean repeated over the horizon."""
    if window < 1:
        raise ToolArgumentError("window must be at least 1", param="window")
    if horizon < 0:
        raise ToolArgumentError("horizon must be >= 0", param="horizon")
    if len(values) < window:
        raise HistoryError(
            f"moving_average needs at least {window} points, got {len(values)}"
        )
    level = float(sum(values[-window:])) / window
    return [level] * horizon


def forecast(series: list, method: str = "seasonal_naive",
             horizon: int = 1, window: int = 3,
             season_length: int = 12) -> list[tuple[str, float]]:
    """Continue a (period, value) series by the named method."""
    series = _check_series("series", series)
    values = [v for _, v in series]
    if method == "seasonal_naive":
        points = seasonal_naive(values, season_length=season_length,
                                horizon=horizon)
    elif method == "moving_average":
        points = moving_average(values, window=window, horizon=horizon)
    else:
        raise ToolArgumentError(
            f"method must be seasonal_naive or moving_average, got {method!r}",
            param="method",
        )
    last = series[-1][0]
    return [(str(last.plus(h)), v) for h, v in enumerate(points, start=1)]


def order_up_to(demand_rate: Number, lead_time: Number, review_period: Number,
                sigma: Number, z: Number,
                inventory_position: Number = 0.0) -> dict:
    """Base-stock target covering lead time plus one review period at the
    demand rate, plus z standard deviations of demand over that horizon;
    the order brings the inventory position back up to the target."""
    if demand_rate < 0:
        raise ToolArgumentError("demand_rate must be >= 0", param="demand_rate")
    if lead_time < 0:
        raise ToolArgumentError("lead_time must be >= 0", param="lead_time")
    if review_period <= 0:
        raise ToolArgumentError("review_period must be > 0", param="review_period")
    if sigma < 0:
        raise ToolArgumentError("sigma must be >= 0", param="sigma")
    horizon = lead_time + review_period
    target = (float(demand_rate) * horizon
              + float(z) * float(sigma) * math.sqrt(horizon))
    return {
        "target_level": target,
        "order_qty": max(0.0, target - float(inventory_position)),
    }


def in_stock_rate(on_hand: list[Number], demand: list[Number]) -> float:
    """Share of periods where on-hand stock covered the demand."""
    if len(on_hand) != len(demand):
        raise ToolArgumentError(
            f"on_hand has {len(on_hand)} periods, demand has {len(demand)}",
            param="demand",
        )
    covered = sum(1 for have, need in zip(on_hand, demand) if have >= need)
    return covered / len(on_hand)


def plan_deviation(planned: Number, actual: Number) -> float:
    """Relative gap of actual against the plan."""
    if planned <= 0:
        raise ToolArgumentError(
            f"planned must be positive to measure a relative gap, "
            f"got {planned}",
            param="planned",
        )
    return (float(actual) - float(planned)) / float(planned)


def standard_toolbox() -> Toolbox:
    box = Toolbox()
    box.register(
        ToolSpec(
            "seasonal_naive",
            "repeat the most recent full season forward",
            (
                ParamSpec("values", "number_list"),
                ParamSpec("season_length", "int", required=False, default=12),
                ParamSpec("horizon", "int", required=False, default=1),
            ),
        ),
        seasonal_naive,
    )
    box.register(
        ToolSpec(
            "moving_average",
            "flat forecast from the trailing-window mean",
            (
                ParamSpec("values", "number_list"),
                ParamSpec("window", "int"),
                ParamSpec("horizon", "int", required=False, default=1),
            ),
        ),
        moving_average,
    )
    box.register(
        ToolSpec(
            "forecast",
            "continue a (period, value) series by the named method",
            (
                ParamSpec("series", "series"),
                ParamSpec("method", "string", required=False,
                          default="seasonal_naive"),
                ParamSpec("horizon", "int", required=False, default=1),
                ParamSpec("window", "int", required=False, default=3),
                ParamSpec("season_length", "int", required=False, default=12),
            ),
        ),
        forecast,
    )
    box.register(
        ToolSpec(
            "order_up_to",
            "base-stock target and order quantity for the review cycle",
            (
                ParamSpec("demand_rate", "number"),
                ParamSpec("lead_time", "number"),
                ParamSpec("review_period", "number"),
                ParamSpec("sigma", "number"),
                ParamSpec("z", "number"),
                ParamSpec("inventory_position", "number", required=False,
                          default=0.0),
            ),
        ),
        order_up_to,
    )
    box.register(
        ToolSpec(
            "in_stock_rate",
            "share of periods with on-hand stock covering demand",
            (
                ParamSpec("on_hand", "number_list"),
                ParamSpec("demand", "number_list"),
            ),
        ),
        in_stock_rate,
    )
    box.register(
        ToolSpec(
            "plan_deviation",
            "relative gap of actual versus planned",
            (
                ParamSpec("planned", "number"),
                ParamSpec("actual", "number"),
            ),
        ),
        plan_deviation,
    )
    return box
