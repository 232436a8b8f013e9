from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

import numpy as np

from spinphoton.config import (
    check_keys,
    format_quantity,
    parse_quantity,
    require_str,
)
from spinphoton.device import DeviceSpec
from spinphoton.errors import ConfigError

log = logging.getLogger(__name__)

# ramps must be slow compared with the optical period of the mode
MIN_RAMP_CYCLES = 50.0
_EDGE = 1e-12


class PulseShape(str, Enum):
    STEP = "step"
    RAMP = "ramp"


@dataclass(frozen=True)
class Pulse:
    """
    A detuning ``detuning`` of ``mode`` held over ``[center - duration/2, center + duration/2)``.

    Ramp pulses rise and fall linearly over ``ramp_time`` at either end.
    """

    mode: str
    detuning: float
    center: float
    duration: float
    shape: PulseShape = PulseShape.STEP
    ramp_time: float = 0.0
    stage: str = ""
    resonant: bool = False

    def __post_init__(self):
        if self.duration <= 0:
            msg = f"pulse on {self.mode}: duration must be positive, got {self.duration}"
            raise ValueError(msg)
        if self.shape is PulseShape.RAMP and not 0 < 2 * self.ramp_time <= self.duration:
            msg = f"pulse on {self.mode}: ramp time must be positive and fit twice in the pulse"
            raise ValueError(msg)

    @classmethod
    def starting_at(cls, mode: str, detuning: float, start: float, duration: float, **kwargs) -> Pulse:
        return cls(mode, detuning, start + duration / 2, duration, **kwargs)

    @property
    def start(self) -> float:
        return self.center - self.duration / 2

    @property
    def end(self) -> float:
        return self.center + self.duration / 2

    @property
    def area(self) -> float:
        if self.shape is PulseShape.RAMP:
            return self.detuning * (self.duration - self.ramp_time)
        return self.detuning * self.duration

    def value_at(self, t: float) -> float:
        if not self.start <= t < self.end:
            return 0.0
        if self.shape is PulseShape.STEP:
            return self.detuning
        edge = min(t - self.start, self.end - t)
        if edge >= self.ramp_time:
            return self.detuning
        return self.detuning * edge / self.ramp_time

    def shifted(self, dt: float) -> Pulse:
        return replace(self, center=self.center + dt)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "mode": self.mode,
            "detuning": format_quantity(self.detuning, "frequency", "GHz"),
            "center": format_quantity(self.center, "time", "ns"),
            "duration": format_quantity(self.duration, "time", "ns"),
            "shape": self.shape.value,
        }
        if self.shape is PulseShape.RAMP:
            data["ramp"] = format_quantity(self.ramp_time, "time", "ns")
        if self.stage:
            data["stage"] = self.stage
        if self.resonant:
            data["resonant"] = True
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], path: str = "pulse") -> Pulse:
        check_keys(
            data,
            path,
            required=("mode", "detuning", "center", "duration"),
            optional=("shape", "ramp", "stage", "resonant"),
        )
        try:
            shape = PulseShape(data.get("shape", "step"))
        except ValueError:
            msg = f"{path}.shape: expected step or ramp"
            raise ConfigError(msg) from None
        try:
            return cls(
                mode=require_str(data["mode"], f"{path}.mode"),
                detuning=parse_quantity(data["detuning"], "frequency", "GHz", f"{path}.detuning"),
                center=parse_quantity(data["center"], "time", "ns", f"{path}.center"),
                duration=parse_quantity(data["duration"], "time", "ns", f"{path}.duration"),
                shape=shape,
                ramp_time=(
                    parse_quantity(data["ramp"], "time", "ns", f"{path}.ramp") if "ramp" in data else 0.0
                ),
                stage=require_str(data.get("stage", ""), f"{path}.stage"),
                resonant=bool(data.get("resonant", False)),
            )
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            msg = f"{path}: {e}"
            raise ConfigError(msg) from e


@dataclass(frozen=True)
class PulseSchedule:
    pulses: tuple[Pulse, ...] = ()
    duration: float = 0.0
    name: str = ""
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        end = max((p.end for p in self.pulses), default=0.0)
        if self.duration < end - _EDGE:
            msg = f"schedule duration {self.duration} ends before its last pulse ({end})"
            raise ValueError(msg)

    @classmethod
    def of(cls, pulses: Iterable[Pulse], name: str = "", duration: float | None = None) -> PulseSchedule:
        pulses = tuple(pulses)
        end = max((p.end for p in pulses), default=0.0)
        return cls(pulses, end if duration is None else max(duration, end), name)

    @property
    def modes(self) -> tuple[str, ...]:
        return tuple(sorted({p.mode for p in self.pulses}))

    @property
    def is_step_only(self) -> bool:
        return all(p.shape is PulseShape.STEP for p in self.pulses)

    @property
    def resonant_time(self) -> float:
        return sum(p.duration for p in self.pulses if p.resonant)

    def detuning_at(self, mode: str, t: float) -> float:
        return sum(p.value_at(t) for p in self.pulses if p.mode == mode)

    def detunings_at(self, t: float) -> dict[str, float]:
        detunings: dict[str, float] = {}
        for pulse in self.pulses:
            value = pulse.value_at(t)
            if value:
                detunings[pulse.mode] = detunings.get(pulse.mode, 0.0) + value
        return detunings

    def area(self, mode: str) -> float:
        return sum(p.area for p in self.pulses if p.mode == mode)

    def breakpoints(self, t0: float = 0.0, t1: float | None = None) -> list[float]:
        """
        Sorted times in ``[t0, t1]`` at which some detuning changes slope or value.
        """
        t1 = self.duration if t1 is None else t1
        points = {t0, t1}
        for pulse in self.pulses:
            edges = [pulse.start, pulse.end]
            if pulse.shape is PulseShape.RAMP:
                edges += [pulse.start + pulse.ramp_time, pulse.end - pulse.ramp_time]
            points.update(t for t in edges if t0 < t < t1)
        merged: list[float] = []
        for t in sorted(points):
            if merged and t - merged[-1] < _EDGE:
                continue
            merged.append(t)
        return merged

    def windows(self, t0: float = 0.0, t1: float | None = None) -> list[tuple[float, float]]:
        points = self.breakpoints(t0, t1)
        return list(zip(points[:-1], points[1:]))

    def shifted(self, dt: float) -> PulseSchedule:
        return PulseSchedule(
            tuple(p.shifted(dt) for p in self.pulses), self.duration + dt, self.name, self.warnings
        )

    def then(self, other: PulseSchedule) -> PulseSchedule:
        """``other`` started when this schedule ends."""
        later = other.shifted(self.duration)
        name = " + ".join(n for n in (self.name, other.name) if n)
        return PulseSchedule(
            self.pulses + later.pulses, later.duration, name, self.warnings + other.warnings
        )

    def with_warnings(self, warnings: Iterable[str]) -> PulseSchedule:
        return replace(self, warnings=self.warnings + tuple(warnings))

    def stages(self) -> dict[str, tuple[float, float]]:
        spans: dict[str, tuple[float, float]] = {}
        for pulse in self.pulses:
            if not pulse.stage:
                continue
            start, end = spans.get(pulse.stage, (pulse.start, pulse.end))
            spans[pulse.stage] = (min(start, pulse.start), max(end, pulse.end))
        return spans

    def to_dict(self) -> dict[str, Any]:
        """
        Serializes the schedule into the ``[schedule]`` config section.
        """
        return {
            "name": self.name,
            "duration": format_quantity(self.duration, "time", "ns"),
            "pulses": [p.to_dict() for p in self.pulses],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], path: str = "schedule") -> PulseSchedule:
        check_keys(data, path, optional=("name", "duration", "pulses"))
        pulses = tuple(
            Pulse.from_dict(item, f"{path}.pulses.{i}") for i, item in enumerate(data.get("pulses", []))
        )
        end = max((p.end for p in pulses), default=0.0)
        duration = (
            parse_quantity(data["duration"], "time", "ns", f"{path}.duration")
            if "duration" in data
            else end
        )
        if duration < end - _EDGE:
            msg = f"{path}.duration: ends before the last pulse"
            raise ConfigError(msg)
        return cls(pulses, duration, require_str(data.get("name", ""), f"{path}.name"))


def detuning_at(schedule: PulseSchedule, mode: str, t: float) -> float:
    """
    Detuning of ``mode`` at time ``t``; overlapping pulses on the same mode add up.
    """
    return schedule.detuning_at(mode, t)


def schedule_warnings(device: DeviceSpec, schedule: PulseSchedule) -> list[str]:
    """
    Tuning-bound and ramp-speed findings for a schedule on a device.
    """
    warnings = []
    for pulse in schedule.pulses:
        try:
            mode = device.mode(pulse.mode)
        except KeyError:
            warnings.append(f"pulse targets unknown mode `{pulse.mode}`")
            continue
        if not mode.within_bounds(schedule.detuning_at(pulse.mode, pulse.center)):
            warnings.append(
                f"{pulse.stage or 'pulse'} on {pulse.mode}: detuning "
                f"{pulse.detuning / (2 * np.pi):.4g} GHz exceeds the tuning bound "
                f"{mode.max_detuning / (2 * np.pi):.4g} GHz"
            )
        if pulse.shape is PulseShape.RAMP and pulse.ramp_time * mode.idle_frequency < MIN_RAMP_CYCLES:
            warnings.append(
                f"{pulse.stage or 'pulse'} on {pulse.mode}: ramp of {pulse.ramp_time:.3g} ns is "
                f"not slow compared with the mode period"
            )
    for message in warnings:
        log.warning(message)
    return warnings
