"""Physical market case: network, units, wind farms, loads and forecasts."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class CaseError(ValueError):
    """Schema or invariant violation in a market case."""


@dataclass(frozen=True)
class Bus:
    id: int
    name: str


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    capacity: float
    reactance: float | None = None
    name: str = ""


@dataclass(frozen=True)
class Unit:
    id: int
    name: str
    bus: int
    cost_energy: float
    cost_startup: float
    cost_shutdown: float
    p_min: float
    p_max: float
    ramp_up: float
    ramp_down: float
    startup_ramp: float
    shutdown_ramp: float
    min_up: int
    min_down: int
    initial_on: bool
    initial_hours: int
    initial_output: float


@dataclass(frozen=True)
class WindFarm:
    id: int
    name: str
    bus: int
    capacity: float
    forecast: np.ndarray


@dataclass(frozen=True)
class Load:
    id: int
    name: str
    bus: int
    forecast: np.ndarray
    max_deviation: np.ndarray


@dataclass(frozen=True)
class MarketCase:
    horizon: int
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    units: tuple[Unit, ...]
    wind_farms: tuple[WindFarm, ...]
    loads: tuple[Load, ...]
    gsf: np.ndarray
    slack_bus: int
    name: str = "case"
    notes: dict = field(default_factory=dict)

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_units(self) -> int:
        return len(self.units)

    def bus_index(self, ref) -> int:
        return _resolve_bus(ref, self.buses, "bus")

    def unit_bus_matrix(self) -> np.ndarray:
        """Incidence (buses × units)."""
        M = np.zeros((self.n_buses, self.n_units))
        for u in self.units:
            M[u.bus, u.id] = 1.0
        return M

    def wind_bus_matrix(self) -> np.ndarray:
        M = np.zeros((self.n_buses, len(self.wind_farms)))
        for w in self.wind_farms:
            M[w.bus, w.id] = 1.0
        return M

    def load_bus_matrix(self) -> np.ndarray:
        M = np.zeros((self.n_buses, len(self.loads)))
        for d in self.loads:
            M[d.bus, d.id] = 1.0
        return M

    def wind_forecast(self) -> np.ndarray:
        """Farms × T."""
        return np.array([w.forecast for w in self.wind_farms]).reshape(len(self.wind_farms), self.horizon)

    def load_forecast(self) -> np.ndarray:
        return np.array([d.forecast for d in self.loads]).reshape(len(self.loads), self.horizon)

    def load_deviation(self) -> np.ndarray:
        return np.array([d.max_deviation for d in self.loads]).reshape(len(self.loads), self.horizon)

    def with_updates(self, **kw) -> "MarketCase":
        """Copy with replaced fields, revalidated."""
        data = {f: getattr(self, f) for f in self.__dataclass_fields__}
        data.update(kw)
        case = MarketCase(**data)
        validate_case(case)
        return case


def _resolve_bus(ref, buses, what: str) -> int:
    if isinstance(ref, (bool, np.bool_)):
        raise CaseError(f"{what}: bus reference {ref!r} is not a bus id or name")
    if isinstance(ref, (int, np.integer)):
        if 0 <= int(ref) < len(buses):
            return int(ref)
        raise CaseError(f"{what}: unknown bus id {ref!r}")
    for b in buses:
        if b.name == ref:
            return b.id
    raise CaseError(f"{what}: unknown bus {ref!r}")


def _req(d: dict, key: str, where: str):
    if key not in d:
        raise CaseError(f"{where}: missing field '{key}'")
    return d[key]


def _series(val, T: int, where: str) -> np.ndarray:
    arr = np.asarray(val, dtype=float)
    if arr.ndim == 0:
        arr = np.full(T, float(arr))
    if arr.shape != (T,):
        raise CaseError(f"{where}: expected {T} hourly values, got shape {arr.shape}")
    return arr


def case_from_dict(doc: dict, name: str = "case") -> MarketCase:
    """Build and validate a case from its JSON document."""
    T = int(_req(doc, "horizon", "case"))
    if T < 1:
        raise CaseError("case: 'horizon' must be >= 1")
    raw_buses = _req(doc, "buses", "case")
    buses = []
    for k, b in enumerate(raw_buses):
        if isinstance(b, str):
            buses.append(Bus(k, b))
        else:
            bid = int(b.get("id", k))
            buses.append(Bus(bid, str(b.get("name", bid))))
    if sorted(b.id for b in buses) != list(range(len(buses))):
        raise CaseError("buses: ids must be unique and dense 0..N-1")
    buses.sort(key=lambda b: b.id)
    buses = tuple(buses)

    lines = []
    for k, ln in enumerate(doc.get("lines", [])):
        where = f"lines[{k}]"
        x = ln.get("reactance")
        lines.append(Line(id=k,
                          from_bus=_resolve_bus(_req(ln, "from_bus", where), buses, where),
                          to_bus=_resolve_bus(_req(ln, "to_bus", where), buses, where),
                          capacity=float(_req(ln, "capacity", where)),
                          reactance=None if x is None else float(x),
                          name=str(ln.get("name", f"L{k}"))))

    units = []
    for k, u in enumerate(_req(doc, "units", "case")):
        where = f"units[{k}]"
        ru = float(_req(u, "ramp_up", where))
        rd = float(u.get("ramp_down", ru))
        init = u.get("initial_status", {})
        if not isinstance(init, dict):
            raise CaseError(f"{where}: 'initial_status' must be an object with 'on' and 'hours'")
        units.append(Unit(
            id=k, name=str(u.get("name", f"G{k}")),
            bus=_resolve_bus(_req(u, "bus", where), buses, where),
            cost_energy=float(_req(u, "cost_energy", where)),
            cost_startup=float(u.get("cost_startup", 0.0)),
            cost_shutdown=float(u.get("cost_shutdown", 0.0)),
            p_min=float(u.get("p_min", 0.0)), p_max=float(_req(u, "p_max", where)),
            ramp_up=ru, ramp_down=rd,
            startup_ramp=float(u.get("startup_ramp", ru)),
            shutdown_ramp=float(u.get("shutdown_ramp", rd)),
            min_up=int(u.get("min_up", 1)), min_down=int(u.get("min_down", 1)),
            initial_on=bool(init.get("on", False)), initial_hours=int(init.get("hours", 0)),
            initial_output=float(u.get("initial_output", 0.0)),
        ))

    winds = []
    for k, w in enumerate(doc.get("wind_farms", [])):
        where = f"wind_farms[{k}]"
        winds.append(WindFarm(id=k, name=str(w.get("name", f"W{k}")),
                              bus=_resolve_bus(_req(w, "bus", where), buses, where),
                              capacity=float(_req(w, "capacity", where)),
                              forecast=_series(_req(w, "forecast", where), T, where + ".forecast")))

    loads = []
    for k, d in enumerate(doc.get("loads", [])):
        where = f"loads[{k}]"
        fc = _series(_req(d, "forecast", where), T, where + ".forecast")
        dev = d.get("max_deviation", 0.0)
        if isinstance(dev, dict) and "fraction" in dev:
            dev = fc * float(dev["fraction"])
        loads.append(Load(id=k, name=str(d.get("name", f"D{k}")),
                          bus=_resolve_bus(_req(d, "bus", where), buses, where),
                          forecast=fc, max_deviation=_series(dev, T, where + ".max_deviation")))

    slack = _resolve_bus(doc.get("slack_bus", 0), buses, "slack_bus")
    gsf_doc = doc.get("gsf")
    proto = MarketCase(T, buses, tuple(lines), tuple(units), tuple(winds), tuple(loads),
                       np.zeros((len(lines), len(buses))), slack, name=name,
                       notes=dict(doc.get("notes", {})))
    _check_components(proto)
    if gsf_doc is not None:
        gsf = np.asarray(gsf_doc, dtype=float)
    elif lines:
        gsf = compute_gsf(proto)
    else:
        gsf = np.zeros((0, len(buses)))
    case = MarketCase(**{**{f: getattr(proto, f) for f in proto.__dataclass_fields__}, "gsf": gsf})
    validate_case(case)
    return case


def load_case(path) -> MarketCase:
    """Read and validate a case JSON file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"case file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CaseError(f"{path}: invalid JSON ({exc})") from exc
    return case_from_dict(doc, name=path.stem)


def case_to_dict(case: MarketCase) -> dict:
    return {
        "horizon": case.horizon,
        "buses": [{"id": b.id, "name": b.name} for b in case.buses],
        "slack_bus": case.slack_bus,
        "lines": [{"name": l.name, "from_bus": l.from_bus, "to_bus": l.to_bus, "capacity": l.capacity,
                   **({"reactance": l.reactance} if l.reactance is not None else {})} for l in case.lines],
        "units": [{"name": u.name, "bus": u.bus, "cost_energy": u.cost_energy, "cost_startup": u.cost_startup,
                   "cost_shutdown": u.cost_shutdown, "p_min": u.p_min, "p_max": u.p_max,
                   "ramp_up": u.ramp_up, "ramp_down": u.ramp_down, "startup_ramp": u.startup_ramp,
                   "shutdown_ramp": u.shutdown_ramp, "min_up": u.min_up, "min_down": u.min_down,
                   "initial_status": {"on": u.initial_on, "hours": u.initial_hours},
                   "initial_output": u.initial_output} for u in case.units],
        "wind_farms": [{"name": w.name, "bus": w.bus, "capacity": w.capacity,
                        "forecast": w.forecast.tolist()} for w in case.wind_farms],
        "loads": [{"name": d.name, "bus": d.bus, "forecast": d.forecast.tolist(),
                   "max_deviation": d.max_deviation.tolist()} for d in case.loads],
        "gsf": case.gsf.tolist(),
        "notes": case.notes,
    }


def _check_components(case: MarketCase) -> None:
    for l in case.lines:
        if not l.capacity > 0:
            raise CaseError(f"line {l.name}: capacity must be > 0 (got {l.capacity})")
        if l.from_bus == l.to_bus:
            raise CaseError(f"line {l.name}: from_bus equals to_bus")
        if l.reactance is not None and not l.reactance > 0:
            raise CaseError(f"line {l.name}: reactance must be > 0")
    for u in case.units:
        if not 0 <= u.p_min <= u.p_max:
            raise CaseError(f"unit {u.name}: need 0 <= p_min <= p_max")
        for attr in ("ramp_up", "ramp_down", "startup_ramp", "shutdown_ramp"):
            if not getattr(u, attr) > 0:
                raise CaseError(f"unit {u.name}: {attr} must be > 0")
        if u.min_up < 1 or u.min_down < 1:
            raise CaseError(f"unit {u.name}: min_up and min_down must be >= 1")
        if u.initial_hours < 0:
            raise CaseError(f"unit {u.name}: initial hours in state must be >= 0")
        if not u.initial_on and u.initial_output != 0:
            raise CaseError(f"unit {u.name}: offline unit must have initial_output 0")
        if u.initial_on and not u.p_min - 1e-9 <= u.initial_output <= u.p_max + 1e-9:
            raise CaseError(f"unit {u.name}: initial_output outside [p_min, p_max]")
    for w in case.wind_farms:
        if w.capacity < 0 or np.any(w.forecast < 0) or np.any(w.forecast > w.capacity + 1e-9):
            raise CaseError(f"wind farm {w.name}: forecast must lie in [0, capacity]")
    for d in case.loads:
        if np.any(d.forecast < 0) or np.any(d.max_deviation < 0):
            raise CaseError(f"load {d.name}: forecast and max_deviation must be >= 0")


def validate_case(case: MarketCase) -> None:
    """Check every invariant; raises :class:`CaseError`."""
    _check_components(case)
    if case.gsf.shape != (len(case.lines), case.n_buses):
        raise CaseError(f"gsf: expected shape {(len(case.lines), case.n_buses)}, got {case.gsf.shape}")
    if not 0 <= case.slack_bus < case.n_buses:
        raise CaseError("slack_bus out of range")


def compute_gsf(case: MarketCase) -> np.ndarray:
    """DC shift factors (lines × buses) relative to the slack bus.

    Flow on line l is ``sum_m GSF[l, m] * injection[m]`` for injections
    balanced by the slack bus, whose column is zero.
    """
    nb, nl = case.n_buses, len(case.lines)
    if any(l.reactance is None for l in case.lines):
        raise CaseError("compute_gsf: every line needs a reactance")
    Af = np.zeros((nl, nb))
    b = np.zeros(nl)
    for l in case.lines:
        Af[l.id, l.from_bus] = 1.0
        Af[l.id, l.to_bus] = -1.0
        b[l.id] = 1.0 / l.reactance
    B = Af.T @ (b[:, None] * Af)
    keep = [m for m in range(nb) if m != case.slack_bus]
    Bred = B[np.ix_(keep, keep)]
    if nb > 1 and np.linalg.matrix_rank(Bred) < nb - 1:
        raise CaseError("compute_gsf: network is disconnected")
    gsf = np.zeros((nl, nb))
    if keep:
        X = np.linalg.inv(Bred)
        gsf[:, keep] = (b[:, None] * Af[:, keep]) @ X
    return gsf


def net_injection(case: MarketCase, dispatch, wind, load) -> np.ndarray:
    """Bus injections ``units + wind - load`` for one hour.

    ``dispatch``, ``wind`` and ``load`` are per-component vectors (units,
    farms, loads); passing deltas gives the incremental injection.
    """
    inj = case.unit_bus_matrix() @ np.asarray(dispatch, float)
    if case.wind_farms:
        inj = inj + case.wind_bus_matrix() @ np.asarray(wind, float)
    if case.loads:
        inj = inj - case.load_bus_matrix() @ np.asarray(load, float)
    return inj


def line_flows(case: MarketCase, injection) -> np.ndarray:
    return case.gsf @ np.asarray(injection, float)


def read_history(path) -> dict[str, np.ndarray]:
    """Read a ``day,hour,forecast_mw,actual_mw`` CSV into day × hour arrays."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"history file not found: {path}")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"day", "hour", "forecast_mw", "actual_mw"} - set(reader.fieldnames or [])
        if missing:
            raise CaseError(f"{path}: missing columns {sorted(missing)}")
        for r in reader:
            rows.append((int(r["day"]), int(r["hour"]), float(r["forecast_mw"]), float(r["actual_mw"])))
    if not rows:
        raise CaseError(f"{path}: no data rows")
    days = sorted({r[0] for r in rows})
    hours = sorted({r[1] for r in rows})
    di = {d: k for k, d in enumerate(days)}
    hi = {h: k for k, h in enumerate(hours)}
    fc = np.full((len(days), len(hours)), np.nan)
    ac = np.full_like(fc, np.nan)
    for d, h, f, a in rows:
        fc[di[d], hi[h]] = f
        ac[di[d], hi[h]] = a
    if np.isnan(fc).any() or np.isnan(ac).any():
        raise CaseError(f"{path}: every day must have every hour")
    return {"days": np.array(days), "hours": np.array(hours), "forecast": fc, "actual": ac}


def write_history(path, forecast: np.ndarray, actual: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day", "hour", "forecast_mw", "actual_mw"])
        for d in range(forecast.shape[0]):
            for h in range(forecast.shape[1]):
                w.writerow([d + 1, h + 1, repr(float(forecast[d, h])), repr(float(actual[d, h]))])
