"""Scenario files, valuation construction and synthetic instance generation.

Scenario files are canonical JSON (sorted keys, compact separators, UTF-8),
so the SHA-256 of the serialized bytes is a stable fingerprint. Allocation
files carry the fingerprint of the scenario they were solved against.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .model import DEFAULT_ZONE_LABELS, Allocation, Curb, Scenario, ScenarioError, build_distance_matrix

log = logging.getLogger(__name__)

SCHEMA_KEYS = ("name", "num_timesteps", "zone_types", "curbs", "distance_metric", "valuations",
               "change_budget", "count_bounds", "rho", "provenance")


class FingerprintError(ValueError):
    """An allocation file was paired with a different scenario."""


@dataclass(frozen=True)
class ArrivalRateTable:
    """Arrivals per hour for each (timestep, zone type) pair."""

    rows: tuple[tuple[int, str, float], ...]

    def __post_init__(self):
        seen = set()
        for k, label, rate in self.rows:
            if (k, label) in seen:
                raise ValueError(f"arrival rates: duplicate entry for timestep {k}, type {label!r}")
            if not (math.isfinite(rate) and rate >= 0):
                raise ValueError(f"arrival rates: rate for ({k}, {label!r}) must be finite and >= 0")
            seen.add((k, label))

    @classmethod
    def from_array(cls, rates, labels: Sequence[str]) -> "ArrivalRateTable":
        rates = np.asarray(rates, dtype=float)
        return cls(tuple((k, labels[i], float(rates[k, i]))
                         for k in range(rates.shape[0]) for i in range(rates.shape[1])))

    def to_array(self, T: int, labels: Sequence[str]) -> np.ndarray:
        """Dense ``(T, M)`` rates; missing cells become 0 with a warning."""
        index = {lab: i for i, lab in enumerate(labels)}
        out = np.zeros((T, len(labels)))
        filled = np.zeros((T, len(labels)), dtype=bool)
        for k, label, rate in self.rows:
            if not 0 <= k < T:
                raise ValueError(f"arrival rates: timestep {k} outside 0..{T - 1}")
            if label not in index:
                raise ValueError(f"arrival rates: unknown zone type {label!r}")
            out[k, index[label]] = rate
            filled[k, index[label]] = True
        if not filled.all():
            log.warning("arrival rates: %d missing (timestep, type) cells set to 0", int((~filled).sum()))
        return out


@dataclass(frozen=True)
class Poi:
    x: float
    y: float
    weight: float = 1.0
    zone_type: str | None = None  # None: attracts demand for every type


@dataclass(frozen=True)
class PoiSet:
    points: tuple[Poi, ...]

    def __post_init__(self):
        for p in self.points:
            if not (math.isfinite(p.weight) and p.weight > 0):
                raise ValueError(f"points of interest: weight must be finite and > 0, got {p.weight!r}")


@dataclass(frozen=True)
class ValuationConfig:
    value_per_arrival: Mapping[str, float] = field(default_factory=dict)  # missing type -> 1.0
    decay_length: float = 10.0
    normalize: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.decay_length) and self.decay_length > 0):
            raise ValueError(f"decay_length: must be > 0, got {self.decay_length!r}")
        for lab, v in self.value_per_arrival.items():
            if not math.isfinite(v):
                raise ValueError(f"value_per_arrival.{lab}: must be finite")

    def to_dict(self) -> dict:
        return {"value_per_arrival": dict(self.value_per_arrival), "decay_length": self.decay_length,
                "normalize": self.normalize}


def read_arrival_csv(path) -> ArrivalRateTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["timestep", "zone_type", "rate"]:
            raise ValueError(f"{path}: header must be timestep,zone_type,rate")
        return ArrivalRateTable(tuple((int(r["timestep"]), r["zone_type"], float(r["rate"])) for r in reader))


def write_arrival_csv(table: ArrivalRateTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestep", "zone_type", "rate"])
        w.writerows(table.rows)


def build_valuation(curbs: Sequence[Curb], arrival: ArrivalRateTable, pois: PoiSet,
                    cfg: ValuationConfig, labels: Sequence[str] = DEFAULT_ZONE_LABELS,
                    T: int | None = None) -> np.ndarray:
    """Valuation tensor ``H[k, j, i]`` from demand and proximity.

    ``raw = rate_i(k) * value_per_arrival_i * sum_p weight_p * exp(-dist(j, p) / d0)``
    where the sum runs over POIs tagged with type ``i`` or untagged. With
    ``cfg.normalize`` the tensor is divided by its maximum.
    """
    labels = list(labels)
    if T is None:
        T = 1 + max((k for k, _, _ in arrival.rows), default=0)
    rates = arrival.to_array(T, labels)
    xy = np.array([(c.x, c.y) for c in curbs], dtype=float).reshape(-1, 2)
    prox = np.zeros((len(curbs), len(labels)))
    for p in pois.points:
        if p.zone_type is not None and p.zone_type not in labels:
            raise ValueError(f"points of interest: unknown zone type {p.zone_type!r}")
        dist = np.hypot(xy[:, 0] - p.x, xy[:, 1] - p.y)
        f = p.weight * np.exp(-dist / cfg.decay_length)
        cols = range(len(labels)) if p.zone_type is None else [labels.index(p.zone_type)]
        for i in cols:
            prox[:, i] += f
    vpa = np.array([cfg.value_per_arrival.get(lab, 1.0) for lab in labels])
    raw = (rates * vpa)[:, None, :] * prox[None, :, :]
    if cfg.normalize:
        top = raw.max() if raw.size else 0.0
        if not top > 0:
            raise ValueError("degenerate valuation: all raw values are zero (no POIs or no demand)")
        raw = raw / top
    return raw


# --- synthetic instances ----------------------------------------------------

PEAK_HOURS = {"pp": 12.0, "cv": 10.0, "bus": 17.0}
BASE_RATES = {"pp": 30.0, "cv": 12.0, "bus": 20.0}
VALUE_PER_ARRIVAL = {"pp": 1.0, "cv": 1.6, "bus": 1.2}


def _grid(n: int, rng: np.random.Generator, spacing=10.0, jitter=2.0) -> list[Curb]:
    side = math.ceil(math.sqrt(n))
    cells = [(r, c) for r in range(side) for c in range(side)][:n]
    off = rng.uniform(-jitter, jitter, (n, 2))
    return [Curb(f"c{n_}", round(c * spacing + off[n_, 0], 6), round(r * spacing + off[n_, 1], 6))
            for n_, (r, c) in enumerate(cells)]


def _profiles(T: int, rng: np.random.Generator, profile: str) -> np.ndarray:
    labels = DEFAULT_ZONE_LABELS
    base = np.array([BASE_RATES[lab] for lab in labels])
    if profile == "uniform":
        return np.tile(base, (T, 1))
    hours = 8.0 + 10.0 * np.arange(T) / max(T, 1)
    peaks = np.array([PEAK_HOURS[lab] for lab in labels])
    shape = 0.5 + 0.5 * np.cos(np.pi * (hours[:, None] - peaks[None, :]) / 6.0)
    noise = rng.normal(1.0, 0.1, (T, len(labels)))
    return np.maximum(base * (0.2 + shape) * noise, 0.0)


def generate_synthetic(n_curbs: int, n_timesteps: int, seed: int, profile: str = "peaked") -> Scenario:
    """Seeded synthetic instance on a jittered grid with per-type demand profiles."""
    if n_curbs < 1 or n_timesteps < 1:
        raise ValueError("generate_synthetic: need n_curbs >= 1 and n_timesteps >= 1")
    if profile not in ("peaked", "uniform"):
        raise ValueError(f"profile must be 'peaked' or 'uniform', got {profile!r}")
    rng = np.random.default_rng(seed)
    labels = DEFAULT_ZONE_LABELS
    curbs = _grid(n_curbs, rng)
    rates = np.round(_profiles(n_timesteps, rng, profile), 6)
    xy = np.array([(c.x, c.y) for c in curbs])
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    n_poi = max(2, n_curbs // 20)
    pois = PoiSet(tuple(Poi(round(float(rng.uniform(lo[0], hi[0])), 6), round(float(rng.uniform(lo[1], hi[1])), 6),
                            round(float(rng.uniform(0.5, 2.0)), 6), labels[n % len(labels)])
                        for n in range(n_poi)))
    cfg = ValuationConfig(VALUE_PER_ARRIVAL, decay_length=15.0)
    H = build_valuation(curbs, ArrivalRateTable.from_array(rates, labels), pois, cfg, labels, n_timesteps)
    N = n_curbs
    lo = min(math.ceil(0.05 * N), N // len(labels))  # tiny N: keep the lower bounds jointly satisfiable
    provenance = {
        "generator": {"n_curbs": n_curbs, "n_timesteps": n_timesteps, "seed": seed, "profile": profile},
        "valuation": cfg.to_dict(),
        "formula": "rate*value_per_arrival*sum(weight*exp(-dist/decay_length)), normalized by max",
        "pois": [[p.x, p.y, p.weight, p.zone_type] for p in pois.points],
        "arrival_rates": rates.tolist(),
    }
    return Scenario(T=n_timesteps, curbs=tuple(curbs), zone_types=labels, H=H,
                    A=build_distance_matrix(curbs, "euclidean"), b=math.ceil(0.1 * N),
                    count_bounds=[(lo, N)] * len(labels), rho=0.0,
                    name=f"synthetic-{n_curbs}x{n_timesteps}-{profile}-s{seed}", provenance=provenance)


# --- serialization ----------------------------------------------------------

def scenario_to_dict(s: Scenario) -> dict:
    return {
        "name": s.name,
        "num_timesteps": s.T,
        "zone_types": s.labels,
        "curbs": [{"id": c.id, "x": c.x, "y": c.y} for c in s.curbs],
        "distance_metric": s.distance_metric,
        "valuations": s.H.tolist(),
        "change_budget": s.b,
        "count_bounds": {lab: [int(lo), int(hi)] for lab, (lo, hi) in zip(s.labels, s.count_bounds)},
        "rho": s.rho,
        "provenance": s.provenance,
    }


def dumps_canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False).encode("utf-8")


def scenario_bytes(s: Scenario) -> bytes:
    return dumps_canonical(scenario_to_dict(s))


def fingerprint(s: Scenario) -> str:
    return hashlib.sha256(scenario_bytes(s)).hexdigest()


def _need(d: Mapping, key: str, types):
    if key not in d:
        raise ScenarioError(f"{key}: missing from scenario")
    v = d[key]
    if not isinstance(v, types) or isinstance(v, bool):
        raise ScenarioError(f"{key}: wrong type {type(v).__name__}")
    return v


def scenario_from_dict(d: Mapping) -> Scenario:
    if not isinstance(d, Mapping):
        raise ScenarioError("scenario: top level must be a JSON object")
    unknown = set(d) - set(SCHEMA_KEYS)
    if unknown:
        raise ScenarioError(f"{sorted(unknown)[0]}: unknown field")
    name = _need(d, "name", str)
    T = _need(d, "num_timesteps", int)
    labels = _need(d, "zone_types", list)
    if not all(isinstance(x, str) for x in labels):
        raise ScenarioError("zone_types: entries must be strings")
    curbs = []
    for n, c in enumerate(_need(d, "curbs", list)):
        if not isinstance(c, Mapping) or set(c) != {"id", "x", "y"}:
            raise ScenarioError(f"curbs[{n}]: need exactly the fields id, x, y")
        if not isinstance(c["id"], str) or not all(isinstance(c[a], (int, float)) and not isinstance(c[a], bool)
                                                  for a in "xy"):
            raise ScenarioError(f"curbs[{n}]: id must be a string and x, y numbers")
        curbs.append(Curb(c["id"], float(c["x"]), float(c["y"])))
    metric = _need(d, "distance_metric", str)
    if metric not in ("euclidean", "manhattan"):
        raise ScenarioError(f"distance_metric: must be euclidean or manhattan, got {metric!r}")
    try:
        H = np.array(_need(d, "valuations", list), dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"valuations: not a rectangular numeric array ({exc})") from None
    if H.ndim != 3:
        raise ScenarioError(f"valuations: expected a [k][j][i] nested array, got {H.ndim} dimensions")
    b = _need(d, "change_budget", int)
    cb = _need(d, "count_bounds", dict)
    bounds = []
    for lab in labels:
        pair = cb.get(lab)
        if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(v, int) for v in pair)):
            raise ScenarioError(f"count_bounds.{lab}: need a [lower, upper] integer pair")
        bounds.append(pair)
    extra = set(cb) - set(labels)
    if extra:
        raise ScenarioError(f"count_bounds.{sorted(extra)[0]}: not a declared zone type")
    rho = _need(d, "rho", (int, float))
    prov = _need(d, "provenance", dict)
    return Scenario(T=T, curbs=tuple(curbs), zone_types=tuple(labels), H=H,
                    A=build_distance_matrix(curbs, metric) if curbs else np.zeros((0, 0)), b=b,
                    count_bounds=bounds if bounds else np.zeros((0, 2)), rho=float(rho), name=name,
                    distance_metric=metric, provenance=prov)


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(d)


def save_scenario(s: Scenario, path) -> str:
    """Write canonical JSON; returns the fingerprint."""
    data = scenario_bytes(s)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def save_allocation(alloc: Allocation, path, scenario: Scenario | None = None, fp: str | None = None) -> None:
    if fp is None:
        if scenario is None:
            raise ValueError("save_allocation needs the scenario or its fingerprint")
        fp = fingerprint(scenario)
    Path(path).write_bytes(dumps_canonical({"scenario_fingerprint": fp, "plan": alloc.tolist()}))


def load_allocation(path, scenario: Scenario | None = None) -> Allocation:
    """Read an allocation; with ``scenario`` given, its fingerprint must match."""
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValueError(f"{path}: cannot read ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc.msg}") from None
    if not isinstance(d, dict) or "plan" not in d or "scenario_fingerprint" not in d:
        raise ValueError(f"{path}: need fields scenario_fingerprint and plan")
    if scenario is not None:
        expected = fingerprint(scenario)
        if d["scenario_fingerprint"] != expected:
            raise FingerprintError(f"{path}: allocation belongs to scenario {d['scenario_fingerprint'][:12]}, "
                                   f"not {expected[:12]}")
    alloc = Allocation(np.array(d["plan"], dtype=np.int64).reshape(len(d["plan"]), -1))
    if scenario is not None and alloc.plan.shape != (scenario.T, scenario.N):
        raise ValueError(f"{path}: plan shape {alloc.plan.shape} does not match scenario {(scenario.T, scenario.N)}")
    return alloc
