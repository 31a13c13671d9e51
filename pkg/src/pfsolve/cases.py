"""Network case ingestion.

Parses MATPOWER-style ``.m`` case files (literal matrix blocks only) and a
native JSON interchange format into :class:`CaseData`. Bus numbering is
remapped to dense 0-based internal indices in file order; the permutation is
deterministic for a given file.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from importlib import resources

import jsonschema
import numpy as np


class ParseError(ValueError):
    """Raised when a case file cannot be parsed."""


class ValidationError(ValueError):
    """Raised when parsed case data violates a structural invariant."""


class SchemaError(ValueError):
    """Native-format schema violation, carrying the offending JSON path."""

    def __init__(self, json_path: str, message: str):
        self.json_path = json_path
        super().__init__(f"schema error at {json_path!r}: {message}")


class BusType(Enum):
    SLACK = "Slack"
    PV = "PV"
    PQ = "PQ"


# MATPOWER TYPE column coding.
_MATPOWER_BUS_TYPE = {1: BusType.PQ, 2: BusType.PV, 3: BusType.SLACK}
_BUS_TYPE_TO_MATPOWER = {BusType.PQ: 1, BusType.PV: 2, BusType.SLACK: 3}


@dataclass(frozen=True)
class Bus:
    id: int
    bus_type: BusType
    Pd: float  # MW
    Qd: float  # MVAr
    Gs: float  # MW at V = 1.0 p.u.
    Bs: float  # MVAr at V = 1.0 p.u.
    Vm: float  # p.u.
    Va: float  # degrees
    base_kV: float


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float
    tap: float  # 0 means nominal (1.0)
    shift: float  # degrees
    status: int


@dataclass(frozen=True)
class Generator:
    bus: int
    Pg: float  # MW
    Qg: float  # MVAr
    Vg: float  # p.u. setpoint
    status: int


@dataclass(frozen=True)
class CaseData:
    name: str
    base_MVA: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    gens: tuple[Generator, ...]

    @property
    def n(self) -> int:
        return len(self.buses)

    @cached_property
    def index_of(self) -> dict[int, int]:
        """Bus id -> dense internal index, in file order."""
        return {bus.id: i for i, bus in enumerate(self.buses)}

    @cached_property
    def slack_idx(self) -> int:
        return next(
            i for i, b in enumerate(self.buses) if b.bus_type is BusType.SLACK
        )

    @cached_property
    def pv_idxs(self) -> np.ndarray:
        return np.array(
            [i for i, b in enumerate(self.buses) if b.bus_type is BusType.PV],
            dtype=np.intp,
        )

    @cached_property
    def pq_idxs(self) -> np.ndarray:
        return np.array(
            [i for i, b in enumerate(self.buses) if b.bus_type is BusType.PQ],
            dtype=np.intp,
        )

    @cached_property
    def non_slack_idxs(self) -> np.ndarray:
        return np.array(
            [i for i in range(self.n) if i != self.slack_idx], dtype=np.intp
        )

    @property
    def d_in(self) -> int:
        """Perturbation-vector length: (dP, dQ) per PQ bus plus dP per PV bus."""
        return 2 * len(self.pq_idxs) + len(self.pv_idxs)

    @property
    def d_out(self) -> int:
        """Raw network-output length: theta per PV bus, (V, theta) per PQ bus."""
        return len(self.pv_idxs) + 2 * len(self.pq_idxs)

    @cached_property
    def voltage_setpoints(self) -> np.ndarray:
        """Per-bus magnitude setpoint: generator Vg where present, else bus Vm."""
        vset = np.array([b.Vm for b in self.buses], dtype=float)
        for gen in self.gens:
            vset[self.index_of[gen.bus]] = gen.Vg
        return vset

    @property
    def slack_vm(self) -> float:
        return float(self.voltage_setpoints[self.slack_idx])

    @property
    def slack_va_rad(self) -> float:
        return float(np.radians(self.buses[self.slack_idx].Va))


def _finalize(name, base_mva, buses, branches, gens) -> CaseData:
    """Drop out-of-service elements, demote unsupported PV buses, validate."""
    branches = [br for br in branches if br.status != 0]
    gens = [g for g in gens if g.status != 0]

    gen_buses = {g.bus for g in gens}
    fixed = []
    for bus in buses:
        if bus.bus_type is BusType.PV and bus.id not in gen_buses:
            bus = replace(bus, bus_type=BusType.PQ)
        fixed.append(bus)

    case = CaseData(
        name=name,
        base_MVA=float(base_mva),
        buses=tuple(fixed),
        branches=tuple(branches),
        gens=tuple(gens),
    )
    _validate(case)
    return case


def _validate(case: CaseData) -> None:
    ids = [b.id for b in case.buses]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValidationError(f"duplicate bus ids: {dupes}")
    n_slack = sum(1 for b in case.buses if b.bus_type is BusType.SLACK)
    if n_slack != 1:
        raise ValidationError(f"expected exactly one slack bus, found {n_slack}")
    for bus in case.buses:
        if bus.Vm <= 0:
            raise ValidationError(f"bus {bus.id}: Vm must be positive, got {bus.Vm}")
    known = set(ids)
    for br in case.branches:
        if br.from_bus not in known or br.to_bus not in known:
            raise ValidationError(
                f"branch {br.from_bus}-{br.to_bus} references an unknown bus"
            )
        if br.from_bus == br.to_bus:
            raise ValidationError(f"branch at bus {br.from_bus} is a self-loop")
        if br.r * br.r + br.x * br.x == 0.0:
            raise ValidationError(
                f"branch {br.from_bus}-{br.to_bus} has zero series impedance"
            )
    for gen in case.gens:
        if gen.bus not in known:
            raise ValidationError(f"generator references unknown bus {gen.bus}")


# ---------------------------------------------------------------------------
# MATPOWER .m parsing

_BLOCK_RE = re.compile(
    r"mpc\.(?P<field>baseMVA|bus|gen|branch)\s*=\s*(?P<body>\[[^\]]*\]|[^;\[]+);",
    re.DOTALL,
)
_NAME_RE = re.compile(r"function\s+mpc\s*=\s*(\w+)")


def _parse_matrix(body: str, block: str) -> list[list[float]]:
    rows = []
    inner = body.strip().lstrip("[").rstrip("]")
    for raw_line in inner.splitlines():
        line = raw_line.split("%", 1)[0].strip()
        if not line:
            continue
        for raw_row in line.split(";"):
            raw_row = raw_row.strip()
            if not raw_row:
                continue
            try:
                rows.append([float(tok) for tok in raw_row.replace(",", " ").split()])
            except ValueError as exc:
                raise ParseError(f"mpc.{block}: non-numeric entry in {raw_row!r}") from exc
    return rows


def parse_matpower_case(text: str) -> CaseData:
    """Parse MATPOWER case text (literal matrix blocks, no MATLAB expressions)."""
    stripped = "\n".join(line.split("%", 1)[0] for line in text.splitlines())
    blocks = {m.group("field"): m.group("body") for m in _BLOCK_RE.finditer(stripped)}
    for required in ("baseMVA", "bus", "gen", "branch"):
        if required not in blocks:
            raise ParseError(f"missing mpc.{required} block")

    name_match = _NAME_RE.search(text)
    name = name_match.group(1) if name_match else "case"

    try:
        base_mva = float(blocks["baseMVA"].strip().strip("[]"))
    except ValueError as exc:
        raise ParseError("mpc.baseMVA is not a number") from exc

    buses = []
    for row in _parse_matrix(blocks["bus"], "bus"):
        if len(row) < 10:
            raise ParseError(f"mpc.bus row has {len(row)} columns, expected >= 10")
        btype = _MATPOWER_BUS_TYPE.get(int(row[1]))
        if btype is None:
            raise ValidationError(f"bus {int(row[0])}: unknown TYPE {int(row[1])}")
        buses.append(
            Bus(
                id=int(row[0]),
                bus_type=btype,
                Pd=row[2],
                Qd=row[3],
                Gs=row[4],
                Bs=row[5],
                Vm=row[7],
                Va=row[8],
                base_kV=row[9],
            )
        )

    gens = []
    for row in _parse_matrix(blocks["gen"], "gen"):
        if len(row) < 8:
            raise ParseError(f"mpc.gen row has {len(row)} columns, expected >= 8")
        gens.append(
            Generator(
                bus=int(row[0]), Pg=row[1], Qg=row[2], Vg=row[5], status=int(row[7])
            )
        )

    branches = []
    for row in _parse_matrix(blocks["branch"], "branch"):
        if len(row) < 11:
            raise ParseError(f"mpc.branch row has {len(row)} columns, expected >= 11")
        branches.append(
            Branch(
                from_bus=int(row[0]),
                to_bus=int(row[1]),
                r=row[2],
                x=row[3],
                b=row[4],
                tap=row[8],
                shift=row[9],
                status=int(row[10]),
            )
        )

    return _finalize(name, base_mva, buses, branches, gens)


# ---------------------------------------------------------------------------
# Native JSON format

_NUMBER = {"type": "number"}
_NATIVE_SCHEMA = {
    "type": "object",
    "required": ["name", "base_MVA", "buses", "branches", "gens"],
    "properties": {
        "name": {"type": "string"},
        "base_MVA": {"type": "number", "exclusiveMinimum": 0},
        "buses": {
            "type": "array",
            "items": {
                "type": "object",
                "required": [
                    "id", "bus_type", "Pd", "Qd", "Gs", "Bs", "Vm", "Va", "base_kV",
                ],
                "properties": {
                    "id": {"type": "integer"},
                    "bus_type": {"enum": ["Slack", "PV", "PQ"]},
                    "Pd": _NUMBER, "Qd": _NUMBER, "Gs": _NUMBER, "Bs": _NUMBER,
                    "Vm": _NUMBER, "Va": _NUMBER, "base_kV": _NUMBER,
                },
            },
        },
        "branches": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from", "to", "r", "x", "b", "tap", "shift", "status"],
                "properties": {
                    "from": {"type": "integer"}, "to": {"type": "integer"},
                    "r": _NUMBER, "x": _NUMBER, "b": _NUMBER,
                    "tap": _NUMBER, "shift": _NUMBER,
                    "status": {"type": "integer"},
                },
            },
        },
        "gens": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["bus", "Pg", "Qg", "Vg", "status"],
                "properties": {
                    "bus": {"type": "integer"},
                    "Pg": _NUMBER, "Qg": _NUMBER, "Vg": _NUMBER,
                    "status": {"type": "integer"},
                },
            },
        },
    },
}

_REQUIRED_MSG_RE = re.compile(r"'(.+)' is a required property")


def _schema_error_path(error: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in error.absolute_path]
    missing = _REQUIRED_MSG_RE.match(error.message)
    if missing:
        parts.append(missing.group(1))
    return "/" + "/".join(parts)


def parse_native_case(text: str) -> CaseData:
    """Parse the native JSON format; same CaseData semantics as MATPOWER."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc

    validator = jsonschema.Draft202012Validator(_NATIVE_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        raise SchemaError(_schema_error_path(first), first.message)

    buses = [
        Bus(
            id=b["id"],
            bus_type=BusType(b["bus_type"]),
            Pd=b["Pd"], Qd=b["Qd"], Gs=b["Gs"], Bs=b["Bs"],
            Vm=b["Vm"], Va=b["Va"], base_kV=b["base_kV"],
        )
        for b in doc["buses"]
    ]
    branches = [
        Branch(
            from_bus=br["from"], to_bus=br["to"],
            r=br["r"], x=br["x"], b=br["b"],
            tap=br["tap"], shift=br["shift"], status=br["status"],
        )
        for br in doc["branches"]
    ]
    gens = [
        Generator(bus=g["bus"], Pg=g["Pg"], Qg=g["Qg"], Vg=g["Vg"], status=g["status"])
        for g in doc["gens"]
    ]
    return _finalize(doc["name"], doc["base_MVA"], buses, branches, gens)


def export_native_case(case: CaseData) -> str:
    """Serialize to the native JSON format; lossless for all parsed fields."""
    doc = {
        "name": case.name,
        "base_MVA": case.base_MVA,
        "buses": [
            {
                "id": b.id, "bus_type": b.bus_type.value,
                "Pd": b.Pd, "Qd": b.Qd, "Gs": b.Gs, "Bs": b.Bs,
                "Vm": b.Vm, "Va": b.Va, "base_kV": b.base_kV,
            }
            for b in case.buses
        ],
        "branches": [
            {
                "from": br.from_bus, "to": br.to_bus,
                "r": br.r, "x": br.x, "b": br.b,
                "tap": br.tap, "shift": br.shift, "status": br.status,
            }
            for br in case.branches
        ],
        "gens": [
            {"bus": g.bus, "Pg": g.Pg, "Qg": g.Qg, "Vg": g.Vg, "status": g.status}
            for g in case.gens
        ],
    }
    return json.dumps(doc, indent=1)


# ---------------------------------------------------------------------------

def base_injections(case: CaseData) -> tuple[np.ndarray, np.ndarray]:
    """Per-bus specified injections in p.u.: (sum of Pg - Pd) / base_MVA.

    Entries are returned for every bus; which of them actually constrain the
    solution is determined by the bus index sets (slack P/Q and PV Q are free).
    """
    p = np.array([-b.Pd for b in case.buses], dtype=float)
    q = np.array([-b.Qd for b in case.buses], dtype=float)
    for gen in case.gens:
        i = case.index_of[gen.bus]
        p[i] += gen.Pg
        q[i] += gen.Qg
    return p / case.base_MVA, q / case.base_MVA


def load_case(path_or_name: str) -> CaseData:
    """Load a case from a path, or a bundled fixture by name (e.g. 'ieee14')."""
    aliases = {"ieee14": "case14.m", "ieee39": "case39.m", "ieee118": "case118.m"}
    fname = aliases.get(path_or_name.lower())
    if fname is not None:
        text = (resources.files("pfsolve") / "data" / fname).read_text()
        return parse_matpower_case(text)
    with open(path_or_name) as fh:
        text = fh.read()
    if path_or_name.endswith(".json"):
        return parse_native_case(text)
    return parse_matpower_case(text)
