"""Dataset formats, run configuration and exact-reference manifests.

A dataset on disk is a JSONL stream: one header object (``"schema":
"shadowbench/1"``) followed by one record object per line, either

``{"r": 3, "m": 1, "basis": ["X", "Z", ...], "bits": "0101"}``

for Pauli settings or ``{"r": ..., "m": ..., "u": [[[re, im] x 4] per
qubit], "bits": ...}`` with row-major 2x2 unitaries for the Haar ensemble
(one ensemble per dataset, never mixed).  Qubit 0 is the leftmost bit.

A simulation run writes a directory: ``manifest.json`` plus one records
file per requested time; the manifest carries the run configuration and
exact reference values (purity, operator entanglement, sector weights and
sector OE from the exact oracle) for every time, so estimator output can
be validated without re-simulating.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import exact
from .linops import QubitRegister, partial_trace, permute_qubits
from .shadows import MeasurementRecord

SCHEMA = "shadowbench/1"
MANIFEST_SCHEMA = "shadowbench/1-manifest"


class ValidationError(ValueError):
    """Malformed dataset or configuration; carries the offending location."""

    def __init__(self, message: str, line: int | None = None, field_name: str | None = None):
        self.line = line
        self.field_name = field_name
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field_name is not None:
            where.append(f"field {field_name!r}")
        super().__init__(f"{message}" + (f" ({', '.join(where)})" if where else ""))


@dataclass(frozen=True)
class DatasetHeader:
    n_qubits: int
    ensemble: str
    n_u: int
    n_m: int
    seed: int
    state: dict = field(default_factory=dict)
    time: float | None = None
    time_unit: str = "1/J0"

    def to_json(self) -> dict:
        d = {"schema": SCHEMA, **asdict(self)}
        return d

    @staticmethod
    def from_json(obj: dict) -> "DatasetHeader":
        if obj.get("schema") != SCHEMA:
            raise ValidationError(f"unknown schema {obj.get('schema')!r}", line=1, field_name="schema")
        if obj.get("ensemble") not in ("pauli", "haar"):
            raise ValidationError(f"unknown ensemble {obj.get('ensemble')!r}", line=1, field_name="ensemble")
        keys = {"n_qubits", "ensemble", "n_u", "n_m", "seed", "state", "time", "time_unit"}
        return DatasetHeader(**{k: obj[k] for k in keys if k in obj})


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def record_to_json(rec: MeasurementRecord) -> dict:
    out: dict = {"r": rec.r, "m": rec.m, "bits": rec.bits}
    if rec.basis is not None:
        out["basis"] = list(rec.basis)
    else:
        out["u"] = [
            [[float(u[i, j].real), float(u[i, j].imag)] for i in range(2) for j in range(2)]
            for u in rec.unitaries
        ]
    return out


def record_from_json(obj: dict, header: DatasetHeader, line: int) -> MeasurementRecord:
    for key in ("r", "m", "bits"):
        if key not in obj:
            raise ValidationError("missing record field", line=line, field_name=key)
    if not (1 <= obj["r"] <= header.n_u):
        raise ValidationError(f"unitary index {obj['r']} outside [1, {header.n_u}]", line, "r")
    if not (1 <= obj["m"] <= header.n_m):
        raise ValidationError(f"shot index {obj['m']} outside [1, {header.n_m}]", line, "m")
    bits = obj["bits"]
    if len(bits) != header.n_qubits or set(bits) - {"0", "1"}:
        raise ValidationError(f"bad bitstring {bits!r}", line, "bits")
    if header.ensemble == "pauli":
        if "u" in obj:
            raise ValidationError("explicit unitaries in a pauli dataset", line, "u")
        if "basis" not in obj:
            raise ValidationError("pauli dataset requires per-record basis", line, "basis")
        return MeasurementRecord(obj["r"], obj["m"], bits, basis=tuple(obj["basis"]))
    if "u" not in obj:
        raise ValidationError("haar dataset requires per-record unitaries", line, "u")
    if "basis" in obj:
        raise ValidationError("basis labels in a haar dataset", line, "basis")
    us = np.array(
        [[[complex(re, im) for re, im in qu[0:2]], [complex(re, im) for re, im in qu[2:4]]] for qu in obj["u"]]
    )
    return MeasurementRecord(obj["r"], obj["m"], bits, unitaries=us)


def write_dataset(path, header: DatasetHeader, records) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(_dump(header.to_json()) + "\n")
        for rec in records:
            fh.write(_dump(record_to_json(rec)) + "\n")


def iter_dataset(path):
    """Streaming reader: returns (header, record generator)."""
    path = Path(path)
    fh = path.open()
    first = fh.readline()
    if not first:
        raise ValidationError("empty dataset", line=1)
    header = DatasetHeader.from_json(json.loads(first))

    def gen():
        with fh:
            for line_no, line in enumerate(fh, start=2):
                if line.strip():
                    yield record_from_json(json.loads(line), header, line_no)

    return header, gen()


def read_dataset(path) -> tuple[DatasetHeader, list[MeasurementRecord]]:
    header, gen = iter_dataset(path)
    return header, list(gen)


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

STATE_KINDS = ("quench", "ghz", "bell", "neel")
CHARGES = ("magnetization", "number")


@dataclass
class RunConfig:
    """Parameters of a simulate/estimate pipeline (flags override keys)."""

    n_qubits: int = 4
    state: str = "ghz"
    j0: float = 1.0
    alpha_pow: float = 1.24
    field_b: float = 22.0
    p_dp: float = 0.0
    times: list = field(default_factory=lambda: [0.0])
    ensemble: str = "pauli"
    n_u: int = 500
    n_m: int = 150
    seed: int | None = None
    block_a: list = field(default_factory=lambda: [0, 1])
    block_b: list = field(default_factory=lambda: [2, 3])
    charge: str = "magnetization"
    n_prime_oe: int = 4
    n_prime_sroe: int = 16
    q_list: list = field(default_factory=lambda: [-1, 0, 1])
    time_unit: str = "1/J0"

    def validate(self) -> "RunConfig":
        if self.state not in STATE_KINDS:
            raise ValidationError(f"unknown state kind {self.state!r}", field_name="state")
        if self.ensemble not in ("pauli", "haar"):
            raise ValidationError(f"unknown ensemble {self.ensemble!r}", field_name="ensemble")
        if self.charge not in CHARGES:
            raise ValidationError(f"unknown charge {self.charge!r}", field_name="charge")
        a, b = set(self.block_a), set(self.block_b)
        if not self.block_a or not self.block_b:
            raise ValidationError("blocks must be nonempty", field_name="block_a")
        if a & b:
            raise ValidationError("blocks overlap", field_name="block_b")
        for q in a | b:
            if not (0 <= q < self.n_qubits):
                raise ValidationError(f"qubit {q} outside register", field_name="block_a")
        if self.seed is None:
            raise ValidationError("a seed is required", field_name="seed")
        return self

    @staticmethod
    def from_file(path, **overrides) -> "RunConfig":
        data = json.loads(Path(path).read_text()) if path else {}
        unknown = set(data) - set(RunConfig().__dict__)
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig(**data)


def reduced_register(cfg: RunConfig) -> QubitRegister:
    return QubitRegister(
        len(cfg.block_a) + len(cfg.block_b),
        {
            "A": tuple(range(len(cfg.block_a))),
            "B": tuple(range(len(cfg.block_a), len(cfg.block_a) + len(cfg.block_b))),
        },
    )


def charge_for(cfg: RunConfig, reg: QubitRegister) -> exact.ChargeOperator:
    build = exact.magnetization_charge if cfg.charge == "magnetization" else exact.number_charge
    return build(reg)


def partition_qubits(cfg: RunConfig) -> list[int]:
    """Kept qubits in A-then-B order (shadow restriction order)."""
    return sorted(cfg.block_a) + sorted(cfg.block_b)


def reduce_to_partition(rho: np.ndarray, cfg: RunConfig) -> np.ndarray:
    """Exact reduced matrix on A then B, whatever the physical layout."""
    keep = partition_qubits(cfg)
    rest = [q for q in range(cfg.n_qubits) if q not in keep]
    reg = QubitRegister(cfg.n_qubits, {"keep": tuple(keep), "rest": tuple(rest)})
    reduced = partial_trace(rho, reg, "keep") if rest else np.asarray(rho)
    sorted_keep = sorted(keep)
    perm = [sorted_keep.index(q) for q in keep]
    return permute_qubits(reduced, perm)


def exact_references(rho_reduced: np.ndarray, cfg: RunConfig) -> dict:
    """Exact oracle values recorded next to each simulated dataset.

    Sector-resolved references require the state to commute with the
    configured charge; otherwise they are recorded as null (the total-OE
    references never need the symmetry).
    """
    reg = reduced_register(cfg)
    charge = charge_for(cfg, reg)
    s2, r2 = exact.renyi2_oe_and_entropy(rho_reduced, reg)
    out = {
        "purity": float(np.trace(rho_reduced @ rho_reduced).real),
        "s2_oe": s2,
        "r2": r2,
        "s2_unnormalized": s2 - 2 * r2,
        "symmetric": True,
        "populations": None,
        "sroe2": None,
    }
    try:
        spec = exact.symmetry_resolved_schmidt(rho_reduced, reg, charge)
    except exact.SymmetryViolationError:
        out["symmetric"] = False
        return out
    pops = exact.populations(spec)
    out["populations"] = {str(q): p for q, p in pops.items()}
    out["sroe2"] = {
        str(q): exact.sroe(spec, q, 2) if pops.get(q, 0.0) > 1e-12 else None
        for q in cfg.q_list
    }
    return out


def write_manifest(path, cfg: RunConfig, entries: list[dict]) -> None:
    doc = {
        "schema": MANIFEST_SCHEMA,
        "config": asdict(cfg),
        "times": entries,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def read_manifest(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != MANIFEST_SCHEMA:
        raise ValidationError(f"not a manifest: schema {doc.get('schema')!r}", field_name="schema")
    return doc


def format_float(x) -> str:
    """Full-precision decimal text for CSV numeric fields.

    Non-finite values become empty cells: validity always travels in an
    explicit flag column, never as a sentinel number.
    """
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    x = float(x)
    if not np.isfinite(x):
        return ""
    return f"{x:.17g}"


def write_csv(path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, str):
                cells.append(cell)
            elif isinstance(cell, bool) or cell is None:
                cells.append(format_float(cell) if not isinstance(cell, bool) else ("true" if cell else "false"))
            else:
                cells.append(format_float(cell))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")
