"""File formats: dataset CSV, spec JSON, referral/transfer CSVs, result JSON.

Floats are written with 17 significant digits so every value survives a
write/read round trip bit for bit. NaN and infinities become JSON ``null``.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from sybilreg.errors import IndexOutOfRange, ValidationError
from sybilreg.graph import ReferralEdge, TransferRecord
from sybilreg.model import CandidateNetwork, Dataset, DisjointNetworkSpec, validate_spec

__all__ = [
    "dumps",
    "format_float",
    "parse_spec",
    "read_dataset_csv",
    "read_referrals_csv",
    "read_spec",
    "read_transfers_csv",
    "spec_to_obj",
    "write_dataset_csv",
]

# keys that derived spec files may carry alongside the spec itself
_SPEC_EXTRA_KEYS = {"manifest", "diagnostics", "heuristic"}


def format_float(x: float) -> str | None:
    x = float(x)
    if not math.isfinite(x):
        return None
    s = "%.17g" % x
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _emit(obj: Any, indent: int, level: int) -> str:
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, (bool, np.bool_)):
        return json.dumps(bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        s = format_float(obj)
        return "null" if s is None else s
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, Path):
        return json.dumps(str(obj))
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = ": " if indent else ":"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [json.dumps(str(k)) + sep + _emit(v, indent, level + 1) for k, v in obj.items()]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        # numeric vectors stay on one line
        if all(isinstance(v, (int, float, np.number)) or v is None for v in obj):
            return "[" + ", ".join(_emit(v, 0, 0) for v in obj) + "]"
        return "[" + pad + ("," + pad).join(_emit(v, indent, level + 1) for v in obj) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """Deterministic JSON text with 17-significant-digit floats."""
    return _emit(obj, indent, 0) + "\n"


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    if not rows:
        raise ValidationError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
    return header, body


def read_dataset_csv(path, intercept: bool = True) -> Dataset:
    """Columns: optional ``id``, then ``y``, then regressors.

    An all-ones ``const`` column is prepended unless ``intercept`` is False.
    """
    header, body = _read_rows(path)
    has_id = header[0].lower() == "id"
    off = 1 if has_id else 0
    if len(header) <= off or header[off].lower() != "y":
        raise ValidationError(f"{path}: expected header [id,] y, x1, ..., got {header}")
    regressors = header[off + 1 :]
    if not regressors and not intercept:
        raise ValidationError(f"{path}: no regressors and no intercept")
    try:
        values = np.array([[float(v) for v in row[off:]] for row in body], dtype=np.float64).reshape(len(body), -1)
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric value ({exc})") from None
    y = values[:, 0]
    X = values[:, 1:]
    columns = list(regressors)
    if intercept:
        X = np.column_stack([np.ones(len(body)), X])
        columns = ["const"] + columns
    ids = tuple(row[0].strip() for row in body) if has_id else None
    return Dataset(y, X, ids, tuple(columns))


def write_dataset_csv(path, ds: Dataset, intercept_included: bool = True) -> None:
    """Inverse of ``read_dataset_csv``; drops a leading ``const`` column when present."""
    X = ds.X
    cols = list(ds.columns) if ds.columns else [f"x{j + 1}" for j in range(ds.p)]
    if intercept_included and cols and cols[0] == "const":
        X, cols = X[:, 1:], cols[1:]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((["id"] if ds.row_ids else []) + ["y"] + cols)
        for i in range(ds.n):
            row = [format_float(v) for v in (ds.y[i], *X[i])]
            w.writerow(([ds.row_ids[i]] if ds.row_ids else []) + row)


def spec_to_obj(spec: DisjointNetworkSpec, row_ids=None) -> dict:
    """JSON-ready dict; members become string ids when ``row_ids`` is given."""
    nets = []
    for net in spec.networks:
        members = list(net.members) if row_ids is None else [row_ids[i] for i in net.members]
        nets.append({"members": members, "pi": net.pi})
    return {"n": spec.n_total, "networks": nets}


def parse_spec(obj: dict, dataset: Dataset | None = None, source: str = "spec") -> DisjointNetworkSpec:
    if not isinstance(obj, dict) or "networks" not in obj:
        raise ValidationError(f"{source}: expected an object with 'networks'")
    unknown = set(obj) - {"n", "networks"} - _SPEC_EXTRA_KEYS
    if unknown:
        raise ValidationError(f"{source}: unknown keys {sorted(unknown)}")
    n = obj.get("n")
    if n is None:
        if dataset is None:
            raise ValidationError(f"{source}: 'n' is required without a dataset")
        n = dataset.n
    if not isinstance(n, int) or isinstance(n, bool):
        raise ValidationError(f"{source}: 'n' must be an integer")
    if dataset is not None and n != dataset.n:
        raise ValidationError(f"{source}: n={n} but the dataset has {dataset.n} rows")

    kinds = set()
    for net in obj["networks"]:
        for m in net.get("members", []):
            kinds.add("str" if isinstance(m, str) else "int" if isinstance(m, int) and not isinstance(m, bool) else "bad")
    if "bad" in kinds:
        raise ValidationError(f"{source}: members must be strings or integers")
    if kinds == {"str", "int"}:
        raise ValidationError(f"{source}: members mix string ids and integer indices")
    id_map = None
    if kinds == {"str"}:
        if dataset is None or dataset.row_ids is None:
            raise ValidationError(f"{source}: string member ids need a dataset with an id column")
        id_map = dataset.id_map()

    networks = []
    for k, net in enumerate(obj["networks"]):
        if not isinstance(net, dict):
            raise ValidationError(f"{source}: network {k} is not an object")
        extra = set(net) - {"members", "pi", "network_id"}
        if extra:
            raise ValidationError(f"{source}: network {k} has unknown keys {sorted(extra)}")
        if "pi" not in net or "members" not in net:
            raise ValidationError(f"{source}: network {k} needs 'members' and 'pi'")
        members = net["members"]
        if id_map is not None:
            missing = [m for m in members if m not in id_map]
            if missing:
                raise IndexOutOfRange(f"{source}: network {k} references unknown row id {missing[0]!r}")
            members = [id_map[m] for m in members]
        pi = net["pi"]
        if not isinstance(pi, (int, float)) or isinstance(pi, bool):
            raise ValidationError(f"{source}: network {k} pi must be a number")
        networks.append(CandidateNetwork(tuple(members), float(pi)))
    return validate_spec(DisjointNetworkSpec(tuple(networks), n))


def read_spec(path, dataset: Dataset | None = None) -> DisjointNetworkSpec:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return parse_spec(obj, dataset, source=str(path))


def read_referrals_csv(path) -> list[ReferralEdge]:
    header, body = _read_rows(path)
    if [h.lower() for h in header] != ["referrer", "referee"]:
        raise ValidationError(f"{path}: expected header referrer,referee, got {header}")
    return [ReferralEdge(a.strip(), b.strip()) for a, b in body]


def read_transfers_csv(path) -> list[TransferRecord]:
    header, body = _read_rows(path)
    if [h.lower() for h in header] != ["from", "to", "count"]:
        raise ValidationError(f"{path}: expected header from,to,count, got {header}")
    out = []
    for lineno, (a, b, c) in enumerate(body, start=2):
        try:
            count = int(c)
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: count {c!r} is not an integer") from None
        out.append(TransferRecord(a.strip(), b.strip(), count))
    return out
