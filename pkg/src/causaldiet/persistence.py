"""Versioned JSON envelopes with a checksum over the canonical payload bytes.

Canonical form: sorted keys, compact separators, shortest round-trip floats,
-0.0 written as 0.0, no NaN or infinity.
"""
import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

from causaldiet.errors import DataError, IntegrityError

SCHEMA_VERSION = 1
KINDS = ("dag", "scm", "ranking", "recommendation", "report", "truth")


def _normalize(value):
    if isinstance(value, float):
        if not math.isfinite(value):
            raise DataError(f"cannot serialize non-finite float {value}")
        return 0.0 if value == 0 else value
    if isinstance(value, dict):
        return {str(k): _normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_normalize(v) for v in value]
    return value


def canonical_bytes(payload):
    text = json.dumps(_normalize(payload), sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False)
    return text.encode("utf-8")


def checksum(payload):
    return hashlib.sha256(canonical_bytes(payload)).hexdigest()


@dataclass(frozen=True)
class Envelope:
    kind: str
    payload: object
    schema_version: int = SCHEMA_VERSION
    checksum: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if not self.checksum:
            object.__setattr__(self, "checksum", checksum(self.payload))

    def to_dict(self):
        return {"schema_version": self.schema_version, "kind": self.kind,
                "payload": self.payload, "checksum": self.checksum}


def dumps(envelope):
    return canonical_bytes(envelope.to_dict()) + b"\n"


def loads(data):
    try:
        d = json.loads(data)
    except ValueError as exc:
        raise IntegrityError(f"envelope is not valid JSON: {exc}") from None
    if not isinstance(d, dict) or set(d) != {"schema_version", "kind", "payload", "checksum"}:
        raise IntegrityError("malformed envelope")
    if d["schema_version"] != SCHEMA_VERSION:
        raise IntegrityError(f"unsupported schema_version {d['schema_version']!r}")
    if d["kind"] not in KINDS:
        raise IntegrityError(f"unknown envelope kind {d['kind']!r}")
    if checksum(d["payload"]) != d["checksum"]:
        raise IntegrityError("checksum mismatch")
    return Envelope(d["kind"], d["payload"], d["schema_version"], d["checksum"])


def save(envelope, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(envelope))
    os.replace(tmp, path)


def load(path, kind=None):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    env = loads(data)
    if kind is not None and env.kind != kind:
        raise IntegrityError(f"{path}: expected a {kind} envelope, found {env.kind}")
    return env


def save_payload(kind, payload, path):
    save(Envelope(kind, payload), path)


def load_payload(path, kind):
    return load(path, kind).payload
