"""Deterministic JSON reading/writing for the versioned interchange files."""

import json

from .errors import SchemaError


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise SchemaError(str(exc), locus=f"line {exc.lineno}, column {exc.colno}", path=str(path)) from exc


def write_json(path, obj):
    # sort_keys + fixed separators keep reruns byte-identical
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def expect_schema(doc, schema, path=None):
    if not isinstance(doc, dict):
        raise SchemaError("top-level value must be an object", locus="$", path=path)
    found = doc.get("schema")
    if found != schema:
        raise SchemaError(f"expected schema {schema!r}, found {found!r}", locus="schema", path=path)


def require(doc, key, typ, locus, path=None):
    if key not in doc:
        raise SchemaError(f"missing required field {key!r}", locus=locus, path=path)
    value = doc[key]
    if not isinstance(value, typ):
        raise SchemaError(f"field {key!r} has wrong type {type(value).__name__}", locus=f"{locus}.{key}", path=path)
    return value


def parse_hex(value, locus, path=None):
    if not isinstance(value, str) or not value.lower().startswith("0x"):
        raise SchemaError(f"expected 0x-prefixed hex string, found {value!r}", locus=locus, path=path)
    try:
        parsed = int(value, 16)
    except ValueError:
        raise SchemaError(f"invalid hex string {value!r}", locus=locus, path=path) from None
    if parsed < 0 or parsed >= 1 << 64:
        raise SchemaError(f"address {value!r} out of 64-bit range", locus=locus, path=path)
    return parsed


def hex_str(value):
    return f"0x{value:x}"
