"""Corpus manifest: which binaries/graphs make up one project's settings."""

import os
from dataclasses import dataclass

from . import _jsonio
from .errors import SchemaError
from .graph import CompilationSetting


@dataclass
class ManifestEntry:
    setting: CompilationSetting
    binary_path: str | None = None
    fcg_path: str | None = None
    b2s_path: str | None = None

    @property
    def slug(self):
        return self.setting.slug()


@dataclass
class CorpusManifest:
    project: str
    entries: list

    def by_slug(self):
        return {e.slug: e for e in self.entries}


def load_manifest(path):
    doc = _jsonio.read_json(path)
    _jsonio.expect_schema(doc, "manifest/1", path=str(path))
    project = _jsonio.require(doc, "project", str, "$", path=str(path))
    base = os.path.dirname(os.path.abspath(path))

    entries = []
    seen = set()
    raw_entries = _jsonio.require(doc, "entries", list, "$", path=str(path))
    if not raw_entries:
        raise SchemaError("manifest needs at least one entry", locus="entries", path=str(path))
    for i, raw in enumerate(raw_entries):
        locus = f"entries[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError("entry must be an object", locus=locus, path=str(path))
        setting = CompilationSetting.from_json(
            _jsonio.require(raw, "setting", dict, locus, path=str(path)), locus=locus, path=str(path)
        )
        if setting in seen:
            raise SchemaError(f"duplicate setting {setting.slug()}", locus=locus, path=str(path))
        seen.add(setting)

        def resolve(key):
            value = raw.get(key)
            if value is None:
                return None
            if not isinstance(value, str):
                raise SchemaError(f"{key} must be a string", locus=locus, path=str(path))
            return value if os.path.isabs(value) else os.path.join(base, value)

        entry = ManifestEntry(setting, resolve("binary_path"), resolve("fcg_path"), resolve("b2s_path"))
        if entry.binary_path is None and entry.fcg_path is None:
            raise SchemaError("entry needs binary_path or fcg_path", locus=locus, path=str(path))
        for key, p in (("binary_path", entry.binary_path), ("fcg_path", entry.fcg_path), ("b2s_path", entry.b2s_path)):
            if p is not None and not os.path.exists(p):
                raise SchemaError(f"{key} does not exist: {p}", locus=locus, path=str(path))
        entries.append(entry)
    return CorpusManifest(project, entries)


def write_manifest(manifest, path, relative_to=None):
    def rel(p):
        if p is None:
            return None
        return os.path.relpath(p, relative_to) if relative_to else p

    doc = {
        "schema": "manifest/1",
        "project": manifest.project,
        "entries": [
            {
                "setting": e.setting.to_json(),
                **({"binary_path": rel(e.binary_path)} if e.binary_path else {}),
                **({"fcg_path": rel(e.fcg_path)} if e.fcg_path else {}),
                **({"b2s_path": rel(e.b2s_path)} if e.b2s_path else {}),
            }
            for e in manifest.entries
        ],
    }
    _jsonio.write_json(path, doc)
