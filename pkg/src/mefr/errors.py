"""Exception types shared across the toolkit."""


class MefrError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(MefrError):
    """A file does not conform to its declared interchange schema.

    `locus` pinpoints the offending field (e.g. "functions[3].start") or,
    for parse failures, the line/column reported by the parser.
    """

    def __init__(self, message, locus=None, path=None):
        self.locus = locus
        self.path = path
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if locus is not None:
            prefix += f"{locus}: "
        super().__init__(prefix + message)


class DuplicateNameError(MefrError):
    """Two functions collapse to the same name after normalization."""

    def __init__(self, collisions):
        self.collisions = collisions
        detail = "; ".join(
            f"{name} <- {', '.join(sorted(originals))}" for name, originals in sorted(collisions.items())
        )
        super().__init__(f"duplicate function names after normalization: {detail}")


class DanglingEdgeError(MefrError):
    """A call edge references a function that is not a node of the graph."""


class AddressOverlapError(MefrError):
    """Two functions in one binary occupy overlapping address ranges."""


class UnknownFunctionError(MefrError):
    """A query names a function that is not in the graph."""


class NotElfError(MefrError):
    """The file is not an ELF object."""


class MissingDebugInfoError(MefrError):
    """A required debug section is absent from the binary."""

    def __init__(self, section):
        self.section = section
        super().__init__(f"binary has no {section} section")


class MissingSymtabError(MefrError):
    """The binary carries no symbol table."""


class MalformedDwarfError(MefrError):
    """The DWARF data could not be decoded."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"malformed DWARF at offset 0x{offset:x}: {message}")


class SourceIndexOverlapError(MefrError):
    """Two functions in a source index claim overlapping line ranges."""

    def __init__(self, file, first, second):
        self.file = file
        self.first = first
        self.second = second
        super().__init__(f"{file}: line ranges of {first!r} and {second!r} overlap")


class ClassificationError(MefrError):
    """A pair cannot be classified (unresolved OSF on an intersecting BFI)."""


class SingleSettingError(MefrError):
    """Boundary identification needs at least two compilation settings."""


class ConfigError(MefrError):
    """Invalid synthetic-corpus configuration."""
