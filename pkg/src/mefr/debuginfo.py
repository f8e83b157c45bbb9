"""Debug-information extraction from unstripped ELF binaries.

Produces the raw material for binary-to-source mapping: the decoded
address/file/line table and the per-function address ranges, plus the
source-range index that assigns source lines to source functions.
"""

import bisect
import logging
from dataclasses import dataclass

from . import _jsonio
from .dwarfline import decode_line_section
from .elf import STT_FUNC, ElfFile
from .errors import MissingDebugInfoError, MissingSymtabError, SchemaError, SourceIndexOverlapError
from .graph import BinaryFunctionId, normalize_name

log = logging.getLogger("mefr.debuginfo")


@dataclass(frozen=True)
class LineRecord:
    address: int
    file: str
    line: int


def extract_line_table(binary):
    """Decode the binary's line programs into LineRecords sorted by address.

    End-of-sequence rows are excluded, as are rows with line number 0, which
    mark compiler-generated code with no source line.
    """
    elf = ElfFile.from_path(binary)
    section = elf.section(".debug_line")
    if section is None or section.size == 0:
        raise MissingDebugInfoError(".debug_line")
    line_str = elf.section(".debug_line_str")
    debug_str = elf.section(".debug_str")
    programs = decode_line_section(
        elf.section_data(section),
        elf.section_data(line_str) if line_str else None,
        elf.section_data(debug_str) if debug_str else None,
    )
    records = []
    dropped_line0 = 0
    for program in programs:
        paths = {}
        for row in program.rows:
            if row.end_sequence:
                continue
            if row.line == 0:
                dropped_line0 += 1
                continue
            if row.file_index not in paths:
                paths[row.file_index] = program.file_path(row.file_index)
            records.append(LineRecord(row.address, paths[row.file_index], row.line))
    if dropped_line0:
        log.debug("%s: dropped %d line-0 rows", binary, dropped_line0)
    records.sort(key=lambda rec: rec.address)
    return records


def extract_function_ranges(binary):
    """Address ranges of FUNC symbols with nonzero size, sorted by address.

    Symbols aliasing an already-claimed address range are dropped with a
    warning (first by symbol-table order wins), as are later symbols whose
    normalized name repeats an earlier one, so the result always satisfies
    the graph invariants (unique names, disjoint ranges).
    """
    elf = ElfFile.from_path(binary)
    symbols = elf.symbols()
    if symbols is None:
        raise MissingSymtabError(f"{binary}: no .symtab section")
    funcs = []
    for sym in symbols:
        if sym.type != STT_FUNC or sym.size == 0 or not sym.name:
            continue
        funcs.append(BinaryFunctionId(normalize_name(sym.name), sym.value, sym.value + sym.size))

    kept = []
    claimed = []  # (start, end, name) sorted by start
    seen_names = {}
    for f in sorted(funcs, key=lambda f: f.start_addr):
        pos = bisect.bisect_left(claimed, (f.start_addr,))
        overlapping = None
        for candidate in claimed[max(pos - 1, 0) : pos + 1]:
            if candidate[0] < f.end_addr and f.start_addr < candidate[1]:
                overlapping = candidate
                break
        if overlapping is not None:
            log.warning(
                "%s: symbol %s [0x%x,0x%x) aliases %s, keeping first",
                binary, f.name, f.start_addr, f.end_addr, overlapping[2],
            )
            continue
        if f.name in seen_names:
            log.warning("%s: symbol %s repeats a normalized name, keeping first", binary, f.name)
            continue
        seen_names[f.name] = f
        bisect.insort(claimed, (f.start_addr, f.end_addr, f.name))
        kept.append(f)
    return kept


class SourceRangeIndex:
    """Maps (file, line) to the source function whose range contains it."""

    def __init__(self, entries):
        self.entries = list(entries)
        self._by_file = {}
        for file, function, start_line, end_line in self.entries:
            self._by_file.setdefault(file, []).append((start_line, end_line, function))
        for file, ranges in self._by_file.items():
            ranges.sort()
            for (s1, e1, f1), (s2, e2, f2) in zip(ranges, ranges[1:]):
                if s2 <= e1:
                    raise SourceIndexOverlapError(file, f1, f2)

    @property
    def files(self):
        return set(self._by_file)

    @property
    def function_names(self):
        return {function for _, function, _, _ in self.entries}

    def lookup(self, file, line):
        ranges = self._by_file.get(file)
        if ranges is None:
            return None
        pos = bisect.bisect_right(ranges, (line, float("inf"), "")) - 1
        if pos >= 0:
            start_line, end_line, function = ranges[pos]
            if start_line <= line <= end_line:
                return function
        return None

    def rekey_files(self, rename):
        """Return a copy with file names passed through `rename`."""
        return SourceRangeIndex(
            (rename(file), function, s, e) for file, function, s, e in self.entries
        )

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        if not isinstance(other, SourceRangeIndex):
            return NotImplemented
        return sorted(self.entries) == sorted(other.entries)


def load_source_index(path):
    """Load and validate a srcidx/1 file."""
    doc = _jsonio.read_json(path)
    _jsonio.expect_schema(doc, "srcidx/1", path=str(path))
    entries = []
    for i, entry in enumerate(_jsonio.require(doc, "entries", list, "$", path=str(path))):
        locus = f"entries[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError("entry must be an object", locus=locus, path=str(path))
        file = _jsonio.require(entry, "file", str, locus, path=str(path))
        function = _jsonio.require(entry, "function", str, locus, path=str(path))
        start_line = _jsonio.require(entry, "start_line", int, locus, path=str(path))
        end_line = _jsonio.require(entry, "end_line", int, locus, path=str(path))
        if start_line < 1 or end_line < start_line:
            raise SchemaError(
                f"bad line range [{start_line}, {end_line}]", locus=locus, path=str(path)
            )
        entries.append((file, function, start_line, end_line))
    return SourceRangeIndex(entries)


def serialize_line_records(records):
    """Canonical text form, one `0xaddr\\tfile\\tline` row per record."""
    return "".join(f"0x{r.address:x}\t{r.file}\t{r.line}\n" for r in records)


def serialize_function_ranges(funcs):
    """Canonical text form, one `name\\t0xstart\\t0xend` row per function."""
    return "".join(f"{f.name}\t0x{f.start_addr:x}\t0x{f.end_addr:x}\n" for f in funcs)


def write_source_index(index, path):
    _jsonio.write_json(
        path,
        {
            "schema": "srcidx/1",
            "entries": [
                {"file": file, "function": function, "start_line": s, "end_line": e}
                for file, function, s, e in sorted(index.entries)
            ],
        },
    )
