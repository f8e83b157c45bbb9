#!/usr/bin/env python3
"""Regenerate golden files for the ELF fixtures from binutils readelf.

The golden line tables and function ranges are derived from an independent
decoder (readelf --debug-dump / readelf -sW), normalized to the canonical
record serialization:

    lines:  <0xaddress>\t<file>\t<line>      (end-of-sequence and line-0 rows dropped)
    funcs:  <name>\t<0xstart>\t<0xend>       (FUNC symbols with nonzero size)

Run from the repository root after rebuilding any fixture binary:

    python3 scripts/gen_goldens.py tests/fixtures/hello_g.elf tests/fixtures/calls_g.elf
"""

import posixpath
import re
import subprocess
import sys
from pathlib import Path

CLONE_SUFFIX = re.compile(r"\.(isra|part|constprop|cold|clone)\.\d+$")


def parse_rawline_tables(binary):
    """Per-unit (version, directories, file entries) from readelf rawline output."""
    text = subprocess.run(
        ["readelf", "--debug-dump=rawline", binary], capture_output=True, text=True, check=True
    ).stdout
    units = []
    version = None
    dirs = []
    files = []
    section = None
    for line in text.splitlines():
        if line.startswith("  Offset:"):
            if version is not None:
                units.append((version, dirs, files))
            version, dirs, files = None, [], []
            section = None
        m = re.match(r"\s*DWARF Version:\s+(\d+)", line)
        if m:
            version = int(m.group(1))
            continue
        if "The Directory Table" in line:
            section = "dirs"
            continue
        if "The File Name Table" in line:
            section = "files"
            continue
        if "Line Number Statements" in line or "No Line Number Statements" in line:
            section = None
            continue
        if section == "dirs":
            m = re.match(r"\s*(\d+)\s+(?:\(indirect line string, offset: 0x[0-9a-f]+\):\s*)?(.+)$", line)
            if m and m.group(2) != "Name":
                dirs.append((int(m.group(1)), m.group(2).strip()))
        elif section == "files":
            m = re.match(
                r"\s*(\d+)\s+(\d+)(?:\s+\d+\s+\d+)?\s+(?:\(indirect line string, offset: 0x[0-9a-f]+\):\s*)?(.+)$",
                line,
            )
            if m and m.group(3) != "Name":
                files.append((int(m.group(1)), int(m.group(2)), m.group(3).strip()))
    if version is not None:
        units.append((version, dirs, files))
    return units


def resolve_path(version, dirs, files, name):
    """Join a row's file name with its directory, as the record format defines."""
    dir_map = dict(dirs)
    for _idx, dir_index, fname in files:
        if fname != name:
            continue
        if posixpath.isabs(fname):
            return fname
        if version >= 5:
            directory = dir_map.get(dir_index, "")
        else:
            directory = dir_map.get(dir_index, "") if dir_index >= 1 else ""
        return posixpath.join(directory, fname) if directory else fname
    return name


def golden_lines(binary):
    units = parse_rawline_tables(binary)
    text = subprocess.run(
        ["readelf", "--debug-dump=decodedline", binary], capture_output=True, text=True, check=True
    ).stdout
    rows = []
    unit_index = -1
    for line in text.splitlines():
        if line.startswith("File name"):
            unit_index += 1
            continue
        m = re.match(r"(\S+)\s+(\d+|-)\s+(0x[0-9a-f]+)", line)
        if not m or unit_index < 0:
            continue
        name, lineno, address = m.groups()
        if lineno in ("-", "0"):  # end-of-sequence / no-source rows
            continue
        version, dirs, files = units[unit_index]
        rows.append((int(address, 16), resolve_path(version, dirs, files, name), int(lineno)))
    rows.sort(key=lambda r: r[0])
    return "".join(f"0x{addr:x}\t{path}\t{line}\n" for addr, path, line in rows)


def golden_funcs(binary):
    text = subprocess.run(["readelf", "-sW", binary], capture_output=True, text=True, check=True).stdout
    funcs = []
    for line in text.splitlines():
        m = re.match(
            r"\s*\d+:\s+([0-9a-f]+)\s+(0x[0-9a-f]+|\d+)\s+FUNC\s+\S+\s+\S+\s+(\S+)\s+(\S+)", line
        )
        if not m:
            continue
        value, size, ndx, name = m.groups()
        size = int(size, 16) if size.startswith("0x") else int(size)
        if size == 0 or ndx == "UND":
            continue
        base = name
        while CLONE_SUFFIX.search(base):
            base = CLONE_SUFFIX.sub("", base)
        funcs.append((int(value, 16), int(value, 16) + size, base))
    funcs.sort()
    kept = []
    names = set()
    last_end = -1
    for start, end, name in funcs:
        if start < last_end or name in names:
            continue  # alias / duplicate: first by table order wins
        kept.append((name, start, end))
        names.add(name)
        last_end = end
    return "".join(f"{name}\t0x{start:x}\t0x{end:x}\n" for name, start, end in kept)


def main():
    out_dir = Path("tests/fixtures/golden")
    out_dir.mkdir(parents=True, exist_ok=True)
    for binary in sys.argv[1:]:
        stem = Path(binary).stem
        (out_dir / f"{stem}.lines.txt").write_text(golden_lines(binary))
        (out_dir / f"{stem}.funcs.txt").write_text(golden_funcs(binary))
        print(f"wrote goldens for {stem}")


if __name__ == "__main__":
    main()
