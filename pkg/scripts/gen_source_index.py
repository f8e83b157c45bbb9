#!/usr/bin/env python3
"""Generate a srcidx/1 file from C sources.

A deliberately simple scanner for sources formatted in the common GNU/K&R
style: function definitions start at column 0 (the return type may sit on
the same or the previous line) and their closing brace returns to column 0.
Anything a tags tool emits in the same shape works just as well; this
script only exists so the repository has a runnable recipe.

    python3 scripts/gen_source_index.py out.json src1.c [src2.c ...]
"""

import json
import re
import sys

SIGNATURE = re.compile(r"^[A-Za-z_][A-Za-z0-9_ *]*?\**([A-Za-z_][A-Za-z0-9_]*)\s*\(")


def scan_file(path, key=None):
    with open(path, "r", encoding="utf-8") as f:
        lines = f.readlines()
    key = key if key is not None else path
    entries = []
    i = 0
    while i < len(lines):
        line = lines[i]
        m = SIGNATURE.match(line)
        if not m or ";" in line.split("(")[0]:
            i += 1
            continue
        # find the opening brace of a definition (prototypes end with ';')
        j = i
        depth = 0
        opened = False
        while j < len(lines):
            for ch in lines[j]:
                if ch == "{":
                    depth += 1
                    opened = True
                elif ch == "}":
                    depth -= 1
            if not opened and ";" in lines[j]:
                break  # declaration, not a definition
            if opened and depth == 0:
                entries.append(
                    {"file": key, "function": m.group(1), "start_line": i + 1, "end_line": j + 1}
                )
                i = j
                break
            j += 1
        i += 1
    return entries


def main():
    out_path = sys.argv[1]
    entries = []
    for path in sys.argv[2:]:
        entries.extend(scan_file(path))
    entries.sort(key=lambda e: (e["file"], e["start_line"]))
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump({"schema": "srcidx/1", "entries": entries}, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"{out_path}: {len(entries)} functions from {len(sys.argv) - 2} files")


if __name__ == "__main__":
    main()
