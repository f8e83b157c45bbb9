"""DWARF .debug_line decoder for versions 2 through 5.

Decodes every line-number program in the section and replays its state
machine, yielding the (address, file, line) rows the program describes.
Inlined-subroutine DIEs are deliberately not consulted; rows come from the
line table alone.
"""

import posixpath
import struct
from dataclasses import dataclass

from .errors import MalformedDwarfError

DW_LNS_copy = 1
DW_LNS_advance_pc = 2
DW_LNS_advance_line = 3
DW_LNS_set_file = 4
DW_LNS_set_column = 5
DW_LNS_negate_stmt = 6
DW_LNS_set_basic_block = 7
DW_LNS_const_add_pc = 8
DW_LNS_fixed_advance_pc = 9
DW_LNS_set_prologue_end = 10
DW_LNS_set_epilogue_begin = 11
DW_LNS_set_isa = 12

DW_LNE_end_sequence = 1
DW_LNE_set_address = 2
DW_LNE_define_file = 3
DW_LNE_set_discriminator = 4

DW_LNCT_path = 1
DW_LNCT_directory_index = 2
DW_LNCT_timestamp = 3
DW_LNCT_size = 4
DW_LNCT_md5 = 5

DW_FORM_data2 = 0x05
DW_FORM_data4 = 0x06
DW_FORM_data8 = 0x07
DW_FORM_string = 0x08
DW_FORM_block = 0x09
DW_FORM_data1 = 0x0B
DW_FORM_strp = 0x0E
DW_FORM_udata = 0x0F
DW_FORM_data16 = 0x1E
DW_FORM_line_strp = 0x1F


@dataclass(frozen=True)
class Row:
    address: int
    file_index: int
    line: int
    end_sequence: bool


@dataclass
class LineProgram:
    offset: int
    version: int
    directories: list
    file_entries: list  # (name, dir_index)
    rows: list
    files_are_zero_based: bool

    def file_path(self, index):
        """Resolve a file index to a path, joining its directory when relative."""
        entries = self.file_entries
        if self.files_are_zero_based:
            pos = index
        else:
            pos = index - 1
        if pos < 0 or pos >= len(entries):
            raise MalformedDwarfError(f"file index {index} out of range", self.offset)
        name, dir_index = entries[pos]
        if posixpath.isabs(name):
            return name
        directory = ""
        if self.files_are_zero_based:
            if 0 <= dir_index < len(self.directories):
                directory = self.directories[dir_index]
        else:
            # v2-4: directory 0 is the compilation directory, which the line
            # table does not record; leave those names bare.
            if dir_index >= 1 and dir_index - 1 < len(self.directories):
                directory = self.directories[dir_index - 1]
        if directory:
            return posixpath.join(directory, name)
        return name


class _Reader:
    def __init__(self, data, offset=0):
        self.data = data
        self.pos = offset

    def _need(self, n):
        if self.pos + n > len(self.data):
            raise MalformedDwarfError("unexpected end of data", self.pos)

    def bytes(self, n):
        self._need(n)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self):
        return self.bytes(1)[0]

    def u16(self):
        return struct.unpack("<H", self.bytes(2))[0]

    def u32(self):
        return struct.unpack("<I", self.bytes(4))[0]

    def u64(self):
        return struct.unpack("<Q", self.bytes(8))[0]

    def s8(self):
        return struct.unpack("<b", self.bytes(1))[0]

    def uleb(self):
        result = 0
        shift = 0
        while True:
            byte = self.u8()
            result |= (byte & 0x7F) << shift
            if not byte & 0x80:
                return result
            shift += 7
            if shift > 63:
                raise MalformedDwarfError("ULEB128 too long", self.pos)

    def sleb(self):
        result = 0
        shift = 0
        while True:
            byte = self.u8()
            result |= (byte & 0x7F) << shift
            shift += 7
            if not byte & 0x80:
                if byte & 0x40 and shift < 64:
                    result -= 1 << shift
                return result
            if shift > 63:
                raise MalformedDwarfError("SLEB128 too long", self.pos)

    def cstr(self):
        end = self.data.find(b"\x00", self.pos)
        if end == -1:
            raise MalformedDwarfError("unterminated string", self.pos)
        out = self.data[self.pos : end].decode("utf-8", "replace")
        self.pos = end + 1
        return out


def _read_offset(r, is64):
    return r.u64() if is64 else r.u32()


def _read_form(r, form, is64, line_str, debug_str):
    if form == DW_FORM_string:
        return r.cstr()
    if form == DW_FORM_line_strp:
        return _str_at(line_str, _read_offset(r, is64), r.pos, ".debug_line_str")
    if form == DW_FORM_strp:
        return _str_at(debug_str, _read_offset(r, is64), r.pos, ".debug_str")
    if form == DW_FORM_udata:
        return r.uleb()
    if form == DW_FORM_data1:
        return r.u8()
    if form == DW_FORM_data2:
        return r.u16()
    if form == DW_FORM_data4:
        return r.u32()
    if form == DW_FORM_data8:
        return r.u64()
    if form == DW_FORM_data16:
        return r.bytes(16)
    if form == DW_FORM_block:
        return r.bytes(r.uleb())
    raise MalformedDwarfError(f"unsupported form 0x{form:x} in line header", r.pos)


def _str_at(blob, offset, pos, section):
    if blob is None:
        raise MalformedDwarfError(f"string reference but no {section} section", pos)
    end = blob.find(b"\x00", offset)
    if end == -1 or offset > len(blob):
        raise MalformedDwarfError(f"bad string offset 0x{offset:x} into {section}", pos)
    return blob[offset:end].decode("utf-8", "replace")


def _read_entry_table(r, is64, line_str, debug_str, unit_offset):
    format_count = r.u8()
    formats = [(r.uleb(), r.uleb()) for _ in range(format_count)]
    count = r.uleb()
    entries = []
    for _ in range(count):
        path = None
        dir_index = 0
        for content_type, form in formats:
            value = _read_form(r, form, is64, line_str, debug_str)
            if content_type == DW_LNCT_path:
                path = value
            elif content_type == DW_LNCT_directory_index:
                dir_index = value
        if path is None:
            raise MalformedDwarfError("table entry without a path", unit_offset)
        entries.append((path, dir_index))
    return entries


def decode_line_section(debug_line, line_str=None, debug_str=None):
    """Decode all units of a .debug_line section into LineProgram objects."""
    programs = []
    r = _Reader(debug_line)
    while r.pos < len(debug_line):
        programs.append(_decode_unit(r, line_str, debug_str))
    return programs


def _decode_unit(r, line_str, debug_str):
    unit_offset = r.pos
    unit_length = r.u32()
    is64 = False
    if unit_length == 0xFFFFFFFF:
        is64 = True
        unit_length = r.u64()
    elif unit_length >= 0xFFFFFFF0:
        raise MalformedDwarfError(f"reserved unit length 0x{unit_length:x}", unit_offset)
    unit_end = r.pos + unit_length
    if unit_end > len(r.data):
        raise MalformedDwarfError("unit length exceeds section", unit_offset)

    version = r.u16()
    if version < 2 or version > 5:
        raise MalformedDwarfError(f"unsupported DWARF line table version {version}", unit_offset)
    if version >= 5:
        r.u8()  # address_size
        seg_size = r.u8()
        if seg_size != 0:
            raise MalformedDwarfError("segmented addresses not supported", unit_offset)
    header_length = _read_offset(r, is64)
    program_start = r.pos + header_length
    min_inst_length = r.u8()
    max_ops = r.u8() if version >= 4 else 1
    if max_ops < 1:
        raise MalformedDwarfError("maximum_operations_per_instruction is zero", unit_offset)
    default_is_stmt = r.u8()
    line_base = r.s8()
    line_range = r.u8()
    if line_range == 0:
        raise MalformedDwarfError("line_range is zero", unit_offset)
    opcode_base = r.u8()
    std_opcode_lengths = [r.u8() for _ in range(max(opcode_base - 1, 0))]

    if version >= 5:
        dir_entries = _read_entry_table(r, is64, line_str, debug_str, unit_offset)
        directories = [name for name, _ in dir_entries]
        file_entries = _read_entry_table(r, is64, line_str, debug_str, unit_offset)
        zero_based = True
    else:
        directories = []
        while True:
            name = r.cstr()
            if not name:
                break
            directories.append(name)
        file_entries = []
        while True:
            name = r.cstr()
            if not name:
                break
            dir_index = r.uleb()
            r.uleb()  # mtime
            r.uleb()  # length
            file_entries.append((name, dir_index))
        zero_based = False

    if r.pos > program_start:
        raise MalformedDwarfError("line header overruns its declared length", unit_offset)
    r.pos = program_start

    program = LineProgram(unit_offset, version, directories, file_entries, [], zero_based)
    _run_state_machine(
        r, unit_end, program, min_inst_length, max_ops, default_is_stmt, line_base, line_range,
        opcode_base, std_opcode_lengths,
    )
    r.pos = unit_end
    return program


def _run_state_machine(
    r, unit_end, program, min_inst, max_ops, default_is_stmt, line_base, line_range,
    opcode_base, std_opcode_lengths,
):
    def fresh():
        return {"address": 0, "op_index": 0, "file": 1, "line": 1}

    state = fresh()

    def advance(op_advance):
        state["address"] += min_inst * ((state["op_index"] + op_advance) // max_ops)
        state["op_index"] = (state["op_index"] + op_advance) % max_ops

    rows = program.rows
    while r.pos < unit_end:
        opcode = r.u8()
        if opcode >= opcode_base:
            adjusted = opcode - opcode_base
            advance(adjusted // line_range)
            state["line"] += line_base + (adjusted % line_range)
            rows.append(Row(state["address"], state["file"], state["line"], False))
        elif opcode == 0:
            length = r.uleb()
            sub_end = r.pos + length
            if length == 0 or sub_end > unit_end:
                raise MalformedDwarfError("bad extended opcode length", r.pos)
            sub = r.u8()
            if sub == DW_LNE_end_sequence:
                rows.append(Row(state["address"], state["file"], state["line"], True))
                state = fresh()
            elif sub == DW_LNE_set_address:
                addr_bytes = r.bytes(sub_end - r.pos)
                state["address"] = int.from_bytes(addr_bytes, "little")
                state["op_index"] = 0
            elif sub == DW_LNE_define_file:
                name = r.cstr()
                dir_index = r.uleb()
                r.uleb()
                r.uleb()
                program.file_entries.append((name, dir_index))
            else:
                # set_discriminator and vendor extensions carry no row state we track
                r.pos = sub_end
            if r.pos != sub_end:
                r.pos = sub_end
        elif opcode == DW_LNS_copy:
            rows.append(Row(state["address"], state["file"], state["line"], False))
        elif opcode == DW_LNS_advance_pc:
            advance(r.uleb())
        elif opcode == DW_LNS_advance_line:
            state["line"] += r.sleb()
        elif opcode == DW_LNS_set_file:
            state["file"] = r.uleb()
        elif opcode == DW_LNS_set_column:
            r.uleb()
        elif opcode == DW_LNS_negate_stmt:
            pass
        elif opcode == DW_LNS_set_basic_block:
            pass
        elif opcode == DW_LNS_const_add_pc:
            advance((255 - opcode_base) // line_range)
        elif opcode == DW_LNS_fixed_advance_pc:
            state["address"] += r.u16()
            state["op_index"] = 0
        elif opcode in (DW_LNS_set_prologue_end, DW_LNS_set_epilogue_begin):
            pass
        elif opcode == DW_LNS_set_isa:
            r.uleb()
        else:
            # unknown standard opcode: skip its declared ULEB operands
            for _ in range(std_opcode_lengths[opcode - 1]):
                r.uleb()
