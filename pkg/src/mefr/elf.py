"""Minimal ELF reader: sections, symbol table, load segments.

Only what debug extraction needs; relocations, dynamic linking and
architecture-specific details are intentionally not modeled.
"""

import struct
from dataclasses import dataclass

from .errors import NotElfError

SHT_SYMTAB = 2
SHT_NOBITS = 8
PT_LOAD = 1
STT_FUNC = 2


@dataclass(frozen=True)
class Section:
    name: str
    sh_type: int
    offset: int
    size: int
    addr: int
    link: int
    entsize: int


@dataclass(frozen=True)
class Symbol:
    name: str
    value: int
    size: int
    info: int
    shndx: int

    @property
    def type(self):
        return self.info & 0xF


@dataclass(frozen=True)
class Segment:
    p_type: int
    vaddr: int
    filesz: int
    memsz: int


class ElfFile:
    def __init__(self, data, path="<bytes>"):
        self.path = path
        self._data = data
        if len(data) < 52 or data[:4] != b"\x7fELF":
            raise NotElfError(f"{path}: not an ELF file")
        ei_class, ei_data = data[4], data[5]
        if ei_class not in (1, 2) or ei_data not in (1, 2):
            raise NotElfError(f"{path}: unsupported ELF class/encoding")
        self.is64 = ei_class == 2
        self.end = "<" if ei_data == 1 else ">"

        if self.is64:
            (
                self.e_type,
                self.e_machine,
                _version,
                self.e_entry,
                e_phoff,
                e_shoff,
                _flags,
                _ehsize,
                e_phentsize,
                e_phnum,
                e_shentsize,
                e_shnum,
                e_shstrndx,
            ) = struct.unpack_from(self.end + "HHIQQQIHHHHHH", data, 16)
        else:
            (
                self.e_type,
                self.e_machine,
                _version,
                self.e_entry,
                e_phoff,
                e_shoff,
                _flags,
                _ehsize,
                e_phentsize,
                e_phnum,
                e_shentsize,
                e_shnum,
                e_shstrndx,
            ) = struct.unpack_from(self.end + "HHIIIIIHHHHHH", data, 16)

        self.segments = []
        for i in range(e_phnum):
            off = e_phoff + i * e_phentsize
            if self.is64:
                p_type, _fl, p_offset, p_vaddr, _pa, p_filesz, p_memsz, _al = struct.unpack_from(
                    self.end + "IIQQQQQQ", data, off
                )
            else:
                p_type, p_offset, p_vaddr, _pa, p_filesz, p_memsz, _fl, _al = struct.unpack_from(
                    self.end + "IIIIIIII", data, off
                )
            self.segments.append(Segment(p_type, p_vaddr, p_filesz, p_memsz))

        raw_sections = []
        for i in range(e_shnum):
            off = e_shoff + i * e_shentsize
            if self.is64:
                sh_name, sh_type, _fl, sh_addr, sh_offset, sh_size, sh_link, _info, _al, sh_entsize = (
                    struct.unpack_from(self.end + "IIQQQQIIQQ", data, off)
                )
            else:
                sh_name, sh_type, _fl, sh_addr, sh_offset, sh_size, sh_link, _info, _al, sh_entsize = (
                    struct.unpack_from(self.end + "IIIIIIIIII", data, off)
                )
            raw_sections.append((sh_name, sh_type, sh_offset, sh_size, sh_addr, sh_link, sh_entsize))

        self.sections = []
        if raw_sections:
            str_off, _t, str_foff, str_size, *_rest = (
                raw_sections[e_shstrndx][0],
                raw_sections[e_shstrndx][1],
                raw_sections[e_shstrndx][2],
                raw_sections[e_shstrndx][3],
            )
            shstr = data[str_foff : str_foff + str_size]
            for sh_name, sh_type, sh_offset, sh_size, sh_addr, sh_link, sh_entsize in raw_sections:
                self.sections.append(
                    Section(_cstr(shstr, sh_name), sh_type, sh_offset, sh_size, sh_addr, sh_link, sh_entsize)
                )

    @classmethod
    def from_path(cls, path):
        try:
            with open(path, "rb") as f:
                data = f.read()
        except IsADirectoryError:
            raise NotElfError(f"{path}: not an ELF file") from None
        return cls(data, path=str(path))

    def section(self, name):
        for s in self.sections:
            if s.name == name:
                return s
        return None

    def section_data(self, section):
        if section.sh_type == SHT_NOBITS:
            return b""
        return self._data[section.offset : section.offset + section.size]

    def symbols(self):
        """Symbols of .symtab in table order, or None if there is no symtab."""
        symtab = None
        for s in self.sections:
            if s.sh_type == SHT_SYMTAB:
                symtab = s
                break
        if symtab is None:
            return None
        strtab = self.sections[symtab.link]
        names = self.section_data(strtab)
        data = self.section_data(symtab)
        entsize = symtab.entsize or (24 if self.is64 else 16)
        out = []
        for off in range(0, len(data) - entsize + 1, entsize):
            if self.is64:
                st_name, st_info, _other, st_shndx, st_value, st_size = struct.unpack_from(
                    self.end + "IBBHQQ", data, off
                )
            else:
                st_name, st_value, st_size, st_info, _other, st_shndx = struct.unpack_from(
                    self.end + "IIIBBH", data, off
                )
            out.append(Symbol(_cstr(names, st_name), st_value, st_size, st_info, st_shndx))
        return out

    def load_segments(self):
        return [s for s in self.segments if s.p_type == PT_LOAD]


def _cstr(blob, offset):
    end = blob.find(b"\x00", offset)
    if end == -1:
        end = len(blob)
    return blob[offset:end].decode("utf-8", "replace")
