"""Code classes, the first-byte prefix table and argument lookup tables.

Default first-byte map (bit 7 first)::

    1xxxxxxx    FULL    4 bytes, the full-length container
    010 rr mmm  S_LW    reg table 4, imm table 8
    011 rrr mm  S_ADDIU reg table 8, imm table 4
    0001 rr mm  S_SW
    0010 rr mm  S_SLL   (imm table holds shift amounts)
    0011 rrrr   S_ADDU  16 register triples
    000010 rr   S_BEQ   + signed 8-bit byte displacement
    000011 rr   S_BNE   + signed 8-bit byte displacement
    000001 ff   MID24   + rs(5) rt(5) imm(6), f selects ADDIU/LW/SW
    00000000    PAD
    000000{01,1x}       illegal

The split between register-index and immediate-index bits of the one-byte
classes is configurable through :class:`Layout`; the prefixes are not.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from types import MappingProxyType

from .isa import FIELDS, Instruction, Opcode


class SchemeError(ValueError):
    pass


class CodeClass(enum.Enum):
    FULL = "FULL"
    S_LW = "S_LW"
    S_ADDIU = "S_ADDIU"
    S_SW = "S_SW"
    S_SLL = "S_SLL"
    S_ADDU = "S_ADDU"
    S_BEQ = "S_BEQ"
    S_BNE = "S_BNE"
    MID24 = "MID24"
    PAD = "PAD"


LENGTH = {
    CodeClass.FULL: 4,
    CodeClass.S_LW: 1,
    CodeClass.S_ADDIU: 1,
    CodeClass.S_SW: 1,
    CodeClass.S_SLL: 1,
    CodeClass.S_ADDU: 1,
    CodeClass.S_BEQ: 2,
    CodeClass.S_BNE: 2,
    CodeClass.MID24: 3,
    CodeClass.PAD: 1,
}

SHORT_CLASS = {
    Opcode.LW: CodeClass.S_LW,
    Opcode.ADDIU: CodeClass.S_ADDIU,
    Opcode.SW: CodeClass.S_SW,
    Opcode.SLL: CodeClass.S_SLL,
    Opcode.ADDU: CodeClass.S_ADDU,
    Opcode.BEQ: CodeClass.S_BEQ,
    Opcode.BNE: CodeClass.S_BNE,
}
SHORT_OPCODE = {c: op for op, c in SHORT_CLASS.items()}
SHORT_CLASSES = tuple(SHORT_CLASS.values())

# classes whose 8-bit code holds both index fields; their split is configurable
BYTE_CLASSES = (CodeClass.S_LW, CodeClass.S_ADDIU, CodeClass.S_SW, CodeClass.S_SLL, CodeClass.S_ADDU)
BRANCH_CLASSES = (CodeClass.S_BEQ, CodeClass.S_BNE)

PREFIX = {
    CodeClass.FULL: "1",
    CodeClass.S_LW: "010",
    CodeClass.S_ADDIU: "011",
    CodeClass.S_SW: "0001",
    CodeClass.S_SLL: "0010",
    CodeClass.S_ADDU: "0011",
    CodeClass.S_BEQ: "000010",
    CodeClass.S_BNE: "000011",
    CodeClass.MID24: "000001",
    CodeClass.PAD: "00000000",
}
ILLEGAL_PREFIXES = ("00000001", "0000001")

MID24_FORMATS = (Opcode.ADDIU, Opcode.LW, Opcode.SW)  # f = 3 reserved


def reg_args(instr: Instruction) -> tuple[int, ...]:
    """Register operands in canonical order, e.g. (rt, rs) for LW, (rd, rs, rt) for ADDU."""
    return tuple(getattr(instr, f) for f in FIELDS[instr.opcode] if f in ("rs", "rt", "rd"))


def imm_arg(instr: Instruction) -> int | None:
    """The immediate-like argument (imm, or shamt for SLL); None if the format has none."""
    f = FIELDS[instr.opcode]
    if "imm" in f:
        return instr.imm
    if "shamt" in f:
        return instr.shamt
    return None


def lut_imm(instr: Instruction) -> int | None:
    """Immediate that a short code must find in an immediate LUT (None for ADDU and branches)."""
    if instr.opcode in (Opcode.LW, Opcode.SW, Opcode.ADDIU, Opcode.SLL):
        return imm_arg(instr)
    return None


def pack_regs(regs: tuple[int, ...]) -> int:
    v = 0
    for r in regs:
        v = v * 32 + r
    return v


@dataclass(frozen=True)
class Layout:
    """Register-index / immediate-index bit split of each short class."""

    widths: MappingProxyType = field(default_factory=lambda: MappingProxyType({
        CodeClass.S_LW: (2, 3),
        CodeClass.S_ADDIU: (3, 2),
        CodeClass.S_SW: (2, 2),
        CodeClass.S_SLL: (2, 2),
        CodeClass.S_ADDU: (4, 0),
        CodeClass.S_BEQ: (2, 0),
        CodeClass.S_BNE: (2, 0),
    }))

    def __post_init__(self):
        w = dict(self.widths)
        for cls in SHORT_CLASSES:
            if cls not in w:
                raise SchemeError(f"layout missing widths for {cls.value}")
            reg, imm = w[cls]
            if reg < 0 or imm < 0:
                raise SchemeError(f"{cls.value}: negative field width")
            if cls is CodeClass.S_ADDU and imm:
                raise SchemeError("S_ADDU has no immediate table")
            if cls in BRANCH_CLASSES and (reg, imm) != (2, 0):
                raise SchemeError(f"{cls.value}: branch codes are fixed at 2 register-index bits")
            if len(PREFIX[cls]) + reg + imm != 8:
                raise SchemeError(
                    f"{cls.value}: prefix {PREFIX[cls]} + {reg} + {imm} bits does not fill one byte")
        object.__setattr__(self, "widths", MappingProxyType(w))

    def reg_bits(self, cls: CodeClass) -> int:
        return self.widths[cls][0]

    def imm_bits(self, cls: CodeClass) -> int:
        return self.widths[cls][1]

    def reg_capacity(self, cls: CodeClass) -> int:
        return 1 << self.reg_bits(cls)

    def imm_capacity(self, cls: CodeClass) -> int:
        return 1 << self.imm_bits(cls) if cls in (CodeClass.S_LW, CodeClass.S_ADDIU,
                                                   CodeClass.S_SW, CodeClass.S_SLL) else 0

    @classmethod
    def from_bits(cls, **kw) -> "Layout":
        """Build from keys like ``lw_reg_bits=3, lw_imm_bits=2``."""
        widths = dict(cls().widths)
        for key, value in kw.items():
            name, _, kind = key.rpartition("_bits")[0].rpartition("_")
            try:
                code = CodeClass("S_" + name.upper())
            except ValueError:
                raise SchemeError(f"unknown layout key {key!r}") from None
            reg, imm = widths[code]
            if kind == "reg":
                reg = int(value)
            elif kind == "imm":
                imm = int(value)
            else:
                raise SchemeError(f"unknown layout key {key!r}")
            widths[code] = (reg, imm)
        return cls(MappingProxyType(widths))

    def as_dict(self) -> dict[str, int]:
        out = {}
        for code in BYTE_CLASSES:
            base = code.value[2:].lower()
            out[f"{base}_reg_bits"] = self.reg_bits(code)
            out[f"{base}_imm_bits"] = self.imm_bits(code)
        return out


@dataclass(frozen=True)
class PrefixEntry:
    pattern: str
    code_class: CodeClass | None  # None marks an illegal pattern
    length: int

    def matches(self, byte: int) -> bool:
        bits = format(byte, "08b")
        return bits.startswith(self.pattern)


def prefix_table() -> tuple[PrefixEntry, ...]:
    rows = [PrefixEntry(PREFIX[c], c, LENGTH[c]) for c in CodeClass]
    rows += [PrefixEntry(p, None, 0) for p in ILLEGAL_PREFIXES]
    return tuple(rows)


def check_prefix_free(table) -> None:
    pats = [e.pattern for e in table]
    for i, a in enumerate(pats):
        for j, b in enumerate(pats):
            if i != j and b.startswith(a):
                raise SchemeError(f"prefix {a!r} is a prefix of {b!r}")


def _classify_table(table) -> tuple:
    out = []
    for b in range(256):
        hits = [e for e in table if e.matches(b)]
        if len(hits) != 1:
            raise SchemeError(f"first byte {b:#04x} matches {len(hits)} patterns")
        out.append(hits[0])
    return tuple(out)


@dataclass(frozen=True)
class Lut:
    reg_table: tuple[tuple[int, ...], ...]
    imm_table: tuple[int, ...]
    reg_capacity: int
    imm_capacity: int

    def __post_init__(self):
        if len(self.reg_table) > self.reg_capacity or len(self.imm_table) > self.imm_capacity:
            raise SchemeError("lookup table exceeds its capacity")
        if len(set(self.reg_table)) != len(self.reg_table) or len(set(self.imm_table)) != len(self.imm_table):
            raise SchemeError("duplicate lookup table entry")


class LutSet(dict):
    """Mapping CodeClass -> Lut for every short class."""

    @classmethod
    def empty(cls, layout: Layout) -> "LutSet":
        return cls({c: Lut((), (), layout.reg_capacity(c), layout.imm_capacity(c)) for c in SHORT_CLASSES})


class EncodingScheme:
    """Prefix table, layout and argument LUTs; immutable once built."""

    def __init__(self, layout: Layout | None = None, luts: LutSet | None = None):
        self.layout = layout or Layout()
        self.luts = luts if luts is not None else LutSet.empty(self.layout)
        for c in SHORT_CLASSES:
            lut = self.luts[c]
            if (lut.reg_capacity, lut.imm_capacity) != (self.layout.reg_capacity(c), self.layout.imm_capacity(c)):
                raise SchemeError(f"{c.value}: LUT capacity does not match layout")
        self.prefix_table = prefix_table()
        check_prefix_free(self.prefix_table)
        self._by_byte = _classify_table(self.prefix_table)
        self._reg_index = {c: {t: i for i, t in enumerate(self.luts[c].reg_table)} for c in SHORT_CLASSES}
        self._imm_index = {c: {v: i for i, v in enumerate(self.luts[c].imm_table)} for c in SHORT_CLASSES}

    def __eq__(self, other):
        return (isinstance(other, EncodingScheme) and self.layout == other.layout
                and dict(self.luts) == dict(other.luts))

    def __hash__(self):
        return hash((tuple(sorted(self.layout.widths.items(), key=lambda kv: kv[0].value)),
                     tuple(self.luts[c] for c in SHORT_CLASSES)))

    def classify(self, byte: int) -> PrefixEntry:
        return self._by_byte[byte]

    def reg_index(self, cls: CodeClass, regs: tuple[int, ...]) -> int | None:
        return self._reg_index[cls].get(regs)

    def imm_index(self, cls: CodeClass, value: int) -> int | None:
        return self._imm_index[cls].get(value)

    def lut_resident(self, instr: Instruction) -> bool:
        """Register combination (and LUT immediate, if any) both present."""
        cls = SHORT_CLASS.get(instr.opcode)
        if cls is None or self.reg_index(cls, reg_args(instr)) is None:
            return False
        imm = lut_imm(instr)
        return imm is None or self.imm_index(cls, imm) is not None

    def dump(self) -> str:
        """Human-readable LUT listing with stable ordering."""
        lines = []
        for c in SHORT_CLASSES:
            lut = self.luts[c]
            lines.append(f"{c.value} prefix={PREFIX[c]} reg_bits={self.layout.reg_bits(c)} "
                         f"imm_bits={self.layout.imm_bits(c)}")
            for i in range(lut.reg_capacity):
                entry = ",".join(f"r{r}" for r in lut.reg_table[i]) if i < len(lut.reg_table) else "-"
                lines.append(f"  reg[{i}] {entry}")
            for i in range(lut.imm_capacity):
                entry = str(lut.imm_table[i]) if i < len(lut.imm_table) else "-"
                lines.append(f"  imm[{i}] {entry}")
        return "\n".join(lines) + "\n"
