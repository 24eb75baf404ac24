"""MIPS-style instruction subset, assembly text form and the 32-bit container.

Full-length container layout (bit 31 is always 1, leaving the ``0xxxxxxx``
first-byte space free for short codes)::

    31    30..26   25..21  20..16  15..11  10..6   5..0
    1     opcode   rs      rt      rd      shamt   0        R-type
    1     opcode   rs      rt      imm16 ------------       I-type
    1     opcode   target26 ---------------------------     J-type

Control-flow fields are kept position independent: BEQ/BNE ``imm`` is a
signed offset in instructions relative to the following instruction, J
``jump_target`` is an absolute instruction index and JR jumps to the
instruction index held in ``rs``.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass


class IsaError(ValueError):
    """Base class for encoding, decoding and parsing failures."""


class EncodeError(IsaError):
    pass


class DecodeError(IsaError):
    pass


class NotFullWordError(DecodeError):
    pass


class AsmError(IsaError):
    def __init__(self, msg: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        where = ""
        if line is not None:
            where = f"line {line}"
            if col is not None:
                where += f", col {col}"
            where += ": "
        super().__init__(where + msg)


class Opcode(enum.IntEnum):
    NOP = 0
    LW = 1
    SW = 2
    ADDIU = 3
    ADDU = 4
    SLL = 5
    BEQ = 6
    BNE = 7
    LUI = 8
    ORI = 9
    SLT = 10
    J = 11
    JR = 12
    HALT = 13


class Fmt(enum.Enum):
    R = "R"
    I = "I"
    J = "J"
    NONE = "-"


# fields each opcode actually uses; everything else must be zero
FIELDS: dict[Opcode, tuple[str, ...]] = {
    Opcode.NOP: (),
    Opcode.HALT: (),
    Opcode.LW: ("rt", "rs", "imm"),
    Opcode.SW: ("rt", "rs", "imm"),
    Opcode.ADDIU: ("rt", "rs", "imm"),
    Opcode.ORI: ("rt", "rs", "imm"),
    Opcode.LUI: ("rt", "imm"),
    Opcode.BEQ: ("rs", "rt", "imm"),
    Opcode.BNE: ("rs", "rt", "imm"),
    Opcode.ADDU: ("rd", "rs", "rt"),
    Opcode.SLT: ("rd", "rs", "rt"),
    Opcode.SLL: ("rd", "rt", "shamt"),
    Opcode.JR: ("rs",),
    Opcode.J: ("jump_target",),
}

FORMAT: dict[Opcode, Fmt] = {
    op: (Fmt.J if "jump_target" in f
         else Fmt.I if "imm" in f
         else Fmt.R if f else Fmt.NONE)
    for op, f in FIELDS.items()
}

BRANCHES = frozenset({Opcode.BEQ, Opcode.BNE})
CONTROL = frozenset({Opcode.BEQ, Opcode.BNE, Opcode.J, Opcode.JR})

_WIDTH = {"rs": 5, "rt": 5, "rd": 5, "shamt": 5, "jump_target": 26}


@dataclass(frozen=True)
class Instruction:
    opcode: Opcode
    rs: int = 0
    rt: int = 0
    rd: int = 0
    shamt: int = 0
    imm: int = 0
    jump_target: int = 0

    def __post_init__(self):
        object.__setattr__(self, "opcode", Opcode(self.opcode))
        validate(self)

    @property
    def mnemonic(self) -> str:
        return self.opcode.name

    @property
    def is_control(self) -> bool:
        return self.opcode in CONTROL

    def __str__(self) -> str:
        return format_asm(self)


def validate(instr: Instruction) -> None:
    used = FIELDS[instr.opcode]
    for name in ("rs", "rt", "rd", "shamt", "imm", "jump_target"):
        value = getattr(instr, name)
        if name not in used:
            if value != 0:
                raise EncodeError(f"{instr.opcode.name}: field {name} must be 0, got {value}")
            continue
        if name == "imm":
            if not -0x8000 <= value <= 0x7FFF:
                raise EncodeError(f"{instr.opcode.name}: imm {value} outside signed 16-bit range")
        elif not 0 <= value < (1 << _WIDTH[name]):
            raise EncodeError(f"{instr.opcode.name}: {name} {value} outside {_WIDTH[name]}-bit range")


def encode_full(instr: Instruction) -> int:
    """Pack ``instr`` into its 32-bit full-length word (marker bit set)."""
    validate(instr)
    word = 0x80000000 | (int(instr.opcode) << 26)
    fmt = FORMAT[instr.opcode]
    if fmt is Fmt.R:
        word |= instr.rs << 21 | instr.rt << 16 | instr.rd << 11 | instr.shamt << 6
    elif fmt is Fmt.I:
        word |= instr.rs << 21 | instr.rt << 16 | (instr.imm & 0xFFFF)
    elif fmt is Fmt.J:
        word |= instr.jump_target
    return word


def decode_full(word: int) -> Instruction:
    if not 0 <= word <= 0xFFFFFFFF:
        raise DecodeError(f"word {word:#x} is not 32 bits")
    if not word & 0x80000000:
        raise NotFullWordError(f"word {word:#010x} has bit 31 clear")
    op_id = (word >> 26) & 0x1F
    try:
        op = Opcode(op_id)
    except ValueError:
        raise DecodeError(f"unknown opcode id {op_id} in word {word:#010x}") from None
    fmt = FORMAT[op]
    used = FIELDS[op]
    raw = {
        "rs": (word >> 21) & 0x1F,
        "rt": (word >> 16) & 0x1F,
        "rd": (word >> 11) & 0x1F,
        "shamt": (word >> 6) & 0x1F,
    }
    if fmt is Fmt.J:
        return Instruction(op, jump_target=word & 0x3FFFFFF)
    if fmt is Fmt.I:
        imm = word & 0xFFFF
        if imm & 0x8000:
            imm -= 0x10000
        extra = {k: raw[k] for k in ("rs", "rt") if k not in used and raw[k]}
        if extra:
            raise DecodeError(f"{op.name}: nonzero unused fields {extra} in {word:#010x}")
        return Instruction(op, imm=imm, **{k: raw[k] for k in ("rs", "rt") if k in used})
    # R-type and operand-less
    if word & 0x3F:
        raise DecodeError(f"{op.name}: nonzero low bits in {word:#010x}")
    extra = {k: v for k, v in raw.items() if k not in used and v}
    if extra:
        raise DecodeError(f"{op.name}: nonzero unused fields {extra} in {word:#010x}")
    return Instruction(op, **{k: raw[k] for k in used})


# ---------------------------------------------------------------------------
# assembly text
# ---------------------------------------------------------------------------

_REG = re.compile(r"r(\d+)$")
_MEM = re.compile(r"(.+)\((.+)\)$")
_LABEL = re.compile(r"[A-Za-z_.][\w.]*$")


def format_asm(instr: Instruction) -> str:
    op = instr.opcode
    n = op.name
    if op in (Opcode.NOP, Opcode.HALT):
        return n
    if op in (Opcode.LW, Opcode.SW):
        return f"{n} r{instr.rt}, {instr.imm}(r{instr.rs})"
    if op in (Opcode.ADDIU, Opcode.ORI):
        return f"{n} r{instr.rt}, r{instr.rs}, {instr.imm}"
    if op is Opcode.LUI:
        return f"{n} r{instr.rt}, {instr.imm}"
    if op in BRANCHES:
        return f"{n} r{instr.rs}, r{instr.rt}, {instr.imm}"
    if op in (Opcode.ADDU, Opcode.SLT):
        return f"{n} r{instr.rd}, r{instr.rs}, r{instr.rt}"
    if op is Opcode.SLL:
        return f"{n} r{instr.rd}, r{instr.rt}, {instr.shamt}"
    if op is Opcode.JR:
        return f"{n} r{instr.rs}"
    return f"{n} {instr.jump_target}"


def _split_operands(text: str) -> list[str]:
    text = text.strip()
    if not text:
        return []
    return [p.strip() for p in text.split(",")]


def parse_asm(text: str, labels: dict[str, int] | None = None, index: int = 0,
              line: int | None = None) -> Instruction:
    """Parse one instruction.

    Branch and jump operands may be numbers or label names; labels are looked
    up in ``labels`` (name -> instruction index) and branch offsets are made
    relative to ``index + 1``.
    """
    code = text.split("#", 1)[0].rstrip()
    stripped = code.lstrip()
    col0 = len(code) - len(stripped) + 1
    if not stripped:
        raise AsmError("empty instruction", line, col0)
    parts = stripped.split(None, 1)
    name = parts[0].upper()
    try:
        op = Opcode[name]
    except KeyError:
        raise AsmError(f"unknown mnemonic {parts[0]!r}", line, col0) from None
    ops = _split_operands(parts[1] if len(parts) > 1 else "")
    opcol = col0 + len(parts[0]) + 1

    def need(k):
        if len(ops) != k:
            raise AsmError(f"{name} expects {k} operand(s), got {len(ops)}", line, opcol)

    def reg(s):
        m = _REG.match(s.strip().lower())
        if not m:
            raise AsmError(f"expected register, got {s!r}", line, opcol)
        r = int(m.group(1))
        if r > 31:
            raise AsmError(f"register index {r} out of range 0-31", line, opcol)
        return r

    def num(s):
        try:
            return int(s.strip(), 0)
        except ValueError:
            raise AsmError(f"expected integer, got {s!r}", line, opcol) from None

    def target(s):
        s = s.strip()
        if _LABEL.match(s) and not _REG.match(s.lower()):
            if labels is None or s not in labels:
                raise AsmError(f"unknown label {s!r}", line, opcol)
            return labels[s]
        return None

    try:
        if op in (Opcode.NOP, Opcode.HALT):
            need(0)
            return Instruction(op)
        if op in (Opcode.LW, Opcode.SW):
            need(2)
            m = _MEM.match(ops[1])
            if not m:
                raise AsmError(f"expected imm(reg), got {ops[1]!r}", line, opcol)
            return Instruction(op, rt=reg(ops[0]), rs=reg(m.group(2)), imm=num(m.group(1)))
        if op in (Opcode.ADDIU, Opcode.ORI):
            need(3)
            return Instruction(op, rt=reg(ops[0]), rs=reg(ops[1]), imm=num(ops[2]))
        if op is Opcode.LUI:
            need(2)
            return Instruction(op, rt=reg(ops[0]), imm=num(ops[1]))
        if op in BRANCHES:
            need(3)
            t = target(ops[2])
            off = num(ops[2]) if t is None else t - (index + 1)
            return Instruction(op, rs=reg(ops[0]), rt=reg(ops[1]), imm=off)
        if op in (Opcode.ADDU, Opcode.SLT):
            need(3)
            return Instruction(op, rd=reg(ops[0]), rs=reg(ops[1]), rt=reg(ops[2]))
        if op is Opcode.SLL:
            need(3)
            return Instruction(op, rd=reg(ops[0]), rt=reg(ops[1]), shamt=num(ops[2]))
        if op is Opcode.JR:
            need(1)
            return Instruction(op, rs=reg(ops[0]))
        need(1)
        t = target(ops[0])
        return Instruction(op, jump_target=num(ops[0]) if t is None else t)
    except AsmError:
        raise
    except EncodeError as e:
        raise AsmError(str(e), line, opcol) from None


@dataclass(frozen=True)
class Program:
    instrs: tuple[Instruction, ...]
    labels: dict[str, int]

    def __len__(self):
        return len(self.instrs)

    def __iter__(self):
        return iter(self.instrs)

    def __getitem__(self, i):
        return self.instrs[i]


def assemble(text: str) -> Program:
    """Two-pass assembly of a whole source file."""
    labels: dict[str, int] = {}
    pending: list[tuple[int, str]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        code = raw.split("#", 1)[0].strip()
        while code:
            head, sep, rest = code.partition(":")
            if not sep or not _LABEL.match(head.strip()):
                break
            name = head.strip()
            if name in labels:
                raise AsmError(f"duplicate label {name!r}", lineno, 1)
            labels[name] = len(pending)
            code = rest.strip()
        if code:
            pending.append((lineno, code))
    instrs = [parse_asm(code, labels, i, line=lineno) for i, (lineno, code) in enumerate(pending)]
    return Program(tuple(instrs), labels)


def to_program(instrs) -> Program:
    if isinstance(instrs, Program):
        return instrs
    return Program(tuple(instrs), {})


def disassemble(prog) -> str:
    return "".join(format_asm(i) + "\n" for i in prog)
