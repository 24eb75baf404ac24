"""Variable-length compression of instruction sequences.

Images are sequences of aligned 4-byte chunks. Each code is classified by its
first byte alone; multi-byte codes keep that byte at the lowest address and
FULL words are stored most significant byte first, so a FULL code's first
byte always has bit 7 set.

Control-flow operands inside an image are byte based: BEQ/BNE carry a signed
displacement from the address just past the branch, J carries the absolute
byte address of its target.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field

from .isa import BRANCHES, CONTROL, EncodeError, Instruction, Opcode, decode_full, encode_full, to_program
from .scheme import (
    BRANCH_CLASSES,
    LENGTH,
    MID24_FORMATS,
    PREFIX,
    SHORT_CLASS,
    SHORT_CLASSES,
    SHORT_OPCODE,
    CodeClass,
    EncodingScheme,
    Layout,
    Lut,
    LutSet,
    SchemeError,
    lut_imm,
    reg_args,
)

CHUNK = 4


class CodecError(ValueError):
    pass


class CompressError(CodecError):
    pass


class CorruptImageError(CodecError):
    pass


class IllegalByteError(CorruptImageError):
    def __init__(self, byte: int, addr: int | None = None):
        self.byte = byte
        at = "" if addr is None else f" at {addr:#x}"
        super().__init__(f"illegal first byte {byte:#04x}{at}")


def first_byte_length(b: int, scheme: EncodingScheme) -> tuple[int, CodeClass]:
    entry = scheme.classify(b)
    if entry.code_class is None:
        raise IllegalByteError(b)
    return entry.length, entry.code_class


def _sext(v: int, bits: int) -> int:
    return v - (1 << bits) if v & (1 << (bits - 1)) else v


@dataclass(frozen=True)
class Code:
    """One decoded code with its raw (byte-addressed) control operands."""

    addr: int
    code_class: CodeClass
    length: int
    instr: Instruction | None  # None for PAD

    @property
    def end(self) -> int:
        return self.addr + self.length


def decode_code(data, pos: int, scheme: EncodingScheme, addr: int | None = None) -> Code:
    """Decode the code whose first byte is ``data[pos]``.

    Branch immediates stay as byte displacements and J targets as byte
    addresses; :func:`decompress` maps them back to instruction indices.
    """
    addr = pos if addr is None else addr
    b0 = data[pos]
    entry = scheme.classify(b0)
    cls = entry.code_class
    if cls is None:
        raise IllegalByteError(b0, addr)
    n = entry.length
    if pos + n > len(data):
        raise CorruptImageError(f"{cls.value} code at {addr:#x} truncated ({len(data) - pos} of {n} bytes)")
    if cls is CodeClass.PAD:
        return Code(addr, cls, 1, None)
    if cls is CodeClass.FULL:
        word = int.from_bytes(bytes(data[pos:pos + 4]), "big")
        try:
            return Code(addr, cls, 4, decode_full(word))
        except ValueError as e:
            raise CorruptImageError(f"bad full word at {addr:#x}: {e}") from None
    if cls is CodeClass.MID24:
        f = b0 & 0x3
        if f >= len(MID24_FORMATS):
            raise CorruptImageError(f"reserved MID24 format {f} at {addr:#x}")
        payload = data[pos + 1] << 8 | data[pos + 2]
        ins = Instruction(MID24_FORMATS[f], rs=payload >> 11, rt=(payload >> 6) & 0x1F,
                          imm=_sext(payload & 0x3F, 6))
        return Code(addr, cls, 3, ins)
    op = SHORT_OPCODE[cls]
    lut = scheme.luts[cls]
    imm = None
    if cls in BRANCH_CLASSES:
        ri, imm = b0 & 0x3, _sext(data[pos + 1], 8)
    else:
        ib = scheme.layout.imm_bits(cls)
        ri = (b0 >> ib) & ((1 << scheme.layout.reg_bits(cls)) - 1)
        if lut.imm_capacity:
            ii = b0 & ((1 << ib) - 1)
            if ii >= len(lut.imm_table):
                raise CorruptImageError(f"{cls.value} at {addr:#x}: immediate LUT index {ii} is unused")
            imm = lut.imm_table[ii]
    if ri >= len(lut.reg_table):
        raise CorruptImageError(f"{cls.value} at {addr:#x}: register LUT index {ri} is unused")
    regs = lut.reg_table[ri]
    ins = _rebuild(op, regs, imm)
    return Code(addr, cls, n, ins)


def _rebuild(op: Opcode, regs: tuple[int, ...], imm: int | None) -> Instruction:
    if op in (Opcode.LW, Opcode.SW, Opcode.ADDIU):
        return Instruction(op, rt=regs[0], rs=regs[1], imm=imm)
    if op is Opcode.SLL:
        return Instruction(op, rd=regs[0], rt=regs[1], shamt=imm)
    if op is Opcode.ADDU:
        return Instruction(op, rd=regs[0], rs=regs[1], rt=regs[2])
    return Instruction(op, rs=regs[0], rt=regs[1], imm=imm)


@dataclass(frozen=True)
class CompressedImage:
    data: bytes
    addr_map: tuple[int, ...]
    scheme: EncodingScheme
    entry: int = 0
    classes: tuple[CodeClass, ...] = field(default=(), compare=False)

    @property
    def chunk_count(self) -> int:
        return len(self.data) // CHUNK

    def index_of(self) -> dict[int, int]:
        return {a: i for i, a in enumerate(self.addr_map)}


def _fits(v: int, bits: int) -> bool:
    return -(1 << (bits - 1)) <= v < (1 << (bits - 1))


def _static_class(ins: Instruction, scheme: EncodingScheme) -> CodeClass:
    cls = SHORT_CLASS.get(ins.opcode)
    if cls is not None and scheme.lut_resident(ins):
        return cls
    if ins.opcode in MID24_FORMATS and _fits(ins.imm, 6):
        return CodeClass.MID24
    return CodeClass.FULL


def _control_target(i: int, ins: Instruction, n: int) -> int | None:
    if ins.opcode in BRANCHES:
        t = i + 1 + ins.imm
    elif ins.opcode is Opcode.J:
        t = ins.jump_target
    else:
        return None
    if not 0 <= t < n:
        raise CompressError(f"instruction {i} ({ins}) targets index {t} outside the program")
    return t


def _assign(lengths, control):
    """Addresses after PAD insertion; returns (addrs, pads_before, end)."""
    addrs = [0] * len(lengths)
    pads = [0] * len(lengths)
    addr = 0
    last_branch_chunk = -1
    for i, n in enumerate(lengths):
        if control[i]:
            if addr // CHUNK == last_branch_chunk:
                pads[i] = CHUNK - addr % CHUNK
                addr += pads[i]
            last_branch_chunk = addr // CHUNK
        addrs[i] = addr
        addr += n
    return addrs, pads, addr


def compress(program, scheme: EncodingScheme) -> CompressedImage:
    """Emit every instruction in its shortest legal code.

    Short branches whose displacement no longer fits are widened to FULL and
    the layout recomputed until nothing changes; widening is one-way so the
    loop terminates.
    """
    instrs = list(to_program(program))
    n = len(instrs)
    targets = [_control_target(i, ins, n) for i, ins in enumerate(instrs)]
    classes = [_static_class(ins, scheme) for ins in instrs]
    control = [ins.opcode in CONTROL for ins in instrs]

    while True:
        addrs, pads, end = _assign([LENGTH[c] for c in classes], control)
        changed = False
        for i, cls in enumerate(classes):
            if cls in BRANCH_CLASSES:
                disp = addrs[targets[i]] - (addrs[i] + 2)
                if not _fits(disp, 8):
                    classes[i] = CodeClass.FULL
                    changed = True
        if not changed:
            break

    out = bytearray()
    for i, ins in enumerate(instrs):
        out += bytes(pads[i])
        out += _emit(ins, classes[i], scheme, addrs, targets[i], addrs[i])
    out += bytes(-len(out) % CHUNK)
    return CompressedImage(bytes(out), tuple(addrs), scheme, 0, tuple(classes))


def _emit(ins: Instruction, cls: CodeClass, scheme: EncodingScheme, addrs, target, addr) -> bytes:
    if cls is CodeClass.FULL:
        if ins.opcode in BRANCHES:
            disp = addrs[target] - (addr + 4)
            if not _fits(disp, 16):
                raise CompressError(f"branch at {addr:#x}: displacement {disp} overflows 16 bits")
            ins = Instruction(ins.opcode, rs=ins.rs, rt=ins.rt, imm=disp)
        elif ins.opcode is Opcode.J:
            try:
                ins = Instruction(Opcode.J, jump_target=addrs[target])
            except EncodeError as e:
                raise CompressError(str(e)) from None
        return encode_full(ins).to_bytes(4, "big")
    if cls is CodeClass.MID24:
        f = MID24_FORMATS.index(ins.opcode)
        payload = ins.rs << 11 | ins.rt << 6 | (ins.imm & 0x3F)
        return bytes([0b00000100 | f, payload >> 8, payload & 0xFF])
    prefix = int(PREFIX[cls], 2) << (8 - len(PREFIX[cls]))
    ri = scheme.reg_index(cls, reg_args(ins))
    if cls in BRANCH_CLASSES:
        disp = addrs[target] - (addr + 2)
        return bytes([prefix | ri, disp & 0xFF])
    ib = scheme.layout.imm_bits(cls)
    ii = scheme.imm_index(cls, lut_imm(ins)) if scheme.layout.imm_capacity(cls) else 0
    return bytes([prefix | ri << ib | ii])


def walk(image: CompressedImage) -> list[Code]:
    """Decode every code in the byte stream, PADs included."""
    codes = []
    pos = 0
    data = image.data
    while pos < len(data):
        code = decode_code(data, pos, image.scheme)
        codes.append(code)
        pos += code.length
    return codes


def resolve_code(code: Code, index_of: dict[int, int], i: int) -> Instruction:
    """Turn a decoded code's byte-addressed operands back into index form."""
    ins = code.instr
    if ins.opcode in BRANCHES:
        t = index_of.get(code.end + ins.imm)
        if t is None:
            raise CorruptImageError(f"branch at {code.addr:#x} targets {code.end + ins.imm:#x}, "
                                    "which is not an instruction start")
        return Instruction(ins.opcode, rs=ins.rs, rt=ins.rt, imm=t - (i + 1))
    if ins.opcode is Opcode.J:
        t = index_of.get(ins.jump_target)
        if t is None:
            raise CorruptImageError(f"jump at {code.addr:#x} targets {ins.jump_target:#x}, "
                                    "which is not an instruction start")
        return Instruction(Opcode.J, jump_target=t)
    return ins


def decompress(image: CompressedImage) -> list[Instruction]:
    codes = [c for c in walk(image) if c.instr is not None]
    index_of = {c.addr: i for i, c in enumerate(codes)}
    return [resolve_code(c, index_of, i) for i, c in enumerate(codes)]


def is_control_code(code: Code) -> bool:
    return code.instr is not None and code.instr.opcode in CONTROL


@dataclass
class ScanReport:
    class_counts: Counter
    class_bytes: Counter
    chunk_count: int
    instructions: int
    size: int
    violations: list  # (chunk index, [branch start addresses])

    @property
    def ratio(self) -> float:
        return self.size / (4 * self.instructions) if self.instructions else 0.0

    def format(self) -> str:
        lines = [f"instructions {self.instructions}", f"bytes {self.size}", f"chunks {self.chunk_count}",
                 f"ratio {self.ratio:.4f}"]
        for cls in CodeClass:
            if self.class_counts[cls]:
                lines.append(f"class {cls.value} count {self.class_counts[cls]} bytes {self.class_bytes[cls]}")
        lines.append(f"branch_per_chunk_violations {len(self.violations)}")
        for chunk, addrs in self.violations:
            lines.append("  chunk {} ({:#x}): branches at {}".format(
                chunk, chunk * CHUNK, ", ".join(f"{a:#x}" for a in addrs)))
        return "\n".join(lines) + "\n"


def static_scan(image: CompressedImage) -> ScanReport:
    counts: Counter = Counter()
    sizes: Counter = Counter()
    per_chunk: dict[int, list[int]] = {}
    n = 0
    for code in walk(image):
        counts[code.code_class] += 1
        sizes[code.code_class] += code.length
        if code.instr is not None:
            n += 1
        if is_control_code(code):
            per_chunk.setdefault(code.addr // CHUNK, []).append(code.addr)
    violations = [(c, a) for c, a in sorted(per_chunk.items()) if len(a) > 1]
    return ScanReport(counts, sizes, -(-len(image.data) // CHUNK), n, len(image.data), violations)


# ---------------------------------------------------------------------------
# image file
# ---------------------------------------------------------------------------

MAGIC = b"VLI1"
VERSION = 1
_ARITY = {c: (3 if c is CodeClass.S_ADDU else 2) for c in SHORT_CLASSES}


def dump_image(image: CompressedImage) -> bytes:
    out = bytearray(MAGIC)
    out += struct.pack("<BI", VERSION, image.entry)
    sch = image.scheme
    for cls in SHORT_CLASSES:
        lut = sch.luts[cls]
        out += struct.pack("<BBB", sch.layout.reg_bits(cls), sch.layout.imm_bits(cls), len(lut.reg_table))
        for regs in lut.reg_table:
            out += bytes(regs)
        out += struct.pack("<B", len(lut.imm_table))
        for v in lut.imm_table:
            out += struct.pack("<h", v)
    out += struct.pack("<I", len(image.addr_map))
    out += struct.pack(f"<{len(image.addr_map)}I", *image.addr_map)
    out += struct.pack("<I", image.chunk_count)
    out += image.data
    return bytes(out)


def load_image(blob: bytes) -> CompressedImage:
    if blob[:4] != MAGIC:
        raise CorruptImageError("not a VLI1 image (bad magic)")
    try:
        version, entry = struct.unpack_from("<BI", blob, 4)
        if version != VERSION:
            raise CorruptImageError(f"unsupported image version {version}")
        pos = 9
        widths = {}
        tables = {}
        for cls in SHORT_CLASSES:
            rb, ib, nreg = struct.unpack_from("<BBB", blob, pos)
            pos += 3
            k = _ARITY[cls]
            regs = tuple(tuple(blob[pos + j * k:pos + (j + 1) * k]) for j in range(nreg))
            pos += nreg * k
            (nimm,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            imms = struct.unpack_from(f"<{nimm}h", blob, pos)
            pos += 2 * nimm
            widths[cls] = (rb, ib)
            tables[cls] = (regs, tuple(imms))
        layout = Layout(widths)
        luts = LutSet({c: Lut(r, i, layout.reg_capacity(c), layout.imm_capacity(c))
                       for c, (r, i) in tables.items()})
        scheme = EncodingScheme(layout, luts)
        (count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        addr_map = struct.unpack_from(f"<{count}I", blob, pos)
        pos += 4 * count
        (chunks,) = struct.unpack_from("<I", blob, pos)
        pos += 4
    except struct.error as e:
        raise CorruptImageError(f"truncated image header: {e}") from None
    except SchemeError as e:
        raise CorruptImageError(f"bad scheme section: {e}") from None
    data = blob[pos:]
    if len(data) != chunks * CHUNK:
        raise CorruptImageError(f"byte stream holds {len(data)} bytes, header says {chunks} chunks")
    return CompressedImage(bytes(data), tuple(addr_map), scheme, entry)
