"""Dynamic instruction/argument profiles, LUT construction and coverage."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .isa import Instruction, Opcode, parse_asm
from .scheme import (
    SHORT_CLASS,
    EncodingScheme,
    Layout,
    Lut,
    LutSet,
    SHORT_CLASSES,
    SHORT_OPCODE,
    imm_arg,
    pack_regs,
    reg_args,
)


class ProfileError(ValueError):
    pass


@dataclass
class Profile:
    """Dynamic counts; ``arg_counts`` is keyed by (opcode, register tuple, immediate or None)."""

    opcode_counts: Counter = field(default_factory=Counter)
    arg_counts: Counter = field(default_factory=Counter)
    total: int = 0
    # first trace position of each (opcode, regs) / (opcode, imm); tie-break of last resort
    first_reg: dict = field(default_factory=dict)
    first_imm: dict = field(default_factory=dict)

    def add(self, instr: Instruction, n: int = 1) -> None:
        op = instr.opcode
        regs = reg_args(instr)
        imm = imm_arg(instr)
        self.first_reg.setdefault((op, regs), self.total)
        if imm is not None:
            self.first_imm.setdefault((op, imm), self.total)
        self.opcode_counts[op] += n
        self.arg_counts[(op, regs, imm)] += n
        self.total += n

    def reg_counts(self, op: Opcode) -> Counter:
        c = Counter()
        for (o, regs, _), n in self.arg_counts.items():
            if o == op:
                c[regs] += n
        return c

    def imm_counts(self, op: Opcode) -> Counter:
        c = Counter()
        for (o, _, imm), n in self.arg_counts.items():
            if o == op and imm is not None:
                c[imm] += n
        return c

    def frequency(self, op: Opcode) -> float:
        return self.opcode_counts[op] / self.total if self.total else 0.0

    def dumps(self) -> str:
        lines = ["# vlisa profile", f"total {self.total}"]
        for op in sorted(self.opcode_counts):
            lines.append(f"op {op.name} {self.opcode_counts[op]}")
        for (op, regs, imm), n in sorted(self.arg_counts.items(),
                                         key=lambda kv: (kv[0][0], kv[0][1], _imm_sort(kv[0][2]))):
            rs = ",".join(str(r) for r in regs) or "-"
            lines.append(f"arg {op.name} {rs} {'-' if imm is None else imm} {n}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Profile":
        prof = cls()
        declared = None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].split()
            if not line:
                continue
            try:
                if line[0] == "total":
                    declared = int(line[1])
                elif line[0] == "op":
                    pass  # recomputed from arg lines
                elif line[0] == "arg":
                    op = Opcode[line[1]]
                    regs = () if line[2] == "-" else tuple(int(r) for r in line[2].split(","))
                    imm = None if line[3] == "-" else int(line[3])
                    n = int(line[4])
                    prof.first_reg.setdefault((op, regs), prof.total)
                    if imm is not None:
                        prof.first_imm.setdefault((op, imm), prof.total)
                    prof.opcode_counts[op] += n
                    prof.arg_counts[(op, regs, imm)] += n
                    prof.total += n
                else:
                    raise ValueError(line[0])
            except (IndexError, KeyError, ValueError) as e:
                raise ProfileError(f"profile line {lineno}: cannot parse {raw!r}") from e
        if declared is not None and declared != prof.total:
            raise ProfileError(f"profile declares total {declared} but arguments sum to {prof.total}")
        return prof


def _imm_sort(imm):
    return (0, 0) if imm is None else (1, imm)


def build_profile(trace) -> Profile:
    """Count opcodes and joint argument tuples over executed instructions.

    ``trace`` may hold Instructions or anything with an ``instr`` attribute
    (interpreter trace entries).
    """
    prof = Profile()
    for item in trace:
        prof.add(getattr(item, "instr", item))
    if prof.total == 0:
        raise ProfileError("cannot profile an empty trace")
    return prof


def parse_trace(text: str) -> list[Instruction]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        if raw.split("#", 1)[0].strip():
            out.append(parse_asm(raw, line=lineno))
    return out


# canonical operands used when a profile comes from a bare frequency table
CANONICAL = {
    Opcode.LW: Instruction(Opcode.LW, rt=2, rs=29, imm=0),
    Opcode.ADDIU: Instruction(Opcode.ADDIU, rt=2, rs=2, imm=1),
    Opcode.SW: Instruction(Opcode.SW, rt=2, rs=29, imm=0),
    Opcode.SLL: Instruction(Opcode.SLL, rd=2, rt=2, shamt=2),
    Opcode.ADDU: Instruction(Opcode.ADDU, rd=2, rs=3, rt=4),
    Opcode.BEQ: Instruction(Opcode.BEQ, rs=2, rt=0, imm=0),
    Opcode.BNE: Instruction(Opcode.BNE, rs=2, rt=0, imm=0),
    Opcode.SLT: Instruction(Opcode.SLT, rd=2, rs=3, rt=4),
    Opcode.ORI: Instruction(Opcode.ORI, rt=2, rs=2, imm=0x100),
    Opcode.LUI: Instruction(Opcode.LUI, rt=2, imm=1),
    Opcode.NOP: Instruction(Opcode.NOP),
    Opcode.J: Instruction(Opcode.J, jump_target=0),
    Opcode.JR: Instruction(Opcode.JR, rs=31),
    Opcode.HALT: Instruction(Opcode.HALT),
}
FILLER = (Opcode.SLT, Opcode.ORI)


def parse_freqs(text: str) -> dict[Opcode, float]:
    """Parse ``MNEMONIC percent`` lines (a trailing ``%`` is optional)."""
    table: dict[Opcode, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        if len(parts) != 2:
            raise ProfileError(f"frequency line {lineno}: expected 'mnemonic percent', got {raw!r}")
        try:
            op = Opcode[parts[0].upper()]
            pct = float(parts[1].rstrip("%"))
        except (KeyError, ValueError):
            raise ProfileError(f"frequency line {lineno}: cannot parse {raw!r}") from None
        if op in table:
            raise ProfileError(f"frequency line {lineno}: duplicate mnemonic {op.name}")
        table[op] = pct
    check_freqs(table)
    return table


def check_freqs(table) -> None:
    for op, pct in table.items():
        if pct < 0:
            raise ProfileError(f"negative frequency for {Opcode(op).name}")
    if sum(table.values()) > 100.0 + 1e-9:
        raise ProfileError(f"frequencies sum to {sum(table.values()):.4f}% > 100%")


def quotas(table, n: int, filler=FILLER) -> dict[Opcode, int]:
    """Largest-remainder apportionment of ``n`` slots; the gap to 100% goes to ``filler``."""
    check_freqs(table)
    shares = {Opcode(op): pct for op, pct in table.items()}
    rest = 100.0 - sum(shares.values())
    if rest > 1e-9:
        for f in filler:
            shares[f] = shares.get(f, 0.0) + rest / len(filler)
    exact = {op: n * pct / 100.0 for op, pct in shares.items()}
    counts = {op: int(v + 1e-9) for op, v in exact.items()}
    left = n - sum(counts.values())
    order = sorted(exact, key=lambda op: (-(exact[op] - counts[op]), int(op)))
    for op in order[:left]:
        counts[op] += 1
    return {op: c for op, c in counts.items() if c}


def profile_from_freqs(table, scale: int = 10000) -> Profile:
    """Synthetic profile: one canonical operand tuple per mnemonic, counts = percent x scale / 100."""
    prof = Profile()
    for op, count in sorted(quotas(table, scale).items()):
        prof.add(CANONICAL[op], count)
    return prof


def _top(counter: Counter, capacity: int, key) -> tuple:
    ranked = sorted(counter.items(), key=lambda kv: (-kv[1],) + key(kv[0]))
    return tuple(k for k, _ in ranked[:capacity])


def build_scheme(profile: Profile, layout: Layout | None = None) -> EncodingScheme:
    """Fill each short class's LUTs with its most frequent arguments.

    Ordering is descending count, then smaller packed value, then first
    occurrence in the trace.
    """
    layout = layout or Layout()
    luts = LutSet()
    for cls in SHORT_CLASSES:
        op = SHORT_OPCODE[cls]
        reg_cap, imm_cap = layout.reg_capacity(cls), layout.imm_capacity(cls)
        regs = _top(profile.reg_counts(op), reg_cap,
                    lambda r: (pack_regs(r), profile.first_reg.get((op, r), 0)))
        imms = ()
        if imm_cap:
            imms = _top(profile.imm_counts(op), imm_cap,
                        lambda v: (v, profile.first_imm.get((op, v), 0)))
        luts[cls] = Lut(regs, imms, reg_cap, imm_cap)
    return EncodingScheme(layout, luts)


def _eligible(scheme: EncodingScheme, op: Opcode, regs, imm) -> bool:
    cls = SHORT_CLASS.get(op)
    if cls is None or scheme.reg_index(cls, regs) is None:
        return False
    if scheme.layout.imm_capacity(cls) and imm is not None:
        return scheme.imm_index(cls, imm) is not None
    return True


def coverage(profile: Profile, scheme: EncodingScheme) -> tuple[float, dict[Opcode, float]]:
    """Fraction of dynamic instructions expressible as short codes, plus a per-opcode split.

    Branch displacements are not known from a profile, so branches count as
    covered whenever their register pair is LUT-resident.
    """
    if profile.total == 0:
        return 0.0, {}
    hits: Counter = Counter()
    for (op, regs, imm), n in profile.arg_counts.items():
        if _eligible(scheme, op, regs, imm):
            hits[op] += n
    breakdown = {op: hits[op] / profile.total for op in SHORT_CLASS if op in profile.opcode_counts}
    return sum(hits.values()) / profile.total, breakdown


def short_eligible_fraction(profile: Profile) -> float:
    return sum(profile.opcode_counts[op] for op in SHORT_CLASS) / profile.total if profile.total else 0.0

