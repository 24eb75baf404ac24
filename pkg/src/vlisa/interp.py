"""Functional interpreter for the subset and synthetic instruction-mix generator."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field

from .isa import Instruction, Opcode, to_program
from .profile import check_freqs, quotas

MASK = 0xFFFFFFFF


class ExecError(RuntimeError):
    pass


class MemoryFault(ExecError):
    pass


class Outcome(enum.Enum):
    TAKEN = "T"
    NOT_TAKEN = "N"
    NONE = "-"


@dataclass
class MachineState:
    regs: list = field(default_factory=lambda: [0] * 32)
    mem: dict = field(default_factory=dict)
    pc: int = 0
    steps: int = 0
    halted: bool = False

    def read(self, r: int) -> int:
        return 0 if r == 0 else self.regs[r]

    def write(self, r: int, value: int) -> None:
        if r:
            self.regs[r] = value & MASK


@dataclass(frozen=True)
class TraceEntry:
    index: int
    instr: Instruction
    outcome: Outcome


@dataclass
class DynTrace:
    entries: list = field(default_factory=list)
    truncated: bool = False

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def instructions(self) -> list[Instruction]:
        return [e.instr for e in self.entries]

    def dumps(self) -> str:
        return "".join(f"{e.index} {e.instr.mnemonic} {e.outcome.value}\n" for e in self.entries)


def _signed(v: int) -> int:
    return v - (1 << 32) if v & 0x80000000 else v


def _addr(state: MachineState, ins: Instruction) -> int:
    a = (state.read(ins.rs) + ins.imm) & MASK
    if a & 3:
        raise MemoryFault(f"unaligned word access at {a:#x} (pc {state.pc}: {ins})")
    return a


def step(prog, state: MachineState) -> TraceEntry:
    """Execute one instruction; returns its trace entry."""
    pc = state.pc
    ins = prog[pc]
    op = ins.opcode
    nxt = pc + 1
    outcome = Outcome.NONE
    if op is Opcode.ADDU:
        state.write(ins.rd, state.read(ins.rs) + state.read(ins.rt))
    elif op is Opcode.ADDIU:
        state.write(ins.rt, state.read(ins.rs) + ins.imm)
    elif op is Opcode.SLT:
        state.write(ins.rd, int(_signed(state.read(ins.rs)) < _signed(state.read(ins.rt))))
    elif op is Opcode.SLL:
        state.write(ins.rd, state.read(ins.rt) << ins.shamt)
    elif op is Opcode.ORI:
        state.write(ins.rt, state.read(ins.rs) | (ins.imm & 0xFFFF))
    elif op is Opcode.LUI:
        state.write(ins.rt, (ins.imm & 0xFFFF) << 16)
    elif op is Opcode.LW:
        state.write(ins.rt, state.mem.get(_addr(state, ins), 0))
    elif op is Opcode.SW:
        state.mem[_addr(state, ins)] = state.read(ins.rt)
    elif op in (Opcode.BEQ, Opcode.BNE):
        equal = state.read(ins.rs) == state.read(ins.rt)
        taken = equal if op is Opcode.BEQ else not equal
        outcome = Outcome.TAKEN if taken else Outcome.NOT_TAKEN
        if taken:
            nxt = pc + 1 + ins.imm
    elif op is Opcode.J:
        outcome = Outcome.TAKEN
        nxt = ins.jump_target
    elif op is Opcode.JR:
        outcome = Outcome.TAKEN
        nxt = state.read(ins.rs)
    elif op is Opcode.HALT:
        state.halted = True
    state.pc = nxt
    state.steps += 1
    return TraceEntry(pc, ins, outcome)


def run(program, state: MachineState | None = None, step_limit: int = 1_000_000):
    """Run until HALT, falling off the end of the program, or ``step_limit``.

    Returns ``(state, trace)``; ``trace.truncated`` is set when the limit hit.
    """
    prog = to_program(program)
    state = state or MachineState()
    trace = DynTrace()
    n = len(prog)
    while not state.halted and state.pc != n:
        if state.steps >= step_limit:
            trace.truncated = True
            break
        if not 0 <= state.pc < n:
            raise ExecError(f"control left the program: pc {state.pc} (program has {n} instructions)")
        trace.entries.append(step(prog, state))
    return state, trace


def replay_pcs(program, trace: DynTrace) -> list[int]:
    """Reconstruct the pc sequence from branch outcomes alone (no datapath)."""
    prog = to_program(program)
    pcs = []
    pc = trace[0].index if len(trace) else 0
    for e in trace:
        pcs.append(pc)
        ins = prog[pc]
        if e.outcome is Outcome.TAKEN:
            if ins.opcode is Opcode.J:
                pc = ins.jump_target
            elif ins.opcode is Opcode.JR:
                # register value is datapath state; the next entry tells us
                pos = len(pcs)
                pc = trace[pos].index if pos < len(trace) else pc
            else:
                pc = pc + 1 + ins.imm
        else:
            pc += 1
    return pcs


# ---------------------------------------------------------------------------
# synthetic mixes
# ---------------------------------------------------------------------------

def _mk(op, **kw):
    return Instruction(op, **kw)


# Written registers stay in r1..r15; r28-r30 are never written (zero bases, so
# every LW/SW address is aligned) and r31 is loaded once by the prologue so the
# branch pairs below are never taken and the mix stays straight-line.
DEFAULT_POOL: dict[Opcode, list[Instruction]] = {
    Opcode.LW: [_mk(Opcode.LW, rt=rt, rs=rs, imm=imm)
                for rt, rs in ((2, 29), (3, 29), (4, 28), (5, 30)) for imm in range(0, 32, 4)],
    Opcode.SW: [_mk(Opcode.SW, rt=rt, rs=rs, imm=imm)
                for rt, rs in ((2, 29), (3, 29), (6, 28), (7, 30)) for imm in (0, 4, 8, 12)],
    Opcode.ADDIU: [_mk(Opcode.ADDIU, rt=rt, rs=rs, imm=imm)
                   for rt, rs in ((1, 1), (2, 2), (3, 3), (4, 4), (5, 1), (6, 2), (7, 0), (8, 8))
                   for imm in (1, -1, 4, 8)],
    Opcode.SLL: [_mk(Opcode.SLL, rd=rd, rt=rt, shamt=s)
                 for rd, rt in ((2, 2), (3, 4), (9, 9), (10, 1)) for s in (1, 2, 4, 16)],
    Opcode.ADDU: [_mk(Opcode.ADDU, rd=rd, rs=rs, rt=rt)
                  for rd, rs, rt in ((2, 3, 4), (3, 2, 5), (4, 4, 1), (5, 6, 7), (1, 1, 2), (6, 1, 3),
                                     (7, 7, 8), (8, 2, 2), (9, 3, 9), (10, 11, 12), (11, 10, 1),
                                     (12, 12, 13), (13, 2, 14), (14, 15, 1), (15, 4, 5), (2, 2, 6))],
    Opcode.BEQ: [_mk(Opcode.BEQ, rs=rs, rt=rt) for rs, rt in ((31, 0), (0, 31), (31, 29), (28, 31))],
    Opcode.BNE: [_mk(Opcode.BNE, rs=r, rt=r) for r in (0, 1, 2, 5)],
    Opcode.SLT: [_mk(Opcode.SLT, rd=rd, rs=rs, rt=rt) for rd, rs, rt in ((1, 2, 3), (4, 5, 6), (7, 8, 9))],
    Opcode.ORI: [_mk(Opcode.ORI, rt=rt, rs=rs, imm=imm) for rt, rs, imm in ((1, 1, 0x100), (2, 3, 0x7F00))],
    Opcode.LUI: [_mk(Opcode.LUI, rt=rt, imm=imm) for rt, imm in ((10, 1), (11, 0x10))],
    Opcode.NOP: [_mk(Opcode.NOP)],
}
PROLOGUE = _mk(Opcode.LUI, rt=31, imm=1)


def gen_mix(freqs, n: int, seed: int = 0, pool: dict | None = None) -> list[Instruction]:
    """Straight-line program whose mnemonic histogram follows ``freqs`` (percent).

    Counts are apportioned exactly (largest remainder, the gap to 100% going
    to SLT/ORI filler) and then shuffled with ``seed``. Operands are drawn
    from ``pool``. When the mix contains branches a single ``LUI r31, 1``
    prologue is emitted so that the pooled branches fall through. A HALT
    terminates the program.
    """
    check_freqs(freqs)
    pool = {**DEFAULT_POOL, **(pool or {})}
    rng = random.Random(seed)
    counts = quotas(freqs, n)
    body = []
    for op in sorted(counts):
        if op in (Opcode.J, Opcode.JR, Opcode.HALT):
            raise ValueError(f"{op.name} cannot appear in a straight-line mix")
        choices = pool[op]
        body += [rng.choice(choices) for _ in range(counts[op])]
    rng.shuffle(body)
    prologue = [PROLOGUE] if any(op in counts for op in (Opcode.BEQ, Opcode.BNE)) else []
    return prologue + body + [Instruction(Opcode.HALT)]


REFERENCE_MIX = {
    Opcode.LW: 10.40,
    Opcode.ADDIU: 4.53,
    Opcode.SW: 2.25,
    Opcode.SLL: 5.41,
    Opcode.ADDU: 21.93,
    Opcode.BEQ: 4.06,
    Opcode.BNE: 2.04,
}
