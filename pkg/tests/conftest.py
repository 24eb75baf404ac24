import random

import pytest

from vlisa.isa import Instruction, Opcode

I = Instruction
O = Opcode

DATA_REGS = list(range(1, 16))
BASES = (0, 28, 29, 30)  # never written, so LW/SW addresses stay aligned


def random_plain(rng: random.Random, common: bool) -> Instruction:
    """Random non-control instruction; ``common`` draws operands from a small pool."""
    op = rng.choice([O.LW, O.SW, O.ADDIU, O.ADDU, O.SLL, O.ORI, O.LUI, O.SLT, O.ADDU, O.LW, O.NOP])
    regs = DATA_REGS[:3] if common else DATA_REGS
    r = lambda: rng.choice(regs)  # noqa: E731
    if op in (O.LW, O.SW):
        imm = rng.choice((0, 4, 8)) if common else 4 * rng.randrange(-64, 64)
        return I(op, rt=r(), rs=rng.choice(BASES[:1] if common else BASES), imm=imm)
    if op is O.ADDIU:
        return I(op, rt=r(), rs=r(), imm=rng.choice((1, -1)) if common else rng.randrange(-40000, 40000) // 2)
    if op is O.ADDU:
        return I(op, rd=r(), rs=r(), rt=r())
    if op is O.SLL:
        return I(op, rd=r(), rt=r(), shamt=rng.choice((1, 2)) if common else rng.randrange(32))
    if op is O.ORI:
        return I(op, rt=r(), rs=r(), imm=rng.randrange(-0x8000, 0x8000))
    if op is O.LUI:
        return I(op, rt=r(), imm=rng.randrange(-0x8000, 0x8000))
    if op is O.SLT:
        return I(op, rd=r(), rs=r(), rt=r())
    return I(O.NOP)


def random_program(rng: random.Random, n: int, branch_frac: float = 0.15) -> list[Instruction]:
    """Static (not necessarily executable) program with arbitrary control targets."""
    out = []
    for i in range(n):
        if rng.random() < branch_frac:
            kind = rng.choice([O.BEQ, O.BNE, O.BEQ, O.BNE, O.J, O.JR])
            if kind is O.JR:
                out.append(I(O.JR, rs=rng.randrange(32)))
            elif kind is O.J:
                out.append(I(O.J, jump_target=rng.randrange(n)))
            else:
                near = rng.random() < 0.7
                t = min(n - 1, max(0, i + rng.randrange(-12, 13))) if near else rng.randrange(n)
                out.append(I(kind, rs=rng.choice((1, 2, rng.randrange(32))), rt=rng.choice((0, rng.randrange(32))),
                             imm=t - (i + 1)))
        else:
            out.append(random_plain(rng, rng.random() < 0.6))
    return out


def random_branchy_program(rng: random.Random, blocks: int = 6) -> list[Instruction]:
    """Executable program that always reaches HALT.

    Backward edges are counted loops on r20-r23; forward BEQ/BNE/J skip over
    code; one JR per program jumps through a register to a later label.
    """
    items = []  # Instruction, ("label", name) or ("fix", kind, fields, label)
    labels = 0

    def new_label():
        nonlocal labels
        labels += 1
        return f"L{labels}"

    def body(k):
        for _ in range(k):
            items.append(random_plain(rng, rng.random() < 0.5))

    items.append(I(O.ADDIU, rt=1, rs=0, imm=rng.randrange(-3, 4)))
    items.append(I(O.ADDIU, rt=2, rs=0, imm=rng.randrange(-3, 4)))
    used_jr = False
    for _ in range(blocks):
        body(rng.randrange(0, 5))
        kind = rng.choice(["loop", "loop", "if", "if", "jump", "jr"])
        if kind == "loop":
            c = rng.choice((20, 21, 22, 23))
            top = new_label()
            items.append(I(O.ADDIU, rt=c, rs=0, imm=rng.randrange(1, 5)))
            items.append(("label", top))
            if rng.random() < 0.5:
                skip = new_label()
                items.append(("fix", rng.choice((O.BEQ, O.BNE)), {"rs": rng.choice((1, 2)), "rt": 0}, skip))
                body(rng.randrange(1, 4))
                items.append(("label", skip))
            # large bodies push the back edge out of 8-bit range
            body(rng.choice((rng.randrange(1, 8), rng.randrange(40, 90))))
            items.append(I(O.ADDIU, rt=c, rs=c, imm=-1))
            items.append(("fix", O.BNE, {"rs": c, "rt": 0}, top))
        elif kind == "if":
            skip = new_label()
            items.append(("fix", rng.choice((O.BEQ, O.BNE)),
                          {"rs": rng.choice(DATA_REGS[:4]), "rt": rng.choice((0, 1, 2))}, skip))
            body(rng.randrange(1, 6))
            items.append(("label", skip))
        elif kind == "jump":
            skip = new_label()
            items.append(("fix", O.J, {}, skip))
            body(rng.randrange(0, 4))
            items.append(("label", skip))
        elif not used_jr:
            used_jr = True
            skip = new_label()
            items.append(("fixjr", 24, skip))
            items.append(I(O.JR, rs=24))
            body(rng.randrange(0, 3))
            items.append(("label", skip))
    items.append(I(O.SW, rt=1, rs=29, imm=0))
    items.append(I(O.HALT))

    where, idx = {}, 0
    for it in items:
        if isinstance(it, tuple) and it[0] == "label":
            where[it[1]] = idx
        else:
            idx += 1
    prog = []
    for it in items:
        if isinstance(it, Instruction):
            prog.append(it)
        elif it[0] == "fix":
            _, kind, fields, label = it
            if kind is O.J:
                prog.append(I(O.J, jump_target=where[label]))
            else:
                prog.append(I(kind, imm=where[label] - (len(prog) + 1), **fields))
        elif it[0] == "fixjr":
            prog.append(I(O.ADDIU, rt=it[1], rs=0, imm=where[it[2]]))
    return prog


LOOP_SRC = """\
# sum 3 + 2 + 1 into r2
        ADDIU r1, r0, 3
loop:   ADDU r2, r2, r1
        ADDIU r1, r1, -1
        BNE r1, r0, loop
        SW r2, 0(r29)
        HALT
"""


@pytest.fixture
def rng():
    return random.Random(12345)
