import pytest
from hypothesis import given, settings, strategies as st

from vlisa.isa import (
    FIELDS,
    AsmError,
    DecodeError,
    EncodeError,
    Instruction,
    NotFullWordError,
    Opcode,
    assemble,
    decode_full,
    encode_full,
    format_asm,
    parse_asm,
)

reg = st.integers(0, 31)
imm16 = st.integers(-0x8000, 0x7FFF)


@st.composite
def instructions(draw):
    op = draw(st.sampled_from(list(Opcode)))
    kw = {}
    for f in FIELDS[op]:
        if f == "imm":
            kw[f] = draw(imm16)
        elif f == "jump_target":
            kw[f] = draw(st.integers(0, (1 << 26) - 1))
        else:
            kw[f] = draw(reg)
    return Instruction(op, **kw)


def test_opcode_set():
    assert len(Opcode) <= 32
    for name in ("LW", "ADDIU", "SW", "SLL", "ADDU", "BEQ", "BNE"):
        assert name in Opcode.__members__


def test_nop_word():
    assert encode_full(Instruction(Opcode.NOP)) == 0x80000000
    assert decode_full(0x80000000) == Instruction(Opcode.NOP)


def test_marker_bit_rejected():
    with pytest.raises(NotFullWordError):
        decode_full(0x7FFFFFFF)
    with pytest.raises(NotFullWordError):
        decode_full(0)


def test_unknown_opcode_id():
    with pytest.raises(DecodeError):
        decode_full(0x80000000 | (31 << 26))


def test_unused_field_rejected():
    with pytest.raises(EncodeError):
        Instruction(Opcode.NOP, rs=1)
    with pytest.raises(EncodeError):
        Instruction(Opcode.ADDU, rd=32)
    with pytest.raises(EncodeError):
        Instruction(Opcode.LW, imm=0x8000)
    # JR with stray rt bits in the word
    with pytest.raises(DecodeError):
        decode_full(encode_full(Instruction(Opcode.JR, rs=3)) | (5 << 16))


@settings(max_examples=10_000, deadline=None)
@given(instructions())
def test_full_roundtrip(ins):
    w = encode_full(ins)
    assert w >> 31 == 1
    assert decode_full(w) == ins
    assert encode_full(decode_full(w)) == w


@settings(max_examples=2000, deadline=None)
@given(instructions())
def test_text_roundtrip(ins):
    assert parse_asm(format_asm(ins)) == ins


@settings(max_examples=3000, deadline=None)
@given(st.integers(0, 0x7FFFFFFF))
def test_every_clear_marker_word_rejected(w):
    with pytest.raises(NotFullWordError):
        decode_full(w)


def test_parse_examples():
    assert parse_asm("ADDU r3, r1, r2") == Instruction(Opcode.ADDU, rd=3, rs=1, rt=2)
    assert parse_asm("LW r5, 8(r29)") == Instruction(Opcode.LW, rt=5, rs=29, imm=8)
    assert parse_asm("  sll r1, r2, 4  # shift") == Instruction(Opcode.SLL, rd=1, rt=2, shamt=4)


def test_parse_errors():
    with pytest.raises(AsmError, match="out of range"):
        parse_asm("ADDU r32, r1, r2")
    with pytest.raises(AsmError) as ei:
        parse_asm("FROB r1", line=7)
    assert ei.value.line == 7 and ei.value.col == 1
    with pytest.raises(AsmError):
        parse_asm("LW r1, r2")
    with pytest.raises(AsmError, match="unknown label"):
        parse_asm("BEQ r1, r2, nowhere")


def test_assemble_labels():
    prog = assemble("""
    top: ADDIU r1, r1, -1   # comment
         BNE r1, r0, top
         J end
         NOP
    end: HALT
    """)
    assert prog.labels == {"top": 0, "end": 4}
    assert prog[1] == Instruction(Opcode.BNE, rs=1, rt=0, imm=-2)
    assert prog[2] == Instruction(Opcode.J, jump_target=4)
    with pytest.raises(AsmError, match="duplicate"):
        assemble("a: NOP\na: NOP")
