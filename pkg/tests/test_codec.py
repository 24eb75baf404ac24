import random
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from vlisa.codec import (
    CHUNK,
    CompressError,
    CorruptImageError,
    CompressedImage,
    IllegalByteError,
    compress,
    decode_code,
    decompress,
    dump_image,
    first_byte_length,
    load_image,
    static_scan,
    walk,
)
from vlisa.interp import run
from vlisa.isa import CONTROL, Instruction, Opcode, assemble
from vlisa.profile import build_profile, build_scheme
from vlisa.scheme import (
    LENGTH,
    CodeClass,
    EncodingScheme,
    Layout,
    Lut,
    LutSet,
    SchemeError,
    check_prefix_free,
    prefix_table,
)

from conftest import random_program

I, O, C = Instruction, Opcode, CodeClass
FIXTURES = Path(__file__).parent / "fixtures"


def scheme_with(**tables) -> EncodingScheme:
    """Default layout with the given {class_name: (reg_table, imm_table)} LUTs."""
    layout = Layout()
    luts = LutSet.empty(layout)
    for name, (regs, imms) in tables.items():
        cls = C[name]
        luts[cls] = Lut(tuple(regs), tuple(imms), layout.reg_capacity(cls), layout.imm_capacity(cls))
    return EncodingScheme(layout, luts)


def prog_scheme(prog):
    return build_scheme(build_profile(prog))


# --- prefix table ---------------------------------------------------------

def test_first_byte_examples():
    s = EncodingScheme()
    assert first_byte_length(0xAC, s) == (4, C.FULL)
    assert first_byte_length(0x35, s) == (1, C.S_ADDU)
    assert first_byte_length(0x0B, s) == (2, C.S_BEQ)
    assert first_byte_length(0x00, s) == (1, C.PAD)
    for b in (0x01, 0x02, 0x03):
        with pytest.raises(IllegalByteError, match=f"{b:#04x}"):
            first_byte_length(b, s)


def test_all_first_bytes_classify_once():
    s = EncodingScheme()
    table = prefix_table()
    check_prefix_free(table)
    lengths = {}
    for b in range(256):
        hits = [e for e in table if format(b, "08b").startswith(e.pattern)]
        assert len(hits) == 1
        e = hits[0]
        assert s.classify(b) == e
        if e.code_class is not None:
            assert (b >> 7 == 1) == (e.code_class is C.FULL)
            assert e.length * 8 in (8, 16, 24, 32)
            lengths[b] = e.length
    assert len(lengths) == 253


def test_prefix_collision_detected():
    from vlisa.scheme import PrefixEntry
    with pytest.raises(SchemeError):
        check_prefix_free(prefix_table() + (PrefixEntry("0001", C.S_BNE, 2),))


def test_layout_must_fill_byte():
    with pytest.raises(SchemeError):
        Layout.from_bits(lw_reg_bits=3)
    alt = Layout.from_bits(lw_reg_bits=3, lw_imm_bits=2)
    assert alt.reg_capacity(C.S_LW) == 8 and alt.imm_capacity(C.S_LW) == 4


# --- compress examples ----------------------------------------------------

def test_single_addu_lut_index_5():
    regs = [(k, k, k) for k in range(1, 6)] + [(3, 1, 2)]
    s = scheme_with(S_ADDU=(regs, ()))
    img = compress([I(O.ADDU, rd=3, rs=1, rt=2)], s)
    assert img.data == bytes([0x35, 0, 0, 0])
    assert decompress(img) == [I(O.ADDU, rd=3, rs=1, rt=2)]


def test_non_resident_addu_is_full():
    img = compress([I(O.ADDU, rd=3, rs=1, rt=2)], EncodingScheme())
    assert len(img.data) == 4 and img.data[0] >> 7 == 1
    assert img.classes == (C.FULL,)


def test_mid24_when_not_resident():
    ins = I(O.LW, rt=7, rs=9, imm=-12)
    img = compress([ins], EncodingScheme())
    assert img.classes == (C.MID24,)
    assert img.data[:3] == bytes([0b00000101, (9 << 11 | 7 << 6 | (-12 & 0x3F)) >> 8,
                                  (9 << 11 | 7 << 6 | (-12 & 0x3F)) & 0xFF])
    assert decompress(img) == [ins]
    # imm that does not fit 6 bits falls back to FULL
    assert compress([I(O.LW, rt=7, rs=9, imm=64)], EncodingScheme()).classes == (C.FULL,)


def test_two_branches_in_one_chunk_get_pad():
    prog = [I(O.BEQ, rs=1, rt=0, imm=1), I(O.BNE, rs=1, rt=0, imm=0), I(O.HALT)]
    s = scheme_with(S_BEQ=([(1, 0)], ()), S_BNE=([(1, 0)], ()))
    img = compress(prog, s)
    assert img.classes[:2] == (C.S_BEQ, C.S_BNE)
    assert img.addr_map == (0, 4, 6)
    assert img.data[2:4] == b"\x00\x00"
    assert static_scan(img).violations == []
    assert decompress(img) == prog


def test_all_pad_image_is_empty():
    img = CompressedImage(bytes(8), (), EncodingScheme())
    assert decompress(img) == []
    assert [c.code_class for c in walk(img)] == [C.PAD] * 8


def test_eight_short_addu():
    prog = [I(O.ADDU, rd=1, rs=2, rt=3)] * 8
    img = compress(prog, prog_scheme(prog))
    rep = static_scan(img)
    assert (rep.size, rep.chunk_count, rep.ratio) == (8, 2, 0.25)
    assert "ratio 0.2500" in rep.format()


def test_hand_crafted_violation():
    s = scheme_with(S_BEQ=([(1, 0)], ()), S_BNE=([(1, 0)], ()))
    img = CompressedImage(bytes([0x08, 0x00, 0x0C, 0x00, 0, 0, 0, 0]), (0, 2), s)
    rep = static_scan(img)
    assert rep.violations == [(0, [0, 2])]
    assert "chunk 0 (0x0)" in rep.format()


def test_long_branch_widens():
    prog = [I(O.BNE, rs=1, rt=0, imm=200)] + [I(O.ADDU, rd=1, rs=1, rt=1)] * 200 + [I(O.HALT)]
    s = scheme_with(S_BNE=([(1, 0)], ()), S_ADDU=([(1, 1, 1)], ()))
    img = compress(prog, s)
    assert img.classes[0] is C.FULL
    assert decompress(img) == prog
    # 100 one-byte ADDUs fit an 8-bit displacement
    near = [I(O.BNE, rs=1, rt=0, imm=100)] + prog[1:101] + [I(O.HALT)]
    assert compress(near, s).classes[0] is C.S_BNE


def test_target_outside_program():
    with pytest.raises(CompressError):
        compress([I(O.BEQ, rs=1, rt=0, imm=5)], EncodingScheme())
    with pytest.raises(CompressError):
        compress([I(O.J, jump_target=3)], EncodingScheme())


def test_decode_errors():
    s = scheme_with(S_ADDU=([(1, 2, 3)], ()))
    with pytest.raises(CorruptImageError, match="unused"):
        decode_code(bytes([0x31]), 0, s)
    with pytest.raises(CorruptImageError, match="truncated"):
        decode_code(bytes([0x80, 0, 0]), 0, s)
    with pytest.raises(CorruptImageError, match="reserved"):
        decode_code(bytes([0x07, 0, 0]), 0, s)
    assert decode_code(bytes([0x30]), 0, s).instr == I(O.ADDU, rd=1, rs=2, rt=3)
    with pytest.raises(CorruptImageError):
        decode_code(bytes([0x7F]), 0, s)  # S_ADDIU with an empty LUT


# --- properties -----------------------------------------------------------

def _mixed_scheme(rng, prog):
    """Profile only a random part of the program so residency is mixed."""
    part = [ins for ins in prog if rng.random() < 0.5] or prog
    return build_scheme(build_profile(part))


def test_roundtrip_random_programs():
    rng = random.Random(2024)
    for _ in range(300):
        prog = random_program(rng, rng.randrange(1, 300))
        img = compress(prog, _mixed_scheme(rng, prog))
        assert decompress(img) == prog
        assert static_scan(img).violations == []


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 200))
def test_image_properties(seed, n):
    rng = random.Random(seed)
    prog = random_program(rng, n, branch_frac=0.3)
    scheme = _mixed_scheme(rng, prog)
    img = compress(prog, scheme)
    # size bound and whole chunks
    assert len(img.data) % CHUNK == 0
    assert len(img.data) <= 4 * n + 3
    payload = sum(LENGTH[c] for c in img.classes)
    if any(c is not C.FULL for c in img.classes):
        assert payload < 4 * n
    # addr_map is strictly increasing and every entry is a code start
    starts = {c.addr for c in walk(img) if c.instr is not None}
    assert list(img.addr_map) == sorted(starts)
    # control displacements land on instruction starts
    for code in walk(img):
        if code.instr is None:
            continue
        if code.instr.opcode in (O.BEQ, O.BNE):
            assert code.end + code.instr.imm in starts
        elif code.instr.opcode is O.J:
            assert code.instr.jump_target in starts
    # at most one control start per chunk
    per_chunk = {}
    for i, a in enumerate(img.addr_map):
        if prog[i].opcode in CONTROL:
            assert a // CHUNK not in per_chunk
            per_chunk[a // CHUNK] = a
    # fixed point: recompressing the decompressed program changes nothing
    again = compress(decompress(img), scheme)
    assert again.data == img.data and again.addr_map == img.addr_map


def test_image_file_roundtrip(rng, tmp_path):
    for _ in range(20):
        prog = random_program(rng, rng.randrange(1, 200))
        img = compress(prog, _mixed_scheme(rng, prog))
        path = tmp_path / "x.vli"
        path.write_bytes(dump_image(img))
        back = load_image(path.read_bytes())
        assert back == img and back.scheme == img.scheme
        assert decompress(back) == prog


def test_image_file_errors():
    blob = dump_image(compress([I(O.HALT)], EncodingScheme()))
    with pytest.raises(CorruptImageError, match="magic"):
        load_image(b"XXXX" + blob[4:])
    with pytest.raises(CorruptImageError):
        load_image(blob[:-1])
    with pytest.raises(CorruptImageError):
        load_image(blob[:12])


def test_golden_fixture():
    prog = assemble((FIXTURES / "demo.s").read_text())
    _, trace = run(prog)
    img = compress(prog, build_scheme(build_profile(trace)))
    assert img.data.hex() == "6530600cfc10b40000000000"
    assert img.addr_map == (0, 1, 2, 3, 5, 6)
    assert dump_image(img) == (FIXTURES / "demo.vli").read_bytes()
    assert decompress(load_image((FIXTURES / "demo.vli").read_bytes())) == list(prog)
