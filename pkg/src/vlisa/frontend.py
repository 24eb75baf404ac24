"""Cycle-level model of the chunk fetch stage, the depack stage and a fixed-length baseline.

The depack queue is an 8-byte ring: register A holds ring bytes 0-3 and
register B bytes 4-7. Fetch writes whole chunks, A first after reset or a
redirect, then alternating. The 3-bit read pointer selects the first byte of
the next code; its top bit is the write bit fed back to fetch.

Timing is synchronous: a chunk written in cycle t becomes visible to depack in
cycle t+1 (unless the FULL bypass is enabled), and fetch decides whether a
register is free from the queue state at the start of the cycle.

Control flow is trace driven: the outcome of each delivered branch comes from
the interpreter's DynTrace and is resolved when depack delivers it.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields

from .codec import CHUNK, Code, CompressedImage, CorruptImageError, decode_code, resolve_code
from .isa import CONTROL, DecodeError, decode_full, encode_full, to_program
from .interp import DynTrace, Outcome
from .scheme import CodeClass, EncodingScheme


class SimulationFault(RuntimeError):
    pass


class QueueSafetyError(SimulationFault):
    pass


@dataclass
class SimConfig:
    cache_size: int = 4096
    line_size: int = 32
    miss_latency: int = 10
    perfect_icache: bool = False
    btb_entries: int = 64
    mispredict_penalty: int = 3
    full_bypass: bool = False
    max_cycles: int = 0  # 0: derived from the trace length

    def __post_init__(self):
        for name in ("cache_size", "line_size", "btb_entries"):
            v = getattr(self, name)
            if v <= 0 or v & (v - 1):
                raise ValueError(f"{name} must be a positive power of two, got {v}")
        if self.line_size < CHUNK or self.cache_size < self.line_size:
            raise ValueError("cache must hold at least one line of at least one chunk")
        if self.miss_latency < 0 or self.mispredict_penalty < 0 or self.max_cycles < 0:
            raise ValueError("latencies and limits must be non-negative")


@dataclass
class SimMetrics:
    chunk_fetches: int = 0
    icache_hits: int = 0
    icache_misses: int = 0
    btb_lookups: int = 0
    depack_cycles: int = 0
    pad_skips: int = 0
    delivered_instructions: int = 0
    stall_cycles_queue_full: int = 0
    stall_cycles_miss: int = 0
    mispredict_flushes: int = 0
    bytes_fetched: int = 0
    cycles: int = 0

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def metrics_csv(rows: dict[str, SimMetrics], comment: str | None = None) -> str:
    out = io.StringIO()
    if comment:
        out.write(f"# {comment}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["model"] + SimMetrics.columns())
    for name, m in rows.items():
        w.writerow([name] + [getattr(m, c) for c in SimMetrics.columns()])
    return out.getvalue()


def read_metrics_csv(text: str) -> dict[str, SimMetrics]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    out = {}
    for row in csv.DictReader(lines):
        name = row.pop("model")
        out[name] = SimMetrics(**{k: int(v) for k, v in row.items()})
    return out


class ICache:
    """Direct-mapped instruction cache holding tags only."""

    def __init__(self, size: int, line: int, perfect: bool = False):
        self.line = line
        self.sets = size // line
        self.perfect = perfect
        self.tags = [None] * self.sets

    def access(self, addr: int) -> bool:
        if self.perfect:
            return True
        block = addr // self.line
        idx = block % self.sets
        if self.tags[idx] == block:
            return True
        self.tags[idx] = block
        return False


@dataclass
class BtbEntry:
    tag: int
    target: int
    counter: int
    branch_addr: int
    branch_end: int

    @property
    def predict_taken(self) -> bool:
        return self.counter >= 2


class BranchUnit:
    """Direct-mapped BTB with 2-bit counters, keyed by fetch-unit address.

    Entries are allocated (weakly taken) on the first taken execution;
    not-taken branches that miss in the BTB are simply predicted not taken.
    """

    def __init__(self, entries: int = 64, granule: int = CHUNK):
        self.n = entries
        self.granule = granule
        self.table: list[BtbEntry | None] = [None] * entries

    def _slot(self, key: int) -> tuple[int, int]:
        unit = key // self.granule
        return unit % self.n, unit // self.n

    def lookup(self, key: int) -> BtbEntry | None:
        idx, tag = self._slot(key)
        e = self.table[idx]
        return e if e is not None and e.tag == tag else None

    def update(self, key: int, branch_addr: int, branch_end: int, taken: bool, target: int | None) -> None:
        idx, tag = self._slot(key)
        e = self.table[idx]
        if e is None or e.tag != tag:
            if not taken:
                return
            self.table[idx] = BtbEntry(tag, target, 2, branch_addr, branch_end)
            return
        if taken:
            e.counter = min(3, e.counter + 1)
            e.target = target
        else:
            e.counter = max(0, e.counter - 1)
        e.branch_addr, e.branch_end = branch_addr, branch_end


# ---------------------------------------------------------------------------
# read-pointer arithmetic
# ---------------------------------------------------------------------------

def next_rp(rp: int, length: int) -> int:
    return (rp + length) % 8


def redirect_rp(addr: int) -> int:
    """Register A (top bit 0) plus the two low bits of the byte target."""
    return addr & 0b011


def write_bit(rp: int) -> int:
    return rp >> 2


# ---------------------------------------------------------------------------
# pipeline state
# ---------------------------------------------------------------------------

@dataclass
class FetchState:
    cc: int = 0
    fetch_enable: bool = True
    pending_miss: int = 0
    target_reg: int = 0  # 0 = A, 1 = B
    entry_offset: int = 0  # first valid byte of the next chunk (redirect target offset)
    miss_served: bool = False
    straddle: bool = False  # fetch one more sequential chunk, then wait


@dataclass
class DepackState:
    q: bytearray = field(default_factory=lambda: bytearray(8))
    valid: list = field(default_factory=lambda: [False] * 8)
    rp: int = 0
    pc: int = 0
    out_reg: int | None = None
    fresh: set = field(default_factory=set)

    @property
    def write_bit(self) -> int:
        return write_bit(self.rp)

    def n_valid(self) -> int:
        return sum(self.valid)

    def register_free(self, reg: int) -> bool:
        return not any(self.valid[reg * 4:reg * 4 + 4])

    def invalidate(self) -> None:
        self.valid = [False] * 8
        self.fresh.clear()

    def redirect(self, addr: int) -> None:
        self.invalidate()
        self.rp = redirect_rp(addr)
        self.pc = addr


def fetch_step(f: FetchState, d: DepackState, btb: BranchUnit, cache: ICache, image: CompressedImage,
               m: SimMetrics, miss_latency: int, predictions: dict) -> str:
    """One fetch-stage cycle. Returns a short action label for the cycle log."""
    if not f.fetch_enable or f.cc >= len(image.data):
        return "wait" if not f.fetch_enable else "idle"
    if f.pending_miss:
        f.pending_miss -= 1
        m.stall_cycles_miss += 1
        return "miss"
    reg = f.target_reg
    if not d.register_free(reg):
        m.stall_cycles_queue_full += 1
        return "full"
    if not f.miss_served:
        if cache.access(f.cc):
            m.icache_hits += 1
        else:
            m.icache_misses += 1
            if miss_latency:
                f.miss_served = True
                f.pending_miss = miss_latency - 1
                m.stall_cycles_miss += 1
                return "miss"
    f.miss_served = False
    base = reg * 4
    chunk = f.cc
    start = f.entry_offset
    for k in range(4):
        if d.valid[base + k]:
            raise QueueSafetyError(f"fetch would overwrite valid byte {base + k} of the depack queue")
        d.q[base + k] = image.data[chunk + k]
        if k >= start:
            d.valid[base + k] = True
            d.fresh.add(base + k)
    m.chunk_fetches += 1
    m.bytes_fetched += CHUNK
    m.btb_lookups += 1
    entry = btb.lookup(chunk)
    f.cc += CHUNK
    f.target_reg ^= 1
    f.entry_offset = 0
    label = f"{'AB'[reg]}<-{chunk:#x}"
    if f.straddle:
        f.straddle = False
        f.fetch_enable = False
    elif (entry is not None and entry.predict_taken
          and chunk + start <= entry.branch_addr < chunk + CHUNK):
        predictions[entry.branch_addr] = entry.target
        if entry.branch_end > chunk + CHUNK:
            f.straddle = True
        else:
            f.fetch_enable = False
        label += " pred-T"
    return label


def depack_step(d: DepackState, scheme: EncodingScheme, bypass_full: bool = False) -> Code | None:
    """One depack cycle: extract, classify and expand the code at the read pointer.

    Returns the decoded code (PAD included) or None when the queue does not yet
    hold all of its bytes.
    """
    def ready(k):
        return d.valid[k] and k not in d.fresh

    rp = d.rp
    if not d.valid[rp]:
        return None
    entry = scheme.classify(d.q[rp])
    if entry.code_class is None:
        raise SimulationFault(f"depack at {d.pc:#x}: illegal first byte {d.q[rp]:#04x}")
    span = [(rp + k) % 8 for k in range(entry.length)]
    if not all(ready(k) for k in span):
        if not (bypass_full and entry.code_class is CodeClass.FULL and all(d.valid[k] for k in span)):
            return None
    raw = bytes(d.q[(rp + k) % 8] for k in range(4))
    try:
        code = decode_code(raw, 0, scheme, addr=d.pc)
    except CorruptImageError as e:
        raise SimulationFault(f"depack at {d.pc:#x}: {e}") from None
    for k in span:
        d.valid[k] = False
    d.rp = next_rp(rp, code.length)
    d.pc += code.length
    d.out_reg = None if code.instr is None else encode_full(code.instr)
    return code


@dataclass
class SimResult:
    metrics: SimMetrics
    delivered: list
    log: list


def resolve_branch(btb: BranchUnit, code: Code, outcome: Outcome, actual_next: int | None,
                   predicted_target: int | None) -> tuple[bool, int | None]:
    """Compare the chunk-level prediction with the trace outcome and train the BTB.

    Returns ``(mispredicted, redirect_address)``; the redirect address is None
    when fetch and depack may simply continue.
    """
    taken = outcome is Outcome.TAKEN
    fallthrough = code.end
    key = code.addr - code.addr % CHUNK
    btb.update(key, code.addr, code.end, taken, actual_next if taken else None)
    if actual_next is None:
        return False, None
    if not taken:
        # sequential successor may sit behind PAD bytes; depack skips those itself
        actual_next = fallthrough
    predicted_next = fallthrough if predicted_target is None else predicted_target
    if predicted_next != actual_next:
        return True, actual_next
    if predicted_target is not None:
        return False, actual_next
    return False, None


class FrontEnd:
    """Compressed-path front end: fetch + depack + chunk-level branch prediction."""

    def __init__(self, image: CompressedImage, trace: DynTrace, config: SimConfig | None = None,
                 log: bool = False):
        self.image = image
        self.trace = trace
        self.config = config or SimConfig()
        self.metrics = SimMetrics()
        self.fetch = FetchState()
        self.depack = DepackState()
        self.btb = BranchUnit(self.config.btb_entries, CHUNK)
        self.cache = ICache(self.config.cache_size, self.config.line_size, self.config.perfect_icache)
        self.predictions: dict[int, int] = {}
        self.index_of = image.index_of()
        self.delivered = []
        self.penalty = 0
        self.log_enabled = log
        self.log: list[str] = []
        self.pos = 0
        if len(trace):
            self._redirect(image.addr_map[trace[0].index])

    def _redirect(self, addr: int) -> None:
        self.depack.redirect(addr)
        f = self.fetch
        f.cc = addr - addr % CHUNK
        f.entry_offset = addr % CHUNK
        f.target_reg = 0
        f.fetch_enable = True
        f.pending_miss = 0
        f.miss_served = False
        f.straddle = False
        self.predictions.clear()

    def check_invariants(self) -> None:
        d = self.depack
        n = d.n_valid()
        for k in range(n):
            if not d.valid[(d.rp + k) % 8]:
                raise SimulationFault(f"valid bytes are not a contiguous segment from rp={d.rp}")
        fill_reg = ((d.rp + n) % 8) >> 2
        if self.fetch.target_reg != fill_reg:
            raise SimulationFault(f"fetch targets register {'AB'[self.fetch.target_reg]} but the ring "
                                  f"fill point is in {'AB'[fill_reg]} (rp={d.rp}, valid={n})")
        if n == 0 and self.fetch.target_reg != d.write_bit:
            raise SimulationFault(f"drained queue: write bit {d.write_bit} != fetch target "
                                  f"{self.fetch.target_reg}")

    def _deliver(self, code: Code) -> None:
        if self.pos >= len(self.trace):
            raise SimulationFault(f"delivered {code.instr} at {code.addr:#x} past the end of the trace")
        entry = self.trace[self.pos]
        expect_addr = self.image.addr_map[entry.index]
        if code.addr != expect_addr:
            raise SimulationFault(f"trace position {self.pos}: depack delivered address {code.addr:#x}, "
                                  f"trace expects instruction {entry.index} at {expect_addr:#x}")
        try:
            ins = resolve_code(code, self.index_of, entry.index)
        except CorruptImageError as e:
            raise SimulationFault(str(e)) from None
        if ins != entry.instr:
            raise SimulationFault(f"trace position {self.pos}: delivered {ins}, trace has {entry.instr}")
        self.delivered.append(ins)
        self.metrics.delivered_instructions += 1
        self.pos += 1
        if ins.opcode in CONTROL:
            nxt = self.image.addr_map[self.trace[self.pos].index] if self.pos < len(self.trace) else None
            predicted = self.predictions.pop(code.addr, None)
            mispredict, target = resolve_branch(self.btb, code, entry.outcome, nxt, predicted)
            if target is not None:
                self._redirect(target)
            if mispredict:
                self.metrics.mispredict_flushes += 1
                self.penalty = self.config.mispredict_penalty

    def step(self) -> None:
        m = self.metrics
        m.cycles += 1
        self.check_invariants()
        if self.penalty:
            self.penalty -= 1
            self._log("flush", None)
            return
        action = fetch_step(self.fetch, self.depack, self.btb, self.cache, self.image, m,
                            self.config.miss_latency, self.predictions)
        code = depack_step(self.depack, self.image.scheme, self.config.full_bypass)
        self.depack.fresh.clear()
        if code is not None:
            m.depack_cycles += 1
            if code.instr is None:
                m.pad_skips += 1
            else:
                self._deliver(code)
        self._log(action, code)

    def _log(self, action: str, code: Code | None) -> None:
        if not self.log_enabled:
            return
        if code is None:
            what = "-"
        elif code.instr is None:
            what = "PAD"
        else:
            what = str(self.delivered[-1]) if self.delivered else str(code.instr)
        d = self.depack
        self.log.append(f"{self.metrics.cycles} | {action} | {d.rp} | {d.pc:#x} | {what}")

    def run(self) -> SimResult:
        limit = self.config.max_cycles or (64 * len(self.trace) + 1000
                                           + len(self.trace) * (self.config.miss_latency
                                                                + self.config.mispredict_penalty))
        while self.pos < len(self.trace):
            if self.metrics.cycles >= limit:
                raise SimulationFault(f"no progress after {limit} cycles (delivered {self.pos} "
                                      f"of {len(self.trace)})")
            self.step()
        return SimResult(self.metrics, self.delivered, self.log)


def simulate(image: CompressedImage, trace: DynTrace, config: SimConfig | None = None,
             log: bool = False) -> SimResult:
    return FrontEnd(image, trace, config, log).run()


def simulate_baseline(program, trace: DynTrace, config: SimConfig | None = None) -> SimResult:
    """Fixed-length front end: one 4-byte fetch and one BTB lookup per instruction."""
    config = config or SimConfig()
    prog = to_program(program)
    words = [encode_full(i) for i in prog]
    cache = ICache(config.cache_size, config.line_size, config.perfect_icache)
    btb = BranchUnit(config.btb_entries, 4)
    m = SimMetrics()
    delivered = []
    n = len(trace)
    for k, e in enumerate(trace):
        addr = 4 * e.index
        if cache.access(addr):
            m.icache_hits += 1
        else:
            m.icache_misses += 1
            m.stall_cycles_miss += config.miss_latency
            m.cycles += config.miss_latency
        m.cycles += 1
        m.chunk_fetches += 1
        m.bytes_fetched += 4
        m.btb_lookups += 1
        try:
            ins = decode_full(words[e.index])
        except DecodeError as err:
            raise SimulationFault(str(err)) from None
        if ins != e.instr:
            raise SimulationFault(f"baseline fetched {ins} at {addr:#x}, trace has {e.instr}")
        delivered.append(ins)
        m.delivered_instructions += 1
        entry = btb.lookup(addr)
        if ins.opcode in CONTROL:
            taken = e.outcome is Outcome.TAKEN
            nxt = 4 * trace[k + 1].index if k + 1 < n else None
            btb.update(addr, addr, addr + 4, taken, nxt if taken else None)
            predicted = entry.target if entry is not None and entry.predict_taken else addr + 4
            if nxt is not None and predicted != nxt:
                m.mispredict_flushes += 1
                m.cycles += config.mispredict_penalty
    return SimResult(m, delivered, [])


def metrics_dict(m: SimMetrics) -> dict:
    return asdict(m)
