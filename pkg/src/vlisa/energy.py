"""Linear per-event energy model for the fetch path.

Default per-event costs are illustrative abstract units, chosen so that an
instruction-cache access costs three times a BTB lookup (a 75:25 split of
the fetch-path energy between cache and branch prediction).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields

from .frontend import SimMetrics

COMPONENTS = ("icache", "btb", "depack", "fetch")


class EnergyError(ValueError):
    pass


@dataclass(frozen=True)
class EnergyParams:
    e_icache_access: float = 3.0
    e_btb_access: float = 1.0
    e_depack_cycle: float = 0.2
    e_fetch_cycle: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise EnergyError(f"{f.name} must be non-negative")

    def scaled(self, k: float) -> "EnergyParams":
        return EnergyParams(*(getattr(self, f.name) * k for f in fields(self)))


def account(metrics: SimMetrics, params: EnergyParams) -> dict[str, float]:
    stalls = metrics.stall_cycles_queue_full + metrics.stall_cycles_miss
    return {
        "icache": params.e_icache_access * metrics.chunk_fetches,
        "btb": params.e_btb_access * metrics.btb_lookups,
        "depack": params.e_depack_cycle * metrics.depack_cycles,
        "fetch": params.e_fetch_cycle * (metrics.chunk_fetches + stalls),
    }


def _ratio(a: float, b: float) -> float:
    if b == 0:
        return 1.0 if a == 0 else float("inf")
    return a / b


@dataclass
class EnergyReport:
    compressed: dict[str, float]
    baseline: dict[str, float]

    @property
    def compressed_total(self) -> float:
        return sum(self.compressed.values())

    @property
    def baseline_total(self) -> float:
        return sum(self.baseline.values())

    @property
    def relative(self) -> dict[str, float]:
        return {c: _ratio(self.compressed[c], self.baseline[c]) for c in COMPONENTS}

    @property
    def relative_total(self) -> float:
        return _ratio(self.compressed_total, self.baseline_total)

    @property
    def bars(self) -> dict[str, float]:
        """Each compressed component as a fraction of the baseline total (stacked-bar data)."""
        return {c: _ratio(self.compressed[c], self.baseline_total) for c in COMPONENTS}

    @property
    def saves_energy(self) -> bool:
        return self.compressed_total < self.baseline_total

    def to_csv(self, comment: str | None = None) -> str:
        out = io.StringIO()
        if comment:
            out.write(f"# {comment}\n")
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["component", "compressed", "baseline", "relative", "bar"])
        rel, bars = self.relative, self.bars
        for c in COMPONENTS:
            w.writerow([c, _fmt(self.compressed[c]), _fmt(self.baseline[c]), _fmt(rel[c]), _fmt(bars[c])])
        w.writerow(["total", _fmt(self.compressed_total), _fmt(self.baseline_total),
                    _fmt(self.relative_total), _fmt(self.relative_total)])
        return out.getvalue()

    def to_text(self) -> str:
        rows = [("component", "compressed", "baseline", "relative")]
        rel = self.relative
        for c in COMPONENTS:
            rows.append((c, _fmt(self.compressed[c]), _fmt(self.baseline[c]), _fmt(rel[c])))
        rows.append(("total", _fmt(self.compressed_total), _fmt(self.baseline_total),
                     _fmt(self.relative_total)))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(r[0].ljust(widths[0]) if i == 0 else r[i].rjust(widths[i])
                           for i in range(4)) for r in rows]
        lines.append(f"compressed total below baseline: {'yes' if self.saves_energy else 'no'}")
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def compare(compressed: SimMetrics, baseline: SimMetrics, params: EnergyParams | None = None) -> EnergyReport:
    if compressed.delivered_instructions != baseline.delivered_instructions:
        raise EnergyError(
            f"runs delivered different instruction counts ({compressed.delivered_instructions} vs "
            f"{baseline.delivered_instructions}); they are not over the same trace")
    params = params or EnergyParams()
    return EnergyReport(account(compressed, params), account(baseline, params))
