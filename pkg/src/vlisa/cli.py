"""Command-line driver: profile, compress, disasm, simulate, report.

Exit codes: 0 success, 2 input error, 3 compression error, 4 simulation fault.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import config as C
from .codec import (
    CodecError,
    CompressError,
    compress,
    decompress,
    dump_image,
    load_image,
    resolve_code,
    static_scan,
    walk,
)
from .energy import compare
from .frontend import SimulationFault, metrics_csv, read_metrics_csv, simulate, simulate_baseline
from .interp import ExecError, gen_mix, run
from .isa import BRANCHES, IsaError, Opcode, assemble, format_asm
from .profile import (
    Profile,
    ProfileError,
    build_profile,
    build_scheme,
    coverage,
    parse_freqs,
    parse_trace,
    profile_from_freqs,
)
from .scheme import SchemeError

EXIT_INPUT, EXIT_COMPRESS, EXIT_SIM = 2, 3, 4


class CliError(Exception):
    def __init__(self, msg: str, code: int = EXIT_INPUT):
        super().__init__(msg)
        self.code = code


def _read(path: str, mode: str = "r"):
    try:
        with open(path, mode) as fh:
            return fh.read()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}") from None


def _write(path: str, data, mode: str = "w") -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, mode) as fh:
        fh.write(data)


def _config(args) -> dict:
    overrides = {}
    if getattr(args, "config", None):
        overrides.update(C.parse_config(_read(args.config)))
    for key in C.DEFAULTS:
        v = getattr(args, "opt_" + key, None)
        if v is not None:
            overrides[key] = v
    return C.resolve(overrides)


def _add_config_flags(p: argparse.ArgumentParser, keys=None) -> None:
    p.add_argument("--config", help="flat key=value config file")
    for key in keys or C.DEFAULTS:
        default = C.DEFAULTS[key]
        p.add_argument("--" + key.replace("_", "-"), dest="opt_" + key, metavar="V",
                       help=f"{C.HELP.get(key, key)} (default {default})")


def _coverage_lines(prof: Profile, cfg: dict) -> list[str]:
    frac, parts = coverage(prof, build_scheme(prof, C.layout(cfg)))
    lines = [f"coverage {100 * frac:.2f}%"]
    for op, f in parts.items():
        lines.append(f"  {op.name} {100 * f:.2f}%")
    return lines


def cmd_profile(args) -> int:
    cfg = _config(args)
    if args.from_freqs:
        prof = profile_from_freqs(parse_freqs(_read(args.from_freqs)), cfg["profile_scale"])
    elif args.program:
        _, trace = run(assemble(_read(args.program)), step_limit=cfg["step_limit"])
        prof = build_profile(trace)
    elif args.trace:
        prof = build_profile(parse_trace(_read(args.trace)))
    else:
        raise CliError("profile needs a trace file, --program or --from-freqs")
    text = prof.dumps()
    summary = "\n".join(_coverage_lines(prof, cfg)) + "\n"
    if args.output:
        _write(args.output, text)
        sys.stdout.write(summary)
    else:
        sys.stdout.write(text)
        sys.stderr.write(summary)
    return 0


def _scheme_for(program, args, cfg):
    if args.profile:
        prof = Profile.loads(_read(args.profile))
    else:
        _, trace = run(program, step_limit=cfg["step_limit"])
        prof = build_profile(trace)
    return build_scheme(prof, C.layout(cfg))


def cmd_compress(args) -> int:
    cfg = _config(args)
    program = assemble(_read(args.program))
    scheme = _scheme_for(program, args, cfg)
    try:
        image = compress(program, scheme)
    except CompressError as e:
        raise CliError(f"compression failed: {e}", EXIT_COMPRESS) from None
    if list(decompress(image)) != list(program):
        raise CliError("compressed image does not decompress to the program", EXIT_COMPRESS)
    report = static_scan(image)
    if report.violations:
        raise CliError("image breaks the one-branch-per-chunk rule", EXIT_COMPRESS)
    if args.output:
        _write(args.output, dump_image(image), "wb")
    sys.stdout.write(report.format())
    return 0


def cmd_disasm(args) -> int:
    image = load_image(_read(args.image, "rb"))
    if args.scheme:
        sys.stdout.write(image.scheme.dump())
    index_of = image.index_of()
    for code in walk(image):
        raw = image.data[code.addr:code.end].hex()
        if code.instr is None:
            text = "PAD"
        elif code.addr in index_of:
            i = index_of[code.addr]
            text = f"[{i}] {format_asm(resolve_code(code, index_of, i))}"
            if code.instr.opcode in BRANCHES:
                text += f"  # -> {code.end + code.instr.imm:#x}"
            elif code.instr.opcode is Opcode.J:
                text += f"  # -> {code.instr.jump_target:#x}"
        else:
            text = format_asm(code.instr)
        sys.stdout.write(f"{code.addr:06x}  {raw:<8}  {code.code_class.value:<7}  {text}\n")
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    if args.mix:
        program = gen_mix(parse_freqs(_read(args.mix)), cfg["mix_length"], cfg["seed"])
    elif args.program:
        program = list(assemble(_read(args.program)))
    else:
        raise CliError("simulate needs --program or --mix")
    try:
        state, trace = run(program, step_limit=cfg["step_limit"])
    except ExecError as e:
        raise CliError(f"program faulted: {e}") from None
    if args.image:
        image = load_image(_read(args.image, "rb"))
        if decompress(image) != list(program):
            raise CliError(f"{args.image} does not hold this program")
    else:
        try:
            image = compress(program, build_scheme(build_profile(trace), C.layout(cfg)))
        except CompressError as e:
            raise CliError(f"compression failed: {e}", EXIT_COMPRESS) from None
    sim = C.sim_config(cfg)
    try:
        comp = simulate(image, trace, sim, log=args.log)
        base = simulate_baseline(program, trace, sim)
    except SimulationFault as e:
        raise CliError(f"simulation fault: {e}", EXIT_SIM) from None
    if comp.delivered != trace.instructions or base.delivered != trace.instructions:
        raise CliError("front-end models disagree with the interpreter trace", EXIT_SIM)
    report = compare(comp.metrics, base.metrics, C.energy_params(cfg))
    comment = C.describe(cfg) + (" truncated_trace=1" if trace.truncated else "")
    out = args.output
    _write(os.path.join(out, "metrics.csv"),
           metrics_csv({"compressed": comp.metrics, "baseline": base.metrics}, comment))
    _write(os.path.join(out, "energy.csv"), report.to_csv(comment))
    _write(os.path.join(out, "energy.txt"), report.to_text())
    if args.log:
        _write(os.path.join(out, "cycles.log"), "cycle | fetch | rp | pc | delivered\n"
               + "\n".join(comp.log) + "\n")
    sys.stdout.write(report.to_text())
    return 0


def cmd_report(args) -> int:
    cfg = _config(args)
    rows = read_metrics_csv(_read(args.metrics))
    if "compressed" not in rows or "baseline" not in rows:
        raise CliError("metrics file needs 'compressed' and 'baseline' rows")
    report = compare(rows["compressed"], rows["baseline"], C.energy_params(cfg))
    if args.csv:
        sys.stdout.write(report.to_csv(C.describe(cfg)))
    else:
        sys.stdout.write(report.to_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vlisa", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("profile", help="build a profile from a trace, a program or a frequency table")
    p.add_argument("trace", nargs="?", help="trace file, one executed instruction per line")
    p.add_argument("--program", help="run this assembly program and profile its trace")
    p.add_argument("--from-freqs", help="'mnemonic percent' frequency table")
    p.add_argument("-o", "--output", help="profile output file (default stdout)")
    _add_config_flags(p, ["profile_scale", "step_limit"] + list(C.layout(C.DEFAULTS).as_dict()))
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("compress", help="compress a program into a VLI1 image")
    p.add_argument("program")
    p.add_argument("--profile", help="profile file (default: profile the program's own run)")
    p.add_argument("-o", "--output", help="image file to write")
    _add_config_flags(p, ["step_limit"] + list(C.layout(C.DEFAULTS).as_dict()))
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("disasm", help="list the codes in an image")
    p.add_argument("image")
    p.add_argument("--scheme", action="store_true", help="also dump the lookup tables")
    p.set_defaults(func=cmd_disasm)

    p = sub.add_parser("simulate", help="run both front-end models and the energy comparison")
    p.add_argument("--program", help="assembly program")
    p.add_argument("--image", help="precompressed image of --program")
    p.add_argument("--mix", help="frequency table; simulate a synthetic straight-line mix")
    p.add_argument("--log", action="store_true", help="write a per-cycle log")
    p.add_argument("-o", "--output", default="out", help="output directory (default ./out)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="energy report from a metrics CSV")
    p.add_argument("metrics")
    p.add_argument("--csv", action="store_true")
    _add_config_flags(p, [k for k in C.DEFAULTS if k.startswith("e_")])
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"vlisa: {e}", file=sys.stderr)
        return e.code
    except (IsaError, ProfileError, SchemeError, C.ConfigError, CodecError, ExecError) as e:
        print(f"vlisa: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
