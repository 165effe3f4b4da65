"""Command-line driver.

Subcommands: `compile` checks sources and can dump the elaborated tables,
`emit-sv` writes Verilog, `emit-gallina` writes Coq proof scripts, `prove`
discharges every obligation, and `report` summarizes cached proofs per
hierarchy level. Sources come from positional paths or from a tlv.toml
project file (see config.py for its schema).

Exit codes: 0 when every obligation is proved, 1 when any is disproved,
2 when any is unknown, 3 on compile errors.
"""

from __future__ import annotations

import functools
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click

from . import __version__, gallina, obligations
from .config import Config, load_config
from .design import Design, elaborate
from .obligations import ObligationResult, ProofCache, ProveReport
from .parser import parse_files
from .rtl import emit_rtl
from .seqrun import RunLimits
from .source import CompileError

DEFAULT_CONFIG = "tlv.toml"


@click.group()
@click.version_option(__version__, prog_name="tlvc")
def main() -> None:
    """Compile transaction-level designs, emit RTL, and prove coverage."""


def _common(fn):
    fn = click.option("--top", help="Build command to elaborate when several exist.")(fn)
    fn = click.option(
        "--config",
        "config_path",
        type=click.Path(exists=True, dir_okay=False),
        help=f"Project file (default: ./{DEFAULT_CONFIG} when present).",
    )(fn)
    fn = click.argument("paths", nargs=-1, type=click.Path(exists=True, dir_okay=False))(fn)
    return fn


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CompileError as err:
            for diag in err.diagnostics:
                click.echo(str(diag), err=True)
            sys.exit(3)

    return wrapper


def _load_project(paths, config_path, top) -> tuple[Config, list[str], Design]:
    if config_path:
        cfg = load_config(config_path)
    elif os.path.exists(DEFAULT_CONFIG):
        cfg = load_config(DEFAULT_CONFIG)
    else:
        cfg = Config()
    files = [str(p) for p in paths] or list(cfg.files)
    if not files:
        raise CompileError(
            f"no input files: pass source paths or list design.files in {DEFAULT_CONFIG}"
        )
    unit = parse_files(files)
    dsn = elaborate(
        unit,
        top=top or cfg.top,
        sva_activation_bound=cfg.sva_activation_bound,
        sva_trace_cycles=cfg.sva_trace_cycles,
    )
    return cfg, files, dsn


def _limits(cycles: int | None, cfg: Config) -> RunLimits:
    max_cycles = cycles if cycles is not None else cfg.max_cycles
    if max_cycles is None:
        return RunLimits()
    return RunLimits(max_cycles=max_cycles)


# -- compile ------------------------------------------------------------------


def _dump_ir(dsn: Design) -> str:
    lines = ["instances:"]
    for inst in dsn.instance_order():
        clusters = " ".join(c.name for c in inst.clusters)
        lines.append(f"  {inst.path or '(top)'}: {clusters}")
    lines.append("signals:")
    for flat in sorted(dsn.signals):
        info = dsn.signals[flat]
        shape = f"[{info.width}]" + (f"[{info.depth}]" if info.depth is not None else "")
        lines.append(f"  {flat}{shape}  {info.klass}")
    if dsn.comb_order:
        lines.append("comb order:")
        lines.append("  " + " -> ".join(dsn.comb_order))
    if dsn.hardware_trs:
        lines.append("hardware transactions:")
        for tr in dsn.hardware_trs:
            lines.append(f"  {tr.qual}  ({len(tr.sites)} sites)")
    if dsn.stimulus_trs:
        lines.append("stimulus transactions:")
        for qual in dsn.stimulus_trs:
            lines.append(f"  {qual}")
    if dsn.datapaths:
        lines.append("datapaths:")
        for qual, assigns in dsn.datapaths.items():
            lines.append(f"  {qual}  ({len(assigns)} assigns)")
    if dsn.vtrs:
        lines.append("sequences:")
        for qual, vtr in dsn.vtrs.items():
            lines.append(f"  {qual}: " + " ".join(vtr.states))
    if dsn.covers:
        lines.append("covers:")
        for qual, conds in dsn.covers.items():
            lines.append(f"  {qual}: " + (" && ".join(conds) if conds else "(empty)"))
    return "\n".join(lines)


@main.command("compile")
@_common
@click.option("--dump-ir", is_flag=True, help="Print the elaborated design tables.")
@_guarded
def cmd_compile(paths, config_path, top, dump_ir):
    """Parse and elaborate sources, reporting any diagnostics."""
    _, _, dsn = _load_project(paths, config_path, top)
    if dump_ir:
        click.echo(_dump_ir(dsn))
        return
    click.echo(
        f"ok: {len(dsn.signals)} signals, {len(dsn.hardware_trs)} hardware transactions, "
        f"{len(dsn.vtrs)} sequences, {len(dsn.covers)} cover points"
    )


# -- emitters -------------------------------------------------------------------


@main.command("emit-sv")
@_common
@click.option(
    "--outdir",
    default="rtl_out",
    show_default=True,
    type=click.Path(file_okay=False),
    help="Directory for the generated .v files.",
)
@_guarded
def cmd_emit_sv(paths, config_path, top, outdir):
    """Write synthesizable Verilog, one file per module."""
    _, _, dsn = _load_project(paths, config_path, top)
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in emit_rtl(dsn).items():
        (out / name).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out / name}")


@main.command("emit-gallina")
@_common
@click.option(
    "--outdir",
    default="proof_out",
    show_default=True,
    type=click.Path(file_okay=False),
    help="Directory for the proof scripts (they land under OUTDIR/coq/).",
)
@click.option("--budget-bits", type=int, default=None, help="Enumeration budget per obligation.")
@click.option("--cycles", type=int, default=None, help="Cycle budget per sequence run.")
@_guarded
def cmd_emit_gallina(paths, config_path, top, outdir, budget_bits, cycles):
    """Write Coq proof scripts and a _CoqProject manifest."""
    cfg, _, dsn = _load_project(paths, config_path, top)
    budget = budget_bits if budget_bits is not None else cfg.budget_bits
    limits = _limits(cycles, cfg)
    report = obligations.prove_all(dsn, limits, budget)
    emission = gallina.emit_coq(dsn, report, budget, limits)
    out = Path(outdir) / "coq"
    out.mkdir(parents=True, exist_ok=True)
    for name, text in emission.files.items():
        (out / name).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out / name}")
    for warning in emission.warnings:
        click.echo(f"warning: {warning}", err=True)


# -- prove ----------------------------------------------------------------------


def _prove_worker(files, top, sva_bound, sva_trace, tops, budget_bits, max_cycles, cache_dir, reuse):
    """Re-elaborate in a worker process and prove one chunk of top sequences."""
    unit = parse_files(files)
    dsn = elaborate(unit, top=top, sva_activation_bound=sva_bound, sva_trace_cycles=sva_trace)
    cache = ProofCache(cache_dir, readonly=True) if cache_dir else None
    before = set(cache.entries) if cache else set()
    limits = RunLimits(max_cycles=max_cycles) if max_cycles is not None else RunLimits()
    report = obligations.prove_all(dsn, limits, budget_bits, cache, only=list(tops), reuse=reuse)
    new = {k: v for k, v in cache.entries.items() if k not in before} if cache else {}
    return report, new


def _prove_parallel(
    dsn, files, top, cfg, tops, jobs, budget, max_cycles, directory, reuse=True
) -> tuple[ProveReport, dict[str, dict]]:
    jobs = min(jobs, len(tops))
    chunks = [tops[i::jobs] for i in range(jobs)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(
                _prove_worker,
                files,
                top,
                cfg.sva_activation_bound,
                cfg.sva_trace_cycles,
                chunk,
                budget,
                max_cycles,
                directory,
                reuse,
            )
            for chunk in chunks
        ]
        outcomes = [f.result() for f in futures]

    merged = ProveReport()
    new_entries: dict[str, dict] = {}
    results_by_top: dict[str, list[ObligationResult]] = {}
    runs_by_top = {}
    for report, new in outcomes:
        for r in report.results:
            results_by_top.setdefault(r.top, []).append(r)
        for line in report.runs:
            runs_by_top[line.top] = line
        merged.cycles_executed += report.cycles_executed
        merged.cycles_saved += report.cycles_saved
        merged.sequences_executed.update(report.sequences_executed)
        merged.sequences_replayed.update(report.sequences_replayed)
        merged.from_cache += report.from_cache
        new_entries.update(new)
    for t in tops:
        merged.results.extend(results_by_top.get(t, []))
        if t in runs_by_top:
            merged.runs.append(runs_by_top[t])

    reached: set[str] = set()
    for t in tops:
        reached.update(obligations.static_covers(dsn, t))
    for cp in dsn.covers:
        if cp not in reached:
            merged.results.append(
                ObligationResult(top=None, cover=cp, verdict="unknown", reason="no sequence covers it")
            )
    return merged, new_entries


def _print_report(report: ProveReport) -> None:
    for r in report.results:
        line = f"{r.verdict.upper():9s} {r.describe()}"
        if r.method:
            line += f"  [{r.method}]"
        if r.witness:
            assigns = " ".join(f"{k}={v}" for k, v in sorted(r.witness.items()))
            line += f"  witness: {assigns}"
        elif r.reason:
            line += f"  ({r.reason})"
        click.echo(line)
    counts = report.counts()
    click.echo("")
    click.echo(
        f"{counts['proved']} proved, {counts['disproved']} disproved, "
        f"{counts['unknown']} unknown  ({report.total_time_ms():.0f} ms)"
    )
    if report.cycles_executed or report.cycles_saved:
        click.echo(
            f"cycles executed {report.cycles_executed}, saved by reuse {report.cycles_saved}"
        )
    if report.from_cache:
        click.echo(f"{report.from_cache} obligations proved from cache")


@main.command("prove")
@_common
@click.option(
    "--jobs",
    "-j",
    type=int,
    default=None,
    help="Worker processes for proving; compilation stays single-threaded.",
)
@click.option("--budget-bits", type=int, default=None, help="Enumeration budget per obligation.")
@click.option("--cycles", type=int, default=None, help="Cycle budget per sequence run.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable report on stdout.")
@click.option("--no-reuse", is_flag=True, help="Re-execute called sequences instead of replaying summaries.")
@click.option("--no-cache", is_flag=True, help="Ignore and do not update the proof cache.")
@click.option(
    "--cache-dir",
    type=click.Path(file_okay=False),
    default=None,
    help="Proof cache directory (overrides config and TLVC_CACHE).",
)
@_guarded
def cmd_prove(paths, config_path, top, jobs, budget_bits, cycles, as_json, no_reuse, no_cache, cache_dir):
    """Discharge every proof obligation and print verdicts."""
    cfg, files, dsn = _load_project(paths, config_path, top)
    budget = budget_bits if budget_bits is not None else cfg.budget_bits
    limits = _limits(cycles, cfg)
    jobs = jobs if jobs is not None else cfg.jobs
    directory = None if no_cache else (cache_dir or cfg.cache_dir)

    tops = obligations.top_sequences(dsn)
    if jobs > 1 and len(tops) > 1:
        report, new_entries = _prove_parallel(
            dsn, files, top or cfg.top, cfg, tops, jobs, budget, limits.max_cycles, directory,
            reuse=not no_reuse,
        )
        if directory and new_entries:
            cache = ProofCache(directory)
            for key, record in new_entries.items():
                cache.put(key, record)
            cache.save()
    else:
        cache = ProofCache(directory) if directory else None
        report = obligations.prove_all(dsn, limits, budget, cache, reuse=not no_reuse)

    if as_json:
        click.echo(report.to_json())
    else:
        _print_report(report)
    sys.exit(report.exit_code())


# -- report ---------------------------------------------------------------------


@main.command("report")
@_common
@click.option(
    "--cache-dir",
    type=click.Path(file_okay=False),
    default=None,
    help="Proof cache directory to summarize.",
)
@_guarded
def cmd_report(paths, config_path, top, cache_dir):
    """Summarize cached proof coverage per hierarchy level."""
    cfg, _, dsn = _load_project(paths, config_path, top)
    cache = ProofCache(cache_dir or cfg.cache_dir, readonly=True)
    per_level: dict[int, list[tuple[str, str, bool]]] = {}
    for t in obligations.top_sequences(dsn):
        levels = obligations.cover_levels(dsn, t)
        for cp in obligations.static_covers(dsn, t):
            key = obligations.closure_key(dsn, t, cp)
            proved = cache.get(key) is not None
            per_level.setdefault(levels[cp], []).append((t, cp, proved))

    click.echo(f"proof coverage from {cache.path}")
    total = 0
    proved_total = 0
    for level in sorted(per_level):
        entries = per_level[level]
        done = sum(1 for _, _, p in entries if p)
        total += len(entries)
        proved_total += done
        click.echo(f"  level {level}: {done}/{len(entries)} proved")
        for t, cp, p in entries:
            if not p:
                click.echo(f"    missing {t} :: {cp}")
    click.echo(f"total: {proved_total}/{total} proved")


if __name__ == "__main__":
    main()
