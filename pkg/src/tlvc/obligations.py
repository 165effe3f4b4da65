"""Proof obligations and their discharge.

Every coverage point reachable from a top-level sequence yields one
obligation: along each path that records the cover, the conjunction of its
conditions must hold under that path's assumptions. Obligations are keyed by
a hash of everything their verdict depends on, so an unchanged design proves
from the cache without executing a single cycle.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from collections import Counter
from dataclasses import dataclass, field

from . import __version__, terms
from .design import (
    Design,
    LoweredTr,
    VApplyTr,
    VAssigns,
    VCallVtr,
    VCover,
    VDrive,
    VExit,
    VFork,
    VGoto,
    VRandom,
    VWait,
    expand_sites,
)
from .engine import Engine
from .prove import DEFAULT_BUDGET_BITS, check_valid, implies
from .seqrun import (
    CoverHit,
    Ctx,
    NullSummaryStore,
    RunLimits,
    SummaryStore,
    initial_snapshot,
    run_vtr,
)

VERDICT_ORDER = ("proved", "disproved", "unknown")


@dataclass(frozen=True)
class ObligationResult:
    top: str | None  # None when no sequence reaches the cover point
    cover: str
    verdict: str  # "proved" | "disproved" | "unknown"
    method: str = ""  # "normalized" | "enumerated" | "cached" | ""
    hits: int = 0
    witness: dict[str, int] | None = None
    reason: str = ""
    key: str = ""
    time_ms: float = 0.0

    def describe(self) -> str:
        where = self.top if self.top is not None else "(unreachable)"
        return f"{where} :: {self.cover}"


@dataclass(frozen=True)
class RunSummaryLine:
    top: str
    cycles: int
    paths_exited: int
    unknown: str | None
    # widest value drawn at each `random` execution slot, across all paths
    random_profile: tuple[int, ...] = ()
    run_ms: float = 0.0


@dataclass
class ProveReport:
    results: list[ObligationResult] = field(default_factory=list)
    runs: list[RunSummaryLine] = field(default_factory=list)
    cycles_executed: int = 0
    cycles_saved: int = 0
    sequences_executed: Counter = field(default_factory=Counter)
    sequences_replayed: Counter = field(default_factory=Counter)
    from_cache: int = 0

    def verdict(self) -> str:
        if any(r.verdict == "disproved" for r in self.results):
            return "disproved"
        if any(r.verdict == "unknown" for r in self.results):
            return "unknown"
        return "proved"

    def exit_code(self) -> int:
        return {"proved": 0, "disproved": 1, "unknown": 2}[self.verdict()]

    def counts(self) -> dict[str, int]:
        tally = {v: 0 for v in VERDICT_ORDER}
        for r in self.results:
            tally[r.verdict] += 1
        return tally

    def total_time_ms(self) -> float:
        discharge = sum(r.time_ms for r in self.results)
        runs = sum(line.run_ms for line in self.runs)
        return discharge + runs

    def to_json(self) -> str:
        blob = {
            "version": __version__,
            "verdict": self.verdict(),
            "counts": self.counts(),
            "total_time_ms": round(self.total_time_ms(), 3),
            "cycles_executed": self.cycles_executed,
            "cycles_saved_by_reuse": self.cycles_saved,
            "from_cache": self.from_cache,
            "sequences_executed": dict(self.sequences_executed),
            "sequences_replayed": dict(self.sequences_replayed),
            "runs": [
                {
                    "top": line.top,
                    "cycles": line.cycles,
                    "paths_exited": line.paths_exited,
                    "unknown": line.unknown,
                    "random_profile": list(line.random_profile),
                    "run_ms": round(line.run_ms, 3),
                }
                for line in self.runs
            ],
            "obligations": [
                {
                    "name": r.describe(),
                    "top": r.top,
                    "cover": r.cover,
                    "verdict": r.verdict,
                    "method": r.method,
                    "cached": r.method == "cached",
                    "hits": r.hits,
                    "witness": r.witness,
                    "reason": r.reason,
                    "key": r.key,
                    "time_ms": round(r.time_ms, 3),
                }
                for r in self.results
            ],
        }
        return json.dumps(blob, indent=2)


# -- obligation enumeration -----------------------------------------------------


def top_sequences(design: Design) -> list[str]:
    """Sequences that no other sequence calls, in declaration order."""
    called: set[str] = set()
    for vtr in design.vtrs.values():
        for qual in _called_quals(vtr.states):
            called.add(qual)
    return [qual for qual in design.vtrs if qual not in called]


def _called_quals(states: dict[str, tuple]) -> list[str]:
    out: list[str] = []

    def walk(stmts) -> None:
        for stmt in stmts:
            if isinstance(stmt, VCallVtr):
                out.append(stmt.qual)
            elif isinstance(stmt, VWait):
                walk(stmt.body)
            elif isinstance(stmt, VFork):
                for branch in stmt.branches:
                    walk(branch)

    for body in states.values():
        walk(body)
    return out


def static_covers(design: Design, top: str) -> list[str]:
    """Cover points a sequence can record, via its static call closure."""
    seen_vtrs: set[str] = set()
    covers: list[str] = []
    seen_covers: set[str] = set()

    def walk_stmts(stmts) -> None:
        for stmt in stmts:
            if isinstance(stmt, VCover):
                if stmt.qual not in seen_covers:
                    seen_covers.add(stmt.qual)
                    covers.append(stmt.qual)
            elif isinstance(stmt, VWait):
                walk_stmts(stmt.body)
            elif isinstance(stmt, VFork):
                for branch in stmt.branches:
                    walk_stmts(branch)
            elif isinstance(stmt, VCallVtr):
                walk_vtr(stmt.qual)

    def walk_vtr(qual: str) -> None:
        if qual in seen_vtrs:
            return
        seen_vtrs.add(qual)
        vtr = design.vtrs[qual]
        for body in vtr.states.values():
            walk_stmts(body)

    walk_vtr(top)
    return covers


def cover_levels(design: Design, top: str) -> dict[str, int]:
    """Call-graph depth of the sequence declaring each cover, from `top` (depth 0)."""

    def own_covers(states: dict[str, tuple]) -> list[str]:
        out: list[str] = []

        def walk(stmts) -> None:
            for stmt in stmts:
                if isinstance(stmt, VCover):
                    out.append(stmt.qual)
                elif isinstance(stmt, VWait):
                    walk(stmt.body)
                elif isinstance(stmt, VFork):
                    for branch in stmt.branches:
                        walk(branch)

        for body in states.values():
            walk(body)
        return out

    levels: dict[str, int] = {}
    depth_of = {top: 0}
    frontier = [top]
    while frontier:
        next_frontier: list[str] = []
        for qual in frontier:
            vtr = design.vtrs[qual]
            for cp in own_covers(vtr.states):
                if cp not in levels or depth_of[qual] < levels[cp]:
                    levels[cp] = depth_of[qual]
            for callee in _called_quals(vtr.states):
                if callee not in depth_of:
                    depth_of[callee] = depth_of[qual] + 1
                    next_frontier.append(callee)
        frontier = next_frontier
    return levels


# -- dependency closure hashing ---------------------------------------------------


def _ser_term(t) -> object:
    return terms.serialize(t, None)


def _ser_site(site) -> object:
    if site.assign is not None:
        a = site.assign
        target = (
            "assign",
            a.flat,
            a.width,
            a.depth,
            _ser_term(a.index) if a.index is not None else None,
            _ser_term(a.rhs),
        )
    elif site.cond is not None:
        target = ("drive", site.cond)
    else:
        target = ("apply", site.sub.qual if site.sub else "")
    return (site.action, list(site.guards), site.registered, target)


def _ser_tr(tr: LoweredTr) -> object:
    return (tr.qual, tr.hardware, [_ser_site(s) for s in expand_sites(tr)])


def _ser_stmt(stmt) -> object:
    if isinstance(stmt, VAssigns):
        return (
            "assign",
            stmt.name,
            [
                (
                    a.flat,
                    _ser_term(a.index) if a.index is not None else None,
                    _ser_term(a.rhs),
                )
                for a in stmt.assigns
            ],
        )
    if isinstance(stmt, VDrive):
        return ("drive", stmt.cond)
    if isinstance(stmt, VApplyTr):
        return ("apply", _ser_tr(stmt.tr))
    if isinstance(stmt, VCallVtr):
        return ("call", stmt.qual)
    if isinstance(stmt, VGoto):
        return ("goto", stmt.state)
    if isinstance(stmt, VWait):
        return ("wait", stmt.cond, [_ser_stmt(s) for s in stmt.body])
    if isinstance(stmt, VRandom):
        return ("random", stmt.flat, stmt.width)
    if isinstance(stmt, VCover):
        return ("cover", stmt.qual, list(stmt.conds))
    if isinstance(stmt, VExit):
        return ("exit",)
    if isinstance(stmt, VFork):
        return ("fork", [[_ser_stmt(s) for s in branch] for branch in stmt.branches])
    raise TypeError(f"unserializable statement {type(stmt).__name__}")


def closure_key(design: Design, top: str, cover: str) -> str:
    """Hash of everything the (top, cover) verdict depends on."""
    reachable: set[str] = set()

    def collect(qual: str) -> None:
        if qual in reachable:
            return
        reachable.add(qual)
        for callee in _called_quals(design.vtrs[qual].states):
            collect(callee)

    collect(top)
    blob = {
        "tool": __version__,
        "top": top,
        "cover": [cover, list(design.covers.get(cover, ()))],
        "signals": [
            (info.flat, info.width, info.depth, info.klass, info.is_condition)
            for info in sorted(design.signals.values(), key=lambda s: s.flat)
        ],
        "comb": [(flat, _ser_term(design.comb_equations[flat])) for flat in design.comb_order],
        "hardware": [_ser_tr(tr) for tr in design.hardware_trs],
        "sequences": [
            (
                qual,
                design.vtrs[qual].first_state,
                [
                    (state, [_ser_stmt(s) for s in body])
                    for state, body in design.vtrs[qual].states.items()
                ],
            )
            for qual in sorted(reachable)
        ],
    }
    text = json.dumps(blob, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# -- proof cache ------------------------------------------------------------------


class ProofCache:
    """Persistent store of proved obligations, keyed by closure hash."""

    FILENAME = "proofs.json"

    def __init__(self, directory: str, readonly: bool = False):
        self.directory = directory
        self.path = os.path.join(directory, self.FILENAME)
        self.entries: dict[str, dict] = {}
        self.dirty = False
        self.readonly = readonly
        self._load()

    def _load(self) -> None:
        try:
            with open(self.path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, ValueError):
            return
        if not isinstance(data, dict) or data.get("version") != __version__:
            return
        proofs = data.get("proofs")
        if isinstance(proofs, dict):
            self.entries = {k: v for k, v in proofs.items() if isinstance(v, dict)}

    def get(self, key: str) -> dict | None:
        return self.entries.get(key)

    def put(self, key: str, record: dict) -> None:
        self.entries[key] = record
        self.dirty = True

    def save(self) -> None:
        if self.readonly or not self.dirty:
            return
        os.makedirs(self.directory, exist_ok=True)
        blob = {"version": __version__, "proofs": self.entries}
        tmp = self.path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(blob, fh, indent=2, sort_keys=True)
        os.replace(tmp, self.path)
        self.dirty = False


# -- discharge --------------------------------------------------------------------


def _discharge(
    cover: str,
    hits: list[CoverHit],
    aborted: list[CoverHit],
    run_unknown: str | None,
    budget_bits: int,
) -> tuple[str, str, dict[str, int] | None, str]:
    """Returns (verdict, method, witness, reason) for one obligation."""
    method = "normalized"
    unknown_reason = ""
    for hit in hits + aborted:
        goal = implies(hit.path_cond, terms.and_list(hit.conds))
        res = check_valid(goal, budget_bits)
        if res.verdict == "invalid":
            return (
                "disproved",
                "enumerated" if res.enumerated else "normalized",
                res.witness,
                f"cover at cycle {hit.cycle} can fail",
            )
        if res.verdict == "unknown":
            unknown_reason = res.reason
        elif res.enumerated:
            method = "enumerated"
    if run_unknown is not None:
        return ("unknown", "", None, run_unknown)
    if unknown_reason:
        return ("unknown", "", None, unknown_reason)
    if not hits:
        return ("unknown", "", None, "never reached by this sequence")
    return ("proved", method, None, "")


def _random_profile(outcome) -> tuple[int, ...]:
    """Per random-execution slot, the widest value any path drew there."""
    widths: list[int] = []
    for exit_path in outcome.exits:
        for i, (_, width) in enumerate(exit_path.snap.randoms):
            if i == len(widths):
                widths.append(width)
            elif width > widths[i]:
                widths[i] = width
    return tuple(widths)


def prove_all(
    design: Design,
    limits: RunLimits | None = None,
    budget_bits: int = DEFAULT_BUDGET_BITS,
    cache: ProofCache | None = None,
    only: list[str] | None = None,
    reuse: bool = True,
) -> ProveReport:
    """Discharge every obligation.

    `only` restricts the run to the named top sequences; `reuse=False` turns
    off summary replay so every called sequence body re-executes.
    """
    limits = limits or RunLimits()
    report = ProveReport()
    engine = Engine(design)
    summaries = SummaryStore() if reuse else NullSummaryStore()
    reached: set[str] = set()

    tops = top_sequences(design)
    if only is not None:
        wanted = set(only)
        tops = [top for top in tops if top in wanted]

    for top in tops:
        cover_list = static_covers(design, top)
        reached.update(cover_list)
        keyed = [(cp, closure_key(design, top, cp)) for cp in cover_list]
        if cache is not None and keyed and all(cache.get(key) for _, key in keyed):
            profile: tuple[int, ...] = ()
            for cp, key in keyed:
                cached = cache.get(key)
                assert cached is not None
                stored_profile = tuple(cached.get("random_profile", ()))
                if len(stored_profile) > len(profile):
                    profile = stored_profile
                report.results.append(
                    ObligationResult(
                        top=top,
                        cover=cp,
                        verdict="proved",
                        method="cached",
                        hits=int(cached.get("hits", 0)),
                        key=key,
                    )
                )
                report.from_cache += 1
            report.runs.append(
                RunSummaryLine(top=top, cycles=0, paths_exited=0, unknown=None, random_profile=profile)
            )
            continue

        ctx = Ctx(design, engine, limits, summaries)
        started = time.perf_counter()
        outcome = run_vtr(ctx, top, initial_snapshot(engine))
        run_ms = (time.perf_counter() - started) * 1000.0
        report.cycles_executed += ctx.stats.cycles
        report.cycles_saved += ctx.stats.saved_cycles
        report.sequences_executed.update(ctx.stats.executed)
        report.sequences_executed[top] += 1
        report.sequences_replayed.update(ctx.stats.replayed)
        profile = _random_profile(outcome)
        report.runs.append(
            RunSummaryLine(
                top=top,
                cycles=ctx.stats.cycles,
                paths_exited=len(outcome.exits),
                unknown=outcome.unknown,
                random_profile=profile,
                run_ms=run_ms,
            )
        )

        hits: dict[str, list[CoverHit]] = {}
        seen: set[CoverHit] = set()
        for exit_path in outcome.exits:
            for hit in exit_path.snap.covers:
                if hit in seen:
                    continue
                seen.add(hit)
                hits.setdefault(hit.qual, []).append(hit)
        aborted: dict[str, list[CoverHit]] = {}
        for hit in outcome.aborted_covers:
            if hit in seen:
                continue
            seen.add(hit)
            aborted.setdefault(hit.qual, []).append(hit)

        for cp, key in keyed:
            started = time.perf_counter()
            verdict, method, witness, reason = _discharge(
                cp, hits.get(cp, []), aborted.get(cp, []), outcome.unknown, budget_bits
            )
            result = ObligationResult(
                top=top,
                cover=cp,
                verdict=verdict,
                method=method,
                hits=len(hits.get(cp, [])),
                witness=witness,
                reason=reason,
                key=key,
                time_ms=(time.perf_counter() - started) * 1000.0,
            )
            report.results.append(result)
            if verdict == "proved" and cache is not None:
                cache.put(
                    key,
                    {
                        "top": top,
                        "cover": cp,
                        "hits": result.hits,
                        "method": method,
                        "random_profile": list(profile),
                    },
                )

    if only is None:
        for cp in design.covers:
            if cp not in reached:
                report.results.append(
                    ObligationResult(
                        top=None,
                        cover=cp,
                        verdict="unknown",
                        reason="no sequence covers it",
                    )
                )

    if cache is not None:
        cache.save()
    return report
