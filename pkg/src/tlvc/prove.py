"""Validity checking: normalization first, bounded enumeration second.

Terms normalize as they are built, so a claim that reduces to the constant 1
is proved outright. Otherwise, when the free variables span at most
`budget_bits` bits in total, every valuation is enumerated with a compiled
evaluator. Above the budget the verdict is unknown.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from . import terms
from .terms import Term

DEFAULT_BUDGET_BITS = 20


@dataclass(frozen=True)
class CheckResult:
    verdict: str  # "valid" | "invalid" | "unknown"
    witness: dict[str, int] | None = None
    enumerated: int = 0
    reason: str = ""

    @property
    def is_valid(self) -> bool:
        return self.verdict == "valid"


def check_valid(claim: Term, budget_bits: int = DEFAULT_BUDGET_BITS) -> CheckResult:
    """Decide whether a 1-bit claim holds for every valuation of its variables."""
    if claim.width != 1:
        raise ValueError("claims must be 1-bit terms")
    if claim.kind == "const":
        if claim.value == 1:
            return CheckResult("valid")
        return CheckResult("invalid", witness={})
    free = terms.free_vars(claim)
    total_bits = sum(free.values())
    if total_bits > budget_bits:
        return CheckResult(
            "unknown",
            reason=f"free variables span {total_bits} bits, over the {budget_bits}-bit budget",
        )
    names = list(free)
    fn = terms.compile_term(claim, names)
    count = 0
    for values in itertools.product(*(range(1 << free[name]) for name in names)):
        count += 1
        if not fn(*values):
            return CheckResult("invalid", witness=dict(zip(names, values)), enumerated=count)
    return CheckResult("valid", enumerated=count)


def implies(assumption: Term, conclusion: Term) -> Term:
    """The claim `assumption -> conclusion` as a term."""
    return terms.or_(terms.not_(assumption), conclusion)
