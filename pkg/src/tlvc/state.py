"""Ordered symbolic state: flat signal name to term (or element tuple)."""

from __future__ import annotations

from typing import Iterator

from .resolve import elem_name
from .terms import Term


class StateList:
    """An insertion-ordered map of defined signals to symbolic values.

    Values are terms for scalars and tuples of terms for arrays. Updates are
    functional: `set` returns a new state, keeping the original position of
    an already-defined name.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries: dict[str, Term | tuple[Term, ...]] | None = None):
        self._entries: dict[str, Term | tuple[Term, ...]] = dict(entries) if entries else {}

    def set(self, name: str, value: Term | tuple[Term, ...]) -> "StateList":
        entries = dict(self._entries)
        entries[name] = value
        return StateList(entries)

    def set_many(self, updates: dict[str, Term | tuple[Term, ...]]) -> "StateList":
        if not updates:
            return self
        entries = dict(self._entries)
        entries.update(updates)
        return StateList(entries)

    def set_elem(self, name: str, index: int, value: Term) -> "StateList":
        current = self.get(name)
        assert isinstance(current, tuple)
        updated = current[:index] + (value,) + current[index + 1 :]
        return self.set(name, updated)

    def drop(self, name: str) -> "StateList":
        if name not in self._entries:
            return self
        entries = dict(self._entries)
        del entries[name]
        return StateList(entries)

    def get(self, name: str) -> Term | tuple[Term, ...]:
        try:
            return self._entries[name]
        except KeyError:
            raise KeyError(f"read of undefined signal {name!r}") from None

    def get_or(self, name: str, default: Term) -> Term:
        value = self._entries.get(name, default)
        assert not isinstance(value, tuple)
        return value

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def items(self):
        return self._entries.items()

    def env(self) -> dict[str, Term]:
        """Substitution environment: array entries expand per element."""
        env: dict[str, Term] = {}
        for name, value in self._entries.items():
            if isinstance(value, tuple):
                for k, term in enumerate(value):
                    env[elem_name(name, k)] = term
            else:
                env[name] = value
        return env

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v!r}" for k, v in self._entries.items())
        return f"StateList({inner})"
