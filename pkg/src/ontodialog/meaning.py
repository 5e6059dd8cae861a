"""Meaning representations: numbered concept instances with filled roles.

One format serves text and gesture channels. Canonical serialization is total
and deterministic (head frame first, remaining frames and properties sorted),
and instance renumbering makes transcript comparisons id-insensitive.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import KbValidationError
from .kb import Comparison, ProcedureValue, filler_to_sexpr, parse_filler
from .sexpr import Symbol, parse_one, write

_ID_RE = re.compile(r"^([A-Z][A-Z0-9-]*?)-(\d+)$")
_VALUE_CELL_RE = re.compile(r"^([A-Z][A-Z0-9-]*?-\d+)\.value$", re.IGNORECASE)


class InstanceRef(str):
    """A reference to a numbered instance, distinct from literal text."""

    __slots__ = ()


@dataclass(frozen=True)
class ValueCellRef:
    """A reference to an instance's value cell, e.g. MODALITY-1.value."""

    instance: str

    def __str__(self) -> str:
        return f"{self.instance}.value"


def split_instance_id(instance_id: str) -> tuple[str, int]:
    m = _ID_RE.match(instance_id)
    if not m:
        raise KbValidationError(f"malformed instance id {instance_id!r}")
    return m.group(1), int(m.group(2))


class Counters:
    """Per-concept monotone instance numbering, scoped to one session."""

    def __init__(self, counts: dict[str, int] | None = None):
        self.counts = dict(counts or {})

    def new_id(self, concept: str) -> InstanceRef:
        n = self.counts.get(concept, 0) + 1
        self.counts[concept] = n
        return InstanceRef(f"{concept}-{n}")

    def clone(self) -> "Counters":
        return Counters(self.counts)

    def adopt(self, other: "Counters") -> None:
        self.counts = dict(other.counts)


@dataclass
class MFrame:
    concept: str
    slots: dict[str, list] = field(default_factory=dict)

    def add(self, prop: str, value) -> None:
        values = self.slots.setdefault(prop, [])
        if value not in values:
            values.append(value)

    def set(self, prop: str, value) -> None:
        self.slots[prop] = [value]

    def get(self, prop: str):
        values = self.slots.get(prop)
        return values[0] if values else None


@dataclass
class MeaningRep:
    head: str = ""
    frames: dict[str, MFrame] = field(default_factory=dict)
    provenance: tuple[str, ...] = ()
    score: float = 1.0

    def new_frame(self, counters: Counters, concept: str) -> str:
        fid = counters.new_id(concept)
        self.frames[fid] = MFrame(concept)
        return fid

    def frame(self, fid: str) -> MFrame:
        return self.frames[fid]

    def referenced_ids(self) -> set[str]:
        out = set()
        for frame in self.frames.values():
            for values in frame.slots.values():
                for v in values:
                    if isinstance(v, InstanceRef):
                        out.add(str(v))
                    elif isinstance(v, ValueCellRef):
                        out.add(v.instance)
        return out

    def is_closed(self) -> bool:
        return all(ref in self.frames for ref in self.referenced_ids())

    def assert_closed(self) -> None:
        dangling = self.referenced_ids() - set(self.frames)
        if dangling:
            raise KbValidationError(f"meaning rep has dangling references: {sorted(dangling)}")


# ------------------------------------------------------------- serialization

def _value_to_sexpr(value):
    if isinstance(value, InstanceRef):
        return Symbol(str(value))
    if isinstance(value, ValueCellRef):
        return Symbol(str(value))
    return filler_to_sexpr(value)


def to_sexpr(rep: MeaningRep, renumber: dict[str, str] | None = None) -> list:
    ren = renumber or {}

    def rid(fid: str) -> str:
        return ren.get(fid, fid)

    def rvalue(v):
        if isinstance(v, InstanceRef):
            return Symbol(rid(str(v)))
        if isinstance(v, ValueCellRef):
            return Symbol(f"{rid(v.instance)}.value")
        return _value_to_sexpr(v)

    form: list = [Symbol("mrep"), [Symbol("head"), Symbol(rid(rep.head))]]
    order = sorted(rep.frames, key=lambda f: (f != rep.head, *split_instance_id(rid(f))))
    for fid in order:
        frame = rep.frames[fid]
        entry: list = [Symbol(rid(fid))]
        for prop in sorted(frame.slots):
            values = frame.slots[prop]
            if values:
                entry.append([Symbol(prop), *[rvalue(v) for v in values]])
        form.append(entry)
    return form


def canonical_text(rep: MeaningRep, renumber: dict[str, str] | None = None) -> str:
    return write(to_sexpr(rep, renumber))


def extend_renumber_map(rep: MeaningRep, mapping: dict[str, str],
                        counters: Counters | None = None) -> dict[str, str]:
    """Assign fresh per-concept numbers in deterministic traversal order.

    Reps sharing instances with earlier reps keep their assigned numbers, so
    coreference survives renumbering across a transcript.
    """
    counters = counters if counters is not None else Counters()

    def visit(fid: str) -> None:
        if fid in mapping or fid not in rep.frames:
            return
        concept, _ = split_instance_id(fid)
        mapping[fid] = str(counters.new_id(concept))
        frame = rep.frames[fid]
        for prop in sorted(frame.slots):
            for v in frame.slots[prop]:
                if isinstance(v, InstanceRef):
                    visit(str(v))
                elif isinstance(v, ValueCellRef):
                    visit(v.instance)

    visit(rep.head)
    for fid in sorted(rep.frames, key=split_instance_id):
        visit(fid)
    return mapping


def renumbered_text(rep: MeaningRep) -> str:
    """Canonical text with numbering normalized within this rep alone."""
    return canonical_text(rep, extend_renumber_map(rep, {}))


def reps_equivalent(a: MeaningRep, b: MeaningRep) -> bool:
    return renumbered_text(a) == renumbered_text(b)


# ------------------------------------------------------------------ parsing

def _value_from_sexpr(node):
    if isinstance(node, Symbol):
        m = _VALUE_CELL_RE.match(str(node))
        if m:
            return ValueCellRef(m.group(1).upper())
        if _ID_RE.match(str(node).upper()):
            return InstanceRef(str(node).upper())
    parsed = parse_filler(node)
    return parsed


def rep_from_text(text: str) -> MeaningRep:
    return rep_from_sexpr(parse_one(text))


def rep_from_sexpr(form) -> MeaningRep:
    if not (isinstance(form, list) and form and str(form[0]).lower() == "mrep"):
        raise KbValidationError("expected (mrep ...)")
    rep = MeaningRep()
    for entry in form[1:]:
        key = str(entry[0])
        if key.lower() == "head":
            rep.head = str(entry[1]).upper()
            continue
        fid = key.upper()
        concept, _ = split_instance_id(fid)
        frame = MFrame(concept)
        for slot in entry[1:]:
            prop = str(slot[0]).upper()
            for v in slot[1:]:
                frame.add(prop, _value_from_sexpr(v))
        rep.frames[fid] = frame
    if rep.head and rep.head not in rep.frames:
        raise KbValidationError(f"mrep head {rep.head} has no frame")
    return rep


__all__ = [
    "Counters", "InstanceRef", "MFrame", "MeaningRep", "ValueCellRef",
    "canonical_text", "extend_renumber_map", "renumbered_text",
    "rep_from_sexpr", "rep_from_text", "reps_equivalent",
    "split_instance_id", "to_sexpr", "Comparison", "ProcedureValue",
]
