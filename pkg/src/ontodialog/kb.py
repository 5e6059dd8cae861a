"""Frame knowledge base: property-facet-filler frames with IS-A inheritance.

A frame maps properties to facets (value / default / sem / relaxable-to) to
filler lists. Frames containing coreferenced variables (NAME-#n) are
scriptlets; plain frames are basic concepts. Inheritance is whole-property
override: a local declaration of a property replaces every inherited facet
of that property.
"""

from __future__ import annotations

import datetime
import re
from dataclasses import dataclass, field

from .errors import KbSyntaxError, KbValidationError, UnknownConceptError
from .sexpr import Symbol, parse_all, write

FACETS = ("value", "default", "sem", "relaxable-to")
FACET_WEIGHTS = {"value": 1.0, "default": 1.0, "sem": 0.9, "relaxable-to": 0.6}

RELATIONS = ("GREATER-THAN", "LESS-THAN", "COMPARISON-RELATION")
_RELATION_GLYPHS = {">": "GREATER-THAN", "<": "LESS-THAN"}
_GLYPH_FOR = {"GREATER-THAN": ">", "LESS-THAN": "<"}

ROOTS = ("EVENT", "OBJECT", "PROPERTY")
RESERVED_DEICTICS = ("*speaker*", "*hearer*")

TIME_ROUTINES = ("find-anchor-time",)

_VAR_RE = re.compile(r"^([A-Z][A-Z0-9-]*)-#(\d+)$")
_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_CONCEPT_RE = re.compile(r"^[A-Z][A-Z0-9-]*$")


@dataclass(frozen=True)
class VariableRef:
    """A coreference variable NAME-#n, scoped to a single frame."""

    concept: str
    index: int

    def __str__(self) -> str:
        return f"{self.concept}-#{self.index}"


@dataclass(frozen=True)
class Comparison:
    """(GREATER-THAN x) / (LESS-THAN x) / (COMPARISON-RELATION x)."""

    relation: str
    operand: object

    def __str__(self) -> str:
        return f"({self.relation} {self.operand})"


@dataclass(frozen=True)
class ProcedureValue:
    """A procedural time value, optionally offset: ((find-anchor-time) -1 DAY)."""

    routine: str
    offset: int = 0
    unit: str | None = None


@dataclass(frozen=True)
class BoundFrame:
    """A variable-headed sub-frame filler, e.g. EVENT-#1 (AGENT HUMAN-#2)."""

    head: VariableRef
    bindings: tuple[tuple[str, object], ...] = ()

    def binding(self, prop: str):
        for p, v in self.bindings:
            if p == prop:
                return v
        return None


Filler = object  # str concept ref | VariableRef | BoundFrame | Comparison | ProcedureValue | literal


@dataclass
class Frame:
    head: str
    parents: tuple[str, ...] = ()
    slots: dict[str, dict[str, list]] = field(default_factory=dict)
    provenance: str = "kb"

    def fillers(self, prop: str, facet: str) -> list:
        return self.slots.get(prop, {}).get(facet, [])

    def iter_fillers(self):
        for prop, facets in self.slots.items():
            for facet, values in facets.items():
                for v in values:
                    yield prop, facet, v

    @property
    def is_scriptlet(self) -> bool:
        return any(_contains_variable(v) for _, _, v in self.iter_fillers())

    def triples(self) -> list[tuple]:
        """The (property, facet, filler) multiset, IS-A included."""
        out = [("IS-A", "value", p) for p in self.parents]
        out.extend(self.iter_fillers())
        return sorted(out, key=repr)


def _contains_variable(filler) -> bool:
    if isinstance(filler, VariableRef):
        return True
    if isinstance(filler, BoundFrame):
        return True
    if isinstance(filler, Comparison):
        return isinstance(filler.operand, VariableRef)
    return False


def _variables_of(filler):
    if isinstance(filler, VariableRef):
        yield filler
    elif isinstance(filler, BoundFrame):
        yield filler.head
        for _, v in filler.bindings:
            yield from _variables_of(v)
    elif isinstance(filler, Comparison):
        yield from _variables_of(filler.operand)


def _concepts_of(filler):
    if isinstance(filler, str) and not isinstance(filler, Symbol):
        return
    if isinstance(filler, VariableRef):
        yield filler.concept
    elif isinstance(filler, BoundFrame):
        yield filler.head.concept
        for _, v in filler.bindings:
            yield from _concepts_of(v)
    elif isinstance(filler, Comparison):
        yield from _concepts_of(filler.operand)
    elif isinstance(filler, Symbol):
        yield str(filler)


def parse_symbol_filler(token: str):
    """Classify a bare symbol: variable, date, or concept reference."""
    m = _VAR_RE.match(token)
    if m:
        return VariableRef(m.group(1), int(m.group(2)))
    if _DATE_RE.match(token):
        return datetime.date.fromisoformat(token)
    return Symbol(token.upper())


def parse_filler(node, line: int = 0):
    if isinstance(node, Symbol):
        text = str(node)
        if text.lower() in TIME_ROUTINES:
            return ProcedureValue(text.lower())
        return parse_symbol_filler(text.upper())
    if isinstance(node, (int, float, datetime.date)):
        return node
    if isinstance(node, str):
        return node
    if isinstance(node, list):
        if not node:
            raise KbSyntaxError(f"line {line}: empty filler")
        head = node[0]
        if isinstance(head, list):
            # ((routine) offset UNIT)
            if len(head) != 1 or not isinstance(head[0], Symbol):
                raise KbSyntaxError(f"line {line}: malformed procedure value")
            routine = str(head[0]).lower()
            offset, unit = 0, None
            if len(node) >= 2:
                offset = node[1]
                if not isinstance(offset, int):
                    raise KbSyntaxError(f"line {line}: procedure offset must be an integer")
            if len(node) >= 3:
                unit = str(node[2]).upper()
            return ProcedureValue(routine, offset, unit)
        token = str(head)
        rel = _RELATION_GLYPHS.get(token, token.upper())
        if rel in RELATIONS:
            if len(node) != 2:
                raise KbSyntaxError(f"line {line}: comparison takes one operand")
            return Comparison(rel, parse_filler(node[1], line))
        var = _VAR_RE.match(token.upper())
        if var:
            bindings = []
            for item in node[1:]:
                if not (isinstance(item, list) and len(item) == 2 and isinstance(item[0], Symbol)):
                    raise KbSyntaxError(f"line {line}: malformed bound-frame binding")
                bindings.append((str(item[0]).upper(), parse_filler(item[1], line)))
            return BoundFrame(VariableRef(var.group(1), int(var.group(2))), tuple(bindings))
        raise KbSyntaxError(f"line {line}: unrecognized filler {write(node)}")
    raise KbSyntaxError(f"line {line}: unrecognized filler {node!r}")


def filler_to_sexpr(filler):
    if isinstance(filler, VariableRef):
        return Symbol(str(filler))
    if isinstance(filler, BoundFrame):
        out = [Symbol(str(filler.head))]
        for prop, v in filler.bindings:
            out.append([Symbol(prop), filler_to_sexpr(v)])
        return out
    if isinstance(filler, Comparison):
        rel = filler.relation
        if not isinstance(filler.operand, VariableRef) and rel in _GLYPH_FOR:
            rel = _GLYPH_FOR[rel]
        return [Symbol(rel), filler_to_sexpr(filler.operand)]
    if isinstance(filler, ProcedureValue):
        if filler.offset or filler.unit:
            return [[Symbol(filler.routine)], filler.offset, Symbol(filler.unit or "DAY")]
        return [Symbol(filler.routine)]
    if isinstance(filler, datetime.date):
        return Symbol(filler.isoformat())
    return filler


class Ontology:
    """Immutable-after-load concept store (learning may append leaf frames)."""

    def __init__(self):
        self.frames: dict[str, Frame] = {}
        self.warnings: list[str] = []
        self._ancestor_cache: dict[str, dict[str, int]] = {}
        self._resolved_cache: dict[str, Frame] = {}

    def __contains__(self, name: str) -> bool:
        return name in self.frames

    def frame(self, name: str) -> Frame:
        try:
            return self.frames[name]
        except KeyError:
            raise UnknownConceptError(f"unknown concept {name}") from None

    def _ancestors(self, name: str) -> dict[str, int]:
        """Every ancestor (self included) mapped to its minimum IS-A distance."""
        cached = self._ancestor_cache.get(name)
        if cached is not None:
            return cached
        dist = {name: 0}
        frontier = [name]
        while frontier:
            nxt = []
            for c in frontier:
                for p in self.frame(c).parents:
                    d = dist[c] + 1
                    if p not in dist or d < dist[p]:
                        dist[p] = d
                        nxt.append(p)
            frontier = nxt
        self._ancestor_cache[name] = dist
        return dist

    def subsumes(self, ancestor: str, descendant: str) -> bool:
        self.frame(ancestor)
        return ancestor in self._ancestors(descendant)

    def resolved_frame(self, name: str) -> Frame:
        cached = self._resolved_cache.get(name)
        if cached is not None:
            return cached
        own = self.frame(name)
        slots: dict[str, dict[str, list]] = {}
        winner: dict[str, tuple[int, str]] = {}
        for ancestor, d in sorted(self._ancestors(name).items(), key=lambda kv: (kv[1], kv[0])):
            for prop, facets in self.frames[ancestor].slots.items():
                if prop not in winner:
                    winner[prop] = (d, ancestor)
                    slots[prop] = {f: list(vs) for f, vs in facets.items()}
        resolved = Frame(name, own.parents, slots, own.provenance)
        self._resolved_cache[name] = resolved
        return resolved

    def constraint_score(self, facets: dict[str, list], candidate: str) -> float:
        """Best facet whose filler admits the candidate concept; 0.0 if none."""
        self.frame(candidate)
        best = 0.0
        for facet, fillers in facets.items():
            weight = FACET_WEIGHTS.get(facet, 0.0)
            if weight <= best:
                continue
            for f in fillers:
                if isinstance(f, VariableRef):
                    concept = f.concept
                elif isinstance(f, BoundFrame):
                    concept = f.head.concept
                elif isinstance(f, Symbol) or (isinstance(f, str) and f in self.frames):
                    concept = str(f)
                else:
                    continue
                if facet == "value":
                    ok = concept == candidate
                else:
                    ok = concept in self.frames and self.subsumes(concept, candidate)
                if ok:
                    best = weight
                    break
        return best

    def happens_next(self, name: str) -> tuple[list, list]:
        resolved = self.resolved_frame(name)
        hn = resolved.slots.get("HAPPENS-NEXT", {})
        return list(hn.get("default", [])), list(hn.get("sem", []))

    def change_event_delta(self, name: str) -> tuple[str, str, VariableRef]:
        """Which property a change event compares, in which direction."""
        if not self.subsumes("CHANGE-EVENT", name):
            raise KbValidationError(f"{name} is not a CHANGE-EVENT")
        resolved = self.resolved_frame(name)
        pre = resolved.fillers("PRECONDITION", "default")
        eff = resolved.fillers("EFFECT", "default")
        if len(pre) != 1 or len(eff) != 1 or not isinstance(pre[0], BoundFrame) or not isinstance(eff[0], BoundFrame):
            raise KbValidationError(f"{name}: malformed change scriptlet (need bound PRECONDITION/EFFECT)")
        pre_bf, eff_bf = pre[0], eff[0]
        if pre_bf.head.concept != eff_bf.head.concept:
            raise KbValidationError(f"{name}: PRECONDITION/EFFECT compare different properties")
        pre_dom = pre_bf.binding("DOMAIN")
        eff_dom = eff_bf.binding("DOMAIN")
        if not isinstance(pre_dom, VariableRef) or pre_dom != eff_dom:
            raise KbValidationError(f"{name}: PRECONDITION/EFFECT DOMAIN variables do not corefer")
        relation = None
        for prop, v in eff_bf.bindings:
            if prop in RELATIONS:
                if v != pre_bf.head:
                    raise KbValidationError(f"{name}: comparison does not reference the PRECONDITION value")
                relation = prop
        if relation is None:
            raise KbValidationError(f"{name}: EFFECT carries no comparison relation")
        return eff_bf.head.concept, relation, pre_dom

    def add_learned_concept(self, name: str, parent: str) -> Frame:
        """Append a leaf concept (new-word learning); never touches existing frames."""
        name = name.upper()
        if not _CONCEPT_RE.match(name):
            raise KbValidationError(f"cannot learn concept with name {name!r}")
        if name in self.frames:
            raise KbValidationError(f"concept {name} already exists")
        self.frame(parent)
        frame = Frame(name, (parent,), {}, provenance="learned")
        self.frames[name] = frame
        self._ancestor_cache.clear()
        self._resolved_cache.clear()
        return frame

    def serialize(self) -> str:
        return "\n".join(frame_to_text(f) for f in self.frames.values()) + "\n"


def frame_to_text(frame: Frame) -> str:
    form: list = [Symbol("concept"), Symbol(frame.head)]
    if frame.parents:
        form.append([Symbol("is-a"), [Symbol("value"), *[Symbol(p) for p in frame.parents]]])
    for prop, facets in frame.slots.items():
        entry: list = [Symbol(prop)]
        for facet in FACETS:
            if facet in facets:
                entry.append([Symbol(facet), *[filler_to_sexpr(v) for v in facets[facet]]])
        form.append(entry)
    return write(form)


def _parse_frame(form, line: int) -> Frame:
    if not (isinstance(form, list) and len(form) >= 2 and isinstance(form[0], Symbol)
            and str(form[0]).lower() == "concept" and isinstance(form[1], Symbol)):
        raise KbSyntaxError(f"line {line}: expected (concept NAME ...)")
    name = str(form[1]).upper()
    if name in RESERVED_DEICTICS or not _CONCEPT_RE.match(name):
        raise KbSyntaxError(f"line {line}: invalid concept name {str(form[1])!r}")
    if re.search(r"-\d+$", name):
        raise KbSyntaxError(f"line {line}: concept name {name} would collide with instance ids")
    parents: tuple[str, ...] = ()
    slots: dict[str, dict[str, list]] = {}
    for entry in form[2:]:
        if not (isinstance(entry, list) and entry and isinstance(entry[0], Symbol)):
            raise KbSyntaxError(f"line {line}: malformed slot in {name}")
        prop = str(entry[0]).upper()
        facets: dict[str, list] = {}
        for facet_form in entry[1:]:
            if not (isinstance(facet_form, list) and facet_form and isinstance(facet_form[0], Symbol)):
                raise KbSyntaxError(f"line {line}: malformed facet in {name}.{prop}")
            facet = str(facet_form[0]).lower()
            if facet not in FACETS:
                raise KbSyntaxError(f"line {line}: unknown facet {facet!r} in {name}.{prop}")
            facets.setdefault(facet, []).extend(parse_filler(v, line) for v in facet_form[1:])
        if prop == "IS-A":
            for v in facets.get("value", []):
                if not isinstance(v, str):
                    raise KbSyntaxError(f"line {line}: IS-A filler must be a concept in {name}")
            parents = parents + tuple(str(v) for v in facets.get("value", []))
        else:
            slots[prop] = facets
    return Frame(name, parents, slots)


def load_ontology(text: str) -> Ontology:
    ont = Ontology()
    lines: dict[str, int] = {}
    for form, line in parse_all(text):
        frame = _parse_frame(form, line)
        if frame.head in ont.frames:
            raise KbValidationError(f"line {line}: duplicate concept {frame.head}")
        ont.frames[frame.head] = frame
        lines[frame.head] = line
    _validate(ont, lines)
    return ont


def _validate(ont: Ontology, lines: dict[str, int]) -> None:
    for name, frame in ont.frames.items():
        where = f"line {lines.get(name, 0)}"
        for parent in frame.parents:
            if parent not in ont.frames:
                raise KbValidationError(f"{where}: {name} IS-A {parent}, but {parent} is not defined")
        if not frame.parents and name not in ROOTS:
            raise KbValidationError(f"{where}: {name} has no IS-A parent and is not a root")
        for prop, facet, filler in frame.iter_fillers():
            for concept in _concepts_of(filler):
                if concept not in ont.frames:
                    raise KbValidationError(
                        f"{where}: {name}.{prop} {facet} references undefined concept {concept}")
        # comparison operands must corefer with a variable declared elsewhere in the frame
        declared: set[VariableRef] = set()
        referenced: list[tuple[str, VariableRef]] = []
        for prop, facet, filler in frame.iter_fillers():
            if isinstance(filler, VariableRef):
                declared.add(filler)
            elif isinstance(filler, BoundFrame):
                declared.add(filler.head)
                for p, v in filler.bindings:
                    if p in RELATIONS and isinstance(v, VariableRef):
                        referenced.append((prop, v))
                    else:
                        declared.update(_variables_of(v))
            elif isinstance(filler, Comparison) and isinstance(filler.operand, VariableRef):
                referenced.append((prop, filler.operand))
        for prop, var in referenced:
            if var not in declared:
                raise KbValidationError(
                    f"{where}: comparison in {name}.{prop} references {var}, "
                    f"which is declared nowhere else in the frame")
    # acyclicity, then root reachability
    state: dict[str, int] = {}

    def visit(node: str, trail: tuple[str, ...]):
        mark = state.get(node, 0)
        if mark == 1:
            cycle = " -> ".join(trail + (node,))
            raise KbValidationError(f"IS-A cycle: {cycle}")
        if mark == 2:
            return
        state[node] = 1
        for p in ont.frames[node].parents:
            visit(p, trail + (node,))
        state[node] = 2

    for name in ont.frames:
        visit(name, ())
    for name in ont.frames:
        if not any(r in ont._ancestors(name) for r in ROOTS):
            raise KbValidationError(f"line {lines.get(name, 0)}: {name} is not reachable from a root")
    # equal-distance multi-parent property conflicts get a deterministic pick + warning
    for name in ont.frames:
        seen: dict[str, tuple[int, str]] = {}
        for ancestor, d in sorted(ont._ancestors(name).items(), key=lambda kv: (kv[1], kv[0])):
            for prop in ont.frames[ancestor].slots:
                if prop in seen and seen[prop][0] == d:
                    ont.warnings.append(
                        f"{name}.{prop}: inherited from both {seen[prop][1]} and {ancestor} "
                        f"at distance {d}; using {seen[prop][1]}")
                elif prop not in seen:
                    seen[prop] = (d, ancestor)
