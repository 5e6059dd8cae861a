"""Lexicon and opticon senses plus the content map.

A sense pairs a slot template over chunked constituents (syn-struc) with an
instantiation recipe (sem-struc) and meaning-procedure calls. Opticon senses
are the same object with a GESTURE trigger slot; both run through one
validator. The content map carries word-root -> concept mappings and the
inflection table.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import KbSyntaxError, KbValidationError
from .kb import Ontology, parse_filler
from .sexpr import Symbol, parse_all, write

CATEGORIES = ("AUX", "N", "NP", "V", "VP", "ADV", "PUNCT", "GESTURE", "CLAUSE")

# slot categories accept these constituent categories
CATEGORY_ADMITS = {
    "N": ("NP",), "NP": ("NP",), "V": ("VP",), "VP": ("VP",),
    "AUX": ("AUX",), "ADV": ("ADV",), "PUNCT": ("PUNCT",),
    "GESTURE": ("GESTURE",), "CLAUSE": ("CLAUSE",),
}

PUNCT_NAMES = {"*quest-mark*": "?", "*period*": ".", "*comma*": ",", "*excl-mark*": "!"}

LOCAL_ROUTINES = (
    "compose-proposition", "insert-refsem", "ground-deixis",
    "find-anchor-time", "fill-modality-from-context",
)
EXTERNAL_ROUTINES = ("await-slot-fill", "prefer-happens-next")

_VARLABEL_RE = re.compile(r"^\$var(\d+)$")
_REFSEM_RE = re.compile(r"^refsem(\d+)(\.value)?$", re.IGNORECASE)


@dataclass(frozen=True)
class SynSlot:
    var: int
    category: str
    root: str | None = None


@dataclass(frozen=True)
class Deictic:
    role: str  # "speaker" | "hearer"

    def __str__(self) -> str:
        return f"*{self.role}*"


@dataclass(frozen=True)
class RefsemRef:
    index: int
    value_cell: bool = False

    def __str__(self) -> str:
        return f"refsem{self.index}" + (".value" if self.value_cell else "")


@dataclass(frozen=True)
class SlotMeaning:
    var: int

    def __str__(self) -> str:
        return f"^$var{self.var}"


@dataclass(frozen=True)
class ConceptSpec:
    concept: str
    bindings: tuple[tuple[str, object], ...] = ()


@dataclass(frozen=True)
class ModalitySpec:
    type: str
    scope: object | None = None
    value: float | None = None


@dataclass(frozen=True)
class SemStruc:
    head: object  # str concept name | RefsemRef
    bindings: tuple[tuple[str, object], ...] = ()
    refsems: tuple[tuple[int, object], ...] = ()  # index -> ConceptSpec | ModalitySpec
    null_sem: frozenset[int] = frozenset()
    modifier: tuple[tuple[str, object], ...] | None = None  # adjunct senses only

    def refsem(self, index: int):
        for i, spec in self.refsems:
            if i == index:
                return spec
        return None

    def structural_key(self):
        """Equality key ignoring null-sem marks (they name syn-struc slots)."""
        return (self.head, self.bindings, self.refsems, self.modifier)


@dataclass(frozen=True)
class MeaningProcedureCall:
    phase: str  # "local" | "external"
    routine: str
    args: tuple[object, ...] = ()


@dataclass(frozen=True)
class Sense:
    id: str
    definition: str = ""
    example: str = ""
    syn: tuple[SynSlot, ...] = ()
    sem: SemStruc = SemStruc(head=None)
    procedures: tuple[MeaningProcedureCall, ...] = ()
    source: str = "lexicon"  # "lexicon" | "opticon"

    @property
    def head_slot(self) -> SynSlot | None:
        for s in self.syn:
            if s.var == 0:
                return s
        return None

    @property
    def is_fragment(self) -> bool:
        """No clause material in the template: bare response/ack shapes."""
        return not any(s.category in ("V", "VP", "AUX", "CLAUSE") for s in self.syn)

    def local_calls(self) -> tuple[MeaningProcedureCall, ...]:
        return tuple(p for p in self.procedures if p.phase == "local")

    def external_calls(self) -> tuple[MeaningProcedureCall, ...]:
        return tuple(p for p in self.procedures if p.phase == "external")


class SenseStore:
    def __init__(self):
        self.senses: dict[str, Sense] = {}

    def add(self, sense: Sense) -> None:
        if sense.id in self.senses:
            raise KbValidationError(f"duplicate sense id {sense.id}")
        self.senses[sense.id] = sense

    def senses_for(self, trigger: str, lemma_table: dict[str, str] | None = None) -> list[Sense]:
        """Senses whose head slot admits the trigger, in id order."""
        key = trigger.lower()
        if lemma_table and key in lemma_table:
            key = lemma_table[key]
        hits = []
        for sense in self.senses.values():
            head = sense.head_slot
            if head is None:
                continue
            if head.root is not None:
                if head.root.lower() == key:
                    hits.append(sense)
            else:
                hits.append(sense)  # open category; match_syn filters
        return sorted(hits, key=lambda s: s.id)

    def serialize(self) -> str:
        return "\n".join(sense_to_text(s) for s in self.senses.values()) + "\n"


def match_syn(sense: Sense, constituents: list) -> dict[int, object] | None:
    """One constituent per slot, left to right; roots compared on lemmas."""
    if len(sense.syn) != len(constituents):
        return None
    bindings: dict[int, object] = {}
    for slot, cons in zip(sense.syn, constituents):
        if cons.category not in CATEGORY_ADMITS[slot.category]:
            return None
        if slot.root is not None:
            want = PUNCT_NAMES.get(slot.root, slot.root)
            if cons.root.lower() != want.lower():
                return None
        bindings[slot.var] = cons
    return bindings


# ---------------------------------------------------------------- parsing

def _parse_binding_value(node, line: int):
    if isinstance(node, Symbol):
        text = str(node)
        if text in ("*speaker*", "*hearer*"):
            return Deictic(text.strip("*"))
        m = _REFSEM_RE.match(text)
        if m:
            return RefsemRef(int(m.group(1)), bool(m.group(2)))
        if text.startswith("^"):
            mv = _VARLABEL_RE.match(text[1:])
            if mv:
                return SlotMeaning(int(mv.group(1)))
        return parse_filler(node, line)
    if isinstance(node, (int, float, str)):
        return node
    return parse_filler(node, line)


def _parse_bindings(entries, line: int) -> tuple[tuple[str, object], ...]:
    out = []
    for entry in entries:
        if not (isinstance(entry, list) and len(entry) == 2 and isinstance(entry[0], Symbol)):
            raise KbSyntaxError(f"line {line}: malformed role binding {write(entry)}")
        prop = str(entry[0]).upper()
        inner = entry[1]
        if not (isinstance(inner, list) and len(inner) == 2 and str(inner[0]).lower() == "value"):
            raise KbSyntaxError(f"line {line}: role binding must be (PROP (value X))")
        out.append((prop, _parse_binding_value(inner[1], line)))
    return tuple(out)


def _parse_refsem_body(node, line: int):
    if not (isinstance(node, list) and node and isinstance(node[0], Symbol)):
        raise KbSyntaxError(f"line {line}: malformed refsem body")
    head = str(node[0])
    if head.lower() == "modality":
        mtype, scope, value = None, None, None
        for entry in node[1:]:
            key = str(entry[0]).lower()
            if key == "type":
                mtype = str(entry[1]).lower()
            elif key == "scope":
                inner = entry[1]
                if isinstance(inner, list) and len(inner) == 2 and str(inner[0]).lower() == "value":
                    scope = _parse_binding_value(inner[1], line)
                else:
                    scope = _parse_binding_value(inner, line)
            elif key == "value":
                value = float(entry[1])
            else:
                raise KbSyntaxError(f"line {line}: unknown modality field {key!r}")
        if mtype is None:
            raise KbSyntaxError(f"line {line}: modality frame needs a type")
        return ModalitySpec(mtype, scope, value)
    return ConceptSpec(head.upper(), _parse_bindings(node[1:], line))


def _parse_sem_struc(form, line: int) -> SemStruc:
    head = None
    bindings: list[tuple[str, object]] = []
    refsems: list[tuple[int, object]] = []
    null_sem: set[int] = set()
    modifier = None
    for entry in form:
        if not (isinstance(entry, list) and entry and isinstance(entry[0], Symbol)):
            raise KbSyntaxError(f"line {line}: malformed sem-struc entry")
        key = str(entry[0])
        lkey = key.lower()
        if lkey == "head":
            head = _parse_binding_value(entry[1], line)
            if isinstance(head, Symbol):
                head = str(head)
        elif lkey == "modifier":
            modifier = _parse_bindings(entry[1:], line)
        elif _REFSEM_RE.match(key):
            refsems.append((int(_REFSEM_RE.match(key).group(1)), _parse_refsem_body(entry[1], line)))
        elif key.startswith("^"):
            m = _VARLABEL_RE.match(key[1:])
            if not m:
                raise KbSyntaxError(f"line {line}: bad null-sem mark {key}")
            null_sem.add(int(m.group(1)))
        else:
            bindings.extend(_parse_bindings([entry], line))
    return SemStruc(head, tuple(bindings), tuple(refsems), frozenset(null_sem), modifier)


def _parse_syn_struc(form, line: int) -> tuple[SynSlot, ...]:
    slots = []
    for entry in form:
        if not (isinstance(entry, list) and entry and isinstance(entry[0], Symbol)):
            raise KbSyntaxError(f"line {line}: malformed syn slot")
        m = _VARLABEL_RE.match(str(entry[0]))
        if not m:
            raise KbSyntaxError(f"line {line}: syn slot must start with $varN")
        var = int(m.group(1))
        category, root = None, None
        for opt in entry[1:]:
            key = str(opt[0]).lower()
            if key == "cat":
                category = str(opt[1]).upper()
            elif key == "root":
                root = str(opt[1])
            else:
                raise KbSyntaxError(f"line {line}: unknown syn slot field {key!r}")
        if category not in CATEGORIES:
            raise KbSyntaxError(f"line {line}: unknown category {category!r}")
        slots.append(SynSlot(var, category, root))
    vars_seen = [s.var for s in slots]
    if len(set(vars_seen)) != len(vars_seen):
        raise KbSyntaxError(f"line {line}: duplicate $var labels")
    return tuple(slots)


def _parse_procedures(form, line: int) -> tuple[MeaningProcedureCall, ...]:
    calls = []
    for phase_form in form:
        phase = str(phase_form[0]).lower()
        if phase not in ("local", "external"):
            raise KbSyntaxError(f"line {line}: procedure phase must be local or external")
        for call in phase_form[1:]:
            if not (isinstance(call, list) and call and isinstance(call[0], Symbol)):
                raise KbSyntaxError(f"line {line}: malformed procedure call")
            routine = str(call[0]).lower()
            args = tuple(_parse_binding_value(a, line) for a in call[1:])
            calls.append(MeaningProcedureCall(phase, routine, args))
    return tuple(calls)


def parse_sense(form, line: int, source: str) -> Sense:
    if not (isinstance(form, list) and len(form) >= 2 and str(form[0]).lower() == "sense"):
        raise KbSyntaxError(f"line {line}: expected (sense ID ...)")
    sense_id = str(form[1]).lower()
    definition, example = "", ""
    syn: tuple[SynSlot, ...] = ()
    sem = SemStruc(head=None)
    procedures: tuple[MeaningProcedureCall, ...] = ()
    for entry in form[2:]:
        key = str(entry[0]).lower()
        if key == "def":
            definition = str(entry[1])
        elif key == "ex":
            example = str(entry[1])
        elif key == "syn-struc":
            syn = _parse_syn_struc(entry[1:], line)
        elif key == "sem-struc":
            sem = _parse_sem_struc(entry[1:], line)
        elif key == "meaning-procedures":
            procedures = _parse_procedures(entry[1:], line)
        else:
            raise KbSyntaxError(f"line {line}: unknown sense zone {key!r}")
    return Sense(sense_id, definition, example, syn, sem, procedures, source)


def validate_sense(sense: Sense, ont: Ontology) -> None:
    """Shared validator: lexicon and opticon senses take the identical path."""
    slot_vars = {s.var for s in sense.syn}
    if sense.syn and 0 not in slot_vars:
        raise KbValidationError(f"{sense.id}: no $var0 head slot")
    declared = {i for i, _ in sense.sem.refsems}
    created = {a.index for p in sense.local_calls() for a in p.args if isinstance(a, RefsemRef)}

    def check_value(v, where: str):
        if isinstance(v, RefsemRef):
            if v.index not in declared and v.index not in created:
                raise KbValidationError(f"{sense.id}: {where} references undeclared refsem{v.index}")
        elif isinstance(v, SlotMeaning):
            if v.var not in slot_vars:
                raise KbValidationError(f"{sense.id}: {where} references missing $var{v.var}")

    head = sense.sem.head
    if isinstance(head, str):
        if head not in ont:
            raise KbValidationError(f"{sense.id}: head concept {head} not in ontology")
    elif isinstance(head, RefsemRef):
        check_value(head, "head")
    for prop, v in sense.sem.bindings:
        check_value(v, f"binding {prop}")
    for idx, spec in sense.sem.refsems:
        if isinstance(spec, ConceptSpec):
            if spec.concept not in ont:
                raise KbValidationError(f"{sense.id}: refsem{idx} concept {spec.concept} not in ontology")
            for prop, v in spec.bindings:
                check_value(v, f"refsem{idx}.{prop}")
        else:
            if spec.type not in ("epistemic",):
                raise KbValidationError(f"{sense.id}: unsupported modality type {spec.type!r}")
            if spec.value is not None and not 0.0 <= spec.value <= 1.0:
                raise KbValidationError(f"{sense.id}: modality value out of [0,1]")
            if spec.scope is not None:
                check_value(spec.scope, f"refsem{idx}.scope")
    for mark in sense.sem.null_sem:
        if mark not in slot_vars:
            raise KbValidationError(f"{sense.id}: null-sem mark names missing $var{mark}")
    for call in sense.procedures:
        registry = LOCAL_ROUTINES if call.phase == "local" else EXTERNAL_ROUTINES
        if call.routine not in registry:
            raise KbValidationError(f"{sense.id}: unknown {call.phase} procedure {call.routine!r}")
        for a in call.args:
            if isinstance(a, SlotMeaning):
                check_value(a, f"procedure {call.routine}")


def load_senses(text: str, ont: Ontology, source: str, into: SenseStore | None = None) -> SenseStore:
    store = into if into is not None else SenseStore()
    for form, line in parse_all(text):
        sense = parse_sense(form, line, source)
        validate_sense(sense, ont)
        store.add(sense)
    return store


def load_lexicon(text: str, ont: Ontology, into: SenseStore | None = None) -> SenseStore:
    return load_senses(text, ont, "lexicon", into)


def load_opticon(text: str, ont: Ontology, into: SenseStore | None = None) -> SenseStore:
    return load_senses(text, ont, "opticon", into)


# ---------------------------------------------------------------- serializing

def _binding_value_to_sexpr(v):
    if isinstance(v, (Deictic, RefsemRef, SlotMeaning)):
        return Symbol(str(v))
    from .kb import filler_to_sexpr
    return filler_to_sexpr(v)


def _bindings_to_sexpr(bindings):
    return [[Symbol(prop), [Symbol("value"), _binding_value_to_sexpr(v)]] for prop, v in bindings]


def sense_to_text(sense: Sense) -> str:
    form: list = [Symbol("sense"), Symbol(sense.id)]
    if sense.definition:
        form.append([Symbol("def"), sense.definition])
    if sense.example:
        form.append([Symbol("ex"), sense.example])
    syn: list = [Symbol("syn-struc")]
    for slot in sense.syn:
        entry: list = [Symbol(f"$var{slot.var}"), [Symbol("cat"), Symbol(slot.category.lower())]]
        if slot.root is not None:
            entry.append([Symbol("root"), Symbol(slot.root) if slot.root.startswith("*") else slot.root])
        syn.append(entry)
    form.append(syn)
    sem: list = [Symbol("sem-struc")]
    if sense.sem.modifier is not None:
        sem.append([Symbol("modifier"), *_bindings_to_sexpr(sense.sem.modifier)])
    if sense.sem.head is not None:
        sem.append([Symbol("head"), Symbol(str(sense.sem.head))])
    sem.extend(_bindings_to_sexpr(sense.sem.bindings))
    for idx, spec in sense.sem.refsems:
        if isinstance(spec, ConceptSpec):
            body: list = [Symbol(spec.concept), *_bindings_to_sexpr(spec.bindings)]
        else:
            body = [Symbol("modality"), [Symbol("type"), Symbol(spec.type)]]
            if spec.scope is not None:
                body.append([Symbol("scope"), [Symbol("value"), _binding_value_to_sexpr(spec.scope)]])
            if spec.value is not None:
                body.append([Symbol("value"), spec.value])
        sem.append([Symbol(f"refsem{idx}"), body])
    for mark in sorted(sense.sem.null_sem):
        sem.append([Symbol(f"^$var{mark}"), [Symbol("null-sem"), Symbol("+")]])
    form.append(sem)
    if sense.procedures:
        procs: list = [Symbol("meaning-procedures")]
        for phase in ("local", "external"):
            calls = [c for c in sense.procedures if c.phase == phase]
            if calls:
                procs.append([Symbol(phase)] + [
                    [Symbol(c.routine), *[_binding_value_to_sexpr(a) for a in c.args]] for c in calls])
        form.append(procs)
    return write(form)


# ---------------------------------------------------------------- content map

@dataclass(frozen=True)
class Mapping:
    concept: str | None  # None marks a light verb
    hint: str = "auto"   # "agent" | "theme" | "auto"

    @property
    def light(self) -> bool:
        return self.concept is None


@dataclass
class ContentMap:
    nouns: dict[str, list[Mapping]] = field(default_factory=dict)
    verbs: dict[str, list[Mapping]] = field(default_factory=dict)
    lemmas: dict[str, tuple[str, str | None]] = field(default_factory=dict)  # surface -> (root, tense)
    learned: set[str] = field(default_factory=set)

    def lemma(self, surface: str) -> str:
        return self.lemmas.get(surface.lower(), (surface.lower(), None))[0]

    def tense(self, surface: str) -> str | None:
        return self.lemmas.get(surface.lower(), (surface.lower(), None))[1]

    def lemma_table(self) -> dict[str, str]:
        return {surface: root for surface, (root, _) in self.lemmas.items()}

    def noun_concepts(self, word: str) -> list[Mapping]:
        return self.nouns.get(self.lemma(word), [])

    def verb_concepts(self, word: str) -> list[Mapping]:
        return self.verbs.get(self.lemma(word), [])

    def is_noun(self, word: str) -> bool:
        return self.lemma(word) in self.nouns

    def is_verb(self, word: str) -> bool:
        return self.lemma(word) in self.verbs

    def add_learned_noun(self, word: str, concept: str) -> None:
        self.nouns.setdefault(word.lower(), []).append(Mapping(concept))
        self.learned.add(word.lower())


def load_content_map(text: str, ont: Ontology, into: ContentMap | None = None) -> ContentMap:
    cmap = into if into is not None else ContentMap()
    for form, line in parse_all(text):
        kind = str(form[0]).lower()
        if kind == "map":
            word = str(form[1]).lower()
            cat_form = form[2]
            if not (isinstance(cat_form, list) and str(cat_form[0]).lower() == "cat"):
                raise KbSyntaxError(f"line {line}: map entry needs (cat n|v)")
            cat = str(cat_form[1]).lower()
            if cat not in ("n", "v"):
                raise KbSyntaxError(f"line {line}: map category must be n or v")
            mappings = []
            for spec in form[3:]:
                skind = str(spec[0]).lower()
                if skind == "light":
                    mappings.append(Mapping(None))
                elif skind == "concept":
                    concept = str(spec[1]).upper()
                    if concept not in ont:
                        raise KbValidationError(f"line {line}: map target {concept} not in ontology")
                    hint = str(spec[2]).lower() if len(spec) > 2 else "auto"
                    if hint not in ("agent", "theme", "auto"):
                        raise KbSyntaxError(f"line {line}: bad role hint {hint!r}")
                    mappings.append(Mapping(concept, hint))
                else:
                    raise KbSyntaxError(f"line {line}: bad map target {write(spec)}")
            target = cmap.nouns if cat == "n" else cmap.verbs
            target.setdefault(word, []).extend(mappings)
        elif kind == "lemma":
            surface = str(form[1]).lower()
            root = str(form[2]).lower()
            tense = str(form[3]).lower() if len(form) > 3 else None
            cmap.lemmas[surface] = (root, tense)
        else:
            raise KbSyntaxError(f"line {line}: unknown content-map entry {kind!r}")
    return cmap


def content_map_to_text(cmap: ContentMap) -> str:
    lines = []
    for word, mappings in cmap.nouns.items():
        specs = " ".join(
            f"(concept {m.concept})" if m.hint == "auto" else f"(concept {m.concept} {m.hint})"
            for m in mappings)
        lines.append(f'(map "{word}" (cat n) {specs})')
    for word, mappings in cmap.verbs.items():
        specs = " ".join("(light)" if m.light else f"(concept {m.concept})" for m in mappings)
        lines.append(f'(map "{word}" (cat v) {specs})')
    for surface, (root, tense) in cmap.lemmas.items():
        lines.append(f'(lemma "{surface}" "{root}"' + (f" {tense})" if tense else ")"))
    return "\n".join(lines) + "\n"
