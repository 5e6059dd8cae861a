"""Input analysis: tokens -> constituents -> candidate meaning representations.

One perceived input (utterance line, gesture percept, or symbolic event) is
matched against construction senses, composed into concept instances,
disambiguated by selectional constraints, and scored. Produced candidates are
pure values; nothing is committed to memory here except entity grounding
(shared mentions) and new-word learning, both monotonic.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, field

from .errors import UnanalyzedInputError, UnresolvedFragmentError
from .kb import Comparison, Ontology, ProcedureValue
from .lexicon import (
    ConceptSpec, ContentMap, Deictic, ModalitySpec, RefsemRef, Sense, SenseStore,
    SlotMeaning, match_syn,
)
from .meaning import Counters, InstanceRef, MeaningRep, ValueCellRef
from .memory import FactRepository, NameDescriptor
from .sexpr import Symbol, parse_one

AUX_WORDS = {
    "do", "be", "can", "could", "will", "would", "shall", "should", "may", "might",
}
DETERMINERS = {"a", "an", "the", "this", "that", "our", "my", "your", "his", "her", "its", "their"}
DEFINITE_DETERMINERS = {"the", "this", "that"}
TITLES = {"dr.", "mr.", "ms.", "prof."}
SPEAKER_PRONOUNS = {"i", "me", "we", "us"}
HEARER_PRONOUNS = {"you"}
WH_WORDS = {"who"}
PREPOSITIONS = {"on", "to", "in", "into", "at", "with", "for", "from"}
PARTITIVES = {"piece", "slice", "bit"}
EMBEDDING_VERBS = {"think", "believe", "say"}
CAUSE_CONJUNCTIONS = {"because"}
CASE_ROLES = ("AGENT", "BENEFICIARY", "THEME", "INSTRUMENT")

EPISTEMIC = Symbol("EPISTEMIC")


@dataclass(frozen=True)
class Token:
    surface: str
    kind: str = "word"  # word | punct | gesture
    cap: bool = False


def tokenize(line: str) -> list[Token]:
    line = line.strip()
    if not line:
        return []
    if line.lower().startswith("@gesture"):
        symbol = line.split(None, 1)[1].strip() if " " in line else ""
        return [Token(symbol.upper(), "gesture")]
    tokens: list[Token] = []
    for raw in line.split():
        if raw.lower() in TITLES:
            tokens.append(Token(raw, "word", raw[0].isupper()))
            continue
        trailing: list[Token] = []
        while raw and raw[-1] in ".,?!;:":
            trailing.insert(0, Token(raw[-1], "punct"))
            raw = raw[:-1]
        if raw:
            tokens.append(Token(raw, "word", raw[0].isupper()))
        tokens.extend(trailing)
    return tokens


@dataclass
class Constituent:
    category: str  # NP | VP | AUX | ADV | PUNCT | GESTURE | CLAUSE
    tokens: list[Token] = field(default_factory=list)
    root: str = ""
    # NP details
    det: str | None = None
    title: str | None = None
    name_tokens: list[str] = field(default_factory=list)
    head_word: str | None = None
    is_wh: bool = False
    pronoun: str | None = None
    # VP details
    obj: "Constituent | None" = None
    prep: str | None = None
    pobj: "Constituent | None" = None
    # CLAUSE details
    subs: list["Constituent"] = field(default_factory=list)

    def words(self) -> str:
        return " ".join(t.surface for t in self.tokens)


class Chunker:
    """Deterministic longest-match constituent grammar over the closed lexicon."""

    def __init__(self, cmap: ContentMap, adv_roots: set[str]):
        self.cmap = cmap
        self.adv_roots = adv_roots

    def lemma(self, token: Token) -> str:
        return self.cmap.lemma(token.surface)

    def _is_aux(self, token: Token) -> bool:
        return self.lemma(token) in AUX_WORDS

    def _is_adv(self, token: Token) -> bool:
        return self.lemma(token) in self.adv_roots

    def _is_verb(self, token: Token) -> bool:
        return self.cmap.is_verb(token.surface)

    def _starts_np(self, token: Token) -> bool:
        low = token.surface.lower()
        if low in DETERMINERS or low in TITLES or low in SPEAKER_PRONOUNS \
                or low in HEARER_PRONOUNS or low in WH_WORDS:
            return True
        if self.cmap.is_noun(token.surface):
            return True
        if self._is_aux(token) or self._is_adv(token) or self._is_verb(token):
            return False
        if low in PREPOSITIONS:
            return False
        return token.kind == "word"

    def chunk(self, tokens: list[Token]) -> list[Constituent]:
        out: list[Constituent] = []
        i = 0
        while i < len(tokens):
            t = tokens[i]
            if t.kind == "gesture":
                out.append(Constituent("GESTURE", [t], root=t.surface.upper()))
                i += 1
            elif t.kind == "punct":
                out.append(Constituent("PUNCT", [t], root=t.surface))
                i += 1
            elif self._is_aux(t):
                out.append(Constituent("AUX", [t], root=self.lemma(t)))
                i += 1
            elif self._is_adv(t):
                out.append(Constituent("ADV", [t], root=self.lemma(t)))
                i += 1
            elif self._is_verb(t):
                vp, i = self._parse_vp(tokens, i)
                out.append(vp)
                if vp.root in EMBEDDING_VERBS:
                    clause, i = self._parse_clause(tokens, i)
                    if clause is not None:
                        out.append(clause)
            elif self._starts_np(t):
                np, i = self._parse_np(tokens, i)
                out.append(np)
            else:
                raise UnanalyzedInputError(f"unchunkable token {t.surface!r}")
        return out

    def _parse_clause(self, tokens: list[Token], i: int):
        end = len(tokens)
        while end > i and tokens[end - 1].kind == "punct":
            end -= 1
        if end <= i:
            return None, i
        inner = self.chunk(tokens[i:end])
        clause = Constituent("CLAUSE", tokens[i:end], root="clause", subs=inner)
        return clause, end

    def _parse_np(self, tokens: list[Token], i: int):
        start = i
        t = tokens[i]
        low = t.surface.lower()
        if low in WH_WORDS:
            return Constituent("NP", [t], root=low, is_wh=True), i + 1
        if low in SPEAKER_PRONOUNS or low in HEARER_PRONOUNS:
            return Constituent("NP", [t], root=low, pronoun=low), i + 1
        np = Constituent("NP", [])
        if low in TITLES:
            np.title = t.surface
            np.tokens.append(t)
            i += 1
        if np.title or self._is_name_token(tokens, i):
            while i < len(tokens) and self._is_name_token(tokens, i):
                np.name_tokens.append(tokens[i].surface)
                np.tokens.append(tokens[i])
                i += 1
            if not np.name_tokens:
                raise UnanalyzedInputError(f"title {np.title!r} with no name")
            np.root = np.name_tokens[-1].lower()
            return np, i
        if low in DETERMINERS:
            np.det = low
            np.tokens.append(t)
            i += 1
        # partitive: "piece of cake" denotes the cake
        if i + 1 < len(tokens) and tokens[i].surface.lower() in PARTITIVES \
                and tokens[i + 1].surface.lower() == "of":
            np.tokens.extend(tokens[i:i + 2])
            i += 2
        head = None
        while i < len(tokens):
            tok = tokens[i]
            if tok.kind != "word" or self._is_aux(tok) or self._is_adv(tok) \
                    or self._is_verb(tok) or tok.surface.lower() in PREPOSITIONS \
                    or tok.surface.lower() in CAUSE_CONJUNCTIONS \
                    or tok.surface.lower() in DETERMINERS:
                break
            np.tokens.append(tok)
            if self.cmap.is_noun(tok.surface):
                head = tok.surface
            i += 1
            if head is not None and (i >= len(tokens) or not self.cmap.is_noun(tokens[i].surface)):
                break
        if head is None:
            content = [t for t in np.tokens if t.kind == "word"
                       and t.surface.lower() not in DETERMINERS
                       and t.surface.lower() not in PARTITIVES
                       and t.surface.lower() != "of"]
            if not content:
                raise UnanalyzedInputError(f"empty noun phrase near {tokens[start].surface!r}")
            head = content[-1].surface
        np.head_word = head
        np.root = self.cmap.lemma(head)
        return np, i

    def _is_name_token(self, tokens: list[Token], i: int) -> bool:
        if i >= len(tokens):
            return False
        t = tokens[i]
        if t.kind != "word" or not t.cap:
            return False
        low = t.surface.lower()
        if low in DETERMINERS or low in TITLES or low in SPEAKER_PRONOUNS \
                or low in HEARER_PRONOUNS or low in WH_WORDS or low in PREPOSITIONS:
            return False
        if self.cmap.is_noun(t.surface) or self.cmap.is_verb(t.surface) \
                or self._is_aux(t) or self._is_adv(t):
            return False
        return True

    def _parse_vp(self, tokens: list[Token], i: int):
        verb = tokens[i]
        vp = Constituent("VP", [verb], root=self.lemma(verb))
        i += 1
        if vp.root in EMBEDDING_VERBS:
            return vp, i
        if i < len(tokens) and tokens[i].kind == "word" and self._starts_np(tokens[i]) \
                and not self._is_verb(tokens[i]) and not self._is_aux(tokens[i]) \
                and not self._is_adv(tokens[i]):
            vp.obj, i = self._parse_np(tokens, i)
            vp.tokens.extend(vp.obj.tokens)
        if i < len(tokens) and tokens[i].surface.lower() in PREPOSITIONS:
            vp.prep = tokens[i].surface.lower()
            vp.tokens.append(tokens[i])
            i += 1
            vp.pobj, i = self._parse_np(tokens, i)
            vp.tokens.extend(vp.pobj.tokens)
        return vp, i


# ------------------------------------------------------------------ context

@dataclass
class TurnContext:
    ont: Ontology
    store: SenseStore
    cmap: ContentMap
    repo: FactRepository
    anchor: datetime.date
    speaker: str
    hearer: str
    expectations_open: bool = False


@dataclass
class PendingExpectation:
    kind: str  # await-slot-fill | prefer-happens-next
    target_path: str | None = None   # "MODALITY-1.value"
    subtree_root: str | None = None  # preferred concept subtree
    question_head: str | None = None  # head instance id of the posting rep


@dataclass
class Candidate:
    rep: MeaningRep
    counters: Counters
    sense_ids: tuple[str, ...]
    effects: list[PendingExpectation] = field(default_factory=list)
    context_fill: int | None = None  # refsem index awaiting prior context
    warnings: list[str] = field(default_factory=list)
    concept_choices: tuple[str, ...] = ()
    score: float = 1.0

    @property
    def head_concept(self) -> str:
        return self.rep.frames[self.rep.head].concept


@dataclass(frozen=True)
class _Pending:
    """Placeholder for a value produced later in the procedure sequence."""

    kind: str  # refsem | deictic
    key: object


# --------------------------------------------------------------- NP meaning

@dataclass
class NPSpec:
    kind: str  # deictic | name | wh | concept
    deictic_role: str | None = None
    name: NameDescriptor | None = None
    concepts: tuple[str, ...] = ()
    hints: tuple[str, ...] = ()
    definite: bool = False
    unknown_word: str | None = None


def np_spec(np: Constituent, cmap: ContentMap) -> NPSpec:
    if np.pronoun is not None:
        role = "speaker" if np.pronoun in SPEAKER_PRONOUNS else "hearer"
        return NPSpec("deictic", deictic_role=role)
    if np.is_wh:
        return NPSpec("wh")
    if np.name_tokens or np.title:
        names = list(np.name_tokens)
        title = np.title
        personal = surname = None
        if len(names) == 1:
            surname = names[0]
        elif len(names) >= 2:
            personal, surname = names[0], names[-1]
        return NPSpec("name", name=NameDescriptor(title, personal, surname))
    mappings = cmap.noun_concepts(np.head_word or "")
    definite = np.det in DEFINITE_DETERMINERS
    if not mappings:
        return NPSpec("concept", definite=definite, unknown_word=(np.head_word or "").lower())
    return NPSpec(
        "concept",
        concepts=tuple(m.concept for m in mappings),
        hints=tuple(m.hint for m in mappings),
        definite=definite,
    )


# ------------------------------------------------------------ interpretation

class Analyzer:
    def __init__(self, ont: Ontology, store: SenseStore, cmap: ContentMap):
        self.ont = ont
        self.store = store
        self.cmap = cmap

    # adverb roots come from the loaded senses, not a hardcoded list
    def adv_roots(self) -> set[str]:
        roots = set()
        for sense in self.store.senses.values():
            head = sense.head_slot
            if head is not None and head.category == "ADV" and head.root:
                roots.add(head.root.lower())
        return roots

    def modifier_sense(self, root: str) -> Sense | None:
        for sense in self.store.senses_for(root, self.cmap.lemma_table()):
            if sense.sem.modifier is not None:
                return sense
        return None

    def interpret(self, line: str, ctx: TurnContext) -> list[Candidate]:
        line = line.strip()
        if line.lower().startswith("@event"):
            return [self._event_candidate(line, ctx)]
        tokens = tokenize(line)
        if not tokens:
            raise UnanalyzedInputError("empty input")
        if tokens[-1].kind not in ("punct", "gesture"):
            tokens.append(Token(".", "punct"))
        main_tokens, cause_tokens = self._split_cause(tokens)
        chunker = Chunker(self.cmap, self.adv_roots())
        constituents = chunker.chunk(main_tokens)
        constituents, modifiers = self._hoist_adjuncts(constituents)
        cause_parts = None
        if cause_tokens:
            cause_constituents = chunker.chunk(cause_tokens)
            cause_parts = self._hoist_adjuncts(cause_constituents)
        # shared mentions ground once, before any candidate clones the counters
        self._preground(constituents + (cause_parts[0] if cause_parts else []), ctx)
        candidates = self._match_candidates(line, constituents, modifiers, ctx)
        if cause_parts is not None:
            candidates = [self._attach_cause(c, cause_parts, ctx) for c in candidates]
        for c in candidates:
            if c.context_fill is None:
                c.rep.assert_closed()
        return self.disambiguate(candidates)

    def _split_cause(self, tokens: list[Token]):
        for i, t in enumerate(tokens):
            if t.kind == "word" and t.surface.lower() in CAUSE_CONJUNCTIONS:
                main = tokens[:i] + [t2 for t2 in tokens[len(tokens) - 1:] if t2.kind == "punct"]
                return main, tokens[i + 1:]
        return tokens, []

    def _hoist_adjuncts(self, constituents: list[Constituent]):
        """Pull modifier adverbs out when clause material remains to modify."""
        clause_present = any(c.category in ("VP", "AUX", "CLAUSE") for c in constituents)
        if not clause_present:
            return constituents, []
        kept, modifiers = [], []
        for cons in constituents:
            sense = self.modifier_sense(cons.root) if cons.category == "ADV" else None
            if sense is not None:
                modifiers.append(sense)
            else:
                kept.append(cons)
        return kept, modifiers

    def _preground(self, constituents: list[Constituent], ctx: TurnContext) -> None:
        """Ground shared mentions (names, deictics) once, before candidate fan-out."""
        self._ground_cache: dict[int, str] = {}
        for np in self._all_nps(constituents):
            spec = np_spec(np, self.cmap)
            if spec.kind == "deictic":
                iid = ctx.repo.ground_deictic(spec.deictic_role, ctx.speaker, ctx.hearer)
            elif spec.kind == "name":
                iid = ctx.repo.ground_name(spec.name)
            else:
                continue
            self._ground_cache[id(np)] = iid

    def _all_nps(self, constituents: list[Constituent]):
        for cons in constituents:
            if cons.category == "NP":
                yield cons
            elif cons.category == "VP":
                if cons.obj is not None:
                    yield cons.obj
                if cons.pobj is not None:
                    yield cons.pobj
            elif cons.category == "CLAUSE":
                yield from self._all_nps(cons.subs)

    def _match_candidates(self, line: str, constituents: list[Constituent],
                          modifiers: list[Sense], ctx: TurnContext,
                          counters_base: Counters | None = None,
                          seed_frames: dict | None = None) -> list[Candidate]:
        lemma_table = self.cmap.lemma_table()
        tried: dict[str, Sense] = {}
        for cons in constituents:
            for sense in self.store.senses_for(cons.root, lemma_table):
                tried[sense.id] = sense
        matched: list[tuple[Sense, dict]] = []
        for sense_id in sorted(tried):
            bindings = match_syn(tried[sense_id], constituents)
            if bindings is not None:
                matched.append((tried[sense_id], bindings))
        if not matched:
            raise UnanalyzedInputError(f"no construction sense matches {line!r}")
        if all(sense.is_fragment for sense, _ in matched) and not ctx.expectations_open:
            raise UnresolvedFragmentError(
                f"fragmentary input {line!r} with no pending expectation")
        candidates: list[Candidate] = []
        errors: list[Exception] = []
        for sense, bindings in matched:
            try:
                candidates.extend(
                    self._instantiate(sense, bindings, modifiers, ctx, counters_base, seed_frames))
            except UnanalyzedInputError as exc:
                errors.append(exc)  # a failing sense must not sink its rivals
        if not candidates:
            if errors:
                raise errors[0]
            raise UnanalyzedInputError(f"no candidate interpretation for {line!r}")
        return candidates

    # ----------------------------------------------------- sense instantiation

    def _instantiate(self, sense: Sense, bindings: dict[int, Constituent],
                     modifiers: list[Sense], ctx: TurnContext,
                     counters_base: Counters | None = None,
                     seed_frames: dict | None = None) -> list[Candidate]:
        compose_calls = [p for p in sense.local_calls() if p.routine == "compose-proposition"]
        alternatives: list[tuple] = [()]
        for call in compose_calls:
            fanned = []
            for alt in alternatives:
                for choice in self._compose_choices(call, bindings, ctx):
                    fanned.append(alt + (choice,))
            alternatives = fanned
        out = []
        for alt in alternatives:
            cand = self._build_candidate(sense, bindings, modifiers, ctx, dict(alt),
                                         counters_base, seed_frames)
            if cand is not None:
                out.append(cand)
        return out

    def _compose_choices(self, call, bindings: dict[int, Constituent], ctx: TurnContext):
        """Enumerate (subject concept x event concept x theme concept) choices."""
        args = [a for a in call.args]
        refsem = next(a for a in args if isinstance(a, RefsemRef))
        slot_args = [a for a in args if isinstance(a, SlotMeaning)]
        passive = any(isinstance(a, (str, Symbol)) and str(a).upper() == "PASSIVE" for a in args)
        subj = bindings[slot_args[0].var]
        vp = bindings[slot_args[1].var] if len(slot_args) > 1 else None
        if vp is not None and vp.category == "CLAUSE":
            # embedded proposition: recurse over the clause's own constituents
            inner = [c for c in vp.subs]
            inner_subj = next((c for c in inner if c.category == "NP"), None)
            inner_vp = next((c for c in inner if c.category == "VP"), None)
            if inner_subj is None or inner_vp is None:
                raise UnanalyzedInputError("embedded clause lacks subject or verb phrase")
            subj, vp = inner_subj, vp_with_aux_tense(inner, inner_vp)
        if vp is None or vp.category != "VP":
            raise UnanalyzedInputError("construction expects a verb phrase to compose")
        subj_specs = self._np_choices(subj)
        verb_maps = self.cmap.verb_concepts(vp.root)
        if not verb_maps:
            raise UnanalyzedInputError(f"no content mapping for verb {vp.root!r}")
        choices = []
        for subj_choice in subj_specs:
            for vm in verb_maps:
                if vm.light:
                    if vp.obj is None:
                        continue
                    for evt_choice in self._np_choices(vp.obj):
                        concept = evt_choice[1]
                        if concept is None or not self.ont.subsumes("EVENT", concept):
                            continue
                        theme = self._np_choices(vp.pobj)[0] if vp.pobj is not None else None
                        choices.append((refsem.index, subj_choice, concept, theme, vp, passive))
                else:
                    theme_np = vp.obj if vp.obj is not None else None
                    themes = self._np_choices(theme_np) if theme_np is not None else [None]
                    for theme in themes:
                        choices.append((refsem.index, subj_choice, vm.concept, theme, vp, passive))
        if not choices:
            raise UnanalyzedInputError(
                f"no interpretable proposition for verb {vp.root!r}")
        return [(call, c) for c in choices]

    def _np_choices(self, np: Constituent | None) -> list[tuple]:
        """(np, concept|None, spec) triples; one per sense of an ambiguous noun."""
        if np is None:
            return [None]
        spec = np_spec(np, self.cmap)
        if spec.kind == "concept" and spec.concepts:
            return [(np, c, spec) for c in spec.concepts]
        return [(np, None, spec)]

    def _build_candidate(self, sense: Sense, bindings: dict[int, Constituent],
                         modifiers: list[Sense], ctx: TurnContext,
                         compose_plan: dict, counters_base: Counters | None = None,
                         seed_frames: dict | None = None) -> Candidate | None:
        counters = (counters_base or ctx.repo.counters).clone()
        rep = MeaningRep(provenance=(sense.id,))
        if seed_frames:
            rep.frames.update(seed_frames)
        cand = Candidate(rep, counters, (sense.id,))
        refsem_frames: dict[int, str] = {}
        chosen: list[str] = []

        def resolve_value(v):
            if isinstance(v, Deictic):
                return _Pending("deictic", v.role)
            if isinstance(v, RefsemRef):
                ensure_refsem(v.index)
                target = refsem_frames.get(v.index)
                if target is None:
                    return _Pending("refsem", (v.index, v.value_cell))
                return ValueCellRef(target) if v.value_cell else InstanceRef(target)
            if isinstance(v, SlotMeaning):
                cons = bindings[v.var]
                if cons.category != "NP":
                    raise UnanalyzedInputError(f"{sense.id}: ^$var{v.var} is not a nominal")
                iid = self._np_instance(cons, None, None, ctx, rep, counters, cand)
                return InstanceRef(iid)
            return v

        def ensure_refsem(index: int) -> str | None:
            if index in refsem_frames:
                return refsem_frames[index]
            spec = sense.sem.refsem(index)
            if spec is None:
                return None  # produced later by a meaning procedure
            if isinstance(spec, ModalitySpec):
                fid = rep.new_frame(counters, "MODALITY")
                refsem_frames[index] = fid
                frame = rep.frame(fid)
                frame.set("TYPE", EPISTEMIC)
                if spec.scope is not None:
                    frame.set("SCOPE", resolve_value(spec.scope))
                if spec.value is not None:
                    frame.set("VALUE", int(spec.value) if spec.value.is_integer() else spec.value)
            else:
                fid = rep.new_frame(counters, spec.concept)
                refsem_frames[index] = fid
                for prop, v in spec.bindings:
                    rep.frame(fid).add(prop, resolve_value(v))
            return refsem_frames[index]

        # head frame; a procedure-created head refsem is filled in after compose
        head = sense.sem.head
        head_id = None
        deferred_head: int | None = None
        if isinstance(head, RefsemRef):
            head_id = ensure_refsem(head.index)
            if head_id is None:
                deferred_head = head.index
        elif isinstance(head, str):
            head_id = rep.new_frame(counters, head)
        else:
            raise UnanalyzedInputError(f"{sense.id}: sense has no instantiable head")
        if head_id is not None:
            rep.head = head_id
            for prop, v in sense.sem.bindings:
                rep.frame(head_id).add(prop, resolve_value(v))
        elif sense.sem.bindings:
            raise UnanalyzedInputError(
                f"{sense.id}: role bindings on a procedure-created head")
        for index, _spec in sense.sem.refsems:
            ensure_refsem(index)

        tense = self._tense_of(bindings)
        composed_heads: list[str] = []

        # local meaning procedures, in declared order
        for call in sense.local_calls():
            if call.routine == "compose-proposition":
                plan = compose_plan.get(call)
                if plan is None:
                    continue
                prop_id = self._compose(plan, ctx, rep, counters, cand, chosen, tense)
                if prop_id is None:
                    return None
                refsem_frames[plan[0]] = prop_id
                composed_heads.append(prop_id)
                _replace_pending(rep, _Pending("refsem", (plan[0], False)), InstanceRef(prop_id))
                _replace_pending(rep, _Pending("refsem", (plan[0], True)), ValueCellRef(prop_id))
                if deferred_head == plan[0]:
                    rep.head = prop_id
                    head_id = prop_id
                    deferred_head = None
            elif call.routine == "insert-refsem":
                for fid, frame in rep.frames.items():
                    scope = frame.get("SCOPE")
                    if frame.concept == "MODALITY" and isinstance(scope, InstanceRef) \
                            and str(scope) in rep.frames:
                        rep.frames[str(scope)].set("SCOPE-OF", InstanceRef(fid))
            elif call.routine == "ground-deixis":
                for role in ("speaker", "hearer"):
                    iid = ctx.repo.ground_deictic(role, ctx.speaker, ctx.hearer)
                    _replace_pending(rep, _Pending("deictic", role), InstanceRef(iid))
                    if InstanceRef(iid) in _all_values(rep) and iid not in rep.frames:
                        rep.frames[iid] = _frame_from_instance(ctx.repo, iid)
            elif call.routine == "find-anchor-time":
                _resolve_times(rep, ctx.anchor)
            elif call.routine == "fill-modality-from-context":
                target = next(a for a in call.args if isinstance(a, RefsemRef))
                cand.context_fill = target.index
        if deferred_head is not None or not rep.head:
            raise UnanalyzedInputError(f"{sense.id}: head refsem was never instantiated")
        # modifiers from hoisted adjunct adverbs apply to the composed proposition
        target_id = composed_heads[0] if composed_heads else head_id
        for mod in modifiers:
            for prop, v in (mod.sem.modifier or ()):
                rep.frames[target_id].set(prop, v)
            cand.sense_ids = cand.sense_ids + (mod.id,)
        _resolve_times(rep, ctx.anchor)
        self._pull_referenced_instances(rep, ctx)
        cand.effects = self._external_effects(sense, refsem_frames, rep, ctx)
        cand.concept_choices = tuple(chosen)
        cand.rep.provenance = cand.sense_ids
        return cand

    def _tense_of(self, bindings: dict[int, Constituent]) -> str | None:
        for cons in bindings.values():
            if cons.category == "AUX" and self.cmap.tense(cons.tokens[0].surface):
                return self.cmap.tense(cons.tokens[0].surface)
        for cons in bindings.values():
            if cons.category in ("VP", "CLAUSE"):
                for t in cons.tokens:
                    if self.cmap.is_verb(t.surface) and self.cmap.tense(t.surface):
                        return self.cmap.tense(t.surface)
        return None

    def _compose(self, plan, ctx: TurnContext, rep: MeaningRep, counters: Counters,
                 cand: Candidate, chosen: list[str], outer_tense: str | None) -> str | None:
        _refsem, subj_choice, event_concept, theme_choice, vp, passive = plan
        chosen.append(event_concept)
        prop_id = rep.new_frame(counters, event_concept)
        frame = rep.frame(prop_id)
        subj_np, subj_concept, subj_spec = subj_choice
        subj_id = self._np_instance(subj_np, subj_concept, ("AGENT", event_concept),
                                    ctx, rep, counters, cand)
        subj_role = "THEME" if passive else self._subject_role(subj_spec, subj_concept)
        frame.set(subj_role, InstanceRef(subj_id))
        if theme_choice is not None and subj_role != "THEME":
            theme_np, theme_concept, _theme_spec = theme_choice
            theme_id = self._np_instance(theme_np, theme_concept, ("THEME", event_concept),
                                         ctx, rep, counters, cand)
            frame.set("THEME", InstanceRef(theme_id))
        tense = outer_tense or self._tense_of({0: vp})
        if tense == "past":
            frame.set("TIME", Comparison("LESS-THAN", ProcedureValue("find-anchor-time")))
        if subj_concept is not None:
            chosen.append(subj_concept)
        return prop_id

    def _subject_role(self, spec: NPSpec | None, concept: str | None) -> str:
        if spec is None or spec.kind in ("deictic", "name", "wh"):
            return "AGENT"
        if concept is not None:
            idx = spec.concepts.index(concept) if concept in spec.concepts else -1
            hint = spec.hints[idx] if 0 <= idx < len(spec.hints) else "auto"
            if hint in ("agent", "theme"):
                return hint.upper()
            return "AGENT" if self.ont.subsumes("ANIMAL", concept) else "THEME"
        return "AGENT"

    def _np_instance(self, np: Constituent, concept_choice: str | None,
                     role_context: tuple[str, str] | None, ctx: TurnContext,
                     rep: MeaningRep, counters: Counters, cand: Candidate) -> str:
        spec = np_spec(np, self.cmap)
        if spec.kind == "deictic":
            iid = self._ground_cache.get(id(np)) or ctx.repo.ground_deictic(
                spec.deictic_role, ctx.speaker, ctx.hearer)
            if iid not in rep.frames:
                rep.frames[iid] = _frame_from_instance(ctx.repo, iid)
            return iid
        if spec.kind == "name":
            iid = self._ground_cache.get(id(np)) or ctx.repo.ground_name(spec.name)
            if iid not in rep.frames:
                rep.frames[iid] = _frame_from_instance(ctx.repo, iid)
            return iid
        if spec.kind == "wh":
            return rep.new_frame(counters, "HUMAN")
        concept = concept_choice or (spec.concepts[0] if spec.concepts else None)
        if concept is None:
            concept = self._learn(spec, role_context, ctx)
        if spec.definite:
            antecedent = self._local_antecedent(rep, ctx.repo, concept)
            if antecedent is not None:
                if antecedent not in rep.frames:
                    rep.frames[antecedent] = _frame_from_instance(ctx.repo, antecedent)
                return antecedent
            anchor = self._local_anchor(rep, ctx.repo, concept)
            part_id = rep.new_frame(counters, concept)
            if anchor is not None:
                if anchor not in rep.frames:
                    rep.frames[anchor] = _frame_from_instance(ctx.repo, anchor)
                rep.frames[anchor].add("HAS-AS-PART", InstanceRef(part_id))
            else:
                cand.warnings.append(
                    f"unresolved definite reference: no antecedent or meronymic "
                    f"anchor for {concept}")
            return part_id
        return rep.new_frame(counters, concept)

    def _local_antecedent(self, rep: MeaningRep, repo: FactRepository, concept: str) -> str | None:
        """Coreference scan over this rep's frames (newest first), then memory."""
        for fid in reversed(list(rep.frames)):
            if rep.frames[fid].concept == concept:
                return fid
        return repo.find_antecedent(concept)

    def _local_anchor(self, rep: MeaningRep, repo: FactRepository, concept: str) -> str | None:
        for fid in reversed(list(rep.frames)):
            facets = self.ont.resolved_frame(rep.frames[fid].concept).slots.get("HAS-AS-PART")
            if not facets:
                continue
            for fillers in facets.values():
                for f in fillers:
                    if isinstance(f, (str, Symbol)) and str(f) in self.ont.frames \
                            and self.ont.subsumes(str(f), concept):
                        return fid
        return repo.find_bridging_anchor(self.ont, concept)

    def _learn(self, spec: NPSpec, role_context: tuple[str, str] | None,
               ctx: TurnContext) -> str:
        word = spec.unknown_word or ""
        facets = None
        if role_context is not None:
            role, event_concept = role_context
            facets = self.ont.resolved_frame(event_concept).slots.get(role)
        return ctx.repo.learn_word(word, facets, self.ont, self.cmap)

    def _pull_referenced_instances(self, rep: MeaningRep, ctx: TurnContext) -> None:
        for ref in list(rep.referenced_ids()):
            if ref not in rep.frames and ref in ctx.repo.instances:
                rep.frames[ref] = _frame_from_instance(ctx.repo, ref)

    def _external_effects(self, sense: Sense, refsem_frames: dict[int, str],
                          rep: MeaningRep, ctx: TurnContext) -> list[PendingExpectation]:
        effects = []
        for call in sense.external_calls():
            arg = next((a for a in call.args if isinstance(a, RefsemRef)), None)
            if arg is None or arg.index not in refsem_frames:
                continue
            target = refsem_frames[arg.index]
            if call.routine == "await-slot-fill":
                effects.append(PendingExpectation(
                    "await-slot-fill", target_path=f"{target}.value", question_head=rep.head))
            elif call.routine == "prefer-happens-next":
                concept = rep.frames[target].concept
                defaults, _sems = self.ont.happens_next(concept)
                for f in defaults:
                    root = getattr(getattr(f, "head", None), "concept", None)
                    if root is not None:
                        effects.append(PendingExpectation(
                            "prefer-happens-next", subtree_root=root, question_head=rep.head))
                        break
        return effects

    # ------------------------------------------------------------ evaluation

    def score_rep(self, rep: MeaningRep) -> float:
        """Product of constraint scores over filled case roles of event frames."""
        score = 1.0
        for frame in rep.frames.values():
            if frame.concept not in self.ont.frames \
                    or not self.ont.subsumes("EVENT", frame.concept):
                continue
            resolved = self.ont.resolved_frame(frame.concept)
            for role in CASE_ROLES:
                for v in frame.slots.get(role, []):
                    if not isinstance(v, InstanceRef) or str(v) not in rep.frames:
                        continue
                    facets = resolved.slots.get(role)
                    if not facets:
                        continue
                    score *= self.ont.constraint_score(facets, rep.frames[str(v)].concept)
        return score

    def role_score_report(self, rep: MeaningRep) -> list[str]:
        lines = []
        for fid, frame in rep.frames.items():
            if frame.concept not in self.ont.frames \
                    or not self.ont.subsumes("EVENT", frame.concept):
                continue
            resolved = self.ont.resolved_frame(frame.concept)
            for role in CASE_ROLES:
                for v in frame.slots.get(role, []):
                    if isinstance(v, InstanceRef) and str(v) in rep.frames:
                        facets = resolved.slots.get(role)
                        s = self.ont.constraint_score(facets, rep.frames[str(v)].concept) \
                            if facets else 1.0
                        lines.append(f"{fid}.{role} = {rep.frames[str(v)].concept}: {s}")
        return lines

    def disambiguate(self, candidates: list[Candidate]) -> list[Candidate]:
        for c in candidates:
            c.score = self.score_rep(c.rep)
            c.rep.score = c.score
        survivors = [c for c in candidates if c.score > 0.0]
        if not survivors:
            report = "; ".join(
                line for c in candidates for line in self.role_score_report(c.rep))
            raise UnanalyzedInputError(f"all candidates violate selectional constraints ({report})")
        survivors.sort(key=lambda c: (-c.score, c.sense_ids, c.concept_choices))
        return survivors

    # ------------------------------------------------------------ percepts

    def _event_candidate(self, line: str, ctx: TurnContext) -> Candidate:
        body = line[len("@event"):].strip()
        form = parse_one(body)
        if not (isinstance(form, list) and form):
            raise UnanalyzedInputError("@event expects a parenthesized frame")
        concept = str(form[0]).upper()
        self.ont.frame(concept)
        counters = ctx.repo.counters.clone()
        rep = MeaningRep(provenance=("@event",))
        head_id = rep.new_frame(counters, concept)
        rep.head = head_id
        for entry in form[1:]:
            prop = str(entry[0]).upper()
            raw = entry[1]
            if isinstance(raw, Symbol) and str(raw) in ("*speaker*", "*hearer*"):
                iid = ctx.repo.ground_deictic(str(raw).strip("*"), ctx.speaker, ctx.hearer)
                if iid not in rep.frames:
                    rep.frames[iid] = _frame_from_instance(ctx.repo, iid)
                rep.frames[head_id].add(prop, InstanceRef(iid))
            elif isinstance(raw, Symbol) and str(raw).upper() in self.ont.frames:
                iid = rep.new_frame(counters, str(raw).upper())
                rep.frames[head_id].add(prop, InstanceRef(iid))
            else:
                rep.frames[head_id].add(prop, raw)
        cand = Candidate(rep, counters, ("@event",))
        cand.score = self.score_rep(rep)
        rep.score = cand.score
        return cand

    def _attach_cause(self, cand: Candidate, cause_parts, ctx: TurnContext) -> Candidate:
        """Interpret the because-clause and link it via CAUSED-BY.

        The sub-analysis continues the main candidate's numbering and sees its
        frames, so definites in the cause clause can bridge to main-clause
        entities (pool ... the filter).
        """
        constituents, modifiers = cause_parts
        sub = self._match_candidates(" ".join(c.words() for c in constituents),
                                     constituents, modifiers, ctx,
                                     counters_base=cand.counters,
                                     seed_frames=cand.rep.frames)
        best = self.disambiguate(sub)[0]
        cand.counters.adopt(best.counters)
        for fid, frame in best.rep.frames.items():
            if fid not in cand.rep.frames:
                cand.rep.frames[fid] = frame
        cand.rep.frames[cand.rep.head].set("CAUSED-BY", InstanceRef(best.rep.head))
        cand.sense_ids = cand.sense_ids + best.sense_ids
        cand.rep.provenance = cand.sense_ids
        cand.warnings.extend(best.warnings)
        return cand


def vp_with_aux_tense(constituents: list[Constituent], vp: Constituent) -> Constituent:
    """Fold an embedded clause's AUX tokens into the VP for tense detection."""
    for cons in constituents:
        if cons.category == "AUX":
            vp.tokens = cons.tokens + vp.tokens
    return vp


def _all_values(rep: MeaningRep):
    for frame in rep.frames.values():
        for values in frame.slots.values():
            yield from values


def _replace_pending(rep: MeaningRep, pending: _Pending, replacement) -> None:
    for frame in rep.frames.values():
        for values in frame.slots.values():
            for i, v in enumerate(values):
                if v == pending:
                    values[i] = replacement


def _resolve_times(rep: MeaningRep, anchor: datetime.date) -> None:
    def ground(v):
        if isinstance(v, ProcedureValue) and v.routine == "find-anchor-time":
            days = v.offset if (v.unit or "DAY") == "DAY" else 0
            return anchor + datetime.timedelta(days=days)
        if isinstance(v, Comparison):
            return Comparison(v.relation, ground(v.operand))
        return v

    for frame in rep.frames.values():
        for values in frame.slots.values():
            for i, v in enumerate(values):
                values[i] = ground(v)


def _frame_from_instance(repo: FactRepository, iid: str):
    from .meaning import MFrame

    inst = repo.instances[iid]
    frame = MFrame(inst.concept)
    for prop, values in inst.properties.items():
        frame.slots[prop] = list(values)
    return frame
