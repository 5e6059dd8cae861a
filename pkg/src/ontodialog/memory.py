"""Fact repository: grounded instances, coreference, bridging, word learning.

Interpretations are stored here after every turn; the participating agent
answers yes/no questions out of this store. One writer per session.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import KbValidationError, UnanalyzedInputError
from .kb import Ontology, VariableRef
from .lexicon import ContentMap
from .meaning import Counters, InstanceRef, MeaningRep, split_instance_id
from .sexpr import Symbol, parse_all, write

NAME_PROPS = ("HAS-TITLE", "HAS-PERSONAL-NAME", "HAS-SURNAME")
TRUTH_THRESHOLD = 0.5


@dataclass(frozen=True)
class NameDescriptor:
    title: str | None = None
    personal: str | None = None
    surname: str | None = None

    def fields(self) -> dict[str, str]:
        out = {}
        if self.title:
            out["HAS-TITLE"] = self.title
        if self.personal:
            out["HAS-PERSONAL-NAME"] = self.personal
        if self.surname:
            out["HAS-SURNAME"] = self.surname
        return out


@dataclass
class Instance:
    id: str
    concept: str
    properties: dict[str, list] = field(default_factory=dict)
    asserted: tuple[str, float | None] | None = None  # (modality type, value); None value = questioned

    def get(self, prop: str):
        values = self.properties.get(prop)
        return values[0] if values else None

    def add(self, prop: str, value) -> None:
        values = self.properties.setdefault(prop, [])
        if value not in values:
            values.append(value)


class FactRepository:
    def __init__(self, counters: Counters | None = None):
        self.instances: dict[str, Instance] = {}
        self.participants: dict[str, str] = {}  # participant name -> instance id
        self.counters = counters if counters is not None else Counters()

    # ------------------------------------------------------------- grounding

    def register_participant(self, name: str) -> str:
        if name not in self.participants:
            iid = str(self.counters.new_id("HUMAN"))
            self.instances[iid] = Instance(iid, "HUMAN")
            self.participants[name] = iid
        return self.participants[name]

    def ground_deictic(self, role: str, speaker: str, hearer: str) -> str:
        name = speaker if role == "speaker" else hearer
        return self.register_participant(name)

    def ground_name(self, desc: NameDescriptor) -> str:
        """Corefer with a compatible named HUMAN (no conflicts, >=1 shared field)."""
        wanted = desc.fields()
        for inst in self.instances.values():
            if inst.concept != "HUMAN":
                continue
            shared, conflict = 0, False
            for prop, value in wanted.items():
                have = inst.get(prop)
                if have is None:
                    continue
                if have == value:
                    shared += 1
                else:
                    conflict = True
            if shared >= 1 and not conflict:
                for prop, value in wanted.items():
                    inst.add(prop, value)
                return inst.id
        iid = str(self.counters.new_id("HUMAN"))
        inst = Instance(iid, "HUMAN")
        for prop, value in wanted.items():
            inst.add(prop, value)
        self.instances[iid] = inst
        return iid

    def ground_entity(self, descriptor, turn) -> str:
        """Spec surface: deictic strings or name descriptors to instance ids."""
        if descriptor in ("*speaker*", "*hearer*"):
            return self.ground_deictic(descriptor.strip("*"), turn.speaker, turn.hearer)
        if isinstance(descriptor, NameDescriptor):
            return self.ground_name(descriptor)
        raise KbValidationError(f"cannot ground descriptor {descriptor!r}")

    # ------------------------------------------------------------ coreference

    def find_antecedent(self, concept: str) -> str | None:
        """Newest instance of exactly this concept, for definite coreference."""
        for inst in reversed(list(self.instances.values())):
            if inst.concept == concept:
                return inst.id
        return None

    def find_bridging_anchor(self, ont: Ontology, part_concept: str) -> str | None:
        """Newest instance whose resolved frame licenses the part via HAS-AS-PART."""
        for inst in reversed(list(self.instances.values())):
            facets = ont.resolved_frame(inst.concept).slots.get("HAS-AS-PART")
            if not facets:
                continue
            for fillers in facets.values():
                for f in fillers:
                    if isinstance(f, (str, Symbol)) and str(f) in ont.frames \
                            and ont.subsumes(str(f), part_concept):
                        return inst.id
        return None

    def resolve_bridging(self, ont: Ontology, part_concept: str) -> tuple[str | None, str]:
        """Create the definite NP's instance, linked to a meronymic anchor if any."""
        anchor = self.find_bridging_anchor(ont, part_concept)
        part_id = str(self.counters.new_id(part_concept))
        self.instances[part_id] = Instance(part_id, part_concept)
        if anchor is not None:
            self.instances[anchor].add("HAS-AS-PART", InstanceRef(part_id))
        return anchor, part_id

    # --------------------------------------------------------------- storing

    def store_meaning(self, rep: MeaningRep) -> None:
        rep.assert_closed()
        for fid, frame in rep.frames.items():
            inst = self.instances.get(fid)
            if inst is None:
                inst = Instance(fid, frame.concept)
                self.instances[fid] = inst
            for prop, values in frame.slots.items():
                for v in values:
                    inst.add(prop, v)
        # copy each modality frame's verdict onto its scoped event
        for fid, frame in rep.frames.items():
            if frame.concept != "MODALITY":
                continue
            scope = frame.get("SCOPE")
            if not isinstance(scope, InstanceRef):
                continue
            mtype = str(frame.get("TYPE") or "epistemic").lower()
            value = frame.get("VALUE")
            target = self.instances[str(scope)]
            target.asserted = (mtype, float(value) if value is not None else None)

    # -------------------------------------------------------------- learning

    def learn_word(self, token: str, constraint_facets: dict[str, list] | None,
                   ont: Ontology, cmap: ContentMap) -> str:
        """New-word learning: leaf concept under the strongest facet filler."""
        parent = None
        for facet in ("default", "sem"):
            for filler in (constraint_facets or {}).get(facet, []):
                if isinstance(filler, VariableRef):
                    parent = filler.concept
                elif isinstance(filler, (str, Symbol)) and str(filler) in ont.frames:
                    parent = str(filler)
                if parent:
                    break
            if parent:
                break
        if parent is None:
            raise UnanalyzedInputError(
                f"unknown word {token!r} in an unconstrained slot; learning declined")
        concept = token.upper()
        if concept not in ont.frames:
            ont.add_learned_concept(concept, parent)
        cmap.add_learned_noun(token, concept)
        return concept

    # ----------------------------------------------------------------- truth

    def _fillers_match(self, ont: Ontology, query_value, stored_value) -> bool:
        if query_value == stored_value:
            return True
        if isinstance(query_value, InstanceRef) and isinstance(stored_value, InstanceRef):
            qi = self.instances.get(str(query_value))
            si = self.instances.get(str(stored_value))
            if qi is None or si is None:
                return False
            compatible = ont.subsumes(qi.concept, si.concept) or ont.subsumes(si.concept, qi.concept)
            if not compatible:
                return False
            named = lambda inst: any(inst.get(p) is not None for p in NAME_PROPS)
            return not named(qi) and not named(si)
        return False

    def query_truth(self, ont: Ontology, concept: str, roles: dict[str, object]) -> str:
        """yes / no / unknown against stored, possibly modality-qualified facts."""
        saw_no = False
        for inst in self.instances.values():
            if inst.concept not in ont.frames or not ont.subsumes(concept, inst.concept):
                continue
            if any(not self._fillers_match(ont, v, inst.get(prop)) for prop, v in roles.items()):
                continue
            if inst.asserted is None:
                return "yes"
            _, value = inst.asserted
            if value is None:
                continue  # questioned, not asserted either way
            if value >= TRUTH_THRESHOLD:
                return "yes"
            saw_no = True
        return "no" if saw_no else "unknown"

    # ----------------------------------------------------------- persistence

    def dump(self) -> str:
        """Instances in KB-file-compatible syntax, insertion order."""
        from .meaning import _value_to_sexpr  # shared value rendering

        forms = []
        for name, iid in self.participants.items():
            forms.append(write([Symbol("participant"), name, Symbol(iid)]))
        for inst in self.instances.values():
            entry: list = [Symbol("instance"), Symbol(inst.id)]
            for prop, values in inst.properties.items():
                entry.append([Symbol(prop), *[_value_to_sexpr(v) for v in values]])
            if inst.asserted is not None:
                mtype, value = inst.asserted
                mod: list = [Symbol("asserted-modality"), [Symbol("type"), Symbol(mtype)]]
                if value is not None:
                    mod.append([Symbol("value"), int(value) if float(value).is_integer() else value])
                entry.append(mod)
            forms.append(write(entry))
        counts = [Symbol("counters")]
        for concept in sorted(self.counters.counts):
            counts.append([Symbol(concept), self.counters.counts[concept]])
        forms.append(write(counts))
        return "\n".join(forms) + "\n"

    @classmethod
    def load(cls, text: str) -> "FactRepository":
        from .meaning import _value_from_sexpr

        repo = cls()
        for form, line in parse_all(text):
            kind = str(form[0]).lower()
            if kind == "participant":
                repo.participants[str(form[1])] = str(form[2]).upper()
            elif kind == "counters":
                for entry in form[1:]:
                    repo.counters.counts[str(entry[0]).upper()] = int(entry[1])
            elif kind == "instance":
                iid = str(form[1]).upper()
                concept, _ = split_instance_id(iid)
                inst = Instance(iid, concept)
                for entry in form[2:]:
                    prop = str(entry[0]).upper()
                    if prop == "ASSERTED-MODALITY":
                        mtype, value = "epistemic", None
                        for f in entry[1:]:
                            key = str(f[0]).lower()
                            if key == "type":
                                mtype = str(f[1]).lower()
                            elif key == "value":
                                value = float(f[1])
                        inst.asserted = (mtype, value)
                    else:
                        for v in entry[1:]:
                            inst.add(prop, _value_from_sexpr(v))
                repo.instances[iid] = inst
            else:
                raise KbValidationError(f"line {line}: unknown memory entry {kind!r}")
        return repo
