"""Attention: pending expectations, candidate bias, and ellipsis completion.

A committed question posts two kinds of expectation: a slot waiting to be
filled (the empty epistemic modality value) and a preference for next-input
interpretations headed inside the anticipated response subtree. Fragments
like "Yes." or a NOD are completed against the awaited proposition with full
coreference and speaker/hearer swap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .analyzer import Candidate, PendingExpectation, _frame_from_instance
from .errors import UnresolvedFragmentError
from .kb import Ontology
from .meaning import InstanceRef, MeaningRep
from .memory import FactRepository

CLARIFYING_CONCEPTS = ("SEEK-CLARIFICATION", "CHECK-UNDERSTANDING")


@dataclass
class QuestionSnapshot:
    head_id: str
    agent_id: str | None
    beneficiary_id: str | None
    modality_id: str | None = None
    scope_id: str | None = None


@dataclass
class Expectation:
    kind: str  # await-slot-fill | prefer-happens-next
    source_turn: int
    status: str = "open"  # open | satisfied | expired
    target_path: str | None = None
    subtree_root: str | None = None
    question: QuestionSnapshot | None = None

    @property
    def target(self) -> str:
        return self.target_path if self.kind == "await-slot-fill" else (self.subtree_root or "")


@dataclass
class TurnRecord:
    turn: int
    speaker_id: str
    hearer_id: str
    raw: str
    head_id: str | None = None


@dataclass
class AttentionState:
    expectations: list[Expectation] = field(default_factory=list)
    turns: list[TurnRecord] = field(default_factory=list)

    def open_expectations(self) -> list[Expectation]:
        return [e for e in self.expectations if e.status == "open"]

    def open_prefer_roots(self) -> list[str]:
        return [e.subtree_root for e in self.open_expectations()
                if e.kind == "prefer-happens-next" and e.subtree_root]

    # ---------------------------------------------------------------- posting

    def post_expectations(self, effects: list[PendingExpectation], turn: int,
                          rep: MeaningRep) -> None:
        posted_await = False
        for eff in effects:
            snapshot = self._snapshot(rep, eff)
            if eff.kind == "await-slot-fill":
                if posted_await:
                    continue  # at most one open await per source turn
                posted_await = True
                self.expectations.append(Expectation(
                    "await-slot-fill", turn, target_path=eff.target_path, question=snapshot))
            elif eff.kind == "prefer-happens-next":
                self.expectations.append(Expectation(
                    "prefer-happens-next", turn, subtree_root=eff.subtree_root,
                    question=snapshot))

    def _snapshot(self, rep: MeaningRep, eff: PendingExpectation) -> QuestionSnapshot:
        head = rep.frames[rep.head]
        agent = head.get("AGENT")
        beneficiary = head.get("BENEFICIARY")
        modality_id = scope_id = None
        if eff.target_path:
            modality_id = eff.target_path.rsplit(".", 1)[0]
            modality = rep.frames.get(modality_id)
            if modality is not None and isinstance(modality.get("SCOPE"), InstanceRef):
                scope_id = str(modality.get("SCOPE"))
        return QuestionSnapshot(
            head_id=rep.head,
            agent_id=str(agent) if isinstance(agent, InstanceRef) else None,
            beneficiary_id=str(beneficiary) if isinstance(beneficiary, InstanceRef) else None,
            modality_id=modality_id,
            scope_id=scope_id,
        )

    # ------------------------------------------------------------------ bias

    def bias_candidates(self, candidates: list[Candidate], ont: Ontology) -> list[Candidate]:
        """Preferred-subtree candidates first; everything else demoted, not dropped."""
        roots = self.open_prefer_roots()
        if not roots:
            return candidates
        inside, outside = [], []
        for c in candidates:
            if any(ont.subsumes(root, c.head_concept) for root in roots
                   if root in ont.frames):
                inside.append(c)
            else:
                outside.append(c)
        return inside + outside

    # -------------------------------------------------------------- fragments

    def open_await(self) -> Expectation | None:
        for e in reversed(self.expectations):
            if e.status == "open" and e.kind == "await-slot-fill":
                return e
        return None

    def resolve_fragment(self, candidate: Candidate, repo: FactRepository,
                         ont: Ontology) -> MeaningRep:
        """Complete an elliptical response against the awaited proposition."""
        exp = self.open_await()
        if exp is None or exp.question is None:
            raise UnresolvedFragmentError("fragmentary response with no awaited slot")
        rep = candidate.rep
        head_frame = rep.frames[rep.head]
        if not ont.subsumes("RESPOND-TO-REQUEST-INFO", head_frame.concept):
            raise UnresolvedFragmentError(
                f"{head_frame.concept} cannot fill the awaited slot")
        q = exp.question
        # the fragment carried its own modality stub; merge it into the awaited one
        stub_id = None
        for fid, frame in rep.frames.items():
            if frame.concept == "MODALITY" and fid != q.modality_id:
                stub_id = fid
                break
        value = rep.frames[stub_id].get("VALUE") if stub_id else None
        if stub_id is not None:
            del rep.frames[stub_id]
            _remap_references(rep, stub_id, q.modality_id)
        if q.modality_id is None:
            raise UnresolvedFragmentError("awaited slot has no modality frame")
        modality = _frame_from_instance(repo, q.modality_id)
        rep.frames[q.modality_id] = modality
        if value is not None:
            modality.set("VALUE", value)
        # coreference: the scoped event and its objects are the same instances
        if q.scope_id is not None and q.scope_id in repo.instances:
            rep.frames[q.scope_id] = _frame_from_instance(repo, q.scope_id)
            for ref in list(rep.referenced_ids()):
                if ref not in rep.frames and ref in repo.instances:
                    rep.frames[ref] = _frame_from_instance(repo, ref)
        # deixis swap: the question's hearer answers, its asker is addressed
        if q.beneficiary_id is not None:
            head_frame.set("AGENT", InstanceRef(q.beneficiary_id))
        if q.agent_id is not None:
            head_frame.set("BENEFICIARY", InstanceRef(q.agent_id))
        for ref in list(rep.referenced_ids()):
            if ref not in rep.frames and ref in repo.instances:
                rep.frames[ref] = _frame_from_instance(repo, ref)
        exp.status = "satisfied"
        rep.assert_closed()
        return rep

    # ---------------------------------------------------------------- expiry

    def note_commit(self, turn: int, rep: MeaningRep, ont: Ontology) -> None:
        """Satisfy or expire older expectations once a turn commits.

        Clarification moves keep their parents' expectations open (the
        suspended question is still on the table afterward).
        """
        head_concept = rep.frames[rep.head].concept
        clarifying = any(
            root in ont.frames and ont.subsumes(root, head_concept)
            for root in CLARIFYING_CONCEPTS)
        for e in self.expectations:
            if e.status != "open" or e.source_turn >= turn:
                continue
            if e.kind == "prefer-happens-next" and e.subtree_root in ont.frames \
                    and ont.subsumes(e.subtree_root, head_concept):
                e.status = "satisfied"
            elif not clarifying:
                e.status = "expired"

    # ------------------------------------------------------------------ dump

    def dump_open(self) -> list[str]:
        return [f"{e.source_turn} {e.kind} {e.target} {e.status}"
                for e in self.open_expectations()]


def _remap_references(rep: MeaningRep, old: str, new: str | None) -> None:
    from .meaning import ValueCellRef

    for frame in rep.frames.values():
        for values in frame.slots.values():
            for i, v in enumerate(values):
                if isinstance(v, InstanceRef) and str(v) == old and new:
                    values[i] = InstanceRef(new)
                elif isinstance(v, ValueCellRef) and v.instance == old and new:
                    values[i] = ValueCellRef(new)
