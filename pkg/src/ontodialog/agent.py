"""Dialog sessions at two operating depths.

An observing session interprets, resolves, and stores every percept without
deliberation. A participating session additionally answers yes/no questions
addressed to it from the fact repository and renders the answer back through
the same observation path.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, field

from .analyzer import Analyzer, CASE_ROLES, TurnContext
from .attention import AttentionState, TurnRecord
from .errors import RenderError
from .kb import Ontology
from .lexicon import ContentMap, SenseStore
from .meaning import InstanceRef, MeaningRep, ValueCellRef
from .memory import FactRepository

DEFAULT_ANCHOR = datetime.date(2021, 6, 15)

UTTERANCE_TEMPLATES = {
    "RESPOND-TO-REQUEST-INFO-YN-POSITIVELY": "Yes.",
    "RESPOND-TO-REQUEST-INFO-YN-NEGATIVELY": "No.",
    "RESPOND-TO-REQUEST-INFO-YN-DONT-KNOW": "I don't know.",
    "REFUSE-TO-RESPOND": "I can't answer that.",
}
GESTURE_TEMPLATES = {
    "RESPOND-TO-REQUEST-INFO-YN-POSITIVELY": "@gesture NOD",
    "RESPOND-TO-REQUEST-INFO-YN-NEGATIVELY": "@gesture HEAD-SHAKE",
    "RESPOND-TO-REQUEST-INFO-YN-DONT-KNOW": "@gesture SHRUG",
}


@dataclass
class SessionConfig:
    anchor: datetime.date = DEFAULT_ANCHOR
    participants: tuple[str, str] = ("user", "agent")
    mode: str = "observe"  # observe | participate
    channel: str = "utterance"  # utterance | gesture


@dataclass
class ActionSpec:
    head: str
    modality_value: float | None
    channel: str = "utterance"


@dataclass
class TurnResult:
    turn: int
    rep: MeaningRep
    warnings: list[str] = field(default_factory=list)
    responses: list["TurnResult"] = field(default_factory=list)
    rendered: str | None = None


class Session:
    def __init__(self, ont: Ontology, store: SenseStore, cmap: ContentMap,
                 config: SessionConfig | None = None):
        self.ont = ont
        self.store = store
        self.cmap = cmap
        self.config = config or SessionConfig()
        self.analyzer = Analyzer(ont, store, cmap)
        self.repo = FactRepository()
        self.attention = AttentionState()
        self.turn = 0
        self.committed: list[MeaningRep] = []
        for name in self.config.participants:
            self.repo.register_participant(name)
        self.current_speaker = self.config.participants[0]

    # --------------------------------------------------------------- helpers

    @property
    def agent_name(self) -> str:
        return self.config.participants[1]

    def other(self, name: str) -> str:
        a, b = self.config.participants
        return b if name == a else a

    def set_speaker(self, name: str) -> None:
        if name not in self.config.participants:
            raise RenderError(f"unknown participant {name!r}")
        self.current_speaker = name

    # ---------------------------------------------------------------- observe

    def observe_turn(self, line: str, speaker: str | None = None) -> TurnResult:
        """interpret -> bias -> select -> resolve fragment -> store -> post."""
        speaker = speaker or self.current_speaker
        hearer = self.other(speaker)
        self.turn += 1
        ctx = TurnContext(
            ont=self.ont, store=self.store, cmap=self.cmap, repo=self.repo,
            anchor=self.config.anchor, speaker=speaker, hearer=hearer,
            expectations_open=bool(self.attention.open_expectations()),
        )
        try:
            candidates = self.analyzer.interpret(line, ctx)
            candidates = self.attention.bias_candidates(candidates, self.ont)
            top = candidates[0]
            if top.context_fill is not None:
                rep = self.attention.resolve_fragment(top, self.repo, self.ont)
            else:
                rep = top.rep
        except Exception:
            self.turn -= 1  # failed turns do not count
            raise
        self.repo.store_meaning(rep)
        self.repo.counters.adopt(top.counters)
        self.attention.note_commit(self.turn, rep, self.ont)
        self.attention.post_expectations(top.effects, self.turn, rep)
        speaker_id = self.repo.participants[speaker]
        hearer_id = self.repo.participants[hearer]
        self.attention.turns.append(
            TurnRecord(self.turn, speaker_id, hearer_id, line, rep.head))
        self.committed.append(rep)
        self.current_speaker = hearer
        return TurnResult(self.turn, rep, list(top.warnings))

    # ------------------------------------------------------------ participate

    def participate(self, question: MeaningRep) -> ActionSpec | None:
        """Answer policy over the fact repository; no plan reasoning."""
        head = question.frames[question.head].concept
        if head not in self.ont.frames or not self.ont.subsumes("REQUEST-INFO", head):
            return None
        if not self.ont.subsumes("REQUEST-INFO-YN", head):
            return ActionSpec("REFUSE-TO-RESPOND", None, self.config.channel)
        scope = self._question_scope(question)
        if scope is None:
            return ActionSpec("RESPOND-TO-REQUEST-INFO-YN-DONT-KNOW", None, self.config.channel)
        concept, roles = scope
        verdict = self.repo.query_truth(self.ont, concept, roles)
        if verdict == "yes":
            return ActionSpec("RESPOND-TO-REQUEST-INFO-YN-POSITIVELY", 1.0, self.config.channel)
        if verdict == "no":
            return ActionSpec("RESPOND-TO-REQUEST-INFO-YN-NEGATIVELY", 0.0, self.config.channel)
        return ActionSpec("RESPOND-TO-REQUEST-INFO-YN-DONT-KNOW", None, self.config.channel)

    def _question_scope(self, question: MeaningRep):
        theme = question.frames[question.head].get("THEME")
        modality_id = None
        if isinstance(theme, ValueCellRef):
            modality_id = theme.instance
        elif isinstance(theme, InstanceRef) and question.frames.get(str(theme)) \
                and question.frames[str(theme)].concept == "MODALITY":
            modality_id = str(theme)
        if modality_id is None or modality_id not in question.frames:
            return None
        scope = question.frames[modality_id].get("SCOPE")
        if not isinstance(scope, InstanceRef) or str(scope) not in question.frames:
            return None
        frame = question.frames[str(scope)]
        roles = {}
        for role in CASE_ROLES:
            v = frame.get(role)
            if isinstance(v, InstanceRef):
                roles[role] = v
        return frame.concept, roles

    def render(self, action: ActionSpec) -> str:
        templates = GESTURE_TEMPLATES if action.channel == "gesture" else UTTERANCE_TEMPLATES
        line = templates.get(action.head)
        if line is None:
            raise RenderError(f"no {action.channel} template for {action.head}")
        return line

    # ------------------------------------------------------------- REPL entry

    def handle_line(self, line: str) -> TurnResult:
        """One input turn; in participate mode the agent may answer in kind."""
        result = self.observe_turn(line)
        if self.config.mode != "participate":
            return result
        head = result.rep.frames[result.rep.head].concept
        beneficiary = result.rep.frames[result.rep.head].get("BENEFICIARY")
        agent_id = self.repo.participants[self.agent_name]
        addressed = isinstance(beneficiary, InstanceRef) and str(beneficiary) == agent_id
        if head in self.ont.frames and self.ont.subsumes("REQUEST-INFO", head) and addressed:
            action = self.participate(result.rep)
            if action is not None:
                rendered = self.render(action)
                result.rendered = rendered
                # the agent hears itself: the answer runs the ordinary observe
                # path, which also satisfies the pending expectation
                if action.head != "REFUSE-TO-RESPOND":
                    result.responses.append(self.observe_turn(rendered, speaker=self.agent_name))
        return result
