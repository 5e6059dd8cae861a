"""REPL and batch harness.

`ontodialog repl` runs an interactive two-party session over the packaged
knowledge bases (or ones named on the command line); `ontodialog golden DIR`
replays golden transcript cases and reports pass/fail.

Exit codes: 0 success, 1 golden failure, 2 knowledge-base load error.
"""

from __future__ import annotations

import argparse
import datetime
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .agent import Session, SessionConfig
from .analyzer import tokenize  # re-exported for convenience  # noqa: F401
from .errors import CommandError, EngineError, KbSyntaxError, KbValidationError
from .kb import Ontology, load_ontology
from .lexicon import ContentMap, SenseStore, load_content_map, load_lexicon, load_opticon
from .meaning import Counters, canonical_text, extend_renumber_map
from .memory import FactRepository
from .sexpr import SexprError, parse_all

_ID_SUB_RE = re.compile(r"\b[A-Z][A-Z0-9-]*-\d+\b")


def data_path(name: str) -> Path:
    return Path(str(resources.files("ontodialog").joinpath("data", name)))


@dataclass
class KbPaths:
    ontology: Path = field(default_factory=lambda: data_path("core.ont"))
    lexicon: Path = field(default_factory=lambda: data_path("core.lex"))
    opticon: Path = field(default_factory=lambda: data_path("core.opt"))
    content_map: Path = field(default_factory=lambda: data_path("core.map"))


def load_kbs(paths: KbPaths) -> tuple[Ontology, SenseStore, ContentMap]:
    ont = load_ontology(paths.ontology.read_text())
    store = load_lexicon(paths.lexicon.read_text(), ont)
    load_opticon(paths.opticon.read_text(), ont, into=store)
    cmap = load_content_map(paths.content_map.read_text(), ont)
    return ont, store, cmap


class Repl:
    """One dialog session driven by text lines; never crashes the loop."""

    def __init__(self, paths: KbPaths, config: SessionConfig):
        self.paths = paths
        self.config = config
        self._rebuild()

    def _rebuild(self) -> None:
        ont, store, cmap = load_kbs(self.paths)
        self.session = Session(ont, store, cmap, self.config)

    def execute(self, line: str) -> list[str]:
        """Outputs for one input line; command errors become error lines."""
        line = line.strip()
        if not line or line.startswith(";"):
            return []
        try:
            if line.startswith(":"):
                return self._command(line)
            return self._turn(line)
        except EngineError as exc:
            return [exc.render()]
        except SexprError as exc:
            return [f"error[E-PARSE]: {exc}"]

    def _turn(self, line: str) -> list[str]:
        result = self.session.handle_line(line)
        out = [f"[turn {result.turn}] {result.rep.head}"]
        out.extend(f"warning[W-REFERENCE]: {w}" for w in result.warnings)
        if result.rendered is not None:
            out.append(f"< {result.rendered}")
            out.extend(f"[turn {r.turn}] {r.rep.head}" for r in result.responses)
        return out

    def _command(self, line: str) -> list[str]:
        parts = line.split(None, 1)
        cmd, arg = parts[0], (parts[1].strip() if len(parts) > 1 else "")
        if cmd == ":quit":
            raise SystemExit(0)
        if cmd in (":load-ont", ":load-lex", ":load-opt", ":load-map"):
            if not arg:
                raise CommandError(f"{cmd} needs a file path")
            attr = {":load-ont": "ontology", ":load-lex": "lexicon",
                    ":load-opt": "opticon", ":load-map": "content_map"}[cmd]
            setattr(self.paths, attr, Path(arg))
            self._rebuild()
            return [f"loaded {arg}; session reset"]
        if cmd == ":anchor":
            try:
                self.config.anchor = datetime.date.fromisoformat(arg)
            except ValueError as exc:
                raise CommandError(f"bad anchor date {arg!r}") from exc
            self.session.config.anchor = self.config.anchor
            return [f"anchor {self.config.anchor.isoformat()}"]
        if cmd == ":mode":
            if arg not in ("observe", "participate"):
                raise CommandError("mode must be observe or participate")
            self.session.config.mode = arg
            return [f"mode {arg}"]
        if cmd == ":channel":
            if arg not in ("utterance", "gesture"):
                raise CommandError("channel must be utterance or gesture")
            self.session.config.channel = arg
            return [f"channel {arg}"]
        if cmd == ":speaker":
            self.session.set_speaker(arg)
            return [f"speaker {arg}"]
        if cmd == ":tmr":
            if arg != "last":
                raise CommandError(":tmr takes the argument 'last'")
            if not self.session.committed:
                raise CommandError("no meaning representation committed yet")
            return canonical_text(self.session.committed[-1]).splitlines()
        if cmd == ":expect":
            lines = self.session.attention.dump_open()
            return lines if lines else ["none"]
        if cmd == ":mem":
            return self.session.repo.dump().splitlines()
        if cmd == ":save-mem":
            if not arg:
                raise CommandError(":save-mem needs a file path")
            Path(arg).write_text(self.session.repo.dump())
            return [f"saved memory to {arg}"]
        if cmd == ":load-mem":
            if not arg:
                raise CommandError(":load-mem needs a file path")
            repo = FactRepository.load(Path(arg).read_text())
            self.session.repo = repo
            return [f"loaded memory from {arg}"]
        raise CommandError(f"unknown command {cmd}")


def run_repl(paths: KbPaths, config: SessionConfig, stream=None, out=None) -> int:
    stream = stream if stream is not None else sys.stdin
    out = out if out is not None else sys.stdout
    try:
        repl = Repl(paths, config)
    except (EngineError, SexprError, OSError) as exc:
        print(f"error[E-KB]: {exc}", file=out)
        return 2
    for raw in stream:
        try:
            for line in repl.execute(raw):
                print(line, file=out)
        except SystemExit:
            return 0
    return 0


# ------------------------------------------------------------------- golden

@dataclass
class GoldenStep:
    input: str
    expected: list[str] = field(default_factory=list)


@dataclass
class GoldenReport:
    name: str
    ok: bool
    detail: str = ""


def parse_case(text: str) -> list[GoldenStep]:
    steps: list[GoldenStep] = []
    for raw in text.splitlines():
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if line.startswith(">"):
            steps.append(GoldenStep(line[1:].strip()))
        elif line.startswith("="):
            if not steps:
                raise KbSyntaxError("expected block before any input line")
            steps[-1].expected.append(line[1:].lstrip())
        else:
            raise KbSyntaxError(f"golden case lines must start with > or =: {line!r}")
    return steps


def _normalized_forms(text: str):
    return parse_all(text)


def run_case(path: Path, paths: KbPaths) -> GoldenReport:
    name = path.name
    try:
        steps = parse_case(path.read_text())
    except (OSError, KbSyntaxError) as exc:
        return GoldenReport(name, False, f"unreadable case: {exc}")
    try:
        repl = Repl(KbPaths(paths.ontology, paths.lexicon, paths.opticon, paths.content_map),
                    SessionConfig())
    except (EngineError, SexprError, OSError) as exc:
        return GoldenReport(name, False, f"KB load error: {exc}")
    renumber: dict[str, str] = {}
    ren_counters = Counters()
    seen_reps = 0
    for step in steps:
        try:
            outputs = repl.execute(step.input)
        except SystemExit:
            outputs = []
        committed = repl.session.committed
        for rep in committed[seen_reps:]:
            extend_renumber_map(rep, renumber, ren_counters)
        seen_reps = len(committed)
        if not step.expected:
            continue
        expected_text = "\n".join(step.expected)
        if step.input.startswith(":") or not _looks_like_rep(expected_text):
            actual_text = "\n".join(_substitute_ids(line, renumber) for line in outputs)
            if not _text_equal(actual_text, expected_text):
                return GoldenReport(
                    name, False,
                    f"output mismatch for {step.input!r}:\n  expected: {expected_text}\n"
                    f"  actual:   {actual_text}")
        else:
            if seen_reps == 0:
                return GoldenReport(name, False, f"no rep committed for {step.input!r}")
            actual = canonical_text(committed[seen_reps - 1], renumber)
            if not _sexpr_equal(actual, expected_text):
                return GoldenReport(
                    name, False,
                    f"rep mismatch for {step.input!r}:\n  expected:\n{expected_text}\n"
                    f"  actual:\n{actual}")
    return GoldenReport(name, True)


def _looks_like_rep(text: str) -> bool:
    return text.lstrip().startswith("(mrep")


def _substitute_ids(line: str, renumber: dict[str, str]) -> str:
    return _ID_SUB_RE.sub(lambda m: renumber.get(m.group(0), m.group(0)), line)


def _text_equal(actual: str, expected: str) -> bool:
    norm = lambda s: [" ".join(l.split()) for l in s.strip().splitlines() if l.strip()]
    return norm(actual) == norm(expected)


def _sexpr_equal(actual: str, expected: str) -> bool:
    try:
        return parse_all(actual) == parse_all(expected)
    except SexprError:
        return False


def run_golden(directory: Path, paths: KbPaths, out=None) -> int:
    out = out if out is not None else sys.stdout
    cases = sorted(directory.glob("*.case"))
    if not cases:
        print(f"no .case files in {directory}", file=out)
        return 1
    failures = 0
    for case in cases:
        report = run_case(case, paths)
        if report.ok:
            print(f"PASS {report.name}", file=out)
        else:
            failures += 1
            print(f"FAIL {report.name}: {report.detail}", file=out)
    print(f"{len(cases) - failures}/{len(cases)} golden cases passed", file=out)
    return 1 if failures else 0


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ontodialog",
        description="knowledge-driven dialog interpretation engine")
    sub = parser.add_subparsers(dest="command", required=True)

    repl = sub.add_parser("repl", help="interactive dialog session")
    golden = sub.add_parser("golden", help="run golden transcript cases")
    golden.add_argument("directory", type=Path, help="directory of .case files")
    for p in (repl, golden):
        p.add_argument("--ontology", type=Path, default=None)
        p.add_argument("--lexicon", type=Path, default=None)
        p.add_argument("--opticon", type=Path, default=None)
        p.add_argument("--map", dest="content_map", type=Path, default=None)
    repl.add_argument("--anchor", type=datetime.date.fromisoformat, default=None)
    repl.add_argument("--mode", choices=("observe", "participate"), default="observe")
    repl.add_argument("--channel", choices=("utterance", "gesture"), default="utterance")
    repl.add_argument("--participants", nargs=2, metavar=("SPEAKER", "AGENT"),
                      default=("user", "agent"))
    return parser


def _paths_from_args(args) -> KbPaths:
    paths = KbPaths()
    for attr in ("ontology", "lexicon", "opticon", "content_map"):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(paths, attr, value)
    return paths


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    paths = _paths_from_args(args)
    if args.command == "golden":
        try:
            return run_golden(args.directory, paths)
        except (KbValidationError, KbSyntaxError) as exc:
            print(f"error[E-KB]: {exc}")
            return 2
    config = SessionConfig(
        anchor=args.anchor or SessionConfig().anchor,
        participants=tuple(args.participants),
        mode=args.mode,
        channel=args.channel,
    )
    return run_repl(paths, config)


if __name__ == "__main__":
    sys.exit(main())
