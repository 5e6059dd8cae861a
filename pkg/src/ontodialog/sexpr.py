"""Reader/writer for the parenthesized KB file syntax.

All knowledge files (.ont, .lex, .opt, .map), memory dumps, and golden-case
blocks share this surface form: nested lists of symbols, numbers, and quoted
strings, with `;` comments. Reading preserves symbol spelling; callers
normalize case.
"""

from __future__ import annotations


class Symbol(str):
    """A bare token, as opposed to a quoted string literal."""

    __slots__ = ()

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"Symbol({str.__repr__(self)})"


class SexprError(Exception):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


_DELIMS = "()\"; \t\r\n"


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1

    def _advance(self, n: int = 1) -> None:
        self.line += self.text.count("\n", self.pos, self.pos + n)
        self.pos += n

    def _skip_blank(self) -> None:
        while self.pos < len(self.text):
            c = self.text[self.pos]
            if c in " \t\r\n":
                self._advance()
            elif c == ";":
                end = self.text.find("\n", self.pos)
                self._advance((end - self.pos) if end != -1 else len(self.text) - self.pos)
            else:
                return

    def at_end(self) -> bool:
        self._skip_blank()
        return self.pos >= len(self.text)

    def read(self):
        self._skip_blank()
        if self.pos >= len(self.text):
            raise SexprError("unexpected end of input", self.line)
        c = self.text[self.pos]
        if c == "(":
            return self._read_list()
        if c == ")":
            raise SexprError("unexpected ')'", self.line)
        if c == '"':
            return self._read_string()
        return self._read_atom()

    def _read_list(self) -> list:
        open_line = self.line
        self._advance()
        items = []
        while True:
            self._skip_blank()
            if self.pos >= len(self.text):
                raise SexprError("unclosed '('", open_line)
            if self.text[self.pos] == ")":
                self._advance()
                return items
            items.append(self.read())

    def _read_string(self) -> str:
        start_line = self.line
        self._advance()
        out = []
        while self.pos < len(self.text):
            c = self.text[self.pos]
            if c == "\\" and self.pos + 1 < len(self.text):
                out.append(self.text[self.pos + 1])
                self._advance(2)
                continue
            if c == '"':
                self._advance()
                return "".join(out)
            out.append(c)
            self._advance()
        raise SexprError("unterminated string", start_line)

    def _read_atom(self):
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in _DELIMS:
            self._advance()
        token = self.text[start:self.pos]
        try:
            return int(token)
        except ValueError:
            pass
        try:
            return float(token)
        except ValueError:
            pass
        return Symbol(token)


def parse_all(text: str) -> list[tuple[object, int]]:
    """Parse every top-level form; returns (form, starting line) pairs."""
    reader = _Reader(text)
    forms = []
    while not reader.at_end():
        line = reader.line
        forms.append((reader.read(), line))
    return forms


def parse_one(text: str):
    forms = parse_all(text)
    if len(forms) != 1:
        raise SexprError(f"expected exactly one form, found {len(forms)}", 1)
    return forms[0][0]


def _atom_text(value) -> str:
    if isinstance(value, Symbol):
        return str(value)
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def write(node, indent: int = 0, wrap: int = 1) -> str:
    """Render a form; lists nested deeper than `wrap` stay on one line."""
    if not isinstance(node, list):
        return _atom_text(node)
    if indent >= wrap or not any(isinstance(x, list) for x in node):
        return "(" + " ".join(write(x, indent + 1, wrap) for x in node) + ")"
    i = 0
    lead = []
    while i < len(node) and not isinstance(node[i], list):
        lead.append(write(node[i], indent + 1, wrap))
        i += 1
    pad = "  " * (indent + 1)
    lines = ["(" + " ".join(lead)]
    for x in node[i:]:
        lines.append(pad + write(x, indent + 1, wrap))
    return "\n".join(lines) + ")"
