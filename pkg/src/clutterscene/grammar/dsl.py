"""Parser for the rule DSL.

Grammar (``#`` starts a comment, ``;`` after statements is optional)::

    file     := rule+
    rule     := "rule" NAME "{" "lhs" "{" lstmt* "}" "rhs" "{" rstmt* "}" ["keep" NAME ("," NAME)*] "}"
    lstmt    := "node" NAME ":" kindpat | "edge" NAME "->" NAME ":" labelpat
    rstmt    := "node" NAME [":" kind] | "edge" NAME "->" NAME ":" label
    kindpat  := "Any" | katom ("|" katom)*
    katom    := "Tray" | "ObjectSlot" | "End" | ("Object" | "MetaGroup") "(" (NAME | "*") ")"
    labelpat := "*" | "Primitive" | "Member" | "Orientation" "(" (INT | "*") ")"

An RHS node named in ``keep`` persists (optionally relabelled); any other RHS
node is freshly allocated. LHS nodes missing from ``keep`` are deleted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..scenegraph import EdgeLabel, NodeKind, SceneGraphError
from .rules import KindPattern, LabelPattern, PatternEdge, RhsEdge, Rule, RuleError, RuleSet, terminals_for

_TOKEN = re.compile(r"\s*(?:(#[^\n]*)|(->)|([A-Za-z_][A-Za-z0-9_]*|\d+)|([{}():;,|*]))")


class RuleParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


@dataclass
class _Tok:
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            # skip whitespace to report the offending character
            while text[pos].isspace():
                if text[pos] == "\n":
                    line, line_start = line + 1, pos + 1
                pos += 1
            raise RuleParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        start = m.start(m.lastindex)
        for i in range(pos, start):
            if text[i] == "\n":
                line, line_start = line + 1, i + 1
        if m.lastindex != 1:
            toks.append(_Tok(m.group(m.lastindex), line, start - line_start + 1))
        pos = m.end()
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        lines = text.splitlines() or [""]
        self.eof = (len(lines), len(lines[-1]) + 1)

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        if tok is None:
            raise RuleParseError(msg + " (at end of input)", *self.eof)
        raise RuleParseError(msg, tok.line, tok.col)

    def next(self) -> _Tok:
        tok = self.peek()
        if tok is None:
            self.error("unexpected end of input")
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text != text:
            self.error(f"expected {text!r}, found {tok.text!r}", tok)
        return tok

    def accept(self, text: str) -> bool:
        tok = self.peek()
        if tok is not None and tok.text == text:
            self.i += 1
            return True
        return False

    def name(self) -> _Tok:
        tok = self.next()
        if not re.match(r"[A-Za-z_]\w*$", tok.text):
            self.error(f"expected a name, found {tok.text!r}", tok)
        return tok

    # -- grammar ----------------------------------------------------------
    def rules(self) -> list[Rule]:
        out = []
        while self.peek() is not None:
            out.append(self.rule())
        return out

    def rule(self) -> Rule:
        self.expect("rule")
        name_tok = self.name()
        self.expect("{")
        self.expect("lhs")
        self.expect("{")
        lhs_nodes, lhs_edges = [], []
        while not self.accept("}"):
            kw = self.next()
            if kw.text == "node":
                n = self.name().text
                self.expect(":")
                lhs_nodes.append((n, self.kind_pattern()))
            elif kw.text == "edge":
                a = self.name().text
                self.expect("->")
                b = self.name().text
                self.expect(":")
                lhs_edges.append(PatternEdge(a, b, self.label_pattern()))
            else:
                self.error(f"expected 'node' or 'edge', found {kw.text!r}", kw)
            self.accept(";")
        self.expect("rhs")
        self.expect("{")
        rhs_nodes, rhs_edges = [], []
        while not self.accept("}"):
            kw = self.next()
            if kw.text == "node":
                n = self.name().text
                kind = self.kind() if self.accept(":") else None
                rhs_nodes.append((n, kind))
            elif kw.text == "edge":
                a = self.name().text
                self.expect("->")
                b = self.name().text
                self.expect(":")
                rhs_edges.append(RhsEdge(a, b, self.label()))
            else:
                self.error(f"expected 'node' or 'edge', found {kw.text!r}", kw)
            self.accept(";")
        keep = []
        if self.accept("keep"):
            keep.append(self.name().text)
            while self.accept(","):
                keep.append(self.name().text)
            self.accept(";")
        self.expect("}")
        try:
            return Rule(name_tok.text, tuple(lhs_nodes), tuple(lhs_edges), tuple(rhs_nodes),
                        tuple(rhs_edges), tuple(keep))
        except RuleError as exc:
            raise RuleParseError(str(exc), name_tok.line, name_tok.col) from exc

    def _katom(self) -> tuple[str, str | None]:
        tok = self.next()
        if tok.text in ("Tray", "ObjectSlot", "End"):
            return tok.text, None
        if tok.text in ("Object", "MetaGroup"):
            self.expect("(")
            arg = self.next()
            self.expect(")")
            return tok.text, None if arg.text == "*" else arg.text
        self.error(f"unknown node kind {tok.text!r}", tok)

    def kind_pattern(self) -> KindPattern:
        if self.accept("Any"):
            return KindPattern(any_kind=True)
        alts = [self._katom()]
        while self.accept("|"):
            alts.append(self._katom())
        return KindPattern(frozenset(alts))

    def kind(self) -> NodeKind:
        tok = self.peek()
        tag, name = self._katom()
        if tag in ("Object", "MetaGroup") and name is None:
            self.error("right-hand side kinds must be concrete", tok)
        return NodeKind(tag, name)

    def label_pattern(self) -> LabelPattern:
        if self.accept("*"):
            return LabelPattern()
        tok = self.next()
        if tok.text in ("Primitive", "Member"):
            return LabelPattern(tok.text)
        if tok.text == "Orientation":
            self.expect("(")
            arg = self.next()
            self.expect(")")
            if arg.text == "*":
                return LabelPattern("Orientation")
            if not arg.text.isdigit():
                self.error("orientation index must be an integer", arg)
            return LabelPattern("Orientation", int(arg.text))
        self.error(f"unknown edge label {tok.text!r}", tok)

    def label(self) -> EdgeLabel:
        tok = self.peek()
        pat = self.label_pattern()
        if pat.tag is None or (pat.tag == "Orientation" and pat.k is None):
            self.error("right-hand side labels must be concrete", tok)
        try:
            return EdgeLabel(pat.tag, pat.k)
        except SceneGraphError as exc:
            self.error(str(exc), tok)


def parse_rules(text: str) -> list[Rule]:
    return _Parser(text).rules()


def parse_rule_set(text: str, *, object_names=None, meta_names=None) -> RuleSet:
    """Parse DSL text into a RuleSet.

    When ``object_names``/``meta_names`` are given, every concrete class that
    a rule mentions must belong to them.
    """
    parser = _Parser(text)
    rules = parser.rules()
    if not rules:
        raise RuleParseError("no rules", 1, 1)
    seen = set()
    for r in rules:
        if r.name in seen:
            raise RuleParseError(f"duplicate rule name {r.name!r}", 1, 1)
        seen.add(r.name)
    used_objects, used_metas = set(), set()
    for r in rules:
        for _, pat in r.lhs_nodes:
            for tag, name in pat.alternatives:
                if name is not None:
                    (used_objects if tag == "Object" else used_metas).add(name)
        for _, kind in r.rhs_nodes:
            if kind is not None and kind.name is not None:
                (used_objects if kind.tag == "Object" else used_metas).add(kind.name)
    if object_names is not None:
        missing = used_objects - set(object_names)
        if missing:
            raise RuleParseError(f"unknown object classes {sorted(missing)}", 1, 1)
    if meta_names is not None:
        missing = used_metas - set(meta_names)
        if missing:
            raise RuleParseError(f"unknown meta classes {sorted(missing)}", 1, 1)
    objects = sorted(used_objects) if object_names is None else list(object_names)
    metas = sorted(used_metas) if meta_names is None else list(meta_names)
    return RuleSet(tuple(rules), terminals=terminals_for(objects, metas))
