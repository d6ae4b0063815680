"""Recursive-descent parser for the formula text grammar.

    phi := "T" | ident | "!" phi | phi "&" phi | phi "|" phi
         | "F[" int "," int "]" phi | "G[" int "," int "]" phi | "(" phi ")"

Precedence is ``!`` (and the temporal prefixes) > ``&`` > ``|``. Chains of
the same binary operator collapse into one n-ary node.
"""

from __future__ import annotations

import re

from .formula import Always, And, Eventually, Interval, Not, Or, PredicateTable, TrueF

_TOKEN = re.compile(
    r"\s*(?:(?P<temporal>[FG])\s*\[|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<int>\d+)|(?P<sym>[!&|(),\]]))"
)


class FormulaSyntaxError(ValueError):
    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


def _tokenize(text):
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        kind = m.lastgroup
        value = m.group(kind)
        tokens.append((kind, value, start))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, table):
        self.tokens = _tokenize(text)
        self.i = 0
        self.table = table

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value:
            found = "end of input" if kind == "eof" else repr(val)
            raise FormulaSyntaxError(f"expected {value!r}, found {found}", pos)

    def parse(self):
        f = self.disjunction()
        kind, val, pos = self.peek()
        if kind != "eof":
            raise FormulaSyntaxError(f"unexpected {val!r}", pos)
        return f

    def disjunction(self):
        args = [self.conjunction()]
        while self.peek()[1] == "|":
            self.take()
            args.append(self.conjunction())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def conjunction(self):
        args = [self.unary()]
        while self.peek()[1] == "&":
            self.take()
            args.append(self.unary())
        return args[0] if len(args) == 1 else And(tuple(args))

    def unary(self):
        kind, val, pos = self.take()
        if kind == "sym" and val == "!":
            return Not(self.unary())
        if kind == "sym" and val == "(":
            f = self.disjunction()
            self.expect(")")
            return f
        if kind == "temporal":
            interval = self.interval(pos)
            arg = self.unary()
            return Eventually(interval, arg) if val == "F" else Always(interval, arg)
        if kind == "ident":
            if val == "T":
                return TrueF()
            if self.table is None or val not in self.table:
                raise FormulaSyntaxError(f"unknown predicate {val!r}", pos)
            return self.table[val]
        found = "end of input" if kind == "eof" else repr(val)
        raise FormulaSyntaxError(f"expected a formula, found {found}", pos)

    def interval(self, pos):
        a = self.integer()
        self.expect(",")
        b = self.integer()
        self.expect("]")
        if a > b:
            raise FormulaSyntaxError(f"malformed interval [{a},{b}] (a > b)", pos)
        return Interval(a, b)

    def integer(self):
        kind, val, pos = self.take()
        if kind != "int":
            raise FormulaSyntaxError(f"expected an integer, found {val!r}", pos)
        return int(val)


def parse_formula(text: str, table: PredicateTable | None = None):
    """Parse ``text`` into a formula; identifiers resolve against ``table``."""
    return _Parser(text, table).parse()
