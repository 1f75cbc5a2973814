"""Plain-text description format for trees, families, covers, and events.

Documents are line-oriented with [section] headers and `key = value` lines.
Events are boolean expressions over per-site constraints ("x0=1 & x4 in
{0,2}").  All numbers are integers or rationals p/q; decimals are rejected.
Parsing reports line and column; rendering produces a canonical form whose
re-parse equals the original parse.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .cylinder import (
    Context,
    CylinderSet,
    SpinSet,
    constraint_in,
    constraint_not_in,
    from_constraints,
)
from .errors import SpecSemanticError, SpecSyntaxError, TreeMeasureError
from .measure import (
    MeasureFamily,
    NatSeq,
    TransitionKernel,
    markov_family,
    product_family,
    table_family,
    weight_sum_all,
)
from .sigma_finite import Cover, finite_cover, slice_cover
from .tree import DEFAULT_MAX_DEPTH, TreeGeometry

SECTIONS = ("tree", "spins", "family", "covers")
FAMILY_KINDS = ("markov", "markov-prob", "product", "table")


# ---------------------------------------------------------------------------
# event expressions


@dataclass(frozen=True)
class EventAtom:
    site: int
    mode: str  # "in" | "notin"
    values: tuple[int, ...]  # sorted, deduplicated


@dataclass(frozen=True)
class EventNot:
    inner: object


@dataclass(frozen=True)
class EventAnd:
    parts: tuple


@dataclass(frozen=True)
class EventOr:
    parts: tuple


@dataclass(frozen=True)
class _Token:
    kind: str  # "site" | "int" | "sym" | "name" | "end"
    text: str
    line: int
    col: int


def _describe(tok: _Token) -> str:
    return "end of input" if tok.kind == "end" else f"{tok.text!r}"


def _tokenize_event(text: str, line_base: int = 1, col_base: int = 1) -> list[_Token]:
    toks = []
    i, n = 0, len(text)
    line, col = line_base, col_base
    while i < n:
        ch = text[i]
        if ch == "\n":
            line, col = line + 1, 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("..", i):
            toks.append(_Token("sym", "..", line, col))
            i += 2
            col += 2
            continue
        if ch in "&|!(){},=":
            toks.append(_Token("sym", ch, line, col))
            i += 1
            col += 1
            continue
        if ch == "x" and i + 1 < n and text[i + 1].isdigit():
            j = i + 1
            while j < n and text[j].isdigit():
                j += 1
            toks.append(_Token("site", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == "." and not text.startswith("..", j):
                raise SpecSyntaxError(
                    "decimal numbers are not allowed; use integers or p/q",
                    line, col,
                )
            toks.append(_Token("int", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha():
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(_Token("name", text[i:j], line, col))
            col += j - i
            i = j
            continue
        raise SpecSyntaxError(f"unexpected character {ch!r}", line, col)
    toks.append(_Token("end", "", line, col))
    return toks


class _EventParser:
    def __init__(self, toks: list[_Token]):
        self.toks = toks
        self.pos = 0

    def peek(self) -> _Token:
        return self.toks[self.pos]

    def take(self) -> _Token:
        tok = self.toks[self.pos]
        if tok.kind != "end":
            self.pos += 1
        return tok

    def _is_sym(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind == "sym" and tok.text == text

    def expect_sym(self, text: str) -> None:
        tok = self.take()
        if tok.kind != "sym" or tok.text != text:
            raise SpecSyntaxError(
                f"unexpected {_describe(tok)}", tok.line, tok.col, expected=[repr(text)]
            )

    def expect_int(self) -> int:
        tok = self.take()
        if tok.kind != "int":
            raise SpecSyntaxError(
                f"unexpected {_describe(tok)}", tok.line, tok.col,
                expected=["an integer"],
            )
        return int(tok.text)

    def parse_expr(self):
        parts = [self.parse_term()]
        while self._is_sym("|"):
            self.take()
            parts.append(self.parse_term())
        return parts[0] if len(parts) == 1 else EventOr(tuple(parts))

    def parse_term(self):
        parts = [self.parse_factor()]
        while self._is_sym("&"):
            self.take()
            parts.append(self.parse_factor())
        return parts[0] if len(parts) == 1 else EventAnd(tuple(parts))

    def parse_factor(self):
        if self._is_sym("!"):
            self.take()
            return EventNot(self.parse_factor())
        if self._is_sym("("):
            self.take()
            inner = self.parse_expr()
            self.expect_sym(")")
            return inner
        return self.parse_atom()

    def parse_atom(self) -> EventAtom:
        tok = self.take()
        if tok.kind != "site":
            raise SpecSyntaxError(
                f"unexpected {_describe(tok)}", tok.line, tok.col,
                expected=["a site like x0", "'('", "'!'"],
            )
        site = int(tok.text[1:])
        op = self.take()
        if op.kind == "sym" and op.text == "=":
            return EventAtom(site, "in", (self.expect_int(),))
        if op.kind == "name" and op.text in ("in", "notin"):
            return EventAtom(site, op.text, self.parse_set())
        raise SpecSyntaxError(
            f"unexpected {_describe(op)}", op.line, op.col,
            expected=["'='", "'in'", "'notin'"],
        )

    def parse_set(self) -> tuple[int, ...]:
        self.expect_sym("{")
        values: set[int] = set()
        if self._is_sym("}"):
            self.take()
            return ()
        while True:
            lo = self.expect_int()
            if self._is_sym(".."):
                tok = self.take()
                hi = self.expect_int()
                if hi < lo:
                    raise SpecSyntaxError(
                        f"range {lo}..{hi} runs downward", tok.line, tok.col
                    )
                values.update(range(lo, hi + 1))
            else:
                values.add(lo)
            if self._is_sym(","):
                self.take()
                continue
            self.expect_sym("}")
            return tuple(sorted(values))


def parse_event(text: str, line_base: int = 1, col_base: int = 1):
    """Event expression text -> syntax tree."""
    parser = _EventParser(_tokenize_event(text, line_base, col_base))
    ast = parser.parse_expr()
    tok = parser.peek()
    if tok.kind != "end":
        raise SpecSyntaxError(
            f"unexpected trailing {_describe(tok)}", tok.line, tok.col
        )
    return ast


def render_event(ast) -> str:
    """Canonical text for an event tree; parse(render(e)) == e."""
    return _render_event(ast, 0)


def _render_event(ast, level: int) -> str:
    if isinstance(ast, EventAtom):
        if ast.mode == "in" and len(ast.values) == 1:
            return f"x{ast.site}={ast.values[0]}"
        body = "{" + ",".join(str(v) for v in ast.values) + "}"
        return f"x{ast.site} {ast.mode} {body}"
    if isinstance(ast, EventNot):
        return "!(" + _render_event(ast.inner, 0) + ")"
    if isinstance(ast, EventOr):
        text = " | ".join(_render_event(p, 1) for p in ast.parts)
        return f"({text})" if level >= 1 else text
    if isinstance(ast, EventAnd):
        text = " & ".join(_render_event(p, 2) for p in ast.parts)
        return f"({text})" if level >= 2 else text
    raise TypeError(f"not an event tree: {ast!r}")


def lower_event(ctx: Context, ast) -> CylinderSet:
    """Event tree -> cylinder set over the given context."""
    if isinstance(ast, EventAtom):
        ctx.tree.check_vertex(ast.site)
        for v in ast.values:
            ctx.spins.check(v)
        c = constraint_in(ast.values) if ast.mode == "in" else constraint_not_in(ast.values)
        return from_constraints(ctx, {ast.site: c})
    if isinstance(ast, EventNot):
        return lower_event(ctx, ast.inner).complement()
    if isinstance(ast, EventAnd):
        out = lower_event(ctx, ast.parts[0])
        for p in ast.parts[1:]:
            out = out.intersect(lower_event(ctx, p))
        return out
    if isinstance(ast, EventOr):
        out = lower_event(ctx, ast.parts[0])
        for p in ast.parts[1:]:
            out = out.union(lower_event(ctx, p))
        return out
    raise TypeError(f"not an event tree: {ast!r}")


def compile_event(ctx: Context, text: str) -> CylinderSet:
    return lower_event(ctx, parse_event(text))


# ---------------------------------------------------------------------------
# weight specs (surface forms of finite weight lists and tailed sequences)


@dataclass(frozen=True)
class WeightSpec:
    """Surface form of a weight assignment.

    tail None is a plain list (a full list over finite spins; prefix with
    zero tail over the naturals); otherwise tail is ("const", c) or
    ("geometric", a, r).
    """

    values: tuple[Fraction, ...] = ()
    tail: tuple | None = None


_RATIONAL_RE = re.compile(r"-?\d+(/\d+)?")
_DECIMAL_RE = re.compile(r"-?\d+\.\d+")


def _parse_rational(word: str, line: int, col: int) -> Fraction:
    if _RATIONAL_RE.fullmatch(word):
        try:
            return Fraction(word)
        except ZeroDivisionError:
            raise SpecSyntaxError("zero denominator", line, col) from None
    if _DECIMAL_RE.fullmatch(word):
        raise SpecSyntaxError(
            "decimal numbers are not allowed; use integers or p/q", line, col
        )
    raise SpecSyntaxError(f"not a rational: {word!r}", line, col)


def _split_words(text: str, col0: int) -> list[tuple[str, int]]:
    out = []
    for m in re.finditer(r"\S+", text):
        out.append((m.group(), col0 + m.start()))
    return out


def _parse_weight_spec(words: list[tuple[str, int]], line: int) -> WeightSpec:
    if not words:
        raise SpecSyntaxError("empty weight list", line)
    head, head_col = words[0]
    if head == "const":
        if len(words) != 2:
            raise SpecSyntaxError("const takes exactly one rational", line, head_col)
        return WeightSpec((), ("const", _parse_rational(words[1][0], line, words[1][1])))
    if head == "geometric":
        if len(words) != 3:
            raise SpecSyntaxError(
                "geometric takes a coefficient and a ratio", line, head_col
            )
        a = _parse_rational(words[1][0], line, words[1][1])
        r = _parse_rational(words[2][0], line, words[2][1])
        return WeightSpec((), ("geometric", a, r))
    if head == "prefix":
        split = next((i for i, (w, _) in enumerate(words) if w == "then"), None)
        if split is None:
            raise SpecSyntaxError("prefix form needs 'then <tail>'", line, head_col)
        if split == 1:
            raise SpecSyntaxError("prefix form needs at least one value", line, head_col)
        values = tuple(
            _parse_rational(w, line, c) for w, c in words[1:split]
        )
        tail = _parse_weight_spec(words[split + 1:], line)
        if tail.values or tail.tail is None:
            where = words[split][1]
            raise SpecSyntaxError(
                "tail after 'then' must be const or geometric", line, where
            )
        return WeightSpec(values, tail.tail)
    values = tuple(_parse_rational(w, line, c) for w, c in words)
    return WeightSpec(values, None)


def _render_fraction(x: Fraction) -> str:
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _render_weight_spec(ws: WeightSpec) -> str:
    if ws.tail is None:
        return " ".join(_render_fraction(v) for v in ws.values)
    if ws.tail[0] == "const":
        tail = f"const {_render_fraction(ws.tail[1])}"
    else:
        tail = f"geometric {_render_fraction(ws.tail[1])} {_render_fraction(ws.tail[2])}"
    if not ws.values:
        return tail
    return "prefix " + " ".join(_render_fraction(v) for v in ws.values) + " then " + tail


def _build_weight(ws: WeightSpec, spins: SpinSet, what: str):
    for v in ws.values:
        if v < 0:
            raise SpecSemanticError(f"{what}: weights must be non-negative")
    if spins.is_finite:
        if ws.tail is not None:
            raise SpecSemanticError(
                f"{what}: tail forms need the denumerable spin set"
            )
        if len(ws.values) != spins.size:
            raise SpecSemanticError(
                f"{what}: need {spins.size} weights, got {len(ws.values)}"
            )
        return ws.values
    tail = ws.tail if ws.tail is not None else ("const", Fraction(0))
    try:
        if tail[0] == "const":
            return NatSeq(ws.values, "const", tail[1], Fraction(0))
        return NatSeq(ws.values, "geometric", tail[1], tail[2])
    except ValueError as exc:
        raise SpecSemanticError(f"{what}: {exc}") from None


# ---------------------------------------------------------------------------
# cover specs


@dataclass(frozen=True)
class SliceCoverSpec:
    site: int
    block: int


@dataclass(frozen=True)
class ListCoverSpec:
    events: tuple  # event syntax trees


# ---------------------------------------------------------------------------
# documents


@dataclass(frozen=True)
class SpecDocument:
    order: int
    max_depth: int
    spins_kind: str  # "finite" | "nat"
    spins_size: int | None
    family_kind: str
    lam: WeightSpec | None = None
    kernel_rows: tuple[WeightSpec, ...] = ()
    kernel_default: WeightSpec | None = None
    weight_default: WeightSpec | None = None
    weight_overrides: tuple[tuple[int, WeightSpec], ...] = ()
    table_depth: int | None = None
    entries: tuple[tuple[tuple[int, ...], Fraction], ...] = ()
    covers: tuple[tuple[str, object], ...] = ()


@dataclass(frozen=True)
class _Line:
    no: int
    key: str
    value: str
    value_col: int


def _strip_comment(raw: str) -> str:
    quoted = False
    for idx, ch in enumerate(raw):
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return raw[:idx]
    return raw


_SECTION_RE = re.compile(r"\[([a-z][a-z-]*)\]")
_KEY_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_@-]*")
_INT_RE = re.compile(r"\d+")


def _parse_int(text: str, line: int, col: int) -> int:
    if not _INT_RE.fullmatch(text):
        raise SpecSyntaxError(f"not an integer: {text!r}", line, col)
    return int(text)


def _scan_lines(text: str) -> dict[str, list[_Line]]:
    sections: dict[str, list[_Line]] = {}
    current: str | None = None
    for no, raw in enumerate(text.splitlines(), 1):
        content = _strip_comment(raw).rstrip()
        stripped = content.strip()
        if not stripped:
            continue
        indent = len(content) - len(content.lstrip())
        if stripped.startswith("["):
            m = _SECTION_RE.fullmatch(stripped)
            if not m:
                raise SpecSyntaxError("malformed section header", no, indent + 1)
            name = m.group(1)
            if name not in SECTIONS:
                raise SpecSemanticError(
                    f"unknown section [{name}]", no, indent + 1,
                    expected=[f"[{s}]" for s in SECTIONS],
                )
            if name in sections:
                raise SpecSemanticError(f"duplicate section [{name}]", no, indent + 1)
            sections[name] = []
            current = name
            continue
        if current is None:
            raise SpecSyntaxError(
                "content before any section header", no, indent + 1,
                expected=[f"[{s}]" for s in SECTIONS],
            )
        if "=" not in stripped:
            raise SpecSyntaxError("expected key = value", no, indent + 1)
        eq = content.index("=")
        key = content[:eq].strip()
        if not _KEY_RE.fullmatch(key):
            raise SpecSyntaxError(f"malformed key {key!r}", no, indent + 1)
        rest = content[eq + 1:]
        value = rest.strip()
        if not value:
            raise SpecSyntaxError(f"key {key!r} has no value", no, eq + 2)
        value_col = eq + 2 + (len(rest) - len(rest.lstrip()))
        sections[current].append(_Line(no, key, value, value_col))
    return sections


def _unique(lines: list[_Line], key: str, section: str) -> _Line | None:
    found = [ln for ln in lines if ln.key == key]
    if len(found) > 1:
        raise SpecSemanticError(
            f"key {key!r} given more than once in [{section}]", found[1].no
        )
    return found[0] if found else None


def _require(lines: list[_Line], key: str, section: str) -> _Line:
    ln = _unique(lines, key, section)
    if ln is None:
        raise SpecSemanticError(f"[{section}] is missing key {key!r}")
    return ln


def _reject_unknown(lines: list[_Line], allowed, section: str) -> None:
    for ln in lines:
        base = ln.key.split("@", 1)[0]
        if ln.key in allowed:
            continue
        if "@" in ln.key and base + "@" in allowed:
            continue
        raise SpecSemanticError(
            f"unknown key {ln.key!r} in [{section}]", ln.no,
            expected=sorted({k.rstrip("@") for k in allowed}),
        )


def _at_index(ln: _Line, base: str) -> int:
    suffix = ln.key[len(base) + 1:]
    if not _INT_RE.fullmatch(suffix):
        raise SpecSyntaxError(f"malformed key {ln.key!r}", ln.no)
    return int(suffix)


def parse_document(text: str) -> SpecDocument:
    sections = _scan_lines(text)
    for name in ("tree", "spins", "family"):
        if name not in sections:
            raise SpecSemanticError(f"missing section [{name}]")

    tree_lines = sections["tree"]
    _reject_unknown(tree_lines, {"k", "max_depth"}, "tree")
    k_line = _require(tree_lines, "k", "tree")
    order = _parse_int(k_line.value, k_line.no, k_line.value_col)
    if order < 1:
        raise SpecSemanticError("k must be >= 1", k_line.no, k_line.value_col)
    depth_line = _unique(tree_lines, "max_depth", "tree")
    if depth_line is None:
        max_depth = DEFAULT_MAX_DEPTH
    else:
        max_depth = _parse_int(depth_line.value, depth_line.no, depth_line.value_col)
        if max_depth < 1:
            raise SpecSemanticError(
                "max_depth must be >= 1", depth_line.no, depth_line.value_col
            )

    spin_lines = sections["spins"]
    _reject_unknown(spin_lines, {"kind", "size"}, "spins")
    kind_line = _require(spin_lines, "kind", "spins")
    spins_kind = kind_line.value
    if spins_kind not in ("finite", "nat"):
        raise SpecSemanticError(
            f"unknown spin kind {spins_kind!r}", kind_line.no, kind_line.value_col,
            expected=["finite", "nat"],
        )
    size_line = _unique(spin_lines, "size", "spins")
    spins_size = None
    if spins_kind == "finite":
        if size_line is None:
            raise SpecSemanticError("[spins] kind finite needs size")
        spins_size = _parse_int(size_line.value, size_line.no, size_line.value_col)
        if spins_size < 1:
            raise SpecSemanticError(
                "size must be >= 1", size_line.no, size_line.value_col
            )
    elif size_line is not None:
        raise SpecSemanticError(
            "size is only for finite spins", size_line.no, size_line.value_col
        )

    fam_lines = sections["family"]
    fk_line = _require(fam_lines, "kind", "family")
    family_kind = fk_line.value
    if family_kind not in FAMILY_KINDS:
        raise SpecSemanticError(
            f"unknown family kind {family_kind!r}", fk_line.no, fk_line.value_col,
            expected=list(FAMILY_KINDS),
        )

    lam = kernel_default = weight_default = None
    kernel_rows: tuple[WeightSpec, ...] = ()
    weight_overrides: tuple[tuple[int, WeightSpec], ...] = ()
    table_depth = None
    entries: tuple[tuple[tuple[int, ...], Fraction], ...] = ()

    if family_kind in ("markov", "markov-prob"):
        _reject_unknown(fam_lines, {"kind", "lambda", "P", "P@"}, "family")
        lam_line = _require(fam_lines, "lambda", "family")
        lam = _parse_weight_spec(
            _split_words(lam_line.value, lam_line.value_col), lam_line.no
        )
        p_line = _require(fam_lines, "P", "family")
        row_lines = sorted(
            (ln for ln in fam_lines if ln.key.startswith("P@")),
            key=lambda ln: _at_index(ln, "P"),
        )
        if spins_kind == "finite":
            if row_lines:
                raise SpecSemanticError(
                    "P@ row overrides are for the denumerable spin set",
                    row_lines[0].no,
                )
            rows = []
            offset = 0
            for segment in p_line.value.split(";"):
                words = _split_words(segment, p_line.value_col + offset)
                rows.append(_parse_weight_spec(words, p_line.no))
                offset += len(segment) + 1
            kernel_rows = tuple(rows)
        else:
            if ";" in p_line.value:
                raise SpecSyntaxError(
                    "over the denumerable spin set P is the default row; "
                    "give explicit rows as P@<q> lines",
                    p_line.no, p_line.value_col,
                )
            kernel_default = _parse_weight_spec(
                _split_words(p_line.value, p_line.value_col), p_line.no
            )
            rows = []
            for want, ln in enumerate(row_lines):
                got = _at_index(ln, "P")
                if got != want:
                    raise SpecSemanticError(
                        f"explicit rows must be consecutive from P@0; found P@{got}",
                        ln.no,
                    )
                rows.append(
                    _parse_weight_spec(_split_words(ln.value, ln.value_col), ln.no)
                )
            kernel_rows = tuple(rows)
    elif family_kind == "product":
        _reject_unknown(fam_lines, {"kind", "w", "w@"}, "family")
        w_line = _require(fam_lines, "w", "family")
        weight_default = _parse_weight_spec(
            _split_words(w_line.value, w_line.value_col), w_line.no
        )
        overrides = {}
        for ln in fam_lines:
            if not ln.key.startswith("w@"):
                continue
            vertex = _at_index(ln, "w")
            if vertex in overrides:
                raise SpecSemanticError(f"duplicate override {ln.key}", ln.no)
            overrides[vertex] = _parse_weight_spec(
                _split_words(ln.value, ln.value_col), ln.no
            )
        weight_overrides = tuple(sorted(overrides.items()))
    else:  # table
        _reject_unknown(fam_lines, {"kind", "depth", "entry"}, "family")
        d_line = _require(fam_lines, "depth", "family")
        table_depth = _parse_int(d_line.value, d_line.no, d_line.value_col)
        entry_lines = [ln for ln in fam_lines if ln.key == "entry"]
        if not entry_lines:
            raise SpecSemanticError("a table family needs at least one entry")
        seen: dict[tuple[int, ...], Fraction] = {}
        for ln in entry_lines:
            if ":" not in ln.value:
                raise SpecSyntaxError(
                    "entry format is: v0 v1 ... : weight", ln.no, ln.value_col
                )
            left, right = ln.value.split(":", 1)
            key_words = _split_words(left, ln.value_col)
            if not key_words:
                raise SpecSyntaxError("entry has no values", ln.no, ln.value_col)
            key = tuple(_parse_int(w, ln.no, c) for w, c in key_words)
            right_col = ln.value_col + len(left) + 1
            weight_words = _split_words(right, right_col)
            if len(weight_words) != 1:
                raise SpecSyntaxError(
                    "entry weight must be a single rational", ln.no, right_col
                )
            weight = _parse_rational(weight_words[0][0], ln.no, weight_words[0][1])
            if key in seen:
                raise SpecSemanticError(f"duplicate entry for {key}", ln.no)
            seen[key] = weight
        entries = tuple(sorted(seen.items()))

    covers: list[tuple[str, object]] = []
    for ln in sections.get("covers", []):
        name = ln.key
        if not re.fullmatch(r"[a-z][a-z0-9_-]*", name):
            raise SpecSemanticError(f"malformed cover name {name!r}", ln.no)
        if any(name == existing for existing, _ in covers):
            raise SpecSemanticError(f"duplicate cover {name!r}", ln.no)
        covers.append((name, _parse_cover_spec(ln)))

    return SpecDocument(
        order=order,
        max_depth=max_depth,
        spins_kind=spins_kind,
        spins_size=spins_size,
        family_kind=family_kind,
        lam=lam,
        kernel_rows=kernel_rows,
        kernel_default=kernel_default,
        weight_default=weight_default,
        weight_overrides=weight_overrides,
        table_depth=table_depth,
        entries=entries,
        covers=tuple(covers),
    )


def _parse_cover_spec(ln: _Line):
    words = _split_words(ln.value, ln.value_col)
    head, head_col = words[0]
    if head == "slice":
        if len(words) not in (2, 4):
            raise SpecSyntaxError(
                "slice cover format: slice x<site> [block <n>]", ln.no, head_col
            )
        site_word, site_col = words[1]
        m = re.fullmatch(r"x(\d+)", site_word)
        if not m:
            raise SpecSyntaxError(
                f"not a site: {site_word!r}", ln.no, site_col, expected=["x<vertex>"]
            )
        block = 1
        if len(words) == 4:
            if words[2][0] != "block":
                raise SpecSyntaxError(
                    f"unexpected {words[2][0]!r}", ln.no, words[2][1],
                    expected=["block"],
                )
            block = _parse_int(words[3][0], ln.no, words[3][1])
            if block < 1:
                raise SpecSemanticError("block must be >= 1", ln.no, words[3][1])
        return SliceCoverSpec(int(m.group(1)), block)
    if head == "list":
        return ListCoverSpec(tuple(_parse_quoted_events(ln)))
    raise SpecSyntaxError(
        f"unexpected {head!r}", ln.no, head_col, expected=["slice", "list"]
    )


def _parse_quoted_events(ln: _Line):
    text = ln.value
    pos = text.index("list") + 4
    events = []
    expecting = True
    while pos < len(text):
        ch = text[pos]
        if ch in " \t":
            pos += 1
            continue
        if ch == '"':
            if not expecting:
                raise SpecSyntaxError(
                    "events must be separated by ';'", ln.no, ln.value_col + pos
                )
            end = text.find('"', pos + 1)
            if end < 0:
                raise SpecSyntaxError(
                    "unterminated event quote", ln.no, ln.value_col + pos
                )
            events.append(
                parse_event(
                    text[pos + 1:end],
                    line_base=ln.no,
                    col_base=ln.value_col + pos + 1,
                )
            )
            expecting = False
            pos = end + 1
            continue
        if ch == ";":
            if expecting:
                raise SpecSyntaxError(
                    "expected a quoted event before ';'", ln.no, ln.value_col + pos
                )
            expecting = True
            pos += 1
            continue
        raise SpecSyntaxError(
            f"unexpected character {ch!r}", ln.no, ln.value_col + pos,
            expected=['"', "';'"],
        )
    if expecting:
        raise SpecSyntaxError(
            "cover list ended without an event", ln.no, ln.value_col + len(text)
        )
    return events


# ---------------------------------------------------------------------------
# canonical rendering


def render_document(doc: SpecDocument) -> str:
    out = ["[tree]", f"k = {doc.order}", f"max_depth = {doc.max_depth}", ""]
    out.append("[spins]")
    out.append(f"kind = {doc.spins_kind}")
    if doc.spins_kind == "finite":
        out.append(f"size = {doc.spins_size}")
    out.append("")
    out.append("[family]")
    out.append(f"kind = {doc.family_kind}")
    if doc.family_kind in ("markov", "markov-prob"):
        out.append(f"lambda = {_render_weight_spec(doc.lam)}")
        if doc.spins_kind == "finite":
            rows = " ; ".join(_render_weight_spec(r) for r in doc.kernel_rows)
            out.append(f"P = {rows}")
        else:
            out.append(f"P = {_render_weight_spec(doc.kernel_default)}")
            for q, row in enumerate(doc.kernel_rows):
                out.append(f"P@{q} = {_render_weight_spec(row)}")
    elif doc.family_kind == "product":
        out.append(f"w = {_render_weight_spec(doc.weight_default)}")
        for vertex, ws in doc.weight_overrides:
            out.append(f"w@{vertex} = {_render_weight_spec(ws)}")
    else:
        out.append(f"depth = {doc.table_depth}")
        for key, weight in doc.entries:
            values = " ".join(str(v) for v in key)
            out.append(f"entry = {values} : {_render_fraction(weight)}")
    if doc.covers:
        out.append("")
        out.append("[covers]")
        for name, spec in doc.covers:
            if isinstance(spec, SliceCoverSpec):
                block = f" block {spec.block}" if spec.block != 1 else ""
                out.append(f"{name} = slice x{spec.site}{block}")
            else:
                rendered = " ; ".join(f'"{render_event(e)}"' for e in spec.events)
                out.append(f"{name} = list {rendered}")
    out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# building runtime objects


@dataclass
class BuiltSpec:
    doc: SpecDocument
    ctx: Context
    family: MeasureFamily
    covers: dict[str, Cover]


def build_document(doc: SpecDocument) -> BuiltSpec:
    tree = TreeGeometry(doc.order, doc.max_depth)
    spins = SpinSet.finite(doc.spins_size) if doc.spins_kind == "finite" else SpinSet.naturals()
    ctx = Context(tree, spins)

    if doc.family_kind in ("markov", "markov-prob"):
        lam = _build_weight(doc.lam, spins, "lambda")
        if spins.is_finite:
            if len(doc.kernel_rows) != spins.size:
                raise SpecSemanticError(
                    f"P needs {spins.size} rows, got {len(doc.kernel_rows)}"
                )
            rows = [
                _build_weight(row, spins, f"P row {q}")
                for q, row in enumerate(doc.kernel_rows)
            ]
            kernel = TransitionKernel.from_matrix(spins, rows)
        else:
            default = _build_weight(doc.kernel_default, spins, "P")
            rows = [
                _build_weight(row, spins, f"P@{q}")
                for q, row in enumerate(doc.kernel_rows)
            ]
            kernel = TransitionKernel.for_naturals(default, rows)
        kind = None
        if doc.family_kind == "markov-prob":
            if not kernel.is_stochastic() or weight_sum_all(lam) != 1:
                raise SpecSemanticError(
                    "markov-prob requires unit row sums and unit total root weight"
                )
            kind = "probability"
        family = markov_family(ctx, lam, kernel, kind=kind)
    elif doc.family_kind == "product":
        default = _build_weight(doc.weight_default, spins, "w")
        overrides = {}
        for vertex, ws in doc.weight_overrides:
            try:
                tree.check_vertex(vertex)
            except TreeMeasureError as exc:
                raise SpecSemanticError(f"w@{vertex}: {exc}") from None
            overrides[vertex] = _build_weight(ws, spins, f"w@{vertex}")
        family = product_family(ctx, default, overrides)
    else:
        try:
            tree.check_depth(doc.table_depth)
        except TreeMeasureError as exc:
            raise SpecSemanticError(f"table depth: {exc}") from None
        size = tree.ball_size(doc.table_depth)
        table = {}
        for key, weight in doc.entries:
            if len(key) != size:
                raise SpecSemanticError(
                    f"entry {key} needs {size} values for depth {doc.table_depth}"
                )
            for v in key:
                try:
                    spins.check(v)
                except TreeMeasureError as exc:
                    raise SpecSemanticError(f"entry {key}: {exc}") from None
            if weight < 0:
                raise SpecSemanticError(f"entry {key}: weights must be non-negative")
            table[key] = weight
        family = table_family(ctx, doc.table_depth, table)

    covers: dict[str, Cover] = {}
    for name, spec in doc.covers:
        if isinstance(spec, SliceCoverSpec):
            if spins.is_finite:
                raise SpecSemanticError(
                    f"cover {name!r}: slice covers need the denumerable spin set"
                )
            try:
                tree.check_vertex(spec.site)
            except TreeMeasureError as exc:
                raise SpecSemanticError(f"cover {name!r}: {exc}") from None
            covers[name] = slice_cover(ctx, spec.site, spec.block, label=name)
        else:
            try:
                parts = [lower_event(ctx, e) for e in spec.events]
            except TreeMeasureError as exc:
                raise SpecSemanticError(f"cover {name!r}: {exc}") from None
            covers[name] = finite_cover(parts, label=name)

    return BuiltSpec(doc, ctx, family, covers)


def load_spec(text: str) -> BuiltSpec:
    """Parse and build in one step."""
    return build_document(parse_document(text))
