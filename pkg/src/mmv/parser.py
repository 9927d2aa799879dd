"""Concrete syntax: contract files and the `<< ... >>` annotation language.

A contract file is

    parameter <type> ;
    storage <type> ;
    << Measure ... >>              (zero or more)
    << ContractAnnot ... >>        (exactly one)
    code { ... } ;

with `# ...` and `/* ... */` comments.  Inside code blocks, an annotation
written before an instruction attaches to it as a precondition-side
annotation; one written after an instruction (or trailing in a block)
attaches to the preceding instruction as a postcondition-side annotation.

User predicates are ML-flavored and quantifier free: `=`, `<>`, `&&`,
`||`, `not`, `=>`, `+`, `::`, `[]`, `( , )`, `call(f, x) = r`,
`call_err(f, x) = e`, `Transfer a m d`, and applications of declared
measure functions plus the builtins `pack` and `sha256`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .logic import (
    FCall, FCallErr, FEq, FExists, FNot, FOr, FTrue, Formula, MeasureDef,
    SortError, Term, TmCons, TmLit, TmMangled, TmMeasure, TmPair, TmPlus,
    TmTransfer, TmVar, TRUE, TypeEnv, f_and, f_neq, f_or, is_and,
    sort_of_term, subst_term_in_term, wf_formula,
)
from .syntax import (
    ADDRESS, BYTES, INT, NAT, NIL, OPERATION,
    Add, Block, Car, Cdr, Cons, Dip, Drop, Dup, Exec, Failwith, If, IfCons,
    Instr, InstrSeq, Iter, Lambda, Loop, Nil, Not, Pack, Pair, Push, Sha256,
    SimpleType, Swap, TAddress, TArrow, TBytes, TInt, TList, TNat,
    TOperation, TPair, TransferTokens,
    VAddress, VBytes, VCode, VCons, VInt, VNil, VPair, VTransfer, Value,
    iter_list_value, list_value, value_has_type,
)


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col


Span = tuple  # (line, col, end_line, end_col)


# ---------------------------------------------------------------------------
# Parsed annotation payloads
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StackTypePattern:
    """`{ x : T :. y : T' :. _ | phi }`; `rest` marks the `_` tail, which
    expands at the use site to fresh unconstrained binders."""

    binders: tuple  # ((name, SimpleType), ...)
    rest: bool
    pred: Formula


@dataclass(frozen=True)
class ContractSpec:
    param_name: str
    storage_name: str
    pre: Formula
    ops_name: str
    storage2_name: str
    post: Formula
    exc_name: str
    exc_sort: Optional[SimpleType]
    exc: Formula
    ghosts: tuple = ()  # ((name, SimpleType), ...)


@dataclass(frozen=True)
class LambdaSpec:
    arg_name: str
    pre: Formula
    res_name: str
    post: Formula
    exc_name: str
    exc_sort: Optional[SimpleType]
    exc: Formula
    ghosts: tuple = ()


@dataclass(frozen=True)
class Annotation:
    kind: str  # assert | assume | loopinv | lambdannot
    payload: object  # StackTypePattern | LambdaSpec
    placement: str  # pre | post


@dataclass(frozen=True)
class AnnotatedContract:
    parameter_ty: SimpleType
    storage_ty: SimpleType
    spec: ContractSpec
    code: InstrSeq
    annotations: tuple  # ((path, Annotation), ...) in document order
    measures: tuple  # (MeasureDef, ...)
    spans: dict = field(compare=False, default_factory=dict, repr=False)

    def annots_at(self, path, placement: str):
        return [a for p, a in self.annotations if p == path and a.placement == placement]


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_PUNCT = [
    "<<", ">>", ":.", "::", "->", "=>", "<>", "&&", "||",
    "{", "}", "(", ")", "[", "]", ";", ",", "|", ":", "=", "+", "&", ".", "_",
]

_KEYWORDS = {
    "parameter", "storage", "code",
    "Measure", "ContractAnnot", "Assert", "Assume", "LoopInv", "LambdaAnnot",
    "where", "True", "False", "not", "call", "call_err", "exists", "forall",
    "Transfer", "pack", "sha256",
    "int", "nat", "bytes", "address", "operation", "pair", "list", "lambda",
    "DIP", "DROP", "DUP", "SWAP", "PUSH", "NOT", "ADD", "IF", "LOOP", "PAIR",
    "CAR", "CDR", "NIL", "CONS", "IF_CONS", "ITER", "LAMBDA", "EXEC",
    "TRANSFER_TOKENS", "FAILWITH", "PACK", "SHA256",
}

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT_RE = re.compile(r"-?[0-9]+")
_HEX_RE = re.compile(r"0x[0-9A-Fa-f]*")


@dataclass(frozen=True)
class _Tok:
    kind: str  # punct text, 'ident', 'keyword', 'int', 'string', 'bytes', 'eof'
    text: str
    line: int
    col: int


def _lex(src: str) -> list:
    toks = []
    line, col, i = 1, 1, 0
    n = len(src)

    def err(msg):
        raise ParseError(msg, line, col)

    while i < n:
        ch = src[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and src[i] != "\n":
                i += 1
            continue
        if src.startswith("/*", i):
            end = src.find("*/", i + 2)
            if end < 0:
                err("unterminated comment")
            for c in src[i:end + 2]:
                if c == "\n":
                    line += 1
                    col = 1
                else:
                    col += 1
            i = end + 2
            continue
        if ch == '"':
            j = src.find('"', i + 1)
            if j < 0 or "\n" in src[i + 1:j]:
                err("unterminated string")
            toks.append(_Tok("string", src[i + 1:j], line, col))
            col += j + 1 - i
            i = j + 1
            continue
        m = _HEX_RE.match(src, i)
        if m:
            text = m.group(0)
            if len(text) % 2 != 0:
                err("odd-length bytes literal")
            toks.append(_Tok("bytes", text, line, col))
            col += len(text)
            i = m.end()
            continue
        m = _INT_RE.match(src, i)
        if m and (ch.isdigit() or (ch == "-" and m.end() > i + 1)):
            toks.append(_Tok("int", m.group(0), line, col))
            col += m.end() - i
            i = m.end()
            continue
        m = _IDENT_RE.match(src, i)
        if m:
            text = m.group(0)
            kind = "keyword" if text in _KEYWORDS else "ident"
            if text == "_":
                kind = "_"
            toks.append(_Tok(kind, text, line, col))
            col += len(text)
            i = m.end()
            continue
        for p in _PUNCT:
            if src.startswith(p, i):
                toks.append(_Tok(p, p, line, col))
                col += len(p)
                i += len(p)
                break
        else:
            err(f"unexpected character {ch!r}")
    toks.append(_Tok("eof", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, toks: list):
        self.toks = toks
        self.pos = 0
        self._literal = 0  # inside a code-literal value

    def peek(self, ahead=0) -> _Tok:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> _Tok:
        tok = self.peek()
        self.pos += 1
        return tok

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (text is None or tok.text == text)

    def eat(self, kind: str, text: Optional[str] = None) -> _Tok:
        tok = self.peek()
        if not self.at(kind, text):
            want = text or kind
            self.fail(f"expected {want!r}, found {tok.text or tok.kind!r}")
        return self.next()

    def eat_kw(self, word: str) -> _Tok:
        return self.eat("keyword", word)

    def fail(self, msg: str):
        tok = self.peek()
        raise ParseError(msg, tok.line, tok.col)

    # -- types ---------------------------------------------------------

    def type_(self) -> SimpleType:
        tok = self.peek()
        if tok.kind == "(":
            self.next()
            t = self.type_()
            self.eat(")")
            return t
        if tok.kind != "keyword":
            self.fail("expected a type")
        self.next()
        match tok.text:
            case "int":
                return INT
            case "nat":
                return NAT
            case "bytes":
                return BYTES
            case "address":
                return ADDRESS
            case "operation":
                return OPERATION
            case "pair":
                return TPair(self.type_(), self.type_())
            case "list":
                return TList(self.type_())
            case "lambda":
                return TArrow(self.type_(), self.type_())
        self.fail(f"expected a type, found {tok.text!r}")

    # -- values ----------------------------------------------------------

    def value(self) -> Value:
        tok = self.peek()
        if tok.kind == "int":
            self.next()
            return VInt(int(tok.text))
        if tok.kind == "string":
            self.next()
            return VAddress(tok.text)
        if tok.kind == "bytes":
            self.next()
            return VBytes(bytes.fromhex(tok.text[2:]))
        if tok.kind == "[":
            self.next()
            items = []
            while not self.at("]"):
                items.append(self.value())
                if self.at(";"):
                    self.next()
                else:
                    break
            self.eat("]")
            return list_value(items)
        if tok.kind == "(":
            self.next()
            a = self.value()
            self.eat(",")
            b = self.value()
            self.eat(")")
            return VPair(a, b)
        if self.at("keyword", "Transfer"):
            self.next()
            arg = self.value()
            amount = self.value()
            dest = self.value()
            if not isinstance(amount, VInt) or not isinstance(dest, VAddress):
                self.fail("Transfer takes a value, an integer, and an address")
            return VTransfer(arg, amount.n, dest.token)
        if tok.kind == "{":
            self._literal += 1
            try:
                return VCode(self.code_block())
            finally:
                self._literal -= 1
        self.fail("expected a value")

    def code_block(self) -> InstrSeq:
        """A bare `{ ... }` instruction block inside a value literal; no
        annotations, no span recording."""
        self.eat("{")
        seq = []
        while not self.at("}"):
            if self.at("<<"):
                self.fail("annotations are not allowed inside code literals")
            seq.append(self.instr(("lit",)))
            if self.at(";"):
                self.next()
            else:
                break
        self.eat("}")
        return tuple(seq)

    def sub_block(self, path: tuple) -> InstrSeq:
        return self.code_block()

    def instr(self, path: tuple) -> Instr:
        tok = self.peek()
        if tok.kind == "{":
            return Block(self.sub_block(path + ("b",)))
        if tok.kind != "keyword":
            self.fail("expected an instruction")
        self.next()
        match tok.text:
            case "DIP":
                return Dip(self.sub_block(path + ("b",)))
            case "DROP":
                return Drop()
            case "DUP":
                return Dup()
            case "SWAP":
                return Swap()
            case "PUSH":
                ty = self.type_()
                val = self.value()
                if not value_has_type(val, ty):
                    raise ParseError(f"PUSH payload is not of type {pretty_type(ty)}",
                                     tok.line, tok.col)
                return Push(ty, val)
            case "NOT":
                return Not()
            case "ADD":
                return Add()
            case "IF":
                t = self.sub_block(path + ("t",))
                e = self.sub_block(path + ("e",))
                return If(t, e)
            case "LOOP":
                return Loop(self.sub_block(path + ("b",)))
            case "PAIR":
                return Pair()
            case "CAR":
                return Car()
            case "CDR":
                return Cdr()
            case "NIL":
                return Nil(self.type_())
            case "CONS":
                return Cons()
            case "IF_CONS":
                t = self.sub_block(path + ("t",))
                e = self.sub_block(path + ("e",))
                return IfCons(t, e)
            case "ITER":
                return Iter(self.sub_block(path + ("b",)))
            case "LAMBDA":
                t1 = self.type_()
                t2 = self.type_()
                return Lambda(t1, t2, self.sub_block(path + ("b",)))
            case "EXEC":
                return Exec()
            case "TRANSFER_TOKENS":
                return TransferTokens(self.type_())
            case "FAILWITH":
                return Failwith()
            case "PACK":
                return Pack()
            case "SHA256":
                return Sha256()
        self.fail(f"unknown instruction {tok.text!r}")

    # -- terms and formulae ----------------------------------------------

    def formula(self, ctx: "_FormulaCtx") -> Formula:
        return self._implies(ctx)

    def _implies(self, ctx) -> Formula:
        left = self._or(ctx)
        if self.at("=>"):
            self.next()
            right = self._implies(ctx)
            return FOr(FNot(left), right)
        return left

    def _or(self, ctx) -> Formula:
        parts = [self._and(ctx)]
        while self.at("||"):
            self.next()
            parts.append(self._and(ctx))
        return f_or(*parts)

    def _and(self, ctx) -> Formula:
        parts = [self._not(ctx)]
        while self.at("&&"):
            self.next()
            parts.append(self._not(ctx))
        return f_and(*parts)

    def _not(self, ctx) -> Formula:
        if self.at("keyword", "not"):
            self.next()
            return FNot(self._not(ctx))
        return self._atom_formula(ctx)

    def _atom_formula(self, ctx) -> Formula:
        if self.at("keyword", "True"):
            self.next()
            return TRUE
        if self.at("keyword", "False"):
            self.next()
            return FNot(TRUE)
        if self.at("keyword", "exists") or self.at("keyword", "forall"):
            self.fail("user predicates have to be quantifier free")
        if self.at("keyword", "call") or self.at("keyword", "call_err"):
            kind = self.next().text
            self.eat("(")
            fn = self.term(ctx)
            self.eat(",")
            arg = self.term(ctx)
            self.eat(")")
            self.eat("=")
            res = self.term(ctx)
            return (FCall if kind == "call" else FCallErr)(fn, arg, res)
        if self.at("("):
            # either a parenthesized formula or a pair-term comparison;
            # backtrack on failure
            save = self.pos
            try:
                self.next()
                phi = self.formula(ctx)
                self.eat(")")
                if self.at("=") or self.at("<>"):
                    raise ParseError("term position", 0, 0)
                return phi
            except ParseError:
                self.pos = save
        left = self.term(ctx)
        if self.at("="):
            self.next()
            return FEq(left, self.term(ctx))
        if self.at("<>"):
            self.next()
            return f_neq(left, self.term(ctx))
        self.fail("expected a comparison")

    def term(self, ctx) -> Term:
        left = self._plus_term(ctx)
        if self.at("::"):
            self.next()
            return TmCons(left, self.term(ctx))
        return left

    def _plus_term(self, ctx) -> Term:
        left = self._app_term(ctx)
        while self.at("+"):
            self.next()
            left = TmPlus(left, self._app_term(ctx))
        return left

    def _app_term(self, ctx) -> Term:
        tok = self.peek()
        if tok.kind == "keyword" and tok.text in ("pack", "sha256"):
            self.next()
            arg = self._atom_term(ctx)
            if tok.text == "sha256":
                return TmMangled("sha256", BYTES, arg)
            inst = self._sort_hint(ctx, arg, tok)
            return TmMangled("pack", inst, arg)
        if tok.kind == "ident" and tok.text in ctx.measure_names and \
                not self._next_is_term_operator(1):
            self.next()
            return TmMeasure(tok.text, self._atom_term(ctx))
        return self._atom_term(ctx)

    def _next_is_term_operator(self, ahead: int) -> bool:
        return self.peek(ahead).kind in ("+", "::", "=", "<>", ")", ",", "}",
                                         "&&", "||", "=>", "|", "]", ";", "eof")

    def _sort_hint(self, ctx, arg: Term, tok: _Tok) -> SimpleType:
        try:
            return sort_of_term(ctx.gamma, arg, ctx.measures)
        except SortError as exc:
            raise ParseError(f"cannot sort pack argument: {exc}", tok.line, tok.col)

    def _atom_term(self, ctx) -> Term:
        tok = self.peek()
        if tok.kind in ("int", "string", "bytes") or tok.kind == "[" \
                or (tok.kind == "{"):
            return _literal_term(self.value())
        if self.at("keyword", "Transfer"):
            self.next()
            return TmTransfer(self._atom_term(ctx), self._atom_term(ctx),
                              self._atom_term(ctx))
        if tok.kind == "(":
            self.next()
            a = self.term(ctx)
            if self.at(","):
                self.next()
                b = self.term(ctx)
                self.eat(")")
                return TmPair(a, b)
            self.eat(")")
            return a
        if tok.kind == "ident":
            self.next()
            return TmVar(tok.text)
        self.fail("expected a term")

    # -- stack type patterns -----------------------------------------------

    def stack_pattern(self, ctx) -> StackTypePattern:
        self.eat("{")
        binders = []
        rest = False
        if self.at("_"):
            self.next()
            rest = True
        else:
            while True:
                name = self.eat("ident").text
                self.eat(":")
                ty = self.type_()
                binders.append((name, ty))
                if self.at(":."):
                    self.next()
                    if self.at("_"):
                        self.next()
                        rest = True
                        break
                    continue
                break
        seen = set()
        for name, _ in binders:
            if name in seen:
                self.fail(f"duplicate binder {name!r}")
            seen.add(name)
        self.eat("|")
        try:
            inner = ctx.extend(binders)
        except SortError as exc:
            self.fail(str(exc))
        pred = self.formula(inner)
        self.eat("}")
        return StackTypePattern(tuple(binders), rest, pred)


class _FormulaCtx:
    """Variables and measures in scope while parsing a predicate."""

    def __init__(self, gamma: TypeEnv, measures):
        self.gamma = gamma
        self.measures = tuple(measures)
        self.measure_names = {m.name for m in self.measures}

    def extend(self, binders) -> "_FormulaCtx":
        gamma = self.gamma
        for name, ty in binders:
            if name in gamma:
                raise SortError(f"binder {name!r} shadows a variable in scope")
            gamma = gamma.extend(name, ty)
        return _FormulaCtx(gamma, self.measures)


def _literal_term(value: Value) -> Term:
    match value:
        case VCons(h, t):
            return TmCons(_literal_term(h), _literal_term(t))
        case VPair(a, b):
            return TmPair(_literal_term(a), _literal_term(b))
        case _:
            return TmLit(value)


# ---------------------------------------------------------------------------
# Contract-level parsing
# ---------------------------------------------------------------------------


def parse_contract(text: str) -> AnnotatedContract:
    parser = _ContractParser(_lex(text))
    try:
        return parser.contract()
    except SortError as exc:
        tok = parser.peek()
        raise ParseError(str(exc), tok.line, tok.col) from exc


def parse_formula(text: str, gamma: TypeEnv, measures=()) -> Formula:
    """Parse a standalone user predicate and sort-check it."""
    p = _Parser(_lex(text))
    phi = p.formula(_FormulaCtx(gamma, measures))
    p.eat("eof")
    wf_formula(gamma, phi, measures)
    return phi


def parse_value(text: str) -> Value:
    """Parse a standalone value literal (CLI inputs)."""
    p = _Parser(_lex(text))
    v = p.value()
    p.eat("eof")
    return v


class _ContractParser(_Parser):
    def __init__(self, toks):
        super().__init__(toks)
        self.measures: list = []
        self.spans: dict = {}
        self.annotations: list = []
        self.param_ty = None
        self.storage_ty = None
        self.spec: Optional[ContractSpec] = None

    # -- instruction blocks with annotations ------------------------------

    def sub_block(self, path: tuple) -> InstrSeq:
        if self._literal:
            return self.code_block()
        return self.block(path)

    def block(self, path: tuple) -> InstrSeq:
        """Parse `{ ... }`, attaching annotations to instruction paths."""
        self.eat("{")
        seq = []
        idx = 0
        pending: list = []
        while not self.at("}"):
            while self.at("<<"):
                pending.append(self.annotation())
            if self.at("}"):
                break
            start = self.peek()
            ipath = path + (idx,)
            for ann in pending:
                self.annotations.append((ipath, _with_placement(ann, "pre")))
            pending = []
            instr = self.instr(ipath)
            end = self.toks[self.pos - 1]
            self.spans[ipath] = (start.line, start.col, end.line,
                                 end.col + len(end.text))
            while self.at("<<"):
                self.annotations.append((ipath, _with_placement(self.annotation(), "post")))
            seq.append(instr)
            idx += 1
            if self.at(";"):
                self.next()
            else:
                break
        if pending:
            # annotations trailing a semicolon attach to the last instruction
            if not seq:
                self.fail("annotation in an empty block has nothing to attach to")
            for ann in pending:
                self.annotations.append(
                    (path + (idx - 1,), _with_placement(ann, "post")))
        self.eat("}")
        return tuple(seq)

    # -- annotations -------------------------------------------------------

    def ghost_env(self) -> TypeEnv:
        gamma = TypeEnv()
        if self.spec is not None:
            for name, ty in self.spec.ghosts:
                gamma = gamma.extend(name, ty)
            gamma = gamma.extend(self.spec.param_name, self.param_ty)
            gamma = gamma.extend(self.spec.storage_name, self.storage_ty)
        return gamma

    def annotation(self) -> Annotation:
        self.eat("<<")
        tok = self.peek()
        ctx = _FormulaCtx(self.ghost_env(), self.measures)
        if self.at("keyword", "Assert") or self.at("keyword", "Assume"):
            kind = self.next().text.lower()
            pat = self.stack_pattern(ctx)
            self.eat(">>")
            return Annotation(kind, pat, "pre")
        if self.at("keyword", "LoopInv"):
            self.next()
            pat = self.stack_pattern(ctx)
            self.eat(">>")
            return Annotation("loopinv", pat, "pre")
        if self.at("keyword", "LambdaAnnot"):
            self.next()
            spec = self.lambda_spec(ctx)
            self.eat(">>")
            return Annotation("lambdannot", spec, "pre")
        self.fail(f"unknown annotation {tok.text!r}")

    def lambda_spec(self, outer_ctx) -> LambdaSpec:
        ghosts = self._peek_ghosts_at_end()
        ctx = outer_ctx.extend(ghosts)

        self.eat("{")
        arg_name = self.eat("ident").text
        self.eat("|")
        # the argument sort comes from the LAMBDA instruction; bind lazily
        pre_ctx = ctx.extend([(arg_name, _DEFERRED)])
        pre = self.formula(pre_ctx)
        self.eat("}")
        self.eat("->")
        self.eat("{")
        res_name = self.eat("ident").text
        self.eat("|")
        post = self.formula(ctx.extend([(res_name, _DEFERRED)]))
        self.eat("}")
        self.eat("&")
        exc_name, exc_sort, exc = self._exc_pattern(ctx)
        if self.at("("):
            self._ghosts()  # consume; already peeked
        return LambdaSpec(arg_name, pre, res_name, post, exc_name, exc_sort,
                          exc, tuple(ghosts))

    def _peek_ghosts_at_end(self):
        """Scan ahead for a trailing ghost declaration so ghost names are in
        scope while the three predicates parse."""
        save = self.pos
        depth = 0
        ghosts = []
        while True:
            tok = self.peek()
            if tok.kind == "eof":
                break
            if tok.kind in ("{", "("):
                depth += 1
            elif tok.kind in ("}", ")"):
                depth -= 1
            elif tok.kind == ">>" and depth == 0:
                break
            self.next()
        # walk back: ghosts are `( x : T , ... )` just before `>>`
        end = self.pos
        self.pos = save
        probe = save
        while probe < end:
            if self.toks[probe].kind == "(":
                inner = _Parser(self.toks)
                inner.pos = probe
                try:
                    got = self._parse_ghost_list(inner)
                except ParseError:
                    probe += 1
                    continue
                if inner.pos == end:
                    ghosts = got
                    break
            probe += 1
        return ghosts

    @staticmethod
    def _parse_ghost_list(p: "_Parser"):
        p.eat("(")
        out = []
        while True:
            name = p.eat("ident").text
            p.eat(":")
            out.append((name, p.type_()))
            if p.at(","):
                p.next()
                continue
            break
        p.eat(")")
        return out

    def _ghosts(self):
        return self._parse_ghost_list(self)

    def _exc_pattern(self, ctx):
        self.eat("{")
        if self.at("_"):
            self.next()
            exc_name, exc_sort = "_", None
        else:
            exc_name = self.eat("ident").text
            exc_sort = None
            if self.at(":"):
                self.next()
                exc_sort = self.type_()
        self.eat("|")
        binders = [] if exc_name == "_" else [(exc_name, exc_sort or INT)]
        exc = self.formula(ctx.extend(binders))
        self.eat("}")
        return exc_name, exc_sort, exc

    # -- top level ---------------------------------------------------------

    def contract(self) -> AnnotatedContract:
        self.eat_kw("parameter")
        self.param_ty = self.type_()
        self.eat(";")
        self.eat_kw("storage")
        self.storage_ty = self.type_()
        self.eat(";")

        while self.at("<<"):
            save = self.pos
            self.next()
            if self.at("keyword", "Measure"):
                self.next()
                self.measures.append(self.measure_def())
                self.eat(">>")
                continue
            if self.at("keyword", "ContractAnnot"):
                self.next()
                if self.spec is not None:
                    self.fail("duplicate ContractAnnot")
                self.spec = self.contract_spec()
                self.eat(">>")
                continue
            self.pos = save
            break
        if self.spec is None:
            self.fail("missing ContractAnnot annotation")

        self.eat_kw("code")
        start = self.peek()
        code = self.block(())
        end = self.toks[self.pos - 1]
        self.spans[()] = (start.line, start.col, end.line, end.col + len(end.text))
        if self.at(";"):
            self.next()
        self.eat("eof")

        contract = AnnotatedContract(
            parameter_ty=self.param_ty,
            storage_ty=self.storage_ty,
            spec=self.spec,
            code=code,
            annotations=tuple(self.annotations),
            measures=tuple(self.measures),
            spans=self.spans,
        )
        _validate(contract)
        return contract

    def measure_def(self) -> MeasureDef:
        tok = self.peek()
        name = self.eat("ident").text
        self.eat(":")
        arg_sort = self.type_()
        if not isinstance(arg_sort, TList):
            raise ParseError("measures are defined over list sorts only",
                             tok.line, tok.col)
        self.eat("->")
        res_sort = self.type_()
        self.eat_kw("where")
        self.eat("[")
        self.eat("]")
        self.eat("=")
        provisional = MeasureDef(name, arg_sort, res_sort, TmLit(VInt(0)), TmLit(VInt(0)))
        scope = tuple(self.measures) + (provisional,)
        nil_rhs = self.term(_FormulaCtx(TypeEnv(), scope))
        _check_no_self_reference(name, nil_rhs, tok)
        self.eat("|")
        h = self.eat("ident").text
        self.eat("::")
        t = self.eat("ident").text
        if h == t:
            raise ParseError("measure pattern variables must be distinct", tok.line, tok.col)
        self.eat("=")
        cons_env = TypeEnv().extend(h, arg_sort.elem).extend(t, arg_sort)
        cons_rhs = self.term(_FormulaCtx(cons_env, scope))
        _check_measure_recursion(name, cons_rhs, t, tok)
        # normalize pattern variables to the canonical h/t
        cons_rhs = subst_term_in_term(
            subst_term_in_term(
                subst_term_in_term(cons_rhs, h, TmVar("#h")), t, TmVar("t")),
            "#h", TmVar("h"))
        measure = MeasureDef(name, arg_sort, res_sort, nil_rhs, cons_rhs)
        try:
            scope = tuple(self.measures) + (measure,)
            _check_sorted_term(TypeEnv(), nil_rhs, res_sort, scope)
            _check_sorted_term(TypeEnv().extend("h", arg_sort.elem).extend("t", arg_sort),
                               cons_rhs, res_sort, scope)
        except SortError as exc:
            raise ParseError(f"ill-sorted measure body: {exc}", tok.line, tok.col)
        return measure

    def contract_spec(self) -> ContractSpec:
        ghosts = self._peek_ghosts_at_end()
        base = TypeEnv()
        for name, ty in ghosts:
            base = base.extend(name, ty)

        self.eat("{")
        self.eat("(")
        p_name = self.eat("ident").text
        self.eat(",")
        s_name = self.eat("ident").text
        self.eat(")")
        self.eat("|")
        pre_env = base.extend(p_name, self.param_ty).extend(s_name, self.storage_ty)
        pre = self.formula(_FormulaCtx(pre_env, self.measures))
        self.eat("}")
        self.eat("->")
        self.eat("{")
        self.eat("(")
        ops_name = self.eat("ident").text
        self.eat(",")
        s2_name = self.eat("ident").text
        self.eat(")")
        self.eat("|")
        post_env = pre_env.extend(ops_name, TList(OPERATION)).extend(s2_name, self.storage_ty)
        post = self.formula(_FormulaCtx(post_env, self.measures))
        self.eat("}")
        self.eat("&")
        ctx = _FormulaCtx(pre_env, self.measures)
        exc_name, exc_sort, exc = self._exc_pattern(ctx)
        if self.at("("):
            self._ghosts()
        return ContractSpec(p_name, s_name, pre, ops_name, s2_name, post,
                            exc_name, exc_sort, exc, tuple(ghosts))


_DEFERRED = object()  # placeholder sort for lambda arg/result names


def _with_placement(ann: Annotation, placement: str) -> Annotation:
    return Annotation(ann.kind, ann.payload, placement)


def _walk_term(t: Term, visit):
    visit(t)
    match t:
        case TmTransfer(a, b, c):
            _walk_term(a, visit)
            _walk_term(b, visit)
            _walk_term(c, visit)
        case TmPair(a, b) | TmCons(a, b) | TmPlus(a, b):
            _walk_term(a, visit)
            _walk_term(b, visit)
        case TmMeasure(_, arg) | TmMangled(_, _, arg):
            _walk_term(arg, visit)
        case _:
            pass


def _check_measure_recursion(name: str, rhs: Term, tail_var: str, tok: _Tok):
    def visit(t: Term):
        match t:
            case TmMeasure(n, arg) if n == name and arg != TmVar(tail_var):
                raise ParseError(
                    f"measure {name!r} may recurse only on the tail variable",
                    tok.line, tok.col)
            case _:
                pass

    _walk_term(rhs, visit)


def _check_no_self_reference(name: str, rhs: Term, tok: _Tok):
    def visit(t: Term):
        match t:
            case TmMeasure(n, _) if n == name:
                raise ParseError(f"measure {name!r} may not recurse in the nil case",
                                 tok.line, tok.col)
            case _:
                pass

    _walk_term(rhs, visit)


def _check_sorted_term(gamma: TypeEnv, t: Term, expected: SimpleType, measures):
    from .logic import _check_sort

    _check_sort(gamma, t, expected, measures, ())


def _validate(contract: AnnotatedContract):
    """Mandatory-annotation and payload-shape checks after parsing."""
    annots = {}
    for path, ann in contract.annotations:
        annots.setdefault((path, ann.kind), []).append(ann)

    def visit(seq, path):
        for i, instr in enumerate(seq):
            ipath = path + (i,)
            if isinstance(instr, (Loop, Iter)):
                invs = annots.get(((ipath), "loopinv"), [])
                if len(invs) != 1:
                    raise ParseError(
                        "a LoopInv annotation is mandatory for a loop instruction"
                        if not invs else "duplicate LoopInv annotation",
                        *_span_start(contract, ipath))
            if isinstance(instr, Lambda):
                specs = annots.get(((ipath), "lambdannot"), [])
                if len(specs) != 1:
                    raise ParseError(
                        "a LAMBDA must be accompanied by a LambdaAnnot annotation"
                        if not specs else "duplicate LambdaAnnot annotation",
                        *_span_start(contract, ipath))
            match instr:
                case Block(b) | Dip(b) | Loop(b) | Iter(b) | Lambda(_, _, b):
                    visit(b, ipath + ("b",))
                case If(b1, b2) | IfCons(b1, b2):
                    visit(b1, ipath + ("t",))
                    visit(b2, ipath + ("e",))
                case _:
                    pass

    visit(contract.code, ())
    for path, ann in contract.annotations:
        if ann.kind in ("loopinv", "lambdannot") and ann.placement != "pre":
            raise ParseError(f"{ann.kind} must precede its instruction",
                             *_span_start(contract, path))


def _span_start(contract, path):
    span = contract.spans.get(path) or contract.spans.get(()) or (0, 0, 0, 0)
    return span[0], span[1]


# ---------------------------------------------------------------------------
# Pretty printing
# ---------------------------------------------------------------------------


def pretty_type(t: SimpleType, atom: bool = False) -> str:
    match t:
        case TInt():
            return "int"
        case TNat():
            return "nat"
        case TBytes():
            return "bytes"
        case TAddress():
            return "address"
        case TOperation():
            return "operation"
        case TPair(a, b):
            s = f"pair {pretty_type(a, True)} {pretty_type(b, True)}"
        case TList(e):
            s = f"list {pretty_type(e, True)}"
        case TArrow(a, b):
            s = f"lambda {pretty_type(a, True)} {pretty_type(b, True)}"
        case _:
            raise TypeError(f"not a type: {t!r}")
    return f"({s})" if atom else s


def pretty_value(v: Value) -> str:
    match v:
        case VInt(n):
            return str(n)
        case VAddress(tok):
            return f'"{tok}"'
        case VBytes(data):
            return "0x" + data.hex().upper()
        case VNil():
            return "[]"
        case VCons(_, _):
            from .syntax import iter_list_value

            return "[" + "; ".join(pretty_value(x) for x in iter_list_value(v)) + "]"
        case VPair(a, b):
            return f"({pretty_value(a)}, {pretty_value(b)})"
        case VTransfer(arg, amount, dest):
            return f'Transfer {_pretty_value_atom(arg)} {amount} "{dest}"'
        case VCode(body):
            return pretty_instr_seq(body)
    raise TypeError(f"not a value: {v!r}")


def _pretty_value_atom(v: Value) -> str:
    s = pretty_value(v)
    return f"({s})" if isinstance(v, VTransfer) else s


def pretty_term(t: Term, prec: int = 0) -> str:
    # precedence: 0 cons, 1 plus, 2 application, 3 atom
    match t:
        case TmVar(name):
            return name
        case TmLit(v):
            return pretty_value(v)
        case TmCons(h, tl):
            s = f"{pretty_term(h, 1)} :: {pretty_term(tl, 0)}"
            return f"({s})" if prec > 0 else s
        case TmPlus(a, b):
            s = f"{pretty_term(a, 1)} + {pretty_term(b, 2)}"
            return f"({s})" if prec > 1 else s
        case TmPair(a, b):
            return f"({pretty_term(a, 0)}, {pretty_term(b, 0)})"
        case TmTransfer(a, b, c):
            s = f"Transfer {pretty_term(a, 3)} {pretty_term(b, 3)} {pretty_term(c, 3)}"
            return f"({s})" if prec > 2 else s
        case TmMeasure(name, arg):
            s = f"{name} {pretty_term(arg, 3)}"
            return f"({s})" if prec > 2 else s
        case TmMangled(name, _, arg):
            s = f"{name} {pretty_term(arg, 3)}"
            return f"({s})" if prec > 2 else s
    raise TypeError(f"not a term: {t!r}")


def pretty_formula(phi: Formula, prec: int = 0) -> str:
    # precedence: 0 or, 1 and, 2 not, 3 atom
    pair = is_and(phi)
    if pair is not None:
        s = f"{pretty_formula(pair[0], 2)} && {pretty_formula(pair[1], 1)}"
        return f"({s})" if prec > 1 else s
    match phi:
        case FTrue():
            return "True"
        case FNot(FTrue()):
            return "False"
        case FNot(FEq(a, b)):
            return f"{pretty_term(a)} <> {pretty_term(b)}"
        case FNot(body):
            return f"not {pretty_formula(body, 3)}"
        case FOr(a, b):
            s = f"{pretty_formula(a, 1)} || {pretty_formula(b, 0)}"
            return f"({s})" if prec > 0 else s
        case FEq(a, b):
            return f"{pretty_term(a)} = {pretty_term(b)}"
        case FCall(f, a, r):
            return f"call({pretty_term(f)}, {pretty_term(a)}) = {pretty_term(r)}"
        case FCallErr(f, a, r):
            return f"call_err({pretty_term(f)}, {pretty_term(a)}) = {pretty_term(r)}"
        case FExists(x, sort, body):
            s = f"exists {x} : {pretty_type(sort)} . {pretty_formula(body, 0)}"
            return f"({s})" if prec > 0 else s
    raise TypeError(f"not a formula: {phi!r}")


def pretty_instr_seq(seq: InstrSeq) -> str:
    return "{ " + " ; ".join(pretty_instr(i) for i in seq) + " }" if seq else "{ }"


def pretty_instr(instr: Instr) -> str:
    match instr:
        case Block(b):
            return pretty_instr_seq(b)
        case Dip(b):
            return f"DIP {pretty_instr_seq(b)}"
        case Drop():
            return "DROP"
        case Dup():
            return "DUP"
        case Swap():
            return "SWAP"
        case Push(ty, v):
            return f"PUSH {pretty_type(ty, True)} {pretty_value(v)}"
        case Not():
            return "NOT"
        case Add():
            return "ADD"
        case If(t, e):
            return f"IF {pretty_instr_seq(t)} {pretty_instr_seq(e)}"
        case Loop(b):
            return f"LOOP {pretty_instr_seq(b)}"
        case Pair():
            return "PAIR"
        case Car():
            return "CAR"
        case Cdr():
            return "CDR"
        case Nil(e):
            return f"NIL {pretty_type(e, True)}"
        case Cons():
            return "CONS"
        case IfCons(t, e):
            return f"IF_CONS {pretty_instr_seq(t)} {pretty_instr_seq(e)}"
        case Iter(b):
            return f"ITER {pretty_instr_seq(b)}"
        case Lambda(a, r, b):
            return f"LAMBDA {pretty_type(a, True)} {pretty_type(r, True)} {pretty_instr_seq(b)}"
        case Exec():
            return "EXEC"
        case TransferTokens(t):
            return f"TRANSFER_TOKENS {pretty_type(t, True)}"
        case Failwith():
            return "FAILWITH"
        case Pack():
            return "PACK"
        case Sha256():
            return "SHA256"
    raise TypeError(f"not an instruction: {instr!r}")


def pretty_stack_pattern(pat: StackTypePattern) -> str:
    parts = [f"{n} : {pretty_type(t)}" for n, t in pat.binders]
    if pat.rest:
        parts.append("_")
    if not parts:
        parts = ["_"]
    return "{ " + " :. ".join(parts) + f" | {pretty_formula(pat.pred)} }}"


def _pretty_exc(name, sort, pred) -> str:
    if name == "_":
        return f"{{ _ | {pretty_formula(pred)} }}"
    shown = name if sort is None else f"{name} : {pretty_type(sort)}"
    return f"{{ {shown} | {pretty_formula(pred)} }}"


def _pretty_ghosts(ghosts) -> str:
    if not ghosts:
        return ""
    inner = ", ".join(f"{n} : {pretty_type(t)}" for n, t in ghosts)
    return f" ({inner})"


def pretty_annotation(ann: Annotation) -> str:
    if ann.kind in ("assert", "assume", "loopinv"):
        word = {"assert": "Assert", "assume": "Assume", "loopinv": "LoopInv"}[ann.kind]
        return f"<< {word} {pretty_stack_pattern(ann.payload)} >>"
    spec: LambdaSpec = ann.payload
    return (f"<< LambdaAnnot {{ {spec.arg_name} | {pretty_formula(spec.pre)} }} -> "
            f"{{ {spec.res_name} | {pretty_formula(spec.post)} }} & "
            f"{_pretty_exc(spec.exc_name, spec.exc_sort, spec.exc)}"
            f"{_pretty_ghosts(spec.ghosts)} >>")


def pretty_print(contract: AnnotatedContract) -> str:
    """Canonical concrete syntax; parse(pretty_print(c)) == c structurally."""
    spec = contract.spec
    lines = [
        f"parameter {pretty_type(contract.parameter_ty)} ;",
        f"storage {pretty_type(contract.storage_ty)} ;",
    ]
    for m in contract.measures:
        lines.append(
            f"<< Measure {m.name} : {pretty_type(m.arg_sort)} -> {pretty_type(m.res_sort)}"
            f" where [] = {pretty_term(m.nil_rhs)} | h :: t = {pretty_term(m.cons_rhs)} >>")
    lines.append(
        f"<< ContractAnnot {{ ({spec.param_name}, {spec.storage_name}) |"
        f" {pretty_formula(spec.pre)} }} ->"
        f" {{ ({spec.ops_name}, {spec.storage2_name}) | {pretty_formula(spec.post)} }} &"
        f" {_pretty_exc(spec.exc_name, spec.exc_sort, spec.exc)}"
        f"{_pretty_ghosts(spec.ghosts)} >>")
    lines.append("code " + _print_block(contract, contract.code, ()) + " ;")
    return "\n".join(lines) + "\n"


def _print_block(contract, seq, path, indent: int = 1) -> str:
    if not seq:
        return "{ }"
    pad = "  " * indent
    pieces = []
    for i, instr in enumerate(seq):
        ipath = path + (i,)
        for ann in contract.annots_at(ipath, "pre"):
            pieces.append(pad + pretty_annotation(ann))
        text = _print_instr(contract, instr, ipath, indent)
        sep = " ;" if i + 1 < len(seq) else ""
        posts = contract.annots_at(ipath, "post")
        if posts and sep:
            pieces.append(pad + text)
            pieces.extend(pad + pretty_annotation(a) for a in posts[:-1])
            pieces.append(pad + pretty_annotation(posts[-1]) + " ;")
        elif posts:
            pieces.append(pad + text)
            pieces.extend(pad + pretty_annotation(a) for a in posts)
        else:
            pieces.append(pad + text + sep)
    open_pad = "  " * (indent - 1)
    return "{\n" + "\n".join(pieces) + f"\n{open_pad}}}"


def _print_instr(contract, instr, path, indent) -> str:
    match instr:
        case Block(b):
            return _print_block(contract, b, path + ("b",), indent + 1)
        case Dip(b):
            return "DIP " + _print_block(contract, b, path + ("b",), indent + 1)
        case If(t, e):
            return ("IF " + _print_block(contract, t, path + ("t",), indent + 1)
                    + " " + _print_block(contract, e, path + ("e",), indent + 1))
        case IfCons(t, e):
            return ("IF_CONS " + _print_block(contract, t, path + ("t",), indent + 1)
                    + " " + _print_block(contract, e, path + ("e",), indent + 1))
        case Loop(b):
            return "LOOP " + _print_block(contract, b, path + ("b",), indent + 1)
        case Iter(b):
            return "ITER " + _print_block(contract, b, path + ("b",), indent + 1)
        case Lambda(a, r, b):
            return (f"LAMBDA {pretty_type(a, True)} {pretty_type(r, True)} "
                    + _print_block(contract, b, path + ("b",), indent + 1))
        case _:
            return pretty_instr(instr)
