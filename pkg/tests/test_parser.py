import random
from pathlib import Path

import pytest

from mmv.logic import (
    FEq, TRUE, TmLit, TmMeasure, TmPlus, TmVar, TypeEnv,
)
from mmv.parser import (
    AnnotatedContract, Annotation, ContractSpec, LambdaSpec, ParseError,
    StackTypePattern, parse_contract, parse_formula, parse_value,
    pretty_print, pretty_value,
)
from mmv.simple import generate_welltyped
from mmv.syntax import (
    ADDRESS, INT, NAT,
    Block, Dip, If, IfCons, Iter, Lambda, Loop, Push, TList, TPair,
    VCode, VCons, VInt, VNil, VPair,
)

CORPUS = Path(__file__).resolve().parents[1] / "src" / "mmv" / "corpus"

IDENTITY = """
parameter int ;
storage int ;
<< ContractAnnot { (p, s) | True } ->
                 { (ops, s2) | ops = [] && s2 = s } &
                 { e : int | False } >>
code { CDR ; NIL operation ; PAIR } ;
"""


def test_parse_identity_shape():
    c = parse_contract(IDENTITY)
    assert c.parameter_ty == INT
    assert len(c.code) == 3
    assert c.spec.param_name == "p"
    assert c.spec.post == _post_formula()


def _post_formula():
    from mmv.logic import f_and
    from mmv.syntax import NIL

    return f_and(FEq(TmVar("ops"), TmLit(NIL)), FEq(TmVar("s2"), TmVar("s")))


def test_missing_loopinv_is_an_error():
    src = IDENTITY.replace("{ CDR ; NIL operation ; PAIR }",
                           "{ CDR ; PUSH int 1 ; LOOP { PUSH int 0 } ; "
                           "NIL operation ; PAIR }")
    with pytest.raises(ParseError) as exc:
        parse_contract(src)
    assert "LoopInv" in str(exc.value)


def test_missing_lambdannot_is_an_error():
    src = IDENTITY.replace(
        "{ CDR ; NIL operation ; PAIR }",
        "{ CDR ; LAMBDA int int { } ; DROP ; NIL operation ; PAIR }")
    with pytest.raises(ParseError) as exc:
        parse_contract(src)
    assert "LambdaAnnot" in str(exc.value)


def test_duplicate_loopinv_is_an_error():
    src = IDENTITY.replace(
        "{ CDR ; NIL operation ; PAIR }",
        "{ CDR ; PUSH int 1 ; "
        "<< LoopInv { x : int :. _ | True } >> "
        "<< LoopInv { x : int :. _ | True } >> "
        "LOOP { PUSH int 0 } ; NIL operation ; PAIR }")
    with pytest.raises(ParseError) as exc:
        parse_contract(src)
    assert "duplicate" in str(exc.value).lower()


def test_empty_input_is_a_syntax_error():
    with pytest.raises(ParseError):
        parse_contract("")


def test_error_position_is_reported():
    with pytest.raises(ParseError) as exc:
        parse_contract("parameter int ;\nstorage int\ncode { } ;")
    assert exc.value.line == 3  # the missing semicolon is noticed at `code`


def test_comments_are_skipped():
    src = "# leading\n/* block\ncomment */" + IDENTITY
    assert parse_contract(src) == parse_contract(IDENTITY)


def test_push_payload_type_checked_at_parse():
    src = IDENTITY.replace("NIL operation ;", "PUSH (list int) 5 ; DROP ; NIL operation ;")
    with pytest.raises(ParseError) as exc:
        parse_contract(src)
    assert "PUSH payload" in str(exc.value)


def test_triangular_has_exactly_one_loopinv():
    c = parse_contract((CORPUS / "triangular_num.tz").read_text())
    invs = [a for _, a in c.annotations if a.kind == "loopinv"]
    assert len(invs) == 1


def test_user_quantifier_rejected():
    gamma = TypeEnv().extend("x", INT)
    with pytest.raises(ParseError) as exc:
        parse_formula("exists z : int . z = x", gamma)
    assert "quantifier" in str(exc.value)


def test_parse_formula_examples():
    gamma = TypeEnv().extend("x", INT).extend("y", INT)
    phi = parse_formula("x = y + 1", gamma)
    assert phi == FEq(TmVar("x"), TmPlus(TmVar("y"), TmLit(VInt(1))))

    from mmv.logic import MeasureDef

    measure = MeasureDef("len", TList(INT), INT, TmLit(VInt(0)),
                         TmPlus(TmLit(VInt(1)), TmMeasure("len", TmVar("t"))))
    gl = TypeEnv().extend("l", TList(INT))
    phi2 = parse_formula("len l = 0", gl, (measure,))
    assert phi2 == FEq(TmMeasure("len", TmVar("l")), TmLit(VInt(0)))


def test_parse_formula_sort_error():
    gamma = TypeEnv().extend("x", INT)
    from mmv.logic import SortError

    with pytest.raises(SortError):
        parse_formula("x = []", gamma)


def test_parse_value_forms():
    assert parse_value("(10, 0)") == VPair(VInt(10), VInt(0))
    assert parse_value("[1; 2]") == VCons(VInt(1), VCons(VInt(2), VNil()))
    assert parse_value("{ NOT }") == VCode((__import__("mmv.syntax", fromlist=["Not"]).Not(),))
    assert parse_value('"alice"').token == "alice"
    assert parse_value("0xDEAD").data == bytes.fromhex("dead")


def test_assert_after_binds_to_preceding():
    src = IDENTITY.replace(
        "{ CDR ; NIL operation ; PAIR }",
        "{ CDR << Assert { x : int :. _ | x = s } >> ; NIL operation ; PAIR }")
    c = parse_contract(src)
    [(path, ann)] = c.annotations
    assert path == (0,)
    assert ann.placement == "post"
    assert ann.kind == "assert"


def test_corpus_round_trips():
    for f in sorted(CORPUS.glob("*.tz")):
        c = parse_contract(f.read_text())
        printed = pretty_print(c)
        assert parse_contract(printed) == c, f.name


def test_spans_monotone_and_in_bounds():
    for f in sorted(CORPUS.glob("*.tz")):
        text = f.read_text()
        c = parse_contract(text)
        nlines = text.count("\n") + 1
        for path, (l1, c1, l2, c2) in c.spans.items():
            assert 1 <= l1 <= l2 <= nlines, (f.name, path)
            if l1 == l2:
                assert c1 <= c2


# ---------------------------------------------------------------------------
# Random-AST round trips
# ---------------------------------------------------------------------------

_TOP_PAT = StackTypePattern((), True, TRUE)
_LAMBDA_SPEC = LambdaSpec("y", TRUE, "r", TRUE, "_", None, TRUE, ())


def _document_order_annots(seq, path, out, rng):
    """Collect annotations in the order pretty_print emits them: an
    instruction's pre annotations, then its sub-blocks, then its posts."""
    for i, instr in enumerate(seq):
        ipath = path + (i,)
        if rng.random() < 0.15:
            out.append((ipath, Annotation("assert", _TOP_PAT, "pre")))
        if isinstance(instr, (Loop, Iter)):
            out.append((ipath, Annotation("loopinv", _TOP_PAT, "pre")))
        if isinstance(instr, Lambda):
            out.append((ipath, Annotation("lambdannot", _LAMBDA_SPEC, "pre")))
        match instr:
            case Block(b) | Dip(b) | Loop(b) | Iter(b) | Lambda(_, _, b):
                _document_order_annots(b, ipath + ("b",), out, rng)
            case If(b1, b2) | IfCons(b1, b2):
                _document_order_annots(b1, ipath + ("t",), out, rng)
                _document_order_annots(b2, ipath + ("e",), out, rng)
            case _:
                pass
        if rng.random() < 0.1:
            out.append((ipath, Annotation("assume", _TOP_PAT, "post")))


def _random_contract(seed: int) -> AnnotatedContract:
    rng = random.Random(seed)
    code = generate_welltyped((TPair(INT, INT),), rng.randint(1, 8), seed)
    if not code:
        code = (Push(INT, VInt(1)),)
    annotations = []
    _document_order_annots(code, (), annotations, rng)
    spec = ContractSpec("p", "s", TRUE, "ops", "s2", TRUE, "e", INT, TRUE, ())
    return AnnotatedContract(
        parameter_ty=rng.choice([INT, NAT, ADDRESS, TList(INT)]),
        storage_ty=INT,
        spec=spec,
        code=code,
        annotations=tuple(annotations),
        measures=(),
    )


def test_random_ast_round_trips():
    for seed in range(500):
        c = _random_contract(seed)
        printed = pretty_print(c)
        reparsed = parse_contract(printed)
        assert reparsed == c, f"seed {seed}:\n{printed}"
