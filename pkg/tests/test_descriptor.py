import json

from hypothesis import given, settings, strategies as st

from ctrees.core_tree import INF
from ctrees.descriptor import (
    CLAUSE_ADJ, CLAUSE_COLOR, CLAUSE_V, BranchVariantDescriptor, CompositeDescriptor, all_normal_forms,
    composite, confluence_sweep, depth, descriptor_equal, enumerate_descriptors, first_level,
    format_descriptor, is_normal, normalize, parse_descriptor, point, t0, t1a, t1b, tail, validate,
)

SWEEP = enumerate_descriptors(3)


def test_validate_examples():
    assert validate(t0(3)).ok
    assert CLAUSE_COLOR in validate(t1a(1)).clauses()
    assert CLAUSE_ADJ in validate(composite(t1a(2), t1a(2))).clauses()
    assert validate(point()).ok
    assert not validate(composite(t0(2), point())).ok
    assert not validate(t0(1)).ok
    assert not validate(t1b(0, 2)).ok
    assert validate(t1b(INF, INF)).ok


def test_branch_variant_needs_leafless_branch():
    assert validate(BranchVariantDescriptor(composite(t1a(2), t0(2)))).ok
    assert validate(BranchVariantDescriptor(composite(t1b(1, 1)))).ok
    assert CLAUSE_V in validate(BranchVariantDescriptor(composite(t0(2)))).clauses()


def test_infinite_parameters_validate_like_large_finite():
    for k in ("T0", "T1a", "T1b"):
        for a in (0, 1, 2):
            big = validate(parse_descriptor(f"{k}:{a}:1000") if k != "T0" else parse_descriptor(f"T0:1000:{a}"))
            inf = validate(parse_descriptor(f"{k}:{a}:inf") if k != "T0" else parse_descriptor(f"T0:inf:{a}"))
            assert big.ok == inf.ok


def test_normalize_examples():
    assert normalize(composite(t1b(1, 1), t1a(2))) == composite(t1a(2))
    assert normalize(t0(3)) == composite(t0(3))
    assert normalize(composite(t1a(2), t0(2), t1a(2))) == composite(t1a(2))
    assert normalize(composite(t1b(INF, 1), t1a(INF), t0(2))) == composite(t1a(INF), t0(2))
    # no merge when the sum does not match
    assert normalize(composite(t1b(1, 1), t1a(3))) == composite(t1b(1, 1), t1a(3))


def test_accessors():
    d = composite(t1a(2), t0(2))
    assert depth(d) == 2 and first_level(d) == t1a(2) and tail(d) == composite(t0(2))
    assert depth(t0(3)) == 1 and tail(t0(3)) is None
    assert depth(composite(t1b(1, 1), t1a(2))) == 1


def test_descriptor_equal():
    assert descriptor_equal(composite(t1b(1, 1), t1a(2)), t1a(2))
    assert not descriptor_equal(t0(2), t0(3))


def test_normalize_idempotent_and_valid_on_sweep():
    for d in SWEEP:
        n = normalize(d)
        assert normalize(n) == n
        assert validate(n).ok
        assert is_normal(n)


def test_confluence_sweep_depth_four():
    assert confluence_sweep(4) == []


def test_json_and_text_round_trip():
    for d in SWEEP[:2000:7]:
        assert CompositeDescriptor.from_json(json.loads(json.dumps(d.to_json()))) == d
        assert parse_descriptor(format_descriptor(d)) == d
    d = parse_descriptor("T1b:1:inf/T1a:inf/T0:2+V")
    assert d.branch_variant and d.levels[0] == t1b(1, INF)
    assert d.to_json()["levels"][0]["mu"] == "inf"


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(SWEEP))
def test_unique_normal_form(d):
    assert all_normal_forms(d) == {normalize(d).levels}
