from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rade.errors import EmptyTargetSet, InvariantViolation
from rade.recipes import TargetFilter
from rade.targets import (
    MatrixConfig,
    Target,
    TargetPattern,
    expand,
    parse_target_id,
    target_id,
)


class _Recipe:
    """Minimal stand-in: expand only looks at name/version/target_filter."""

    name = "demo"
    version = "1.0"

    def __init__(self, target_filter=None):
        self.target_filter = target_filter


def make_matrix(arches=("x86_64", "aarch64"), oses=("linux6", "linux7"), sites=("sitea", "siteb")):
    return MatrixConfig(arches=tuple(arches), oses=tuple(oses), sites=tuple(sites))


def test_target_id_format():
    assert target_id(Target("x86_64", "centos7", "siteA")) == "x86_64-centos7-siteA"
    assert target_id(Target("arm64", "ubuntu22", "siteB")) == "arm64-ubuntu22-siteB"


def test_bad_field_rejected():
    with pytest.raises(InvariantViolation):
        Target("x86-64", "linux", "sitea")  # dash inside a field is ambiguous


identifier = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyz0123456789_", min_size=1, max_size=8
)


@given(identifier, identifier, identifier)
def test_target_id_round_trip(arch, os_, site):
    t = Target(arch, os_, site)
    assert parse_target_id(target_id(t)) == t


def test_expand_full_product():
    targets = expand(make_matrix(), _Recipe())
    assert len(targets) == 8
    assert len(set(targets)) == 8
    assert targets == sorted(targets)


def test_expand_exclude_site():
    tf = TargetFilter(exclude=(TargetPattern.parse("*-*-siteb"),))
    targets = expand(make_matrix(), _Recipe(tf))
    assert len(targets) == 4
    assert all(t.site != "siteb" for t in targets)


def test_expand_include_missing_arch_is_empty():
    tf = TargetFilter(include=(TargetPattern.parse("arm64-*-*"),))
    with pytest.raises(EmptyTargetSet):
        expand(make_matrix(), _Recipe(tf))


def test_expand_include_then_exclude():
    tf = TargetFilter(
        include=(TargetPattern.parse("x86_64-*-*"),),
        exclude=(TargetPattern.parse("*-linux7-*"),),
    )
    targets = expand(make_matrix(), _Recipe(tf))
    assert {(t.arch, t.os) for t in targets} == {("x86_64", "linux6")}


def test_expand_no_filter_means_identity_filter():
    assert expand(make_matrix(), _Recipe()) == expand(make_matrix(), _Recipe(TargetFilter()))


@given(
    st.integers(1, 5),
    st.integers(1, 5),
    st.integers(1, 5),
)
def test_expand_cardinality_is_axis_product(na, no, ns):
    matrix = MatrixConfig(
        arches=tuple(f"arch{i}" for i in range(na)),
        oses=tuple(f"os{i}" for i in range(no)),
        sites=tuple(f"site{i}" for i in range(ns)),
    )
    assert len(expand(matrix, _Recipe())) == na * no * ns


def test_matrix_rejects_duplicates_and_empties():
    with pytest.raises(InvariantViolation):
        MatrixConfig(arches=("a", "a"), oses=("o",), sites=("s",))
    with pytest.raises(InvariantViolation):
        MatrixConfig(arches=(), oses=("o",), sites=("s",))


def test_site_env_bindings():
    matrix = MatrixConfig(
        arches=("a",),
        oses=("o",),
        sites=("s1", "s2"),
        site_env={"s1": ("GPU=1", "NET=fast")},
    )
    assert matrix.extra_env("s1") == {"GPU": "1", "NET": "fast"}
    assert matrix.extra_env("s2") == {}


def test_site_env_unknown_site_rejected():
    with pytest.raises(InvariantViolation):
        MatrixConfig(arches=("a",), oses=("o",), sites=("s",), site_env={"x": ("A=1",)})


def test_pattern_wildcards_are_per_field():
    with pytest.raises(InvariantViolation):
        TargetPattern.parse("x86*-linux-sitea")


def test_filter_result_independent_of_pattern_order():
    include = [TargetPattern.parse(p) for p in ("x86_64-*-*", "*-linux6-*")]
    exclude = [TargetPattern.parse(p) for p in ("*-*-siteb", "aarch64-*-*")]
    forward = expand(make_matrix(), _Recipe(TargetFilter(tuple(include), tuple(exclude))))
    reversed_ = expand(
        make_matrix(),
        _Recipe(TargetFilter(tuple(reversed(include)), tuple(reversed(exclude)))),
    )
    assert forward == reversed_
