"""Parameter store: declaration, strict typing, change notification, and
all-or-nothing override application."""

import json

import pytest
from hypothesis import given, settings, strategies as st

from pitwall.params import (
    InvalidNameError,
    OverrideParseError,
    ParamStore,
    ParamTypeMismatchError,
    ParameterDescriptor,
    ParameterValue,
    ReadOnlyError,
    RedeclarationError,
    UndeclaredError,
    UnknownParameterError,
    ValueTag,
)


def declare(store, name, default, read_only=False):
    store.declare(ParameterDescriptor(name, ParameterValue.of(default), read_only))


class TestDeclareGetSet:
    def test_default_visible_after_declare(self):
        store = ParamStore()
        declare(store, "sm.cycle_ms", 20)
        assert store.get_value("sm.cycle_ms") == 20
        assert store.get("sm.cycle_ms").tag is ValueTag.INT

    def test_redeclaration_rejected(self):
        store = ParamStore()
        declare(store, "a.b", 1)
        with pytest.raises(RedeclarationError):
            declare(store, "a.b", 2)

    @pytest.mark.parametrize("name", ["", ".", "a..b", ".a", "a."])
    def test_invalid_names(self, name):
        store = ParamStore()
        with pytest.raises(InvalidNameError):
            declare(store, name, 1)

    def test_set_then_get(self):
        store = ParamStore()
        declare(store, "x", 1.5)
        store.set("x", 2.5)
        assert store.get_value("x") == 2.5

    def test_set_wrong_type(self):
        store = ParamStore()
        declare(store, "x", 1)
        with pytest.raises(ParamTypeMismatchError):
            store.set("x", 1.0)

    def test_set_read_only(self):
        store = ParamStore()
        declare(store, "x", 1, read_only=True)
        with pytest.raises(ReadOnlyError):
            store.set("x", 2)

    def test_undeclared(self):
        store = ParamStore()
        with pytest.raises(UndeclaredError):
            store.get("missing")
        with pytest.raises(UndeclaredError):
            store.set("missing", 1)

    def test_nonfinite_float_rejected(self):
        with pytest.raises(Exception):
            ParameterValue.of(float("inf"))

    def test_bool_is_not_int(self):
        store = ParamStore()
        declare(store, "flag", True)
        with pytest.raises(ParamTypeMismatchError):
            store.set("flag", 1)

    def test_array_values(self):
        store = ParamStore()
        declare(store, "gains", [1.0, 2.0])
        store.set("gains", [3.0])
        assert store.get_value("gains") == [3.0]


class TestOnChange:
    def test_set_invokes_once(self):
        store = ParamStore()
        declare(store, "x", 1)
        calls = []
        store.on_change("x", lambda old, new: calls.append((old.value, new.value)))
        store.set("x", 2)
        assert calls == [(1, 2)]

    def test_failed_set_no_invocation(self):
        store = ParamStore()
        declare(store, "x", 1)
        calls = []
        store.on_change("x", lambda old, new: calls.append(new))
        with pytest.raises(ParamTypeMismatchError):
            store.set("x", "oops")
        assert calls == []

    def test_override_of_three_with_one_watched(self):
        store = ParamStore()
        declare(store, "a", 1)
        declare(store, "b", 2)
        declare(store, "c", 3)
        calls = []
        store.on_change("b", lambda old, new: calls.append(new.value))
        applied = store.apply_overrides('{"a": 10, "b": 20, "c": 30}')
        assert applied == 3
        assert calls == [20]

    def test_unsubscribe(self):
        store = ParamStore()
        declare(store, "x", 1)
        calls = []
        off = store.on_change("x", lambda old, new: calls.append(new))
        off()
        store.set("x", 2)
        assert calls == []


class TestOverrides:
    def _store(self):
        store = ParamStore()
        declare(store, "gate.brake_pressure_bar", 30.0)
        declare(store, "sm.cycle_ms", 20)
        declare(store, "mode", "race")
        return store

    def test_matching_file_applies(self):
        store = self._store()
        assert store.apply_overrides('{"gate.brake_pressure_bar": 40.0}') == 1
        assert store.get_value("gate.brake_pressure_bar") == 40.0

    def test_unknown_name_rejects_all(self):
        store = self._store()
        with pytest.raises(UnknownParameterError) as err:
            store.apply_overrides('{"typo.name": 1, "sm.cycle_ms": 50}')
        assert err.value.names == ["typo.name"]
        assert store.get_value("sm.cycle_ms") == 20

    def test_type_mismatch_rejects_all(self):
        store = self._store()
        with pytest.raises(ParamTypeMismatchError):
            store.apply_overrides('{"sm.cycle_ms": 50, "gate.brake_pressure_bar": 40}')
        assert store.get_value("sm.cycle_ms") == 20
        assert store.get_value("gate.brake_pressure_bar") == 30.0

    def test_int_literal_does_not_match_float(self):
        store = self._store()
        with pytest.raises(ParamTypeMismatchError):
            store.apply_overrides('{"gate.brake_pressure_bar": 40}')

    def test_empty_document(self):
        store = self._store()
        assert store.apply_overrides("") == 0
        assert store.apply_overrides("{}") == 0

    def test_parse_error(self):
        store = self._store()
        with pytest.raises(OverrideParseError):
            store.apply_overrides("{not json")

    def test_non_object_document(self):
        store = self._store()
        with pytest.raises(OverrideParseError):
            store.apply_overrides("[1, 2]")


# property: a failing override never changes any value, a passing one
# changes exactly the named ones
@settings(deadline=None)
@given(
    updates=st.dictionaries(
        st.sampled_from(["a", "b", "c"]),
        st.one_of(st.integers(), st.floats(allow_nan=False, allow_infinity=False), st.text()),
        max_size=3,
    ),
    include_unknown=st.booleans(),
)
def test_override_atomicity_property(updates, include_unknown):
    store = ParamStore()
    declare(store, "a", 0)
    declare(store, "b", 0.0)
    declare(store, "c", "s")
    before = store.snapshot()
    document = dict(updates)
    if include_unknown:
        document["zz.unknown"] = 1
    try:
        applied = store.apply_overrides(json.dumps(document))
    except (UnknownParameterError, ParamTypeMismatchError, OverrideParseError):
        assert store.snapshot() == before
    else:
        assert applied == len(document)
        for name, raw in document.items():
            assert store.get_value(name) == raw


def test_type_stability_over_lifetime():
    store = ParamStore()
    declare(store, "x", 1)
    tag_before = store.get("x").tag
    store.set("x", 5)
    store.apply_overrides('{"x": 9}')
    assert store.get("x").tag is tag_before


def test_scoped_view():
    store = ParamStore()
    view = store.scoped("controller")
    view.declare("speed_gain", 2.0)
    assert store.get_value("controller.speed_gain") == 2.0
    view.set("speed_gain", 3.0)
    assert view.get("speed_gain") == 3.0
