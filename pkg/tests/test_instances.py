import json

import numpy as np
import pytest

from holder_bounds.errors import InstanceParseError
from holder_bounds.functions import Staircase1D
from holder_bounds.instances import (BUILTIN_NAMES, FORMAT, FunctionInstance, SIPInstance, builtin_instance,
                                     builtin_path, load_instance, parse_instance)
from holder_bounds.sip import is_optimal


def doc(**extra):
    base = {"format": FORMAT, "name": "t", "kind": "function", "center": [0.0],
            "function": {"form": "max", "pieces": [{"type": "affine", "a": [1.0]},
                                                   {"type": "affine", "a": [-1.0]}]}}
    base.update(extra)
    return base


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_bundled_instances_load_and_center_is_in_sublevel_set(name):
    inst = builtin_instance(name)
    assert inst.name == name and len(inst.digest) == 16
    if isinstance(inst, FunctionInstance):
        assert inst.function(inst.center) <= 0.0
    else:
        assert isinstance(inst, SIPInstance)
        assert is_optimal(inst.program, inst.center)


def test_staircase_form():
    assert isinstance(builtin_instance("example-3.20").function, Staircase1D)


def test_round_trip_through_file(tmp_path):
    path = tmp_path / "abs.json"
    path.write_text(json.dumps(doc()))
    inst = load_instance(path)
    assert inst.function(np.array([-2.0])) == 2.0
    assert load_instance("example-abs").digest == builtin_instance("example-abs").digest


@pytest.mark.parametrize("mutate, where", [
    (lambda d: d.update(format="other/9"), "$.format"),
    (lambda d: d.pop("center"), "$.center: missing"),
    (lambda d: d["function"]["pieces"][0].update(type="nope"), "$.function.pieces[0].type"),
    (lambda d: d["function"].update(form="wave"), "$.function.form"),
    (lambda d: d.update(center=[0.0, 1.0]), "$.center: dimension"),
    (lambda d: d["function"]["pieces"][1].update(a="x"), "$.function.pieces[1].a"),
    (lambda d: d.update(kind="graph"), "$.kind"),
])
def test_parse_errors_name_the_location(mutate, where):
    d = doc()
    mutate(d)
    with pytest.raises(InstanceParseError, match=where.replace("[", r"\[").replace("]", r"\]").replace("$", r"\$")):
        parse_instance(d)


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(InstanceParseError, match="cannot read"):
        load_instance(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{\"format\": ")
    with pytest.raises(InstanceParseError, match="line 1"):
        load_instance(bad)
    with pytest.raises(InstanceParseError):
        builtin_path("example-none")


def test_non_left_continuous_breakpoint_is_flagged():
    d = doc(function={"form": "piecewise1d", "breakpoints": [0.0],
                      "pieces": [{"type": "constant", "value": 0.0}, {"type": "affine", "a": [1.0]}],
                      "assigned": [-1.0]})
    assert parse_instance(d).notes


def test_sip_instance_validation():
    d = {"format": FORMAT, "name": "s", "kind": "sip", "center": [0.0],
         "objective": {"form": "smooth", "piece": {"type": "affine", "a": [1.0]}},
         "c": [0.0], "constraints": [{"type": "affine", "a": [-1.0]}], "b": [0.0, 1.0]}
    with pytest.raises(InstanceParseError, match="right-hand side"):
        parse_instance(d)
