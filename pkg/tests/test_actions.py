import json

import pytest

from layerstage.actions import (
    Fall,
    Insert,
    Keep,
    Move,
    Remove,
    Resize,
    Retouch,
    action_to_dsl,
    parse_script,
    serialize_actions,
)
from layerstage.errors import (
    ArityMismatch,
    InvalidActionParam,
    NonNumericParam,
    ParseError,
    UnknownVerb,
)

PLANNER_EXAMPLE = """
{
  "action_sequence": [
    { "action": "REMOVE", "object_id": "pumpkin", "reason": "user asked" }
  ]
}
"""


def test_parse_planner_json_example():
    actions = parse_script(PLANNER_EXAMPLE)
    assert actions == [Remove(object_id="pumpkin", meta={"reason": "user asked"})]
    assert actions[0].meta["reason"] == "user asked"


def test_parse_empty_sequence():
    assert parse_script('{"action_sequence": []}') == []


def test_parse_all_verbs_json():
    doc = {"action_sequence": [
        {"action": "REMOVE", "object_id": "a"},
        {"action": "MOVE", "object_id": "a", "x": 10, "y": 20},
        {"action": "KEEP", "object_id": "a"},
        {"action": "FALL", "object_id": "a", "delta_y": 5},
        {"action": "RESIZE", "object_id": "a", "scale": 2.0},
        {"action": "RETOUCH", "object_id": "a", "brightness": 1.1,
         "contrast": 0.9, "color": 1.0, "sharpness": 1.2},
        {"action": "EDIT", "object_id": "a", "prompt": "make it red",
         "edit_type": "recolor"},
        {"action": "INSERT", "prompt": "a lamp", "x": 5, "y": 6,
         "width": 10, "height": 12, "layer_relation": "front_of:a"},
    ]}
    actions = parse_script(json.dumps(doc))
    assert [a.verb for a in actions] == [
        "REMOVE", "MOVE", "KEEP", "FALL", "RESIZE", "RETOUCH", "EDIT", "INSERT"]


def test_parse_verbs_case_insensitive():
    actions = parse_script('{"action_sequence": [{"action": "move", "object_id": "a", "x": 1, "y": 2}]}')
    assert actions == [Move(object_id="a", x=1, y=2)]


def test_parse_rejects_zero_scale():
    with pytest.raises(ParseError) as err:
        parse_script('{"action_sequence": [{"action": "RESIZE", "object_id": "moon", "scale": 0}]}')
    assert "scale" in str(err.value)


def test_parse_rejects_negative_fall():
    with pytest.raises(ParseError):
        parse_script("FALL crow -5")


def test_dsl_basic_lines():
    text = "MOVE lamp 420 310\nremove pumpkin\nRESIZE moon 0.5\n"
    actions = parse_script(text)
    assert actions == [
        Move(object_id="lamp", x=420, y=310),
        Remove(object_id="pumpkin"),
        Resize(object_id="moon", scale=0.5),
    ]


def test_dsl_insert_quoted_prompt():
    actions = parse_script('INSERT "a red ball" 40 50 16 16 behind:lamp')
    assert actions == [Insert(prompt="a red ball", x=40, y=50, width=16,
                              height=16, layer_relation="behind:lamp")]


def test_dsl_skips_blanks_and_comments():
    actions = parse_script("\n# a note\nKEEP lamp\n\n")
    assert actions == [Keep(object_id="lamp")]


def test_dsl_unknown_verb_with_line():
    with pytest.raises(UnknownVerb) as err:
        parse_script("KEEP a\nTELEPORT a 4 5")
    assert err.value.line == 2


def test_dsl_arity_mismatch():
    with pytest.raises(ArityMismatch):
        parse_script("MOVE lamp 12")


def test_dsl_non_numeric():
    with pytest.raises(NonNumericParam):
        parse_script("MOVE lamp twelve 13")


def test_json_missing_field_is_arity_error():
    with pytest.raises(ArityMismatch):
        parse_script('{"action_sequence": [{"action": "MOVE", "object_id": "a", "x": 3}]}')


def test_json_non_numeric_param():
    with pytest.raises(NonNumericParam):
        parse_script('{"action_sequence": [{"action": "MOVE", "object_id": "a", "x": "3", "y": 4}]}')


def test_json_unknown_action():
    with pytest.raises(UnknownVerb):
        parse_script('{"action_sequence": [{"action": "WARP", "object_id": "a"}]}')


def test_json_bad_top_level():
    with pytest.raises(ParseError):
        parse_script('{"actions": []}')
    with pytest.raises(ParseError):
        parse_script("{ not json")


def test_parse_serialize_identity():
    doc = {"action_sequence": [
        {"action": "REMOVE", "object_id": "pumpkin", "reason": "asked"},
        {"action": "INSERT", "prompt": "a tiny ghost", "x": 12, "y": 14,
         "width": 8, "height": 8, "layer_relation": "frontmost", "reason": "fun"},
        {"action": "RETOUCH", "object_id": "moon", "brightness": 1.25,
         "contrast": 1.0, "color": 1.0, "sharpness": 1.0},
    ]}
    actions = parse_script(json.dumps(doc))
    again = parse_script(serialize_actions(actions))
    assert again == actions


def test_action_to_dsl_round_trip():
    actions = [
        Move(object_id="lamp", x=420, y=310),
        Insert(prompt="a red ball", x=4, y=5, width=6, height=7,
               layer_relation="front_of:lamp"),
        Retouch(object_id="moon", brightness=1.5),
    ]
    text = "\n".join(action_to_dsl(a) for a in actions)
    assert parse_script(text) == actions


def test_constructor_range_checks():
    with pytest.raises(InvalidActionParam):
        Fall(object_id="a", delta_y=-1)
    with pytest.raises(InvalidActionParam):
        Resize(object_id="a", scale=0)
    with pytest.raises(InvalidActionParam):
        Retouch(object_id="a", brightness=-0.1)
    with pytest.raises(InvalidActionParam):
        Insert(prompt="p", x=0, y=0, width=0, height=4, layer_relation="frontmost")
    with pytest.raises(InvalidActionParam):
        Insert(prompt="p", x=0, y=0, width=4, height=4, layer_relation="sideways")
    with pytest.raises(InvalidActionParam):
        Move(object_id="a", x="nan-string", y=0)  # type: ignore[arg-type]
