import json

import numpy as np
import pytest

from layerstage.errors import (
    DuplicateLayerId,
    IoFailure,
    MalformedManifest,
    MaskOutOfBounds,
    MissingAsset,
    VersionUnsupported,
)
from layerstage.model import (
    Environment,
    Mask,
    Raster,
    load_bundle,
    save_bundle,
    state_digest,
    validate,
)

from helpers import build_bundle, checker_background, opaque_box


def test_load_empty_bundle(tmp_path):
    root = build_bundle(tmp_path / "empty", canvas=(64, 64),
                        background=checker_background(64, 64), layers=[])
    env = load_bundle(root)
    assert env.canvas == (64, 64)
    assert env.layers == []
    assert env.stacking == []
    assert env.round == 0
    assert env.action_log == []
    assert env.ground_y == 64


def test_load_two_square_masks(two_square):
    env = load_bundle(two_square)
    assert [l.id for l in env.layers] == ["a", "b"]
    a = env.layer("a")
    # 20x20 amodal with a 10x10 hole gives 300 visible pixels; checked by
    # counting pixels straight out of the written PNGs.
    assert a.amodal_mask.popcount() == 400
    assert a.visible_mask.popcount() == 300
    hole = a.amodal_mask.bits & ~a.visible_mask.bits
    assert hole.sum() == 100
    ys, xs = np.nonzero(hole)
    assert ys.min() == 10 and xs.min() == 10 and ys.max() == 19 and xs.max() == 19
    b = env.layer("b")
    assert b.visible_mask.popcount() == b.amodal_mask.popcount() == 100
    assert all(l.visible for l in env.layers)
    assert all(l.depth_score == 0 for l in env.layers)


def test_load_missing_asset(tmp_path):
    root = build_bundle(tmp_path / "bundle", canvas=(16, 16),
                        background=checker_background(16, 16), layers=[])
    manifest = json.loads((root / "manifest.json").read_text())
    manifest["layers"] = [{"id": "ghost", "name": "ghost",
                           "amodal": "layers/ghost.png", "offset": [0, 0]}]
    (root / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(MissingAsset) as err:
        load_bundle(root)
    assert "layers/ghost.png" in str(err.value)


def test_load_rejects_bad_version(tmp_path):
    root = build_bundle(tmp_path / "bundle", canvas=(8, 8),
                        background=checker_background(8, 8), layers=[])
    manifest = json.loads((root / "manifest.json").read_text())
    manifest["version"] = 99
    (root / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(VersionUnsupported):
        load_bundle(root)


def test_load_rejects_duplicate_ids(tmp_path):
    spec = {"id": "twin", "rgba": opaque_box(4, 4, (9, 9, 9)), "offset": (0, 0)}
    root = build_bundle(tmp_path / "bundle", canvas=(8, 8),
                        background=checker_background(8, 8), layers=[spec])
    manifest = json.loads((root / "manifest.json").read_text())
    manifest["layers"].append(dict(manifest["layers"][0]))
    (root / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DuplicateLayerId):
        load_bundle(root)


def test_load_rejects_garbage_manifest(tmp_path):
    root = tmp_path / "bundle"
    root.mkdir()
    (root / "manifest.json").write_text("not json {")
    with pytest.raises(MalformedManifest):
        load_bundle(root)


def test_load_rejects_visible_outside_amodal(tmp_path):
    rgba = opaque_box(6, 6, (10, 10, 10))
    rgba[0, 0, 3] = 0  # transparent corner
    bad_visible = np.ones((6, 6), dtype=bool)  # claims the corner is visible
    root = build_bundle(tmp_path / "bundle", canvas=(12, 12),
                        background=checker_background(12, 12),
                        layers=[{"id": "x", "rgba": rgba, "offset": (0, 0),
                                 "visible_bits": bad_visible}])
    with pytest.raises(MaskOutOfBounds):
        load_bundle(root)


def test_round_trip_identity(two_square, tmp_path):
    env = load_bundle(two_square)
    out = tmp_path / "saved"
    save_bundle(env, out)
    env2 = load_bundle(out)
    assert state_digest(env) == state_digest(env2)
    for l1, l2 in zip(env.layers, env2.layers):
        assert l1.amodal == l2.amodal
        assert l1.amodal_mask == l2.amodal_mask
        assert l1.visible_mask == l2.visible_mask
        assert l1.offset == l2.offset
        assert l1.scale == l2.scale


def test_round_trip_zip(two_square, tmp_path):
    env = load_bundle(two_square)
    out = tmp_path / "saved.zip"
    save_bundle(env, out)
    env2 = load_bundle(out)
    assert state_digest(env) == state_digest(env2)


def test_save_unwritable_path(two_square, tmp_path):
    env = load_bundle(two_square)
    blocker = tmp_path / "blocker"
    blocker.write_text("file, not dir")
    with pytest.raises(IoFailure):
        save_bundle(env, blocker / "nested")


def test_validate_clean_bundle(two_square):
    env = load_bundle(two_square)
    assert validate(env) == []


def test_validate_flags_visible_outside_amodal(two_square):
    env = load_bundle(two_square)
    layer = env.layer("a")
    bits = layer.visible_mask.bits.copy()
    # claim visibility where there is no amodal pixel
    layer.amodal.data[0, 0, 3] = 0
    layer.refresh_amodal_mask()
    bits[0, 0] = True
    layer.visible_mask = Mask(bits)
    rules = {v.rule for v in validate(env)}
    assert "visible ⊄ amodal" in rules


def test_validate_flags_monotonicity(two_square):
    env = load_bundle(two_square)
    env.layer("a").depth_score = 2
    env.layer("b").depth_score = 5
    env.stacking = ["a", "b"]  # a (D=2) in front of b (D=5): violates order
    violations = validate(env)
    assert any(v.rule == "depth monotonicity" for v in violations)
    env.stacking = ["b", "a"]
    assert validate(env) == []


@pytest.mark.parametrize("corrupt", [
    "scale", "depth_score", "stacking_extra", "stacking_missing", "ground",
    "mask_shape", "duplicate_id",
])
def test_validate_mutations_each_yield_violation(two_square, corrupt):
    env = load_bundle(two_square)
    if corrupt == "scale":
        env.layer("a").scale = -1.0
    elif corrupt == "depth_score":
        env.layer("a").depth_score = -3
    elif corrupt == "stacking_extra":
        env.stacking = env.stacking + ["ghost"]
    elif corrupt == "stacking_missing":
        env.stacking = env.stacking[:-1]
    elif corrupt == "ground":
        env.ground_y = 10_000
    elif corrupt == "mask_shape":
        env.layer("b").amodal_mask = Mask(np.ones((3, 3), dtype=bool))
    elif corrupt == "duplicate_id":
        env.layers.append(env.layer("a").copy())
        env.stacking = [l.id for l in env.layers]
    assert len(validate(env)) >= 1


def test_digest_excludes_log_and_round(two_square):
    env = load_bundle(two_square)
    d0 = state_digest(env)
    env.round = 7
    assert state_digest(env) == d0
    env.layer("a").offset = (6, 5)
    assert state_digest(env) != d0


def test_raster_mask_shape_guards():
    with pytest.raises(ValueError):
        Raster(np.zeros((4, 4, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        Mask(np.zeros((4, 4, 2), dtype=bool))


def test_environment_default_ground():
    env = Environment(canvas=(10, 20), background=Raster.blank(10, 20))
    assert env.ground_y == 20


def test_visible_mask_defaults_to_none(tmp_path):
    root = build_bundle(tmp_path / "b", canvas=(8, 8),
                        background=checker_background(8, 8),
                        layers=[{"id": "x", "rgba": opaque_box(4, 4, (1, 2, 3)),
                                 "offset": (1, 1)}])
    env = load_bundle(root)
    assert env.layer("x").visible_mask is None
