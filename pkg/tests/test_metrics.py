import math

import numpy as np
import pytest

from layerstage.actions import Move, Remove
from layerstage.engine import run_round
from layerstage.errors import EmptyConstraintSet, EmptyRequestSet, SizeMismatch
from layerstage.metrics import (
    ConstraintSpec,
    Detection,
    Finding,
    JudgeFindings,
    PyramidExtractor,
    Relation,
    constraint_accuracy,
    csr,
    detections_from_env,
    drift_series,
    ic_score,
    lpips_u,
    mean_saturation,
    ms_score,
    noise_baseline_series,
    pc_score,
    spatial_accuracy,
)
from layerstage.model import Mask, Raster, load_bundle
from layerstage.ordering import order_environment

from oracles import masked_l2


def random_raster(rng, size=32):
    data = rng.integers(0, 256, size=(size, size, 4), dtype=np.uint8)
    data[:, :, 3] = 255
    return Raster(data)


def block_mask(size=32, y0=8, y1=16, x0=8, x1=16):
    bits = np.zeros((size, size), dtype=bool)
    bits[y0:y1, x0:x1] = True
    return Mask(bits)


# -- lpips_u -------------------------------------------------------------------

def test_identical_images_zero():
    rng = np.random.default_rng(1)
    img = random_raster(rng)
    assert lpips_u(img, img, block_mask()) == 0.0


def test_full_mask_zero():
    rng = np.random.default_rng(2)
    a, b = random_raster(rng), random_raster(rng)
    full = Mask(np.ones((32, 32), dtype=bool))
    assert lpips_u(a, b, full) == 0.0


def test_level0_matches_independent_masked_l2():
    rng = np.random.default_rng(3)
    a, b = random_raster(rng), random_raster(rng)
    mask = block_mask()
    got = lpips_u(a, b, mask, extractor=PyramidExtractor(levels=1))
    expected = masked_l2(a.data[:, :, :3] / 255.0, b.data[:, :, :3] / 255.0,
                         ~mask.bits)
    assert abs(got - expected) < 1e-9


def test_in_mask_difference_bleeds_below_tolerance():
    rng = np.random.default_rng(4)
    a = random_raster(rng)
    edited = a.data.copy()
    edited[8:16, 8:16, :3] = np.clip(
        edited[8:16, 8:16, :3].astype(np.int16) + 2, 0, 255).astype(np.uint8)
    b = Raster(edited)
    mask = block_mask()
    level0 = lpips_u(a, b, mask, extractor=PyramidExtractor(levels=1))
    assert level0 == 0.0
    assert lpips_u(a, b, mask) <= 1e-3  # pyramid blur crosses the mask edge


def test_lpips_symmetry_and_monotonicity():
    rng = np.random.default_rng(5)
    a = random_raster(rng)
    mask = block_mask()
    small = a.data.copy()
    small[0:4, 0:4, :3] += 10
    large = a.data.copy()
    large[0:4, 0:4, :3] += 40
    v_small = lpips_u(a, Raster(small), mask)
    v_large = lpips_u(a, Raster(large), mask)
    assert v_small > 0
    assert v_large > v_small
    assert lpips_u(Raster(small), a, mask) == pytest.approx(v_small, abs=1e-12)


def test_lpips_raw_norm_flag():
    rng = np.random.default_rng(6)
    a, b = random_raster(rng), random_raster(rng)
    mask = block_mask()
    normalized = lpips_u(a, b, mask, extractor=PyramidExtractor(levels=1))
    raw = lpips_u(a, b, mask, extractor=PyramidExtractor(levels=1), normalize=False)
    kept = int((~mask.bits).sum()) * 3
    assert raw == pytest.approx(normalized * math.sqrt(kept), rel=1e-12)


def test_lpips_size_mismatch():
    rng = np.random.default_rng(7)
    with pytest.raises(SizeMismatch):
        lpips_u(random_raster(rng, 32), random_raster(rng, 16), block_mask())
    with pytest.raises(SizeMismatch):
        lpips_u(random_raster(rng, 32), random_raster(rng, 32),
                Mask(np.zeros((8, 8), dtype=bool)))


# -- SA / CSR ------------------------------------------------------------------

CANVAS = (100, 100)


def graded_fixture():
    """Three constraints engineered to grade {1, 0.5, 1}."""
    constraints = [
        ConstraintSpec(target="gone", operation="Remove"),
        ConstraintSpec(target="lamp", operation="Move",
                       relation=Relation(kind="left_of", reference="table")),
        ConstraintSpec(target="cat", operation="Edit"),
    ]
    before = [
        Detection("gone", (10, 10, 10, 10)),
        Detection("lamp", (20, 20, 10, 10)),
        Detection("table", (50, 20, 20, 20)),
        Detection("cat", (70, 70, 10, 10)),
    ]
    after = [
        Detection("lamp", (80, 20, 10, 10)),  # right of the table: violated
        Detection("table", (50, 20, 20, 20)),
        Detection("cat", (70, 70, 10, 10)),
    ]
    return constraints, before, after


def test_sa_graded_mean():
    constraints, before, after = graded_fixture()
    values = [constraint_accuracy(c, before, after, CANVAS) for c in constraints]
    assert values == [1.0, 0.5, 1.0]
    assert spatial_accuracy(constraints, before, after, CANVAS) == pytest.approx(5 / 6, abs=1e-12)


def test_sa_all_satisfied():
    constraints, before, after = graded_fixture()
    after = [d for d in after if d.label != "lamp"] + [Detection("lamp", (10, 20, 10, 10))]
    assert spatial_accuracy(constraints, before, after, CANVAS) == 1.0


def test_move_left_of_relation():
    c = ConstraintSpec(target="box", operation="Move",
                       relation=Relation(kind="left_of", reference="lamp"))
    after = [Detection("box", (95, 0, 10, 10)), Detection("lamp", (295, 0, 10, 10))]
    assert constraint_accuracy(c, [], after, (400, 100)) == 1.0  # 100 < 300


def test_center_relation_middle_third():
    c = ConstraintSpec(target="box", operation="Insert",
                       relation=Relation(kind="center"))
    inside = [Detection("box", (45, 45, 10, 10))]
    outside = [Detection("box", (0, 0, 10, 10))]
    assert constraint_accuracy(c, [], inside, CANVAS) == 1.0
    assert constraint_accuracy(c, [], outside, CANVAS) == 0.5


def test_remove_partial_credit_on_confidence_drop():
    c = ConstraintSpec(target="box", operation="Remove")
    before = [Detection("box", (0, 0, 10, 10), confidence=0.9)]
    weak = [Detection("box", (0, 0, 10, 10), confidence=0.3)]
    strong = [Detection("box", (0, 0, 10, 10), confidence=0.8)]
    assert constraint_accuracy(c, before, weak, CANVAS) == 0.5
    assert constraint_accuracy(c, before, strong, CANVAS) == 0.0
    assert constraint_accuracy(c, before, [], CANVAS) == 1.0


def test_csr_fixture_and_thresholds():
    constraints, before, after = graded_fixture()
    assert csr(constraints, before, after, CANVAS, tau=0.7) == pytest.approx(2 / 3, abs=1e-12)
    assert csr(constraints, before, after, CANVAS, tau=0.0) == 1.0
    halves = [ConstraintSpec(target="lamp", operation="Move",
                             relation=Relation(kind="left_of", reference="table"))] * 3
    assert csr(halves, before, after, CANVAS, tau=0.7) == 0.0


def test_csr_non_increasing_in_tau():
    constraints, before, after = graded_fixture()
    values = [csr(constraints, before, after, CANVAS, tau=t)
              for t in (0.0, 0.3, 0.5, 0.7, 0.9, 1.0)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_sa_csr_permutation_invariant():
    constraints, before, after = graded_fixture()
    shuffled = [constraints[2], constraints[0], constraints[1]]
    assert spatial_accuracy(constraints, before, after, CANVAS) == \
        spatial_accuracy(shuffled, before, after, CANVAS)
    assert csr(constraints, before, after, CANVAS) == \
        csr(shuffled, before, after, CANVAS)


def test_empty_constraints_error():
    with pytest.raises(EmptyConstraintSet):
        spatial_accuracy([], [], [], CANVAS)
    with pytest.raises(EmptyConstraintSet):
        csr([], [], [], CANVAS)


def test_constraint_spec_relation_invariant():
    with pytest.raises(ValueError):
        ConstraintSpec(target="x", operation="Move")  # relation required
    with pytest.raises(ValueError):
        ConstraintSpec(target="x", operation="Remove",
                       relation=Relation(kind="center"))


def test_detections_from_env(crow_pumpkin):
    env = load_bundle(crow_pumpkin)
    dets = detections_from_env(env)
    labels = {d.label for d in dets}
    assert labels == {"pumpkin", "crow", "moon"}
    crow = next(d for d in dets if d.label == "crow")
    assert crow.bbox == (32.0, 48.0, 16.0, 12.0)
    env.layer("crow").visible = False
    assert "crow" not in {d.label for d in detections_from_env(env)}


# -- PC / IC / MS --------------------------------------------------------------

def test_pc_deduction():
    findings = JudgeFindings(physical_issues=[
        Finding("shadow wrong", "moderate"), Finding("floating object", "severe")])
    assert pc_score(findings) == 5.0


def test_pc_clips_to_one():
    findings = JudgeFindings(physical_issues=[Finding("x", "severe")] * 10)
    assert pc_score(findings) == 1.0
    assert pc_score(JudgeFindings()) == 10.0


def test_ic_fulfillment_mean():
    findings = JudgeFindings(fulfillments=[1.0, 0.5])
    assert ic_score(findings) == 7.5


def test_ic_penalties_subtract():
    findings = JudgeFindings(
        fulfillments=[1.0, 1.0],
        unwanted_changes=[Finding("recolored sky", "minor")],
        preservation_damage=[Finding("blurred floor", "moderate")])
    assert ic_score(findings) == 7.0


def test_ms_mean():
    findings = JudgeFindings(step_successes=[1.0, 1.0, 0.0])
    assert ms_score(findings) == pytest.approx(20 / 3, abs=1e-12)


def test_empty_request_sets():
    with pytest.raises(EmptyRequestSet):
        ic_score(JudgeFindings())
    with pytest.raises(EmptyRequestSet):
        ms_score(JudgeFindings())


def test_findings_range_validation():
    with pytest.raises(ValueError):
        JudgeFindings(fulfillments=[1.5])
    with pytest.raises(ValueError):
        Finding("x", "catastrophic").penalty


def test_judge_findings_from_json():
    doc = {
        "physical_issues": [{"description": "a", "severity": "severe"}],
        "fulfillments": [1.0, 0.5],
        "unwanted_changes": [],
        "preservation_damage": [],
        "step_successes": [1.0],
    }
    findings = JudgeFindings.from_json(doc)
    assert pc_score(findings) == 7.0
    assert ic_score(findings) == 7.5
    assert ms_score(findings) == 10.0


# -- drift ---------------------------------------------------------------------

def session(bundle_path):
    env = load_bundle(bundle_path)
    order_environment(env)
    env.freeze_baseline()
    return env


def test_drift_zero_action_session(tiles):
    env = session(tiles)
    for _ in range(3):
        run_round(env, [])
    points = drift_series(env, set())
    assert len(points) == 4
    assert all(p.pixdiff == 0.0 for p in points)


def test_drift_engine_session_exactly_zero(tiles):
    env = session(tiles)
    cx, cy = env.layer("tile1").center()
    for r in range(4):
        run_round(env, [Move(object_id="tile1", x=cx + 4 * (r + 1), y=cy)])
    points = drift_series(env, {"tile1"})
    assert len(points) == 5
    assert all(p.pixdiff == 0.0 for p in points)
    saturations = {p.mean_saturation for p in points}
    assert len(saturations) == 1  # untouched region is bit-identical


def test_drift_covers_physics_children(crow_pumpkin):
    env = session(crow_pumpkin)
    run_round(env, [Remove(object_id="pumpkin")])
    points = drift_series(env, {"pumpkin"})
    assert all(p.pixdiff == 0.0 for p in points)


def test_noise_baseline_strictly_increases(tiles):
    env = session(tiles)
    from layerstage.render import composite

    base = composite(env)
    points = noise_baseline_series(base, rounds=4, sigma=0.01, seed=7)
    diffs = [p.pixdiff for p in points]
    assert diffs[0] == 0.0
    assert all(b > a for a, b in zip(diffs, diffs[1:]))


def test_mean_saturation_formula():
    rgb = np.zeros((1, 2, 3))
    rgb[0, 0] = (1.0, 0.0, 0.0)  # saturation 1
    rgb[0, 1] = (0.5, 0.5, 0.5)  # saturation 0
    region = np.ones((1, 2), dtype=bool)
    assert mean_saturation(rgb, region) == pytest.approx(0.5)
