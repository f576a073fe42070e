# tests/test_dataset.py
import numpy as np
import pytest

from core.config_models import AugmentConfig
from core.detection import CRACKS, POTHOLE, YELLOWLANE, BBox
from core.errors import ConfigurationError, DecodeError
from core.pose import CameraModel, DroneState, backproject_pixel, project_point
from dataset.augmentation import augment, jitter_image
from dataset.image_io import image_from_bytes, image_to_bytes, read_image, write_image
from dataset.samples import (
    Annotation,
    Sample,
    format_label,
    load_dataset,
    parse_label_line,
    resize,
    save_sample,
    split,
)
from dataset.scene_renderer import (
    DefectSpec,
    SceneSpec,
    generate_scene,
    load_scene,
    random_pose,
    random_scene,
    save_scene,
    scene_from_text,
    scene_to_text,
)

CAMERA = CameraModel()
ABOVE_ORIGIN = DroneState(x=0.0, y=0.0, z=2.0, flying=True)


def make_sample(sample_id, rng, annotations=None):
    return Sample(rng.uniform(size=(3, 16, 16)), annotations or [Annotation(0, BBox(0.5, 0.5, 0.2, 0.2))],
                  sample_id)


def test_label_lines():
    annotation = parse_label_line("1 0.5 0.25 0.1 0.2")
    assert annotation == Annotation(POTHOLE, BBox(0.5, 0.25, 0.1, 0.2))
    assert format_label(annotation) == "1 0.500000 0.250000 0.100000 0.200000"
    for bad in ["1 0.5 0.25 0.1", "3 0.5 0.5 0.1 0.1", "0 1.5 0.5 0.1 0.1", "a b c d e"]:
        with pytest.raises(DecodeError):
            parse_label_line(bad)


def test_image_bytes_round_trip(rng):
    image = rng.uniform(size=(3, 8, 5))
    decoded = image_from_bytes(image_to_bytes(image))
    assert decoded.shape == (3, 8, 5)
    assert np.max(np.abs(decoded - image)) <= 0.5 / 255 + 1e-9
    with pytest.raises(DecodeError):
        image_from_bytes(b"not an image")


def test_load_dataset_skips_broken_pairs(tmp_path, rng):
    save_sample(make_sample("good", rng), tmp_path)
    write_image(tmp_path / "nolabel.ppm", rng.uniform(size=(3, 16, 16)))
    write_image(tmp_path / "badlabel.ppm", rng.uniform(size=(3, 16, 16)))
    (tmp_path / "badlabel.txt").write_text("7 0.5 0.5 0.1 0.1\n", encoding="utf-8")
    samples, skipped = load_dataset(tmp_path)
    assert [s.id for s in samples] == ["good"]
    assert samples[0].annotations == [Annotation(0, BBox(0.5, 0.5, 0.2, 0.2))]
    assert len(skipped) == 2
    report = skipped.write(tmp_path / "out" / "skipped.txt").read_text()
    assert "missing label file" in report and "malformed label" in report
    with pytest.raises(ConfigurationError):
        load_dataset(tmp_path / "absent")


def test_split_is_seeded_and_disjoint(rng):
    samples = [make_sample(f"s{i}", rng) for i in range(10)]
    train, val = split(samples, 0.8, seed=3)
    assert (len(train), len(val)) == (8, 2)
    assert {s.id for s in train}.isdisjoint({s.id for s in val})
    again, _ = split(samples, 0.8, seed=3)
    assert [s.id for s in again] == [s.id for s in train]
    with pytest.raises(ConfigurationError):
        split(samples[:1], 0.8, seed=3)
    with pytest.raises(ConfigurationError):
        split(samples, 1.0, seed=3)


def test_resize_keeps_annotations(rng):
    sample = make_sample("r", rng)
    resized = resize(sample, 32)
    assert resized.image.shape == (3, 32, 32)
    assert resized.annotations == sample.annotations
    assert resized.image.min() >= 0.0 and resized.image.max() <= 1.0


def test_augment_changes_colour_only(rng):
    sample = make_sample("a", rng)
    out = augment(sample, AugmentConfig(), np.random.default_rng(4))
    same = augment(sample, AugmentConfig(), np.random.default_rng(4))
    assert out.image.shape == sample.image.shape
    assert out.annotations == sample.annotations
    np.testing.assert_array_equal(out.image, same.image)
    assert out.image.min() >= 0.0 and out.image.max() <= 1.0
    np.testing.assert_allclose(jitter_image(sample.image, 1.0, 1.0, 0.0), sample.image, atol=1e-9)


def test_projection_and_backprojection_agree():
    state = DroneState(x=1.0, y=2.0, z=2.0, heading=0.3, flying=True)
    u, v = project_point(CAMERA, state, (1.5, 3.0, 0.0))
    hit = backproject_pixel(CAMERA, state, u, v)
    assert hit == pytest.approx((1.5, 3.0), abs=1e-9)


def test_rendered_scene_annotations():
    scene = SceneSpec(lane=[(0.0, -5.0), (0.0, 50.0)], defects=[DefectSpec("pothole", 0.3, 1.0, 0.2)])
    sample = generate_scene(scene, CAMERA, ABOVE_ORIGIN)
    assert sample.image.shape == (3, 64, 64)
    assert 0.0 <= sample.image.min() and sample.image.max() <= 1.0
    by_class = {a.class_id: a.bbox for a in sample.annotations}
    assert set(by_class) == {POTHOLE, YELLOWLANE}
    assert by_class[POTHOLE].cx > 0.5
    assert by_class[YELLOWLANE].cx == pytest.approx(0.5, abs=0.05)


def test_defect_out_of_view_is_not_annotated():
    scene = SceneSpec(lane=[(0.0, -5.0), (0.0, 50.0)], defects=[DefectSpec("crack", 0.0, 30.0, 0.5)])
    classes = {a.class_id for a in generate_scene(scene, CAMERA, ABOVE_ORIGIN).annotations}
    assert CRACKS not in classes


def test_scene_validation():
    with pytest.raises(ConfigurationError):
        SceneSpec(lane=[(0.0, 0.0)])
    with pytest.raises(ConfigurationError):
        DefectSpec("puddle", 0.0, 0.0, 1.0)
    with pytest.raises(ConfigurationError):
        SceneSpec(lane=[(0.0, 0.0), (0.0, 1.0)], defects=[DefectSpec("pothole", 10.0, 0.0, 0.2)])


def test_scene_files(tmp_path):
    scene = random_scene(5, noise=0.01)
    assert scene_from_text(scene_to_text(scene)) == scene
    assert load_scene(save_scene(scene, tmp_path / "scene.txt")) == scene
    with pytest.raises(ConfigurationError):
        scene_from_text("seed = 1\n")
    with pytest.raises(ConfigurationError):
        load_scene(tmp_path / "missing.txt")


def test_random_scenes_are_seeded():
    assert random_scene(8) == random_scene(8)
    assert random_pose(random_scene(8), 2) == random_pose(random_scene(8), 2)
    image_a = generate_scene(random_scene(8, noise=0.05), CAMERA, ABOVE_ORIGIN).image
    image_b = generate_scene(random_scene(8, noise=0.05), CAMERA, ABOVE_ORIGIN).image
    np.testing.assert_array_equal(image_a, image_b)


def test_read_image_errors(tmp_path):
    with pytest.raises(DecodeError):
        read_image(tmp_path / "missing.ppm")
