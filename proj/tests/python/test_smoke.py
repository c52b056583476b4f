import json
import math

import numpy as np
import pytest

import multitrans as mt


def small_config(train=6, test=4, epochs=2):
    cfg = json.loads(mt.default_config())
    cfg["generator"]["train_scenes"] = train
    cfg["generator"]["test_scenes"] = test
    cfg["training"]["epochs"] = epochs
    return json.dumps(cfg)


def test_average_precision_examples():
    assert mt.average_precision([0.9, 0.8, 0.7, 0.1], [1, 1, 0, 0]) == 1.0
    assert mt.average_precision([0.9, 0.8, 0.7], [0, 1, 1]) == pytest.approx(7 / 12, abs=1e-12)
    assert mt.average_precision([0.2, 0.1], [0, 0]) is None
    with pytest.raises(ValueError):
        mt.average_precision([0.2], [0, 1])


def test_lr_schedule_endpoints():
    assert mt.lr_schedule(0) == 0.01
    assert mt.lr_schedule(49) == 0.001
    assert mt.lr_schedule(24) == pytest.approx(0.01 * 0.1 ** (24 / 49), rel=1e-12)


def test_generate_dataset_shapes_and_labels():
    data = mt.generate_dataset(small_config(), seed=3)
    assert len(data.train) == 6 and len(data.test) == 4
    clip = data.train[0]
    assert clip.clip_id == "train-0000"
    assert clip.features.shape == (48, 6, 8)
    assert np.isfinite(clip.features).all()
    strong = clip.strong_label
    assert strong.shape == (48, 4)
    assert list(strong.max(axis=0)) == clip.weak_label
    assert clip.modality == ["audio"] * 3 + ["video"] * 3
    again = mt.generate_dataset(small_config(), seed=3)
    assert np.array_equal(again.train[0].features, clip.features)


def test_oracle_stub_scores_one():
    data = mt.generate_dataset(small_config())
    report = mt.evaluate(mt.Checkpoint.oracle_stub(), data.test)
    assert report["map"] == 1.0
    assert report["num_frames"] == 4 * 48


def test_train_evaluate_attention_round_trip():
    data = mt.generate_dataset(small_config())
    ckpt, history = mt.train(data, small_config(), variant="C-3", seed=1)
    assert [h[0] for h in history] == [0, 1]
    assert all(math.isfinite(h[2]) for h in history)
    assert ckpt.variant == "multitrans" and ckpt.fusion == "concat"
    again, _ = mt.train(data, small_config(), variant="C-3", seed=1)
    assert again.to_json() == ckpt.to_json()
    loaded = mt.Checkpoint.from_json(ckpt.to_json())
    assert loaded.id == ckpt.id
    report = mt.evaluate(loaded, data.test)
    defined = [ap for ap in report["per_class_ap"] if ap is not None]
    assert report["map"] == pytest.approx(sum(defined) / len(defined), abs=1e-15)
    rows = mt.dump_attention(ckpt, data.test[0])
    sums = {}
    for clip_id, frame, layer, head, q, k, w, wn in rows:
        assert wn == pytest.approx(6 * w)
        sums[(frame, layer, head, q)] = sums.get((frame, layer, head, q), 0.0) + w
    assert all(abs(s - 1.0) < 1e-9 for s in sums.values())


def test_baseline_has_no_attention():
    data = mt.generate_dataset(small_config())
    ckpt, _ = mt.train(data, small_config(), variant="A-3", epochs=1)
    with pytest.raises(ValueError):
        mt.dump_attention(ckpt, data.test[0])


def test_dataset_directory_round_trip(tmp_path):
    cfg = small_config(train=3, test=2)
    data = mt.generate_dataset(cfg)
    mt.save_dataset(str(tmp_path), data, cfg)
    back = mt.load_dataset(str(tmp_path))
    assert back.event_counts == data.event_counts
    assert np.array_equal(back.test[1].features, data.test[1].features)


def test_bad_config_raises():
    with pytest.raises(ValueError):
        mt.generate_dataset(json.dumps({"generator": {"num_sensors": 0}}))
    with pytest.raises(ValueError):
        mt.train(mt.generate_dataset(small_config()), small_config(), variant="Z-1")
