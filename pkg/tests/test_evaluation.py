import json

import numpy as np
import pytest

from stegosense.embedding import InfeasiblePayloadError, apply_pattern
from stegosense.evaluation import (
    ExperimentReport,
    SweepConfig,
    detection_error,
    detection_rates,
    extract_features,
    format_table,
    run_sweep,
    train_detector,
)
from stegosense.image_io import desk_corpus, synth_cover
from stegosense.oracles import FilterLogitOracle


class ConstantModel:
    def __init__(self, p):
        self.p = p

    def predict_proba(self, X):
        X = np.asarray(X)
        return np.column_stack([1 - np.full(len(X), self.p), np.full(len(X), self.p)])


class ThresholdModel:
    """Says 'stego' when feature 0 exceeds 0.5 (or the reverse)."""

    def __init__(self, flip=False):
        self.flip = flip

    def predict_proba(self, X):
        p = (np.asarray(X)[:, 0] > 0.5).astype(float)
        p = 1 - p if self.flip else p
        return np.column_stack([1 - p, p])


def test_flat_features_concentrate_in_zero_bin():
    f = extract_features(synth_cover("flat(77)", 12, 12, 0))
    expected = np.zeros(14)
    expected[3] = expected[7 + 3] = 1.0
    assert np.array_equal(f, expected)


def test_features_sum_to_two_and_ignore_null_pattern():
    img = synth_cover("textured(13)", 20, 20, 3)
    f = extract_features(img)
    assert f.sum() == pytest.approx(2.0, abs=1e-12)
    assert np.array_equal(f, extract_features(apply_pattern(img, np.zeros(img.shape, np.int8))))


def test_detection_error_degenerate_models():
    covers, stegos = np.zeros((5, 2)), np.ones((5, 2))
    assert detection_rates(ConstantModel(0.5), covers, stegos) == (0.5, 0.0, 1.0)
    assert detection_error(ThresholdModel(), covers, stegos) == 0.0
    assert detection_error(ThresholdModel(flip=True), covers, stegos) == 1.0
    with pytest.raises(ValueError):
        detection_error(ThresholdModel(), np.zeros((0, 2)), stegos)


def test_identical_sets_are_at_chance():
    F = np.random.default_rng(0).random((60, 14))
    model = train_detector(F[:30], F[:30], seed=2)
    assert abs(detection_error(model, F[30:], F[30:]) - 0.5) <= 0.05


def test_separable_sets_are_detected():
    rng = np.random.default_rng(1)
    F = rng.normal(0, 1, (80, 14))
    G = F + 3.0
    model = train_detector(F[:40], G[:40], seed=0)
    assert detection_error(model, F[40:], G[40:]) < 0.1


def test_detector_seed_changes_nothing_about_the_contract():
    rng = np.random.default_rng(1)
    F, G = rng.normal(0, 1, (20, 3)), rng.normal(0.5, 1, (20, 3))
    for seed in (0, 1):
        pe = detection_error(train_detector(F, G, seed=seed), F, G)
        assert 0.0 <= pe <= 1.0


def test_train_detector_rejects_mismatch():
    with pytest.raises(ValueError):
        train_detector(np.zeros((3, 2)), np.zeros((2, 2)))


@pytest.fixture(scope="module")
def small_covers():
    return desk_corpus(40, 32, 5)


def small_config(covers, **kw):
    base = dict(
        covers=covers,
        oracle=FilterLogitOracle(),
        methods=("proposed", "hill"),
        filter_sizes=(3,),
        payloads=(0.0, 0.5),
        seeds=(0,),
        detector={"epochs": 20, "rate": 0.05},
    )
    base.update(kw)
    return SweepConfig(**base)


def test_zero_payload_is_chance_for_every_method(small_covers):
    rep = run_sweep(small_config(small_covers))
    for method in ("proposed", "hill"):
        assert 0.45 <= rep.pe(method, 0.0) <= 0.55


def test_sweep_is_reproducible_and_thread_independent(small_covers):
    a = run_sweep(small_config(small_covers)).to_json()
    b = run_sweep(small_config(small_covers)).to_json()
    c = run_sweep(small_config(small_covers, threads=3)).to_json()
    assert a == b == c


def test_report_shape(small_covers):
    rep = run_sweep(small_config(small_covers, seeds=(1, 0)))
    doc = json.loads(rep.to_json())
    assert doc["version"] == 1 and set(doc) == {"version", "config", "records"}
    keys = [(r["method"], r["k"] or -1, r["alpha"], r["seed"]) for r in doc["records"]]
    assert keys == sorted(keys) and len(keys) == 8
    for r in doc["records"]:
        assert 0.0 <= r["pe"] <= 1.0
        assert {"seed", "detector_seed", "split_seed"} <= set(r)
    split = doc["config"]["split"]
    assert not set(split["train"]) & set(split["test"])
    assert sorted(split["train"] + split["test"]) == list(range(40))
    assert ExperimentReport.from_json(rep.to_json()).to_json() == rep.to_json()
    assert "proposed" in format_table(rep)


def test_report_numbers_have_12_significant_digits():
    rep = ExperimentReport({"x": 1 / 3}, [{"pe": 2 / 3}])
    doc = json.loads(rep.to_json())
    assert doc["config"]["x"] == 0.333333333333 and doc["records"][0]["pe"] == 0.666666666667


def test_sweep_validation(small_covers):
    with pytest.raises(ValueError, match="at least 40"):
        run_sweep(small_config(small_covers[:39]))
    with pytest.raises(ValueError, match="overlap"):
        run_sweep(small_config(small_covers, train_indices=list(range(21)), test_indices=list(range(20, 40))))
    with pytest.raises(ValueError):
        run_sweep(small_config(small_covers, payloads=()))
    with pytest.raises(ValueError):
        run_sweep(small_config(small_covers, methods=("hugo",)))


def test_sweep_reports_infeasible_payload():
    covers = []
    for s in range(40):
        c = synth_cover("textured(13)", 16, 16, s).copy()
        c[:12] = 255
        covers.append(c)
    with pytest.raises(InfeasiblePayloadError):
        run_sweep(small_config(covers, methods=("hill",), payloads=(1.0,)))


def test_config_from_dict_synthetic(tmp_path):
    cfg = SweepConfig.from_dict(
        {
            "covers": {"synthetic": {"count": 40, "size": 16, "seed": 2}},
            "oracle": {"kind": "filter", "gain": 2.0},
            "methods": ["hill"],
            "payloads": [0.2],
            "split": {"train": 20, "seed": 1},
        },
        tmp_path,
    )
    assert len(cfg.covers) == 40 and cfg.oracle.gain == 2.0
    train, test = cfg.split()
    assert len(train) == 20 and len(test) == 20


def test_config_from_dict_errors(tmp_path):
    with pytest.raises(ValueError):
        SweepConfig.from_dict({}, tmp_path)
    with pytest.raises(FileNotFoundError):
        SweepConfig.from_dict({"covers": {"dir": "nope"}}, tmp_path)
    with pytest.raises(FileNotFoundError):
        SweepConfig.from_dict(
            {"covers": {"synthetic": {"count": 40, "size": 8}}, "oracle": {"kind": "file", "path": "w.txt"}}, tmp_path
        )
