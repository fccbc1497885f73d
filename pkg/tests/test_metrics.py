import numpy as np
import pytest

from oracles import e_measure_ref, mae_ref, s_measure_ref, weighted_f_ref
from weakcod.metrics import (
    EmptyDataset,
    e_measure,
    evaluate_dataset,
    mae,
    nearest_foreground,
    s_measure,
    weighted_f,
)

METRICS = [(mae, mae_ref), (s_measure, s_measure_ref), (e_measure, e_measure_ref), (weighted_f, weighted_f_ref)]


def blob(size, rng):
    yy, xx = np.mgrid[0:size, 0:size]
    cx, cy = rng.uniform(0.3, 0.7, 2) * size
    r = rng.uniform(0.15, 0.35) * size
    return ((xx - cx) ** 2 + (yy - cy) ** 2 <= r * r).astype(np.uint8)


@pytest.mark.parametrize("size", [8, 16, 33])
def test_identity(size, rng):
    gt = blob(size, rng)
    assert mae(gt, gt) == 0
    for f in (s_measure, e_measure, weighted_f):
        assert f(gt.astype(float), gt) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("fill", [0, 1])
def test_identity_degenerate(fill):
    gt = np.full((6, 6), fill, np.uint8)
    for f in (s_measure, e_measure, weighted_f):
        assert f(gt.astype(float), gt) == pytest.approx(1.0, abs=1e-9)


def test_against_oracle(rng):
    for i in range(30):
        pred = rng.random((12, 12))
        gt = blob(12, rng) if i % 2 else (rng.random((12, 12)) < 0.3).astype(np.uint8)
        for f, ref in METRICS:
            assert f(pred, gt) == pytest.approx(ref(pred, gt), abs=1e-9), f.__name__


def test_flip_invariance(rng):
    pred, gt = rng.random((15, 15)), blob(15, rng)
    for f in (mae, e_measure):
        assert f(pred[:, ::-1], gt[:, ::-1]) == pytest.approx(f(pred, gt), abs=1e-12)


def test_mae_complement(rng):
    pred, gt = rng.random((10, 10)), blob(10, rng)
    assert mae(1 - pred, gt) == pytest.approx(1 - mae(pred, gt))


def test_degrades_with_noise(rng):
    gt = blob(32, rng)
    clean = gt.astype(float)
    noisy = np.clip(clean + rng.normal(0, 0.4, clean.shape), 0, 1)
    for f in (s_measure, e_measure, weighted_f):
        assert f(noisy, gt) < f(clean, gt)
    assert mae(noisy, gt) > 0


def test_ranges(rng):
    for _ in range(50):
        pred = rng.random((9, 9)) ** rng.uniform(0.2, 5)
        gt = (rng.random((9, 9)) < rng.uniform(0, 1)).astype(np.uint8)
        for f, _ in METRICS:
            assert 0.0 <= f(pred, gt) <= 1.0 + 1e-12


def test_empty_gt_conventions():
    gt = np.zeros((4, 4), np.uint8)
    assert s_measure(np.full((4, 4), 0.25), gt) == pytest.approx(0.75)
    assert weighted_f(np.full((4, 4), 0.4), gt) == 1.0
    assert weighted_f(np.full((4, 4), 0.6), gt) == 0.0


def test_nearest_foreground_ties():
    gt = np.zeros((3, 3), bool)
    gt[0, 0] = gt[0, 2] = True
    dist, ny, nx = nearest_foreground(gt)
    assert (ny[0, 1], nx[0, 1]) == (0, 0) and dist[0, 1] == 1.0
    assert dist[2, 2] == 2.0 and (ny[2, 2], nx[2, 2]) == (0, 2)


def test_dataset_report():
    gt = np.zeros((6, 6), np.uint8)
    gt[1:4, 1:4] = 1
    report = evaluate_dataset([("b", gt * 1.0, gt), ("a", 1.0 - gt, gt)])
    assert [r.id for r in report.per_image] == ["a", "b"]
    assert report.mae == pytest.approx(0.5)
    d = report.to_dict()
    assert d["count"] == 2 and d["e_measure_variant"] == "adaptive"
    assert d["per_image"][1]["object_size_ratio"] == pytest.approx(9 / 36)
    with pytest.raises(EmptyDataset):
        evaluate_dataset([])


def test_toolkit_cross_check():
    sm = pytest.importorskip("py_sod_metrics")
    rng = np.random.default_rng(5)
    gt = np.zeros((20, 20), np.uint8)
    gt[:, 5:11] = 1
    pred = rng.random((20, 20))
    p = np.round(pred * 255) / 255

    s, e, w = sm.Smeasure(), sm.Emeasure(), sm.WeightedFmeasure()
    for m in (s, e, w):
        m.step(p, gt.astype(bool), normalize=False)
    n = gt.size
    assert s_measure(p, gt) == pytest.approx(s.get_results()["sm"], abs=1e-9)
    assert weighted_f(p, gt) == pytest.approx(w.get_results()["wfm"], abs=1e-9)
    # the toolkit divides the enhanced matrix sum by N-1
    assert e_measure(p, gt) == pytest.approx(e.get_results()["em"]["adp"] * (n - 1) / n, abs=1e-9)
