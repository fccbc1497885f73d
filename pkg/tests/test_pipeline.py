import json

import numpy as np
import pytest

from synth import make_dataset, tree_digest
from weakcod.core import PipelineConfig
from weakcod.io import load_manifest, load_mask, save_mask
from weakcod.pipeline import PipelineError, load_candidates, run_pipeline
from weakcod.segmenter import StubSegmenter


def test_smoke(dataset, tmp_path):
    out = run_pipeline(load_manifest(dataset), PipelineConfig(), tmp_path / "out")
    s = out.summary
    assert s["records"] == 9 and s["succeeded"] == 9 and s["failed"] == 0
    assert s["by_prompt_type"] == {"box": 3, "point": 3, "scribble": 3}
    for meta in out.records:
        rec = tmp_path / "out" / meta["id"]
        assert (rec / "pseudo_label.png").exists() and (rec / "prompt_mask.png").exists()
        assert meta["passed_filter"][2] is False
        assert meta["candidate_source"] == "segmenter"
    assert json.loads((tmp_path / "out" / "summary.json").read_text()) == s


def test_deterministic_across_workers(dataset, tmp_path):
    cfg = PipelineConfig()
    run_pipeline(load_manifest(dataset), cfg, tmp_path / "a", workers=1)
    run_pipeline(load_manifest(dataset), cfg, tmp_path / "b", workers=4)
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_candidates_from_disk(tmp_path):
    manifest = make_dataset(tmp_path / "d", n=1, size=32)
    data = json.loads(manifest.read_text())
    cdir = tmp_path / "d" / "cands"
    big = np.ones((32, 32))
    save_mask(cdir / "cand_0.png", big)
    cdir.joinpath("scores.json").write_text("[0.9]")
    data["records"][0]["candidates_dir"] = "cands"
    manifest.write_text(json.dumps(data))

    assert len(load_candidates(cdir)) == 1
    out = run_pipeline(load_manifest(manifest), PipelineConfig(), tmp_path / "out")
    meta = out.records[0]
    assert meta["candidate_source"] == "file" and meta["used_fallback"]
    coarse = load_mask(tmp_path / "d" / "rec000" / "coarse.png")
    label = load_mask(tmp_path / "out" / "rec000" / "pseudo_label.png")
    assert np.array_equal(label, (coarse >= 0.5).astype(float))
    assert out.summary["fallbacks"] == 1


def test_drop_unmatched(tmp_path):
    class Whole:
        def segment(self, req):
            from weakcod.candidate_select import MaskCandidate

            h, w = req.image.shape[:2]
            return [MaskCandidate(np.ones((h, w)), 1.0)]

    manifest = make_dataset(tmp_path / "d", n=2, size=32)
    out = run_pipeline(load_manifest(manifest), PipelineConfig(drop_unmatched=True), tmp_path / "o", Whole())
    assert out.summary["dropped"] == 2
    assert not (tmp_path / "o" / "rec000" / "pseudo_label.png").exists()


def test_partial_and_total_failure(tmp_path):
    manifest = make_dataset(tmp_path / "d", n=2, size=32)
    (tmp_path / "d" / "rec001" / "annotation.json").write_text('{"type": "point", "point": [99, 99]}')
    out = run_pipeline(load_manifest(manifest), PipelineConfig(), tmp_path / "o")
    assert out.summary["failed"] == 1 and out.summary["errors"][0]["id"] == "rec001"
    (tmp_path / "d" / "rec000" / "annotation.json").write_text("{")
    with pytest.raises(PipelineError):
        run_pipeline(load_manifest(manifest), PipelineConfig(), tmp_path / "o2")


def test_resize(dataset, tmp_path):
    out = run_pipeline(load_manifest(dataset), PipelineConfig(resize=40), tmp_path / "out", StubSegmenter())
    assert out.summary["failed"] == 0
    for meta in out.records:
        assert meta["size"] == [40, 40]
        assert load_mask(tmp_path / "out" / meta["id"] / "pseudo_label.png").shape == (40, 40)
