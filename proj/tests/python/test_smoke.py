import json
import math

import pytest

import shipvl


def test_version_matches_cli():
    code, out, _ = shipvl.run_cli(["--version"])
    assert code == 0
    assert json.loads(out) == {"name": "shipvl", "version": shipvl.__version__}


def test_iou():
    assert shipvl.hbb_iou([0, 0, 0.5, 0.5], [0.25, 0.25, 0.75, 0.75]) == pytest.approx(1 / 7)
    square = [0.2, 0.2, 0.8, 0.2, 0.8, 0.8, 0.2, 0.8]
    r = 0.3 * math.sqrt(2)
    diamond = [v for k in range(4) for v in (0.5 + r * math.cos(k * math.pi / 2), 0.5 + r * math.sin(k * math.pi / 2))]
    assert shipvl.quad_iou(square, diamond) == pytest.approx(1 / math.sqrt(2), abs=1e-9)


def test_canonical_order():
    q = shipvl.canonicalize_quad([0.8, 0.8, 0.2, 0.2, 0.8, 0.2, 0.2, 0.8])
    assert q == [0.2, 0.2, 0.8, 0.2, 0.8, 0.8, 0.2, 0.8]


def test_codec_round_trip_and_totality():
    text = shipvl.serialize_answer([[0.5, 0.5, 0.9, 0.9], [0.1, 0.2, 0.5, 0.6]])
    assert text == "[0.100, 0.200, 0.500, 0.600]; [0.500, 0.500, 0.900, 0.900]"
    boxes, warnings = shipvl.parse_answer("I found ships at " + text + " and more.")
    assert boxes == [[0.1, 0.2, 0.5, 0.6], [0.5, 0.5, 0.9, 0.9]]
    assert warnings == []
    boxes, _ = shipvl.parse_answer("[[[ éè 0.1,,")
    assert boxes == []


def test_errors_surface_as_exceptions():
    with pytest.raises(shipvl.ShipvlError):
        shipvl.canonicalize_quad([0.5] * 8)
    with pytest.raises(ValueError):
        shipvl.hbb_iou([0, 0, 1], [0, 0, 1, 1])


def test_evaluate_and_report(tmp_path):
    gt = tmp_path / "gt.jsonl"
    preds = tmp_path / "preds.jsonl"
    gt.write_text(json.dumps({"image_id": "a", "task": "hbb", "boxes": [[0.1, 0.1, 0.4, 0.4]]}) + "\n")
    preds.write_text(json.dumps({"image_id": "a", "task": "hbb", "box": [0.1, 0.1, 0.4, 0.4], "confidence": 0.9}) + "\n")
    aps = shipvl.evaluate(preds, gt)
    assert aps == {"AP@40": 1.0, "AP@50": 1.0, "AP@60": 1.0}
    row = shipvl.format_report_row("m", "d", [0.5668, 0.5530, 0.5353])
    assert "56.68  55.30  53.53" in row
    assert shipvl.build_instruction("hbb").endswith("horizontal bounding box.")
