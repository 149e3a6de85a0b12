import csv
import json

import pytest

from conftest import DEMO
from semchunk.cli import RunConfig, main


def run(*argv):
    return main([str(a) for a in argv])


def read_json(p):
    return json.loads(p.read_text())


def test_layout_eval_and_sweep(tmp_path):
    common = ("--annotations", DEMO / "annotations.json", "--detections", DEMO / "detections.jsonl")
    assert run("layout-eval", *common, "--out", tmp_path / "le") == 0
    rep = read_json(tmp_path / "le/layout_eval.json")
    assert rep["confidence_threshold"] == 0.4 and rep["n_pages"] == 3
    assert 0 < rep["mean_matched_iou"] < 1

    assert run("sweep", *common, "--out", tmp_path / "sw") == 0
    rows = read_json(tmp_path / "sw/sweep.json")["rows"]
    assert [r["confidence_threshold"] for r in rows] == [0.2, 0.3, 0.4, 0.5]
    kept = [r["n_boxes_kept"] for r in rows]
    assert kept == sorted(kept, reverse=True)
    with open(tmp_path / "sw/sweep.csv") as f:
        assert len(list(csv.reader(f))) == 5

    assert run("sweep", *common, "--thresholds", "0.5,0.2", "--out", tmp_path / "bad") == 1


def test_chunk_with_detections_and_stats(tmp_path, capsys):
    assert run("chunk", "--manifest", DEMO / "manifest.json", "--detections", DEMO / "detections.jsonl", "--out", tmp_path / "c") == 0
    assert "dropped box" in capsys.readouterr().err
    lines = (tmp_path / "c/chunks.jsonl").read_text().splitlines()
    assert len(lines) == 12
    assert sorted(p.name for p in (tmp_path / "c/crops").iterdir())[:2] == ["p1__0.png", "p1__1.png"]
    assert run("stats", "--chunks", tmp_path / "c/chunks.jsonl", "--manifest", DEMO / "manifest.json",
               "--semantic-only", "--out", tmp_path / "s") == 0
    g = read_json(tmp_path / "s/stats.json")["granularity"]
    assert g["include_global"] is False and g["chunks_per_image"] == 2.0


def test_strict_turns_warnings_into_exit_3(tmp_path):
    rc = run("chunk", "--manifest", DEMO / "manifest.json", "--detections", DEMO / "detections.jsonl",
             "--no-render", "--strict", "--out", tmp_path / "c")
    assert rc == 3


def test_whole_page_chunking(tmp_path):
    assert run("chunk", "--manifest", DEMO / "manifest.json", "--whole-page", "--no-render", "--out", tmp_path / "w") == 0
    g = read_json(tmp_path / "w/granularity.json")["granularity"]
    assert (g["chunks_per_image"], g["relative_chunk_size_pct"]) == (1.0, 100.0)


def test_chunk_needs_exactly_one_source(tmp_path):
    assert run("chunk", "--manifest", DEMO / "manifest.json", "--out", tmp_path / "x") == 1
    assert run("chunk", "--manifest", DEMO / "manifest.json", "--whole-page",
               "--detections", DEMO / "detections.jsonl", "--out", tmp_path / "x") == 1


def test_bad_top_k_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as ei:
        run("retrieve", "--qa", DEMO / "qa.jsonl", "--index", "x", "--top-k", 0, "--out", tmp_path)
    assert ei.value.code == 2


def test_missing_file_exits_1(tmp_path, capsys):
    assert run("stats", "--chunks", tmp_path / "nope.jsonl", "--manifest", DEMO / "manifest.json", "--out", tmp_path) == 1
    assert "error:" in capsys.readouterr().err


def test_config_digest_ignores_plumbing():
    a = RunConfig("rag", {"qa": "abc"}, out_dir="/a", cache_dir="/c1", jobs=1, endpoint="http://x")
    b = RunConfig("rag", {"qa": "abc"}, out_dir="/b", cache_dir=None, jobs=8, endpoint="http://y")
    assert a.digest() == b.digest()
    assert a.digest() != RunConfig("rag", {"qa": "abd"}).digest()
    with pytest.raises(ValueError):
        RunConfig("chunk", detections="d.jsonl", whole_page=True)


def _text_stages(tmp_path, url):
    assert run("chunk", "--manifest", DEMO / "manifest.json", "--detections", DEMO / "detections.jsonl",
               "--no-render", "--out", tmp_path / "c") == 0
    assert run("convert", "--chunks", tmp_path / "c/chunks.jsonl", "--manifest", DEMO / "manifest.json",
               "--endpoint", url, "--out", tmp_path / "v") == 0
    assert run("index", "--texts", tmp_path / "v/chunk_texts.jsonl", "--unit", "chunk", "--out", tmp_path / "i") == 0
    assert run("retrieve", "--qa", DEMO / "qa.jsonl", "--index", tmp_path / "i/index.json", "--top-k", 1, "--out", tmp_path / "r") == 0


def test_chunk_level_rag_judge_and_report(tmp_path, mock_server):
    _text_stages(tmp_path, mock_server.url)
    cost = read_json(tmp_path / "v/cost.json")
    assert cost["n_pages"] == 3 and cost["mean_chunks"] == 4.0
    assert (tmp_path / "v/timing.json").exists()

    ranked = [json.loads(x) for x in (tmp_path / "r/retrieval.jsonl").read_text().splitlines()]
    assert ranked[0]["ranked"][0]["unit_id"] == "p1__1"

    assert run("rag", "--qa", DEMO / "qa.jsonl", "--retrieval", tmp_path / "r/retrieval.jsonl",
               "--index", tmp_path / "i/index.json", "--modes", "retrieval,overall",
               "--endpoint", mock_server.url, "--out", tmp_path / "g") == 0
    ret = read_json(tmp_path / "g/rag_retrieval.json")
    assert ret["overall"] == 100.0 and ret["scorer"] == "lcs"
    assert ret["run_id"].startswith("retrieval-")
    overall = read_json(tmp_path / "g/rag_overall.json")
    assert overall["scorer"] == "token_f1"

    assert run("judge", "--qa", DEMO / "qa.jsonl", "--answers", tmp_path / "g/answers.jsonl",
               "--endpoint", mock_server.url, "--out", tmp_path / "j") == 0
    verdicts = [json.loads(x) for x in (tmp_path / "j/verdicts.jsonl").read_text().splitlines()]
    assert {v["qa_id"] for v in verdicts} == {"q1", "q2", "q3", "q4", "q5", "q6"}
    assert all(1 <= v["score"] <= 5 for v in verdicts)

    assert run("report", tmp_path / "g/rag_overall.json", tmp_path / "j/judge.json", "--out", tmp_path / "rep") == 0
    rep = read_json(tmp_path / "rep/report.json")
    assert rep["n_runs"] == 2 and rep["mode"] == "overall"
    assert (tmp_path / "rep/report.csv").read_text().splitlines()[0] == "TXT,TAB,FOR,CHA,RO,ALL"


def test_visual_rag_and_maxsim(tmp_path, mock_server):
    _text_stages(tmp_path, mock_server.url)
    q = tmp_path / "q.jsonl"
    d = tmp_path / "d.jsonl"
    q.write_text("".join(json.dumps({"unit_id": f"q{i}", "vectors": [[1.0, 0.0]]}) + "\n" for i in range(1, 7)))
    d.write_text(json.dumps({"unit_id": "p1__1", "vectors": [[1.0, 0.0]]}) + "\n"
                 + json.dumps({"unit_id": "p2__1", "vectors": [[0.0, 1.0]]}) + "\n")
    assert run("retrieve", "--qa", DEMO / "qa.jsonl", "--mode", "maxsim", "--query-embeddings", q,
               "--doc-embeddings", d, "--top-k", 1, "--out", tmp_path / "m") == 0
    rec = json.loads((tmp_path / "m/retrieval.jsonl").read_text().splitlines()[0])
    assert rec["ranked"] == [{"unit_id": "p1__1", "score": 1.0}]

    assert run("rag", "--qa", DEMO / "qa.jsonl", "--retrieval", tmp_path / "m/retrieval.jsonl",
               "--modes", "overall", "--visual", "--manifest", DEMO / "manifest.json",
               "--chunks", tmp_path / "c/chunks.jsonl", "--endpoint", mock_server.url, "--out", tmp_path / "vr") == 0
    answers = [json.loads(x) for x in (tmp_path / "vr/answers.jsonl").read_text().splitlines()]
    assert "4.2 terawatt" in answers[0]["answer"]
    sent = mock_server.state.requests[-1]["messages"][1]["content"]
    assert sent[0]["type"] == "image_url"


def test_rag_reports_missing_stage_output(tmp_path, mock_server):
    _text_stages(tmp_path, mock_server.url)
    assert run("rag", "--qa", DEMO / "qa.jsonl", "--retrieval", tmp_path / "r/retrieval.jsonl",
               "--modes", "retrieval", "--out", tmp_path / "x") == 1
