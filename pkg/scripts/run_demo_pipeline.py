"""Run chunk -> convert -> index -> retrieve -> rag on the demo corpus against the mock server.

Nothing leaves the machine: the mock plays OCR model, answer model and judge.
"""

import argparse
import sys
from pathlib import Path

from semchunk.cli import main
from semchunk.demo import load_texts_by_color
from semchunk.mock_server import MockChatServer

DEMO = Path(__file__).resolve().parent.parent / "tests/fixtures/demo_corpus"


def stage(*argv) -> None:
    argv = [str(a) for a in argv]
    print(f"$ semchunk {' '.join(argv)}")
    rc = main(argv)
    if rc != 0:
        sys.exit(rc)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--corpus", type=Path, default=DEMO)
    ap.add_argument("--out", type=Path, default=Path("demo_run"))
    ap.add_argument("--jobs", type=int, default=4)
    args = ap.parse_args()
    c, o = args.corpus, args.out

    with MockChatServer(load_texts_by_color(c / "texts.json")) as srv:
        url = srv.url
        stage("sweep", "--annotations", c / "annotations.json", "--detections", c / "detections.jsonl", "--out", o / "sweep")
        stage("chunk", "--manifest", c / "manifest.json", "--detections", c / "detections.jsonl", "--out", o / "chunk")
        stage("convert", "--chunks", o / "chunk/chunks.jsonl", "--manifest", c / "manifest.json",
              "--endpoint", url, "--cache-dir", o / "cache", "--jobs", args.jobs, "--out", o / "convert")
        stage("index", "--texts", o / "convert/page_texts.jsonl", "--out", o / "index")
        stage("retrieve", "--qa", c / "qa.jsonl", "--index", o / "index/index.json", "--top-k", 2, "--out", o / "retrieve")
        stage("rag", "--qa", c / "qa.jsonl", "--retrieval", o / "retrieve/retrieval.jsonl", "--index", o / "index/index.json",
              "--page-texts", o / "convert/page_texts.jsonl", "--endpoint", url, "--judge", "--jobs", args.jobs,
              "--out", o / "rag")
    print(f"reports in {o / 'rag'}")
