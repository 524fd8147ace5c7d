import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from saqlib.server import create_app


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


@pytest.fixture(scope="module")
def workspace(client, tmp_path_factory):
    """Generated dataset + built index shared across endpoint tests."""
    root = tmp_path_factory.mktemp("svc")
    gen = client.post("/datasets/generate", json={
        "kind": "clustered", "n": 1500, "dim": 24, "seed": 11,
        "blobs": 8, "n_queries": 10, "out": str(root / "ds"),
    })
    assert gen.status_code == 200, gen.text
    body = gen.json()
    build = client.post("/index/build", json={
        "data": body["data_path"], "out": str(root / "idx"),
        "quantizer": "saq", "bits": 4.0, "nlist": 8, "seed": 1, "granularity": 8,
    })
    assert build.status_code == 200, build.text
    return {"root": root, "data": body["data_path"], "queries": body["query_path"],
            "index": build.json()}


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"


def test_generate_writes_files(workspace):
    assert workspace["queries"].endswith(".queries.fvecs")


def test_ground_truth_endpoint(client, workspace):
    res = client.post("/datasets/ground-truth", json={
        "data": workspace["data"], "queries": workspace["queries"],
        "k": 5, "out_prefix": str(workspace["root"] / "gt"),
    })
    assert res.status_code == 200
    body = res.json()
    from saqlib.data import read_vecs

    ids = read_vecs(body["ids_path"], "ivecs")
    assert ids.shape == (10, 5)


def test_train_endpoint(client, workspace):
    res = client.post("/transforms/fit", json={
        "data": workspace["data"], "kind": "pca", "seed": 3,
        "out": str(workspace["root"] / "pca.vqtm"),
    })
    assert res.status_code == 200
    body = res.json()
    assert body["dim"] == 24
    assert body["leading_variances"] == sorted(body["leading_variances"], reverse=True)


def test_quantize_endpoint(client, workspace):
    res = client.post("/quantize", json={
        "data": workspace["data"], "method": "saq", "bits": 3.0,
        "out": str(workspace["root"] / "flat"), "seed": 2, "granularity": 8,
    })
    assert res.status_code == 200
    body = res.json()
    assert body["count"] == 1500
    assert body["code_bytes"] > 0
    assert sum(length * bits for length, bits in body["plan_segments"]) <= 3 * 24 + 24


def test_build_reports_plan(workspace):
    idx = workspace["index"]
    assert idx["quantizer"] == "saq"
    assert idx["count"] == 1500
    assert idx["plan_segments"] is not None


def test_search_inline_and_file(client, workspace):
    from saqlib.data import read_vecs

    queries = read_vecs(workspace["queries"], "fvecs")
    inline = client.post("/index/search", json={
        "index": workspace["index"]["out"], "query": queries[0].tolist(),
        "k": 5, "nprobe": 8,
    })
    assert inline.status_code == 200
    by_file = client.post("/index/search", json={
        "index": workspace["index"]["out"], "query_file": workspace["queries"],
        "query_row": 0, "k": 5, "nprobe": 8,
    })
    assert by_file.status_code == 200
    assert inline.json()["ids"] == by_file.json()["ids"]
    assert len(inline.json()["ids"]) == 5
    assert inline.json()["bits_accessed"] > 0


def test_search_requires_query(client, workspace):
    res = client.post("/index/search", json={"index": workspace["index"]["out"], "k": 3, "nprobe": 2})
    assert res.status_code == 400
    assert res.json()["error_kind"] == "argument"


def test_eval_error_endpoint(client, workspace):
    res = client.post("/eval/error", json={
        "index": workspace["index"]["out"], "queries": workspace["queries"],
        "k": 10, "nprobe": 8,
    })
    assert res.status_code == 200
    body = res.json()
    assert body["method"] == "saq"
    assert 0.0 <= body["recall_at_k"] <= 1.0
    assert body["avg_rel_err"] <= body["max_rel_err"]
    assert body["avg_distance_ratio"] >= 1.0 - 1e-9


def test_bench_qps_endpoint(client, workspace):
    res = client.post("/eval/qps", json={
        "index": workspace["index"]["out"], "queries": workspace["queries"],
        "k": 10, "nprobes": [2, 8], "repeats": 1,
    })
    assert res.status_code == 200
    rows = res.json()["rows"]
    assert [r["nprobe"] for r in rows] == [2, 8]
    assert all(r["qps"] > 0 for r in rows)
    assert rows[1]["recall_at_k"] >= rows[0]["recall_at_k"] - 1e-9


def test_pipeline_endpoint_and_config_errors(client, tmp_path):
    config = """
    seed = 5
    k = 5
    nprobe = 4
    nlist = 4
    queries = 6
    [dataset]
    kind = gaussian
    n = 300
    dim = 8
    [method]
    name = lvq
    bits = 8
    """
    res = client.post("/pipeline/run", json={"config_text": config, "out": str(tmp_path / "run")})
    assert res.status_code == 200
    assert res.json()["csv_text"].splitlines()[0].startswith("method,B_avg")

    bad = client.post("/pipeline/run", json={"config_text": "wat = 1\n"})
    assert bad.status_code == 400
    assert bad.json()["error_kind"] == "config"


def test_missing_file_is_data_error(client, tmp_path):
    res = client.post("/datasets/ground-truth", json={
        "data": str(tmp_path / "nope.fvecs"), "queries": str(tmp_path / "nope.fvecs"),
        "k": 5, "out_prefix": str(tmp_path / "gt"),
    })
    assert res.status_code == 400
    assert res.json()["error_kind"] == "data"


class TestCli:
    def test_gen_build_search_round_trip(self, tmp_path, capsys):
        from saqlib.cli import main

        assert main([
            "gen", "--kind", "gaussian", "--n", "400", "--dim", "12",
            "--seed", "4", "--queries", "5", "--out", str(tmp_path / "ds"),
        ]) == 0
        gen_body = json.loads(capsys.readouterr().out)
        assert main([
            "build-ivf", "--data", gen_body["data_path"], "--quantizer", "caq",
            "--bits", "6", "--nlist", "4", "--out", str(tmp_path / "idx"),
        ]) == 0
        capsys.readouterr()
        assert main([
            "search", "--index", str(tmp_path / "idx"),
            "--query-file", gen_body["query_path"], "--k", "3", "--nprobe", "4",
        ]) == 0
        res = json.loads(capsys.readouterr().out)
        assert len(res["ids"]) == 3

    def test_pipeline_config_error_exit_code(self, tmp_path, capsys):
        from saqlib.cli import main

        cfg = tmp_path / "bad.cfg"
        cfg.write_text("definitely_not_a_key = 1\n")
        assert main(["pipeline", "--config", str(cfg)]) == 2

    def test_missing_data_exit_code(self, tmp_path, capsys):
        from saqlib.cli import main

        assert main([
            "gt", "--data", str(tmp_path / "missing.fvecs"),
            "--queries", str(tmp_path / "missing.fvecs"),
            "--out", str(tmp_path / "gt"),
        ]) == 3

    def test_eval_error_cli(self, tmp_path, capsys):
        from saqlib.cli import main

        assert main([
            "gen", "--kind", "skewed", "--n", "500", "--dim", "16",
            "--seed", "9", "--queries", "8", "--out", str(tmp_path / "ds"),
        ]) == 0
        gen_body = json.loads(capsys.readouterr().out)
        assert main([
            "build-ivf", "--data", gen_body["data_path"], "--quantizer", "saq",
            "--bits", "3", "--nlist", "4", "--granularity", "8",
            "--out", str(tmp_path / "idx"),
        ]) == 0
        capsys.readouterr()
        assert main([
            "eval-error", "--index", str(tmp_path / "idx"),
            "--queries", gen_body["query_path"], "--k", "5", "--nprobe", "4",
        ]) == 0
        body = json.loads(capsys.readouterr().out)
        assert body["method"] == "saq"
