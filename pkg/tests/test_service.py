"""Service-level tests through the ASGI app (request/response contracts)."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from lokiattn.service import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(), raise_server_exceptions=False)


def gen_keys(client, tmp_path, name="keys.lkd", seq=96, dim=8, rank=2, **kw):
    path = str(tmp_path / name)
    payload = {"out": path, "seq": seq, "dim": dim, "rank": rank, "noise": 0.001, "seed": 5}
    payload.update(kw)
    r = client.post("/v1/gen", json=payload)
    assert r.status_code == 200, r.text
    return path


def test_health(client):
    r = client.get("/v1/health")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok"
    assert body["threads"] >= 1


def test_gen_validation_maps_to_422(client, tmp_path):
    r = client.post("/v1/gen", json={"out": str(tmp_path / "x.lkd"), "seq": 0, "dim": 4, "rank": 1})
    assert r.status_code == 422


def test_gen_domain_error_maps_to_400_usage(client, tmp_path):
    r = client.post(
        "/v1/gen", json={"out": str(tmp_path / "x.lkd"), "seq": 8, "dim": 4, "rank": 9}
    )
    assert r.status_code == 400
    assert r.json()["error"]["kind"] == "usage"


def test_missing_file_maps_to_400(client, tmp_path):
    r = client.post(
        "/v1/rank",
        json={"keys": [str(tmp_path / "absent.lkd")], "v": [90], "out": str(tmp_path / "r.tsv")},
    )
    assert r.status_code == 400


def test_corrupt_file_maps_to_409_data(client, tmp_path):
    bad = tmp_path / "bad.lkd"
    bad.write_bytes(b"XKD1" + b"\x00" * 40)
    r = client.post(
        "/v1/rank", json={"keys": [str(bad)], "v": [90], "out": str(tmp_path / "r.tsv")}
    )
    assert r.status_code == 409
    assert r.json()["error"]["kind"] == "data"


def test_calibrate_then_rank_flow(client, tmp_path):
    keys = gen_keys(client, tmp_path)
    r = client.post("/v1/calibrate", json={"keys": [keys], "out": str(tmp_path / "proj")})
    assert r.status_code == 200
    proj = r.json()["projections"][0]
    assert proj["rank90"] == 2
    assert proj["path"].endswith("L0_H0_post.lkp")

    r = client.post(
        "/v1/rank", json={"keys": [keys], "v": [90, 99], "out": str(tmp_path / "rank.tsv")}
    )
    assert r.status_code == 200
    assert r.json()["model_averages"]["post@90"] == 2.0
    text = open(tmp_path / "rank.tsv").read()
    assert text.startswith("layer\thead\tstage\tv\trank\n")


def test_run_requires_method_specific_params(client, tmp_path):
    keys = gen_keys(client, tmp_path, "k.lkd")
    values = gen_keys(client, tmp_path, "v.lkd", rank=8)
    queries = gen_keys(client, tmp_path, "q.lkd", seq=3, rank=8)
    base = {"keys": keys, "values": values, "queries": queries, "out": str(tmp_path / "o.tsv")}
    r = client.post("/v1/run", json=dict(base, method="loki", kf=0.5, df=0.5))
    assert r.status_code == 400  # missing proj
    r = client.post("/v1/run", json=dict(base, method="exact-topk"))
    assert r.status_code == 400  # missing kf
    r = client.post("/v1/run", json=dict(base, method="vanilla"))
    assert r.status_code == 200
    assert r.json()["n_queries"] == 3


def test_run_loki_writes_outputs_and_indices(client, tmp_path):
    keys = gen_keys(client, tmp_path, "k.lkd")
    values = gen_keys(client, tmp_path, "v.lkd", rank=8)
    queries = gen_keys(client, tmp_path, "q.lkd", seq=4, rank=8)
    r = client.post("/v1/calibrate", json={"keys": [keys], "out": str(tmp_path / "proj")})
    proj = r.json()["projections"][0]["path"]
    r = client.post(
        "/v1/run",
        json={
            "keys": keys, "values": values, "queries": queries, "proj": proj,
            "method": "loki", "kf": 0.25, "df": 0.5, "out": str(tmp_path / "out.tsv"),
        },
    )
    assert r.status_code == 200, r.text
    body = r.json()
    assert body["resolved_k"] == 24 and body["resolved_d"] == 4
    out = np.loadtxt(tmp_path / "out.tsv", skiprows=1)
    assert out.shape == (4, 9)  # query index + 8 output dims
    idx_lines = open(body["indices_path"]).read().strip().split("\n")
    assert idx_lines[0] == "query\tindices"
    assert len(idx_lines) == 5
    assert (tmp_path / "out.tsv.manifest.json").exists()


def test_h2o_needs_one_query_per_token(client, tmp_path):
    keys = gen_keys(client, tmp_path, "k.lkd", seq=16)
    values = gen_keys(client, tmp_path, "v.lkd", seq=16, rank=8)
    queries = gen_keys(client, tmp_path, "q.lkd", seq=3, rank=8)
    r = client.post(
        "/v1/run",
        json={
            "keys": keys, "values": values, "queries": queries,
            "method": "h2o", "kf": 0.5, "out": str(tmp_path / "h.tsv"),
        },
    )
    assert r.status_code == 400


def test_agree_endpoint(client, tmp_path):
    keys = gen_keys(client, tmp_path, "k.lkd", seq=64, dim=8, rank=2)
    queries = gen_keys(client, tmp_path, "q.lkd", seq=6, dim=8, rank=8)
    r = client.post("/v1/calibrate", json={"keys": [keys], "out": str(tmp_path / "proj")})
    proj = r.json()["projections"][0]["path"]
    r = client.post(
        "/v1/agree",
        json={
            "keys": keys, "queries": queries, "proj": proj,
            "kf_grid": [0.25], "df_grid": [0.25, 1.0], "out": str(tmp_path / "a.tsv"),
        },
    )
    assert r.status_code == 200
    cells = r.json()["cells"]
    assert len(cells) == 2
    full = [c for c in cells if c["d_f"] == 1.0][0]
    assert full["mean_jaccard"] == 1.0


def test_bench_endpoint_structure(client, tmp_path):
    r = client.post(
        "/v1/bench",
        json={
            "method": "both", "seq_list": [128, 256], "dim": 16,
            "kf": 0.5, "df": 0.5, "trials": 3, "warmup": 1,
            "out": str(tmp_path / "bench"),
        },
    )
    assert r.status_code == 200
    body = r.json()
    assert len(body["totals"]) == 4
    assert open(body["bench_path"]).readline().startswith("method\t")
