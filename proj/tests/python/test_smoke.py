"""Smoke tests for the python bindings; the heavy checks live in the C++ suites."""

import math

import pytest

import pisentry


def test_version_and_feature_names():
    assert pisentry.__version__
    assert len(pisentry.FEATURE_NAMES) == 17
    assert pisentry.FEATURE_NAMES[8] == "lvrd"


def test_value_entropy():
    assert pisentry.value_entropy({"v": 5}) == 0.0
    assert pisentry.value_entropy({"a": 1, "b": 1}) == 1.0
    assert pisentry.value_entropy({"x1": 2, "x2": 1}) == pytest.approx(0.9183, abs=1e-4)
    with pytest.raises(ValueError):
        pisentry.value_entropy({})


def test_parse_http_request():
    raw = (
        "GET /cgi-bin/report?imei=HJS5T19626000575&startDate=20200526&endDate=20200527"
        " HTTP/1.1\r\nHost: short.weixin.qq.com\r\n\r\n"
    )
    parsed = pisentry.parse_http_request(raw)
    assert parsed["domain"] == "short.weixin.qq.com"
    assert parsed["kvs"] == [
        ("imei", "HJS5T19626000575", "query"),
        ("startDate", "20200526", "query"),
        ("endDate", "20200527", "query"),
    ]


def test_records_and_features():
    records = [
        pisentry.TrafficRecord("u1", "A", 1, "d1", "/p", [("k", "x1", "query")]),
        pisentry.TrafficRecord("u1", "A", 2, "d1", "/p", [("k", "x1", "query")]),
        pisentry.TrafficRecord("u1", "A", 3, "d1", "/p", [("k", "x2", "query")]),
        pisentry.TrafficRecord("u2", "A", 4, "d1", "/p", [("k", "x1", "query")]),
        pisentry.TrafficRecord("u1", "B", 5, "d1", "/p", [("q", "x1", "query")]),
        pisentry.TrafficRecord("u2", "B", 6, "d2", "/p", [("q", "x3", "query")]),
    ]
    table = pisentry.build_table(records)
    table.prune()
    assert table.pair_count == 2

    matrix = pisentry.feature_matrix(table)
    features = dict(zip(pisentry.FEATURE_NAMES, matrix[("A", "k")]))
    assert features["avg_distinct_per_user"] == pytest.approx(1.5)
    assert features["lvrd"] == pytest.approx(0.5)
    assert features["num_users"] == 2
    assert features["weighted_gvrd"] == pytest.approx(0.75)
    assert features["weighted_nurd"] == 0.0


def test_rules_and_propagation():
    records = []
    for ts, (user, app, key, value) in enumerate(
        [
            ("u1", "a", "imei", "HJS5T19626000575"),
            ("u1", "a", "imei", "HJS5T19626000575"),
            ("u1", "b", "zz", "HJS5T19626000575"),
            ("u1", "b", "zz", "HJS5T19626000575"),
        ]
    ):
        records.append(
            pisentry.TrafficRecord(user, app, ts, "d1", "/p", [(key, value, "query")])
        )
    table = pisentry.build_table(records)
    table.prune()
    matches = pisentry.apply_rules(table)
    assert ("a", "imei", "Device Identifier", "rule_keyword") in matches
    reached = pisentry.propagate(table, [("a", "imei")])
    assert ("b", "zz") in reached


def test_pipeline_on_a_tiny_corpus(tmp_path):
    stats = pisentry.generate_corpus(str(tmp_path), seed=3, users=10, apps=6,
                                     min_requests=5, max_requests=9)
    assert stats["records"] > 0

    records, read_stats = pisentry.read_corpus(stats["corpus"])
    assert read_stats["errors"] == 0
    assert len(records) == stats["records"]

    table = pisentry.build_table(records)
    table.prune()
    samples = pisentry.label_dataset(table, ground_truth=stats["ground_truth"], seed=3)
    labels = {s["label"] for s in samples}
    assert labels == {"positive", "negative"}

    train, test = pisentry.stratified_split(samples, ratio=0.8, seed=3)
    model = pisentry.train_forest(train, n_trees=20, seed=3)
    report = pisentry.evaluate(model, test, threshold=0.75)
    assert report["total"] == len(test)
    assert 0.0 <= report["coverage"] <= 1.0

    # every probability is a vote fraction
    for sample in test:
        prob, label = model.predict(sample["features"], threshold=0.75)
        assert 0.0 <= prob <= 1.0
        assert math.isclose(prob * 20, round(prob * 20), abs_tol=1e-9)
        assert label in {"positive", "negative", "rejected"}

    # the ground-truth blacklist reproduces the planted leak count
    truth = pisentry.load_ground_truth(stats["ground_truth"])
    entries = [(app, key) for app, key, label, kind in truth if label == "positive"]
    events, summary = pisentry.match_blacklist(entries, records)
    assert summary["total"] == stats["planted_leaks"]
    assert len(events) == stats["planted_leaks"]


def test_model_round_trip(tmp_path):
    samples = []
    for i in range(10):
        pos = [0.0] * 17
        pos[8] = 1.0
        samples.append(
            {"app": "a", "key": f"p{i}", "label": "positive", "features": pos}
        )
        samples.append(
            {"app": "a", "key": f"n{i}", "label": "negative", "features": [0.0] * 17}
        )
    model = pisentry.train_forest(samples, n_trees=20, seed=5)
    path = tmp_path / "model.json"
    model.save(str(path))
    back = pisentry.ForestModel.load(str(path))
    vec = [0.0] * 17
    vec[8] = 1.0
    assert back.predict(vec)[0] == model.predict(vec)[0]
    assert back.predict(vec)[1] == "positive"


def test_generation_is_deterministic(tmp_path):
    a = pisentry.generate_corpus(str(tmp_path / "a"), seed=11, users=6, apps=4,
                                 min_requests=3, max_requests=5)
    b = pisentry.generate_corpus(str(tmp_path / "b"), seed=11, users=6, apps=4,
                                 min_requests=3, max_requests=5)
    assert (tmp_path / "a/corpus.jsonl").read_bytes() == (tmp_path / "b/corpus.jsonl").read_bytes()
    assert a["planted_leaks"] == b["planted_leaks"]
