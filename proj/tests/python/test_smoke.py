import json
import math

import numpy as np
import pytest

import hetgraph


def topic_texts(n, seed=0):
    rng = np.random.default_rng(seed)
    texts, labels = [], []
    for i in range(n):
        t = i % 2
        stem = "beta" if t else "alpha"
        texts.append(" ".join(f"{stem}{rng.integers(8)}" for _ in range(12)))
        labels.append(t)
    return texts, labels


def test_tokenize():
    assert hetgraph.tokenize("The Cat, the HAT!") == ["cat", "hat"]
    assert hetgraph.tokenize("The Cat", remove_stopwords=False) == ["the", "cat"]


def test_metrics_reported_counts():
    m = hetgraph.metrics(tp=27, fp=18, fn=159, tn=665)
    assert abs(m["precision"] - 0.7627) < 5e-4
    assert abs(m["recall"] - 0.7963) < 5e-4
    assert abs(m["f1"] - 0.7437) < 5e-4
    assert abs(m["accuracy"] - 0.7963) < 5e-4


def test_ttest():
    r = hetgraph.paired_ttest([1, 0, 1, 0, 1], [0] * 5, comparisons=3)
    assert r["t"] == pytest.approx(2.4495, abs=1e-4)
    assert r["p"] == pytest.approx(0.0705, abs=1e-4)
    assert r["p_corrected"] == pytest.approx(min(1.0, 3 * r["p"]))


def test_graph_structure():
    g = hetgraph.build_graph(["a b c", "b c d", "d e"], window_size=2)
    n = g["n_doc"] + g["n_word"]
    assert g["adjacency"]["shape"] == (n, n)
    dense = np.zeros((n, n))
    dense[g["adjacency"]["rows"], g["adjacency"]["cols"]] = g["adjacency"]["values"]
    assert np.allclose(dense, dense.T)
    assert np.all(np.diag(dense) == 1.0)


def test_prompts_and_parsing():
    p = hetgraph.build_zero_shot("x")
    assert p.startswith("Task: Classify the following input text")
    assert p.endswith("Input Text:\nx\n\nOutput:")
    few = hetgraph.build_few_shot([("a", 1), ("b", 0)], "x")
    assert few.count("Output:\n") == 2
    assert hetgraph.parse_label("No Minority Stress") == 0
    assert hetgraph.parse_label(" minority stress\n") == 1
    assert hetgraph.parse_label("unsure") is None
    pool = [(f"p{i}", f"pos {i}", 1) for i in range(5)] + [(f"n{i}", f"neg {i}", 0) for i in range(5)]
    shots = hetgraph.compose_shots(pool, 3, seed=1)
    assert sorted(s[2] for s in shots) == [0, 1, 1]
    with pytest.raises(hetgraph.UsageError):
        hetgraph.compose_shots(pool, 4)


def test_train_gcn_learns_topics():
    texts, labels = topic_texts(60)
    split = hetgraph.stratified_split(labels, seed=0)
    assert split.count("train") == 42
    r = hetgraph.train_gcn(texts, labels, split, lambda_=1.0, epochs=40, hidden=16, learning_rate=1e-2)
    assert len(r["history"]) == 40
    probs = np.asarray(r["probabilities"])
    assert probs.shape == (60, 2)
    assert np.allclose(probs.sum(axis=1), 1.0)
    assert r["test"]["f1"] >= 0.9
    again = hetgraph.train_gcn(texts, labels, split, lambda_=1.0, epochs=40, hidden=16, learning_rate=1e-2)
    assert np.array_equal(probs, np.asarray(again["probabilities"]))


def test_train_gcn_rejects_bad_lambda():
    texts, labels = topic_texts(20)
    split = hetgraph.stratified_split(labels)
    with pytest.raises(hetgraph.UsageError):
        hetgraph.train_gcn(texts, labels, split, lambda_=1.5, epochs=1)


def test_cli_eval(tmp_path):
    counts = tmp_path / "counts.json"
    counts.write_text(json.dumps({"tp": 27, "fp": 18, "fn": 159, "tn": 665}))
    code, out, err = hetgraph.run_cli(["eval", "--counts", str(counts)])
    assert code == 0, err
    assert math.isclose(json.loads(out)["metrics"]["f1"], 0.74368, abs_tol=1e-4)
    code, _, _ = hetgraph.run_cli(["no-such-command"])
    assert code == 1
