"""Smoke test for the stratum Python extension.

Build first:  maturin develop -m crates/python/Cargo.toml
Then run:     python python/smoke_test.py
"""

import math
import os
import tempfile

import stratum


def main():
    assert stratum.decide("sum", [0.6, 0.3, 0.7]) == (1, stratum.decide("avg", [0.6, 0.3, 0.7])[1])
    assert stratum.decide("maj", [0.9, 0.2, 0.4])[0] == 0
    try:
        stratum.decide("maj", [0.9, 0.2])
    except stratum.ConstraintError:
        pass
    else:
        raise AssertionError("even-K majority vote accepted")

    assert abs(stratum.inv_norm_cdf(0.9) - 1.2815515655446004) < 1e-9

    labels, matrix = stratum.generate([0.88, 0.90, 0.93, 0.88], 0.3, 3000, seed=7)
    assert len(matrix) == 3000 and matrix.model_names == ["M1", "M2", "M3", "M4"]

    combiner = stratum.Combiner.train(matrix, labels, epochs=30, seed=1)
    assert all(w >= 0 for w in combiner.weights)
    probs = combiner.predict(matrix)
    acc = sum((p >= 0.5) == bool(u) for p, u in zip(probs, labels.labels)) / len(labels)
    assert acc > 0.9, acc

    report = combiner.check_bound(matrix, labels)
    assert math.isclose(report["weight_sum"], sum(combiner.weights))

    published = stratum.Combiner(["M1", "M2"], [0.837207982, 0.92409282], 0.0)
    assert math.isclose(published.weight_sum, 1.761300802, abs_tol=1e-12)
    try:
        stratum.Combiner(["M1"], [-0.1], 0.0)
    except stratum.ConstraintError:
        pass
    else:
        raise AssertionError("negative weight accepted")

    best, best_acc, rows = stratum.theta_sweep(matrix, labels, "M3", ["M1", "M2", "M4"])
    assert len(rows) == 49 and 0.5 < best < 1
    out_labels, scores, fallback = stratum.hybrid_predict(matrix, "M3", ["M1", "M2", "M4"], best)
    assert len(out_labels) == len(scores) == len(fallback) == 3000

    scores, rule_labels = stratum.apply_rule("sum", matrix)
    assert len(scores) == 3000

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "w.json")
        combiner.save(path)
        again = stratum.Combiner.load(path)
        assert again.weights == combiner.weights and again.b == combiner.b
        for name in matrix.model_names:
            matrix.save_column(name, os.path.join(d, name + ".csv"))
        labels.save(os.path.join(d, "labels.csv"))
        loaded = stratum.Matrix.load(
            [os.path.join(d, n + ".csv") for n in matrix.model_names], matrix.model_names
        )
        assert loaded.column("M2") == matrix.column("M2")

    mean, stdev, accs = stratum.cross_validate(
        "nn", matrix, labels, matrix, labels, folds=3, repeats=2, epochs=5
    )
    assert len(accs) == 6 and stdev >= 0
    print("smoke test ok: nn accuracy %.4f, cv mean %.4f" % (acc, mean))


if __name__ == "__main__":
    main()
