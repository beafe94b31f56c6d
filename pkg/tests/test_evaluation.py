import numpy as np
import pytest

from phaseid.evaluation import (ALL_MODELS, EvaluationError, Model, ModelResult, ZoneTask, accuracy,
                                confidence_factor, estimate_zone, margins, overall_accuracy, rank_models,
                                run_monte_carlo, self_confidence, sensitivity_std)


def test_accuracy():
    assert accuracy(np.array([0, 1, 2, 0]), np.array([0, 1, 1, 0])) == 75.0
    with pytest.raises(EvaluationError, match="roster"):
        accuracy(np.array([0, 1]), np.array([0, 1, 2]))
    with pytest.raises(EvaluationError):
        accuracy(np.array([]), np.array([]))


def test_unanimous_correct_references_score_100():
    truth = np.array([0, 2, 1, 1])
    w = np.eye(3)[truth]
    assert accuracy(np.argmax(w, 1), truth) == 100.0
    assert confidence_factor(w, truth) == 1.0


def test_confidence_factor_and_s2_range():
    w = np.array([[0.6, 0.3, 0.1], [0.2, 0.5, 0.3]])
    truth = np.array([0, 1])
    assert margins(w, truth).tolist() == pytest.approx([0.3, 0.2])
    assert confidence_factor(w, truth) == pytest.approx(0.2)
    assert confidence_factor(w * 4, truth, "S2") == pytest.approx(0.2 * 4 / (0.6 * 4 - 0.1 * 4))
    # a wrongly estimated row gives a negative margin
    assert confidence_factor(w, np.array([1, 1])) == pytest.approx(-0.3)


def test_true_mapping_upper_bounds_corrupted():
    w = np.array([[0.8, 0.1, 0.1], [0.1, 0.7, 0.2], [0.05, 0.15, 0.8]])
    truth = np.argmax(w, 1)
    corrupted = truth.copy()
    corrupted[1] = 2
    assert confidence_factor(w, truth) > confidence_factor(w, corrupted)
    assert self_confidence(w) == confidence_factor(w, truth)


def test_sensitivity():
    runs = [np.full((2, 3), 0.2), np.full((2, 3), 0.4)]
    assert sensitivity_std(runs) == pytest.approx(0.1)
    perm = [runs[1], runs[0]]
    assert sensitivity_std(perm) == sensitivity_std(runs)
    with pytest.raises(EvaluationError):
        sensitivity_std(runs[:1])


def test_ranking_lexicographic_with_shared_ranks():
    reps = [{"A": 100, "F": 0.1, "D": 0.02, "n": "a"}, {"A": 100, "F": 0.2, "D": 0.05, "n": "b"},
            {"A": 90, "F": 0.9, "D": 0.0, "n": "c"}, {"A": 100, "F": 0.1, "D": 0.02, "n": "d"}]
    ranked = [(r, x["n"]) for r, x in rank_models(reps)]
    assert ranked == [(1, "b"), (2, "a"), (2, "d"), (4, "c")]


def test_model_roster():
    assert len(ALL_MODELS) == 13
    assert Model("J2", "S4").name == "S4-J2"
    assert [m for m in ALL_MODELS if m.scheme == "S0"] == [Model("J1", "S0")]


def zone_task(seed=0, zone=1, T=120, L=9):
    rng = np.random.default_rng(seed)
    ref = 1 + np.cumsum(rng.normal(scale=0.01, size=(T, 3)), axis=0)
    truth = rng.integers(0, 3, L)
    cons = ref[:, truth] * 0.99
    refs = tuple(ref + rng.normal(scale=1e-4, size=ref.shape) for _ in range(3))
    return ZoneTask(zone, cons, truth, refs, (10, 11, 12), beta=0.004, naive_reference=ref, naive_reference_id=10)


def test_estimate_zone_noise_free_perfect():
    task = zone_task()
    out = estimate_zone(task, ALL_MODELS, task.consumers, list(task.references), task.naive_reference)
    for model, est in out.items():
        assert est is not None, model
        assert accuracy(est, task.truth) == 100.0, model


def test_monte_carlo_deterministic_and_aggregates():
    tasks = [zone_task(1, 1), zone_task(2, 2)]
    models = [Model("J1", "S3"), Model("J1", "S0")]
    a = run_monte_carlo(tasks, models, 0.01, 0.01, 6, seed=5, threads=1)
    b = run_monte_carlo(tasks, models, 0.01, 0.01, 6, seed=5, threads=3)
    for ra, rb in zip(a, b):
        assert ra.accuracy == rb.accuracy and ra.confidence == rb.confidence
        assert all(np.array_equal(x, y) for x, y in zip(ra.weights, rb.weights))
    r = a[0]
    assert r.summary()["A"] == pytest.approx(sum(r.accuracy) / len(r.accuracy), abs=1e-12)
    assert r.summary()["Q"] == 6
    ov = overall_accuracy(a, models[0])
    assert min(x.mean_accuracy for x in a if x.model == models[0]) <= ov <= 100


def test_model_result_single_run_sensitivity_zero():
    r = ModelResult(1, Model("J1", "S3"), [100.0], [0.5], [np.ones((2, 3))])
    assert r.sensitivity == 0.0
    assert np.isnan(ModelResult(1, Model("J1", "S3")).mean_accuracy)
