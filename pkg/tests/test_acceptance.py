"""Acceptance suite: the end-to-end guarantees this package ships with.

Each test prints one PASS/FAIL line (visible under ``pytest -s``) and
asserts the same condition, so the suite doubles as a report:

  A1  all three posterior routes agree with each other and the oracle
  A2  the leave-one-out system is exactly triangular and reconstructs
  A3  the surrogate gradient matches central finite differences
  A4  EM never decreases its objective (plain and L2-regularized)
  A5  singleton bags reduce EM to plain supervised training
  A6  bag-level supervision comes close to the fully-supervised bound
  A7  similarity features rescue linearly inseparable data
  A8  the fast E-step scales linearly in bag size (quadratic forward),
      pruning saves the promised cost, sampling saves E-step time
  A9  metric fixtures are exact and fuzzed metrics stay in [0, 1]
  A10 every CLI artifact is byte-deterministic for a fixed seed
"""
import csv
import json
import time

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import random_bag_priors
from mimla.bags import Bag, Dataset, LabelSet
from mimla.bench import loglog_slope, run_bench
from mimla.cli import main as cli_main
from mimla.cv import cross_validate
from mimla.estep import EStepPlan
from mimla.metrics import (Predictions, dummy_baselines, evaluate,
                           kfold_split, predict_dataset)
from mimla.model import prior_matrix
from mimla.posterior import (forward_pass, posteriors_bruteforce,
                             posteriors_fast, posteriors_forward,
                             substitution_matrix)
from mimla.synth import SynthSpec, generate
from mimla.train import (TrainConfig, dp_cost_sum, em_train,
                         em_train_stochastic, fit_kernel, prune_bags,
                         surrogate_gradient, surrogate_value, train_sisl)


def _report(tag, ok, detail):
    print(f"{tag}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{tag}: {detail}"


def _unscaled(table):
    return np.asarray(table.values) * np.exp(table.log_scale)


def test_a1_posterior_routes_agree():
    rng = np.random.default_rng(101)
    worst_post, worst_ll = 0.0, 0.0
    t0 = time.perf_counter()
    for _ in range(1000):
        c = int(rng.integers(2, 7))
        card = int(rng.integers(1, min(3, c) + 1))
        n = int(rng.integers(card, 8))
        weights = rng.standard_normal((4, c))
        priors = prior_matrix(weights, rng.standard_normal((n, 3)))
        classes = np.sort(rng.choice(c, size=card, replace=False))
        ls = LabelSet.from_classes(classes)
        results = [route(priors, ls) for route in
                   (posteriors_forward, posteriors_fast,
                    posteriors_bruteforce)]
        for i in range(3):
            for j in range(i + 1, 3):
                worst_post = max(worst_post, float(np.abs(
                    results[i][1].values - results[j][1].values).max()))
                worst_ll = max(worst_ll, abs(results[i][2] - results[j][2])
                               / abs(results[j][2]))
    elapsed = time.perf_counter() - t0
    _report("A1 oracle-equivalence",
            worst_post <= 1e-9 and worst_ll <= 1e-9 and elapsed < 10.0,
            f"max|dpost|={worst_post:.2e}, max rel|dll|={worst_ll:.2e}, "
            f"{elapsed:.2f} s for 1000 bags")


def test_a2_leave_one_out_system_structure():
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(200):
        c = int(rng.integers(2, 7))
        card = int(rng.integers(1, min(4, c) + 1))
        n = int(rng.integers(card + 1, 9))
        priors, ls = random_bag_priors(rng, num_classes=c, card=card, size=n)
        i = int(rng.integers(n))
        system = substitution_matrix(priors[i], ls)
        dense = system.toarray()
        assert (np.triu(dense, k=1) == 0.0).all()
        u = _unscaled(forward_pass(priors, ls))
        v = _unscaled(forward_pass(np.delete(priors, i, axis=0), ls))
        worst = max(worst, float(np.abs(system.matvec(v) - u).max()))
    # The hand-derived system entries for label set {1,3,4} with priors
    # p(1)=0.1, p(3)=0.2, p(4)=0.4 (canonical order ranks 1..7).
    fixture = substitution_matrix(
        np.array([0.05, 0.1, 0.05, 0.2, 0.4, 0.2]),
        LabelSet.from_classes([1, 3, 4])).toarray()
    assert fixture[5, 1] == pytest.approx(0.4)
    assert fixture[6, 6] == pytest.approx(0.7)
    assert fixture[1, 5] == 0.0
    _report("A2 substitution-structure",
            worst <= 1e-10,
            f"200 draws lower-triangular, max|A v - u|={worst:.2e}, "
            "fixed entries exact")


def test_a3_gradient_matches_finite_differences():
    rng = np.random.default_rng(103)
    worst = 0.0
    h = 1e-5
    for draw in range(20):
        c = int(rng.integers(2, 5))
        d = int(rng.integers(1, 7))
        bags = []
        for b in range(int(rng.integers(1, 6))):
            card = int(rng.integers(1, min(2, c) + 1))
            classes = np.sort(rng.choice(c, size=card, replace=False))
            n = int(rng.integers(card, 5))
            bags.append(Bag(f"b{b}", rng.standard_normal((n, d)),
                            LabelSet.from_classes(classes)))
        ds = Dataset(c, d, bags)
        weights = 0.5 * rng.standard_normal((d + 1, c))
        l2 = 0.1 if draw % 2 else 0.0
        posteriors = EStepPlan(ds).run(weights).posteriors
        grad = surrogate_gradient(weights, posteriors, ds, l2)
        fd = np.zeros_like(weights)
        for idx in np.ndindex(*weights.shape):
            bump = np.zeros_like(weights)
            bump[idx] = h
            fd[idx] = (surrogate_value(weights + bump, posteriors, ds, l2)
                       - surrogate_value(weights - bump, posteriors, ds, l2)
                       ) / (2 * h)
        scale = max(1.0, float(np.abs(fd).max()))
        worst = max(worst, float(np.abs(grad - fd).max()) / scale)
    _report("A3 gradient-check", worst <= 1e-4,
            f"20 draws, max relative error {worst:.2e} at h={h:g}")


def test_a4_em_objective_is_monotone():
    ds = generate(SynthSpec(num_classes=4, feature_dim=5, num_bags=50,
                            instances_low=3, instances_high=6,
                            labels_high=2, seed=104))
    details = []
    ok = True
    for l2 in (0.0, 0.1):
        _, trace = em_train(ds, TrainConfig(em_iterations=50, l2=l2))
        ll = np.array(trace.log_likelihood + [trace.final_log_likelihood])
        drop = float(np.diff(ll).min())
        ok = ok and drop >= -1e-8
        details.append(f"l2={l2}: worst step {drop:+.2e}, "
                       f"final {ll[-1]:.3f}")
    _report("A4 gem-monotonicity", ok, "; ".join(details))


def test_a5_singleton_bags_reduce_to_supervised():
    rng = np.random.default_rng(105)
    n, c, d = 80, 3, 4
    labels = rng.integers(0, c, size=n)
    features = rng.standard_normal((n, d)) + 1.5 * np.eye(c, d)[labels]
    bags = [Bag(f"i{i:04d}", features[i:i + 1],
                LabelSet.from_classes([int(labels[i])])) for i in range(n)]
    cfg = TrainConfig(em_iterations=40)
    em_model, em_trace = em_train(Dataset(c, d, bags), cfg)
    sl_model, sl_trace = train_sisl(features, labels, c, cfg)
    w_gap = float(np.abs(em_model.weights - sl_model.weights).max())
    t_gap = max(
        float(np.abs(np.array(em_trace.surrogate)
                     - np.array(sl_trace.surrogate)).max()),
        float(np.abs(np.array(em_trace.log_likelihood)
                     - np.array(sl_trace.log_likelihood)).max()),
        abs(em_trace.final_log_likelihood - sl_trace.final_log_likelihood))
    _report("A5 supervised-reduction", w_gap <= 1e-6 and t_gap <= 1e-8,
            f"max|dw|={w_gap:.2e}, max trace gap={t_gap:.2e}")


def test_a6_annotation_quality_near_supervised_bound():
    t0 = time.perf_counter()
    ds = generate(SynthSpec(num_classes=8, feature_dim=10, num_bags=300,
                            instances_low=3, instances_high=8,
                            labels_low=1, labels_high=3,
                            separation=4.0, noise=1.0, seed=106))
    cfg = TrainConfig(em_iterations=50)
    mlr_acc, trans_acc, sisl_acc, dummy_acc = [], [], [], []
    for train_idx, test_idx in kfold_split(ds, 10, seed=0):
        train_ds, test_ds = ds.subset(train_idx), ds.subset(test_idx)
        model, _ = em_train(train_ds, cfg)
        ind = evaluate(predict_dataset(model, test_ds, "inductive"), test_ds)
        trans = evaluate(predict_dataset(model, test_ds, "transductive"),
                         test_ds)
        sisl_model, _ = train_sisl(
            train_ds.stacked_features(),
            np.concatenate([b.true_labels for b in train_ds.bags]),
            ds.num_classes, cfg)
        test_x = test_ds.stacked_features()
        test_y = np.concatenate([b.true_labels for b in test_ds.bags])
        sisl_acc.append(float(
            (sisl_model.scores(test_x).argmax(axis=1) == test_y).mean()))
        dummy_preds, _ = dummy_baselines(train_ds, test_ds)
        dummy = evaluate(dummy_preds, test_ds)
        mlr_acc.append(ind.instance_accuracy)
        trans_acc.append(trans.instance_accuracy)
        dummy_acc.append(dummy.instance_accuracy)
    mlr = float(np.mean(mlr_acc))
    trans = float(np.mean(trans_acc))
    sisl = float(np.mean(sisl_acc))
    dummy = float(np.mean(dummy_acc))
    elapsed = time.perf_counter() - t0
    ok = (mlr >= sisl - 0.05 and trans >= mlr - 0.01
          and dummy <= mlr - 0.30 and elapsed < 120.0)
    _report("A6 synthetic-quality", ok,
            f"bag-supervised {mlr:.3f} vs fully-supervised {sisl:.3f}, "
            f"transductive {trans:.3f}, dummy {dummy:.3f}, "
            f"{elapsed:.1f} s")


def test_a7_kernel_rescues_the_ring():
    ds = generate(SynthSpec(num_classes=2, feature_dim=2, num_bags=120,
                            instances_low=2, instances_high=6,
                            labels_low=1, labels_high=2, geometry="ring",
                            separation=1.0, noise=0.05, seed=107))
    train_ds = ds.subset(range(80))
    test_ds = ds.subset(range(80, 120))
    cfg = TrainConfig(em_iterations=40)

    def accuracy(model):
        report = evaluate(predict_dataset(model, test_ds, "inductive"),
                          test_ds)
        return report.instance_accuracy

    linear, _ = em_train(train_ds, cfg)
    kernel_full, _ = fit_kernel(train_ds, cfg, scale=1.0)
    kernel_half, _ = fit_kernel(train_ds, cfg, scale=1.0,
                                dictionary_fraction=0.5)
    lin, full, half = accuracy(linear), accuracy(kernel_full), \
        accuracy(kernel_half)
    ok = full >= lin + 0.10 and abs(full - half) <= 0.03
    _report("A7 kernel-benefit", ok,
            f"linear {lin:.3f}, kernel {full:.3f}, "
            f"half dictionary {half:.3f}")


def test_a8i_estep_scaling_slopes():
    nb = (8, 16, 32, 64, 128)
    fast_rows = run_bench(engines=("fast",), nb_values=nb, cards=(3,),
                          bags=64, repeats=5, seed=108)
    forward_rows = run_bench(engines=("forward",), nb_values=nb, cards=(3,),
                             bags=24, repeats=3, seed=108)
    fast_slope = loglog_slope(nb, [r.seconds for r in fast_rows])
    forward_slope = loglog_slope(nb, [r.seconds for r in forward_rows])
    ok = 0.8 <= fast_slope <= 1.3 and 1.7 <= forward_slope <= 2.3
    _report("A8i scaling-slopes", ok,
            f"fast slope {fast_slope:.2f} (want [0.8, 1.3]), "
            f"forward slope {forward_slope:.2f} (want [1.7, 2.3])")


def test_a8ii_pruning_cuts_cost_not_accuracy():
    ds = generate(SynthSpec(num_classes=8, feature_dim=8, num_bags=150,
                            instances_low=6, instances_high=12,
                            labels_low=1, labels_high=6,
                            separation=4.0, seed=109))
    full_cost = dp_cost_sum(ds)
    pruned_cost = dp_cost_sum(prune_bags(ds, 0.2))
    ratio = full_cost / pruned_cost
    cfg = TrainConfig(em_iterations=30)
    base = cross_validate(ds, cfg, folds=5).mean(
        "inductive", "instance_accuracy")
    pruned = cross_validate(
        ds, TrainConfig(em_iterations=30, prune_fraction=0.2),
        folds=5).mean("inductive", "instance_accuracy")
    ok = ratio >= 2.0 and pruned >= base - 0.02
    _report("A8ii pruning", ok,
            f"cost ratio {ratio:.2f}x, accuracy {base:.3f} -> {pruned:.3f}")


def test_a8iii_sampling_cuts_estep_time():
    ds = generate(SynthSpec(num_classes=4, feature_dim=6, num_bags=600,
                            instances_low=5, instances_high=10,
                            labels_low=1, labels_high=3,
                            separation=4.0, seed=110))
    train_ds = ds.subset(range(480))
    test_ds = ds.subset(range(480, 600))
    full_model, full_trace = em_train(train_ds,
                                      TrainConfig(em_iterations=40))
    stoch_model, stoch_trace = em_train_stochastic(
        train_ds, TrainConfig(em_iterations=40, sample_fraction=0.2, seed=2))
    full_time = float(np.mean(full_trace.estep_seconds))
    stoch_time = float(np.mean(stoch_trace.estep_seconds))

    def accuracy(model):
        report = evaluate(predict_dataset(model, test_ds, "inductive"),
                          test_ds)
        return report.instance_accuracy

    acc_full, acc_stoch = accuracy(full_model), accuracy(stoch_model)
    speedup = full_time / stoch_time
    ok = speedup >= 3.0 and acc_stoch >= acc_full - 0.02
    _report("A8iii stochastic-estep", ok,
            f"E-step time cut {speedup:.1f}x, accuracy "
            f"{acc_full:.3f} -> {acc_stoch:.3f}")


def test_a9_metric_fixtures_and_fuzz():
    # Hamming: predicted {0,1} against truth {1,2} out of 4 classes.
    bag = Bag("a", np.zeros((1, 2)), LabelSet.from_classes([1, 2]))
    preds = Predictions("inductive", 4, ["a"], [np.array([1])],
                        [LabelSet.from_classes([0, 1])],
                        np.array([[1.0, 1.0, 0.0, 0.0]]))
    hamming = evaluate(preds, Dataset(4, 2, [bag])).hamming_loss
    assert hamming == pytest.approx(0.5)
    # Ranked list: truth {0} scored (0.2, 0.5, 0.3).
    bag = Bag("a", np.zeros((1, 2)), LabelSet.from_classes([0]))
    preds = Predictions("inductive", 3, ["a"], [np.array([0])],
                        [LabelSet.from_classes([0])],
                        np.array([[0.2, 0.5, 0.3]]))
    report = evaluate(preds, Dataset(3, 2, [bag]))
    assert report.one_error == 1.0
    assert report.ranking_loss == 1.0
    assert report.coverage == pytest.approx(2 / 3)
    assert report.average_precision == pytest.approx(1 / 3)

    rng = np.random.default_rng(111)
    c = 5
    bags, ids, inst, sets, scores = [], [], [], [], []
    for b in range(1000):
        n = int(rng.integers(1, 5))
        truth = np.sort(rng.choice(c, size=int(rng.integers(1, c + 1)),
                                   replace=False))
        bags.append(Bag(f"b{b}", np.zeros((n, 2)),
                        LabelSet.from_classes(truth),
                        true_labels=rng.choice(truth, size=n)))
        ids.append(f"b{b}")
        inst.append(rng.integers(0, c, size=n))
        sets.append(LabelSet.from_classes(
            rng.choice(c, size=int(rng.integers(1, c + 1)), replace=False)))
        scores.append(rng.random(c))
    fuzz = evaluate(Predictions("inductive", c, ids, inst, sets,
                                np.asarray(scores)),
                    Dataset(c, 2, bags))
    values = [fuzz.instance_accuracy, fuzz.hamming_loss, fuzz.ranking_loss,
              fuzz.one_error, fuzz.coverage, fuzz.average_precision]
    ok = all(0.0 <= v <= 1.0 for v in values)
    _report("A9 metric-fixtures", ok,
            "fixtures exact, 1000-bag fuzz metrics all in [0, 1]")


def test_a10_cli_outputs_are_byte_deterministic(tmp_path):
    def twice(name, args, outputs):
        blobs = []
        for tag in ("x", "y"):
            paths = {key: str(tmp_path / f"{name}-{tag}-{key}")
                     for key in outputs}
            assert cli_main([a.format(**paths) for a in args]) == 0
            blobs.append({key: open(path, "rb").read()
                          for key, path in paths.items()})
        return blobs[0], blobs[1], paths

    data = str(tmp_path / "data.jsonl")
    assert cli_main(["generate", "--out", data, "--classes", "3", "--dim",
                     "3", "--bags", "20", "--labels", "1", "2",
                     "--seed", "6"]) == 0

    checks = []
    first, second, _ = twice("gen", ["generate", "--out", "{out}",
                                     "--bags", "12", "--classes", "3",
                                     "--dim", "2", "--labels", "1", "2",
                                     "--seed", "9"], ["out"])
    checks.append(("generate", first == second))
    first, second, _ = twice("train", ["train", "--data", data, "--out",
                                       "{model}", "--trace", "{trace}",
                                       "--iters", "4", "--sample-frac",
                                       "0.5", "--seed", "3"],
                             ["model", "trace"])
    checks.append(("train", first == second))
    model = str(tmp_path / "model.json")
    assert cli_main(["train", "--data", data, "--out", model,
                     "--iters", "4"]) == 0
    first, second, _ = twice("predict", ["predict", "--model", model,
                                         "--data", data, "--mode",
                                         "transductive", "--out", "{out}"],
                             ["out"])
    checks.append(("predict", first == second))
    first, second, _ = twice("eval", ["evaluate", "--model", model,
                                      "--data", data, "--out", "{out}"],
                             ["out"])
    checks.append(("evaluate", first == second))
    first, second, _ = twice("cv", ["cv", "--data", data, "--folds", "3",
                                    "--iters", "3", "--out", "{out}"],
                             ["out"])
    checks.append(("cv", first == second))

    # Bench: identical apart from the measured seconds column.
    stripped = []
    for tag in ("x", "y"):
        path = str(tmp_path / f"bench-{tag}.csv")
        assert cli_main(["bench", "--nb", "3,4", "--card", "2", "--bags",
                         "2", "--repeats", "1", "--seed", "4",
                         "--out", path]) == 0
        rows = list(csv.reader(open(path)))
        stripped.append([row[:3] + row[4:] for row in rows])
    checks.append(("bench-minus-seconds", stripped[0] == stripped[1]))

    ok = all(flag for _, flag in checks)
    _report("A10 determinism", ok,
            ", ".join(f"{name} {'ok' if flag else 'DIFFERS'}"
                      for name, flag in checks))
