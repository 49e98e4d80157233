from types import SimpleNamespace

import numpy as np
import pytest

import autolabel as al
from autolabel.verify import (
    McMetrics,
    Toy1DWorld,
    final_metrics,
    mc_population_metrics,
    toy_1d_metrics,
)


def report_over(truth, ids, labels, sources, n_initial_pool):
    out = al.LabeledSet(truth, np.asarray(ids, dtype=np.int64),
                        np.asarray(labels, dtype=np.int64),
                        np.asarray(sources, dtype="<U5"),
                        np.zeros(len(ids), dtype=np.int64))
    return SimpleNamespace(output=out, n_initial_pool=n_initial_pool)


def uniform_truth(n, k=2, seed=0):
    rng = np.random.default_rng(seed)
    return al.Dataset(rng.uniform(0, 1, size=(n, 1)).astype(np.float32),
                      rng.integers(0, k, size=n), k)


# ---------------------------------------------------------------------------
# final metrics


def test_final_metrics_no_auto_points():
    truth = uniform_truth(10)
    rep = report_over(truth, [0, 1], truth.hidden_labels[:2], ["human"] * 2, 10)
    err, cov = final_metrics(rep, truth)
    assert err is None
    assert cov == 0.0


def test_final_metrics_all_correct():
    truth = uniform_truth(8)
    rep = report_over(truth, np.arange(8), truth.hidden_labels, ["auto"] * 8, 8)
    err, cov = final_metrics(rep, truth)
    assert err == 0.0
    assert cov == 1.0


def test_final_metrics_forty_of_hundred_two_wrong():
    truth = uniform_truth(100)
    ids = np.arange(40)
    labels = truth.hidden_labels[:40].copy()
    labels[:2] = 1 - labels[:2]  # two auto labels flipped wrong
    rep = report_over(truth, ids, labels, ["auto"] * 40, 100)
    err, cov = final_metrics(rep, truth)
    assert err == pytest.approx(0.05)
    assert cov == pytest.approx(0.40)


def test_final_metrics_ignores_human_labels():
    truth = uniform_truth(20)
    ids = np.arange(10)
    labels = truth.hidden_labels[:10].copy()
    labels[5:] = 1 - labels[5:]  # five WRONG human labels must not count
    sources = ["auto"] * 5 + ["human"] * 5
    rep = report_over(truth, ids, labels, sources, 20)
    err, cov = final_metrics(rep, truth)
    assert err == 0.0
    assert cov == pytest.approx(0.25)


def test_final_metrics_id_mismatch():
    truth = uniform_truth(5)
    rep = report_over(truth, [3], [0], ["auto"], 5)
    stranger = al.Dataset(truth.features, truth.hidden_labels, 2,
                          ids=np.arange(100, 105))
    with pytest.raises(ValueError):
        final_metrics(rep, stranger)


def test_final_metrics_matches_scrambled_id_order():
    # ids deliberately not sorted: matching must go through the id lookup
    base = uniform_truth(30)
    perm = np.random.default_rng(3).permutation(30)
    truth = al.Dataset(base.features[perm], base.hidden_labels[perm], 2,
                       ids=base.ids[perm])
    labels = truth.hidden_labels[:10].copy()
    labels[0] = 1 - labels[0]
    rep = report_over(truth, np.arange(10), labels, ["auto"] * 10, 30)
    err, cov = final_metrics(rep, truth)
    assert err == pytest.approx(0.1)


# ---------------------------------------------------------------------------
# Monte-Carlo population metrics


def test_mc_point_mass():
    def sampler(rng, n):
        return np.full((n, 1), 0.9, dtype=np.float64), np.ones(n, dtype=np.int64)

    world = Toy1DWorld(w=0.0)
    m = mc_population_metrics(world, 0.5, world, sampler, 500, seed=1)
    assert m.coverage == 1.0 and m.coverage_se == 0.0
    assert m.error == 0.0 and m.error_se == 0.0
    assert m.n_selected == 500


def test_mc_infinite_threshold():
    world = Toy1DWorld(w=0.0)
    m = mc_population_metrics(world, np.inf, world, world.sample_side, 200,
                              seed=2)
    assert m.coverage == 0.0
    assert m.error is None and m.error_se is None


def test_mc_determinism_and_n_validation():
    world = Toy1DWorld(w=0.3)
    a = mc_population_metrics(world, 0.2, world, world.sample_side, 1000, 7)
    b = mc_population_metrics(world, 0.2, world, world.sample_side, 1000, 7)
    assert a == b
    with pytest.raises(ValueError):
        mc_population_metrics(world, 0.2, world, world.sample_side, 0, 7)


def test_mc_agrees_with_closed_form():
    for w, t in [(0.0, 0.3), (0.8, 0.2), (0.4, 0.1)]:
        world = Toy1DWorld(w=w)
        exact = toy_1d_metrics(world, t, alpha=1.0)
        m = mc_population_metrics(world, t, world, world.sample_side, 100_000,
                                  seed=11)
        assert abs(m.coverage - exact.actual_coverage) <= 3 * max(m.coverage_se,
                                                                  1e-4)
        if exact.actual_error is not None:
            assert abs(m.error - exact.actual_error) <= 3 * max(m.error_se,
                                                                 1e-4)


def test_mc_unbiased_over_repetitions():
    world = Toy1DWorld(w=0.8)
    t = 0.2
    exact = toy_1d_metrics(world, t, alpha=1.0)
    covs, errs = [], []
    for rep in range(200):
        m = mc_population_metrics(world, t, world, world.sample_side, 10_000,
                                  seed=1000 + rep)
        covs.append(m.coverage)
        errs.append(m.error)
    covs, errs = np.array(covs), np.array(errs, dtype=np.float64)
    se_cov = covs.std(ddof=1) / np.sqrt(len(covs))
    se_err = errs.std(ddof=1) / np.sqrt(len(errs))
    assert abs(covs.mean() - exact.actual_coverage) <= 3 * se_cov
    assert abs(errs.mean() - exact.actual_error) <= 3 * se_err


# ---------------------------------------------------------------------------
# the exact toy world


def test_toy_world_geometry():
    world = Toy1DWorld(w=0.1)
    assert world.side == (0.25, 1.0)
    assert np.allclose(world.confidence([0.1, 0.4]), [0.0, 0.3])
    assert np.array_equal(world.predict(np.array([[0.1], [0.3], [0.25]])),
                          [0, 1, 1])
    X, y = world.sample_side(np.random.default_rng(0), 500)
    assert X.shape == (500, 1)
    assert X.min() >= 0.25 and X.max() <= 1.0
    assert np.array_equal(y, (X[:, 0] >= 0.5).astype(np.int64))


def test_toy_metrics_worked_example():
    got = toy_1d_metrics(Toy1DWorld(w=0.0), t=0.3, alpha=1.0)
    assert got.actual_coverage == pytest.approx(14 / 15, rel=1e-12)
    assert got.actual_error == pytest.approx(2 / 7, rel=1e-12)


def test_toy_metrics_zero_threshold():
    got = toy_1d_metrics(Toy1DWorld(w=0.0), t=0.0, alpha=1.0)
    assert got.actual_coverage == pytest.approx(1.0)
    assert got.actual_error == pytest.approx(1 / 3, rel=1e-12)


def test_toy_metrics_empty_selection():
    # w in the middle with a huge t selects nothing on the side
    got = toy_1d_metrics(Toy1DWorld(w=0.6), t=0.9, alpha=1.0)
    assert got.actual_coverage == 0.0
    assert got.actual_error is None


def test_toy_metrics_threshold_validation():
    with pytest.raises(ValueError):
        toy_1d_metrics(Toy1DWorld(w=0.0), t=1.5, alpha=1.0)


def test_toy_actuals_match_dense_grid_oracle():
    rng = np.random.default_rng(6)
    x = np.linspace(0.25, 1.0, 400_001)
    for _ in range(25):
        w = float(rng.uniform(0, 1))
        t = float(rng.uniform(0, 1))
        got = toy_1d_metrics(Toy1DWorld(w=w), t, alpha=1.0)
        sel = np.abs(w - x) >= t
        cov = sel.mean()
        assert got.actual_coverage == pytest.approx(cov, abs=2e-3)
        if sel.sum() > 400:
            err = (x[sel] < 0.5).mean()
            assert got.actual_error == pytest.approx(err, abs=5e-3)


def test_toy_surrogate_gap_shrinks_with_alpha():
    # pointwise, the coverage gap shrinks monotonically with alpha; the error
    # RATIO's numerator and denominator biases can cancel at small alpha
    # (they do at this very point), so for it only the sharp-alpha ordering
    # is asserted pointwise. Grid-level max gaps decrease for both; see the
    # acceptance suite.
    world = Toy1DWorld(w=0.0)
    cov_gaps, err_gaps = [], []
    for alpha in (1.0, 10.0, 100.0):
        m = toy_1d_metrics(world, 0.3, alpha)
        cov_gaps.append(abs(m.surrogate_coverage - m.actual_coverage))
        err_gaps.append(abs(m.surrogate_error - m.actual_error))
    assert cov_gaps[0] > cov_gaps[1] > cov_gaps[2]
    assert err_gaps[2] < err_gaps[1]
    assert err_gaps[2] <= 0.001


def test_default_toy_sweep_shape():
    ws, ts = al.default_toy_sweep()
    assert ws.shape == (51,) and ts.shape == (6,)
    assert ws[0] == 0.0 and ws[-1] == 1.0
    assert ts[0] == 0.0 and ts[-1] == 0.25
    assert np.allclose(np.diff(ws), 0.02) and np.allclose(np.diff(ts), 0.05)


def test_toy_surrogate_tight_at_alpha_100_over_w_grid():
    for w in np.linspace(0.0, 1.0, 50):
        m = toy_1d_metrics(Toy1DWorld(w=float(w)), 0.3, alpha=100.0)
        assert m.actual_error is not None
        assert abs(m.surrogate_coverage - m.actual_coverage) <= 0.05
        assert abs(m.surrogate_error - m.actual_error) <= 0.05


def test_mc_metrics_is_a_plain_record():
    m = McMetrics(0.5, 0.01, None, None, 0)
    assert m.coverage == 0.5 and m.error is None
