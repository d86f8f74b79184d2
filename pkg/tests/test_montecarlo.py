import numpy as np
import pytest

from ripple_lab.degree_dist import make_single_degree
from ripple_lab.errors import ComparisonFailure
from ripple_lab.exact_recursion import run_exact
from ripple_lab.montecarlo import BLOCK, compare, run_ensemble
from ripple_lab.rng import GOLDEN, Stream, mix64, stream_state


def test_splitmix64_known_answers():
    # published splitmix64 sequence from seed 0
    expected = (0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F)
    s = Stream(0)
    s.state = 0
    assert tuple(s.next_u64() for _ in range(3)) == expected
    assert mix64(GOLDEN) == expected[0]


def test_stream_basics():
    assert stream_state(5, 0) != stream_state(5, 1)
    assert stream_state(5, 0) == stream_state(5, 0)
    s = Stream(123, trial=7)
    for _ in range(100):
        v = s.uniform()
        assert 0.0 <= v < 1.0
    for _ in range(100):
        assert 0 <= s.randbelow(13) < 13


@pytest.mark.parametrize("mode", ["with_replacement", "without_replacement"])
def test_kernel_matches_python_twin(cap, mode):
    # k above the top degree so both encoding modes are legal
    k, n, trials, seed = 60, 66, 200, 77
    fast = run_ensemble(k, n, cap, trials, mode=mode, master_seed=seed)
    slow = run_ensemble(k, n, cap, trials, mode=mode, master_seed=seed, use_python=True)
    assert np.array_equal(fast.acc, slow.acc)


def test_worker_count_does_not_change_counts(cap):
    k, n, trials = 30, 33, 20000
    assert trials > 2 * BLOCK  # several blocks, so scheduling really varies
    reports = [
        run_ensemble(k, n, cap, trials, master_seed=9, workers=w) for w in (1, 4, 16)
    ]
    assert reports[0].workers == 1 and reports[2].workers == 16
    for rep in reports[1:]:
        assert np.array_equal(rep.acc, reports[0].acc)


def test_report_accounting(cap):
    k, n, trials = 30, 33, 20000
    rep = run_ensemble(k, n, cap, trials, master_seed=9)
    # every trial either decodes fully or halts at exactly one u
    assert rep.acc[:, 6].sum() + rep.acc[0, 0] == trials
    assert rep.overall_failure == pytest.approx(1.0 - rep.acc[0, 0] / trials)
    assert rep.fail_freq[:-1].sum() == pytest.approx(rep.overall_failure)
    # u axis runs k..0 and the survivor counts shrink with u
    assert rep.u.tolist() == list(range(k, -1, -1))
    assert np.all(np.diff(rep.survivors[:-1]) <= 0)
    assert rep.survivors[0] <= trials
    # u = 0 row only holds the success count; means are undefined there
    assert np.isnan(rep.ripple_mean_cond[-1])
    assert np.isnan(rep.cloud_mean[-1])
    alive = rep.survivors[:-1] > 0
    assert np.all(rep.ripple_mean_cond[:-1][alive] >= 1.0)
    assert rep.ripple_mean_uncond[0] == pytest.approx(rep.acc[k, 1] / trials)


def test_ensemble_matches_recursion(cap):
    dp = run_exact(6, 7, cap, pu_mode="wr")
    rep = run_ensemble(6, 7, cap, 50_000, mode="with_replacement", master_seed=42)
    tab = compare(rep, dp)
    assert tab.n_checked == len(tab.rows) > 0
    assert tab.max_abs_z < 4.5
    tab.assert_ok(z_limit=4.5)


def test_compare_flags_wrong_prediction(cap):
    rep = run_ensemble(6, 7, cap, 50_000, mode="with_replacement", master_seed=42)
    wrong = run_exact(6, 7, make_single_degree(3))
    tab = compare(rep, wrong)
    with pytest.raises(ComparisonFailure):
        tab.assert_ok()
    with pytest.raises(TypeError):
        compare(rep, "not a prediction")


def test_run_ensemble_validation(cap):
    with pytest.raises(TypeError):
        run_ensemble(10, 11, [0.5, 0.5], 100)
    with pytest.raises(ValueError):
        run_ensemble(10, 11, cap, 100, mode="bogus")
    with pytest.raises(ValueError):
        run_ensemble(0, 11, cap, 100)
    with pytest.raises(ValueError):
        run_ensemble(10, 0, cap, 100)
    with pytest.raises(ValueError):
        run_ensemble(10, 11, cap, 0)
    with pytest.raises(ValueError):
        run_ensemble(10, 11, cap, 100, workers=0)
    with pytest.raises(ValueError):
        # capped soliton reaches degree 50: cannot encode 10 distinct neighbors
        run_ensemble(10, 11, cap, 100, mode="without_replacement")


def test_thread_env_var(cap, monkeypatch):
    monkeypatch.setenv("RIPPLE_LAB_THREADS", "3")
    rep = run_ensemble(5, 6, cap, 50, use_python=True)
    assert rep.workers == 3
