from __future__ import annotations

import numpy as np
import pytest

from defectcast import ablation
from defectcast.ablation import run_ablation
from defectcast.errors import ConfigError
from defectcast.models import ModelSpec
from defectcast.walkforward import plan_walk_forward


def _signal_panel(make_panel, seed, n=60):
    """Target driven almost entirely by one feature, plus two noise features."""
    rng = np.random.default_rng(seed)
    x = np.empty(n)
    x[0] = 0.0
    for t in range(1, n):
        x[t] = 0.8 * x[t - 1] + rng.normal(0, 1)
    X = np.column_stack([x, rng.normal(0, 1, n), rng.normal(0, 1, n)])
    y = 5.0 + 2.0 * x + rng.normal(0, 0.2, n)
    return make_panel(y, X, names=("signal", "noise1", "noise2"))


def test_ablation_rejects_non_exogenous_model(make_panel):
    panel = _signal_panel(make_panel, 0)
    plan = plan_walk_forward(len(panel), [1])
    with pytest.raises(ConfigError, match="exogenous-capable"):
        run_ablation(panel, ModelSpec.for_kind("ARIMA"), plan, ["signal"], 1)


def test_ablation_k2_runs_all_four_distinct_subsets(make_panel):
    panel = _signal_panel(make_panel, 1)
    plan = plan_walk_forward(len(panel), [1])
    spec = ModelSpec.for_kind("BDLM")
    results = run_ablation(panel, spec, plan, ["signal", "noise1"], 2, seed=0)
    removed = [r.removed for r in results]
    assert removed == [(), ("signal",), ("noise1",), ("signal", "noise1")]
    assert results[0].delta_mae == 0.0 and results[0].delta_rmse == 0.0


def test_removing_an_inert_feature_changes_nothing(make_panel):
    panel = _signal_panel(make_panel, 2)
    # append an all-zero padding feature
    features = np.column_stack([panel.features, np.zeros(len(panel))])
    panel = make_panel(panel.target, features, names=("signal", "noise1", "noise2", "pad"))
    plan = plan_walk_forward(len(panel), [1])
    spec = ModelSpec.for_kind("BDLM")
    results = run_ablation(panel, spec, plan, ["pad"], 1, seed=0)
    assert abs(results[1].delta_rmse) <= 1e-9
    assert abs(results[1].delta_mae) <= 1e-9


def test_removing_the_signal_feature_hurts_and_is_detected(make_panel):
    panel = _signal_panel(make_panel, 3)
    plan = plan_walk_forward(len(panel), [1])
    spec = ModelSpec.for_kind("BDLM")
    results = run_ablation(panel, spec, plan, ["signal"], 1, seed=0)
    full, ablated = results[0], results[1]
    assert ablated.record.rmse > full.record.rmse
    outcome = ablation.test_ablation_significance(full.abs_errors, ablated.abs_errors)
    assert outcome.reject_null and outcome.p_value < 0.01


def test_identical_runs_report_fail_to_reject(make_panel):
    panel = _signal_panel(make_panel, 4)
    plan = plan_walk_forward(len(panel), [1])
    spec = ModelSpec.for_kind("BDLM")
    results = run_ablation(panel, spec, plan, ["signal"], 1, seed=0)
    full = results[0]
    outcome = ablation.test_ablation_significance(full.abs_errors, full.abs_errors)
    assert not outcome.reject_null
    assert outcome.p_value == 1.0


def test_significance_is_invariant_to_origin_ordering(make_panel):
    panel = _signal_panel(make_panel, 5)
    plan = plan_walk_forward(len(panel), [1])
    results = run_ablation(panel, ModelSpec.for_kind("BDLM"), plan, ["signal"], 1, seed=0)
    full, ablated = results[0], results[1]
    base = ablation.test_ablation_significance(full.abs_errors, ablated.abs_errors)
    perm = np.random.default_rng(0).permutation(len(full.abs_errors))
    shuffled = ablation.test_ablation_significance(
        np.asarray(full.abs_errors)[perm], np.asarray(ablated.abs_errors)[perm]
    )
    assert shuffled.p_value == pytest.approx(base.p_value)


def test_ablation_is_deterministic(make_panel):
    panel = _signal_panel(make_panel, 6)
    plan = plan_walk_forward(len(panel), [1])
    spec = ModelSpec.for_kind("BDLM")
    a = run_ablation(panel, spec, plan, ["signal", "noise1"], 2, seed=9)
    b = run_ablation(panel, spec, plan, ["signal", "noise1"], 2, seed=9)
    assert [(r.removed, r.record, r.abs_errors) for r in a] == [
        (r.removed, r.record, r.abs_errors) for r in b
    ]


def test_ablation_k_bounds(make_panel):
    panel = _signal_panel(make_panel, 7)
    plan = plan_walk_forward(len(panel), [1])
    spec = ModelSpec.for_kind("BDLM")
    with pytest.raises(ConfigError):
        run_ablation(panel, spec, plan, ["signal"], 0)
    with pytest.raises(ConfigError):
        run_ablation(panel, spec, plan, list("abcdefghi"), 9)
