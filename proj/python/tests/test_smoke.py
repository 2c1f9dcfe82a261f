import numpy as np
import pytest

import shpjf


def small_data(seed=3):
    g = shpjf.GeneratorConfig()
    g.users, g.jobs, g.positives = 60, 120, 240
    g.vocab_terms, g.categories, g.terms_per_category = 200, 5, 20
    g.mean_history = 6
    g.jd_min_tokens, g.jd_max_tokens = 4, 6
    return g, shpjf.generate(g, seed)


def small_model_config(variant="full"):
    c = shpjf.ModelConfig()
    c.word_dim, c.encoder_layers, c.encoder_heads, c.encoder_ff, c.max_tokens = 8, 1, 2, 8, 12
    c.id_dim, c.intention_hidden, c.intention_out, c.prediction_hidden = 4, 6, 3, 5
    c.clusters, c.max_history, c.dropout = 2, 4, 0.0
    c.variant = variant
    return c


def test_generate_is_deterministic_and_sized():
    g, a = small_data()
    _, b = small_data()
    assert a.num_users == 60 and a.num_jobs == 120
    assert a.stats() == b.stats()
    assert a.stats()["positives"] == 240
    assert a.stats()["negatives"] > 0


def test_dataset_round_trip(tmp_path):
    _, data = small_data()
    data.save(tmp_path)
    loaded = shpjf.Dataset.load(tmp_path)
    assert loaded.stats() == data.stats()


def test_model_scores_are_probabilities_and_repeatable():
    _, data = small_data()
    model = shpjf.Model(small_model_config(), data.vocab_size, data.num_users, data.num_jobs, 1)
    users = data.user_views(cutoff=10 * 86400, max_history=4)
    jobs = data.job_views()
    s = model.score_pair(users[0], jobs[0])
    assert 0.0 < s < 1.0
    assert model.score_pair(users[0], jobs[0]) == s
    scored = model.score_group(users[1], jobs[:5])
    assert [j for j, _ in scored] == [job.job_id for job in jobs[:5]]
    for job, (_, y) in zip(jobs[:5], scored):
        assert y == pytest.approx(model.score_pair(users[1], job), abs=1e-12)


def test_parameters_are_numpy_arrays():
    model = shpjf.Model(small_model_config(), 50, 4, 6, 1)
    names = model.parameter_names()
    assert names
    w = model.parameter(names[0])
    assert isinstance(w, np.ndarray) and w.dtype == np.float64
    with pytest.raises(shpjf.Error):
        model.parameter("no.such.parameter")


def test_fit_reports_metrics_in_range():
    _, data = small_data()
    model = shpjf.Model(small_model_config(), data.vocab_size, data.num_users, data.num_jobs, 1)
    t = shpjf.TrainConfig()
    t.learning_rate, t.batch_size, t.max_epochs, t.patience = 0.01, 8, 3, 2
    out = shpjf.fit(model, data, t)
    assert 1 <= out["best_epoch"] <= 3
    assert len(out["train_loss"]) == len(out["val_gauc"])
    for key in ("gauc", "recall_at_1", "recall_at_5", "mrr"):
        assert 0.0 <= out["test"][key] <= 1.0


def test_invalid_learning_rate_is_config_error():
    t = shpjf.TrainConfig()
    t.learning_rate = 0.05
    with pytest.raises(shpjf.ConfigError):
        t.validate()
    with pytest.raises(ValueError):
        t.validate()


def test_compute_report_hand_case():
    rows = [(0, 0, 0, 1, 0.9), (0, 1, 0, 0, 0.1), (1, 2, 1, 1, 0.5), (1, 3, 1, 0, 0.8), (1, 4, 1, 0, 0.2)]
    r = shpjf.compute_report(rows)
    assert r["gauc"] == 0.75
    assert r["mrr"] == pytest.approx((1.0 + 0.5) / 2)
    with pytest.raises(shpjf.EvaluationError):
        shpjf.compute_report([])


def test_micro_grad_check_passes():
    assert shpjf.micro_grad_check() < 1e-3


def test_cached_scores_match_full_forward(tmp_path):
    _, data = small_data()
    model = shpjf.Model(small_model_config(), data.vocab_size, data.num_users, data.num_jobs, 2)
    users = data.user_views(cutoff=10 * 86400, max_history=4)
    jobs = data.job_views()
    cache = shpjf.IntentionCache(3600)
    assert cache.refresh(model, users, 0) == 1
    out = shpjf.score_online(model, users[3], jobs[:6], cache)
    assert out["cache_hit"] and out["generation"] == 1
    for job_id, y in out["ranked"]:
        assert y == pytest.approx(model.score_pair(users[3], jobs[job_id]), abs=1e-9)
    cache.save(tmp_path / "cache.bin")
    assert shpjf.IntentionCache.load(tmp_path / "cache.bin").generation == 1


def test_cli_entry_point(tmp_path):
    code, out, _ = shpjf.cli(["gradcheck", "--micro"])
    assert code == 0 and "max relative error" in out
    code, _, err = shpjf.cli(["evaluate"])
    assert code == 1 and "--checkpoint" in err
