import json
import os

import numpy as np
import pytest

from bcetest import ParseError, load_dataset, uniform_incomplete_ccp
from bcetest.cli import main, run
from bcetest.data import MarketDataset, dataset_from_counts
from conftest import make_uniform_game

UNIFORM_CONFIG = {
    "game": {
        "num_players": 2,
        "actions_per_player": [2, 2],
        "payoff": {"beta": [0.0], "delta": [[0.0, 0.5], [0.5, 0.0]],
                   "interaction_sign": -1},
        "type_dist": {"kind": "uniform", "lo": -1.0, "hi": 1.0},
        "covariate_support": [[0.0]],
        "theta_map": ["delta[0,1]", "delta[1,0]"],
    },
    "grid": {"r_per_player": [6, 6]},
    "rho": 0.0,
    "baseline": "incomplete",
    "test": {
        "alpha": 0.05, "bootstrap_draws": 99, "seed": 3,
        "theta_domain": {"lo": [0.3, 0.3], "hi": [0.7, 0.7],
                         "points": [[0.4, 0.4], [0.5, 0.5], [0.6, 0.6]]},
    },
}


def test_load_dataset_counts(tmp_path):
    g = make_uniform_game(r=2)
    path = tmp_path / "d.csv"
    path.write_text("market_id,x_0,y_0,y_1\n"
                    "a,0.0,1,0\n" "b,0.0,1,0\n" "c,0.0,1,0\n")
    data = load_dataset(str(path), g.spec)
    assert data.n == 3
    assert data.counts[2, 0] == 3  # outcome (1,0) has index 2


def test_load_dataset_errors(tmp_path):
    g = make_uniform_game(r=2)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ParseError):
        load_dataset(str(empty), g.spec)
    header_only = tmp_path / "h.csv"
    header_only.write_text("market_id,x_0,y_0,y_1\n")
    with pytest.raises(ParseError):
        load_dataset(str(header_only), g.spec)
    ragged = tmp_path / "r.csv"
    ragged.write_text("market_id,x_0,y_0,y_1\nm1,0.0,1\n")
    with pytest.raises(ParseError, match=":2"):
        load_dataset(str(ragged), g.spec)
    badx = tmp_path / "x.csv"
    badx.write_text("market_id,x_0,y_0,y_1\nm1,9.0,1,0\n")
    with pytest.raises(ParseError, match="support"):
        load_dataset(str(badx), g.spec)
    bady = tmp_path / "y.csv"
    bady.write_text("market_id,x_0,y_0,y_1\nm1,0.0,2,0\n")
    with pytest.raises(ParseError, match="out of range"):
        load_dataset(str(bady), g.spec)


def test_load_dataset_duplicate_ids_warn(tmp_path):
    g = make_uniform_game(r=2)
    path = tmp_path / "dup.csv"
    path.write_text("market_id,x_0,y_0,y_1\nm1,0.0,1,0\nm1,0.0,0,1\n")
    with pytest.warns(UserWarning, match="duplicate"):
        data = load_dataset(str(path), g.spec)
    assert data.n == 2


def _interior_dataset(tmp_path, n=600, seed=0):
    q = uniform_incomplete_ccp(0.5, 0.5)
    counts = np.random.default_rng(seed).multinomial(n, q)
    path = tmp_path / "markets.csv"
    rows = ["market_id,x_0,y_0,y_1"]
    mid = 0
    for y_idx, c in enumerate(counts):
        y = np.unravel_index(y_idx, (2, 2))
        for _ in range(c):
            mid += 1
            rows.append(f"m{mid},0.0,{y[0]},{y[1]}")
    path.write_text("\n".join(rows) + "\n")
    return str(path), counts


def test_run_test_workflow_inside_set(tmp_path):
    data_path, counts = _interior_dataset(tmp_path)
    g = make_uniform_game(r=6)
    data = load_dataset(data_path, g.spec)
    out = str(tmp_path / "out")
    env, code = run("test", UNIFORM_CONFIG, data, out)
    assert code == 0
    assert env["payload"]["decision"] == "fail-to-reject"
    persisted = json.load(open(os.path.join(out, "result.json")))
    assert persisted["payload"] == env["payload"]


def test_run_test_workflow_rejects_complete(tmp_path):
    data_path, _ = _interior_dataset(tmp_path, n=1500, seed=4)
    cfg = json.loads(json.dumps(UNIFORM_CONFIG))
    cfg["baseline"] = "complete"
    g = make_uniform_game(r=6)
    data = load_dataset(data_path, g.spec)
    env, code = run("test", cfg, data, str(tmp_path / "out"))
    assert code == 2 and env["payload"]["rejected"]


def test_payload_determinism_and_cache(tmp_path):
    data_path, _ = _interior_dataset(tmp_path)
    g = make_uniform_game(r=6)
    data = load_dataset(data_path, g.spec)
    env1, _ = run("cs-theta", UNIFORM_CONFIG, data, str(tmp_path / "o1"))
    env2, _ = run("cs-theta", UNIFORM_CONFIG, data, str(tmp_path / "o2"))
    assert json.dumps(env1["payload"], sort_keys=True) == \
        json.dumps(env2["payload"], sort_keys=True)
    assert env1["input_hash"] == env2["input_hash"]

    cache = str(tmp_path / "cache")
    env3, _ = run("cs-theta", UNIFORM_CONFIG, data, str(tmp_path / "o3"),
                  cache_dir=cache)
    assert len(os.listdir(cache)) == 1
    env4, _ = run("cs-theta", UNIFORM_CONFIG, data, str(tmp_path / "o4"),
                  cache_dir=cache)
    assert json.dumps(env3["payload"], sort_keys=True) == \
        json.dumps(env4["payload"], sort_keys=True) == \
        json.dumps(env1["payload"], sort_keys=True)
    assert os.path.exists(os.path.join(tmp_path, "o3", "theta_cs.csv"))
    assert os.path.exists(os.path.join(tmp_path, "o3", "theta_cs.png"))


def test_seq_test_workflow(tmp_path):
    data_path, _ = _interior_dataset(tmp_path, n=1500, seed=4)
    cfg = json.loads(json.dumps(UNIFORM_CONFIG))
    del cfg["baseline"]
    cfg["baselines"] = ["complete", "incomplete"]
    g = make_uniform_game(r=6)
    data = load_dataset(data_path, g.spec)
    env, code = run("seq-test", cfg, data, str(tmp_path / "out"))
    assert code == 2
    assert env["payload"]["rejected"] == ["complete"]
    assert env["payload"]["stop_index"] == 2
    assert os.path.exists(os.path.join(tmp_path, "out", "seq_test.csv"))


def test_cs_markets_workflow(tmp_path):
    cfg = json.loads(json.dumps(UNIFORM_CONFIG))
    cfg["game"]["covariate_support"] = [[0.0], [1.0]]
    cfg["baseline"] = "incomplete"
    from bcetest.cli import _build_game

    game = _build_game(cfg)
    q = uniform_incomplete_ccp(0.5, 0.5)
    rng = np.random.default_rng(2)
    counts = np.column_stack([rng.multinomial(400, q), rng.multinomial(350, q)])
    data = dataset_from_counts(counts, game.spec)
    env, code = run("cs-markets", cfg, data, str(tmp_path / "out"))
    assert code == 0
    markets = env["payload"]["markets"]
    assert len(markets) == 2
    assert set(env["payload"]["holm_retained"]) <= {0, 1}
    assert os.path.exists(os.path.join(tmp_path, "out", "market_cs.csv"))
    assert os.path.exists(os.path.join(tmp_path, "out", "market_cs.png"))


def test_bce_bounds_workflow(tmp_path):
    cfg = json.loads(json.dumps(UNIFORM_CONFIG))
    cfg["baseline"] = "complete"
    cfg["test"]["theta_domain"] = {"lo": [0.2, 0.2], "hi": [1.0, 1.0],
                                   "points": [[0.5, 0.5], [0.8, 0.8]]}
    env, code = run("bce-bounds", cfg, None, str(tmp_path / "out"))
    assert code == 0
    rows = env["payload"]["rows"]
    assert len(rows) == 2 * 4
    for r in rows:
        assert 0.0 <= r["lower"] <= r["upper"] <= 1.0
    row_10 = [r for r in rows if r["outcome"] == "10" and r["theta"] == [0.5, 0.5]]
    assert row_10[0]["lower"] == pytest.approx(0.3125, abs=0.05)
    assert os.path.exists(os.path.join(tmp_path, "out", "bce_bounds.csv"))


def test_mc_power_workflow(tmp_path):
    cfg = {"mc": {"beta": 0.5, "delta": -2.0, "eta": 1.5, "mu": 0.5,
                  "xi_grid": [1.0], "M_list": [1.0], "n": 60, "reps": 50,
                  "bootstrap_draws": 99, "eps_points": 3,
                  "theta_deltas": [-2.0], "seed": 1}}
    env, code = run("mc-power", cfg, None, str(tmp_path / "out"), threads=2)
    assert code == 0
    rows = env["payload"]["rows"]
    assert len(rows) == 1  # |xi_grid| x |M_list|
    assert rows[0]["reps"] == 50
    assert 0.0 <= rows[0]["rejection_rate"] <= 1.0
    assert os.path.exists(os.path.join(tmp_path, "out", "power.csv"))
    assert os.path.exists(os.path.join(tmp_path, "out", "power.png"))


def test_main_cli_roundtrip(tmp_path, capsys):
    data_path, _ = _interior_dataset(tmp_path)
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(UNIFORM_CONFIG))
    code = main(["test", "--config", str(cfg_path), "--data", data_path,
                 "--out", str(tmp_path / "out"), "--no-figures", "--verbose"])
    assert code == 0
    assert "fail-to-reject" in capsys.readouterr().out
    assert os.path.exists(os.path.join(tmp_path, "out", "result.json"))


def test_main_reports_errors(tmp_path, capsys):
    code = main(["test", "--config", str(tmp_path / "missing.json"),
                 "--data", str(tmp_path / "missing.csv")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_market_dataset_validation():
    with pytest.raises(Exception):
        MarketDataset(np.array([[1, -1], [0, 0], [0, 0], [0, 0]]), ("a", "b"))
    data = MarketDataset(np.array([[2, 0], [0, 0], [1, 0], [0, 0]]), ("a", "b"))
    assert data.n == 3 and data.n_x(1) == 0
    assert "n = 3" in data.summary()
