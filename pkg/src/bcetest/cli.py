"""Command-line entry points: configuration, orchestration, persistence.

Workflows: ``test`` (single baseline, binary decision), ``cs-theta``
(parameter confidence set), ``seq-test`` (ordered baseline chain),
``cs-markets`` (per-market confidence set with FWER control), ``mc-power``
(simulation size/power table), and ``bce-bounds`` (sharp outcome-probability
bounds over a parameter grid).  Results are written as a JSON envelope
plus CSV tables and figures; the exit code encodes rejection decisions
for scripting (0 retain, 2 reject, 1 error).
"""

from __future__ import annotations

import argparse
import copy
import datetime
import hashlib
import json
import os
import sys

import numpy as np

from . import reports
from .bootstrap import TestConfig, ThetaDomain, confidence_set_theta, test_null
from .data import MarketDataset, ParseError, load_dataset
from .games import (
    DiscretizedGame,
    DomainError,
    GameSpec,
    InfoPartition,
    PayoffSpec,
    ThetaMap,
    TypeDist,
    baseline_partition,
    discretize,
)
from .mcsim import PowerConfig, SignalDGP, power_experiment
from .multitest import (
    BaselineChain,
    bonferroni_select,
    holm_select,
    market_pvalues,
    sequential_test,
)
from .polytope import assemble, outcome_bounds


def _build_game(cfg: dict) -> DiscretizedGame:
    g = cfg["game"]
    td = g.get("type_dist", {"kind": "standard-normal"})
    dist = TypeDist(td["kind"], lo=td.get("lo", -1.0), hi=td.get("hi", 1.0),
                    eta=td.get("eta", 1.0), mu=td.get("mu", 0.5))
    spec = GameSpec(
        num_players=g["num_players"],
        actions_per_player=tuple(g["actions_per_player"]),
        payoff=PayoffSpec(beta=g["payoff"]["beta"], delta=g["payoff"]["delta"],
                          interaction_sign=g["payoff"].get("interaction_sign", 1)),
        type_dist=dist,
        covariate_support=tuple(tuple(x) for x in g["covariate_support"]),
        theta_map=ThetaMap(tuple(g.get("theta_map", ["delta_all"]))),
    )
    grid = cfg.get("grid", {})
    return discretize(spec, grid.get("r_per_player", [10] * spec.num_players),
                      rho=cfg.get("rho", 0.0),
                      tail_augment=grid.get("tail_augment", False))


def _build_partition(tag, game: DiscretizedGame) -> InfoPartition:
    if isinstance(tag, str):
        return baseline_partition(tag, game.grid)
    kind = tag["kind"]
    if kind == "privileged":
        return baseline_partition("privileged", game.grid, player=tag["player"])
    if kind == "public":
        return baseline_partition("public", game.grid, disclose=tag["disclose"])
    return baseline_partition(kind, game.grid)


def _build_test_config(cfg: dict, seed_override=None) -> TestConfig:
    t = cfg["test"]
    dom = t["theta_domain"]
    domain = ThetaDomain(tuple(dom["lo"]), tuple(dom["hi"]),
                         num=tuple(dom["num"]) if "num" in dom else None,
                         points=tuple(tuple(p) for p in dom["points"])
                         if "points" in dom else None)
    return TestConfig(
        theta_domain=domain,
        alpha=t.get("alpha", 0.05),
        bootstrap_draws=t.get("bootstrap_draws", 299),
        tau_rule=t.get("tau_rule", "sqrt-log-n"),
        ridge_scale=t.get("ridge_scale", 1e-6),
        seed=seed_override if seed_override is not None else t.get("seed", 0),
        min_cell=t.get("min_cell", 1),
        allow_sparse_x=t.get("allow_sparse_x", False),
        ego_budget=t.get("ego_budget", 80),
        ego_epsilon=t.get("ego_epsilon", 0.1),
        max_grid=t.get("max_grid", 10_000),
    )


def _input_hash(config: dict, data: MarketDataset | None) -> str:
    h = hashlib.sha256(json.dumps(config, sort_keys=True).encode())
    if data is not None:
        h.update(data.counts.tobytes())
    return h.hexdigest()


def _envelope(workflow, config, data, payload, warnings):
    return {
        "workflow": workflow,
        "config": config,
        "input_hash": _input_hash(config, data),
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "payload": payload,
        "warnings": list(warnings),
    }


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def run(workflow: str, config: dict, data: MarketDataset | None, out_dir: str,
        seed=None, threads=None, cache_dir=None, verbose=False,
        figures=True) -> tuple[dict, int]:
    """Dispatch one workflow; returns (result envelope, exit code)."""
    os.makedirs(out_dir, exist_ok=True)
    config = copy.deepcopy(config)

    cache_path = None
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        key_cfg = dict(config, _workflow=workflow, _seed=seed)
        cache_path = os.path.join(cache_dir, _input_hash(key_cfg, data) + ".json")
        if os.path.exists(cache_path):
            with open(cache_path) as fh:
                cached = json.load(fh)
            envelope = _envelope(workflow, config, data, cached["payload"],
                                 cached.get("warnings", []))
            _write_outputs(workflow, envelope, out_dir, figures)
            return envelope, cached.get("exit_code", 0)

    warnings: list[str] = []
    exit_code = 0

    if workflow == "mc-power":
        mc = config["mc"]
        base = SignalDGP(beta=mc.get("beta", 0.5), M=mc.get("M_list", [1.0])[0],
                         delta=mc.get("delta", -2.0), eta=mc.get("eta", 1.5),
                         mu=mc.get("mu", 0.5), xi=1.0)
        pc = PowerConfig(
            base=base,
            xi_grid=tuple(mc.get("xi_grid", [0.55, 0.7, 0.85, 1.0])),
            M_list=tuple(mc.get("M_list", [1.0])),
            n=mc.get("n", 1000), reps=mc.get("reps", 100),
            alpha=mc.get("alpha", 0.05),
            bootstrap_draws=mc.get("bootstrap_draws", 299),
            eps_points=mc.get("eps_points", 6),
            theta_deltas=tuple(mc.get("theta_deltas", [-3, -2.5, -2, -1.5, -1])),
            seed=seed if seed is not None else mc.get("seed", 0),
            n_jobs=threads,
            law=mc.get("law", "signal-integrated"),
        )
        progress = (lambda key, k: print(f"  cell {key}: {k} reps done", flush=True)) \
            if verbose else None
        rows = power_experiment(pc, progress=progress)
        payload = {"rows": rows, "alpha": pc.alpha, "design": {
            "n": pc.n, "reps": pc.reps, "bootstrap_draws": pc.bootstrap_draws,
            "eps_points": pc.eps_points, "theta_deltas": list(pc.theta_deltas),
            "base": {"beta": base.beta, "delta": base.delta, "eta": base.eta,
                     "mu": base.mu}}}
    elif workflow == "bce-bounds":
        game = _build_game(config)
        partition = _build_partition(config["baseline"], game)
        tconf = _build_test_config(config, seed)
        rows = []
        order_shape = game.spec.actions_per_player
        for theta in tconf.theta_domain.grid_points():
            for y_idx in range(game.spec.num_outcomes):
                poly = assemble(game, partition, config.get("x_index", 0), theta=theta)
                lo, hi = outcome_bounds(poly, y_idx)
                label = "".join(str(v) for v in np.unravel_index(y_idx, order_shape))
                rows.append({"theta": [float(v) for v in theta], "outcome": label,
                             "lower": lo, "upper": hi})
        payload = {"rows": rows, "baseline": str(config["baseline"])}
    elif workflow == "test":
        game = _build_game(config)
        partition = _build_partition(config["baseline"], game)
        tconf = _build_test_config(config, seed)
        res = test_null(game, partition, data, tconf)
        payload = {
            "decision": res.decision, "rejected": res.rejected, "sup_p": res.sup_p,
            "alpha": res.alpha, "early_exit": res.early_exit, "ego_used": res.ego_used,
            "evaluated": [{"theta": list(th), "p": p} for th, p in res.evaluated],
        }
        exit_code = 2 if res.rejected else 0
    elif workflow == "cs-theta":
        game = _build_game(config)
        partition = _build_partition(config["baseline"], game)
        tconf = _build_test_config(config, seed)
        res = confidence_set_theta(game, partition, data, tconf)
        payload = {
            "alpha": res.alpha,
            "records": [{"theta": list(th), "p": p, "retained": bool(p > res.alpha)}
                        for th, p in res.records],
            "retained": [list(th) for th in res.retained],
        }
    elif workflow == "seq-test":
        game = _build_game(config)
        chain = BaselineChain(tuple(_build_partition(b, game)
                                    for b in config["baselines"]))
        tconf = _build_test_config(config, seed)
        res = sequential_test(game, chain, data, tconf)
        levels = [{"baseline": lab, "p": p, "rejected": lab in res.rejected}
                  for lab, p in res.p_by_level]
        payload = {"levels": levels, "stop_index": res.stop_index,
                   "rejected": res.rejected, "alpha": res.alpha}
        exit_code = 2 if res.rejected else 0
    elif workflow == "cs-markets":
        game = _build_game(config)
        if "baseline_by_x" in config:
            baseline = [_build_partition(b, game) for b in config["baseline_by_x"]]
        else:
            baseline = _build_partition(config["baseline"], game)
        tconf = _build_test_config(config, seed)
        pvals = market_pvalues(game, baseline, data, tconf)
        flat = {x: v["p"] for x, v in pvals.items()}
        holm = holm_select(flat, tconf.alpha)
        bonf = bonferroni_select(flat, tconf.alpha)
        payload = {
            "alpha": tconf.alpha,
            "markets": [{"x": x, "label": data.covariate_labels[x],
                         "n_x": pvals[x]["n_x"], "p": pvals[x]["p"],
                         "p_is_lower_bound": pvals[x]["lower_bound"],
                         "bonferroni": "reject" if x in bonf.rejected else "retain",
                         "holm": "reject" if x in holm.rejected else "retain"}
                        for x in sorted(pvals)],
            "holm_retained": holm.retained,
            "bonferroni_retained": bonf.retained,
        }
    else:
        raise DomainError(f"unknown workflow {workflow!r}")

    envelope = _jsonable(_envelope(workflow, config, data, payload, warnings))
    _write_outputs(workflow, envelope, out_dir, figures)
    if cache_path:
        with open(cache_path, "w") as fh:
            json.dump({"payload": envelope["payload"], "warnings": envelope["warnings"],
                       "exit_code": exit_code}, fh, sort_keys=True)
    return envelope, exit_code


def _write_outputs(workflow, envelope, out_dir, figures):
    with open(os.path.join(out_dir, "result.json"), "w") as fh:
        json.dump(envelope, fh, indent=2, sort_keys=True)
    payload = envelope["payload"]
    if workflow == "cs-theta":
        records = [(r["theta"], r["p"]) for r in payload["records"]]
        reports.theta_cs_table(records, out_dir, payload["alpha"])
        if figures:
            reports.theta_cs_figure(records, out_dir, payload["alpha"])
    elif workflow == "mc-power":
        reports.power_table(payload["rows"], out_dir)
        if figures:
            reports.power_figure(payload["rows"], out_dir, payload["alpha"])
    elif workflow == "bce-bounds":
        reports.bounds_table(payload["rows"], out_dir)
        if figures:
            reports.bounds_figure(payload["rows"], out_dir)
    elif workflow == "cs-markets":
        from types import SimpleNamespace

        pv = {m["x"]: {"p": m["p"], "n_x": m["n_x"]} for m in payload["markets"]}
        holm = SimpleNamespace(rejected=[m["x"] for m in payload["markets"]
                                         if m["holm"] == "reject"])
        bonf = SimpleNamespace(rejected=[m["x"] for m in payload["markets"]
                                         if m["bonferroni"] == "reject"])
        labels = {m["x"]: m["label"] for m in payload["markets"]}
        reports.market_cs_table(pv, bonf, holm, labels, out_dir)
        if figures:
            reports.market_cs_figure(pv, bonf, holm, out_dir, payload["alpha"])
    elif workflow == "seq-test":
        levels = [(l["baseline"], l["p"], l["rejected"]) for l in payload["levels"]]
        reports.seq_test_table(levels, out_dir)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bcetest",
        description="Tests of information orderings in discrete games via "
                    "Bayes-correlated-equilibrium prediction sets.")
    sub = parser.add_subparsers(dest="workflow", required=True)
    for name, needs_data in [("test", True), ("cs-theta", True), ("seq-test", True),
                             ("cs-markets", True), ("mc-power", False),
                             ("bce-bounds", False)]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--data", required=needs_data,
                       help="market-level CSV (market_id, x_*, y_*)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", default="out")
        p.add_argument("--cache", default=None)
        p.add_argument("--verbose", action="store_true")
        p.add_argument("--no-figures", action="store_true")
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            config = json.load(fh)
        data = None
        if args.data:
            game_for_schema = _build_game(config)
            data = load_dataset(args.data, game_for_schema.spec)
            if args.verbose:
                print(data.summary())
        envelope, code = run(args.workflow, config, data, args.out,
                             seed=args.seed, threads=args.threads,
                             cache_dir=args.cache, verbose=args.verbose,
                             figures=not args.no_figures)
    except (DomainError, ParseError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {os.path.join(args.out, 'result.json')}")
    if args.workflow in ("test", "seq-test"):
        print(f"decision: {'reject' if code == 2 else 'fail-to-reject'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
