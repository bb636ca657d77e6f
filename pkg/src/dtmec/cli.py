"""Command-line entry point: solve, simulate, deploy, experiment bundles.

Output directory resolution: --outdir flag, then the DTMEC_OUTDIR
environment variable, then ./results. Every CSV carries a provenance
comment (version, config hash, seed) and is written atomically.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, csvio, deploy, schedmdp, simulator
from .config import ExperimentConfig, load_config
from .errors import ConfigError

FIGURE_IDS = ("fig-convergence", "fig-deploy-compare", "fig-total-cost", "fig-breakdown")

METRIC_FIELDS = ["policy", "p_tx", "q", "omega", "c",
                 "total_cost_mean", "total_cost_ci",
                 "avg_aoci_mean", "avg_aoci_ci",
                 "avg_update_cost_mean", "avg_update_cost_ci",
                 "update_rate_mean", "update_rate_ci"]


def provenance(cfg: ExperimentConfig) -> list:
    return [f"dtmec v{__version__}",
            f"config_hash={cfg.config_hash()} seed={cfg.seed} scenario={cfg.scenario}"]


def resolve_outdir(flag_value) -> Path:
    if flag_value:
        return Path(flag_value)
    env = os.environ.get("DTMEC_OUTDIR")
    return Path(env) if env else Path("results")


def _point_seeds(master_seed: int, count: int):
    return np.random.SeedSequence(master_seed).spawn(count)


# ---------------------------------------------------------------------------
# solve


def cmd_solve(cfg: ExperimentConfig, outdir: Path) -> dict:
    spec = cfg.mdp_spec()
    result = schedmdp.relative_policy_iteration(spec)
    comments = provenance(cfg)
    policy_path = outdir / "policy.csv"
    solve_path = outdir / "solve.csv"
    schedmdp.export_policy_csv(result.policy, policy_path, comments=comments)
    schedmdp.export_solve_csv(result, solve_path, comments=comments)
    return {"policy": policy_path, "solve": solve_path, "result": result}


# ---------------------------------------------------------------------------
# simulate


def _simulate_point(args):
    cfg, p_tx, q, omega, c, entropy = args
    spec = cfg.mdp_spec(p_tx=p_tx, q=q, omega=omega, update_cost=c)
    setup = cfg.simulation_setup(spec)
    solved = schedmdp.relative_policy_iteration(spec)
    policies = [
        simulator.zw_policy(),
        simulator.sac_policy(),
        simulator.optimal_threshold_policy(spec),
        simulator.threshold_policy(solved.policy),
    ]
    names = ["zw", "sac", "threshold", "solved"]
    rows = []
    for name, pol in zip(names, policies):
        # a fresh generator from the same entropy per policy: common random numbers
        mc = simulator.run_monte_carlo(pol, setup, cfg.simulation.num_runs,
                                       np.random.default_rng(entropy))
        rows.append([name, p_tx, q, omega, c,
                     mc.mean.total_avg_cost, mc.ci.total_avg_cost,
                     mc.mean.avg_aoci, mc.ci.avg_aoci,
                     mc.mean.avg_update_cost, mc.ci.avg_update_cost,
                     mc.mean.update_rate, mc.ci.update_rate])
    return rows


def cmd_simulate(cfg: ExperimentConfig, outdir: Path, jobs: int = 1) -> dict:
    sw = cfg.sweep
    points = list(itertools.product(sw.p_tx, sw.q, sw.omega, sw.update_cost))
    seeds = _point_seeds(cfg.seed, len(points))
    tasks = [(cfg, p, q, w, c, seeds[i]) for i, (p, q, w, c) in enumerate(points)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_simulate_point, tasks))
    else:
        chunks = [_simulate_point(t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]
    path = outdir / "metrics.csv"
    csvio.write_csv(path, METRIC_FIELDS, rows, comments=provenance(cfg))
    return {"metrics": path, "rows": rows}


# ---------------------------------------------------------------------------
# deploy


def _deploy_instance(cfg: ExperimentConfig, seed_seq, num_devices=None, num_bs=None,
                     iterations=None):
    """Train on one seeded instance; returns (env, trained, scenario)."""
    topo_cfg = cfg.topology_config(num_devices, num_bs)
    ss = seed_seq if isinstance(seed_seq, np.random.SeedSequence) else np.random.SeedSequence(seed_seq)
    scen_seed, env_seed, train_seed = ss.spawn(3)
    if cfg.latency.draw_sizes:
        scenario = deploy.sample_scenario(
            scen_seed, topo_cfg, cfg.radio_params(),
            history_bits_range=tuple(cfg.latency.history_bits_range),
            update_bits_range=tuple(cfg.latency.update_bits_range),
            backhaul_coeff=cfg.latency.backhaul_coeff,
            cycles_per_bit=cfg.latency.cycles_per_bit)
    else:
        from .netmodel import sample_topology
        topo = sample_topology(np.random.default_rng(scen_seed), topo_cfg)
        scenario = deploy.ScenarioParams(topo=topo, lat=cfg.latency_params(),
                                         radio=cfg.radio_params())
    reward = deploy.RewardParams(
        latency_weight=cfg.learner.latency_weight,
        per_dt_cost=cfg.learner.per_dt_cost,
        latency_scale=deploy.deployment_objective(
            deploy.nearest_baseline(scenario.topo, scenario.lat, scenario.radio),
            scenario.topo, scenario.lat, scenario.radio),
        cost_scale=scenario.topo.num_devices * max(cfg.learner.per_dt_cost, 1e-12))
    env = deploy.PlacementEnv(scenario.topo, scenario.lat, scenario.radio,
                              reward=reward, dynamics=cfg.dynamics_config(),
                              topo_config=topo_cfg,
                              rng=np.random.default_rng(env_seed))
    trained = deploy.actor_critic_train(env, cfg.learner_config(iterations),
                                        np.random.default_rng(train_seed))
    return env, trained, scenario


def cmd_deploy(cfg: ExperimentConfig, outdir: Path) -> dict:
    env, trained, scenario = _deploy_instance(cfg, cfg.seed)
    topo, lat, radio = scenario.topo, scenario.lat, scenario.radio
    eval_env = deploy.PlacementEnv(topo, lat, radio, reward=env.reward_params)
    greedy = trained.policy.greedy_solution(eval_env)
    obj_learned = deploy.deployment_objective(greedy, topo, lat, radio)
    obj_nearest = deploy.deployment_objective(
        deploy.nearest_baseline(topo, lat, radio), topo, lat, radio)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(4)[3])
    rand_objs = [deploy.deployment_objective(
        deploy.random_baseline(topo, rng, lat, radio), topo, lat, radio)
        for _ in range(cfg.sweep.num_seeds)]

    comments = provenance(cfg)
    curve_path = outdir / "cost_curve.csv"
    csvio.write_csv(curve_path, ["iteration", "deployment_cost"],
                    list(enumerate(trained.cost_curve)), comments=comments)
    sol_path = outdir / "solution.csv"
    csvio.write_csv(sol_path, ["device", "host_bs"],
                    list(enumerate(greedy.device_host)), comments=comments)

    within_oracle = (topo.num_bs <= deploy.ORACLE_MAX_BS
                     and topo.num_devices <= deploy.ORACLE_MAX_DEVICES)
    fields = ["method", "objective"]
    rows = [["learned", obj_learned],
            ["nearest", obj_nearest],
            ["random_mean", float(np.mean(rand_objs))]]
    oracle_obj = None
    if within_oracle:
        oracle_obj = deploy.exhaustive_oracle(topo, lat, radio).objective
        fields.append("oracle_gap")
        for row in rows:
            row.append(row[1] / oracle_obj - 1.0)
        rows.append(["oracle", oracle_obj, 0.0])
    cmp_path = outdir / "comparison.csv"
    csvio.write_csv(cmp_path, fields, rows, comments=comments)
    return {"cost_curve": curve_path, "solution": sol_path, "comparison": cmp_path,
            "objectives": {"learned": obj_learned, "nearest": obj_nearest,
                           "random_mean": float(np.mean(rand_objs)),
                           "oracle": oracle_obj}}


# ---------------------------------------------------------------------------
# experiment bundles


def _experiment_convergence(cfg: ExperimentConfig, outdir: Path) -> dict:
    rows = []
    for i, (k, b) in enumerate(cfg.sweep.convergence_pairs):
        _, trained, _ = _deploy_instance(cfg, np.random.SeedSequence((cfg.seed, i)),
                                         num_devices=k, num_bs=b)
        for it, cost in enumerate(trained.cost_curve):
            rows.append([int(k), int(b), it, float(cost)])
    path = outdir / "convergence.csv"
    csvio.write_csv(path, ["k", "b", "iteration", "deployment_cost"], rows,
                    comments=provenance(cfg))
    return {"convergence": path}


def _experiment_deploy_compare(cfg: ExperimentConfig, outdir: Path) -> dict:
    sw = cfg.sweep
    rows = []
    for k, b in itertools.product(sw.num_devices, sw.num_bs):
        objs = {"proposed": [], "nearest": [], "random": []}
        for s in range(sw.num_seeds):
            ss = np.random.SeedSequence((cfg.seed, k, b, s))
            env, trained, scenario = _deploy_instance(cfg, ss, num_devices=k, num_bs=b)
            topo, lat, radio = scenario.topo, scenario.lat, scenario.radio
            eval_env = deploy.PlacementEnv(topo, lat, radio, reward=env.reward_params)
            greedy = trained.policy.greedy_solution(eval_env)
            objs["proposed"].append(deploy.deployment_objective(greedy, topo, lat, radio))
            objs["nearest"].append(deploy.deployment_objective(
                deploy.nearest_baseline(topo, lat, radio), topo, lat, radio))
            rng = np.random.default_rng(ss.spawn(4)[3])
            objs["random"].append(deploy.deployment_objective(
                deploy.random_baseline(topo, rng, lat, radio), topo, lat, radio))
        for method, vals in objs.items():
            arr = np.asarray(vals)
            ci = (simulator.Z95 * arr.std(ddof=1) / np.sqrt(len(arr))
                  if len(arr) > 1 else 0.0)
            rows.append([int(k), int(b), method, float(arr.mean()), float(ci),
                         len(arr)])
    path = outdir / "deploy_compare.csv"
    csvio.write_csv(path, ["k", "b", "method", "objective_mean", "objective_ci",
                           "seeds"], rows, comments=provenance(cfg))
    return {"deploy_compare": path}


def _experiment_total_cost(cfg: ExperimentConfig, outdir: Path, jobs: int) -> dict:
    res = cmd_simulate(cfg, outdir, jobs=jobs)
    rows = [[r[0], r[1], r[2], r[3], r[4], r[5], r[6]] for r in res["rows"]]
    path = outdir / "total_cost.csv"
    csvio.write_csv(path, ["policy", "p_tx", "q", "omega", "c",
                           "total_cost_mean", "total_cost_ci"], rows,
                    comments=provenance(cfg))
    return {"total_cost": path, "metrics": res["metrics"]}


def _experiment_breakdown(cfg: ExperimentConfig, outdir: Path, jobs: int) -> dict:
    res = cmd_simulate(cfg, outdir, jobs=jobs)
    rows = [[r[0], r[1], r[2], r[3], r[4], r[7], r[9], r[5]] for r in res["rows"]]
    path = outdir / "breakdown.csv"
    csvio.write_csv(path, ["policy", "p_tx", "q", "omega", "c",
                           "avg_aoci", "avg_update_cost", "total_cost"], rows,
                    comments=provenance(cfg))
    return {"breakdown": path, "metrics": res["metrics"]}


def cmd_experiment(cfg: ExperimentConfig, figure_id: str, outdir: Path,
                   jobs: int = 1) -> dict:
    if figure_id not in FIGURE_IDS:
        raise ConfigError(f"unknown figure id {figure_id!r}; choose from {FIGURE_IDS}")
    if figure_id == "fig-convergence":
        return _experiment_convergence(cfg, outdir)
    if figure_id == "fig-deploy-compare":
        return _experiment_deploy_compare(cfg, outdir)
    if figure_id == "fig-total-cost":
        return _experiment_total_cost(cfg, outdir, jobs)
    return _experiment_breakdown(cfg, outdir, jobs)


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtmec",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="override a config value")
        p.add_argument("--outdir", help="output directory "
                       "(default: $DTMEC_OUTDIR or ./results)")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel workers for sweep points")

    for name in ("solve", "simulate", "deploy"):
        common(sub.add_parser(name))
    exp = sub.add_parser("experiment")
    exp.add_argument("figure_id", choices=FIGURE_IDS)
    common(exp)
    common(sub.add_parser("validate-config"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    outdir = resolve_outdir(args.outdir)
    try:
        if args.command == "validate-config":
            print(f"configuration OK (hash {cfg.config_hash()})")
            return 0
        outdir.mkdir(parents=True, exist_ok=True)
        if args.command == "solve":
            out = cmd_solve(cfg, outdir)
            print(f"wrote {out['policy']} and {out['solve']} "
                  f"(gain {out['result'].gain:.6f}, {out['result'].iterations} iterations)")
        elif args.command == "simulate":
            out = cmd_simulate(cfg, outdir, jobs=args.jobs)
            print(f"wrote {out['metrics']} ({len(out['rows'])} rows)")
        elif args.command == "deploy":
            out = cmd_deploy(cfg, outdir)
            objs = out["objectives"]
            print(f"wrote {out['cost_curve']}, {out['solution']}, {out['comparison']} "
                  f"(learned {objs['learned']:.4f} s, nearest {objs['nearest']:.4f} s)")
        elif args.command == "experiment":
            out = cmd_experiment(cfg, args.figure_id, outdir, jobs=args.jobs)
            paths = ", ".join(str(p) for p in out.values() if isinstance(p, Path))
            print(f"wrote {paths}")
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:   # surface solver/training failures as diagnostics
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
