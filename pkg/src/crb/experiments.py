"""Experiment families behind the CLI, one run directory per invocation.

Every runner writes three kinds of artifact into its output directory: a
snapshot of the resolved config, one or more CSVs with the measured series,
and a summary.json carrying the config hash, master seed, code version, and
a pass verdict where the experiment has one. All randomness descends from
the config's master seed, so reruns reproduce files byte for byte.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import replace

import numpy as np

from .config_io import AppConfig, ConfigError, dump_config
from .demand_response import build_dr_instance
from .dual import relaxed_value, solve_dual
from .index_policy import baseline_policy, index_policy_from_report
from .learner import (
    InstanceSkeleton,
    act,
    default_learner_dual_kwargs,
    end_epoch,
    init_learner,
    observe,
    plan_epoch,
)
from .model import CrbInstance
from .simulator import (
    EnvState,
    OracleSizeError,
    STREAM_ARMS,
    STREAM_CONTEXT,
    STREAM_INIT,
    _sim_tensors,
    brute_force_primal,
    monte_carlo_value,
    rollout,
    sample_initial,
    step,
    substream,
    truncation_bound,
)
from .version import __version__


def _fmt(x) -> str:
    return repr(float(x))


def _prepare(out_dir) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _write_summary(cfg: AppConfig, out_dir, name: str, payload: dict) -> dict:
    summary = {
        "experiment": name,
        "config_hash": cfg.config_hash(),
        "master_seed": cfg.experiment.master_seed,
        "version": __version__,
    }
    summary.update(payload)
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    dump_config(cfg, os.path.join(out_dir, "config.yaml"))
    return summary


def _report_relaxed_value(instance, report) -> float:
    tables = [t for (t, _, _) in report.per_arm]
    return relaxed_value(
        instance, report.lambda_star, tables, report.b_table
    )


def run_dual_convergence(cfg: AppConfig, out_dir) -> dict:
    """Multiplier iteration on the configured instance, full history logged."""
    _prepare(out_dir)
    instance = cfg.build_instance()
    report = solve_dual(instance, **cfg.dual.solver_kwargs())

    G = instance.num_contexts
    lams = [it.lam for it in report.history] + [report.lambda_star.values]
    with open(os.path.join(out_dir, "dual_convergence.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["iteration"]
            + [f"lambda_{g}" for g in range(G)]
            + [f"slack_{g}" for g in range(G)]
            + ["step", "delta_norm"]
        )
        for k, it in enumerate(report.history):
            delta_norm = float(np.max(np.abs(lams[k + 1] - lams[k])))
            w.writerow(
                [k]
                + [_fmt(x) for x in it.lam]
                + [_fmt(x) for x in it.slack]
                + [_fmt(it.step), _fmt(delta_norm)]
            )

    lam = report.lambda_star.values
    return _write_summary(
        cfg,
        out_dir,
        "dual-convergence",
        {
            "iterations": report.iterations,
            "converged": report.converged,
            "lambda_star": [float(x) for x in lam],
            "lambda_spread": float(lam.max() - lam.min()),
            "relaxed_value": _report_relaxed_value(instance, report),
            "pass": bool(report.converged),
        },
    )


def run_asymptotic_sweep(cfg: AppConfig, out_dir) -> dict:
    """Per-arm optimality gap of the index policy as the fleet grows.

    Requires a homogeneous demand-response config (fixed load) so V_Rel/N is
    the same single-arm quantity at every N and gaps are comparable.
    """
    _prepare(out_dir)
    if cfg.dr is None:
        raise ConfigError("asymptotic-sweep requires a 'dr' config section")
    if cfg.dr.load_low != cfg.dr.load_high:
        raise ConfigError(
            "asymptotic-sweep requires load_low == load_high (homogeneous arms)"
        )
    exp = cfg.experiment
    rows = []
    for n in exp.sweep_users:
        dr_n = replace(cfg.dr, num_users=int(n))
        instance = build_dr_instance(dr_n)
        report = solve_dual(instance, **cfg.dual.solver_kwargs())
        v_rel = _report_relaxed_value(instance, report) / n
        policy = index_policy_from_report(instance, report, mode=exp.selection_mode)
        mean, stderr = monte_carlo_value(
            instance, policy, exp.horizon, exp.sweep_runs, exp.master_seed
        )
        rows.append(
            {
                "N": int(n),
                "v_rel_per_arm": v_rel,
                "v_ind_per_arm": mean / n,
                "stderr_per_arm": stderr / n,
                "gap_per_arm": v_rel - mean / n,
                "dual_converged": report.converged,
            }
        )

    with open(os.path.join(out_dir, "asymptotic_sweep.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["N", "v_rel_per_arm", "v_ind_per_arm", "stderr_per_arm", "gap_per_arm"]
        )
        for r in rows:
            w.writerow(
                [r["N"]]
                + [
                    _fmt(r[k])
                    for k in (
                        "v_rel_per_arm",
                        "v_ind_per_arm",
                        "stderr_per_arm",
                        "gap_per_arm",
                    )
                ]
            )

    gaps = [r["gap_per_arm"] for r in rows]
    all_positive = all(g > 0.0 for g in gaps)
    shrinks = len(gaps) >= 2 and gaps[-1] < gaps[0] / 2.0
    return _write_summary(
        cfg,
        out_dir,
        "asymptotic-sweep",
        {
            "rows": rows,
            "gap_all_positive": all_positive,
            "gap_halves": shrinks,
            "pass": bool(all_positive and shrinks),
        },
    )


def run_baseline_comparison(cfg: AppConfig, out_dir) -> dict:
    """Context-aware index policy vs context-blind baseline, coupled seeds.

    Each run id reuses the same substreams for both policies, so they see
    identical context trajectories and arm noise; per-run differences are
    attributable to the decisions alone.
    """
    _prepare(out_dir)
    instance = cfg.build_instance()
    exp = cfg.experiment
    kwargs = cfg.dual.solver_kwargs()
    report = solve_dual(instance, **kwargs)
    crb = index_policy_from_report(instance, report, mode=exp.selection_mode)
    base = baseline_policy(instance, mode=exp.selection_mode, **kwargs)

    pairs = np.empty((exp.runs, 2))
    for r in range(exp.runs):
        pairs[r, 0] = rollout(
            instance, crb, exp.horizon, exp.master_seed, run_index=r, keep_log=False
        ).discounted_total
        pairs[r, 1] = rollout(
            instance, base, exp.horizon, exp.master_seed, run_index=r, keep_log=False
        ).discounted_total

    with open(os.path.join(out_dir, "baseline_comparison.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["run", "crb_total", "baseline_total"])
        for r in range(exp.runs):
            w.writerow([r, _fmt(pairs[r, 0]), _fmt(pairs[r, 1])])

    win_rate = float(np.mean(pairs[:, 0] > pairs[:, 1]))
    crb_mean = float(pairs[:, 0].mean())
    base_mean = float(pairs[:, 1].mean())
    return _write_summary(
        cfg,
        out_dir,
        "baseline-comparison",
        {
            "runs": exp.runs,
            "crb_mean": crb_mean,
            "baseline_mean": base_mean,
            "win_rate": win_rate,
            "dual_converged": report.converged,
            "pass": bool(win_rate >= 0.95 and crb_mean > base_mean),
        },
    )


def _tv_errors(state, instance: CrbInstance):
    """Max total-variation gap between estimates and truth, by visit depth.

    Returns (max over visited tuples, max over tuples with >= 1e4 visits or
    None if no tuple is that deep, deep tuple count, deepest visit count).
    """
    tv_visited = 0.0
    tv_deep = None
    deep_tuples = 0
    max_visits = 0
    for m, arm in zip(state.models, instance.arms):
        est = m.estimate(state.smoothing)
        tv = 0.5 * np.sum(np.abs(est - arm.transition), axis=-1)
        visited = m.visit_counts > 0
        if visited.any():
            tv_visited = max(tv_visited, float(tv[visited].max()))
        deep = m.visit_counts >= 10_000
        deep_tuples += int(deep.sum())
        if deep.any():
            worst = float(tv[deep].max())
            tv_deep = worst if tv_deep is None else max(tv_deep, worst)
        max_visits = max(max_visits, int(m.visit_counts.max()))
    return tv_visited, tv_deep, deep_tuples, max_visits


def run_online_learning(cfg: AppConfig, out_dir) -> dict:
    """Learner loop against the true environment, with a known-model twin.

    The twin runs the known-model index policy on a coupled environment
    (same context and arm-noise streams) for the same number of steps, and
    both report the same per-epoch discounted reward statistic, so the final
    epochs compare steady state against steady state.
    """
    _prepare(out_dir)
    instance = cfg.build_instance()
    exp = cfg.experiment
    beta = instance.discount
    kwargs = cfg.dual.solver_kwargs()

    known_report = solve_dual(instance, **kwargs)
    known_policy = index_policy_from_report(
        instance, known_report, mode=exp.selection_mode
    )

    # The planner re-solves the dual every epoch on noisy estimates; the
    # looser learner profile keeps 50-epoch runs inside their time budget
    # without touching the known-model reference solve above.
    state = init_learner(
        InstanceSkeleton.from_instance(instance),
        epoch_length=exp.epoch_length,
        seed=exp.learner_seed,
        dual_kwargs=default_learner_dual_kwargs(),
    )

    tensors = _sim_tensors(instance)

    def fresh_env(run_index: int) -> EnvState:
        rng_init = substream(exp.master_seed, run_index, STREAM_INIT)
        env = EnvState(
            t=0,
            g=0,
            states=np.zeros(instance.num_arms, dtype=np.int64),
            rng_context=substream(exp.master_seed, run_index, STREAM_CONTEXT),
            rng_arms=substream(exp.master_seed, run_index, STREAM_ARMS),
        )
        env.g, env.states = sample_initial(instance, rng_init)
        return env

    env = fresh_env(0)
    env_known = fresh_env(0)

    trace_path = os.path.join(out_dir, "learner_trace.csv")
    epoch_rows = []
    with open(trace_path, "w", newline="") as tf:
        tw = csv.writer(tf)
        tw.writerow(["t", "epoch", "epsilon", "g", "reward_sum", "explored"])
        t_global = 0
        for epoch in range(exp.epochs):
            plan_epoch(state)
            eps = state.epsilon
            learner_reward = 0.0
            known_reward = 0.0
            disc = 1.0
            explored_steps = 0
            for _ in range(exp.epoch_length):
                actions, explored = act(state, env.g, env.states)
                g_prev, s_prev = env.g, env.states.copy()
                rewards, env = step(instance, env, actions, tensors=tensors)
                observe(state, g_prev, s_prev, actions, env.states)

                known_actions = known_policy(env_known.g, env_known.states)
                known_r, env_known = step(
                    instance, env_known, known_actions, tensors=tensors
                )

                r_sum = float(rewards.sum())
                learner_reward += disc * r_sum
                known_reward += disc * float(known_r.sum())
                disc *= beta
                explored_steps += int(explored)
                tw.writerow(
                    [t_global, epoch, _fmt(eps), g_prev, _fmt(r_sum), int(explored)]
                )
                t_global += 1
            end_epoch(state)
            tv_visited, tv_deep, deep_tuples, max_visits = _tv_errors(state, instance)
            epoch_rows.append(
                {
                    "epoch": epoch,
                    "learner_reward": learner_reward,
                    "known_reward": known_reward,
                    "epsilon": eps,
                    "tv_max_visited": tv_visited,
                    "explored_steps": explored_steps,
                }
            )

    with open(os.path.join(out_dir, "online_learning.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            [
                "epoch",
                "learner_reward",
                "known_reward",
                "epsilon",
                "tv_max_visited",
                "explored_steps",
            ]
        )
        for r in epoch_rows:
            w.writerow(
                [
                    r["epoch"],
                    _fmt(r["learner_reward"]),
                    _fmt(r["known_reward"]),
                    _fmt(r["epsilon"]),
                    _fmt(r["tv_max_visited"]),
                    r["explored_steps"],
                ]
            )

    tv_visited, tv_deep, deep_tuples, max_visits = _tv_errors(state, instance)
    tail = min(5, len(epoch_rows))
    learner_tail = float(
        np.mean([r["learner_reward"] for r in epoch_rows[-tail:]])
    )
    known_tail = float(np.mean([r["known_reward"] for r in epoch_rows[-tail:]]))
    ratio = learner_tail / known_tail if known_tail != 0.0 else float("nan")
    tv_ok = tv_deep is None or tv_deep <= 0.05
    reward_ok = np.isfinite(ratio) and ratio >= 0.9
    return _write_summary(
        cfg,
        out_dir,
        "online-learning",
        {
            "epochs": exp.epochs,
            "final_epochs_learner_mean": learner_tail,
            "final_epochs_known_mean": known_tail,
            "reward_ratio": float(ratio),
            "tv_max_visited": tv_visited,
            "tv_max_deep": tv_deep,
            "deep_tuple_count": deep_tuples,
            "max_tuple_visits": max_visits,
            "dual_failures": list(state.dual_failures),
            "pass": bool(tv_ok and reward_ok),
        },
    )


def run_sandwich_check(cfg: AppConfig, out_dir) -> dict:
    """Relaxed bound vs exact primal vs index policy on one tiny instance.

    Verifies, with a truncation allowance at the configured horizon H,
    relaxed_value + bound >= exact primal(H) >= index-policy Monte Carlo - 3
    standard errors. Caps are checked before any heavy work.
    """
    _prepare(out_dir)
    instance = cfg.build_instance()
    exp = cfg.experiment
    joint = instance.num_contexts * instance.num_states**instance.num_arms
    if joint > 100_000:
        raise OracleSizeError(f"joint space {joint} exceeds 1e5; shrink the instance")
    if exp.horizon > 6:
        raise OracleSizeError(
            f"horizon {exp.horizon} exceeds the exact-DP cap 6; set experiment.horizon <= 6"
        )

    report = solve_dual(instance, **cfg.dual.solver_kwargs())
    v_rel = _report_relaxed_value(instance, report)
    v_pri = brute_force_primal(instance, exp.horizon)
    policy = index_policy_from_report(instance, report, mode=exp.selection_mode)
    v_ind, stderr = monte_carlo_value(
        instance, policy, exp.horizon, exp.runs, exp.master_seed
    )
    bound = truncation_bound(instance, exp.horizon)

    upper_ok = v_rel + bound >= v_pri - 1e-9
    lower_ok = v_pri >= v_ind - 3.0 * stderr - 1e-9
    payload = {
        "v_rel": v_rel,
        "v_pri_exact": v_pri,
        "v_ind_mc": v_ind,
        "v_ind_stderr": stderr,
        "truncation_bound": bound,
        "horizon": exp.horizon,
        "pass": bool(upper_ok and lower_ok),
    }
    with open(os.path.join(out_dir, "sandwich_check.json"), "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return _write_summary(cfg, out_dir, "sandwich-check", payload)
