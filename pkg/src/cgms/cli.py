"""Command-line harness: training runs, single rollouts, certification,
governor traces, robustness reports, and the uncertified ablation.

Exit codes: 0 success, 2 configuration error, 3 certification failure in
certified mode.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import robustness as rb
from .config import compile_setup, load_config, save_config
from .errors import CertifiedFloorError, ConfigError, MarginTooSmallError
from .gains import SlackParams, build_gain_schedule
from .learning import (
    MODE_UNCERTIFIED_AFTER_VIA,
    initial_policy,
    rollout,
    schedule_from_rollout,
    train,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CERTIFICATION = 3


def _fmt(v):
    return format(float(v), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, int) else str(v)
                              for v in row) + "\n")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(args):
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / ".write-test").write_text("")
        (out / ".write-test").unlink()
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {exc}") from exc
    return out


def _load(args, mode=None):
    overrides = {}
    if args.seed is not None:
        overrides["run_seed"] = args.seed
    if args.scenario is not None:
        overrides["run_scenario"] = args.scenario
    if mode is not None:
        overrides["run_mode"] = mode
    cfg = load_config(args.config, overrides=overrides)
    return cfg


TRACE_HEADER = ["update", "rollout", "cost", "cost_K", "cost_acc",
                "cost_track", "lamA_max", "lamC_max", "beta_star_min"]


def _write_trace(path, rows):
    _write_csv(path, TRACE_HEADER,
               [[r["update"], r["rollout"], r["cost"], r["cost_K"],
                 r["cost_acc"], r["cost_track"], r["lamA_max"], r["lamC_max"],
                 r["beta_star_min"]] for r in rows])


def _summary(cfg, setup, result, wall_time):
    rows = result.trace_rows()
    lam_a = max(r["lamA_max"] for r in rows)
    lam_c = max(r["lamC_max"] for r in rows)
    final_ro = rollout(result.policy, None, setup)
    rmse = np.sqrt(((final_ro.x - final_ro.x_d) ** 2).mean(axis=0))
    return {
        "schema_version": 1,
        "scenario": cfg.run_scenario,
        "mode": cfg.run_mode,
        "seed": cfg.run_seed,
        "initial_mean_cost": result.initial_mean_cost,
        "final_mean_cost": result.final_mean_cost,
        "certificate_pass_rate": float(np.mean(
            [r["lamA_max"] <= 0 and r["lamC_max"] <= 0 for r in rows])),
        "min_margin_lamA": lam_a,
        "min_margin_lamC": lam_c,
        "beta_star_min": min(r["beta_star_min"] for r in rows),
        "saturation_events": len(result.saturation_events),
        "rmse_per_axis": rmse.tolist(),
        "wall_time_s": wall_time,
    }


def cmd_train(args):
    cfg = _load(args)
    out = _out_dir(args)
    setup, noise = compile_setup(cfg)
    t0 = time.perf_counter()
    result = train(setup, noise=noise, updates=cfg.run_updates,
                   rollouts_per_update=cfg.run_rollouts,
                   beta_softmax=cfg.learning_softmax_sharpness)
    wall = time.perf_counter() - t0
    _write_trace(out / "learning_trace.csv", result.trace_rows())
    _write_json(out / "theta_initial.json", result.records[0].theta.to_dict())
    _write_json(out / "theta_final.json", result.policy.to_dict())
    _write_json(out / "summary.json", _summary(cfg, setup, result, wall))
    _write_json(out / "saturation_events.json", result.saturation_events)
    save_config(cfg, out / "resolved_config.ini")
    return EXIT_OK


def cmd_rollout(args):
    cfg = _load(args)
    out = _out_dir(args)
    setup, _ = compile_setup(cfg)
    policy = _policy_arg(args, setup)
    ro = rollout(policy, None, setup)
    header = (["t"] + [f"x{i + 1}" for i in range(setup.m)]
              + [f"xd{i + 1}" for i in range(setup.m)]
              + [f"tau{i + 1}" for i in range(setup.model.n)] + ["beta"])
    rows = np.column_stack([ro.t, ro.x, ro.x_d, ro.torque, ro.beta])
    _write_csv(out / "trajectory.csv", header, rows)
    schedule_from_rollout(ro, setup).to_csv(out / "gains.csv")
    return EXIT_OK


def cmd_certify(args):
    cfg = _load(args)
    out = _out_dir(args)
    setup, _ = compile_setup(cfg)
    policy = _policy_arg(args, setup)
    schedule = _policy_schedule(policy, setup)
    report = schedule.report()
    _write_json(out / "certificate.json", report.to_dict())
    _write_csv(out / "eigtrace.csv", ["t", "lamA", "lamC"],
               np.column_stack([schedule.t, schedule.lam_A, schedule.lam_C]))
    if not report.passes:
        return EXIT_CERTIFICATION
    return EXIT_OK


def cmd_govern(args):
    cfg = _load(args)
    out = _out_dir(args)
    setup, _ = compile_setup(cfg)
    policy = _policy_arg(args, setup)
    ro = rollout(policy, None, setup)
    _write_csv(out / "beta_trace.csv", ["t", "beta_star"],
               np.column_stack([ro.t, ro.beta]))
    _write_json(out / "saturation_events.json", ro.saturation_events)
    return EXIT_OK


def cmd_robustness(args):
    cfg = _load(args)
    out = _out_dir(args)
    setup, _ = compile_setup(cfg)
    policy = _policy_arg(args, setup)
    schedule = _policy_schedule(policy, setup)
    report = {"u_bar": args.u_bar, "schedule": schedule.report().to_dict()}
    try:
        inp = rb.inputs_from_schedule(schedule, args.u_bar, optimize=True)
        res = rb.uub_constants(inp)
        residuals = rb.standard_residuals(args.u_bar, setup.m)
        diss = rb.dissipation_check(schedule, inp, residuals[2])
        inside, margin = rb.uub_empirical(schedule, inp, residuals)
        report.update({
            "inputs": {"gamma": inp.gamma, "eta": inp.eta,
                       "h_min": inp.h_min, "h_max": inp.h_max,
                       "k_lower": inp.k_lower, "k_upper": inp.k_upper,
                       "d_upper": inp.d_upper, "eps_D": inp.eps_D,
                       "eps_K": inp.eps_K},
            "constants": res.to_dict(),
            "dissipation": diss,
            "uub": {"inside": inside, "margin": margin},
        })
    except MarginTooSmallError as exc:
        report["error"] = str(exc)
    _write_json(out / "robustness.json", report)
    return EXIT_OK


def cmd_ablate(args):
    cfg = _load(args, mode=MODE_UNCERTIFIED_AFTER_VIA)
    out = _out_dir(args)
    setup, noise = compile_setup(cfg)
    t_hat = setup.weights.t_hat
    post = setup.tgrid > t_hat
    eig_rows = []

    def hook(update, r_idx, ro):
        if np.any(post):
            eig_rows.append([update, r_idx,
                             float(ro.lam_A[post].max()),
                             float(ro.lam_C[post].max())])

    t0 = time.perf_counter()
    result = train(setup, noise=noise, updates=cfg.run_updates,
                   rollouts_per_update=cfg.run_rollouts,
                   beta_softmax=cfg.learning_softmax_sharpness,
                   rollout_hook=hook)
    wall = time.perf_counter() - t0
    _write_csv(out / "ablate_eigs.csv",
               ["update", "rollout", "lamA_max_post_via", "lamC_max_post_via"],
               eig_rows)
    _write_trace(out / "learning_trace.csv", result.trace_rows())
    _write_json(out / "summary.json", _summary(cfg, setup, result, wall))
    save_config(cfg, out / "resolved_config.ini")
    return EXIT_OK


def _policy_arg(args, setup):
    if getattr(args, "policy", None):
        from .learning import PolicyParams
        with open(args.policy) as fh:
            return PolicyParams.from_dict(json.load(fh))
    return initial_policy(setup)


def _policy_schedule(policy, setup):
    sp = SlackParams(theta_d=policy.theta_d, theta_k=policy.theta_k,
                     basis=setup.slack_basis, m=setup.m)
    return build_gain_schedule(sp, setup.alpha, setup.H, setup.dmp.tau,
                               setup.k_init * np.eye(setup.m), setup.tgrid)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cgms",
        description="Certified variable-impedance policy learning harness")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "train": cmd_train,
        "rollout": cmd_rollout,
        "certify": cmd_certify,
        "govern": cmd_govern,
        "robustness": cmd_robustness,
        "ablate": cmd_ablate,
    }
    for name, fn in commands.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="configuration file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--scenario", default=None,
                       choices=sorted(set(list("s" + str(i) for i in range(1, 6))
                                          + ["handover"])))
        if name in ("rollout", "certify", "govern", "robustness"):
            p.add_argument("--policy", default=None,
                           help="policy parameters JSON (default: initial)")
        if name == "robustness":
            p.add_argument("--u-bar", dest="u_bar", type=float, default=0.01)
        p.set_defaults(func=fn)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CertifiedFloorError as exc:
        print(f"certification failure: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATION


if __name__ == "__main__":
    sys.exit(main())
