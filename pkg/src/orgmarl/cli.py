"""Command-line entry point: validate specs, train (reference or
organizationally constrained), evaluate, mine implicit organizations, build
comparison reports, and serve the wire-protocol engine.

Every command is re-runnable: identical inputs and seeds produce identical
artifacts, and run directories are self-describing (config snapshot plus
package version, fixed file names, no timestamps).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .bridge import BridgeServer
from .envs.base import DecPomdp
from .envs.predator_prey import predator_prey_env
from .envs.warehouse import warehouse_env
from .guides import Linkers, linkers_from_dict, validate_linkers
from .metrics import (
    MetricsReport,
    report as build_report,
    robustness_score,
    write_csv,
    write_json,
    write_long_csv,
)
from .orgspec import OrgSpec, spec_from_dict, validate
from .temm import (
    TemmParams,
    dendrogram_dot,
    run_temm,
    save_inferred_spec,
    save_report,
    transitions_dot,
)
from .training import (
    EvalLog,
    TrainConfig,
    evaluate,
    load_curve,
    load_policy,
    save_curve,
    save_policy,
    train,
)

ENV_KINDS = {
    "predator_prey": predator_prey_env,
    "warehouse": warehouse_env,
}


class CliError(SystemExit):
    def __init__(self, message: str):
        print(f"error: {message}", file=sys.stderr)
        super().__init__(2)


def make_env(env_block: dict, start_shift: tuple[int, int] = (0, 0)) -> DecPomdp:
    block = dict(env_block)
    kind = block.pop("kind", None)
    factory = ENV_KINDS.get(kind)
    if factory is None:
        raise CliError(f"unknown env kind {kind!r}; known: {sorted(ENV_KINDS)}")
    if start_shift != (0, 0):
        block["start_shift"] = tuple(start_shift)
    return factory(block)


def load_config(path: str | Path) -> dict:
    path = Path(path)
    config = json.loads(path.read_text(encoding="utf-8"))
    config["_dir"] = str(path.parent)
    return config


def resolve_org(config: dict) -> tuple[OrgSpec, Linkers] | None:
    org = config.get("org")
    if not org:
        return None
    spec_ref = org.get("spec")
    if isinstance(spec_ref, str):
        spec_path = Path(config.get("_dir", ".")) / spec_ref
        document = json.loads(spec_path.read_text(encoding="utf-8"))
    else:
        document = spec_ref
    return spec_from_dict(document), linkers_from_dict(document)


def org_mode(config: dict) -> str:
    if not config.get("org"):
        return "none"
    return "agr" if config.get("_agr") else "full"


def build_env_and_org(config: dict, seed: int, start_shift=(0, 0)):
    """Environment plus (spec, linkers) per the config's org mode."""
    env = make_env(config["env"], start_shift)
    resolved = resolve_org(config)
    if resolved is None:
        return env, None, None
    spec, linkers = resolved
    if config.get("_agr"):
        # Roles-only ablation: masks and penalties stay, the whole
        # functional/deontic layer (goal bonuses) is removed.
        spec = dataclasses.replace(spec, deontic=())
        linkers = linkers.without_goal_guides()
    diagnostics = validate(spec)
    if diagnostics:
        raise CliError("organizational spec invalid:\n" + "\n".join(map(str, diagnostics)))
    problems = validate_linkers(
        spec, linkers, list(env.agents), {a: env.act_labels(a) for a in env.agents}
    )
    if problems:
        raise CliError("linker configuration invalid:\n" + "\n".join(map(str, problems)))
    from .envs.wrapper import OrgWrapper

    return OrgWrapper(env, spec, linkers, seed=seed), spec, linkers


def snapshot_config(config: dict) -> dict:
    out = {k: v for k, v in config.items() if not k.startswith("_")}
    out["org_mode"] = org_mode(config)
    out["_agr"] = bool(config.get("_agr"))
    out["version"] = __version__
    resolved = resolve_org(config)
    if resolved is not None and isinstance(config.get("org", {}).get("spec"), str):
        # Inline the document so the run directory is self-contained.
        spec_path = Path(config["_dir"]) / config["org"]["spec"]
        out["org"] = {"spec": json.loads(spec_path.read_text(encoding="utf-8"))}
    return out


def temm_params(config: dict, overrides: argparse.Namespace | None = None) -> TemmParams:
    block = dict(config.get("temm", {}))
    if overrides is not None:
        if overrides.k is not None:
            block["k"] = overrides.k
        if overrides.tau is not None:
            block["role_threshold"] = overrides.tau
        if overrides.sample_steps is not None:
            block["sample_steps"] = overrides.sample_steps or None
        if overrides.temm_seed is not None:
            block["seed"] = overrides.temm_seed
    known = {f.name for f in dataclasses.fields(TemmParams)}
    unknown = set(block) - known
    if unknown:
        raise CliError(f"unknown temm parameters: {sorted(unknown)}")
    if "k_range" in block:
        block["k_range"] = tuple(block["k_range"])
    return TemmParams(**block)


# ---------------------------------------------------------------------------
# Commands


def cmd_validate(args: argparse.Namespace) -> int:
    document = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    spec = spec_from_dict(document)
    diagnostics = validate(spec)
    linkers = linkers_from_dict(document)
    if not linkers.empty and not diagnostics:
        agents = sorted(linkers.ar)
        diagnostics = validate_linkers(spec, linkers, agents)
    for diag in diagnostics:
        print(diag)
    if not diagnostics:
        print(f"{args.spec}: ok")
    return 1 if diagnostics else 0


def _run_name(config: dict, seed: int) -> str:
    mode = org_mode(config)
    suffix = {"none": "rb", "full": "ob", "agr": "agr"}[mode]
    return f"{config.get('name', 'run')}-{suffix}-s{seed}"


def _seeds(args: argparse.Namespace, config: dict) -> list[int]:
    if args.seeds:
        text = args.seeds
        if ".." in text:
            lo, hi = text.split("..", 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    if args.seed is not None:
        return [args.seed]
    return [int(config.get("train", {}).get("seed", 0))]


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.no_org:
        config["org"] = None
    if args.agr:
        if not config.get("org"):
            raise CliError("--agr needs an org block in the config")
        config["_agr"] = True
    train_block = dict(config.get("train", {}))
    if args.episodes is not None:
        train_block["episodes"] = args.episodes
    out_root = Path(args.out)
    for seed in _seeds(args, config):
        train_block["seed"] = seed
        tc = TrainConfig(**train_block)
        env, _, _ = build_env_and_org(config, seed)
        result = train(env, tc)
        run_dir = out_root / _run_name(config, seed)
        run_dir.mkdir(parents=True, exist_ok=True)
        snapshot = snapshot_config(config)
        snapshot["train"] = dataclasses.asdict(tc)
        (run_dir / "config.json").write_text(
            json.dumps(snapshot, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        save_policy(result.policies, run_dir / "policy.json")
        save_curve(result.curve, run_dir / "curve.csv")
        print(f"trained {run_dir} ({tc.algorithm}, {tc.episodes} episodes, seed {seed})")
    return 0


def _load_run(run_dir: Path) -> dict:
    config_path = run_dir / "config.json"
    if not config_path.exists():
        raise CliError(f"{run_dir} is not a run directory (missing config.json)")
    config = json.loads(config_path.read_text(encoding="utf-8"))
    config["_dir"] = str(run_dir)
    config["_agr"] = bool(config.get("_agr"))
    return config


def cmd_eval(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    config = _load_run(run_dir)
    episodes = args.episodes or int(config.get("eval", {}).get("episodes", 100))
    seed = args.seed if args.seed is not None else int(config.get("eval", {}).get("seed", 0))
    env, _, _ = build_env_and_org(config, seed)
    policies = load_policy(run_dir / "policy.json")
    log = evaluate(env, policies, episodes=episodes, seed=seed)
    log.save(run_dir / "eval")
    successes = sum(1 for e in log.episodes if e.success)
    print(
        f"evaluated {run_dir}: {episodes} episodes, {successes} successful, "
        f"mean return {sum(log.returns()) / episodes:.3f}"
    )
    return 0


def cmd_temm(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    config = _load_run(run_dir)
    eval_dir = run_dir / "eval"
    if not (eval_dir / "trajectories.log").exists():
        raise CliError(f"{run_dir} has no eval logs; run `orgmarl eval` first")
    log = EvalLog.load(eval_dir)
    params = temm_params(config, args)
    temm_dir = run_dir / "temm"
    temm_dir.mkdir(parents=True, exist_ok=True)
    report_obj, dendrogram, graph = run_temm(log.joint_histories(), params)
    save_report(report_obj, temm_dir / "report.json")
    (temm_dir / "dendrogram.dot").write_text(
        dendrogram_dot(dendrogram, report_obj.roles), encoding="utf-8"
    )
    if graph is not None:
        (temm_dir / "transitions.dot").write_text(transitions_dot(graph), encoding="utf-8")
    save_inferred_spec(report_obj, temm_dir / "inferred_orgspec.json")
    print(
        f"mined {run_dir}: {len(report_obj.roles)} roles, {len(report_obj.goals)} goals, "
        f"fit {report_obj.org_fit:.3f} (structural {report_obj.structural_fit:.3f}, "
        f"functional {report_obj.functional_fit:.3f})"
    )
    return 0


def _metrics_for_run(run_dir: Path, robustness_episodes: int) -> MetricsReport:
    config = _load_run(run_dir)
    curve = load_curve(run_dir / "curve.csv")
    log = EvalLog.load(run_dir / "eval")
    report_path = run_dir / "temm" / "report.json"
    temm_report = None
    if report_path.exists():
        from .temm import TemmReport

        raw = json.loads(report_path.read_text(encoding="utf-8"))
        temm_report = TemmReport(
            roles=[],
            goals=[],
            plans=[],
            missions=[],
            deontics=[],
            structural_fit=float(raw["structural_fit"]),
            functional_fit=float(raw["functional_fit"]),
            org_fit=float(raw["org_fit"]),
            per_agent_fit=raw.get("per_agent_fit", {}),
            params=TemmParams(),
        )
    resolved = resolve_org(config)
    spec, linkers = resolved if resolved else (None, None)
    seed = int(config.get("eval", {}).get("seed", 0))
    policies = load_policy(run_dir / "policy.json")

    def factory(shift):
        env, _, _ = build_env_and_org(config, seed, start_shift=shift)
        return env

    robustness = robustness_score(factory, policies, episodes=robustness_episodes, seed=seed)
    metrics = build_report(
        env_name=config.get("env", {}).get("kind", "unknown"),
        algorithm=config.get("train", {}).get("algorithm", "iql"),
        org_mode=config.get("org_mode", "none"),
        curve=curve,
        log=log,
        temm_report=temm_report,
        spec=spec,
        linkers=linkers,
        robustness=robustness,
    )
    write_csv([metrics], run_dir / "metrics.csv")
    write_json(metrics, run_dir / "metrics.json")
    return metrics


def cmd_report(args: argparse.Namespace) -> int:
    reports = []
    for run in args.run_dirs:
        reports.append(_metrics_for_run(Path(run), args.robustness_episodes))
    out_dir = Path(args.out) if args.out else Path(args.run_dirs[0]).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(reports, out_dir / "comparison.csv")
    write_long_csv(reports, out_dir / "comparison_long.csv")
    header = f"{'env':<16}{'alg':<11}{'org':<6}{'cum.rew':>9}{'std':>8}{'conv':>7}{'viol':>7}{'cons':>7}{'rob':>7}{'fit':>7}"
    print(header)
    for r in reports:
        cons = "-" if r.consistency_score is None else f"{r.consistency_score:.2f}"
        print(
            f"{r.env:<16}{r.algorithm:<11}{r.org:<6}{r.cumulative_reward:>9.2f}{r.reward_std:>8.2f}"
            f"{r.convergence_rate:>7.2f}{r.violation_rate:>7.3f}{cons:>7}{r.robustness_score:>7.2f}"
            f"{r.org_fit_level:>7.3f}"
        )
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    document = json.loads(Path(args.org).read_text(encoding="utf-8"))
    spec = spec_from_dict(document)
    diagnostics = validate(spec)
    if diagnostics:
        raise CliError("organizational spec invalid:\n" + "\n".join(map(str, diagnostics)))
    linkers = linkers_from_dict(document)
    server = BridgeServer(spec, linkers, host=args.host, port=args.port)
    print(f"listening on {args.host}:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="orgmarl",
        description="organizational constraints and trajectory mining for multi-agent RL",
    )
    parser.add_argument("--version", action="version", version=f"orgmarl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an organizational spec document")
    p.add_argument("spec")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", help="train policies per a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--no-org", action="store_true", help="drop the org block (reference baseline)")
    p.add_argument("--agr", action="store_true", help="roles-only ablation (goal bonuses disabled)")
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", help="comma list or a..b range; fans out one run per seed")
    p.add_argument("--out", default="runs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="greedy evaluation of a trained run")
    p.add_argument("run_dir")
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("temm", help="mine implicit organization from eval logs")
    p.add_argument("run_dir")
    p.add_argument("--k", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--sample-steps", type=int, dest="sample_steps")
    p.add_argument("--temm-seed", type=int, dest="temm_seed")
    p.set_defaults(func=cmd_temm)

    p = sub.add_parser("report", help="assemble metrics and comparison tables")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out")
    p.add_argument("--robustness-episodes", type=int, default=20)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the wire-protocol engine")
    p.add_argument("--org", required=True, help="organizational spec document")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
