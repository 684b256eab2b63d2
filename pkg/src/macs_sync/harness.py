"""Scenario configs, training/evaluation runs and the command-line interface.

Every run derives two independent streams from its seed (environment and
policy), so all policies compared under one seed see identical truth
evolution, budgets and requests.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import nn
from .agent import Agent, AgentConfig, SlotMetrics, generate_history, pretrain, run_training, select_action
from .baselines import PolicyKind, anti_entropy_action, full_sync_action, greedy_minmax_action, no_sync_action
from .dynamics import DynamicsConfig
from .env import EpisodeConfig, SyncEnv, build_network, split_streams
from .errors import ConfigError, MacsError, MissingCheckpoint, ParseError, ShapeMismatch, UnknownKey
from .topology import Network, TopologyConfig

TRAINING_COLUMNS = ["slot", "budget", "reward", "offset_reward", "loss", "epsilon"]
COMPARE_COLUMNS = ["seed", "policy", "slot", "budget", "broadcasts", "latency", "reward", "accumulated_reward"]
SUMMARY_COLUMNS = ["policy", "seeds", "mean_latency", "accumulated_reward", "total_reward", "broadcasts"]
SWEEP_COLUMNS = ["axis", "value"] + SUMMARY_COLUMNS
SWEEP_AXES = ("bis_std", "budget_lambda")


@dataclass
class TrainingConfig:
    horizon: int = 2000
    seed: int = 0
    pretrain_steps: int = 1000
    history_transitions: int = 1000
    history_policy: str = "greedy"

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.pretrain_steps < 0 or self.history_transitions < 0:
            raise ValueError("pretrain_steps and history_transitions must be >= 0")
        if self.history_policy not in ("greedy", "anti_entropy"):
            raise ValueError(f"unknown history_policy {self.history_policy!r}")


@dataclass
class SweepConfig:
    axis: str = "bis_std"
    values: list = field(default_factory=lambda: [5.0, 8.0, 11.0])

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"axis must be one of {SWEEP_AXES}")
        if not self.values or min(self.values) <= 0:
            raise ValueError("sweep values must be non-empty and positive")


@dataclass
class ScenarioConfig:
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    policies: list = field(default_factory=lambda: [k.value for k in PolicyKind])
    output_dir: str = "out"
    horizon: int = 500
    gamma: float = 0.99
    structure_seed: int = 0
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self):
        for name in self.policies:
            PolicyKind(name)
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")

    def episode(self, seed: int, horizon: int | None = None) -> EpisodeConfig:
        return EpisodeConfig(horizon or self.horizon, self.gamma, seed, self.structure_seed,
                             self.topology, self.dynamics)


# ---------------------------------------------------------------- config io

def _kind(annotation: str) -> str:
    for kind in ("bool", "int", "float", "str", "list", "tuple"):
        if annotation.startswith(kind):
            return kind
    return "any"


def _coerce(value, annotation: str, line: int, name: str):
    if value is None:
        if "None" in annotation:
            return None
        raise ParseError("value may not be empty", line, name)
    kind = _kind(annotation)
    ok = {
        "bool": isinstance(value, bool),
        "int": isinstance(value, int) and not isinstance(value, bool),
        "float": isinstance(value, (int, float)) and not isinstance(value, bool),
        "str": isinstance(value, str),
        "list": isinstance(value, list),
        "tuple": isinstance(value, list),
        "any": True,
    }[kind]
    if not ok:
        raise ParseError(f"expected {kind}, got {type(value).__name__}", line, name)
    if kind == "float":
        return float(value)
    if kind == "tuple":
        return tuple(value)
    return value


def _build(cls, node, loader, prefix: str = ""):
    if node is None:
        return cls()
    line = node.start_mark.line + 1
    if not isinstance(node, yaml.MappingNode):
        raise ParseError("expected a mapping", line, prefix or None)
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for knode, vnode in node.value:
        key = knode.value
        name = f"{prefix}{key}"
        kline = knode.start_mark.line + 1
        if key not in known:
            raise UnknownKey(f"line {kline}:{name}: unknown key")
        if key in kwargs:
            raise ParseError("duplicate key", kline, name)
        sub = _SECTIONS.get((cls, key))
        if sub is not None:
            empty = isinstance(vnode, yaml.ScalarNode) and vnode.tag.endswith(":null")
            kwargs[key] = _build(sub, None if empty else vnode, loader, name + ".")
        else:
            kwargs[key] = _coerce(loader.construct_object(vnode, deep=True), known[key].type, kline, name)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError, KeyError) as exc:
        raise ParseError(str(exc), line, prefix.rstrip(".") or None) from exc


_SECTIONS = {
    (ScenarioConfig, "topology"): TopologyConfig,
    (ScenarioConfig, "dynamics"): DynamicsConfig,
    (ScenarioConfig, "agent"): AgentConfig,
    (ScenarioConfig, "training"): TrainingConfig,
    (ScenarioConfig, "sweep"): SweepConfig,
}


def parse_config_text(text: str) -> ScenarioConfig:
    loader = yaml.SafeLoader(text)
    try:
        node = loader.get_single_node()
        return _build(ScenarioConfig, node, loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(str(getattr(exc, "problem", exc)), mark.line + 1 if mark else None) from exc
    finally:
        loader.dispose()


def parse_config(path: str | Path | None) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def _plain(obj):
    if isinstance(obj, (list, tuple)):
        return [_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return obj


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(_plain(dataclasses.asdict(cfg)), sort_keys=False, default_flow_style=None)


# ---------------------------------------------------------------- runs

def history_stream(seed: int) -> np.random.SeedSequence:
    """Environment stream for pretraining history, disjoint from the run streams."""
    return np.random.SeedSequence(seed).spawn(3)[2]


def default_input_scale(cfg: ScenarioConfig) -> float:
    return cfg.agent.input_scale if cfg.agent.input_scale is not None else 1.0 / cfg.training.horizon


def train_agent(cfg: ScenarioConfig, seed: int | None = None, pretrain_steps: int | None = None,
                net: Network | None = None) -> tuple[Agent, list[SlotMetrics]]:
    seed = cfg.training.seed if seed is None else seed
    steps = cfg.training.pretrain_steps if pretrain_steps is None else pretrain_steps
    net = net if net is not None else build_network(cfg.episode(seed))
    env_ss, policy_ss = split_streams(seed)
    agent_ss, history_policy_ss = policy_ss.spawn(2)
    agent_cfg = dataclasses.replace(cfg.agent)
    agent = Agent.create(net.n, agent_cfg, agent_ss, default_input_scale(cfg))
    if steps > 0:
        transitions = cfg.training.history_transitions
        history_env = SyncEnv(cfg.episode(seed, max(1, transitions)), net)
        generate_history(history_env, agent.replay, transitions, agent_cfg.offset_unit,
                         cfg.training.history_policy, np.random.default_rng(history_policy_ss),
                         history_stream(seed))
        pretrain(agent, steps)
    env = SyncEnv(cfg.episode(seed, cfg.training.horizon), net)
    metrics = run_training(env, agent, cfg.training.horizon, env_seq=env_ss)
    return agent, metrics


def evaluate_policy(cfg: ScenarioConfig, net: Network, policy: str, seed: int,
                    params: nn.BranchingNetParams | None = None) -> list[dict]:
    """Roll one policy over the evaluation horizon; one row per slot."""
    kind = PolicyKind(policy)
    if kind is PolicyKind.LEARNED:
        if params is None:
            raise MissingCheckpoint("the learned policy needs a checkpoint")
        if params.n != net.n:
            raise ShapeMismatch(f"checkpoint has {params.n} arms, network has {net.n} BISes")
    env_ss, policy_ss = split_streams(seed)
    rng = np.random.default_rng(policy_ss)
    env = SyncEnv(cfg.episode(seed), net)
    s = env.reset(env_seq=env_ss)
    rows, acc = [], 0.0
    while not env.done:
        budget = env.current_budget()
        if kind is PolicyKind.FULL_SYNC:
            a = full_sync_action(net.n)
        elif kind is PolicyKind.NO_SYNC:
            a = no_sync_action(net.n)
        elif kind is PolicyKind.GREEDY:
            a = greedy_minmax_action(s, budget)
        elif kind is PolicyKind.ANTI_ENTROPY:
            a = anti_entropy_action(net.n, budget, rng)
        else:
            a = select_action(nn.forward(params, s), budget, 0.0, rng)
        slot = env.slot
        out = env.step(a, enforce_budget=not kind.budget_exempt)
        acc += cfg.gamma ** (slot + 1) * out.reward
        rows.append(dict(seed=seed, policy=kind.value, slot=slot, budget=budget, broadcasts=int(a.sum()),
                         latency=out.avg_latency_after, reward=out.reward, accumulated_reward=acc))
        s = out.next_state
    return rows


def compare(cfg: ScenarioConfig, params: nn.BranchingNetParams | None = None,
            net: Network | None = None) -> list[dict]:
    net = net if net is not None else build_network(cfg.episode(0))
    if PolicyKind.LEARNED.value in cfg.policies and params is None:
        raise MissingCheckpoint("the learned policy needs --checkpoint")
    rows = []
    for seed in cfg.seeds:
        for policy in cfg.policies:
            rows += evaluate_policy(cfg, net, policy, seed, params)
    return rows


def summarize(rows: list[dict], policies: list[str]) -> list[dict]:
    out = []
    for policy in policies:
        mine = [r for r in rows if r["policy"] == policy]
        seeds = sorted({r["seed"] for r in mine})
        finals = [max((r for r in mine if r["seed"] == s), key=lambda r: r["slot"]) for s in seeds]
        out.append(dict(
            policy=policy,
            seeds=len(seeds),
            mean_latency=float(np.mean([r["latency"] for r in mine])),
            accumulated_reward=float(np.mean([r["accumulated_reward"] for r in finals])),
            total_reward=float(np.sum([r["reward"] for r in mine]) / len(seeds)),
            broadcasts=float(np.sum([r["broadcasts"] for r in mine]) / len(seeds)),
        ))
    return out


def with_sweep_value(cfg: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "bis_std":
        dyn = dataclasses.replace(cfg.dynamics, value_mode="gaussian", value_std=float(value))
    elif axis == "budget_lambda":
        dyn = dataclasses.replace(cfg.dynamics, budget_mean=float(value))
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    return dataclasses.replace(cfg, dynamics=dyn)


def sweep(cfg: ScenarioConfig, axis: str | None = None, values=None, out_dir: Path | None = None):
    """Repeat the comparison for each axis value, training a learner per value when needed."""
    axis = axis or cfg.sweep.axis
    values = list(values if values is not None else cfg.sweep.values)
    net = build_network(cfg.episode(0))
    results = []
    for value in values:
        scfg = with_sweep_value(cfg, axis, value)
        params = None
        if PolicyKind.LEARNED.value in scfg.policies:
            agent, _ = train_agent(scfg, net=net)
            params = agent.online
            if out_dir is not None:
                nn.save_checkpoint(params, out_dir / f"checkpoint_{axis}_{value:g}.bin")
        for row in summarize(compare(scfg, params, net), scfg.policies):
            results.append(dict(axis=axis, value=float(value), **row))
    return results


# ---------------------------------------------------------------- csv + cli

def write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in columns})


def training_rows(metrics: list[SlotMetrics]) -> list[dict]:
    return [dataclasses.asdict(m) for m in metrics]


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seeds=[args.seed],
                                  training=dataclasses.replace(cfg.training, seed=args.seed))
    if args.out is not None:
        cfg = dataclasses.replace(cfg, output_dir=args.out)
    return cfg


def cmd_train(cfg: ScenarioConfig, args, online: bool = False) -> None:
    out = Path(cfg.output_dir)
    agent, metrics = train_agent(cfg, pretrain_steps=0 if online else None)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.bin"
    nn.save_checkpoint(agent.online, ckpt)
    name = "online_training.csv" if online else "training.csv"
    write_csv(out / name, TRAINING_COLUMNS, training_rows(metrics))
    print(f"wrote {ckpt} and {out / name}")


def cmd_compare(cfg: ScenarioConfig, args) -> None:
    out = Path(cfg.output_dir)
    params = None
    if PolicyKind.LEARNED.value in cfg.policies:
        if not args.checkpoint or not Path(args.checkpoint).exists():
            raise MissingCheckpoint("the learned policy needs an existing --checkpoint")
        params = nn.load_checkpoint(args.checkpoint)
    rows = compare(cfg, params)
    summary = summarize(rows, cfg.policies)
    write_csv(out / "compare.csv", COMPARE_COLUMNS, rows)
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
    for row in summary:
        print(f"{row['policy']:>13}  latency {row['mean_latency']:8.3f}  "
              f"accumulated reward {row['accumulated_reward']:9.3f}")


def cmd_sweep(cfg: ScenarioConfig, args) -> None:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = sweep(cfg, args.axis, args.values, out)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    for row in rows:
        print(f"{row['axis']}={row['value']:g} {row['policy']:>13}  latency {row['mean_latency']:8.3f}")


def cmd_gen_topology(cfg: ScenarioConfig, args) -> None:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    net = build_network(cfg.episode(0))
    doc = {
        "domains": net.domain_count,
        "edges": [list(e) for e in net.graph.edges],
        "installs": [list(i) for i in net.placement.installs],
    }
    (out / "topology.yaml").write_text(yaml.safe_dump(doc, default_flow_style=None, sort_keys=False))
    reg = net.registry
    rows = []
    for i, entry in enumerate(reg.entries):
        kind = "gateway" if i < reg.gateway_count else "server"
        rows.append(dict(index=i, kind=kind, a=entry[0], b=entry[1], origin_domain=reg.origin_domain(i)))
    write_csv(out / "bises.csv", ["index", "kind", "a", "b", "origin_domain"], rows)
    print(f"{net.domain_count} domains, {len(net.graph.edges)} directed edges, {net.n} BISes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="macs-sync", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "compare", "sweep", "online-train", "gen-topology"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML scenario file (defaults to scenario 1)")
        p.add_argument("--seed", type=int, help="overrides the seed list and the training seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--checkpoint", help="network checkpoint to write (train) or read (compare)")
        if name == "sweep":
            p.add_argument("--axis", choices=SWEEP_AXES)
            p.add_argument("--values", type=float, nargs="+")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(parse_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    commands = {
        "train": cmd_train,
        "online-train": lambda c, a: cmd_train(c, a, online=True),
        "compare": cmd_compare,
        "sweep": cmd_sweep,
        "gen-topology": cmd_gen_topology,
    }
    try:
        commands[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (MacsError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
