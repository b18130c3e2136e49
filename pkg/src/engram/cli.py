"""Command-line runner.

Subcommands::

    simulate   run a scenario's task script; write report.jsonl, kg.jsonl,
               snapshot.json into --out
    train      self-supervised rounds over a scenario's scenes
    perceive   perceive one scene against a snapshot (or fresh engine)
    recall     print the label trace of an episodic or semantic recall
    query      conditional probability from the recorded label statistics
    export     write the knowledge graph of a snapshot as JSONL
    grad-check verify analytic gradients against central finite differences

Every command is deterministic: the same scenario, seed, and inputs
produce byte-identical output files.

Exit codes: 0 success, 1 failed check/unexpected error, 2 usage,
3 malformed scenario/config, 4 missing or unreadable file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import learning, memory
from .cognition import run_script
from .config import default_config
from .engine import Engine
from .errors import EngramError, ScenarioError, SnapshotError
from .index_layer import IndexKind
from .learning import LossSpec, Mode, TrainEvent, gradient_check
from .perception import perceive_scene
from .rng import generator
from .scenario import Scenario, build_simulation, load_scenario
from .snapshot import load_snapshot, save_snapshot
from .traces import write_trace

GRAD_TOLERANCE = 1e-4


def _write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _load_scenario_arg(path: str | None) -> Scenario:
    if path is None:
        from .scenario import parse_scenario
        return parse_scenario({"engine": default_config().to_dict()})
    return load_scenario(path)


def _cmd_simulate(args) -> int:
    scenario = _load_scenario_arg(args.scenario)
    if args.seed is not None:
        scenario.engine_config.seed = args.seed
    engine, _, scenes = build_simulation(scenario)
    records = run_script(engine, scenario.tasks, scenes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(out / "report.jsonl", records)
    memory.export_kg(engine.kg, out / "kg.jsonl")
    save_snapshot(engine, out / "snapshot.json")
    print(f"simulate: {len(records)} steps -> {out}")
    return 0


def _cmd_train(args) -> int:
    scenario = _load_scenario_arg(args.scenario)
    if args.seed is not None:
        scenario.engine_config.seed = args.seed
    engine, _, scenes = build_simulation(scenario)
    if not scenes:
        raise ScenarioError("train requires at least one scene in the scenario")
    rounds = args.rounds if args.rounds is not None else engine.config.learning.steps
    reports = []
    scene_list = list(scenes.values())
    for i in range(rounds):
        report = learning.self_supervised_round(engine, scene_list[i % len(scene_list)])
        reports.append(report.record())
    engine.symbolic = memory.fit_symbolic_matrix(engine.kg, engine.registry)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(out / "train_report.jsonl", reports)
    save_snapshot(engine, out / "snapshot.json")
    last_total = reports[-1]["loss_after_total"] if reports else float("nan")
    print(f"train: {rounds} rounds, final total loss {last_total:.6f} -> {out}")
    return 0


def _cmd_perceive(args) -> int:
    scenario = _load_scenario_arg(args.scenario)
    engine, _, scenes = build_simulation(scenario)
    if args.snapshot is not None:
        engine = load_snapshot(args.snapshot)
    if args.scene not in scenes:
        raise ScenarioError(f"scene {args.scene!r} not found in scenario")
    trace = perceive_scene(engine, scenes[args.scene])
    memory.triples_from_trace(engine, trace)
    memory.record_trace_events(engine, trace)
    if args.out is not None:
        write_trace(trace, args.out)
    else:
        sys.stdout.write(trace.to_jsonl())
    return 0


def _cmd_recall(args) -> int:
    engine = load_snapshot(args.snapshot)
    if args.episodic is not None:
        trace = memory.episodic_recall(engine, engine.episode(args.episodic))
    else:
        trace = memory.semantic_recall(engine, engine.concept(args.semantic))
    if args.out is not None:
        write_trace(trace, args.out)
    else:
        sys.stdout.write(trace.to_jsonl())
    return 0


def _cmd_query(args) -> int:
    engine = load_snapshot(args.snapshot)
    context = engine.index_by_name(args.context)
    dom = engine.registry.domain(args.domain)
    if args.label is not None:
        label = engine.index_by_name(args.label)
        p = memory.conditional_probability(engine.kg, context, dom, label)
        print(json.dumps({"context": context.name, "domain": dom.name,
                          "label": label.name, "probability": p}, sort_keys=True))
    else:
        total = engine.kg.total(context, dom)
        dist = {k.name: engine.kg.count(context, dom, k) / total
                for k in dom.members} if total else {}
        print(json.dumps({"context": context.name, "domain": dom.name,
                          "distribution": dist}, sort_keys=True))
    return 0


def _cmd_export(args) -> int:
    engine = load_snapshot(args.snapshot)
    memory.export_kg(engine.kg, args.kg)
    print(f"export: {sum(c for _, c in engine.kg.iter_triples())} triples -> {args.kg}")
    return 0


def _grad_check_spec(engine: Engine, seed: int) -> LossSpec:
    """A random instance touching every loss mode and every parameter."""
    rng = generator(seed, "grad-check")
    cfg = engine.config
    reg = engine.registry

    def random_labels(domain_names, count):
        labels = []
        for i in range(count):
            dom = reg.domain(domain_names[i % len(domain_names)])
            labels.append((dom.name, dom.members[int(rng.integers(len(dom)))]))
        return labels

    roi = rng.normal(0.0, 1.0, cfg.d)
    scene = rng.normal(0.0, 1.0, cfg.d)
    entity_dom = reg.domain(cfg.entity_domain)
    subject = entity_dom.members[int(rng.integers(len(entity_dom)))]
    episode = learning.create_index(reg, engine.embeddings, IndexKind.EPISODIC,
                                    "grad_check_episode",
                                    init=rng.normal(0.0, 1.0, cfg.n),
                                    domain=cfg.episodes_domain)
    engine.register_episode(episode, scene_id="grad-check")
    events = [
        TrainEvent(mode=Mode.PERCEPTION, labels=random_labels(cfg.roi_domains, 3),
                   scene_features=scene, roi_features=roi,
                   recon_target=roi, recon_weight=1.0),
        TrainEvent(mode=Mode.PERCEPTION, labels=random_labels(cfg.scene_domains, 2),
                   scene_features=scene),
        TrainEvent(mode=Mode.EPISODIC, labels=random_labels(cfg.roi_domains, 3),
                   episode=episode),
        TrainEvent(mode=Mode.SEMANTIC, labels=random_labels(
            [d for d in cfg.roi_domains if d != cfg.entity_domain], 2),
            prefix=[subject]),
    ]
    return LossSpec(events=events, temperature=1.0)


def _cmd_grad_check(args) -> int:
    scenario = _load_scenario_arg(args.scenario)
    if args.seed is not None:
        scenario.engine_config.seed = args.seed
    engine, _, _ = build_simulation(scenario)
    # Nonzero prior so gradients through it are generic.
    engine.embeddings.a[:, engine.prior_index.id] = \
        generator(engine.config.seed, "grad-check-prior").normal(0.0, 0.5, engine.n)
    spec = _grad_check_spec(engine, engine.config.seed)
    error = gradient_check(engine, spec, eps=args.eps)
    print(f"max relative error: {error:.3e} (tolerance {GRAD_TOLERANCE:.0e})")
    return 0 if error < GRAD_TOLERANCE else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="engram",
                                     description="neuro-symbolic cognitive engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario's task script")
    p.add_argument("--scenario", help="scenario YAML file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="self-supervised training rounds")
    p.add_argument("--scenario", help="scenario YAML file")
    p.add_argument("--out", required=True)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("perceive", help="perceive one scene")
    p.add_argument("--scenario", help="scenario YAML file with the scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--snapshot", help="optional engine snapshot to load")
    p.add_argument("--out", help="trace JSONL destination (default stdout)")
    p.set_defaults(func=_cmd_perceive)

    p = sub.add_parser("recall", help="episodic or semantic recall")
    p.add_argument("--snapshot", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--episodic", help="episodic index name")
    group.add_argument("--semantic", help="concept name")
    p.add_argument("--out", help="trace JSONL destination (default stdout)")
    p.set_defaults(func=_cmd_recall)

    p = sub.add_parser("query", help="conditional probability from label statistics")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--context", required=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--label")
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("export", help="write the knowledge graph as JSONL")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--kg", required=True, help="output JSONL path")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("grad-check", help="finite-difference gradient verification")
    p.add_argument("--scenario", help="scenario YAML file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eps", type=float, default=1e-5)
    p.set_defaults(func=_cmd_grad_check)

    return parser


def run_cli(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: malformed scenario: {exc}", file=sys.stderr)
        return 3
    except SnapshotError as exc:
        print(f"error: snapshot: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 4
    except EngramError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
