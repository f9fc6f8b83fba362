"""Command-line runner: config loading, orchestration and report export.

Subcommands::

    coalition-forge synth          --config cfg.yaml --out data/
    coalition-forge run            --config cfg.yaml --out results/ [--mode both] [--oracle-verify]
    coalition-forge oracle-verify  --config cfg.yaml --out results/ [--strict]
    coalition-forge export-dot     results/equilibrium.json [--iteration 1]

Exit codes: 0 success, 2 bad config, 3 oracle budget exceeded, 4 oracle
mismatch under ``--strict``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import yaml

from .equilibrium import (
    EquilibriumReport,
    Partition,
    rebuilt_graphs_induced,
    check_inner_agreement,
    check_outer_agreement,
    find_equilibrium_fast,
    find_equilibrium_iterative,
)
from .errors import BudgetError, ConfigError
from .graph import BenefitGraph
from .oracle import MauOracle, ce_bruteforce, ocs_bruteforce
from .pareto import SearchConfig, SpoCache, ToleranceConfig, spo
from .tasks import ClientSet, SyntheticConfig, generate_synthetic_network

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_MISMATCH = 0, 2, 3, 4
MODES = ("iterative", "fast", "both")
ORACLE_MAX_CLIENTS = 6


@dataclass(frozen=True)
class RunConfig:
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    mode: str = "iterative"
    oracle_verify: bool = False
    verify_stability: bool = False
    output_dir: str = "results"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.oracle_verify and self.synthetic.n_clients > ORACLE_MAX_CLIENTS:
            raise ConfigError(
                f"oracle verification needs n_clients <= {ORACLE_MAX_CLIENTS}, "
                f"got {self.synthetic.n_clients}"
            )


# -- config documents ---------------------------------------------------------

# ridge_lambda is listed with the tolerances in config files but lives on SearchConfig
_TOLERANCE_KEYS = {"eps_w", "delta_u", "delta_u_rel", "ridge_lambda"}


def _build(cls, section: str, raw: Any):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{section}' must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {sorted(unknown)}")
    try:
        return cls(**raw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value in '{section}': {exc}") from exc


def config_from_dict(doc: Any) -> RunConfig:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    top = {"synthetic", "search", "tolerances", "mode", "oracle_verify", "verify_stability", "output_dir"}
    unknown = set(doc) - top
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")

    synth = dict(doc.get("synthetic") or {})
    if "flip_set" in synth:
        if not isinstance(synth["flip_set"], (list, tuple, set)):
            raise ConfigError("synthetic.flip_set must be a list of client ids")
        synth["flip_set"] = frozenset(synth["flip_set"])
    tol = dict(doc.get("tolerances") or {})
    unknown = set(tol) - _TOLERANCE_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s) in 'tolerances': {sorted(unknown)}")
    search = dict(doc.get("search") or {})
    if "ridge_lambda" in tol:
        search["ridge_lambda"] = tol.pop("ridge_lambda")

    for key, kind in (("oracle_verify", bool), ("verify_stability", bool), ("mode", str), ("output_dir", str)):
        if key in doc and not isinstance(doc[key], kind):
            raise ConfigError(f"'{key}' must be a {kind.__name__}")
    return RunConfig(
        synthetic=_build(SyntheticConfig, "synthetic", synth),
        search=_build(SearchConfig, "search", search),
        tolerances=_build(ToleranceConfig, "tolerances", tol),
        mode=doc.get("mode", "iterative"),
        oracle_verify=doc.get("oracle_verify", False),
        verify_stability=doc.get("verify_stability", False),
        output_dir=doc.get("output_dir", "results"),
    )


def load_config(path: Optional[str | Path]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return config_from_dict(doc)


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Command-line flags win over the config file."""
    synth, search, tol = {}, {}, {}
    if args.seed is not None:
        synth["seed"] = search["seed"] = args.seed
    for flag, key in (("rho", "rho"), ("n_train", "n_train"), ("sigma", "sigma"), ("n_features", "n_features")):
        if getattr(args, flag, None) is not None:
            synth[key] = getattr(args, flag)
    if args.grid_resolution is not None:
        search["grid_resolution"] = args.grid_resolution
    if args.ridge_lambda is not None:
        search["ridge_lambda"] = args.ridge_lambda
    if args.eps_w is not None:
        tol["eps_w"] = args.eps_w
    if args.delta_u is not None:
        tol["delta_u"] = args.delta_u
    top: dict = {}
    if getattr(args, "mode", None) is not None:
        top["mode"] = args.mode
    if getattr(args, "oracle_verify", False):
        top["oracle_verify"] = True
    if getattr(args, "verify_stability", False):
        top["verify_stability"] = True
    if args.out is not None:
        top["output_dir"] = str(args.out)
    return replace(
        cfg,
        synthetic=replace(cfg.synthetic, **synth),
        search=replace(cfg.search, **search),
        tolerances=replace(cfg.tolerances, **tol),
        **top,
    )


# -- rendering ----------------------------------------------------------------


def export_dot(graph: BenefitGraph, partition: Optional[Partition] = None) -> str:
    """DOT text for a benefit graph; each partition block becomes a cluster."""
    lines = ["digraph benefit {", "  rankdir=LR;"]
    if partition is None:
        lines += [f"  I{i};" for i in graph.nodes]
    else:
        placed = set()
        for k, coalition in enumerate(partition.coalitions, start=1):
            members = [i for i in sorted(coalition) if i in graph.nodes]
            if not members:
                continue
            lines.append(f"  subgraph cluster_C{k} {{")
            lines.append(f'    label="C{k}";')
            lines += [f"    I{i};" for i in members]
            lines.append("  }")
            placed.update(members)
        lines += [f"  I{i};" for i in graph.nodes if i not in placed]
    lines += [f"  I{j} -> I{i};" for j, i in graph.edges]
    lines.append("}")
    return "\n".join(lines) + "\n"


def _graph_doc(graph: BenefitGraph) -> dict:
    return {"nodes": list(graph.nodes), "edges": [list(e) for e in graph.edges]}


def _report_doc(report: EquilibriumReport) -> dict:
    return {
        "mode": report.mode,
        "iterations": report.iterations,
        "partition": report.partition.as_lists(),
        "provenance": list(report.partition.provenance),
        "test_utility": {str(i): u for i, u in report.per_client_utility.items()},
        "val_utility": {str(i): u for i, u in report.per_client_val_utility.items()},
        "benefit_graphs": [_graph_doc(g) for g in report.benefit_graphs],
        "stability_failures": [[i, sorted(c)] for i, c in report.stability_failures],
    }


def equilibrium_document(cfg: RunConfig, reports: dict[str, EquilibriumReport]) -> dict:
    primary = reports.get("iterative") or reports["fast"]
    doc = _report_doc(primary)
    doc["config"] = _config_doc(cfg)
    if "iterative" in reports and "fast" in reports:
        doc["fast"] = _report_doc(reports["fast"])
        doc["rebuilt_graphs_induced"] = rebuilt_graphs_induced(reports["iterative"])
        doc["fast_matches_iterative"] = reports["fast"].partition == reports["iterative"].partition
    return doc


def _config_doc(cfg: RunConfig) -> dict:
    synth = dataclasses.asdict(cfg.synthetic)
    synth["flip_set"] = sorted(cfg.synthetic.flip_set)
    return {
        "synthetic": synth,
        "search": dataclasses.asdict(cfg.search),
        "tolerances": dataclasses.asdict(cfg.tolerances),
        "mode": cfg.mode,
        "oracle_verify": cfg.oracle_verify,
        "verify_stability": cfg.verify_stability,
    }


def dumps_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def load_equilibrium(path: str | Path) -> tuple[Partition, dict[int, float], list[BenefitGraph]]:
    """Partition, per-client test utilities and benefit graphs from ``equilibrium.json``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    partition = Partition(tuple(frozenset(c) for c in doc["partition"]), tuple(doc["provenance"]))
    utilities = {int(i): float(u) for i, u in doc["test_utility"].items()}
    graphs = [
        BenefitGraph.from_edges(g["nodes"], [tuple(e) for e in g["edges"]])
        for g in doc["benefit_graphs"]
    ]
    return partition, utilities, graphs


def utilities_table(
    clients: ClientSet, report: EquilibriumReport, cfg: RunConfig, cache: SpoCache
) -> list[dict]:
    first = report.benefit_graphs[0]
    everyone = list(clients)
    rows = []
    for c in everyone:
        local = spo(c.id, [c], cfg.search, cache)
        full = first.spo_results.get(c.id) or spo(c.id, everyone, cfg.search, cache)
        rows.append({
            "client_id": c.id,
            "ocs": ";".join(str(j) for j in sorted(first.ocs_map[c.id])),
            "local_mse": -local.test_utility,
            "spo_mse": -full.test_utility,
            "ce_mse": -report.per_client_utility[c.id],
        })
    return rows


def render_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    cols = ["client_id", "ocs", "local_mse", "spo_mse", "ce_mse"]
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def oracle_report(
    clients: ClientSet, report: EquilibriumReport, cfg: RunConfig, cache: SpoCache
) -> dict:
    oracle = MauOracle.from_clients(clients, cfg.search, cfg.tolerances, cache)
    inner = check_inner_agreement(report.partition, oracle)
    outer = check_outer_agreement(report.partition, oracle)
    ces = ce_bruteforce(clients, oracle, max_n=ORACLE_MAX_CLIENTS)
    first = report.benefit_graphs[0]
    ocs = {}
    for i in clients.ids:
        brute = ocs_bruteforce(i, clients.ids, oracle)
        ocs[str(i)] = {
            "extracted": sorted(first.ocs_map[i]),
            "bruteforce": sorted(brute),
            "gap": oracle.utility(i, brute) - oracle.utility(i, first.ocs_map[i]),
        }
    in_list = report.partition in ces
    return {
        "partition": report.partition.as_lists(),
        "inner_violations": [[sorted(c), sorted(s)] for c, s in inner],
        "outer_violations": [sorted(c) for c in outer],
        "bruteforce_equilibria": [p.as_lists() for p in ces],
        "partition_in_bruteforce": in_list,
        "ocs": ocs,
        "mismatch": bool(inner or outer or not in_list),
    }


# -- subcommands --------------------------------------------------------------


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="")


def cmd_synth(cfg: RunConfig) -> int:
    clients = generate_synthetic_network(cfg.synthetic)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = cfg.synthetic.n_features
    header = [f"x{k}" for k in range(d)] + ["y"]
    for c in clients:
        for split in ("train", "validation", "test"):
            data = getattr(c, split)
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            for x, y in zip(data.features, data.labels):
                w.writerow([repr(float(v)) for v in x] + [repr(float(y))])
            _write(out / f"client{c.id}_{split}.csv", buf.getvalue())
    log.info("wrote %d clients to %s", len(clients), out)
    return EXIT_OK


def cmd_run(cfg: RunConfig, strict: bool = False) -> int:
    clients = generate_synthetic_network(cfg.synthetic)
    cache = SpoCache()
    reports: dict[str, EquilibriumReport] = {}
    if cfg.mode in ("iterative", "both"):
        reports["iterative"] = find_equilibrium_iterative(
            clients, cfg.search, cfg.tolerances, cache, verify_stability=cfg.verify_stability
        )
    if cfg.mode in ("fast", "both"):
        reports["fast"] = find_equilibrium_fast(clients, cfg.search, cfg.tolerances, cache)
    primary = reports.get("iterative") or reports["fast"]

    oracle_doc = None
    if cfg.oracle_verify:
        # computed before anything is written so a budget failure leaves no partial output
        oracle_doc = oracle_report(clients, primary, cfg, cache)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, graph in enumerate(primary.benefit_graphs, start=1):
        _write(out / f"benefit_graph_iter{k}.dot", export_dot(graph, primary.partition))
    _write(out / "equilibrium.json", dumps_json(equilibrium_document(cfg, reports)))
    _write(out / "utilities.csv", render_csv(utilities_table(clients, primary, cfg, cache)))
    log.info("partition %s", primary.partition.as_lists())

    if oracle_doc is not None:
        _write(out / "oracle_report.json", dumps_json(oracle_doc))
        if oracle_doc["mismatch"]:
            log.warning("oracle verification mismatch")
            if strict:
                return EXIT_MISMATCH
    return EXIT_OK


def cmd_export_dot(path: str, iteration: int, out: Optional[str]) -> int:
    try:
        partition, _, graphs = load_equilibrium(path)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read equilibrium report {path}: {exc}") from exc
    if not 1 <= iteration <= len(graphs):
        raise ConfigError(f"iteration must be in 1..{len(graphs)}")
    text = export_dot(graphs[iteration - 1], partition)
    if out:
        _write(Path(out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _add_run_flags(p: argparse.ArgumentParser, with_mode: bool = True) -> None:
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--seed", type=int, help="seed for data generation and search")
    p.add_argument("--out", help="output directory")
    p.add_argument("--rho", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-features", dest="n_features", type=int)
    p.add_argument("--grid-resolution", dest="grid_resolution", type=int)
    p.add_argument("--eps-w", dest="eps_w", type=float)
    p.add_argument("--delta-u", dest="delta_u", type=float)
    p.add_argument("--lambda", dest="ridge_lambda", type=float)
    if with_mode:
        p.add_argument("--mode", choices=MODES)
        p.add_argument("--oracle-verify", dest="oracle_verify", action="store_true")
        p.add_argument("--strict", action="store_true", help="exit 4 on oracle mismatch")
        p.add_argument("--verify-stability", dest="verify_stability", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coalition-forge")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(sub.add_parser("synth", help="write the synthetic datasets as CSV"), with_mode=False)
    _add_run_flags(sub.add_parser("run", help="find the collaboration equilibrium"))
    _add_run_flags(sub.add_parser("oracle-verify", help="run and check against brute force"))
    dot = sub.add_parser("export-dot", help="render a benefit graph from equilibrium.json")
    dot.add_argument("report")
    dot.add_argument("--iteration", type=int, default=1)
    dot.add_argument("--out")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "export-dot":
            return cmd_export_dot(args.report, args.iteration, args.out)
        if args.command == "oracle-verify":
            args.oracle_verify = True
        cfg = apply_overrides(load_config(args.config), args)
        if args.command == "synth":
            return cmd_synth(cfg)
        return cmd_run(cfg, strict=args.strict)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"oracle budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
