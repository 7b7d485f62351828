"""Command-line entry point.

Subcommands map one-to-one onto the library: ledger inspection, graph
derivation, spectral metrics, the growth-guarantee checker and the
simulations.  Structured results go to JSON, time series to CSV, graphs
to plain edge lists; every file-producing invocation also writes a
``<out>.manifest.json`` recording the resolved configuration, seed, tool
version and input/output digests so runs can be reproduced bit-exactly
(timestamps aside).

Exit codes: 0 success, 1 validation failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from . import __version__, community, metrics, sim
from .ledger import LedgerError, ParseError, VerifyError, read_log
from .registry import DEFAULT_RESET_QUORUM, provenance_chains
from .surety import graph_at


class _Failure(Exception):
    """Validation failure: reported on stderr, exit code 1."""


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class _Manifest:
    def __init__(self, command: str, config: dict, seed: int | None):
        self.data = {
            "command": command,
            "config": config,
            "seed": seed,
            "version": __version__,
            "inputs": {},
            "outputs": {},
            "started": datetime.now(timezone.utc).isoformat(),
            "finished": None,
        }

    def add_input(self, path: str | Path) -> None:
        self.data["inputs"][str(path)] = _sha256(Path(path))

    def add_output(self, path: str | Path) -> None:
        self.data["outputs"][str(path)] = _sha256(Path(path))

    def write_alongside(self, out: str | Path) -> None:
        self.data["finished"] = datetime.now(timezone.utc).isoformat()
        path = Path(str(out) + ".manifest.json")
        path.write_text(json.dumps(self.data, indent=2) + "\n")


def _load_graph(path: str) -> metrics.Graph:
    with open(path, "r", encoding="utf-8") as fh:
        return metrics.Graph.from_edgelist_lines(fh)


def _parse_ident_label(label: str) -> str:
    # labels may be bare hex or scheme:hex; vertex matching uses the hex part
    return label.rpartition(":")[2]


# ---------------------------------------------------------------------------
# ledger subcommands
# ---------------------------------------------------------------------------

def _cmd_ledger_validate(args: argparse.Namespace) -> int:
    try:
        ledger = read_log(args.file)
    except (ParseError, VerifyError) as exc:
        print(json.dumps({"ok": False, "error": type(exc).__name__, "detail": str(exc),
                          **({"seq": exc.seq} if isinstance(exc, VerifyError) else {"line": exc.line})}))
        return 1
    chains = provenance_chains(ledger, args.quorum)
    summary = {
        "ok": True,
        "events": len(ledger),
        "identifiers": sum(len(c.identifiers) for c in chains),
        "chains": len(chains),
        "valid_chains": sum(1 for c in chains if c.valid),
    }
    print(json.dumps(summary))
    return 0


def _chain_dict(chain) -> dict:
    return {
        "links": list(chain.links),
        "identifiers": [v.label for v in chain.identifiers],
        "current": chain.current.label,
        "valid": chain.valid,
        "maximal": chain.maximal,
    }


def _cmd_ledger_chains(args: argparse.Namespace) -> int:
    ledger = read_log(args.file)
    chains = provenance_chains(ledger, args.quorum)
    print(json.dumps({"chains": [_chain_dict(c) for c in chains]}, indent=2))
    return 0


def _cmd_ledger_graph(args: argparse.Namespace) -> int:
    ledger = read_log(args.file)
    at = len(ledger) if args.at is None else args.at
    graph = graph_at(ledger, at, args.type, args.quorum)
    if args.format == "edgelist":
        text = "\n".join(graph.edgelist_lines())
        text = text + "\n" if text else ""
    elif args.format == "json":
        text = json.dumps(
            {
                "surety_type": graph.surety_type,
                "prefix": graph.prefix_k,
                "vertices": sorted(v.label for v in graph.vertices),
                "edges": [[a.label, b.label] for a, b in graph.sorted_edges()],
            },
            indent=2,
        ) + "\n"
    else:  # dot
        body = "\n".join(f'  "{a.hex}" -- "{b.hex}";' for a, b in graph.sorted_edges())
        text = "graph sureties {\n" + body + ("\n" if body else "") + "}\n"
    if args.out:
        manifest = _Manifest("ledger graph", {"type": args.type, "at": at, "format": args.format}, None)
        manifest.add_input(args.file)
        Path(args.out).write_text(text)
        manifest.add_output(args.out)
        manifest.write_alongside(args.out)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# metrics subcommands
# ---------------------------------------------------------------------------

def _cmd_metrics_conductance(args: argparse.Namespace) -> int:
    graph = _load_graph(args.input)
    result = metrics.conductance_exact(graph, args.threshold)
    labels = graph.labels or tuple(str(i) for i in range(graph.n))
    print(json.dumps({
        "phi": str(result.value),
        "phi_float": float(result.value),
        "argmin": sorted(labels[v] for v in result.argmin),
    }))
    return 0


def _cmd_metrics_lambda(args: argparse.Namespace) -> int:
    graph = _load_graph(args.input)
    lam = metrics.second_eigenvalue(graph)
    lam2 = metrics.second_eigenvalue_signed(graph)
    lower, upper = metrics.conductance_bounds(graph)
    print(json.dumps({
        "lambda": lam,
        "lambda2_signed": lam2,
        "cheeger_lower": lower,
        "cheeger_upper": upper,
    }))
    return 0


def _cmd_metrics_mis(args: argparse.Namespace) -> int:
    graph = _load_graph(args.input)
    result = metrics.max_independent_set(graph, args.exact_limit)
    labels = graph.labels or tuple(str(i) for i in range(graph.n))
    print(json.dumps({
        "size": len(result.vertices),
        "exact": result.exact,
        "vertices": sorted(labels[v] for v in result.vertices),
    }))
    return 0


# ---------------------------------------------------------------------------
# check theorem2
# ---------------------------------------------------------------------------

def _vertex_set(graph: metrics.Graph, labels: list[str]) -> frozenset[int]:
    if graph.labels is None:
        raise _Failure("graph has no labels")
    index = {_parse_ident_label(lab): i for i, lab in enumerate(graph.labels)}
    out = set()
    for label in labels:
        key = _parse_ident_label(label)
        if key not in index:
            raise _Failure(f"identifier {label!r} does not appear in the graph")
        out.add(index[key])
    return frozenset(out)


def _cmd_check_theorem2(args: argparse.Namespace) -> int:
    graph = _load_graph(args.graph)
    with open(args.community, "r", encoding="utf-8") as fh:
        ids = json.load(fh)
    with open(args.classification, "r", encoding="utf-8") as fh:
        cls = json.load(fh)
    with open(args.params, "r", encoding="utf-8") as fh:
        raw_params = json.load(fh)
    a = _vertex_set(graph, ids["community"])
    grown = _vertex_set(graph, ids.get("grown", ids["community"]))
    byzantine = _vertex_set(graph, cls.get("byzantine", []))
    params = community.Theorem2Params(
        d=int(raw_params["d"]),
        alpha=Fraction(str(raw_params["alpha"])),
        beta=Fraction(str(raw_params["beta"])),
        gamma=Fraction(str(raw_params["gamma"])),
        delta=Fraction(str(raw_params["delta"])),
    )
    report = community.theorem2_check(graph, a, grown, params, byzantine)
    text = json.dumps(report.to_dict(), indent=2) + "\n"
    if args.out:
        manifest = _Manifest("check theorem2", {"params": params.to_dict()}, None)
        for p in (args.graph, args.community, args.classification, args.params):
            manifest.add_input(p)
        Path(args.out).write_text(text)
        manifest.add_output(args.out)
        manifest.write_alongside(args.out)
    sys.stdout.write(text)
    if args.expect_pass and not report.guarantee:
        print("guarantee not established", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# sim subcommands
# ---------------------------------------------------------------------------

def _cmd_sim_grow(args: argparse.Namespace) -> int:
    raw: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    for key in ("n0", "p", "k", "sybil_rate", "steps", "burn_in", "seed", "adversary"):
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    config = sim.SimConfig.from_dict(raw)
    result = sim.run_agent_sim(config, emit_ledger=args.emit_ledger is not None)
    manifest = _Manifest("sim grow", config.to_dict(), config.seed)
    if args.config:
        manifest.add_input(args.config)
    if args.emit_ledger:
        from .ledger import write_log

        write_log(args.emit_ledger, result.ledger)
        Path(args.emit_ledger + ".registry.json").write_text(result.registry.to_json() + "\n")
        manifest.add_output(args.emit_ledger)
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["round", "community_size", "sybil_count", "sigma", "num_components", "max_component"]
            )
            for i in range(config.steps):
                writer.writerow([
                    i,
                    int(result.size_series[i]),
                    int(result.sybil_series[i]),
                    f"{result.sigma_series[i]:.9f}",
                    int(result.component_count_series[i]),
                    int(result.max_component_series[i]),
                ])
        manifest.add_output(args.out)
        manifest.write_alongside(args.out)
    elif args.emit_ledger:
        manifest.write_alongside(args.emit_ledger)
    summary = {
        "time_avg_sigma": result.time_avg_sigma.mean,
        "time_avg_sybils": result.time_avg_sybils.mean,
        "time_avg_size": result.time_avg_size.mean,
        "expulsions": result.expulsion_count,
    }
    print(json.dumps(summary))
    return 0


def _cmd_sim_steady_state(args: argparse.Namespace) -> int:
    root = sim.steady_state_root(args.n, args.p, args.k)
    bound = (args.n / (args.p * args.k)) ** 0.5
    result = sim.run_markov_component(
        args.n, args.p, args.k, args.steps, args.seed, args.burn_in
    )
    matched = sim.moment_matched_component_size(result, args.k)
    print(json.dumps({
        "analytic_root": root,
        "bound": bound,
        "mc_mean": result.mean,
        "mc_stderr": result.stderr,
        "mc_moment_matched": matched,
        "steps": result.steps,
        "burn_in": result.burn_in,
    }))
    return 0


def _cmd_sim_observation2(args: argparse.Namespace) -> int:
    rows = []
    for s in range(args.seeds):
        res = sim.capped_admission_sim(args.sigma_cap, args.steps, seed=args.seed + s, n0=args.n0)
        rows.append(res.penetration)
    import numpy as np

    stacked = np.vstack(rows)
    per_step_mean = stacked.mean(axis=0)
    if args.out:
        manifest = _Manifest(
            "sim observation2",
            {"sigma_cap": args.sigma_cap, "steps": args.steps, "seeds": args.seeds, "n0": args.n0},
            args.seed,
        )
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "mean_penetration"])
            for i, value in enumerate(per_step_mean):
                writer.writerow([i, f"{value:.9f}"])
        manifest.add_output(args.out)
        manifest.write_alongside(args.out)
    print(json.dumps({
        "sigma_cap": args.sigma_cap,
        "max_step_mean": float(per_step_mean.max()),
        "final_mean": float(per_step_mean[-1]),
    }))
    return 0


def _cmd_sim_corollary1(args: argparse.Namespace) -> int:
    report = sim.expander_bound_experiment(
        sim.ExpanderFamily(args.n, args.d),
        p=args.p,
        seeds=range(args.seed, args.seed + args.seeds),
        lambda_target=args.lambda_target,
        rounds=args.rounds,
        jobs=args.jobs,
    )
    text = json.dumps(report.to_dict(), indent=2) + "\n"
    if args.out:
        manifest = _Manifest(
            "sim corollary1",
            {"n": args.n, "d": args.d, "p": args.p, "lambda_target": args.lambda_target,
             "rounds": args.rounds, "seeds": args.seeds},
            args.seed,
        )
        Path(args.out).write_text(text)
        manifest.add_output(args.out)
        manifest.write_alongside(args.out)
    sys.stdout.write(text)
    if not report.ok:
        print("measured penetration exceeds the bound", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("GPI_JOBS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gpi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    ledger_p = sub.add_parser("ledger", help="event-log inspection")
    ledger_sub = ledger_p.add_subparsers(dest="subcommand", required=True)

    p = ledger_sub.add_parser("validate", help="parse, re-verify and summarize a log")
    p.add_argument("file")
    p.add_argument("--quorum", type=float, default=float(DEFAULT_RESET_QUORUM))
    p.set_defaults(func=_cmd_ledger_validate)

    p = ledger_sub.add_parser("chains", help="dump provenance chains as JSON")
    p.add_argument("file")
    p.add_argument("--quorum", type=float, default=float(DEFAULT_RESET_QUORUM))
    p.set_defaults(func=_cmd_ledger_chains)

    p = ledger_sub.add_parser("graph", help="derive a surety graph")
    p.add_argument("file")
    p.add_argument("--type", type=int, required=True, choices=(1, 2, 3, 4))
    p.add_argument("--at", type=int, default=None, help="prefix length (default: full log)")
    p.add_argument("--format", choices=("edgelist", "json", "dot"), default="edgelist")
    p.add_argument("--quorum", type=float, default=float(DEFAULT_RESET_QUORUM))
    p.add_argument("--out")
    p.set_defaults(func=_cmd_ledger_graph)

    metrics_p = sub.add_parser("metrics", help="graph metrics over edge lists")
    metrics_sub = metrics_p.add_subparsers(dest="subcommand", required=True)

    p = metrics_sub.add_parser("conductance", help="exact conductance")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--threshold", type=int, default=metrics.EXACT_CONDUCTANCE_LIMIT)
    p.set_defaults(func=_cmd_metrics_conductance)

    p = metrics_sub.add_parser("lambda", help="random-walk spectrum and Cheeger bounds")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=_cmd_metrics_lambda)

    p = metrics_sub.add_parser("mis", help="maximum independent set")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--exact-limit", type=int, default=metrics.MIS_EXACT_LIMIT)
    p.set_defaults(func=_cmd_metrics_mis)

    check_p = sub.add_parser("check", help="guarantee checkers")
    check_sub = check_p.add_subparsers(dest="subcommand", required=True)

    p = check_sub.add_parser("theorem2", help="six-condition growth guarantee")
    p.add_argument("--graph", required=True)
    p.add_argument("--community", required=True)
    p.add_argument("--classification", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--expect-pass", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_check_theorem2)

    sim_p = sub.add_parser("sim", help="growth simulations")
    sim_sub = sim_p.add_subparsers(dest="subcommand", required=True)

    p = sim_sub.add_parser("grow", help="agent-based growth run")
    p.add_argument("--config", help="JSON config; flags override file values")
    p.add_argument("--out", help="per-round CSV")
    p.add_argument("--emit-ledger", help="write the replayable event log here")
    p.add_argument("--n0", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--sybil-rate", dest="sybil_rate", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--adversary", choices=("uniform", "greedy_independent_set"))
    p.set_defaults(func=_cmd_sim_grow)

    p = sim_sub.add_parser("steady-state", help="scalar component chain vs the analytic root")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--burn-in", dest="burn_in", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_sim_steady_state)

    p = sim_sub.add_parser("observation2", help="capped-probability admission stream")
    p.add_argument("--sigma-cap", dest="sigma_cap", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n0", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sim_observation2)

    p = sim_sub.add_parser("corollary1", help="expander-backbone penetration bound")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--lambda-target", dest="lambda_target", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounds", type=int, default=20000)
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sim_corollary1)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _Failure as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except BrokenPipeError:
        # downstream consumer (head, less) closed the pipe: not an error
        try:
            sys.stdout.close()
        except BrokenPipeError:
            pass
        return 0
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except (json.JSONDecodeError, KeyError, ValueError, LedgerError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
