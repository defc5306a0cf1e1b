"""Command-line front end.

Every command reads an INI file (``--config``) whose keys can each be
overridden by ``--set section.key=value``; the common ones also have
dedicated flags.  A run writes into a fresh directory that is staged under a
temporary name and renamed only on success, so failed runs leave nothing
behind and earlier runs are never touched.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import shutil
import sys
import tempfile
from collections import defaultdict
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from . import __version__
from .core import ProtocolConfig
from .mdp import CurveRow, MdpConfig, Mechanism, Metric, NonConvergence, sweep, write_curve_csv
from .protocol import extract_ledger
from .rewards import allocate_all
from .sampling import BYTES_PER_SHARE, format_table, sampling_table
from .sim import ComplianceError, SimConfig, Strategy, check_config, property_report, run_execution

OUTPUT_ROOT_ENV = "PRSLAB_OUTPUT_ROOT"
COMMANDS = ("mdp-eval", "sim", "sampling", "rewards-demo")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending fields."""


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none") else int(text)


def _floats(text: str) -> list[float]:
    return [float(t) for t in _csv_list(text)]


def _ints(text: str) -> list[int]:
    return [int(t) for t in _csv_list(text)]


_PROTOCOL_DEFAULTS = {f.name: f.default for f in fields(ProtocolConfig) if f.name != "extra"}

# section -> key -> (default text, parser)
SCHEMA: dict[str, dict[str, tuple[str, Callable[[str], Any]]]] = {
    "run": {"seeds": ("0", _ints)},
    "protocol": {k: (str(v), type(v)) for k, v in _PROTOCOL_DEFAULTS.items()},
    "sim": {
        "rounds": ("2000", int),
        "strategy": ("all_honest", Strategy),
        "party_queries": ("", lambda s: tuple(_ints(s)) or None),
        "tx_per_round": ("1", int),
        "release_lead": ("3", int),
        "give_up": ("2", int),
        "growth_window": ("", _opt_int),
        "fairness_window": ("", _opt_int),
        "delta_target": ("0.1", float),
        "slack": ("0.15", float),
        "lam": ("1.01", float),
        "waive_compliance": ("false", _bool),
        "trace": ("false", _bool),
    },
    "mdp": {
        "metrics": ("relative_reward", lambda s: [Metric(m) for m in _csv_list(s)]),
        "mechanisms": ("bitcoin,rs,prs", lambda s: [Mechanism(m) for m in _csv_list(s)]),
        "alpha_grid": ("0.1,0.2,0.25,0.3,0.35,0.4", _floats),
        "gamma": ("0.5", float),
        "omega": ("6", int),
        "wfork": ("6", int),
        "max_fork": ("12", int),
        "v_ds": ("3.0", float),
        "conf": ("6", int),
        "ds_per_block": ("true", _bool),
        "tol": ("1e-4", float),
    },
    "sampling": {
        "eps": ("0.1", float),
        "deltas": ("0.01,0.02,0.03,0.05,0.07,0.1", _floats),
        "ps": ("0.85,0.65,0.5,0.3", _floats),
        "bytes_per_share": (str(BYTES_PER_SHARE), int),
    },
    "rewards-demo": {"rounds": ("400", int), "show_ledger": ("10", int)},
}


def load_config(path: str | Path | None, overrides: Iterable[tuple[str, str, str]] = ()
                ) -> dict[str, dict[str, Any]]:
    """Parse the INI file plus overrides into typed values, reporting every bad field."""
    raw: dict[str, dict[str, str]] = {s: {k: d for k, (d, _) in keys.items()} for s, keys in SCHEMA.items()}
    errors: list[str] = []
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            if section not in SCHEMA:
                errors.append(f"[{section}]: unknown section")
                continue
            for key, value in parser.items(section):
                if key not in SCHEMA[section]:
                    errors.append(f"{section}.{key}: unknown key")
                else:
                    raw[section][key] = value
    for section, key, value in overrides:
        if section not in SCHEMA or key not in SCHEMA[section]:
            errors.append(f"{section}.{key}: unknown key")
        else:
            raw[section][key] = value
    typed: dict[str, dict[str, Any]] = defaultdict(dict)
    for section, keys in SCHEMA.items():
        for key, (_, conv) in keys.items():
            try:
                typed[section][key] = conv(raw[section][key])
            except (TypeError, ValueError) as exc:
                errors.append(f"{section}.{key}: {exc}")
    if errors:
        raise ConfigError("\n".join(errors))
    typed["_raw"] = raw
    return dict(typed)


def _protocol(cfg) -> ProtocolConfig:
    try:
        return ProtocolConfig(**cfg["protocol"])
    except ValueError as exc:
        raise ConfigError(f"protocol: {exc}") from exc


def _sim_config(cfg, seed: int) -> SimConfig:
    s = {k: v for k, v in cfg["sim"].items() if k != "trace"}
    try:
        sc = SimConfig(protocol=_protocol(cfg), seed=seed, **s)
        check_config(sc)
    except ComplianceError as exc:
        raise ConfigError(f"sim: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from exc
    return sc


def _mdp_configs(cfg) -> list[tuple[Metric, MdpConfig, list[float]]]:
    m = cfg["mdp"]
    if not m["alpha_grid"]:
        raise ConfigError("mdp.alpha_grid: grid is empty")
    if not m["mechanisms"]:
        raise ConfigError("mdp.mechanisms: list is empty")
    if not m["metrics"]:
        raise ConfigError("mdp.metrics: list is empty")
    if m["tol"] <= 0:
        raise ConfigError("mdp.tol: must be positive")
    out = []
    for metric in m["metrics"]:
        for mech in m["mechanisms"]:
            for a in m["alpha_grid"]:
                try:
                    base = MdpConfig(alpha=a, gamma=m["gamma"], mechanism=mech, omega=m["omega"],
                                     wfork=m["wfork"], max_fork=m["max_fork"], v_ds=m["v_ds"],
                                     conf=m["conf"], ds_per_block=m["ds_per_block"])
                except ValueError as exc:
                    raise ConfigError(f"mdp ({mech.value}, alpha={a}): {exc}") from exc
            out.append((metric, base, m["alpha_grid"]))
    return out


def config_hash(command: str, raw: dict[str, dict[str, str]]) -> str:
    blob = json.dumps({"command": command, "config": raw}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def emit_plot_data(rows: Sequence[CurveRow], out_dir: str | Path) -> list[Path]:
    """One whitespace table per (metric, mechanism) with a ``#`` header line.

    Relative-reward tables carry a ``fair_share`` column equal to alpha, the
    reference line an attacker must beat.
    """
    if not rows:
        raise ValueError("no curves to emit")
    groups: dict[tuple[str, str], list[CurveRow]] = defaultdict(list)
    for r in rows:
        groups[(r.metric, r.mechanism)].append(r)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for (metric, mech), group in sorted(groups.items()):
        group.sort(key=lambda r: r.alpha)
        ic = metric == Metric.RELATIVE_REWARD.value
        path = out_dir / f"{metric}_{mech}.dat"
        with open(path, "w", newline="\n") as fh:
            fh.write(f"# {metric} {mech} gamma={group[0].gamma:g} omega={group[0].omega} wfork={group[0].wfork}\n")
            fh.write("# alpha value" + (" fair_share" if ic else "") + "\n")
            for r in group:
                fh.write(f"{r.alpha:.6g} {r.value:.6f}" + (f" {r.alpha:.6g}" if ic else "") + "\n")
        paths.append(path)
    return paths


def _cmd_mdp_eval(cfg, work: Path, log) -> dict:
    rows: list[CurveRow] = []
    for metric, base, grid in _mdp_configs(cfg):
        got = sweep(metric, base, grid, tol=cfg["mdp"]["tol"])
        for r in got:
            log(f"{r.metric:16s} {r.mechanism:11s} alpha={r.alpha:<6g} value={r.value:.6f}")
        rows.extend(got)
    write_curve_csv(rows, work / "curves.csv")
    emit_plot_data(rows, work / "plot")
    return {"rows": len(rows)}


def _cmd_sim(cfg, work: Path, log) -> dict:
    seeds = cfg["run"]["seeds"]
    if not seeds:
        raise ConfigError("run.seeds: list is empty")
    configs = [_sim_config(cfg, s) for s in seeds]  # validate everything before running
    (work / "reports").mkdir()
    summary = {}
    for sc in configs:
        trace = run_execution(sc)
        alloc = allocate_all(trace.chain_of(trace.honest[0]), trace.ctx)
        rep = property_report(trace, alloc)
        (work / "reports" / f"seed-{sc.seed}.json").write_text(rep.to_json(indent=2) + "\n")
        if cfg["sim"]["trace"]:
            (work / "traces").mkdir(exist_ok=True)
            trace.to_jsonl(work / "traces" / f"seed-{sc.seed}.jsonl")
        log(f"seed {sc.seed}: height={max(rep.final_heights)} consistency_depth={rep.consistency_depth} "
            f"growth=[{rep.growth_min}, {rep.growth_max}] freshness_misses={rep.freshness_misses} "
            f"fractions={rep.reward_fractions}")
        summary[str(sc.seed)] = {"consistency_ok": rep.consistency_ok, "growth_ok": rep.growth_ok,
                                 "freshness_misses": rep.freshness_misses}
    (work / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return {"runs": len(configs)}


def _cmd_sampling(cfg, work: Path, log) -> dict:
    s = cfg["sampling"]
    try:
        rows = sampling_table(s["ps"], s["deltas"], s["eps"], s["bytes_per_share"])
    except ValueError as exc:
        raise ConfigError(f"sampling: {exc}") from exc
    if not rows:
        raise ConfigError("sampling: ps and deltas must be nonempty")
    log(format_table(rows))
    with open(work / "sampling.csv", "w", newline="\n") as fh:
        names = list(asdict(rows[0]))
        fh.write(",".join(names) + "\n")
        for r in rows:
            fh.write(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in asdict(r).values()) + "\n")
    return {"rows": len(rows)}


def _cmd_rewards_demo(cfg, work: Path, log) -> dict:
    seed = cfg["run"]["seeds"][0] if cfg["run"]["seeds"] else 0
    try:
        sc = SimConfig(protocol=_protocol(cfg), seed=seed, rounds=cfg["rewards-demo"]["rounds"],
                       waive_compliance=True)
    except ValueError as exc:
        raise ConfigError(f"rewards-demo: {exc}") from exc
    trace = run_execution(sc)
    chain = trace.chain_of(trace.honest[0])
    ledger = extract_ledger(chain, sc.protocol.safety)
    show = cfg["rewards-demo"]["show_ledger"]
    log(f"chain height {chain.height}, ledger holds {len(ledger)} transactions")
    for tx in ledger[:show]:
        log(f"  {tx}")
    if len(ledger) > show:
        log(f"  ... {len(ledger) - show} more")
    alloc = allocate_all(chain, trace.ctx)
    alloc.write_csv(work / "allocation.csv")
    (work / "ledger.txt").write_text("".join(t + "\n" for t in ledger))
    log(f"{len(alloc.per_height)} finalised heights, total payout {alloc.total():.6f}")
    for p, v in sorted(alloc.per_party.items()):
        log(f"  party {p}: {v:.6f} ({v / alloc.total():.4f})")
    return {"heights": len(alloc.per_height)}


HANDLERS = {
    "mdp-eval": _cmd_mdp_eval,
    "sim": _cmd_sim,
    "sampling": _cmd_sampling,
    "rewards-demo": _cmd_rewards_demo,
}


def _parse_set(items: Sequence[str]) -> list[tuple[str, str, str]]:
    out = []
    for item in items:
        key, sep, value = item.partition("=")
        section, dot, name = key.rpartition(".")
        if not sep or not dot:
            raise ConfigError(f"--set {item!r}: expected section.key=value")
        out.append((section, name, value))
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prslab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with [run], [protocol], [sim], [mdp], [sampling] sections")
        p.add_argument("--out", help=f"run directory to create (default: a fresh one under ${OUTPUT_ROOT_ENV} or ./runs)")
        p.add_argument("--seed", help="seed or comma-separated seeds (run.seeds)")
        p.add_argument("--alpha-grid", help="comma-separated attacker powers (mdp.alpha_grid)")
        p.add_argument("--mechanism", action="append", help="mechanism name, repeatable or comma-separated")
        p.add_argument("--omega", help="object eligibility window (mdp.omega)")
        p.add_argument("--wfork", help="fork eligibility window (mdp.wfork)")
        p.add_argument("--gamma", help="tie-break fraction (mdp.gamma)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override any configuration key")
        p.add_argument("--quiet", action="store_true")
    return ap


def _overrides(args) -> list[tuple[str, str, str]]:
    out = []
    if args.seed is not None:
        out.append(("run", "seeds", args.seed))
    if args.alpha_grid is not None:
        out.append(("mdp", "alpha_grid", args.alpha_grid))
    if args.mechanism:
        out.append(("mdp", "mechanisms", ",".join(args.mechanism)))
    for key in ("omega", "wfork", "gamma"):
        if getattr(args, key) is not None:
            out.append(("mdp", key, getattr(args, key)))
    return out + _parse_set(args.set)


def _target_dir(args, command: str, chash: str) -> Path:
    if args.out:
        target = Path(args.out)
        if target.exists() and (not target.is_dir() or any(target.iterdir())):
            raise ConfigError(f"--out: {target} already exists and is not an empty directory")
        return target
    root = Path(os.environ.get(OUTPUT_ROOT_ENV) or "runs")
    base = root / f"{command}-{chash[:12]}"
    target, k = base, 1
    while target.exists():
        k += 1
        target = base.with_name(f"{base.name}-{k}")
    return target


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    log = (lambda s: None) if args.quiet else print
    try:
        cfg = load_config(args.config, _overrides(args))
        chash = config_hash(args.command, cfg["_raw"])
        target = _target_dir(args, args.command, chash)
    except ConfigError as exc:
        print(f"configuration error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    target.parent.mkdir(parents=True, exist_ok=True)
    work = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    try:
        info = HANDLERS[args.command](cfg, work, log)
        manifest = {
            "command": args.command,
            "version": __version__,
            "config_hash": chash,
            "seeds": cfg["run"]["seeds"],
            "config": cfg["_raw"],
            "result": info,
        }
        (work / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        if target.exists():
            target.rmdir()  # empty, checked above
        work.rename(target)
    except ConfigError as exc:
        shutil.rmtree(work, ignore_errors=True)
        print(f"configuration error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergence as exc:
        shutil.rmtree(work, ignore_errors=True)
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except BaseException:
        shutil.rmtree(work, ignore_errors=True)
        raise
    log(f"wrote {target}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
