"""Command line experiment runner.

    netcon run experiment.ini [--seed S] [--max-steps N] [--window W] [--workers K]
    netcon verify ft-star --n 3 --faults 1
    netcon sweep --k 4 --n 32,64,128 --seeds 30
    netcon export-dot clique --n 6 --seed 1

Experiment configs are INI files::

    [experiment]
    protocol = ft-line
    n = 20
    seeds = 1..100
    language = spanning_line

    [faults]
    policy = random_steps
    budget = 1
    horizon = 4000

    [stop]
    window = 8000

Reports are JSON, written to ``output`` (relative paths resolve against
$NETCON_OUT_DIR when set).  Exit status: 0 all checks passed, 1 a check
failed, 2 invalid config or usage.
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .core import ProtocolError, output_graph
from .invariants import invariants_for
from .languages import KINDS, GraphLanguage, check, language_for, to_dot, to_edge_list
from .protocols import REGISTRY_NAMES, PartitionParams, get_protocol, supernode_index
from .report import ExperimentReport, RunRecord, fit_exponent
from .scheduling import AdversarySchedule, ScheduleError, StopRule, random_crash_steps, simulate

OUT_DIR_ENV = "NETCON_OUT_DIR"
POLICIES = ("none", "fixed_steps", "random", "random_steps")
UNIVERSAL = "universal"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    protocol: str
    n: list
    seeds: list
    params: dict | None = None
    faults: dict = field(default_factory=lambda: {"policy": "none", "budget": 0})
    max_steps: int = 10_000_000
    window: int | None = None
    until: str = "window"
    language: str | None = None
    waste: int = 0
    invariants: bool = True
    output: str | None = None
    tm: str | None = None
    variant: str = "half"
    name: str = "experiment"

    def validate(self):
        if not self.seeds:
            raise ConfigError("experiment.seeds: seed list is empty")
        if not self.n:
            raise ConfigError("experiment.n: no population size given")
        budget = int(self.faults.get("budget", 0))
        for n in self.n:
            if n < 2:
                raise ConfigError(f"experiment.n: n={n} must be at least 2")
            if budget > n - 2:
                raise ConfigError(f"faults.budget: {budget} exceeds n-2 = {n - 2}")
        if self.faults.get("policy", "none") not in POLICIES:
            raise ConfigError(f"faults.policy: unknown policy {self.faults['policy']!r}; "
                              f"known: {', '.join(POLICIES)}")
        if self.until not in ("window", "silent"):
            raise ConfigError(f"stop.until: expected window or silent, got {self.until!r}")
        if self.max_steps <= 0:
            raise ConfigError("stop.max_steps must be positive")
        if self.language not in (None, "none") and self.language not in KINDS:
            raise ConfigError(f"experiment.language: unknown language {self.language!r}; "
                              f"known: {', '.join(KINDS)}")
        if self.protocol == UNIVERSAL:
            if not self.tm:
                raise ConfigError("machine.tm: universal constructor needs a machine")
            _load_machine(self.tm)
            if self.variant not in ("half", "third"):
                raise ConfigError(f"machine.variant: expected half or third, got {self.variant!r}")
        else:
            try:
                _, params = build_protocol(self)
            except (ProtocolError, KeyError, ValueError) as err:
                raise ConfigError(f"experiment.protocol: {err}") from None
            if self.language is None:
                try:
                    language_for(self.protocol, params)
                except ValueError as err:
                    raise ConfigError(f"experiment.language: {err}; set language = none "
                                      "to skip the check") from None
        try:
            for n in self.n[:1]:
                make_adversary(self, n, self.seeds[0])
        except ScheduleError as err:
            raise ConfigError(f"faults: {err}") from None
        return self


# -- config parsing -----------------------------------------------------------

def parse_seeds(text):
    """``1..50`` (inclusive range) or a comma list."""
    text = text.strip()
    m = re.fullmatch(r"(\d+)\s*\.\.\s*(\d+)", text)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        return list(range(a, b + 1))
    return [int(x) for x in re.split(r"[,\s]+", text) if x]


def parse_ints(text):
    return [int(x) for x in re.split(r"[,\s]+", text.strip()) if x]


def parse_H(text, k):
    text = text.strip()
    if text in ("", "complete_multipartite"):
        return None
    pairs = []
    for tok in re.split(r"[,\s]+", text):
        m = re.fullmatch(r"(\d+)-(\d+)", tok)
        if not m:
            raise ValueError(f"bad H pair {tok!r} (expected i-j)")
        pairs.append((int(m.group(1)), int(m.group(2))))
    return pairs


def _line_of(text, section, key):
    cur = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
        elif cur == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return i
    return None


def load_config(path):
    text = Path(path).read_text()
    return parse_config(text, name=Path(path).stem, source=str(path))


def parse_config(text, name="experiment", source="<config>"):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError(f"{source}: {err}") from None

    def get(section, key, conv, default=None, required=False):
        if not cp.has_option(section, key):
            if required:
                raise ConfigError(f"{source}: missing [{section}] {key}")
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as err:
            line = _line_of(text, section, key)
            where = f"line {line}" if line else f"[{section}]"
            raise ConfigError(f"{source}:{where}: bad value for {section}.{key} = {raw!r}: {err}") \
                from None

    def flag(raw):
        v = raw.strip().lower()
        if v in ("on", "true", "yes", "1"):
            return True
        if v in ("off", "false", "no", "0"):
            return False
        raise ValueError("expected on/off")

    if not cp.has_section("experiment"):
        raise ConfigError(f"{source}: missing [experiment] section")
    protocol = get("experiment", "protocol", str.strip, required=True)
    seeds = get("experiment", "seeds", parse_seeds)
    count = get("experiment", "seed_count", int)
    if seeds is None:
        seeds = list(range(count)) if count is not None else [0]
    params = None
    if cp.has_section("params"):
        k = get("params", "k", int, required=True)
        params = {"k": k, "H": get("params", "H", lambda s: parse_H(s, k)),
                  "f": get("params", "f", int)}
    faults = {"policy": "none", "budget": 0}
    if cp.has_section("faults"):
        faults = {
            "policy": get("faults", "policy", str.strip, "none"),
            "budget": get("faults", "budget", int, 0),
            "steps": get("faults", "steps", parse_ints, []),
            "rate": get("faults", "rate", float, 0.0),
            "selector": get("faults", "selector", str.strip, "random"),
            "horizon": get("faults", "horizon", int),
        }
        if faults["policy"] == "fixed_steps" and not cp.has_option("faults", "budget"):
            faults["budget"] = len(faults["steps"])
    cfg = ExperimentConfig(
        protocol=protocol,
        n=get("experiment", "n", parse_ints, required=True),
        seeds=seeds,
        params=params,
        faults=faults,
        max_steps=get("stop", "max_steps", int, 10_000_000),
        window=get("stop", "window", int),
        until=get("stop", "until", str.strip, "window"),
        language=get("experiment", "language", str.strip),
        waste=get("experiment", "waste", int, 0),
        invariants=get("experiment", "invariants", flag, True),
        output=get("experiment", "output", str.strip),
        tm=get("machine", "tm", str.strip),
        variant=get("machine", "variant", str.strip, "half"),
        name=name,
    )
    return cfg.validate()


# -- running ------------------------------------------------------------------

def _load_machine(spec):
    from .machine.tm import SHIPPED, get_tm, load_tm
    if spec in SHIPPED:
        return get_tm(spec)
    if Path(spec).is_file():
        return load_tm(spec)
    raise ConfigError(f"machine.tm: {spec!r} is neither a shipped machine "
                      f"({', '.join(sorted(SHIPPED))}) nor a file")


def build_protocol(cfg):
    params = None
    if cfg.params is not None:
        p = cfg.params
        params = PartitionParams(p["k"], frozenset(map(tuple, p["H"])), p.get("f")) if p.get("H") \
            else PartitionParams.complete_multipartite(p["k"], p.get("f"))
    return get_protocol(cfg.protocol, params), params


def make_adversary(cfg, n, seed):
    fa = cfg.faults
    policy, budget = fa.get("policy", "none"), int(fa.get("budget", 0))
    if policy == "none" or budget == 0:
        return AdversarySchedule.none()
    if policy == "fixed_steps":
        return AdversarySchedule.at_steps(fa.get("steps", []), fa.get("selector", "random"), budget)
    if policy == "random_steps":
        horizon = fa.get("horizon") or 10 * n * n
        return AdversarySchedule.at_steps(random_crash_steps(budget, horizon, seed),
                                          fa.get("selector", "random"))
    return AdversarySchedule(fault_budget=budget, policy="random", rate=fa.get("rate", 0.0),
                             target_selector=fa.get("selector", "random"))


def _language(cfg, params):
    if cfg.language == "none":
        return None
    if cfg.language is None:
        lang = language_for(cfg.protocol, params)
    else:
        lang = GraphLanguage(cfg.language, params=params if cfg.language == "partitioned" else None)
    if cfg.waste:
        lang = GraphLanguage(lang.kind, params=lang.params, machine=lang.machine, waste=cfg.waste)
    return lang


def run_one(cfg, n, seed):
    """One seeded run; deterministic in (cfg, n, seed)."""
    if cfg.protocol == UNIVERSAL:
        return _run_universal(cfg, n, seed)
    p, params = build_protocol(cfg)
    lang = _language(cfg, params)
    adv = make_adversary(cfg, n, seed)
    window = cfg.window if cfg.window is not None else StopRule.default_window(n)
    stop = StopRule(max_steps=cfg.max_steps, window=window, until=cfg.until)
    checks = invariants_for(p) if cfg.invariants else None
    tr = simulate(p, n, seed, adv, stop, checks=checks)
    cfg_final = tr.final
    alive = sum(cfg_final.alive)
    g = output_graph(cfg_final, p)
    extra = {"status_detail": tr.violation, "crashes": tr.crashes,
             "last_state_change": tr.last_state_change}
    if tr.violation:
        verdict = False
    elif not tr.stabilized:
        verdict = False
        extra["reason"] = "did not stabilize within the step budget"
    elif lang is None:
        verdict = None
    else:
        verdict, wit = check(g, lang.with_order(alive))
        if wit is not None and not verdict:
            extra["witness"] = wit
    if cfg.protocol == "supernodes" and params is not None:
        sizes = [0] * params.k
        for u in cfg_final.alive_nodes():
            sizes[supernode_index(cfg_final.state[u], params.k)] += 1
        extra["partition_sizes"] = sizes
        extra["spread"] = max(sizes) - min(sizes)
    return RunRecord(seed=seed, status=tr.status, steps=tr.length,
                     stabilization_step=tr.last_output_change if tr.stabilized else None,
                     faults=len(tr.crashes), verdict=verdict, order=g.order, size=g.size, n=n,
                     extra=extra)


def _run_universal(cfg, n, seed):
    from .machine.universal import run_universal
    tm = _load_machine(cfg.tm)
    rec = run_universal(tm, cfg.variant, n, make_adversary(cfg, n, seed), seed,
                        StopRule(max_steps=cfg.max_steps)).run
    bound = n / 2 if cfg.variant == "half" else 2 * n / 3
    within = rec.waste <= min(bound + rec.faults, n)
    rec.extra["waste_bound_ok"] = within
    if rec.verdict is not None:
        rec.verdict = bool(rec.verdict and within)
    else:
        rec.verdict = False
    rec.extra = {k: v for k, v in rec.extra.items() if k != "edges"}
    return rec


def _task(args):
    cfg, n, seed = args
    return run_one(cfg, n, seed)


def _map(tasks, workers):
    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_task, tasks))
    return [_task(t) for t in tasks]


def run_experiment(cfg, workers=1):
    """All (n, seed) runs of ``cfg``; results keep config order regardless of
    worker count."""
    tasks = [(cfg, n, s) for n in cfg.n for s in cfg.seeds]
    runs = _map(tasks, workers)
    conf = {"protocol": cfg.protocol, "n": cfg.n, "seeds": cfg.seeds, "faults": cfg.faults,
            "max_steps": cfg.max_steps, "window": cfg.window, "until": cfg.until,
            "language": cfg.language, "params": cfg.params, "tm": cfg.tm,
            "variant": cfg.variant if cfg.protocol == UNIVERSAL else None}
    rep = ExperimentReport(name=cfg.name, runs=runs, config=conf)
    if len(set(cfg.n)) >= 3:
        fit = _fit(runs, cfg.n)
        if fit is not None:
            rep.fits.update(fit)
    return rep


def _fit(runs, ns):
    table = []
    for n in sorted(set(ns)):
        steps = [r.stabilization_step for r in runs if r.n == n and r.stabilization_step]
        if steps:
            table.append({"n": n, "mean_steps": sum(steps) / len(steps), "runs": len(steps)})
    if len(table) < 2:
        return None
    return {"table": table, "exponent": fit_exponent([t["n"] for t in table],
                                                     [t["mean_steps"] for t in table])}


def timing_sweep(ns, seeds, k=4, f=None, H=None, protocol="supernodes", max_steps=50_000_000,
                 workers=1):
    """Mean termination step (last state change, silent stop) against n and
    the fitted log-log exponent.  Non-terminating runs are excluded with a
    warning."""
    ns = sorted(set(ns))
    if len(ns) < 3:
        raise ValueError(f"need at least 3 distinct n values, got {len(ns)}")
    seeds = list(seeds)
    if not seeds:
        raise ValueError("seed list is empty")
    cfg = ExperimentConfig(protocol=protocol, n=ns, seeds=seeds,
                           params={"k": k, "H": H, "f": f} if protocol == "supernodes" else None,
                           max_steps=max_steps, window=0, until="silent", language="none",
                           invariants=False, name=f"sweep-{protocol}")
    runs = _map([(cfg, n, s) for n in ns for s in seeds], workers)
    rep = ExperimentReport(name=cfg.name, runs=runs,
                           config={"protocol": protocol, "k": k, "n": ns, "seeds": seeds})
    table = []
    for n in ns:
        done = [r.extra["last_state_change"] for r in runs if r.n == n and r.status == "silent"]
        missing = sum(1 for r in runs if r.n == n and r.status != "silent")
        if missing:
            rep.warnings.append(f"n={n}: {missing} run(s) did not terminate and were excluded")
        if done:
            table.append({"n": n, "mean_steps": sum(done) / len(done), "runs": len(done)})
    if len(table) < 3:
        raise ValueError("fewer than 3 sizes have terminating runs")
    rep.fits["table"] = table
    rep.fits["exponent"] = fit_exponent([t["n"] for t in table], [t["mean_steps"] for t in table])
    rep.fits["ratios"] = [table[i + 1]["mean_steps"] / table[i]["mean_steps"]
                          for i in range(len(table) - 1)]
    return rep


# -- output -------------------------------------------------------------------

def out_path(path, default_name):
    base = os.environ.get(OUT_DIR_ENV)
    p = Path(path) if path else Path(default_name)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def write_report(rep, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rep.to_json())
    return path


def _summary(rep):
    lines = [f"{rep.name}: {len(rep.runs)} runs, pass rate {rep.pass_rate:.3f}"]
    if rep.mean_steps is not None:
        lines.append(f"  mean stabilization step {rep.mean_steps:.1f}, median {rep.median_steps}")
    if "exponent" in rep.fits:
        lines.append(f"  fitted exponent {rep.fits['exponent']:.3f}")
    lines += [f"  warning: {w}" for w in rep.warnings]
    return "\n".join(lines)


# -- commands -----------------------------------------------------------------

def cmd_run(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.max_steps is not None:
        cfg.max_steps = args.max_steps
    if args.window is not None:
        cfg.window = args.window
    cfg.validate()
    rep = run_experiment(cfg, workers=args.workers)
    path = write_report(rep, out_path(cfg.output, f"{cfg.name}.json"))
    print(_summary(rep))
    print(f"  report: {path}")
    checked = [r for r in rep.runs if r.verdict is not None]
    return 1 if any(not r.verdict for r in checked) else 0


def cmd_verify(args):
    from .verify import reachability_check
    params = PartitionParams.complete_multipartite(args.k, args.faults) if args.k else None
    p = get_protocol(args.protocol, params)
    if args.strip_notifications:
        p = p.without_notifications()
    lang = GraphLanguage(args.language, params=params if args.language == "partitioned" else None) \
        if args.language else language_for(args.protocol, params)
    v = reachability_check(p, args.n, args.faults, lang, symmetry=not args.no_symmetry,
                           node_budget=args.node_budget)
    out = {"protocol": p.name, "n": args.n, "faults": args.faults, "language": lang.kind,
           "status": v.status, "explored": v.explored,
           "terminal_classes": len(v.terminal_classes), "note": v.note,
           "counterexample": [e._asdict() for e in v.counterexample or []]}
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.output:
        write_report_text(text, out_path(args.output, args.output))
    print(text, end="")
    return 0 if v.passed else 1


def write_report_text(text, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_sweep(args):
    seeds = parse_seeds(args.seeds) if ".." in args.seeds or "," in args.seeds \
        else list(range(1, int(args.seeds) + 1))
    rep = timing_sweep(parse_ints(args.n), seeds, k=args.k, protocol=args.protocol,
                       max_steps=args.max_steps or 50_000_000, workers=args.workers)
    path = write_report(rep, out_path(args.output, f"{rep.name}.json"))
    print(_summary(rep))
    for row in rep.fits["table"]:
        print(f"  n={row['n']:>5}  mean steps {row['mean_steps']:.1f}  ({row['runs']} runs)")
    print(f"  report: {path}")
    return 0


def cmd_export(args):
    seed = args.seed if args.seed is not None else 0
    if args.protocol == UNIVERSAL:
        from .machine.universal import run_universal
        rep = run_universal(_load_machine(args.tm), args.variant, args.n,
                            _cli_adversary(args, args.n, seed), seed,
                            StopRule(max_steps=args.max_steps or 10**9))
        runner = rep.artifacts[0]
        cfg_final, p = runner.config, runner.protocol
    else:
        params = PartitionParams.complete_multipartite(args.k) if args.k else None
        p = get_protocol(args.protocol, params)
        window = args.window if args.window is not None else StopRule.default_window(args.n)
        tr = simulate(p, args.n, seed, _cli_adversary(args, args.n, seed),
                      StopRule(max_steps=args.max_steps or 10_000_000, window=window))
        cfg_final = tr.final
    g = output_graph(cfg_final, p)
    if args.format == "dot":
        labels = {u: str(cfg_final.state[u]) for u in g.vertices}
        text = to_dot(g, name=re.sub(r"\W", "_", args.protocol), labels=labels)
    else:
        text = to_edge_list(g)
    if args.output:
        write_report_text(text, out_path(args.output, args.output))
    else:
        sys.stdout.write(text)
    return 0


def _cli_adversary(args, n, seed):
    if not args.faults:
        return AdversarySchedule.none()
    return AdversarySchedule.at_steps(random_crash_steps(args.faults, 10 * n * n, seed))


def build_parser():
    ap = argparse.ArgumentParser(prog="netcon", description="Network constructors under crash "
                                 "faults: simulation runs, exhaustive checks and sweeps.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--max-steps", type=int)
        p.add_argument("--window", type=int)
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="exhaustive reachability check at small n")
    p.add_argument("protocol")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--faults", type=int, default=0)
    p.add_argument("--language", choices=KINDS)
    p.add_argument("--k", type=int)
    p.add_argument("--strip-notifications", action="store_true")
    p.add_argument("--no-symmetry", action="store_true")
    p.add_argument("--node-budget", type=int, default=300_000)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="timing sweep with a fitted exponent")
    p.add_argument("--protocol", default="supernodes")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--n", default="32,64,128")
    p.add_argument("--seeds", default="30", help="count, a..b range, or comma list")
    p.add_argument("-o", "--output")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-dot", help="simulate once and export the output graph")
    p.add_argument("protocol", help=f"one of {', '.join(REGISTRY_NAMES)} or {UNIVERSAL}")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--faults", type=int, default=0)
    p.add_argument("--k", type=int)
    p.add_argument("--tm", default="is-star")
    p.add_argument("--variant", default="half", choices=("half", "third"))
    p.add_argument("--format", default="dot", choices=("dot", "edgelist"))
    p.add_argument("-o", "--output")
    common(p)
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as err:
        # config, protocol and schedule errors all derive from ValueError
        print(f"netcon: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
