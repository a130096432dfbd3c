"""Command-line entry point: ``rmabg gen | run | bounds | ingest``.

Configuration is an INI file with sections ``[instance]``, ``[experiment]``,
``[ingest]`` and one ``[policies.<name>]`` per policy.  Unknown keys are
errors.  The seed comes from ``--seed``, then ``RMABG_SEED``, then the config.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import os
import sys
from pathlib import Path

from .bounds import all_bounds
from .core import content_hash, load_instance, save_instance
from .instances import (adversarial_instance, example1_instance, ingest_volunteer_log,
                        make_synthetic_instance, make_theta_instance)
from .policies import POLICY_KINDS, make_policy
from .simulate import EpisodeConfig, run_experiment, stream

INSTANCE_KEYS = {
    "generator": str, "kind": str, "n": int, "k": int, "q": float, "seed": int, "gamma": float,
    "alpha": float, "transitions": str, "variant": str, "a": int, "b": int,
    "universe": int, "set_size": int,
}
EXPERIMENT_KEYS = {
    "horizon": int, "seeds": int, "trials": int, "initial_state_rule": str,
    "initial_state": str, "seed": int, "gamma": float,
}
INGEST_KEYS = {"n_clusters": int, "budget": int, "gamma": float, "alpha": float,
               "action_source": str, "min_completions": int}
BOUNDS_HEADER = ("bound", "value")


class ConfigError(ValueError):
    pass


def _read_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file {path} not found")
        cp.read(path)
    for section in cp.sections():
        if section not in ("instance", "experiment", "ingest") and not section.startswith("policies."):
            raise ConfigError(f"unknown config section [{section}]")
    return cp


def _typed(cp, section: str, schema: dict) -> dict:
    if not cp.has_section(section):
        return {}
    out = {}
    for key, raw in cp.items(section):
        if key not in schema:
            raise ConfigError(f"unknown key '{key}' in [{section}]")
        try:
            out[key] = schema[key](raw)
        except ValueError:
            raise ConfigError(f"bad value {raw!r} for key '{key}' in [{section}]") from None
    return out


def _coerce(raw: str, default):
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if default is None:
        return int(raw) if raw.lstrip("-").isdigit() else raw
    return raw


def _policy_specs(cp) -> dict:
    specs = {}
    for section in cp.sections():
        if not section.startswith("policies."):
            continue
        name = section.split(".", 1)[1]
        items = dict(cp.items(section))
        kind = items.pop("kind", name)
        if kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy kind '{kind}' in [{section}]")
        defaults = make_policy(kind).get_params()
        defaults.pop("flavor", None)
        params = {}
        for key, raw in items.items():
            if key not in defaults:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            try:
                params[key] = _coerce(raw, defaults[key])
            except ValueError:
                raise ConfigError(f"bad value {raw!r} for key '{key}' in [{section}]") from None
        specs[name] = {"kind": kind, **params}
    return specs


def _seed(args, fallback: int | None) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("RMABG_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"RMABG_SEED must be an integer, got {env!r}") from None
    return 0 if fallback is None else fallback


def build_instance(params: dict, seed: int):
    p = dict(params)
    gen = p.pop("generator", "synthetic")
    p.pop("seed", None)
    gamma = p.pop("gamma", 0.9)
    if gen == "example1":
        return example1_instance(p.pop("transitions", "absorbing"), gamma=gamma)
    if gen == "adversarial":
        return adversarial_instance(p.pop("n", 4), gamma, p.pop("variant", "full_budget"), p.pop("k", None))
    rng = stream(seed, 0)
    if gen == "synthetic":
        kind = p.pop("kind", None)
        if kind is None:
            raise ConfigError("[instance] needs 'kind' for the synthetic generator")
        reward_params = {key: p.pop(key) for key in ("universe", "set_size") if key in p}
        n = p.pop("n", 4)
        return make_synthetic_instance(kind, n, p.pop("k", None), p.pop("q", 1.0), rng, gamma=gamma,
                                       alpha=p.pop("alpha", 0.5), reward_params=reward_params)
    if gen == "theta":
        for key in ("n", "k", "a", "b"):
            if key not in p:
                raise ConfigError(f"[instance] needs '{key}' for the theta generator")
        return make_theta_instance(p.pop("n"), p.pop("k"), p.pop("a"), p.pop("b"), p.pop("q", 1.0),
                                   rng, gamma=gamma, alpha=p.pop("alpha", 0.5))
    raise ConfigError(f"unknown generator '{gen}'")


def cmd_gen(args) -> int:
    cp = _read_config(args.config)
    params = _typed(cp, "instance", INSTANCE_KEYS)
    inst = build_instance(params, _seed(args, params.get("seed")))
    digest = save_instance(inst, args.out)
    print(digest)
    return 0


def cmd_run(args) -> int:
    cp = _read_config(args.config)
    exp = _typed(cp, "experiment", EXPERIMENT_KEYS)
    specs = _policy_specs(cp)
    if not specs:
        raise ConfigError("no [policies.<name>] sections in config")
    inst = load_instance(args.instance)
    initial = exp.get("initial_state")
    cfg = EpisodeConfig(
        horizon=exp.get("horizon", 50), gamma=exp.get("gamma"), seeds=exp.get("seeds", 15),
        trials_per_seed=exp.get("trials", 5),
        initial_state_rule=exp.get("initial_state_rule", "sampled"),
        initial_state=None if initial is None else tuple(int(x) for x in initial.split(",")),
    )
    report = run_experiment(inst, specs, cfg, _seed(args, exp.get("seed")), jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(report.results_csv())
    (out / "summary.csv").write_text(report.summary_csv())
    (out / "summary.md").write_text(report.markdown())
    sys.stdout.write(report.markdown())
    for name, msg in sorted(report.errors.items()):
        print(f"policy {name} failed: {msg}", file=sys.stderr)
    return 0


def cmd_bounds(args) -> int:
    inst = load_instance(args.instance)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BOUNDS_HEADER)
    for name, value in all_bounds(inst).items():
        w.writerow((name, repr(float(value))))
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_ingest(args) -> int:
    cp = _read_config(args.config)
    params = _typed(cp, "ingest", INGEST_KEYS)
    inst, report = ingest_volunteer_log(Path(args.csv).read_bytes(), return_report=True, **params)
    digest = save_instance(inst, args.out)
    print(digest)
    print(f"kept {len(report.volunteers)} volunteers, excluded {len(report.excluded)}, "
          f"{len(report.zero_count_cells)} smoothed empty cells", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rmabg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", default=None, help="INI configuration file")
        p.add_argument("--out", required=out_required, help="output path")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides RMABG_SEED)")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")

    p = sub.add_parser("gen", help="generate an instance JSON")
    common(p)
    p.set_defaults(func=cmd_gen)
    p = sub.add_parser("run", help="simulate policies on an instance")
    p.add_argument("instance")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("bounds", help="emit bound,value CSV for an instance")
    p.add_argument("instance")
    common(p, out_required=False)
    p.set_defaults(func=cmd_bounds)
    p = sub.add_parser("ingest", help="build an instance from a volunteer event log")
    p.add_argument("csv")
    common(p)
    p.set_defaults(func=cmd_ingest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"rmabg {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
