"""Command-line driver for the sewage experiments.

Every subcommand reads an optional flat ``key = value`` config file
(``--config``) and lets flags override it.  Outputs go to ``--out`` or
stdout and are byte-identical across reruns with the same seed and config
(timing columns stay blank unless ``--timing`` is given).

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 solver error.  On
failure one JSON object ``{"error": ..., "kind": ..., "exit": ...}`` is
printed to stderr.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from ..constraint import AuditGrid, InnerSolverConfig, grid_points
from ..core import Policy, TabularSICMDP, error_term, policy_value, sup_violation
from ..errors import SICMDPError
from ..sicpo import EvalConfig, NPGConfig, SICPOConfig, TabularSampler, run_fixed_grid_baseline, run_sicpo
from ..sicrl import EmpiricalModel, SICRLConfig, run_sicrl
from .data import DatasetSpec, GenerativeModel, NuMeasure, load_dataset, sample_dataset, save_dataset
from .reference import solve_naive_discretization, solve_reference
from .sewage import SewageSpec, generate_sewage_env

EXIT_USAGE, EXIT_IO, EXIT_SOLVER = 2, 3, 4


class UsageError(Exception):
    pass


class InputError(Exception):
    """An input file exists but its contents are malformed."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# (type, default) of every config key; flags use the same names with '-'
DEFAULTS = {
    "seed": (int, 0),
    "out": (str, None),
    "env": (str, None),
    "data": (str, None),
    "policy": (str, None),
    "grid": (int, 10_000),
    "reference_grid": (int, 100_000),
    "eta": (float, None),
    "T": (str, None),
    "N_baseline": (int, 9),
    "inner": (str, "random"),
    "samples": (int, None),
    "reps": (int, 20),
    "algo": (str, "sicrl,baseline"),
    "num_states": (int, 8),
    "num_actions": (int, 4),
    "gamma": (float, 0.9),
    "delta_margin": (float, 1e-6),
    "mode": (str, "generative"),
    "n0": (int, 100),
    "m": (int, 10_000),
    "delta": (float, None),
    "alpha": (float, 1.0),
    "K_eval": (int, 10_000),
    "K_sgd": (int, 1000),
    "H": (int, 100),
    "W": (float, 1000.0),
    "sgd_step": (float, 1.0),
    "timing": (bool, False),
}


def _read_config(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    parser.read_string("[config]\n" + text)
    return dict(parser["config"])


def _coerce(key, value):
    if key not in DEFAULTS:
        raise UsageError(f"unknown config key {key!r}")
    kind = DEFAULTS[key][0]
    if value is None or isinstance(value, kind):
        return value
    try:
        if kind is bool:
            return str(value).strip().lower() in ("1", "true", "yes", "on")
        return kind(str(value).strip())
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {value!r}") from exc


def _settings(args) -> dict:
    settings = {k: d for k, (_, d) in DEFAULTS.items()}
    explicit = set()
    if args.config:
        for k, v in _read_config(args.config).items():
            settings[k] = _coerce(k, v)
            explicit.add(k)
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None and v is not False:
            settings[k] = _coerce(k, v)
            explicit.add(k)
    settings["_explicit"] = explicit
    return settings


def _budgets(text, default) -> list[int]:
    """``"9"``, ``"1..64"`` or ``"1,2,4"``."""
    if text is None:
        return [default]
    out = []
    for part in str(text).split(","):
        if ".." in part:
            lo, hi = (int(v) for v in part.split(".."))
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out or min(out) < 1:
        raise UsageError("budgets must be positive integers")
    return out


def _parse_file(loader, path, what):
    try:
        return loader(path)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed {what} file {path}: {exc}") from exc


def _load_env(cfg) -> TabularSICMDP:
    if not cfg["env"]:
        raise UsageError("--env is required")
    return _parse_file(lambda p: TabularSICMDP.from_json(Path(p).read_text(encoding="utf-8")),
                       cfg["env"], "model")


def _emit(cfg, text: str, stdout):
    if cfg["out"]:
        Path(cfg["out"]).write_text(text, encoding="utf-8")
    else:
        stdout.write(text)


def _dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True) + "\n"


def _inner(cfg, default_samples, seed, family=None) -> InnerSolverConfig:
    samples = cfg["samples"] or default_samples
    if cfg["inner"] == "grid":
        return InnerSolverConfig("grid", grid=grid_points(family.box, cfg["N_baseline"]), seed=seed)
    if cfg["inner"] not in ("random", "pga"):
        raise UsageError("--inner must be random, pga or grid")
    return InnerSolverConfig(cfg["inner"], samples=samples, seed=seed)


def _sicpo_config(cfg, model, T) -> SICPOConfig:
    return SICPOConfig(
        alpha=cfg["alpha"], eta=0.013 if cfg["eta"] is None else cfg["eta"], T=T,
        npg=NPGConfig(K_sgd=cfg["K_sgd"], H=cfg["H"], W=cfg["W"], step=cfg["sgd_step"]),
        eval=EvalConfig(cfg["K_eval"], cfg["H"]),
        inner=_inner(cfg, 100, cfg["seed"], model.constraints), seed=cfg["seed"], audit_model=model)


def _sicrl_run(cfg, model, max_iter):
    if cfg["data"]:
        data = _parse_file(load_dataset, cfg["data"], "dataset")
        delta = cfg["delta"] or 0.005 / (model.num_states ** 2 * model.num_actions)
    else:
        data, delta = EmpiricalModel.exact(model.transition), 0.1
    config = SICRLConfig(delta=delta, eta=1e-4 if cfg["eta"] is None else cfg["eta"],
                         max_iter=max_iter, inner=_inner(cfg, 10_000, cfg["seed"], model.constraints))
    return run_sicrl(data, model, config=config)


# -- subcommands -------------------------------------------------------------


def cmd_gen_env(cfg, stdout):
    spec = SewageSpec(cfg["num_states"], cfg["num_actions"], cfg["gamma"], cfg["delta_margin"],
                      cfg["seed"])
    _emit(cfg, generate_sewage_env(spec).to_json() + "\n", stdout)


def cmd_sample_data(cfg, stdout):
    model = _load_env(cfg)
    if cfg["mode"] == "generative":
        mode = GenerativeModel(cfg["n0"])
    elif cfg["mode"] == "nu":
        S, A = model.num_states, model.num_actions
        mode = NuMeasure(np.full((S, A), 1.0 / (S * A)), cfg["m"])
    else:
        raise UsageError("mode must be generative or nu")
    dataset = sample_dataset(model, DatasetSpec(mode, cfg["seed"]))
    if cfg["out"]:
        save_dataset(dataset, cfg["out"])
    else:
        stdout.write(json.dumps(dataset.triples.tolist()) + "\n")


def cmd_solve_exact(cfg, stdout):
    model = _load_env(cfg)
    size = cfg["grid"] if "grid" in cfg["_explicit"] else cfg["reference_grid"]
    ref = solve_reference(model, grid_size=size)
    _emit(cfg, _dumps({"value": ref.value, "grid_size": len(ref.grid),
                       "policy": ref.policy.to_dict(), "lp": ref.lp_stats}), stdout)


def cmd_sicrl(cfg, stdout):
    model = _load_env(cfg)
    policy, state = _sicrl_run(cfg, model, _budgets(cfg["T"], 64)[-1])
    _emit(cfg, state.to_csv(cfg["timing"]), stdout)
    if cfg["policy"]:
        Path(cfg["policy"]).write_text(_dumps(policy.to_dict()), encoding="utf-8")


def cmd_sicpo(cfg, stdout, baseline=False):
    model = _load_env(cfg)
    config = _sicpo_config(cfg, model, _budgets(cfg["T"], 100)[-1])
    sampler = TabularSampler(model)
    if baseline:
        policy, state = run_fixed_grid_baseline(sampler, None, cfg["N_baseline"], config)
    else:
        policy, state = run_sicpo(sampler, None, config)
    _emit(cfg, state.to_csv(cfg["timing"]), stdout)
    if cfg["policy"]:
        Path(cfg["policy"]).write_text(_dumps(policy.to_dict()), encoding="utf-8")


def cmd_baseline(cfg, stdout):
    """Naive discretization: the occupancy LP on an ``N_baseline`` lattice
    (``--algo sicpo`` runs the fixed-grid SI-CPO variant instead)."""
    if cfg["algo"] == "sicpo":
        return cmd_sicpo(cfg, stdout, baseline=True)
    model = _load_env(cfg)
    sol = solve_naive_discretization(model, n_points=cfg["N_baseline"])
    grid = AuditGrid.of_size(model.constraints, cfg["grid"])
    _, worst = sup_violation(model, sol.policy, grid)
    _emit(cfg, _dumps({"N_baseline": cfg["N_baseline"], "value": sol.value,
                       "sup_violation": worst, "policy": sol.policy.to_dict()}), stdout)
    if cfg["policy"]:
        Path(cfg["policy"]).write_text(_dumps(sol.policy.to_dict()), encoding="utf-8")


def cmd_eval(cfg, stdout):
    model = _load_env(cfg)
    if not cfg["policy"]:
        raise UsageError("--policy is required")
    policy = _parse_file(lambda p: Policy.from_dict(json.loads(Path(p).read_text(encoding="utf-8"))),
                         cfg["policy"], "policy")
    grid = AuditGrid.of_size(model.constraints, cfg["grid"])
    ref = solve_reference(model, grid_size=cfg["reference_grid"])
    y, worst = sup_violation(model, policy, grid)
    _emit(cfg, _dumps({"reward_value": policy_value(model, policy, model.reward),
                       "reference_value": ref.value, "sup_violation": worst,
                       "worst_y": y.tolist(),
                       "error_term": error_term(model, policy, ref.value, grid)}), stdout)


def _sweep_rows(algo, rep, seed, budgets, cfg, model, ref, grid):
    if algo == "sicrl":
        _, state = _sicrl_run(cfg, model, max(budgets))
        for b in budgets:
            h = state.history[min(b, state.iterations) - 1]
            yield b, h.iter, error_term(model, h.policy, ref.value, grid)
    elif algo == "baseline":
        for b in budgets:
            sol = solve_naive_discretization(model, n_points=b)
            yield b, 1, error_term(model, sol.policy, ref.value, grid)
    elif algo in ("sicpo", "sicpo-grid"):
        config = _sicpo_config(cfg, model, max(budgets))
        config.seed = seed
        sampler = TabularSampler(model)
        run = run_sicpo if algo == "sicpo" else (
            lambda s, f, c: run_fixed_grid_baseline(s, f, cfg["N_baseline"], c))
        try:
            _, state = run(sampler, None, config)
        except SICMDPError:
            return
        for b in budgets:
            t = min(b, config.T) - 1
            yield b, t + 1, error_term(model, state.policy_at(t).probs, ref.value, grid)
    else:
        raise UsageError(f"unknown algorithm {algo!r}")


def cmd_sweep(cfg, stdout):
    algos = [a.strip() for a in cfg["algo"].split(",") if a.strip()]
    budgets = _budgets(cfg["T"], 9)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algo", "rep", "seed", "budget", "iter", "error_term"])
    for rep in range(cfg["reps"]):
        seed = cfg["seed"] + rep
        if cfg["env"]:
            model = _load_env(cfg)
        else:
            model = generate_sewage_env(SewageSpec(cfg["num_states"], cfg["num_actions"],
                                                   cfg["gamma"], cfg["delta_margin"], seed))
        ref = solve_reference(model, grid_size=cfg["reference_grid"])
        grid = AuditGrid.of_size(model.constraints, cfg["grid"])
        local = dict(cfg, seed=seed)
        for algo in algos:
            for budget, it, err in _sweep_rows(algo, rep, seed, budgets, local, model, ref, grid):
                w.writerow([algo, rep, seed, budget, it, repr(float(err))])
    _emit(cfg, buf.getvalue(), stdout)


COMMANDS = {
    "gen-env": cmd_gen_env,
    "sample-data": cmd_sample_data,
    "solve-exact": cmd_solve_exact,
    "sicrl": cmd_sicrl,
    "sicpo": cmd_sicpo,
    "baseline": cmd_baseline,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sicmdp", description="Semi-infinitely constrained MDP experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config")
        for key, (kind, _) in DEFAULTS.items():
            flag = "--" + key.replace("_", "-")
            if kind is bool:
                p.add_argument(flag, dest=key, action="store_true")
            else:
                p.add_argument(flag, dest=key)
    return parser


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr

    def fail(code, kind, exc):
        stderr.write(json.dumps({"error": str(exc), "kind": kind, "exit": code}) + "\n")
        return code

    try:
        args = build_parser().parse_args(argv)
        cfg = _settings(args)
        COMMANDS[args.command](cfg, stdout)
    except UsageError as exc:
        return fail(EXIT_USAGE, "usage", exc)
    except (OSError, InputError, configparser.Error) as exc:
        return fail(EXIT_IO, "io", exc)
    except SICMDPError as exc:
        return fail(EXIT_SOLVER, "solver", exc)
    except ValueError as exc:
        # out-of-range parameters rejected by the library
        return fail(EXIT_USAGE, "usage", exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
