"""Experiment orchestration: JSON configs in, CSV reports out.

Subcommands:

* ``analyze``    -- critical constants and centering certificates for a law.
* ``survival``   -- killed-walk survival estimates (MC rows plus exact-DP
                    oracle rows on lattice laws) over a slope/depth grid.
* ``pemantle``   -- the binary-Bernoulli reproduction table: exact survival
                    iterated in depth against the predicted decay constant.
* ``mogulskii``  -- corridor probabilities against the small-deviation
                    constant over an n-grid.

Every stochastic command requires a seed and is bit-reproducible from
(config, seed); rows are dispatched to a process pool and sorted before
writing, so the thread count never changes the output.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import math
import os
import sys
import time

import jsonschema
import numpy as np

from . import models, mogulskii, oracle, simulate, spine, transform
from .analysis import (aldous_rate, beta_bs, beta_bs_from_gamma_derivative,
                       gamma_bs_solve, solve_tstar)
from .errors import (CertificationError, GridExhausted, LatticeError,
                     LawValidationError, NoCriticalPoint)
from .models import (BinaryBernoulli, DiscreteFinite, ExplicitFinite, Gaussian,
                     OffspringLaw, ProductLaw)
from .rng import derive_seed

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NO_CRITICAL_POINT = 3
EXIT_BUDGET = 4

CSV_SCHEMA_VERSION = "kbrw.v1"

# ---------------------------------------------------------------------------
# config schema

_STEP_SCHEMA = {
    "oneOf": [
        {"type": "object",
         "properties": {"type": {"const": "discrete"},
                        "atoms": {"type": "array", "minItems": 2,
                                  "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                            "items": {"type": "number"}}}},
         "required": ["type", "atoms"], "additionalProperties": False},
        {"type": "object",
         "properties": {"type": {"const": "gaussian"},
                        "mean": {"type": "number"},
                        "stddev": {"type": "number", "exclusiveMinimum": 0}},
         "required": ["type", "mean", "stddev"], "additionalProperties": False},
    ]
}

LAW_SCHEMA = {
    "oneOf": [
        {"type": "object",
         "properties": {"type": {"const": "binary_bernoulli"},
                        "p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
         "required": ["type", "p"], "additionalProperties": False},
        {"type": "object",
         "properties": {"type": {"const": "product"},
                        "offspring_pmf": {"type": "array", "minItems": 1,
                                          "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                                    "items": {"type": "number"}}},
                        "step": _STEP_SCHEMA},
         "required": ["type", "offspring_pmf", "step"], "additionalProperties": False},
        {"type": "object",
         "properties": {"type": {"const": "explicit"},
                        "outcomes": {"type": "array", "minItems": 1,
                                     "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                               "prefixItems": [
                                                   {"type": "array",
                                                    "items": {"type": "number"}},
                                                   {"type": "number"}]}}},
         "required": ["type", "outcomes"], "additionalProperties": False},
    ]
}

_BOUNDARY_SCHEMA = {
    "oneOf": [
        {"type": "object",
         "properties": {"type": {"const": "affine"},
                        "intercept": {"type": "number"}, "slope": {"type": "number"}},
         "required": ["type", "intercept"], "additionalProperties": False},
        {"type": "object",
         "properties": {"type": {"const": "samples"},
                        "values": {"type": "array", "minItems": 2,
                                   "items": {"type": "number"}}},
         "required": ["type", "values"], "additionalProperties": False},
    ]
}

CONFIG_SCHEMAS = {
    "analyze": {
        "type": "object",
        "properties": {"law": LAW_SCHEMA, "seed": {"type": "integer"}},
        "required": ["law"], "additionalProperties": False,
    },
    "survival": {
        "type": "object",
        "properties": {
            "law": LAW_SCHEMA,
            "seed": {"type": "integer"},
            "coordinate": {"enum": ["U", "V"]},
            "slopes": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
            "n": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
            "replicates": {"type": "integer", "minimum": 100},
            "escape_cap": {"type": ["integer", "null"], "minimum": 1},
            "record_runtime": {"type": "boolean"},
            "time_budget_s": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["law", "seed", "slopes", "n", "replicates"],
        "additionalProperties": False,
    },
    "pemantle": {
        "type": "object",
        "properties": {
            "law": LAW_SCHEMA,
            "seed": {"type": "integer"},
            "eps_grid": {"type": "array", "minItems": 1,
                         "items": {"type": "number", "exclusiveMinimum": 0}},
            "rel_tol": {"type": "number", "exclusiveMinimum": 0},
            "n_start": {"type": "integer", "minimum": 2},
            "n_max": {"type": "integer", "minimum": 4},
            "time_budget_s": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["law", "eps_grid"], "additionalProperties": False,
    },
    "mogulskii": {
        "type": "object",
        "properties": {
            "law": LAW_SCHEMA,
            "seed": {"type": "integer"},
            "corridor": {
                "type": "object",
                "properties": {"g1": _BOUNDARY_SCHEMA, "g2": _BOUNDARY_SCHEMA,
                               "sigma": {"type": "number", "exclusiveMinimum": 0}},
                "required": ["g1", "g2", "sigma"], "additionalProperties": False,
            },
            "family": {
                "type": "object",
                "properties": {"type": {"enum": ["lazy", "lattice", "spine"]},
                               "atoms": {"type": "array"},
                               "condition_nu": {"type": "boolean"}},
                "required": ["type"], "additionalProperties": False,
            },
            "n_list": {"type": "array", "minItems": 1,
                       "items": {"type": "integer", "minimum": 2}},
            "endpoint_b": {"type": ["number", "boolean"]},
            "mc_replicates": {"type": "integer", "minimum": 1000000},
            "time_budget_s": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["seed", "corridor", "family", "n_list"],
        "additionalProperties": False,
    },
}


def law_from_config(obj: dict) -> OffspringLaw:
    if obj["type"] == "binary_bernoulli":
        return BinaryBernoulli(obj["p"])
    if obj["type"] == "product":
        step = obj["step"]
        if step["type"] == "discrete":
            s = DiscreteFinite(tuple((v, p) for v, p in step["atoms"]))
        else:
            s = Gaussian(step["mean"], step["stddev"])
        return ProductLaw(tuple((int(k), p) for k, p in obj["offspring_pmf"]), s)
    return ExplicitFinite(tuple((tuple(ds), p) for ds, p in obj["outcomes"]))


def _boundary_from_config(obj: dict):
    if obj["type"] == "affine":
        a, b = obj["intercept"], obj.get("slope", 0.0)
        return lambda t: a + b * t
    values = np.asarray(obj["values"], dtype=np.float64)
    ts = np.linspace(0.0, 1.0, values.size)
    return lambda t: float(np.interp(t, ts, values))


# ---------------------------------------------------------------------------
# CSV plumbing

def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.17g}"
    return str(x)


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_csv(out_path: str | None, schema: str, config: dict, header: list[str],
              rows: list[list], footer_comments: list[str] = ()) -> None:
    lines = [f"# schema={CSV_SCHEMA_VERSION}.{schema} config_sha256={config_digest(config)} "
             f"seed={config.get('seed', '')}"]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    for c in footer_comments:
        lines.append(f"# {c}")
    text = "\n".join(lines) + "\n"
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _run_rows(tasks, worker, threads: int | None):
    if threads is None:
        threads = os.cpu_count() or 1
    workers = min(threads, len(tasks))
    if workers <= 1:
        return [worker(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, tasks))


# ---------------------------------------------------------------------------
# analyze

def cmd_analyze(config: dict, out_path: str | None) -> int:
    law = law_from_config(config["law"])
    report = models.validate(law)
    if not report.ok:
        for v in report.violations:
            print(f"validation failure: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        profile = solve_tstar(law)
    except NoCriticalPoint as exc:
        print(f"no critical tilt: {exc}", file=sys.stderr)
        return EXIT_NO_CRITICAL_POINT
    vlaw = transform.make_vlaw(law, profile)
    rows = [
        ("mean_children", report.mean_children),
        ("t_star", profile.t_star),
        ("gamma", profile.gamma),
        ("psi_tstar", profile.psi_tstar),
        ("psi2_tstar", profile.psi2_tstar),
        ("sigma2", profile.sigma2),
        ("beta_U", profile.beta_U),
        ("beta_V", profile.beta_V),
        ("tilt_identity_mean_exp_residual", vlaw.mean_exp_residual),
        ("tilt_identity_mean_vexp_residual", vlaw.mean_vexp_residual),
        ("delta1_witness_E_sum_exp_minus_2V", vlaw.delta1_witness),
        ("delta2_witness_E_sum_exp_plus_V", vlaw.delta2_witness),
    ]
    if isinstance(law, BinaryBernoulli) and law.p < 0.5:
        g = gamma_bs_solve(law.p)
        rows += [
            ("gamma_bs_entropy_equation", g),
            ("gamma_cross_check_abs_diff", abs(g - profile.gamma)),
            ("beta_bs", beta_bs(law.p)),
        ]
        if abs(16.0 * law.p * (1.0 - law.p) - 1.0) <= 1e-9:
            # the derivative form of beta applies only at the gamma = 1/2 point
            rows.append(("beta_bs_derivative_form", beta_bs_from_gamma_derivative(law.p)))
            rows.append(("aldous_rate", aldous_rate(law.p)))
    for key, value in rows:
        print(f"{key} = {_fmt(value)}")
    if out_path is not None:
        write_csv(out_path, "analyze", config, ["quantity", "value"],
                  [[k, v] for k, v in rows])
    return EXIT_OK


# ---------------------------------------------------------------------------
# survival

def _survival_task(task: dict) -> dict:
    vlaw = task["vlaw"]
    started = time.perf_counter()
    if task["method"] == "mc":
        barrier = simulate.BarrierSpec(task["coordinate"], task["slope"])
        est = simulate.estimate_rho(vlaw, barrier, task["n"], task["replicates"],
                                    escape_cap=task["escape_cap"], seed=task["row_seed"])
        row = {"estimate": est.p_hat, "ci_low": est.ci_low, "ci_high": est.ci_high,
               "replicates": est.replicates, "cap_hits": est.cap_hits}
    else:
        ll = oracle.LatticeLaw.from_law(vlaw.base)
        barrier = simulate.BarrierSpec(task["coordinate"], task["slope"])
        p = oracle.exact_path_survival(ll, task["n"], v_slope=barrier.v_slope(vlaw.profile),
                                       profile=vlaw.profile)
        row = {"estimate": p, "ci_low": p, "ci_high": p, "replicates": 0, "cap_hits": 0}
    runtime_ms = (time.perf_counter() - started) * 1e3 if task["record_runtime"] else 0.0
    row.update(method=task["method"], coordinate=task["coordinate"],
               slope=task["slope"], n=task["n"], seed=task["row_seed"],
               runtime_ms=runtime_ms)
    return row


def cmd_survival(config: dict, out_path: str | None, threads: int) -> int:
    law = law_from_config(config["law"])
    report = models.validate(law)
    if not report.ok:
        for v in report.violations:
            print(f"validation failure: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        profile = solve_tstar(law)
    except NoCriticalPoint as exc:
        print(f"no critical tilt: {exc}", file=sys.stderr)
        return EXIT_NO_CRITICAL_POINT
    vlaw = transform.make_vlaw(law, profile)
    coordinate = config.get("coordinate", "V")
    escape_cap = config.get("escape_cap", 10_000)
    if escape_cap is None:
        escape_cap = math.inf
    methods = ["mc"]
    if models.is_lattice(law):
        methods.append("oracle")
    else:
        print("warning: non-lattice law, oracle rows omitted", file=sys.stderr)

    tasks = []
    idx = 0
    for slope in config["slopes"]:
        for n in config["n"]:
            for method in methods:
                tasks.append({"vlaw": vlaw, "method": method, "coordinate": coordinate,
                              "slope": slope, "n": n, "replicates": config["replicates"],
                              "escape_cap": escape_cap,
                              "row_seed": derive_seed(config["seed"], idx),
                              "record_runtime": config.get("record_runtime", False)})
                idx += 1
    budget = config.get("time_budget_s")
    started = time.perf_counter()
    rows = _run_rows(tasks, _survival_task, threads)
    if budget is not None and time.perf_counter() - started > budget:
        print("runtime budget exceeded", file=sys.stderr)
        return EXIT_BUDGET
    rows.sort(key=lambda r: (r["method"], r["slope"], r["n"]))
    header = ["method", "coordinate", "slope", "n", "estimate", "ci_low", "ci_high",
              "replicates", "seed", "cap_hits", "runtime_ms"]
    write_csv(out_path, "survival", config, header,
              [[r[h] for h in header] for r in rows])
    return EXIT_OK


# ---------------------------------------------------------------------------
# pemantle reproduction table

def _pemantle_task(task: dict) -> dict:
    ll, profile = task["ll"], task["profile"]
    eps_u = task["eps_u"]
    eps_v = transform.barrier_map(eps_u, profile)
    rho, n_used = oracle.rho_limit(ll, profile, eps_v, rel_tol=task["rel_tol"],
                                   n_start=task["n_start"], n_max=task["n_max"])
    return {"eps_U": eps_u, "eps_V": eps_v, "n_used": n_used, "rho_oracle": rho,
            "sqrt_eps_times_log_rho": math.sqrt(eps_u) * math.log(rho) if rho > 0 else -math.inf,
            "beta_target": -task["beta"]}


def cmd_pemantle(config: dict, out_path: str | None, threads: int) -> int:
    law = law_from_config(config["law"])
    if not isinstance(law, BinaryBernoulli):
        print("pemantle command needs a binary_bernoulli law", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        profile = solve_tstar(law)
    except NoCriticalPoint as exc:
        # for this family the diagnosis is exactly p >= 1/2
        print(f"no critical tilt (requires p < 1/2): {exc}", file=sys.stderr)
        return EXIT_NO_CRITICAL_POINT
    ll = oracle.LatticeLaw.from_law(law)
    beta = beta_bs(law.p)
    tasks = [{"ll": ll, "profile": profile, "eps_u": e,
              "rel_tol": config.get("rel_tol", 0.01),
              "n_start": config.get("n_start", 128),
              "n_max": config.get("n_max", 1 << 18), "beta": beta}
             for e in config["eps_grid"]]
    budget = config.get("time_budget_s")
    started = time.perf_counter()
    try:
        rows = _run_rows(tasks, _pemantle_task, threads)
    except GridExhausted as exc:
        print(f"depth iteration failed: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    if budget is not None and time.perf_counter() - started > budget:
        print("runtime budget exceeded", file=sys.stderr)
        return EXIT_BUDGET
    rows.sort(key=lambda r: -r["eps_U"])
    header = ["eps_U", "eps_V", "n_used", "rho_oracle",
              "sqrt_eps_times_log_rho", "beta_target"]
    footers = []
    if abs(16.0 * law.p * (1.0 - law.p) - 1.0) <= 1e-9:
        footers.append(f"aldous_rate={_fmt(aldous_rate(law.p))}")
    write_csv(out_path, "pemantle", config, header,
              [[r[h] for h in header] for r in rows], footer_comments=footers)
    return EXIT_OK


# ---------------------------------------------------------------------------
# mogulskii experiments

def cmd_mogulskii(config: dict, out_path: str | None) -> int:
    cor = config["corridor"]
    try:
        spec = mogulskii.CorridorSpec.from_functions(
            _boundary_from_config(cor["g1"]), _boundary_from_config(cor["g2"]),
            cor["sigma"])
    except ValueError as exc:
        print(f"invalid corridor: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    fam = config["family"]
    if fam["type"] == "lazy":
        arr = mogulskii.ArraySpec.lazy_walk()
    elif fam["type"] == "lattice":
        arr = mogulskii.ArraySpec.lattice(tuple((v, p) for v, p in fam["atoms"]))
    else:
        if "law" not in config:
            print("spine family needs a 'law' entry in the config", file=sys.stderr)
            return EXIT_VALIDATION
        law = law_from_config(config["law"])
        try:
            profile = solve_tstar(law)
        except NoCriticalPoint as exc:
            print(f"no critical tilt: {exc}", file=sys.stderr)
            return EXIT_NO_CRITICAL_POINT
        vlaw = transform.make_vlaw(law, profile)
        arr = mogulskii.ArraySpec.from_spine(spine.make_spine(vlaw),
                                             condition_nu=fam.get("condition_nu", True))
    endpoint_b = config.get("endpoint_b")
    if endpoint_b is True:
        endpoint_b = mogulskii.default_endpoint_b(spec)
    elif endpoint_b is False:
        endpoint_b = None
    rows = mogulskii.triangular_experiment(arr, spec, config["n_list"],
                                           endpoint_b=endpoint_b,
                                           mc_replicates=config.get("mc_replicates", 1_000_000),
                                           seed=config["seed"])
    header = ["n", "a_n", "prob", "scaled_log_prob", "target_constant", "gap"]
    if endpoint_b is not None:
        header += ["endpoint_prob", "endpoint_scaled"]
    table = []
    for r in rows:
        row = [r.n, r.a_n, r.prob, r.scaled_log_prob, r.target, r.gap]
        if endpoint_b is not None:
            row += [r.endpoint_prob, r.endpoint_scaled]
        table.append(row)
    write_csv(out_path, "mogulskii", config, header, table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point

def _load_config(path: str, command: str, overrides: dict) -> dict:
    with open(path, encoding="utf-8") as fh:
        config = json.load(fh)
    config.update({k: v for k, v in overrides.items() if v is not None})
    jsonschema.validate(config, CONFIG_SCHEMAS[command])
    return config


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="kbrw",
                                     description="killed branching random walk laboratory")
    parser.add_argument("command", choices=["analyze", "survival", "pemantle", "mogulskii"])
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="overrides config seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker processes for independent rows "
                             "(default: hardware parallelism)")
    parser.add_argument("--out", default=None, help="CSV output path (default: stdout)")
    parser.add_argument("--escape-cap", type=int, default=None,
                        help="overrides config escape_cap")
    args = parser.parse_args(argv)
    try:
        overrides = {"seed": args.seed}
        if args.command == "survival":
            overrides["escape_cap"] = args.escape_cap
        config = _load_config(args.config, args.command, overrides)
    except (jsonschema.ValidationError, json.JSONDecodeError, OSError) as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        if args.command == "analyze":
            return cmd_analyze(config, args.out)
        if args.command == "survival":
            return cmd_survival(config, args.out, args.threads)
        if args.command == "pemantle":
            return cmd_pemantle(config, args.out, args.threads)
        return cmd_mogulskii(config, args.out)
    except (LawValidationError, CertificationError, LatticeError, ValueError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NoCriticalPoint as exc:
        print(f"no critical tilt: {exc}", file=sys.stderr)
        return EXIT_NO_CRITICAL_POINT


if __name__ == "__main__":
    sys.exit(main())
