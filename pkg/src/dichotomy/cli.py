"""Scenario-driven command-line front end.

Each subcommand ingests a declarative JSON scenario, runs the requested
slice of the pipeline, and writes plot-ready artifacts: report.json (byte
deterministic for a fixed seed), certificate.json plus projections.csv,
CSV traces, and sweep.csv for perturbation sweeps.  Wall-clock metadata
goes to a separate run_meta.json so reports stay reproducible.

Exit codes: 0 success, 1 configuration error, 2 verdict "not-admissible"
when the scenario expected admissibility, 3 inconclusive.
"""

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .admissibility import AdmissibilityConfig, check_admissibility, solve_bounded
from .errors import ConfigError, DichotomyError
from .evolution import EvolutionFamily, cocycle_residual, estimate_growth_bound
from .function_space import GridFunction, lp_norm, mild_residual, uniform_grid, y1_norm
from .green import (DichotomyCertificate, dichotomy_solution_bounds,
                    green_solve)
from .norm_family import (NormFamily, build_lyapunov_norms, family_operator_norm,
                          verify_envelope)
from .perturbation import PerturbationSpec, robustness_experiment
from .reconstruct import ReconstructionConfig, certify_dichotomy

TASKS = ("axioms", "evolve", "solve", "check", "reconstruct", "perturb", "full")

_SAFE_FUNCS = {name: getattr(math, name) for name in (
    "sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh",
    "atan", "asin", "acos", "floor", "ceil")}
_SAFE_FUNCS.update({"abs": abs, "pi": math.pi, "e": math.e, "min": min,
                    "max": max})


def _expression(expr, fieldname):
    """Compile a scalar expression of t with a restricted namespace."""
    if not isinstance(expr, str):
        raise ConfigError(f"expected an expression string, got {expr!r}",
                          field=fieldname)
    code = compile(expr, f"<{fieldname}>", "eval")
    for name in code.co_names:
        if name not in _SAFE_FUNCS and name != "t":
            raise ConfigError(
                f"expression {expr!r} uses unknown name {name!r}",
                field=fieldname)

    def fn(t):
        return float(eval(code, {"__builtins__": {}}, dict(_SAFE_FUNCS, t=t)))

    return fn


# ---------------------------------------------------------------------------
# scenario parsing
# ---------------------------------------------------------------------------

def _parse_exponent(value, fieldname):
    if value in ("inf", "Inf", "infinity"):
        return math.inf
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"exponent must be a number or 'inf', got {value!r}",
                          field=fieldname)
    if value < 1.0:
        raise ConfigError(f"exponent must be >= 1, got {value}", field=fieldname)
    return value


def build_system(conf):
    kind = conf.get("kind")
    h_int = float(conf.get("h_int", 1e-3))
    if kind == "scalar":
        return EvolutionFamily.scalar(float(conf["rate"]), h_int=h_int)
    if kind == "diagonal":
        return EvolutionFamily.diagonal([float(r) for r in conf["rates"]],
                                        h_int=h_int)
    if kind == "rotation":
        return EvolutionFamily.rotation(float(conf.get("omega", 1.0)),
                                        h_int=h_int)
    if kind == "oscillating":
        return EvolutionFamily.oscillating_rate_scalar(
            float(conf.get("mean_rate", -3.0)),
            float(conf.get("amplitude", 1.0)), h_int=h_int)
    if kind == "matrix":
        entries = conf.get("entries")
        if not entries:
            raise ConfigError("matrix system requires 'entries'",
                              field="system.entries")
        fns = [[_expression(e, f"system.entries[{i}][{j}]")
                for j, e in enumerate(row)] for i, row in enumerate(entries)]
        dim = len(fns)

        def a_fn(t):
            return np.array([[f(t) for f in row] for row in fns])

        return EvolutionFamily.from_generator(a_fn, dim, h_int=h_int,
                                              label="matrix")
    raise ConfigError(f"unknown system kind {kind!r}", field="system.kind")


def build_norms(conf, dim, family=None, certificate=None):
    kind = conf.get("kind", "constant")
    if kind == "constant":
        return NormFamily.constant(dim)
    if kind == "scalar_weight":
        fn = _expression(conf["expression"], "norms.expression")
        return NormFamily.scalar_weight(
            dim, fn, envelope_c=conf.get("envelope_c"),
            envelope_eps=float(conf.get("envelope_eps", 0.0)))
    if kind == "diagonal_weight":
        fns = [_expression(e, f"norms.expressions[{j}]")
               for j, e in enumerate(conf["expressions"])]

        def weights(t):
            return np.array([f(t) for f in fns])

        return NormFamily.diagonal_weight(
            dim, weights, envelope_c=conf.get("envelope_c"),
            envelope_eps=float(conf.get("envelope_eps", 0.0)))
    if kind == "adapted":
        if family is None or certificate is None:
            raise ConfigError(
                "adapted norms require a system and an analytic certificate",
                field="norms.kind")
        t_step = float(conf.get("t_step", 0.25))
        window = float(conf["window"]) if "window" in conf else None
        tgrid = None
        if window is not None:
            tgrid = uniform_grid(-window, window, t_step)
        return build_lyapunov_norms(
            family, certificate, rate_margin=float(conf.get("rate_margin", 0.5)),
            horizon=float(conf.get("horizon", 30.0)), tgrid=tgrid,
            s_step=float(conf.get("s_step", 0.025)))
    raise ConfigError(f"unknown norm family kind {kind!r}", field="norms.kind")


def build_input(conf, grid, norms):
    kind = conf.get("kind")
    if kind == "indicator":
        return GridFunction.indicator(
            grid, norms, float(conf["start"]), float(conf["end"]),
            np.asarray(conf["vector"], dtype=float))
    if kind == "bump":
        center = float(conf["center"])
        width = float(conf["width"])
        vector = np.asarray(conf["vector"], dtype=float)
        arg = (grid - center) / width
        profile = np.where(np.abs(arg) < 1.0,
                           np.cos(0.5 * np.pi * arg) ** 2, 0.0)
        return GridFunction(grid, profile[:, None] * vector[None, :], norms)
    raise ConfigError(f"unknown input kind {kind!r}", field="input.kind")


_COUPLINGS = {
    "identity": lambda dim: (lambda t: np.eye(dim)),
    "exchange": lambda dim: (lambda t: np.eye(dim)[::-1].copy()),
}


def build_perturbation(conf, norms):
    phi_conf = conf.get("phi", {"kind": "exp_abs", "rate": 1.0})
    if phi_conf.get("kind") == "exp_abs":
        rate = float(phi_conf.get("rate", 1.0))
        phi = lambda t: math.exp(-rate * abs(t))
    elif phi_conf.get("kind") == "expression":
        phi = _expression(phi_conf["expression"], "perturbation.phi.expression")
    else:
        raise ConfigError(f"unknown phi kind {phi_conf.get('kind')!r}",
                          field="perturbation.phi.kind")
    coupling_name = conf.get("coupling", "identity")
    if coupling_name not in _COUPLINGS:
        raise ConfigError(f"unknown coupling {coupling_name!r}",
                          field="perturbation.coupling")
    coupling = _COUPLINGS[coupling_name](norms.dim)
    magnitudes = [float(m) for m in conf.get("magnitudes", [0.0, 0.05, 0.1])]
    spec = PerturbationSpec.scaled_coupling(1.0, norms, phi, coupling=coupling)
    return spec, magnitudes


@dataclass
class Scenario:
    name: str
    task: str
    system_conf: dict
    norms_conf: dict
    window: float
    h: float
    p: float
    q: float
    expect: str | None
    input_conf: dict | None
    certificate_conf: dict | None
    perturbation_conf: dict | None
    admissibility_conf: dict = field(default_factory=dict)
    reconstruction_conf: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_dict(cls, raw, path="<config>"):
        if not isinstance(raw, dict):
            raise ConfigError("scenario must be a JSON object", field="$")
        task = raw.get("task", "full")
        if task not in TASKS:
            raise ConfigError(f"unknown task {task!r}; choose from {TASKS}",
                              field="task")
        p = _parse_exponent(raw.get("p", 2), "p")
        q = _parse_exponent(raw.get("q", 2), "q")
        if p < q:
            raise ConfigError(
                f"admissible pairs require p >= q, got p={raw.get('p')} "
                f"q={raw.get('q')}", field="p")
        if task in ("reconstruct", "full") and p == math.inf and q == 1.0:
            raise ConfigError(
                "task 'reconstruct' forbids the excluded pair (inf, 1)",
                field="task")
        window = float(raw.get("window", 10.0))
        h = float(raw.get("h", 0.01))
        if window <= 0 or h <= 0 or h > window:
            raise ConfigError("window and step must satisfy 0 < h <= window",
                              field="h")
        input_conf = raw.get("input")
        if input_conf and input_conf.get("kind") == "indicator":
            for key in ("start", "end"):
                loc = float(input_conf[key])
                cells = (loc + window) / h
                if abs(cells - round(cells)) > 1e-9:
                    raise ConfigError(
                        f"grid step {h} does not divide the jump location "
                        f"{loc}", field=f"input.{key}")
        expect = raw.get("expect")
        if expect not in (None, "admissible", "not-admissible"):
            raise ConfigError(f"unknown expectation {expect!r}", field="expect")
        return cls(
            name=raw.get("name", Path(path).stem), task=task,
            system_conf=raw.get("system", {"kind": "scalar", "rate": -1.0}),
            norms_conf=raw.get("norms", {"kind": "constant"}),
            window=window, h=h, p=p, q=q, expect=expect,
            input_conf=input_conf,
            certificate_conf=raw.get("certificate"),
            perturbation_conf=raw.get("perturbation"),
            admissibility_conf=raw.get("admissibility", {}),
            reconstruction_conf=raw.get("reconstruction", {}),
            tolerances=raw.get("tolerances", {}),
            seed=int(raw.get("seed", 0)),
        )


def load_scenario(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", field="$path")
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config is not valid JSON (line {exc.lineno}, column {exc.colno}): "
            f"{exc.msg}", field="$syntax")
    return Scenario.from_dict(raw, path)


# ---------------------------------------------------------------------------
# task runners
# ---------------------------------------------------------------------------

def _tolerance(scenario, key, default):
    return float(scenario.tolerances.get(key, default))


def _adm_config(scenario):
    conf = scenario.admissibility_conf
    return AdmissibilityConfig(
        window=float(conf.get("window", min(scenario.window, 10.0))),
        h=float(conf.get("h", max(scenario.h, 0.02))),
        sweep_windows=tuple(conf.get("sweep_windows", ())),
        probes=int(conf.get("probes", 6)),
        seed=scenario.seed,
        boundary=conf.get("boundary", "projected"),
        residual_tol=_tolerance(scenario, "residual", 1e-6),
        kernel_floor_factor=_tolerance(scenario, "kernel_floor", 1e-6),
    )


def _rec_config(scenario):
    conf = scenario.reconstruction_conf
    return ReconstructionConfig(
        window=float(conf.get("window", scenario.window)),
        h=float(conf.get("h", scenario.h)),
        projection_step=float(conf.get("projection_step", 0.5)),
        projection_margin=conf.get("projection_margin"),
        invariance_tol=_tolerance(scenario, "invariance", 1e-6),
        projection_match_tol=_tolerance(scenario, "projection_match", 1e-3),
        admissibility=_adm_config(scenario),
    )


def _analytic_certificate(scenario, family, norms, grid):
    conf = scenario.certificate_conf
    if not conf:
        return None
    return DichotomyCertificate.constant_projection(
        np.asarray(conf["projection"], dtype=float),
        alpha=float(conf.get("alpha", 1.0)), beta=float(conf.get("beta", 1.0)),
        constant=float(conf.get("constant", 1.0)),
        grid=grid, family=family, norms=norms, note="analytic certificate")


def _build_context(scenario):
    family = build_system(scenario.system_conf)
    grid = uniform_grid(-scenario.window, scenario.window, scenario.h)
    base_norms = NormFamily.constant(family.dim)
    analytic = _analytic_certificate(scenario, family, base_norms, grid)
    norms = build_norms(scenario.norms_conf, family.dim, family=family,
                        certificate=analytic)
    if analytic is not None:
        analytic = DichotomyCertificate.constant_projection(
            analytic.projections[0], analytic.alpha, analytic.beta,
            analytic.constant, grid, family, norms,
            note="analytic certificate")
    return family, norms, grid, analytic


def run_axioms(scenario, out, rng):
    family, norms, grid, analytic = _build_context(scenario)
    sample_times = list(np.linspace(grid[0], grid[-1], 17))
    sample_vectors = [v for v in np.eye(family.dim)] + \
        [v / np.linalg.norm(v)
         for v in rng.standard_normal((5, family.dim))]
    envelope = verify_envelope(norms, sample_times, sample_vectors)

    triples = []
    for _ in range(6):
        ts = np.sort(rng.uniform(grid[0], grid[-1], 3))
        triples.append(cocycle_residual(family, *ts))
    growth_k, growth_c = estimate_growth_bound(family, grid, norms)
    identity_defect = float(np.linalg.norm(
        family.propagator(grid[0], grid[0]) - np.eye(family.dim), 2))

    report = {
        "envelope": {
            "holds": envelope.holds,
            "max_lower_violation": envelope.max_lower_violation,
            "max_upper_violation": envelope.max_upper_violation,
            "fitted_c": envelope.fitted_c,
            "fitted_eps": envelope.fitted_eps,
            "covering_c": envelope.covering_c,
        },
        "cocycle_residual_max": max(triples),
        "growth": {"K": growth_k, "c": growth_c},
        "identity_defect": identity_defect,
    }
    if hasattr(norms, "write_scaling_csv"):
        norms.write_scaling_csv(out / "adapted_scaling.csv")
        report["adapted"] = {
            "stabilization_defect": norms.stabilization_defect,
            "horizon": norms.horizon,
        }
        if analytic is not None:
            margin = scenario.norms_conf.get("rate_margin", 0.5)
            rate = analytic.alpha - margin
            # sample on the tabulation lattice: the certified contraction is
            # exact there, while interpolated norms between nodes are not
            tgrid = norms.tgrid
            worst = -math.inf
            for dt in (0.5, 1.0, 2.0, 5.0):
                for tau in tgrid[::max(1, len(tgrid) // 9)]:
                    if tau + dt > tgrid[-1] + 1e-9:
                        continue
                    prop = family.propagator(tau + dt, tau)
                    val = family_operator_norm(norms, tau + dt, tau, prop)
                    worst = max(worst, val - math.exp(-rate * dt))
            report["adapted"]["contraction_margin"] = worst
    ok = envelope.holds and report["cocycle_residual_max"] <= \
        _tolerance(scenario, "cocycle", 1e-8)
    return (0 if ok else 3), {"axioms": report, "ok": ok}


def run_evolve(scenario, out, rng):
    family, norms, grid, _ = _build_context(scenario)
    traces_dir = out / "traces"
    traces_dir.mkdir(exist_ok=True)
    steps = family.one_step_propagators(grid)
    for j in range(family.dim):
        values = np.zeros((len(grid), family.dim))
        values[0] = np.eye(family.dim)[j]
        for i in range(len(grid) - 1):
            values[i + 1] = steps[i] @ values[i]
        GridFunction(grid, values, norms).write_csv(
            traces_dir / f"orbit_e{j + 1}.csv")
    triples = []
    for _ in range(4):
        ts = np.sort(rng.uniform(grid[0], grid[-1], 3))
        triples.append(cocycle_residual(family, *ts))
    growth_k, growth_c = estimate_growth_bound(family, grid, norms)
    report = {
        "growth": {"K": growth_k, "c": growth_c},
        "cocycle_residual_max": max(triples),
    }
    ok = report["cocycle_residual_max"] <= _tolerance(scenario, "cocycle", 1e-8)
    return (0 if ok else 3), {"evolve": report, "ok": ok}


def run_solve(scenario, out, rng):
    family, norms, grid, analytic = _build_context(scenario)
    if not scenario.input_conf:
        raise ConfigError("task 'solve' requires an input forcing",
                          field="input")
    y = build_input(scenario.input_conf, grid, norms)
    traces_dir = out / "traces"
    traces_dir.mkdir(exist_ok=True)
    y.write_csv(traces_dir / "forcing.csv")

    x, info = solve_bounded(family, y, scenario.p, scenario.q, norms=norms)
    x.write_csv(traces_dir / "bounded_solution.csv")
    report = {
        "residual": info["residual"],
        "boundary_margin": info["boundary_margin"],
        "ratio": info["ratio"],
        "sup_norm": lp_norm(x, math.inf),
        "lp_norm": lp_norm(x, scenario.p),
        "y1_norm": y1_norm(x, scenario.p),
    }
    if analytic is not None:
        sol = green_solve(analytic, y)
        sol.x.write_csv(traces_dir / "green_solution.csv")
        sol.x1.write_csv(traces_dir / "green_stable.csv")
        sol.x2.write_csv(traces_dir / "green_unstable.csv")
        b_inf, b_p = dichotomy_solution_bounds(analytic, scenario.p, scenario.q)
        yq = lp_norm(y, scenario.q)
        disc = (x - sol.x).node_norms()
        report["green"] = {
            "B_inf": b_inf,
            "B_p": b_p,
            "observed_sup_ratio": lp_norm(sol.x, math.inf) / yq if yq else 0.0,
            "observed_lp_ratio": lp_norm(sol.x, scenario.p) / yq if yq else 0.0,
            "bound_sup_ok": lp_norm(sol.x, math.inf) <= b_inf * yq * (1 + 1e-3),
            "bound_lp_ok": lp_norm(sol.x, scenario.p) <= b_p * yq * (1 + 1e-3),
            "solver_discrepancy": float(disc.max()),
            "mild_residual": mild_residual(sol.x, y, family),
            "truncation_fraction": sol.truncation_fraction,
        }
    ok = report["residual"] <= _tolerance(scenario, "residual", 1e-6)
    return (0 if ok else 3), {"solve": report, "ok": ok}


def _verdict_exit(scenario, verdict):
    if verdict == "inconclusive":
        return 3
    if verdict == "not-admissible" and scenario.expect == "admissible":
        return 2
    return 0


def run_check(scenario, out, rng):
    family, norms, grid, _ = _build_context(scenario)
    report = check_admissibility(family, norms, scenario.p, scenario.q,
                                 _adm_config(scenario))
    if report.witness is not None:
        traces_dir = out / "traces"
        traces_dir.mkdir(exist_ok=True)
        report.witness.write_csv(traces_dir / "witness.csv")
    return _verdict_exit(scenario, report.verdict), {
        "check": report.to_json(),
        "ok": report.verdict != "inconclusive",
    }


def run_reconstruct(scenario, out, rng):
    family, norms, grid, analytic = _build_context(scenario)
    result = certify_dichotomy(family, norms, scenario.p, scenario.q,
                               _rec_config(scenario))
    payload = {"admissibility": result.admissibility.to_json()}
    code = _verdict_exit(scenario, result.admissibility.verdict)
    if result.certificate is not None:
        cert = result.certificate
        cert.write_json(out / "certificate.json")
        cert.write_projections_csv(out / "projections.csv")
        payload["certificate"] = cert.summary()
        payload["rates"] = result.rates.to_json()
        payload["growth"] = {"K": result.growth[0], "c": result.growth[1]}
        payload["diagnostics"] = {
            k: v for k, v in result.diagnostics.items()
            if k != "invariance_witnesses"}
        if analytic is not None:
            tol = _tolerance(scenario, "projection_match", 1e-3)
            worst = max(
                float(np.linalg.norm(p - analytic.projections[0], 2))
                for p in cert.projections)
            payload["projection_match"] = {
                "max_deviation": worst, "tolerance": tol, "ok": worst <= tol}
        if not result.ok:
            code = max(code, 3)
    return code, {"reconstruct": payload,
                  "ok": result.ok or result.certificate is None}


def run_perturb(scenario, out, rng):
    family, norms, grid, _ = _build_context(scenario)
    if not scenario.perturbation_conf:
        raise ConfigError("task 'perturb' requires a perturbation section",
                          field="perturbation")
    spec, magnitudes = build_perturbation(scenario.perturbation_conf, norms)
    report = robustness_experiment(
        family, norms, spec, magnitudes, scenario.p, scenario.q,
        adm_config=_adm_config(scenario), rec_config=_rec_config(scenario))
    report.write_csv(out / "sweep.csv")
    return (0 if report.all_small_certified else 3), {
        "perturb": report.to_json(),
        "ok": report.all_small_certified,
    }


def run_full(scenario, out, rng):
    code = 0
    merged = {}
    for runner in (run_axioms, run_check, run_solve, run_reconstruct,
                   run_perturb):
        if runner is run_solve and not scenario.input_conf:
            continue
        if runner is run_perturb and not scenario.perturbation_conf:
            continue
        sub_code, payload = runner(scenario, out, rng)
        merged.update({k: v for k, v in payload.items() if k != "ok"})
        code = max(code, sub_code)
    merged["ok"] = code == 0
    return code, merged


_RUNNERS = {
    "axioms": run_axioms,
    "evolve": run_evolve,
    "solve": run_solve,
    "check": run_check,
    "reconstruct": run_reconstruct,
    "perturb": run_perturb,
    "full": run_full,
}


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


def run_scenario(path, out_dir=None, seed=None, task=None):
    """Execute a scenario config; returns (exit code, report dict)."""
    scenario = load_scenario(path)
    if task is not None:
        scenario.task = task
    if seed is not None:
        scenario.seed = int(seed)
    out = Path(out_dir) if out_dir else Path.cwd() / f"{scenario.name}_out"
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(scenario.seed)

    started = time.time()
    code, payload = _RUNNERS[scenario.task](scenario, out, rng)
    payload = _jsonable({
        "scenario": scenario.name,
        "task": scenario.task,
        "p": "inf" if scenario.p == math.inf else scenario.p,
        "q": "inf" if scenario.q == math.inf else scenario.q,
        "seed": scenario.seed,
        "expect": scenario.expect,
        "exit_code": code,
        **payload,
    })
    with open(out / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "run_meta.json", "w") as fh:
        json.dump({"elapsed_seconds": time.time() - started,
                   "version": __version__}, fh, indent=2)
        fh.write("\n")
    return code, payload


def bundled_scenario_path(name):
    """Path of a scenario shipped with the package."""
    from importlib import resources

    if not name.endswith(".json"):
        name += ".json"
    ref = resources.files("dichotomy") / "scenarios" / name
    if not ref.is_file():
        available = sorted(
            p.name for p in (resources.files("dichotomy") / "scenarios").iterdir())
        raise ConfigError(
            f"no bundled scenario {name!r}; available: {available}",
            field="$path")
    return str(ref)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="dichotomy",
        description="Exponential dichotomy certification via (Lp, Lq) admissibility")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in TASKS:
        sp = sub.add_parser(name, help=f"run the '{name}' task of a scenario")
        sp.add_argument("--config", required=True,
                        help="scenario JSON path or bundled scenario name")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None,
                        help="seed for randomized probes")
    args = parser.parse_args(argv)

    config = args.config
    try:
        if not Path(config).exists():
            config = bundled_scenario_path(config)
        code, payload = run_scenario(config, out_dir=args.out, seed=args.seed,
                                     task=args.command)
    except ConfigError as exc:
        print(f"configuration error [{exc.field}]: {exc}", file=sys.stderr)
        return 1
    except DichotomyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    summary = {k: payload.get(k) for k in ("scenario", "task", "exit_code", "ok")}
    for key in ("check", "reconstruct", "perturb"):
        if key in payload and isinstance(payload[key], dict):
            verdict = payload[key].get("verdict") or \
                payload[key].get("admissibility", {}).get("verdict")
            if verdict:
                summary["verdict"] = verdict
    print(json.dumps(summary, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
