"""Named, reproducible experiments and their JSON reports.

Every scenario is a plain dictionary of defaults.  User overrides are
merged into it and the result is validated into an
:class:`~seqevl.evl_engine.ExperimentSpec`, a subshift run or an audit
configuration before anything is simulated.
"""

from __future__ import annotations

import copy
import csv
import json
import math
import os
import random
from importlib import resources
from fractions import Fraction
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import blocking, evl_engine, invariant_measure, random_subshift, transfer
from .circle_maps import MapSequenceSpec
from .observables import Observable

SCHEMA_VERSION = evl_engine.SCHEMA_VERSION


class ScenarioError(ValueError):
    """Unknown scenario or invalid configuration."""


@dataclass(frozen=True)
class ScenarioInfo:
    name: str
    kind: str           # ei | subshift | audit
    case: str
    defaults: Dict[str, Any]


def _ei(beta, zeta, n, replicates, schedule=None, precision="auto", **extra) -> Dict[str, Any]:
    d = {
        "beta": beta,
        "schedule": schedule or {"kind": "constant"},
        "observable": {"g_kind": "g1_neglog", "zeta": zeta},
        "tau": 1.0,
        "n": n,
        "replicates": replicates,
        "precision": precision,
    }
    d.update(extra)
    return d


_TWO_STATE = [[0.3, 0.7], [0.5, 0.5]]

SCENARIOS: Dict[str, ScenarioInfo] = {s.name: s for s in [
    ScenarioInfo("periodic", "ei", "periodic centre: theta = 1 - beta^-p (doubling map, zeta = 1/3, p = 2)",
                 _ei("2", "1/3", 5000, 20000, precision="exact")),
    ScenarioInfo("aperiodic", "ei", "non-periodic centre: theta = 1 (doubling map, zeta = 1/sqrt(2))",
                 _ei("2", "1/sqrt(2)", 5000, 20000)),
    ScenarioInfo("boundary-nonperiodic", "ei",
                 "centre 0 ~ 1, orbit of 1 never hits 0: density-weighted theta (beta = 5/2)",
                 _ei("5/2", "0", 2000, 5000)),
    ScenarioInfo("boundary-periodic", "ei",
                 "centre 0 ~ 1, orbit of 1 hits 0 at time p: density-weighted theta (golden mean)",
                 _ei("(1+sqrt(5))/2", "0", 2000, 20000)),
    ScenarioInfo("counterexample-slow", "ei",
                 "fixed point 2/3 of T_5/2 under slowly converging slopes: theta = 1",
                 _ei("5/2", "2/3", 2000, 20000, schedule={"kind": "slow", "amplitude": 1.0, "exponent": 0.5})),
    ScenarioInfo("counterexample-fast", "ei",
                 "fixed point 2/3 of T_5/2 under fast converging slopes: theta = 3/5",
                 _ei("5/2", "2/3", 2000, 20000, schedule={"kind": "fast", "amplitude": 0.5, "exponent": 2.0})),
    ScenarioInfo("subshift-degenerate", "subshift",
                 "quenched subshift, single matrix: theta = 1 - p00 at 000...",
                 {"matrices": [_TWO_STATE], "probabilities": None, "m_floor": None, "zeta": [0], "n": 8, "tau": 1.0,
                  "replicates": 20000, "n_omegas": 1, "psi_kappa_max": 8, "psi_sample_length": 200000}),
    ScenarioInfo("subshift-random", "subshift",
                 "quenched subshift, two matrices chosen i.i.d.: concentration over drivers",
                 {"matrices": [_TWO_STATE, [[0.35, 0.65], [0.45, 0.55]]], "probabilities": [0.5, 0.5],
                  "m_floor": None, "zeta": [0], "n": 8, "tau": 1.0, "replicates": 5000, "n_omegas": 10, "psi_kappa_max": 8,
                  "psi_sample_length": 200000}),
    ScenarioInfo("blocks-audit", "audit",
                 "block construction invariants and exact set-algebra inequalities",
                 {"tail_arrays": 1000, "spaces": 10000, "n_max": 12, "q_max": 3}),
    ScenarioInfo("operator-audit", "audit",
                 "Parry density vs Ulam, decay of correlations, loss of memory",
                 {"beta": "(1+sqrt(5))/2", "n_bins": 4096, "decay_beta": "2", "decay_interval": [0, "1/3"],
                  "decay_n_bins": 12288, "decay_t_max": 10, "memory_schedule": {"kind": "fast", "amplitude": 0.5,
                                                                                "exponent": 2.0},
                  "memory_depths": [0, 5, 10, 20, 50, 100, 200]}),
]}


def list_scenarios(filter: Optional[str] = None) -> List[Dict[str, str]]:
    """Scenario table, optionally restricted to names containing ``filter``."""
    rows = [{"name": s.name, "kind": s.kind, "case": s.case} for s in SCENARIOS.values()]
    if filter:
        rows = [r for r in rows if filter in r["name"]]
    return rows


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ScenarioError(f"unknown configuration key {k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            out[k] = {**base[k], **v}   # nested keys are checked when the ExperimentSpec is built
        else:
            out[k] = v
    return out


_EI_FIELDS = ("tau", "n", "replicates", "burn_in_exponent", "k_n", "t_star", "precision", "initial", "q",
              "horizon_J", "lookahead", "threads")


def experiment_from_config(cfg: Dict[str, Any], seed: int) -> evl_engine.ExperimentSpec:
    """Build and validate an ExperimentSpec from a configuration dictionary."""
    sch = dict(cfg.get("schedule") or {"kind": "constant"})
    kind = sch.pop("kind", "constant")
    unknown = set(sch) - {"amplitude", "exponent", "sign"}
    if unknown:
        raise ScenarioError(f"unknown schedule keys {sorted(unknown)}")
    mspec = MapSequenceSpec(cfg["beta"], kind, sch.get("amplitude"), sch.get("exponent"), sch.get("sign", 1))
    ob = dict(cfg.get("observable") or {})
    unknown = set(ob) - {"g_kind", "zeta", "alpha", "D"}
    if unknown:
        raise ScenarioError(f"unknown observable keys {sorted(unknown)}")
    obs = Observable(**ob)
    kw = {k: cfg[k] for k in _EI_FIELDS if k in cfg and cfg[k] is not None}
    return evl_engine.ExperimentSpec(mspec, obs, seed=seed, **kw)


def resolve(name: str, overrides: Optional[Dict[str, Any]] = None, seed: int = 0,
            threads: Optional[int] = None, precision: Optional[str] = None):
    """Validate a scenario into its runnable form.

    Returns ``(info, config, spec)`` where ``spec`` is an ExperimentSpec for
    extreme value scenarios, a SubshiftSpec for subshift ones and ``None``
    for audits.

    Raises
    ------
    ScenarioError
        Unknown name or invalid configuration.
    """
    if name not in SCENARIOS:
        raise ScenarioError(f"unknown scenario {name!r}; valid names: {', '.join(SCENARIOS)}")
    if not 0 <= int(seed) < 2**64:
        raise ScenarioError("seed must be a 64-bit unsigned integer")
    info = SCENARIOS[name]
    base = dict(info.defaults)
    if info.kind == "ei":
        base.update({k: base.get(k) for k in _EI_FIELDS})
    cfg = _merge(base, overrides or {})
    if threads is not None and info.kind == "ei":
        cfg["threads"] = threads
    if precision is not None and info.kind == "ei":
        cfg["precision"] = precision
    try:
        if info.kind == "ei":
            spec = experiment_from_config(cfg, seed)
            evl_engine.resolve_q(spec)
        elif info.kind == "subshift":
            probs = cfg["probabilities"]
            spec = random_subshift.SubshiftSpec(tuple(cfg["matrices"]), None if probs is None else tuple(probs),
                                                cfg.get("m_floor"))
            random_subshift.subshift_theta(spec, cfg["zeta"])
            if cfg["n"] < 1 or cfg["replicates"] < 1 or cfg["n_omegas"] < 1 or cfg["tau"] < 0:
                raise ScenarioError("n, replicates and n_omegas must be positive and tau non-negative")
        else:
            spec = None
            for k, v in cfg.items():
                if isinstance(v, int) and v < 0:
                    raise ScenarioError(f"{k} must be non-negative")
    except ScenarioError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ScenarioError(str(exc)) from exc
    return info, cfg, spec


# --- runners --------------------------------------------------------------


def _run_ei(info, cfg, spec, out: Optional[Path], dump: bool) -> dict:
    rep = evl_engine.run_experiment(spec)
    d = rep.to_dict()
    if dump and out is not None:
        rep.result.write_replicates_csv(out / "replicates.csv")
        blk = evl_engine.experiment_blocks(rep.result)
        blk.dump_json(out / "blocks.json")
    return d


def _run_subshift(info, cfg, spec, seed: int, out: Optional[Path], dump: bool) -> dict:
    zeta, n, tau, R = cfg["zeta"], int(cfg["n"]), float(cfg["tau"]), int(cfg["replicates"])
    flags = ["w_n = floor(tau / mu(C_n(zeta))): inverse of the product form, chosen so w_n mu(C_n) ~ tau"]
    if spec.degenerate and cfg["n_omegas"] == 1:
        runs = [random_subshift.quenched_evl_experiment(spec, zeta, n, tau, R, seed)]
        sd = hw = None
    else:
        conc = random_subshift.quenched_concentration(spec, zeta, n, tau, R, int(cfg["n_omegas"]), seed)
        runs, sd, hw = conc.results, conc.sample_sd, conc.mean_half_width
    kmax = int(cfg["psi_kappa_max"])
    psi = random_subshift.cylinder_psi(spec, range(1, kmax + 1), sample_length=int(cfg["psi_sample_length"]),
                                       seed=seed)
    psi_exact = random_subshift.cylinder_psi(spec, range(1, kmax + 1))
    first = runs[0]
    report = {
        "schema": "subshift-report",
        "schema_version": SCHEMA_VERSION,
        "scenario": info.name,
        "seed": int(seed),
        "spec": spec.to_dict(),
        "zeta_period": list(zeta),
        "n": n,
        "tau": tau,
        "replicates": R,
        "theta": float(first.theta),
        "w_n": first.w_n,
        "cylinder_measure": first.cylinder_measure,
        "P_target": first.target,
        "P_hat": {"value": first.P_hat, "se": first.se, "ci": [first.ci_low, first.ci_high]},
        "per_omega": [r.to_dict() for r in runs],
        "concentration": None if sd is None else {
            "sample_sd": sd, "mean_half_width": hw, "ratio": sd / hw if hw else None},
        "h0": spec.h0,
        "lambda2": random_subshift.second_eigenvalue_modulus(spec.average_matrix),
        "psi": {"kappa": [int(k) for k in psi.kappa], "empirical": [float(v) for v in psi.psi],
                "exact": [float(v) for v in psi_exact.psi], "fitted_rate": psi.rate,
                "exact_rate": psi_exact.rate, "sampling_floor": psi.floor},
        "flags": flags,
    }
    if dump and out is not None:
        with open(out / "per_omega.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["omega_seed", "P_hat", "se", "ci_low", "ci_high", "target", "w_n"])
            for r in runs:
                w.writerow([r.omega_seed, repr(r.P_hat), repr(r.se), repr(r.ci_low), repr(r.ci_high),
                            repr(r.target), r.w_n])
    return report


def _blocks_audit(cfg, seed: int, out: Optional[Path], dump: bool) -> dict:
    rng = random.Random(seed)
    built = rejected = violating = 0
    examples = []
    for _ in range(int(cfg["tail_arrays"])):
        tails = blocking.random_tail_array(rng)
        k = rng.randint(1, 20)
        ts = rng.randint(0, 8)
        off = rng.randint(0, len(tails) // 4)
        try:
            bp = blocking.build_blocks(tails, k, ts, off)
        except blocking.BlockConstructionError:
            rejected += 1
            continue
        built += 1
        bad = blocking.audit_partition(bp)
        if bad:
            violating += 1
            if len(examples) < 5:
                examples.append(bad)
    spaces = blocking.random_space_audit(rng, int(cfg["spaces"]), int(cfg["n_max"]), int(cfg["q_max"]))
    ref = blocking.build_blocks(["0.001"] * 1000, 10, 5)
    if dump and out is not None:
        ref.dump_json(out / "blocks_constant_tails.json")
    return {
        "tail_arrays": {"count": int(cfg["tail_arrays"]), "built": built, "rejected": rejected,
                        "violations": violating, "examples": examples},
        "event_spaces": spaces._asdict(),
        "constant_tails_partition": ref.to_dict(),
        "pass": violating == 0 and spaces.annuli_violations == 0 and spaces.gap_violations == 0
        and spaces.inductive_violations == 0,
    }


def _operator_audit(cfg, seed: int, out: Optional[Path], dump: bool) -> dict:
    beta = cfg["beta"]
    N = int(cfg["n_bins"])
    dens = invariant_measure.parry_density(beta)
    st = invariant_measure.ulam_stationary(invariant_measure.ulam_discretize(beta, N))
    l1 = invariant_measure.density_l1_distance(st.density, dens)
    plateaus = sorted({round(float(v), 12) for v in dens.plateaus()}, reverse=True)
    di = [float(Fraction(v)) for v in cfg["decay_interval"]]
    dspec = MapSequenceSpec(cfg["decay_beta"])
    dec = transfer.correlation_decay_estimate(dspec, di, di, 0, int(cfg["decay_t_max"]), int(cfg["decay_n_bins"]))
    quarter = transfer.correlation_decay_estimate(dspec, (0.0, 0.25), (0.0, 0.25), 0, 1, 4096)
    sch = dict(cfg["memory_schedule"])
    mspec = MapSequenceSpec(beta, sch.pop("kind"), sch.get("amplitude"), sch.get("exponent"), sch.get("sign", 1))
    depths = [int(v) for v in cfg["memory_depths"]]
    mem = transfer.loss_of_memory_curve(mspec, depths, N)
    if dump and out is not None:
        invariant_measure.write_density_csv(out / "density.csv", st.density, dens.bin_averages(N))
        transfer.write_decay_csv(out / "decay.csv", dec)
        transfer.write_decay_fit_json(out / "decay_fit.json", dec)
        with open(out / "loss_of_memory.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "l1_error"])
            for d, v in zip(depths, mem):
                w.writerow([d, repr(float(v))])
    return {
        "density": {"beta": str(beta), "n_bins": N, "l1_distance": l1, "unique": st.unique,
                    "iterations": st.iterations, "plateaus": plateaus, "M_beta": float(dens.M_beta),
                    "truncation_error": float(dens.truncation_error)},
        "decay": dec.to_dict(),
        "decay_quarter_dc1": float(quarter.dc[0]),
        "loss_of_memory": {"schedule": mspec.to_dict(), "n_bins": N, "depths": depths,
                           "l1_error": [float(v) for v in mem]},
    }


def run_scenario(name: str, overrides: Optional[Dict[str, Any]] = None, seed: int = 0,
                 out: Optional[os.PathLike] = None, dump: bool = False, threads: Optional[int] = None,
                 precision: Optional[str] = None) -> dict:
    """Validate, run and (with ``out``) write ``report.json`` for a scenario.

    Raises
    ------
    ScenarioError
        Validation failure.
    ArithmeticError
        Numerical failure during the run.
    """
    info, cfg, spec = resolve(name, overrides, seed, threads, precision)
    outp = Path(out) if out is not None else None
    if outp is not None:
        outp.mkdir(parents=True, exist_ok=True)
    if info.kind == "ei":
        report = _run_ei(info, cfg, spec, outp, dump)
        report["scenario"] = info.name
    elif info.kind == "subshift":
        report = _run_subshift(info, cfg, spec, seed, outp, dump)
    else:
        body = _blocks_audit(cfg, seed, outp, dump) if name == "blocks-audit" else _operator_audit(cfg, seed, outp, dump)
        report = {"schema": "audit-report", "schema_version": SCHEMA_VERSION, "scenario": info.name,
                  "seed": int(seed), "config": _jsonable(cfg), **body}
    report["description"] = info.case
    if outp is not None:
        write_report(outp / "report.json", report)
    return report


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_report(path, report: dict) -> None:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False)
        fh.write("\n")


def load_schema(kind: str) -> dict:
    """Published JSON schema for ``ei-report``, ``subshift-report`` or ``audit-report``."""
    return json.loads(resources.files("seqevl").joinpath("schemas", f"{kind}.schema.json").read_text("utf-8"))
