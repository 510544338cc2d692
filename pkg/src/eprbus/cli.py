"""Scenario-driven command line front end.

A scenario is a small YAML file with sections::

    protocol: epr_conditional   # epr_feedback | verify | teleport | oracle_compare
    seed: 1234
    model:                      # dimensionless parameters ...
      kappa: 1.0
      n_i: 0.0
    # setup:                    # ... or an SI-unit hardware description
    #   mech:   {omega_m_hz: 5.0e6, mass_kg: 1.0e-12, q_factor: 5.0e5, temperature_k: 0.2}
    #   cavity: {finesse: 4500, length_m: 300.0e-6, power_w: 100.0e-6, tau_s: 2.0e-6}
    #   atoms:  {gamma_hz: 5.2e6, delta_hz: 1.0e9, sigma_m2: 1.0e-13,
    #            area_m2: 1.0e-8, n_atoms: 1.8e5, larmor_hz: 5.0e6}
    #   cooling_factor: 30
    losses: {eps_mismatch: 0.0, photon_loss: 0.0, gamma_m_tau: 0.0, n_th: 0.0}
    sweep:  {path: model.kappa, values: [0.25, 0.5, 1.0, 2.0]}
    output: {format: json, path: out.json}

Exactly one of ``model``/``setup`` must be present.  Verbs: ``run``,
``compare`` (oracle vs closed form vs idealized map), ``plan`` (feasibility
only) and ``sweep``.  Exit codes: 0 success, 2 scenario/validation error,
3 numerical failure.  Identical scenario and seed produce byte-identical
reports up to the ``metadata`` block, which holds the timestamp.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import io
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .decoherence import LossBudget, apply_budget, damping_penalty, mismatch_penalty
from .gaussian import (
    EPRReport,
    InvalidChannelError,
    InvalidStateError,
    atomic_mode,
    epr_variance,
    make_state,
    mechanical_mode,
)
from .iomaps import MatchingError, ProtocolParams
from .oracle import MIN_STEPS_PER_PERIOD, build_model, oracle_epr_after_measurement
from .planner import (
    AtomSpec,
    CavitySpec,
    MechanicalSpec,
    PhysicalSetup,
    coherence_budget,
    derive_params,
)
from .protocols import (
    FeedbackConfig,
    TeleportConfig,
    predict_epr_variance,
    predicted_report,
    run_epr_generation,
    teleport,
    verify_epr,
)

SCHEMA_VERSION = 1

PROTOCOLS = ("epr_conditional", "epr_feedback", "verify", "teleport", "oracle_compare")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class ScenarioError(ValueError):
    """Scenario file failed validation; the message names the offending key."""


# ---------------------------------------------------------------------------
# scenario loading


def _require_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ScenarioError(f"unknown key(s) {sorted(unknown)} in section {where!r}")


def load_scenario(path: str | Path) -> dict:
    """Parse and validate a scenario file into a plain dict."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ScenarioError(f"cannot read scenario file: {err}") from err
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ScenarioError(f"scenario is not valid YAML: {err}") from err
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a mapping of sections")
    return validate_scenario(raw)


def validate_scenario(raw: dict) -> dict:
    _require_keys(
        raw,
        {
            "protocol",
            "seed",
            "model",
            "setup",
            "losses",
            "feedback",
            "teleport",
            "verify",
            "sweep",
            "output",
            "oracle",
        },
        "<root>",
    )
    protocol = raw.get("protocol")
    if protocol not in PROTOCOLS:
        raise ScenarioError(f"key 'protocol' must be one of {PROTOCOLS}, got {protocol!r}")
    if ("model" in raw) == ("setup" in raw):
        raise ScenarioError("exactly one of the keys 'model'/'setup' must be present")

    scenario = {
        "protocol": protocol,
        "seed": int(raw.get("seed", 0)),
        "losses": dict(raw.get("losses") or {}),
        "feedback": dict(raw.get("feedback") or {}),
        "teleport": dict(raw.get("teleport") or {}),
        "verify": dict(raw.get("verify") or {}),
        "oracle": dict(raw.get("oracle") or {}),
        "output": dict(raw.get("output") or {}),
    }
    if "model" in raw:
        model = dict(raw["model"])
        _require_keys(
            model,
            {
                "kappa",
                "n_i",
                "larmor_periods",
                "gamma_m",
                "n_th",
                "eps_mismatch",
                "eta_light",
                "eta_det",
            },
            "model",
        )
        if "kappa" not in model:
            raise ScenarioError("key 'model.kappa' is required")
        scenario["model"] = model
    else:
        scenario["setup"] = _validate_setup(dict(raw["setup"]))

    _require_keys(
        scenario["losses"], {"eps_mismatch", "photon_loss", "gamma_m_tau", "n_th"}, "losses"
    )
    _require_keys(scenario["feedback"], {"mode", "gain"}, "feedback")
    _require_keys(
        scenario["teleport"], {"kappa_qnd", "bell_gain", "input_mean", "asymptotic"}, "teleport"
    )
    _require_keys(scenario["verify"], {"shots"}, "verify")
    _require_keys(scenario["oracle"], {"steps_per_period"}, "oracle")
    _require_keys(scenario["output"], {"format", "path"}, "output")
    fmt = scenario["output"].get("format", "json")
    if fmt not in ("json", "csv"):
        raise ScenarioError(f"key 'output.format' must be 'json' or 'csv', got {fmt!r}")

    if "sweep" in raw:
        sweep = dict(raw["sweep"] or {})
        _require_keys(sweep, {"path", "values"}, "sweep")
        if "path" not in sweep or "values" not in sweep:
            raise ScenarioError("sweep section requires keys 'path' and 'values'")
        if not isinstance(sweep["values"], list) or not sweep["values"]:
            raise ScenarioError("key 'sweep.values' must be a non-empty list")
        _resolve_sweep_target(scenario, str(sweep["path"]))  # fail early
        scenario["sweep"] = {"path": str(sweep["path"]), "values": list(sweep["values"])}
    return scenario


def _validate_setup(section: dict) -> dict:
    _require_keys(section, {"mech", "cavity", "atoms", "cooling_factor"}, "setup")
    for sub, keys in (
        ("mech", {"omega_m_hz", "mass_kg", "q_factor", "temperature_k"}),
        ("cavity", {"finesse", "length_m", "wavelength_m", "power_w", "tau_s"}),
        ("atoms", {"gamma_hz", "delta_hz", "sigma_m2", "area_m2", "n_atoms", "larmor_hz"}),
    ):
        if sub not in section:
            raise ScenarioError(f"key 'setup.{sub}' is required")
        _require_keys(dict(section[sub]), keys, f"setup.{sub}")
        missing = keys - set(section[sub]) - {"wavelength_m"}
        if missing:
            raise ScenarioError(f"missing key(s) {sorted(missing)} in section 'setup.{sub}'")
    return section


def _resolve_sweep_target(scenario: dict, path: str) -> tuple[dict, str]:
    parts = path.split(".")
    node = scenario
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ScenarioError(f"sweep path {path!r} does not resolve (at {part!r})")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict):
        raise ScenarioError(f"sweep path {path!r} does not resolve to a field")
    current = node.get(leaf, 0.0)
    if current is not None and not isinstance(current, (int, float)):
        raise ScenarioError(f"sweep path {path!r} must point at a numeric field")
    return node, leaf


# ---------------------------------------------------------------------------
# scenario -> objects


def build_params(scenario: dict) -> ProtocolParams:
    if "model" in scenario:
        model = scenario["model"]
        try:
            return ProtocolParams.dimensionless(
                kappa=float(model["kappa"]),
                n_i=float(model.get("n_i", 0.0)),
                larmor_periods=int(model.get("larmor_periods", 64)),
                gamma_m=float(model.get("gamma_m", 0.0)),
                n_th=float(model.get("n_th", 0.0)),
                eps_mismatch=float(model.get("eps_mismatch", 0.0)),
                eta_light=float(model.get("eta_light", 1.0)),
                eta_det=float(model.get("eta_det", 1.0)),
            )
        except (TypeError, ValueError) as err:
            raise ScenarioError(f"invalid 'model' section: {err}") from err
    params, _ = derive_params(build_setup(scenario))
    return params


def build_setup(scenario: dict) -> PhysicalSetup:
    raw = scenario["setup"]
    two_pi = 2.0 * math.pi
    try:
        cavity_kwargs = {
            "finesse": float(raw["cavity"]["finesse"]),
            "length": float(raw["cavity"]["length_m"]),
            "power": float(raw["cavity"]["power_w"]),
            "tau": float(raw["cavity"]["tau_s"]),
        }
        if "wavelength_m" in raw["cavity"]:
            cavity_kwargs["wavelength"] = float(raw["cavity"]["wavelength_m"])
        return PhysicalSetup(
            mech=MechanicalSpec(
                omega_m=two_pi * float(raw["mech"]["omega_m_hz"]),
                mass=float(raw["mech"]["mass_kg"]),
                q_factor=float(raw["mech"]["q_factor"]),
                temperature=float(raw["mech"]["temperature_k"]),
            ),
            cavity=CavitySpec(**cavity_kwargs),
            atoms=AtomSpec(
                gamma=two_pi * float(raw["atoms"]["gamma_hz"]),
                delta=two_pi * float(raw["atoms"]["delta_hz"]),
                sigma_scatter=float(raw["atoms"]["sigma_m2"]),
                beam_area=float(raw["atoms"]["area_m2"]),
                n_atoms=float(raw["atoms"]["n_atoms"]),
                larmor=two_pi * float(raw["atoms"]["larmor_hz"]),
            ),
            cooling_factor=float(raw.get("cooling_factor", 1.0)),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise ScenarioError(f"invalid 'setup' section: {err}") from err


def build_losses(scenario: dict) -> LossBudget:
    section = scenario["losses"]
    try:
        return LossBudget(
            eps_mismatch=float(section.get("eps_mismatch", 0.0)),
            photon_loss=float(section.get("photon_loss", 0.0)),
            gamma_m_tau=float(section.get("gamma_m_tau", 0.0)),
            n_th=float(section.get("n_th", 0.0)),
        )
    except ValueError as err:
        raise ScenarioError(f"invalid 'losses' section: {err}") from err


def _initial_state(params: ProtocolParams):
    return make_state(
        [
            (mechanical_mode("m"), params.n_i, (0.0, 0.0)),
            (atomic_mode("a"), 0.0, (0.0, 0.0)),
        ]
    )


def _report_dict(report: EPRReport) -> dict:
    payload = {
        "delta_epr": report.delta_epr,
        "var_xsum": report.var_xsum,
        "var_pdiff": report.var_pdiff,
        "entangled": report.entangled,
        "provenance": report.provenance.value,
    }
    if report.corrections is not None:
        payload["corrections"] = report.corrections
    if report.stderr is not None:
        payload["stderr"] = report.stderr
    return payload


# ---------------------------------------------------------------------------
# protocol execution


def execute(scenario: dict, *, oracle_steps: int | None = None) -> dict:
    """Run the scenario's protocol once and return the results section."""
    params = build_params(scenario)
    losses = build_losses(scenario)
    rng = np.random.default_rng(scenario["seed"])
    protocol = scenario["protocol"]
    results: dict = {
        "params": dataclasses.asdict(params),
        "predicted": _report_dict(predicted_report(params.kappa, params.n_i)),
    }

    if protocol in ("epr_conditional", "epr_feedback"):
        fb = _feedback_config(scenario, protocol)
        state, report, records = run_epr_generation(
            _initial_state(params),
            params,
            fb,
            rng=rng if protocol == "epr_feedback" else None,
        )
        results["achieved"] = _report_dict(report)
        results["records"] = [
            {"mode": rec.mode.name, "outcome": rec.outcome, "variance": rec.outcome_variance}
            for rec in records
        ]
        if not losses.empty:
            corrected = apply_budget(report, losses, params.kappa, params.n_i)
            results["corrected"] = _report_dict(corrected)
    elif protocol == "verify":
        state, gen_report, _ = run_epr_generation(
            _initial_state(params), params, FeedbackConfig.conditional()
        )
        shots = scenario["verify"].get("shots")
        inferred, post = verify_epr(
            state, params, shots=int(shots) if shots else None, rng=rng
        )
        results["achieved"] = _report_dict(gen_report)
        results["inferred"] = _report_dict(inferred)
        results["post_verification"] = _report_dict(epr_variance(post, "m", "a"))
    elif protocol == "teleport":
        state, gen_report, _ = run_epr_generation(
            _initial_state(params), params, FeedbackConfig.conditional()
        )
        cfg = _teleport_config(scenario)
        final, fidelity = teleport(state, params, cfg)
        results["achieved"] = _report_dict(gen_report)
        results["teleport"] = {
            "fidelity": fidelity,
            "asymptotic": cfg.asymptotic,
            "kappa_qnd": cfg.kappa_qnd,
            "bell_gain": cfg.bell_gain,
            "input_mean": list(cfg.input_mean),
            "output_mean": final.mean.tolist(),
            "added_noise_x": final.cov[0, 0] - 0.5,
            "added_noise_p": final.cov[1, 1] - 0.5,
        }
    elif protocol == "oracle_compare":
        results.update(_compare_results(scenario, params, losses, oracle_steps))
    else:  # pragma: no cover - guarded by validation
        raise ScenarioError(f"unsupported protocol {protocol!r}")
    return results


def _feedback_config(scenario: dict, protocol: str) -> FeedbackConfig:
    if protocol == "epr_conditional":
        return FeedbackConfig.conditional()
    section = scenario["feedback"]
    mode = section.get("mode", "optimal")
    if mode == "optimal":
        return FeedbackConfig.optimal()
    if mode == "fixed":
        if "gain" not in section:
            raise ScenarioError("key 'feedback.gain' is required for mode 'fixed'")
        return FeedbackConfig.with_gain(float(section["gain"]))
    raise ScenarioError(f"key 'feedback.mode' must be 'optimal' or 'fixed', got {mode!r}")


def _teleport_config(scenario: dict) -> TeleportConfig:
    section = scenario["teleport"]
    mean = section.get("input_mean", (0.0, 0.0))
    if not isinstance(mean, (list, tuple)) or len(mean) != 2:
        raise ScenarioError("key 'teleport.input_mean' must be a pair [x, p]")
    try:
        return TeleportConfig(
            kappa_qnd=float(section.get("kappa_qnd", 0.0)),
            bell_gain=float(section.get("bell_gain", 0.0)),
            input_mean=(float(mean[0]), float(mean[1])),
            asymptotic=bool(section.get("asymptotic", False)),
        )
    except ValueError as err:
        raise ScenarioError(f"invalid 'teleport' section: {err}") from err


def _compare_results(
    scenario: dict, params: ProtocolParams, losses: LossBudget, oracle_steps: int | None
) -> dict:
    steps = oracle_steps or int(
        scenario["oracle"].get("steps_per_period", MIN_STEPS_PER_PERIOD)
    )
    predicted = predict_epr_variance(params.kappa, params.n_i)

    _, ideal_report, _ = run_epr_generation(
        _initial_state(params), params, FeedbackConfig.conditional()
    )
    mismatch = params.eps_mismatch > 0.0
    damping = params.gamma_m > 0.0
    model = build_model(params, damping=damping, mismatch=mismatch, steps_per_period=steps)
    oracle_report = oracle_epr_after_measurement(model)

    out = {
        "idealized": _report_dict(ideal_report),
        "oracle": _report_dict(oracle_report),
        "oracle_steps_per_period": steps,
        "rel_deviation_idealized": ideal_report.delta_epr / predicted - 1.0,
        "rel_deviation_oracle": oracle_report.delta_epr / predicted - 1.0,
    }
    if mismatch or damping:
        baseline = oracle_epr_after_measurement(
            build_model(params, steps_per_period=steps)
        )
        excess = oracle_report.delta_epr - baseline.delta_epr
        out["oracle_excess"] = excess
        closed_form = 0.0
        if mismatch:
            penalty = mismatch_penalty(params.eps_mismatch, params.kappa, params.n_i)
            out["mismatch_penalty"] = penalty
            closed_form += penalty
        if damping:
            penalty = 2.0 * damping_penalty(params.gamma_m * params.tau, params.n_th)
            out["damping_penalty_total"] = penalty
            closed_form += penalty
        out["excess_over_closed_form"] = excess / closed_form if closed_form else math.nan
    return out


# ---------------------------------------------------------------------------
# sweeps and output


def execute_sweep(scenario: dict, *, oracle_steps: int | None = None) -> dict:
    sweep = scenario["sweep"]
    points = []
    for value in sweep["values"]:
        sub = copy.deepcopy(scenario)
        sub.pop("sweep")
        node, leaf = _resolve_sweep_target(sub, sweep["path"])
        node[leaf] = value
        results = execute(sub, oracle_steps=oracle_steps)
        points.append({"value": value, "results": results})
    return {"path": sweep["path"], "points": points}


def _point_row(point: dict) -> dict:
    results = point["results"]
    # the corrected figure is the bottom line whenever a loss budget applies
    achieved = (
        results.get("corrected") or results.get("achieved") or results.get("oracle") or {}
    )
    fidelity = results.get("teleport", {}).get("fidelity", "")
    return {
        "value": point["value"],
        "delta_epr_predicted": results["predicted"]["delta_epr"],
        "delta_epr": achieved.get("delta_epr", ""),
        "entangled": achieved.get("entangled", ""),
        "fidelity": fidelity,
    }


def render_csv(payload: dict) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(
        buffer,
        fieldnames=["value", "delta_epr_predicted", "delta_epr", "entangled", "fidelity"],
        lineterminator="\n",
    )
    writer.writeheader()
    if "sweep" in payload["results"]:
        for point in payload["results"]["sweep"]["points"]:
            writer.writerow(_point_row(point))
    else:
        writer.writerow(_point_row({"value": "", "results": payload["results"]}))
    return buffer.getvalue()


def render_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def assemble_report(scenario: dict, results: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": scenario,
        "results": results,
        "metadata": {
            "created_utc": datetime.now(timezone.utc).isoformat(),
            "package_version": __version__,
        },
    }


def write_report(report: dict, path: str | None, fmt: str) -> str:
    text = render_csv(report) if fmt == "csv" else render_json(report)
    if path:
        Path(path).write_text(text)
    return text


# ---------------------------------------------------------------------------
# entry point


def _run_plan(scenario: dict) -> dict:
    if "setup" not in scenario:
        raise ScenarioError("the 'plan' verb requires a 'setup' section")
    setup = build_setup(scenario)
    params, feasibility = derive_params(setup)
    budget = coherence_budget(setup)
    return {
        "params": dataclasses.asdict(params),
        "derived": feasibility.derived,
        "checks": [
            {"name": c.name, "ratio": c.ratio, "status": c.status.value, "detail": c.detail}
            for c in feasibility.checks
        ],
        "feasible": feasibility.ok,
        "coherence": {
            "tau_thermal_s": budget.tau_thermal,
            "tau_max_s": budget.tau_max,
            "limiting": budget.limiting,
        },
    }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="eprbus",
        description="simulate pulsed QND entanglement between a mechanical "
        "oscillator and an atomic ensemble",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, text in (
        ("run", "execute the scenario's protocol"),
        ("compare", "closed form vs idealized map vs oracle"),
        ("plan", "feasibility analysis of a hardware setup"),
        ("sweep", "repeat the protocol over the scenario's sweep values"),
    ):
        p = sub.add_parser(verb, help=text)
        p.add_argument("--scenario", required=True, help="path to the scenario YAML file")
        p.add_argument("--out", default=None, help="report path (overrides output.path)")
        p.add_argument("--format", default=None, choices=("json", "csv"))
        p.add_argument("--seed", type=int, default=None, help="overrides scenario seed")
        p.add_argument(
            "--oracle-steps",
            type=int,
            default=None,
            help="oracle integration steps per Larmor period",
        )
    args = parser.parse_args(argv)

    try:
        scenario = load_scenario(args.scenario)
        if args.seed is not None:
            scenario["seed"] = args.seed
        if args.verb == "plan":
            results = _run_plan(scenario)
        elif args.verb == "sweep":
            if "sweep" not in scenario:
                raise ScenarioError("the 'sweep' verb requires a 'sweep' section")
            results = {"sweep": execute_sweep(scenario, oracle_steps=args.oracle_steps)}
        elif args.verb == "compare":
            if scenario["protocol"] != "oracle_compare":
                raise ScenarioError("the 'compare' verb requires protocol 'oracle_compare'")
            results = execute(scenario, oracle_steps=args.oracle_steps)
        else:
            if "sweep" in scenario:
                results = {"sweep": execute_sweep(scenario, oracle_steps=args.oracle_steps)}
            else:
                results = execute(scenario, oracle_steps=args.oracle_steps)
    except ScenarioError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (
        InvalidChannelError,
        InvalidStateError,
        MatchingError,
        np.linalg.LinAlgError,
        FloatingPointError,
        ValueError,
    ) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL

    report = assemble_report(scenario, results)
    fmt = args.format or scenario["output"].get("format", "json")
    path = args.out or scenario["output"].get("path")
    text = write_report(report, path, fmt)
    if path:
        print(f"report written to {path}")
    else:
        print(text, end="")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
