"""Experiment runner: TOML config + flag overrides, JSON/CSV reports.

Subcommands: capacity, secrecy, idsim, leakage, sweep, scaling.  Reports embed
the fully resolved configuration and the package version; identical configs
and seeds reproduce output files byte for byte.  Exit codes: 0 success,
2 config validation, 3 convergence failure, 4 infeasible code parameters.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__, captools, idcode, phycode, simkit
from .captools import AmplitudeGrid, ConvergenceError
from .channel import PoissonChannel, WiretapChannelPair
from .phycode import CodeBudget, InfeasibleCodeError

log = logging.getLogger(__name__)

IDSIM_CSV_COLUMNS = [
    "n", "epsilon", "q1", "k1", "q2", "k2", "N_log2log2", "M_prime", "M_dprime",
    "type1", "type1_lo", "type1_hi", "type2", "type2_lo", "type2_hi",
    "eve_yes_rate", "leakage_bits", "collision_bound", "seed",
]
SWEEP_CSV_COLUMNS = IDSIM_CSV_COLUMNS + ["lambda_b", "lambda_e", "peak", "capacity_bits", "c_s_bits", "id_capacity_bits", "secure"]
SCALING_CSV_COLUMNS = [
    "n", "epsilon", "capacity_estimate", "bits", "q1", "k1", "q2", "k2",
    "N_log2log2", "llog_per_bit", "llog_per_n", "M_prime", "M_dprime",
    "ideal_M_prime", "ideal_M_dprime", "capped", "feasible", "reason",
    "type1", "type2", "seed",
]


class ConfigError(ValueError):
    """Invalid or unknown configuration (exit code 2)."""


DEFAULT_CONFIG = {
    "channel": {"lambda_b": 0.1, "lambda_e": 2.0, "peak": 20.0},
    "grid": {"points": 65, "avg_power": 0.0},
    "tolerances": {
        "tail": 1e-12,
        "capacity": 1e-5,
        "secrecy": 1e-8,
        "positivity": 1e-6,
        "estimate": 1e-3,
        "max_iter": 200_000,
    },
    "budget": {"n": 16, "epsilon": 0.75, "capacity_estimate": 0.0},
    "code": {"cap": 4096, "bin_size": 1, "delta": 0.0625, "scheme_cap": 1_048_576},
    "leakage": {"m_dprime": 0, "bin_size": 0},
    "run": {"trials": 1000, "seed": 1, "out": "reports"},
    "sweep": {"lambda_e": None, "peak": None, "n": None},
    "scaling": {"n": [8, 11, 14, 17, 20]},
}

_FLAG_PATHS = {
    "seed": ("run", "seed"),
    "out": ("run", "out"),
    "trials": ("run", "trials"),
    "lambda_b": ("channel", "lambda_b"),
    "lambda_e": ("channel", "lambda_e"),
    "peak": ("channel", "peak"),
    "grid_points": ("grid", "points"),
    "n": ("budget", "n"),
    "epsilon": ("budget", "epsilon"),
    "cap": ("code", "cap"),
}


def load_config(path: str | None, overrides: dict) -> dict:
    """Defaults <- TOML file <- flags; unknown file keys are rejected."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path, "rb") as fh:
                loaded = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file is not valid TOML: {exc}") from exc
        unknown = []
        for section, values in loaded.items():
            if section not in cfg:
                unknown.append(section)
                continue
            if not isinstance(values, dict):
                raise ConfigError(f"section [{section}] must be a table")
            for key, value in values.items():
                if key not in cfg[section]:
                    unknown.append(f"{section}.{key}")
                else:
                    cfg[section][key] = value
        if unknown:
            raise ConfigError("unknown config keys: " + ", ".join(sorted(unknown)))
    for flag, value in overrides.items():
        if value is not None:
            section, key = _FLAG_PATHS[flag]
            cfg[section][key] = value
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    ch = cfg["channel"]
    problems = []
    if ch["lambda_b"] < 0 or ch["lambda_e"] < 0:
        problems.append("channel dark currents must be >= 0")
    if ch["lambda_e"] < ch["lambda_b"]:
        problems.append("channel.lambda_e must be >= channel.lambda_b (degraded pair)")
    if ch["peak"] <= 0:
        problems.append("channel.peak must be > 0")
    if cfg["grid"]["points"] < 1:
        problems.append("grid.points must be >= 1")
    if cfg["grid"]["avg_power"] < 0:
        problems.append("grid.avg_power must be >= 0 (0 disables the constraint)")
    tols = cfg["tolerances"]
    for key in ("tail", "capacity", "secrecy", "positivity", "estimate"):
        if not 0 < tols[key] < 1:
            problems.append(f"tolerances.{key} must lie in (0, 1)")
    if tols["max_iter"] < 1:
        problems.append("tolerances.max_iter must be >= 1")
    if cfg["budget"]["n"] < 4:
        problems.append("budget.n must be >= 4")
    if cfg["budget"]["epsilon"] <= 0:
        problems.append("budget.epsilon must be > 0")
    if cfg["code"]["bin_size"] < 1:
        problems.append("code.bin_size must be >= 1")
    if cfg["run"]["trials"] < 1:
        problems.append("run.trials must be >= 1")
    if problems:
        raise ConfigError("; ".join(problems))


def _build_pair(cfg: dict) -> WiretapChannelPair:
    return WiretapChannelPair.from_dark_currents(cfg["channel"]["lambda_b"], cfg["channel"]["lambda_e"])


def _build_grid(cfg: dict) -> AmplitudeGrid:
    points = cfg["grid"]["points"]
    peak = cfg["channel"]["peak"]
    if points == 1:
        return AmplitudeGrid([0.0])
    return AmplitudeGrid.uniform(peak, points)


def _avg_power(cfg: dict):
    value = cfg["grid"]["avg_power"]
    return value if value > 0 else None


def _resolve_capacity_estimate(cfg: dict) -> float:
    """Fill budget.capacity_estimate from the main channel when it is left at 0.

    Codebooks signal on-off, so the sizes track the two-point {0, A} capacity
    rather than the full-grid one.  The estimate only feeds the code-size
    selection and runs at the coarse `tolerances.estimate` gap; a run that
    stalls short of even that still yields a usable certified lower bound.
    """
    if cfg["budget"]["capacity_estimate"] > 0:
        return cfg["budget"]["capacity_estimate"]
    tols = cfg["tolerances"]
    grid = AmplitudeGrid([0.0, cfg["channel"]["peak"]])
    try:
        result = captools.capacity(
            grid,
            PoissonChannel(cfg["channel"]["lambda_b"]),
            tol=tols["estimate"],
            max_iter=tols["max_iter"],
            tail_tol=tols["tail"],
        )
        return result.value
    except ConvergenceError as exc:
        log.warning("capacity estimate stalled at gap; using lower bound %.6g bits", exc.lower)
        return exc.lower


def _write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %s", path)


def _write_csv(path: Path, columns: list, rows: list):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if row.get(c) is None else row.get(c) for c in columns])
    log.info("wrote %s", path)


def _payload(cfg: dict, results: dict) -> dict:
    return {"version": __version__, "config": cfg, "results": results}


def _optimizer_rows(result: captools.CapacityResult) -> list:
    return [
        {"amplitude": float(x), "mass": float(m)}
        for x, m in zip(result.optimizer.grid.points, result.optimizer.mass)
    ]


def cmd_capacity(cfg: dict, out: Path) -> int:
    tols = cfg["tolerances"]
    result = captools.capacity(
        _build_grid(cfg),
        PoissonChannel(cfg["channel"]["lambda_b"]),
        tol=tols["capacity"],
        max_iter=tols["max_iter"],
        tail_tol=tols["tail"],
        avg_power=_avg_power(cfg),
    )
    _write_json(out / "capacity.json", _payload(cfg, {
        "value_bits": result.value,
        "iterations": result.iterations,
        "duality_gap_bits": result.duality_gap,
    }))
    _write_csv(out / "capacity_optimizer.csv", ["amplitude", "mass"], _optimizer_rows(result))
    print(f"capacity: {result.value:.9f} bits (gap {result.duality_gap:.3g}, {result.iterations} iterations)")
    return 0


def cmd_secrecy(cfg: dict, out: Path) -> int:
    tols = cfg["tolerances"]
    pair = _build_pair(cfg)
    grid = _build_grid(cfg)
    dichotomy = captools.id_capacity(
        grid,
        pair,
        tol=tols["positivity"],
        optimizer_tol=tols["secrecy"],
        max_iter=tols["max_iter"],
        tail_tol=tols["tail"],
        avg_power=_avg_power(cfg),
    )
    sec = dichotomy.secrecy
    _write_json(out / "secrecy.json", _payload(cfg, {
        "c_s_bits": sec.value,
        "iterations": sec.iterations,
        "duality_gap_bits": sec.duality_gap,
        "id_capacity": {
            "value_bits": dichotomy.value,
            "secure": dichotomy.secure,
            "positivity_threshold_bits": dichotomy.threshold,
            "conjectured_for_poisson": True,
        },
    }))
    _write_csv(out / "secrecy_optimizer.csv", ["amplitude", "mass"], _optimizer_rows(sec))
    print(f"secrecy capacity: {sec.value:.9f} bits (gap {sec.duality_gap:.3g})")
    caveat = " [dichotomy proven for the Gaussian pair; conjectural for Poisson]"
    print(f"secure identification capacity: {dichotomy.value:.9f} bits, secure={dichotomy.secure}{caveat}")
    return 0


def _idsim_row(cfg: dict) -> tuple:
    """Run the full identification pipeline once; returns (row dict, reports)."""
    resolved = _resolve_capacity_estimate(cfg)
    cfg["budget"]["capacity_estimate"] = resolved
    budget = CodeBudget(cfg["budget"]["n"], cfg["budget"]["epsilon"], resolved)
    pair = _build_pair(cfg)
    seed = cfg["run"]["seed"]
    system = simkit.build_system(
        budget,
        pair,
        cfg["channel"]["peak"],
        seed,
        bin_size=cfg["code"]["bin_size"],
        delta=cfg["code"]["delta"],
        scheme_cap=cfg["code"]["scheme_cap"],
    )
    report = simkit.estimate_errors(system, cfg["run"]["trials"], seed)
    eve = simkit.eve_advantage(system, cfg["run"]["trials"], seed, leakage_tail_tol=cfg["tolerances"]["tail"])
    scheme = system.scheme
    row = {
        "n": budget.n,
        "epsilon": budget.epsilon,
        "q1": scheme.q1,
        "k1": scheme.k1,
        "q2": scheme.q2,
        "k2": scheme.k2,
        "N_log2log2": idcode.log2_log2(scheme),
        "M_prime": system.tx_code.message_count,
        "M_dprime": system.wt_code.secure_message_count,
        "type1": report.type1_rate,
        "type1_lo": report.type1_ci[0],
        "type1_hi": report.type1_ci[1],
        "type2": report.type2_rate,
        "type2_lo": report.type2_ci[0],
        "type2_hi": report.type2_ci[1],
        "eve_yes_rate": eve.eve_yes_rate,
        "leakage_bits": None if eve.leakage is None else eve.leakage.bits,
        "collision_bound": report.collision_bound,
        "seed": seed,
    }
    return row, system, budget, report, eve


def cmd_idsim(cfg: dict, out: Path) -> int:
    row, system, budget, report, eve = _idsim_row(cfg)
    results = {
        "scheme": {"q1": system.scheme.q1, "k1": system.scheme.k1,
                   "q2": system.scheme.q2, "k2": system.scheme.k2},
        "identity_count_log2log2": row["N_log2log2"],
        "sizes": {
            "m_prime_used": system.tx_code.message_count,
            "m_prime_ideal": budget.ideal_transmission_size,
            "m_dprime_used": system.wt_code.secure_message_count,
            "m_dprime_ideal": budget.ideal_wiretap_size,
            "bin_size": system.wt_code.bin_size,
        },
        "type1": {"rate": report.type1_rate, "ci95": list(report.type1_ci), "errors": report.type1_errors},
        "type2": {"rate": report.type2_rate, "ci95": list(report.type2_ci), "errors": report.type2_errors},
        "decode_errors": {"j": report.j_decode_errors, "color": report.color_decode_errors},
        "collision_bound": report.collision_bound,
        "eve": {
            "yes_rate": eve.eve_yes_rate,
            "ci95": list(eve.eve_ci),
            "bob_yes_rate": eve.bob_yes_rate,
            "advantage": eve.advantage,
            "leakage_bits": None if eve.leakage is None else eve.leakage.bits,
        },
    }
    _write_json(out / "idsim.json", _payload(cfg, results))
    _write_csv(out / "idsim.csv", IDSIM_CSV_COLUMNS, [row])
    print(
        f"idsim: type1={report.type1_rate:.4g} type2={report.type2_rate:.4g} "
        f"(collision bound {report.collision_bound:.4g}), eve yes-rate {eve.eve_yes_rate:.4g}"
    )
    return 0


def cmd_leakage(cfg: dict, out: Path) -> int:
    resolved = _resolve_capacity_estimate(cfg)
    cfg["budget"]["capacity_estimate"] = resolved
    budget = CodeBudget(cfg["budget"]["n"], cfg["budget"]["epsilon"], resolved)
    pair = _build_pair(cfg)
    bin_size = cfg["leakage"]["bin_size"] or cfg["code"]["bin_size"]
    m_dprime = cfg["leakage"]["m_dprime"]
    if m_dprime <= 0:
        scheme = idcode.scheme_for_budget(
            budget.n, budget.epsilon, resolved,
            delta=cfg["code"]["delta"], cap=cfg["code"]["scheme_cap"],
        )
        m_dprime = scheme.q2
    code = phycode.build_wiretap_code(
        budget, cfg["channel"]["peak"], bin_size, cfg["run"]["seed"],
        cap=cfg["code"]["cap"], secure_message_count=m_dprime,
    )
    estimate = phycode.exact_leakage(code, pair, cfg["tolerances"]["tail"])
    _write_json(out / "leakage.json", _payload(cfg, {
        "leakage_bits": estimate.bits,
        "tail_tol": estimate.tail_tol,
        "support": [estimate.support_lo, estimate.support_hi],
        "states": estimate.states,
        "min_captured_mass": estimate.min_captured_mass,
        "code": {
            "block_length": code.block_length,
            "secure_messages": code.secure_message_count,
            "bin_size": code.bin_size,
            "globally_distinct": code.globally_distinct,
        },
    }))
    print(f"exact leakage: {estimate.bits:.6g} bits over {estimate.states} enumerated outputs")
    return 0


def cmd_sweep(cfg: dict, out: Path) -> int:
    def axis(name: str, current):
        values = cfg["sweep"][name]
        return [current] if values is None else values

    rows = []
    for lam_e in axis("lambda_e", cfg["channel"]["lambda_e"]):
        for peak in axis("peak", cfg["channel"]["peak"]):
            for n in axis("n", cfg["budget"]["n"]):
                point = copy.deepcopy(cfg)
                point["channel"]["lambda_e"] = lam_e
                point["channel"]["peak"] = peak
                point["budget"]["n"] = n
                _validate(point)
                row, system, budget, report, eve = _idsim_row(point)
                tols = point["tolerances"]
                dichotomy = captools.id_capacity(
                    _build_grid(point), _build_pair(point),
                    tol=tols["positivity"], optimizer_tol=tols["secrecy"],
                    max_iter=tols["max_iter"], tail_tol=tols["tail"],
                    avg_power=_avg_power(point),
                )
                row.update({
                    "lambda_b": point["channel"]["lambda_b"],
                    "lambda_e": lam_e,
                    "peak": peak,
                    "capacity_bits": budget.capacity_estimate,
                    "c_s_bits": dichotomy.secrecy.value,
                    "id_capacity_bits": dichotomy.value,
                    "secure": dichotomy.secure,
                })
                rows.append(row)
    _write_csv(out / "sweep.csv", SWEEP_CSV_COLUMNS, rows)
    print(f"sweep: wrote {len(rows)} rows")
    return 0


def cmd_scaling(cfg: dict, out: Path) -> int:
    resolved = _resolve_capacity_estimate(cfg)
    cfg["budget"]["capacity_estimate"] = resolved
    budgets = [CodeBudget(n, cfg["budget"]["epsilon"], resolved) for n in cfg["scaling"]["n"]]
    rows = simkit.scaling_study(
        budgets,
        _build_pair(cfg),
        cfg["channel"]["peak"],
        cfg["run"]["seed"],
        trials=cfg["run"]["trials"],
        bin_size=cfg["code"]["bin_size"],
        delta=cfg["code"]["delta"],
        scheme_cap=cfg["code"]["scheme_cap"],
    )
    csv_rows = [
        {
            "n": r.n, "epsilon": r.epsilon, "capacity_estimate": r.capacity_estimate,
            "bits": r.bits, "q1": r.q1, "k1": r.k1, "q2": r.q2, "k2": r.k2,
            "N_log2log2": r.log2_log2, "llog_per_bit": r.llog_per_bit,
            "llog_per_n": r.llog_per_n, "M_prime": r.m_prime, "M_dprime": r.m_dprime,
            "ideal_M_prime": r.ideal_m_prime, "ideal_M_dprime": r.ideal_m_dprime,
            "capped": r.capped, "feasible": r.feasible, "reason": r.reason,
            "type1": r.type1_rate, "type2": r.type2_rate, "seed": cfg["run"]["seed"],
        }
        for r in rows
    ]
    _write_csv(out / "scaling.csv", SCALING_CSV_COLUMNS, csv_rows)
    _write_json(out / "scaling.json", _payload(cfg, {
        "rows": [
            {**row, "identity_count": str(r.identity_count)}
            for row, r in zip(csv_rows, rows)
        ],
    }))
    print(f"scaling: wrote {len(rows)} rows")
    return 0


_COMMANDS = {
    "capacity": cmd_capacity,
    "secrecy": cmd_secrecy,
    "idsim": cmd_idsim,
    "leakage": cmd_leakage,
    "sweep": cmd_sweep,
    "scaling": cmd_scaling,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poisson-ident",
        description="Secure identification over discrete-time Poisson wiretap channels",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("capacity", "main-channel capacity on the amplitude grid"),
        ("secrecy", "secrecy capacity and the identification dichotomy"),
        ("idsim", "end-to-end identification error simulation"),
        ("leakage", "exact wiretap-block leakage by enumeration"),
        ("sweep", "parameter sweep emitting one idsim row per point"),
        ("scaling", "identity-count growth across block lengths"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=str, default=None, help="TOML config file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides run.seed)")
        p.add_argument("--out", type=str, default=None, help="output directory (overrides run.out)")
        p.add_argument("--trials", type=int, default=None, help="Monte Carlo trials (overrides run.trials)")
        p.add_argument("--lambda-b", dest="lambda_b", type=float, default=None, help="main-channel dark current")
        p.add_argument("--lambda-e", dest="lambda_e", type=float, default=None, help="eavesdropper dark current")
        p.add_argument("--peak", type=float, default=None, help="peak amplitude A")
        p.add_argument("--grid-points", dest="grid_points", type=int, default=None, help="amplitude grid size")
        p.add_argument("--n", type=int, default=None, help="transmission block length")
        p.add_argument("--epsilon", type=float, default=None, help="rate slack epsilon")
        p.add_argument("--cap", type=int, default=None, help="codebook size cap")
    return parser


def main(argv=None) -> int:
    level = os.environ.get("POISSON_IDENT_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {flag: getattr(args, flag) for flag in _FLAG_PATHS}
    try:
        cfg = load_config(args.config, overrides)
        out = Path(cfg["run"]["out"])
        return _COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 3
    except InfeasibleCodeError as exc:
        print(f"infeasible code parameters: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
