"""Command-line front end.

Every subcommand reads a JSON config (``--config``), writes into ``--out`` and
leaves a resolved copy of the config next to its outputs. Exit codes: 0 ok,
2 config error, 3 rank deficiency / ill-conditioning, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import io
from .complexity import covariance_worst, samples_required, sigma_avg, sigma_observable, sigma_worst
from .ensemble import QuenchEnsemble, global_scheme_ensemble, sample_local_ensemble
from .errors import InvalidArgumentError, NumericalError, RankDeficientError, ResourceError
from .gaussian import SlotIndex, random_gaussian_state
from .lattice import chain, grid
from .observables import center_site, local_slots, resolve
from .robustness import SweepConfig, robustness_sweep
from .simulator import estimate_correlation_matrix, estimate_observable, estimate_vector, run_experiment
from .tomo_map import default_inner_radius, noise_matrix, optimal_inverse, pseudo_inverse, rank_check, stack_forward, truncated_local_map

log = logging.getLogger("gausstomo")

EXIT_OK, EXIT_CONFIG, EXIT_RANK, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULTS = {
    "scheme": "local1d",
    "sizes": [10],
    "ensemble": {"S": 400, "t_max": 5.0, "h_max": 6.0, "theta_L": 2 / 3, "grid_points": 30, "seed": 0,
                 "system_row": 0},
    "inversion": {"delta": 1e-3, "w_floor": 1e-8, "ell_in": None, "ell_out": None,
                  "truncate_above": None, "local_range": 1, "save_matrices": False},
    "experiment": {"R": 4000, "epsilon": 0.05, "seed": 0, "state_seed": 0, "filling": 0.5,
                   "state_file": None, "p_fail": None},
    "observables": ["middle_current"],
    "robustness": {"nu": [0.0, 1e-4, 1e-3, 1e-2], "trials": 50,
                   "h_grid": [0, 1, 2, 3, 4, 5], "phi_grid": [0.0, math.pi / 4, math.pi / 2]},
}

_num = {"type": "number"}
_opt_num = {"type": ["number", "null"]}
_opt_int = {"type": ["integer", "null"]}
SCHEMA = {
    "type": "object",
    "properties": {
        "scheme": {"enum": ["local1d", "local2d", "global", "fourpoint"]},
        "sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "ensemble": {
            "type": "object",
            "properties": {
                "S": {"type": "integer", "minimum": 1},
                "t_max": {"type": "number", "exclusiveMinimum": 0},
                "h_max": {"type": "number", "exclusiveMinimum": 0},
                "theta_L": _num,
                "grid_points": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "system_row": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "inversion": {
            "type": "object",
            "properties": {
                "delta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "w_floor": {"type": "number", "minimum": 0},
                "ell_in": _opt_int,
                "ell_out": _opt_int,
                "truncate_above": _opt_int,
                "local_range": {"type": "integer", "minimum": 0},
                "save_matrices": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "experiment": {
            "type": "object",
            "properties": {
                "R": {"type": "integer", "minimum": 1},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "state_seed": {"type": "integer", "minimum": 0},
                "filling": {"type": "number", "minimum": 0, "maximum": 1},
                "state_file": {"type": ["string", "null"]},
                "p_fail": _opt_num,
            },
            "additionalProperties": False,
        },
        "observables": {"type": "array", "items": {"type": "string"}},
        "robustness": {
            "type": "object",
            "properties": {
                "nu": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "trials": {"type": "integer", "minimum": 1},
                "h_grid": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "phi_grid": {"type": "array", "items": _num},
            },
            "additionalProperties": False,
        },
        "output_dir": {"type": "string"},
    },
    "additionalProperties": False,
}


class ConfigError(Exception):
    pass


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    raw = _merge(raw, overrides or {})
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {loc}: {exc.message}") from exc
    return _merge(DEFAULTS, raw)


# --------------------------------------------------------------------------
# pipeline pieces
# --------------------------------------------------------------------------

def build_ensemble(cfg: dict, size: int) -> QuenchEnsemble:
    e = cfg["ensemble"]
    scheme = cfg["scheme"]
    if scheme == "global":
        return global_scheme_ensemble(size, e["system_row"])
    lattice = grid(size, size) if scheme == "local2d" else chain(size)
    return sample_local_ensemble(e["S"], e["t_max"], e["h_max"], e["theta_L"], e["grid_points"], e["seed"], lattice)


def _use_local_truncation(cfg: dict, ens: QuenchEnsemble) -> bool:
    inv = cfg["inversion"]
    thr = inv["truncate_above"]
    return inv["ell_out"] is not None and thr is not None and ens.N > thr


def build_inverse(cfg: dict, ens: QuenchEnsemble):
    """Full map and inverse; optimal inverse for the global scheme, truncated SVD otherwise."""
    inv = cfg["inversion"]
    if _use_local_truncation(cfg, ens):
        ell_out = inv["ell_out"]
        ell_in = inv["ell_in"]
        if ell_in is None:
            ell_in = default_inner_radius(ell_out, max(q.t for _, q in ens.members))
        return truncated_local_map(ens, center_site(ens.lattice), ell_in, ell_out, inv["delta"])
    threads = cfg.get("threads", 1)
    mmap = stack_forward(ens, threads=threads)
    W = noise_matrix(ens, threads=threads)
    if cfg["scheme"] == "global":
        return mmap, optimal_inverse(mmap, W, inv["w_floor"])
    return mmap, pseudo_inverse(mmap, inv["delta"], W)


def _observable_list(cfg: dict, ens: QuenchEnsemble):
    # the global scheme's system is a single row, addressed as a chain
    lattice = ens.lattice if cfg["scheme"] == "local2d" else None
    return [resolve(name, ens.N, lattice) for name in cfg["observables"] if name != "full_matrix"]


def complexity_row(cfg: dict, size: int) -> dict:
    ens = build_ensemble(cfg, size)
    eps = cfg["experiment"]["epsilon"]
    p_fail = cfg["experiment"]["p_fail"]
    mmap, bundle = build_inverse(cfg, ens)
    row = {"N": ens.N, "size": size, "scheme": cfg["scheme"], "S": ens.S}
    if cfg["scheme"] == "global":
        row["sigma2_worst"] = sigma_worst(bundle.L)
        row["sigma2_avg"] = sigma_avg(bundle.L)

        def var(o):
            return sigma_observable(bundle.L, o)
    else:
        coords = ens.lattice.all_coords()[list(ens.system_sites)]
        slots = local_slots(ens.N, cfg["inversion"]["local_range"], coords)
        if bundle.slots is not None:
            # a patch inverse is only trusted for pairs inside its readout patch
            sys_pos = {site: k for k, site in enumerate(ens.system_sites)}
            outer = [sys_pos[site] for site in bundle.row_sites if site in sys_pos]
            slots = np.intersect1d(np.intersect1d(slots, bundle.slots), SlotIndex(ens.N).slots_within(outer))
            pos = np.searchsorted(bundle.slots, slots)
            cov = bundle.covariance(np.eye(len(bundle.slots))[pos])
        else:
            cov = bundle.covariance(np.eye(bundle.dim)[slots])
        row["sigma2_worst"] = covariance_worst(cov)
        row["sigma2_avg"] = float(np.trace(cov) / len(slots))
        row["retained_rank"] = bundle.retained_rank

        def var(o):
            o_ = o if bundle.slots is None or len(o) == len(bundle.slots) else o[bundle.slots]
            return float(bundle.covariance(o_[None])[0, 0])
    row["R_worst"] = samples_required(row["sigma2_worst"], eps, p_fail)
    row["R_avg"] = samples_required(row["sigma2_avg"], eps, p_fail)
    for ob in _observable_list(cfg, ens):
        # sigma2 of the (possibly complex) estimator: Var[Re] + Var[Im]
        s_re = var(ob.re)
        s_im = var(ob.im) if not ob.is_hermitian else 0.0
        row[f"sigma2_{ob.name}"] = s_re + s_im
        if not ob.is_hermitian:
            # unit-norm Hermitian parts
            row[f"sigma2_{ob.name}_re_unit"] = s_re / float(ob.re @ ob.re)
            row[f"sigma2_{ob.name}_im_unit"] = s_im / float(ob.im @ ob.im)
        row[f"R_{ob.name}"] = samples_required(s_re + s_im, eps, p_fail)
    return row


def _true_state(cfg: dict, N: int) -> np.ndarray:
    ex = cfg["experiment"]
    if ex["state_file"]:
        C0 = io.read_matrix(ex["state_file"])
        if C0.shape != (N, N):
            raise InvalidArgumentError(f"state file holds {C0.shape}, expected {(N, N)}")
        return C0.astype(complex)
    return random_gaussian_state(N, ex["filling"], ex["state_seed"])


def _estimates(cfg, ens, mmap, bundle, dataset, C0=None) -> dict:
    out = {"observables": {}}
    d_anc = mmap.d_anc
    for ob in _observable_list(cfg, ens):
        est = estimate_observable(dataset, bundle, d_anc, ob)
        entry = est.to_dict()
        if C0 is not None:
            truth = complex(np.sum(ob.coeffs * np.asarray(C0)))
            entry.update(truth_re=truth.real, truth_im=truth.imag, abs_error=abs(complex(est.value) - truth))
        out["observables"][ob.name] = entry
    if "full_matrix" in cfg["observables"]:
        if bundle.slots is None:
            C_hat = estimate_correlation_matrix(dataset, bundle, d_anc)
            out["full_matrix"] = {"re": C_hat.real.tolist(), "im": C_hat.imag.tolist()}
            if C0 is not None:
                out["full_matrix"]["max_abs_error"] = float(np.abs(C_hat - C0).max())
        else:
            x = estimate_vector(dataset, bundle, d_anc)
            out["patch_slots"] = {"slots": bundle.slots.tolist(), "values": x.tolist()}
    return out


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_complexity(cfg: dict, out: Path) -> int:
    rows = []
    for size in cfg["sizes"]:
        log.info("complexity: size %s", size)
        rows.append(complexity_row(cfg, size))
    keys = list(dict.fromkeys(k for r in rows for k in r))
    with open(out / "complexity.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)
    io.write_json(out / "complexity.json", rows)
    return EXIT_OK


def cmd_simulate(cfg: dict, out: Path) -> int:
    ex = cfg["experiment"]
    summary = []
    for size in cfg["sizes"]:
        ens = build_ensemble(cfg, size)
        C0 = _true_state(cfg, ens.N)
        mmap, bundle = build_inverse(cfg, ens)
        if cfg["inversion"]["save_matrices"]:
            io.save_bundle(out, f"bundle_N{ens.N}", bundle, mmap)
        data = run_experiment(C0, ens, ex["R"], ex["seed"])
        io.write_dataset(out / f"dataset_N{ens.N}.csv", data, {"config_scheme": cfg["scheme"]})
        io.write_matrix(out / f"state_N{ens.N}.gtm", C0)
        est = _estimates(cfg, ens, mmap, bundle, data, C0)
        est["N"] = ens.N
        io.write_json(out / f"estimates_N{ens.N}.json", est)
        summary.append({"N": ens.N, **{k: v.get("abs_error") for k, v in est["observables"].items()}})
    io.write_json(out / "summary.json", summary)
    return EXIT_OK


def cmd_estimate(cfg: dict, out: Path, dataset_path: str) -> int:
    data = io.read_dataset(dataset_path)
    ens_dict = data.meta.get("ensemble")
    if ens_dict is None:
        raise ConfigError("dataset header carries no ensemble description")
    ens = QuenchEnsemble.from_dict(ens_dict)
    if data.fingerprint and ens.fingerprint() != data.fingerprint:
        raise InvalidArgumentError("dataset header ensemble does not match its fingerprint")
    mmap, bundle = build_inverse(cfg, ens)
    est = _estimates(cfg, ens, mmap, bundle, data)
    est["N"] = ens.N
    io.write_json(out / "estimates.json", est)
    return EXIT_OK


def cmd_robustness(cfg: dict, out: Path) -> int:
    e, rb = cfg["ensemble"], cfg["robustness"]
    sc = SweepConfig(
        scheme="global" if cfg["scheme"] == "global" else "local",
        sizes=tuple(cfg["sizes"]), S=e["S"], t_max=e["t_max"], h_max=e["h_max"], theta_L=e["theta_L"],
        grid_points=e["grid_points"], ensemble_seed=e["seed"], delta=cfg["inversion"]["delta"],
        local_range=cfg["inversion"]["local_range"], w_floor=cfg["inversion"]["w_floor"],
        system_row=e["system_row"], h_grid=tuple(rb["h_grid"]), phi_grid=tuple(rb["phi_grid"]),
    )
    sweep = robustness_sweep(sc, rb["nu"], rb["trials"], cfg["experiment"]["seed"])
    with open(out / "robustness.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["N", "nu", "trial", "metric", "radius", "h", "phi"])
        w.writeheader()
        w.writerows(sweep.records)
    summary = {
        "scheme": sweep.scheme,
        "trials": sweep.trials,
        "max_metric": [{"N": N, "nu": nu, "metric": m} for (N, nu), m in sorted(sweep.maxima().items())],
        "best_per_nu": [{"N": N, "nu": nu, **v} for (N, nu), v in sorted(sweep.best.items())],
        "best_overall": [{"N": N, "h": v["h"], "phi": v["phi"],
                          "metrics": [{"nu": nu, "metric": m} for nu, m in v["metrics"].items()]}
                         for N, v in sorted(sweep.best_overall.items())],
    }
    io.write_json(out / "robustness.json", summary)
    return EXIT_OK


def cmd_fourpoint(cfg: dict, out: Path) -> int:
    from . import fock
    from .fourpoint import density_density_functional, element_functional, estimate_fourpoint, forward_map_4, run_fock_experiment

    ex = cfg["experiment"]
    results = []
    for size in cfg["sizes"]:
        e = cfg["ensemble"]
        ens = sample_local_ensemble(e["S"], e["t_max"], e["h_max"], e["theta_L"], e["grid_points"], e["seed"], chain(size))
        _, bundle4 = forward_map_4(ens, cfg["inversion"]["delta"])
        psi = fock.random_pure_state(size, ex["state_seed"])
        data = run_fock_experiment(psi, ens, ex["R"], ex["seed"])
        io.write_dataset(out / f"dataset_N{size}.csv", data)
        D = fock.four_point(psi)
        C = fock.two_point(psi)
        j, jp = 0, size - 1
        dd = estimate_fourpoint(data, bundle4, density_density_functional(size, j, jp))
        idx = (0, 1, 1, size - 1)
        gen = estimate_fourpoint(data, bundle4, element_functional(size, *idx))
        results.append({
            "N": size,
            "density_density": {**dd.to_dict(), "sites": [j, jp], "truth": float(np.real(D[j, j, jp, jp]))},
            "element": {**gen.to_dict(), "index": list(idx), "truth_re": D[idx].real, "truth_im": D[idx].imag},
            "two_point_trace": float(np.trace(C).real),
        })
    io.write_json(out / "fourpoint.json", results)
    return EXIT_OK


def cmd_rank_check(cfg: dict, out: Path) -> int:
    reports = []
    deficient = False
    for size in cfg["sizes"]:
        ens = build_ensemble(cfg, size)
        rep = rank_check(stack_forward(ens).F, 1e-10)
        reports.append({"size": size, **rep.summary()})
        deficient |= not rep.full_rank
    io.write_json(out / "rank.json", reports)
    if deficient:
        log.error("rank deficient: %s", [r for r in reports if r["deficiency"]])
        return EXIT_RANK
    return EXIT_OK


COMMANDS = {
    "complexity": cmd_complexity,
    "simulate": cmd_simulate,
    "robustness": cmd_robustness,
    "fourpoint": cmd_fourpoint,
    "rank-check": cmd_rank_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gausstomo", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="experiment seed override")
    parser.add_argument("--threads", type=int, default=1, help="worker pool size")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name)
    est = sub.add_parser("estimate", help="re-estimate from an existing dataset CSV")
    est.add_argument("dataset")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {}
    if args.seed is not None:
        overrides["experiment"] = {"seed": args.seed}
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg["threads"] = max(1, args.threads)
    out = Path(args.out or cfg.get("output_dir") or "out")
    out.mkdir(parents=True, exist_ok=True)
    resolved = dict(cfg, output_dir=str(out), command=args.command)
    io.write_json(out / "resolved_config.json", resolved)
    try:
        if args.command == "estimate":
            return cmd_estimate(cfg, out, args.dataset)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidArgumentError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RankDeficientError as exc:
        print(f"rank deficient: {exc}", file=sys.stderr)
        print(json.dumps({k: v for k, v in exc.report.items() if not isinstance(v, np.ndarray)}, default=str), file=sys.stderr)
        return EXIT_RANK
    except (NumericalError, ResourceError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
