"""Command-line front end.

Subcommands: chain, minimize, potts, gibbs, weights, simulate, verify.
Every run resolves its configuration (flags override an optional JSON
config file), writes it to ``manifest.json`` together with the package
version, and emits CSV/JSON artifacts; identical manifests produce
byte-identical data files.  Numeric CSV files carry column headers and the
seed in comment lines, with values at 17 significant digits.

Exit codes: 0 success, 1 compute failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import gibbs, markov, meanfield, metastate, potts
from . import verify as verify_mod
from .errors import ConfigError, MetastatesError

VERSION = "0.1.0"


# ---------------------------------------------------------------------------
# output helpers

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _write_csv(path: Path, header, rows, seed=None, comments=()):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\r\n")
        if seed is not None:
            fh.write(f"# seed: {seed}\r\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _write_json(path: Path, record):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(outdir: Path, subcommand: str, options: dict):
    _write_json(outdir / "manifest.json",
                {"subcommand": subcommand, "options": options, "version": VERSION})


def _outdir(args, subcommand: str) -> Path:
    out = Path(args.outdir if args.outdir else f"out-{subcommand}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _matrix_csv_rows(matrix: np.ndarray):
    return [list(row) for row in np.asarray(matrix)]


# ---------------------------------------------------------------------------
# configuration

def _load_config(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


def _opt(args, config: dict, key: str, default):
    """Flags override the config file, which overrides built-in defaults."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    return config.get(key.replace("_", "-"), config.get(key, default))


def _resolve_chain(spec: str | None, path: str | None) -> markov.TransitionMatrix:
    if (spec is None) == (path is None):
        raise ConfigError("give exactly one of --preset or --matrix")
    if path is not None:
        try:
            return markov.load_transition_matrix(path)
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load transition matrix: {exc}") from exc
    name, _, rest = spec.partition(":")
    try:
        if name == "degenerate":
            return markov.degenerate_chain(float(rest))
        if name == "iid":
            if rest in ("", "uniform"):
                return markov.iid_chain(np.full(3, 1.0 / 3.0))
            return markov.iid_chain([float(x) for x in rest.split(",")])
        if name == "doubly":
            return markov.doubly_stochastic_chain(*(float(x) for x in rest.split(",")))
    except (ValueError, TypeError, MetastatesError) as exc:
        raise ConfigError(f"bad preset {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown preset {name!r} (degenerate:p, iid:uniform, doubly:a,b,c,d)")


def load_model(source) -> meanfield.ModelSpec:
    """Model from a JSON file or dict: a named energy family plus parameters.

    Families: "potts-quadratic" (beta, field, q) and "zero" (explicit
    alphas).  User-defined energy expressions are not supported.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            source = json.load(fh)
    family = source.get("family")
    if family == "potts-quadratic":
        params = potts.PottsParams(beta=float(source["beta"]),
                                   field=float(source["field"]),
                                   q=int(source.get("q", 3)))
        return potts.potts_model(params)
    if family == "zero":
        return meanfield.zero_energy_model(np.asarray(source["alphas"], dtype=float))
    raise ConfigError(f"unknown model family {family!r}")


def _model_from_args(args, config) -> tuple[meanfield.ModelSpec, dict]:
    if getattr(args, "model_file", None):
        model = load_model(args.model_file)
        return model, {"model-file": args.model_file, **model.params}
    beta = float(_opt(args, config, "beta", 1.0))
    b_field = float(_opt(args, config, "field", 0.0))
    q = int(_opt(args, config, "q", 3))
    params = potts.PottsParams(beta=beta, field=b_field, q=q)
    return potts.potts_model(params), {"beta": beta, "field": b_field, "q": q}


# ---------------------------------------------------------------------------
# subcommands

def _cmd_chain(args) -> int:
    config = _load_config(args)
    chain = _resolve_chain(_opt(args, config, "preset", None), _opt(args, config, "matrix", None))
    n = _opt(args, config, "n", None)
    outdir = _outdir(args, "chain")
    pi = markov.stationary(chain)
    cov = markov.covariance_limit(chain, pi)
    rank, null = markov.tangent_rank(cov)
    spectral = markov.spectral_info(chain)
    record = {
        "states": list(chain.states),
        "rows": chain.rows.tolist(),
        "positivity_power": chain.positivity_power,
        "stationary": pi.tolist(),
        "subdominant_modulus": spectral.modulus,
        "subdominant_multiplicity": spectral.multiplicity,
        "tangent_rank": rank,
        "null_directions": null.tolist(),
    }
    _write_json(outdir / "chain.json", record)
    _write_csv(outdir / "covariance_limit.csv", chain.states,
               _matrix_csv_rows(cov.matrix), comments=["limiting occupation-time covariance"])
    if n is not None:
        fin = markov.covariance_finite(chain, pi, int(n))
        _write_csv(outdir / f"covariance_finite_{int(n)}.csv", chain.states,
                   _matrix_csv_rows(fin.matrix),
                   comments=[f"occupation-time covariance at n = {int(n)}"])
    _write_manifest(outdir, "chain", {
        "preset": _opt(args, config, "preset", None),
        "matrix": _opt(args, config, "matrix", None), "n": n})
    print(f"chain: stationary {np.round(pi, 6).tolist()}, ergodic power {chain.positivity_power}, "
          f"tangent rank {rank}")
    return 0


def _cmd_minimize(args) -> int:
    config = _load_config(args)
    model, model_opts = _model_from_args(args, config)
    grid = int(_opt(args, config, "grid", 11))
    outdir = _outdir(args, "minimize")
    preset = _opt(args, config, "preset", None)
    matrix = _opt(args, config, "matrix", None)
    if preset or matrix:
        pi = markov.stationary(_resolve_chain(preset, matrix))
    else:
        pi = np.full(model.field_size, 1.0 / model.field_size)
    records = meanfield.find_minimizers(model, pi, grid_resolution=grid)
    rows, payload = [], []
    for rec in records:
        rows.append([rec.value, int(rec.is_global), int(bool(rec.hessian_pd)),
                     *rec.total, *(rec.stability if rec.stability is not None
                                   else [float("nan")] * model.field_size)])
        payload.append({
            "value": rec.value, "is_global": rec.is_global, "boundary": rec.boundary,
            "hessian_pd": rec.hessian_pd, "hessian_min_eig": rec.hessian_min_eig,
            "total": rec.total.tolist(), "profile": rec.profile.tolist(),
            "stability": None if rec.stability is None else rec.stability.tolist(),
        })
    header = ["free_energy", "is_global", "hessian_pd"] \
        + [f"total_{a+1}" for a in range(model.spin_size)] \
        + [f"stability_{b+1}" for b in range(model.field_size)]
    _write_csv(outdir / "minimizers.csv", header, rows)
    _write_json(outdir / "minimizers.json", payload)
    _write_manifest(outdir, "minimize",
                    {**model_opts, "grid": grid, "preset": preset, "matrix": matrix})
    print(f"minimize: {len(records)} critical points, "
          f"{sum(r.is_global for r in records)} global")
    return 0


def _cmd_potts(args) -> int:
    config = _load_config(args)
    q = int(_opt(args, config, "q", 3))
    betas = _parse_grid(_opt(args, config, "betas", "2.0:4.0:9"))
    fields = _parse_grid(_opt(args, config, "fields", "0.0:1.0:5"))
    outdir = _outdir(args, "potts")
    rows = []
    for entry in potts.phase_scan(betas, fields, q=q):
        rows.append([entry["beta"], entry["field"], len(entry["roots"]),
                     entry["u_star"], entry.get("p", float("nan")),
                     ";".join(_fmt(u) for u in entry["roots"]),
                     ";".join(_fmt(v) for v in entry["free_energies"])])
    _write_csv(outdir / "phase_scan.csv",
               ["beta", "field", "n_roots", "u_star", "p", "roots", "free_energies"], rows)
    manifest = {"q": q, "betas": list(betas), "fields": list(fields)}
    curve_beta = _opt(args, config, "coexistence_betas", None)
    if curve_beta:
        curve_rows = []
        for beta in _parse_grid(curve_beta):
            lo = float(_opt(args, config, "window_lo", 0.0))
            hi = float(_opt(args, config, "window_hi", 5.0))
            point = potts.coexistence(float(beta), q, (lo, hi))
            curve_rows.append([point.beta, point.field, point.u])
        _write_csv(outdir / "coexistence.csv", ["beta", "field_star", "u_star"], curve_rows)
        manifest["coexistence-betas"] = curve_beta
    _write_manifest(outdir, "potts", manifest)
    print(f"potts: scanned {len(rows)} grid points")
    return 0


def _parse_grid(spec) -> list[float]:
    if isinstance(spec, (list, tuple)):
        return [float(x) for x in spec]
    text = str(spec)
    if ":" in text:
        lo, hi, steps = text.split(":")
        return np.linspace(float(lo), float(hi), int(steps)).tolist()
    return [float(x) for x in text.split(",")]


def _cmd_gibbs(args) -> int:
    config = _load_config(args)
    model, model_opts = _model_from_args(args, config)
    outdir = _outdir(args, "gibbs")
    seed = _opt(args, config, "seed", None)
    eta_file = _opt(args, config, "eta_file", None)
    if eta_file:
        labels = [line.strip() for line in Path(eta_file).read_text().splitlines() if line.strip()]
        eta = np.array([int(s) - 1 for s in labels], dtype=np.int64)
        source = {"eta-file": eta_file}
    else:
        chain = _resolve_chain(_opt(args, config, "preset", None),
                               _opt(args, config, "matrix", None))
        n = int(_opt(args, config, "n", 60))
        start = _parse_start(_opt(args, config, "start", "stationary"))
        seed = int(seed if seed is not None else 0)
        eta = markov.sample_path(chain, start, n, seed).states
        source = {"preset": _opt(args, config, "preset", None), "n": n,
                  "start": str(start), "seed": seed}
    if np.any(eta < 0) or np.any(eta >= model.field_size):
        raise ConfigError("disorder symbols out of range for the model")
    dist = gibbs.count_distribution(model, eta)
    vectors, probs = dist.support()
    rows = sorted([*k, p] for k, p in zip(vectors.tolist(), probs.tolist()))
    _write_csv(outdir / "count_distribution.csv",
               [f"K{a+1}" for a in range(model.spin_size)] + ["probability"],
               rows, seed=seed, comments=[f"log_Z = {_fmt(dist.log_z)}"])
    _write_json(outdir / "gibbs.json", {
        "n": dist.n, "log_z": dist.log_z,
        "type_counts": np.bincount(eta, minlength=model.field_size).tolist()})
    _write_manifest(outdir, "gibbs", {**model_opts, **source})
    print(f"gibbs: n = {dist.n}, log Z = {dist.log_z:.6f}, "
          f"{len(rows)} count vectors with positive probability")
    return 0


def _parse_start(text) -> int | str:
    if text == "stationary":
        return "stationary"
    return int(text) - 1


def _degenerate_parameter(chain: markov.TransitionMatrix) -> float:
    """Extract p from a matrix of the deterministic-transition form."""
    rows = chain.rows
    p = rows[1, 0]
    expect = np.array([[0.0, 1.0, 0.0], [p, 0.0, 1.0 - p], [1.0 - p, 0.0, p]])
    if rows.shape != (3, 3) or np.max(np.abs(rows - expect)) > 1e-12:
        raise ConfigError("simulate requires the degenerate-chain transition structure")
    return float(p)


def _cmd_weights(args) -> int:
    config = _load_config(args)
    model, model_opts = _model_from_args(args, config)
    chain = _resolve_chain(_opt(args, config, "preset", None), _opt(args, config, "matrix", None))
    samples = int(_opt(args, config, "samples", 1_000_000))
    margin = float(_opt(args, config, "margin", 0.0))
    seed = int(_opt(args, config, "seed", 0))
    outdir = _outdir(args, "weights")
    pi = markov.stationary(chain)
    records = [r for r in meanfield.find_minimizers(model, pi) if r.is_global]
    stability = np.asarray([r.stability for r in records])
    cov = markov.covariance_limit(chain, pi)
    est = metastate.gaussian_weights(cov, stability, samples=samples, margin=margin, seed=seed)
    _write_csv(outdir / "weights.csv", ["state", "weight", "stderr"],
               [[j + 1, est.weights[j], est.stderr[j]] for j in range(len(records))],
               seed=seed, comments=[f"undecided mass: {_fmt(est.undecided)}"])
    _write_json(outdir / "weights.json", {
        "weights": est.weights.tolist(), "stderr": est.stderr.tolist(),
        "undecided": est.undecided, "samples": samples, "margin": margin,
        "totals": [r.total.tolist() for r in records]})
    _write_manifest(outdir, "weights", {
        **model_opts, "preset": _opt(args, config, "preset", None),
        "matrix": _opt(args, config, "matrix", None),
        "samples": samples, "margin": margin, "seed": seed})
    print(f"weights: {np.round(est.weights, 4).tolist()} undecided {est.undecided:.4f}")
    return 0


def _cmd_simulate(args) -> int:
    config = _load_config(args)
    beta = float(_opt(args, config, "beta", 8.0))
    b_field = float(_opt(args, config, "field", 3.963363))
    params = potts.PottsParams(beta=beta, field=b_field, q=3)
    start = _parse_start(_opt(args, config, "start", "stationary"))
    n = int(_opt(args, config, "n", 10_000))
    replicas = int(_opt(args, config, "replicas", 10_000))
    estimator = _opt(args, config, "estimator", "structural")
    epsilon = _opt(args, config, "epsilon", None)
    epsilon = float(epsilon) if epsilon is not None else None
    seed = int(_opt(args, config, "seed", 0))
    chain_p = float(_opt(args, config, "chain_p", 0.5))
    matrix_path = _opt(args, config, "matrix", None)
    if matrix_path is not None:
        chain_p = _degenerate_parameter(markov.load_transition_matrix(matrix_path))
    outdir = _outdir(args, "simulate")

    if start == "stationary":
        chain = markov.degenerate_chain(chain_p)
        pi = markov.stationary(chain)
        per_start = [metastate.degenerate_potts_kappa(
            params, s, n=n, replicas=replicas, epsilon=epsilon,
            seed=seed + s, estimator=estimator, chain_p=chain_p) for s in range(3)]
        est = metastate.combine_kappa(per_start, pi)
    else:
        est = metastate.degenerate_potts_kappa(
            params, start, n=n, replicas=replicas, epsilon=epsilon,
            seed=seed, estimator=estimator, chain_p=chain_p)

    _write_json(outdir / "estimate.json", {
        "atoms": [{"coefficients": a.coefficients.tolist(), "weight": a.weight,
                   "stderr": a.stderr} for a in est.atoms],
        "undecided": est.undecided, "provenance": est.provenance,
        "flags": list(est.flags)})
    _write_csv(outdir / "atoms.csv",
               ["weight", "stderr", "coeff_1", "coeff_2", "coeff_3"],
               [[a.weight, a.stderr if a.stderr is not None else float("nan"),
                 *a.coefficients] for a in est.atoms],
               seed=seed)
    _write_manifest(outdir, "simulate", {
        "beta": beta, "field": b_field, "start": str(_opt(args, config, "start", "stationary")),
        "n": n, "replicas": replicas, "estimator": estimator,
        "epsilon": epsilon, "seed": seed, "chain-p": chain_p})
    atoms_text = ", ".join(
        f"{a.weight:.3f} on {np.round(a.coefficients, 3).tolist()}" for a in est.atoms)
    print(f"simulate [{estimator}]: {atoms_text}")
    return 0


def _cmd_verify(args) -> int:
    suite = args.suite or "all"
    quick = bool(args.quick)
    results = verify_mod.run_suite(suite, quick=quick)
    outdir = _outdir(args, "verify") if args.outdir else None
    failed = 0
    lines = []
    for res in results:
        line = f"[{res.status}] {res.suite}: {res.name}" + (f" -- {res.detail}" if res.detail else "")
        lines.append(line)
        print(line)
        if res.passed is False:
            failed += 1
    if outdir is not None:
        _write_json(outdir / "verify.json", {
            "suite": suite, "quick": quick,
            "results": [{"suite": r.suite, "name": r.name, "status": r.status,
                         "detail": r.detail} for r in results]})
        _write_manifest(outdir, "verify", {"suite": suite, "quick": quick})
    print(f"verify: {len(results) - failed} passed / {failed} failed")
    return 0 if failed == 0 else 1


# ---------------------------------------------------------------------------
# parser

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metastates",
        description="Metastates of mean-field spin models with Markov-chain random fields")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--outdir", help="output directory (default out-<subcommand>)")
        p.add_argument("--config", help="JSON file of options; flags take precedence")

    p = sub.add_parser("chain", help="stationary law, spectral data, covariance of a chain")
    p.add_argument("--preset", help="degenerate:p | iid:uniform | doubly:a,b,c,d")
    p.add_argument("--matrix", help="JSON file with states and rows")
    p.add_argument("--n", type=int, help="also emit the finite-n covariance")
    common(p)

    p = sub.add_parser("minimize", help="free-energy minimizers of a model")
    p.add_argument("--beta", type=float)
    p.add_argument("--field", type=float)
    p.add_argument("--q", type=int)
    p.add_argument("--grid", type=int, help="grid points per simplex edge")
    p.add_argument("--model-file", help="JSON model (family + parameters)")
    p.add_argument("--preset", help="field frequencies from this chain's stationary law")
    p.add_argument("--matrix")
    common(p)

    p = sub.add_parser("potts", help="phase scan and coexistence curve")
    p.add_argument("--betas", help="lo:hi:steps or comma list")
    p.add_argument("--fields", help="lo:hi:steps or comma list")
    p.add_argument("--q", type=int)
    p.add_argument("--coexistence-betas", dest="coexistence_betas",
                   help="emit B*(beta) on this beta grid")
    p.add_argument("--window-lo", dest="window_lo", type=float)
    p.add_argument("--window-hi", dest="window_hi", type=float)
    common(p)

    p = sub.add_parser("gibbs", help="exact count-vector law for a disorder string")
    p.add_argument("--eta-file", dest="eta_file", help="one 1-based symbol per line")
    p.add_argument("--preset", help="sample the string from this chain preset")
    p.add_argument("--matrix")
    p.add_argument("--start", help="1-based start state or 'stationary'")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--field", type=float)
    p.add_argument("--q", type=int)
    p.add_argument("--model-file", help="JSON model (family + parameters)")
    common(p)

    p = sub.add_parser("weights", help="Gaussian stability-region weights")
    p.add_argument("--preset")
    p.add_argument("--matrix")
    p.add_argument("--beta", type=float)
    p.add_argument("--field", type=float)
    p.add_argument("--q", type=int)
    p.add_argument("--model-file")
    p.add_argument("--samples", type=int)
    p.add_argument("--margin", type=float)
    p.add_argument("--seed", type=int)
    common(p)

    p = sub.add_parser("simulate", help="metastate estimate for the degenerate-chain Potts model")
    p.add_argument("--model", choices=["potts"], default="potts")
    p.add_argument("--beta", type=float)
    p.add_argument("--field", type=float)
    p.add_argument("--chain", dest="matrix", help="JSON chain (must be the degenerate preset)")
    p.add_argument("--chain-p", dest="chain_p", type=float,
                   help="parameter p of the degenerate chain")
    p.add_argument("--start", help="1 | 2 | 3 | stationary")
    p.add_argument("--n", type=int)
    p.add_argument("--replicas", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--estimator", choices=["structural", "direct"])
    p.add_argument("--seed", type=int)
    common(p)

    p = sub.add_parser("verify", help="run verification suites")
    p.add_argument("--suite", choices=list(verify_mod.SUITES))
    p.add_argument("--quick", action="store_true", help="reduced volumes and replica counts")
    common(p)

    return parser


_DISPATCH = {
    "chain": _cmd_chain,
    "minimize": _cmd_minimize,
    "potts": _cmd_potts,
    "gibbs": _cmd_gibbs,
    "weights": _cmd_weights,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _DISPATCH[args.subcommand](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except MetastatesError as exc:
        print(f"compute error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
