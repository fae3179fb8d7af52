"""Command line front end.

One subcommand per layer (walk, bpsre, potential, stats, regime) plus
``experiment`` for campaigns.  Everything a run needs is pinned by argv
and the seed, so identical invocations write identical bytes; wall-clock
metadata goes to a separate timing file.  Exit codes: 0 success, 1 a
campaign verdict failed, 2 usage error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import secrets
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import branching, env as envm, experiments, potential, rng, stats, walk
from .errors import RwsreError, SpecValidationError

log = logging.getLogger("rwsre.cli")


@dataclass(frozen=True)
class CliConfig:
    """Parsed invocation; seed is always concrete (drawn and logged when
    the flag was omitted) so any run can be reproduced afterwards."""

    subcommand: str
    spec: str | None
    out: Path
    seed: int
    workers: int
    format: str
    options: dict = field(default_factory=dict)


@dataclass
class RunOutput:
    """What a subcommand produced: one JSON-able payload plus optional
    named sample arrays destined for CSV."""

    name: str
    seed: int
    payload: dict
    samples: dict = field(default_factory=dict)
    csv_columns: dict | None = None  # tabular override: {column: array}


# ===================================================================
# argument parsing
# ===================================================================


def _add_common(p: argparse.ArgumentParser, needs_spec: bool = True) -> None:
    if needs_spec:
        p.add_argument("--spec", help="environment spec: JSON file path or "
                       "inline JSON object")
    p.add_argument("--seed", type=int, default=None,
                   help="base seed (default: drawn at random and logged)")
    p.add_argument("--workers", type=int, default=1,
                   help="worker processes for replica-parallel stages")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default=None,
                   help="primary output format (default depends on the "
                   "subcommand)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rwsre",
        description="Simulation laboratory for walks whose drift lives on "
        "sparse marked sites, their dual branching chains, and the "
        "associated limit laws.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("walk", help="simulate one walk to a marked site")
    _add_common(p)
    p.add_argument("--target-blocks", type=int, default=100,
                   help="run until the walk first hits the end of this block")
    p.add_argument("--budget", type=int, default=walk.DEFAULT_STEP_BUDGET,
                   help="abort after this many steps")
    p.add_argument("--profile-points", type=int, default=None,
                   help="down-sample the local-time profile to this many "
                   "sites in the JSON output")

    p = sub.add_parser("bpsre", help="simulate the dual immigration chain")
    _add_common(p)
    p.add_argument("--target-blocks", type=int, default=50,
                   help="simulate through this many marked generations")
    p.add_argument("--epochs", type=int, default=None,
                   help="instead of one trace, sample this many complete "
                   "extinction epochs (pair maxima and epoch lengths)")
    p.add_argument("--record", choices=("marked", "full"), default="marked",
                   help="keep only marked generations or the full path")

    p = sub.add_parser("potential",
                       help="sample environment functionals of the drift "
                       "products")
    _add_common(p)
    p.add_argument("--replicas", type=int, default=1000,
                   help="independent environments to sample")
    p.add_argument("--kind", choices=("rbar", "mpsi", "minf"),
                   default="rbar",
                   help="rbar: perpetuity series; mpsi: adjacent-weight "
                   "maximum; minf: coupled single-block limit")
    p.add_argument("--tol", type=float, default=1e-12,
                   help="series truncation tolerance")
    p.add_argument("--bessel-steps", type=int, default=1 << 14,
                   help="Euler grid size for the Brownian reference "
                   "(minf only)")

    p = sub.add_parser("stats", help="estimators over sample CSV files")
    _add_common(p, needs_spec=False)
    p.add_argument("--input", required=True, help="sample CSV (long format "
                   "sample,index,value or one value per line)")
    p.add_argument("--estimator", required=True,
                   choices=("hill", "frechet", "ks2", "ecdf", "chi2"))
    p.add_argument("--sample", default=None,
                   help="sample set name inside a long-format CSV")
    p.add_argument("--sample-b", default=None,
                   help="second sample set for ks2 (same file or --input-b)")
    p.add_argument("--input-b", default=None,
                   help="second CSV for ks2 (defaults to --input)")
    p.add_argument("--k-top", type=int, default=None,
                   help="order statistics used by the hill estimator")
    p.add_argument("--law", default=None,
                   help="chi2 reference law: poisson:MEAN, geometric:P "
                   "(support 0,1,..) or geometric1:P (support 1,2,..)")

    p = sub.add_parser("experiment",
                       help="run a verification experiment or campaign")
    _add_common(p)
    p.add_argument("--config", default=None,
                   help="campaign config JSON (an object with an "
                   "'experiments' list)")
    p.add_argument("--id", dest="experiment_id", default=None,
                   choices=sorted(experiments._DEFAULT_GRIDS),
                   help="run a single experiment by id")
    p.add_argument("--replicas", type=int, default=1000)
    p.add_argument("--n", type=int, default=None,
                   help="single size parameter (block count) where the "
                   "experiment takes one")
    p.add_argument("--n-grid", default=None,
                   help="comma-separated size grid where the experiment "
                   "takes one")

    p = sub.add_parser("regime", help="classify an environment spec")
    _add_common(p)
    p.add_argument("--mc-replicas", type=int, default=None,
                   help="Monte Carlo fallback sample size for moment checks")

    return parser


_COMMON_KEYS = ("subcommand", "spec", "seed", "workers", "out", "format")


def parse_args(argv) -> CliConfig:
    """Parse argv into a CliConfig; unknown flags are hard errors."""
    parser = _build_parser()
    ns = parser.parse_args(argv)
    if ns.workers < 1:
        parser.error("--workers must be a positive integer")
    if getattr(ns, "replicas", 1) is not None and getattr(ns, "replicas", 1) < 1:
        parser.error("--replicas must be a positive integer")
    spec = getattr(ns, "spec", None)
    if ns.subcommand in ("walk", "bpsre", "potential", "regime") and not spec:
        parser.error(f"{ns.subcommand} requires --spec")
    if ns.subcommand == "experiment" and not ns.config and not ns.experiment_id:
        parser.error("experiment requires --config or --id")
    seed = ns.seed
    if seed is None:
        seed = secrets.randbits(32)
        log.info("no --seed given; drew %d (pass --seed %d to reproduce)",
                 seed, seed)
    fmt = ns.format or ("csv" if ns.subcommand in ("potential", "stats")
                        else "json")
    options = {k: v for k, v in vars(ns).items() if k not in _COMMON_KEYS}
    return CliConfig(subcommand=ns.subcommand, spec=spec, out=Path(ns.out),
                     seed=int(seed), workers=ns.workers, format=fmt,
                     options=options)


def _load_spec(text: str) -> envm.EnvSpec:
    """Accept either a JSON file path or an inline JSON object."""
    stripped = text.strip()
    if stripped.startswith("{"):
        return envm.EnvSpec.from_json(stripped)
    path = Path(text)
    if not path.exists():
        raise SpecValidationError(f"spec file not found: {text}")
    return envm.EnvSpec.from_json(path.read_text())


# ===================================================================
# emission
# ===================================================================


def _format_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_results(result: RunOutput, fmt: str, out_dir) -> list:
    """Write the run's files and return their paths.

    The payload goes to {name}-{seed}.json with sorted keys; sample
    arrays go to {name}-{seed}-samples.csv in long format (or into the
    JSON when the primary format is json and the payload has no
    tabular override).  Rerunning the same result writes identical
    bytes.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RwsreError(f"cannot create output directory {out}: {exc}")
    stem = f"{result.name}-{result.seed}"
    written = []

    payload = dict(result.payload)
    if fmt == "json" and result.samples and result.csv_columns is None:
        payload["samples"] = {k: experiments._jsonify(np.asarray(v).tolist())
                              for k, v in sorted(result.samples.items())}
    write_csv = (fmt == "csv" and (result.samples or result.csv_columns
                                   is not None))
    if write_csv:
        csv_path = out / f"{stem}-samples.csv"
        payload["samples"] = {"file": csv_path.name}
        try:
            if result.csv_columns is not None:
                cols = list(result.csv_columns)
                lines = ["# columns: " + ",".join(cols)]
                arrays = [np.asarray(result.csv_columns[c]).tolist()
                          for c in cols]
                for row in zip(*arrays):
                    lines.append(",".join(_format_cell(v) for v in row))
            else:
                lines = ["# columns: sample,index,value"]
                for name in sorted(result.samples):
                    arr = np.asarray(result.samples[name]).tolist()
                    lines.extend(f"{name},{i},{_format_cell(v)}"
                                 for i, v in enumerate(arr))
            csv_path.write_text("\n".join(lines) + "\n")
        except OSError as exc:
            raise RwsreError(f"cannot write {csv_path}: {exc}")
        written.append(csv_path)

    json_path = out / f"{stem}.json"
    try:
        json_path.write_text(json.dumps(experiments._jsonify(payload),
                                        sort_keys=True, indent=2) + "\n")
    except OSError as exc:
        raise RwsreError(f"cannot write {json_path}: {exc}")
    written.append(json_path)
    return written


# ===================================================================
# subcommands
# ===================================================================


def _cmd_walk(cfg: CliConfig) -> int:
    spec = _load_spec(cfg.spec)
    opt = cfg.options
    n_blocks = opt["target_blocks"]
    if n_blocks < 1:
        raise SpecValidationError("--target-blocks must be positive")
    environment = envm.sample_environment(
        spec, int(rng.derive_key(cfg.seed, rng.GENERIC)), n_blocks)
    target = environment.S(n_blocks)
    outcome = walk.run_walk_to(environment, target,
                               int(rng.derive_key(cfg.seed, rng.WALK)),
                               step_budget=opt["budget"])
    payload = outcome.to_json_dict(profile_points=opt["profile_points"])
    payload.update({"seed": cfg.seed, "spec": spec.to_json_dict(),
                    "target_blocks": n_blocks})
    emit_results(RunOutput("walk", cfg.seed, payload), cfg.format, cfg.out)
    return 0


def _cmd_bpsre(cfg: CliConfig) -> int:
    spec = _load_spec(cfg.spec)
    opt = cfg.options
    if opt["epochs"] is not None:
        if opt["epochs"] < 1:
            raise SpecValidationError("--epochs must be positive")
        sample = branching.epoch_pair_maxima(spec, opt["epochs"], cfg.seed)
        payload = {"seed": cfg.seed, "spec": spec.to_json_dict(),
                   "epochs": opt["epochs"],
                   "mean_epoch_blocks": float(sample.taus.mean()),
                   "max_pair": int(sample.maxima.max())}
        out = RunOutput("bpsre-epochs", cfg.seed, payload,
                        samples={"epoch_max": sample.maxima,
                                 "epoch_blocks": sample.taus})
    else:
        n_blocks = opt["target_blocks"]
        if n_blocks < 1:
            raise SpecValidationError("--target-blocks must be positive")
        environment = envm.sample_environment(
            spec, int(rng.derive_key(cfg.seed, rng.GENERIC)), n_blocks + 1)
        trace = branching.run_bpsre(
            environment, n_blocks, int(rng.derive_key(cfg.seed, rng.BRANCH)),
            record=opt["record"])
        payload = trace.to_json_dict()
        payload.update({"seed": cfg.seed, "spec": spec.to_json_dict()})
        out = RunOutput("bpsre", cfg.seed, payload)
    emit_results(out, cfg.format, cfg.out)
    return 0


def _cmd_potential(cfg: CliConfig) -> int:
    spec = _load_spec(cfg.spec)
    opt = cfg.options
    n = opt["replicas"]
    kind = opt["kind"]
    if kind == "minf":
        table = potential.sample_m_infinity(spec, cfg.seed, n,
                                            bessel_steps=opt["bessel_steps"],
                                            tol=opt["tol"])
        samples = {"coupled_limit": table.m_inf,
                   "path_max": table.m_b,
                   "path_end": table.b1,
                   "weight_max": table.m_psi}
        summary = {"mean_coupled_limit": float(table.m_inf.mean())}
    else:
        table = (potential.sample_rbar if kind == "rbar"
                 else potential.sample_m_psi)(spec, cfg.seed, n,
                                              tol=opt["tol"])
        values = table.rbar if kind == "rbar" else table.m_psi
        samples = {("series_sum" if kind == "rbar" else "weight_max"): values}
        summary = {"mean": float(values.mean()),
                   "max_residual_bound": float(table.residual_bound.max()),
                   "max_terms_used": int(table.terms_used.max())}
    payload = {"seed": cfg.seed, "spec": spec.to_json_dict(),
               "kind": kind, "replicas": n}
    payload.update(summary)
    emit_results(RunOutput(f"potential-{kind}", cfg.seed, payload,
                           samples=samples), cfg.format, cfg.out)
    return 0


def _read_samples_csv(path: str) -> dict:
    """Read either the long format (sample,index,value) or a bare column
    of numbers; returns {set_name: float array}."""
    p = Path(path)
    if not p.exists():
        raise SpecValidationError(f"input file not found: {path}")
    sets: dict[str, list] = {}
    plain: list[float] = []
    for line in p.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) == 3 and not _is_number(parts[0]):
            sets.setdefault(parts[0], []).append(float(parts[2]))
        elif len(parts) == 1 and _is_number(parts[0]):
            plain.append(float(parts[0]))
        elif _is_number(parts[0]):
            # tabular export: keep the first column
            plain.append(float(parts[0]))
        else:
            raise SpecValidationError(
                f"unrecognized sample row in {path}: {line[:60]!r}")
    if plain and sets:
        raise SpecValidationError(
            f"{path} mixes long-format and bare rows")
    if plain:
        return {"values": np.asarray(plain, dtype=np.float64)}
    return {k: np.asarray(v, dtype=np.float64) for k, v in sets.items()}


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def _pick_sample(sets: dict, name: str | None, path: str) -> np.ndarray:
    if name is not None:
        if name not in sets:
            raise SpecValidationError(
                f"sample set {name!r} not in {path}; available: "
                + ", ".join(sorted(sets)))
        return sets[name]
    if len(sets) != 1:
        raise SpecValidationError(
            f"{path} holds {len(sets)} sample sets; pick one with --sample "
            "(available: " + ", ".join(sorted(sets)) + ")")
    return next(iter(sets.values()))


def _parse_law(text: str):
    """Reference pmf for the chi2 estimator, e.g. poisson:2.0."""
    if text is None:
        raise SpecValidationError("chi2 needs --law (e.g. poisson:2.0)")
    name, _, arg = text.partition(":")
    if not arg:
        raise SpecValidationError(f"law needs a parameter: {text!r}")
    value = float(arg)
    if name == "poisson":
        from scipy.stats import poisson as _poisson
        if value <= 0:
            raise SpecValidationError("poisson mean must be positive")
        return lambda k: float(_poisson.pmf(k, value))
    if name in ("geometric", "geometric1"):
        if not 0 < value < 1:
            raise SpecValidationError("geometric p must lie in (0, 1)")
        lo = 1 if name == "geometric1" else 0
        return lambda k: value * (1 - value) ** (k - lo) if k >= lo else 0.0
    raise SpecValidationError(
        f"unknown law {name!r}; expected poisson, geometric or geometric1")


def _cmd_stats(cfg: CliConfig) -> int:
    opt = cfg.options
    sets = _read_samples_csv(opt["input"])
    estimator = opt["estimator"]
    payload = {"estimator": estimator, "input": opt["input"],
               "seed": cfg.seed}
    csv_columns = None
    samples = {}

    if estimator == "ks2":
        a = _pick_sample(sets, opt["sample"], opt["input"])
        b_path = opt["input_b"] or opt["input"]
        b_sets = sets if b_path == opt["input"] else _read_samples_csv(b_path)
        b_name = opt["sample_b"]
        if b_name is None and b_path == opt["input"] and opt["sample"] is None:
            raise SpecValidationError(
                "ks2 within one file needs --sample and --sample-b")
        b = _pick_sample(b_sets, b_name, b_path)
        d, p = stats.ks_two_sample(a, b)
        payload.update({"distance": d, "p_value": p,
                        "n_a": int(a.size), "n_b": int(b.size)})
    else:
        sample = _pick_sample(sets, opt["sample"], opt["input"])
        if estimator == "hill":
            est = stats.hill_estimator(sample, k_top=opt["k_top"])
            payload.update(est.to_json_dict())
        elif estimator == "frechet":
            fit = stats.fit_frechet(sample)
            payload.update(fit.to_json_dict())
        elif estimator == "chi2":
            pmf = _parse_law(opt["law"])
            ints = sample.astype(np.int64)
            if not np.array_equal(ints, sample):
                raise SpecValidationError(
                    "chi2 needs integer-valued samples")
            stat, dof, p = stats.chi2_discrete(ints, pmf)
            payload.update({"statistic": stat, "dof": dof, "p_value": p,
                            "law": opt["law"]})
        else:  # ecdf table with a fitted overlay, ready to plot
            xs, cdf = stats.ecdf(sample)
            fit = stats.fit_frechet(sample) if np.all(sample > 0) else None
            overlay = (fit.cdf(xs) if fit is not None
                       else np.full(xs.size, np.nan))
            csv_columns = {"x": xs, "ecdf": cdf, "frechet_fit": overlay}
            payload.update({"n": int(sample.size),
                            "frechet_overlay": (fit.to_json_dict()
                                                if fit is not None else None)})
            samples = {"ecdf": cdf}
    emit_results(RunOutput(f"stats-{estimator}", cfg.seed, payload,
                           samples=samples, csv_columns=csv_columns),
                 cfg.format, cfg.out)
    return 0


def _cmd_experiment(cfg: CliConfig) -> int:
    opt = cfg.options
    if opt["config"]:
        _, exit_code = experiments.run_campaign(opt["config"], cfg.out,
                                                workers=cfg.workers)
        return exit_code
    exp_id = opt["experiment_id"]
    mc = experiments.McConfig(replicas=opt["replicas"], base_seed=cfg.seed,
                              workers=cfg.workers)
    spec = _load_spec(cfg.spec) if cfg.spec else None
    params = {}
    if opt["n_grid"] is not None:
        grid = tuple(int(v) for v in opt["n_grid"].split(","))
        key = ("block_grid" if exp_id == "one-block" else "n_grid")
        params[key] = grid
    if opt["n"] is not None:
        if exp_id in ("duality", "large-blocks"):
            params["n_blocks"] = opt["n"]
        else:
            key = ("block_grid" if exp_id == "one-block" else "n_grid")
            params.setdefault(key, (opt["n"],))
    result = experiments.run_experiment(exp_id, mc, spec=spec, params=params)
    experiments.write_result_files(result, cfg.out, exp_id, cfg.seed)
    for v in result.verdicts:
        log.info("%s: %s (observed %s, threshold %s)", v.name, v.status,
                 v.observed, v.threshold)
    return 1 if result.failed else 0


def _cmd_regime(cfg: CliConfig) -> int:
    spec = _load_spec(cfg.spec)
    mc = cfg.options["mc_replicas"]
    report = envm.analyze_regime(spec, mc=mc)
    payload = report.to_json_dict()
    payload.update({"seed": cfg.seed, "spec": spec.to_json_dict()})
    emit_results(RunOutput("regime", cfg.seed, payload), cfg.format, cfg.out)
    return 0


_DISPATCH = {
    "walk": _cmd_walk,
    "bpsre": _cmd_bpsre,
    "potential": _cmd_potential,
    "stats": _cmd_stats,
    "experiment": _cmd_experiment,
    "regime": _cmd_regime,
}


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("RWSRE_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    cfg = parse_args(sys.argv[1:] if argv is None else argv)
    try:
        return _DISPATCH[cfg.subcommand](cfg)
    except RwsreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
