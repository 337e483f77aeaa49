"""Config-driven batch pipeline.

Subcommands: validate, simulate, fit, diagnose, attribute, chi,
interpolate. Each reads a YAML config (see README for the schema), writes
under a run directory, and exits nonzero with a stage-tagged message on
failure. meta.json in the run directory records the config hash, seeds,
and package versions; re-running with the same outputs present requires
--overwrite.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np
import pandas as pd
import yaml

from . import attribution as attr
from . import diagnostics as diag
from . import synthgen
from .basis import build_basis
from .data_model import (
    SPATIAL_COVARIATE_NAMES,
    DataValidationError,
    load_covariates,
    load_dataset,
    save_covariates,
    save_dataset,
    standardize_covariates,
)
from .inference import (
    COEF_NAMES,
    McmcConfig,
    ModelSpec,
    PosteriorArchive,
    run_chain,
)

SCHEMA_VERSION = 1


class StageError(RuntimeError):
    def __init__(self, stage, msg):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage


def _load_config(path):
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except Exception as e:
        raise StageError("config", f"cannot read {path}: {e}")
    if not isinstance(cfg, dict):
        raise StageError("config", "config must be a mapping")
    variant = cfg.get("model", {}).get("variant", "M4")
    if variant not in ("M1", "M2", "M3", "M4"):
        raise StageError("config", f"unknown variant {variant!r}")
    return cfg


def _config_hash(cfg) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _versions():
    import numba
    import scipy

    from . import _kernels
    return {"numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__,
            "kernel_path": "numba" if _kernels.USING_NUMBA else "numpy"}


def _prepare_out(outdir, overwrite, stage):
    if os.path.exists(outdir) and os.listdir(outdir) and not overwrite:
        raise StageError(stage, f"{outdir} exists and is not empty; "
                         "pass --overwrite to reuse it")
    os.makedirs(outdir, exist_ok=True)


def _write_meta(outdir, cfg, extra=None):
    meta = {"config_hash": _config_hash(cfg), "schema_version": SCHEMA_VERSION,
            "versions": _versions(), "complete": True}
    meta.update(extra or {})
    with open(os.path.join(outdir, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, default=str)


def _load_inputs(cfg, stage):
    data = cfg.get("data")
    if not data:
        raise StageError(stage, "config lacks a data: section")
    try:
        ds = load_dataset(data["maxima"], data["stations"],
                          relax_min_years=data.get("relax_min_years", False))
        extra = cfg.get("attribution", {})
        extra_years = [y for y in (extra.get("event_year"),
                                   extra.get("baseline_year")) if y]
        cov = load_covariates(data["covariates"], ds,
                              extra_years=extra_years)
    except (KeyError, OSError) as e:
        raise StageError(stage, f"missing input: {e}")
    except DataValidationError as e:
        raise StageError(stage, str(e))
    scaling = None
    if data.get("standardize", True):
        cov, scaling = standardize_covariates(cov)
    return ds, cov, scaling


def _model_spec(cfg, args):
    m = cfg.get("model", {})
    variant = args.variant or m.get("variant", "M4")
    return ModelSpec(variant=variant, n_splines=m.get("n_splines", 99),
                     basis_seed=m.get("basis_seed", 0))


def _mcmc_config(cfg, seed):
    m = cfg.get("mcmc", {})
    return McmcConfig(n_iter=m.get("n_iter", 2000),
                      n_burn=m.get("n_burn", 500),
                      thin=m.get("thin", 1),
                      n_blocks=m.get("n_blocks", 10),
                      adapt_interval=m.get("adapt_interval", 10),
                      seed=seed)


# -- subcommands --------------------------------------------------------------

def cmd_validate(cfg, args):
    ds, cov, _ = _load_inputs(cfg, "validate")
    n_missing = int(np.isnan(ds.maxima).sum())
    print(f"stations: {len(ds.stations)}  years: {ds.years[0]}-"
          f"{ds.years[-1]}  missing cells: {n_missing}")
    print("validate: OK")
    return 0


def cmd_simulate(cfg, args):
    sim = cfg.get("simulate", {})
    outdir = args.out or cfg.get("out", "run")
    _prepare_out(outdir, args.overwrite, "simulate")
    spec = _model_spec(cfg, args)
    seed = args.seed if args.seed is not None else sim.get("seed", 0)
    ds, cov, truth = synthgen.generate(
        spec, n_stations=sim.get("n_stations", 50),
        n_years=sim.get("n_years", 70), truth=sim.get("truth"),
        seed=seed, missing_rate=sim.get("missing_rate", 0.0))
    save_dataset(ds, os.path.join(outdir, "maxima.csv"),
                 os.path.join(outdir, "stations.csv"))
    save_covariates(cov, ds.station_ids,
                    {k: os.path.join(outdir, f"{k}.csv")
                     for k in ("ghg", "eli", "pdsi", "urban")})
    truth.to_json(os.path.join(outdir, "truth.json"))
    _write_meta(outdir, cfg, {"stage": "simulate", "seed": seed})
    print(f"simulate: wrote {outdir}")
    return 0


def cmd_fit(cfg, args):
    ds, cov, scaling = _load_inputs(cfg, "fit")
    outdir = args.out or cfg.get("out", "run")
    _prepare_out(outdir, args.overwrite, "fit")
    spec = _model_spec(cfg, args)
    base_seed = args.seed if args.seed is not None \
        else cfg.get("mcmc", {}).get("seed", 0)
    n_chains = args.chains
    seeds = [base_seed + 1000 * c for c in range(n_chains)]
    for c, seed in enumerate(seeds):
        mc = _mcmc_config(cfg, seed)
        print(f"fit: chain {c} (variant {spec.variant}, seed {seed}, "
              f"{mc.n_iter} iterations)")
        archive = run_chain(ds, cov, spec, mc, progress=True)
        chain_dir = os.path.join(outdir, f"chain_{c:02d}")
        archive.save(chain_dir)
        if not archive.meta.get("complete"):
            raise StageError("fit", f"chain {c} aborted: "
                             f"{archive.meta.get('error')}")
    _write_meta(outdir, cfg, {"stage": "fit", "seeds": seeds,
                              "variant": spec.variant,
                              "n_chains": n_chains,
                              "scaling": None if scaling is None
                              else scaling.__dict__})
    print(f"fit: wrote {outdir}")
    return 0


def _load_archives(cfg, args, stage):
    outdir = args.out or cfg.get("out", "run")
    dirs = sorted(d for d in os.listdir(outdir) if d.startswith("chain_")) \
        if os.path.isdir(outdir) else []
    if not dirs:
        raise StageError(stage, f"no chain_* directories under {outdir}")
    return outdir, [PosteriorArchive.load(os.path.join(outdir, d))
                    for d in dirs]


def cmd_diagnose(cfg, args):
    outdir, archives = _load_archives(cfg, args, "diagnose")
    report = diag.chain_diagnostics(archives)
    diag.diagnostics_frame(report).to_csv(
        os.path.join(outdir, "diagnostics.csv"), index=False)
    with open(os.path.join(outdir, "acceptance.json"), "w") as fh:
        json.dump(report["acceptance"], fh, indent=2)
    bad = [c for c, r in report["rhat"].items()
           if r is not None and r > 1.1]
    print(f"diagnose: {len(report['columns'])} columns, "
          f"{len(bad)} with split R-hat > 1.1")
    return 0


def cmd_attribute(cfg, args):
    ds, cov, _ = _load_inputs(cfg, "attribute")
    outdir, archives = _load_archives(cfg, args, "attribute")
    a = cfg.get("attribution", {})
    archive = archives[0] if len(archives) == 1 else _pool(archives)
    scenarios = attr.factual_counterfactual(
        event_year=a.get("event_year", int(ds.years[-1])),
        baseline_year=a.get("baseline_year", int(ds.years[0])))
    summary = attr.attribution_summary(archive, ds, cov, scenarios)
    attr.export_attribution(outdir, summary, archive, ds, cov,
                            archive.meta.get("variant", "M4"))
    print(f"attribute: wrote {outdir}")
    return 0


def _pool(archives):
    pooled = archives[0]
    pooled.samples = np.concatenate([a.samples for a in archives], axis=0)
    return pooled


def cmd_chi(cfg, args):
    ds, cov, _ = _load_inputs(cfg, "chi")
    outdir = args.out or cfg.get("out", "run")
    os.makedirs(outdir, exist_ok=True)
    c = cfg.get("chi", {})
    u = c.get("u_grid", {})
    u_grid = np.linspace(u.get("start", 0.5), u.get("stop", 0.99),
                         u.get("num", 50))
    frames = []
    for h in c.get("h", [0.3, 1.0, 2.0]):
        try:
            est = diag.chi_empirical(
                ds.maxima, ds.coords(), h,
                tolerance=c.get("tolerance", 0.1),
                u_grid=u_grid, seed=args.seed or 0)
        except ValueError as e:
            print(f"chi: h={h}: {e}", file=sys.stderr)
            continue
        frames.append(est.to_frame())
    if not frames:
        raise StageError("chi", "no separation produced qualifying pairs")
    pd.concat(frames).to_csv(os.path.join(outdir, "chi_empirical.csv"),
                             index=False)
    print(f"chi: wrote {outdir}/chi_empirical.csv")
    return 0


def cmd_interpolate(cfg, args):
    ds, cov, _ = _load_inputs(cfg, "interpolate")
    outdir, archives = _load_archives(cfg, args, "interpolate")
    archive = archives[0]
    if not archive.meta.get("n_splines", 0):
        raise StageError("interpolate",
                         "archive has no spatial basis (pointwise variant)")
    targets_path = cfg.get("interpolate", {}).get("targets")
    if not targets_path:
        raise StageError("interpolate", "config lacks interpolate.targets")
    tdf = pd.read_csv(targets_path)
    coords = tdf[["lon", "lat"]].to_numpy(float)
    topo = tdf[list(SPATIAL_COVARIATE_NAMES)].to_numpy(float)
    basis = build_basis(list(ds.stations), archive.meta["n_splines"],
                        seed=archive.meta.get("basis_seed", 0))
    design = basis.design_at(coords, topo)
    out = {"lon": coords[:, 0], "lat": coords[:, 1]}
    for g, name in enumerate(COEF_NAMES):
        cols = [archive.columns.index(c)
                for c in archive.columns_like(f"beta_{name}_")]
        w_med = np.quantile(archive.samples[:, cols], 0.5, axis=0)
        out[name] = design @ w_med
    pd.DataFrame(out).to_csv(os.path.join(outdir, "interpolated.csv"),
                             index=False)
    print(f"interpolate: wrote {outdir}/interpolated.csv")
    return 0


COMMANDS = {"validate": cmd_validate, "simulate": cmd_simulate,
            "fit": cmd_fit, "diagnose": cmd_diagnose,
            "attribute": cmd_attribute, "chi": cmd_chi,
            "interpolate": cmd_interpolate}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="spextremes",
        description="Nonstationary spatial extreme-value analysis pipeline")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None,
                        help="run directory (default: out: key in config)")
    parser.add_argument("--chains", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--overwrite", action="store_true")
    parser.add_argument("--variant", choices=["M1", "M2", "M3", "M4"],
                        default=None)
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except StageError as e:
        print(str(e), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
