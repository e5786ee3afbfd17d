"""Command-line interface: ``sncm <subcommand> [options]``.

Subcommands
-----------
simulate   generate scenario replicates (optionally fit them)
build-rel  hierarchy file -> relationship matrix CSV
tune-eta   prior-based search for the MRF interaction strength
fit        fit one or many response columns of a CSV
evaluate   ELPD table from fitted bundles
score      operating characteristics of simulated fits
predict    posterior predictive samples

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
Every subcommand writes ``manifest.json`` into its output directory.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io as _io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .evaluation import elpd_report, posterior_predictive_sample, sum_models
from .gibbs import McmcConfig, SamplerError, run_chains
from .io import (ParseError, atomic_write_text, dataset_from_table, load_chain, read_table,
                 save_chain, write_csv, write_dataset_csv, write_dict_rows, write_manifest)
from .model import CensoredDataset, Hyperparams
from .mrf import (EtaSearchSpec, MrfPrior, analysis_eta_grid, logit, simulation_eta_grid,
                  tune_eta)
from .posterior import (adaptive_beta_prior, convergence_report, empirical_slab_variance,
                        pooled_fdr_threshold, standardize_with_pmv, summarize, trace_rows)
from .relmatrix import (build_relationship_matrix, load_hierarchy, read_R_csv, simulation_R,
                        write_R_csv)
from . import simlab


class UsageError(Exception):
    """Bad flags or configuration; exit code 1."""


DEFAULTS = {
    "run": {"seed": "0", "threads": "1", "out": "sncm-out", "label": "run",
            "fdr_target": "0.05"},
    "data": {"path": "", "responses": "", "predictors": "", "confounders": "",
             "sentinels": "NA", "psi": "", "standardize": "yes"},
    "model": {"preset": "analysis", "error_model": "skew-normal", "prior": "independent"},
    "hyper": {"nu0_sq": "", "nu_sq": "", "nud_sq": "", "lambda_sq": "", "xi0": "",
              "sigma0_sq": "", "rho0": "", "rho1": "", "omega": ""},
    "relationship": {"hierarchy": "", "matrix": "", "eta": ""},
    "mcmc": {"iterations": "", "burn_in": "", "thin": "", "chains": "", "store_latent": "no"},
    "eta": {"draws": "20000", "burn_in": "5000", "percentile": "0.95", "grid": ""},
    "simulate": {"scenario": "baseline", "replicates": "50", "fit": "no",
                 "methods": "independent,mrf"},
    "predict": {"draws": "100"},
}

PRESETS = {
    "simulation": dict(nu0_sq=25.0, nu_sq=4.0, nud_sq=25.0, lambda_sq=25.0, xi0=5.0,
                       sigma0_sq=4.0, omega=float(logit(0.02))),
    "analysis": dict(nu0_sq=100.0, nu_sq=None, nud_sq=100.0, lambda_sq=100.0, xi0=3.0,
                     sigma0_sq=1.0, omega=float(logit(0.05))),
}


# ---------------------------------------------------------------------------
# configuration


def load_config(path=None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_dict(DEFAULTS)
    if path:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            cp.read(p)
        except configparser.Error as exc:
            raise UsageError(f"cannot parse config {path}: {exc}") from None
    for section in cp.sections():
        if section not in DEFAULTS:
            raise UsageError(f"unknown config section [{section}]")
        for key in cp[section]:
            if key not in DEFAULTS[section]:
                raise UsageError(f"unknown config key {key!r} in [{section}]")
    return cp


def print_config(out=None) -> None:
    out = sys.stdout if out is None else out
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_dict(DEFAULTS)
    buf = _io.StringIO()
    cp.write(buf)
    out.write("# blank values fall back to the [model] preset (simulation or analysis)\n")
    out.write(buf.getvalue())


def _get(cp, section, key, kind=str, positive=False, choices=None):
    raw = cp[section][key].strip()
    if raw == "":
        return None
    try:
        if kind is bool:
            val = cp.getboolean(section, key)
        elif kind is int:
            val = int(raw)
        elif kind is float:
            val = float(raw)
        else:
            val = raw
    except ValueError:
        raise UsageError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None
    if positive and not val > 0:
        raise UsageError(f"[{section}] {key} must be positive, got {val}")
    if choices is not None and val not in choices:
        raise UsageError(f"[{section}] {key} must be one of {', '.join(choices)}, got {val!r}")
    return val


def _list(cp, section, key):
    raw = cp[section][key].strip()
    return [v.strip() for v in raw.split(",") if v.strip()] if raw else []


@dataclass
class RunConfig:
    seed: int
    threads: int
    out: Path
    label: str
    fdr_target: float
    preset: str
    error_model: str
    prior: str
    mcmc: McmcConfig
    hyper_overrides: dict
    data_path: str | None
    responses: list
    predictors: list
    confounders: list
    sentinels: list
    psi: float | None
    standardize: bool
    hierarchy: str | None
    matrix: str | None
    eta: float | None

    def snapshot(self) -> dict:
        # the output location is not part of the run's identity
        d = asdict(self)
        d.pop("out")
        return d


def run_config(cp, args) -> RunConfig:
    """Type-check the whole configuration before any compute."""
    seed = args.seed if args.seed is not None else _get(cp, "run", "seed", int)
    if seed is None or seed < 0:
        raise UsageError("seed must be a non-negative integer")
    threads = args.threads if args.threads is not None else _get(cp, "run", "threads", int, True)
    if threads is None or threads < 1:
        raise UsageError("threads must be >= 1")
    out = Path(args.out if args.out is not None else cp["run"]["out"])
    preset = _get(cp, "model", "preset", choices=PRESETS) or "analysis"
    base_mcmc = McmcConfig.analysis() if preset == "analysis" else McmcConfig.simulation()
    mc = {k: _get(cp, "mcmc", k, int, k != "burn_in") for k in ("iterations", "burn_in", "thin",
                                                                  "chains")}
    mc = {k: v for k, v in mc.items() if v is not None}
    store = _get(cp, "mcmc", "store_latent", bool)
    try:
        mcmc = McmcConfig(**{**asdict(base_mcmc), **mc, "seed": seed,
                             "store_latent": bool(store)})
    except ValueError as exc:
        raise UsageError(f"[mcmc] {exc}") from None
    hyper = {}
    for k in ("nu0_sq", "nu_sq", "nud_sq", "lambda_sq", "xi0", "sigma0_sq", "rho0", "rho1"):
        v = _get(cp, "hyper", k, float, True)
        if v is not None:
            hyper[k] = v
    omega = _get(cp, "hyper", "omega", float)
    if omega is not None:
        hyper["omega"] = omega
    fdr = _get(cp, "run", "fdr_target", float)
    if not 0 < fdr < 1:
        raise UsageError("[run] fdr_target must lie in (0, 1)")
    eta = _get(cp, "relationship", "eta", float)
    if eta is not None and eta < 0:
        raise UsageError("[relationship] eta must be >= 0")
    return RunConfig(
        seed=seed, threads=threads, out=out, label=cp["run"]["label"], fdr_target=fdr,
        preset=preset,
        error_model=_get(cp, "model", "error_model", choices=("skew-normal", "normal")),
        prior=_get(cp, "model", "prior", choices=("independent", "mrf")),
        mcmc=mcmc, hyper_overrides=hyper, data_path=_get(cp, "data", "path"),
        responses=_list(cp, "data", "responses"), predictors=_list(cp, "data", "predictors"),
        confounders=_list(cp, "data", "confounders"), sentinels=_list(cp, "data", "sentinels"),
        psi=_get(cp, "data", "psi", float), standardize=bool(_get(cp, "data", "standardize", bool)),
        hierarchy=_get(cp, "relationship", "hierarchy"), matrix=_get(cp, "relationship", "matrix"),
        eta=eta,
    )


def _versions():
    return {"sncm": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": ".".join(map(str, sys.version_info[:3]))}


def _manifest(rc: RunConfig, command: str, cp, **extra):
    snap = configparser.ConfigParser(interpolation=None)
    snap.read_dict(cp)
    snap["run"]["out"] = ""
    buf = _io.StringIO()
    snap.write(buf)
    return {"command": command, "seed": rc.seed, "config": rc.snapshot(),
            "config_text": buf.getvalue(), "versions": _versions(), **extra}


# ---------------------------------------------------------------------------
# shared helpers


def _relationship(rc: RunConfig, p: int | None = None):
    if rc.matrix:
        R, _ = read_R_csv(_existing(rc.matrix))
    elif rc.hierarchy:
        R = build_relationship_matrix(load_hierarchy(_existing(rc.hierarchy)))
    else:
        return None
    if p is not None and R.shape[0] != p:
        raise ValueError(f"relationship matrix is {R.shape[0]}x{R.shape[0]}, data has p={p}")
    return R


def _existing(path):
    if not Path(path).exists():
        raise UsageError(f"file not found: {path}")
    return path


def _eta_spec(rc: RunConfig, cp, R, omega0):
    grid_kind = _get(cp, "eta", "grid", choices=("simulation", "analysis")) or rc.preset
    grid = simulation_eta_grid(R) if grid_kind == "simulation" else analysis_eta_grid()
    return EtaSearchSpec(omega0, grid, _get(cp, "eta", "draws", int, True),
                         _get(cp, "eta", "burn_in", int), _get(cp, "eta", "percentile", float))


def _hyper_for(rc: RunConfig, data: CensoredDataset, selection: MrfPrior) -> Hyperparams:
    pre = dict(PRESETS[rc.preset])
    pre.pop("omega")
    pre.update({k: v for k, v in rc.hyper_overrides.items() if k != "omega"})
    if pre.get("nu_sq") is None:
        pre["nu_sq"] = empirical_slab_variance(data)
    if "rho0" not in pre or "rho1" not in pre:
        r0, r1 = adaptive_beta_prior(data)
        pre.setdefault("rho0", r0)
        pre.setdefault("rho1", r1)
    return Hyperparams(**pre, selection=selection, error_model=rc.error_model)


# ---------------------------------------------------------------------------
# subcommands


def cmd_build_rel(rc, cp, args):
    src = args.hierarchy or rc.hierarchy
    if not src:
        raise UsageError("build-rel needs --hierarchy (or [relationship] hierarchy)")
    tree = load_hierarchy(_existing(src))
    R = build_relationship_matrix(tree)
    members = sorted(tree.all_members())
    names = args.names.split(",") if args.names else [f"x{j + 1}" for j in members]
    if len(names) != R.shape[0]:
        raise UsageError(f"--names lists {len(names)} predictors, hierarchy has {R.shape[0]}")
    rc.out.mkdir(parents=True, exist_ok=True)
    write_R_csv(rc.out / "R.csv", R, names)
    write_manifest(rc.out, _manifest(rc, "build-rel", cp, hierarchy=str(src)))


def cmd_tune_eta(rc, cp, args):
    if args.simulation_R:
        R = simulation_R()
    else:
        R = _relationship(rc)
        if R is None:
            raise UsageError("tune-eta needs --simulation-R, a hierarchy or a matrix")
    omega0 = rc.hyper_overrides.get("omega", PRESETS[rc.preset]["omega"])
    spec = _eta_spec(rc, cp, R, omega0)
    res = tune_eta(spec, R, np.random.default_rng(rc.seed), rc.threads)
    rc.out.mkdir(parents=True, exist_ok=True)
    write_dict_rows(rc.out / "eta_search.csv", res.table())
    write_manifest(rc.out, _manifest(rc, "tune-eta", cp, eta=res.eta, reference=res.reference,
                                     omega0=omega0))
    print(f"selected eta = {res.eta!r} (binomial reference q95 = {res.reference})")


def _load_data_table(rc: RunConfig, args):
    path = args.data or rc.data_path
    if not path:
        raise UsageError("no dataset: pass --data or set [data] path")
    header, table = read_table(_existing(path), rc.sentinels)
    responses = args.response or rc.responses
    if not responses:
        raise UsageError("no response columns: pass --response or set [data] responses")
    missing = [r for r in responses if r not in header]
    if missing:
        raise UsageError(f"response column(s) not in {path}: {', '.join(missing)}")
    predictors = rc.predictors or [h for h in header
                                   if h not in responses and h not in rc.confounders]
    return path, header, table, responses, predictors


def cmd_fit(rc, cp, args):
    path, header, table, responses, predictors = _load_data_table(rc, args)
    datasets = {}
    for r in responses:
        datasets[r] = dataset_from_table(header, table, r, predictors, rc.confounders, rc.psi,
                                         str(path))
    p = len(predictors)
    R = _relationship(rc, p) if rc.prior == "mrf" else None
    omega = rc.hyper_overrides.get("omega", PRESETS[rc.preset]["omega"])
    eta = 0.0
    eta_info = None
    if rc.prior == "mrf":
        if R is None:
            raise UsageError("prior = mrf needs [relationship] hierarchy or matrix")
        if rc.eta is not None:
            eta = rc.eta
        else:
            res = tune_eta(_eta_spec(rc, cp, R, omega), R, np.random.default_rng(rc.seed),
                           rc.threads)
            eta, eta_info = res.eta, res.table()
    selection = MrfPrior(omega, eta, R)
    rc.out.mkdir(parents=True, exist_ok=True)
    if eta_info is not None:
        write_dict_rows(rc.out / "eta_search.csv", eta_info)

    def one(k_r):
        k, r = k_r
        data = datasets[r]
        transform = None
        if rc.standardize:
            data, transform = standardize_with_pmv(data)
        hyper = _hyper_for(rc, data, selection)
        # one independent stream per response, split from the master seed
        cfg = McmcConfig(**{**asdict(rc.mcmc),
                            "seed": int(np.random.SeedSequence([rc.seed, k]).generate_state(1)[0])})
        chains = run_chains(data, hyper, cfg, threads=1)
        return r, data, transform, hyper, chains

    jobs = list(enumerate(responses))
    if rc.threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(rc.threads) as pool:
            fits = list(pool.map(one, jobs))
    else:
        fits = [one(j) for j in jobs]

    thr = pooled_fdr_threshold([summarize(ch, rc.fdr_target).pip for _, _, _, _, ch in fits],
                               rc.fdr_target)
    pip_rows, coef_rows, sel_rows, conv_rows = [], [], [], []
    per_model = {}
    for r, data, transform, hyper, chains in fits:
        res = summarize(chains, rc.fdr_target, threshold=thr)
        rdir = rc.out / "fits" / r
        for k, ch in enumerate(chains):
            save_chain(rdir / f"chain_{k + 1}", ch)
        for j, name in enumerate(predictors):
            pip_rows.append({"response": r, "predictor": name, "pip": float(res.pip[j])})
            b = res.beta_hat[j]
            orig = (float(transform.coefficient_to_original(b)) if transform and not math.isnan(b)
                    else b)
            coef_rows.append({"response": r, "predictor": name, "beta_hat": float(b),
                              "beta_hat_original_scale": float(orig),
                              "selected": int(j in set(res.selected))})
            if j in set(res.selected):
                sel_rows.append({"response": r, "predictor": name, "pip": float(res.pip[j]),
                                 "beta_hat": float(b)})
        if len(chains) >= 2:
            for row in convergence_report(chains):
                conv_rows.append({"response": r, **row})
            write_dict_rows(rdir / "trace.csv", list(trace_rows(chains)))
        per_model[r] = {
            "hyper": {k: v for k, v in asdict(hyper).items() if k != "selection"},
            "psi": data.psi, "n": data.n, "observed_fraction": data.observed_fraction,
            "transform": asdict(transform) if transform else None,
            "beta0_hat": res.beta0_hat, "sigma_sq_hat": res.sigma_sq_hat,
            "delta_hat": res.delta_hat, "rho_hat": res.rho_hat,
            "chain_seeds": [int(c.seed) for c in chains],
        }
    write_dict_rows(rc.out / "pip.csv", pip_rows)
    write_dict_rows(rc.out / "coefficients.csv", coef_rows)
    write_dict_rows(rc.out / "selection.csv", sel_rows,
                    header=["response", "predictor", "pip", "beta_hat"])
    if conv_rows:
        write_dict_rows(rc.out / "convergence.csv", conv_rows)
        flagged = [f"{c['response']}:{c['parameter']}" for c in conv_rows if c["flag"]]
        if flagged:
            print(f"warning: split R-hat > 1.1 for {len(flagged)} parameter(s), e.g. "
                  f"{', '.join(flagged[:5])}", file=sys.stderr)
    write_manifest(rc.out, _manifest(
        rc, "fit", cp, data=str(path), responses=responses, predictors=predictors,
        confounders=rc.confounders, prior=rc.prior, error_model=rc.error_model, omega=omega,
        eta=eta, fdr_threshold=thr, models=per_model))
    print(f"fitted {len(fits)} model(s); pooled FDR threshold = {thr!r}; "
          f"{len(sel_rows)} selection(s)")


def _fit_dirs(args):
    dirs = args.fits
    if not dirs:
        raise UsageError("pass at least one --fits directory")
    out = []
    for d in dirs:
        m = Path(d) / "manifest.json"
        if not m.is_file():
            raise UsageError(f"{d} is not a fit output directory (no manifest.json)")
        man = json.loads(m.read_text())
        if man.get("command") != "fit":
            raise UsageError(f"{d} was not produced by `fit`")
        out.append((Path(d), man))
    return out


def cmd_evaluate(rc, cp, args):
    rows = []
    pointwise = []
    for d, man in _fit_dirs(args):
        logliks = []
        for r in man["responses"]:
            chains = [load_chain(c) for c in sorted((d / "fits" / r).glob("chain_*"))]
            ll = np.concatenate([c.loglik for c in chains], axis=0)
            if ll.shape[0] < 2:
                raise ValueError(f"{d}: response {r} has no stored log-likelihood draws")
            logliks.append(ll)
        rep = elpd_report(sum_models(logliks))
        rows.append({"cohort": man["config"]["label"], "error_model": man["error_model"],
                     "prior": man["prior"], "models": len(logliks),
                     "elpd_is": rep.elpd_is, "elpd_waic": rep.elpd_waic, "p_waic": rep.p_waic,
                     "unstable_is": int(rep.unstable_is.sum()), "source": str(d)})
        for i, (a, b) in enumerate(zip(rep.pointwise_is, rep.pointwise_waic)):
            pointwise.append({"source": str(d), "observation": i + 1, "elpd_is": float(a),
                              "elpd_waic": float(b)})
    rc.out.mkdir(parents=True, exist_ok=True)
    write_dict_rows(rc.out / "elpd.csv", rows)
    write_dict_rows(rc.out / "elpd_pointwise.csv", pointwise)
    write_manifest(rc.out, _manifest(rc, "evaluate", cp, fits=[str(d) for d, _ in
                                                               _fit_dirs(args)]))
    for r in rows:
        print(f"{r['cohort']} {r['error_model']} {r['prior']}: ELPD_IS={r['elpd_is']:.2f} "
              f"ELPD_WAIC={r['elpd_waic']:.2f}")


def cmd_predict(rc, cp, args):
    draws = args.draws or _get(cp, "predict", "draws", int, True)
    rng = np.random.default_rng(rc.seed)
    rc.out.mkdir(parents=True, exist_ok=True)
    for d, man in _fit_dirs(args):
        header, table = read_table(_existing(args.data or man["data"]), rc.sentinels)
        for r in man["responses"]:
            data = dataset_from_table(header, table, r, man["predictors"], man["confounders"])
            model = man["models"][r]
            tr = model["transform"]
            if tr:
                data, _ = standardize_with_pmv(data)
            data.psi = model["psi"]
            chains = [load_chain(c) for c in sorted((d / "fits" / r).glob("chain_*"))]
            sims = posterior_predictive_sample(chains, data, draws, rng)
            if tr:
                sims = sims * tr["scale"] + tr["center"]
            write_csv(rc.out / f"predictive_{r}.csv", [f"obs{i + 1}" for i in range(data.n)],
                      [[float(v) for v in row] for row in sims])
    write_manifest(rc.out, _manifest(rc, "predict", cp, draws=draws,
                                     fits=[str(d) for d, _ in _fit_dirs(args)]))


def cmd_simulate(rc, cp, args):
    scen = args.scenario or _get(cp, "simulate", "scenario", choices=simlab.SCENARIOS)
    if scen not in simlab.SCENARIOS:
        raise UsageError(f"unknown scenario {scen!r}")
    reps = args.replicates if args.replicates is not None else _get(cp, "simulate",
                                                                    "replicates", int, True)
    do_fit = args.fit or bool(_get(cp, "simulate", "fit", bool))
    methods = _list(cp, "simulate", "methods")
    bad = [m for m in methods if m not in simlab.METHODS]
    if bad:
        raise UsageError(f"unknown method(s): {', '.join(bad)}")
    sc = simlab.make_scenario(scen)
    base = rc.out / scen
    eta = rc.eta
    if do_fit and "mrf" in methods and eta is None:
        eta = simlab.simulation_eta(seed=rc.seed, threads=rc.threads).eta

    def one(r):
        rep = simlab.generate_replicate(sc, simlab.replicate_rng(rc.seed, scen, r))
        rdir = base / f"rep_{r + 1:04d}"
        rdir.mkdir(parents=True, exist_ok=True)
        write_dataset_csv(rdir / "data.csv", rep.data)
        truth = {"scenario": scen, "replicate": r + 1, "beta": rep.beta.tolist(),
                 "gamma": rep.gamma.tolist(), "psi": rep.psi_true, "U": rep.U.tolist(),
                 "V": rep.V.tolist()}
        atomic_write_text(rdir / "truth.json", json.dumps(truth) + "\n")
        if rep.R is not sc.R:
            write_R_csv(rdir / "R.csv", rep.R)
        if do_fit:
            for m in methods:
                fseed = int(np.random.SeedSequence(
                    [rc.seed, simlab.SCENARIOS.index(scen), r, simlab.METHODS.index(m)]
                ).generate_state(1)[0])
                fit, _ = simlab.fit_dataset(rep.data, m, rc.mcmc, R=rep.R, eta=eta or 0.0,
                                            seed=fseed, error_model=rc.error_model,
                                            target=rc.fdr_target)
                write_dict_rows(rdir / f"fit_{m}.csv", [
                    {"predictor": f"x{j + 1}", "pip": float(fit.pip[j]),
                     "selected": int(fit.selected[j]), "beta_cond": float(fit.beta_cond[j])}
                    for j in range(sc.p)])

    if rc.threads > 1:
        with ThreadPoolExecutor(rc.threads) as pool:
            list(pool.map(one, range(reps)))
    else:
        for r in range(reps):
            one(r)
    write_manifest(base, _manifest(rc, "simulate", cp, scenario=scen, replicates=reps,
                                   psi=sc.psi, sigma=sc.sigma, delta=sc.delta, rho=sc.rho,
                                   fitted=do_fit, methods=methods if do_fit else [], eta=eta))
    print(f"wrote {reps} replicate(s) of {scen} to {base}")


def cmd_score(rc, cp, args):
    sim_dirs = args.sim
    if not sim_dirs:
        raise UsageError("pass at least one --sim directory produced by `simulate --fit`")
    table, var_rows = [], []
    for sd in sim_dirs:
        sd = Path(sd)
        man_path = sd / "manifest.json"
        if not man_path.is_file():
            raise UsageError(f"{sd} has no manifest.json")
        man = json.loads(man_path.read_text())
        scen = man.get("scenario", sd.name)
        reps = sorted(sd.glob("rep_*"))
        methods = sorted({f.stem[4:] for r in reps for f in r.glob("fit_*.csv")})
        if not methods:
            raise ValueError(f"{sd}: no fitted replicates to score")
        row = {"scenario": scen}
        for m in methods:
            sels, betas, truth_beta = [], [], None
            for r in reps:
                f = r / f"fit_{m}.csv"
                if not f.is_file():
                    continue
                truth = json.loads((r / "truth.json").read_text())
                truth_beta = np.asarray(truth["beta"])
                with open(f, newline="") as fh:
                    recs = list(csv.DictReader(fh))
                sels.append(np.array([r_["selected"] == "1" for r_ in recs]))
                betas.append(np.array([float(r_["beta_cond"]) if r_["beta_cond"] else np.nan
                                       for r_ in recs]))
            rep = simlab.score(sels, truth_beta, betas)
            row[f"tpr_{m}"] = rep.overall_tpr
            row[f"tpr_sd_{m}"] = rep.tpr_sd
            row[f"fdr_{m}"] = rep.fdr
            row[f"fdr_sd_{m}"] = rep.fdr_sd
            row["replicates"] = rep.replicates
            for k, j in enumerate(rep.truth_index):
                var_rows.append({"scenario": scen, "method": m, "predictor": f"x{j + 1}",
                                 "beta": float(truth_beta[j]),
                                 "variable_tpr": float(rep.variable_tpr[k]),
                                 "bias": float(rep.bias[k]), "rmse": float(rep.rmse[k])})
        table.append(row)
    rc.out.mkdir(parents=True, exist_ok=True)
    write_dict_rows(rc.out / "metrics.csv", table)
    write_dict_rows(rc.out / "variable_metrics.csv", var_rows)
    write_manifest(rc.out, _manifest(rc, "score", cp, sims=[str(s) for s in sim_dirs]))


COMMANDS = {
    "simulate": cmd_simulate, "build-rel": cmd_build_rel, "tune-eta": cmd_tune_eta,
    "fit": cmd_fit, "evaluate": cmd_evaluate, "score": cmd_score, "predict": cmd_predict,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides [run] seed)")
    common.add_argument("--threads", type=int, help="worker threads (overrides [run] threads)")
    common.add_argument("--out", help="output directory (overrides [run] out)")

    parser = _Parser(prog="sncm", description="Skew-normal censored mixture regression with "
                     "structured spike-and-slab selection.")
    parser.add_argument("--version", action="version", version=f"sncm {__version__}")
    parser.add_argument("--print-config", action="store_true",
                        help="print every configuration key with its default and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="generate scenario replicates")
    p.add_argument("--scenario", choices=simlab.SCENARIOS)
    p.add_argument("--replicates", type=int)
    p.add_argument("--fit", action="store_true", help="also fit each replicate")

    p = sub.add_parser("build-rel", parents=[common], help="hierarchy -> relationship matrix")
    p.add_argument("--hierarchy")
    p.add_argument("--names", help="comma-separated predictor names in index order")

    p = sub.add_parser("tune-eta", parents=[common], help="prior-based search for eta")
    p.add_argument("--simulation-R", action="store_true",
                   help="use the built-in 15-block simulation hierarchy")

    p = sub.add_parser("fit", parents=[common], help="fit response columns of a CSV")
    p.add_argument("--data")
    p.add_argument("--response", action="append", help="response column (repeatable)")

    p = sub.add_parser("evaluate", parents=[common], help="ELPD table from fit outputs")
    p.add_argument("--fits", action="append", help="fit output directory (repeatable)")

    p = sub.add_parser("score", parents=[common], help="metrics of simulated fits")
    p.add_argument("--sim", action="append", help="scenario directory (repeatable)")

    p = sub.add_parser("predict", parents=[common], help="posterior predictive samples")
    p.add_argument("--fits", action="append", help="fit output directory (repeatable)")
    p.add_argument("--data", help="dataset (defaults to the one recorded at fit time)")
    p.add_argument("--draws", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_config:
        print_config()
        return 0
    if not args.command:
        parser.print_usage(sys.stderr)
        print("sncm: error: a subcommand is required", file=sys.stderr)
        return 1
    try:
        cp = load_config(args.config)
        rc = run_config(cp, args)
        COMMANDS[args.command](rc, cp, args)
    except UsageError as exc:
        print(f"sncm {args.command}: usage error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, SamplerError, ValueError, OSError, ArithmeticError) as exc:
        print(f"sncm {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
