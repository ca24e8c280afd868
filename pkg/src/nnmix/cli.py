"""Command-line surface: simulate | fit | predict | validate | score.

Every command is a pure function of its config file, input files and seed;
reruns write byte-identical outputs.  Exit codes: 0 success, 2 config error,
3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import diagnose, geom, mcmc, predict, simulate
from .errors import ConfigError, DataError, NnmixError, NumericalError

REQUIRED_COLUMNS = ("coord1", "coord2", "count")

_MODEL_DEFAULTS = {"marginal": "poisson", "copula": "gaussian", "L": 10,
                   "covariates": None}
_MCMC_DEFAULTS = {"n_iter": 20000, "burnin": 4000, "thin": 4, "seed": 0,
                  "steps": {}, "adapt": True}


# ---------------------------------------------------------------------------
# config and data I/O

def load_config(path):
    try:
        with open(path) as f:
            cfg = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def model_from_config(cfg):
    m = dict(_MODEL_DEFAULTS)
    m.update(cfg.get("model", {}))
    try:
        spec = mcmc.ModelSpec(m["marginal"], m["copula"], int(m["L"]))
    except (ValueError, KeyError) as e:
        raise ConfigError(f"bad model section: {e}")
    return spec, m.get("covariates")


def priors_from_config(cfg):
    try:
        return mcmc.Priors.from_dict(cfg.get("priors", {}))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad priors section: {e}")


def chain_config_from(cfg, seed=None):
    m = dict(_MCMC_DEFAULTS)
    m.update(cfg.get("mcmc", {}))
    if seed is not None:
        m["seed"] = seed
    try:
        return mcmc.ChainConfig(
            n_iter=int(m["n_iter"]), burnin=int(m["burnin"]),
            thin=int(m["thin"]), seed=int(m["seed"]),
            steps=dict(m.get("steps", {})), adapt=bool(m.get("adapt", True)),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad mcmc section: {e}")


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def read_dataset(path, require_count=True):
    """Read the CSV schema (coord1, coord2, count, covariate columns).

    Returns (coords, counts, covariate matrix or None, covariate names).
    Schema violations are reported row by row.
    """
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file")
            rows = list(reader)
    except FileNotFoundError:
        raise DataError(f"data file not found: {path}")
    header = [h.strip() for h in header]
    needed = REQUIRED_COLUMNS if require_count else REQUIRED_COLUMNS[:2]
    for col in needed:
        if col not in header:
            raise DataError(f"{path}: missing required column {col!r}")
    cov_names = [h for h in header if h not in REQUIRED_COLUMNS]
    idx = {h: header.index(h) for h in header}
    coords, counts, covs = [], [], []
    problems = []
    for rownum, row in enumerate(rows, start=2):
        if len(row) != len(header):
            problems.append(f"row {rownum}: expected {len(header)} fields")
            continue
        try:
            c1 = float(row[idx["coord1"]])
            c2 = float(row[idx["coord2"]])
            if not (np.isfinite(c1) and np.isfinite(c2)):
                raise ValueError("non-finite coordinate")
            if require_count:
                raw = float(row[idx["count"]])
                if raw < 0 or raw != int(raw):
                    raise ValueError(f"count {row[idx['count']]!r} is not a "
                                     "nonnegative integer")
                counts.append(int(raw))
            covs.append([float(row[idx[c]]) for c in cov_names])
            coords.append((c1, c2))
        except ValueError as e:
            problems.append(f"row {rownum}: {e}")
        if len(problems) >= 10:
            break
    if problems:
        raise DataError(f"{path}: " + "; ".join(problems))
    coords = np.asarray(coords, dtype=float)
    if len(coords) and len(np.unique(coords, axis=0)) != len(coords):
        raise DataError(f"{path}: duplicate coordinates")
    counts = np.asarray(counts, dtype=np.int64) if require_count else None
    covmat = np.asarray(covs, dtype=float) if cov_names else None
    return coords, counts, covmat, cov_names


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, columns):
    rows = zip(*columns)
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _prepare_out(outdir, names, force):
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    for name in names:
        p = out / name
        if p.exists() and not force:
            raise ConfigError(f"refusing to overwrite {p}; pass --force")
    return out


def apply_projection(coords, mode, origin=None):
    """Optional equirectangular projection of (lon, lat) degree coordinates."""
    if mode in (None, "none"):
        return coords, None
    if mode != "equirectangular":
        raise ConfigError(f"unknown projection {mode!r}")
    if origin is None:
        origin = [float(np.mean(coords[:, 0])), float(np.mean(coords[:, 1]))]
    lon0, lat0 = origin
    scale = np.cos(np.deg2rad(lat0))
    out = np.column_stack([(coords[:, 0] - lon0) * scale, coords[:, 1] - lat0])
    return out, origin


def _design(covmat, cov_names, selected):
    """Design matrix with intercept from selected covariate columns."""
    n = len(covmat) if covmat is not None else 0
    if selected is None:
        cols = list(range(len(cov_names)))
    else:
        missing = [c for c in selected if c not in cov_names]
        if missing:
            raise ConfigError(f"covariates not in the data: {missing}")
        cols = [cov_names.index(c) for c in selected]
    if covmat is None or not cols:
        return None
    return np.column_stack([np.ones(n), covmat[:, cols]])


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(args):
    cfg = load_config(args.config)
    sim = dict(cfg.get("simulate", {}))
    kind = sim.pop("kind", None)
    if kind not in ("skew", "sglmm"):
        raise ConfigError("simulate.kind must be 'skew' or 'sglmm'")
    if args.seed is not None:
        sim["seed"] = args.seed
    out = _prepare_out(args.out, ["data.csv", "data_config.json"], args.force)
    try:
        if kind == "skew":
            field = simulate.skew_field_counts(simulate.SkewFieldConfig(**sim))
        else:
            field = simulate.sglmm_counts(simulate.SglmmConfig(**sim))
    except TypeError as e:
        raise ConfigError(f"bad simulate section: {e}")
    header = ["coord1", "coord2", "count"]
    cols = [field.sites[:, 0], field.sites[:, 1], field.counts]
    if field.covariates is not None:
        for k in range(field.covariates.shape[1]):
            header.append(f"covariate_{k + 1}")
            cols.append(field.covariates[:, k])
    write_csv(out / "data.csv", header, cols)
    with open(out / "data_config.json", "w") as f:
        f.write(json.dumps(field.config, sort_keys=True) + "\n")
    print(f"wrote {out / 'data.csv'} ({len(field.counts)} sites)")
    return 0


def cmd_fit(args):
    cfg = load_config(args.config)
    model, cov_sel = model_from_config(cfg)
    priors = priors_from_config(cfg)
    coords, counts, covmat, cov_names = read_dataset(args.data)
    if len(coords) < 2:
        raise DataError("need at least two sites to fit")
    digest = file_digest(args.data)
    projection = cfg.get("projection", "none")
    proj_coords, origin = apply_projection(coords, projection)
    X = _design(covmat, cov_names, cov_sel)
    if model.marginal == "negbinom" and X is None:
        raise ConfigError("negative binomial marginals need covariate columns")
    holdout = args.holdout if args.holdout is not None else cfg.get("holdout", 0.0)
    base_seed = args.seed if args.seed is not None else \
        cfg.get("mcmc", {}).get("seed", _MCMC_DEFAULTS["seed"])
    n = len(coords)
    if holdout:
        if not (0.0 < holdout < 1.0):
            raise ConfigError("holdout fraction must be in (0, 1)")
        split_rng = np.random.default_rng([int(base_seed), 2])
        test_n = int(round(holdout * n))
        if test_n < 1 or n - test_n < 2:
            raise ConfigError("holdout fraction leaves too few sites")
        test_idx = np.sort(split_rng.choice(n, size=test_n, replace=False))
        train_idx = np.setdiff1d(np.arange(n), test_idx)
    else:
        train_idx = np.arange(n)
        test_idx = np.empty(0, dtype=int)
    names = [f"posterior_chain{k}.jsonl" for k in range(args.chains)]
    names += [f"acceptance_chain{k}.json" for k in range(args.chains)]
    if holdout:
        names.append("split.json")
    out = _prepare_out(args.out, names, args.force)
    if holdout:
        with open(out / "split.json", "w") as f:
            f.write(json.dumps({
                "train": [int(i) for i in train_idx],
                "test": [int(i) for i in test_idx],
                "fraction": float(holdout),
                "seed": int(base_seed),
            }, sort_keys=True) + "\n")
    for k in range(args.chains):
        chain_cfg = chain_config_from(cfg, seed=int(base_seed) + k)
        try:
            ref, post = mcmc.fit(
                proj_coords[train_idx], counts[train_idx], model,
                priors=priors, config=chain_cfg,
                X=None if X is None else X[train_idx],
            )
        except NnmixError:
            raise
        except np.linalg.LinAlgError as e:
            raise NumericalError(str(e))
        post.meta.update({
            "data_digest": digest,
            "train_idx": [int(i) for i in train_idx],
            "projection": projection,
            "projection_origin": origin,
            "covariate_names": cov_names if X is not None else [],
            "covariate_selection": cov_sel,
        })
        post.save(out / f"posterior_chain{k}.jsonl")
        with open(out / f"acceptance_chain{k}.json", "w") as f:
            f.write(json.dumps({
                "acceptance": post.acceptance,
                "final_steps": post.meta["final_steps"],
            }, sort_keys=True) + "\n")
        print(f"chain {k}: {post.n_samples} samples -> "
              f"{out / f'posterior_chain{k}.jsonl'}")
    return 0


def _load_fit(posterior_path, data_path):
    """Rebuild the fitted reference set from a posterior file and the data."""
    post = mcmc.PosteriorSamples.load(posterior_path)
    coords, counts, covmat, cov_names = read_dataset(data_path)
    digest = file_digest(data_path)
    if post.meta.get("data_digest") != digest:
        raise DataError(
            "data file digest does not match the posterior; "
            "fit and data are out of sync"
        )
    proj_coords, _ = apply_projection(
        coords, post.meta.get("projection", "none"),
        post.meta.get("projection_origin"),
    )
    train_idx = np.asarray(post.meta["train_idx"], dtype=int)
    perm = np.asarray(post.meta["perm"], dtype=int)
    X = _design(covmat, cov_names, post.meta.get("covariate_selection"))
    ordered = proj_coords[train_idx][perm]
    ref = geom.build_reference(ordered, post.model.L)
    y = counts[train_idx][perm]
    X_ord = None if X is None else X[train_idx][perm]
    return post, ref, y, X_ord, proj_coords, counts, X


def cmd_predict(args):
    post, ref, y, X_ord, proj_coords, counts, X_all = _load_fit(
        args.posterior, args.data
    )
    tcoords, _, tcov, tcov_names = read_dataset(args.targets, require_count=False)
    tproj, _ = apply_projection(
        tcoords, post.meta.get("projection", "none"),
        post.meta.get("projection_origin"),
    )
    Xt = _design(tcov, tcov_names, post.meta.get("covariate_selection"))
    if post.model.marginal == "negbinom" and Xt is None:
        raise DataError("targets file lacks the covariate columns")
    out = _prepare_out(args.out, ["predictions.csv"], args.force)
    seed = args.seed if args.seed is not None else post.meta.get("seed", 0)
    draws = predict.posterior_predict(
        tproj, post, y, ref, post.model, Xtargets=Xt, X=X_ord,
        seed=int(seed), draws_per_sample=args.draws_per_sample,
    )
    summ = predict.predictive_summary(draws)
    write_csv(
        out / "predictions.csv",
        ["coord1", "coord2", "median", "mean", "lower95", "upper95", "n_draws"],
        [tcoords[:, 0], tcoords[:, 1], summ["median"], summ["mean"],
         summ["lower95"], summ["upper95"],
         np.full(len(tcoords), summ["n_draws"], dtype=np.int64)],
    )
    print(f"wrote {out / 'predictions.csv'} ({len(tcoords)} targets)")
    return 0


def cmd_validate(args):
    post, ref, y, X_ord, *_ = _load_fit(args.posterior, args.data)
    out = _prepare_out(args.out, ["residuals.csv", "validate.txt"], args.force)
    R = diagnose.residual_matrix(post, y, ref, post.model, X=X_ord,
                                 max_samples=args.max_samples)
    rbar = R.mean(axis=0)
    stat, crit5 = diagnose.anderson_darling_normal(rbar)
    write_csv(
        out / "residuals.csv",
        ["site", "coord1", "coord2", "residual_mean"],
        [np.arange(ref.n), ref.sites[:, 0], ref.sites[:, 1], rbar],
    )
    with open(out / "validate.txt", "w") as f:
        f.write(f"n_sites {ref.n}\n")
        f.write(f"n_samples {R.shape[0]}\n")
        f.write(f"anderson_darling_stat {stat!r}\n")
        f.write(f"anderson_darling_crit5 {crit5!r}\n")
        f.write(f"normal_at_5pct {'yes' if stat < crit5 else 'no'}\n")
    print(f"wrote {out / 'residuals.csv'}; AD statistic {stat:.3f} "
          f"(5% critical value {crit5:.3f})")
    return 0


def cmd_score(args):
    post, ref, y, X_ord, proj_coords, counts, X_all = _load_fit(
        args.posterior, args.data
    )
    if args.test is None and args.split is None:
        raise ConfigError("score needs --split (from fit) or --test")
    if args.split is not None:
        with open(args.split) as f:
            split = json.load(f)
        test_idx = np.asarray(split["test"], dtype=int)
        tcoords = proj_coords[test_idx]
        ytest = counts[test_idx]
        Xt = None if X_all is None else X_all[test_idx]
    else:
        tc, ytest, tcov, tcov_names = read_dataset(args.test)
        tcoords, _ = apply_projection(
            tc, post.meta.get("projection", "none"),
            post.meta.get("projection_origin"),
        )
        Xt = _design(tcov, tcov_names, post.meta.get("covariate_selection"))
    out = _prepare_out(args.out, ["scores.txt"], args.force)
    seed = args.seed if args.seed is not None else post.meta.get("seed", 0)
    draws = predict.posterior_predict(
        tcoords, post, y, ref, post.model, Xtargets=Xt, X=X_ord,
        seed=int(seed), draws_per_sample=args.draws_per_sample,
    )
    report = diagnose.scores(ytest, draws)
    with open(out / "scores.txt", "w") as f:
        for key, val in report.to_dict().items():
            f.write(f"{key} {val!r}\n")
    print(f"wrote {out / 'scores.txt'}")
    for key, val in report.to_dict().items():
        print(f"  {key} = {val:.4f}")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="nnmix",
        description="Nearest-neighbor mixture models for spatial count data",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--force", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="run the MCMC sampler")
    fit.add_argument("--config", required=True)
    fit.add_argument("--data", required=True)
    fit.add_argument("--out", required=True)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--chains", type=int, default=1)
    fit.add_argument("--holdout", type=float)
    fit.add_argument("--force", action="store_true")
    fit.set_defaults(func=cmd_fit)

    pre = sub.add_parser("predict", help="posterior predictive summaries")
    pre.add_argument("--posterior", required=True)
    pre.add_argument("--data", required=True)
    pre.add_argument("--targets", required=True)
    pre.add_argument("--out", required=True)
    pre.add_argument("--seed", type=int)
    pre.add_argument("--draws-per-sample", type=int, default=1)
    pre.add_argument("--force", action="store_true")
    pre.set_defaults(func=cmd_predict)

    val = sub.add_parser("validate", help="randomized quantile residuals")
    val.add_argument("--posterior", required=True)
    val.add_argument("--data", required=True)
    val.add_argument("--out", required=True)
    val.add_argument("--max-samples", type=int)
    val.add_argument("--force", action="store_true")
    val.set_defaults(func=cmd_validate)

    sco = sub.add_parser("score", help="proper scoring rules on a holdout")
    sco.add_argument("--posterior", required=True)
    sco.add_argument("--data", required=True)
    sco.add_argument("--split")
    sco.add_argument("--test")
    sco.add_argument("--out", required=True)
    sco.add_argument("--seed", type=int)
    sco.add_argument("--draws-per-sample", type=int, default=1)
    sco.add_argument("--force", action="store_true")
    sco.set_defaults(func=cmd_score)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
