"""Config-driven experiment runner and command-line interface.

Experiments are declared as JSON documents; running one resolves defaults,
echoes the fully resolved configuration, executes every seed (isolating
per-seed failures), and writes deterministic artifacts: model checkpoints,
per-instance CSV tables, curve/plot data, and JSON summaries.  Every output
carries the resolved-config hash, the seed, and the package version, and
identical config + seed reruns are byte-identical.

Subcommands: gen-grid, train-egate, train-predictor, eval, skqd, bp, report,
dry-run.  Exit codes: 0 ok, 1 config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import itertools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, bpdiag, diffnet, egate, hgraph, nnvqe, qsim, skqd, svgplot
from .pauli import FAMILY_PARAMS, FamilySpec, build_family, exact_spectrum
from .qsim import NoiseSpec

VERSION_TAG = f"graphvqe-{__version__}"

# rng stream tags (mixed with the seed so every component has its own stream)
_RNG_EGATE, _RNG_PRED, _RNG_TEST, _RNG_SKQD, _RNG_HAAR = 11, 13, 17, 19, 23


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


# -----------------------------------------------------------------------------
# grids
# -----------------------------------------------------------------------------


def grid(family: str, ranges: dict, counts: dict | None = None, n: int | None = None) -> list:
    """Cartesian product of uniform parameter linspaces (endpoints included).

    ``ranges`` maps param -> (lo, hi) with counts in ``counts``, or
    param -> (lo, hi, count) when ``counts`` is omitted.
    """
    if family not in FAMILY_PARAMS:
        raise ConfigError(f"unknown family {family!r}")
    names = FAMILY_PARAMS[family]
    if set(ranges) != set(names):
        raise ConfigError(f"{family} grid must specify exactly params {list(names)}")
    axes = []
    for name in names:
        spec = list(ranges[name])
        if counts is not None:
            lo, hi = spec
            count = counts[name]
        else:
            lo, hi, count = spec
        if count < 2:
            raise ConfigError(f"grid for {name} needs count >= 2")
        if not hi > lo:
            raise ConfigError(f"empty range for {name}")
        axes.append(np.linspace(lo, hi, int(count)))
    if n is None:
        n = 9 if family.endswith("2d33") else 4
    return [
        FamilySpec(family, n, dict(zip(names, values)))
        for values in itertools.product(*axes)
    ]


# -----------------------------------------------------------------------------
# configuration resolution
# -----------------------------------------------------------------------------

_EGATE_LAYERS = {("xxz_1d", 4): 5, ("xxz_1d", 6): 7, ("xxz_1d", 8): 9,
                 ("xxz_x_1d", 4): 5, ("xxz_x_1d", 6): 7, ("xxz_x_1d", 8): 9,
                 ("xxz_2d33", 9): 9, ("xyz_2d33", 9): 5}
_EGATE_DECODER = {4: 18, 6: 32, 8: 55, 9: 45}

_DEFAULTS = {
    "eval": {
        "experiment": "eval",
        "family": "xxz_1d",
        "n": 4,
        "depth": 2,
        "seeds": [0],
        "outdir": "results/eval",
        "train_grid": None,
        "test_grid": None,
        "variants": ["nnvqe", "input_expanded", "egate"],
        "egate": None,
        "predictor": None,
    },
    "skqd": {
        "experiment": "skqd",
        "family": "xxz_1d",
        "n": 8,
        "depth": 2,
        "seeds": [0],
        "outdir": "results/skqd",
        "train_grid": None,
        "test_grid": None,
        "egate": None,
        "predictor": None,
        "skqd": None,
    },
    "bp": {
        "experiment": "bp",
        "seeds": [0],
        "outdir": "results/bp",
        "bp": None,
    },
}

_EGATE_DEFAULTS = {
    "layers": None,  # per-family table, falling back to 5
    "decoder_hidden": None,  # per-size table, falling back to 18
    "merge": "mean",
    "pooling": "sum",
    "pooling_dim": None,
    "contribution": 0.5,
    "attention_hidden": [16, 16],
    "edge_update_hidden": [16, 16],
    "beta": 1.0,
    "init_std": 0.1,
    "mode": "until",  # "until" trains to tol; "epochs" runs a fixed schedule
    "tol": 1e-4,
    "max_steps": 3000,
    "lr": 3e-3,
    "optimizer": "adam",
    "epochs": 100,
    "batch": None,
    "schedule": None,  # [every, factor]
    "shuffle_note": "mini-batches shuffled with the run seed",
}

_PREDICTOR_DEFAULTS = {
    "hidden": [20, 40],
    "lr": 3e-3,
    "iters": 200,
    "init_std": 0.1,
}

_SKQD_DEFAULTS = {
    "d_max": 10,
    "shots": 25,
    "trotter_steps": 10,
    "noise": {"p1": 1e-3, "p2": 1e-2, "p_readout": 1e-2},
    "instances": 20,
    "providers": ["random", "nnvqe", "egate"],
}

_BP_DEFAULTS = {
    "methods": ["vqe", "nnvqe", "egate_dimn", "egate_dim1"],
    "sizes": [[3, 1], [4, 2], [5, 3], [6, 4], [7, 5]],
    "trials": 100,
    "hidden": [20],
    "encoder": {"lr": 0.1, "optimizer": "sgd", "tol": 1e-5, "max_steps": 5000},
}


def _merge_section(defaults: dict, given: dict | None, name: str) -> dict:
    out = copy.deepcopy(defaults)
    if given is None:
        return out
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} in section {name!r}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            out[key] = _merge_section(defaults[key], value, f"{name}.{key}")
        else:
            out[key] = value
    return out


def _family_grid_defaults(family: str) -> tuple:
    if family == "xxz_1d":
        return {"Jzz": [-3, 3, 20]}, {"Jzz": [-10, 10, 1000]}
    if family == "xxz_x_1d":
        return (
            {"Jzz": [-3, 3, 20], "Kx": [-3, 3, 20]},
            {"Jzz": [-10, 10, 200], "Kx": [-10, 10, 200]},
        )
    if family == "xxz_z_1d":
        return {"Jzz": [-3, 3, 20], "Kz": [-3, 3, 20]}, {"Jzz": [-10, 10, 200], "Kz": [-10, 10, 200]}
    if family == "xxz_2d33":
        return (
            {"Jzz1": [-3, 3, 20], "Jzz2": [-3, 3, 20]},
            {"Jzz1": [-10, 10, 200], "Jzz2": [-10, 10, 200]},
        )
    return (
        {"Jyy": [-1, 1, 5], "Jzz1": [-2, 2, 9], "Jzz2": [-2, 2, 9]},
        {"Jyy": [-4, 4, 20], "Jzz1": [-7, 7, 40], "Jzz2": [-7, 7, 40]},
    )


def resolve_config(raw: dict) -> dict:
    """Fill defaults and validate; the result echoes every effective value."""
    if "experiment" not in raw:
        raise ConfigError("config needs an 'experiment' kind")
    kind = raw["experiment"]
    if kind not in _DEFAULTS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    base = copy.deepcopy(_DEFAULTS[kind])
    for key, value in raw.items():
        if key not in base:
            raise ConfigError(f"unknown key {key!r} for experiment {kind!r}")
        base[key] = copy.deepcopy(value)

    if kind in ("eval", "skqd"):
        family, n = base["family"], base["n"]
        if family not in FAMILY_PARAMS:
            raise ConfigError(f"unknown family {family!r}")
        train_d, test_d = _family_grid_defaults(family)
        base["train_grid"] = base["train_grid"] or train_d
        base["test_grid"] = base["test_grid"] or test_d
        e = _merge_section(_EGATE_DEFAULTS, base["egate"], "egate")
        if e["layers"] is None:
            e["layers"] = _EGATE_LAYERS.get((family, n), 5)
        if e["decoder_hidden"] is None:
            e["decoder_hidden"] = _EGATE_DECODER.get(n, 18)
        base["egate"] = e
        base["predictor"] = _merge_section(_PREDICTOR_DEFAULTS, base["predictor"], "predictor")
        for gname in ("train_grid", "test_grid"):
            if set(base[gname]) != set(FAMILY_PARAMS[family]):
                raise ConfigError(f"{gname} params do not match family {family!r}")
    if kind == "skqd":
        base["skqd"] = _merge_section(_SKQD_DEFAULTS, base["skqd"], "skqd")
    if kind == "bp":
        base["bp"] = _merge_section(_BP_DEFAULTS, base["bp"], "bp")
        for method in base["bp"]["methods"]:
            if method not in ("vqe", "nnvqe") and not method.startswith("egate_"):
                raise ConfigError(f"unknown bp method {method!r}")
    if not base["seeds"]:
        raise ConfigError("seeds list is empty")
    return base


def config_hash(resolved: dict) -> str:
    """Short hash of the resolved config, excluding the output location."""
    doc = {k: v for k, v in resolved.items() if k != "outdir"}
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


# -----------------------------------------------------------------------------
# deterministic artifact IO
# -----------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def write_text(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path: str, doc) -> None:
    write_text(path, json.dumps(_jsonable(doc), sort_keys=True, indent=1) + "\n")


def _num(x) -> str:
    return repr(float(x))


def write_csv(path: str, header: list, rows: list, meta: str) -> None:
    lines = [f"# {meta}", ",".join(header)]
    for row in rows:
        lines.append(",".join(str(v) if isinstance(v, (str, int)) else _num(v) for v in row))
    write_text(path, "\n".join(lines) + "\n")


def read_csv(path: str) -> tuple:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    data_lines = [ln for ln in lines if not ln.startswith("#")]
    header = data_lines[0].split(",")
    return header, [ln.split(",") for ln in data_lines[1:]]


def _meta(resolved: dict, seed: int) -> str:
    return f"config={config_hash(resolved)} seed={seed} version={VERSION_TAG}"


# -----------------------------------------------------------------------------
# shared model training per seed
# -----------------------------------------------------------------------------


def _egate_scheme(family: str) -> hgraph.FeatureScheme:
    if family in ("xxz_1d",):
        return hgraph.FeatureScheme("one_hot")
    if family == "xxz_x_1d":
        return hgraph.FeatureScheme("invariant_field", node_axes=("x",))
    if family == "xxz_z_1d":
        return hgraph.FeatureScheme("invariant_field", node_axes=("z",))
    return hgraph.FeatureScheme("lattice_coord")


def _egate_config(resolved: dict, scheme: hgraph.FeatureScheme) -> egate.EgateConfig:
    e = resolved["egate"]
    family, n = resolved["family"], resolved["n"]
    pooling = e["pooling"]
    pooling_dim = e["pooling_dim"]
    if family.endswith("2d33") and e["pooling"] == "sum":
        pooling, pooling_dim = "mlp", 8  # fixed-width latent for the lattice families
    return egate.EgateConfig(
        layers=e["layers"],
        node_dim=scheme.node_dim(n),
        edge_dim=scheme.edge_dim,
        contribution=e["contribution"],
        merge=e["merge"],
        pooling=pooling,
        pooling_dim=pooling_dim,
        attention_hidden=tuple(e["attention_hidden"]),
        edge_update_hidden=tuple(e["edge_update_hidden"]),
        decoder_hidden=e["decoder_hidden"],
        beta=e["beta"],
        init_std=e["init_std"],
    )


def _train_egate_for_seed(resolved: dict, seed: int, train_specs: list) -> tuple:
    scheme = _egate_scheme(resolved["family"])
    graphs = [hgraph.encode(build_family(s), scheme) for s in train_specs]
    config = _egate_config(resolved, scheme)
    model = egate.EgateModel(
        config, graphs[0].n, graphs[0].m, np.random.default_rng((seed, _RNG_EGATE))
    )
    e = resolved["egate"]
    if e["mode"] == "until":
        steps, history = egate.train_until(
            model, graphs, tol=e["tol"], max_steps=e["max_steps"], lr=e["lr"],
            seed=seed, optimizer=e["optimizer"],
        )
    else:
        schedule = None
        if e["schedule"]:
            from .diffnet import StepDecay

            schedule = StepDecay(int(e["schedule"][0]), float(e["schedule"][1]))
        history = egate.train(
            model,
            graphs,
            egate.EgateTrainConfig(
                epochs=e["epochs"], lr=e["lr"], batch_size=e["batch"],
                schedule=schedule, seed=seed, optimizer=e["optimizer"],
            ),
        )
        steps = len(history)
    return model, scheme, {"steps": steps, "final_loss": history[-1], "initial_loss": history[0]}


def _variant_for(name: str, model, scheme):
    if name == "nnvqe":
        return nnvqe.Baseline(), None
    if name == "input_expanded":
        return nnvqe.InputExpanded(model.latent_dim), None
    if name == "egate":
        return nnvqe.EgateConditioned(scheme), model
    raise ConfigError(f"unknown predictor variant {name!r}")


def _train_predictor_for_seed(resolved, seed, train_specs, name, model, scheme):
    variant, encoder = _variant_for(name, model, scheme)
    p = resolved["predictor"]
    n, depth = resolved["n"], resolved["depth"]
    pred = nnvqe.Predictor(
        nnvqe.PredictorConfig(
            input_dim=nnvqe.input_dim(variant, train_specs[0], encoder),
            output_dim=qsim.hea_param_count(n, depth),
            hidden=tuple(p["hidden"]),
            init_std=p["init_std"],
        ),
        np.random.default_rng((seed, _RNG_PRED)),
    )
    history = nnvqe.train(
        pred, train_specs, depth,
        nnvqe.TrainConfig(iters=p["iters"], lr=p["lr"], seed=seed),
        variant, encoder,
    )
    return pred, variant, encoder, history


# -----------------------------------------------------------------------------
# experiment kinds
# -----------------------------------------------------------------------------


def _specs_from_grid(resolved: dict, which: str) -> list:
    g = resolved[which]
    return grid(resolved["family"], g, n=resolved["n"])


def _spectra_for(specs: list) -> dict:
    out = {}
    for s in specs:
        if s.key() not in out:
            out[s.key()] = exact_spectrum(build_family(s))
    return out


def _param_columns(family: str) -> list:
    return list(FAMILY_PARAMS[family])


def run_eval_seed(resolved: dict, seed: int) -> dict:
    outdir = os.path.join(resolved["outdir"], f"seed_{seed}")
    train_specs = _specs_from_grid(resolved, "train_grid")
    test_specs = _specs_from_grid(resolved, "test_grid")
    spectra = _spectra_for(test_specs)
    meta = _meta(resolved, seed)

    needs_egate = any(v in ("egate", "input_expanded") for v in resolved["variants"])
    model = scheme = None
    egate_info = None
    if needs_egate:
        model, scheme, egate_info = _train_egate_for_seed(resolved, seed, train_specs)
        write_text(os.path.join(outdir, "egate.json"), model.checkpoint_json())

    metrics = {}
    for name in resolved["variants"]:
        pred, variant, encoder, history = _train_predictor_for_seed(
            resolved, seed, train_specs, name, model, scheme
        )
        report = nnvqe.evaluate(
            pred, test_specs, spectra, resolved["depth"], variant, encoder, seed=seed
        )
        metrics[name] = report.summary()
        metrics[name]["initial_cost"] = history[0]
        metrics[name]["final_cost"] = history[-1]
        write_text(
            os.path.join(outdir, f"predictor_{name}.json"),
            json.dumps(
                {"weights": json.loads(diffnet.state_to_json(pred.state_dict()))},
                sort_keys=True,
            ),
        )
        pcols = _param_columns(resolved["family"])
        rows = []
        for k, s in enumerate(test_specs):
            rows.append(
                [resolved["family"]]
                + [s.params[c] for c in pcols]
                + [report.e_pred[k], report.e0[k], report.sq_err[k], report.rel_err[k], report.fidelity[k]]
            )
        write_csv(
            os.path.join(outdir, f"metrics_{name}.csv"),
            ["family"] + pcols + ["e_pred", "e0", "sq_err", "rel_err", "fidelity"],
            rows,
            meta,
        )
    summary = {
        "config": config_hash(resolved),
        "seed": seed,
        "version": VERSION_TAG,
        "metrics": metrics,
        "egate": egate_info,
    }
    write_json(os.path.join(outdir, "summary.json"), summary)
    return summary


def run_skqd_seed(resolved: dict, seed: int) -> dict:
    outdir = os.path.join(resolved["outdir"], f"seed_{seed}")
    family, n, depth = resolved["family"], resolved["n"], resolved["depth"]
    s = resolved["skqd"]
    meta = _meta(resolved, seed)
    train_specs = _specs_from_grid(resolved, "train_grid")
    test_pool = _specs_from_grid(resolved, "test_grid")
    rng_pick = np.random.default_rng((seed, _RNG_TEST))
    chosen = [test_pool[k] for k in rng_pick.choice(len(test_pool), size=s["instances"], replace=False)]

    model, scheme, egate_info = _train_egate_for_seed(resolved, seed, train_specs)
    predictors = {}
    for name in ("nnvqe", "egate"):
        if name in s["providers"]:
            pred, variant, encoder, _ = _train_predictor_for_seed(
                resolved, seed, train_specs, name, model, scheme
            )
            predictors[name] = (pred, variant, encoder)

    noise = None if s["noise"] is None else NoiseSpec(**s["noise"])
    config = skqd.SkqdConfig(
        d_max=s["d_max"], trotter_steps=s["trotter_steps"], shots=s["shots"],
        noise=noise, seed=seed,
    )
    haar_state = skqd.haar_initial_state(n, np.random.default_rng((seed, _RNG_HAAR)))

    rows = []
    fidelities = {p: [] for p in s["providers"]}
    final_errors = {p: [] for p in s["providers"]}
    for inst_id, spec in enumerate(chosen):
        h = build_family(spec)
        spectrum = exact_spectrum(h)
        for provider in s["providers"]:
            if provider == "random":
                init = haar_state
            else:
                pred, variant, encoder = predictors[provider]
                theta, _, _ = nnvqe.infer(pred, spec, depth, variant, encoder)
                init = skqd.ansatz_initial_state(n, depth, theta)
            fidelities[provider].append(qsim.fidelity(init.psi, spectrum))
            rng = np.random.default_rng((seed, _RNG_SKQD, inst_id, hash(provider) % (2**32)))
            curve = skqd.run_curve(h, init, config, spectrum.ground_energy, rng)
            for pt in curve:
                rows.append(
                    [family, inst_id, provider, s["shots"], pt.d, pt.error, pt.subspace_size, seed]
                )
            final_errors[provider].append(curve[-1].error)
    write_csv(
        os.path.join(outdir, "skqd_curves.csv"),
        ["family", "instance_id", "provider", "shots", "d", "rel_error", "subspace_size", "seed"],
        rows,
        meta,
    )
    summary = {
        "config": config_hash(resolved),
        "seed": seed,
        "version": VERSION_TAG,
        "egate": egate_info,
        "mean_fidelity": {p: float(np.mean(v)) for p, v in fidelities.items()},
        "mean_final_error": {p: float(np.mean(v)) for p, v in final_errors.items()},
    }
    write_json(os.path.join(outdir, "summary.json"), summary)
    return summary


def run_bp_seed(resolved: dict, seed: int) -> dict:
    outdir = os.path.join(resolved["outdir"], f"seed_{seed}")
    b = resolved["bp"]
    meta = _meta(resolved, seed)
    sizes = [tuple(sz) for sz in b["sizes"]]
    rows = []
    fits = {}
    for method in b["methods"]:
        if method.startswith("egate_"):
            base, mode = "egate", method.split("_", 1)[1]
        else:
            base, mode = method, "dimn"
        sweep = bpdiag.gradient_sweep(
            base, sizes=sizes, trials=b["trials"], seed_base=seed,
            latent_mode=mode, hidden=tuple(b["hidden"]), encoder_seed=seed,
        )
        ns = [r[0] for r in sweep]
        mean_vars = [r[3].mean_var for r in sweep]
        for (n, depth, p_count, stats) in sweep:
            rows.append([method, n, depth, p_count, stats.mean_var, stats.sd_var])
        fit = bpdiag.log2_fit(ns, mean_vars)
        fits[method] = {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2}
    write_csv(
        os.path.join(outdir, "bp_stats.csv"),
        ["method", "n", "D", "P", "mean_var", "sd_var"],
        rows,
        meta,
    )
    write_json(os.path.join(outdir, "bp_fits.json"), fits)
    summary = {
        "config": config_hash(resolved),
        "seed": seed,
        "version": VERSION_TAG,
        "fits": fits,
    }
    write_json(os.path.join(outdir, "summary.json"), summary)
    return summary


_RUNNERS = {"eval": run_eval_seed, "skqd": run_skqd_seed, "bp": run_bp_seed}


def run(resolved: dict, only_stage: str | None = None) -> dict:
    """Execute every seed; failures are recorded and do not stop other seeds."""
    outdir = resolved["outdir"]
    write_json(os.path.join(outdir, "resolved_config.json"), resolved)
    runner = _RUNNERS[resolved["experiment"]]
    workers = int(os.environ.get("GRAPHVQE_WORKERS", "1"))
    results, failures = {}, {}

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {seed: pool.submit(runner, resolved, seed) for seed in resolved["seeds"]}
            for seed, fut in futures.items():
                try:
                    results[seed] = fut.result()
                except Exception as err:  # noqa: BLE001 - seed isolation
                    failures[str(seed)] = f"{err.__class__.__name__}: {err}"
    else:
        for seed in resolved["seeds"]:
            try:
                results[seed] = runner(resolved, seed)
            except Exception as err:  # noqa: BLE001 - seed isolation
                failures[str(seed)] = f"{err.__class__.__name__}: {err}"
    run_summary = {
        "config": config_hash(resolved),
        "version": VERSION_TAG,
        "completed_seeds": sorted(results),
        "failed_seeds": failures,
    }
    write_json(os.path.join(outdir, "run_summary.json"), run_summary)
    if failures and not results:
        raise RuntimeError(f"all seeds failed: {failures}")
    return run_summary


# -----------------------------------------------------------------------------
# reporting
# -----------------------------------------------------------------------------


def _seed_dirs(outdir: str) -> list:
    dirs = sorted(
        d for d in os.listdir(outdir) if d.startswith("seed_") and os.path.isdir(os.path.join(outdir, d))
    )
    if not dirs:
        raise RuntimeError(f"no seed results under {outdir}")
    return [os.path.join(outdir, d) for d in dirs]


def _sample_sd(values: np.ndarray) -> float:
    return float(values.std(ddof=1)) if values.size > 1 else 0.0


def report_eval(outdir: str) -> dict:
    """Aggregate per-seed metrics: mean +- sample SD and improvement columns."""
    summaries = [json.load(open(os.path.join(d, "summary.json"))) for d in _seed_dirs(outdir)]
    variants = list(summaries[0]["metrics"])
    for s in summaries:
        if list(s["metrics"]) != variants:
            raise RuntimeError("metric names differ across seed directories")
    table = {}
    for variant in variants:
        table[variant] = {}
        for metric in ("mse", "mre", "mf"):
            values = np.array([s["metrics"][variant][metric] for s in summaries])
            table[variant][metric] = {
                "mean": float(values.mean()),
                "sd": _sample_sd(values),
                "values": values.tolist(),
            }
    improvements = {}
    if "nnvqe" in table:
        for variant in variants:
            if variant == "nnvqe":
                continue
            improvements[variant] = {
                metric: nnvqe.improvement(
                    table[variant][metric]["mean"], table["nnvqe"][metric]["mean"], metric
                )
                for metric in ("mse", "mre", "mf")
            }
    rows = []
    for variant in variants:
        for metric in ("mse", "mre", "mf"):
            entry = table[variant][metric]
            impr = improvements.get(variant, {}).get(metric, "")
            rows.append([variant, metric, entry["mean"], entry["sd"], impr if impr == "" else impr])
    rep_dir = os.path.join(outdir, "report")
    write_csv(
        os.path.join(rep_dir, "aggregate.csv"),
        ["variant", "metric", "mean", "sd", "improvement_pct"],
        rows,
        f"aggregation=sample_sd version={VERSION_TAG}",
    )
    doc = {"table": table, "improvements": improvements, "sd_convention": "sample (ddof=1)"}
    write_json(os.path.join(rep_dir, "improvements.json"), doc)
    return doc


def report_skqd(outdir: str) -> dict:
    """Mean +- SD error curves per provider across seeds, plus plot data/SVG."""
    per_seed = {}  # provider -> d -> list of per-seed means
    fidelity_pre = {}
    for d in _seed_dirs(outdir):
        header, rows = read_csv(os.path.join(d, "skqd_curves.csv"))
        col = {name: k for k, name in enumerate(header)}
        acc = {}
        for row in rows:
            provider = row[col["provider"]]
            dim = int(row[col["d"]])
            acc.setdefault(provider, {}).setdefault(dim, []).append(float(row[col["rel_error"]]))
        for provider, dims in acc.items():
            for dim, errs in dims.items():
                per_seed.setdefault(provider, {}).setdefault(dim, []).append(float(np.mean(errs)))
        summary = json.load(open(os.path.join(d, "summary.json")))
        for provider, fid in summary["mean_fidelity"].items():
            fidelity_pre.setdefault(provider, []).append(fid)
    rows = []
    series = {}
    for provider in sorted(per_seed):
        xs, ys = [], []
        for dim in sorted(per_seed[provider]):
            vals = np.array(per_seed[provider][dim])
            rows.append([provider, dim, float(vals.mean()), _sample_sd(vals)])
            xs.append(dim)
            ys.append(max(float(vals.mean()), 1e-16))
        series[provider] = (xs, ys)
    rep_dir = os.path.join(outdir, "report")
    write_csv(
        os.path.join(rep_dir, "skqd_curve_data.csv"),
        ["provider", "d", "mean_rel_error", "sd"],
        rows,
        f"aggregation=mean_over_seeds version={VERSION_TAG}",
    )
    doc = {
        "mean_fidelity_per_seed_mean": {
            p: float(np.mean(v)) for p, v in fidelity_pre.items()
        },
        "mean_fidelity_per_seed": fidelity_pre,
    }
    write_json(os.path.join(rep_dir, "skqd_fidelity.json"), doc)
    svgplot.write_line_svg(
        os.path.join(rep_dir, "skqd_curves.svg"),
        series,
        title="Krylov warm-start convergence",
        xlabel="Krylov dimension d",
        ylabel="relative energy error",
        logy=True,
    )
    return doc


def report_bp(outdir: str) -> dict:
    """Average mean-variances over seeds and refit the log2 slopes."""
    acc = {}
    for d in _seed_dirs(outdir):
        header, rows = read_csv(os.path.join(d, "bp_stats.csv"))
        col = {name: k for k, name in enumerate(header)}
        for row in rows:
            method = row[col["method"]]
            n = int(row[col["n"]])
            acc.setdefault(method, {}).setdefault(n, []).append(float(row[col["mean_var"]]))
    fits = {}
    series = {}
    for method in sorted(acc):
        ns = sorted(acc[method])
        means = [float(np.mean(acc[method][n])) for n in ns]
        fit = bpdiag.log2_fit(ns, means)
        fits[method] = {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2}
        series[method] = (ns, means)
    rep_dir = os.path.join(outdir, "report")
    write_json(os.path.join(rep_dir, "bp_fit_summary.json"), fits)
    svgplot.write_line_svg(
        os.path.join(rep_dir, "bp_variances.svg"),
        series,
        title="Gradient variance vs system size",
        xlabel="qubits n",
        ylabel="mean gradient variance",
        logy=True,
    )
    return fits


def report(outdir: str) -> dict:
    resolved = json.load(open(os.path.join(outdir, "resolved_config.json")))
    kind = resolved["experiment"]
    if kind == "eval":
        return report_eval(outdir)
    if kind == "skqd":
        return report_skqd(outdir)
    return report_bp(outdir)


# -----------------------------------------------------------------------------
# CLI
# -----------------------------------------------------------------------------


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return resolve_config(raw)


def _plan(resolved: dict) -> str:
    lines = [
        f"experiment: {resolved['experiment']}",
        f"config hash: {config_hash(resolved)}",
        f"seeds: {resolved['seeds']}",
        f"outdir: {resolved['outdir']}",
    ]
    if resolved["experiment"] in ("eval", "skqd"):
        train = _specs_from_grid(resolved, "train_grid")
        test = _specs_from_grid(resolved, "test_grid")
        lines.append(f"family: {resolved['family']} n={resolved['n']} D={resolved['depth']}")
        lines.append(f"train instances: {len(train)}, test instances: {len(test)}")
        lines.append(f"egate: {json.dumps(resolved['egate'], sort_keys=True)}")
        lines.append(f"predictor: {json.dumps(resolved['predictor'], sort_keys=True)}")
    if resolved["experiment"] == "skqd":
        lines.append(f"skqd: {json.dumps(resolved['skqd'], sort_keys=True)}")
    if resolved["experiment"] == "bp":
        lines.append(f"bp: {json.dumps(resolved['bp'], sort_keys=True)}")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="graphvqe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_grid = sub.add_parser("gen-grid", help="print a family parameter grid as CSV")
    p_grid.add_argument("--family", required=True, choices=sorted(FAMILY_PARAMS))
    p_grid.add_argument("--n", type=int, default=None)
    p_grid.add_argument(
        "--range", dest="ranges", action="append", required=True,
        metavar="NAME=LO:HI:COUNT", help="one per tunable parameter",
    )
    p_grid.add_argument("--out", default=None, help="write CSV here instead of stdout")

    for name, help_text in (
        ("train-egate", "train only the graph encoder stage"),
        ("train-predictor", "train encoder (if needed) and predictors"),
        ("eval", "full generalization experiment"),
        ("skqd", "Krylov warm-start comparison"),
        ("bp", "gradient-variance sweep"),
        ("dry-run", "validate a config and print the plan"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", "-c", required=True)

    p_rep = sub.add_parser("report", help="aggregate seed results into tables/plot data")
    p_rep.add_argument("outdirs", nargs="+")

    args = parser.parse_args(argv)
    try:
        if args.command == "gen-grid":
            ranges = {}
            for item in args.ranges:
                name, spec = item.split("=", 1)
                lo, hi, count = spec.split(":")
                ranges[name] = [float(lo), float(hi), int(count)]
            specs = grid(args.family, ranges, n=args.n)
            names = list(FAMILY_PARAMS[args.family])
            lines = [",".join(["family", "n"] + names)]
            for s in specs:
                lines.append(",".join([s.family, str(s.n)] + [_num(s.params[p]) for p in names]))
            text = "\n".join(lines) + "\n"
            if args.out:
                write_text(args.out, text)
            else:
                sys.stdout.write(text)
            return 0
        if args.command == "report":
            for outdir in args.outdirs:
                report(outdir)
            return 0
        resolved = _load_config(args.config)
        if args.command == "dry-run":
            print(_plan(resolved))
            return 0
        expected = {"train-egate": "eval", "train-predictor": "eval",
                    "eval": "eval", "skqd": "skqd", "bp": "bp"}[args.command]
        if resolved["experiment"] != expected:
            raise ConfigError(
                f"{args.command} needs an {expected!r} config, got {resolved['experiment']!r}"
            )
        if args.command == "train-egate":
            outdir = resolved["outdir"]
            write_json(os.path.join(outdir, "resolved_config.json"), resolved)
            train_specs = _specs_from_grid(resolved, "train_grid")
            for seed in resolved["seeds"]:
                model, _, info = _train_egate_for_seed(resolved, seed, train_specs)
                write_text(os.path.join(outdir, f"seed_{seed}", "egate.json"), model.checkpoint_json())
                write_json(os.path.join(outdir, f"seed_{seed}", "egate_training.json"), info)
            return 0
        run(resolved)
        return 0
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {err.__class__.__name__}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
