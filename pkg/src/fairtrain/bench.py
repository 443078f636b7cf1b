"""Experiment runner: JSON run configs, repeated seeded runs, aggregation,
and artifact emission (CSV trajectories, metrics.json, SVG plots, model
checkpoints).

A run config is strict JSON (unknown keys are rejected, errors carry a JSON
pointer).  Repetition i runs with seed base_seed + i driving both the weight
initialization and every sampler, so a config pins its results exactly;
wall-clock timings appear only in the trajectory CSVs.  metrics.json holds
per-run and aggregate fairness reports and is byte-identical across
re-executions of the same config.
"""

from __future__ import annotations

import base64
import concurrent.futures
import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import net as nets
from .data import (
    CsvSchema,
    Scaler,
    SyntheticConfig,
    apply_scaler,
    fit_scaler,
    generate_synthetic,
    load_csv,
    stratified_split,
)
from .metrics import FairnessReport, PredictionSet, fairness_report
from .optim import AlmConfig, SgdConfig, SswConfig, StGhConfig, run_alm, run_sgd, run_ssl_alm, run_ssw, run_stgh
from .problem import ConstraintSpec, FairnessProblem

ALGORITHMS = ("stgh", "ssl_alm", "alm", "ssw", "sgd")
METRIC_NAMES = ("ind", "sp", "sf", "ina", "wd")
GRID_POINTS = 200


class ConfigError(ValueError):
    """Config file violates the schema; pointer locates the offending node."""

    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer or "/"
        super().__init__(f"{self.pointer}: {message}")


class RunFailure(RuntimeError):
    """One or more repetitions aborted; partial artifacts were kept."""


@dataclass(frozen=True)
class CsvDataConfig:
    path: str
    schema_dict: tuple  # CsvSchema.to_dict() items frozen for equality

    def schema(self) -> CsvSchema:
        return CsvSchema.from_dict(dict(self.schema_dict))


@dataclass
class RunConfig:
    data: SyntheticConfig | CsvDataConfig
    split_frac: float
    split_seed: int
    hidden_dims: tuple[int, ...]
    activation: str
    constraint: ConstraintSpec
    algorithm: str
    algo_config: StGhConfig | AlmConfig | SswConfig | SgdConfig
    repetitions: int
    base_seed: int
    output_dir: str
    penalty_lambda: float = 0.0
    penalty_batch: int = 8
    log_every: int = 10

    def to_dict(self) -> dict:
        if isinstance(self.data, SyntheticConfig):
            d = {"kind": "synthetic", "n": self.data.n, "dim": self.data.dim,
                 "group_weights": list(self.data.group_weights),
                 "positive_rates": list(self.data.positive_rates),
                 "seed": self.data.seed, "class_sep": self.data.class_sep,
                 "group_shift": self.data.group_shift}
        else:
            d = {"kind": "csv", "path": self.data.path,
                 "schema": dict(self.data.schema_dict)}
        params = {k: v for k, v in vars(self.algo_config).items()}
        if self.algorithm == "alm":
            params.pop("mu", None)
        if self.algorithm == "sgd" and self.penalty_lambda > 0.0:
            params["penalty_lambda"] = self.penalty_lambda
            params["penalty_batch"] = self.penalty_batch
        return {
            "data": d,
            "split": {"train_frac": self.split_frac, "seed": self.split_seed},
            "network": {"hidden_dims": list(self.hidden_dims), "activation": self.activation},
            "constraint": {"kind": self.constraint.kind, "delta": self.constraint.delta,
                           "group_pair": list(self.constraint.group_pair)},
            "algorithm": {"name": self.algorithm, "params": params},
            "repetitions": self.repetitions,
            "base_seed": self.base_seed,
            "output_dir": self.output_dir,
            "log_every": self.log_every,
        }


@dataclass
class AggregateSummary:
    repetitions: int
    metric_stats: dict          # {"train": {metric: {"mean":…, "std":…}}, "test": …}
    trajectory: dict = field(default_factory=dict)  # series -> {"t":…, "mean":…, …}


# ---------------------------------------------------------------------------
# config parsing

def _expect_dict(node, ptr):
    if not isinstance(node, dict):
        raise ConfigError(f"expected an object, got {type(node).__name__}", ptr)


def _check_keys(node, ptr, required, optional=()):
    _expect_dict(node, ptr)
    for key in required:
        if key not in node:
            raise ConfigError(f"missing required key {key!r}", ptr)
    unknown = set(node) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}", ptr)


def _number(node, key, ptr, integer=False, default=None):
    if key not in node:
        if default is not None:
            return default
        raise ConfigError(f"missing required key {key!r}", ptr)
    v = node[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError("expected a number", f"{ptr}/{key}")
    if integer and int(v) != v:
        raise ConfigError("expected an integer", f"{ptr}/{key}")
    return int(v) if integer else float(v)


def _string(node, key, ptr, default=None):
    if key not in node:
        if default is not None:
            return default
        raise ConfigError(f"missing required key {key!r}", ptr)
    if not isinstance(node[key], str):
        raise ConfigError("expected a string", f"{ptr}/{key}")
    return node[key]


def _num_list(node, key, ptr, integer=False):
    if key not in node:
        raise ConfigError(f"missing required key {key!r}", ptr)
    v = node[key]
    if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
        raise ConfigError("expected a list of numbers", f"{ptr}/{key}")
    if integer and any(int(x) != x for x in v):
        raise ConfigError("expected integers", f"{ptr}/{key}")
    return [int(x) if integer else float(x) for x in v]


_ALGO_FIELDS = {
    "stgh": (StGhConfig, {"iterations": True, "p0": False, "alpha0": False,
                          "alpha_hat": False, "rho": False, "tau": False,
                          "beta": False, "lam": False, "j_base": False}),
    "ssl_alm": (AlmConfig, {"iterations": True, "mu": False, "rho": False,
                            "tau": False, "eta": False, "beta_smooth": False,
                            "M_y": False}),
    "alm": (AlmConfig, {"iterations": True, "rho": False, "tau": False,
                        "eta": False, "beta_smooth": False, "M_y": False}),
    "ssw": (SswConfig, {"iterations": True, "eta_f": False, "eta_c": False,
                        "eps0": False, "switch_iter": False, "decay": False,
                        "batch": False, "k0": False}),
    "sgd": (SgdConfig, {"iterations": True, "lr": False, "batch": False}),
}
_INT_PARAMS = {"iterations", "j_base", "switch_iter", "batch", "k0", "penalty_batch"}


def parse_config_dict(cfg: dict, pointer: str = "") -> RunConfig:
    """Validate a run-config object; raises ConfigError with a JSON pointer."""
    _check_keys(cfg, pointer, ("data", "split", "network", "constraint",
                               "algorithm", "repetitions", "base_seed", "output_dir"),
                optional=("log_every",))

    dnode, dptr = cfg["data"], f"{pointer}/data"
    _expect_dict(dnode, dptr)
    kind = _string(dnode, "kind", dptr)
    if kind == "synthetic":
        _check_keys(dnode, dptr, ("kind", "n", "dim", "group_weights",
                                  "positive_rates", "seed"),
                    optional=("class_sep", "group_shift"))
        try:
            data = SyntheticConfig(
                n=_number(dnode, "n", dptr, integer=True),
                dim=_number(dnode, "dim", dptr, integer=True),
                group_weights=tuple(_num_list(dnode, "group_weights", dptr)),
                positive_rates=tuple(_num_list(dnode, "positive_rates", dptr)),
                seed=_number(dnode, "seed", dptr, integer=True),
                class_sep=_number(dnode, "class_sep", dptr, default=1.0),
                group_shift=_number(dnode, "group_shift", dptr, default=0.5),
            )
        except ValueError as err:
            raise ConfigError(str(err), dptr) from None
    elif kind == "csv":
        _check_keys(dnode, dptr, ("kind", "path", "schema"))
        snode, sptr = dnode["schema"], f"{dptr}/schema"
        _check_keys(snode, sptr, ("label_col", "group_col", "feature_cols",
                                  "positive_label", "group_map"),
                    optional=("categorical_cols", "categories"))
        try:
            schema = CsvSchema.from_dict(snode)
        except (ValueError, KeyError, TypeError) as err:
            raise ConfigError(str(err), sptr) from None
        data = CsvDataConfig(path=_string(dnode, "path", dptr),
                             schema_dict=tuple(sorted(schema.to_dict().items(),
                                                      key=lambda kv: kv[0])))
    else:
        raise ConfigError("kind must be 'synthetic' or 'csv'", f"{dptr}/kind")

    snode, sptr = cfg["split"], f"{pointer}/split"
    _check_keys(snode, sptr, ("train_frac", "seed"))
    split_frac = _number(snode, "train_frac", sptr)
    if not 0.0 < split_frac < 1.0:
        raise ConfigError("train_frac must lie in (0, 1)", f"{sptr}/train_frac")
    split_seed = _number(snode, "seed", sptr, integer=True)

    nnode, nptr = cfg["network"], f"{pointer}/network"
    _check_keys(nnode, nptr, ("hidden_dims",), optional=("activation",))
    hidden = tuple(_num_list(nnode, "hidden_dims", nptr, integer=True))
    activation = _string(nnode, "activation", nptr, default="relu")
    if activation not in nets.ACTIVATIONS:
        raise ConfigError(f"activation must be one of {nets.ACTIVATIONS}",
                          f"{nptr}/activation")

    cnode, cptr = cfg["constraint"], f"{pointer}/constraint"
    _check_keys(cnode, cptr, ("kind", "delta"), optional=("group_pair",))
    pair = tuple(_num_list(cnode, "group_pair", cptr, integer=True)) \
        if "group_pair" in cnode else (0, 1)
    if len(pair) != 2:
        raise ConfigError("group_pair must have exactly two entries", f"{cptr}/group_pair")
    try:
        constraint = ConstraintSpec(kind=_string(cnode, "kind", cptr),
                                    delta=_number(cnode, "delta", cptr),
                                    group_pair=pair)
    except ValueError as err:
        raise ConfigError(str(err), cptr) from None

    anode, aptr = cfg["algorithm"], f"{pointer}/algorithm"
    _check_keys(anode, aptr, ("name", "params"))
    name = _string(anode, "name", aptr)
    if name not in ALGORITHMS:
        raise ConfigError(f"name must be one of {ALGORITHMS}", f"{aptr}/name")
    cls, fields = _ALGO_FIELDS[name]
    pnode, pptr = anode["params"], f"{aptr}/params"
    extra = ("penalty_lambda", "penalty_batch") if name == "sgd" else ()
    _check_keys(pnode, pptr, [k for k, req in fields.items() if req],
                optional=[k for k, req in fields.items() if not req] + list(extra))
    kwargs = {}
    for key in fields:
        if key in pnode:
            kwargs[key] = _number(pnode, key, pptr, integer=key in _INT_PARAMS)
    penalty_lambda = _number(pnode, "penalty_lambda", pptr, default=0.0) if name == "sgd" else 0.0
    penalty_batch = _number(pnode, "penalty_batch", pptr, integer=True, default=8) if name == "sgd" else 8
    if name == "alm":
        kwargs["mu"] = 0.0
    try:
        algo_config = cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err), pptr) from None

    reps = _number(cfg, "repetitions", pointer, integer=True)
    if reps < 1:
        raise ConfigError("repetitions must be >= 1", f"{pointer}/repetitions")

    return RunConfig(
        data=data,
        split_frac=split_frac,
        split_seed=split_seed,
        hidden_dims=hidden,
        activation=activation,
        constraint=constraint,
        algorithm=name,
        algo_config=algo_config,
        repetitions=reps,
        base_seed=_number(cfg, "base_seed", pointer, integer=True),
        output_dir=_string(cfg, "output_dir", pointer),
        penalty_lambda=penalty_lambda,
        penalty_batch=int(penalty_batch),
        log_every=_number(cfg, "log_every", pointer, integer=True, default=10),
    )


def parse_config(path) -> RunConfig:
    """Load and validate a JSON run config from disk."""
    try:
        with open(path, encoding="utf-8") as f:
            raw = f.read()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    if not raw.strip():
        raise ConfigError("config file is empty")
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON: {err}") from None
    return parse_config_dict(obj)


# ---------------------------------------------------------------------------
# model checkpoints

MODEL_FORMAT = "fairtrain-model-v1"


def save_model(path, spec: nets.NetworkSpec, params: np.ndarray, scaler: Scaler,
               schema: CsvSchema | None = None, threshold: float = 0.5) -> None:
    """JSON checkpoint: network spec plus base64 little-endian float64 weights."""
    doc = {
        "format": MODEL_FORMAT,
        "network": {"input_dim": spec.input_dim,
                    "hidden_dims": list(spec.hidden_dims),
                    "activation": spec.activation},
        "params_b64": base64.b64encode(
            np.ascontiguousarray(params, dtype="<f8").tobytes()).decode("ascii"),
        "scaler": {"mean": scaler.mean.tolist(), "std": scaler.std.tolist()},
        "threshold": threshold,
    }
    if schema is not None:
        doc["csv_schema"] = schema.to_dict()
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def load_model(path):
    """Inverse of save_model; returns (spec, params, scaler, schema, threshold)."""
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} checkpoint: {path}")
    spec = nets.NetworkSpec(input_dim=doc["network"]["input_dim"],
                            hidden_dims=tuple(doc["network"]["hidden_dims"]),
                            activation=doc["network"]["activation"])
    params = np.frombuffer(base64.b64decode(doc["params_b64"]), dtype="<f8").astype(np.float64)
    if params.shape[0] != spec.param_count:
        raise ValueError("parameter payload length does not match the network spec")
    scaler = Scaler(mean=np.asarray(doc["scaler"]["mean"]),
                    std=np.asarray(doc["scaler"]["std"]))
    schema = CsvSchema.from_dict(doc["csv_schema"]) if "csv_schema" in doc else None
    return spec, params, scaler, schema, float(doc.get("threshold", 0.5))


# ---------------------------------------------------------------------------
# single runs

_RUNNERS = {"stgh": run_stgh, "ssl_alm": run_ssl_alm, "alm": run_alm,
            "ssw": run_ssw, "sgd": run_sgd}


def _build_problem(cfg: RunConfig):
    if isinstance(cfg.data, SyntheticConfig):
        ds = generate_synthetic(cfg.data)
        schema = None
    else:
        schema = cfg.data.schema()
        ds = load_csv(cfg.data.path, schema)
    split = stratified_split(ds, cfg.split_frac, cfg.split_seed)
    scaler = fit_scaler(ds, split.train)
    ds.X = apply_scaler(scaler, ds.X)
    spec = nets.NetworkSpec(input_dim=ds.X.shape[1], hidden_dims=cfg.hidden_dims,
                            activation=cfg.activation)
    problem = FairnessProblem(spec, ds, split.train, split.test, cfg.constraint,
                              penalty_lambda=cfg.penalty_lambda if cfg.algorithm == "sgd" else 0.0,
                              penalty_batch=cfg.penalty_batch)
    return problem, scaler, schema


def _report_pair(problem: FairnessProblem, params: np.ndarray):
    reports = {}
    for split_name, idx in (("train", problem.train_idx), ("test", problem.test_idx)):
        p = PredictionSet(scores=problem.scores(params, idx),
                          labels=problem.ds.y[idx], groups=problem.ds.g[idx])
        reports[split_name] = fairness_report(p)
    return reports


def _execute_run(cfg_dict: dict, run_index: int, out_dir: str) -> dict:
    """One seeded repetition; writes run_<i>.csv and model_<i>.json."""
    cfg = parse_config_dict(cfg_dict)
    problem, scaler, schema = _build_problem(cfg)
    seed = cfg.base_seed + run_index
    rng = np.random.default_rng(seed)
    x0 = problem.spec.init_params(rng)

    rows = []

    def logger(k, elapsed, tr_loss, tr_cons, te_loss, te_cons):
        rows.append([k, elapsed, tr_loss, *tr_cons, te_loss, *te_cons])

    runner = _RUNNERS[cfg.algorithm]
    params = runner(problem, x0, cfg.algo_config, rng, logger=logger,
                    log_every=cfg.log_every)

    m = problem.n_constraints
    header = (["iteration", "elapsed_s", "train_loss"]
              + [f"train_c{j}" for j in range(m)] + ["test_loss"]
              + [f"test_c{j}" for j in range(m)])
    with open(os.path.join(out_dir, f"run_{run_index}.csv"), "w", newline="",
              encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    save_model(os.path.join(out_dir, f"model_{run_index}.json"),
               problem.spec, params, scaler, schema)

    reports = _report_pair(problem, params)
    tr_loss, tr_cons, te_loss, te_cons = problem.log_eval(params)
    return {
        "seed": seed,
        "rows": np.asarray(rows, dtype=np.float64),
        "train": reports["train"].to_dict(),
        "test": reports["test"].to_dict(),
        "final_train_loss": tr_loss,
        "final_test_loss": te_loss,
        "final_train_constraints": np.asarray(tr_cons).tolist(),
        "final_test_constraints": np.asarray(te_cons).tolist(),
    }


# ---------------------------------------------------------------------------
# aggregation and artifacts

def _aggregate_metrics(records: list[dict]) -> dict:
    agg = {}
    for split_name in ("train", "test"):
        agg[split_name] = {}
        for metric in METRIC_NAMES:
            vals = np.array([r[split_name][metric] for r in records])
            std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            agg[split_name][metric] = {"mean": float(vals.mean()), "std": std}
    return agg


def _series_from_rows(rows: np.ndarray, m: int, which: str, split_name: str):
    t = rows[:, 1]
    if which == "loss":
        v = rows[:, 2] if split_name == "train" else rows[:, 3 + m]
    else:
        cols = rows[:, 3:3 + m] if split_name == "train" else rows[:, 4 + m:4 + 2 * m]
        v = cols.max(axis=1)  # worst one-sided component = infeasibility
    return t, v


def _aggregate_trajectories(records: list[dict], m: int) -> dict:
    out = {}
    for which in ("loss", "constraint"):
        for split_name in ("train", "test"):
            series = [_series_from_rows(r["rows"], m, which, split_name) for r in records]
            t_end = min(t[-1] for t, _ in series)
            grid = np.linspace(0.0, t_end, GRID_POINTS)
            vals = np.stack([np.interp(grid, t, v) for t, v in series])
            out[f"{which}_{split_name}"] = {
                "t": grid,
                "mean": vals.mean(axis=0),
                "median": np.median(vals, axis=0),
                "q25": np.quantile(vals, 0.25, axis=0),
                "q75": np.quantile(vals, 0.75, axis=0),
            }
    return out


def _svg_coords(xs, ys, x0, y0, w, h, xlim, ylim):
    sx = w / (xlim[1] - xlim[0]) if xlim[1] > xlim[0] else 1.0
    sy = h / (ylim[1] - ylim[0]) if ylim[1] > ylim[0] else 1.0
    px = x0 + (np.asarray(xs) - xlim[0]) * sx
    py = y0 + h - (np.asarray(ys) - ylim[0]) * sy
    return px, py


def emit_svg(path, t: np.ndarray, stats: dict, title: str, ylabel: str) -> None:
    """Standalone SVG line plot: mean/median/quartile polylines over time with
    a shaded interquartile band; linear axes with numeric tick labels."""
    W, H = 560.0, 360.0
    x0, y0, pw, ph = 70.0, 30.0, W - 100.0, H - 90.0
    lo = min(float(np.min(stats[k])) for k in ("mean", "median", "q25", "q75"))
    hi = max(float(np.max(stats[k])) for k in ("mean", "median", "q25", "q75"))
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    ylim = (lo - pad, hi + pad)
    xlim = (float(t[0]), float(t[-1]) if t[-1] > t[0] else float(t[0]) + 1.0)

    def pts(xs, ys):
        px, py = _svg_coords(xs, ys, x0, y0, pw, ph, xlim, ylim)
        return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" '
        f'viewBox="0 0 {W:.0f} {H:.0f}">',
        f'<rect x="0" y="0" width="{W:.0f}" height="{H:.0f}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-size="13" '
        f'font-family="sans-serif">{title}</text>',
    ]
    band_x = np.concatenate([t, t[::-1]])
    band_y = np.concatenate([stats["q75"], stats["q25"][::-1]])
    parts.append(f'<polygon points="{pts(band_x, band_y)}" fill="#9ecae1" '
                 f'fill-opacity="0.45" stroke="none"/>')
    styles = {"q25": ("#6baed6", "2,3", 1.0), "q75": ("#6baed6", "2,3", 1.0),
              "median": ("#2171b5", "6,3", 1.3), "mean": ("#08306b", "", 1.6)}
    for name, (color, dash, width) in styles.items():
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        parts.append(f'<polyline points="{pts(t, stats[name])}" fill="none" '
                     f'stroke="{color}" stroke-width="{width}"{dash_attr}/>')
    # axes
    parts.append(f'<line x1="{x0:.1f}" y1="{y0 + ph:.1f}" x2="{x0 + pw:.1f}" '
                 f'y2="{y0 + ph:.1f}" stroke="black"/>')
    parts.append(f'<line x1="{x0:.1f}" y1="{y0:.1f}" x2="{x0:.1f}" '
                 f'y2="{y0 + ph:.1f}" stroke="black"/>')
    for frac in np.linspace(0.0, 1.0, 5):
        tx = xlim[0] + frac * (xlim[1] - xlim[0])
        px = x0 + frac * pw
        parts.append(f'<line x1="{px:.1f}" y1="{y0 + ph:.1f}" x2="{px:.1f}" '
                     f'y2="{y0 + ph + 4:.1f}" stroke="black"/>')
        parts.append(f'<text x="{px:.1f}" y="{y0 + ph + 16:.1f}" text-anchor="middle" '
                     f'font-size="10" font-family="sans-serif">{tx:.3g}</text>')
        ty = ylim[0] + frac * (ylim[1] - ylim[0])
        py = y0 + ph - frac * ph
        parts.append(f'<line x1="{x0 - 4:.1f}" y1="{py:.1f}" x2="{x0:.1f}" '
                     f'y2="{py:.1f}" stroke="black"/>')
        parts.append(f'<text x="{x0 - 7:.1f}" y="{py + 3:.1f}" text-anchor="end" '
                     f'font-size="10" font-family="sans-serif">{ty:.3g}</text>')
    parts.append(f'<text x="{x0 + pw / 2:.1f}" y="{H - 8:.1f}" text-anchor="middle" '
                 f'font-size="11" font-family="sans-serif">time (s)</text>')
    parts.append(f'<text x="16" y="{y0 + ph / 2:.1f}" text-anchor="middle" '
                 f'font-size="11" font-family="sans-serif" '
                 f'transform="rotate(-90 16 {y0 + ph / 2:.1f})">{ylabel}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts))
        f.write("\n")


def run_experiment(cfg: RunConfig, jobs: int = 1) -> AggregateSummary:
    """Execute repetitions seeded base_seed..base_seed+R-1 and write artifacts.

    Any repetition aborting raises RunFailure after flagging the failure in
    metrics.json; artifacts of completed repetitions are kept.
    """
    out_dir = cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    cfg_dict = cfg.to_dict()

    records: dict[int, dict] = {}
    failures: dict[int, str] = {}
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_execute_run, cfg_dict, i, out_dir): i
                       for i in range(cfg.repetitions)}
            for fut in concurrent.futures.as_completed(futures):
                i = futures[fut]
                try:
                    records[i] = fut.result()
                except Exception as err:  # noqa: BLE001 - reported via RunFailure
                    failures[i] = str(err)
    else:
        for i in range(cfg.repetitions):
            try:
                records[i] = _execute_run(cfg_dict, i, out_dir)
            except KeyboardInterrupt:
                raise
            except Exception as err:  # noqa: BLE001
                failures[i] = str(err)

    ordered = [records[i] for i in sorted(records)]
    doc = {
        "config": cfg_dict,
        "runs": [{k: v for k, v in r.items() if k != "rows"} for r in ordered],
    }
    if failures:
        doc["status"] = "failed"
        doc["failures"] = {str(i): failures[i] for i in sorted(failures)}
    else:
        doc["status"] = "ok"
        doc["aggregate"] = _aggregate_metrics(ordered)
    with open(os.path.join(out_dir, "metrics.json"), "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")

    if failures:
        detail = "; ".join(f"run {i}: {msg}" for i, msg in sorted(failures.items()))
        raise RunFailure(f"{len(failures)} of {cfg.repetitions} runs failed ({detail})")

    m = ordered[0]["rows"].shape[1] - 4  # iteration, elapsed, 2 losses
    m //= 2
    trajectory = _aggregate_trajectories(ordered, m)
    for key, series in trajectory.items():
        which, split_name = key.split("_")
        ylabel = "loss" if which == "loss" else "max constraint component"
        emit_svg(os.path.join(out_dir, f"trajectory_{which}_{split_name}.svg"),
                 series["t"], series, f"{cfg.algorithm} {which} ({split_name})", ylabel)

    return AggregateSummary(repetitions=cfg.repetitions,
                            metric_stats=doc["aggregate"], trajectory=trajectory)
