"""Experiment orchestration: configs, runs, sweeps, comparisons, artifacts.

A run drives one (optimizer, stream) pair for the configured horizon and
writes two files into the output directory:

* ``<run_id>.csv`` — one row per round with the fixed column set declared
  in :data:`CSV_COLUMNS` (schema version on the first, commented line);
* ``<run_id>.json`` — a summary with the resolved config echo, regularity
  constants, stepsize-condition validation, final metrics and wallclock.

A single 64-bit master seed is split into stream/initialization sub-seeds
with ``numpy.random.SeedSequence(master).spawn(2)`` (first child: stream,
second child: initial decisions), so comparisons across optimizers share
the data stream exactly.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import Domain, OptimizerConfig, validate_config
from .errors import ConfigError, IoError, OboError
from .hypergrad import aid_gradient_at, inner_solve
from .metrics import (
    RunLog,
    blr_series,
    blr_static_series,
    hypergrad_error_series,
    running_sum,
    variation_stats,
)
from .optimizers import OracleWindow, initial_state, oagd_step, ogd_step, sobow_step
from .problems import (
    Drift,
    HyperOptParams,
    HyperRepParams,
    QuadraticParams,
    StreamConfig,
    make_stream,
)

log = logging.getLogger("obo")

CSV_SCHEMA = "obo-run-csv v1"
CSV_COLUMNS = (
    "t",
    "blr_instant",
    "blr_cumulative",
    "blr_static_cumulative",
    "hg_error",
    "inner_err",
    "h2_increment",
    "v1_increment",
    "x_norm",
    "y_norm",
    "wallclock_ns",
)

SUMMARY_SCHEMA = "obo-summary-v1"
OPTIMIZERS = ("sobow", "oagd", "ogd")
SWEEP_AXES = ("eta", "k_window", "n_inner", "alpha", "beta")
EXACT_TOL = 1e-10  # reference-gradient accuracy for metrics


@dataclass(frozen=True)
class MetricsFlags:
    blr: bool = True
    blr_static: bool = False
    hg_error: bool = True
    variations: bool = True
    timing: bool = True

    @property
    def needs_exact(self) -> bool:
        return self.blr or self.blr_static or self.hg_error or self.variations


@dataclass(frozen=True)
class ExperimentConfig:
    stream: StreamConfig
    optimizer: str
    optimizer_cfg: OptimizerConfig
    run_id: str
    output_dir: Path
    master_seed: int
    metrics: MetricsFlags = field(default_factory=MetricsFlags)
    init_scale: float = 1.0

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZERS}")
        bad = set('/\\:*?"<>|') & set(self.run_id)
        if not self.run_id or bad:
            raise ConfigError(f"run_id {self.run_id!r} is not filesystem-safe")


@dataclass(frozen=True)
class ArtifactSet:
    csv_path: Path
    summary_path: Path
    summary: dict


def split_seed(master_seed: int):
    """(stream_seed, init_generator) derived from the master seed."""
    children = np.random.SeedSequence(master_seed).spawn(2)
    stream_seed = int(children[0].generate_state(1, np.uint64)[0])
    init_rng = np.random.Generator(np.random.PCG64(children[1]))
    return stream_seed, init_rng


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _jsonable(obj):
    if isinstance(obj, (str, bool)) or obj is None:
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return str(obj)


def run_experiment(cfg: ExperimentConfig) -> ArtifactSet:
    """Run one experiment and write its CSV/JSON artifacts.

    Deterministic given the master seed: artifact numeric content is
    identical across invocations except for wallclock/timestamp fields.
    An optimizer failure still writes the summary (with the failing round
    recorded) before re-raising.
    """
    stream_seed, init_rng = split_seed(cfg.master_seed)
    stream_cfg = dataclasses.replace(cfg.stream, seed=stream_seed)
    stream = make_stream(stream_cfg)
    d1, d2 = stream_cfg.d1, stream_cfg.d2

    if cfg.init_scale > 0:
        x1 = cfg.init_scale * init_rng.standard_normal(d1)
        y1 = cfg.init_scale * init_rng.standard_normal(d2)
    else:
        x1 = np.zeros(d1)
        y1 = np.zeros(d2)

    opt_cfg = cfg.optimizer_cfg
    validation = validate_config(opt_cfg, stream.constants)
    for item in validation.items:
        if not item.passed:
            log.warning("config condition failed: %s (%s)", item.name, item.detail)

    state = initial_state(x1, y1, opt_cfg)
    past = OracleWindow(capacity=opt_cfg.k_window - 1)
    needs_exact = cfg.metrics.needs_exact

    rows_x, rows_ynext, rows_est = [], [], []
    rows_exact, rows_ystar, rows_fopt = [], [], []
    rows_ystar_prev, rows_fprev = [], []
    wallclocks = []
    prev_x = None
    warm_ystar = None
    error_info = None

    try:
        for t, oracle in enumerate(stream, start=1):
            tic = time.perf_counter_ns()
            if cfg.optimizer == "sobow":
                state, step_log = sobow_step(state, oracle, opt_cfg)
            elif cfg.optimizer == "ogd":
                state, step_log = ogd_step(state, oracle, opt_cfg)
            else:
                state, step_log, past = oagd_step(state, oracle, past, opt_cfg)
            wallclocks.append(time.perf_counter_ns() - tic)

            rows_x.append(step_log.x)
            rows_ynext.append(step_log.y_next)
            rows_est.append(step_log.record.grad)

            if needs_exact:
                if oracle.has_exact_inner:
                    ystar = oracle.y_star(step_log.x)
                else:
                    ystar = inner_solve(oracle, step_log.x, tol=EXACT_TOL, y0=warm_ystar)
                warm_ystar = ystar
                rows_exact.append(aid_gradient_at(oracle, step_log.x, ystar, EXACT_TOL))
                rows_ystar.append(ystar)
                rows_fopt.append(oracle.f_value(step_log.x, ystar))
                if prev_x is None:
                    rows_ystar_prev.append(np.full(d2, np.nan))
                    rows_fprev.append(np.nan)
                else:
                    if oracle.has_exact_inner:
                        ystar_prev = oracle.y_star(prev_x)
                    else:
                        ystar_prev = inner_solve(oracle, prev_x, tol=EXACT_TOL, y0=ystar)
                    rows_ystar_prev.append(ystar_prev)
                    rows_fprev.append(oracle.f_value(prev_x, ystar_prev))
            prev_x = step_log.x
    except OboError as exc:
        # Trim to the last fully completed round: a failure inside the
        # metrics recomputation leaves this round's row lists ragged.
        completed = len(rows_x)
        if needs_exact:
            completed = min(completed, len(rows_exact), len(rows_fprev))
        for rows in (rows_x, rows_ynext, rows_est, rows_exact, rows_ystar,
                     rows_fopt, rows_ystar_prev, rows_fprev, wallclocks):
            del rows[completed:]
        error_info = {"round": completed + 1, "message": str(exc)}
        log.error("run %s aborted at round %d: %s", cfg.run_id, error_info["round"], exc)

    rounds_done = len(rows_x)
    run_log = None
    if rounds_done and needs_exact:
        run_log = RunLog(
            x=np.stack(rows_x),
            y_next=np.stack(rows_ynext),
            est_grad=np.stack(rows_est),
            exact_grad=np.stack(rows_exact),
            y_star=np.stack(rows_ystar),
            f_at_opt=np.asarray(rows_fopt),
            y_star_at_prev_x=np.stack(rows_ystar_prev),
            f_at_prev_x=np.asarray(rows_fprev),
            wallclock_ns=np.asarray(wallclocks, dtype=np.int64),
        )

    columns = _metric_columns(cfg, stream, run_log, rows_x, rows_ynext, wallclocks)
    out_dir = Path(cfg.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"{cfg.run_id}.csv"
        _write_csv(csv_path, columns, rounds_done)
    except OSError as exc:
        raise IoError(f"cannot write artifacts under {out_dir}: {exc}") from exc

    summary = _summary(cfg, stream_cfg, stream, validation, columns, wallclocks, rounds_done, error_info)
    summary_path = out_dir / f"{cfg.run_id}.json"
    try:
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write summary {summary_path}: {exc}") from exc

    if error_info is not None:
        raise OboError(f"run {cfg.run_id} failed at round {error_info['round']}: {error_info['message']}")
    return ArtifactSet(csv_path=csv_path, summary_path=summary_path, summary=summary)


def _metric_columns(cfg, stream, run_log, rows_x, rows_ynext, wallclocks):
    """Assemble the per-round CSV columns (None cells render empty)."""
    t_count = len(rows_x)
    cols = {name: [None] * t_count for name in CSV_COLUMNS}
    cols["t"] = list(range(1, t_count + 1))
    cols["x_norm"] = [float(np.linalg.norm(x)) for x in rows_x]
    cols["y_norm"] = [float(np.linalg.norm(y)) for y in rows_ynext]
    cols["wallclock_ns"] = list(wallclocks) if cfg.metrics.timing else [None] * t_count

    if run_log is not None:
        k, eta = cfg.optimizer_cfg.k_window, cfg.optimizer_cfg.eta
        if cfg.metrics.blr:
            instant = blr_series(run_log, eta, k)
            cols["blr_instant"] = [float(v) for v in instant]
            cols["blr_cumulative"] = [float(v) for v in running_sum(instant)]
        if cfg.metrics.blr_static:
            static = blr_static_series(run_log, stream, eta, k)
            cols["blr_static_cumulative"] = [float(v) for v in running_sum(static)]
        if cfg.metrics.hg_error:
            cols["hg_error"] = [float(v) for v in hypergrad_error_series(run_log)]
        if cfg.metrics.variations:
            stats = variation_stats(run_log)
            cols["inner_err"] = [float(v) for v in stats.inner_err_series]
            cols["h2_increment"] = [float(v) for v in stats.h2_increments]
            cols["v1_increment"] = [float(v) for v in stats.v1_increments]
    return cols


def _write_csv(path: Path, columns: dict, rounds: int) -> None:
    lines = [f"# {CSV_SCHEMA}", ",".join(CSV_COLUMNS)]
    for i in range(rounds):
        lines.append(",".join(_format_cell(columns[name][i]) for name in CSV_COLUMNS))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _summary(cfg, stream_cfg, stream, validation, columns, wallclocks, rounds, error_info):
    final = {}
    if rounds:
        if cfg.metrics.blr and columns["blr_cumulative"][0] is not None:
            final["blr_cumulative"] = columns["blr_cumulative"][-1]
        if cfg.metrics.blr_static and columns["blr_static_cumulative"][0] is not None:
            final["blr_static_cumulative"] = columns["blr_static_cumulative"][-1]
        if cfg.metrics.hg_error and columns["hg_error"][0] is not None:
            tail = max(1, rounds // 10)
            final["mean_hg_error_last_10pct"] = float(np.mean(columns["hg_error"][-tail:]))
        if cfg.metrics.variations and columns["h2_increment"][0] is not None:
            # Proxies evaluate variation at the visited iterates: lower
            # bounds of the sup-based definitions.
            final["h2_proxy_lower_bound"] = float(running_sum(columns["h2_increment"])[-1])
            final["v1_proxy_lower_bound"] = float(running_sum(columns["v1_increment"])[-1])
        final["x_norm"] = columns["x_norm"][-1]
        final["y_norm"] = columns["y_norm"][-1]
    return {
        "schema": SUMMARY_SCHEMA,
        "run_id": cfg.run_id,
        "optimizer": cfg.optimizer,
        "master_seed": cfg.master_seed,
        "rounds": rounds,
        "config": {
            "stream": _jsonable(stream_cfg),
            "optimizer_cfg": _jsonable(cfg.optimizer_cfg),
            "metrics": _jsonable(cfg.metrics),
            "init_scale": cfg.init_scale,
        },
        "constants": _jsonable(stream.constants),
        "validation": [_jsonable(i) for i in validation.items],
        "final": final,
        "wallclock": {
            "step_total_ns": int(sum(wallclocks)),
            "timestamp_unix_ns": time.time_ns(),
        },
        "error": error_info,
    }


# --------------------------------------------------------------------------
# Sweeps and comparisons
# --------------------------------------------------------------------------


def _with_axis_value(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    try:
        value = int(value) if axis in ("k_window", "n_inner") else float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sweep value {value!r} is not numeric for axis {axis!r}") from exc
    opt = dataclasses.replace(cfg.optimizer_cfg, **{axis: value})
    run_id = f"{cfg.run_id}-{axis}-{value:g}" if isinstance(value, float) else f"{cfg.run_id}-{axis}-{value}"
    return dataclasses.replace(cfg, optimizer_cfg=opt, run_id=run_id)


def run_sweep(base: ExperimentConfig, axis: str, values: Sequence) -> ArtifactSet:
    """One run per value along ``axis``, all sharing the master seed.

    A failing run is recorded in the sweep summary and does not abort its
    siblings.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    values = list(values)
    if not values:
        raise ConfigError("sweep requires at least one value")

    runs = {}
    for value in values:
        sub = _with_axis_value(base, axis, value)
        key = sub.run_id.rsplit(f"{axis}-", 1)[-1]
        try:
            artifacts = run_experiment(sub)
            runs[key] = {"run_id": sub.run_id, "summary": artifacts.summary}
        except OboError as exc:
            log.error("sweep value %s failed: %s", value, exc)
            runs[key] = {"run_id": sub.run_id, "error": str(exc)}

    out_dir = Path(base.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {
        "schema": "obo-sweep-v1",
        "axis": axis,
        "base_run_id": base.run_id,
        "values": [_jsonable(v) for v in values],
        "runs": runs,
    }
    path = out_dir / f"{base.run_id}-sweep-{axis}.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return ArtifactSet(csv_path=path, summary_path=path, summary=summary)


def run_compare(configs: Sequence[ExperimentConfig], out_dir) -> dict:
    """Run each config and emit a side-by-side summary table."""
    if not configs:
        raise ConfigError("compare requires at least one config")
    rows = []
    for cfg in configs:
        cfg = dataclasses.replace(cfg, output_dir=Path(out_dir))
        try:
            artifacts = run_experiment(cfg)
            summary = artifacts.summary
            rows.append(
                {
                    "run_id": cfg.run_id,
                    "optimizer": cfg.optimizer,
                    "rounds": summary["rounds"],
                    "blr_cumulative": summary["final"].get("blr_cumulative"),
                    "mean_hg_error_last_10pct": summary["final"].get("mean_hg_error_last_10pct"),
                    "step_total_ns": summary["wallclock"]["step_total_ns"],
                }
            )
        except OboError as exc:
            rows.append({"run_id": cfg.run_id, "optimizer": cfg.optimizer, "error": str(exc)})
    table = {"schema": "obo-compare-v1", "rows": rows}
    path = Path(out_dir) / "compare.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return table


# --------------------------------------------------------------------------
# TOML configuration
# --------------------------------------------------------------------------


def load_experiment_config(path, out_dir: Optional[str] = None, seed: Optional[int] = None) -> ExperimentConfig:
    """Parse a TOML experiment file; unknown keys are hard errors."""
    import tomli

    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = tomli.loads(raw.decode("utf-8"))
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return parse_experiment_config(data, out_dir=out_dir, seed=seed)


_REQUIRED = object()


def _take(section: dict, key: str, default=_REQUIRED, where: str = "config"):
    if key in section:
        return section.pop(key)
    if default is _REQUIRED:
        raise ConfigError(f"missing required key {key!r} in [{where}]")
    return default


def _no_leftovers(section: dict, where: str):
    if section:
        raise ConfigError(f"unknown key(s) {sorted(section)} in [{where}]")


def _parse_drift(section: dict) -> Drift:
    kind = str(_take(section, "kind", "static", "stream.drift"))
    drift = Drift(
        kind=kind,
        period=int(_take(section, "period", 1000, "stream.drift")),
        magnitude=float(_take(section, "magnitude", 1.0, "stream.drift")),
        rate=float(_take(section, "rate", 0.1, "stream.drift")),
    )
    _no_leftovers(section, "stream.drift")
    return drift


def _parse_stream(section: dict) -> StreamConfig:
    family = str(_take(section, "family", where="stream"))
    horizon = int(_take(section, "horizon", where="stream"))
    noise_std = float(_take(section, "noise_std", 0.0, "stream"))
    drift = _parse_drift(dict(_take(section, "drift", {}, "stream")))

    quad = dict(_take(section, "quadratic", {}, "stream"))
    quadratic = QuadraticParams(
        d1=int(_take(quad, "d1", 5, "stream.quadratic")),
        d2=int(_take(quad, "d2", 5, "stream.quadratic")),
        mu=float(_take(quad, "mu", 1.0, "stream.quadratic")),
        l=float(_take(quad, "l", 2.0, "stream.quadratic")),
        ridge=float(_take(quad, "ridge", 1.0, "stream.quadratic")),
        offset_scale=float(_take(quad, "offset_scale", 1.0, "stream.quadratic")),
    )
    _no_leftovers(quad, "stream.quadratic")

    hr = dict(_take(section, "hyper_rep", {}, "stream"))
    hyper_rep = HyperRepParams(
        p=int(_take(hr, "p", 20, "stream.hyper_rep")),
        d=int(_take(hr, "d", 5, "stream.hyper_rep")),
        batch_f=int(_take(hr, "batch_f", 4, "stream.hyper_rep")),
        batch_g=int(_take(hr, "batch_g", 4, "stream.hyper_rep")),
        gamma=float(_take(hr, "gamma", 1.0, "stream.hyper_rep")),
    )
    _no_leftovers(hr, "stream.hyper_rep")

    ho = dict(_take(section, "hyperopt", {}, "stream"))
    corruption = tuple(
        (int(pair[0]), float(pair[1])) for pair in _take(ho, "corruption", [], "stream.hyperopt")
    )
    hyperopt = HyperOptParams(
        classes=int(_take(ho, "classes", 5, "stream.hyperopt")),
        features=int(_take(ho, "features", 50, "stream.hyperopt")),
        batch_train=int(_take(ho, "batch_train", 16, "stream.hyperopt")),
        batch_val=int(_take(ho, "batch_val", 16, "stream.hyperopt")),
        lam_lo=float(_take(ho, "lam_lo", -2.0, "stream.hyperopt")),
        lam_hi=float(_take(ho, "lam_hi", 2.0, "stream.hyperopt")),
        corruption=corruption,
    )
    _no_leftovers(ho, "stream.hyperopt")
    _no_leftovers(section, "stream")

    # The seed stored here is provisional; run_experiment replaces it with
    # the stream sub-seed derived from the master seed.
    return StreamConfig(
        family=family,
        horizon=horizon,
        seed=0,
        drift=drift,
        noise_std=noise_std,
        quadratic=quadratic,
        hyper_rep=hyper_rep,
        hyperopt=hyperopt,
    )


def _parse_domain(section: dict) -> Domain:
    kind = str(_take(section, "kind", "none", "optimizer_cfg.domain"))
    if kind == "none":
        domain = Domain.unconstrained()
    elif kind == "ball":
        domain = Domain.ball(
            _take(section, "center", where="optimizer_cfg.domain"),
            float(_take(section, "radius", where="optimizer_cfg.domain")),
        )
    elif kind == "box":
        domain = Domain.box(
            _take(section, "lo", where="optimizer_cfg.domain"),
            _take(section, "hi", where="optimizer_cfg.domain"),
        )
    else:
        raise ConfigError(f"unknown domain kind {kind!r}")
    _no_leftovers(section, "optimizer_cfg.domain")
    return domain


def _parse_optimizer_cfg(section: dict) -> OptimizerConfig:
    domain = _parse_domain(dict(_take(section, "domain", {}, "optimizer_cfg")))
    cfg = OptimizerConfig(
        alpha=float(_take(section, "alpha", where="optimizer_cfg")),
        beta=float(_take(section, "beta", where="optimizer_cfg")),
        eta=float(_take(section, "eta", 0.95, "optimizer_cfg")),
        k_window=int(_take(section, "k_window", 10, "optimizer_cfg")),
        lambda_solver=float(_take(section, "lambda_solver", 0.1, "optimizer_cfg")),
        q0=int(_take(section, "q0", 5, "optimizer_cfg")),
        q_increment=float(_take(section, "q_increment", 0.5, "optimizer_cfg")),
        q_max=int(_take(section, "q_max", 50, "optimizer_cfg")),
        n_inner=int(_take(section, "n_inner", 1, "optimizer_cfg")),
        domain=domain,
        solver_kind=str(_take(section, "solver_kind", "fixed_step", "optimizer_cfg")),
        warm_start_solver=bool(_take(section, "warm_start_solver", False, "optimizer_cfg")),
    )
    _no_leftovers(section, "optimizer_cfg")
    return cfg


def _parse_metrics(section: dict) -> MetricsFlags:
    flags = MetricsFlags(
        blr=bool(_take(section, "blr", True, "metrics")),
        blr_static=bool(_take(section, "blr_static", False, "metrics")),
        hg_error=bool(_take(section, "hg_error", True, "metrics")),
        variations=bool(_take(section, "variations", True, "metrics")),
        timing=bool(_take(section, "timing", True, "metrics")),
    )
    _no_leftovers(section, "metrics")
    return flags


def parse_experiment_config(data: dict, out_dir=None, seed=None) -> ExperimentConfig:
    data = dict(data)
    run_id = str(_take(data, "run_id", where="config"))
    optimizer = str(_take(data, "optimizer", where="config"))
    master_seed = int(_take(data, "seed", 0, "config"))
    init_scale = float(_take(data, "init_scale", 1.0, "config"))
    output_dir = Path(_take(data, "output_dir", "runs", "config"))
    stream = _parse_stream(dict(_take(data, "stream", where="config")))
    optimizer_cfg = _parse_optimizer_cfg(dict(_take(data, "optimizer_cfg", where="config")))
    metrics = _parse_metrics(dict(_take(data, "metrics", {}, "config")))
    _no_leftovers(data, "config")

    if seed is not None:
        master_seed = int(seed)
    if out_dir is not None:
        output_dir = Path(out_dir)
    return ExperimentConfig(
        stream=stream,
        optimizer=optimizer,
        optimizer_cfg=optimizer_cfg,
        run_id=run_id,
        output_dir=output_dir,
        master_seed=master_seed,
        metrics=metrics,
        init_scale=init_scale,
    )
