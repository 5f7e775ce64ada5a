"""Command-line entry point: ingestion, configuration, experiments, results.

Configuration comes from flags plus an optional key=value config file, with
flags winning.  Every run writes a ``run_meta.json`` with the fully resolved
configuration and seeds next to its result files; two runs with identical
metadata produce byte-identical outputs.  Result files are written
atomically (temp file plus rename), and invalid configurations never leave
partial results behind.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import __version__
from .bootstrap import BootstrapConfig
from .errors import (
    BootsprtError,
    ConfigError,
    DegenerateBlock,
    MalformedRow,
    MissingHeader,
)
from .harness import (
    BernoulliSessions,
    BootstrapSprtDriver,
    CompareSeeds,
    CorrelatedQueries,
    HarnessSeeds,
    SyntheticConfig,
    ZeroInflatedRevenue,
    avg_duration,
    calibrate_prior_scale,
    compare_with_maxsprt,
    choose_block_size,
    generate_sessions,
    power_curve,
    qq_points,
    random_split,
    run_aa_trials,
    run_chasing_trials,
    sweep_block_sizes,
)
from .abtest import run_ab_test
from .metrics import Block, MetricKind, SessionData, compute_metric, make_blocks, metric_by_name
from .msprt import MsprtState

CSV_HEADER = ["ts", "queries", "successful_queries", "revenue"]

_CONVENTIONS = {
    "samples_consumed": (
        "records across both groups up to and including the rejecting block "
        "pair; trials that exhaust the data count the full dataset"
    ),
    "per_trial_seeds": "SeedSequence(seed_root, spawn_key=(trial_id,))",
}


@dataclass
class RunConfig:
    """Fully resolved configuration for one CLI run."""

    metric: str = "query-success-rate"
    block_size: Union[int, tuple[int, ...]] = 1000
    alpha: float = 0.05
    tau: Union[str, float] = "auto"
    prior_mean: float = 0.0
    n_boot: int = 1000
    n_prior: int = 5000
    seed_data: int = 1
    seed_split: int = 2
    seed_bootstrap: int = 3
    seed_prior: int = 4
    input: Optional[str] = None
    out: Optional[str] = None
    offsets: tuple[float, ...] = ()
    trials: int = 200
    looks: int = 15
    test: str = "bootstrap"
    jobs: int = 1
    resolved_tau: Optional[float] = None

    def validate(self) -> None:
        if self.input is None:
            raise ConfigError("--input is required")
        if self.out is None:
            raise ConfigError("--out is required")
        try:
            metric_by_name(self.metric)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        sizes = self.block_size if isinstance(self.block_size, tuple) else (self.block_size,)
        if any(s < 2 for s in sizes):
            raise ConfigError("block sizes must be at least 2")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must be in (0, 1)")
        if isinstance(self.tau, str):
            if self.tau != "auto":
                raise ConfigError("tau must be a positive number or 'auto'")
        elif not self.tau > 0:
            raise ConfigError("tau must be positive")
        if self.n_boot < 100:
            raise ConfigError("B must be at least 100")
        if self.n_prior < 1000:
            raise ConfigError("M must be at least 1000")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.looks < 1:
            raise ConfigError("looks must be at least 1")
        if self.test not in ("bootstrap", "ztest-chasing"):
            raise ConfigError("test must be 'bootstrap' or 'ztest-chasing'")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")


# ---------------------------------------------------------------------------
# Ingestion.


def parse_csv(path: Union[str, Path]) -> SessionData:
    """Read a session CSV with header ``ts,queries,successful_queries,revenue``.

    Rows violating the record invariants are rejected with their line number.
    """
    timestamps: list[int] = []
    queries: list[int] = []
    successes: list[int] = []
    revenue: list[float] = []
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise MissingHeader(
                f"expected header {','.join(CSV_HEADER)!r}, got {header!r}"
            )
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise MalformedRow(line, f"expected 4 fields, got {len(row)}")
            try:
                ts = int(row[0])
                q = int(row[1])
                s = int(row[2])
                rev = float(row[3])
            except ValueError as exc:
                raise MalformedRow(line, str(exc)) from None
            if q < 0:
                raise MalformedRow(line, "queries must be nonnegative")
            if not 0 <= s <= q:
                raise MalformedRow(line, "successful_queries must be between 0 and queries")
            if not (np.isfinite(rev) and rev >= 0):
                raise MalformedRow(line, "revenue must be finite and nonnegative")
            timestamps.append(ts)
            queries.append(q)
            successes.append(s)
            revenue.append(rev)
    return SessionData(timestamps, queries, successes, revenue, validate=False)


def _sessions_csv_text(data: SessionData) -> str:
    lines = [",".join(CSV_HEADER)]
    ts, q, s, r = data.timestamps, data.queries, data.successes, data.revenue
    for i in range(len(data)):
        lines.append(f"{ts[i]},{q[i]},{s[i]},{float(r[i])!r}")
    return "\n".join(lines) + "\n"


def _parse_synth_spec(spec: str, n_default: Optional[int] = None) -> SyntheticConfig:
    """Parse ``synth:<model>:k=v,...`` into a SyntheticConfig (seed filled later)."""
    parts = spec.split(":")
    if len(parts) != 3 or parts[0] != "synth":
        raise ConfigError(
            "synthetic input must look like synth:<model>:key=value,... "
            "(models: bernoulli, correlated, zero-inflated)"
        )
    model_name = parts[1]
    kv: dict[str, float] = {}
    for item in parts[2].split(","):
        if not item:
            continue
        if "=" not in item:
            raise ConfigError(f"bad synthetic parameter {item!r}")
        key, value = item.split("=", 1)
        try:
            kv[key.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"bad synthetic parameter value {item!r}") from None
    n = int(kv.pop("n", n_default or 0))
    if n < 1:
        raise ConfigError("synthetic spec needs n=<positive session count>")
    try:
        if model_name == "bernoulli":
            model = BernoulliSessions(p=kv.pop("p"))
        elif model_name == "correlated":
            model = CorrelatedQueries(
                mean_queries=kv.pop("mean-queries"),
                success_beta=(kv.pop("beta-a"), kv.pop("beta-b")),
            )
        elif model_name == "zero-inflated":
            model = ZeroInflatedRevenue(
                p_zero=kv.pop("p-zero"),
                log_mean=kv.pop("log-mean"),
                log_sd=kv.pop("log-sd"),
            )
        else:
            raise ConfigError(f"unknown synthetic model {model_name!r}")
    except KeyError as exc:
        raise ConfigError(f"synthetic model {model_name!r} needs parameter {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if kv:
        raise ConfigError(f"unknown synthetic parameters: {sorted(kv)}")
    return SyntheticConfig(n_sessions=n, model=model, rng_seed=0)


def _load_records(cfg: RunConfig) -> SessionData:
    if cfg.input.startswith("synth:"):
        synth = _parse_synth_spec(cfg.input)
        return generate_sessions(
            SyntheticConfig(synth.n_sessions, synth.model, rng_seed=cfg.seed_data)
        )
    return parse_csv(cfg.input)


def _resolve_tau(cfg: RunConfig, records: SessionData) -> float:
    """'auto' means 3% of the metric computed on the full input dataset."""
    if isinstance(cfg.tau, (int, float)):
        return float(cfg.tau)
    kind = metric_by_name(cfg.metric)
    try:
        reference = compute_metric(Block(0, records), kind)
    except (DegenerateBlock, ValueError) as exc:
        raise ConfigError(f"cannot resolve tau=auto: {exc}") from exc
    tau = 0.03 * abs(reference)
    if not tau > 0:
        raise ConfigError("cannot resolve tau=auto: reference metric value is zero")
    return tau


# ---------------------------------------------------------------------------
# Output helpers.


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(
            ",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row)
        )
    return "\n".join(lines) + "\n"


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _meta(command: str, cfg: RunConfig) -> dict:
    config = asdict(cfg)
    config["block_size"] = (
        list(cfg.block_size) if isinstance(cfg.block_size, tuple) else cfg.block_size
    )
    config["offsets"] = list(cfg.offsets)
    # metadata stays location-independent: identical metadata must imply
    # byte-identical result files wherever they are written
    config.pop("out")
    return {
        "command": command,
        "config": config,
        "conventions": _CONVENTIONS,
        "version": __version__,
    }


def _emit(out_dir: Path, files: dict[str, str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        _write_atomic(out_dir / name, text)


def _log_error(out: Optional[str], exc: Exception, exit_code: int) -> None:
    record = {
        "error": type(exc).__name__,
        "message": str(exc),
        "exit_code": exit_code,
    }
    print(f"error: {exc}", file=sys.stderr)
    if out:
        try:
            out_dir = Path(out)
            out_dir.mkdir(parents=True, exist_ok=True)
            with open(out_dir / "errors.jsonl", "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        except OSError:
            pass


# ---------------------------------------------------------------------------
# Subcommands.


def _bootstrap_driver(cfg: RunConfig, block_size: Optional[int] = None) -> BootstrapSprtDriver:
    return BootstrapSprtDriver(
        kind=metric_by_name(cfg.metric),
        tau=cfg.resolved_tau,
        block_size=block_size or cfg.block_size,
        n_boot=cfg.n_boot,
        n_prior=cfg.n_prior,
        prior_mean=cfg.prior_mean,
        alpha=cfg.alpha,
    )


def _harness_seeds(cfg: RunConfig) -> HarnessSeeds:
    return HarnessSeeds(split=cfg.seed_split, bootstrap=cfg.seed_bootstrap, prior=cfg.seed_prior)


def _cmd_synth(cfg: RunConfig) -> dict[str, str]:
    records = _load_records(cfg)
    return {
        "sessions.csv": _sessions_csv_text(records),
        "run_meta.json": _json_text(_meta("synth", cfg)),
    }


def _cmd_test(cfg: RunConfig) -> dict[str, str]:
    records = _load_records(cfg)
    cfg.resolved_tau = _resolve_tau(cfg, records)
    offset = cfg.offsets[0] if cfg.offsets else 0.0
    group_a, group_b = random_split(records, np.random.default_rng(cfg.seed_split))
    prior_samples = np.random.default_rng(cfg.seed_prior).normal(
        cfg.prior_mean, cfg.resolved_tau, cfg.n_prior
    )
    result = run_ab_test(
        make_blocks(group_a, cfg.block_size),
        make_blocks(group_b, cfg.block_size),
        metric_by_name(cfg.metric),
        cfg=BootstrapConfig(n_boot=cfg.n_boot),
        alpha=cfg.alpha,
        offset=offset,
        rng=np.random.default_rng(cfg.seed_bootstrap),
        state=MsprtState(0.0, prior_samples),
    )
    rejected = result.decision.tag == "reject_null"
    summary = {
        "decision": result.decision.tag,
        "at_block": result.decision.at_block,
        "final_p": result.decision.p_value,
        "pairs_processed": result.pairs_processed,
        "skipped_blocks": result.skipped_blocks,
        "samples_consumed": result.records_consumed if rejected else len(records),
    }
    trajectory = "".join(json.dumps(rec) + "\n" for rec in result.records)
    return {
        "trajectory.jsonl": trajectory,
        "summary.json": _json_text(summary),
        "run_meta.json": _json_text(_meta("test", cfg)),
    }


def _qq_csv(p_values) -> str:
    return _csv_text(
        ["uniform_q", "empirical_q"],
        [(float(u), float(p)) for u, p in qq_points(p_values)],
    )


def _cmd_aa(cfg: RunConfig) -> dict[str, str]:
    records = _load_records(cfg)
    alphas = (0.01, 0.05, 0.10)
    if cfg.test == "ztest-chasing":
        chasing = run_chasing_trials(
            records,
            metric_by_name(cfg.metric),
            cfg.looks,
            cfg.alpha,
            cfg.trials,
            cfg.seed_split,
            n_jobs=cfg.jobs,
        )
        p_values = np.array([c.min_p for c in chasing])
        summary = {
            "test": cfg.test,
            "n_trials": cfg.trials,
            "looks": cfg.looks,
            "rejection_fraction": float(np.mean([c.ever_rejected for c in chasing])),
            "single_look_fraction": float(np.mean([c.final_p <= cfg.alpha for c in chasing])),
            "cdf": {repr(a): float(np.mean(p_values <= a)) for a in alphas},
        }
    else:
        cfg.resolved_tau = _resolve_tau(cfg, records)
        results = run_aa_trials(
            records, _bootstrap_driver(cfg), cfg.trials, _harness_seeds(cfg), n_jobs=cfg.jobs
        )
        p_values = np.array([r.final_p for r in results])
        summary = {
            "test": cfg.test,
            "n_trials": cfg.trials,
            "rejection_fraction": float(np.mean([r.rejected for r in results])),
            "avg_duration": avg_duration(results),
            "cdf": {repr(a): float(np.mean(p_values <= a)) for a in alphas},
        }
    return {
        "qq_points.csv": _qq_csv(p_values),
        "summary.json": _json_text(summary),
        "run_meta.json": _json_text(_meta("aa", cfg)),
    }


def _cmd_power(cfg: RunConfig) -> dict[str, str]:
    if not cfg.offsets:
        raise ConfigError("power needs --offsets")
    records = _load_records(cfg)
    cfg.resolved_tau = _resolve_tau(cfg, records)
    points = power_curve(
        records, cfg.offsets, _bootstrap_driver(cfg), cfg.trials, _harness_seeds(cfg),
        n_jobs=cfg.jobs,
    )
    return {
        "power.csv": _csv_text(
            ["offset", "rejection_rate", "n_trials"],
            [(p.offset, p.rejection_rate, p.n_trials) for p in points],
        ),
        "duration.csv": _csv_text(
            ["offset", "avg_duration"],
            [(p.offset, p.avg_duration) for p in points],
        ),
        "run_meta.json": _json_text(_meta("power", cfg)),
    }


def _cmd_blocksize(cfg: RunConfig) -> dict[str, str]:
    sizes = cfg.block_size if isinstance(cfg.block_size, tuple) else (cfg.block_size,)
    records = _load_records(cfg)
    cfg.resolved_tau = _resolve_tau(cfg, records)
    reports = sweep_block_sizes(
        records,
        sizes,
        lambda size: _bootstrap_driver(cfg, block_size=size),
        cfg.trials,
        _harness_seeds(cfg),
        n_jobs=cfg.jobs,
    )
    files = {
        f"qq_points_block{r.block_size}.csv": _qq_csv(r.qq[:, 1]) for r in reports
    }
    files["blocksize.csv"] = _csv_text(
        ["block_size", "cdf_0.01", "cdf_0.05", "cdf_0.10", "conservative"],
        [
            (r.block_size, r.cdf[0.01], r.cdf[0.05], r.cdf[0.10], int(r.conservative))
            for r in reports
        ],
    )
    files["summary.json"] = _json_text(
        {"recommended_block_size": choose_block_size(reports)}
    )
    files["run_meta.json"] = _json_text(_meta("blocksize", cfg))
    return files


def _cmd_compare_maxsprt(cfg: RunConfig) -> dict[str, str]:
    if not cfg.input.startswith("synth:"):
        raise ConfigError("compare-maxsprt requires a synth:bernoulli:... input")
    synth = _parse_synth_spec(cfg.input)
    if not isinstance(synth.model, BernoulliSessions):
        raise ConfigError("compare-maxsprt requires a synth:bernoulli:... input")
    if not cfg.offsets:
        raise ConfigError("compare-maxsprt needs --offsets")
    p0 = synth.model.p
    if isinstance(cfg.tau, str):
        # match the bootstrap test's type-1 to alpha the same way the
        # MaxSPRT threshold is matched: null simulations over a tau grid
        cfg.resolved_tau, _ = calibrate_prior_scale(
            p0=p0,
            arm_size=synth.n_sessions // 2,
            tau_grid=[p0 * f for f in (0.03, 0.06, 0.12, 0.24)],
            n_trials=min(cfg.trials, 150),
            seeds=CompareSeeds(
                data=cfg.seed_data,
                bootstrap=cfg.seed_bootstrap,
                prior=cfg.seed_prior,
                calibration=cfg.seed_split,
            ),
            block_size=cfg.block_size,
            n_boot=cfg.n_boot,
            n_prior=max(cfg.n_prior, 1000),
            alpha=cfg.alpha,
            n_jobs=cfg.jobs,
        )
    else:
        cfg.resolved_tau = float(cfg.tau)
    comparison = compare_with_maxsprt(
        p0=p0,
        n_records=synth.n_sessions,
        offsets=cfg.offsets,
        n_trials=cfg.trials,
        seeds=CompareSeeds(
            data=cfg.seed_data,
            bootstrap=cfg.seed_bootstrap,
            prior=cfg.seed_prior,
            calibration=cfg.seed_split,
        ),
        tau=cfg.resolved_tau,
        block_size=cfg.block_size,
        n_boot=cfg.n_boot,
        n_prior=max(cfg.n_prior, 1000),
        alpha=cfg.alpha,
        n_jobs=cfg.jobs,
    )
    return {
        "compare_power.csv": _csv_text(
            ["offset", "power_bootstrap", "power_maxsprt", "n_trials"],
            [
                (r.offset, r.power_bootstrap, r.power_maxsprt, r.n_trials)
                for r in comparison.rows
            ],
        ),
        "compare_duration.csv": _csv_text(
            ["offset", "avg_duration_bootstrap", "avg_duration_maxsprt"],
            [
                (r.offset, r.avg_duration_bootstrap, r.avg_duration_maxsprt)
                for r in comparison.rows
            ],
        ),
        "summary.json": _json_text({"maxsprt_threshold": comparison.threshold}),
        "run_meta.json": _json_text(_meta("compare-maxsprt", cfg)),
    }


_COMMANDS = {
    "synth": _cmd_synth,
    "test": _cmd_test,
    "aa": _cmd_aa,
    "power": _cmd_power,
    "blocksize": _cmd_blocksize,
    "compare-maxsprt": _cmd_compare_maxsprt,
}


# ---------------------------------------------------------------------------
# Argument and config-file handling.


_INT_KEYS = {"B", "M", "trials", "looks", "jobs",
             "seed-data", "seed-split", "seed-bootstrap", "seed-prior"}
_FLOAT_KEYS = {"alpha", "prior-mean"}
_STR_KEYS = {"metric", "input", "out", "test"}


def _parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        with open(path) as fh:
            for line_no, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{line_no}: expected key = value")
                key, value = (part.strip() for part in line.split("=", 1))
                values[key.replace("_", "-")] = value
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return values


def _parse_offsets(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"bad offsets list {text!r}") from None


def _parse_block_size(text: str) -> Union[int, tuple[int, ...]]:
    try:
        sizes = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"bad block size {text!r}") from None
    if not sizes:
        raise ConfigError("empty block size list")
    return sizes if len(sizes) > 1 else sizes[0]


def _parse_tau(text: str) -> Union[str, float]:
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"tau must be a number or 'auto', got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bootsprt",
        description="Bootstrap mixture SPRT for sequential A/B tests on complex metrics.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", help="key = value config file; flags win")
    parser.add_argument("--metric", help="query-success-rate or mean-revenue")
    parser.add_argument("--block-size", help="records per block; comma list for blocksize")
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--tau", help="prior scale, or 'auto' (3%% of the reference value)")
    parser.add_argument("--prior-mean", type=float)
    parser.add_argument("--B", dest="B", type=int, help="bootstrap resamples per block")
    parser.add_argument("--M", dest="M", type=int, help="Monte Carlo prior samples")
    parser.add_argument("--seed-data", type=int)
    parser.add_argument("--seed-split", type=int)
    parser.add_argument("--seed-bootstrap", type=int)
    parser.add_argument("--seed-prior", type=int)
    parser.add_argument("--input", help="session CSV path or synth:<model>:k=v,...")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--offsets", help="comma-separated additive offsets")
    parser.add_argument("--trials", type=int)
    parser.add_argument("--looks", type=int)
    parser.add_argument("--test", help="aa test under evaluation: bootstrap or ztest-chasing")
    parser.add_argument("--jobs", type=int, help="worker processes for trials")
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    file_values = _parse_config_file(args.config) if args.config else {}
    unknown = set(file_values) - (_INT_KEYS | _FLOAT_KEYS | _STR_KEYS
                                  | {"block-size", "tau", "offsets"})
    if unknown:
        raise ConfigError(f"unknown config file keys: {sorted(unknown)}")

    def pick(flag_value, key: str):
        if flag_value is not None:
            return flag_value
        return file_values.get(key)

    cfg = RunConfig()
    if (v := pick(args.metric, "metric")) is not None:
        cfg.metric = v
    if (v := pick(args.block_size, "block-size")) is not None:
        cfg.block_size = _parse_block_size(v) if isinstance(v, str) else v
    if (v := pick(args.alpha, "alpha")) is not None:
        cfg.alpha = float(v)
    if (v := pick(args.tau, "tau")) is not None:
        cfg.tau = _parse_tau(v) if isinstance(v, str) else v
    if (v := pick(args.prior_mean, "prior-mean")) is not None:
        cfg.prior_mean = float(v)
    if (v := pick(args.B, "B")) is not None:
        cfg.n_boot = int(v)
    if (v := pick(args.M, "M")) is not None:
        cfg.n_prior = int(v)
    for name in ("data", "split", "bootstrap", "prior"):
        if (v := pick(getattr(args, f"seed_{name}"), f"seed-{name}")) is not None:
            setattr(cfg, f"seed_{name}", int(v))
    if (v := pick(args.input, "input")) is not None:
        cfg.input = v
    if (v := pick(args.out, "out")) is not None:
        cfg.out = v
    if (v := pick(args.offsets, "offsets")) is not None:
        cfg.offsets = _parse_offsets(v) if isinstance(v, str) else tuple(v)
    if (v := pick(args.trials, "trials")) is not None:
        cfg.trials = int(v)
    if (v := pick(args.looks, "looks")) is not None:
        cfg.looks = int(v)
    if (v := pick(args.test, "test")) is not None:
        cfg.test = v
    if (v := pick(args.jobs, "jobs")) is not None:
        cfg.jobs = int(v)
    cfg.validate()
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    out_hint = args.out
    try:
        cfg = _resolve_config(args)
    except ConfigError as exc:
        _log_error(out_hint, exc, 2)
        return 2
    try:
        files = _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        _log_error(cfg.out, exc, 2)
        return 2
    except (MissingHeader, MalformedRow, FileNotFoundError) as exc:
        _log_error(cfg.out, exc, 3)
        return 3
    except OSError as exc:
        _log_error(cfg.out, exc, 3)
        return 3
    _emit(Path(cfg.out), files)
    return 0


if __name__ == "__main__":
    sys.exit(main())
