"""Command-line entry point: ``fnpcast {train,forecast,evaluate,synth}``.

Exit status is 0 on success, 2 for usage, configuration, data or checkpoint
errors, and 3 when training or forecasting hits a numeric failure.

Run configuration is a flat JSON object. Recognized keys are the fields of
:class:`RunConfig` plus every field of :class:`fnpcast.model.Hyperparams`;
anything else is rejected before work starts.
"""

import argparse
import csv
import json
import logging
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import (format_epiweek, load_model, parse_csv, realtime_eval_points, save_model,
                   segment_seasons)
from .exceptions import CheckpointError, ContractError, DataFormatError, NumericDomainError
from .inference import autoregressive_forecast, forecast, summarize
from .metrics import EvaluationRecord, is_over_dispersed, summarize_horizon
from .model import Hyperparams
from .synthetic import seasonal_bumps
from .training import train

logger = logging.getLogger("fnpcast")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
METRIC_COLUMNS = ("horizon", "rmse", "mape", "ls", "cs")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    data: str = ""
    region: str = "nat"
    train_seasons: list = field(default_factory=list)  # empty means every complete season
    test_seasons: list = field(default_factory=list)
    horizons: list = field(default_factory=lambda: [1])
    out: str = ""
    ar_candidates: int = 1000
    levels: list = field(default_factory=lambda: [0.5, 0.8, 0.9, 0.95])
    hyperparams: Hyperparams = field(default_factory=Hyperparams)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ContractError("config must be a JSON object")
        own = {f.name for f in fields(cls)} - {"hyperparams"}
        hp_keys = {f.name for f in fields(Hyperparams)}
        unknown = set(d) - own - hp_keys
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        for f in fields(Hyperparams):
            if f.name in d and not _type_ok(d[f.name], type(f.default)):
                raise ContractError(f"config key {f.name!r} must be of type {type(f.default).__name__}")
        cfg = cls(**{k: v for k, v in d.items() if k in own},
                  hyperparams=Hyperparams(**{k: v for k, v in d.items() if k in hp_keys}))
        cfg.validate()
        return cfg

    def validate(self):
        for name in ("train_seasons", "test_seasons", "horizons", "levels"):
            if not isinstance(getattr(self, name), list):
                raise ContractError(f"{name} must be a list")
        if any(not isinstance(k, int) or k < 1 for k in self.horizons):
            raise ContractError("horizons must be positive integers")
        if any(not 0 < c < 1 for c in self.levels):
            raise ContractError("interval levels must lie strictly between 0 and 1")
        if self.ar_candidates < 1:
            raise ContractError("ar_candidates must be at least 1")

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "hyperparams"}
        d.update(asdict(self.hyperparams))
        return d


def _type_ok(value, kind):
    if kind is bool:
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    if kind is float:
        return isinstance(value, (int, float))
    return isinstance(value, kind)


def load_config(path):
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as err:
        raise UsageError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise UsageError(f"config {path} is not valid JSON: {err}") from err
    return RunConfig.from_dict(raw)


def _load_seasons(path, region, keep_partial=False):
    if not path:
        raise UsageError("no data file given (--data or config key 'data')")
    if not Path(path).is_file():
        raise UsageError(f"data file not found: {path}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        seasons = segment_seasons(parse_csv(path, region), keep_partial=keep_partial)
    for w in caught:
        logger.warning("%s", w.message)
    return seasons


def _select(seasons, wanted, what):
    by_id = {s.season_id: s for s in seasons}
    missing = [sid for sid in wanted if sid not in by_id]
    if missing:
        raise UsageError(f"{what} season(s) not in data: {', '.join(missing)}")
    return [by_id[sid] for sid in wanted]


# -- train --------------------------------------------------------------------


def cmd_train(args):
    cfg = load_config(args.config)
    data = args.data or cfg.data
    out = Path(args.out or cfg.out or ".")
    seasons = _load_seasons(data, cfg.region)
    if cfg.train_seasons:
        seasons = _select(seasons, cfg.train_seasons, "training")
    if not seasons:
        raise UsageError(f"no complete seasons for region {cfg.region!r} in {data}")
    logger.info("training on %d season(s): %s", len(seasons), ", ".join(s.season_id for s in seasons))
    model, log = train(seasons, cfg.hyperparams)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "model.bin", model, metadata={
        "schema_version": SCHEMA_VERSION,
        "region": cfg.region,
        "training_seasons": [s.season_id for s in seasons],
    })
    with open(out / "train_log.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss", "train_rmse"])
        writer.writeheader()
        writer.writerows(log)
    print(f"wrote {out / 'model.bin'} ({len(log)} epochs)")
    return EXIT_OK


# -- forecast -----------------------------------------------------------------


def _forecast_one(model, prefix, k, use_ar, n_candidates, rng):
    trained = model.hyperparams.horizon
    if use_ar:
        if trained != 1:
            raise UsageError(f"autoregressive rollout needs a 1-week checkpoint, this one has horizon {trained}")
        return autoregressive_forecast(model, prefix, k, n_candidates, rng), "autoregressive"
    if k != trained:
        raise UsageError(f"checkpoint forecasts {trained} week(s) ahead; use --ar for k={k}")
    return forecast(model, prefix, rng=rng), "direct"


def cmd_forecast(args):
    cfg = load_config(args.config)
    model, meta = load_model(args.checkpoint)
    region = meta.get("region", cfg.region)
    seasons = _load_seasons(args.data or cfg.data, region, keep_partial=True)
    season = _select(seasons, [args.season], "requested")[0]
    positions = [i for i, (_, w) in enumerate(season.epiweeks) if w == args.week]
    if not positions:
        raise UsageError(f"week {args.week} is not observed in season {season.season_id}")
    t = positions[0] + 1
    k = args.k if args.k is not None else model.hyperparams.horizon
    if k < 1:
        raise UsageError("k must be at least 1")
    rng = np.random.default_rng(model.hyperparams.seed if args.seed is None else args.seed)
    dist, mode = _forecast_one(model, season.values[:t], k, args.ar, cfg.ar_candidates, rng)
    summary = summarize(dist, cfg.levels)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "season": season.season_id,
        "as_of": format_epiweek(*season.epiweeks[t - 1]),
        "k": k,
        "mode": mode,
        **summary.to_dict(),
    }
    if args.components:
        doc["components"] = {"means": dist.means.tolist(), "logvars": dist.logvars.tolist()}
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    if args.draws:
        Path(args.draws).parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(args.draws, dist.draws, fmt="%.17g", header="draw", comments="")
    return EXIT_OK


# -- evaluate -----------------------------------------------------------------


def evaluate_records(model, seasons, k, n_candidates, seed):
    """Realtime evaluation records for one horizon, one rng stream per record."""
    records = []
    for s_idx, season in enumerate(seasons):
        for point in realtime_eval_points(season, k):
            rng = np.random.default_rng([seed, k, s_idx, point.t])
            dist, _ = _forecast_one(model, point.prefix, k, k != model.hyperparams.horizon,
                                    n_candidates, rng)
            records.append(EvaluationRecord(season.season_id, point.target_index, k, point.truth, dist))
    return records


def cmd_evaluate(args):
    cfg = load_config(args.config)
    model, meta = load_model(args.checkpoint)
    test_ids = args.test_seasons if args.test_seasons is not None else cfg.test_seasons
    horizons = args.k if args.k is not None else cfg.horizons
    if not horizons:
        raise UsageError("no horizons given")
    if any(k < 1 for k in horizons):
        raise UsageError("horizons must be at least 1")
    if not test_ids:
        raise UsageError("no test seasons given")
    overlap = [sid for sid in test_ids if sid in set(meta.get("training_seasons", []))]
    if overlap:
        raise UsageError(f"test season(s) used in training: {', '.join(overlap)}")
    region = meta.get("region", cfg.region)
    seasons = _select(_load_seasons(args.data or cfg.data, region), test_ids, "test")
    out = Path(args.out or cfg.out or ".")
    seed = model.hyperparams.seed if args.seed is None else args.seed

    rows, summary = [], {"schema_version": SCHEMA_VERSION, "test_seasons": test_ids, "horizons": {}}
    curves = {}
    for k in horizons:
        records = evaluate_records(model, seasons, k, cfg.ar_candidates, seed)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            scores, curve = summarize_horizon(records)
        for w in caught:
            logger.warning("%s", w.message)
        rows.append({"horizon": k, **scores})
        curves[k] = curve
        summary["horizons"][str(k)] = {**scores, "n_records": len(records),
                                       "over_dispersed": is_over_dispersed(curve)}

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    for k, curve in curves.items():
        with open(out / f"calibration_k{k}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["c", "k"])
            writer.writerows(curve.rows())
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    for row in rows:
        flag = " (over-dispersed)" if summary["horizons"][str(row["horizon"])]["over_dispersed"] else ""
        print(f"k={row['horizon']}: rmse={row['rmse']:.4f} mape={row['mape']:.4f} "
              f"ls={row['ls']:.4f} cs={row['cs']:.4f}{flag}")
    return EXIT_OK


# -- synth --------------------------------------------------------------------


def cmd_synth(args):
    seasons = seasonal_bumps(args.n_seasons, 52, seed=args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region", "year", "week", "wili"])
        for i, values in enumerate(seasons):
            year = args.start_year + i
            weeks = [(year, w) for w in range(21, 53)] + [(year + 1, w) for w in range(1, 21)]
            for (y, w), v in zip(weeks, values):
                writer.writerow([args.region, y, w, f"{v:.6f}"])
    print(f"wrote {len(seasons)} seasons to {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="fnpcast", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model and write model.bin + train_log.csv")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", help="forecast from a season prefix")
    p.add_argument("--config")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--season", required=True, help='season id, e.g. "2014/15"')
    p.add_argument("--week", type=int, required=True, help="last observed calendar week")
    p.add_argument("--k", type=int)
    p.add_argument("--ar", action="store_true", help="roll a 1-week model forward k weeks")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="forecast JSON path (stdout if omitted)")
    p.add_argument("--draws", help="write raw draws to this CSV")
    p.add_argument("--components", action="store_true", help="include mixture components")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("evaluate", help="score held-out seasons")
    p.add_argument("--config")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--test-seasons", nargs="*")
    p.add_argument("--k", type=int, nargs="*")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="write a synthetic surveillance CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--n-seasons", type=int, default=12)
    p.add_argument("--start-year", type=int, default=2003)
    p.add_argument("--region", default="nat")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ContractError, DataFormatError, CheckpointError) as err:
        print(f"fnpcast: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NumericDomainError as err:
        print(f"fnpcast: numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
