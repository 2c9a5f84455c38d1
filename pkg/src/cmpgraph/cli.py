"""Command-line pipeline: synth, detect, eval, render and all.

Configuration is a flat ``key=value`` text file; keys are dotted by stage
(``cmp.bin_count=10``, ``gnn.embedding_dim=64``, ``threshold.window=7``).
Command-line ``-o key=value`` flags override file values. Run
``cmpgraph keys`` for the full list with defaults.

Exit codes: 0 success, 1 usage error, 2 data or configuration error,
3 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
import types
import typing
import zlib
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import alerts as alerts_mod
from . import cmp as cmp_mod
from . import detectors, evaluate, gnn, graphs, ingest, synth
from ._backend import BACKEND
from .series import ScoreSeries, write_scores_csv

log = logging.getLogger("cmpgraph")

DETECTOR_CHOICES = ("gnn",) + detectors.DETECTORS
SCORER_CHECKPOINT_FORMAT = "cmpgraph.scorer/1"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class StageError(Exception):
    """Failure inside a named pipeline stage; ``data`` selects exit code 2."""

    def __init__(self, stage: str, subject: str, message: str, data: bool):
        super().__init__(stage, subject, message, data)
        self.stage, self.subject, self.message, self.data = stage, subject, message, data

    def __str__(self):
        where = f"{self.stage} ({self.subject})" if self.subject else self.stage
        return f"stage {where} failed: {self.message}"


# -- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class IngestConfig:
    dedupe_window: float = 60.0
    max_dwell: float = 3600.0
    normalize_ws: bool = True
    tz_offset: int = 0  # seconds east of UTC; days start at local midnight
    locations: tuple[str, ...] | None = None  # default: all locations in the data
    n_days: int | None = None  # default: span of each subject's events


@dataclass(frozen=True)
class GraphConfig:
    i_min: int = 2
    max_history: int | None = None


@dataclass(frozen=True)
class EvalConfig:
    margin_before: int = 10
    margin_after: int = 7
    x_percent: float = 50.0
    pooled_alert_rate: bool = False

    @property
    def margins(self) -> evaluate.Margins:
        return evaluate.Margins(self.margin_before, self.margin_after)


SECTIONS = {
    "ingest": IngestConfig,
    "cmp": cmp_mod.CmpConfig,
    "graphs": GraphConfig,
    "gnn": gnn.TrainConfig,
    "dominant": detectors.DominantConfig,
    "mlpae": detectors.MlpaeConfig,
    "ocgnn": detectors.OcgnnConfig,
    "gcnae": detectors.GcnaeConfig,
    "cmp_baseline": detectors.CmpBaselineConfig,
    "threshold": alerts_mod.ThresholdConfig,
    "eval": EvalConfig,
}
# per-subject seeds are derived from the run seed
SEEDED = {"gnn", "dominant", "mlpae", "ocgnn", "gcnae"}


@dataclass(frozen=True)
class PipelineConfig:
    detector: str = "gnn"
    seed: int = 0
    workers: int = 1
    sections: dict = field(default_factory=lambda: {k: v() for k, v in SECTIONS.items()})

    def __getattr__(self, name):
        sections = self.__dict__.get("sections", {})
        if name in sections:
            return sections[name]
        raise AttributeError(name)

    def detector_config(self, seed: int):
        cfg = self.sections[self.detector]
        return dataclasses.replace(cfg, seed=seed) if self.detector in SEEDED else cfg

    def to_text(self) -> str:
        lines = [f"detector={self.detector}", f"seed={self.seed}", f"workers={self.workers}"]
        for name in sorted(self.sections):
            for f in dataclasses.fields(self.sections[name]):
                if name in SEEDED and f.name == "seed":
                    continue
                lines.append(f"{name}.{f.name}={_format_value(getattr(self.sections[name], f.name))}")
        return "\n".join(lines) + "\n"


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return str(v)


def _coerce(text: str, tp, key: str):
    text = text.strip()
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType) and type(None) in args:
        if text.lower() in ("", "none", "null"):
            return None
        inner = [a for a in args if a is not type(None)][0]
        return _coerce(text, inner, key)
    if origin is tuple:
        return tuple(x.strip() for x in text.split(",") if x.strip())
    if tp is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise DataError(f"config key {key}: expected a boolean, got {text!r}")
    try:
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
    except ValueError:
        raise DataError(f"config key {key}: expected {tp.__name__}, got {text!r}") from None
    return text


def parse_pairs(text: str, source: str = "config") -> list[tuple[str, str]]:
    """Split ``key=value`` lines; ``#`` starts a comment."""
    pairs = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise DataError(f"{source}:{n}: expected key=value, got {raw.strip()!r}")
        pairs.append((key.strip(), value.strip()))
    return pairs


def _apply(cls, values: dict, prefix: str):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, text in values.items():
        if key not in names:
            raise DataError(f"unknown config key {prefix}{key}")
        kwargs[key] = _coerce(text, hints[key], prefix + key)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise DataError(f"invalid {prefix.rstrip('.') or 'config'}: {exc}") from None


def build_pipeline_config(pairs: list[tuple[str, str]]) -> PipelineConfig:
    top: dict[str, str] = {}
    sections: dict[str, dict[str, str]] = {k: {} for k in SECTIONS}
    for key, value in pairs:
        head, dot, rest = key.partition(".")
        if dot:
            if head not in SECTIONS:
                raise DataError(f"unknown config section {head!r} in key {key}")
            if head in SEEDED and rest == "seed":
                raise DataError(f"config key {key}: per-detector seeds derive from the run seed")
            sections[head][rest] = value
        else:
            top[key] = value
    built = {name: _apply(cls, sections[name], name + ".") for name, cls in SECTIONS.items()}
    cfg = _apply(_TopLevel, top, "")
    if cfg.detector not in DETECTOR_CHOICES:
        raise DataError(f"config key detector: must be one of {', '.join(DETECTOR_CHOICES)}")
    if cfg.workers < 1:
        raise DataError("config key workers: must be >= 1")
    if cfg.seed < 0:
        raise DataError("config key seed: must be non-negative")
    return PipelineConfig(cfg.detector, cfg.seed, cfg.workers, built)


@dataclass(frozen=True)
class _TopLevel:
    detector: str = "gnn"
    seed: int = 0
    workers: int = 1


def build_cohort_spec(pairs: list[tuple[str, str]]) -> synth.CohortSpec:
    base = synth.CohortSpec()
    hints = typing.get_type_hints(synth.CohortSpec)
    kwargs: dict = {}
    tables: dict[str, dict[str, float]] = {}
    for key, value in pairs:
        head, dot, rest = key.partition(".")
        if dot:
            if head not in ("base_rates", "anomaly_multipliers", "wander_rates"):
                raise DataError(f"unknown cohort key {key}")
            tables.setdefault(head, {})[rest] = _coerce(value, float, key)
        elif key in hints and key not in ("base_rates", "anomaly_multipliers", "wander_rates"):
            kwargs[key] = _coerce(value, hints[key], key)
        else:
            raise DataError(f"unknown cohort key {key}")
    for name, entries in tables.items():
        kwargs[name] = {**getattr(base, name), **entries}
    try:
        spec = synth.CohortSpec(**kwargs)
        spec.validate()
    except (ValueError, TypeError) as exc:
        raise DataError(f"invalid cohort spec: {exc}") from None
    return spec


def subject_seed(seed: int, subject_id: str) -> int:
    """Stable per-subject training seed derived from the run seed."""
    ss = np.random.SeedSequence([seed, zlib.crc32(subject_id.encode())])
    return int(ss.generate_state(1)[0])


# -- per-subject pipeline -----------------------------------------------------

@contextmanager
def stage(name: str, subject: str, timings: dict):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except (ValueError, KeyError, OSError, FloatingPointError) as exc:
        raise StageError(name, subject, str(exc), data=True) from exc
    except Exception as exc:
        raise StageError(name, subject, f"{type(exc).__name__}: {exc}", data=False) from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


@dataclass
class SubjectOutput:
    subject_id: str
    features: ingest.FeatureMatrix
    cmps: cmp_mod.Cmp
    scores: ScoreSeries
    alerts: alerts_mod.AlertSeries
    checkpoint: str | None
    timings: dict


def subject_span(events: list[ingest.EventRecord], tz_offset: int = 0) -> tuple[int, int]:
    """Day origin (local midnight before the first event) and days covered."""
    origin = ingest.day_origin(events[0].timestamp, tz_offset)
    return origin, (events[-1].timestamp - origin) // ingest.DAY + 1


def run_subject(subject_id: str, events: list[ingest.EventRecord], locations: tuple[str, ...],
                cfg: PipelineConfig) -> SubjectOutput:
    timings: dict[str, float] = {}
    with stage("ingest", subject_id, timings):
        if not events:
            raise ValueError("subject has no events")
        clean = ingest.dedupe(events, cfg.ingest.dedupe_window)
        origin, span = subject_span(clean, cfg.ingest.tz_offset)
        n_days = cfg.ingest.n_days or span
        fm = ingest.extract_features(clean, locations, n_days, origin, cfg.ingest.max_dwell,
                                     cfg.ingest.normalize_ws, subject_id)
    with stage("cmp", subject_id, timings):
        cmps = cmp_mod.compute_cmp(fm.values, fm.feature_names, cfg.cmp)
    seed = subject_seed(cfg.seed, subject_id)
    checkpoint = None
    with stage("graphs", subject_id, timings):
        stream = graphs.build_stream(cmps, cfg.graphs.i_min, cfg.graphs.max_history)
    with stage("detect", subject_id, timings):
        det_cfg = cfg.detector_config(seed)
        if cfg.detector == "gnn":
            model = gnn.train_embedder(stream, cmps, det_cfg)
            series = gnn.embedding_deltas(model, stream, det_cfg.embedding_metric, subject_id)
            checkpoint = gnn.checkpoint_text(model, det_cfg)
        elif cfg.detector == "cmp_baseline":
            series = detectors.score_cmp_baseline(cmps, det_cfg, cfg.graphs.i_min, subject_id)
        else:
            run = getattr(detectors, f"run_{cfg.detector}")(stream, det_cfg, subject_id)
            series = run.series
            checkpoint = _scorer_checkpoint_text(cfg.detector, det_cfg, run)
    with stage("threshold", subject_id, timings):
        alert = alerts_mod.threshold(series, cfg.threshold, cfg.cmp.context_length)
    return SubjectOutput(subject_id, fm, cmps, series, alert, checkpoint, timings)


def _scorer_checkpoint_text(name: str, det_cfg, run: detectors.DetectorRun) -> str:
    extras = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in run.extras.items()}
    doc = {
        "format": SCORER_CHECKPOINT_FORMAT,
        "detector": name,
        "config": dataclasses.asdict(det_cfg),
        "best_epoch": run.fit.best_epoch,
        "loss_history": run.fit.losses,
        "params": {k: np.asarray(v).tolist() for k, v in sorted(run.fit.params.items())},
        "extras": extras,
    }
    return json.dumps(doc, indent=1) + "\n"


def _run_subject_star(args):
    return run_subject(*args)


def _safe_name(text: str) -> str:
    return "".join(c if c.isalnum() or c in "._-" else "_" for c in text)


def run_detect(events_path, out_dir, cfg: PipelineConfig) -> list[SubjectOutput]:
    """Full per-subject pipeline over an event file; writes every artifact
    under ``out_dir`` in subject-id order."""
    out = Path(out_dir)
    timings: dict[str, float] = {}
    with stage("read_events", "", timings):
        cohort = ingest.read_events(events_path)
        if not cohort:
            raise ValueError(f"{events_path}: no events")
    locations = cfg.ingest.locations or tuple(sorted({e.location for evs in cohort.values() for e in evs}))
    jobs = [(sid, cohort[sid], locations, cfg) for sid in sorted(cohort)]
    log.info("detect: %d subjects, %d features, detector=%s, backend=%s", len(jobs),
             len(locations) * len(ingest.FEATURE_KINDS), cfg.detector, BACKEND)
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_subject_star, jobs))
    else:
        results = [run_subject(*job) for job in jobs]
    for r in results:
        log.info("subject %s: %s", r.subject_id,
                 ", ".join(f"{k} {v:.2f}s" for k, v in r.timings.items()))
    with stage("write", "", timings):
        write_detect_outputs(out, results, cfg)
    return results


def write_detect_outputs(out: Path, results: list[SubjectOutput], cfg: PipelineConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "features").mkdir(exist_ok=True)
    (out / "cmp").mkdir(exist_ok=True)
    for r in results:
        ingest.write_features_csv(out / "features" / f"{_safe_name(r.subject_id)}.csv", r.features)
        cdir = out / "cmp" / _safe_name(r.subject_id)
        cdir.mkdir(exist_ok=True)
        for name, M in zip(r.cmps.feature_names, r.cmps.matrices):
            cmp_mod.write_cmp_csv(cdir / f"{_safe_name(name)}.csv", M, cfg.cmp.subsequence_length)
        if r.checkpoint is not None:
            (out / "checkpoints").mkdir(exist_ok=True)
            (out / "checkpoints" / f"{_safe_name(r.subject_id)}.json").write_text(r.checkpoint)
    write_scores_csv(out / "scores.csv", [r.scores for r in results])
    alerts_mod.write_alerts_csv(out / "alerts.csv", [r.alerts for r in results])
    evaluate.write_scored_days(out / "scored_days.csv", scored_days(results, cfg))
    (out / "config.resolved").write_text(cfg.to_text())


def scored_days(results: list[SubjectOutput], cfg: PipelineConfig) -> dict[str, int]:
    """Days covered by the contexts that received a score."""
    return {r.subject_id: len(r.scores) * cfg.cmp.context_length for r in results}


def run_eval(alerts_path, labels_path, scored_days_path, out_dir,
             cfg: PipelineConfig) -> evaluate.EvalReport:
    timings: dict[str, float] = {}
    with stage("eval", "", timings):
        found = alerts_mod.read_alerts_csv(alerts_path)
        labels = synth.read_labels(labels_path)
        days = evaluate.read_scored_days(scored_days_path)
        det = sorted({a.detector for a in found.values()})
        rep = evaluate.report({sid: a.day_indices for sid, a in found.items()}, labels, days,
                              cfg.eval.x_percent, cfg.eval.margins, cfg.eval.pooled_alert_rate,
                              ",".join(det))
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rep.write(out / "report.json", out / "report.csv")
    s = rep.summary()
    log.info("eval: recall %.2f%% (mean per subject %.2f%%), alert rate %.2f%%, validity %d/%d",
             s["cohort_recall_percent"], s["mean_subject_recall_percent"],
             s["alert_rate_percent"], s["validity"], s["validity_total"])
    return rep


def run_render(inputs, out_dir, default_m: int = 3) -> list[Path]:
    """Render each CMP CSV (or every CSV below a directory) as a PGM."""
    timings: dict[str, float] = {}
    out = Path(out_dir)
    written = []
    with stage("render", "", timings):
        files: list[tuple[Path, Path]] = []
        for item in inputs:
            p = Path(item)
            if p.is_dir():
                files += [(f, f.relative_to(p)) for f in sorted(p.rglob("*.csv"))]
            elif p.exists():
                files.append((p, Path(p.name)))
            else:
                raise FileNotFoundError(f"{p}: no such CMP file")
        if not files:
            raise ValueError("no CMP CSV files to render")
        for src, rel in files:
            M, m = cmp_mod.read_cmp_csv(src)
            dst = out / rel.with_suffix(".pgm")
            dst.parent.mkdir(parents=True, exist_ok=True)
            dst.write_bytes(cmp_mod.to_pgm(M, m or default_m))
            written.append(dst)
    log.info("render: %d images", len(written))
    return written


# -- argument handling --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read_config(path, overrides) -> list[tuple[str, str]]:
    pairs = []
    if path:
        p = Path(path)
        if not p.exists():
            raise DataError(f"config file {p} does not exist")
        pairs += parse_pairs(p.read_text(), str(p))
    for item in overrides or ():
        pairs += parse_pairs(item, "-o")
    return pairs


def _pipeline_config(args) -> PipelineConfig:
    pairs = _read_config(args.config, args.override)
    if getattr(args, "seed", None) is not None:
        pairs.append(("seed", str(args.seed)))
    if getattr(args, "detector", None):
        pairs.append(("detector", args.detector))
    if getattr(args, "workers", None):
        pairs.append(("workers", str(args.workers)))
    return build_pipeline_config(pairs)


def _cohort_spec(args) -> synth.CohortSpec:
    pairs = _read_config(args.spec, args.spec_override)
    if args.seed is not None:
        pairs.append(("seed", str(args.seed)))
    return build_cohort_spec(pairs)


def _require(path, what):
    if not Path(path).exists():
        raise DataError(f"{what} {path} does not exist")


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cmpgraph", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    p.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def config_args(sp):
        sp.add_argument("-c", "--config", help="key=value pipeline config file")
        sp.add_argument("-o", "--override", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")

    def spec_args(sp):
        sp.add_argument("--spec", help="key=value cohort spec file")
        sp.add_argument("-s", "--spec-override", action="append", metavar="KEY=VALUE",
                        help="override one cohort spec key (repeatable)")

    sp = sub.add_parser("synth", help="generate a synthetic cohort")
    spec_args(sp)
    sp.add_argument("--seed", type=int, help="cohort seed")
    sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("detect", help="features, CMPs, graphs, scores and alerts")
    config_args(sp)
    sp.add_argument("--events", required=True, help="event CSV")
    sp.add_argument("--seed", type=int, required=True, help="run seed")
    sp.add_argument("--detector", choices=DETECTOR_CHOICES)
    sp.add_argument("--workers", type=int, help="parallel subject workers")
    sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("eval", help="score alerts against labels")
    config_args(sp)
    sp.add_argument("--alerts", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--scored-days", help="defaults to scored_days.csv next to the alerts")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("render", help="CMP CSVs to PGM heatmaps")
    sp.add_argument("inputs", nargs="+", help="CMP CSV files or directories")
    sp.add_argument("-m", "--subsequence-length", type=int, default=3,
                    help="used when a CSV does not record it")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("all", help="synth (unless --events), detect, eval and render")
    config_args(sp)
    spec_args(sp)
    sp.add_argument("--events", help="event CSV; requires --labels")
    sp.add_argument("--labels")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--detector", choices=DETECTOR_CHOICES)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out", required=True)

    sub.add_parser("keys", help="print every config key with its default")
    return p


def _cmd_synth(args):
    spec = _cohort_spec(args)
    timings: dict[str, float] = {}
    with stage("synth", "", timings):
        ev, lab = synth.write_cohort(args.out, spec)
    log.info("synth: wrote %s and %s in %.2fs", ev, lab, timings["synth"])


def _cmd_detect(args):
    cfg = _pipeline_config(args)
    _require(args.events, "event file")
    t0 = time.perf_counter()
    run_detect(args.events, args.out, cfg)
    log.info("detect: done in %.2fs", time.perf_counter() - t0)


def _cmd_eval(args):
    cfg = _pipeline_config(args)
    scored = args.scored_days or str(Path(args.alerts).parent / "scored_days.csv")
    for path, what in ((args.alerts, "alert file"), (args.labels, "label file"),
                       (scored, "scored-days file")):
        _require(path, what)
    run_eval(args.alerts, args.labels, scored, args.out, cfg)


def _cmd_render(args):
    run_render(args.inputs, args.out, args.subsequence_length)


def _cmd_all(args):
    cfg = _pipeline_config(args)
    out = Path(args.out)
    if args.events:
        if not args.labels:
            raise UsageError("all: --events requires --labels")
        _require(args.events, "event file")
        _require(args.labels, "label file")
        events, labels = Path(args.events), Path(args.labels)
    else:
        spec = _cohort_spec(argparse.Namespace(spec=args.spec, spec_override=args.spec_override,
                                               seed=args.seed))
        timings: dict[str, float] = {}
        with stage("synth", "", timings):
            events, labels = synth.write_cohort(out / "data", spec)
        log.info("synth: %.2fs", timings["synth"])
    run_detect(events, out, cfg)
    run_eval(out / "alerts.csv", labels, out / "scored_days.csv", out, cfg)
    run_render([out / "cmp"], out / "render", cfg.cmp.subsequence_length)


def _cmd_keys(args):
    sys.stdout.write(PipelineConfig().to_text())


COMMANDS = {"synth": _cmd_synth, "detect": _cmd_detect, "eval": _cmd_eval,
            "render": _cmd_render, "all": _cmd_all, "keys": _cmd_keys}


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if exc.data else 3
    except Exception as exc:  # pragma: no cover - last resort
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
