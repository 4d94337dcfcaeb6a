"""Command-line entry point wiring synthesis, ingestion, training and reports.

Options resolve with flag > config file > built-in default. The config file
is INI-style, one section per subcommand plus a ``[common]`` section for
shared keys (antennas, cdrs, output, utc_offset, threads, figures):

    [common]
    utc_offset = -3
    output = out

    [synth]
    seed = 42
    n_users = 1000

Every subcommand writes its CSV outputs (and, unless figures are disabled,
PNG figures) into the output directory and prints a one-line summary.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from typing import Iterable, Iterator, List, Optional

from . import commute as commute_mod
from . import events as events_mod
from . import figures as figures_mod
from . import ingest as ingest_mod
from . import predictor as predictor_mod
from . import synth as synth_mod
from .core import BoundingBox, CdrRecord
from .ingest import ParsePolicy
from .predictor import DirectionFilter

_DIRECTIONS = {
    "all": DirectionFilter.ALL,
    "out": DirectionFilter.OUTGOING_ONLY,
    "in": DirectionFilter.INCOMING_ONLY,
}


def _to_bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _to_bbox(text: str) -> BoundingBox:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 4:
        raise ValueError("bbox needs 4 comma-separated values: min_lat,min_lon,max_lat,max_lon")
    return BoundingBox(*parts)


def _to_int_list(text: str) -> List[int]:
    return [int(x) for x in text.split(",") if x.strip() != ""]


class Conf:
    """Per-invocation option resolution: flags, then config file, then default."""

    def __init__(self, args: argparse.Namespace, section: str):
        self.args = args
        self.section = section
        self.parser = configparser.ConfigParser()
        config_path = getattr(args, "config", None)
        if config_path:
            if not os.path.exists(config_path):
                raise ValueError(f"config file not found: {config_path}")
            self.parser.read(config_path)

    def get(self, key: str, default=None, convert=str):
        flag_value = getattr(self.args, key, None)
        if flag_value is not None:
            return flag_value
        for section in (self.section, "common"):
            if self.parser.has_option(section, key):
                raw = self.parser.get(section, key)
                try:
                    return convert(raw)
                except ValueError as exc:
                    raise ValueError(f"config [{section}] {key}: {exc}") from None
        return default

    def require(self, key: str, convert=str):
        value = self.get(key, default=None, convert=convert)
        if value is None:
            raise ValueError(
                f"missing required option '{key}' "
                f"(pass --{key.replace('_', '-')} or set it in the config file)"
            )
        return value

    # Shared options.
    def output_dir(self) -> str:
        out = self.get("output", default="out")
        os.makedirs(out, exist_ok=True)
        return out

    def utc_offset(self) -> float:
        return self.get("utc_offset", default=0.0, convert=float)

    def threads(self) -> int:
        return self.get("threads", default=1, convert=int)

    def figures(self) -> bool:
        return self.get("figures", default=True, convert=_to_bool)

    def policy(self) -> ParsePolicy:
        strict = self.get("strict", default=False, convert=_to_bool)
        return ParsePolicy.STRICT if strict else ParsePolicy.SKIP_AND_COUNT

    def direction(self) -> DirectionFilter:
        name = self.get("direction", default="all")
        if name not in _DIRECTIONS:
            raise ValueError(f"direction must be one of {sorted(_DIRECTIONS)}: {name}")
        return _DIRECTIONS[name]


def _open_stream(conf: Conf) -> tuple:
    registry = ingest_mod.load_antennas(conf.require("antennas"))
    stream = ingest_mod.stream_cdrs(
        conf.require("cdrs"), registry, conf.policy(), conf.utc_offset()
    )
    return registry, _window(stream, conf), stream


def _window(records: Iterable[CdrRecord], conf: Conf) -> Iterator[CdrRecord]:
    lo = conf.get("from_epoch", convert=int)
    hi = conf.get("until_epoch", convert=int)
    if lo is None and hi is None:
        return iter(records)
    return (
        r
        for r in records
        if (lo is None or r.timestamp >= lo) and (hi is None or r.timestamp < hi)
    )


def cmd_synth(args: argparse.Namespace) -> int:
    conf = Conf(args, "synth")
    out = conf.output_dir()
    reserved = conf.get("reserved_antennas", default="", convert=str)
    cfg = synth_mod.SynthConfig(
        n_users=conf.require("n_users", int),
        n_antennas=conf.require("n_antennas", int),
        bbox=conf.require("bbox", _to_bbox),
        weeks=conf.require("weeks", int),
        utc_offset=conf.utc_offset(),
        call_rate=conf.get("call_rate", default=4.0, convert=float),
        p_slot_adherence=conf.get("p_slot_adherence", default=0.8, convert=float),
        fan_fraction=conf.get("fan_fraction", default=0.0, convert=float),
        p_attend=conf.get("p_attend", default=0.0, convert=float),
        seed=conf.require("seed", int),
        start_epoch=conf.get("start_epoch", default=synth_mod.DEFAULT_START_EPOCH, convert=int),
        reserved_antennas=frozenset(_to_int_list(reserved)) if reserved else frozenset(),
    )
    fixture_path = conf.get("fixture")
    fixture = events_mod.load_fixture(fixture_path) if fixture_path else None

    registry, truth = synth_mod.generate_population(cfg)
    ingest_mod.write_antennas(os.path.join(out, "antennas.csv"), registry)
    n = synth_mod.generate_cdrs(
        registry, truth, fixture, cfg, os.path.join(out, "cdrs.csv"), threads=conf.threads()
    )
    synth_mod.write_ground_truth(os.path.join(out, "ground_truth.csv"), truth)
    synth_mod.write_attendance(os.path.join(out, "attendance.csv"), truth)
    print(
        f"synth: {n} records, {cfg.n_users} users, {cfg.n_antennas} antennas, "
        f"{cfg.weeks} weeks, seed {cfg.seed} -> {out}"
    )
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    conf = Conf(args, "stats")
    out = conf.output_dir()
    registry, records, stream = _open_stream(conf)
    stats = ingest_mod.dataset_stats(records, conf.utc_offset())
    # Malformed lines never reach the record iterator; take their count from
    # the underlying stream.
    stats.malformed_count = stream.stats.malformed_count
    ingest_mod.write_stats(os.path.join(out, "stats.csv"), stats)
    days = len(stats.per_day_counts)
    print(
        f"stats: {stats.record_count} records, {stats.user_count} users, "
        f"{stats.malformed_count} malformed, {days} days -> {out}/stats.csv"
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    conf = Conf(args, "train")
    out = conf.output_dir()
    registry, records, stream = _open_stream(conf)
    model = predictor_mod.train(
        records,
        direction_filter=conf.direction(),
        utc_offset=conf.utc_offset(),
        threads=conf.threads(),
    )
    path = os.path.join(out, "model.csv")
    predictor_mod.save_model(model, path)
    print(
        f"train: records={stream.stats.record_count} "
        f"cells={len(model.histogram)} direction={conf.direction().value} -> {path}"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    conf = Conf(args, "eval")
    out = conf.output_dir()
    registry, records, _ = _open_stream(conf)
    model_path = conf.get("model", default=os.path.join(out, "model.csv"))
    model = predictor_mod.load_model(model_path, direction_filter=conf.direction())

    clustering = None
    cluster_km = conf.get("cluster_km", convert=float)
    if cluster_km is not None:
        clustering = predictor_mod.cluster_antennas(registry, cluster_km)

    report = predictor_mod.evaluate(
        model, records, utc_offset=conf.utc_offset(), clustering=clustering
    )
    predictor_mod.per_slot_report(report, os.path.join(out, "per_slot.csv"))
    if conf.figures():
        figures_mod.per_slot_figure(
            report,
            os.path.join(out, "per_slot.png"),
            title=f"Predictability by time slot ({conf.direction().value})",
        )
    acc = f"{report.accuracy:.4f}" if report.accuracy is not None else "n/a"
    cov = f"{report.coverage:.4f}" if report.coverage is not None else "n/a"
    slot_acc = (
        f"{report.mean_slot_accuracy:.4f}"
        if report.mean_slot_accuracy is not None
        else "n/a"
    )
    cl = f", clusters<{cluster_km}km" if clustering is not None else ""
    print(
        f"eval: {report.total_events} events, accuracy={acc}, "
        f"slot_mean_accuracy={slot_acc}, coverage={cov}{cl} -> {out}/per_slot.csv"
    )
    return 0


def cmd_commute(args: argparse.Namespace) -> int:
    conf = Conf(args, "commute")
    out = conf.output_dir()
    registry, records, _ = _open_stream(conf)
    model = predictor_mod.train(records, utc_offset=conf.utc_offset(), threads=conf.threads())
    places = commute_mod.important_places(
        model.histogram, min_calls=conf.get("min_calls", default=10, convert=int)
    )
    report = commute_mod.commute_radius(places, registry)
    commute_mod.write_commute_report(os.path.join(out, "commute.csv"), report)
    if conf.figures():
        figures_mod.commute_figure(report, os.path.join(out, "commute.png"))
    mean = f"{report.mean_radius_km:.3f}" if report.mean_radius_km is not None else "n/a"
    med = f"{report.median_radius_km:.3f}" if report.median_radius_km is not None else "n/a"
    print(
        f"commute: {report.users_qualified}/{report.users_considered} qualified, "
        f"mean={mean} km, median={med} km -> {out}/commute.csv"
    )
    return 0


def cmd_grid(args: argparse.Namespace) -> int:
    conf = Conf(args, "grid")
    out = conf.output_dir()
    registry, records, _ = _open_stream(conf)
    hour = conf.require("hour", int)
    grid = commute_mod.density_grid(
        records,
        registry,
        bbox=conf.require("bbox", _to_bbox),
        cell_deg=conf.require("cell_deg", float),
        hour=hour,
        utc_offset=conf.utc_offset(),
    )
    path = os.path.join(out, f"grid_h{hour:02d}.csv")
    commute_mod.write_grid(path, grid)
    if conf.figures():
        figures_mod.grid_figure(grid, path[:-4] + ".png")
    print(f"grid: hour={hour:02d}, {grid.total} calls in bbox -> {path}")
    return 0


def cmd_tag_fans(args: argparse.Namespace) -> int:
    conf = Conf(args, "tag-fans")
    out = conf.output_dir()
    registry, records, _ = _open_stream(conf)
    fixture = events_mod.load_fixture(conf.require("fixture"))
    tags = events_mod.tag_fans(
        records,
        fixture,
        registry,
        zone_radius_km=conf.get("zone_km", default=1.0, convert=float),
        k=conf.get("k_consecutive", default=3, convert=int),
    )
    path = os.path.join(out, "tags.csv")
    events_mod.write_tags(path, tags)
    print(
        f"tag-fans: {len(tags.users)} users tagged "
        f"(k={tags.k_consecutive}, zone={tags.zone_radius_km} km) -> {path}"
    )
    return 0


def cmd_eval_enriched(args: argparse.Namespace) -> int:
    conf = Conf(args, "eval-enriched")
    out = conf.output_dir()
    registry, records, _ = _open_stream(conf)
    fixture = events_mod.load_fixture(conf.require("fixture"))
    model_path = conf.get("model", default=os.path.join(out, "model.csv"))
    model = predictor_mod.load_model(model_path, direction_filter=conf.direction())
    tags_path = conf.get("tags", default=os.path.join(out, "tags.csv"))
    zone_km = conf.get("zone_km", default=1.0, convert=float)
    tags = events_mod.load_tags(tags_path, zone_radius_km=zone_km)
    zones = events_mod.build_zones(registry, fixture, zone_km)

    mode = conf.get("mode", default=events_mod.ComparisonMode.ZONE_SET)
    report = events_mod.compare_on_matches(
        model, tags, fixture, zones, records, mode=mode, utc_offset=conf.utc_offset()
    )
    path = os.path.join(out, "enriched.csv")
    events_mod.write_enriched_report(path, report)
    if conf.figures():
        figures_mod.enriched_figure(report, os.path.join(out, "enriched.png"))

    def _fmt(x: Optional[float]) -> str:
        return f"{x:.4f}" if x is not None else "n/a"

    b, e = report.baseline, report.enriched
    print(
        f"eval-enriched: {b.total_events} events ({mode}); "
        f"baseline acc={_fmt(b.accuracy)} cov={_fmt(b.coverage)}; "
        f"enriched acc={_fmt(e.accuracy)} cov={_fmt(e.coverage)} -> {path}"
    )
    return 0


def cmd_convergence(args: argparse.Namespace) -> int:
    conf = Conf(args, "convergence")
    out = conf.output_dir()
    registry, records, _ = _open_stream(conf)
    fixture = events_mod.load_fixture(conf.require("fixture"))
    match_id = conf.require("match_id")
    match = next((m for m in fixture if m.match_id == match_id), None)
    if match is None:
        raise ValueError(f"match id {match_id!r} not in fixture")
    offsets = conf.get("offsets", default=[-5, -1, 1, 3], convert=_to_int_list)
    grids = events_mod.convergence_grids(
        records,
        registry,
        match,
        bbox=conf.require("bbox", _to_bbox),
        cell_deg=conf.require("cell_deg", float),
        offsets_hours=offsets,
        zone_radius_km=conf.get("zone_km", default=1.0, convert=float),
    )
    totals = []
    for off, grid in zip(offsets, grids):
        tag = f"{'m' if off < 0 else 'p'}{abs(off):02d}h"
        path = os.path.join(out, f"convergence_{tag}.csv")
        commute_mod.write_grid(path, grid)
        if conf.figures():
            figures_mod.grid_figure(grid, path[:-4] + ".png")
        totals.append(f"{off:+d}h:{grid.total}")
    print(
        f"convergence: match {match_id}, calls by offset {' '.join(totals)} -> {out}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdrmob",
        description="Mobility analytics on call detail records.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file; flags override it")
    common.add_argument("--output", help="output directory (default: out)")
    common.add_argument("--threads", type=int, help="worker thread cap (default: 1)")
    common.add_argument("--utc-offset", type=float, dest="utc_offset",
                        help="local-time offset from UTC in hours (default: 0)")
    common.add_argument("--figures", action=argparse.BooleanOptionalAction, default=None,
                        help="render PNG figures next to CSV outputs (default: on)")

    reading = argparse.ArgumentParser(add_help=False)
    reading.add_argument("--antennas", help="antenna registry CSV")
    reading.add_argument("--cdrs", help="CDR CSV")
    reading.add_argument("--strict", action=argparse.BooleanOptionalAction, default=None,
                         help="abort on the first malformed line instead of skipping")
    reading.add_argument("--from-epoch", type=int, dest="from_epoch",
                         help="keep records with timestamp >= this epoch")
    reading.add_argument("--until-epoch", type=int, dest="until_epoch",
                         help="keep records with timestamp < this epoch")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-users", type=int, dest="n_users")
    p.add_argument("--n-antennas", type=int, dest="n_antennas")
    p.add_argument("--weeks", type=int)
    p.add_argument("--bbox", type=_to_bbox, help="min_lat,min_lon,max_lat,max_lon")
    p.add_argument("--call-rate", type=float, dest="call_rate")
    p.add_argument("--p-slot-adherence", type=float, dest="p_slot_adherence")
    p.add_argument("--fan-fraction", type=float, dest="fan_fraction")
    p.add_argument("--p-attend", type=float, dest="p_attend")
    p.add_argument("--start-epoch", type=int, dest="start_epoch")
    p.add_argument("--reserved-antennas", dest="reserved_antennas",
                   help="comma-separated antenna ids excluded from home/work")
    p.add_argument("--fixture", help="fixture CSV for planted match attendance")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", parents=[common, reading], help="dataset statistics")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", parents=[common, reading], help="train the baseline model")
    p.add_argument("--direction", choices=sorted(_DIRECTIONS))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common, reading], help="evaluate a trained model")
    p.add_argument("--direction", choices=sorted(_DIRECTIONS))
    p.add_argument("--model", help="model CSV (default: <output>/model.csv)")
    p.add_argument("--cluster-km", type=float, dest="cluster_km",
                   help="score on single-linkage antenna clusters at this threshold")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("commute", parents=[common, reading],
                       help="important places and commute radius")
    p.add_argument("--min-calls", type=int, dest="min_calls")
    p.set_defaults(func=cmd_commute)

    p = sub.add_parser("grid", parents=[common, reading], help="hourly call-density grid")
    p.add_argument("--bbox", type=_to_bbox)
    p.add_argument("--cell-deg", type=float, dest="cell_deg")
    p.add_argument("--hour", type=int)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("tag-fans", parents=[common, reading],
                       help="tag users attending consecutive fixture matches")
    p.add_argument("--fixture")
    p.add_argument("--zone-km", type=float, dest="zone_km")
    p.add_argument("--k-consecutive", type=int, dest="k_consecutive")
    p.set_defaults(func=cmd_tag_fans)

    p = sub.add_parser("eval-enriched", parents=[common, reading],
                       help="compare baseline vs fixture-enriched predictions")
    p.add_argument("--direction", choices=sorted(_DIRECTIONS))
    p.add_argument("--model")
    p.add_argument("--fixture")
    p.add_argument("--tags")
    p.add_argument("--zone-km", type=float, dest="zone_km")
    p.add_argument("--mode", choices=[events_mod.ComparisonMode.ZONE_SET,
                                      events_mod.ComparisonMode.EXACT_ANTENNA])
    p.set_defaults(func=cmd_eval_enriched)

    p = sub.add_parser("convergence", parents=[common, reading],
                       help="attendee density grids around one match")
    p.add_argument("--fixture")
    p.add_argument("--match-id", dest="match_id")
    p.add_argument("--bbox", type=_to_bbox)
    p.add_argument("--cell-deg", type=float, dest="cell_deg")
    p.add_argument("--offsets", type=_to_int_list,
                   help="comma-separated signed hour offsets from kickoff")
    p.add_argument("--zone-km", type=float, dest="zone_km")
    p.set_defaults(func=cmd_convergence)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ingest_mod.IngestError, synth_mod.ConfigInvalid, events_mod.EmptyZone) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
