"""Command-line front end.

Subcommands
-----------
generate   periodic sounding capture (zeros or dummy traffic between
           symbols) -> IQ file plus JSON sidecar
composite  laboratory-style multi-user composite capture -> IQ file
process    IQ capture -> per-reception detection log (CSV or JSON)
mission    simulated localization flight -> report JSON + estimate CSV
sweep      Monte-Carlo sweeps: misidentification grids or localization
           error CDFs -> result tables
report     stored result-table JSON -> CSV plus a one-line summary

Every subcommand is byte-deterministic: the same invocation with the same
seed produces identical output files. Exit status is 0 on success, 1 for
domain errors (bad files, undetectable signals, inconsistent parameters)
and 2 for usage errors (which also print the relevant file schemas).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as xp
from . import ident, iqio, locate, mission, sync, waveform
from .channel import ChannelError, IqCapture
from .scenario import ScenarioError, load_preset, load_scenario, preset_names
from .waveform import SrsConfig

_GENERATE_STREAM = 0x5C11_0001
_COMPOSITE_STREAM = 0x5C11_0002

_DOMAIN_ERRORS = (
    waveform.WaveformError,
    ChannelError,
    sync.SyncError,
    ident.IdentError,
    locate.LocateError,
    mission.MissionError,
    ScenarioError,
    xp.ExperimentError,
    iqio.IqFormatError,
    json.JSONDecodeError,
    OSError,
)

_SRS_CONFIG_SCHEMA = """\
SRS config file (--config, JSON object; all fields optional):
  {"n_fft": 128, "cp_len": 9, "m_srs_rb": 4, "k_tc": 2, "k0": 0,
   "seq_id": 0, "mu": 0, "period_slots": 10}
Defaults give the 1.4 MHz-class configuration (N=128, L=64, fs=3.84 MHz);
{"n_fft": 1024, "cp_len": 72, "m_srs_rb": 36} gives the 13 MHz-class one.
"""

_IQ_SCHEMA = """\
IQ file format:
  payload  <name>       little-endian interleaved float32 I/Q pairs
  sidecar  <name>.json  {"schema_version", "sample_rate_hz",
                         "center_freq_hz", "t0_s", "antenna_id"}
"""

_DETECTION_LOG_SCHEMA = """\
Detection log (one row per reception):
  period, n_start, snr_db, verdict, n_components, n_extra,
  then per assigned shift w: gamma_db_w<w>, eps_hat_w<w>, missed_w<w>
gamma_db is the channel amplitude in dB, eps_hat the timing offset in
samples, missed=1 when the user produced no component. verdict is
"srs_confirmed" or "false_positive". Metric trace CSV (--dump-metric):
n, m, m_f.
"""

_SCENARIO_SCHEMA = """\
Scenario (--config): a preset name (%s) or a JSON file:
  {"name", "seed", "carrier_hz", "noise_figure_db",
   "area_polygon_m": [[x, y], ...], "srs": {<SRS config>},
   "band_k0": [k0, ...], "ues": [{"ue_id", "position_m", "band",
   "shift", "tx_power_dbm", ...}, ...], "mission": {...}, "home_m"}
Mission outputs: mission_report.json (full report) and
mission_estimates.csv (ue_id, band, shift, truth/initial/refined
positions and localization errors, one row per UE).
"""

_RESULT_TABLE_SCHEMA = """\
Result table JSON: {"schema_version", "kind", "axes", "cells",
"counts", "ci_lo", "ci_hi", "ci_method", "meta"}. CSV form is long
format: one row per cell with axis coordinates, value, count and CI.
"""


class _Parser(argparse.ArgumentParser):
    """Parser whose usage errors print the full help (file schemas)."""

    def error(self, message):  # noqa: A002 - argparse API
        self.print_help(sys.stderr)
        self.exit(2, f"\n{self.prog}: usage error: {message}\n")


def _parse_int_list(text: str, flag: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip() != "")
    except ValueError:
        raise xp.ExperimentError(f"{flag} expects comma-separated integers, got {text!r}")


def _parse_float_list(text: str, flag: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip() != "")
    except ValueError:
        raise xp.ExperimentError(f"{flag} expects comma-separated numbers, got {text!r}")


def _load_srs_config(path: str | None) -> SrsConfig:
    if path is None:
        return SrsConfig()
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise xp.ExperimentError(f"SRS config {path} must hold a JSON object")
    allowed = {f.name for f in dataclasses.fields(SrsConfig)}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise xp.ExperimentError(
            f"unknown SRS config fields {unknown}; allowed: {sorted(allowed)}"
        )
    return SrsConfig(**doc)


def _resolve_scenario(config: str | None, seed: int | None):
    if config is None:
        raise xp.ExperimentError(
            "mission requires --config <scenario file or preset name>; "
            f"presets: {', '.join(preset_names())}"
        )
    path = Path(config)
    if path.exists():
        return load_scenario(path, seed=seed)
    name = path.stem if path.suffix else str(config)
    if name in preset_names():
        return load_preset(name, seed=seed)
    raise ScenarioError(
        f"scenario {config!r} is neither a file nor a preset "
        f"({', '.join(preset_names())})"
    )


def _out_path(ns, name: str) -> Path:
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    given = Path(name)
    return given if given.is_absolute() else out_dir / given


def _json_text(obj) -> str:
    return json.dumps(_json_safe(obj), sort_keys=True, indent=2) + "\n"


def _json_safe(obj):
    """Recursively replace NaN with None so the emitted JSON is strict."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_csv_cell(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# generate


def _cmd_generate(ns) -> None:
    cfg = _load_srs_config(ns.config)
    shifts = _parse_int_list(ns.shifts, "--shifts")
    if len(set(shifts)) != len(shifts):
        ns._parser.error("--shifts must be unique")
    if ns.periods < 1:
        ns._parser.error("--periods must be >= 1")
    per = cfg.period_samples
    if not 0 <= ns.offset <= per - cfg.symbol_len:
        ns._parser.error(
            f"--offset must lie in [0, {per - cfg.symbol_len}] for this config"
        )
    seed = 0 if ns.seed is None else ns.seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, _GENERATE_STREAM]))

    template = np.zeros(per, dtype=np.complex128)
    for w in shifts:
        sym = waveform.synthesize_symbol(cfg, w)
        template[ns.offset : ns.offset + cfg.symbol_len] += sym.samples
    body = template[ns.offset + cfg.cp_len : ns.offset + cfg.symbol_len]
    body_rms = float(np.sqrt(np.mean(np.abs(body) ** 2)))
    sigma = None
    if ns.snr_db is not None:
        sigma = body_rms * 10.0 ** (-ns.snr_db / 20.0) / math.sqrt(2.0)

    path = _out_path(ns, ns.out)
    with iqio.IqWriter(path, sample_rate_hz=cfg.sample_rate_hz) as writer:
        for _ in range(ns.periods):
            block = template.copy()
            if ns.dummy_traffic:
                block = xp.inject_dummy_traffic(
                    block, rng, power_dbfs=ns.traffic_dbfs
                )
            if sigma is not None:
                block += sigma * (
                    rng.standard_normal(per) + 1j * rng.standard_normal(per)
                )
            writer.append(block)
    print(f"wrote {path} ({writer.n_samples} samples, {ns.periods} periods)")


# ---------------------------------------------------------------------------
# composite


def _cmd_composite(ns) -> None:
    cfg = _load_srs_config(ns.config)
    shifts = _parse_int_list(ns.shifts, "--shifts")
    offsets = _parse_float_list(ns.offsets, "--offsets")
    powers = _parse_float_list(ns.powers_dbfs, "--powers-dbfs")
    seed = 0 if ns.seed is None else ns.seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, _COMPOSITE_STREAM]))
    if ns.cfo_ppm > 0:
        span = ns.cfo_ppm * 1e-6 * ns.carrier_hz
        cfos = tuple(rng.uniform(-span, span, len(shifts)))
    else:
        cfos = (0.0,) * len(shifts)
    cap = xp.build_composite_capture(
        cfg,
        shifts=shifts,
        offsets_samples=offsets,
        powers_dbfs=powers,
        cfos_hz=cfos,
        duplicate_band=ns.duplicate_band,
        pad=ns.pad,
    )
    cap = IqCapture(
        samples=cap.samples,
        sample_rate_hz=cap.sample_rate_hz,
        t0_s=cap.t0_s,
        antenna_id=cap.antenna_id,
        center_freq_hz=ns.carrier_hz,
    )
    path = _out_path(ns, ns.out)
    iqio.write_iq(path, cap)
    print(
        f"wrote {path} ({len(cap.samples)} samples, shifts {list(shifts)}, "
        f"duplicate_band={ns.duplicate_band})"
    )


# ---------------------------------------------------------------------------
# process


def _cmd_process(ns) -> None:
    cfg = _load_srs_config(ns.config)
    assigned = _parse_int_list(ns.assigned, "--assigned")
    if len(set(assigned)) != len(assigned):
        ns._parser.error("--assigned shifts must be unique")
    cap = iqio.read_iq(ns.capture)
    band_cfg = dataclasses.replace(
        cfg, k0=cfg.k0 + ns.band * cfg.k_tc * cfg.m_srs
    )
    y = cap.samples
    half, cp, per = cfg.half_len, cfg.cp_len, cfg.period_samples

    trace = sync.repetition_metric(y, half, cp)
    n_det = sync.detect(trace, m_th=ns.m_th)
    if n_det is None:
        raise sync.SyncError(
            f"no sounding signal detected (metric threshold {ns.m_th})"
        )
    n_sync = n_det - round(n_det / per) * per
    m_f_peak = float(np.max(trace.m_f))
    snr_db = sync.estimate_snr(m_f_peak)

    rows = []
    n_periods = (len(y) - max(n_sync, 0)) // per + 1
    for q in range(n_periods):
        start = n_sync + q * per + cp
        if start < 0 or start + half > len(y):
            continue
        spec = ident.despread(y, start, band_cfg)
        result = ident.matching_pursuit(spec.values, half)
        meas = ident.clean(result.components, assigned, half)
        row = {
            "period": q,
            "n_start": start,
            "snr_db": round(snr_db, 6),
            "verdict": ident.false_positive_check(result),
            "n_components": len(result.components),
            "n_extra": meas.n_extra,
        }
        for i, w in enumerate(assigned):
            row[f"gamma_db_w{w}"] = float(meas.gamma_db[i])
            row[f"eps_hat_w{w}"] = float(meas.eps_hat[i])
            row[f"missed_w{w}"] = int(meas.missed[i])
        rows.append(row)
    if not rows:
        raise ident.IdentError("capture holds no complete reception window")

    path = _out_path(ns, ns.out)
    header = list(rows[0])
    if ns.format == "json":
        path = path.with_suffix(".json") if path.suffix == ".csv" else path
        path.write_text(_json_text(rows))
    else:
        _write_csv(path, header, [[r[k] for k in header] for r in rows])
    print(f"wrote {path} ({len(rows)} receptions, sync at {n_sync})")

    if ns.dump_metric:
        mpath = _out_path(ns, ns.dump_metric)
        _write_csv(
            mpath,
            ["n", "m", "m_f"],
            [
                [n, float(trace.m[n]), float(trace.m_f[n])]
                for n in range(len(trace.m))
            ],
        )
        print(f"wrote {mpath} ({len(trace.m)} metric samples)")


# ---------------------------------------------------------------------------
# mission


def _cmd_mission(ns) -> None:
    scenario = _resolve_scenario(ns.config, ns.seed)
    report = mission.run_mission(scenario, dt=ns.dt, include_log=ns.log)

    report_path = _out_path(ns, "mission_report.json")
    report_path.write_text(_json_text(report))

    rows = []
    for ue_id in sorted(report["ues"]):
        entry = report["ues"][ue_id]
        init, refined = entry["initial"], entry["refined"]
        rows.append(
            [
                ue_id,
                entry["band"],
                entry["shift"],
                float(entry["truth_m"][0]),
                float(entry["truth_m"][1]),
                float("nan") if init is None else float(init["position_m"][0]),
                float("nan") if init is None else float(init["position_m"][1]),
                float(entry.get("le_initial_m", float("nan"))),
                float("nan") if refined is None else float(refined["position_m"][0]),
                float("nan") if refined is None else float(refined["position_m"][1]),
                float(entry.get("le_refined_m", float("nan"))),
            ]
        )
    table_path = _out_path(ns, "mission_estimates.csv")
    _write_csv(
        table_path,
        [
            "ue_id",
            "band",
            "shift",
            "truth_x_m",
            "truth_y_m",
            "initial_x_m",
            "initial_y_m",
            "le_initial_m",
            "refined_x_m",
            "refined_y_m",
            "le_refined_m",
        ],
        rows,
    )
    print(f"wrote {report_path}")
    print(f"wrote {table_path}")
    print(
        f"scenario {report['scenario']} seed {report['seed']}: "
        f"ALE initial {report['ale_initial_m']} m, "
        f"refined {report['ale_refined_m']} m "
        f"({report['n_measurements']} measurements)"
    )


# ---------------------------------------------------------------------------
# sweep


def _slice_misid_table(table: xp.ResultTable, iu: int, ub: int) -> xp.ResultTable:
    axes = {k: v for k, v in table.axes.items() if k != "ub"}
    meta = dict(table.meta)
    meta["ub"] = ub
    meta["missed_rate"] = np.asarray(table.meta["missed_rate"])[iu].tolist()
    return xp.ResultTable(
        kind=table.kind,
        axes=axes,
        cells=table.cells[iu],
        counts=table.counts[iu],
        ci_lo=None if table.ci_lo is None else table.ci_lo[iu],
        ci_hi=None if table.ci_hi is None else table.ci_hi[iu],
        ci_method=table.ci_method,
        meta=meta,
    )


def _write_table(ns, table: xp.ResultTable, stem: str) -> Path:
    ext = "json" if ns.format == "json" else "csv"
    path = _out_path(ns, f"{stem}.{ext}")
    path.write_text(table.to_json() if ns.format == "json" else table.to_csv())
    return path


def _cmd_sweep(ns) -> None:
    seed = 0 if ns.seed is None else ns.seed
    if ns.kind == "misid":
        trials = 500 if ns.trials is None else ns.trials
        ubs = _parse_int_list(ns.ub, "--ub")
        spec = xp.ExperimentSpec(
            kind=xp.KIND_MISID_GRID,
            trials=trials,
            base_seed=seed,
            delay_spread_s=tuple(
                v * 1e-6
                for v in _parse_float_list(ns.delay_spreads_us, "--delay-spreads-us")
            ),
            power_spread_db=_parse_float_list(
                ns.power_spreads_db, "--power-spreads-db"
            ),
            ub_list=ubs,
            bandwidth_list=tuple(
                s.strip() for s in ns.bandwidths.split(",") if s.strip()
            ),
            snr_db=ns.snr_db,
        )
        table = xp.run_misid_grid(spec)
        for iu, ub in enumerate(ubs):
            path = _write_table(ns, _slice_misid_table(table, iu, ub), f"misid_ub{ub}")
            print(f"wrote {path}")
    else:
        spec = xp.ExperimentSpec(
            kind=xp.KIND_LOC_CDF,
            trials=50 if ns.trials is None else ns.trials,
            base_seed=seed,
            preset=ns.preset,
        )
        table = xp.run_loc_cdf(spec)
        path = _write_table(ns, table, f"loc_cdf_{ns.preset}")
        print(f"wrote {path}")
        print(
            f"preset {ns.preset}: ALE {table.meta['ale_m']} m over "
            f"{len(table.cells)} refined estimates"
        )


# ---------------------------------------------------------------------------
# report


def _cmd_report(ns) -> None:
    for source in ns.results:
        table = xp.table_from_json(Path(source).read_text())
        stem = Path(source).stem
        if ns.format == "json":
            path = _out_path(ns, f"{stem}.json")
            text = table.to_json()
            if Path(source).resolve() == path.resolve():
                raise xp.ExperimentError(
                    f"refusing to overwrite input {source}; pick another --out-dir"
                )
        else:
            path = _out_path(ns, f"{stem}.csv")
            text = table.to_csv()
        path.write_text(text)
        extra = ""
        if "ale_m" in table.meta:
            extra = f", ALE {table.meta['ale_m']} m"
        print(
            f"{source}: kind={table.kind} cells={table.cells.size} "
            f"mean={float(np.mean(table.cells)):.6g}{extra} -> {path}"
        )


# ---------------------------------------------------------------------------
# parser


def _add_common(sp) -> None:
    sp.add_argument("--config", metavar="FILE", help="configuration file (see epilog)")
    sp.add_argument("--seed", type=int, default=None, help="RNG seed (default 0; mission: scenario seed)")
    sp.add_argument("--out-dir", default=".", help="output directory (created if missing)")
    sp.add_argument("--format", choices=("csv", "json"), default="csv", help="table output format")


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="srsloc",
        description="Uplink sounding-signal detection, identification and "
        "UAV-based localization toolkit.",
        epilog=_IQ_SCHEMA + "\n" + _SRS_CONFIG_SCHEMA,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    g = sub.add_parser(
        "generate",
        help="write a periodic sounding capture as an IQ file",
        epilog=_SRS_CONFIG_SCHEMA + "\n" + _IQ_SCHEMA,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_common(g)
    g.add_argument("--shifts", default="0", help="comma-separated cyclic shifts (default 0)")
    g.add_argument("--periods", type=int, default=20, help="number of sounding periods (default 20)")
    g.add_argument("--offset", type=int, default=0, help="symbol start offset within each period")
    g.add_argument("--snr-db", type=float, default=None, help="add white noise at this SNR (default noiseless)")
    g.add_argument("--dummy-traffic", action="store_true", help="fill idle samples with unrelated bursts")
    g.add_argument("--traffic-dbfs", type=float, default=-20.0, help="dummy traffic level (default -20 dBfs)")
    g.add_argument("--out", default="capture.iq", help="output IQ file name")
    g.set_defaults(_run=_cmd_generate, _parser=g)

    c = sub.add_parser(
        "composite",
        help="write a laboratory-style multi-user composite capture",
        epilog=_SRS_CONFIG_SCHEMA + "\n" + _IQ_SCHEMA,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_common(c)
    c.add_argument("--shifts", default="0,4,2", help="per-user cyclic shifts (default 0,4,2)")
    c.add_argument("--offsets", default="0,1.5,-1.5", help="per-user sample offsets (default 0,1.5,-1.5)")
    c.add_argument("--powers-dbfs", default="-5,-8,-15", help="per-user levels (default -5,-8,-15)")
    c.add_argument("--cfo-ppm", type=float, default=0.5, help="per-user CFO drawn within +/- this ppm of the carrier (0 disables)")
    c.add_argument("--carrier-hz", type=float, default=866e6, help="carrier for CFO scaling and the sidecar (default 866 MHz)")
    c.add_argument("--duplicate-band", action="store_true", help="repeat the user group on the adjacent subcarriers")
    c.add_argument("--pad", type=int, default=0, help="extra leading zero samples")
    c.add_argument("--out", default="composite.iq", help="output IQ file name")
    c.set_defaults(_run=_cmd_composite, _parser=c)

    p = sub.add_parser(
        "process",
        help="detect and identify sounding symbols in an IQ capture",
        epilog=_DETECTION_LOG_SCHEMA + "\n" + _SRS_CONFIG_SCHEMA,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_common(p)
    p.add_argument("capture", help="IQ file (with .json sidecar)")
    p.add_argument("--band", type=int, default=0, help="sub-band index (k0 advances by one allocation per band)")
    p.add_argument("--assigned", default="0,1,2,3,4,5,6,7", help="assigned cyclic shifts (default all 8)")
    p.add_argument("--m-th", type=float, default=0.6, help="detection threshold on the filtered metric (default 0.6)")
    p.add_argument("--dump-metric", metavar="FILE", default=None, help="also write the sliding metric trace CSV")
    p.add_argument("--out", default="detections.csv", help="detection log file name")
    p.set_defaults(_run=_cmd_process, _parser=p)

    m = sub.add_parser(
        "mission",
        help="fly a simulated localization mission over a scenario",
        epilog=_SCENARIO_SCHEMA % ", ".join(preset_names()),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_common(m)
    m.add_argument("--dt", type=float, default=0.1, help="simulation step in seconds (default 0.1)")
    m.add_argument("--log", action="store_true", help="include the per-reception measurement log in the report")
    m.set_defaults(_run=_cmd_mission, _parser=m)

    s = sub.add_parser(
        "sweep",
        help="run a Monte-Carlo sweep (misidentification grid or localization CDF)",
        epilog=_RESULT_TABLE_SCHEMA,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_common(s)
    s.add_argument("--kind", choices=("misid", "loc"), required=True, help="sweep family")
    s.add_argument("--trials", type=int, default=None, help="trials per cell (misid, default 500) or mission seeds (loc, default 50)")
    s.add_argument("--ub", default="2,4", help="misid: comma-separated user counts (default 2,4)")
    s.add_argument("--delay-spreads-us", default="0,0.3,0.6,0.9,1.2,1.5,1.8,2.1", help="misid: delay-spread axis in microseconds")
    s.add_argument("--power-spreads-db", default="0,3,6,9,12,15,18,21", help="misid: power-disparity axis in dB")
    s.add_argument("--bandwidths", default="1.4MHz,13MHz", help="misid: bandwidth configurations")
    s.add_argument("--snr-db", type=float, default=20.0, help="misid: SNR below the strongest user (default 20)")
    s.add_argument("--preset", default="rural", help="loc: scenario preset (default rural)")
    s.set_defaults(_run=_cmd_sweep, _parser=s)

    r = sub.add_parser(
        "report",
        help="convert stored result tables to CSV and print summaries",
        epilog=_RESULT_TABLE_SCHEMA,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_common(r)
    r.add_argument("results", nargs="+", help="result table JSON files from sweep --format json")
    r.set_defaults(_run=_cmd_report, _parser=r)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    try:
        ns._run(ns)
    except _DOMAIN_ERRORS as exc:
        print(f"srsloc: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
