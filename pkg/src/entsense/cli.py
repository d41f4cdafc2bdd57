"""Command-line experiment runner.

Five subcommands cover the toolkit end to end: ``fringe`` scans the
coincidence interference pattern and fits it, ``precision`` runs blocked
phase estimation across the identifiable branch, ``threshold-scan``
sweeps a uniform efficiency looking for the shot-noise crossing,
``random-phase`` runs the unknown-phase protocol against bit-sourced
truths, and ``audit`` re-derives tallies and photon accounting from an
event log.  Every run resolves one JSON config (or a shipped preset),
derives all randomness from the single seed in that config, and writes a
``manifest.json`` whose embedded config echo replays the run: feeding a
manifest back through --config reproduces every data file byte for byte
(the fresh manifest itself records its own new timestamp).

Output files per subcommand, all in the --out directory:

========== ====================================================
fringe      fringe_scan.csv, fringe_fit.json
precision   precision_scan.csv, precision.json
threshold-  threshold_scan.csv, threshold.json
random-     trials.csv, random_phase.json
audit       tallies.csv, audit.json
========== ====================================================

CSV floats are written with ``repr`` so a file either matches a replay
bit for bit or differs for a real reason.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    PRESET_NAMES,
    RunManifest,
    load_config_file,
    load_preset,
    parse_config,
)
from .errors import ConfigurationError, EmptyStatisticsError, EntsenseError
from .estimation import block_stats, estimate_blocks, fit_fringe
from .events import coincidence_fractions, write_tally_csv
from .model import (
    EfficiencyBudget,
    INFORMATIVE_PATTERNS,
    PhaseSetting,
    fisher_per_informative_event,
    pattern_distribution,
)
from .randomphase import measure_phase_point, run_random_phase_experiment, write_trials_csv
from .resources import (
    PrecisionReport,
    ResourceAudit,
    predicted_db_below_snl,
    threshold_efficiency,
)
from .simulator import (
    ExperimentConfig,
    LANE_TALLY,
    read_event_log,
    run_experiment,
    sample_tally,
    stream_generator,
)

__all__ = ["analytic_calibration", "build_parser", "main"]

FRINGE_CSV_HEADER = "theta,frac_a1b1,frac_a1b2,frac_a2b1,frac_a2b2,c_sum"
PRECISION_CSV_HEADER = "theta,theta_hat,delta,delta_err,n,snl,hl,db_below_snl,extremum"
THRESHOLD_CSV_HEADER = "eta,c_sum,n,db_below_snl"

_CALIBRATION_POINTS = 13


def analytic_calibration(source, eff, points=_CALIBRATION_POINTS):
    """Calibration fringe fitted to the model's exact fractions.

    Stands in for a calibration run of unlimited length: the scan rows
    are the closed-form coincidence fractions over one fringe period.
    Fractions are normalized by the full informative probability, not by
    the quartet alone, so the fit's offsets leave room for a meaningful
    rest category when estimation wants one.
    """
    thetas = np.linspace(0.0, 2.0 * math.pi / 3.0, points)
    rows = []
    for t in thetas:
        dist = pattern_distribution(source, eff, 3.0 * t)
        quartet = np.asarray(dist.coincidence_quartet())
        rows.append((float(t), quartet / dist.informative_probability()))
    return fit_fringe(rows, counts=np.full(points, 1e9))


def _report_dict(report):
    return json.loads(report.to_json())


def _write_json(path, doc):
    with open(path, "w") as fh:
        fh.write(json.dumps(doc, indent=2) + "\n")


def _load_run_config(args):
    """Resolve --config/--preset plus overrides into one RunConfig."""
    if (args.config is None) == (args.preset is None):
        raise ConfigurationError("exactly one of --config or --preset is required")
    if args.config is not None:
        config = load_config_file(args.config)
        config_path = args.config
    else:
        config = load_preset(args.preset)
        config_path = f"preset:{args.preset}"
    # overrides re-parse the raw document so the manifest echo stays honest
    raw = json.loads(json.dumps(config.raw))
    changed = False
    if args.seed is not None:
        raw["seed"] = args.seed
        changed = True
    if args.trials is not None:
        if "blocks" not in raw:
            raise ConfigurationError(
                "config key blocks: --trials override requires a blocks section"
            )
        raw["blocks"]["num_phases"] = args.trials
        changed = True
    if changed:
        config = parse_config(raw)
    return config, config_path


def _prepare_out(args, subcommand, config, config_path):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest.create(subcommand, config_path, config, out, __version__)
    manifest.to_json(out / "manifest.json")
    return out


def cmd_fringe(args):
    config, config_path = _load_run_config(args)
    scan = config.require("scan")
    eff = config.require("efficiency")
    source = config.source
    out = _prepare_out(args, "fringe", config, config_path)
    thetas = scan.setpoints()

    csv_rows = []
    if scan.analytic:
        rows = []
        for t in thetas:
            dist = pattern_distribution(source, eff, 3.0 * t)
            p_inf = dist.informative_probability()
            fracs = tuple(float(p) / p_inf for p in dist.coincidence_quartet())
            rows.append((t, fracs))
            csv_rows.append((t, fracs, p_inf))
        fit = fit_fringe(rows)
    else:
        settings = tuple(PhaseSetting(3.0 * t, 0.0) for t in thetas)
        exp = ExperimentConfig(
            source=source,
            eff=eff,
            settings=settings,
            pulses_per_setting=scan.pulses_per_point,
            seed=config.seed,
        )
        log_path = None
        if args.log is not None:
            log_path = Path(args.log)
            if log_path.parent != Path(""):
                log_path.parent.mkdir(parents=True, exist_ok=True)
        result = run_experiment(exp, workers=args.workers, event_log=log_path)
        rows = []
        c_sums = []
        for t, tally in zip(thetas, result.tallies):
            fracs = coincidence_fractions(tally)
            rows.append((t, fracs))
            csv_rows.append((t, fracs, tally.c_sum))
            c_sums.append(tally.c_sum)
        fit = fit_fringe(rows, counts=c_sums)

    with open(out / "fringe_scan.csv", "w") as fh:
        fh.write(FRINGE_CSV_HEADER + "\n")
        for t, fracs, c_sum in csv_rows:
            fh.write(
                f"{t!r},{fracs[0]!r},{fracs[1]!r},{fracs[2]!r},{fracs[3]!r},{c_sum!r}\n"
            )
    fit.to_json(out / "fringe_fit.json")
    err = fit.visibility_stderr()
    print(
        f"fringe: {len(thetas)} setpoints, fitted visibility "
        f"{fit.visibility_hat:.6f} +/- {err:.2e} -> {out / 'fringe_fit.json'}"
    )
    return 0


def cmd_precision(args):
    config, config_path = _load_run_config(args)
    scan = config.require("scan")
    blocks = config.require("blocks")
    eff = config.require("efficiency")
    source = config.source
    out = _prepare_out(args, "precision", config, config_path)
    calibration = analytic_calibration(source, eff)

    # interior grid: endpoints of the branch are fringe extrema where the
    # estimate degenerates, so setpoints split (0, pi/3) evenly without
    # touching either end
    branch = math.pi / 3.0
    thetas = [branch * (j + 1) / (scan.points + 1) for j in range(scan.points)]

    measurements = []
    for j, t in enumerate(thetas):
        m = measure_phase_point(
            source,
            eff,
            calibration,
            3.0 * t,
            blocks.k_bar,
            blocks.s,
            seed=config.seed,
            setting_index=j,
            method=blocks.method,
            include_rest=blocks.include_rest,
        )
        measurements.append(m)

    with open(out / "precision_scan.csv", "w") as fh:
        fh.write(PRECISION_CSV_HEADER + "\n")
        for t, m in zip(thetas, measurements):
            r = m.report
            fh.write(
                f"{t!r},{r.theta_hat!r},{r.delta_hat!r},{r.delta_err!r},"
                f"{r.n!r},{r.snl!r},{r.hl!r},{r.db_below_snl!r},"
                f"{int(m.extremum)}\n"
            )

    peak = max(range(len(measurements)),
               key=lambda i: measurements[i].report.db_below_snl)
    doc = {
        "k_bar": blocks.k_bar,
        "s": blocks.s,
        "peak": {
            "theta": thetas[peak],
            "extremum": measurements[peak].extremum,
            **_report_dict(measurements[peak].report),
        },
        "per_phase": [
            {"theta": t, "extremum": m.extremum, **_report_dict(m.report)}
            for t, m in zip(thetas, measurements)
        ],
    }
    _write_json(out / "precision.json", doc)
    print(
        f"precision: {len(thetas)} setpoints, peak {doc['peak']['db_below_snl']:+.4f} dB "
        f"vs SNL at theta_hat={thetas[peak]:.4f} -> {out / 'precision.json'}"
    )
    return 0


def cmd_threshold_scan(args):
    config, config_path = _load_run_config(args)
    scan = config.require("scan")
    source = config.source
    etas = scan.eta_points()
    out = _prepare_out(args, "threshold-scan", config, config_path)

    # mid-branch operating point; the Fisher information per informative
    # event is evaluated at the same phase the pulses are drawn at
    u = 0.5 * math.pi
    rows = []
    for i, eta in enumerate(etas):
        eff = EfficiencyBudget.uniform(eta)
        rng = stream_generator(config.seed, LANE_TALLY, setting_index=i)
        tally = sample_tally(source, eff, u, scan.pulses_per_point, rng,
                             setting_index=i)
        audit = ResourceAudit.from_tallies(tally, source, eff)
        fisher = fisher_per_informative_event(source, eff, u)
        db = predicted_db_below_snl(tally.c_sum, fisher, audit.n)
        rows.append((eta, tally.c_sum, audit.n, db))

    with open(out / "threshold_scan.csv", "w") as fh:
        fh.write(THRESHOLD_CSV_HEADER + "\n")
        for eta, c_sum, n, db in rows:
            fh.write(f"{eta!r},{c_sum!r},{n!r},{db!r}\n")

    xs = np.array([r[0] for r in rows])
    ys = np.array([r[3] for r in rows])
    if len(rows) >= 2 and np.ptp(ys) > 0:
        slope, intercept = np.polyfit(xs, ys, 1)
        crossing = -intercept / slope if slope != 0 else None
    else:
        slope = intercept = crossing = None
    doc = {
        "points": len(rows),
        "eta_range": [float(xs[0]), float(xs[-1])],
        "pulses_per_point": scan.pulses_per_point,
        "slope_db_per_eta": slope,
        "intercept_db": intercept,
        "crossing_eta": crossing,
        "ideal_threshold": threshold_efficiency(),
    }
    _write_json(out / "threshold.json", doc)
    shown = "none" if crossing is None else f"{crossing:.4f}"
    print(
        f"threshold-scan: {len(rows)} efficiencies, SNL crossing at eta={shown} "
        f"(lossless-limit threshold {threshold_efficiency():.4f}) -> "
        f"{out / 'threshold.json'}"
    )
    return 0


def cmd_random_phase(args):
    config, config_path = _load_run_config(args)
    blocks = config.require("blocks")
    eff = config.require("efficiency")
    source = config.source
    out = _prepare_out(args, "random-phase", config, config_path)
    calibration = analytic_calibration(source, eff)
    trial_set = run_random_phase_experiment(
        source,
        eff,
        calibration,
        blocks.num_phases,
        blocks.k_bar,
        blocks.s,
        seed=config.seed,
        method=blocks.method,
        include_rest=blocks.include_rest,
    )
    write_trials_csv(trial_set, out / "trials.csv")
    trials_doc = []
    for tr in trial_set.trials:
        m = tr.measurement
        trials_doc.append(
            {
                "index": tr.index,
                "theta_true": tr.theta_true,
                "theta_hat": m.theta_hat,
                "residual": tr.residual,
                "extremum": m.extremum,
                "delta": m.stats.delta_hat,
                "delta_err": m.stats.delta_err,
                "n": m.report.n,
                "snl": m.report.snl,
                "hl": m.report.hl,
                "db_below_snl": m.report.db_below_snl,
            }
        )
    doc = {
        "num_phases": len(trial_set.trials),
        "k_bar": blocks.k_bar,
        "s": blocks.s,
        "flagged_indices": list(trial_set.flagged_indices()),
        "trials": trials_doc,
    }
    _write_json(out / "random_phase.json", doc)
    if trials_doc:
        worst = max(t["delta"] for t in trials_doc)
        print(
            f"random-phase: {len(trials_doc)} trials, worst per-block spread "
            f"{worst:.4e}, {len(doc['flagged_indices'])} flagged -> "
            f"{out / 'random_phase.json'}"
        )
    else:
        print(f"random-phase: 0 trials -> {out / 'random_phase.json'}")
    return 0


def _blocked_precision_from_log(rows, tally, source, eff, calibration, blocks):
    """Re-cut one setting's log rows into blocks and reduce them.

    The log has a fixed pulse count, so the informative total K rarely
    divides k_bar; blocks cover the first (K // k_bar) * k_bar events and
    the per-block resource share prorates the setting's audited n by
    k_bar / K, which reduces to n / s when the log ends exactly at a
    block boundary.
    """
    k_bar = blocks.k_bar
    patterns = rows[:, 2]
    slot = {p: i for i, p in enumerate(INFORMATIVE_PATTERNS)}
    codes = np.array([slot[p] for p in patterns if p in slot], dtype=np.intp)
    K = len(codes)
    s_actual = K // k_bar
    if s_actual < 2:
        raise EmptyStatisticsError(
            f"log holds {K} informative events at this setting; "
            f"need at least 2 blocks of {k_bar}"
        )
    used = codes[: s_actual * k_bar].reshape(s_actual, k_bar)
    block_counts = np.zeros((s_actual, len(INFORMATIVE_PATTERNS)), dtype=np.int64)
    for b in range(s_actual):
        block_counts[b] = np.bincount(used[b], minlength=len(INFORMATIVE_PATTERNS))
    estimates = estimate_blocks(block_counts, calibration,
                                include_rest=blocks.include_rest)
    stats = block_stats(estimates, k_bar=k_bar)
    audit = ResourceAudit.from_tallies(tally, source, eff)
    report = PrecisionReport.assemble(
        float(np.mean(estimates)), stats, audit.n * k_bar / K,
        params={"k_bar": k_bar, "s": s_actual},
    )
    return report, s_actual


def cmd_audit(args):
    config, config_path = _load_run_config(args)
    eff = config.require("efficiency")
    source = config.source
    result = read_event_log(args.log)
    out = _prepare_out(args, "audit", config, config_path)
    write_tally_csv(result.tallies, out / "tallies.csv")
    merged = ResourceAudit.from_tallies(result.tallies, source, eff)
    truth_passes = 3.0 * float(sum(result.truth_pairs))
    doc = json.loads(merged.to_json())
    doc["settings"] = len(result.tallies)
    doc["pulses"] = list(result.pulses)
    doc["truth_pairs"] = list(result.truth_pairs)
    doc["truth_photon_passes"] = truth_passes
    doc["n_vs_truth_relative"] = (
        (merged.n - truth_passes) / truth_passes if truth_passes > 0 else None
    )

    precision = None
    if config.blocks is not None:
        # the log is re-read row-wise because tallies forget arrival order
        # and blocks are cut by it
        raw = np.loadtxt(args.log, delimiter=",", skiprows=1,
                         dtype=np.int64, ndmin=2)
        calibration = analytic_calibration(source, eff)
        precision = []
        for tally in result.tallies:
            sel = raw[:, 1] == tally.setting_index
            report, s_actual = _blocked_precision_from_log(
                raw[sel], tally, source, eff, calibration, config.blocks
            )
            precision.append(
                {"setting_index": tally.setting_index, "s": s_actual,
                 **_report_dict(report)}
            )
    doc["precision"] = precision
    _write_json(out / "audit.json", doc)

    rel = doc["n_vs_truth_relative"]
    rel_text = "n/a" if rel is None else f"{rel:+.4%}"
    print(
        f"audit: {len(result.tallies)} settings, n={merged.n:.6g} "
        f"({rel_text} vs truth passes) -> {out / 'audit.json'}"
    )
    return 0


_COMMANDS = {
    "fringe": cmd_fringe,
    "precision": cmd_precision,
    "threshold-scan": cmd_threshold_scan,
    "random-phase": cmd_random_phase,
    "audit": cmd_audit,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="entsense",
        description=(
            "Simulate and analyze a two-node entangled-photon "
            "phase-sensing network."
        ),
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config",
                       help="JSON run config, or a manifest.json to replay")
        p.add_argument("--preset",
                       help=f"shipped preset: {', '.join(PRESET_NAMES)}")
        p.add_argument("--seed", type=int,
                       help="override the config's seed (unsigned 64-bit)")
        p.add_argument("--out", default=".",
                       help="output directory (default: current)")
        p.add_argument("--workers", type=int,
                       help="worker threads for pulse-path sampling")
        p.add_argument("--trials", type=int,
                       help="override blocks.num_phases")

    p = sub.add_parser("fringe",
                       help="scan the coincidence fringe and fit it")
    common(p)
    p.add_argument("--log",
                   help="also write the per-pulse event log to this path")

    p = sub.add_parser("precision",
                       help="blocked phase precision across the branch")
    common(p)

    p = sub.add_parser("threshold-scan",
                       help="sweep uniform efficiency for the SNL crossing")
    common(p)

    p = sub.add_parser("random-phase",
                       help="estimate bit-sourced unknown phases")
    common(p)

    p = sub.add_parser("audit",
                       help="recompute tallies and accounting from an event log")
    common(p)
    p.add_argument("--log", required=True,
                   help="event-log CSV to audit (schema: "
                        "pulse_index,setting_index,pattern,truth_pairs)")

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.subcommand](args)
    except EntsenseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
