"""Command line interface.

Subcommands: decompose, rpeaks, shrink, simulate, evaluate, pipeline
(simulate -> decompose -> evaluate end to end). Every run writes
run_meta.json (config echo, version, seed) into --out.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
import warnings
from multiprocessing import get_context

import numpy as np

from . import __version__
from .decompose import (
    CombinationGrid,
    DecomposeConfig,
    DecompositionError,
    decompose,
    linear_combinations,
)
from .evaluate import EvalReport, aggregate, detect_pt, f1, mae, match_peaks, nmae, nmde
from .preprocess import FilterSpec, preprocess
from .records import PeakList, Record, RecordFormatError, load_record, save_record
from .report import (
    plot_condition_grid,
    plot_decomposition,
    write_condition_summary,
    write_metric_table,
    write_report_json,
)
from .rpeak import MATERNAL_BAND, detect_rpeaks
from .shrinkage import DenoiseConfig, optimal_shrink
from .simulate import SimConfig, generate_record, synthetic_ecg_donor, synthetic_vcg_donor


class UsageError(ValueError):
    pass


def _write_meta(out_dir, args_dict):
    os.makedirs(out_dir, exist_ok=True)
    meta = {"version": __version__, "config": args_dict}
    with open(os.path.join(out_dir, "run_meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def _filter_spec(args) -> FilterSpec:
    return FilterSpec(
        lowpass_cutoff=args.lp_cutoff,
        notch_center=args.notch,
        median_short=args.median_short_ms,
        median_long=args.median_long_ms,
    )


def _add_filter_flags(p):
    p.add_argument("--lp-cutoff", type=float, default=100.0, help="low-pass cutoff (Hz)")
    p.add_argument("--notch", type=float, default=60.0, help="powerline notch center (Hz)")
    p.add_argument("--median-short-ms", type=float, default=200.0)
    p.add_argument("--median-long-ms", type=float, default=600.0)


def _select_channels(record: Record, spec: str | None) -> Record:
    if not spec:
        return record
    idx = [int(s) - 1 for s in spec.split(",")]
    for i in idx:
        if not 0 <= i < record.n_channels:
            raise UsageError(f"channel {i + 1} out of range (record has {record.n_channels})")
    return Record(
        [record.channels[i] for i in idx], record.fs, record.name, dict(record.annotations)
    )


def _save_signal_csv(path, x, fs):
    rec = Record([np.asarray(x)], fs=fs)
    save_record(path, rec)


# ---------------------------------------------------------------------------
# subcommands


def cmd_rpeaks(args):
    record = load_record(args.infile)
    record = _select_channels(record, args.channels)
    spec = _filter_spec(args)
    x = preprocess(record.channels[0], record.fs, spec)
    peaks = detect_rpeaks(x, record.fs, band=tuple(args.band))
    payload = [float(t) for t in peaks.times]
    if args.out:
        _write_meta(args.out, vars_namespace(args))
        with open(os.path.join(args.out, f"{record.name}_rpeaks.json"), "w") as fh:
            json.dump(payload, fh)
    else:
        json.dump(payload, sys.stdout)
        print()
    return 0


def cmd_shrink(args):
    S = np.loadtxt(args.infile, delimiter=",", ndmin=2)
    res = optimal_shrink(S, DenoiseConfig(c_noise=args.c_noise))
    np.savetxt(args.outfile, res.denoised, delimiter=",", fmt="%.10g")
    print(
        f"sigma_hat={res.sigma_hat:.6g} kept_rank={res.kept_rank} "
        f"shape={S.shape[0]}x{S.shape[1]}",
        file=sys.stderr,
    )
    return 0


def cmd_decompose(args):
    record = load_record(args.infile)
    record = _select_channels(record, args.channels)
    config = DecomposeConfig(
        filters=_filter_spec(args),
        denoise=DenoiseConfig(c_noise=args.c_noise),
        grid_steps=args.grid_steps,
        iterations=args.iterations,
        nonlocal_median_k=args.nonlocal_median,
    )
    out = decompose(record, config)
    out_dir = args.out
    _write_meta(out_dir, vars_namespace(args))
    fs = record.fs
    _save_signal_csv(os.path.join(out_dir, "mecg.csv"), out.mecg, fs)
    _save_signal_csv(os.path.join(out_dir, "rfecg.csv"), out.rfecg, fs)
    _save_signal_csv(os.path.join(out_dir, "fecg.csv"), out.fecg, fs)
    fetal_ms = [float(t) for t in out.fetal_peaks.times]
    with open(os.path.join(out_dir, "fetal_peaks.json"), "w") as fh:
        json.dump(fetal_ms, fh)
    # named copy so an --est directory of many runs feeds `evaluate` directly
    with open(os.path.join(out_dir, f"{record.name}_fetal_peaks.json"), "w") as fh:
        json.dump(fetal_ms, fh)
    with open(os.path.join(out_dir, "maternal_peaks.json"), "w") as fh:
        json.dump([float(t) for t in out.maternal_peaks.times], fh)
    with open(os.path.join(out_dir, "sqi.json"), "w") as fh:
        json.dump(
            [{"theta": [float(v) for v in th], "score": float(s)} for th, s in out.sqi_table],
            fh,
            indent=2,
        )
    with open(os.path.join(out_dir, "theta_star.json"), "w") as fh:
        json.dump([float(v) for v in out.theta_star], fh)
    grid = CombinationGrid([out.theta_star / np.linalg.norm(out.theta_star)])
    clean = [preprocess(c, fs, config.filters) for c in record.channels]
    z_star = linear_combinations(clean, grid)[0]
    plot_decomposition(
        out_dir, record.name, fs, z_star, out.mecg, out.rfecg, out.fecg, out.fetal_peaks
    )
    return 0


def _load_donor_dir(path):
    donors = []
    for fn in sorted(os.listdir(path)):
        if fn.endswith(".csv"):
            donors.append(load_record(os.path.join(path, fn)))
        elif fn.endswith(".hea"):
            donors.append(load_record(os.path.join(path, fn), format="wfdb-subset"))
    if not donors:
        raise RecordFormatError(f"no records found in {path}")
    return donors


def _synthetic_donors(n, seed, duration_s):
    maternal = [
        synthetic_vcg_donor(duration_s=duration_s, hr_bpm=72 + 2 * (i % 5), seed=seed + i, name=f"vcg{i:02d}")
        for i in range(n)
    ]
    fetal = [
        synthetic_ecg_donor(duration_s=duration_s, hr_bpm=76 + 2 * (i % 5), seed=seed + 1000 + i, name=f"ecg{i:02d}")
        for i in range(n)
    ]
    return maternal, fetal


def cmd_simulate(args):
    if args.maternal_dir and args.fetal_dir:
        maternal = _load_donor_dir(args.maternal_dir)
        fetal = _load_donor_dir(args.fetal_dir)
    elif args.synthetic:
        maternal, fetal = _synthetic_donors(args.synthetic, args.seed, 2 * args.duration + 6)
    else:
        raise UsageError("provide --maternal-dir/--fetal-dir or --synthetic N")
    config = SimConfig(r=args.r, snr_db=args.snr, seed=args.seed, duration_s=args.duration)
    out_dir = args.out
    _write_meta(out_dir, vars_namespace(args))
    manifest = {"config": {"r": args.r, "snr_db": args.snr, "seed": args.seed,
                           "duration_s": args.duration}, "records": []}
    count = args.count or max(len(maternal), len(fetal))
    for i in range(count):
        dm, df = maternal[i % len(maternal)], fetal[i % len(fetal)]
        sim = generate_record(dm, df, config, index=i)
        rec = sim.record
        save_record(os.path.join(out_dir, f"{rec.name}.csv"), rec)
        truth_chans = list(sim.truth["mecg"]) + list(sim.truth["fecg"])
        names = [f"mecg{j + 1}" for j in range(len(sim.truth["mecg"]))] + [
            f"fecg{j + 1}" for j in range(len(sim.truth["fecg"]))
        ]
        save_record(
            os.path.join(out_dir, f"{rec.name}.truth.csv"),
            Record(truth_chans, rec.fs, rec.name + "_truth"),
            channel_names=names,
        )
        clean = np.vstack(sim.truth["mecg"]) + np.vstack(sim.truth["fecg"])
        noise = np.vstack(rec.channels) - clean
        p_noise = float(np.mean(noise**2))
        snr_meas = (
            float(10 * np.log10(np.mean(clean**2) / p_noise)) if p_noise > 0 else None
        )
        manifest["records"].append(
            {"name": rec.name, "maternal_donor": dm.name, "fetal_donor": df.name,
             "measured_snr_db": snr_meas}
        )
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return 0


def cmd_evaluate(args):
    windows = [float(w) for w in args.windows.split(",")] if args.windows else [args.window_ms]
    truth = {}
    for fn in sorted(os.listdir(args.truth)):
        if fn.endswith(".ann.json") and not fn.endswith(".truth.ann.json"):
            name = fn[: -len(".ann.json")]
            from .records import load_annotations

            ann = load_annotations(os.path.join(args.truth, fn))
            if "fetal_r" in ann:
                truth[name] = ann["fetal_r"]
    if not truth:
        raise RecordFormatError(f"no fetal_r annotations found in {args.truth}")
    per_rec = {}
    for name, tr in truth.items():
        est_path = os.path.join(args.est, f"{name}_fetal_peaks.json")
        if not os.path.exists(est_path):
            warnings.warn(f"no detection file for {name}; skipped")
            continue
        with open(est_path) as fh:
            det = PeakList(np.asarray(json.load(fh), dtype=float))
        scores = {}
        for w in windows:
            m = match_peaks(tr, det, window_ms=w)
            scores[f"f1@{w:g}ms"] = [f1(m)]
            if m.pairs:
                scores[f"mae@{w:g}ms"] = [mae(m)]
        per_rec[name] = scores
    if not per_rec:
        raise RecordFormatError("no recordings could be evaluated")
    rep = aggregate(per_rec, alphas=(0.5, 1.0))
    out_dir = os.path.dirname(os.path.abspath(args.outfile)) or "."
    os.makedirs(out_dir, exist_ok=True)
    write_report_json(args.outfile, rep, {"windows_ms": windows})
    write_metric_table(os.path.splitext(args.outfile)[0] + "_metrics.csv", rep.aggregates)
    return 0


# ---------------------------------------------------------------------------
# pipeline


def _pipeline_task(task):
    """Simulate one record under one condition, decompose, score."""
    (index, r, snr, seed, duration, grid_steps, window_ms) = task
    maternal, fetal = _synthetic_donors_cached(seed, duration)
    dm = maternal[index % len(maternal)]
    df = fetal[index % len(fetal)]
    config = SimConfig(r=r, snr_db=snr, seed=seed, duration_s=duration)
    sim = generate_record(dm, df, config, index=index)
    rec = sim.record
    dconf = DecomposeConfig(grid_steps=grid_steps)
    out = decompose(rec, dconf)
    scores = _score_decomposition(sim, out, window_ms)
    return (f"r{r:g}_snr{snr:g}_{rec.name}", r, snr, scores)


_DONOR_CACHE = {}


def _synthetic_donors_cached(seed, duration):
    key = (seed, duration)
    if key not in _DONOR_CACHE:
        _DONOR_CACHE[key] = _synthetic_donors(10, seed, 2 * duration + 6)
    return _DONOR_CACHE[key]


def _score_decomposition(sim, out, window_ms=50.0):
    """Fetal F1/MAE plus morphology scores against the clean fetal truth."""
    rec = sim.record
    fs = rec.fs
    truth_r = sim.truth["fetal_r"]
    m = match_peaks(truth_r, out.fetal_peaks, window_ms=window_ms)
    scores = {"f1": f1(m)}
    if m.pairs:
        scores["mae_ms"] = mae(m)
    # compare against the same linear combination of the clean fetal traces,
    # passed through the identical zero-phase filters as the estimate so the
    # morphology comparison is like for like (no filter-mismatch bias)
    th = out.theta_star
    truth_f = sum(w * f for w, f in zip(th, sim.truth["fecg"]))
    truth_f = preprocess(truth_f, fs, FilterSpec())
    if m.pairs:
        try:
            scores["nmae_r"] = nmae(truth_f, out.fecg, m.pairs, fs)
        except ValueError:
            pass
    try:
        tp = detect_pt(truth_f, fs, truth_r)
        ep = detect_pt(out.fecg, fs, out.fetal_peaks)
        for name, (a_key, b_key) in {"pr": ("p", None), "qt": ("q", "t"), "st": ("s", "t")}.items():
            ti, ei = _intervals_for_matched(m.pairs, tp, ep, a_key, b_key, window_ms)
            if ti:
                scores[f"nmde_{name}"] = nmde(ti, ei)
    except ValueError:
        pass
    return scores


def _nearest_before(times, t, lo_ms, hi_ms):
    """Nearest landmark within [t - hi_ms, t - lo_ms]."""
    cand = times[(times >= t - hi_ms) & (times <= t - lo_ms)]
    return float(cand[-1]) if cand.size else None


def _nearest_after(times, t, lo_ms, hi_ms):
    cand = times[(times >= t + lo_ms) & (times <= t + hi_ms)]
    return float(cand[0]) if cand.size else None


def _intervals_for_matched(pairs, truth_pt, est_pt, a_key, b_key, window_ms):
    """PR/QT/ST interval pairs for beats whose R peaks matched.

    a_key is the pre-R landmark kind for PR (p) or intra-beat start (q/s);
    b_key None means the interval ends at R, otherwise at the T peak.
    """
    ti, ei = [], []
    for t_r, e_r in pairs:
        if a_key == "p":
            ta = _nearest_before(truth_pt["p"].times, t_r, 60, 260)
            ea = _nearest_before(est_pt["p"].times, e_r, 60, 260)
            tb, eb = t_r, e_r
        else:
            lo, hi = (10, 70) if a_key == "s" else (10, 70)
            if a_key == "q":
                ta = _nearest_before(truth_pt["q"].times, t_r, 5, 70)
                ea = _nearest_before(est_pt["q"].times, e_r, 5, 70)
            else:
                ta = _nearest_after(truth_pt["s"].times, t_r, lo, hi)
                ea = _nearest_after(est_pt["s"].times, e_r, lo, hi)
            tb = _nearest_after(truth_pt["t"].times, t_r, 75, 410)
            eb = _nearest_after(est_pt["t"].times, e_r, 75, 410)
        if None in (ta, ea, tb, eb):
            continue
        t_int, e_int = abs(tb - ta), abs(eb - ea)
        if t_int > 0:
            ti.append(t_int)
            ei.append(e_int)
    return ti, ei


def cmd_pipeline(args):
    rs = [float(v) for v in args.r.split(",")]
    snrs = [float(v) for v in args.snr.split(",")]
    out_dir = args.out
    _write_meta(out_dir, vars_namespace(args))
    tasks = []
    for r in rs:
        for snr in snrs:
            for i in range(args.records):
                tasks.append((i, r, snr, args.seed, args.duration, args.grid_steps, args.window_ms))
    if args.jobs > 1:
        with get_context("spawn").Pool(args.jobs) as pool:
            results = pool.map(_pipeline_task, tasks)
    else:
        results = [_pipeline_task(t) for t in tasks]
    results.sort(key=lambda r: r[0])

    per_rec = {}
    grid = {}
    for rec_id, r, snr, scores in results:
        per_rec[rec_id] = {k: [v] for k, v in scores.items()}
        cell = grid.setdefault((f"{r:g}", f"{snr:g}"), {})
        for k, v in scores.items():
            cell.setdefault(k, []).append(v)
    rep = aggregate(per_rec, alphas=(0.5, 1.0))
    config_echo = {
        "r": rs, "snr_db": snrs, "records": args.records, "seed": args.seed,
        "duration_s": args.duration, "window_ms": args.window_ms,
    }
    write_report_json(os.path.join(out_dir, "report.json"), rep, config_echo)
    write_metric_table(os.path.join(out_dir, "metrics.csv"), rep.aggregates)
    write_condition_summary(os.path.join(out_dir, "condition_summary.csv"), grid)
    plot_condition_grid(out_dir, grid, ["f1"], "f1_boxplots.png", "Fetal R-peak F1 by condition")
    plot_condition_grid(
        out_dir, grid, ["nmae_r"], "nmae_boxplots.png", "Fetal NMAE by condition"
    )
    plot_condition_grid(
        out_dir,
        grid,
        ["nmde_pr", "nmde_qt", "nmde_st"],
        "nmde_boxplots.png",
        "Fetal interval NMDE by condition",
    )
    return 0


# ---------------------------------------------------------------------------
# parser


def vars_namespace(args):
    return {k: v for k, v in vars(args).items() if k != "func"}


def build_parser():
    p = argparse.ArgumentParser(prog="fecgos", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("rpeaks", help="detect R peaks on one channel")
    pr.add_argument("--in", dest="infile", required=True)
    pr.add_argument("--channels", default=None, help="1-based channel selection, e.g. 1")
    pr.add_argument("--band", type=float, nargs=2, default=list(MATERNAL_BAND))
    pr.add_argument("--out", default=None)
    _add_filter_flags(pr)
    pr.set_defaults(func=cmd_rpeaks)

    ps = sub.add_parser("shrink", help="denoise a CSV matrix by optimal shrinkage")
    ps.add_argument("--in", dest="infile", required=True)
    ps.add_argument("--out", dest="outfile", required=True)
    ps.add_argument("--c-noise", type=float, default=1.5)
    ps.set_defaults(func=cmd_shrink)

    pd = sub.add_parser("decompose", help="separate maternal and fetal ECG")
    pd.add_argument("--in", dest="infile", required=True)
    pd.add_argument("--out", required=True)
    pd.add_argument("--channels", default=None, help="1-based channels, e.g. 1,2")
    pd.add_argument("--grid-steps", type=int, default=14)
    pd.add_argument("--iterations", type=int, default=1)
    pd.add_argument("--nonlocal-median", type=int, default=None)
    pd.add_argument("--c-noise", type=float, default=1.5)
    _add_filter_flags(pd)
    pd.set_defaults(func=cmd_decompose)

    pm = sub.add_parser("simulate", help="generate semi-real abdominal records")
    pm.add_argument("--maternal-dir", default=None)
    pm.add_argument("--fetal-dir", default=None)
    pm.add_argument("--synthetic", type=int, default=None, help="use N synthetic donors")
    pm.add_argument("--count", type=int, default=None)
    pm.add_argument("--r", type=float, default=0.25)
    pm.add_argument("--snr", type=float, default=20.0)
    pm.add_argument("--seed", type=int, default=0)
    pm.add_argument("--duration", type=float, default=57.0)
    pm.add_argument("--out", required=True)
    pm.set_defaults(func=cmd_simulate)

    pe = sub.add_parser("evaluate", help="score detections against truth annotations")
    pe.add_argument("--truth", required=True)
    pe.add_argument("--est", required=True)
    pe.add_argument("--window-ms", type=float, default=50.0)
    pe.add_argument("--windows", default=None, help="comma list, e.g. 10,25,50")
    pe.add_argument("--out", dest="outfile", default="report.json")
    pe.set_defaults(func=cmd_evaluate)

    pp = sub.add_parser("pipeline", help="simulate, decompose and evaluate end to end")
    pp.add_argument("--records", type=int, default=10)
    pp.add_argument("--r", default="0.25", help="comma list of fetal/maternal ratios")
    pp.add_argument("--snr", default="20", help="comma list of SNRs in dB")
    pp.add_argument("--seed", type=int, default=0)
    pp.add_argument("--duration", type=float, default=57.0)
    pp.add_argument("--grid-steps", type=int, default=14)
    pp.add_argument("--window-ms", type=float, default=50.0)
    pp.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    pp.add_argument("--out", required=True)
    pp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (UsageError,) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, RecordFormatError, DecompositionError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # invariant violation
        tb = traceback.extract_tb(exc.__traceback__)
        module = tb[-1].filename if tb else "unknown"
        print(f"internal error in {module}: {exc}", file=sys.stderr)
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
