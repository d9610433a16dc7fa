"""``solarcast`` command line: generate, lagselect, train, predict, evaluate, report, run.

Every stage reads and writes files under ``--out``, so stages can be rerun
independently. Outputs depend only on the config and seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import ssi1
from .clearsky import clear_sky_stack
from .config import ConfigError, RunConfig, load_config, parse_pairs
from .grid import AlignmentError, Kind, MapStack
from .heliosat import clamp_csi, csi_from_irradiance
from .lagselect import auto_mi_curve, grid_lag_statistics
from .metrics import (gamma_stack, nrmse_map, parse_report_csv, report_csv, seasonal_report, table2,
                      write_pgm)
from .mlp import (InsufficientDataError, ModelBundle, PixelMlp, TrainingDiverged, pixel_seed, read_bundle,
                  train, write_bundle)
from .parallel import chunk_ranges, map_ordered
from .predictors import ForecastRequest, canonical_predictor, clear_sky_predictor, forecast_stack, mlp_predict
from .predictors import persistence as persistence_map
from .predictors import scaled_persistence as scaled_map
from .synth import generate

SHORT_NAMES = {"persistence": "persistence", "scaled": "scaled_persistence",
               "clearsky": "clear_sky", "mlp": "mlp"}


class UsageError(Exception):
    pass


# -- artifact paths and loading -------------------------------------------------

def _path(cfg: RunConfig, name: str) -> Path:
    return cfg.out_dir / name


def _require(path: Path, hint: str) -> Path:
    if not path.is_file():
        raise UsageError(f"missing input {path} ({hint})")
    return path


def _measured_path(cfg: RunConfig) -> Path:
    return Path(cfg.measured) if cfg.measured else _path(cfg, "truth.ssi1")


def load_measured(cfg: RunConfig) -> MapStack:
    return ssi1.read_stack(_require(_measured_path(cfg), "run `generate` or set measured ="))


def load_clear_sky(cfg: RunConfig, measured: MapStack) -> MapStack:
    path = Path(cfg.clear_sky) if cfg.clear_sky else _path(cfg, "clear_sky.ssi1")
    if path.is_file():
        clear = ssi1.read_stack(path)
        measured.check_aligned(clear)
        return clear
    return clear_sky_stack(measured.spec, cfg.clear_sky_params(), len(measured))


def test_start(cfg: RunConfig, n_frames: int) -> int:
    """First target frame of the held-out test span (the final ``test_fraction``)."""
    return min(n_frames, max(1, n_frames - int(round(n_frames * cfg.test_fraction))))


def _meta(cfg: RunConfig, stage: str, **extra) -> Dict[str, object]:
    meta = {"seed": cfg.seed, "stage": stage}
    meta.update(extra)
    return meta


def _write_stack(stack: MapStack, path: Path, meta: Dict[str, object]) -> None:
    ssi1.write_stack(stack, path)
    ssi1.write_meta(path, meta)


def _csi_matrix(measured: MapStack, clear: MapStack, stop: int) -> np.ndarray:
    """Clamped clear-sky index for frames [0, stop), shape (stop, pixels)."""
    m = measured.frames[:stop].reshape(stop, -1).astype(np.float64)
    c = clear.frames[:stop].reshape(stop, -1).astype(np.float64)
    return clamp_csi(csi_from_irradiance(m, c))


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[object]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


# -- stages ---------------------------------------------------------------------

def cmd_generate(cfg: RunConfig) -> List[Path]:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    spec = cfg.grid()
    truth, cloud = generate(spec, cfg.n_frames, cfg.clear_sky_params(), cfg.cloud_process())
    clear = clear_sky_stack(spec, cfg.clear_sky_params(), cfg.n_frames)
    out = []
    for name, stack in (("truth", truth), ("cloud", cloud), ("clear_sky", clear)):
        p = _path(cfg, f"{name}.ssi1")
        _write_stack(stack, p, _meta(cfg, "generate", mode=cfg.mode, frames=len(stack)))
        out.append(p)
    return out


def _lag_chunk(cols: np.ndarray, tau_max: int):
    curves = []
    for k in range(cols.shape[1]):
        try:
            curves.append(auto_mi_curve(cols[:, k], tau_max))
        except ValueError:
            curves.append(None)
    return curves


def cmd_lagselect(cfg: RunConfig) -> List[Path]:
    measured = load_measured(cfg)
    clear = load_clear_sky(cfg, measured)
    stop = test_start(cfg, len(measured))
    csi = _csi_matrix(measured, clear, stop)
    n_pix = csi.shape[1]
    tasks = [csi[:, r.start:r.stop] for r in chunk_ranges(n_pix, max(1, n_pix // 64))]
    curves = [c for part in map_ordered(partial(_lag_chunk, tau_max=cfg.tau_max), tasks, cfg.workers)
              for c in part]
    w = measured.spec.width
    rows = []
    for k, c in enumerate(curves):
        i, j = divmod(k, w)
        rows.append((i, j, "NA" if c is None else c.selected_lag, "NA" if c is None else int(c.fallback)))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out = [_path(cfg, "lags.csv"), _path(cfg, "lag_summary.csv")]
    _write_csv(out[0], ["i", "j", "lag", "fallback"], rows)
    done = [c for c in curves if c is not None]
    if not done:
        raise ValueError("no pixel has enough valid samples for lag selection")
    s = grid_lag_statistics(done)
    _write_csv(out[1], ["min", "max", "mean", "median", "std", "count"],
               [(s.min, s.max, f"{s.mean:.6f}", f"{s.median:.6f}", f"{s.std:.6f}", s.count)])
    if cfg.mi_pixel is not None:
        i, j = cfg.mi_pixel
        c = curves[i * w + j]
        if c is not None:
            out.append(_path(cfg, "mi_curve.csv"))
            out[-1].write_text(c.to_csv())
    return out


def _resolve_in_count(cfg: RunConfig) -> int:
    if cfg.in_count != "auto":
        return int(cfg.in_count)
    summary = _require(_path(cfg, "lag_summary.csv"), "in_count = auto needs `lagselect` first")
    with open(summary) as fh:
        row = next(csv.DictReader(fh))
    return max(1, int(round(float(row["median"]))))


def _train_chunk(task, tcfg, seed: int) -> List[Optional[PixelMlp]]:
    cols, first = task
    nets = []
    for k in range(cols.shape[1]):
        try:
            net, _ = train(cols[:, k], tcfg, pixel_seed(seed, first + k))
        except (InsufficientDataError, TrainingDiverged):
            net = None
        nets.append(net)
    return nets


def cmd_train(cfg: RunConfig) -> List[Path]:
    measured = load_measured(cfg)
    clear = load_clear_sky(cfg, measured)
    stop = test_start(cfg, len(measured))
    n_in = _resolve_in_count(cfg)
    tcfg = cfg.train_config(n_in)
    csi = _csi_matrix(measured, clear, stop)
    n_pix = csi.shape[1]
    tasks = [(csi[:, r.start:r.stop], r.start) for r in chunk_ranges(n_pix, max(1, n_pix // 16))]
    nets = [m for part in map_ordered(partial(_train_chunk, tcfg=tcfg, seed=cfg.seed), tasks, cfg.workers)
            for m in part]
    if all(m is None for m in nets):
        raise ValueError("no pixel could be trained; the training span is too short")
    ts = measured.timestamps
    bundle = ModelBundle(measured.spec.height, measured.spec.width, n_in, cfg.hidden_count, cfg.seed,
                         int(ts[0]), int(ts[stop - 1]), nets)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = _path(cfg, "models.bundle")
    write_bundle(bundle, path)
    return [path]


def _load_models(cfg: RunConfig) -> ModelBundle:
    return read_bundle(_require(_path(cfg, "models.bundle"), "the mlp predictor needs `train` first"))


def _next_hour(pid: str, cfg: RunConfig, measured: MapStack, clear: MapStack, models) -> MapStack:
    """Forecast for the hour after the last measured frame."""
    spec = measured.spec
    t_next = int(measured.timestamps[-1]) + spec.step_s
    extra = clear_sky_stack(spec.with_time(t_next), cfg.clear_sky_params(), 1)
    cs = MapStack(clear.spec, np.concatenate([clear.frames, extra.frames]), Kind.IRRADIANCE, validate=False)
    req = ForecastRequest(measured, cs, t_next)
    fn = {"persistence": persistence_map, "scaled_persistence": scaled_map,
          "clear_sky": clear_sky_predictor}.get(pid)
    fmap = fn(req) if fn is not None else mlp_predict(req, models)
    return fmap.to_stack()


def cmd_predict(cfg: RunConfig, predictors: Optional[Sequence[str]] = None) -> List[Path]:
    measured = load_measured(cfg)
    clear = load_clear_sky(cfg, measured)
    start = test_start(cfg, len(measured))
    out = []
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    for name in predictors or cfg.predictors:
        pid = canonical_predictor(name)
        models = _load_models(cfg) if pid == "mlp" else None
        if start < len(measured):
            fc = forecast_stack(pid, measured, clear, start, models=models, daylight=cfg.daylight(),
                                workers=cfg.workers)
            p = _path(cfg, f"forecast_{pid}.ssi1")
            _write_stack(fc, p, _meta(cfg, "predict", predictor=pid, target_time=int(fc.spec.t0),
                                      frames=len(fc)))
            out.append(p)
        nxt = _next_hour(pid, cfg, measured, clear, models)
        p = _path(cfg, f"next_{pid}.ssi1")
        _write_stack(nxt, p, _meta(cfg, "predict", predictor=pid, target_time=int(nxt.spec.t0), frames=1))
        out.append(p)
    return out


def _pgm_frame(cfg: RunConfig, gamma: np.ndarray, timestamps: np.ndarray) -> Optional[int]:
    if cfg.pgm_frame is not None:
        return int(cfg.pgm_frame)
    counts = (~np.isnan(gamma)).sum(axis=(1, 2))
    if counts.max(initial=0) == 0:
        return None
    full = np.nonzero(counts == counts.max())[0]
    hour = (timestamps[full] % 86400) / 3600.0
    return int(full[np.argmin(np.abs(hour - 12.0))])


def cmd_evaluate(cfg: RunConfig) -> List[Path]:
    measured = load_measured(cfg)
    start = test_start(cfg, len(measured))
    if start >= len(measured):
        raise ValueError("empty test span; lower test_fraction or use more days")
    ref = measured.slice(start)
    gcfg, filt = cfg.gamma_config(), cfg.daylight()
    preds, gammas, out = {}, {}, []
    for pid in cfg.predictors:
        fc = ssi1.read_stack(_require(_path(cfg, f"forecast_{pid}.ssi1"), "run `predict` first"))
        ref.check_aligned(fc)
        g = gamma_stack(ref, fc, gcfg, filt, cfg.workers)
        preds[pid], gammas[pid] = fc, g
        gpath = _path(cfg, f"gamma_{pid}.ssi1")
        # gamma is unitless, so it is stored with the clear-sky-index tag
        _write_stack(MapStack(ref.spec, g.astype(np.float32), Kind.CLEAR_SKY_INDEX, validate=False), gpath,
                     _meta(cfg, "evaluate", predictor=pid, tol_r=gcfg.tol_r, tol_i=gcfg.tol_i,
                           tol_i_mode=gcfg.tol_i_mode))
        npath = _path(cfg, f"nrmse_{pid}.ssi1")
        nm = nrmse_map(ref, fc, filt)
        _write_stack(MapStack(ref.spec, nm[None].astype(np.float32), Kind.IRRADIANCE_ERROR, validate=False),
                     npath, _meta(cfg, "evaluate", predictor=pid, quantity="nrmse_percent"))
        out += [gpath, npath]
        k = _pgm_frame(cfg, g, ref.timestamps)
        if k is not None:
            pgm = _path(cfg, f"pass_{pid}.pgm")
            write_pgm(pgm, g[k])
            out.append(pgm)
    rows = seasonal_report(ref, preds, gcfg, filt, gammas=gammas)
    mpath = _path(cfg, "metrics.csv")
    mpath.write_text(report_csv(rows))
    return [mpath] + out


def format_table(table: List[List[str]]) -> str:
    widths = [max(len(r[c]) for r in table) for c in range(len(table[0]))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table) + "\n"


def cmd_report(cfg: RunConfig) -> List[Path]:
    metrics = _require(_path(cfg, "metrics.csv"), "run `evaluate` first")
    text = format_table(table2(parse_report_csv(metrics.read_text())))
    path = _path(cfg, "report.txt")
    path.write_text(text)
    sys.stdout.write(text)
    return [path]


def cmd_run(cfg: RunConfig) -> List[Path]:
    out = []
    if cfg.measured is None:
        out += cmd_generate(cfg)
    out += cmd_lagselect(cfg)
    if "mlp" in cfg.predictors:
        out += cmd_train(cfg)
    out += cmd_predict(cfg)
    out += cmd_evaluate(cfg)
    out += cmd_report(cfg)
    return out


STAGES = {"generate": cmd_generate, "lagselect": cmd_lagselect, "train": cmd_train, "predict": cmd_predict,
          "evaluate": cmd_evaluate, "report": cmd_report, "run": cmd_run}


# -- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="solarcast", description="Next-hour gridded irradiance forecasting.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="global random seed")
    common.add_argument("--workers", type=int, help="worker processes (0 = all cores)")
    common.add_argument("--out", help="artifact directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    sub = parser.add_subparsers(dest="stage", required=True)
    for name in STAGES:
        p = sub.add_parser(name, parents=[common])
        if name == "predict":
            p.add_argument("--predictor", action="append", choices=sorted(SHORT_NAMES) + sorted(
                set(SHORT_NAMES.values()) - set(SHORT_NAMES)),
                help="predictor to run (repeatable; default: every configured predictor)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = parse_pairs(args.set, "--set")
        overrides.update({"seed": args.seed, "workers": args.workers, "out": args.out})
        cfg = load_config(args.config, overrides)
        if args.stage == "predict":
            paths = cmd_predict(cfg, getattr(args, "predictor", None))
        else:
            paths = STAGES[args.stage](cfg)
    except (UsageError, ConfigError) as exc:
        print(f"solarcast {args.stage}: usage error: {exc}", file=sys.stderr)
        return 2
    except AlignmentError as exc:
        print(f"solarcast {args.stage}: alignment error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"solarcast {args.stage}: error: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
