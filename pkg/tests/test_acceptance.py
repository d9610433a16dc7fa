"""Acceptance criteria 1-9, each reported as one PASS/FAIL line."""

import hashlib
import math
import os
import time

import numpy as np
import pytest

from solarcast.cli import main
from solarcast.clearsky import ClearSkyParams, clear_sky_stack
from solarcast.grid import GridSpec, MapStack
from solarcast.heliosat import csi_from_cloud_index, csi_from_irradiance, clamp_csi
from solarcast.lagselect import auto_mi_curve, entropy, mi_by_entropies, mutual_information
from solarcast.metrics import GammaConfig, gamma_map, gamma_stack, nrmse
from solarcast.mlp import PixelMlp, TrainConfig, pixel_seed, train
from solarcast.predictors import forecast_stack
from solarcast.synth import CloudProcess, generate

JAN_2011 = 1293840000


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail, elapsed=None):
        extra = f" [{elapsed:.1f}s]" if elapsed is not None else ""
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} - {detail}{extra}")
        assert ok, detail
    return emit


def test_criterion_1_cloud_index_curve(report):
    t = time.perf_counter()
    quad = lambda n: 2.0667 - 3.6667 * n + 1.6667 * n * n
    gaps = [abs(csi_from_cloud_index(-0.2) - 1.2), abs(csi_from_cloud_index(-0.2) - (1 - -0.2)),
            abs(csi_from_cloud_index(0.8) - (1 - 0.8)), abs(csi_from_cloud_index(0.8) - quad(0.8)),
            abs(csi_from_cloud_index(1.1) - quad(1.1)), abs(csi_from_cloud_index(1.1) - 0.05)]
    tol = [3e-5, 3e-5, 3e-5, 3e-5, 1e-4, 1e-4]
    n = np.sort(np.random.default_rng(1).uniform(-1, 2, 100_000))
    mono = bool(np.all(np.diff(csi_from_cloud_index(n)) <= 0))
    el = time.perf_counter() - t
    ok = all(g <= k for g, k in zip(gaps, tol)) and mono and el < 1.0
    report(1, ok, f"breakpoint gaps {[f'{g:.1e}' for g in gaps]}, monotone={mono}", el)


def test_criterion_2_predictor_ordering(report):
    t = time.perf_counter()
    spec = GridSpec(16, 16, t0=JAN_2011)
    n = 8760
    clear = clear_sky_stack(spec, ClearSkyParams(3.0), n)
    truth, _ = generate(spec, n, ClearSkyParams(3.0), CloudProcess("ar1", 0.9, seed=2))
    err = {p: nrmse(truth.slice(1), forecast_stack(p, truth, clear)).nrmse
           for p in ("persistence", "scaled_persistence", "clear_sky")}
    flat, _ = generate(spec, n, ClearSkyParams(3.0), CloudProcess("clear"))
    zero = {p: nrmse(flat.slice(1), forecast_stack(p, flat, clear)).nrmse for p in ("scaled_persistence", "clear_sky")}
    el = time.perf_counter() - t
    ok = (err["scaled_persistence"] <= err["persistence"] < err["clear_sky"]
          and max(zero.values()) <= 1e-9 and el < 120)
    report(2, ok, f"nRMSE % {{{', '.join(f'{k}: {v:.2f}' for k, v in err.items())}}}, clear-sky-only "
                  f"{{{', '.join(f'{k}: {v:.1e}' for k, v in zero.items())}}}", el)


def exhaustive_gamma(ref, ev, px, cfg):
    h, w = ref.shape
    yy, xx = np.mgrid[0:h, 0:w]
    cand = ~np.isnan(ev)
    out = np.full(ref.shape, np.nan)
    for i in range(h):
        for j in range(w):
            if np.isnan(ref[i, j]) or not cand.any():
                continue
            tol_i = max(cfg.tol_i * ref[i, j], cfg.tol_i_floor)
            r2 = ((yy[cand] - i) * px) ** 2 + ((xx[cand] - j) * px) ** 2
            out[i, j] = np.sqrt(r2 / cfg.tol_r ** 2 + ((ev[cand] - ref[i, j]) / tol_i) ** 2).min()
    return out


def test_criterion_3_gamma_oracle(report):
    t = time.perf_counter()
    rng = np.random.default_rng(3)
    cfg = GammaConfig()
    bad_value = bad_verdict = checked = 0
    for _ in range(50):
        h, w = rng.integers(2, 33, size=2)
        ref = rng.uniform(20, 1000, (h, w))
        ev = np.roll(ref * rng.normal(1, rng.uniform(0.02, 0.3), (h, w)), int(rng.integers(-2, 3)), axis=1)
        ref[rng.uniform(size=ref.shape) < 0.05] = np.nan
        ev[rng.uniform(size=ev.shape) < 0.05] = np.nan
        win = gamma_map(ref, ev, cfg, pixel_size_m=2500.0).gamma_map
        full = exhaustive_gamma(ref, ev, 2500.0, cfg)
        passing = win <= 1.0
        checked += int(passing.sum())
        bad_value += int((np.abs(win[passing] - full[passing]) > 1e-12 * np.maximum(full[passing], 1)).sum())
        bad_verdict += int(((win <= 1.0) != (full <= 1.0)).sum())
    el = time.perf_counter() - t
    report(3, bad_value == 0 and bad_verdict == 0 and el < 30,
           f"{checked} passing pixels compared, {bad_value} value mismatches, {bad_verdict} verdict mismatches", el)


def test_criterion_4_gamma_closed_forms(report):
    ref = np.full((16, 16), 500.0)
    same = gamma_map(ref, ref)
    edge = gamma_map(ref, ref + 50.0)
    double = gamma_map(ref, ref + 100.0, GammaConfig(intensity_only=True))
    ok = (np.all(np.abs(same.gamma_map) <= 1e-12) and same.passing_rate == 100.0
          and np.all(np.abs(edge.gamma_map - 1) <= 1e-12) and edge.passing_rate == 100.0
          and np.all(np.abs(double.gamma_map - 2) <= 1e-12) and double.passing_rate == 0.0)
    report(4, ok, f"gamma {same.gamma_map.max():.1e}/{edge.gamma_map.max():.12f}/{double.gamma_map.max():.12f}, "
                  f"%GP {same.passing_rate:.0f}/{edge.passing_rate:.0f}/{double.passing_rate:.0f}")


def double_sum(x, y, bins):
    def idx(v):
        lo, hi = v.min(), v.max()
        return [0] * len(v) if hi == lo else [min(bins - 1, int((a - lo) / (hi - lo) * bins)) for a in v]
    n = len(x)
    joint = {}
    for a, b in zip(idx(x), idx(y)):
        joint[(a, b)] = joint.get((a, b), 0) + 1
    px, py = {}, {}
    for (a, b), c in joint.items():
        px[a] = px.get(a, 0) + c
        py[b] = py.get(b, 0) + c
    return sum(c / n * math.log2((c / n) / (px[a] / n * py[b] / n)) for (a, b), c in joint.items())


def test_criterion_5_mi_identities(report):
    t = time.perf_counter()
    rng = np.random.default_rng(5)
    self_gap = sym_bad = 0.0
    dec_gap = 0.0
    for _ in range(100):
        n = int(rng.integers(10, 400))
        x = rng.normal(size=n)
        y = x * rng.uniform(-1, 1) + rng.normal(size=n)
        bins = int(rng.integers(2, 20))
        self_gap = max(self_gap, abs(mutual_information(x, x) - entropy(x)))
        sym_bad += mutual_information(x, y) != mutual_information(y, x)
        dec_gap = max(dec_gap, abs(mi_by_entropies(x, y, bins) - double_sum(x, y, bins)))
    g = np.random.default_rng(50)
    indep = mutual_information(g.uniform(size=10_000), g.uniform(size=10_000), bins=10)
    el = time.perf_counter() - t
    ok = self_gap <= 1e-12 and sym_bad == 0 and dec_gap <= 1e-10 and indep <= 0.05 and el < 10
    report(5, ok, f"|MI(x,x)-H| {self_gap:.1e}, asymmetric {int(sym_bad)}, decomposition gap {dec_gap:.1e}, "
                  f"independent MI {indep:.4f} bits", el)


def test_criterion_6_lag_selection(report):
    # clear-sky index alternating 20 h bright / 20 h overcast; MI(tau) = 1 - Hb(tau/20), zero at tau = 10
    block = np.r_[np.full(20, 0.95), np.full(20, 0.35)]
    csi = np.tile(block, 50)
    curve = auto_mi_curve(csi, tau_max=24)
    report(6, curve.selected_lag == 10 and not curve.fallback,
           f"first local minimum at lag {curve.selected_lag} (expected 10)")


def test_criterion_7_mlp_training(report):
    t = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        n_in, n_hid = int(rng.integers(1, 8)), int(rng.integers(1, 8))
        net = PixelMlp.from_params(rng.normal(size=n_hid * (n_in + 2) + 1), n_in, n_hid)
        x = rng.uniform(0, 1.2, (12, n_in))
        _, jac = net.jacobian(x)
        fd = np.empty_like(jac)
        p = net.params()
        for k in range(p.size):
            up, dn = p.copy(), p.copy()
            up[k] += 1e-6
            dn[k] -= 1e-6
            fd[:, k] = (PixelMlp.from_params(up, n_in, n_hid).predict(x)
                        - PixelMlp.from_params(dn, n_in, n_hid).predict(x)) / 2e-6
        worst = max(worst, float(np.linalg.norm(jac - fd) / np.linalg.norm(fd)))
    c = np.random.default_rng(70).uniform(0.05, 1.2, 200)
    series = np.stack([c, 0.5 * c + 0.2, np.full(200, np.nan)], axis=1).ravel()
    cfg = TrainConfig(in_count=1, max_epochs=200)
    net_a, rep = train(series, cfg, seed=4)
    net_b, _ = train(series, cfg, seed=4)
    same = net_a.params().tobytes() == net_b.params().tobytes()
    el = time.perf_counter() - t
    ok = worst <= 1e-4 and rep.val_mse <= 1e-5 and rep.epochs <= 200 and same and el < 60
    report(7, ok, f"jacobian rel err {worst:.1e}, linear fit val MSE {rep.val_mse:.1e} in {rep.epochs} epochs, "
                  f"identical weights={same}", el)


def _digest(d):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(d.iterdir())}


def test_criterion_8_end_to_end_determinism(report, tmp_path):
    t = time.perf_counter()
    args = ["--seed", "8", "--set", "width=8", "--set", "height=8", "--set", "days=90"]
    codes = [main(["run", "--out", str(tmp_path / r)] + args) for r in ("a", "b")]
    a, b = _digest(tmp_path / "a"), _digest(tmp_path / "b")
    el = time.perf_counter() - t
    n_files = sum(1 for k in a if k.endswith((".ssi1", ".csv")))
    report(8, codes == [0, 0] and a == b and el < 180,
           f"{n_files} SSI1/CSV outputs, identical={a == b}", el)


def island_mask(h=36, w=36, n=1158):
    yy, xx = np.mgrid[0:h, 0:w]
    d = (yy - (h - 1) / 2) ** 2 + ((xx - (w - 1) / 2) * 1.1) ** 2
    keep = np.argsort(d.ravel(), kind="stable")[:n]
    mask = np.zeros(h * w, bool)
    mask[keep] = True
    return mask.reshape(h, w)


@pytest.mark.slow
def test_criterion_9_performance(report):
    spec = GridSpec(36, 36, t0=JAN_2011)
    mask = island_mask()
    n = 8760
    cs = ClearSkyParams(3.0)
    clear = clear_sky_stack(spec, cs, n)
    truth, _ = generate(spec, n, cs, CloudProcess("ar1", 0.9, seed=9))
    measured = MapStack(spec, np.where(mask, truth.frames, np.nan))
    # models are trained beforehand; the timed stage is forecasting plus gamma maps
    csi = clamp_csi(csi_from_irradiance(measured.frames[:6570].reshape(6570, -1),
                                        clear.frames[:6570].reshape(6570, -1)))
    cfg = TrainConfig(max_epochs=30)
    models = [train(csi[:, k], cfg, pixel_seed(9, k))[0] if mask.ravel()[k] else None
              for k in range(spec.n_pixels)]

    t = time.perf_counter()
    forecasts = {p: forecast_stack(p, measured, clear, models=models, workers=4)
                 for p in ("persistence", "scaled_persistence", "clear_sky", "mlp")}
    ref = measured.slice(1)
    gammas = {p: gamma_stack(ref, f, workers=4) for p, f in forecasts.items()}
    total = time.perf_counter() - t
    pixel_hours = int(mask.sum()) * n * len(forecasts)

    # warm run first, then best of two per worker count, alternating so cache state is shared
    f = forecasts["scaled_persistence"]
    gamma_stack(ref, f, workers=1)
    times = {1: [], 4: []}
    outputs = {}
    for w in (1, 4, 1, 4):
        t1 = time.perf_counter()
        outputs[w] = gamma_stack(ref, f, workers=w)
        times[w].append(time.perf_counter() - t1)
    one, four = min(times[1]), min(times[4])
    speedup = one / four
    same = outputs[1].tobytes() == outputs[4].tobytes() == gammas["scaled_persistence"].tobytes()
    cores = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    report(9, total < 600 and speedup >= 2.5 and same,
           f"{cores} usable core(s); {int(mask.sum())} pixels, {pixel_hours:.2e} pixel-hours in {total:.1f}s; gamma stage "
           f"1 worker {one:.2f}s, 4 workers {four:.2f}s, speedup {speedup:.2f}x (needs >= 2.5x); "
           f"identical output={same}")
