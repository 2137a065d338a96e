"""Acceptance criteria, one test per criterion, each printing a verdict line.

Everything here drives the system the way the CLI does: scenario
templates in, sessions run to terminal, records and metrics out.  Heavy
suites are cached at module scope so criteria share runs.
"""

import time

import numpy as np
import pytest

from dragfield.engine import run, start_session
from dragfield.field import generate, semantic_oracle
from dragfield.metrics import fidelity_proxy, mean_distance, sweep
from dragfield.scenarios import (suite, template_drift_zone,
                                 template_single_blob)
from dragfield.supervision import SupervisedPoint, deviation_vector, \
    _patch_positions
from dragfield.tensor import (Tensor, bilinear_sample_many, conv1x1,
                              finite_difference_check, masked_abs_sum)
from dragfield.tracker import (apply_tracker, extract_patch, gaussian_label,
                               make_patch, track_update, train_tracker)


def _verdict(name: str, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# cached heavy runs


@pytest.fixture(scope="module")
def a1_run():
    scenario = template_single_blob()
    config = scenario.config(max_steps=100)
    assert config.lam == 0.3 and config.tau == 0.4 and config.lr == 0.01
    t0 = time.perf_counter()
    session = run(start_session(scenario, config))
    return session, time.perf_counter() - t0


@pytest.fixture(scope="module")
def twin_runs():
    out = []
    for scenario in suite("twin"):
        fused = run(start_session(scenario, scenario.config(lam=0.3)))
        plain = run(start_session(scenario, scenario.config(lam=1.0)))
        out.append((scenario, fused, plain))
    return out


@pytest.fixture(scope="module")
def drift_runs():
    out = []
    for scenario in suite("drift"):
        gated = run(start_session(scenario, scenario.config(tau=0.4)))
        ungated = run(start_session(scenario, scenario.config(tau=0.0)))
        out.append((scenario, gated, ungated))
    return out


# ---------------------------------------------------------------------------


def test_a1_end_to_end_drag(a1_run):
    session, elapsed = a1_run
    md = mean_distance(session)
    fid = fidelity_proxy(session)
    handle = np.asarray(session.points[0].p0, dtype=float)
    target = np.asarray(session.points[0].t, dtype=float)
    assert np.linalg.norm(target - handle) == pytest.approx(40.0)
    ok = (session.status == "converged" and session.step_count <= 100
          and md <= 2.0 and fid >= 0.95 and elapsed <= 60.0)
    _verdict("A1 end-to-end drag",
             ok, f"status={session.status} steps={session.step_count} "
                 f"md={md:.3f}px fidelity={fid:.4f} time={elapsed:.1f}s")


def test_a2_gradient_correctness():
    rng = np.random.default_rng(20240817)
    worst = 0.0
    checks = 0

    def small_field(seed):
        from dragfield.field import BlobSceneSpec, BlobSpec, LatentCode

        r = np.random.default_rng(seed)
        channels = 4
        blobs = []
        centers = []
        for _ in range(2):
            sig = r.normal(size=channels)
            sig /= np.linalg.norm(sig)
            blobs.append(BlobSpec(tuple(sig), float(r.uniform(1.8, 3.0)),
                                  float(r.uniform(0.8, 2.0))))
            centers.append(r.uniform(5, 13, size=2))
        spec = BlobSceneSpec(height=18, width=18, channels=channels,
                             blobs=tuple(blobs),
                             background_noise_seed=int(r.integers(1 << 30)),
                             noise_amplitude=0.01)
        return spec, LatentCode.from_centers_px(spec, centers)

    # 40 dynamic-loss instances; the detached reference freezes at the
    # evaluation point, which sits off the initial latent so the mask
    # term's absolute values are away from their kinks
    for case in range(40):
        spec, w = small_field(case)
        base = generate(spec, w).values
        w_eval = w.values + rng.uniform(-0.012, 0.012, size=w.values.shape)
        field_eval = generate(spec, type(w)(w_eval)).values
        p = tuple(int(v) for v in rng.integers(5, 13, size=2))
        t = tuple(int(v) for v in rng.integers(3, 15, size=2))
        if p == t:
            t = (t[0] + 2, t[1])
        d = deviation_vector(p, t)
        cells, moved, _ = _patch_positions(p, d, 2, 18, 18)
        ref = field_eval[:, cells[:, 1].astype(int), cells[:, 0].astype(int)]
        mask = (rng.random((18, 18)) > 0.3).astype(float)

        def f_dyn(wt):
            fld = generate(spec, wt).tensor
            term = (Tensor(ref) - bilinear_sample_many(fld, moved)).l1()
            return term + masked_abs_sum(fld - Tensor(base), 1 - mask) * 2.0

        worst = max(worst, finite_difference_check(f_dyn, Tensor(w_eval),
                                                   eps=1e-7))
        checks += 1

    # 30 template-loss instances (reference is the initial field)
    for case in range(30):
        spec, w = small_field(100 + case)
        f0 = generate(spec, w).values
        w_cur = w.values + rng.uniform(-0.01, 0.01, size=w.values.shape)
        p0 = tuple(int(v) for v in rng.integers(5, 13, size=2))
        p = (p0[0] + int(rng.integers(-1, 2)), p0[1])
        t = (p0[0] + 5, p0[1] + 3)
        d = deviation_vector(p, t)
        from dragfield.supervision import loss_template

        pts = [SupervisedPoint(p0=p0, p=p, t=t, r1=2)]
        mask = (rng.random((18, 18)) > 0.5).astype(float)

        def f_tmpl(wt):
            return loss_template(generate(spec, wt).tensor, f0, pts, mask, 1.5)

        worst = max(worst, finite_difference_check(f_tmpl, Tensor(w_cur),
                                                   eps=1e-7))
        checks += 1

    # 30 tracker-loss instances w.r.t. the filter
    for case in range(30):
        spec, w = small_field(200 + case)
        f0 = generate(spec, w).values
        patch = make_patch((9, 9), 5, 18, 18)
        values = extract_patch(f0, patch)
        label = gaussian_label(patch, 2.0)
        z0 = rng.normal(size=4)

        def f_track(zt):
            resid = conv1x1(Tensor(values), zt) - Tensor(label)
            return (resid * resid).sum()

        worst = max(worst, finite_difference_check(f_track, Tensor(z0),
                                                   eps=1e-6))
        checks += 1

    ok = checks == 100 and worst < 1e-4
    _verdict("A2 gradient correctness",
             ok, f"{checks} instances, max relative error {worst:.2e}")


def test_a3_discriminative_tracking(twin_runs):
    wins = 0
    witness = None
    details = []
    for scenario, fused, plain in twin_runs:
        md_f = mean_distance(fused)
        md_p = mean_distance(plain)
        if md_f < md_p:
            wins += 1
        true_c = semantic_oracle(plain.spec, plain.w, 0)
        twin_c = semantic_oracle(plain.spec, plain.w, 1)
        p_plain = plain.points[0].p
        p_fused = fused.points[0].p
        true_f = semantic_oracle(fused.spec, fused.w, 0)
        plain_on_twin = np.hypot(p_plain[0] - twin_c[0],
                                 p_plain[1] - twin_c[1]) <= 3.0
        fused_on_true = np.hypot(p_fused[0] - true_f[0],
                                 p_fused[1] - true_f[1]) <= 3.0
        if plain_on_twin and fused_on_true and witness is None:
            witness = scenario.name
        details.append(f"{scenario.name}: {md_f:.2f} vs {md_p:.2f}")
    ok = wins >= 4 and witness is not None
    _verdict("A3 discriminative tracking",
             ok, f"fused beats plain in {wins}/5 ({'; '.join(details)}); "
                 f"wrong-twin witness: {witness}")


def test_a4_confident_supervision(drift_runs):
    fidelity_wins = 0
    audited = 0
    for scenario, gated, ungated in drift_runs:
        if fidelity_proxy(gated) > fidelity_proxy(ungated):
            fidelity_wins += 1
        records = gated.record.steps
        s1 = gated.points[0].s1
        tau = gated.config.tau
        has_template_step = any(r.gate_choice == "template" for r in records)
        audit_ok = all(
            (r.gate_choice == "dynamic") == (r.step == 1
                                             or r.gate_confidences[0] > tau * s1)
            for r in records)
        if has_template_step and audit_ok:
            audited += 1
    ok = fidelity_wins >= 4 and audited == 5
    _verdict("A4 confident supervision",
             ok, f"fidelity wins {fidelity_wins}/5; gate audit clean in "
                 f"{audited}/5 gated runs")


def test_a5_sweep_trends():
    taus = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
    scenarios = suite("sweep")
    rows = sweep("tau", taus, scenarios)
    fid = []
    md = []
    for t in taus:
        label = f"tau={t:g}"
        vals = [r for r in rows if r.variant == label]
        assert len(vals) == len(scenarios)
        fid.append(float(np.mean([r.fidelity_proxy for r in vals])))
        md.append(float(np.mean([r.mean_distance for r in vals])))
    monotone = all(fid[i + 1] >= fid[i] for i in range(len(taus) - 1))
    argmin = int(np.argmin(md))
    interior = 0 < argmin < len(taus) - 1

    lam_rows = sweep("lambda", taus, [scenarios[0]], steps=40)
    lam_ok = all(not r.status.startswith("error") for r in lam_rows)

    ok = monotone and interior and lam_ok
    _verdict("A5 sweep trends",
             ok, f"fidelity {['%.6f' % v for v in fid]} monotone={monotone}; "
                 f"MD {['%.2f' % v for v in md]} argmin at tau={taus[argmin]} "
                 f"interior={interior}; lambda sweep ok={lam_ok}")


def test_a6_tracker_training_properties(a1_run):
    failures = []
    for scenario in suite("default"):
        config = scenario.config()
        spec = scenario.spec()
        f0 = generate(spec, scenario.initial_latent()).values
        for idx, pt in enumerate(scenario.points):
            model = train_tracker(f0, pt.handle, config.r2, config.label_sigma,
                                  iters=config.tracker_iters,
                                  step_size=config.tracker_step_size,
                                  snap_every=0)
            trace = model.train_trace
            if not trace[-1] < 1e-2 * trace[0]:
                failures.append(f"{scenario.name}: loss ratio "
                                f"{trace[-1] / trace[0]:.3e}")
            patch = make_patch(pt.handle, config.r2, spec.height, spec.width)
            scores = apply_tracker(extract_patch(f0, patch), model)
            ys, xs = np.mgrid[patch.y0:patch.y1, patch.x0:patch.x1]
            far = np.hypot(xs - pt.handle[0], ys - pt.handle[1]) >= 3.0
            peak_far = float(scores[far].max())
            if peak_far >= 0.5:
                failures.append(f"{scenario.name}: far score {peak_far:.3f}")

    session, _ = a1_run
    train_time = session.record.timings["tracker_train_s"]
    drag_time = session.record.timings["drag_s"]
    drag60 = drag_time * 60.0 / max(session.step_count, 1)
    timing_ok = train_time < 0.10 * drag60
    if not timing_ok:
        failures.append(f"training {train_time:.2f}s vs 60-step {drag60:.2f}s")
    ok = not failures
    _verdict("A6 tracker training",
             ok, "all suite scenarios within bounds; "
                 f"train {train_time:.2f}s vs 60-step drag {drag60:.2f}s"
             if ok else "; ".join(failures))


def test_a7_baseline_equivalence_and_determinism():
    scenario = template_single_blob()
    config_manual = scenario.config(max_steps=25, lam=1.0, tau=0.0)
    manual = run(start_session(scenario, config_manual))

    from dragfield.metrics import ABLATION_VARIANTS

    name, overrides = ABLATION_VARIANTS[3]
    assert name == "baseline"
    dedicated = run(start_session(scenario,
                                  scenario.config(max_steps=25, **overrides)))
    baseline_ok = manual.record.canonical_bytes() == \
        dedicated.record.canonical_bytes()

    repeat = run(start_session(scenario, config_manual))
    repeat_ok = repeat.record.canonical_bytes() == \
        manual.record.canonical_bytes()

    ok = baseline_ok and repeat_ok
    _verdict("A7 baseline equivalence & determinism",
             ok, f"baseline path bit-identical={baseline_ok}, "
                 f"rerun byte-identical={repeat_ok} "
                 f"({len(manual.record.canonical_bytes())} canonical bytes)")


def test_a8_oracle_argmax():
    rng = np.random.default_rng(888)
    mismatches = 0
    for case in range(200):
        h = int(rng.integers(1, 12))
        w = int(rng.integers(1, 12))
        if case % 3 == 0:
            grid = rng.integers(0, 4, size=(h, w)).astype(float)  # many ties
        else:
            grid = rng.normal(size=(h, w))
        patch = make_patch((30, 30), max(h, w, 2), 128, 128)
        grid = grid[:patch.height, :patch.width]
        p, s = track_update(grid, patch)
        best = None
        for row in range(grid.shape[0]):
            for col in range(grid.shape[1]):
                if best is None or grid[row, col] > best[0]:
                    best = (grid[row, col], row, col)
        expect = (patch.x0 + best[2], patch.y0 + best[1])
        if p != expect or s != best[0]:
            mismatches += 1
    ok = mismatches == 0
    _verdict("A8 oracle argmax",
             ok, f"200 grids (ties included), {mismatches} mismatches")
