"""End-to-end acceptance suite.

Each test prints a one-line PASS summary with the measured quantity so a run
log doubles as a results table.  The two desk-scale experiments (spiral and
image) dominate the runtime; everything else finishes in a few minutes.
"""

import json
import time

import numpy as np
import pytest

from clsketch import cli, clsgd, data, denoise, io, nn, sketch
from clsketch.densities import CosineParamDensity, ReluDensity

SEED_STREAM = np.random.SeedSequence(20240817)


def fresh_seeds(n):
    return [int(s.generate_state(1)[0]) for s in SEED_STREAM.spawn(n)]


def _report(name, detail):
    print(f"[acceptance] {name}: {detail}")


# 1. gradient correctness -----------------------------------------------------


class TestCriterion1Gradients:
    H = 1e-5
    REL_TOL = 1e-6

    def _safe_fixture(self, seed):
        """Net + grids whose hidden pre-activations stay away from ReLU
        kinks, so central differences at h=1e-5 are trustworthy."""
        rng = np.random.default_rng(seed)
        while True:
            net = nn.init_network([2, 8, 4, 1], int(rng.integers(2**32)))
            gp = sketch.sample_grid(24, 2, int(rng.integers(2**32)))
            gq = sketch.sample_grid(24, 2, int(rng.integers(2**32)))
            margins = []
            alive = True
            for g in (gp, gq):
                a = g.points
                for k, (w, b) in enumerate(zip(net.weights, net.biases)):
                    z = a @ w.T + b
                    if k < len(net.weights) - 1:
                        margins.append(np.min(np.abs(z)))
                        a = np.maximum(z, 0.0)
                # a dead net (f identically 0 on the grid) has an exactly
                # zero gradient; nothing to compare against
                alive = alive and np.linalg.norm(a) > 1e-6
            if alive and min(margins) > 1e-3:
                return net, gp, gq

    def _fd(self, func, params, h=H):
        fd = np.zeros(params.size)
        for j in range(params.size):
            p = params.copy()
            p[j] += h
            fp = func(p)
            p[j] -= 2 * h
            fd[j] = (fp - func(p)) / (2 * h)
        return fd

    def test_naive_and_unbiased_match_finite_differences(self):
        t0 = time.perf_counter()
        dens = ReluDensity()
        fs = sketch.sample_frequencies(16, 2, 4.0, 77)
        zhat = sketch.oracle_sketch_cosine(fs, sketch.OracleCosineDensity(k=(1, 0), a=0.5))
        worst_naive = worst_unbiased = 0.0
        for trial in range(100):
            net, gp, gq = self._safe_fixture(1000 + trial)
            op_p = sketch.DiscretizedOperator(fs, gp)
            op_q = sketch.DiscretizedOperator(fs, gq)
            alpha = 0.8

            _, grad = clsgd.naive_loss_and_gradient(dens, net, gp, zhat, alpha, fs, op=op_p)

            def naive_loss(params):
                values, _ = dens.eval_batch(net.with_params(params), gp)
                r = alpha * op_p.apply(values) - zhat
                return np.real(np.vdot(r, r))

            fd = self._fd(naive_loss, net.params)
            worst_naive = max(worst_naive, np.linalg.norm(grad - fd) / np.linalg.norm(fd))

            direction = clsgd.unbiased_direction(
                dens, net, gp, gq, alpha, zhat, fs, op_p=op_p, op_q=op_q
            )
            values_q, _ = dens.eval_batch(net, gq)
            l_q = alpha * op_q.apply(values_q) - zhat  # anchor held at theta0

            def two_grid_loss(params):
                values, _ = dens.eval_batch(net.with_params(params), gp)
                return 2.0 * np.real(np.sum(alpha * op_p.apply(values) * np.conj(l_q)))

            fd = self._fd(two_grid_loss, net.params)
            worst_unbiased = max(
                worst_unbiased, np.linalg.norm(direction - fd) / np.linalg.norm(fd)
            )
        elapsed = time.perf_counter() - t0
        _report(
            "criterion 1",
            f"worst rel err naive {worst_naive:.2e}, unbiased {worst_unbiased:.2e} "
            f"({elapsed:.1f}s)",
        )
        assert worst_naive <= self.REL_TOL
        assert worst_unbiased <= self.REL_TOL
        assert elapsed < 30.0


# 2./3. consistency and cross-product identities ------------------------------


class TestCriterion2Consistency:
    def test_grid_mean_matches_closed_form_sketch(self):
        t0 = time.perf_counter()
        m, P, n_grids = 64, 128, 20000
        fs = sketch.sample_frequencies(m, 2, 5.0, 101)
        dens = sketch.OracleCosineDensity(k=(1, 0), a=0.5)
        exact = sketch.oracle_sketch_cosine(fs, dens)
        rng = np.random.default_rng(fresh_seeds(1)[0])
        acc = np.zeros((n_grids, m), dtype=np.complex128)
        for i in range(n_grids):
            grid = sketch.sample_grid(P, 2, int(rng.integers(2**63)))
            acc[i] = sketch.apply_discretized_operator(fs, grid, dens.eval(grid.points))
        within = np.zeros(m, dtype=bool)
        for part, target in ((acc.real, exact.real), (acc.imag, exact.imag)):
            se = part.std(axis=0, ddof=1) / np.sqrt(n_grids)
            z = np.abs(part.mean(axis=0) - target) / se
            within = within | (z > 4.0)
        frac = 1.0 - within.mean()
        elapsed = time.perf_counter() - t0
        _report("criterion 2", f"{frac:.1%} of components within 4 SE ({elapsed:.1f}s)")
        assert frac >= 0.95
        assert elapsed < 120.0


class TestCriterion3CrossProduct:
    def test_inner_product_expectation(self):
        t0 = time.perf_counter()
        m, P, n_grids = 64, 128, 20000
        fs = sketch.sample_frequencies(m, 2, 5.0, 103)
        mu1 = sketch.OracleCosineDensity(k=(1, 0), a=0.5)
        mu2 = sketch.OracleCosineDensity(k=(1, 0), a=0.3)
        s1 = sketch.oracle_sketch_cosine(fs, mu1)
        s2 = sketch.oracle_sketch_cosine(fs, mu2)
        expected = (m / P) * sketch.cosine_l2_inner(mu1, mu2) + ((P - 1) / P) * np.sum(
            s1 * np.conj(s2)
        )
        rng = np.random.default_rng(fresh_seeds(1)[0])
        samples = np.empty(n_grids, dtype=np.complex128)
        for i in range(n_grids):
            grid = sketch.sample_grid(P, 2, int(rng.integers(2**63)))
            b1 = sketch.apply_discretized_operator(fs, grid, mu1.eval(grid.points))
            b2 = sketch.apply_discretized_operator(fs, grid, mu2.eval(grid.points))
            samples[i] = np.sum(b1 * np.conj(b2))
        zs = []
        for part, target in ((samples.real, expected.real), (samples.imag, expected.imag)):
            se = part.std(ddof=1) / np.sqrt(n_grids)
            zs.append(abs(part.mean() - target) / se)
        elapsed = time.perf_counter() - t0
        _report("criterion 3", f"z-scores re {zs[0]:.2f}, im {zs[1]:.2f} ({elapsed:.1f}s)")
        assert max(zs) <= 4.0
        assert elapsed < 120.0


# 4. unbiasedness and the naive bias ------------------------------------------


class TestCriterion4Unbiasedness:
    def _setting(self):
        fs = sketch.sample_frequencies(16, 2, 5.0, 104)
        dens = CosineParamDensity(k=(1, 0))
        model = np.array([0.2])
        target = sketch.oracle_sketch_cosine(fs, sketch.OracleCosineDensity(k=(1, 0), a=0.6))
        return fs, dens, model, target

    def test_unbiased_mean_and_naive_bias_slope(self):
        t0 = time.perf_counter()
        fs, dens, model, target = self._setting()
        exact = dens.loss_gradient(fs, model, target)[0]

        # (a) unbiased direction over 1e5 independent grid pairs
        rng = np.random.default_rng(fresh_seeds(1)[0])
        n_pairs = 100000
        vals = np.empty(n_pairs)
        for i in range(n_pairs):
            gp = sketch.sample_grid(64, 2, int(rng.integers(2**63)))
            gq = sketch.sample_grid(64, 2, int(rng.integers(2**63)))
            vals[i] = clsgd.unbiased_direction(dens, model, gp, gq, 1.0, target, fs)[0]
        se = vals.std(ddof=1) / np.sqrt(n_pairs)
        z = abs(vals.mean() - exact) / se

        # (b) naive bias shrinks like 1/P: log-log slope over {64, 256, 1024}
        # more draws at large P, where the bias shrinks toward the MC noise
        sizes = [64, 256, 1024]
        draws = [40000, 60000, 120000]
        biases = []
        for P, n in zip(sizes, draws):
            g = np.empty(n)
            for i in range(n):
                grid = sketch.sample_grid(P, 2, int(rng.integers(2**63)))
                _, grad = clsgd.naive_loss_and_gradient(dens, model, grid, target, 1.0, fs)
                g[i] = grad[0]
            biases.append(g.mean() - exact)
        slope = np.polyfit(np.log(sizes), np.log(np.abs(biases)), 1)[0]
        elapsed = time.perf_counter() - t0
        _report(
            "criterion 4",
            f"unbiased z={z:.2f}; naive bias {['%.3g' % b for b in biases]} slope {slope:.3f} "
            f"({elapsed:.1f}s)",
        )
        assert z <= 4.0
        assert slope == pytest.approx(-1.0, abs=0.15)
        assert elapsed < 300.0


# 5. variance scaling ----------------------------------------------------------


class TestCriterion5Variance:
    def test_quadrupling_p_divides_variance(self):
        t0 = time.perf_counter()
        fs = sketch.sample_frequencies(16, 2, 5.0, 105)
        dens = CosineParamDensity(k=(1, 0))
        model = np.array([0.2])
        target = sketch.oracle_sketch_cosine(fs, sketch.OracleCosineDensity(k=(1, 0), a=0.6))
        rng = np.random.default_rng(fresh_seeds(1)[0])

        def variance(P, n=8000):
            vals = np.empty(n)
            for i in range(n):
                gp = sketch.sample_grid(P, 2, int(rng.integers(2**63)))
                gq = sketch.sample_grid(P, 2, int(rng.integers(2**63)))
                vals[i] = clsgd.unbiased_direction(dens, model, gp, gq, 1.0, target, fs)[0]
            return vals.var(ddof=1)

        ratio = variance(128) / variance(512)
        elapsed = time.perf_counter() - t0
        _report("criterion 5", f"variance ratio P vs 4P = {ratio:.2f} ({elapsed:.1f}s)")
        assert 2.5 <= ratio <= 6.0
        assert elapsed < 180.0


# 8. merge exactness -----------------------------------------------------------


class TestCriterion8Merge:
    def test_ten_way_shard_equals_single_pass(self):
        fs = sketch.sample_frequencies(200, 2, 6.0, 108)
        pts = data.generate_spiral(data.SpiralSpec(n=100000, seed=8))
        pts = data.fit_normalizer(pts).forward(pts)
        single = sketch.sketch_dataset(fs, pts)
        states = [
            sketch.SketchState(fs).update_batch(chunk) for chunk in np.array_split(pts, 10)
        ]
        merged = states[0]
        for s in states[1:]:
            merged = sketch.merge_sketch_states(merged, s)
        rel = np.abs(merged.finalize() - single) / np.abs(single)
        _report("criterion 8", f"worst per-component rel err {rel.max():.2e}")
        assert rel.max() <= 1e-12


# 10. step-schedule sums ---------------------------------------------------------


class TestCriterion10StepSchedule:
    def test_diminishing_partial_sums(self):
        tau0 = 1.0
        rule = clsgd.DiminishingStep(tau0)
        ks = np.arange(1, 10**6 + 1)
        taus = tau0 / ks
        assert taus[0] == clsgd.step_schedule(rule, 1)
        assert taus[9] == clsgd.step_schedule(rule, 10)
        total = float(np.sum(taus[::-1]))  # ascending order for accuracy
        total_sq = float(np.sum((taus**2)[::-1]))
        target_sq = np.pi**2 / 6 * tau0**2
        _report(
            "criterion 10",
            f"sum tau = {total:.4f} (> 14.3), sum tau^2 = {total_sq:.8f} "
            f"(pi^2/6 = {target_sq:.8f})",
        )
        assert total > 14.3
        assert abs(total_sq - target_sq) <= 1e-6


# 6./9. spiral end to end through the CLI --------------------------------------

SPIRAL_N = 100000
SPIRAL_M = 500
SPIRAL_P = 1000
SPIRAL_ITERS = 20000
SPIRAL_SCALE = 5.0
SPIRAL_LAMBDAS = [0.003, 0.006, 0.01, 0.015, 0.022, 0.033, 0.05, 0.1]


def run_spiral_recipe(workdir, tag):
    """The desk-scale spiral pipeline, driven entirely by the CLI.

    Returns a dict of output paths plus the lambda sweep results and the
    wall-clock seconds of the whole recipe.
    """
    d = workdir
    paths = {
        "data": str(d / f"spiral-{tag}.csv"),
        "sketch": str(d / f"spiral-{tag}.clsk"),
        "model": str(d / f"model-{tag}.clnn"),
        "clean": str(d / f"clean-{tag}.csv"),
        "noisy": str(d / f"noisy-{tag}.csv"),
    }
    t0 = time.perf_counter()
    assert cli.run(["gen-spiral", "--n", str(SPIRAL_N), "--seed", "1",
                    "--out", paths["data"]]) == 0
    assert cli.run(["sketch", "--input", paths["data"], "--m", str(SPIRAL_M),
                    "--scale", str(SPIRAL_SCALE), "--seed", "3",
                    "--out", paths["sketch"]]) == 0
    assert cli.run(["train", "--sketch", paths["sketch"], "--layers", "2,64,64,128",
                    "--points", str(SPIRAL_P), "--iters", str(SPIRAL_ITERS),
                    "--step-rule", "adam", "--lr", "0.001", "--seed", "5",
                    "--out", paths["model"]]) == 0

    clean = data.generate_spiral(data.SpiralSpec(n=500, seed=99))
    noisy = data.add_gaussian_noise(clean, 0.15, 100)
    io.write_pointcloud_csv(paths["clean"], clean)
    io.write_pointcloud_csv(paths["noisy"], noisy)

    sweep = []
    for i, lam in enumerate(SPIRAL_LAMBDAS):
        out = str(d / f"denoised-{tag}-{i}.csv")
        report = str(d / f"report-{tag}-{i}.json")
        assert cli.run(["denoise", "--model", paths["model"], "--input", paths["noisy"],
                        "--lambda", str(lam), "--steps", "200", "--lr", "0.1",
                        "--out", out]) == 0
        assert cli.run(["eval", "--clean", paths["clean"], "--noisy", paths["noisy"],
                        "--denoised", out, "--report", report]) == 0
        with open(report) as fh:
            gain = json.load(fh)["gain_db"]
        sweep.append({"lambda": lam, "gain_db": gain,
                      "denoised": out, "report": report})
    paths["sweep"] = sweep
    paths["seconds"] = time.perf_counter() - t0
    return paths


@pytest.fixture(scope="module")
def spiral_run(tmp_path_factory):
    return run_spiral_recipe(tmp_path_factory.mktemp("spiral"), "a")


class TestCriterion6SpiralEndToEnd:
    def test_best_snr_gain_and_runtime(self, spiral_run):
        best = max(spiral_run["sweep"], key=lambda r: r["gain_db"])
        _report(
            "criterion 6",
            f"best gain {best['gain_db']:+.3f} dB at lambda={best['lambda']:g} "
            f"(recipe {spiral_run['seconds']:.0f}s)",
        )
        assert best["gain_db"] >= 1.5
        assert spiral_run["seconds"] <= 900.0


class TestCriterion9Determinism:
    def test_identical_manifests_reproduce_bits(self, spiral_run, tmp_path_factory):
        second = run_spiral_recipe(tmp_path_factory.mktemp("spiral9"), "b")
        pairs = [
            (spiral_run["data"], second["data"]),
            (spiral_run["sketch"], second["sketch"]),
            (spiral_run["model"], second["model"]),
        ]
        for i in range(len(SPIRAL_LAMBDAS)):
            pairs.append((spiral_run["sweep"][i]["denoised"], second["sweep"][i]["denoised"]))
            pairs.append((spiral_run["sweep"][i]["report"], second["sweep"][i]["report"]))
        for a, b in pairs:
            with open(a, "rb") as fa, open(b, "rb") as fb:
                assert fa.read() == fb.read(), f"{a} differs from {b}"
        _report("criterion 9", f"{len(pairs)} artifacts bit-identical across reruns")


# 7. image pipeline --------------------------------------------------------------

IMAGE_M = 2000
IMAGE_P = 10000
IMAGE_ITERS = 400
IMAGE_SCALE = 2.0
IMAGE_LAMBDA = 0.1


def random_patches(img, count, side, seed):
    rng = np.random.default_rng(seed)
    h, w = img.shape
    rows = rng.integers(0, h - side + 1, size=count)
    cols = rng.integers(0, w - side + 1, size=count)
    out = np.empty((count, side * side))
    for i, (r, c) in enumerate(zip(rows, cols)):
        out[i] = img[r : r + side, c : c + side].ravel()
    return out


class TestCriterion7ImagePipeline:
    def test_patch_prior_denoising_improves_psnr(self):
        train_img = data.synthetic_image(256, 256, seed=11)
        patches = random_patches(train_img, 200000, 3, seed=0)
        normalizer = data.fit_normalizer(patches)
        freqset = sketch.sample_frequencies(IMAGE_M, 9, IMAGE_SCALE, 3)
        zhat = sketch.sketch_dataset(freqset, normalizer.forward(patches))

        net = nn.init_network([9, 64, 64, 128], 5)
        config = clsgd.TrainConfig(
            algorithm="naive",
            iters=IMAGE_ITERS,
            grid_size=IMAGE_P,
            step_rule=clsgd.AdamStep(1e-3),
            grid_seed=7,
            init_seed=5,
            eval_grid_size=IMAGE_P,
        )
        t0 = time.perf_counter()
        net, _ = clsgd.train(ReluDensity(), net, config, zhat, freqset)
        train_seconds = time.perf_counter() - t0

        clean = data.synthetic_image(128, 128, seed=77)
        noisy = denoise.GrayImage(np.clip(data.add_gaussian_noise(clean, 0.07, 5), 0, 1))
        base = denoise.psnr(clean, noisy.pixels)
        out = denoise.denoise_image(
            net, normalizer, noisy,
            denoise.DenoiseConfig(lam=IMAGE_LAMBDA, steps=100, step_size=0.1),
            denoise.PatchConfig(side=3, stride=1, aggregation="average"),
        )
        gain = denoise.psnr(clean, out.pixels) - base
        _report(
            "criterion 7",
            f"PSNR {base:.2f} -> {base + gain:.2f} dB ({gain:+.2f}), "
            f"training {train_seconds:.0f}s",
        )
        assert train_seconds <= 1800.0
        assert gain >= 3.0


# full-scale spiral run (not gated; run with -m slow) -----------------------------


@pytest.mark.slow
class TestFullScaleSpiral:
    def test_snr_gain_at_full_scale(self):
        n, m, P, K = 10**6, 1000, 1600, 30000
        pts = data.generate_spiral(data.SpiralSpec(n=n, seed=1))
        normalizer = data.fit_normalizer(pts)
        freqset = sketch.sample_frequencies(m, 2, SPIRAL_SCALE, 3)
        zhat = sketch.sketch_dataset(freqset, normalizer.forward(pts))
        net = nn.init_network([2, 64, 64, 128], 5)
        config = clsgd.TrainConfig(
            algorithm="naive", iters=K, grid_size=P,
            step_rule=clsgd.AdamStep(1e-3), grid_seed=6, init_seed=5,
        )
        net, _ = clsgd.train(ReluDensity(), net, config, zhat, freqset)
        clean = data.generate_spiral(data.SpiralSpec(n=500, seed=99))
        noisy = data.add_gaussian_noise(clean, 0.15, 100)
        v = normalizer.forward(noisy)
        gains = []
        for lam in SPIRAL_LAMBDAS:
            cfg = denoise.DenoiseConfig(lam=lam, steps=200, step_size=0.1)
            denoised = normalizer.inverse(denoise.denoise_batch(net, v, cfg))
            gains.append(denoise.snr_gain(clean, noisy, denoised))
        best = max(gains)
        _report("full-scale spiral", f"best gain {best:+.3f} dB (reference +1.954)")
        assert best == pytest.approx(1.954, abs=0.5)
