"""Acceptance suite.

Nine gate criteria, one test each, every tolerance pinned inline. Each test
prints a single PASS line on success (visible with ``pytest -s`` or in the
captured output). The two training criteria run real multi-minute loops;
the whole module targets a desktop-CPU budget well under the 15-minute cap
of the longest criterion.
"""

import math

import numpy as np
import pytest

import densemod.degrade as D
import densemod.losses as L
import densemod.metrics as M
import densemod.nn as nn
import densemod.tensor as dt
from conftest import natural_image, params_to_double
from densemod.config import parse_config
from densemod.optim import Schedule, lr_at
from densemod.pngio import save_image
from densemod.tensor import Tensor
from densemod.train import load_model, run_training
from densemod.weights import load_weights


def report(n, name):
    print(f"[ACCEPTANCE {n}] {name}: PASS")


def u(shape, seed, lo=0.0, hi=1.0):
    return np.random.default_rng(seed).uniform(lo, hi, shape)


class TestCriterion1GradientSuite:
    """Every differentiable op vs central finite differences: double
    precision, h = 1e-4, max relative error < 1e-4, >= 5 seeds per op."""

    SEEDS = range(5)

    def _check(self, fn, tensors, name, seed, max_entries=None):
        err = dt.finite_difference_check(fn, tensors, h=1e-4,
                                         max_entries=max_entries,
                                         rng=np.random.default_rng(seed))
        assert err < 1e-4, f"{name} seed {seed}: max rel err {err}"

    def test_gradient_suite(self):
        for seed in self.SEEDS:
            x = Tensor(u((1, 4, 6, 6), seed, -1, 1), requires_grad=True,
                       dtype=np.float64)
            w = Tensor(u((4, 4, 3, 3), seed + 100, -1, 1), requires_grad=True,
                       dtype=np.float64)
            b = Tensor(u((1, 4, 1, 1), seed + 200, -1, 1), requires_grad=True,
                       dtype=np.float64)
            c_out = Tensor(u((1, 4, 6, 6), seed + 300, -1, 1), dtype=np.float64)
            self._check(
                lambda xx, ww, bb: dt.mean_all(dt.mul(dt.conv2d(xx, ww, bb, 1, 1), c_out)),
                [x, w, b], "conv2d", seed)

            # keep leaky_relu inputs away from its kink at 0
            rng = np.random.default_rng(seed + 400)
            lx = Tensor(rng.uniform(0.05, 1.0, (1, 3, 5, 5))
                        * rng.choice([-1.0, 1.0], (1, 3, 5, 5)),
                        requires_grad=True, dtype=np.float64)
            c_lr = Tensor(rng.uniform(-1, 1, (1, 3, 5, 5)), dtype=np.float64)
            self._check(lambda a: dt.mean_all(dt.mul(dt.leaky_relu(a, 0.1), c_lr)),
                        [lx], "leaky_relu", seed)

            p1 = Tensor(u((1, 2, 4, 4), seed + 500), requires_grad=True, dtype=np.float64)
            p2 = Tensor(u((1, 3, 4, 4), seed + 600), requires_grad=True, dtype=np.float64)
            c_cat = Tensor(u((1, 5, 4, 4), seed + 650, -1, 1), dtype=np.float64)
            self._check(
                lambda a, bb: dt.mean_all(dt.mul(dt.concat_channels([a, bb]), c_cat)),
                [p1, p2], "concat_channels", seed)

            ps_in = Tensor(u((1, 8, 4, 4), seed + 700), requires_grad=True, dtype=np.float64)
            c_ps = Tensor(u((1, 2, 8, 8), seed + 750, -1, 1), dtype=np.float64)
            self._check(lambda a: dt.mean_all(dt.mul(dt.pixel_shuffle(a, 2), c_ps)),
                        [ps_in], "pixel_shuffle", seed)

            sd_in = Tensor(u((1, 2, 8, 8), seed + 800), requires_grad=True, dtype=np.float64)
            c_sd = Tensor(u((1, 8, 4, 4), seed + 850, -1, 1), dtype=np.float64)
            self._check(lambda a: dt.mean_all(dt.mul(dt.space_to_depth(a, 2), c_sd)),
                        [sd_in], "space_to_depth", seed)

            mx = Tensor(u((1, 3, 4, 4), seed + 900), requires_grad=True, dtype=np.float64)
            ma = Tensor(u((1, 3, 4, 4), seed + 950, 0.5, 1.5), requires_grad=True,
                        dtype=np.float64)
            mb = Tensor(u((1, 3, 4, 4), seed + 980, -0.5, 0.5), requires_grad=True,
                        dtype=np.float64)
            c_mod = Tensor(u((1, 3, 4, 4), seed + 990, -1, 1), dtype=np.float64)
            self._check(
                lambda a, al, be: dt.mean_all(
                    dt.mul(nn.modulate(a, nn.ModulationParams(al, be)), c_mod)),
                [mx, ma, mb], "modulate", seed)

            nx = Tensor(np.random.default_rng(seed + 1000)
                        .standard_normal((1, 3, 5, 5)), requires_grad=True,
                        dtype=np.float64)
            c_n = Tensor(u((1, 3, 5, 5), seed + 1050, -1, 1), dtype=np.float64)
            self._check(lambda a: dt.mean_all(dt.mul(dt.instance_norm(a), c_n)),
                        [nx], "spade_normalization", seed)

            # the four losses
            rng = np.random.default_rng(seed + 1100)
            fp = Tensor(rng.uniform(0.6, 1.0, (1, 3, 6, 6)), requires_grad=True,
                        dtype=np.float64)
            ft = Tensor(rng.uniform(0.0, 0.4, (1, 3, 6, 6)), dtype=np.float64)
            self._check(lambda a: L.fidelity_loss(a, ft), [fp], "fidelity_loss", seed)

            sp = Tensor(u((1, 1, 12, 12), seed + 1200), requires_grad=True,
                        dtype=np.float64)
            st = Tensor(u((1, 1, 12, 12), seed + 1250), dtype=np.float64)
            self._check(lambda a: L.ssim_loss(a, st), [sp], "ssim_loss", seed,
                        max_entries=40)

            # kink-free extractor: positive taps, sign-definite feature gap
            # (the nonsmooth branches are covered by the op-level checks)
            perc_rng = np.random.default_rng(seed + 1300)
            fx = L.FeatureExtractor(weights=[
                (perc_rng.uniform(0.05, 0.15, (4, 3, 3, 3)), np.full(4, 0.5)),
                (perc_rng.uniform(0.05, 0.15, (4, 4, 3, 3)), np.full(4, 0.5))])
            pt = Tensor(perc_rng.uniform(0.1, 0.5, (1, 3, 10, 10)), dtype=np.float64)
            pp = Tensor(pt.data + 0.4, requires_grad=True, dtype=np.float64)
            self._check(lambda a: L.perceptual_loss(a, pt, fx, layers=(1, 2)),
                        [pp], "perceptual_loss", seed, max_entries=40)

            cr = Tensor(np.random.default_rng(seed + 1400).normal(size=(2, 1, 3, 3)),
                        requires_grad=True, dtype=np.float64)
            cf = Tensor(np.random.default_rng(seed + 1500).normal(size=(2, 1, 3, 3)),
                        requires_grad=True, dtype=np.float64)
            self._check(lambda a, bb: L.rgan_losses(a, bb)[0], [cr, cf],
                        "rgan_g_loss", seed)
            self._check(lambda a, bb: L.rgan_losses(a, bb)[1], [cr, cf],
                        "rgan_d_loss", seed)
        report(1, "gradient suite, 5 seeds per op, tol 1e-4")


class TestCriterion2StructuralIdentities:
    def test_structural_identities(self):
        # pixel_shuffle / space_to_depth bit-exact inverse pair
        for r in (1, 2, 4):
            x = Tensor(u((2, 3 * r * r, 4, 4), r).astype(np.float32))
            y = Tensor(u((2, 3, 4 * r, 4 * r), r + 10).astype(np.float32))
            assert np.array_equal(
                dt.space_to_depth(dt.pixel_shuffle(x, r), r).data, x.data)
            assert np.array_equal(
                dt.pixel_shuffle(dt.space_to_depth(y, r), r).data, y.data)

        # identity-configured dense modulation block, bit exact
        spec = nn.ModelSpec(mode="super_resolution", num_blocks=1, seed=0)
        params = nn.build_generator_params(spec)
        for i in range(1, 5):
            params[f"block1.conv{i}.weight"].data[...] = 0
            params[f"block1.conv{i}.bias"].data[...] = 0
        for name in ("fuse", "mod.shared", "mod.alpha", "mod.beta"):
            params[f"block1.{name}.weight"].data[...] = 0
            params[f"block1.{name}.bias"].data[...] = 0
        params["block1.mod.alpha.bias"].data[...] = 1.0
        bx = Tensor(u((2, 16, 8, 8), 20).astype(np.float32))
        ai = Tensor(u((2, 16, 8, 8), 21).astype(np.float32))
        assert np.array_equal(
            nn.dense_modulation_block(bx, ai, params, "block1").data, bx.data)

        # SPADE-normalized features: per-channel mean 0 / std 1 within 1e-4
        feats = Tensor(np.random.default_rng(22).standard_normal((2, 16, 12, 12))
                       .astype(np.float32))
        normalized = dt.instance_norm(feats)
        assert np.abs(normalized.data.mean(axis=(2, 3))).max() < 1e-4
        assert np.abs(normalized.data.std(axis=(2, 3)) - 1).max() < 1e-4
        report(2, "inverse pair r in {1,2,4}; block identity; spade stats 0/1")


class TestCriterion3LossOracles:
    def test_loss_oracles(self):
        x = Tensor(u((1, 3, 20, 20), 30), dtype=np.float64)
        assert abs(L.ssim_loss(x, x).item()) < 1e-6

        for seed in range(3):
            a = Tensor(u((1, 3, 20, 20), seed + 31), dtype=np.float64)
            b = Tensor(np.clip(a.data + np.random.default_rng(seed + 40)
                               .normal(0, 0.1, a.shape), 0, 1), dtype=np.float64)
            cross = abs(L.ssim_loss(a, b).item() - (1.0 - M.ssim(a.data, b.data)))
            assert cross < 1e-6

        pred = Tensor(np.array([1.0, 2.0]).reshape(1, 1, 1, 2), dtype=np.float64)
        target = Tensor(np.array([0.0, 4.0]).reshape(1, 1, 1, 2), dtype=np.float64)
        assert L.fidelity_loss(pred, target).item() == 1.5
        same = Tensor(u((1, 3, 8, 8), 50), dtype=np.float64)
        assert L.fidelity_loss(same, same).item() == 0.0
        off = Tensor(same.data + 0.5)
        assert abs(L.fidelity_loss(off, same).item() - 0.5) < 1e-12

        c = Tensor(np.full((2, 1, 4, 4), 1.7), dtype=np.float64)
        g_loss, d_loss = L.rgan_losses(c, Tensor(c.data.copy(), dtype=np.float64))
        assert abs(g_loss.item() - 2 * math.log(2)) < 1e-6
        assert abs(d_loss.item() - 2 * math.log(2)) < 1e-6
        report(3, "ssim oracle 1e-6; fidelity exact; rgan 2 ln 2")


class TestCriterion4ArchitectureBudget:
    def test_architecture_budget(self):
        for mode in ("super_resolution", "detail_enhance"):
            spec = nn.ModelSpec(mode=mode)
            store = nn.build_generator_params(spec)
            reported = store.total_parameters()
            assert reported == nn.expected_param_count(spec)
            assert reported <= 350_000
        report(4, "SR 176,700 / enhance 209,916 params; closed form exact; <= 350k")


@pytest.fixture(scope="module")
def sr_overfit_run(tmp_path_factory):
    """Criterion 5 training run: one 96x96 patch, 2000 iterations, lr 1e-3."""
    tmp = tmp_path_factory.mktemp("sr_overfit")
    data = tmp / "data"
    data.mkdir()
    hr = natural_image(96, 96, seed=11)
    save_image(data / "patch.png", hr)
    cfg = parse_config(f"""
model.mode=super_resolution
degradation.mode=sr
degradation.jpeg_quality=20
data_dir={data}
out_dir={tmp / 'run'}
batch_size=1
patch_size=96
iterations=2000
checkpoint_every=500
schedule.initial_lr=1e-3
schedule.num_halvings=0
""")
    result = run_training(cfg)
    return hr, result


class TestCriterion5DeskScaleOverfitSR:
    def test_overfit_beats_bicubic_by_6db(self, sr_overfit_run):
        hr, result = sr_overfit_run
        spec, params = load_model(result["weights"])
        hr_t = Tensor(hr)
        degraded, _ = D.make_pair(hr_t, D.DegradationSpec(mode="sr"),
                                  np.random.default_rng(0))
        recon = nn.sr_generator_forward(degraded, params, spec, train=False)
        baseline = D.bicubic_resize(degraded, 96, 96)
        psnr_model = M.psnr(recon.data, hr)
        psnr_bicubic = M.psnr(baseline.data, hr)
        margin = psnr_model - psnr_bicubic
        assert margin >= 6.0, (
            f"model {psnr_model:.2f} dB vs bicubic {psnr_bicubic:.2f} dB")
        report(5, f"overfit SR: model {psnr_model:.2f} dB vs bicubic "
                  f"{psnr_bicubic:.2f} dB (margin {margin:.2f} >= 6)")


class TestCriterion6EnhanceTrainingSignal:
    def test_enhance_total_loss_halves(self, tmp_path):
        data = tmp_path / "data"
        data.mkdir()
        for i in range(5):
            save_image(data / f"img{i}.png", natural_image(64, 64, seed=30 + i))
        cfg = parse_config(f"""
model.mode=detail_enhance
degradation.mode=enhance
data_dir={data}
out_dir={tmp_path / 'run'}
batch_size=2
patch_size=64
iterations=1000
checkpoint_every=250
schedule.initial_lr=1e-3
schedule.num_halvings=0
""")
        result = run_training(cfg)
        history = np.asarray(result["history"])
        assert np.isfinite(history).all(), "NaN/Inf appeared in training"
        early = history[:10].mean()
        final = history[-1]
        assert final <= 0.5 * early, (
            f"loss at iteration 1000 is {final:.4f}, early average {early:.4f}")
        report(6, f"enhance trainability: {early:.3f} -> {final:.3f} "
                  f"({final / early:.1%} of the 10-iteration start)")


class TestCriterion7ScheduleConformance:
    def test_paper_breakpoints_exact(self):
        sched = Schedule(initial_lr=1e-4, halve_every=100_000, num_halvings=4)
        assert lr_at(sched, 0) == 1e-4
        assert lr_at(sched, 99_999) == 1e-4
        assert lr_at(sched, 100_000) == 5e-5
        assert lr_at(sched, 200_000) == 2.5e-5
        assert lr_at(sched, 300_000) == 1.25e-5
        assert lr_at(sched, 400_000) == 6.25e-6
        assert lr_at(sched, 1_000_000) == 6.25e-6
        report(7, "lr 1e-4 -> 5e-5 -> ... -> 6.25e-6, capped at 4 halvings")


class TestCriterion8DeterminismSerialization:
    def test_determinism_and_weight_container(self, tmp_path):
        def run_once(out):
            data = tmp_path / "data"
            if not data.exists():
                data.mkdir()
                save_image(data / "img.png", natural_image(48, 48, seed=40))
            cfg = parse_config(f"""
model.mode=super_resolution
data_dir={data}
out_dir={out}
batch_size=1
patch_size=48
iterations=6
checkpoint_every=3
schedule.initial_lr=1e-3
""")
            return run_training(cfg)["weights"]

        w1 = run_once(tmp_path / "run1")
        w2 = run_once(tmp_path / "run2")
        blob1 = open(w1, "rb").read()
        assert blob1 == open(w2, "rb").read(), "two identical runs differ"

        loaded = load_weights(w1)
        reread = load_weights(w1)
        for name in loaded:
            assert np.array_equal(loaded[name], reread[name])

        corrupted = bytearray(blob1)
        corrupted[-100] ^= 0x01  # payload byte near the tail
        bad = tmp_path / "bad.dmw"
        bad.write_bytes(bytes(corrupted))
        from densemod.weights import WeightFileError
        with pytest.raises(WeightFileError):
            load_weights(bad)
        report(8, "bit-identical runs; round trip exact; CRC corruption detected")


class TestCriterion9DegradationSanity:
    def test_degradation_sanity(self):
        img = natural_image(64, 64, seed=3)
        tensor = Tensor(img)
        values = [M.psnr(D.jpeg_degrade(tensor, q).data, img)
                  for q in (10, 20, 50, 90)]
        for lo, hi in zip(values, values[1:]):
            assert lo <= hi, f"PSNR not monotone in quality: {values}"

        null_spec = D.DegradationSpec(mode="oldphoto", fade_strength=(0, 0),
                                      saturation_shift=(1, 1), noise_sigma=(0, 0))
        out = D.oldphoto_degrade(tensor, null_spec, np.random.default_rng(0))
        assert np.abs(out.data - img).max() < 1e-6

        for mode in ("sr", "enhance", "oldphoto"):
            for seed in range(3):
                hr = Tensor(natural_image(32, 32, seed=seed + 50))
                degraded, _ = D.make_pair(hr, D.DegradationSpec(mode=mode),
                                          np.random.default_rng(seed))
                assert degraded.data.min() >= 0.0
                assert degraded.data.max() <= 1.0
        report(9, f"jpeg PSNR monotone {['%.1f' % v for v in values]}; "
                  f"oldphoto null identity; outputs in [0,1]")
