"""Analytic-vs-finite-difference gradient checks for every differentiable
operation: the six loss terms, prior modulation, gated fusion, and both
decoders (through sampled weights)."""

import numpy as np
import pytest
import torch

from gradcheck import check_input_gradient, check_weight_gradients
from brightcolor.losses import (
    charbonnier,
    class_loss,
    l1_chroma,
    perceptual,
    ssim_loss,
    tv_loss,
)
from brightcolor.network import (
    ColorEmbed,
    ModelConfig,
    build_model,
    compute_priors,
    lam_apply,
)


@pytest.fixture()
def pair(rng):
    target = torch.from_numpy(rng.random((1, 1, 8, 8)))
    pred = torch.from_numpy(rng.random((1, 1, 8, 8)))
    return pred, target


class TestLossGradients:
    def test_charbonnier(self, pair):
        pred, target = pair
        check_input_gradient(lambda x: charbonnier(x, target), pred)

    def test_ssim(self, pair):
        # 8x8 inputs need a window smaller than the 11x11 default
        pred, target = pair
        check_input_gradient(lambda x: ssim_loss(x, target, win_size=7), pred)

    def test_tv(self, pair):
        pred, _ = pair
        check_input_gradient(tv_loss, pred)

    def test_l1_chroma(self, rng):
        pred = torch.from_numpy(rng.random((1, 2, 8, 8)))
        target = torch.from_numpy(rng.random((1, 2, 8, 8)))
        check_input_gradient(lambda x: l1_chroma(x, target), pred)

    def test_perceptual(self, rng):
        pred = torch.from_numpy(rng.random((1, 3, 8, 8)))
        target = torch.from_numpy(rng.random((1, 3, 8, 8)))
        check_input_gradient(lambda x: perceptual(x, target), pred)

    def test_class_loss_wrt_logits(self, rng):
        nbins = 17
        logits = torch.from_numpy(rng.standard_normal((1, nbins, 8, 8)))
        raw = rng.random((1, nbins, 8, 8))
        q = torch.from_numpy(raw / raw.sum(axis=1, keepdims=True))
        check_input_gradient(lambda x: class_loss(x, q), logits)


class TestModuleGradients:
    def test_lam_apply_wrt_features(self, rng):
        inv = torch.from_numpy(rng.random((1, 1, 8, 8)))
        edge = torch.from_numpy(rng.random((1, 1, 8, 8)))
        feat = torch.from_numpy(rng.random((1, 4, 8, 8)))
        weights = torch.from_numpy(rng.standard_normal((1, 4, 8, 8)))
        check_input_gradient(lambda x: (lam_apply(x, inv, edge) * weights).sum(), feat)

    def test_cem_wrt_inputs_and_weights(self, rng):
        torch.manual_seed(0)
        cem = ColorEmbed(4).double()
        f_l = torch.from_numpy(rng.standard_normal((1, 4, 8, 8)))
        f_c = torch.from_numpy(rng.standard_normal((1, 4, 8, 8)))
        proj = torch.from_numpy(rng.standard_normal((1, 4, 8, 8)))
        check_input_gradient(lambda x: (cem(x, f_c) * proj).sum(), f_l)
        check_weight_gradients(cem, lambda: (cem(f_l, f_c) * proj).sum(), n_params=4)


class TestDecoderGradients:
    """Whole-decoder weight gradients; 16x16 is the smallest input the
    four-scale pyramid admits (dims must divide by 16)."""

    @pytest.fixture()
    def setup(self, rng):
        torch.manual_seed(0)
        model = build_model(ModelConfig(base_channels=4)).double()
        L_in = torch.from_numpy(rng.random((1, 1, 16, 16)))
        C_in = torch.from_numpy(rng.random((1, 2, 16, 16)) * 2 - 1)
        inv, edge = compute_priors(L_in)
        return model, L_in, C_in, inv, edge

    def test_brighten_decoder_weights(self, setup, rng):
        model, L_in, C_in, inv, edge = setup
        proj = torch.from_numpy(rng.standard_normal((1, 1, 16, 16)))

        def loss_fn():
            L_pred, _, _ = model(L_in, C_in, inv, edge)
            return (L_pred * proj).sum()

        check_weight_gradients(model.brighten, loss_fn, n_params=5)

    def test_colorize_decoder_weights(self, setup, rng):
        model, L_in, C_in, inv, edge = setup
        proj_c = torch.from_numpy(rng.standard_normal((1, 2, 16, 16)))
        proj_q = torch.from_numpy(rng.standard_normal((1, 313, 4, 4)))

        def loss_fn():
            _, C_pred, q = model(L_in, C_in, inv, edge)
            return (C_pred * proj_c).sum() + 0.01 * (q * proj_q).sum()

        check_weight_gradients(model.colorize, loss_fn, n_params=5)

    def test_end_to_end_training_objective(self, setup, rng):
        # the composite objective through both decoders and the encoder
        model, L_in, C_in, inv, edge = setup
        L_act = torch.from_numpy(rng.random((1, 1, 16, 16)))
        C_act = torch.from_numpy(rng.random((1, 2, 16, 16)) * 0.5)
        nbins = 313
        raw = rng.random((1, nbins, 4, 4))
        q_act = torch.from_numpy(raw / raw.sum(axis=1, keepdims=True))

        def loss_fn():
            L_pred, C_pred, q = model(L_in, C_in, inv, edge)
            return (
                charbonnier(L_pred, L_act)
                + 0.1 * ssim_loss(L_pred, L_act, win_size=7)
                + 0.01 * tv_loss(L_pred)
                + l1_chroma(C_pred, C_act)
                + 0.01 * class_loss(q, q_act)
            )

        check_weight_gradients(model.encoder, loss_fn, n_params=3)
