import itertools

import numpy as np
import pytest

from src.config import EncoderConfig, Method, ModelConfig, PromptConfig
from src.encoders import DualEncoder, ParameterStore, VideoBatch, encode_tokens
from src.errors import ConfigError, ContractError
from src.numcore import DiffArray, Rng, backward, normalize
from src.prompting import (
    BASIS_NAME,
    PROMPT_METHODS,
    ModalityAdapter,
    PromptBasis,
    PromptingMethod,
    SamplerState,
    SynthesisQuery,
    cmm_generate,
    cmm_hidden,
    cmm_shapes,
    cmm_weights,
    count_params,
    ego_vpa_video_weights,
    gather_selection,
    mixture_distribution,
    orth_penalty,
    orthonormal_rows,
    parse_method,
    recon_loss,
    reconstruct,
    select_sampled,
    select_topk,
    syn_loss,
    synthesize,
)


def make_basis(B, d_f, seed=0):
    return PromptBasis(DiffArray(orthonormal_rows(B, d_f, Rng(seed)), requires_grad=True))


def unit_queries(rng, *shape):
    return normalize(DiffArray(rng.normal(shape)))


def lstsq_residual(rows, target):
    coef = np.linalg.lstsq(rows.T, target, rcond=None)[0]
    return float(np.sum((rows.T @ coef - target) ** 2))


class TestBasis:
    def test_rows_are_orthonormal(self):
        F = orthonormal_rows(6, 10, Rng(1))
        np.testing.assert_allclose(F @ F.T, np.eye(6), atol=1e-12)

    def test_renormalize_restores_unit_rows(self):
        basis = make_basis(4, 6)
        basis.F.values[2] *= 3.0
        basis.renormalize()
        np.testing.assert_allclose(np.linalg.norm(basis.F.values, axis=1), 1.0)

    def test_counts_and_histogram(self):
        basis = make_basis(3, 4)
        basis.record(np.array([[0, 2], [2, 1]]))
        assert basis.histogram() == {"0": 1, "1": 1, "2": 2}
        basis.reset_counts()
        assert basis.counts.sum() == 0


class TestTopkSelection:
    def test_matches_exhaustive_search(self, rng):
        B, d_f, k = 7, 9, 3
        basis = make_basis(B, d_f)
        F = basis.F.values
        for _ in range(20):
            hz = unit_queries(rng, d_f)
            chosen = select_topk(hz, basis, k)
            best = min(lstsq_residual(F[list(s)], hz.values) for s in itertools.combinations(range(B), k))
            got = recon_loss(hz, chosen, basis).item() ** 2
            assert got == pytest.approx(best, abs=1e-10)

    def test_energy_identity(self, rng):
        basis = make_basis(6, 8)
        hz = unit_queries(rng, 5, 8)
        sel = select_topk(hz, basis, 3)
        residual = recon_loss(hz, sel, basis).values
        np.testing.assert_allclose(
            (sel.alpha.values ** 2).sum(axis=-1) + residual ** 2, np.ones(5), atol=1e-10
        )

    def test_ties_go_to_lowest_index(self):
        basis = PromptBasis(DiffArray(np.eye(4)))
        hz = DiffArray(np.full(4, 0.5))
        assert select_topk(hz, basis, 2).indices.tolist() == [0, 1]

    def test_signed_rule_ignores_negative_alignment(self):
        basis = PromptBasis(DiffArray(np.eye(3)))
        hz = DiffArray(np.array([-0.9, 0.3, 0.1]))
        assert select_topk(hz, basis, 1, rule="magnitude").indices.tolist() == [0]
        assert select_topk(hz, basis, 1, rule="signed").indices.tolist() == [1]

    def test_counts_change_only_when_training(self, rng):
        basis = make_basis(5, 6)
        hz = unit_queries(rng, 4, 6)
        select_topk(hz, basis, 2)
        assert basis.counts.sum() == 0
        select_topk(hz, basis, 2, training=True)
        assert basis.counts.sum() == 8

    def test_full_basis_reconstructs_exactly(self, rng):
        basis = make_basis(6, 6)
        hz = unit_queries(rng, 3, 6)
        sel = select_topk(hz, basis, 6)
        np.testing.assert_allclose(reconstruct(sel, basis).values, hz.values, atol=1e-10)

    def test_selection_matrix_is_one_hot(self, rng):
        basis = make_basis(5, 6)
        sel = select_topk(unit_queries(rng, 6), basis, 2)
        A = sel.A
        assert A.shape == (5, 2)
        assert A.sum(axis=0).tolist() == [1.0, 1.0]
        assert np.argmax(A, axis=0).tolist() == sel.indices.tolist()

    @pytest.mark.parametrize("scale", [0.25, 3.0, -2.0])
    def test_scaling_the_query_scales_alpha(self, rng, scale):
        basis = make_basis(6, 8)
        hz = unit_queries(rng, 5, 8)
        base = select_topk(hz, basis, 3)
        scaled = select_topk(DiffArray(scale * hz.values), basis, 3)
        np.testing.assert_array_equal(scaled.indices, base.indices)
        np.testing.assert_allclose(scaled.alpha.values, scale * base.alpha.values, atol=1e-12)

    def test_gradients_reach_basis_and_query(self, rng):
        basis = make_basis(5, 6)
        hz = DiffArray(rng.normal(6), requires_grad=True)
        sel = gather_selection(hz, basis, np.array([1, 3]))
        backward(recon_loss(hz, sel, basis))
        assert hz.grad is not None and np.abs(basis.F.grad).sum() > 0
        assert np.all(basis.F.grad[[0, 2, 4]] == 0.0)


class TestSynthesisLoss:
    def test_orth_penalty_zero_for_orthonormal_basis(self):
        assert orth_penalty(make_basis(4, 6)).item() == pytest.approx(0.0, abs=1e-20)

    def test_orth_penalty_variants(self):
        basis = PromptBasis(DiffArray(np.array([[1.0, 0.0], [0.6, 0.8]])))
        assert orth_penalty(basis, "squared").item() == pytest.approx(2 * 0.36)
        assert orth_penalty(basis, "signed").item() == pytest.approx(1.2)

    def test_syn_loss_needs_queries(self):
        with pytest.raises(ContractError):
            syn_loss([], [], make_basis(3, 4))

    def test_syn_loss_is_mean_residual_plus_orth(self, rng):
        basis = make_basis(5, 6)
        video_hz = unit_queries(rng, 3, 2, 6)
        text_hz = unit_queries(rng, 3, 6)
        video = SynthesisQuery("video", 0, video_hz, select_topk(video_hz, basis, 2))
        text = SynthesisQuery("text", 0, text_hz, select_topk(text_hz, basis, 2))
        expected = (
            recon_loss(video_hz, video.selection, basis).values.sum(axis=-1)
            + recon_loss(text_hz, text.selection, basis).values
        ).mean()
        assert syn_loss([video], [text], basis, orth_constraint=False).item() == pytest.approx(expected)


class TestGenerators:
    def test_synthesize_shape(self, rng):
        basis = make_basis(5, 4)
        adapter = ModalityAdapter("video", DiffArray(rng.normal((12, 4))), DiffArray(rng.normal((4, 12))))
        sel = select_topk(unit_queries(rng, 2, 3, 4), basis, 2)
        assert synthesize(sel, basis, adapter).shape == (2, 3, 2, 12)

    def test_cmm_shapes_and_batching(self, rng):
        store = ParameterStore()
        store.create(cmm_shapes(6, 3, 2), rng)
        contexts = DiffArray(rng.normal((2, 3, 6)))
        batched = cmm_generate(contexts, store, 2)
        single = cmm_generate(contexts[1], store, 2)
        assert batched.shape == (2, 3, 2, 6)
        np.testing.assert_allclose(single.values, batched.values[1])

    def test_cmm_prompts_depend_on_every_frame(self, rng):
        store = ParameterStore()
        store.create(cmm_shapes(4, 3, 1), rng)
        contexts = rng.normal((1, 3, 4))
        moved = contexts.copy()
        moved[0, 2] += 1.0
        first = cmm_generate(DiffArray(contexts), store, 1).values[0, 0]
        first_moved = cmm_generate(DiffArray(moved), store, 1).values[0, 0]
        assert not np.allclose(first, first_moved)

    def test_cmm_directions_mirror_each_other(self, rng):
        store = ParameterStore()
        store.create(cmm_shapes(4, 5, 1), rng)
        for kind in ("w_ih", "w_hh", "bias"):
            store[f"cmm.bwd.{kind}"].values[...] = store[f"cmm.fwd.{kind}"].values
        contexts = rng.normal((2, 5, 4))
        fwd_reversed, _ = cmm_hidden(DiffArray(contexts[:, ::-1].copy()), store)
        _, bwd = cmm_hidden(DiffArray(contexts), store)
        np.testing.assert_allclose(fwd_reversed.values[:, ::-1], bwd.values, atol=1e-12)


class TestMethods:
    def attach(self, make_config, method, **prompting):
        cfg = make_config(method)
        if prompting:
            cfg = cfg.model_copy(update={"prompting": cfg.prompting.model_copy(update=prompting)})
        encoder = DualEncoder.initialize(cfg.encoder, Rng(0))
        return cfg, encoder, PromptingMethod.attach(cfg, encoder.store, Rng(0))

    def test_parse_method_lists_choices(self):
        with pytest.raises(ConfigError) as info:
            parse_method("lora")
        assert "ego-vpa" in info.value.message

    @pytest.mark.parametrize(
        "method,check",
        [
            ("zero-shot", lambda names: names == []),
            ("full", lambda names: names and all(n.startswith("backbone.") for n in names)),
            ("bias", lambda names: names and all(n.startswith("backbone.") and n.endswith(".bias") for n in names)),
            ("vpt", lambda names: names and all(n.startswith("prompts.video") for n in names)),
            ("vop-c", lambda names: any(n.startswith("cmm.") for n in names)),
            ("ego-vpa", lambda names: BASIS_NAME in names and not any(n.startswith("backbone.") for n in names)),
        ],
    )
    def test_trainable_sets(self, make_config, method, check):
        _, _, wired = self.attach(make_config, method)
        assert check(wired.trainable)

    def test_ego_vpa_traces_both_modalities(self, make_config, rng):
        cfg, encoder, wired = self.attach(make_config, "ego-vpa")
        enc = cfg.encoder
        pack = wired.build_pack(training=True, sampler=SamplerState(0.5, Rng(1)))
        encoder.encode_video(VideoBatch(rng.normal((3, enc.T, enc.N_p, enc.patch_dim))), pack)
        encoder.encode_text(encode_tokens([[5, 6], [7], [8, 9]], enc.N_w), pack)
        assert len(pack.video.queries) == enc.L
        assert len(pack.text.queries) == 1
        assert pack.video.queries[0].selection.indices.shape == (3, enc.T, cfg.prompting.top_k)
        loss = wired.synthesis_loss(pack)
        assert loss is not None and np.isfinite(loss.item())

    def test_sampled_queries_need_a_sampler(self, make_config):
        _, _, wired = self.attach(make_config, "ego-vpa")
        with pytest.raises(ContractError):
            wired.build_pack(training=True)

    def test_video_only_variant_keeps_static_text_prompts(self, make_config):
        _, _, wired = self.attach(make_config, "ego-vpa", cross_modal=False)
        assert "prompts.text" in wired.trainable
        assert not any(n.startswith("adapter.text") for n in wired.trainable)

    def test_baselines_have_no_synthesis_loss(self, make_config):
        _, _, wired = self.attach(make_config, "vop")
        assert wired.synthesis_loss(wired.build_pack()) is None

    def test_both_towers_share_one_basis(self, make_config):
        _, encoder, wired = self.attach(make_config, "ego-vpa")
        pack = wired.build_pack()
        assert pack.video.basis is wired.basis
        assert pack.text.basis is wired.basis
        assert wired.basis.F is encoder.store[BASIS_NAME]

    def test_synthesized_prompts_start_small(self, make_config, rng):
        cfg, encoder, wired = self.attach(make_config, "ego-vpa")
        enc = cfg.encoder
        pack = wired.build_pack()
        tokens = DiffArray(rng.normal((2, 1 + enc.T * enc.N_p, enc.d_vid)))
        prompts = pack.video.video_prompts(0, tokens).values
        assert prompts.shape == (2, enc.T, cfg.prompting.top_k, enc.d_vid)
        assert np.abs(prompts).max() < 10 * cfg.prompting.decoder_init_std
        assert np.std(encoder.store["adapter.video.h"].values) > 10 * cfg.prompting.decoder_init_std

    @pytest.mark.parametrize("method", sorted(m.value for m in PROMPT_METHODS))
    def test_no_prompts_is_bit_identical(self, make_config, rng, method):
        cfg, encoder, wired = self.attach(make_config, method, M_v=0, M_t=0)
        enc = cfg.encoder
        videos = VideoBatch(rng.normal((3, enc.T, enc.N_p, enc.patch_dim)))
        captions = encode_tokens([[5, 6], [7], [8, 9, 10]], enc.N_w)
        for training in (False, True):
            pack = wired.build_pack(training=training, sampler=SamplerState(0.5, Rng(1)))
            np.testing.assert_array_equal(
                encoder.encode_video(videos, pack).values, encoder.encode_video(videos).values
            )
            np.testing.assert_array_equal(
                encoder.encode_text(captions, pack).values, encoder.encode_text(captions).values
            )
            assert wired.synthesis_loss(pack) is None


class TestSampling:
    def test_draws_are_distinct(self):
        basis = make_basis(6, 4)
        hz = unit_queries(Rng(2), 50, 4)
        sel = select_sampled(hz, basis, 4, SamplerState(0.7, Rng(3)))
        for row in sel.indices:
            assert len(set(row.tolist())) == 4

    def test_counts_snapshot_is_used_per_call(self):
        basis = make_basis(4, 4)
        hz = unit_queries(Rng(2), 10, 4)
        select_sampled(hz, basis, 2, SamplerState(0.0, Rng(3)))
        assert basis.counts.sum() == 20

    def test_same_seed_same_draws(self):
        basis = make_basis(6, 4)
        hz = unit_queries(Rng(2), 8, 4)
        a = select_sampled(hz, basis, 3, SamplerState(0.5, Rng(9)), counts=np.zeros(6)).indices
        b = select_sampled(hz, basis, 3, SamplerState(0.5, Rng(9)), counts=np.zeros(6)).indices
        np.testing.assert_array_equal(a, b)

    def test_mixture_is_a_distribution(self, np_rng):
        scores = np.abs(np_rng.normal(size=(20, 7)))
        counts = np_rng.integers(0, 50, size=7)
        for gamma in np.linspace(0.0, 1.0, 11):
            for temperature in (0.05, 1.0, 4.0):
                probs = mixture_distribution(scores, counts, gamma, temperature)
                assert np.all(probs >= 0)
                np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-12)

    def test_sharpened_similarity_draws_the_top_k(self):
        basis = PromptBasis(DiffArray(np.eye(4)))
        hz = DiffArray(np.tile([0.8, 0.6, 0.0, 0.0], (10_000, 1)))
        sel = select_sampled(hz, basis, 2, SamplerState(1.0, Rng(4)), temperature=0.01, counts=np.zeros(4))
        hits = np.all(np.sort(sel.indices, axis=1) == [0, 1], axis=1)
        assert 1.0 - hits.mean() < 0.01

    def test_inverse_frequency_avoids_the_busy_row(self):
        basis = PromptBasis(DiffArray(np.eye(6)))
        hz = unit_queries(Rng(5), 100_000, 6)
        counts = np.array([9, 0, 0, 0, 0, 0])
        sel = select_sampled(hz, basis, 1, SamplerState(0.0, Rng(6)), counts=counts)
        freq = np.bincount(sel.indices.reshape(-1), minlength=6)
        assert int(np.argmin(freq)) == 0
        assert freq[0] < 0.5 * freq[1:].min()


class TestAccounting:
    def test_paper_shaped_counts(self):
        cfg = ModelConfig(encoder=EncoderConfig.paper_shaped(), prompting=PromptConfig.paper_shaped())
        ego = count_params(cfg, Method.EGO_VPA).trainable_group_weights
        cmm = count_params(cfg, Method.VOP_C).trainable_group_weights
        assert ego["basis"] + ego["adapter.video"] == 791_552
        assert ego_vpa_video_weights(512, 10, 768) == 791_552
        assert cmm["cmm"] == 160_432_128
        assert cmm_weights(8, 16, 768) == 160_432_128

    def test_toy_scale_fractions(self):
        cfg = ModelConfig()
        ego = count_params(cfg, "ego-vpa")
        vop_c = count_params(cfg, "vop-c")
        assert ego.fraction < 0.02
        assert vop_c.trainable >= 5 * ego.trainable

    def test_zero_shot_and_full(self):
        cfg = ModelConfig()
        assert count_params(cfg, "zero-shot").trainable == 0
        full = count_params(cfg, "full")
        assert full.trainable == full.total
