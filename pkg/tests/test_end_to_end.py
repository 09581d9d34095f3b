"""Pretrain once on the default synthetic task, then adapt every method from it."""

import numpy as np
import pytest

from src.config import GeneratorConfig, ModelConfig, deep_merge, with_overrides
from src.synthdata import generate
from src.training import Trainer, build_model, to_checkpoint

pytestmark = pytest.mark.slow

ADAPTED = ("full", "bias", "tpt", "vpt", "vop", "vop-c", "vop-fc", "ego-vpa")


@pytest.fixture(scope="module")
def dataset():
    return generate(GeneratorConfig())


@pytest.fixture(scope="module")
def pretrained(dataset):
    cfg = with_overrides(ModelConfig(), {"train": {"method": "full", "phase": "pretrain"}})
    model, method = build_model(cfg)
    Trainer(cfg, model, method).fit(dataset.splits["pretrain"], None, dataset.class_texts(), dataset.multilabel)
    return to_checkpoint(cfg, model, method)


def adapt(dataset, checkpoint, method, overrides=None):
    cfg = with_overrides(ModelConfig(), deep_merge({"train": {"method": method}}, overrides or {}))
    model, wired = build_model(cfg, checkpoint)
    result = Trainer(cfg, model, wired).fit(
        dataset.splits["adapt_train"], dataset.splits["adapt_val"], dataset.class_texts(), dataset.multilabel
    )
    return wired, result


@pytest.fixture(scope="module")
def adapted(dataset, pretrained):
    runs = {}

    def run(method):
        if method not in runs:
            runs[method] = adapt(dataset, pretrained, method)
        return runs[method]

    return run


class TestDefaultAdaptation:
    def test_ego_vpa_ordering(self, adapted):
        mAP = {m: adapted(m)[1].metrics["mAP"] for m in ("zero-shot", "tpt", "vpt", "ego-vpa")}
        assert mAP["ego-vpa"] >= mAP["zero-shot"] + 0.10, mAP
        assert mAP["ego-vpa"] >= mAP["tpt"], mAP
        assert mAP["ego-vpa"] >= mAP["vpt"], mAP

    @pytest.mark.parametrize("method", ADAPTED)
    def test_training_loss_falls(self, adapted, method):
        losses = np.asarray(adapted(method)[1].step_losses)
        tail = max(1, len(losses) // 10)
        assert np.median(losses[-tail:]) < np.median(losses[:tail])

    def test_backbone_stays_frozen(self, adapted):
        _, result = adapted("ego-vpa")
        assert result.backbone_checksum_before == result.backbone_checksum_after


class TestBasisOrthogonality:
    def run(self, dataset, pretrained, orth_constraint):
        wired, result = adapt(
            dataset,
            pretrained,
            "ego-vpa",
            {"train": {"epochs": 25}, "prompting": {"orth_constraint": orth_constraint}},
        )
        assert len(result.step_losses) == 200
        return wired.basis

    def test_penalty_keeps_basis_near_orthonormal(self, dataset, pretrained):
        kept = self.run(dataset, pretrained, True)
        dropped = self.run(dataset, pretrained, False)
        np.testing.assert_allclose(np.linalg.norm(kept.F.values, axis=1), 1.0, atol=1e-9)
        assert kept.gram_offdiag_max() <= 0.1
        assert dropped.gram_offdiag_max() > kept.gram_offdiag_max()
