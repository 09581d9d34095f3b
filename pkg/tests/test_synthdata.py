import json

import numpy as np
import pytest

from src.config import GeneratorConfig
from src.errors import ChecksumError, ConfigError, DataError, TruncatedDataError, VersionMismatchError
from src.synthdata import (
    SPLITS,
    caption_words,
    dataset_checksums,
    generate,
    load_dataset,
    save_dataset,
    split_sizes,
    vocabulary,
)


class TestGenerator:
    def test_same_seed_same_bytes(self, tiny_data_config, tmp_path):
        a = save_dataset(generate(tiny_data_config), tmp_path / "a")
        b = save_dataset(generate(tiny_data_config), tmp_path / "b")
        assert dataset_checksums(a) == dataset_checksums(b)
        assert (a / "manifest.jsonl").read_bytes() == (b / "manifest.jsonl").read_bytes()

    def test_different_seed_different_data(self, tiny_data_config):
        other = generate(tiny_data_config.model_copy(update={"seed": 8}))
        base = generate(tiny_data_config)
        assert not np.array_equal(base.splits["pretrain"].video.patches, other.splits["pretrain"].video.patches)

    def test_split_sizes_cover_every_item(self, tiny_dataset, tiny_data_config):
        sizes = split_sizes(tiny_data_config)
        assert sum(sizes.values()) == tiny_data_config.n_items
        assert {name: len(tiny_dataset.splits[name]) for name in SPLITS} == sizes
        ids = np.concatenate([tiny_dataset.splits[name].item_ids for name in SPLITS])
        assert sorted(ids.tolist()) == list(range(tiny_data_config.n_items))

    def test_captions_name_the_item_concepts(self, tiny_dataset):
        vocab = tiny_dataset.vocab
        split = tiny_dataset.splits["adapt_train"]
        for i in range(len(split)):
            words = split.text.token_ids[i, 1 : 1 + split.text.lengths[i]]
            named = sorted(int(vocab[w][len("action"):]) for w in words if vocab[w].startswith("action"))
            assert named == sorted(split.concepts[i])
            assert split.labels[i].sum() == len(split.concepts[i])

    def test_caption_template(self):
        vocab = vocabulary(3)
        assert [vocab[w] for w in caption_words([0, 2], 3)] == [
            "person", "does", "action0", "and", "person", "does", "action2",
        ]

    def test_single_label_mode(self, tiny_data_config):
        dataset = generate(tiny_data_config.model_copy(update={"multilabel": False}))
        assert all(len(c) == 1 for c in dataset.splits["adapt_test"].concepts)
        assert not dataset.multilabel

    def test_pretraining_split_is_separable(self, tiny_dataset):
        assert tiny_dataset.separability is not None
        assert 0.0 <= tiny_dataset.separability <= 1.0

    @pytest.mark.parametrize(
        "update,field",
        [
            ({"labels_per_item": 5}, "labels_per_item"),
            ({"vocab": 6}, "vocab"),
            ({"N_w": 4}, "N_w"),
        ],
    )
    def test_infeasible_configs(self, tiny_data_config, update, field):
        with pytest.raises(ConfigError) as info:
            generate(tiny_data_config.model_copy(update=update))
        assert info.value.context["field"] == field

    def test_split_fractions_must_sum_to_one(self):
        with pytest.raises(ValueError):
            GeneratorConfig(split_fractions={"pretrain": 0.5, "adapt_train": 0.5, "adapt_val": 0.5, "adapt_test": 0.0})


class TestStorage:
    def test_round_trip(self, tiny_dataset, tiny_dataset_dir):
        loaded = load_dataset(tiny_dataset_dir)
        for name in SPLITS:
            original, restored = tiny_dataset.splits[name], loaded.splits[name]
            np.testing.assert_array_equal(original.video.patches, restored.video.patches)
            np.testing.assert_array_equal(original.text.token_ids, restored.text.token_ids)
            np.testing.assert_array_equal(original.labels, restored.labels)
            assert original.concepts == restored.concepts
        assert loaded.config == tiny_dataset.config

    def copy(self, source, target):
        target.mkdir()
        for path in source.iterdir():
            (target / path.name).write_bytes(path.read_bytes())
        return target

    def test_truncated_features(self, tiny_dataset_dir, tmp_path):
        path = self.copy(tiny_dataset_dir, tmp_path / "d")
        blob = path / "adapt_val.f32"
        blob.write_bytes(blob.read_bytes()[:-8])
        with pytest.raises(TruncatedDataError):
            load_dataset(path)

    def test_flipped_byte(self, tiny_dataset_dir, tmp_path):
        path = self.copy(tiny_dataset_dir, tmp_path / "d")
        blob = path / "pretrain.f32"
        data = bytearray(blob.read_bytes())
        data[0] ^= 0x01
        blob.write_bytes(bytes(data))
        with pytest.raises(ChecksumError):
            load_dataset(path)

    def test_unknown_version(self, tiny_dataset_dir, tmp_path):
        path = self.copy(tiny_dataset_dir, tmp_path / "d")
        manifest = path / "manifest.jsonl"
        lines = manifest.read_text().splitlines()
        header = json.loads(lines[0])
        header["version"] = 2
        manifest.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
        with pytest.raises(VersionMismatchError):
            load_dataset(path)

    def test_missing_item_records(self, tiny_dataset_dir, tmp_path):
        path = self.copy(tiny_dataset_dir, tmp_path / "d")
        manifest = path / "manifest.jsonl"
        manifest.write_text("\n".join(manifest.read_text().splitlines()[:-1]) + "\n")
        with pytest.raises(TruncatedDataError):
            load_dataset(path)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path / "nowhere")
