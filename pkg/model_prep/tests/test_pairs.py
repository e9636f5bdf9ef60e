from pathlib import Path

import pytest

from cvelink import Mapping, load_mapping, load_pairs, save_mapping
from model_prep import (
    LABEL_NEGATIVE,
    LABEL_POSITIVE,
    TrainConfig,
    TrainingError,
    build_training_pairs,
    load_labeled_texts,
)


def rows_in(path) -> int:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return len(lines) - 1  # header


def pair_keys(path) -> set[tuple[str, str]]:
    return {(p.attack_id, p.cve_id) for p in load_pairs(path)}


def all_triples(splits):
    return (load_labeled_texts(splits.train)
            + load_labeled_texts(splits.val)
            + load_labeled_texts(splits.test))


def test_four_links_and_four_negatives_make_eight_pairs(mini_corpus):
    config = TrainConfig(output_dir=str(mini_corpus.root / "out"))
    splits = build_training_pairs(mini_corpus.mapping, mini_corpus.attacks,
                                  mini_corpus.cves, config)
    total = rows_in(splits.train) + rows_in(splits.val) + rows_in(splits.test)
    assert total == 8
    labels = [target for _, _, target in all_triples(splits)]
    assert labels.count(LABEL_POSITIVE) == 4
    assert labels.count(LABEL_NEGATIVE) == 4


def test_hundred_pairs_split_80_10_10(corpus, tmp_path):
    config = TrainConfig(output_dir=str(tmp_path / "out"))
    splits = build_training_pairs(corpus.mapping, corpus.attacks,
                                  corpus.cves, config)
    assert rows_in(splits.train) == 80
    assert rows_in(splits.val) == 10
    assert rows_in(splits.test) == 10


def test_same_seed_reproduces_identical_splits(corpus, tmp_path):
    outputs = []
    for run in ("first", "second"):
        config = TrainConfig(output_dir=str(tmp_path / run), seed=42)
        outputs.append(build_training_pairs(corpus.mapping, corpus.attacks,
                                            corpus.cves, config))
    first, second = outputs
    for name in ("train", "val", "test"):
        a = Path(getattr(first, name)).read_bytes()
        b = Path(getattr(second, name)).read_bytes()
        assert a == b, f"{name} split differs between identically seeded runs"


def test_splits_are_pairwise_disjoint(corpus, tmp_path):
    config = TrainConfig(output_dir=str(tmp_path / "out"), seed=42)
    splits = build_training_pairs(corpus.mapping, corpus.attacks,
                                  corpus.cves, config)
    train = pair_keys(splits.train)
    val = pair_keys(splits.val)
    test = pair_keys(splits.test)
    assert train & val == set()
    assert train & test == set()
    assert val & test == set()
    assert len(train | val | test) == 100


def test_different_seed_changes_the_shuffle(corpus, tmp_path):
    contents = []
    for seed in (1, 2):
        config = TrainConfig(output_dir=str(tmp_path / f"s{seed}"), seed=seed)
        splits = build_training_pairs(corpus.mapping, corpus.attacks,
                                      corpus.cves, config)
        contents.append(Path(splits.train).read_bytes())
    assert contents[0] != contents[1]


def test_targets_are_exactly_one_and_zero(corpus, tmp_path):
    config = TrainConfig(output_dir=str(tmp_path / "out"))
    splits = build_training_pairs(corpus.mapping, corpus.attacks,
                                  corpus.cves, config)
    assert {target for _, _, target in all_triples(splits)} == {1.0, 0.0}


def test_positive_targets_agree_with_the_mapping(corpus, tmp_path):
    config = TrainConfig(output_dir=str(tmp_path / "out"))
    splits = build_training_pairs(corpus.mapping, corpus.attacks,
                                  corpus.cves, config)
    mapping = load_mapping(corpus.mapping)
    for path in (splits.train, splits.val, splits.test):
        for pair in load_pairs(path):
            linked = pair.cve_id in mapping.entries[pair.attack_id]
            assert linked == pair.positive


def test_empty_mapping_is_an_error(mini_corpus):
    save_mapping(Mapping(), mini_corpus.root / "empty.jsonl")
    config = TrainConfig(output_dir=str(mini_corpus.root / "out"))
    with pytest.raises(TrainingError, match="no labeled pairs"):
        build_training_pairs(mini_corpus.root / "empty.jsonl",
                             mini_corpus.attacks, mini_corpus.cves, config)
