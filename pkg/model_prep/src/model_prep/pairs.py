"""Build labeled train/val/test pair files from catalog artifacts.

Positives are every (attack, linked CVE) pair the resolved mapping
names; negatives are drawn from the unlinked remainder. The files use
the same versioned JSONL pair format the cvelink corpus tools read and
write, so either side of the pipeline can inspect them.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass
from typing import Optional

from cvelink import (
    load_mapping,
    load_pairs,
    make_pair_dataset,
    parse_attack_catalog,
    parse_cve_records,
    save_pairs,
)

from .config import TrainConfig
from .errors import TrainingError

# numeric targets for the cosine objective; the pair files themselves
# carry the string labels of the shared format
LABEL_POSITIVE = 1.0
LABEL_NEGATIVE = 0.0

TRAIN_FILE = "train_pairs.jsonl"
VAL_FILE = "val_pairs.jsonl"
TEST_FILE = "test_pairs.jsonl"


@dataclass(frozen=True)
class SplitPaths:
    """Locations of the three split files; val/test may be absent."""

    train: str
    val: Optional[str] = None
    test: Optional[str] = None


def build_training_pairs(
    mapping_path,
    attacks_path,
    cves_path,
    config: TrainConfig,
    negatives_per_positive: int = 1,
) -> SplitPaths:
    """Derive labeled pairs and write the train/val/test files.

    The pair order is shuffled by ``config.seed`` before slicing, so a
    fixed seed always produces the same three files. Train and val get
    ``floor(n * ratio)`` pairs each; the remainder lands in test. No
    pair appears in more than one file.
    """
    mapping = load_mapping(mapping_path)
    attacks, _ = parse_attack_catalog(attacks_path)
    cves, _ = parse_cve_records(cves_path)
    pairs = make_pair_dataset(
        mapping, attacks, cves,
        negatives_per_positive=negatives_per_positive,
        seed=config.seed,
    )
    if not pairs:
        raise TrainingError(
            f"{os.fspath(mapping_path)}: mapping yields no labeled pairs"
        )
    random.Random(config.seed).shuffle(pairs)

    n = len(pairs)
    n_train = int(n * config.train_ratio)
    n_val = int(n * config.val_ratio)
    splits = {
        TRAIN_FILE: pairs[:n_train],
        VAL_FILE: pairs[n_train:n_train + n_val],
        TEST_FILE: pairs[n_train + n_val:],
    }
    os.makedirs(config.output_dir, exist_ok=True)
    for filename, chunk in splits.items():
        save_pairs(chunk, config.resolve(filename))
    return SplitPaths(
        train=config.resolve(TRAIN_FILE),
        val=config.resolve(VAL_FILE),
        test=config.resolve(TEST_FILE),
    )


def load_labeled_texts(path) -> list[tuple[str, str, float]]:
    """Read a pair file as (text_a, text_b, target) training triples."""
    return [
        (p.attack_text, p.cve_text,
         LABEL_POSITIVE if p.positive else LABEL_NEGATIVE)
        for p in load_pairs(path)
    ]
