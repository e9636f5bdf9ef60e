"""Shared fixtures: a themed catalog corpus and one trained model.

The corpus gives every technique a distinct vocabulary theme shared
with exactly its linked CVEs, so linked pairs overlap lexically and
unlinked pairs do not. Training and export are expensive, so one run
with default hyperparameters is built once per session and inspected
by several tests.
"""

from __future__ import annotations

import json
from types import SimpleNamespace

import pytest

from cvelink import Mapping, save_mapping
from model_prep import (
    TrainConfig,
    build_training_pairs,
    fine_tune,
    init_base_model,
)

THEMES = (
    ("spooler", "printer", "driver", "queue", "rendering"),
    ("query", "database", "records", "statement", "injection"),
    ("buffer", "heap", "overflow", "bounds", "allocation"),
    ("kernel", "privilege", "token", "elevation", "syscall"),
    ("script", "interpreter", "shell", "command", "payload"),
    ("session", "cookie", "authentication", "bypass", "login"),
    ("firmware", "bootloader", "image", "signing", "flash"),
    ("archive", "parser", "decompression", "traversal", "extraction"),
    ("mail", "gateway", "filter", "attachment", "relay"),
    ("cache", "proxy", "header", "smuggling", "forwarding"),
)

NOISE_TEXTS = (
    "Scheduled maintenance window announced for the regional office network.",
    "Quarterly inventory of workstation assets completed without findings.",
    "New onboarding checklist published for contractor laptop provisioning.",
    "Cafeteria badge readers replaced during the facilities refresh project.",
    "Annual disaster recovery tabletop exercise scheduled for next month.",
    "Updated travel policy circulated to all engineering departments.",
    "Parking garage access hours extended for the holiday season.",
    "Office plants watering rotation assigned to the second floor team.",
    "Lobby signage refreshed with the new corporate color palette.",
    "Fitness room equipment serviced according to the vendor contract.",
)

CVES_PER_THEME = 5


def attack_text(theme_idx: int) -> str:
    words = " ".join(THEMES[theme_idx])
    return (f"Adversaries abuse the {words} subsystem to run code, "
            f"staging access through the {THEMES[theme_idx][0]} path.")


def cve_text(theme_idx: int, variant: int) -> str:
    words = " ".join(THEMES[theme_idx])
    return (f"Flaw {variant} in the {words} component lets a remote "
            f"attacker corrupt the {THEMES[theme_idx][variant % 5]} stage.")


def technique_id(theme_idx: int) -> str:
    return f"T1{theme_idx:03d}"


def cve_id(theme_idx: int, variant: int) -> str:
    return f"CVE-2024-{1000 + theme_idx * CVES_PER_THEME + variant:04d}"


def write_catalog(path, kind, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#cvelink/{kind} v1\n")
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def write_themed_corpus(root):
    """Ten techniques, five linked CVEs each, ten unlinked noise CVEs."""
    attack_rows = [
        {"id": technique_id(i), "layer": "technique",
         "description": attack_text(i), "links": []}
        for i in range(len(THEMES))
    ]
    cve_rows = [
        {"id": cve_id(i, v), "description": cve_text(i, v), "links": []}
        for i in range(len(THEMES)) for v in range(CVES_PER_THEME)
    ]
    cve_rows += [
        {"id": f"CVE-2024-{2000 + n:04d}", "description": text, "links": []}
        for n, text in enumerate(NOISE_TEXTS)
    ]
    write_catalog(root / "attacks.jsonl", "attack-catalog", attack_rows)
    write_catalog(root / "cves.jsonl", "cve-catalog", cve_rows)

    mapping = Mapping()
    for i in range(len(THEMES)):
        mapping.entries[technique_id(i)] = {
            cve_id(i, v) for v in range(CVES_PER_THEME)
        }
    save_mapping(mapping, root / "mapping.jsonl")
    return SimpleNamespace(
        attacks=root / "attacks.jsonl",
        cves=root / "cves.jsonl",
        mapping=root / "mapping.jsonl",
    )


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    return write_themed_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.fixture
def mini_corpus(tmp_path):
    """Two techniques with two linked CVEs each over an 8-CVE pool."""
    attack_rows = [
        {"id": f"T1{i:03d}", "layer": "technique",
         "description": f"technique {i} abuses exposed services", "links": []}
        for i in range(2)
    ]
    cve_rows = [
        {"id": f"CVE-2023-{100 + j:04d}",
         "description": f"flaw {j} in a network service", "links": []}
        for j in range(8)
    ]
    write_catalog(tmp_path / "attacks.jsonl", "attack-catalog", attack_rows)
    write_catalog(tmp_path / "cves.jsonl", "cve-catalog", cve_rows)
    mapping = Mapping()
    for i in range(2):
        mapping.entries[f"T1{i:03d}"] = {
            f"CVE-2023-{100 + i * 2 + k:04d}" for k in range(2)
        }
    save_mapping(mapping, tmp_path / "mapping.jsonl")
    return SimpleNamespace(
        attacks=tmp_path / "attacks.jsonl",
        cves=tmp_path / "cves.jsonl",
        mapping=tmp_path / "mapping.jsonl",
        root=tmp_path,
    )


@pytest.fixture(scope="session")
def corpus_texts():
    texts = [attack_text(i) for i in range(len(THEMES))]
    texts += [cve_text(i, v) for i in range(len(THEMES))
              for v in range(CVES_PER_THEME)]
    return texts + list(NOISE_TEXTS)


@pytest.fixture(scope="session")
def base_model_dir(tmp_path_factory, corpus_texts):
    out = tmp_path_factory.mktemp("base") / "encoder"
    return init_base_model(corpus_texts, out, vocab_size=800)


@pytest.fixture(scope="session")
def trained_run(tmp_path_factory, corpus, base_model_dir):
    """One full run at default hyperparameters, shared across tests."""
    config = TrainConfig(
        output_dir=str(tmp_path_factory.mktemp("run")), seed=7,
    )
    splits = build_training_pairs(corpus.mapping, corpus.attacks,
                                  corpus.cves, config)
    model_dir = fine_tune(splits, config, base_model_dir)
    return SimpleNamespace(splits=splits, config=config, model_dir=model_dir)
