"""
Training an encoder on catalog pairs and swapping it into the search
=====================================================================

Runs the full training-side loop at desk scale: derive labeled pairs
from the sample catalogs, fine-tune a small randomly initialized
encoder with the cosine objective, export it to the portable format,
and rank the CVE corpus with the exported model through the same index
code the CLI uses.

The encoder here is fabricated from scratch (WordPiece tokenizer plus
one transformer layer) so the demo finishes in seconds on a laptop; a
pretrained checkpoint drops into the same `fine_tune` call unchanged.
"""

import json
import tempfile
from pathlib import Path

from cvelink import (
    PortableBackend,
    VectorIndex,
    build_mapping,
    corpus,
    normalize,
    rank_top_k,
    save_mapping,
)
from model_prep import (
    TrainConfig,
    build_training_pairs,
    export_portable_model,
    fine_tune,
    init_base_model,
)

DATA = Path(__file__).resolve().parents[1] / "sample_data"
work = Path(tempfile.mkdtemp(prefix="cvelink-train-"))

# Resolve the catalog graph into attack -> CVE links, exactly as the
# ingest command would, and persist the mapping for the pair builder.
attacks, _ = corpus.parse_attack_catalog(DATA / "attacks.jsonl")
weaknesses, _ = corpus.parse_weakness_catalog(DATA / "weaknesses.jsonl")
cves, _ = corpus.parse_cve_records(DATA / "cves.jsonl")
mapping, dangling = build_mapping(attacks, weaknesses, cves)
save_mapping(mapping, work / "mapping.jsonl")
print(f"mapping: {len(mapping.entries)} attacks linked, "
      f"{len(dangling)} dangling links")

# Pairs: every linked (attack, CVE) couple is a positive; one negative
# is drawn per positive from the unlinked remainder. The seed fixes the
# shuffle, so the train/val/test files are reproducible byte for byte.
config = TrainConfig(output_dir=str(work / "run"), epochs=2,
                     warmup_steps=4, eval_every=10, seed=11)
splits = build_training_pairs(work / "mapping.jsonl", DATA / "attacks.jsonl",
                              DATA / "cves.jsonl", config)
for name in ("train", "val", "test"):
    rows = len(Path(getattr(splits, name)).read_text().splitlines()) - 1
    print(f"  {name}: {rows} pairs")

# A desk-scale base encoder: tokenizer learned from the catalog texts,
# transformer weights random. Training pulls linked pairs together.
texts = [a.description for a in attacks] + [c.description for c in cves]
base = init_base_model(texts, work / "base", vocab_size=800)
model_dir = fine_tune(splits, config, base)
manifest = json.loads((Path(model_dir) / "run_manifest.json").read_text())
print(f"trained: epochs={manifest['epochs']} "
      f"batch_size={manifest['batch_size']} lr={manifest['learning_rate']} "
      f"optimizer={manifest['optimizer']}")
print(f"validation: {manifest['val_scores']}")

# Export traces the mean-pooling graph and verifies parity: the same
# probe sentences must embed identically on both sides of the fence.
portable = export_portable_model(model_dir)
print(f"exported to {portable}")

# The exported directory is a drop-in backend for the search pipeline.
backend = PortableBackend(portable)
ids = sorted(c.cve_id for c in cves)
by_id = {c.cve_id: c.description for c in cves}
vectors = backend.encode([normalize(by_id[i]) for i in ids])
index = VectorIndex(ids, vectors)

query = ("attackers ran arbitrary shell commands on the mail gateway "
         "through crafted environment variables")
print(f"\ntop matches for: {query!r}")
for pred in rank_top_k(backend.encode([normalize(query)])[0], index, 3):
    print(f"  {pred.cve_id}  score={pred.score:+.4f}")
