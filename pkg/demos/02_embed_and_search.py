"""
Embedding a CVE corpus and ranking it against free text
=======================================================

Normalizes the record descriptions, embeds them with the deterministic
stand-in backend, persists the vectors to the binary container, and
ranks the whole index against a news-style query.

The deterministic backend hashes text into unit vectors, so scores are
reproducible bit for bit but carry no semantic signal; swap in the
remote or portable backend for real similarity.
"""

import tempfile
from pathlib import Path

from cvelink import corpus
from cvelink.embedder import DeterministicBackend, embed, embed_corpus, load_cached_vectors
from cvelink.index import VectorIndex, apply_threshold, load_index, rank_top_k, save_index
from cvelink.textprep import normalize

DATA = Path(__file__).resolve().parents[1] / "sample_data"
work = Path(tempfile.mkdtemp(prefix="cvelink-demo-"))

cves, _ = corpus.parse_cve_records(DATA / "cves.jsonl")
backend = DeterministicBackend(seed=0)

# Text cleanup happens before any embedding: lowercase, strip URLs and
# bracketed citation markers, drop characters outside the allow-list,
# collapse whitespace. Running it twice changes nothing.
sample = "Attackers [12] hit https://example.org/path with crafted headers!"
print("normalize steps on a sample sentence:")
print(f"  raw:     {sample!r}")
print(f"  cleaned: {normalize(sample)!r}")
assert normalize(normalize(sample)) == normalize(sample)

# Embed every record once; vectors land in an append-only cache keyed
# by record id plus a digest of the cleaned text, so a rerun reuses
# everything and a changed description re-embeds just that record.
report = embed_corpus(backend, cves, work / "cache.bin")
print(f"\nembedded {report.embedded}, reused {report.reused} "
      f"(cache at {work / 'cache.bin'})")

ids, vectors = load_cached_vectors(work / "cache.bin", cves)
index = VectorIndex(ids, vectors)
save_index(index, work / "index.bin")
index = load_index(work / "index.bin")
print(f"index holds {len(index)} unit vectors of width {index.vectors.shape[1]}")

# Rank the corpus against one query. Scores are cosine similarities in
# [-1, 1]; ties break by CVE id so rankings never depend on input order.
query_text = "remote attackers execute arbitrary commands through a crafted header"
query = embed(backend, normalize(query_text))
ranked = rank_top_k(query, index, 5)
print(f"\ntop 5 for: {query_text!r}")
for position, prediction in enumerate(ranked, start=1):
    print(f"  {position}. {prediction.cve_id:<16} {prediction.score:+.6f}")

# The acceptance threshold keeps scores at or above rho. With the
# hash backend nothing real crosses 0.58; lower it to see the filter.
for rho in (0.58, 0.02):
    kept = apply_threshold(ranked, rho)
    print(f"at rho={rho}: {len(kept)} of {len(ranked)} predictions kept")
