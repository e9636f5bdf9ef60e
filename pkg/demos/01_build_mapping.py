"""
Building the attack-to-CVE mapping from the three catalogs
==========================================================

Walks the sample catalogs from attack entries through weakness and
pattern references down to concrete CVE records, then prints what got
linked, what stayed unlinked, and which references dangled.
"""

from pathlib import Path

from cvelink import corpus

DATA = Path(__file__).resolve().parents[1] / "sample_data"

# Each catalog is a line-oriented JSON file with a versioned header.
attacks, skipped_a = corpus.parse_attack_catalog(DATA / "attacks.jsonl")
weaknesses, skipped_w = corpus.parse_weakness_catalog(DATA / "weaknesses.jsonl")
cves, skipped_c = corpus.parse_cve_records(DATA / "cves.jsonl")
print(f"parsed {len(attacks)} attack entries, {len(weaknesses)} weaknesses, "
      f"{len(cves)} CVE records")

# The traversal follows references forward: an attack entry may point at
# another attack entry (one hop at most), at a pattern, at a weakness,
# or directly at a CVE. References to ids absent from the catalogs are
# collected as dangling links instead of failing the build.
mapping, dangling = corpus.build_mapping(attacks, weaknesses, cves)

print("\nresolved mapping:")
for attack_id in sorted(mapping.entries):
    linked = ", ".join(sorted(mapping.entries[attack_id]))
    print(f"  {attack_id:<12} -> {linked}")

print("\ndangling references (kept out of the mapping, reported for triage):")
for link in dangling:
    print(f"  {link.source_id} -> {link.target_id}")

# Coverage per layer. A tactic usually reaches CVEs only through the
# techniques it references, so its linked share tracks theirs.
stats = corpus.mapping_stats(mapping, attacks)
print("\ncoverage by layer:")
for layer in corpus.Layer:
    s = stats[layer]
    print(f"  {layer.value:<15} {s.linked}/{s.total} linked")

# The same walk, spelled out for one technique: T1190 reaches
# CVE-2019-19781 directly and CVE-2017-8917 through CAPEC-66 -> CWE-89.
print("\nwhy T1190 maps where it does:")
t1190 = next(a for a in attacks if a.attack_id == "T1190")
print(f"  direct references: {sorted(t1190.related_ids)}")
print(f"  resolved CVE set:  {sorted(mapping.entries['T1190'])}")
