"""
Validating predictions on security news reports
===============================================

Runs the four validation methods over the sample reports: manual
annotations (M1), the score threshold (M2), similarity to the first
mentioned CVE's description (M3), and similarity to the concatenation
of every mentioned description (M4), plus the exact-match partition.
"""

import tempfile
from pathlib import Path

from cvelink import corpus, validate
from cvelink.embedder import DeterministicBackend, embed_corpus, load_cached_vectors
from cvelink.index import VectorIndex, rank_top_k
from cvelink.news import load_reports
from cvelink.textprep import normalize

DATA = Path(__file__).resolve().parents[1] / "sample_data"
work = Path(tempfile.mkdtemp(prefix="cvelink-demo-"))

cves, _ = corpus.parse_cve_records(DATA / "cves.jsonl")
reports = load_reports(DATA / "reports.jsonl")
for r in reports:
    print(f"{r.report_id:<22} mentions {r.mentioned_cves or 'nothing'}")

backend = DeterministicBackend(seed=0)
embed_corpus(backend, cves, work / "cache.bin")
ids, vectors = load_cached_vectors(work / "cache.bin", cves)
index = VectorIndex(ids, vectors)

# Rank the whole corpus for each report; with ten records, k=10 keeps
# every candidate visible to the validators.
queries = backend.encode([normalize(r.text) for r in reports])
predictions = {
    r.report_id: rank_top_k(queries[i], index, 10)
    for i, r in enumerate(reports)
}

rho = 0.58

# M1 counts majority verdicts from human annotators; a 1-1 split is a
# tie and an unlabeled prediction is a coverage gap, neither evaluated.
labels = validate.load_labels(DATA / "labels.csv")
m1 = validate.evaluate_m1(predictions, labels)
print(f"\nM1 (annotators): {m1.relevant}/{m1.evaluated} relevant, "
      f"{m1.ties} tie(s), {len(m1.coverage_gaps)} coverage gaps")

# M2 needs no references at all: a prediction is relevant when its
# score clears the threshold. The hash backend scores near zero, so
# nothing clears 0.58 here.
m2 = validate.evaluate_m2(predictions, rho)
print(f"M2 (threshold):  {m2.relevant}/{m2.evaluated} relevant at rho={rho}")

# M3 and M4 compare each prediction's description with a reference
# embedding derived from the report's own mentions; reports without
# mentions are excluded. A prediction that IS the mentioned record
# scores exactly 1.0 against its own description.
m3 = validate.evaluate_m3(predictions, reports, cves, backend, rho)
m4 = validate.evaluate_m4(predictions, reports, cves, backend, rho)
print(f"M3 (first mention):  {m3.relevant}/{m3.evaluated} relevant, "
      f"excluded {sorted(m3.excluded_reports)}")
print(f"M4 (all mentions):   {m4.relevant}/{m4.evaluated} relevant")

# The spooler report mentions two CVEs; under M3 only the first one is
# the reference, under M4 the concatenation no longer equals either
# description, so its verdicts flip to not_relevant.
print("\nspooler-worm verdicts, M3 vs M4:")
m4_verdicts = dict(m4.per_report["spooler-worm"])
for cve_id, verdict in m3.per_report["spooler-worm"]:
    if verdict == "relevant" or m4_verdicts[cve_id] == "relevant":
        print(f"  {cve_id:<16} M3={verdict:<13} M4={m4_verdicts[cve_id]}")

# Exact match asks a cruder question: did the ranked list contain any
# mentioned id at all?
exact = validate.exact_match_rate(predictions, reports)
print(f"\nexact match: {exact.matched} matched, {exact.unseen_only} unseen-only, "
      f"{exact.no_mentions} without mentions, of {exact.total}")

validate.write_outcomes_csv([m1, m2, m3, m4], work / "outcomes.csv")
print(f"wrote {work / 'outcomes.csv'}")
