"""Catalog parsing and mapping construction against hand-derived expectations.

The small graph's reachable sets were worked out on paper from the
link lists in conftest before the builder existed; the tests assert
those frozen sets exactly. An independent breadth-first re-traversal
cross-checks the builder on both the small and the large catalogs.
"""

from __future__ import annotations

import pytest

from cvelink import lineio
from cvelink.corpus import (
    AttackEntry,
    CveRecord,
    DanglingLink,
    Layer,
    WeaknessRecord,
    build_mapping,
    load_mapping,
    load_pairs,
    make_pair_dataset,
    mapping_stats,
    parse_attack_catalog,
    parse_cve_records,
    parse_weakness_catalog,
    save_mapping,
    save_pairs,
)
from cvelink.errors import EmptyCorpusError, IngestionError, SamplingError

# Reachable CVE sets for the small graph, derived by hand:
#   CAPEC-38 --CWE-427--> {CVE-2022-4826, CVE-2020-26284}
#   T1574.007 --CAPEC-38--> same two
#   TA0001 --intra hop T1574.007--> same two
#   S0001  --intra hop T1574.007--> same two
#   T1059 --CWE-78--> {CVE-2021-33742}
#   CAPEC-7 --CWE-89 (both directions)--> {CVE-2019-16759, CVE-2018-11776}
EXPECTED_SMALL = {
    "CAPEC-38": {"CVE-2022-4826", "CVE-2020-26284"},
    "T1574.007": {"CVE-2022-4826", "CVE-2020-26284"},
    "TA0001": {"CVE-2022-4826", "CVE-2020-26284"},
    "S0001": {"CVE-2022-4826", "CVE-2020-26284"},
    "T1059": {"CVE-2021-33742"},
    "CAPEC-7": {"CVE-2019-16759", "CVE-2018-11776"},
}


def reference_traversal(attacks, weaknesses, cves):
    """Independent re-traversal: stage-ordered breadth-first walks.

    Written against the link rules directly rather than reusing any
    builder internals, so agreement is meaningful.
    """
    attack_by_id = {a.attack_id: a for a in attacks}
    weakness_ids = {w.cwe_id for w in weaknesses}
    cve_ids = {c.cve_id for c in cves}
    cwe_to_cves = {}
    for c in cves:
        for w in c.cwe_ids:
            if w in weakness_ids:
                cwe_to_cves.setdefault(w, set()).add(c.cve_id)
    capec_inverse = {}
    for w in weaknesses:
        for cap in w.related_capec:
            target = attack_by_id.get(cap)
            if target is not None and target.layer is Layer.ATTACK_PATTERN:
                capec_inverse.setdefault(cap, set()).add(w.cwe_id)

    def is_attack_ref(ref):
        return (
            ref in attack_by_id
            and attack_by_id[ref].layer is not Layer.ATTACK_PATTERN
        ) or (
            ref.startswith(("TA", "T", "S", "G", "C"))
            and not ref.startswith(("CAPEC", "CWE", "CVE"))
        )

    def cves_of_pattern(capec_id):
        found = set()
        entry = attack_by_id.get(capec_id)
        if entry is None or entry.layer is not Layer.ATTACK_PATTERN:
            return found
        cwes = {r for r in entry.related_ids if r.startswith("CWE-")}
        cwes |= capec_inverse.get(capec_id, set())
        for w in cwes:
            found |= cwe_to_cves.get(w, set())
        found |= {r for r in entry.related_ids if r.startswith("CVE-") and r in cve_ids}
        return found

    def cves_of_entry(entry, allow_hop):
        found = set()
        for ref in entry.related_ids:
            if ref.startswith("CVE-"):
                if ref in cve_ids:
                    found.add(ref)
            elif ref.startswith("CWE-"):
                found |= cwe_to_cves.get(ref, set())
            elif ref.startswith("CAPEC-"):
                if entry.layer is not Layer.ATTACK_PATTERN:
                    found |= cves_of_pattern(ref)
            elif allow_hop and is_attack_ref(ref) and ref in attack_by_id:
                found |= cves_of_entry(attack_by_id[ref], allow_hop=False)
        if entry.layer is Layer.ATTACK_PATTERN:
            found |= cves_of_pattern(entry.attack_id)
        return found

    return {
        a.attack_id: cves_of_entry(a, allow_hop=True)
        for a in attacks
        if cves_of_entry(a, allow_hop=True)
    }


class TestBuildMapping:
    def test_small_graph_exact_sets(self, small_catalogs):
        attacks, weaknesses, cves = small_catalogs
        mapping, _ = build_mapping(attacks, weaknesses, cves)
        assert mapping.entries == EXPECTED_SMALL

    def test_agrees_with_reference_traversal_small(self, small_catalogs):
        attacks, weaknesses, cves = small_catalogs
        mapping, _ = build_mapping(attacks, weaknesses, cves)
        assert mapping.entries == reference_traversal(attacks, weaknesses, cves)

    def test_agrees_with_reference_traversal_large(self, coverage_catalogs):
        attacks, weaknesses, cves = coverage_catalogs
        mapping, dangling = build_mapping(attacks, weaknesses, cves)
        assert mapping.entries == reference_traversal(attacks, weaknesses, cves)
        assert dangling == []

    def test_every_mapped_id_exists(self, small_catalogs):
        attacks, weaknesses, cves = small_catalogs
        known_attacks = {a.attack_id for a in attacks}
        known_cves = {c.cve_id for c in cves}
        mapping, _ = build_mapping(attacks, weaknesses, cves)
        for attack_id, linked in mapping.entries.items():
            assert attack_id in known_attacks
            assert linked <= known_cves

    def test_include_unlinked(self, small_catalogs):
        attacks, weaknesses, cves = small_catalogs
        mapping, _ = build_mapping(attacks, weaknesses, cves, include_unlinked=True)
        assert set(mapping.entries) == {a.attack_id for a in attacks}
        assert mapping.entries["S0002"] == set()
        assert mapping.entries["T9999"] == set()

    def test_dangling_links_reported_not_fatal(self, small_catalogs):
        attacks, weaknesses, cves = small_catalogs
        _, dangling = build_mapping(attacks, weaknesses, cves)
        as_tuples = {(d.source_id, d.target_id) for d in dangling}
        assert ("T9999", "CAPEC-999") in as_tuples
        assert ("T9999", "CVE-1999-99999") in as_tuples
        assert ("CVE-2017-5638", "CWE-20") in as_tuples
        assert ("S0002", "XYZ-1") in as_tuples

    def test_taxonomy_backlink_not_followed_beyond_pattern(self):
        # A pattern's reference back into technique space must not pull
        # in that technique's other CVEs when reached through a chain.
        attacks = [
            AttackEntry("T2000", Layer.TECHNIQUE, "start", frozenset(["CAPEC-9"])),
            AttackEntry("CAPEC-9", Layer.ATTACK_PATTERN, "pattern",
                        frozenset(["T2001"])),
            AttackEntry("T2001", Layer.TECHNIQUE, "other",
                        frozenset(["CVE-2020-11111"])),
        ]
        cves = [CveRecord("CVE-2020-11111", "text", frozenset())]
        mapping, _ = build_mapping(attacks, [], cves)
        assert "T2000" not in mapping.entries  # nothing reachable forward
        assert mapping.entries.get("T2001") == {"CVE-2020-11111"}

    def test_single_intra_hop_only(self):
        attacks = [
            AttackEntry("S0100", Layer.PROCEDURE, "p", frozenset(["T3000"])),
            AttackEntry("T3000", Layer.TECHNIQUE, "t1", frozenset(["T3001"])),
            AttackEntry("T3001", Layer.TECHNIQUE, "t2",
                        frozenset(["CVE-2020-22222"])),
        ]
        cves = [CveRecord("CVE-2020-22222", "text", frozenset())]
        mapping, _ = build_mapping(attacks, [], cves)
        # S0100 -> T3000 uses the one allowed hop; T3000 -> T3001 would
        # be a second and is not taken.
        assert "S0100" not in mapping.entries
        assert mapping.entries.get("T3000") == {"CVE-2020-22222"}


class TestMappingStats:
    def test_small_graph(self, small_catalogs):
        attacks, weaknesses, cves = small_catalogs
        mapping, _ = build_mapping(attacks, weaknesses, cves)
        stats = mapping_stats(mapping, attacks)
        assert stats[Layer.TACTIC].total == 1
        assert stats[Layer.TACTIC].linked == 1
        assert stats[Layer.TECHNIQUE].total == 3
        assert stats[Layer.TECHNIQUE].linked == 2
        assert stats[Layer.PROCEDURE].total == 2
        assert stats[Layer.PROCEDURE].linked == 1
        assert stats[Layer.ATTACK_PATTERN].total == 2
        assert stats[Layer.ATTACK_PATTERN].linked == 2
        assert stats[Layer.TECHNIQUE].unlinked == 1

    def test_constructed_coverage_counts(self, coverage_catalogs):
        attacks, weaknesses, cves = coverage_catalogs
        mapping, _ = build_mapping(attacks, weaknesses, cves)
        stats = mapping_stats(mapping, attacks)
        assert (stats[Layer.TACTIC].total, stats[Layer.TACTIC].linked) == (14, 11)
        assert (stats[Layer.TECHNIQUE].total, stats[Layer.TECHNIQUE].linked) == (625, 100)
        assert (stats[Layer.PROCEDURE].total, stats[Layer.PROCEDURE].linked) == (809, 721)
        assert (stats[Layer.ATTACK_PATTERN].total, stats[Layer.ATTACK_PATTERN].linked) == (559, 86)


class TestParsers:
    def test_cve_example_record(self, small_catalog_files):
        _, _, cve_path = small_catalog_files
        records, skipped = parse_cve_records(cve_path)
        assert skipped == 0
        by_id = {r.cve_id: r for r in records}
        rec = by_id["CVE-2022-4826"]
        assert "stored cross-site scripting" in rec.description
        assert rec.cwe_ids == {"CWE-427"}

    def test_attack_example_entry(self, small_catalog_files):
        attack_path, _, _ = small_catalog_files
        entries, skipped = parse_attack_catalog(attack_path)
        assert skipped == 0
        by_id = {e.attack_id: e for e in entries}
        entry = by_id["CAPEC-38"]
        assert entry.layer is Layer.ATTACK_PATTERN
        assert "T1574.007" in entry.related_ids

    def test_malformed_lines_skipped_and_counted(self, tmp_path):
        path = tmp_path / "cves.jsonl"
        path.write_text(
            lineio.header_line("cve-catalog") + "\n"
            + '{"id": "CVE-2021-1111", "description": "fine", "links": []}\n'
            + "not json at all\n"
            + '{"id": "not-a-cve", "description": "bad id", "links": []}\n'
            + '{"id": "CVE-2021-2222", "description": "   ", "links": []}\n'
            + '{"id": "CVE-2021-3333", "description": "ok", "links": "CWE-1"}\n',
            encoding="utf-8",
        )
        records, skipped = parse_cve_records(path)
        assert [r.cve_id for r in records] == ["CVE-2021-1111"]
        assert skipped == 4

    def test_duplicate_keeps_first_and_warns(self, tmp_path, caplog):
        path = tmp_path / "cves.jsonl"
        path.write_text(
            lineio.header_line("cve-catalog") + "\n"
            + '{"id": "CVE-2021-1111", "description": "first", "links": []}\n'
            + '{"id": "CVE-2021-1111", "description": "second", "links": []}\n',
            encoding="utf-8",
        )
        with caplog.at_level("WARNING"):
            records, skipped = parse_cve_records(path)
        assert len(records) == 1
        assert records[0].description == "first"
        assert skipped == 1
        assert any("duplicate" in r.message for r in caplog.records)

    def test_empty_corpus_is_an_error(self, tmp_path):
        path = tmp_path / "cves.jsonl"
        path.write_text(lineio.header_line("cve-catalog") + "\n", encoding="utf-8")
        with pytest.raises(EmptyCorpusError):
            parse_cve_records(path)

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "cves.jsonl"
        path.write_text('{"id": "CVE-2021-1111", "description": "x", "links": []}\n',
                        encoding="utf-8")
        with pytest.raises(IngestionError, match="header"):
            parse_cve_records(path)

    def test_newer_version_names_both(self, tmp_path):
        path = tmp_path / "cves.jsonl"
        path.write_text("#cvelink/cve-catalog v7\n", encoding="utf-8")
        with pytest.raises(IngestionError) as excinfo:
            parse_cve_records(path)
        assert "v7" in str(excinfo.value) and "v1" in str(excinfo.value)

    def test_undecodable_stream_reports_byte_offset(self, tmp_path):
        path = tmp_path / "cves.jsonl"
        good = (lineio.header_line("cve-catalog") + "\n").encode("utf-8")
        payload = good + b'{"id": "CVE-2021-1111", "desc\xff\xfe": 1}\n'
        path.write_bytes(payload)
        with pytest.raises(IngestionError) as excinfo:
            parse_cve_records(path)
        assert excinfo.value.byte_offset == payload.index(b"\xff")

    def test_unknown_layer_tag_is_fatal_and_named(self, tmp_path):
        path = tmp_path / "attacks.jsonl"
        path.write_text(
            lineio.header_line("attack-catalog") + "\n"
            + '{"id": "T1059", "layer": "technique", "description": "x", "links": []}\n'
            + '{"id": "T1060", "layer": "subroutine", "description": "y", "links": []}\n',
            encoding="utf-8",
        )
        with pytest.raises(IngestionError, match="T1060"):
            parse_attack_catalog(path)

    def test_layer_id_syntax_mismatch_skipped(self, tmp_path):
        path = tmp_path / "attacks.jsonl"
        path.write_text(
            lineio.header_line("attack-catalog") + "\n"
            + '{"id": "CAPEC-1", "layer": "technique", "description": "x", "links": []}\n'
            + '{"id": "T1059", "layer": "technique", "description": "y", "links": []}\n',
            encoding="utf-8",
        )
        entries, skipped = parse_attack_catalog(path)
        assert [e.attack_id for e in entries] == ["T1059"]
        assert skipped == 1

    def test_weakness_parse(self, small_catalog_files):
        _, weakness_path, _ = small_catalog_files
        records, skipped = parse_weakness_catalog(weakness_path)
        assert skipped == 0
        by_id = {r.cwe_id: r for r in records}
        assert by_id["CWE-89"].related_capec == {"CAPEC-7"}


class TestPersistence:
    def test_mapping_round_trip(self, tmp_path, small_catalogs):
        attacks, weaknesses, cves = small_catalogs
        mapping, _ = build_mapping(attacks, weaknesses, cves)
        path = tmp_path / "mapping.jsonl"
        save_mapping(mapping, path)
        loaded = load_mapping(path)
        assert loaded.entries == mapping.entries

    def test_pairs_round_trip(self, tmp_path, small_catalogs):
        attacks, weaknesses, cves = small_catalogs
        mapping, _ = build_mapping(attacks, weaknesses, cves)
        pairs = make_pair_dataset(mapping, attacks, cves, seed=3)
        path = tmp_path / "pairs.jsonl"
        save_pairs(pairs, path)
        assert load_pairs(path) == pairs


class TestPairDataset:
    def test_deterministic_under_seed(self, small_catalogs):
        attacks, weaknesses, cves = small_catalogs
        mapping, _ = build_mapping(attacks, weaknesses, cves)
        a = make_pair_dataset(mapping, attacks, cves, negatives_per_positive=2, seed=11)
        b = make_pair_dataset(mapping, attacks, cves, negatives_per_positive=2, seed=11)
        c = make_pair_dataset(mapping, attacks, cves, negatives_per_positive=2, seed=12)
        assert a == b
        assert a != c

    def test_label_ratio_exact(self, small_catalogs):
        attacks, weaknesses, cves = small_catalogs
        mapping, _ = build_mapping(attacks, weaknesses, cves)
        pairs = make_pair_dataset(mapping, attacks, cves, negatives_per_positive=2, seed=5)
        positives = [p for p in pairs if p.positive]
        negatives = [p for p in pairs if not p.positive]
        assert len(negatives) == 2 * len(positives)

    def test_positives_match_mapping_and_negatives_do_not(self, small_catalogs):
        attacks, weaknesses, cves = small_catalogs
        mapping, _ = build_mapping(attacks, weaknesses, cves)
        pairs = make_pair_dataset(mapping, attacks, cves, seed=5)
        for p in pairs:
            if p.positive:
                assert p.cve_id in mapping.entries[p.attack_id]
            else:
                assert p.cve_id not in mapping.entries[p.attack_id]

    def test_no_duplicate_pairs(self, small_catalogs):
        attacks, weaknesses, cves = small_catalogs
        mapping, _ = build_mapping(attacks, weaknesses, cves)
        pairs = make_pair_dataset(mapping, attacks, cves, negatives_per_positive=2, seed=5)
        keys = [(p.attack_id, p.cve_id) for p in pairs]
        assert len(keys) == len(set(keys))

    def test_texts_come_from_records(self, small_catalogs):
        attacks, weaknesses, cves = small_catalogs
        attack_text = {a.attack_id: a.description for a in attacks}
        cve_text = {c.cve_id: c.description for c in cves}
        mapping, _ = build_mapping(attacks, weaknesses, cves)
        for p in make_pair_dataset(mapping, attacks, cves, seed=5):
            assert p.attack_text == attack_text[p.attack_id]
            assert p.cve_text == cve_text[p.cve_id]

    def test_small_pool_raises(self, small_catalogs):
        attacks, weaknesses, cves = small_catalogs
        mapping, _ = build_mapping(attacks, weaknesses, cves)
        with pytest.raises(SamplingError):
            make_pair_dataset(mapping, attacks, cves, negatives_per_positive=5, seed=5)
