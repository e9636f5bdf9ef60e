"""Shared fixtures: small hand-checked catalogs and a large synthetic one.

The small graph is sized so every expected mapping entry can be derived
by eye; tests assert exact sets against it. The large catalogs exercise
layer statistics at realistic scale with exact, constructed counts.
"""

from __future__ import annotations

import pytest

from cvelink.corpus import AttackEntry, CveRecord, Layer, WeaknessRecord
from cvelink.embedder import DeterministicBackend
from cvelink.index import VectorIndex

from synthdata import _attack, build_coverage_catalogs, write_catalog_files


@pytest.fixture(scope="session")
def small_catalogs():
    """Hand-built graph; expected mappings are worked out in test_corpus."""
    attacks = [
        _attack("TA0001", Layer.TACTIC,
                "gain an initial foothold within a network", ["T1574.007"]),
        _attack("T1574.007", Layer.TECHNIQUE,
                "hijack execution flow by planting binaries in search path "
                "locations before the legitimate ones", ["CAPEC-38"]),
        _attack("T1059", Layer.TECHNIQUE,
                "abuse command and script interpreters to execute payloads",
                ["CWE-78"]),
        _attack("S0001", Layer.PROCEDURE,
                "dropper observed staging implants through path interception",
                ["T1574.007"]),
        _attack("S0002", Layer.PROCEDURE,
                "loader with no catalogued relationships", ["XYZ-1"]),
        _attack("CAPEC-38", Layer.ATTACK_PATTERN,
                "leveraging or manipulating configuration file search paths",
                ["CWE-427", "T1574.007"]),
        _attack("CAPEC-7", Layer.ATTACK_PATTERN,
                "blind sql injection probing of backend queries", ["CWE-89"]),
        _attack("T9999", Layer.TECHNIQUE,
                "technique citing identifiers missing from every catalog",
                ["CAPEC-999", "CVE-1999-99999"]),
    ]
    weaknesses = [
        WeaknessRecord("CWE-427", "uncontrolled search path element", frozenset()),
        WeaknessRecord("CWE-78", "improper neutralization of os command elements",
                       frozenset()),
        WeaknessRecord("CWE-89", "improper neutralization of sql elements",
                       frozenset(["CAPEC-7"])),
    ]
    cves = [
        CveRecord("CVE-2022-4826",
                  "a tooltip management plugin for wordpress does not sanitise "
                  "shortcode attributes allowing stored cross-site scripting",
                  frozenset(["CWE-427"])),
        CveRecord("CVE-2020-26284",
                  "a static site generator executes binaries from the current "
                  "working directory during source builds", frozenset(["CWE-427"])),
        CveRecord("CVE-2021-33742",
                  "a browser platform component writes out of bounds when "
                  "rendering crafted web content", frozenset(["CWE-78"])),
        CveRecord("CVE-2019-16759",
                  "a forum platform allows remote code execution through a "
                  "crafted template parameter", frozenset(["CWE-89"])),
        CveRecord("CVE-2018-11776",
                  "a web framework evaluates attacker-supplied namespace values "
                  "when none is configured", frozenset(["CWE-89"])),
        CveRecord("CVE-2017-5638",
                  "a multipart parser mishandles crafted content-type headers "
                  "during file upload", frozenset(["CWE-20"])),
    ]
    return attacks, weaknesses, cves


@pytest.fixture(scope="session")
def coverage_catalogs():
    return build_coverage_catalogs()


@pytest.fixture()
def det_backend():
    return DeterministicBackend(seed=0)


@pytest.fixture()
def small_index(det_backend, small_catalogs):
    _, _, cves = small_catalogs
    from cvelink.textprep import normalize

    ids = sorted(c.cve_id for c in cves)
    by_id = {c.cve_id: c.description for c in cves}
    vectors = det_backend.encode([normalize(by_id[i]) for i in ids])
    return VectorIndex(ids, vectors)


@pytest.fixture()
def small_catalog_files(tmp_path, small_catalogs):
    attacks, weaknesses, cves = small_catalogs
    return write_catalog_files(tmp_path, attacks, weaknesses, cves)
