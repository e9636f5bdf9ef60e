"""Catalog ingestion and attack-to-CVE mapping construction.

Three source corpora feed the mapping: an attack catalog (tactics,
techniques, procedures, attack patterns), a weakness catalog, and a
vulnerability corpus. Entries reference each other by id; the mapping
builder walks those references from each attack entry toward CVE
records and collects everything reachable.

Catalog files are JSON lines with a versioned header (see lineio).
Each record line is an object ``{"id", "layer"?, "description",
"links": [...]}``; vulnerability records omit ``layer``.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import random
import re
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

from . import lineio
from .errors import EmptyCorpusError, IngestionError, SamplingError

log = logging.getLogger(__name__)

CVE_ID = re.compile(r"CVE-\d{4}-\d{4,7}")
CWE_ID = re.compile(r"CWE-\d+")
CAPEC_ID = re.compile(r"CAPEC-\d+")
TACTIC_ID = re.compile(r"TA\d{4}")
TECHNIQUE_ID = re.compile(r"T\d{4}(?:\.\d{3})?")
PROCEDURE_ID = re.compile(r"[SGC]\d{4}")


class Layer(str, Enum):
    """Catalog layer an attack entry belongs to."""

    TACTIC = "tactic"
    TECHNIQUE = "technique"
    PROCEDURE = "procedure"
    ATTACK_PATTERN = "attack_pattern"


LAYER_ID_PATTERNS = {
    Layer.TACTIC: TACTIC_ID,
    Layer.TECHNIQUE: TECHNIQUE_ID,
    Layer.PROCEDURE: PROCEDURE_ID,
    Layer.ATTACK_PATTERN: CAPEC_ID,
}


@dataclass(frozen=True)
class CveRecord:
    cve_id: str
    description: str
    cwe_ids: frozenset[str]


@dataclass(frozen=True)
class AttackEntry:
    attack_id: str
    layer: Layer
    description: str
    related_ids: frozenset[str]


@dataclass(frozen=True)
class WeaknessRecord:
    cwe_id: str
    name: str
    related_capec: frozenset[str]


@dataclass(frozen=True)
class DanglingLink:
    """A reference whose target id exists in no loaded corpus."""

    source_id: str
    target_id: str


@dataclass
class Mapping:
    """attack_id -> set of linked CVE ids."""

    entries: dict[str, set[str]] = field(default_factory=dict)

    def lookup(self, attack_id: str) -> set[str]:
        return self.entries.get(attack_id, set())

    def linked_count(self) -> int:
        return sum(1 for v in self.entries.values() if v)


@dataclass(frozen=True)
class LabeledPair:
    attack_id: str
    cve_id: str
    attack_text: str
    cve_text: str
    positive: bool


@dataclass(frozen=True)
class LayerStats:
    total: int
    linked: int

    @property
    def unlinked(self) -> int:
        return self.total - self.linked


def _catalog_lines(path: str | os.PathLike, kind: str) -> Iterator[tuple[int, str]]:
    """Yield (byte_offset, decoded_line) for each record line of a catalog.

    Decoding failures surface as IngestionError carrying the byte offset,
    so a damaged dump can be located without guesswork.
    """
    path = os.fspath(path)
    with open(path, "rb") as fh:
        raw = fh.readline()
        if not raw:
            raise IngestionError(f"{path}: empty file, expected a {kind} header", byte_offset=0)
        try:
            first = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IngestionError(
                f"{path}: undecodable header bytes at offset {exc.start}",
                byte_offset=exc.start,
            ) from exc
        lineio.check_header(first, kind, path)
        offset = len(raw)
        for raw in fh:
            try:
                yield offset, raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                at = offset + exc.start
                raise IngestionError(
                    f"{path}: undecodable bytes at offset {at}", byte_offset=at
                ) from exc
            offset += len(raw)


def _record_fields(line: str) -> tuple[str, str, str | None, list[str]] | None:
    """Pull (id, description, layer, links) out of one catalog line.

    Returns None when the line is not a JSON object with a string id,
    a non-empty string description, and a list of string links.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict):
        return None
    entry_id = obj.get("id")
    description = obj.get("description")
    layer = obj.get("layer")
    links = obj.get("links", [])
    if not isinstance(entry_id, str) or not isinstance(description, str):
        return None
    if not description.strip():
        return None
    if not isinstance(links, list) or not all(isinstance(x, str) for x in links):
        return None
    if layer is not None and not isinstance(layer, str):
        return None
    return entry_id, description.strip(), layer, links


def parse_cve_records(path: str | os.PathLike) -> tuple[list[CveRecord], int]:
    """Parse a vulnerability corpus; returns (records, skipped_line_count).

    Malformed lines (bad JSON, bad id, empty description) are counted
    and skipped. A duplicate id keeps its first record and logs a
    warning. Zero usable records is an error: downstream stages have
    nothing to search.
    """
    records: list[CveRecord] = []
    seen: set[str] = set()
    skipped = 0
    for offset, line in _catalog_lines(path, "cve-catalog"):
        if not line.strip():
            continue
        fields = _record_fields(line)
        if fields is None or not CVE_ID.fullmatch(fields[0]):
            skipped += 1
            log.debug("skipping malformed vulnerability line at byte %d", offset)
            continue
        entry_id, description, _, links = fields
        if entry_id in seen:
            skipped += 1
            log.warning("duplicate vulnerability id %s, keeping first occurrence", entry_id)
            continue
        seen.add(entry_id)
        cwe_ids = frozenset(x for x in links if CWE_ID.fullmatch(x))
        records.append(CveRecord(entry_id, description, cwe_ids))
    if not records:
        raise EmptyCorpusError(f"{os.fspath(path)}: no usable vulnerability records")
    return records, skipped


def parse_attack_catalog(path: str | os.PathLike) -> tuple[list[AttackEntry], int]:
    """Parse an attack catalog; returns (entries, skipped_line_count).

    An entry whose layer tag is not one of the four known layers aborts
    the parse naming the entry; that points at a catalog from a newer
    taxonomy rather than a locally damaged line. An id that does not fit
    its layer's syntax is treated as a malformed line and skipped.
    """
    entries: list[AttackEntry] = []
    seen: set[str] = set()
    skipped = 0
    for offset, line in _catalog_lines(path, "attack-catalog"):
        if not line.strip():
            continue
        fields = _record_fields(line)
        if fields is None or fields[2] is None:
            skipped += 1
            log.debug("skipping malformed attack line at byte %d", offset)
            continue
        entry_id, description, layer_tag, links = fields
        try:
            layer = Layer(layer_tag)
        except ValueError:
            raise IngestionError(
                f"{os.fspath(path)}: entry {entry_id!r} has unknown layer tag "
                f"{layer_tag!r}", byte_offset=offset,
            ) from None
        if not LAYER_ID_PATTERNS[layer].fullmatch(entry_id):
            skipped += 1
            log.warning("id %s does not fit layer %s, skipping", entry_id, layer.value)
            continue
        if entry_id in seen:
            skipped += 1
            log.warning("duplicate attack id %s, keeping first occurrence", entry_id)
            continue
        seen.add(entry_id)
        entries.append(AttackEntry(entry_id, layer, description, frozenset(links)))
    if not entries:
        raise EmptyCorpusError(f"{os.fspath(path)}: no usable attack entries")
    return entries, skipped


def parse_weakness_catalog(path: str | os.PathLike) -> tuple[list[WeaknessRecord], int]:
    """Parse a weakness catalog; returns (records, skipped_line_count)."""
    records: list[WeaknessRecord] = []
    seen: set[str] = set()
    skipped = 0
    for offset, line in _catalog_lines(path, "weakness-catalog"):
        if not line.strip():
            continue
        fields = _record_fields(line)
        if fields is None or not CWE_ID.fullmatch(fields[0]):
            skipped += 1
            log.debug("skipping malformed weakness line at byte %d", offset)
            continue
        entry_id, description, _, links = fields
        if entry_id in seen:
            skipped += 1
            log.warning("duplicate weakness id %s, keeping first occurrence", entry_id)
            continue
        seen.add(entry_id)
        related = frozenset(x for x in links if CAPEC_ID.fullmatch(x))
        records.append(WeaknessRecord(entry_id, description, related))
    if not records:
        raise EmptyCorpusError(f"{os.fspath(path)}: no usable weakness records")
    return records, skipped


def _ref_kind(ref: str) -> str:
    if CVE_ID.fullmatch(ref):
        return "cve"
    if CWE_ID.fullmatch(ref):
        return "cwe"
    if CAPEC_ID.fullmatch(ref):
        return "capec"
    if (
        TACTIC_ID.fullmatch(ref)
        or TECHNIQUE_ID.fullmatch(ref)
        or PROCEDURE_ID.fullmatch(ref)
    ):
        return "attack"
    return "unknown"


def build_mapping(
    attacks: Iterable[AttackEntry],
    weaknesses: Iterable[WeaknessRecord],
    cves: Iterable[CveRecord],
    include_unlinked: bool = False,
) -> tuple[Mapping, list[DanglingLink]]:
    """Link every attack entry to the CVE ids reachable from it.

    Reachability follows forward stage order, attack -> attack pattern
    -> weakness -> vulnerability, in at most three such steps, with one
    optional preliminary hop between attack-catalog entries (a procedure
    citing its technique, a technique citing its tactic). References
    from attack-pattern entries back into the attack catalog are
    taxonomy annotations, not traversal edges, and are left alone.

    References whose target id exists in no loaded corpus are collected
    as DanglingLink records instead of failing the build; the caller
    decides whether a dirty dump is acceptable.
    """
    attacks = list(attacks)
    attack_by_id = {a.attack_id: a for a in attacks}
    weakness_ids = {w.cwe_id for w in weaknesses}
    cve_ids = {c.cve_id for c in cves}

    cwe_to_cves: dict[str, set[str]] = defaultdict(set)
    dangling: set[DanglingLink] = set()
    for c in cves:
        for w in sorted(c.cwe_ids):
            if w in weakness_ids:
                cwe_to_cves[w].add(c.cve_id)
            else:
                dangling.add(DanglingLink(c.cve_id, w))

    # Weakness records naming the attack patterns that exploit them give
    # a second source of pattern -> weakness edges.
    capec_to_cwes: dict[str, set[str]] = defaultdict(set)
    for w in weaknesses:
        for cap in sorted(w.related_capec):
            target = attack_by_id.get(cap)
            if target is not None and target.layer is Layer.ATTACK_PATTERN:
                capec_to_cwes[cap].add(w.cwe_id)
            else:
                dangling.add(DanglingLink(w.cwe_id, cap))

    def follow_cwe(source_id: str, cwe_id: str, found: set[str]) -> None:
        if cwe_id in weakness_ids:
            found.update(cwe_to_cves.get(cwe_id, ()))
        else:
            dangling.add(DanglingLink(source_id, cwe_id))

    def expand(entry: AttackEntry, found: set[str], visited: set[str], intra_hop: bool) -> None:
        if entry.layer is Layer.ATTACK_PATTERN:
            for cwe_id in sorted(capec_to_cwes.get(entry.attack_id, ())):
                found.update(cwe_to_cves.get(cwe_id, ()))
        for ref in sorted(entry.related_ids):
            kind = _ref_kind(ref)
            if kind == "cve":
                if ref in cve_ids:
                    found.add(ref)
                else:
                    dangling.add(DanglingLink(entry.attack_id, ref))
            elif kind == "cwe":
                follow_cwe(entry.attack_id, ref, found)
            elif kind == "capec":
                if entry.layer is Layer.ATTACK_PATTERN:
                    # Pattern-to-pattern references are same-stage
                    # annotations, not traversal edges.
                    continue
                target = attack_by_id.get(ref)
                if target is None or target.layer is not Layer.ATTACK_PATTERN:
                    dangling.add(DanglingLink(entry.attack_id, ref))
                elif target.attack_id not in visited:
                    visited.add(target.attack_id)
                    expand(target, found, visited, intra_hop=False)
            elif kind == "attack":
                if not intra_hop:
                    continue
                target = attack_by_id.get(ref)
                if target is None:
                    dangling.add(DanglingLink(entry.attack_id, ref))
                elif target.attack_id not in visited:
                    visited.add(target.attack_id)
                    expand(target, found, visited, intra_hop=False)
            else:
                dangling.add(DanglingLink(entry.attack_id, ref))

    mapping = Mapping()
    for a in attacks:
        found: set[str] = set()
        expand(a, found, visited={a.attack_id}, intra_hop=True)
        if found or include_unlinked:
            mapping.entries[a.attack_id] = found
    return mapping, sorted(dangling, key=lambda d: (d.source_id, d.target_id))


def mapping_stats(mapping: Mapping, attacks: Iterable[AttackEntry]) -> dict[Layer, LayerStats]:
    """Per-layer totals and how many entries reached at least one CVE."""
    totals: dict[Layer, int] = {layer: 0 for layer in Layer}
    linked: dict[Layer, int] = {layer: 0 for layer in Layer}
    for a in attacks:
        totals[a.layer] += 1
        if mapping.entries.get(a.attack_id):
            linked[a.layer] += 1
    return {layer: LayerStats(totals[layer], linked[layer]) for layer in Layer}


def make_pair_dataset(
    mapping: Mapping,
    attacks: Iterable[AttackEntry],
    cves: Iterable[CveRecord],
    negatives_per_positive: int = 1,
    seed: int = 0,
) -> list[LabeledPair]:
    """Build labeled text pairs from a mapping, for training or scoring.

    Every (attack, linked CVE) pair becomes a positive. For each
    positive, ``negatives_per_positive`` CVEs not linked to that attack
    are drawn without replacement, never repeating a pair within the
    attack. The draw is fully determined by ``seed``.
    """
    if negatives_per_positive < 1:
        raise ValueError("negatives_per_positive must be >= 1")
    attack_by_id = {a.attack_id: a for a in attacks}
    cve_by_id = {c.cve_id: c for c in cves}
    all_cve_ids = sorted(cve_by_id)
    rng = random.Random(seed)
    pairs: list[LabeledPair] = []
    for attack_id in sorted(mapping.entries):
        linked = {c for c in mapping.entries[attack_id] if c in cve_by_id}
        if not linked:
            continue
        attack = attack_by_id.get(attack_id)
        if attack is None:
            raise ValueError(f"mapping names {attack_id}, absent from the attack catalog")
        used = set(linked)
        for cve_id in sorted(linked):
            pairs.append(
                LabeledPair(attack_id, cve_id, attack.description,
                            cve_by_id[cve_id].description, positive=True)
            )
            pool = [c for c in all_cve_ids if c not in used]
            if len(pool) < negatives_per_positive:
                raise SamplingError(
                    f"{attack_id}: negative pool has {len(pool)} CVEs, "
                    f"need {negatives_per_positive}"
                )
            for neg_id in rng.sample(pool, negatives_per_positive):
                used.add(neg_id)
                pairs.append(
                    LabeledPair(attack_id, neg_id, attack.description,
                                cve_by_id[neg_id].description, positive=False)
                )
    return pairs


def save_mapping(mapping: Mapping, path: str | os.PathLike) -> int:
    rows = (
        {"attack_id": attack_id, "cve_ids": sorted(mapping.entries[attack_id])}
        for attack_id in sorted(mapping.entries)
    )
    return lineio.write_rows(path, "mapping", rows)


def load_mapping(path: str | os.PathLike) -> Mapping:
    mapping = Mapping()
    for lineno, obj in lineio.read_rows(path, "mapping"):
        attack_id = obj.get("attack_id")
        cve_list = obj.get("cve_ids")
        if not isinstance(attack_id, str) or not isinstance(cve_list, list):
            raise IngestionError(f"{os.fspath(path)}:{lineno}: bad mapping row")
        mapping.entries[attack_id] = set(cve_list)
    return mapping


def save_dangling(dangling: Iterable[DanglingLink], path: str | os.PathLike) -> int:
    rows = ({"source": d.source_id, "target": d.target_id} for d in dangling)
    return lineio.write_rows(path, "dangling-links", rows)


def save_pairs(pairs: Iterable[LabeledPair], path: str | os.PathLike) -> int:
    rows = (
        {
            "attack_id": p.attack_id,
            "cve_id": p.cve_id,
            "attack_text": p.attack_text,
            "cve_text": p.cve_text,
            "label": "positive" if p.positive else "negative",
        }
        for p in pairs
    )
    return lineio.write_rows(path, "pairs", rows)


def load_pairs(path: str | os.PathLike) -> list[LabeledPair]:
    pairs: list[LabeledPair] = []
    for lineno, obj in lineio.read_rows(path, "pairs"):
        try:
            label = obj["label"]
            if label not in ("positive", "negative"):
                raise KeyError(label)
            pairs.append(
                LabeledPair(obj["attack_id"], obj["cve_id"], obj["attack_text"],
                            obj["cve_text"], positive=label == "positive")
            )
        except KeyError as exc:
            raise IngestionError(f"{os.fspath(path)}:{lineno}: bad pair row: {exc}") from exc
    return pairs


def write_stats_csv(stats: dict[Layer, LayerStats], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "total", "linked", "unlinked"])
        for layer in Layer:
            s = stats[layer]
            writer.writerow([layer.value, s.total, s.linked, s.unlinked])
