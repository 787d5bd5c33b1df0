"""Entity knowledge base: alias table built from an ontology dump.

Each ontology record is one alias row (entity_id, type_id, name, name-type
tag). Names are cleaned (meta tokens stripped, angle-bracket qualifiers
saved), types are mapped to the selected set through the type hierarchy,
and the result is a deduplicated, deterministic alias table.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

from . import OntolinkError
from .io_utils import read_jsonl, write_jsonl


class NameType(IntEnum):
    """Authority rank of an alias name; lower ordinal = better."""

    PRIMARY = 0
    PRIMARY_DISAMBIGUATED = 1
    ACRONYM = 2
    SYNONYM = 3


# TSV name-type tags -> NameType (tag "P" with a qualifier auto-upgrades
# to PRIMARY_DISAMBIGUATED in build_alias_table)
NAME_TYPE_TAGS = {
    "P": NameType.PRIMARY,
    "PD": NameType.PRIMARY_DISAMBIGUATED,
    "A": NameType.ACRONYM,
    "S": NameType.SYNONYM,
}

DEFAULT_META_TOKENS = ("Formally", "Not Otherwise Specified", "NOS")

_QUALIFIER_RE = re.compile(r"\s*(?:<([^<>]*)>|⟨([^⟨⟩]*)⟩)\s*$")


@dataclass(frozen=True)
class AliasEntry:
    name: str
    entity_id: str
    type_id: str
    type_name: str
    name_type: NameType
    qualifier: str | None = None


@dataclass
class TypeHierarchy:
    """Child-type -> parent-type edges plus the selected target type set."""

    parents: dict[str, str]
    selected: dict[str, str]  # type_id -> display name

    def __post_init__(self):
        self._check_acyclic()
        for tid in self.selected:
            if tid not in self.parents and tid not in self._nodes():
                # selected types are nodes even without an outgoing edge
                pass

    def _nodes(self):
        nodes = set(self.parents)
        nodes.update(self.parents.values())
        nodes.update(self.selected)
        return nodes

    def _check_acyclic(self):
        for start in self.parents:
            seen = {start}
            cur = start
            while cur in self.parents:
                cur = self.parents[cur]
                if cur in seen:
                    raise OntolinkError(f"type hierarchy contains a cycle through {cur}")
                seen.add(cur)

    @classmethod
    def from_files(cls, hierarchy_path, types_path) -> "TypeHierarchy":
        parents = {}
        for line in Path(hierarchy_path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise OntolinkError(f"bad hierarchy line: {line!r}")
            parents[parts[0]] = parts[1]
        selected = {}
        for line in Path(types_path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) == 1:
                selected[parts[0]] = parts[0]
            else:
                selected[parts[0]] = parts[1]
        if not selected:
            raise OntolinkError(f"{types_path}: no selected types")
        return cls(parents=parents, selected=selected)


def clean_name(raw: str, meta_tokens=DEFAULT_META_TOKENS) -> tuple[str, str | None]:
    """Strip meta tokens and a trailing angle-bracket qualifier from a name.

    Returns (clean, qualifier); qualifier is None when no bracketed suffix
    was present. An empty result after cleaning means the entry is unusable.
    """
    if not raw:
        raise ValueError("raw name must be non-empty")
    text = raw
    qualifier = None
    m = _QUALIFIER_RE.search(text)
    if m:
        qualifier = (m.group(1) or m.group(2) or "").strip() or None
        text = text[:m.start()]
    for token in meta_tokens:
        # whole-phrase, case-insensitive
        text = re.sub(r"(?<![A-Za-z0-9])" + re.escape(token) + r"(?![A-Za-z0-9])",
                      " ", text, flags=re.IGNORECASE)
    # drop punctuation left dangling by removals, normalize whitespace
    text = re.sub(r"\s*[,;]\s*(?=$|[,;])", "", text)
    text = re.sub(r"\s+", " ", text).strip()
    text = text.strip(" ,;")
    return text, qualifier


def map_to_selected_type(type_id: str, hierarchy: TypeHierarchy) -> str | None:
    """Nearest ancestor (including self) in the selected set, else None."""
    cur = type_id
    hops = 0
    while cur is not None:
        if cur in hierarchy.selected:
            return cur
        cur = hierarchy.parents.get(cur)
        hops += 1
        if hops > len(hierarchy.parents) + 1:  # defensive; hierarchy is acyclic
            return None
    return None


@dataclass
class BuildReport:
    total_records: int = 0
    kept: int = 0
    discarded_malformed: int = 0
    discarded_unmapped_type: int = 0
    discarded_empty_name: int = 0
    discarded_duplicate: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class AliasTable:
    entries: list[AliasEntry]
    report: BuildReport = field(default_factory=BuildReport)

    def __post_init__(self):
        self._primary: dict[str, AliasEntry] = {}
        for e in self.entries:
            if e.name_type in (NameType.PRIMARY, NameType.PRIMARY_DISAMBIGUATED):
                self._primary.setdefault(e.entity_id, e)

    def __len__(self) -> int:
        return len(self.entries)

    def primary_of(self, entity_id: str) -> AliasEntry:
        try:
            return self._primary[entity_id]
        except KeyError:
            raise OntolinkError(f"entity {entity_id} has no primary name") from None

    def entity_ids(self) -> set[str]:
        return {e.entity_id for e in self.entries}

    def counts_by_name_type(self) -> dict[str, int]:
        out = {nt.name: 0 for nt in NameType}
        for e in self.entries:
            out[e.name_type.name] += 1
        return out

    # ---- serialization -------------------------------------------------

    def save_jsonl(self, path) -> None:
        write_jsonl(path, (
            {"name": e.name, "entity_id": e.entity_id, "type_id": e.type_id,
             "type_name": e.type_name, "name_type": e.name_type.name,
             "qualifier": e.qualifier}
            for e in self.entries))

    @classmethod
    def load_jsonl(cls, path) -> "AliasTable":
        entries = [
            AliasEntry(name=r["name"], entity_id=r["entity_id"],
                       type_id=r["type_id"], type_name=r["type_name"],
                       name_type=NameType[r["name_type"]],
                       qualifier=r.get("qualifier"))
            for r in read_jsonl(path)
        ]
        if not entries:
            raise OntolinkError(f"{path}: empty alias table")
        return cls(entries=entries)


def build_alias_table(records, hierarchy: TypeHierarchy,
                      meta_tokens=DEFAULT_META_TOKENS) -> AliasTable:
    """Build the alias table from an iterable of raw ontology records.

    Each record is (entity_id, type_id, raw_name, name_type_tag). Malformed
    records and records whose type cannot be mapped are skipped and counted.
    """
    report = BuildReport()
    entries: list[AliasEntry] = []
    seen: set[tuple[str, str, NameType]] = set()
    for rec in records:
        report.total_records += 1
        try:
            entity_id, type_id, raw_name, tag = rec
            name_type = NAME_TYPE_TAGS[tag.strip().upper()]
            if not raw_name:
                raise ValueError("empty name")
        except (ValueError, KeyError, TypeError):
            report.discarded_malformed += 1
            continue
        mapped = map_to_selected_type(type_id.strip(), hierarchy)
        if mapped is None:
            report.discarded_unmapped_type += 1
            continue
        name, qualifier = clean_name(raw_name, meta_tokens)
        if not name:
            report.discarded_empty_name += 1
            continue
        if name_type is NameType.PRIMARY and qualifier is not None:
            name_type = NameType.PRIMARY_DISAMBIGUATED
        key = (name, entity_id.strip(), name_type)
        if key in seen:
            report.discarded_duplicate += 1
            continue
        seen.add(key)
        entries.append(AliasEntry(
            name=name, entity_id=entity_id.strip(), type_id=mapped,
            type_name=hierarchy.selected[mapped], name_type=name_type,
            qualifier=qualifier))
        report.kept += 1
    if not entries:
        raise OntolinkError("alias table is empty after cleaning")
    table = AliasTable(entries=entries, report=report)
    return table


def read_ontology_tsv(path):
    """Yield (entity_id, type_id, name, tag) rows from the ontology TSV."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                yield None  # counted as malformed downstream
                continue
            yield tuple(parts)


def linker_text(table: AliasTable, entity_id: str) -> str:
    """Canonicalized entity text: type name, primary name, qualifier."""
    primary = table.primary_of(entity_id)
    text = f"{primary.type_name} , {primary.name}"
    if primary.qualifier:
        text += f" ({primary.qualifier})"
    return text


def selector_text(table: AliasTable, entry: AliasEntry) -> str:
    """Like linker_text, but uses the matched alias name instead of the primary."""
    qualifier = entry.qualifier
    if qualifier is None:
        try:
            qualifier = table.primary_of(entry.entity_id).qualifier
        except OntolinkError:
            qualifier = None
    text = f"{entry.type_name} , {entry.name}"
    if qualifier:
        text += f" ({qualifier})"
    return text
