"""Corpus preprocessing: PubTator parsing, abbreviation expansion,
rule-based tokenization / sentence splitting, mention overlap resolution,
and IOB2 emission.

All transforms are per-document and pure; character offsets stay invertible
back to the (expanded) raw text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import OntolinkError


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    text: str
    start: int  # char offset into the document text
    end: int


@dataclass(frozen=True)
class Mention:
    sentence: int
    start: int   # token span [start, end) within the sentence
    end: int
    entity_id: str
    type_id: str

    def span_key(self):
        return (self.sentence, self.start, self.end)


@dataclass(frozen=True)
class CharMention:
    """Mention as character offsets into raw document text."""
    start: int
    end: int
    entity_id: str
    type_id: str
    text: str = ""


@dataclass(frozen=True)
class AbbrevDefinition:
    short_form: str
    long_form: str
    offset: int  # char offset where long_form starts


@dataclass
class Document:
    doc_id: str
    sentences: list[list[Token]]
    mentions: list[Mention] = field(default_factory=list)
    text: str = ""

    def sentence_tokens(self, idx: int) -> list[str]:
        return [t.text for t in self.sentences[idx]]

    def span_text(self, sentence: int, start: int, end: int) -> str:
        toks = self.sentences[sentence][start:end]
        if self.text:
            return self.text[toks[0].start:toks[-1].end]
        return " ".join(t.text for t in toks)

    def char_span(self, sentence: int, start: int, end: int) -> tuple[int, int]:
        toks = self.sentences[sentence][start:end]
        return toks[0].start, toks[-1].end

    def to_record(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "text": self.text,
            "sentences": [[[t.text, t.start, t.end] for t in sent]
                          for sent in self.sentences],
            "mentions": [[m.sentence, m.start, m.end, m.entity_id, m.type_id]
                         for m in self.mentions],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Document":
        return cls(
            doc_id=rec["doc_id"],
            text=rec.get("text", ""),
            sentences=[[Token(t[0], t[1], t[2]) for t in sent]
                       for sent in rec["sentences"]],
            mentions=[Mention(*m) for m in rec["mentions"]],
        )


@dataclass
class RawDocument:
    doc_id: str
    text: str
    mentions: list[CharMention] = field(default_factory=list)


@dataclass
class PreprocessReport:
    documents: int = 0
    mentions_in: int = 0
    mentions_out: int = 0
    abbrev_definitions: int = 0
    docs_with_definitions: int = 0
    dropped_definition_site: int = 0
    dropped_expansion_conflict: int = 0
    dropped_tokenization: int = 0
    dropped_overlap: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)

    @property
    def dropped_total(self) -> int:
        return self.mentions_in - self.mentions_out


# ---------------------------------------------------------------------------
# PubTator reader / writer
# ---------------------------------------------------------------------------

_PUBTATOR_TEXT = re.compile(r"^([^|]+)\|([ta])\|(.*)$")


def read_pubtator(path) -> list[RawDocument]:
    """Parse PubTator: pmid|t|title, pmid|a|abstract, TSV mention lines.

    Document text is title + " " + abstract; mention offsets index into it.
    """
    docs: dict[str, dict] = {}
    order: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            m = _PUBTATOR_TEXT.match(line)
            if m and "\t" not in line.split("|", 2)[0]:
                pmid, kind, text = m.group(1), m.group(2), m.group(3)
                if pmid not in docs:
                    docs[pmid] = {"t": "", "a": "", "mentions": []}
                    order.append(pmid)
                docs[pmid][kind] = text
                continue
            parts = line.split("\t")
            if len(parts) >= 6:
                pmid, start, end, text, type_id, cid = parts[:6]
                if pmid not in docs:
                    docs[pmid] = {"t": "", "a": "", "mentions": []}
                    order.append(pmid)
                docs[pmid]["mentions"].append(
                    CharMention(int(start), int(end), cid, type_id, text))
            else:
                raise OntolinkError(f"{path}: unparseable PubTator line: {line!r}")
    out = []
    for pmid in order:
        d = docs[pmid]
        text = d["t"] + (" " + d["a"] if d["a"] else "")
        out.append(RawDocument(doc_id=pmid, text=text, mentions=d["mentions"]))
    return out


def write_pubtator_predictions(path, docs: dict[str, Document], predictions) -> None:
    """Write predicted mentions as PubTator TSV mention lines.

    predictions: iterable of dicts with doc_id, sentence, start, end,
    entity_id, type_id.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for p in predictions:
            doc = docs[p["doc_id"]]
            cs, ce = doc.char_span(p["sentence"], p["start"], p["end"])
            text = doc.text[cs:ce] if doc.text else doc.span_text(
                p["sentence"], p["start"], p["end"])
            fh.write(f'{p["doc_id"]}\t{cs}\t{ce}\t{text}\t{p["type_id"]}\t{p["entity_id"]}\n')


# ---------------------------------------------------------------------------
# abbreviation detection (simplified Schwartz-Hearst)
# ---------------------------------------------------------------------------

_PAREN_RE = re.compile(r"\(([^()]+)\)")


def _valid_short_form(sf: str) -> bool:
    if not 2 <= len(sf) <= 10:
        return False
    if len(sf.split()) > 2:
        return False
    if not any(c.isalpha() for c in sf):
        return False
    return sf[0].isalnum()


def _find_long_form(before: str, sf: str) -> str | None:
    """Right-to-left character alignment of the short form against the text
    immediately before the parenthesis (classic long-form search)."""
    sf_chars = [c for c in sf if c.isalnum()]
    if not sf_chars:
        return None
    words = before.split()
    max_words = min(len(sf_chars) + 5, len(sf_chars) * 2)
    candidate_words = words[-max_words:] if max_words else []
    if not candidate_words:
        return None
    candidate = " ".join(candidate_words)
    # scan candidate suffixes from shortest to longest until one aligns
    for first in range(len(candidate_words) - 1, -1, -1):
        lf = " ".join(candidate_words[first:])
        if _aligns(lf, sf_chars):
            # first short-form char must start a word of the long form
            if lf and lf[0].lower() == sf_chars[0].lower():
                return lf
    return None


def _aligns(lf: str, sf_chars: list[str]) -> bool:
    """True if every short-form char occurs in order in lf, the first one
    at the start of a word."""
    li = len(lf) - 1
    si = len(sf_chars) - 1
    while si >= 0:
        c = sf_chars[si].lower()
        while li >= 0 and (lf[li].lower() != c or
                           (si == 0 and li > 0 and lf[li - 1].isalnum())):
            li -= 1
        if li < 0:
            return False
        li -= 1
        si -= 1
    return True


def detect_abbreviations(text: str) -> list[AbbrevDefinition]:
    """Find 'long form (short form)' definitions, left to right, non-overlapping."""
    defs: list[AbbrevDefinition] = []
    last_end = 0
    for m in _PAREN_RE.finditer(text):
        if m.start() < last_end:
            continue
        sf = m.group(1).strip()
        if not _valid_short_form(sf):
            continue
        before = text[:m.start()].rstrip()
        lf = _find_long_form(before, sf)
        if not lf or lf.lower() == sf.lower():
            continue
        lf_start = before.rfind(lf)
        if lf_start < 0:
            continue
        defs.append(AbbrevDefinition(short_form=sf, long_form=lf, offset=lf_start))
        last_end = m.end()
    return defs


def read_abbrev_tsv(path) -> dict[str, list[tuple[str, str]]]:
    """External definitions TSV: doc_id TAB short TAB long."""
    out: dict[str, list[tuple[str, str]]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise OntolinkError(f"{path}: bad abbreviation line: {line!r}")
        out.setdefault(parts[0], []).append((parts[1], parts[2]))
    return out


# ---------------------------------------------------------------------------
# abbreviation expansion
# ---------------------------------------------------------------------------

def _standalone_occurrences(text: str, needle: str):
    pat = re.compile(r"(?<![A-Za-z0-9])" + re.escape(needle) + r"(?![A-Za-z0-9])")
    return [m.start() for m in pat.finditer(text)]


def expand_abbreviations(doc: RawDocument, defs: list[AbbrevDefinition],
                         report: PreprocessReport | None = None) -> RawDocument:
    """Apply the expansion rules: the defining 'long (short)' collapses to
    'long'; every other standalone 'short' becomes 'long' with mention tags
    copied; mentions on the dropped definition-site short form are dropped.
    """
    report = report if report is not None else PreprocessReport()
    text = doc.text
    # edits on original coordinates: (start, end, replacement)
    edits: list[tuple[int, int, str]] = []
    for d in defs:
        lf_end = d.offset + len(d.long_form)
        # the definition parenthetical directly after the long form
        m = re.match(r"\s*\(\s*" + re.escape(d.short_form) + r"\s*\)", text[lf_end:])
        paren_span = None
        if m:
            paren_span = (lf_end, lf_end + m.end())
            edits.append((paren_span[0], paren_span[1], ""))
        for occ in _standalone_occurrences(text, d.short_form):
            if paren_span and paren_span[0] <= occ < paren_span[1]:
                continue
            edits.append((occ, occ + len(d.short_form), d.long_form))
    edits.sort(key=lambda e: (e[0], e[1]))
    applied: list[tuple[int, int, str]] = []
    last_end = 0
    for s, e, rep in edits:
        if s < last_end:
            report.dropped_expansion_conflict += 1
            continue
        applied.append((s, e, rep))
        last_end = e

    # build new text and an offset map for mention boundaries
    pieces = []
    pos = 0
    boundary_map: list[tuple[int, int, int, str]] = []  # (orig_s, orig_e, new_s, rep)
    new_len = 0
    for s, e, rep in applied:
        pieces.append(text[pos:s])
        new_len += s - pos
        boundary_map.append((s, e, new_len, rep))
        pieces.append(rep)
        new_len += len(rep)
        pos = e
    pieces.append(text[pos:])
    new_text = "".join(pieces)

    def map_offset(off: int) -> int | None:
        delta = 0
        for s, e, new_s, rep in boundary_map:
            if off <= s:
                break
            if off < e:
                return None  # boundary strictly inside an edited region
            delta = (new_s + len(rep)) - e
        return off + delta

    new_mentions: list[CharMention] = []
    for men in doc.mentions:
        # exact cover of a replaced region -> copy tag onto the expansion
        mapped = None
        for s, e, new_s, rep in boundary_map:
            if men.start == s and men.end == e:
                if rep:
                    mapped = CharMention(new_s, new_s + len(rep), men.entity_id,
                                         men.type_id, rep)
                else:
                    report.dropped_definition_site += 1
                    mapped = "dropped"
                break
            if men.start < e and men.end > s and not (men.start <= s and men.end >= e):
                # partial overlap with an edit that isn't an exact cover
                if rep:
                    mapped = "dropped_conflict"
                else:
                    report.dropped_definition_site += 1
                    mapped = "dropped"
                break
        if mapped == "dropped":
            continue
        if mapped == "dropped_conflict":
            report.dropped_expansion_conflict += 1
            continue
        if isinstance(mapped, CharMention):
            new_mentions.append(mapped)
            continue
        ns = map_offset(men.start)
        ne = map_offset(men.end)
        if ns is None or ne is None or ns >= ne:
            report.dropped_expansion_conflict += 1
            continue
        new_mentions.append(CharMention(ns, ne, men.entity_id, men.type_id,
                                        new_text[ns:ne]))
    return RawDocument(doc_id=doc.doc_id, text=new_text, mentions=new_mentions)


# ---------------------------------------------------------------------------
# tokenization and sentence splitting
# ---------------------------------------------------------------------------

PROTECTED_ABBREVS = {
    "e.g.", "i.e.", "etc.", "vs.", "cf.", "ca.", "fig.", "figs.", "dr.",
    "mr.", "mrs.", "no.", "al.", "st.", "approx.",
}

_PUNCT = set(".,;:!?()[]{}\"'“”‘’%/\\+*=<>|&")
_SENT_END = {".", "!", "?"}


def _is_protected(tok: str) -> bool:
    low = tok.lower()
    if low in PROTECTED_ABBREVS:
        return True
    # single letter + period ("E." in "E. coli"), or dotted acronym ("U.S.")
    if re.fullmatch(r"(?:[A-Za-z]\.)+", tok):
        return True
    return False


def _split_chunk(chunk: str, offset: int) -> list[Token]:
    """Detach leading/trailing punctuation from a whitespace chunk."""
    toks: list[Token] = []
    start, end = 0, len(chunk)
    lead: list[Token] = []
    while start < end and chunk[start] in _PUNCT:
        lead.append(Token(chunk[start], offset + start, offset + start + 1))
        start += 1
    trail: list[Token] = []
    while end > start and chunk[end - 1] in _PUNCT:
        core = chunk[start:end]
        if core[-1] == "." and _is_protected(core):
            break
        trail.append(Token(chunk[end - 1], offset + end - 1, offset + end))
        end -= 1
    toks.extend(lead)
    if end > start:
        toks.append(Token(chunk[start:end], offset + start, offset + end))
    toks.extend(reversed(trail))
    return toks


def segment_and_tokenize(doc_id: str, text: str) -> Document:
    """Whitespace + punctuation tokenizer with rule-based sentence breaks.

    A sentence break happens after a standalone '.', '!' or '?' token when
    the next token starts with an uppercase letter. Offsets index into text.
    """
    tokens: list[Token] = []
    for m in re.finditer(r"\S+", text):
        tokens.extend(_split_chunk(m.group(0), m.start()))
    sentences: list[list[Token]] = []
    cur: list[Token] = []
    for i, tok in enumerate(tokens):
        cur.append(tok)
        if tok.text in _SENT_END:
            nxt = tokens[i + 1] if i + 1 < len(tokens) else None
            if nxt is None or nxt.text[0].isupper() or nxt.text[0].isdigit():
                sentences.append(cur)
                cur = []
    if cur:
        sentences.append(cur)
    return Document(doc_id=doc_id, sentences=sentences, text=text)


def align_mentions(doc: Document, mentions: list[CharMention],
                   report: PreprocessReport | None = None) -> Document:
    """Map character-offset mentions onto token spans; misaligned or
    sentence-crossing mentions are dropped and counted."""
    report = report if report is not None else PreprocessReport()
    starts: dict[int, tuple[int, int]] = {}
    ends: dict[int, tuple[int, int]] = {}
    for si, sent in enumerate(doc.sentences):
        for ti, tok in enumerate(sent):
            starts[tok.start] = (si, ti)
            ends[tok.end] = (si, ti)
    out: list[Mention] = []
    for men in mentions:
        s = starts.get(men.start)
        e = ends.get(men.end)
        if s is None or e is None or s[0] != e[0] or s[1] > e[1]:
            report.dropped_tokenization += 1
            continue
        out.append(Mention(sentence=s[0], start=s[1], end=e[1] + 1,
                           entity_id=men.entity_id, type_id=men.type_id))
    return replace(doc, mentions=out)


# ---------------------------------------------------------------------------
# overlap resolution
# ---------------------------------------------------------------------------

def _overlaps(a: Mention, b: Mention) -> bool:
    return a.sentence == b.sentence and a.start < b.end and b.start < a.end


def resolve_overlapping_mentions(mentions: list[Mention],
                                 report: PreprocessReport | None = None) -> list[Mention]:
    """Greedy keep, preferring longer mentions that begin earlier.

    Ties on (length, start) break by entity_id so the result is deterministic.
    """
    report = report if report is not None else PreprocessReport()
    order = sorted(mentions, key=lambda m: (m.sentence, -(m.end - m.start),
                                            m.start, m.entity_id, m.type_id))
    kept: list[Mention] = []
    for m in order:
        if any(_overlaps(m, k) for k in kept):
            report.dropped_overlap += 1
            continue
        kept.append(m)
    kept.sort(key=lambda m: (m.sentence, m.start, m.end, m.entity_id))
    return kept


# ---------------------------------------------------------------------------
# IOB2
# ---------------------------------------------------------------------------

def emit_iob2(doc: Document) -> str:
    """One 'token TAB tag' line per token, blank line between sentences.

    Tags: O, B-<type>|<entity>, I-<type>|<entity>. Overlapping mentions are
    a hard error here; resolve them first.
    """
    for a in doc.mentions:
        for b in doc.mentions:
            if a is not b and _overlaps(a, b):
                raise OntolinkError(
                    f"{doc.doc_id}: overlapping mentions reached emit_iob2")
    tags_by_sent = [["O"] * len(sent) for sent in doc.sentences]
    for m in doc.mentions:
        label = f"{m.type_id}|{m.entity_id}"
        tags_by_sent[m.sentence][m.start] = f"B-{label}"
        for i in range(m.start + 1, m.end):
            tags_by_sent[m.sentence][i] = f"I-{label}"
    lines = []
    for sent, tags in zip(doc.sentences, tags_by_sent):
        for tok, tag in zip(sent, tags):
            lines.append(f"{tok.text}\t{tag}")
        lines.append("")
    return "\n".join(lines) + "\n" if lines else ""


def parse_iob2(text: str, doc_id: str = "") -> Document:
    """Inverse of emit_iob2 (character offsets are synthesized by joining
    tokens with single spaces)."""
    sentences: list[list[Token]] = []
    mentions: list[Mention] = []
    cur: list[Token] = []
    cur_tags: list[str] = []
    offset = 0

    def flush():
        nonlocal cur, cur_tags
        if not cur:
            return
        si = len(sentences)
        open_m = None  # (start, label)
        for ti, tag in enumerate(cur_tags):
            if tag.startswith("B-") or (tag.startswith("I-") and open_m is None):
                if open_m:
                    mentions.append(_mk(si, open_m, ti))
                open_m = (ti, tag[2:])
            elif tag.startswith("I-") and open_m and tag[2:] == open_m[1]:
                pass
            else:
                if open_m:
                    mentions.append(_mk(si, open_m, ti))
                    open_m = None
                if tag.startswith("I-"):
                    open_m = (ti, tag[2:])
        if open_m:
            mentions.append(_mk(si, open_m, len(cur_tags)))
        sentences.append(cur)
        cur, cur_tags = [], []

    def _mk(si, open_m, end):
        start, label = open_m
        type_id, _, entity_id = label.partition("|")
        return Mention(sentence=si, start=start, end=end,
                       entity_id=entity_id, type_id=type_id)

    for line in text.splitlines():
        if not line.strip():
            flush()
            continue
        tok, _, tag = line.partition("\t")
        cur.append(Token(tok, offset, offset + len(tok)))
        offset += len(tok) + 1
        cur_tags.append(tag)
    flush()
    joined = " ".join(" ".join(t.text for t in s) for s in sentences)
    return Document(doc_id=doc_id, sentences=sentences, mentions=mentions,
                    text=joined)


# ---------------------------------------------------------------------------
# full per-document pipeline
# ---------------------------------------------------------------------------

def preprocess_document(raw: RawDocument, report: PreprocessReport,
                        external_defs: list[tuple[str, str]] | None = None) -> Document:
    """Abbreviations -> tokenize -> align mentions -> resolve overlaps."""
    report.documents += 1
    report.mentions_in += len(raw.mentions)
    if external_defs is not None:
        defs = []
        for sf, lf in external_defs:
            occ = raw.text.find(lf)
            if occ >= 0:
                defs.append(AbbrevDefinition(short_form=sf, long_form=lf, offset=occ))
    else:
        defs = detect_abbreviations(raw.text)
    if defs:
        report.abbrev_definitions += len(defs)
        report.docs_with_definitions += 1
        raw = expand_abbreviations(raw, defs, report)
    doc = segment_and_tokenize(raw.doc_id, raw.text)
    doc = align_mentions(doc, raw.mentions, report)
    doc.mentions = resolve_overlapping_mentions(doc.mentions, report)
    report.mentions_out += len(doc.mentions)
    return doc
