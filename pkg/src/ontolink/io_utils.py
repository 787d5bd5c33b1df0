"""Versioned binary sidecar files and JSONL helpers."""

from __future__ import annotations

import json
import pickle
import struct

from . import OntolinkError

MAGIC = b"OLBX"
FORMAT_VERSION = 1


def write_blob(path, payload: dict) -> None:
    """Write a dict as a binary blob: magic, u32 version, u64 length, pickle."""
    body = pickle.dumps(payload, protocol=4)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(body)))
        fh.write(body)


def read_blob(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise OntolinkError(f"{path}: not an ontolink binary file")
        version, length = struct.unpack("<IQ", fh.read(12))
        if version != FORMAT_VERSION:
            raise OntolinkError(f"{path}: unsupported format version {version}")
        body = fh.read(length)
    return pickle.loads(body)


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)
