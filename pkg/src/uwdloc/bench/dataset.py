"""Labeled record files.

Header ``<4sIIIQI``: magic ``DLC1``, version, L, N, record count, flags.
Flag bit 0 marks the dynamic-surface model; bit 1 marks that each record
carries its true attenuations, with the ray count in bits 8-15.  Each record
is the SNR in dB (f64), the label xyz (3 f64), the ``L x N`` complex samples
as interleaved f64 pairs and, when flagged, the ``R x L`` attenuations in the
same interleaved form.  Everything is little-endian.
"""

from __future__ import annotations

import struct

import numpy as np

from ..propagation import SignalRecord, Truth, noise_variance

MAGIC = b"DLC1"
VERSION = 1
HEADER = struct.Struct("<4sIIIQI")
FLAG_DYNAMIC = 1
FLAG_TRUTH = 2


def record_size(L, N, R=0):
    return 8 * (1 + 3 + 2 * L * N + 2 * R * L)


def _interleave(z):
    z = np.asarray(z, dtype=complex).ravel()
    out = np.empty(2 * z.size, dtype="<f8")
    out[0::2] = z.real
    out[1::2] = z.imag
    return out


def write_dataset(path, records, dynamic=False, include_truth=True):
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    L, N = records[0].x.shape
    R = 0
    if include_truth:
        if any(r.truth is None for r in records):
            raise ValueError("truth requested but a record has none")
        R = records[0].truth.B.shape[0]
    flags = (FLAG_DYNAMIC if dynamic else 0) | ((FLAG_TRUTH | (R << 8)) if include_truth else 0)
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, L, N, len(records), flags))
        for r in records:
            if r.x.shape != (L, N):
                raise ValueError("records differ in shape")
            head = np.array([r.snr_db, *np.asarray(r.label, dtype=float)], dtype="<f8")
            f.write(head.tobytes())
            f.write(_interleave(r.x).tobytes())
            if include_truth:
                f.write(_interleave(r.truth.B).tobytes())


def read_header(path):
    with open(path, "rb") as f:
        raw = f.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise ValueError(f"{path}: truncated dataset header")
    magic, version, L, N, count, flags = HEADER.unpack(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a dataset file")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported dataset version {version}")
    return {"L": L, "N": N, "count": count, "dynamic": bool(flags & FLAG_DYNAMIC),
            "truth": bool(flags & FLAG_TRUTH), "R": (flags >> 8) & 0xFF if flags & FLAG_TRUTH else 0}


def read_dataset(path):
    """All records of a dataset file plus its header dictionary."""
    hdr = read_header(path)
    L, N, R, count = hdr["L"], hdr["N"], hdr["R"], hdr["count"]
    data = np.fromfile(path, dtype="<f8", offset=HEADER.size)
    per = record_size(L, N, R) // 8
    if data.size != per * count:
        raise ValueError(f"{path}: expected {count} records of {per * 8} bytes, found {data.size * 8} bytes")
    data = data.reshape(count, per)
    records = []
    for row in data:
        snr = float(row[0])
        x = (row[4:4 + 2 * L * N:2] + 1j * row[5:4 + 2 * L * N:2]).reshape(L, N)
        truth = None
        if R:
            t = row[4 + 2 * L * N:]
            B = (t[0::2] + 1j * t[1::2]).reshape(R, L)
            truth = Truth(B=B, tau=None, sbar=None, noise_var=noise_variance(snr))
        records.append(SignalRecord(x=x, label=row[1:4].copy(), snr_db=snr, truth=truth))
    return records, hdr
