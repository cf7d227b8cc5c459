"""On-disk spectrum cache.

File layout (all little-endian)::

    header   struct "<8sIIiIqqq16s"
             magic, format version, n_sites, two_sz, flags,
             round(kappa * 1e9), round(delta * 1e9), dim, code version (ASCII)
    payload  energies                       dim   f8
             d_diag, d2_diag   (flag 1)     2*dim f8
             eigvecs, C order  (flag 2)     dim*dim f8

Eigenvectors are only kept for small sectors.  Files are written to a
temporary name in the same directory and moved into place with
``os.replace``, so a reader never sees a half-written spectrum.
"""
from __future__ import annotations

import logging
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .errors import CacheError
from .spectral import Spectrum

logger = logging.getLogger(__name__)

MAGIC = b"LDRSPEC\x00"
FORMAT_VERSION = 1
HEADER = struct.Struct("<8sIIiIqqq16s")
HAS_DIAG = 1
HAS_VECS = 2
VECTOR_CEILING = 5000
_F8 = np.dtype("<f8")


def _key_int(x: float) -> int:
    return int(round(x * 1e9))


@dataclass(frozen=True)
class CacheKey:
    n_sites: int
    two_sz: int
    kappa: float
    delta: float
    code_version: str = __version__

    @property
    def kappa_key(self) -> int:
        return _key_int(self.kappa)

    @property
    def delta_key(self) -> int:
        return _key_int(self.delta)

    def filename(self) -> str:
        return (f"spec_n{self.n_sites}_s{self.two_sz}_k{self.kappa_key}"
                f"_d{self.delta_key}_v{self.code_version}.bin")

    def label(self) -> str:
        return self.filename()[:-4]


def write_spectrum(path, key: CacheKey, spec: Spectrum, keep_vectors: Optional[bool] = None):
    path = Path(path)
    if keep_vectors is None:
        keep_vectors = spec.dim <= VECTOR_CEILING
    flags = 0
    if spec.d_diag is not None and spec.d2_diag is not None:
        flags |= HAS_DIAG
    if keep_vectors and spec.eigvecs is not None:
        flags |= HAS_VECS
    version = key.code_version.encode("ascii")
    if len(version) > 16:
        raise CacheError("code version string longer than 16 bytes")
    header = HEADER.pack(MAGIC, FORMAT_VERSION, key.n_sites, key.two_sz, flags,
                         key.kappa_key, key.delta_key, spec.dim, version)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(spec.energies, dtype=_F8).tobytes())
            if flags & HAS_DIAG:
                fh.write(np.ascontiguousarray(spec.d_diag, dtype=_F8).tobytes())
                fh.write(np.ascontiguousarray(spec.d2_diag, dtype=_F8).tobytes())
            if flags & HAS_VECS:
                fh.write(np.ascontiguousarray(spec.eigvecs, dtype=_F8).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_spectrum(path, key: Optional[CacheKey] = None) -> Spectrum:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise CacheError(f"{path}: truncated header")
    magic, fmt, n_sites, two_sz, flags, kk, dk, dim, version = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CacheError(f"{path}: not a spectrum file")
    if fmt != FORMAT_VERSION:
        raise CacheError(f"{path}: format {fmt}, expected {FORMAT_VERSION}")
    version = version.rstrip(b"\x00").decode("ascii")
    if key is not None:
        got = (n_sites, two_sz, kk, dk, version)
        want = (key.n_sites, key.two_sz, key.kappa_key, key.delta_key, key.code_version)
        if got != want:
            raise CacheError(f"{path}: header {got} does not match key {want}")
    n_blocks = 1 + (2 if flags & HAS_DIAG else 0)
    expected = HEADER.size + 8 * (n_blocks * dim + (dim * dim if flags & HAS_VECS else 0))
    if len(raw) != expected:
        raise CacheError(f"{path}: {len(raw)} bytes, expected {expected}")
    off = HEADER.size

    def take(count):
        nonlocal off
        arr = np.frombuffer(raw, dtype=_F8, count=count, offset=off).astype(np.float64)
        off += 8 * count
        return arr

    energies = take(dim)
    d_diag = d2_diag = vecs = None
    if flags & HAS_DIAG:
        d_diag, d2_diag = take(dim), take(dim)
    if flags & HAS_VECS:
        vecs = take(dim * dim).reshape(dim, dim)
    return Spectrum(energies, vecs, d_diag, d2_diag)


class SpectrumCache:
    """Directory of spectrum files keyed by :class:`CacheKey`."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path(self, key: CacheKey) -> Path:
        return self.directory / key.filename()

    def load(self, key: CacheKey) -> Optional[Spectrum]:
        p = self.path(key)
        if not p.exists():
            return None
        try:
            return read_spectrum(p, key)
        except CacheError as exc:
            logger.warning("ignoring unusable cache file: %s", exc)
            return None

    def store(self, key: CacheKey, spec: Spectrum):
        write_spectrum(self.path(key), key, spec)

    def get_or_compute(self, key: CacheKey, compute: Callable[[], Spectrum],
                       need_diag: bool = False) -> tuple:
        """(spectrum, hit).  A cached file lacking requested pieces counts as a miss."""
        spec = self.load(key)
        if spec is not None and (not need_diag or spec.d_diag is not None):
            return spec, True
        spec = compute()
        self.store(key, spec)
        return spec, False
