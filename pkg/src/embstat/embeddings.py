"""Loading pre-trained word vectors and averaging them into sentence vectors.

Two on-disk formats are supported:

* text (GloVe / fastText ``.vec``): one ``token v1 ... vD`` line per word,
  optionally preceded by a ``N D`` header line;
* word2vec binary: an ASCII ``N D`` header, then for each word the token
  bytes, a single space and ``D`` little-endian float32 values.

Everything is widened to float64 after ingestion.
"""

from __future__ import annotations

import logging
import unicodedata
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import EmbeddingFormatError

logger = logging.getLogger(__name__)

_CHUNK = 1 << 20


@dataclass(frozen=True)
class EmbeddingTable:
    """Immutable vocabulary -> vector mapping.

    Rows of ``vectors`` follow the order of ``tokens``. ``duplicates`` and
    ``skipped`` record what the loader dropped.
    """

    tokens: tuple[str, ...]
    vectors: np.ndarray
    source_label: str = ""
    duplicates: int = 0
    skipped: int = 0
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64, copy=True)
        tokens = tuple(self.tokens)
        if vectors.ndim != 2 or vectors.shape[1] < 1:
            raise ValueError("vectors must be a 2-D array with at least one column")
        if vectors.shape[0] != len(tokens):
            raise ValueError(
                f"{len(tokens)} tokens but {vectors.shape[0]} vectors"
            )
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding vectors must be finite")
        index = {}
        for i, tok in enumerate(tokens):
            if not tok:
                raise ValueError("tokens must be non-empty strings")
            if tok in index:
                raise ValueError(f"duplicate token {tok!r}")
            index[tok] = i
        vectors.flags.writeable = False
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "index", index)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Sequence[float]], source_label=""):
        tokens = list(mapping)
        if not tokens:
            raise ValueError("empty mapping")
        return cls(tuple(tokens), np.array([mapping[t] for t in tokens], dtype=np.float64),
                   source_label=source_label)

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __getitem__(self, token) -> np.ndarray:
        return self.vectors[self.index[token]]

    def get(self, token, default=None):
        i = self.index.get(token)
        return default if i is None else self.vectors[i]

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for tok, vec in zip(self.tokens, self.vectors):
            yield tok, vec


@dataclass(frozen=True)
class SentenceVector:
    values: np.ndarray
    token_count: int

    @property
    def degenerate(self) -> bool:
        """True when no token was found; such vectors must not be compared."""
        return self.token_count == 0


class _Builder:
    """Accumulates rows, dropping duplicate tokens (first occurrence wins)."""

    def __init__(self, limit):
        self.limit = limit
        self.tokens = []
        self.rows = []
        self.seen = set()
        self.duplicates = 0

    @property
    def full(self):
        return self.limit is not None and len(self.tokens) >= self.limit

    def add(self, token, row):
        if token in self.seen:
            self.duplicates += 1
            return
        self.seen.add(token)
        self.tokens.append(token)
        self.rows.append(row)

    def build(self, dimension, label, skipped):
        if self.rows:
            vectors = np.vstack(self.rows).astype(np.float64, copy=False)
        else:
            vectors = np.empty((0, dimension))
        if self.duplicates:
            logger.info("%s: dropped %d duplicate tokens", label, self.duplicates)
        return EmbeddingTable(tuple(self.tokens), vectors, source_label=label,
                              duplicates=self.duplicates, skipped=skipped)


def _check_limit(limit):
    if limit is not None and limit < 1:
        raise ValueError("limit must be a positive integer")


def _is_int(s):
    try:
        int(s)
    except ValueError:
        return False
    return True


def iter_text_embeddings(reader: BinaryIO, *, source_label="",
                         counts: dict | None = None) -> Iterator[tuple[str, np.ndarray]]:
    """Yield ``(token, vector)`` pairs from a text embedding stream.

    This is the streaming core of :func:`load_text_embeddings`; duplicates
    are yielded as-is. If ``counts`` is given, its ``"skipped"`` entry is
    kept up to date with the number of rejected lines.
    """
    if counts is None:
        counts = {}
    counts["skipped"] = 0
    dimension = None
    declared = None
    saw_any = False
    for lineno, raw in enumerate(reader, start=1):
        saw_any = True
        try:
            line = raw.decode("utf-8")
        except UnicodeDecodeError:
            counts["skipped"] += 1
            continue
        # split(" ") keeps exotic whitespace inside tokens; trailing blanks
        # are common in GloVe releases.
        fields = line.rstrip("\r\n").rstrip(" ").split(" ")
        if fields == [""]:
            continue
        if lineno == 1 and len(fields) == 2 and _is_int(fields[0]) and _is_int(fields[1]):
            declared = int(fields[1])
            if declared < 1:
                raise EmbeddingFormatError(f"header declares dimension {declared}",
                                           line=lineno, source=source_label)
            continue
        if dimension is not None and len(fields) != dimension + 1:
            counts["skipped"] += 1
            continue
        if len(fields) < 2 or not fields[0]:
            counts["skipped"] += 1
            continue
        try:
            row = np.array(fields[1:], dtype=np.float64)
        except ValueError:
            counts["skipped"] += 1
            continue
        if not np.all(np.isfinite(row)):
            counts["skipped"] += 1
            continue
        if dimension is None:
            dimension = row.size
            if declared is not None and declared != dimension:
                raise EmbeddingFormatError(
                    f"header declares dimension {declared} but first vector has {dimension}",
                    line=lineno, source=source_label)
        yield fields[0], row
    if not saw_any:
        raise EmbeddingFormatError("empty stream", source=source_label)
    if dimension is None:
        raise EmbeddingFormatError("no parseable embedding line", source=source_label)


def load_text_embeddings(reader: BinaryIO, limit: int | None = None, *,
                         source_label="", keep: Iterable[str] | None = None) -> EmbeddingTable:
    """Read a GloVe/fastText text file.

    Parameters
    ----------
    reader : binary file object
        UTF-8 lines of ``token v1 ... vD``. A first line made of exactly
        two integers is taken as a fastText ``N D`` header.
    limit : int, optional
        Stop after this many distinct tokens.
    keep : iterable of str, optional
        Retain only these tokens (applied before ``limit``). Useful for
        evaluating on a task vocabulary without holding millions of rows.

    Lines whose field count disagrees with the first vector, or that hold
    unparseable or non-finite numbers, are skipped and counted in
    ``EmbeddingTable.skipped``.
    """
    _check_limit(limit)
    keep = None if keep is None else set(keep)
    builder = _Builder(limit)
    counts = {}
    dimension = None
    for token, row in iter_text_embeddings(reader, source_label=source_label, counts=counts):
        dimension = row.size
        if keep is not None and token not in keep:
            continue
        builder.add(token, row)
        if builder.full:
            break
    skipped = counts["skipped"]
    if skipped:
        logger.info("%s: skipped %d malformed lines", source_label or "<stream>", skipped)
    return builder.build(dimension, source_label, skipped)


class _ByteCursor:
    """Chunked reader that tracks the absolute byte offset."""

    def __init__(self, reader):
        self.reader = reader
        self.buf = b""
        self.pos = 0
        self.offset = 0  # absolute offset of buf[0]

    @property
    def tell(self):
        return self.offset + self.pos

    def _fill(self):
        chunk = self.reader.read(_CHUNK)
        if not chunk:
            return False
        self.offset += self.pos
        self.buf = self.buf[self.pos:] + chunk
        self.pos = 0
        return True

    def read_until(self, delim: bytes):
        """Return bytes up to (excluding) ``delim``; ``None`` at clean EOF."""
        while True:
            j = self.buf.find(delim, self.pos)
            if j >= 0:
                out = self.buf[self.pos:j]
                self.pos = j + 1
                return out
            if not self._fill():
                if self.pos < len(self.buf):
                    raise EmbeddingFormatError("stream ends inside a token", offset=self.tell)
                return None

    def read_exact(self, n):
        while len(self.buf) - self.pos < n:
            if not self._fill():
                raise EmbeddingFormatError(
                    f"truncated stream: needed {n} bytes, got {len(self.buf) - self.pos}",
                    offset=self.tell)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def skip_newlines(self):
        while True:
            if self.pos >= len(self.buf) and not self._fill():
                return
            if self.buf[self.pos:self.pos + 1] != b"\n":
                return
            self.pos += 1


def load_word2vec_binary(reader: BinaryIO, limit: int | None = None, *, source_label="",
                         keep: Iterable[str] | None = None,
                         unicode_errors="strict") -> EmbeddingTable:
    """Read the original word2vec ``.bin`` format.

    Values are stored as 32-bit little-endian floats and widened to float64.
    Raises :class:`EmbeddingFormatError` carrying the byte offset when the
    header is malformed, the stream is truncated or a value is not finite.
    """
    _check_limit(limit)
    keep = None if keep is None else set(keep)
    cur = _ByteCursor(reader)
    header = cur.read_until(b"\n")
    if header is None:
        raise EmbeddingFormatError("empty stream", offset=0, source=source_label)
    parts = header.split()
    if len(parts) != 2 or not all(_is_int(p) for p in parts):
        raise EmbeddingFormatError(f"header must be two integers, got {header[:40]!r}",
                                   offset=0, source=source_label)
    count, dimension = (int(p) for p in parts)
    if count < 0 or dimension < 1:
        raise EmbeddingFormatError(f"invalid header {count} {dimension}", offset=0,
                                   source=source_label)
    want = count if limit is None else min(count, limit)
    nbytes = 4 * dimension
    builder = _Builder(want)
    for _ in range(count):
        if builder.full:
            break
        cur.skip_newlines()
        start = cur.tell
        raw = cur.read_until(b" ")
        if raw is None:
            raise EmbeddingFormatError(
                f"truncated stream: expected {count} words, read {len(builder.tokens)}",
                offset=start, source=source_label)
        try:
            token = raw.decode("utf-8", errors=unicode_errors)
        except UnicodeDecodeError as exc:
            raise EmbeddingFormatError(f"token is not valid UTF-8: {exc}", offset=start,
                                       source=source_label) from None
        vec_offset = cur.tell
        row = np.frombuffer(cur.read_exact(nbytes), dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(row)):
            bad = int(np.argmin(np.isfinite(row)))
            raise EmbeddingFormatError(f"non-finite value in vector of {token!r}",
                                       offset=vec_offset + 4 * bad, source=source_label)
        if not token:
            raise EmbeddingFormatError("empty token", offset=start, source=source_label)
        if keep is not None and token not in keep:
            continue
        builder.add(token, row)
    return builder.build(dimension, source_label, 0)


def write_text_embeddings(table: EmbeddingTable, writer: BinaryIO, *, header=False):
    """Write ``table`` in text format; ``header=True`` adds a fastText header."""
    if header:
        writer.write(f"{len(table)} {table.dimension}\n".encode())
    for token, vec in table.items():
        writer.write((token + " " + " ".join(repr(float(v)) for v in vec) + "\n").encode("utf-8"))


def write_word2vec_binary(table: EmbeddingTable, writer: BinaryIO):
    """Write ``table`` in word2vec binary format (values narrowed to float32)."""
    writer.write(f"{len(table)} {table.dimension}\n".encode())
    for token, vec in table.items():
        writer.write(token.encode("utf-8") + b" ")
        writer.write(np.asarray(vec, dtype="<f4").tobytes())
        writer.write(b"\n")


def load_embeddings(path, fmt: str, limit=None, keep=None) -> EmbeddingTable:
    """Open ``path`` and dispatch on ``fmt`` (``"text"`` or ``"word2vec-bin"``)."""
    if fmt not in ("text", "word2vec-bin"):
        raise ValueError(f"unknown embedding format {fmt!r}")
    with open(path, "rb", buffering=_CHUNK) as fh:
        if fmt == "text":
            return load_text_embeddings(fh, limit, source_label=str(path), keep=keep)
        return load_word2vec_binary(fh, limit, source_label=str(path), keep=keep)


def _is_punct(ch):
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    """Whitespace tokenizer that strips punctuation from token edges.

    >>> tokenize("The cat.")
    ['the', 'cat']
    >>> tokenize("don't  stop")
    ["don't", 'stop']
    """
    if lowercase:
        text = text.lower()
    out = []
    for tok in text.split():
        start, end = 0, len(tok)
        while start < end and _is_punct(tok[start]):
            start += 1
        while end > start and _is_punct(tok[end - 1]):
            end -= 1
        if start < end:
            out.append(tok[start:end])
    return out


def sentence_embed(table: EmbeddingTable, tokens: Iterable[str]) -> SentenceVector:
    """Average the vectors of in-vocabulary tokens; unknown tokens are skipped."""
    rows = [table.index[t] for t in tokens if t in table.index]
    if not rows:
        return SentenceVector(np.zeros(table.dimension), 0)
    if len(rows) == 1:
        values = table.vectors[rows[0]].copy()
    else:
        # sort so the float summation order (and result) ignores token order
        values = np.mean(table.vectors[sorted(rows)], axis=0)
    return SentenceVector(values, len(rows))
