"""Word-embedding spaces: word2vec text/binary I/O and restricted cosine search."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_WORD_BYTES = 1000
_ENCODING = "utf-8"
# surrogateescape keeps arbitrary word bytes intact through decode/encode
_ERRORS = "surrogateescape"


class EmbeddingFormatError(ValueError):
    """Raised when an embedding file cannot be parsed."""


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    # scale by the max magnitude first so huge components cannot overflow the norm
    scale = np.max(np.abs(matrix), axis=-1, keepdims=True) if matrix.size else np.ones(
        matrix.shape[:-1] + (1,)
    )
    scale = np.where(scale > 0, scale, 1.0)
    scaled = matrix / scale
    norms = np.linalg.norm(scaled, axis=-1, keepdims=True)
    norms = np.where(norms > 0, norms, 1.0)
    return scaled / norms


@dataclass(frozen=True, eq=False)
class EmbeddingStore:
    """Frequency-ordered vocabulary with raw and unit-normalized vectors.

    Rows keep the order of the source file (word2vec writes them most frequent
    first), which is what the ``restrict`` argument of :meth:`nearest_words`
    relies on. Arrays are read-only; the store can be shared between threads.
    """

    vocab: tuple[str, ...]
    vectors: np.ndarray
    unit_vectors: np.ndarray = field(repr=False)
    word_index: dict[str, int] = field(repr=False)

    @classmethod
    def from_arrays(cls, vocab: Sequence[str], vectors) -> "EmbeddingStore":
        vocab = tuple(vocab)
        vectors = np.array(vectors, dtype=np.float64, copy=True)
        if vectors.ndim != 2 or vectors.shape[0] != len(vocab):
            raise ValueError(
                f"expected a {len(vocab)} x dim matrix, got shape {vectors.shape}"
            )
        if vectors.shape[1] < 1:
            raise ValueError("dimension must be positive")
        index: dict[str, int] = {}
        for i, word in enumerate(vocab):
            if word in index:
                raise ValueError(f"duplicate word {word!r} at row {i}")
            index[word] = i
        unit = _unit_rows(vectors)
        vectors.setflags(write=False)
        unit.setflags(write=False)
        return cls(vocab=vocab, vectors=vectors, unit_vectors=unit, word_index=index)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, word: str) -> bool:
        return word in self.word_index

    def vector_of(self, word: str) -> np.ndarray | None:
        """Raw vector for ``word`` or ``None`` when it is not in the vocabulary."""
        i = self.word_index.get(word)
        if i is None:
            return None
        return self.vectors[i]

    def indices_of(self, words: Iterable[str]) -> np.ndarray:
        return np.fromiter((self.word_index[w] for w in words), dtype=np.intp)

    def nearest_words(
        self,
        query,
        k: int = 1,
        restrict: int | None = None,
        exclude: Iterable[str] = (),
    ) -> list[tuple[str, float]]:
        """Top-``k`` words by cosine similarity to ``query``.

        Only the first ``restrict`` rows are candidates (all rows when None);
        words in ``exclude`` are skipped. Ties go to the lower row index.
        An all-zero query scores 0 against everything.
        """
        query = np.asarray(query, dtype=np.float64)
        if query.shape != (self.dim,):
            raise ValueError(f"query has shape {query.shape}, expected ({self.dim},)")
        if k < 1:
            raise ValueError("k must be >= 1")
        if not np.all(np.isfinite(query)):
            raise ValueError("query vector has non-finite components")
        limit = self._limit(restrict)
        scores = self.unit_vectors[:limit] @ _unit_rows(query)
        for word in exclude:
            i = self.word_index.get(word)
            if i is not None and i < limit:
                scores[i] = -np.inf
        order = np.argsort(-scores, kind="stable")
        hits = []
        for i in order[:k]:
            if scores[i] == -np.inf:
                break
            hits.append((self.vocab[i], float(scores[i])))
        return hits

    def nearest_indices(
        self,
        queries: np.ndarray,
        restrict: int | None = None,
        exclude: np.ndarray | None = None,
        chunk_bytes: int = 1 << 27,
    ) -> np.ndarray:
        """Row index of the best cosine match for each row of ``queries``.

        ``exclude`` is an ``(n, m)`` integer array of rows banned per query.
        Queries must be finite. Work is chunked so the score matrix stays
        below ``chunk_bytes``.
        """
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        limit = self._limit(restrict)
        n = queries.shape[0]
        out = np.empty(n, dtype=np.intp)
        if limit == 0:
            raise ValueError("no candidate words (empty vocabulary)")
        units = _unit_rows(queries)
        candidates = self.unit_vectors[:limit]
        step = max(1, chunk_bytes // (8 * limit))
        for start in range(0, n, step):
            stop = min(n, start + step)
            scores = units[start:stop] @ candidates.T
            if exclude is not None:
                rows = np.arange(stop - start)[:, None]
                banned = exclude[start:stop]
                mask = banned < limit
                scores[np.broadcast_to(rows, banned.shape)[mask], banned[mask]] = -np.inf
            out[start:stop] = np.argmax(scores, axis=1)
        return out

    def _limit(self, restrict: int | None) -> int:
        if restrict is None:
            return len(self.vocab)
        if restrict < 0:
            raise ValueError("restrict must be non-negative")
        return min(restrict, len(self.vocab))


def load_text_embeddings(path: str | os.PathLike, limit: int | None = None) -> EmbeddingStore:
    """Read the word2vec text format (``<count> <dim>`` header, one word per line)."""
    with open(path, "rb") as fh:
        header = fh.readline()
        count, dim = _parse_header(header)
        if limit is not None:
            count = min(count, limit)
        vocab: list[str] = []
        vectors = np.empty((count, dim), dtype=np.float64)
        seen: dict[str, int] = {}
        for row in range(count):
            lineno = row + 2
            raw = fh.readline()
            if not raw:
                raise EmbeddingFormatError(
                    f"line {lineno}: file ends after {row} of {count} words"
                )
            parts = raw.decode(_ENCODING, _ERRORS).rstrip("\r\n").rstrip(" ").split(" ")
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise EmbeddingFormatError(
                    f"line {lineno}: expected {dim} components, got {len(values)}"
                )
            if word in seen:
                raise EmbeddingFormatError(
                    f"line {lineno}: duplicate word {word!r} (first on line {seen[word]})"
                )
            seen[word] = lineno
            try:
                vectors[row] = [float(v) for v in values]
            except ValueError as exc:
                raise EmbeddingFormatError(f"line {lineno}: {exc}") from None
            vocab.append(word)
    return EmbeddingStore.from_arrays(vocab, vectors)


def load_binary_embeddings(
    path: str | os.PathLike,
    limit: int | None = None,
    max_word_bytes: int = MAX_WORD_BYTES,
) -> EmbeddingStore:
    """Read the word2vec binary format (little-endian float32 payload)."""
    with open(path, "rb") as fh:
        data = fh.read()
    newline = data.find(b"\n")
    if newline < 0:
        raise EmbeddingFormatError("missing header line")
    count, dim = _parse_header(data[: newline + 1])
    if limit is not None:
        count = min(count, limit)
    width = 4 * dim
    pos = newline + 1
    vocab: list[str] = []
    offsets = np.empty(count, dtype=np.int64)
    seen: set[str] = set()
    for i in range(count):
        # the newline written after each vector is optional
        while pos < len(data) and data[pos] == 0x0A:
            pos += 1
        space = data.find(b" ", pos, pos + max_word_bytes + 1)
        if space < 0:
            if len(data) - pos <= max_word_bytes:
                raise EmbeddingFormatError(f"truncated file at word {i}")
            raise EmbeddingFormatError(
                f"word {i} longer than {max_word_bytes} bytes"
            )
        word = data[pos:space].decode(_ENCODING, _ERRORS)
        if word in seen:
            raise EmbeddingFormatError(f"duplicate word {word!r} at word {i}")
        seen.add(word)
        start = space + 1
        if start + width > len(data):
            raise EmbeddingFormatError(
                f"truncated file at word {i} ({word!r}): vector incomplete"
            )
        offsets[i] = start
        vocab.append(word)
        pos = start + width
    buf = np.frombuffer(data, dtype=np.uint8)
    vectors = np.empty((count, dim), dtype=np.float64)
    span = np.arange(width)
    step = max(1, (1 << 24) // width)
    for lo in range(0, count, step):
        hi = min(count, lo + step)
        chunk = buf[offsets[lo:hi, None] + span]
        vectors[lo:hi] = chunk.view("<f4").reshape(hi - lo, dim)
    return EmbeddingStore.from_arrays(vocab, vectors)


def save_binary_embeddings(store: EmbeddingStore, path: str | os.PathLike) -> None:
    """Write ``store`` in word2vec binary format; vectors are stored as float32."""
    with open(path, "wb") as fh:
        fh.write(f"{len(store)} {store.dim}\n".encode("ascii"))
        payload = store.vectors.astype("<f4")
        for word, row in zip(store.vocab, payload):
            fh.write(word.encode(_ENCODING, _ERRORS) + b" ")
            fh.write(row.tobytes())
            fh.write(b"\n")


def save_text_embeddings(store: EmbeddingStore, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(f"{len(store)} {store.dim}\n".encode("ascii"))
        for word, row in zip(store.vocab, store.vectors):
            line = word + " " + " ".join(repr(float(v)) for v in row) + "\n"
            fh.write(line.encode(_ENCODING, _ERRORS))


def load_embeddings(path: str | os.PathLike, fmt: str = "auto", limit: int | None = None) -> EmbeddingStore:
    """Dispatch on ``fmt`` (``text``, ``binary`` or ``auto`` by file extension)."""
    if fmt == "auto":
        fmt = "binary" if str(path).endswith(".bin") else "text"
    if fmt == "binary":
        return load_binary_embeddings(path, limit=limit)
    if fmt == "text":
        return load_text_embeddings(path, limit=limit)
    raise ValueError(f"unknown embedding format {fmt!r}")


def _parse_header(line: bytes) -> tuple[int, int]:
    try:
        count_s, dim_s = line.decode("ascii").split()
        count, dim = int(count_s), int(dim_s)
    except (UnicodeDecodeError, ValueError):
        raise EmbeddingFormatError(
            f"malformed header {line[:60]!r}: expected '<vocab_count> <dim>'"
        ) from None
    if count < 0 or dim < 1:
        raise EmbeddingFormatError(f"invalid header values count={count} dim={dim}")
    return count, dim
