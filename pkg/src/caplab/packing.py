"""Stream accumulator: packs variable-length sequences into fixed-capacity batches.

Sequences arrive as a stream and are buffered one micro batch at a time;
within each window greedy first-fit fills as few fixed-capacity batches as
possible. Sequences are never split across batches, and segment boundary
metadata is kept so consumers can mask cross-sample attention. Overlong
sequences are rejected with a record, never truncated.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Iterator


class PackingError(Exception):
    pass


@dataclass(frozen=True)
class TokenSequence:
    sample_id: str
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"length must be >= 1, got {self.length}")


@dataclass(frozen=True)
class Segment:
    sample_id: str
    offset: int
    length: int


@dataclass(frozen=True)
class PackedBatch:
    capacity: int
    segments: tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {self.capacity}")
        if not self.segments:
            raise ValueError("a packed batch must contain at least one segment")
        expected_offset = 0
        for seg in self.segments:
            if seg.offset != expected_offset:
                raise ValueError(
                    f"segments must be contiguous from 0; expected offset "
                    f"{expected_offset}, got {seg.offset}"
                )
            expected_offset += seg.length
        if expected_offset > self.capacity:
            raise ValueError(f"used {expected_offset} exceeds capacity {self.capacity}")

    @property
    def used(self) -> int:
        return sum(s.length for s in self.segments)

    @property
    def pad(self) -> int:
        return self.capacity - self.used

    def to_json_obj(self) -> dict:
        return {
            "capacity": self.capacity,
            "used": self.used,
            "pad": self.pad,
            "segments": [
                {"sample_id": s.sample_id, "offset": s.offset, "length": s.length}
                for s in self.segments
            ],
        }


@dataclass(frozen=True)
class Rejection:
    sample_id: str
    length: int
    reason: str


class _OpenBatch:
    __slots__ = ("segments", "used")

    def __init__(self):
        self.segments: list[Segment] = []
        self.used = 0

    def fits(self, length: int, capacity: int) -> bool:
        return self.used + length <= capacity

    def place(self, seq: TokenSequence) -> None:
        self.segments.append(Segment(seq.sample_id, self.used, seq.length))
        self.used += seq.length


class StreamPacker:
    """Single-producer single-consumer packer over one input stream.

    ``rejections`` accumulates overlong sequences as the stream is consumed;
    ``peak_buffered`` tracks the most sequences ever held in memory, which
    stays at or below the micro batch size.
    """

    def __init__(self, capacity: int, micro_batch_size: int):
        if capacity < 1:
            raise PackingError(f"capacity must be >= 1, got {capacity}")
        if micro_batch_size < 1:
            raise PackingError(f"micro_batch_size must be >= 1, got {micro_batch_size}")
        self.capacity = capacity
        self.micro_batch_size = micro_batch_size
        self.rejections: list[Rejection] = []
        self.peak_buffered = 0

    def _pack_window(self, window: list[TokenSequence]) -> Iterator[PackedBatch]:
        bins: list[_OpenBatch] = []
        for seq in window:
            for b in bins:
                if b.fits(seq.length, self.capacity):
                    b.place(seq)
                    break
            else:
                b = _OpenBatch()
                b.place(seq)
                bins.append(b)
        for b in bins:
            yield PackedBatch(capacity=self.capacity, segments=tuple(b.segments))

    def pack(self, stream: Iterable[TokenSequence]) -> Iterator[PackedBatch]:
        window: list[TokenSequence] = []
        for seq in stream:
            if seq.length > self.capacity:
                self.rejections.append(
                    Rejection(
                        sample_id=seq.sample_id,
                        length=seq.length,
                        reason=f"length {seq.length} exceeds capacity {self.capacity}",
                    )
                )
                continue
            window.append(seq)
            self.peak_buffered = max(self.peak_buffered, len(window))
            if len(window) >= self.micro_batch_size:
                yield from self._pack_window(window)
                window = []
        if window:
            yield from self._pack_window(window)


def pack(
    stream: Iterable[TokenSequence], capacity: int, micro_batch_size: int
) -> tuple[list[PackedBatch], list[Rejection]]:
    """Convenience wrapper that drains the stream eagerly."""
    packer = StreamPacker(capacity, micro_batch_size)
    batches = list(packer.pack(stream))
    return batches, packer.rejections


def padding_waste(batches: Iterable[PackedBatch]) -> float:
    """Fraction of batch capacity spent on padding."""
    total_pad = 0
    total_capacity = 0
    for b in batches:
        total_pad += b.pad
        total_capacity += b.capacity
    if total_capacity == 0:
        raise PackingError("no batches")
    return total_pad / total_capacity


def naive_padding_waste(lengths: Iterable[int], capacity: int) -> float:
    """Waste of one-sequence-per-batch padding to full capacity."""
    total_pad = 0
    n = 0
    for length in lengths:
        if length > capacity:
            continue
        total_pad += capacity - length
        n += 1
    if n == 0:
        raise PackingError("no packable sequences")
    return total_pad / (n * capacity)


def lognormal_lengths(n: int, mu: float, sigma: float, capacity: int, seed: int) -> list[int]:
    rng = random.Random(seed)
    return [max(1, min(capacity, int(rng.lognormvariate(mu, sigma)))) for _ in range(n)]


@dataclass(frozen=True)
class BenchmarkResult:
    n_sequences: int
    n_batches: int
    packed_waste: float
    naive_waste: float
    rejected: int

    def to_json_obj(self) -> dict:
        return dict(self.__dict__)


def benchmark(
    lengths: Iterable[int], capacity: int, micro_batch_size: int
) -> BenchmarkResult:
    lengths = list(lengths)
    stream = (TokenSequence(f"s{i}", ln) for i, ln in enumerate(lengths))
    batches, rejections = pack(stream, capacity, micro_batch_size)
    return BenchmarkResult(
        n_sequences=len(lengths),
        n_batches=len(batches),
        packed_waste=padding_waste(batches),
        naive_waste=naive_padding_waste(lengths, capacity),
        rejected=len(rejections),
    )
