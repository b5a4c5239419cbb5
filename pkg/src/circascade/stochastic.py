"""Continuous-time jump-process simulator for the one-way cascade.

The jump order is deterministic (level l always relaxes to (l-1) % N), so
a trajectory is fully described by its dwell times: visit i sits in level
(start - i) % N for an Exponential(rates[level]) time and emits an event
labeled with the source level at the jump. Sampling is vectorized in
chunks; the RNG is counter-based (Philox keyed by seed and trajectory
index) so ensembles parallelize deterministically.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .model import (
    CascadeSpec,
    EventStream,
    InsufficientSamples,
    InvalidConfig,
    StreamInvariantViolation,
    validate,
)
from .spectral_general import steady_state

_CHUNK = 1 << 19
_BINARY_MAGIC = b"CEV1"


@dataclass(frozen=True)
class SimConfig:
    """One trajectory: spec, seed, stop condition and initial state.

    Exactly one of ``duration`` (observation window after burn-in) or
    ``total_events`` (events recorded after burn-in) must be set.
    ``initial_level=None`` draws the starting level from the steady state.
    """

    spec: CascadeSpec
    seed: int
    duration: float | None = None
    total_events: int | None = None
    initial_level: int | None = None
    burn_in: float = 0.0
    trajectory: int = 0


def _check_config(cfg: SimConfig) -> None:
    validate(cfg.spec)
    if (cfg.duration is None) == (cfg.total_events is None):
        raise InvalidConfig("set exactly one of duration or total_events")
    if cfg.duration is not None and cfg.duration <= 0:
        raise InvalidConfig("duration must be > 0")
    if cfg.total_events is not None and cfg.total_events < 1:
        raise InvalidConfig("total_events must be >= 1")
    if cfg.burn_in < 0:
        raise InvalidConfig("burn_in must be >= 0")
    if cfg.initial_level is not None and not 0 <= cfg.initial_level < cfg.spec.n_levels:
        raise InvalidConfig(
            f"initial_level {cfg.initial_level} outside [0, {cfg.spec.n_levels})"
        )


def _rng_for(cfg: SimConfig) -> np.random.Generator:
    key = np.array([cfg.seed, cfg.trajectory], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def simulate(config: SimConfig) -> EventStream:
    """Run one trajectory and return its event stream.

    Bit-identical output for identical config, independent of chunking or
    worker count. Timestamps are strictly increasing by construction
    (coincident rounding collisions are nudged by one ulp).
    """
    _check_config(config)
    spec = config.spec
    n = spec.n_levels
    rates = np.asarray(spec.rates, dtype=float)
    rng = _rng_for(config)

    if config.initial_level is None:
        start = int(rng.choice(n, p=steady_state(spec)))
    else:
        start = int(config.initial_level)

    horizon = None
    if config.duration is not None:
        horizon = config.burn_in + config.duration

    # expected number of draws; chunked sampling returns the same variates
    # as one monolithic call, so the chunk size never changes the stream
    event_rate = n / spec.cycle_time
    if config.total_events is not None:
        est = config.burn_in * event_rate + config.total_events
    else:
        est = horizon * event_rate
    chunk = min(_CHUNK, max(64, int(est + 4 * np.sqrt(est) + 16)))

    times_parts: list[np.ndarray] = []
    label_parts: list[np.ndarray] = []
    visit = 0
    base = 0.0          # accumulated time at the start of the current chunk
    comp = 0.0          # Kahan compensation for the chunk offsets
    recorded = 0
    while True:
        idx = visit + np.arange(chunk)
        levels = (start - idx) % n
        dwells = rng.standard_exponential(chunk) / rates[levels]
        stamps = base + (np.cumsum(dwells) - comp)
        visit += chunk
        chunk = min(_CHUNK, 2 * chunk)

        # compensated accumulation of the chunk total
        chunk_sum = float(dwells.sum())
        y = chunk_sum - comp
        t = base + y
        comp = (t - base) - y
        base = t

        keep = stamps > config.burn_in
        if horizon is not None:
            keep &= stamps <= horizon
        kept_times = stamps[keep]
        kept_labels = levels[keep]
        if config.total_events is not None:
            remaining = config.total_events - recorded
            kept_times = kept_times[:remaining]
            kept_labels = kept_labels[:remaining]
        times_parts.append(kept_times)
        label_parts.append(kept_labels.astype(np.int64))
        recorded += len(kept_times)

        if horizon is not None and stamps[-1] > horizon:
            break
        if config.total_events is not None and recorded >= config.total_events:
            break

    times = np.concatenate(times_parts) - config.burn_in
    labels = np.concatenate(label_parts)
    if len(times) == 0:
        raise InsufficientSamples("no events recorded; increase duration")

    # nudge coincident-rounding collisions up by one ulp (extremely rare)
    while True:
        bad = np.nonzero(np.diff(times) <= 0)[0]
        if len(bad) == 0:
            break
        times[bad + 1] = np.nextafter(times[bad], np.inf)

    if config.duration is not None:
        total = float(config.duration)
    else:
        total = float(times[-1])
    channels = tuple(times[labels == l] for l in range(n))
    return EventStream(channels, total, seed=config.seed, spec=spec)


def _dwell_segments(stream: EventStream) -> tuple[np.ndarray, np.ndarray]:
    """(durations, levels) of every occupation segment, censored ends included."""
    times, labels = stream.merged()
    n = stream.n_levels
    inner = np.diff(times)
    inner_levels = (labels[:-1] - 1) % n
    head = np.array([times[0] - 0.0])
    head_level = np.array([labels[0]])
    tail_end = max(float(stream.total_duration), float(times[-1]))
    tail = np.array([tail_end - times[-1]])
    tail_level = np.array([(labels[-1] - 1) % n])
    durations = np.concatenate([head, inner, tail])
    levels = np.concatenate([head_level, inner_levels, tail_level])
    return durations, levels


def time_weighted_occupancy(stream: EventStream) -> np.ndarray:
    """Fraction of the observation time spent in each level."""
    if min(stream.counts) == 0:
        missing = [l for l, c in enumerate(stream.counts) if c == 0]
        raise InsufficientSamples(f"levels never visited: channels {missing} empty")
    durations, levels = _dwell_segments(stream)
    totals = np.bincount(levels, weights=durations, minlength=stream.n_levels)
    return totals / totals.sum()


def occupancy_estimate(config: SimConfig) -> np.ndarray:
    """Simulate one trajectory and return its time-weighted occupancy."""
    return time_weighted_occupancy(simulate(config))


def occupancy_block_estimates(stream: EventStream, n_blocks: int = 100) -> np.ndarray:
    """Per-block occupancy estimates over contiguous cycle blocks.

    Rows are blocks; the row standard deviation / sqrt(n_blocks) is the
    batch-means standard error of the occupancy estimate.
    """
    durations, levels = _dwell_segments(stream)
    n = stream.n_levels
    usable = (len(durations) // n_blocks) * n_blocks
    if usable < n_blocks * n:
        raise InsufficientSamples("too few events for the requested block count")
    block = np.repeat(np.arange(n_blocks), usable // n_blocks)
    occ = np.zeros((n_blocks, n))
    for l in range(n):
        mask = levels[:usable] == l
        occ[:, l] = np.bincount(
            block[mask], weights=durations[:usable][mask], minlength=n_blocks
        )
    return occ / occ.sum(axis=1, keepdims=True)


def dwell_samples(stream: EventStream, level: int) -> np.ndarray:
    """Uncensored dwell times in one level (gaps preceding its departures)."""
    times, labels = stream.merged()
    idx = np.nonzero(labels[1:] == level)[0] + 1
    return times[idx] - times[idx - 1]


# ---------------------------------------------------------------------------
# Event stream file formats


def write_events_text(stream: EventStream, path) -> None:
    """Plain-text format: header line, then '<timestamp> <label>' per event."""
    times, labels = stream.merged()
    seed = stream.seed if stream.seed is not None else 0
    with open(path, "w") as fh:
        fh.write(
            f"# cascade-events v1 N={stream.n_levels} seed={seed} "
            f"T={stream.total_duration:.17g}\n"
        )
        fh.write(
            "\n".join(f"{t:.17g} {l}" for t, l in zip(times, labels.tolist()))
        )
        fh.write("\n")


def read_events_text(path) -> EventStream:
    with open(path) as fh:
        header = fh.readline().strip()
        fields = dict(
            part.split("=", 1) for part in header.split() if "=" in part
        )
        if not header.startswith("# cascade-events v1") or "N" not in fields:
            raise StreamInvariantViolation(f"bad event stream header: {header!r}")
        n = int(fields["N"])
        seed = int(fields["seed"])
        total = float(fields["T"])
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        raise StreamInvariantViolation("event stream file has no events")
    times = data[:, 0]
    labels = data[:, 1].astype(np.int64)
    if labels.min() < 0 or labels.max() >= n:
        raise StreamInvariantViolation("event label outside [0, N)")
    stream = EventStream(
        tuple(times[labels == l] for l in range(n)), total, seed=seed
    )
    stream.check()
    return stream


def write_events_binary(stream: EventStream, path) -> None:
    """Compact binary format, little-endian, bit-exact round trip.

    Layout: magic 'CEV1', u32 N, u64 seed, f64 T, u64 count, then count
    records of (f64 timestamp, u16 label).
    """
    times, labels = stream.merged()
    seed = stream.seed if stream.seed is not None else 0
    rec = np.zeros(len(times), dtype=np.dtype([("t", "<f8"), ("l", "<u2")]))
    rec["t"] = times
    rec["l"] = labels.astype(np.uint16)
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC)
        fh.write(struct.pack("<IQdQ", stream.n_levels, seed, stream.total_duration, len(times)))
        fh.write(rec.tobytes())


def read_events_binary(path) -> EventStream:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _BINARY_MAGIC:
            raise StreamInvariantViolation(f"bad magic {magic!r} in binary stream")
        n, seed, total, count = struct.unpack("<IQdQ", fh.read(28))
        raw = fh.read(count * 10)
    rec = np.frombuffer(raw, dtype=np.dtype([("t", "<f8"), ("l", "<u2")]), count=count)
    times = rec["t"].astype(np.float64)
    labels = rec["l"].astype(np.int64)
    if count and (labels.min() < 0 or labels.max() >= n):
        raise StreamInvariantViolation("event label outside [0, N)")
    stream = EventStream(
        tuple(times[labels == l] for l in range(n)), total, seed=int(seed)
    )
    stream.check()
    return stream
