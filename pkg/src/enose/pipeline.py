"""Streaming acquisition -> conductance -> filter -> events chain.

Rows are processed one at a time by per-channel state machines.  State per
channel is bounded: the baseline window buffer, three filter moments with
their covariance, and the encoder reference.  Output rows keep the order of
the input rows they derive from, so a time-sorted input gives a
``(timestamp, channel_id)``-sorted output.
"""

from __future__ import annotations

import enum
from collections import deque
from typing import IO, Iterable, Iterator, Optional, Sequence

from . import csvio
from .acquisition import BaselineNormalizer, raw_to_ratio
from .config import Config
from .errors import EnoseError, SchemaError
from .events import DeadbandEncoder, Polarity, Source
from .kalman import KalmanFilter


class Stage(enum.IntEnum):
    ACQUISITION = 0
    CONDUCTANCE = 1
    FILTER = 2
    EVENTS = 3


HEADERS = {
    Stage.ACQUISITION: csvio.ACQUISITION,
    Stage.CONDUCTANCE: csvio.CONDUCTANCE,
    Stage.FILTER: csvio.FILTERED,
    Stage.EVENTS: csvio.EVENTS,
}

_GAINS = {"1": 1, "2": 2, "4": 4, "1x": 1, "2x": 2, "4x": 4}


def stage_of_header(header: Sequence[str]) -> Stage:
    header = tuple(header)
    for stage, cols in HEADERS.items():
        if header == cols:
            return stage
    raise SchemaError(f"unrecognised header {','.join(header)!r}; expected one of: "
                      + "; ".join(",".join(c) for c in HEADERS.values()))


class ChannelProcessor:
    """Carries one channel from ``start`` up to ``end`` stage.

    Each ``push_*`` returns the outputs that became available, one entry per
    input row resolved (``None`` when that row produced no output).
    """

    def __init__(self, channel_id: str, start: Stage, end: Stage, cfg: Config):
        self.channel_id = channel_id
        self.start = start
        self.end = end
        self.last_t: Optional[float] = None
        self.normalizer = BaselineNormalizer(cfg["acquisition.baseline_s"]) if start == Stage.ACQUISITION else None
        self.kf = KalmanFilter(cfg.filter_config(channel_id)) if start <= Stage.CONDUCTANCE < end else None
        self.encoder = None
        self.discard_off = cfg["events.discard_off"]
        if end == Stage.EVENTS:
            source = Source.parse(cfg["events.source"])
            self.encoder = DeadbandEncoder(cfg.theta_for(source.value), source, channel_id)
        self.waiting: deque = deque()
        self.steady = None

    def _maybe_go_steady(self) -> None:
        """Install a one-call-per-row fast path once all warm-up state is set."""
        if self.normalizer is not None and self.normalizer.baseline is None:
            return
        if self.kf is not None and self.kf.t is None:
            return
        cid, end = self.channel_id, self.end
        kf_step = self.kf.step if self.kf is not None else None
        enc = self.encoder
        if enc is not None:
            enc_push = enc.push
            use_o = enc.source is Source.BOUT_VELOCITY
            discard_off = self.discard_off
            off = Polarity.OFF

        def after_filter(t, g_hat, o):
            ev = enc_push(t, o if use_o else g_hat)
            if ev is None or (discard_off and ev.polarity is off):
                return None
            return (ev.timestamp, cid, ev.source.value, ev.polarity.value, ev.value_at_event)

        def after_conductance(t, g):
            g_hat, v, a, o = kf_step(t, g)
            if end == Stage.FILTER:
                return (t, cid, g_hat, v, a, o)
            return after_filter(t, g_hat, o)

        if self.start == Stage.ACQUISITION:
            base = self.normalizer.baseline
            gains = _GAINS

            def steady(t, row):
                raw = int(row[2])
                gain = gains[row[3]]
                fs = (1 << (int(row[4]) - 1)) - 1
                if raw <= 0 or raw >= fs:
                    raise ValueError
                g_rel = 1.0 / (raw / (gain * fs)) - 1.0
                if end == Stage.CONDUCTANCE:
                    return (t, cid, g_rel, g_rel / base)
                return after_conductance(t, g_rel / base)
        elif self.start == Stage.CONDUCTANCE:
            def steady(t, row):
                float(row[2])
                return after_conductance(t, float(row[3]))
        else:
            def steady(t, row):
                float(row[3]), float(row[4])
                return after_filter(t, float(row[2]), float(row[5]))
        self.steady = steady

    def check_time(self, t: float, lineno: int) -> None:
        if self.last_t is not None and t < self.last_t:
            raise SchemaError(f"row {lineno}: timestamp {t!r} precedes {self.last_t!r} "
                              f"on channel {self.channel_id!r}")
        self.last_t = t

    def push_acquisition(self, t: float, raw: int, gain: int, bit_depth: int) -> list:
        x = raw_to_ratio(raw, gain, bit_depth)
        g_rel = 1.0 / x - 1.0
        ready = self.normalizer.push(t, g_rel)
        if self.end == Stage.CONDUCTANCE:
            cid = self.channel_id
            out = [(tt, cid, gr, g) for tt, gr, g in ready]
        else:
            out = [self.push_conductance(tt, gr, g)[0] for tt, gr, g in ready]
        if ready and self.steady is None:
            self._maybe_go_steady()
        return out

    def push_conductance(self, t: float, g_rel: float, g: float) -> list:
        kf = self.kf
        if kf.t is None:
            g_hat, v, a, o = kf.initialize(t, g)
            if self.start == Stage.CONDUCTANCE:
                self._maybe_go_steady()
        else:
            g_hat, v, a, o = kf.step(t, g)
        if self.end == Stage.FILTER:
            return [(t, self.channel_id, g_hat, v, a, o)]
        return self.push_filter(t, g_hat, v, a, o)

    def push_filter(self, t: float, g_hat: float, v: float, a: float, o: float) -> list:
        if self.start == Stage.FILTER and self.steady is None:
            self._maybe_go_steady()
        enc = self.encoder
        ev = enc.push(t, o if enc.source is Source.BOUT_VELOCITY else g_hat)
        if ev is None or (self.discard_off and ev.polarity is Polarity.OFF):
            return [None]
        return [(ev.timestamp, self.channel_id, ev.source.value, ev.polarity.value, ev.value_at_event)]

    def finish(self) -> None:
        if self.normalizer is not None:
            self.normalizer.finish()


class StreamProcessor:
    def __init__(self, cfg: Config, start: Stage, end: Stage):
        if end <= start:
            raise SchemaError(f"cannot go from {start.name.lower()} input to {end.name.lower()} output")
        self.cfg = cfg
        self.start = start
        self.end = end
        self.channels: dict[str, ChannelProcessor] = {}
        self.queue: deque = deque()

    def channel(self, cid: str) -> ChannelProcessor:
        proc = self.channels.get(cid)
        if proc is None:
            proc = self.channels[cid] = ChannelProcessor(cid, self.start, self.end, self.cfg)
        return proc

    def feed(self, lineno: int, row: list[str]) -> list:
        cid = row[1]
        proc = self.channels.get(cid) or self.channel(cid)
        t = csvio.parse_float(row[0], "timestamp_s", lineno)
        proc.check_time(t, lineno)
        steady = proc.steady
        if steady is not None and not self.queue:
            try:
                r = steady(t, row)
            except (ValueError, KeyError, ArithmeticError):
                pass   # redo on the checked path below for a proper diagnostic
            else:
                return [] if r is None else [r]
        try:
            if self.start == Stage.ACQUISITION:
                gain = _GAINS.get(row[3].strip().lower())
                if gain is None:
                    raise SchemaError(f"column gain: must be 1, 2 or 4, got {row[3]!r}")
                results = proc.push_acquisition(t, csvio.parse_int(row[2], "raw_code", lineno), gain,
                                                csvio.parse_int(row[4], "bit_depth", lineno))
            elif self.start == Stage.CONDUCTANCE:
                results = proc.push_conductance(t, csvio.parse_float(row[2], "g_rel", lineno),
                                                csvio.parse_float(row[3], "g", lineno))
            else:
                results = proc.push_filter(t, *(csvio.parse_float(row[i], csvio.FILTERED[i], lineno)
                                                for i in (2, 3, 4, 5)))
        except EnoseError as exc:
            msg = str(exc)
            if not msg.startswith("row "):
                msg = f"row {lineno}: {msg}"
            raise type(exc)(msg) from None

        queue = self.queue
        if not queue and not proc.waiting and len(results) == 1:
            r = results[0]
            return [] if r is None else [r]
        slot = [None, False]
        queue.append(slot)
        proc.waiting.append(slot)
        waiting = proc.waiting
        for r in results:
            s = waiting.popleft()
            s[0] = r
            s[1] = True
        out = []
        while queue and queue[0][1]:
            r = queue.popleft()[0]
            if r is not None:
                out.append(r)
        return out

    def close(self) -> None:
        for proc in self.channels.values():
            proc.finish()
        if self.queue:
            raise SchemaError("unresolved rows at end of input")


def _formatter(end: Stage):
    if end == Stage.EVENTS:
        return lambda r: (repr(r[0]), r[1], r[2], r[3], repr(r[4]))
    return lambda r: (repr(r[0]), r[1], *map(repr, r[2:]))


def process_stream(sources: Iterable, output: IO[str], cfg: Config,
                   end: Stage = Stage.EVENTS) -> int:
    """Run the chain over one or more CSV inputs sharing a schema.

    Returns the number of rows written.  The input stage is taken from the
    header of the first source.
    """
    sources = list(sources)
    w = csvio.writer(output)
    w.writerow(HEADERS[end])
    if not sources:
        return 0
    start = None
    proc = None
    written = 0
    writerow = w.writerow
    fmt = _formatter(end)
    for src in sources:
        header = _peek_header(src)
        if header is None:
            continue
        stage = stage_of_header(header)
        if start is None:
            start = stage
            proc = StreamProcessor(cfg, start, end)
        elif stage != start:
            raise SchemaError(f"{src}: header does not match the first input")
        for lineno, row in csvio.read_table(src, HEADERS[start]):
            for r in proc.feed(lineno, row):
                writerow(fmt(r))
                written += 1
    if proc is not None:
        proc.close()
    return written


def _peek_header(src) -> Optional[tuple]:
    """Header of ``src``, or ``None`` for a zero-byte file."""
    if hasattr(src, "read"):
        raise TypeError("process_stream takes file paths")
    with open(src, encoding="utf-8", newline="") as fh:
        if not fh.read(1):
            return None
    return csvio.read_header(src)


def process_rows(rows: Iterable[Sequence], cfg: Config, start: Stage, end: Stage) -> Iterator[tuple]:
    """In-memory variant of :func:`process_stream` over rows of the ``start`` schema."""
    proc = StreamProcessor(cfg, start, end)
    for lineno, row in enumerate(rows, start=2):
        yield from proc.feed(lineno, [v if isinstance(v, str) else (repr(v) if isinstance(v, float) else str(v))
                                      for v in row])
    proc.close()


def process_channel(channel_id: str, timestamps: Sequence[float], codes: Sequence[int],
                    gains: Sequence[int], bit_depth: int, cfg: Config,
                    end: Stage = Stage.EVENTS) -> list[tuple]:
    """Run one channel's raw frames through the chain, skipping CSV text.

    Produces the same values as :func:`process_stream` on the equivalent file.
    """
    proc = ChannelProcessor(channel_id, Stage.ACQUISITION, end, cfg)
    out = []
    push = proc.push_acquisition
    for lineno, (t, c, g) in enumerate(zip(timestamps, codes, gains), start=2):
        proc.check_time(t, lineno)
        out.extend(r for r in push(t, c, g, bit_depth) if r is not None)
    proc.finish()
    return out
