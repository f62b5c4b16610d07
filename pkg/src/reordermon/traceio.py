"""Trace ingestion, the columnar packet representation, and the synthetic
trace generator.

The canonical on-disk format is a text CSV (header
``ts,src_ip,dst_ip,src_port,dst_port,seq,payload_len``) so fixtures stay
reviewable; raw capture formats are out of scope.  Ingestion applies the
standard preprocessing: zero-payload rows are dropped (sequence numbers
cannot advance without payload) and ``filter_server_to_client`` keeps the
server-to-client direction using a port heuristic.

``PacketArrays`` is the columnar twin of a list of ``PacketRecord``; the
batch detector path and the generator work on it directly so multi-million
packet traces stay cheap.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Union

import numpy as np

from .model import FlowId, PacketRecord, PREFIX_MASK, int_to_ip, ip_to_int

TRACE_HEADER = "ts,src_ip,dst_ip,src_port,dst_port,seq,payload_len"
SIDECAR_HEADER = "flow_key,injected_displacements"


class TraceFormatError(ValueError):
    """Raised for malformed trace input; the message names the line."""


@dataclass(frozen=True, slots=True)
class TraceMeta:
    packet_count: int
    flow_count: int
    prefix_count: int
    duration_seconds: float


@dataclass
class PacketArrays:
    """Column-oriented packet trace.

    ``flow_id`` indexes the per-flow tables; packets of one flow share one
    id.  Timestamps are nondecreasing in packet order.
    """

    ts: np.ndarray
    seq: np.ndarray
    payload_len: np.ndarray
    flow_id: np.ndarray
    flow_src_ip: np.ndarray
    flow_dst_ip: np.ndarray
    flow_src_port: np.ndarray
    flow_dst_port: np.ndarray

    def __len__(self) -> int:
        return len(self.ts)

    @property
    def flow_count(self) -> int:
        return len(self.flow_src_ip)

    @property
    def flow_prefix_bits(self) -> np.ndarray:
        return self.flow_src_ip & np.int64(PREFIX_MASK)

    def flow(self, fid: int) -> FlowId:
        return FlowId(
            int(self.flow_src_ip[fid]),
            int(self.flow_dst_ip[fid]),
            int(self.flow_src_port[fid]),
            int(self.flow_dst_port[fid]),
        )

    def meta(self) -> TraceMeta:
        duration = float(self.ts[-1] - self.ts[0]) if len(self) >= 2 else 0.0
        prefixes = np.unique(self.flow_prefix_bits[np.unique(self.flow_id)])
        return TraceMeta(
            packet_count=len(self),
            flow_count=int(np.unique(self.flow_id).size),
            prefix_count=int(prefixes.size),
            duration_seconds=duration,
        )

    @classmethod
    def from_records(cls, records: Iterable[PacketRecord]) -> "PacketArrays":
        flow_index: dict[FlowId, int] = {}
        fids, seqs, lens, tss = [], [], [], []
        for rec in records:
            fid = flow_index.get(rec.flow)
            if fid is None:
                fid = len(flow_index)
                flow_index[rec.flow] = fid
            fids.append(fid)
            seqs.append(rec.seq)
            lens.append(rec.payload_len)
            tss.append(rec.ts)
        flows = list(flow_index)
        return cls(
            ts=np.asarray(tss, dtype=np.float64),
            seq=np.asarray(seqs, dtype=np.int64),
            payload_len=np.asarray(lens, dtype=np.int64),
            flow_id=np.asarray(fids, dtype=np.int64),
            flow_src_ip=np.asarray([f.src_ip for f in flows], dtype=np.int64),
            flow_dst_ip=np.asarray([f.dst_ip for f in flows], dtype=np.int64),
            flow_src_port=np.asarray([f.src_port for f in flows], dtype=np.int64),
            flow_dst_port=np.asarray([f.dst_port for f in flows], dtype=np.int64),
        )

    def to_records(self) -> list[PacketRecord]:
        flows = [self.flow(fid) for fid in range(self.flow_count)]
        out = []
        for fid, seq, length, ts in zip(
            self.flow_id.tolist(),
            self.seq.tolist(),
            self.payload_len.tolist(),
            self.ts.tolist(),
        ):
            out.append(PacketRecord(flows[fid], seq, length, ts))
        return out


Source = Union[str, Path, IO[str]]


def _open_text(source: Source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="ascii"), True
    return source, False


def parse_trace(source: Source) -> tuple[list[PacketRecord], TraceMeta]:
    """Read the canonical CSV into records, dropping zero-payload rows.

    Raises ``TraceFormatError`` (with a line number) on malformed rows and
    on decreasing timestamps.
    """
    handle, owned = _open_text(source)
    try:
        header = handle.readline().rstrip("\n")
        if header != TRACE_HEADER:
            raise TraceFormatError(f"line 1: expected header {TRACE_HEADER!r}")
        records: list[PacketRecord] = []
        flows: set[FlowId] = set()
        prefixes: set[int] = set()
        prev_ts = -math.inf
        for lineno, line in enumerate(handle, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise TraceFormatError(f"line {lineno}: expected 7 fields, got {len(parts)}")
            try:
                ts = float(parts[0])
                src_ip = ip_to_int(parts[1])
                dst_ip = ip_to_int(parts[2])
                src_port = int(parts[3])
                dst_port = int(parts[4])
                seq = int(parts[5])
                payload_len = int(parts[6])
            except ValueError as exc:
                raise TraceFormatError(f"line {lineno}: {exc}") from exc
            if seq < 0 or payload_len < 0:
                raise TraceFormatError(f"line {lineno}: negative seq or payload_len")
            if not (0 <= src_port <= 0xFFFF and 0 <= dst_port <= 0xFFFF):
                raise TraceFormatError(f"line {lineno}: port out of range")
            if ts < prev_ts:
                raise TraceFormatError(f"line {lineno}: decreasing timestamp")
            prev_ts = ts
            if payload_len == 0:
                continue
            flow = FlowId(src_ip, dst_ip, src_port, dst_port)
            records.append(PacketRecord(flow, seq, payload_len, ts))
            flows.add(flow)
            prefixes.add(src_ip & PREFIX_MASK)
        duration = records[-1].ts - records[0].ts if len(records) >= 2 else 0.0
        meta = TraceMeta(len(records), len(flows), len(prefixes), duration)
        return records, meta
    finally:
        if owned:
            handle.close()


def serialize_trace(records: Iterable[PacketRecord], dest: IO[str]) -> None:
    """Write records in the canonical CSV form; round-trips exactly."""
    dest.write(TRACE_HEADER + "\n")
    for rec in records:
        dest.write(
            f"{rec.ts!r},{int_to_ip(rec.flow.src_ip)},{int_to_ip(rec.flow.dst_ip)},"
            f"{rec.flow.src_port},{rec.flow.dst_port},{rec.seq},{rec.payload_len}\n"
        )


def trace_to_string(records: Iterable[PacketRecord]) -> str:
    buf = io.StringIO()
    serialize_trace(records, buf)
    return buf.getvalue()


def write_trace_csv(arrays: "PacketArrays", dest: IO[str]) -> None:
    """Columnar twin of ``serialize_trace``; same byte-for-byte format."""
    src = [int_to_ip(ip) for ip in arrays.flow_src_ip.tolist()]
    dst = [int_to_ip(ip) for ip in arrays.flow_dst_ip.tolist()]
    sport = arrays.flow_src_port.tolist()
    dport = arrays.flow_dst_port.tolist()
    dest.write(TRACE_HEADER + "\n")
    for fid, seq, length, ts in zip(
        arrays.flow_id.tolist(),
        arrays.seq.tolist(),
        arrays.payload_len.tolist(),
        arrays.ts.tolist(),
    ):
        dest.write(
            f"{ts!r},{src[fid]},{dst[fid]},{sport[fid]},{dport[fid]},{seq},{length}\n"
        )


def filter_server_to_client(records: Iterable[PacketRecord]) -> list[PacketRecord]:
    """Keep the server-to-client direction.

    Heuristic: service ports are numerically low, so a record is kept iff
    ``src_port < dst_port``.  Ties are dropped (direction undecidable).
    """
    return [r for r in records if r.flow.src_port < r.flow.dst_port]


def flow_key_str(flow: FlowId) -> str:
    return (
        f"{int_to_ip(flow.src_ip)}:{flow.src_port}"
        f">{int_to_ip(flow.dst_ip)}:{flow.dst_port}"
    )


def write_sidecar(counts: dict[FlowId, int], dest: IO[str]) -> None:
    dest.write(SIDECAR_HEADER + "\n")
    for flow, count in counts.items():
        dest.write(f"{flow_key_str(flow)},{count}\n")


# --- synthetic workload -----------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the seeded synthetic workload.

    Prefixes are split into "bad-path" and "good-path" groups; every packet
    of a bad-path prefix is displaced (delayed past 1..``displacement_max``
    of its successors) with probability ``bad_reorder_prob``, others with
    ``good_reorder_prob``.  Independently, a ``noisy_flow_fraction`` share
    of flows suffers one transient loss episode: a contiguous window of
    ``noisy_episode_len`` packets displaced at ``noisy_episode_prob``.
    Episodes model single-flow noise that should not get a whole prefix
    reported.  Flows emit packets in bursts so the staleness threshold of
    the samplers is exercised at realistic timescales.
    """

    n_prefixes: int
    flows_per_prefix_zipf_exponent: float = 1.8
    flow_size_zipf_exponent: float = 1.5
    mean_flow_size: float = 48.0
    bad_prefix_fraction: float = 0.05
    bad_reorder_prob: float = 0.05
    good_reorder_prob: float = 0.001
    displacement_max: int = 2
    duration_seconds: float = 10.0
    seed: int = 0
    # texture knobs (kept apart from the contract fields above)
    noisy_flow_fraction: float = 0.0
    noisy_episode_len: int = 16
    noisy_episode_prob: float = 0.3
    max_flows_per_prefix: int = 48
    max_flow_size: int = 4096
    mean_burst_len: int = 16
    intra_burst_gap: float = 8e-6
    stall_fraction: float = 0.3

    def validate(self) -> None:
        if self.n_prefixes < 1:
            raise ValueError("n_prefixes must be >= 1")
        if not 0.0 <= self.bad_prefix_fraction <= 1.0:
            raise ValueError("bad_prefix_fraction must lie in [0, 1]")
        if not 0.0 <= self.good_reorder_prob <= self.bad_reorder_prob <= 1.0:
            raise ValueError("need 0 <= good_reorder_prob <= bad_reorder_prob <= 1")
        if self.displacement_max < 1:
            raise ValueError("displacement_max must be >= 1")
        if self.duration_seconds <= 0:
            raise ValueError("duration_seconds must be positive")
        if self.mean_flow_size < 2:
            raise ValueError("mean_flow_size must be >= 2")


def _bounded_zipf(rng: np.random.Generator, exponent: float, kmax: int, size: int) -> np.ndarray:
    """Power-law integers on [1, kmax] via inverse CDF."""
    ks = np.arange(1, kmax + 1, dtype=np.float64)
    pmf = ks ** (-exponent)
    cdf = np.cumsum(pmf)
    cdf /= cdf[-1]
    u = rng.random(size)
    return np.searchsorted(cdf, u, side="left") + 1


def _bounded_zipf_mean(exponent: float, kmax: int) -> float:
    ks = np.arange(1, kmax + 1, dtype=np.float64)
    pmf = ks ** (-exponent)
    return float(np.sum(ks * pmf) / np.sum(pmf))


def generate_synthetic_arrays(cfg: SynthConfig) -> tuple[PacketArrays, np.ndarray]:
    """Deterministically generate a trace; also returns the per-flow count
    of injected displacements (indexed by flow id)."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)

    base_prefix = ip_to_int("10.0.0.0")
    if cfg.n_prefixes > (1 << 16):
        raise ValueError("n_prefixes above 2^16 is not supported")
    prefix_bits = base_prefix + (np.arange(cfg.n_prefixes, dtype=np.int64) << 8)
    bad_prefix = rng.random(cfg.n_prefixes) < cfg.bad_prefix_fraction

    flows_per_prefix = _bounded_zipf(
        rng, cfg.flows_per_prefix_zipf_exponent, cfg.max_flows_per_prefix, cfg.n_prefixes
    )
    n_flows = int(flows_per_prefix.sum())
    flow_prefix = np.repeat(np.arange(cfg.n_prefixes), flows_per_prefix)

    raw = _bounded_zipf(rng, cfg.flow_size_zipf_exponent, cfg.max_flow_size, n_flows)
    scale = cfg.mean_flow_size / _bounded_zipf_mean(cfg.flow_size_zipf_exponent, cfg.max_flow_size)
    sizes = np.clip(np.round(raw * scale).astype(np.int64), 2, cfg.max_flow_size)

    # flow endpoints: src host inside the prefix, unique client side
    flow_src_ip = prefix_bits[flow_prefix] + 1 + rng.integers(0, 254, n_flows)
    client_base = ip_to_int("172.16.0.0")
    flow_idx = np.arange(n_flows, dtype=np.int64)
    flow_dst_ip = client_base + flow_idx // 64000
    flow_dst_port = 1024 + flow_idx % 64000
    flow_src_port = rng.choice(np.array([80, 443, 8080], dtype=np.int64), n_flows)

    n_pkts = int(sizes.sum())
    starts = np.zeros(n_flows, dtype=np.int64)
    np.cumsum(sizes[:-1], out=starts[1:])
    pkt_flow = np.repeat(flow_idx, sizes)
    within = np.arange(n_pkts, dtype=np.int64) - np.repeat(starts, sizes)

    # in-order contents: sequence numbers advance by payload length
    payload = rng.integers(100, 1449, n_pkts, dtype=np.int64)
    pay_cum = np.cumsum(payload)
    seg_base = np.repeat(pay_cum[starts] - payload[starts], sizes)
    seq0 = rng.integers(0, 1 << 20, n_flows, dtype=np.int64)
    seq = np.repeat(seq0, sizes) + (pay_cum - payload) - seg_base

    # displacement: delay contents by 1..displacement_max positions; noisy
    # flows additionally get one contiguous high-rate episode
    noisy_flow = rng.random(n_flows) < cfg.noisy_flow_fraction
    episode_start = rng.integers(0, np.maximum(sizes - cfg.noisy_episode_len, 1))
    base_prob = np.where(bad_prefix[flow_prefix], cfg.bad_reorder_prob, cfg.good_reorder_prob)
    pkt_prob = np.repeat(base_prob, sizes)
    start_pkt = np.repeat(episode_start, sizes)
    in_episode = (
        np.repeat(noisy_flow, sizes)
        & (within >= start_pkt)
        & (within < start_pkt + cfg.noisy_episode_len)
    )
    pkt_prob = np.where(in_episode, cfg.noisy_episode_prob, pkt_prob)
    displaced = rng.random(n_pkts) < pkt_prob
    shift = rng.integers(1, cfg.displacement_max + 1, n_pkts, dtype=np.int64)
    keys = within.astype(np.float64)
    keys[displaced] += shift[displaced] + 0.5
    order = np.lexsort((keys, pkt_flow))  # per-flow arrival order of contents

    # arrival schedule: bursts of back-to-back packets, long silences between
    burst_len = np.maximum(2, rng.poisson(cfg.mean_burst_len, n_flows))
    pkt_burst_len = np.repeat(burst_len, sizes)
    is_burst_gap = (within > 0) & (within % pkt_burst_len == 0)
    n_bursts = np.maximum(1, (sizes + burst_len - 1) // burst_len)
    span = rng.uniform(0.3, 0.9, n_flows) * cfg.duration_seconds
    inter_gap_mean = span / n_bursts
    gaps = rng.exponential(1.0, n_pkts) * cfg.intra_burst_gap
    gaps[is_burst_gap] = rng.exponential(1.0, int(is_burst_gap.sum())) * np.repeat(
        inter_gap_mean, sizes
    )[is_burst_gap]
    # a displaced content stalls its flow: extra delay at the slot it lands
    # in.  Most delays stay at burst scale (the events remain observable at
    # small timeouts); a fraction are full retransmission-style stalls, so
    # reordered packets dominate the inter-arrival tail.
    disp_at_slot = displaced[order]
    n_disp = int(disp_at_slot.sum())
    extra = (2.0 + rng.exponential(4.0, n_disp)) * cfg.intra_burst_gap
    stall = rng.random(n_disp) < cfg.stall_fraction
    flow_inter = np.repeat(inter_gap_mean, sizes)[disp_at_slot]
    extra[stall] = flow_inter[stall] * (0.5 + rng.exponential(0.5, int(stall.sum())))
    gaps[disp_at_slot] += extra
    gaps[within == 0] = 0.0
    ts_rel = np.cumsum(gaps) - np.repeat(np.cumsum(gaps)[starts] - gaps[starts], sizes)
    start_offset = rng.uniform(0.0, np.maximum(cfg.duration_seconds - span, 0.0))
    ts = np.repeat(start_offset, sizes) + ts_rel

    # contents permuted into arrival slots, then all flows merged by time
    seq_arr = seq[order]
    payload_arr = payload[order]
    final = np.argsort(ts, kind="stable")

    arrays = PacketArrays(
        ts=ts[final],
        seq=seq_arr[final],
        payload_len=payload_arr[final],
        flow_id=pkt_flow[final],
        flow_src_ip=flow_src_ip.astype(np.int64),
        flow_dst_ip=flow_dst_ip.astype(np.int64),
        flow_src_port=flow_src_port.astype(np.int64),
        flow_dst_port=flow_dst_port.astype(np.int64),
    )
    injected = np.add.reduceat(displaced.astype(np.int64), starts)
    return arrays, injected


def generate_synthetic(cfg: SynthConfig) -> tuple[list[PacketRecord], dict[FlowId, int]]:
    """Record-level view of ``generate_synthetic_arrays``."""
    arrays, injected = generate_synthetic_arrays(cfg)
    records = arrays.to_records()
    sidecar = {arrays.flow(fid): int(injected[fid]) for fid in range(arrays.flow_count)}
    return records, sidecar
