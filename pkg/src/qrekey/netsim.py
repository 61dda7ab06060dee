"""Deterministic discrete-event simulation of one rekeyed link.

Two hosts, A sending constant-bit-rate UDP-like traffic to B over a
2 Mbps channel with uniform per-packet delay, a capped drop probability
and a bounded FIFO queue.  A is the data-channel master; control
messages (key-change requests, acks, resets, control rekeys) share the
same links and compete for the same queues.

Determinism: every random draw is a pure function of (run key, stream,
packet identity) -- see :mod:`qrekey.rng` -- so identical (config, seed)
reproduce bit-identical metrics, and runs with equal run keys see common
random numbers across parameter combinations.

Times are integer microseconds.  Event ties break by insertion order.
"""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field, asdict
from typing import Optional

from . import HASH_NAME
from .dataplane import Channel, SaTable, make_dataplane
from .keystore import KeySource, KeyStore
from .protocol import (
    CHAIN_SALT_BITS,
    CHAIN_SEED_BITS,
    CtrlRekeyMaster,
    CtrlRekeySlave,
    DataMaster,
    DataSlave,
    ProtocolConfig,
    ResetPeer,
    ResetState,
    draw_chain_params,
)
from .rng import (
    _M64 as M64,
    DELAY_FWD,
    DELAY_REV,
    DROP_FWD,
    DROP_REV,
    DUP_FWD,
    DUP_REV,
    RUN_DROP_U,
    SESSION_ID,
    derive_run_key,
    prf_float,
    prf_u64,
)
from .wire import FRAME_SIZE, MsgType, decode, encode

# event codes
_APP_SEND = 0
_PROBE_SEND = 1
_DELIVER_DATA = 2
_DELIVER_CTRL = 3
_REKEY_TICK = 4
_CTRL_TICK = 5
_TIMER = 6
_PUMP = 7

_CTRL_IDENT_BASE = 1 << 55


@dataclass
class KeystoreConfig:
    rate_bits_per_s: float | None = None   # None = infinite
    seed: int = 1
    threshold_bytes: int = 4096
    verify_delay_ms: float = 0.0
    pump_interval_ms: float = 50.0


@dataclass
class SimConfig:
    """One run's parameters.  Defaults reproduce the published sweep setup."""

    sim_time_s: float = 600.0
    channel_rate_bps: float = 2_000_000.0
    delay_lo_ms: float = 5.0
    delay_hi_ms: float = 25.0
    drop_prob: float | str = "paper"       # "paper": min(u, drop_cap), u ~ U(0,1)
    drop_cap: float = 0.05
    drop_mode: str = "per_run"             # "per_run" | "per_packet"
    duplicate_prob: float = 0.0
    app_rate_bps: float = 1_500_000.0
    packet_payload_bytes: int = 1250
    packet_overhead_bytes: int = 64        # tunnel+ESP framing on the wire
    link_queue_packets: int = 100
    rng_seed: int = 1
    probe_rate_pps: float = 0.0
    instrument_chain: bool = False
    omit_send_cycle: tuple[int, int] | None = None  # (sent, omitted) request pattern
    runs: int = 1
    dataplane_backend: str = "mock"
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    keystore: KeystoreConfig = field(default_factory=KeystoreConfig)

    def __post_init__(self) -> None:
        if self.delay_lo_ms > self.delay_hi_ms:
            raise ValueError("delay_lo_ms must be <= delay_hi_ms")
        if isinstance(self.drop_prob, str) and self.drop_prob != "paper":
            raise ValueError("drop_prob must be a probability or 'paper'")
        if isinstance(self.drop_prob, (int, float)) and not 0 <= self.drop_prob <= 1:
            raise ValueError("drop_prob must be within [0, 1]")

    def resolved(self) -> dict:
        """Full provenance dict: every effective value, defaults included."""
        d = asdict(self)
        d["protocol"]["lookahead_effective"] = self.protocol.lookahead_depth
        d["protocol"]["ack_tolerance_effective"] = self.protocol.ack_limit
        d["chain_hash"] = HASH_NAME
        return d


def config_to_json(cfg: SimConfig) -> str:
    return json.dumps(cfg.resolved(), indent=2, sort_keys=True)


def config_from_dict(raw: dict) -> SimConfig:
    """Build a config from the documented file schema (missing keys default)."""
    raw = dict(raw)
    pro = ProtocolConfig(
        rekey_interval_ms=raw.pop("rekey_interval_ms", 100.0),
        window=raw.pop("window_W", 15),
        lookahead=raw.pop("lookahead_D", None),
        ctrl_interval_ms=raw.pop("ctrl_interval_ms", 3000.0),
        ctrl_window=raw.pop("ctrl_window", 5),
        ack_tolerance=raw.pop("ack_tolerance", None),
        reset_timeout_ms=raw.pop("reset_timeout_ms", 200.0),
        reset_max_tries=raw.pop("reset_max_tries", 5),
        key_bits=raw.pop("key_bits", 256),
        data_gap_recovery=raw.pop("data_gap_recovery", False),
    )
    ks_raw = raw.pop("key_source", {})
    store_raw = raw.pop("keystore", {})
    rate = ks_raw.get("rate_bits_per_s", "infinite")
    ks = KeystoreConfig(
        rate_bits_per_s=None if rate in (None, "infinite") else float(rate),
        seed=ks_raw.get("seed", 1),
        threshold_bytes=store_raw.get("threshold_bytes", 4096),
        verify_delay_ms=store_raw.get("verify_delay_ms", 0.0),
        pump_interval_ms=store_raw.get("pump_interval_ms", 50.0),
    )
    backend = raw.pop("dataplane", {}).get("backend", "mock")
    delay = raw.pop("delay_ms", [5.0, 25.0])
    omit = raw.pop("omit_send_cycle", None)
    return SimConfig(
        sim_time_s=raw.get("sim_time_s", 600.0),
        channel_rate_bps=raw.get("channel_rate_bps", 2_000_000.0),
        delay_lo_ms=float(delay[0]),
        delay_hi_ms=float(delay[1]),
        drop_prob=raw.get("drop_prob", "paper"),
        drop_cap=raw.get("drop_cap", 0.05),
        drop_mode=raw.get("drop_mode", "per_run"),
        duplicate_prob=raw.get("duplicate_prob", 0.0),
        app_rate_bps=raw.get("app_rate_bps", 1_500_000.0),
        packet_payload_bytes=raw.get("packet_payload_bytes", 1250),
        packet_overhead_bytes=raw.get("packet_overhead_bytes", 64),
        link_queue_packets=raw.get("link_queue_packets", 100),
        rng_seed=raw.get("rng_seed", 1),
        probe_rate_pps=raw.get("probe_rate_pps", 0.0),
        instrument_chain=raw.get("instrument_chain", False),
        omit_send_cycle=tuple(omit) if omit else None,
        runs=raw.get("runs", 1),
        dataplane_backend=backend,
        protocol=pro,
        keystore=ks,
    )


@dataclass
class RunMetrics:
    """Per-run outcome counters and derived rates.

    Ratio denominators are guarded: a ratio whose denominator is zero is
    reported as None, never as 0.
    """

    sent: int = 0
    received: int = 0
    deciphered: int = 0
    out_of_sync: int = 0
    dropped_loss: int = 0
    dropped_queue: int = 0
    blocked_no_sa: int = 0
    resets: int = 0
    slave_initiated_resets: int = 0
    key_changes: int = 0
    ctrl_rekeys: int = 0
    ctrl_received: int = 0
    ctrl_out_of_sync: int = 0
    ctrl_dropped: int = 0
    probe_sent: int = 0
    probe_deciphered: int = 0
    recovered_packets: int = 0
    chain_violations: int = 0
    suspended: bool = False
    established_at_us: int | None = None
    sim_time_s: float = 0.0
    payload_bits: int = 0

    @property
    def deciphered_ratio(self) -> Optional[float]:
        return self.deciphered / self.sent if self.sent else None

    @property
    def oos_ratio(self) -> Optional[float]:
        return self.out_of_sync / self.received if self.received else None

    @property
    def effective_rate_bps(self) -> Optional[float]:
        if self.sim_time_s <= 0:
            return None
        return self.deciphered * self.payload_bits / self.sim_time_s

    @property
    def probe_ratio(self) -> Optional[float]:
        return self.probe_deciphered / self.probe_sent if self.probe_sent else None


SEND_OK = 0
SEND_QUEUE_FULL = 1
SEND_LOST = 2


class _Link:
    """One direction: bounded FIFO queue, serialization, loss, delay."""

    __slots__ = (
        "sim", "rate_bps", "queue_cap", "drop_stream", "delay_stream", "dup_stream",
        "delay_lo_us", "delay_span_us", "busy_until", "pending", "dup_prob",
    )

    def __init__(self, sim: "Simulation", streams: tuple[int, int, int]):
        cfg = sim.cfg
        self.sim = sim
        self.rate_bps = cfg.channel_rate_bps
        self.queue_cap = cfg.link_queue_packets
        self.drop_stream, self.delay_stream, self.dup_stream = streams
        self.delay_lo_us = int(cfg.delay_lo_ms * 1000)
        self.delay_span_us = (cfg.delay_hi_ms - cfg.delay_lo_ms) * 1000.0
        self.busy_until = 0
        self.pending: deque = deque()
        self.dup_prob = cfg.duplicate_prob

    def send(self, now: int, wire_bits: int, ident: int, code: int, payload) -> int:
        """Enqueue one packet; SEND_OK schedules a delivery event.

        The loss and delay draws are the splitmix64 PRF from
        :mod:`qrekey.rng` inlined: this runs once per packet and the
        call overhead is the simulator's hot spot.
        """
        pending = self.pending
        while pending and pending[0] <= now:
            pending.popleft()
        if len(pending) >= self.queue_cap:
            return SEND_QUEUE_FULL
        ser = int(wire_bits * 1e6 / self.rate_bps)
        start = now if now > self.busy_until else self.busy_until
        exit_t = start + ser
        self.busy_until = exit_t
        pending.append(exit_t)
        sim = self.sim
        key = sim.run_key
        masked = ident & 0x00FFFFFFFFFFFFFF
        # loss draw (stream = drop_stream)
        x = ((self.drop_stream << 56) ^ masked) + 0x9E3779B97F4A7C15 & M64
        x ^= x >> 30
        x = x * 0xBF58476D1CE4E5B9 & M64
        x ^= x >> 27
        x = x * 0x94D049BB133111EB & M64
        x = (key ^ (x ^ (x >> 31))) + 0x9E3779B97F4A7C15 & M64
        x ^= x >> 30
        x = x * 0xBF58476D1CE4E5B9 & M64
        x ^= x >> 27
        x = x * 0x94D049BB133111EB & M64
        x ^= x >> 31
        if sim.per_packet_drop:
            if x / 18446744073709551616.0 < sim.packet_drop_p(self.drop_stream, ident):
                return SEND_LOST
        elif x < sim.run_drop_threshold:
            return SEND_LOST  # transmitted, lost in flight
        # delay draw (stream = delay_stream)
        x = ((self.delay_stream << 56) ^ masked) + 0x9E3779B97F4A7C15 & M64
        x ^= x >> 30
        x = x * 0xBF58476D1CE4E5B9 & M64
        x ^= x >> 27
        x = x * 0x94D049BB133111EB & M64
        x = (key ^ (x ^ (x >> 31))) + 0x9E3779B97F4A7C15 & M64
        x ^= x >> 30
        x = x * 0xBF58476D1CE4E5B9 & M64
        x ^= x >> 27
        x = x * 0x94D049BB133111EB & M64
        x ^= x >> 31
        delay = self.delay_lo_us + int(x / 18446744073709551616.0 * self.delay_span_us)
        sim.push(exit_t + delay, code, payload)
        if self.dup_prob and prf_float(key, self.dup_stream, ident) < self.dup_prob:
            delay2 = self.delay_lo_us + int(
                prf_float(key, self.delay_stream, ident ^ (1 << 54)) * self.delay_span_us
            )
            sim.push(exit_t + delay2, code, payload)
        return SEND_OK


class _Host:
    """Protocol environment for one endpoint (A=0 sender, B=1 receiver)."""

    def __init__(self, sim: "Simulation", idx: int):
        cfg = sim.cfg
        self.sim = sim
        self.idx = idx
        self.is_session_master = idx == 0
        rate = cfg.keystore.rate_bits_per_s
        self.keystore = KeyStore(
            KeySource(cfg.keystore.seed, rate, block_bits=cfg.protocol.key_bits),
            role="master" if idx == 0 else "slave",
            threshold_bytes=cfg.keystore.threshold_bytes,
            verify_delay_us=int(cfg.keystore.verify_delay_ms * 1000),
        )
        self.table: SaTable = make_dataplane(cfg.dataplane_backend)
        self.session_id = prf_u64(sim.run_key, SESSION_ID, 0)
        self.suspended = False
        self.reset_pending = False  # reset needed but key material short
        self.reset = ResetPeer(cfg.protocol, self)
        self._ctrl_seq: dict[int, int] = {}
        if idx == 0:
            self.master = DataMaster(cfg.protocol, self, "data-fwd")
            self.ctrl_master = CtrlRekeyMaster(cfg.protocol, self, "ctrl-fwd")
            self.ctrl_slave = CtrlRekeySlave(cfg.protocol, self, "ctrl-rev")
        else:
            self.slave = DataSlave(cfg.protocol, self, "data-fwd")
            self.ctrl_master = CtrlRekeyMaster(cfg.protocol, self, "ctrl-rev")
            self.ctrl_slave = CtrlRekeySlave(cfg.protocol, self, "ctrl-fwd")

    # --- PeerEnv contract -------------------------------------------------
    def now_us(self) -> int:
        return self.sim.now

    def schedule(self, delay_us: int, fn) -> None:
        self.sim.push(self.sim.now + delay_us, _TIMER, fn)

    def send_ctrl(self, msg, bypass_sa: bool = False) -> None:
        carrier = 0 if bypass_sa else self.table.outbound_spi(Channel.CTRL)
        if carrier is None:
            return  # no control SA yet and not a reset frame
        seq = self._ctrl_seq.get(msg.type, 0)
        self._ctrl_seq[msg.type] = seq + 1
        ident = _CTRL_IDENT_BASE | (int(msg.type) << 40) | (seq & ((1 << 40) - 1))
        link = self.sim.links[self.idx]
        wire_bits = (FRAME_SIZE + self.sim.cfg.packet_overhead_bytes) * 8
        outcome = link.send(self.sim.now, wire_bits, ident, _DELIVER_CTRL, (1 - self.idx, carrier, encode(msg)))
        if outcome != SEND_OK:
            self.sim.metrics.ctrl_dropped += 1

    def can_apply_reset(self) -> bool:
        return self.keystore.can_draw(self.sim.bootstrap_bits)

    def initiate_reset(self, reason: str) -> None:
        if not self.can_apply_reset():
            # not enough key material to re-key yet: hold rekeying (the
            # ticks would otherwise consume the material the reset needs)
            # and retry after the next pump, unless the run is over
            self.reset_pending = True
            if self.sim.now <= self.sim.end_us:
                self.sim.push(self.sim.now + int(self.sim.cfg.keystore.pump_interval_ms * 1000),
                              _TIMER, lambda: self.initiate_reset(reason))
            return
        self.reset_pending = False
        self.reset.initiate(reason)

    def on_suspended(self) -> None:
        self.suspended = True
        self.sim.metrics.suspended = True

    def apply_reset(self, epoch: int) -> None:
        """Clear and re-key every channel this host participates in.

        All draws complete before any state is torn down, so a starved
        keystore cannot leave the host half re-keyed.
        """
        ks = self.keystore
        seed_d, salt_d = draw_chain_params(ks, "data-fwd", epoch)
        key0_d = ks.draw_application(self.sim.cfg.protocol.key_bits, ("key", "data-fwd", epoch, 0))
        seed_f, salt_f = draw_chain_params(ks, "ctrl-fwd", epoch)
        key0_f = ks.draw_application(self.sim.cfg.protocol.key_bits, ("key", "ctrl-fwd", epoch, 0))
        seed_r, salt_r = draw_chain_params(ks, "ctrl-rev", epoch)
        key0_r = ks.draw_application(self.sim.cfg.protocol.key_bits, ("key", "ctrl-rev", epoch, 0))
        self.table.clear()
        if self.idx == 0:
            self.master.bind_epoch(epoch, seed_d, salt_d, key0_d)
            self.ctrl_master.bind_epoch(epoch, seed_f, salt_f, key0_f)
            self.ctrl_slave.bind_epoch(epoch, seed_r, salt_r, key0_r)
        else:
            self.slave.bind_epoch(epoch, seed_d, salt_d, key0_d)
            self.ctrl_slave.bind_epoch(epoch, seed_f, salt_f, key0_f)
            self.ctrl_master.bind_epoch(epoch, seed_r, salt_r, key0_r)
        self.suspended = False
        self.sim.on_epoch_applied(self.idx, epoch)


class Simulation:
    """One run.  Build, call :meth:`run`, read the returned metrics."""

    def __init__(self, cfg: SimConfig, run_index: int = 0, master_seed: int | None = None):
        self.cfg = cfg
        self.run_key = derive_run_key(master_seed if master_seed is not None else cfg.rng_seed, run_index)
        self.now = 0
        self.end_us = int(cfg.sim_time_s * 1e6)
        self._heap: list = []
        self._seq = 0
        self.metrics = RunMetrics(sim_time_s=cfg.sim_time_s, payload_bits=cfg.packet_payload_bytes * 8)
        p = cfg.protocol
        # per-host session bootstrap: 3 chains x (seed + salt + generation-0 key)
        self.bootstrap_bits = 3 * (CHAIN_SEED_BITS + CHAIN_SALT_BITS + p.key_bits) + 8 * CHAIN_SEED_BITS
        if isinstance(cfg.drop_prob, str):
            u = prf_float(self.run_key, RUN_DROP_U, 0)
            self._run_drop_p = min(u, cfg.drop_cap)
        else:
            self._run_drop_p = float(cfg.drop_prob)
        self.per_packet_drop = cfg.drop_mode == "per_packet" and isinstance(cfg.drop_prob, str)
        self.run_drop_threshold = int(self._run_drop_p * 18446744073709551616.0)
        self.links = (
            _Link(self, (DROP_FWD, DELAY_FWD, DUP_FWD)),
            _Link(self, (DROP_REV, DELAY_REV, DUP_REV)),
        )
        self.hosts = (_Host(self, 0), _Host(self, 1))
        self.established_at: int | None = None
        self._app_seq = 0
        self._app_index = 0
        self._probe_index = 0
        self._app_interval_scale = cfg.packet_payload_bytes * 8 * 1e6 / cfg.app_rate_bps
        self._epochs = [0, 0]
        self._omit = cfg.omit_send_cycle
        self._wire_bits_data = (cfg.packet_payload_bytes + cfg.packet_overhead_bytes) * 8
        # master chain history for the agreement check
        self._history: dict[int, int] = {}

    # --- plumbing ---------------------------------------------------------
    def push(self, time_us: int, code: int, payload) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (time_us, self._seq, code, payload))

    def packet_drop_p(self, stream: int, ident: int) -> float:
        """Per-packet drop probability: min(u, cap) with u drawn per packet."""
        u = prf_float(self.run_key, stream + 16, ident)
        return min(u, self.cfg.drop_cap)

    def on_epoch_applied(self, host_idx: int, epoch: int) -> None:
        self._epochs[host_idx] = epoch
        m = self.metrics
        if host_idx == 0:
            if self.established_at is None:
                self.established_at = self.now
                m.established_at_us = self.now
                self._start_traffic()
                self._schedule_ticks()
            else:
                m.resets += 1
            master = self.hosts[0].master
            self._history = {0: self.hosts[0].table.outbound_spi(Channel.DATA)}
            for idx, spi, _ in master.lookahead:
                self._history[idx] = spi

    def _start_traffic(self) -> None:
        self.push(self.now, _APP_SEND, None)
        if self.cfg.probe_rate_pps > 0:
            self.push(self.now, _PROBE_SEND, None)

    def _schedule_ticks(self) -> None:
        p = self.cfg.protocol
        self.push(self.now + int(p.rekey_interval_ms * 1000), _REKEY_TICK, None)
        self.push(self.now + int(p.ctrl_interval_ms * 1000), _CTRL_TICK, 0)
        self.push(self.now + int(p.ctrl_interval_ms * 1000), _CTRL_TICK, 1)

    def _omit_this(self, generation: int) -> bool:
        if self._omit is None:
            return False
        sent, omitted = self._omit
        return (generation - 1) % (sent + omitted) >= sent

    # --- event handlers ---------------------------------------------------
    def run(self) -> RunMetrics:
        cfg = self.cfg
        m = self.metrics
        push = self.push
        heap = self._heap
        end = self.end_us
        hostA, hostB = self.hosts
        instrument = cfg.instrument_chain
        recovery = cfg.protocol.data_gap_recovery

        if cfg.keystore.rate_bits_per_s is None:
            hostA.initiate_reset("session-start")
        else:
            push(0, _PUMP, None)

        rekey_us = int(cfg.protocol.rekey_interval_ms * 1000)
        ctrl_us = int(cfg.protocol.ctrl_interval_ms * 1000)
        pump_us = int(cfg.keystore.pump_interval_ms * 1000)

        # Hot-loop locals: data-path counters live in local ints and the
        # common lookups are cached; everything is written back to the
        # metrics object after the loop.
        n_sent = n_received = n_deciphered = n_oos = 0
        n_drop_loss = n_drop_queue = n_blocked = 0
        n_probe_sent = n_probe_deciphered = 0
        DATA = Channel.DATA
        heappop = heapq.heappop
        out_dict = hostA.table.outbound
        win_dict = hostB.table.window_spis
        linkA = self.links[0]
        wire_bits = self._wire_bits_data
        interval_scale = self._app_interval_scale

        while heap:
            time_us, _, code, payload = heappop(heap)
            self.now = time_us
            if code == _DELIVER_DATA:
                spi, probe = payload
                n_received += 1
                spis = win_dict.get(DATA)
                if spis is not None and spi in spis:
                    n_deciphered += 1
                    if probe:
                        n_probe_deciphered += 1
                elif recovery and hostB.slave.on_unknown_data_spi(spi):
                    n_deciphered += 1
                    if probe:
                        n_probe_deciphered += 1
                else:
                    n_oos += 1
            elif code == _APP_SEND or code == _PROBE_SEND:
                if time_us <= end:
                    probe = code == _PROBE_SEND
                    n_sent += 1
                    if probe:
                        n_probe_sent += 1
                    sa = out_dict.get(DATA)
                    if hostA.suspended or sa is None:
                        n_blocked += 1
                    else:
                        seq = self._app_seq
                        self._app_seq += 1
                        outcome = linkA.send(time_us, wire_bits, seq, _DELIVER_DATA, (sa.spi, probe))
                        if outcome == SEND_QUEUE_FULL:
                            n_drop_queue += 1
                        elif outcome == SEND_LOST:
                            n_drop_loss += 1
                    if probe:
                        self._probe_index += 1
                        nxt = self.established_at + int(self._probe_index * 1e6 / cfg.probe_rate_pps)
                    else:
                        self._app_index += 1
                        nxt = self.established_at + int(self._app_index * interval_scale)
                    if nxt <= end:
                        push(nxt, code, None)
            elif code == _DELIVER_CTRL:
                dest, carrier, frame = payload
                host = self.hosts[dest]
                m.ctrl_received += 1
                if carrier != 0 and not host.table.has_inbound(Channel.CTRL, carrier):
                    m.ctrl_out_of_sync += 1
                else:
                    self._dispatch_ctrl(host, decode(frame))
            elif code == _REKEY_TICK:
                if time_us <= end:
                    master = hostA.master
                    if (hostA.reset.state is ResetState.IDLE and not hostA.suspended
                            and not hostA.reset_pending):
                        master.rekey_tick(omit_send=self._omit_this(master.generation + 1))
                        if instrument:
                            self._record_history(master)
                    push(time_us + rekey_us, _REKEY_TICK, None)
            elif code == _CTRL_TICK:
                if time_us <= end:
                    host = self.hosts[payload]
                    if (host.reset.state is ResetState.IDLE and not host.suspended
                            and not host.reset_pending):
                        host.ctrl_master.ctrl_tick()
                    push(time_us + ctrl_us, _CTRL_TICK, payload)
            elif code == _TIMER:
                payload()
            elif code == _PUMP:
                if time_us <= end:
                    hostA.keystore.pump(time_us)
                    hostB.keystore.pump(time_us)
                    if self.established_at is None and hostA.can_apply_reset():
                        hostA.initiate_reset("session-start")
                    push(time_us + pump_us, _PUMP, None)
            if instrument:
                self._check_agreement()

        m.sent = n_sent
        m.received = n_received
        m.deciphered = n_deciphered
        m.out_of_sync = n_oos
        m.dropped_loss = n_drop_loss
        m.dropped_queue = n_drop_queue
        m.blocked_no_sa = n_blocked
        m.probe_sent = n_probe_sent
        m.probe_deciphered = n_probe_deciphered
        m.key_changes = hostA.master.key_changes
        m.ctrl_rekeys = hostA.ctrl_master.completed
        m.slave_initiated_resets = hostB.reset.initiated
        m.recovered_packets = hostB.slave.recovered_packets
        return m

    def _dispatch_ctrl(self, host: _Host, msg) -> None:
        t = msg.type
        if t is MsgType.KEY_CHANGE_REQUEST:
            if host.idx == 1 and self._epochs[1] > 0:
                host.slave.on_key_change_request(msg)
        elif t is MsgType.KEY_CHANGE_ACK:
            if host.idx == 0:
                host.master.on_ack(msg)
        elif t is MsgType.KEY_CHANGE_FAIL:
            if host.idx == 0:
                host.master.on_fail(msg)
        elif t is MsgType.CTRL_REKEY_REQ:
            host.ctrl_slave.on_req(msg)
        elif t is MsgType.CTRL_REKEY_ACK:
            host.ctrl_master.on_ack(msg)
        elif t is MsgType.CTRL_REKEY_CONFIRM:
            host.ctrl_slave.on_confirm(msg)
        elif t is MsgType.RESET_REQ:
            host.reset.on_reset_req(msg)
        elif t is MsgType.RESET_ACK:
            host.reset.on_reset_ack(msg)
        elif t is MsgType.RESET_CONFIRM:
            host.reset.on_reset_confirm(msg)

    # --- chain-agreement instrumentation -----------------------------------
    def _record_history(self, master) -> None:
        hist = self._history
        hist[master.chain_index] = master.chain_value
        for idx, spi, _ in master.lookahead:
            hist[idx] = spi
        floor = master.chain_index - 2 * (self.cfg.protocol.window + self.cfg.protocol.lookahead_depth) - 64
        if len(hist) > 4 * (self.cfg.protocol.window + self.cfg.protocol.lookahead_depth) + 128:
            for k in [k for k in hist if k < floor]:
                del hist[k]

    def _check_agreement(self) -> None:
        """Outside an in-progress reset, the slave's data chain must be a
        prefix of the master's: it may lag, never diverge."""
        a, b = self.hosts
        if self.established_at is None:
            return
        if a.reset.state is not ResetState.IDLE or b.reset.state is not ResetState.IDLE:
            return
        if self._epochs[0] != self._epochs[1]:
            return
        master, slave = a.master, b.slave
        if slave.head_index > master.chain_index:
            self.metrics.chain_violations += 1
            return
        expected = self._history.get(slave.head_index)
        if expected is not None and expected != slave.head_value:
            self.metrics.chain_violations += 1


def run(cfg: SimConfig, run_index: int = 0, master_seed: int | None = None) -> RunMetrics:
    """Execute one simulation run; (config, seed, run_index) fixes the result."""
    return Simulation(cfg, run_index=run_index, master_seed=master_seed).run()
