"""Rapid-rekeying state machines.

One peer pair runs, per direction, a *master* (the sender, who decides
when keys change) and a *slave* (the receiver, who follows).  The master
pre-computes a FIFO of future (SPI, key) pairs; on every rekey tick it
announces the pair it is about to use and installs it as its outbound
SA, without waiting for any acknowledgement.  The slave installs the
announced pair on receipt; because it can compute the SPI sequence
itself, a request arriving after losses is recognized as "k generations
ahead" and the slave catches up by installing every intermediate pair,
so in-flight traffic under skipped keys still deciphers.

Acknowledgements are keepalives only.  Resets (either peer) and
control-channel rekeys are three-way handshakes with retransmission.

The machines are event-loop agnostic: they talk to their host through a
small environment object (see :class:`PeerEnv` for the contract) so the
simulator and unit tests drive them the same way.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum

from .chain import SpiChainState, detect_gap, step_value
from .dataplane import Channel, Direction, SecurityAssociation
from .keystore import KeyStarved
from .wire import MsgType, ProtocolMessage

CHAIN_SEED_BITS = 32
CHAIN_SALT_BITS = 128


@dataclass
class ProtocolConfig:
    rekey_interval_ms: float = 100.0
    window: int = 15
    lookahead: int | None = None          # default: ceil(window / 2)
    ctrl_interval_ms: float = 3000.0
    ctrl_window: int = 5
    ack_tolerance: int | None = None      # default: window
    reset_timeout_ms: float = 200.0
    reset_max_tries: int = 5
    key_bits: int = 256
    data_gap_recovery: bool = False       # recover from unknown data-packet SPIs

    @property
    def lookahead_depth(self) -> int:
        return self.lookahead if self.lookahead is not None else math.ceil(self.window / 2)

    @property
    def ack_limit(self) -> int:
        return self.ack_tolerance if self.ack_tolerance is not None else self.window


class PeerEnv:
    """What a state machine needs from its host.

    Duck-typed; the simulator's hosts and the test harness both provide:

    * ``now_us() -> int``
    * ``send_ctrl(msg, bypass_sa=False)`` -- emit on this host's
      outbound control channel
    * ``schedule(delay_us, fn)`` -- one-shot timer
    * ``keystore`` -- :class:`~qrekey.keystore.KeyStore`
    * ``table`` -- :class:`~qrekey.dataplane.SaTable`
    * ``session_id`` -- int
    * ``initiate_reset(reason)`` / ``apply_reset(epoch)`` / ``on_suspended()``
    * ``can_apply_reset() -> bool`` -- enough key material to re-key
    * ``is_session_master`` -- tie-break for simultaneous resets
    """


def draw_chain_params(keystore, tag: str, epoch: int) -> tuple[int, bytes]:
    """Seed and salt for one channel chain, drawn from the application buffer.

    Re-draws the seed while it falls in the reserved SPI range; both
    peers run the same loop on the same labels, so they agree.
    """
    attempt = 0
    while True:
        raw = keystore.draw_application(CHAIN_SEED_BITS, ("seed", tag, epoch, attempt))
        seed = int.from_bytes(raw, "big")
        if seed >= 256:
            break
        attempt += 1
    salt = keystore.draw_application(CHAIN_SALT_BITS, ("salt", tag, epoch))
    return seed, salt


class DataMaster:
    """Sender-side data-channel machine: lookahead queue and rekey ticks."""

    def __init__(self, cfg: ProtocolConfig, env, tag: str = "data-fwd"):
        self.cfg = cfg
        self.env = env
        self.tag = tag
        self.epoch = -1
        self.salt = b"\x00" * 16
        self.chain_index = 0      # last acquired generation
        self.chain_value = 256
        self.lookahead: deque = deque()
        self.generation = 0       # generation of the installed outbound SA
        self.missed_acks = 0
        self.consecutive_fails = 0
        self.pause_ticks = 0
        self.key_changes = 0
        self.warmed_up = False    # queue has reached depth at least once

    def bind_epoch(self, epoch: int, seed: int, salt: bytes, key0: bytes) -> None:
        """Fresh chain after a reset: install generation 0, refill the queue.

        The refill stops early if the keystore is starved; subsequent
        ticks grow the queue back to depth (warm-up path).
        """
        self.epoch = epoch
        self.salt = salt
        self.chain_index = 0
        self.chain_value = seed
        self.lookahead.clear()
        self.generation = 0
        self.missed_acks = 0
        self.consecutive_fails = 0
        self.pause_ticks = 0
        self.warmed_up = False
        self.env.table.install_outbound(
            SecurityAssociation(seed, key0, Direction.OUTBOUND, Channel.DATA, 0, self.env.now_us())
        )
        while len(self.lookahead) < self.cfg.lookahead_depth and self.env.keystore.can_draw(self.cfg.key_bits):
            if not self._acquire():
                break
        if len(self.lookahead) >= self.cfg.lookahead_depth:
            self.warmed_up = True

    def _acquire(self) -> bool:
        """Advance the chain one pair and queue it; False when starved."""
        idx = self.chain_index + 1
        try:
            key = self.env.keystore.draw_application(self.cfg.key_bits, ("key", self.tag, self.epoch, idx))
        except KeyStarved:
            return False
        self.chain_value = step_value(self.chain_value, self.salt)
        self.chain_index = idx
        self.lookahead.append((idx, self.chain_value, key))
        return True

    def rekey_tick(self, omit_send: bool = False) -> None:
        """One key-change event.

        Steady state: acquire one pair, announce the queue head, install
        it outbound.  Until the queue first reaches depth (session start
        on a slow key source) ticks only grow the queue; once warmed up,
        a starved tick still changes keys from the queue, shrinking it,
        and an empty queue under starvation forces a reset.  ``omit_send``
        suppresses the request message but not the key change itself
        (fault injection for recovery experiments).
        """
        if not self.warmed_up:
            if self._acquire() and len(self.lookahead) >= self.cfg.lookahead_depth:
                self.warmed_up = True
            return
        if self.pause_ticks > 0:
            self.pause_ticks -= 1
            return
        self._acquire()
        if not self.lookahead:
            self.env.initiate_reset("master-starved")
            return
        idx, spi, key = self.lookahead[0]
        if not omit_send:
            self.env.send_ctrl(
                ProtocolMessage(
                    MsgType.KEY_CHANGE_REQUEST,
                    self.env.session_id,
                    generation=idx,
                    next_spi=spi,
                    timestamp_us=self.env.now_us(),
                )
            )
        self.lookahead.popleft()
        self.env.table.install_outbound(
            SecurityAssociation(spi, key, Direction.OUTBOUND, Channel.DATA, idx, self.env.now_us())
        )
        self.generation = idx
        self.key_changes += 1
        if not omit_send:
            # an unsent request cannot be acknowledged: only announced
            # changes count toward the keepalive miss limit
            self.missed_acks += 1
            if self.missed_acks >= self.cfg.ack_limit:
                self.env.initiate_reset("keepalive-timeout")

    def on_ack(self, msg: ProtocolMessage) -> None:
        """Keepalive: any non-stale ack clears the miss counter."""
        if msg.generation + self.cfg.lookahead_depth < self.generation:
            return
        self.missed_acks = 0
        self.consecutive_fails = 0

    def on_fail(self, msg: ProtocolMessage) -> None:
        """Slave could not apply a key: pause one interval; reset after 3."""
        self.consecutive_fails += 1
        self.pause_ticks = 1
        if self.consecutive_fails >= 3:
            self.env.initiate_reset("repeated-key-change-fail")


class DataSlave:
    """Receiver-side data-channel machine: window upkeep and gap compensation."""

    def __init__(self, cfg: ProtocolConfig, env, tag: str = "data-fwd"):
        self.cfg = cfg
        self.env = env
        self.tag = tag
        self.epoch = -1
        self.seed = 256
        self.salt = b"\x00" * 16
        self.head_index = 0       # last installed generation
        self.head_value = 256
        self.expected_index = 1   # generation the next request should announce
        self.expected_value = 256
        self.spi_index: deque = deque()
        self.spi_set: set = set()
        self.catch_up_installs = 0
        self.recovered_packets = 0

    def bind_epoch(self, epoch: int, seed: int, salt: bytes, key0: bytes) -> None:
        self.epoch = epoch
        self.seed = seed
        self.salt = salt
        self.head_index = 0
        self.head_value = seed
        self.expected_index = 1
        self.expected_value = step_value(seed, salt)
        self.spi_index.clear()
        self.spi_set.clear()
        self.env.table.install_inbound(
            SecurityAssociation(seed, key0, Direction.INBOUND, Channel.DATA, 0, self.env.now_us()),
            self.cfg.window,
        )
        self.spi_index.append(seed)
        self.spi_set.add(seed)

    @property
    def horizon(self) -> int:
        """Largest compensable gap; one less than the window, since a gap
        of g costs g+1 installs."""
        return self.cfg.window - 1

    def _install_through(self, target_index: int) -> None:
        """Install every pair from head+1 .. target (catch-up).

        Raises :class:`KeyStarved` mid-way if the keystore runs dry;
        pairs installed before the failure stay installed.
        """
        now = self.env.now_us()
        while self.head_index < target_index:
            idx = self.head_index + 1
            key = self.env.keystore.draw_application(self.cfg.key_bits, ("key", self.tag, self.epoch, idx))
            value = step_value(self.head_value, self.salt)
            evicted = self.env.table.install_inbound(
                SecurityAssociation(value, key, Direction.INBOUND, Channel.DATA, idx, now),
                self.cfg.window,
            )
            self.spi_index.append(value)
            self.spi_set.add(value)
            if evicted is not None:
                self.spi_index.popleft()
                self.spi_set.discard(evicted.spi)
            self.head_index = idx
            self.head_value = value
            self.catch_up_installs += 1

    def _ack(self, generation: int) -> None:
        self.env.send_ctrl(
            ProtocolMessage(
                MsgType.KEY_CHANGE_ACK,
                self.env.session_id,
                generation=generation,
                next_spi=0,
                timestamp_us=self.env.now_us(),
            )
        )

    def on_key_change_request(self, msg: ProtocolMessage) -> None:
        """Install the announced pair, compensating for lost requests.

        A request k generations ahead of the expected one installs all
        k+1 pairs.  More than ``horizon`` unannounced generations means
        too many control messages went missing: the slave gives up and
        initiates a reset -- even if the data-plane recovery path has
        already installed the announced SA, since the reset condition is
        about control-channel loss, not window contents.  A stale or
        duplicated request (SPI already indexed, not ahead of the
        cursor) is re-acked with no state change.
        """
        if msg.next_spi in self.spi_set:
            pos = self.spi_index.index(msg.next_spi)
            gen = self.head_index - (len(self.spi_index) - 1 - pos)
            request_gap = gen - self.expected_index
            if request_gap > self.horizon:
                self.env.initiate_reset("gap-beyond-horizon")
                return
            if request_gap >= 0:
                # recovery installed it first; move the cursor past it
                self.expected_index = gen + 1
                self.expected_value = step_value(msg.next_spi, self.salt)
            self._ack(msg.generation)
            return
        probe = SpiChainState(self.seed, self.salt, self.expected_index, self.expected_value)
        gap = detect_gap(self.expected_value, msg.next_spi, probe, self.horizon)
        if gap is None:
            self.env.initiate_reset("gap-beyond-horizon")
            return
        target = self.expected_index + gap
        try:
            self._install_through(target)
        except KeyStarved:
            self.env.send_ctrl(
                ProtocolMessage(
                    MsgType.KEY_CHANGE_FAIL,
                    self.env.session_id,
                    generation=msg.generation,
                    next_spi=msg.next_spi,
                    aux=1,
                    timestamp_us=self.env.now_us(),
                )
            )
            return
        self.expected_index = target + 1
        self.expected_value = step_value(self.head_value, self.salt)
        self._ack(msg.generation)

    def on_unknown_data_spi(self, spi: int) -> bool:
        """Data-plane gap recovery: the receiving kernel saw an SPI with
        no SA.

        When enabled, a future SPI within the horizon triggers the same
        catch-up installs a request would, and the triggering packet
        deciphers.  Request bookkeeping (``expected_index``) is not
        touched: lost-request detection and the reset trigger stay with
        the control plane.
        """
        if not self.cfg.data_gap_recovery:
            return False
        expected_next = step_value(self.head_value, self.salt)
        probe = SpiChainState(self.seed, self.salt, self.head_index + 1, expected_next)
        gap = detect_gap(expected_next, spi, probe, self.horizon)
        if gap is None:
            return False
        try:
            self._install_through(self.head_index + 1 + gap)
        except KeyStarved:
            return False
        self.recovered_packets += 1
        return True


class _HandshakeRole(Enum):
    IDLE = 0
    AWAIT_ACK = 1       # master sent REQ
    AWAIT_CONFIRM = 2   # slave sent ACK


class CtrlRekeyMaster:
    """Sender side of the periodic control-channel rekey (three-way)."""

    def __init__(self, cfg: ProtocolConfig, env, tag: str):
        self.cfg = cfg
        self.env = env
        self.tag = tag
        self.epoch = -1
        self.salt = b"\x00" * 16
        self.chain_index = 0
        self.chain_value = 256
        self.generation = 0
        self.state = _HandshakeRole.IDLE
        self.pending: tuple | None = None   # (index, spi, key)
        self.tries = 0
        self.completed = 0

    def bind_epoch(self, epoch: int, seed: int, salt: bytes, key0: bytes) -> None:
        self.epoch = epoch
        self.salt = salt
        self.chain_index = 0
        self.chain_value = seed
        self.generation = 0
        self.state = _HandshakeRole.IDLE
        self.pending = None
        self.env.table.install_outbound(
            SecurityAssociation(seed, key0, Direction.OUTBOUND, Channel.CTRL, 0, self.env.now_us())
        )

    def ctrl_tick(self) -> None:
        if self.state is not _HandshakeRole.IDLE:
            return
        idx = self.chain_index + 1
        try:
            key = self.env.keystore.draw_application(self.cfg.key_bits, ("key", self.tag, self.epoch, idx))
        except KeyStarved:
            return
        spi = step_value(self.chain_value, self.salt)
        self.chain_index = idx
        self.chain_value = spi
        self.pending = (idx, spi, key)
        self.state = _HandshakeRole.AWAIT_ACK
        self.tries = 0
        self._send_req()

    def _send_req(self) -> None:
        idx, spi, _ = self.pending
        self.tries += 1
        tries = self.tries
        self.env.send_ctrl(
            ProtocolMessage(
                MsgType.CTRL_REKEY_REQ,
                self.env.session_id,
                generation=idx,
                next_spi=spi,
                timestamp_us=self.env.now_us(),
            )
        )
        epoch = self.epoch
        self.env.schedule(
            int(self.cfg.reset_timeout_ms * 1000),
            lambda: self._on_timeout(epoch, idx, tries),
        )

    def _on_timeout(self, epoch: int, idx: int, tries: int) -> None:
        if epoch != self.epoch or self.state is not _HandshakeRole.AWAIT_ACK:
            return
        if self.pending is None or self.pending[0] != idx or self.tries != tries:
            return
        if self.tries >= self.cfg.reset_max_tries:
            self.state = _HandshakeRole.IDLE
            self.pending = None
            self.env.initiate_reset("ctrl-rekey-timeout")
            return
        self._send_req()

    def _confirm(self, idx: int, spi: int) -> None:
        self.env.send_ctrl(
            ProtocolMessage(
                MsgType.CTRL_REKEY_CONFIRM,
                self.env.session_id,
                generation=idx,
                next_spi=spi,
                timestamp_us=self.env.now_us(),
            )
        )

    def on_ack(self, msg: ProtocolMessage) -> None:
        if self.state is _HandshakeRole.AWAIT_ACK and self.pending and msg.generation == self.pending[0]:
            idx, spi, key = self.pending
            self.env.table.install_outbound(
                SecurityAssociation(spi, key, Direction.OUTBOUND, Channel.CTRL, idx, self.env.now_us())
            )
            self.generation = idx
            self.pending = None
            self.state = _HandshakeRole.IDLE
            self.completed += 1
            self._confirm(idx, spi)
        elif self.state is _HandshakeRole.IDLE and msg.generation == self.generation and self.generation > 0:
            # duplicate ack after completion: the confirm was lost
            self._confirm(self.generation, self.chain_value)


class CtrlRekeySlave:
    """Receiver side of the control-channel rekey."""

    def __init__(self, cfg: ProtocolConfig, env, tag: str):
        self.cfg = cfg
        self.env = env
        self.tag = tag
        self.epoch = -1
        self.seed = 256
        self.salt = b"\x00" * 16
        self.head_index = 0
        self.head_value = 256
        self.spi_set: set = set()
        self.state = _HandshakeRole.IDLE
        self.awaiting: int | None = None
        self.tries = 0

    def bind_epoch(self, epoch: int, seed: int, salt: bytes, key0: bytes) -> None:
        self.epoch = epoch
        self.seed = seed
        self.salt = salt
        self.head_index = 0
        self.head_value = seed
        self.spi_set.clear()
        self.state = _HandshakeRole.IDLE
        self.awaiting = None
        self.env.table.install_inbound(
            SecurityAssociation(seed, key0, Direction.INBOUND, Channel.CTRL, 0, self.env.now_us()),
            self.cfg.ctrl_window,
        )
        self.spi_set.add(seed)

    def _send_ack(self, generation: int) -> None:
        self.env.send_ctrl(
            ProtocolMessage(
                MsgType.CTRL_REKEY_ACK,
                self.env.session_id,
                generation=generation,
                next_spi=0,
                timestamp_us=self.env.now_us(),
            )
        )

    def on_req(self, msg: ProtocolMessage) -> None:
        if msg.next_spi in self.spi_set:
            self._send_ack(msg.generation)
            return
        expected = step_value(self.head_value, self.salt)
        probe = SpiChainState(self.seed, self.salt, self.head_index + 1, expected)
        gap = detect_gap(expected, msg.next_spi, probe, self.cfg.ctrl_window - 1)
        if gap is None:
            self.env.initiate_reset("ctrl-gap-beyond-horizon")
            return
        now = self.env.now_us()
        target = self.head_index + 1 + gap
        try:
            while self.head_index < target:
                idx = self.head_index + 1
                key = self.env.keystore.draw_application(self.cfg.key_bits, ("key", self.tag, self.epoch, idx))
                value = step_value(self.head_value, self.salt)
                evicted = self.env.table.install_inbound(
                    SecurityAssociation(value, key, Direction.INBOUND, Channel.CTRL, idx, now),
                    self.cfg.ctrl_window,
                )
                self.spi_set.add(value)
                if evicted is not None:
                    self.spi_set.discard(evicted.spi)
                self.head_index = idx
                self.head_value = value
        except KeyStarved:
            return  # no ack; the master retransmits and eventually resets
        self.state = _HandshakeRole.AWAIT_CONFIRM
        self.awaiting = msg.generation
        self.tries = 0
        self._send_ack(msg.generation)
        self._arm_reack_timer()

    def _arm_reack_timer(self) -> None:
        epoch = self.epoch
        gen = self.awaiting
        tries = self.tries
        self.env.schedule(
            int(self.cfg.reset_timeout_ms * 1000),
            lambda: self._on_timeout(epoch, gen, tries),
        )

    def _on_timeout(self, epoch: int, gen: int, tries: int) -> None:
        if epoch != self.epoch or self.state is not _HandshakeRole.AWAIT_CONFIRM:
            return
        if self.awaiting != gen or self.tries != tries:
            return
        if self.tries >= self.cfg.reset_max_tries:
            self.state = _HandshakeRole.IDLE
            self.awaiting = None
            self.env.initiate_reset("ctrl-rekey-confirm-timeout")
            return
        self.tries += 1
        self._send_ack(gen)
        self._arm_reack_timer()

    def on_confirm(self, msg: ProtocolMessage) -> None:
        if self.state is _HandshakeRole.AWAIT_CONFIRM and msg.generation == self.awaiting:
            self.state = _HandshakeRole.IDLE
            self.awaiting = None


class ResetState(Enum):
    IDLE = 0
    INITIATING = 1
    RESPONDING = 2
    SUSPENDED = 3


class ResetPeer:
    """Three-way session reset, either peer may initiate.

    REQ -> ACK -> CONFIRM with retransmission on both sides.  The
    responder applies the reset (clears queues, re-seeds every channel
    chain, reinstalls generation 0) when it sends the ACK, the initiator
    when the ACK arrives; the CONFIRM closes the responder's
    retransmission loop.  Applying on ACK-send means the responder is
    re-keyed before the initiator's first post-reset traffic can reach
    it.  Retries exhausted on either side suspend the session.  Reset
    frames are authenticated by static session credentials, not by
    control-channel SAs: a reset must work exactly when SA state is
    unusable.
    """

    def __init__(self, cfg: ProtocolConfig, env):
        self.cfg = cfg
        self.env = env
        self.state = ResetState.IDLE
        self.epoch = 0            # last completed epoch
        self.pending_epoch = 0
        self.tries = 0
        self.initiated = 0
        self.completed = 0
        self.last_reason = ""

    def initiate(self, reason: str) -> None:
        if self.state in (ResetState.INITIATING, ResetState.RESPONDING, ResetState.SUSPENDED):
            return
        self.state = ResetState.INITIATING
        self.pending_epoch = self.epoch + 1
        self.tries = 0
        self.initiated += 1
        self.last_reason = reason
        self._send_req()

    def _send(self, mtype: MsgType, epoch: int) -> None:
        self.env.send_ctrl(
            ProtocolMessage(
                mtype,
                self.env.session_id,
                generation=0,
                next_spi=0,
                aux=epoch,
                timestamp_us=self.env.now_us(),
            ),
            bypass_sa=True,
        )

    def _send_req(self) -> None:
        self.tries += 1
        tries = self.tries
        epoch = self.pending_epoch
        self._send(MsgType.RESET_REQ, epoch)
        self.env.schedule(
            int(self.cfg.reset_timeout_ms * 1000),
            lambda: self._req_timeout(epoch, tries),
        )

    def _req_timeout(self, epoch: int, tries: int) -> None:
        if self.state is not ResetState.INITIATING or self.pending_epoch != epoch or self.tries != tries:
            return
        if self.tries >= self.cfg.reset_max_tries:
            self.state = ResetState.SUSPENDED
            self.env.on_suspended()
            return
        self._send_req()

    def on_reset_req(self, msg: ProtocolMessage) -> None:
        epoch = msg.aux
        if epoch <= self.epoch:
            # stale or duplicate of a completed epoch; re-ack is harmless
            self._send(MsgType.RESET_ACK, epoch)
            return
        if not self.env.can_apply_reset():
            return  # cannot re-key yet (slow start); initiator will retry
        if self.state is ResetState.INITIATING:
            if epoch < self.pending_epoch:
                return
            if epoch == self.pending_epoch and self.env.is_session_master:
                return  # peer initiated simultaneously; our request wins
        # yield / respond: apply before acking so this side deciphers the
        # initiator's first post-reset traffic
        self.state = ResetState.RESPONDING
        self.pending_epoch = epoch
        self.tries = 0
        self.epoch = epoch
        self.completed += 1
        self.env.apply_reset(epoch)
        self._send(MsgType.RESET_ACK, epoch)
        self._arm_ack_timer()

    def _arm_ack_timer(self) -> None:
        epoch = self.pending_epoch
        tries = self.tries
        self.env.schedule(
            int(self.cfg.reset_timeout_ms * 1000),
            lambda: self._ack_timeout(epoch, tries),
        )

    def _ack_timeout(self, epoch: int, tries: int) -> None:
        if self.state is not ResetState.RESPONDING or self.pending_epoch != epoch or self.tries != tries:
            return
        if self.tries >= self.cfg.reset_max_tries:
            self.state = ResetState.SUSPENDED
            self.env.on_suspended()
            return
        self.tries += 1
        self._send(MsgType.RESET_ACK, epoch)
        self._arm_ack_timer()

    def on_reset_ack(self, msg: ProtocolMessage) -> None:
        if self.state is ResetState.INITIATING and msg.aux == self.pending_epoch:
            self._send(MsgType.RESET_CONFIRM, msg.aux)
            self._complete(msg.aux)
        elif msg.aux == self.epoch and self.state is ResetState.IDLE:
            # our confirm was lost; the responder is still re-acking
            self._send(MsgType.RESET_CONFIRM, msg.aux)

    def on_reset_confirm(self, msg: ProtocolMessage) -> None:
        if self.state is ResetState.RESPONDING and msg.aux == self.pending_epoch:
            self.state = ResetState.IDLE

    def _complete(self, epoch: int) -> None:
        """Initiator-side completion on ACK receipt."""
        self.epoch = epoch
        self.state = ResetState.IDLE
        self.completed += 1
        self.env.apply_reset(epoch)
