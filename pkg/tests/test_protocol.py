"""State machines: rekey flow, gap compensation, keepalive, reset, control rekey."""

import pytest

from qrekey.chain import spi_at
from qrekey.dataplane import Channel
from qrekey.protocol import (
    CtrlRekeyMaster,
    CtrlRekeySlave,
    DataMaster,
    DataSlave,
    ProtocolConfig,
    ResetPeer,
    ResetState,
)
from qrekey.wire import MsgType, ProtocolMessage

from fakenet import FakeNet, FakeHost

SEED = 0x1000
SALT = bytes(range(16))
KEY0 = b"\x11" * 32


def make_pair(cfg=None):
    net = FakeNet()
    cfg = cfg or ProtocolConfig(window=5)
    master = DataMaster(cfg, net.a)
    slave = DataSlave(cfg, net.b)
    master.bind_epoch(1, SEED, SALT, KEY0)
    slave.bind_epoch(1, SEED, SALT, KEY0)
    net.a.on(MsgType.KEY_CHANGE_ACK, master.on_ack)
    net.a.on(MsgType.KEY_CHANGE_FAIL, master.on_fail)
    net.b.on(MsgType.KEY_CHANGE_REQUEST, slave.on_key_change_request)
    return net, cfg, master, slave


def req(generation, spi, session=0x1234):
    return ProtocolMessage(MsgType.KEY_CHANGE_REQUEST, session, generation, spi)


class TestDataMaster:
    def test_bind_fills_lookahead_and_installs_seed(self):
        net, cfg, master, _ = make_pair()
        assert len(master.lookahead) == cfg.lookahead_depth
        assert net.a.table.outbound_spi(Channel.DATA) == SEED

    def test_steady_state_tick(self):
        net, cfg, master, _ = make_pair()
        master.rekey_tick()
        assert len(master.lookahead) == cfg.lookahead_depth
        assert master.generation == 1
        assert net.a.table.outbound_spi(Channel.DATA) == spi_at(SEED, SALT, 1)
        sent = [m for m in net.a.sent if m.type is MsgType.KEY_CHANGE_REQUEST]
        assert len(sent) == 1
        assert sent[0].next_spi == spi_at(SEED, SALT, 1)
        assert sent[0].generation == 1

    def test_lookahead_depth_default_is_half_window(self):
        assert ProtocolConfig(window=50).lookahead_depth == 25
        assert ProtocolConfig(window=5).lookahead_depth == 3
        assert ProtocolConfig(window=50, lookahead=50).lookahead_depth == 50

    def test_warm_up_grows_before_replacement(self):
        net = FakeNet()
        cfg = ProtocolConfig(window=8)  # depth 4
        net.a.keystore.starved = True
        master = DataMaster(cfg, net.a)
        master.bind_epoch(1, SEED, SALT, KEY0)
        assert len(master.lookahead) == 0
        net.a.keystore.starved = False
        for i in range(cfg.lookahead_depth):
            master.rekey_tick()
            assert len(master.lookahead) == i + 1
        assert master.generation == 0  # no replacement during warm-up
        assert net.a.sent == []
        master.rekey_tick()  # first steady tick
        assert master.generation == 1
        assert len(net.a.sent) == 1

    def test_starved_ticks_shrink_then_reset(self):
        net, cfg, master, _ = make_pair()
        net.a.keystore.starved = True
        for i in range(cfg.lookahead_depth):
            master.rekey_tick()
            assert len(master.lookahead) == cfg.lookahead_depth - 1 - i
        assert master.generation == cfg.lookahead_depth  # changes continued
        master.rekey_tick()
        assert net.a.reset_reasons == ["master-starved"]

    def test_keepalive_timeout_resets(self):
        net, cfg, master, _ = make_pair(ProtocolConfig(window=5, ack_tolerance=4))
        for _ in range(4):
            master.rekey_tick()
        assert net.a.reset_reasons == ["keepalive-timeout"]

    def test_ack_clears_miss_counter(self):
        net, cfg, master, _ = make_pair()
        master.rekey_tick()
        assert master.missed_acks == 1
        master.on_ack(ProtocolMessage(MsgType.KEY_CHANGE_ACK, 0x1234, 1, 0))
        assert master.missed_acks == 0

    def test_stale_ack_ignored(self):
        net, cfg, master, _ = make_pair()
        for _ in range(cfg.lookahead_depth + 2):
            master.rekey_tick()
        master.missed_acks = 2
        stale = ProtocolMessage(MsgType.KEY_CHANGE_ACK, 0x1234, 0, 0)
        master.on_ack(stale)
        assert master.missed_acks == 2

    def test_duplicate_ack_idempotent(self):
        net, cfg, master, _ = make_pair()
        master.rekey_tick()
        ack = ProtocolMessage(MsgType.KEY_CHANGE_ACK, 0x1234, 1, 0)
        master.on_ack(ack)
        master.on_ack(ack)
        assert master.missed_acks == 0

    def test_fail_pauses_one_interval_then_resets_after_three(self):
        net, cfg, master, _ = make_pair()
        fail = ProtocolMessage(MsgType.KEY_CHANGE_FAIL, 0x1234, 1, 0)
        master.on_fail(fail)
        gen = master.generation
        master.rekey_tick()  # paused
        assert master.generation == gen
        master.rekey_tick()
        assert master.generation == gen + 1
        master.on_fail(fail)
        master.on_fail(fail)
        assert net.a.reset_reasons == ["repeated-key-change-fail"]

    def test_omit_send_still_changes_key(self):
        net, cfg, master, _ = make_pair()
        master.rekey_tick(omit_send=True)
        assert master.generation == 1
        assert net.a.sent == []


class TestDataSlave:
    def test_gap_zero_steady_state(self):
        net, cfg, master, slave = make_pair()
        slave.on_key_change_request(req(1, spi_at(SEED, SALT, 1)))
        assert slave.head_index == 1
        assert net.b.table.has_inbound(Channel.DATA, spi_at(SEED, SALT, 1))
        acks = [m for m in net.b.sent if m.type is MsgType.KEY_CHANGE_ACK]
        assert len(acks) == 1 and acks[0].generation == 1

    def test_window_eviction_keeps_bound(self):
        net, cfg, master, slave = make_pair()  # W=5
        for g in range(1, 10):
            slave.on_key_change_request(req(g, spi_at(SEED, SALT, g)))
        assert net.b.table.window_size(Channel.DATA) == 5
        assert list(slave.spi_index) == [spi_at(SEED, SALT, g) for g in range(5, 10)]

    def test_spi_index_mirrors_window(self):
        net, cfg, master, slave = make_pair()
        for g in range(1, 8):
            slave.on_key_change_request(req(g, spi_at(SEED, SALT, g)))
        window = net.b.table.windows[Channel.DATA]
        assert [sa.spi for sa in window] == list(slave.spi_index)

    def test_duplicate_request_reacks_without_state_change(self):
        net, cfg, master, slave = make_pair()
        message = req(1, spi_at(SEED, SALT, 1))
        slave.on_key_change_request(message)
        head = slave.head_index
        slave.on_key_change_request(message)
        assert slave.head_index == head
        acks = [m for m in net.b.sent if m.type is MsgType.KEY_CHANGE_ACK]
        assert len(acks) == 2

    def test_gap_three_installs_all_intermediates(self):
        net, cfg, master, slave = make_pair()
        # requests 1..3 lost; request 4 arrives
        slave.on_key_change_request(req(4, spi_at(SEED, SALT, 4)))
        for g in range(1, 5):
            assert net.b.table.has_inbound(Channel.DATA, spi_at(SEED, SALT, g))
        assert net.b.table.window_size(Channel.DATA) == 5  # seed + 4 <= W
        assert slave.head_index == 4

    def test_gap_beyond_horizon_resets(self):
        net, cfg, master, slave = make_pair()  # W=5, horizon 4
        slave.on_key_change_request(req(6, spi_at(SEED, SALT, 6)))
        assert net.b.reset_reasons == ["gap-beyond-horizon"]
        assert slave.head_index == 0

    def test_gap_at_horizon_compensates(self):
        net, cfg, master, slave = make_pair()
        slave.on_key_change_request(req(5, spi_at(SEED, SALT, 5)))
        assert net.b.reset_reasons == []
        assert slave.head_index == 5

    def test_starved_slave_sends_fail(self):
        net, cfg, master, slave = make_pair()
        net.b.keystore.starved = True
        slave.on_key_change_request(req(1, spi_at(SEED, SALT, 1)))
        fails = [m for m in net.b.sent if m.type is MsgType.KEY_CHANGE_FAIL]
        assert len(fails) == 1

    def test_recovery_disabled_by_default(self):
        net, cfg, master, slave = make_pair()
        assert slave.on_unknown_data_spi(spi_at(SEED, SALT, 1)) is False

    def test_recovery_installs_and_accepts(self):
        net, cfg, master, slave = make_pair(ProtocolConfig(window=5, data_gap_recovery=True))
        assert slave.on_unknown_data_spi(spi_at(SEED, SALT, 2)) is True
        assert net.b.table.has_inbound(Channel.DATA, spi_at(SEED, SALT, 1))
        assert net.b.table.has_inbound(Channel.DATA, spi_at(SEED, SALT, 2))
        # request bookkeeping untouched: a later request for gen 3 is a gap of 2
        assert slave.expected_index == 1

    def test_recovery_beyond_horizon_fails(self):
        net, cfg, master, slave = make_pair(ProtocolConfig(window=5, data_gap_recovery=True))
        assert slave.on_unknown_data_spi(spi_at(SEED, SALT, 6)) is False

    def test_late_request_after_recovery_is_duplicate(self):
        net, cfg, master, slave = make_pair(ProtocolConfig(window=5, data_gap_recovery=True))
        slave.on_unknown_data_spi(spi_at(SEED, SALT, 1))
        slave.on_key_change_request(req(1, spi_at(SEED, SALT, 1)))
        assert slave.head_index == 1  # no double install
        acks = [m for m in net.b.sent if m.type is MsgType.KEY_CHANGE_ACK]
        assert len(acks) == 1


class TestEndToEndFlow:
    def test_master_and_slave_stay_synchronized(self):
        net, cfg, master, slave = make_pair()
        for _ in range(20):
            master.rekey_tick()
            net.run(until_us=net.now + 100_000)
        assert slave.head_index == master.generation == 20
        assert master.missed_acks == 0
        # slave window covers the master's current outbound SPI
        assert net.b.table.has_inbound(Channel.DATA, net.a.table.outbound_spi(Channel.DATA))

    def test_omitted_requests_recovered_at_next_request(self):
        net, cfg, master, slave = make_pair()
        master.rekey_tick()
        net.run(until_us=net.now + 100_000)
        for _ in range(3):
            master.rekey_tick(omit_send=True)
        master.rekey_tick()
        net.run(until_us=net.now + 100_000)
        assert slave.head_index == master.generation == 5


def wire_reset(net):
    ra = ResetPeer(ProtocolConfig(window=5), net.a)
    rb = ResetPeer(ProtocolConfig(window=5), net.b)
    net.a.on(MsgType.RESET_REQ, ra.on_reset_req)
    net.a.on(MsgType.RESET_ACK, ra.on_reset_ack)
    net.a.on(MsgType.RESET_CONFIRM, ra.on_reset_confirm)
    net.b.on(MsgType.RESET_REQ, rb.on_reset_req)
    net.b.on(MsgType.RESET_ACK, rb.on_reset_ack)
    net.b.on(MsgType.RESET_CONFIRM, rb.on_reset_confirm)
    return ra, rb


class TestReset:
    def test_lossless_three_way(self):
        net = FakeNet()
        ra, rb = wire_reset(net)
        ra.initiate("test")
        net.run(until_us=1_000_000)
        assert net.a.applied_epochs == [1]
        assert net.b.applied_epochs == [1]
        types = [m.type for _, _, m in net.log]
        assert types[:3] == [MsgType.RESET_REQ, MsgType.RESET_ACK, MsgType.RESET_CONFIRM]

    def test_dropped_ack_retransmits(self):
        net = FakeNet()
        ra, rb = wire_reset(net)
        net.drop(MsgType.RESET_ACK, [0])
        ra.initiate("test")
        net.run(until_us=2_000_000)
        assert net.a.applied_epochs == [1]
        assert net.b.applied_epochs == [1]

    def test_dropped_confirm_completes_via_reack(self):
        net = FakeNet()
        ra, rb = wire_reset(net)
        net.drop(MsgType.RESET_CONFIRM, [0])
        ra.initiate("test")
        net.run(until_us=2_000_000)
        assert net.a.applied_epochs == [1]
        assert net.b.applied_epochs == [1]

    def test_dead_responder_suspends_after_five_tries(self):
        net = FakeNet()
        ra, rb = wire_reset(net)
        net.drop_all(MsgType.RESET_REQ)
        ra.initiate("test")
        net.run(until_us=5_000_000)
        assert net.a.suspended is True
        assert ra.state is ResetState.SUSPENDED
        reqs = [(t, m) for t, _, m in net.log if m.type is MsgType.RESET_REQ]
        assert len(reqs) == 5
        # five tries, 200 ms apart: suspension within about a second
        assert 750_000 <= net.log[-1][0] <= 1_100_000

    def test_simultaneous_initiation_converges(self):
        net = FakeNet()
        ra, rb = wire_reset(net)
        ra.initiate("a")
        rb.initiate("b")
        net.run(until_us=3_000_000)
        assert net.a.applied_epochs == [1]
        assert net.b.applied_epochs == [1]


def wire_ctrl(net, cfg=None):
    cfg = cfg or ProtocolConfig(window=5)
    cm = CtrlRekeyMaster(cfg, net.a, "ctrl-fwd")
    cs = CtrlRekeySlave(cfg, net.b, "ctrl-fwd")
    cm.bind_epoch(1, SEED, SALT, KEY0)
    cs.bind_epoch(1, SEED, SALT, KEY0)
    net.b.on(MsgType.CTRL_REKEY_REQ, cs.on_req)
    net.a.on(MsgType.CTRL_REKEY_ACK, cm.on_ack)
    net.b.on(MsgType.CTRL_REKEY_CONFIRM, cs.on_confirm)
    return cm, cs


class TestCtrlRekey:
    def test_lossless_handshake_advances_both(self):
        net = FakeNet()
        cm, cs = wire_ctrl(net)
        cm.ctrl_tick()
        net.run(until_us=1_000_000)
        assert cm.completed == 1
        assert cm.generation == 1
        assert net.a.table.outbound_spi(Channel.CTRL) == spi_at(SEED, SALT, 1)
        assert net.b.table.has_inbound(Channel.CTRL, spi_at(SEED, SALT, 1))
        assert net.b.table.has_inbound(Channel.CTRL, SEED)  # old SA retained

    def test_master_switches_only_after_ack(self):
        net = FakeNet()
        cm, cs = wire_ctrl(net)
        cm.ctrl_tick()
        assert net.a.table.outbound_spi(Channel.CTRL) == SEED
        net.run(until_us=1_000_000)
        assert net.a.table.outbound_spi(Channel.CTRL) == spi_at(SEED, SALT, 1)

    def test_dropped_req_retransmits(self):
        net = FakeNet()
        cm, cs = wire_ctrl(net)
        net.drop(MsgType.CTRL_REKEY_REQ, [0])
        cm.ctrl_tick()
        net.run(until_us=2_000_000)
        assert cm.completed == 1

    def test_dropped_confirm_completes(self):
        net = FakeNet()
        cm, cs = wire_ctrl(net)
        net.drop(MsgType.CTRL_REKEY_CONFIRM, [0])
        cm.ctrl_tick()
        net.run(until_us=2_000_000)
        assert cm.completed == 1
        assert cs.state.name == "IDLE"

    def test_exhausted_retries_escalate_to_reset(self):
        net = FakeNet()
        cm, cs = wire_ctrl(net)
        net.drop_all(MsgType.CTRL_REKEY_REQ)
        cm.ctrl_tick()
        net.run(until_us=5_000_000)
        assert net.a.reset_reasons == ["ctrl-rekey-timeout"]

    def test_concurrent_with_data_tick(self):
        """Control and data rekeys in the same instant are independent."""
        net = FakeNet()
        cfg = ProtocolConfig(window=5)
        master = DataMaster(cfg, net.a)
        slave = DataSlave(cfg, net.b)
        master.bind_epoch(1, SEED, SALT, KEY0)
        slave.bind_epoch(1, SEED, SALT, KEY0)
        net.b.on(MsgType.KEY_CHANGE_REQUEST, slave.on_key_change_request)
        net.a.on(MsgType.KEY_CHANGE_ACK, master.on_ack)
        cm, cs = wire_ctrl(net, cfg)
        master.rekey_tick()
        cm.ctrl_tick()  # same instant, no ordering dependency
        net.run(until_us=1_000_000)
        assert master.generation == 1
        assert cm.completed == 1
        assert slave.head_index == 1

    def test_window_bound_respected(self):
        net = FakeNet()
        cfg = ProtocolConfig(window=5, ctrl_window=3)
        cm, cs = wire_ctrl(net, cfg)
        for _ in range(6):
            cm.ctrl_tick()
            net.run(until_us=net.now + 1_000_000)
        assert net.b.table.window_size(Channel.CTRL) == 3
