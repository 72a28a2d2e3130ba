import numpy as np
import pytest

from mpamp.netsim import (
    DOWN,
    UP,
    Broadcast,
    ByteLedger,
    MissingMessageError,
    Network,
    PseudoData,
    raw_bits,
)


def _workers(P, log=None):
    def make(p):
        def work():
            if log is not None:
                log.append(p)
            return PseudoData(raw_bits(4), node=p, vector=np.full(4, float(p)))
        return work
    return [make(p) for p in range(P)]


def _center(messages):
    assert [m.node for m in messages] == sorted(m.node for m in messages)
    total = messages[0].vector.copy()
    for m in messages[1:]:
        total += m.vector
    return Broadcast(raw_bits(4), x=total)


@pytest.mark.parametrize("order", ["natural", "reversed", [2, 0, 3, 1]])
def test_center_sees_node_order(order):
    log = []
    net = Network(4, order=order)
    _, reply = net.run_round(0, _workers(4, log), _center)
    assert np.array_equal(reply.x, np.full(4, 6.0))
    expected = order if isinstance(order, list) else {"natural": [0, 1, 2, 3], "reversed": [3, 2, 1, 0]}[order]
    assert log == expected


def test_threads_give_identical_results():
    a = Network(3).run_round(0, _workers(3), _center)[1].x
    b = Network(3, threads=3).run_round(0, _workers(3), _center)[1].x
    assert np.array_equal(a, b)


def test_ledger_accounting():
    net = Network(3)
    net.run_round(0, _workers(3), _center)
    net.run_round(1, _workers(3), None)
    led = net.ledger
    assert led.bits(iteration=0, direction=UP) == 3 * 4 * 32
    assert led.bits(iteration=0, direction=DOWN) == 3 * 4 * 32
    assert led.bits(iteration=1, direction=DOWN) == 0
    assert led.message_count(direction=UP) == 6
    assert led.total == 3 * 128 * 3
    lines = led.to_csv().splitlines()
    assert lines[0] == "iteration,direction,bits"
    assert len(lines) == 1 + 3


def test_ledger_rejects_negative():
    with pytest.raises(ValueError):
        ByteLedger().record(0, UP, -1)


def test_missing_message():
    ws = _workers(3)
    ws[1] = lambda: None
    with pytest.raises(MissingMessageError) as info:
        Network(3).run_round(0, ws)
    assert info.value.node == 1


def test_bad_configuration():
    with pytest.raises(ValueError):
        Network(0)
    with pytest.raises(ValueError):
        Network(3, order=[0, 0, 1]).run_round(0, _workers(3))
    with pytest.raises(ValueError):
        Network(3, order="random").run_round(0, _workers(3))
    with pytest.raises(ValueError):
        Network(3).run_round(0, _workers(2))


def test_extras_passed_through():
    ws = [lambda p=p: (PseudoData(0.0, node=p, vector=np.zeros(1)), p * 10) for p in range(3)]
    extras, reply = Network(3, order="reversed").run_round(0, ws)
    assert extras == [0, 10, 20] and reply is None
