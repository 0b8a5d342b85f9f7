import threading

import pytest

from toothsparse.errors import DataError
from toothsparse.parallel import ordered_map, thread_count


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("TOOTHSPARSE_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("TOOTHSPARSE_THREADS", "0")
    assert thread_count() >= 1
    monkeypatch.delenv("TOOTHSPARSE_THREADS")
    assert thread_count() >= 1
    for bad in ("x", "-2"):
        monkeypatch.setenv("TOOTHSPARSE_THREADS", bad)
        with pytest.raises(DataError):
            thread_count()


@pytest.mark.parametrize("threads", [1, 4])
def test_ordered_map_keeps_order(threads):
    assert ordered_map(lambda x: x * x, range(50), threads=threads) == [x * x for x in range(50)]


def test_nested_calls_run_serially():
    seen = []

    def inner(x):
        seen.append(threading.current_thread().name)
        return x

    def outer(x):
        before = threading.active_count()
        out = ordered_map(inner, range(5), threads=4)
        assert threading.active_count() == before
        return sum(out)

    assert ordered_map(outer, range(3), threads=3) == [10, 10, 10]


def test_exceptions_propagate():
    def boom(x):
        raise ValueError(x)

    with pytest.raises(ValueError):
        ordered_map(boom, [1, 2], threads=2)
