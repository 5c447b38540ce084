import sys
import threading
# insert at 1, 0 is the script path (or '' in REPL)
sys.path.insert(1, 'src')

import numpy as np

from exercise_goal_setting import network as nn
from exercise_goal_setting.parameter_store import ParameterStore

"""Tests of the shared parameter store used by asynchronous workers"""


def make_store():
    params = nn.HybridNetParams.initialize(nn.NetSpec.hybrid(hidden=2, dense=2, window=3), np.random.default_rng(0))
    return ParameterStore(params)


def test_snapshot_is_a_copy():
    store = make_store()
    snap = store.snapshot()
    snap.tensors["actor_b"] += 1.0

    assert(not np.array_equal(snap["actor_b"], store.params["actor_b"]))


def test_apply_updates_shared_parameters():
    store = make_store()
    before = store.snapshot()
    grads = nn.Gradients({name: np.ones_like(a) for name, a in before.items()})

    assert(store.apply(grads))
    assert(store.optimizer_state.updates == 1)
    assert(np.all(store.params["critic_b"] < before["critic_b"]))


def test_rejected_updates_are_counted():
    store = make_store()
    grads = nn.Gradients({name: np.full_like(a, np.inf) for name, a in store.params.items()})

    assert(not store.apply(grads))
    assert(store.rejected_updates == 1)


def test_counters_under_concurrency():
    store = make_store()

    def work():
        for _ in range(1000):
            store.advance(2, episodes=1)

    threads = [threading.Thread(target=work) for _ in range(4)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()

    assert(store.global_step == 8000)
    assert(store.episodes == 4000)


def test_string_representation():
    store = make_store()
    store.advance(5)
    text = str(store)

    assert("ParameterStore object properties" in text)
    assert("global step = 5" in text)
    assert(repr(store) == text)
