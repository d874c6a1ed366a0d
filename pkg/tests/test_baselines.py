import itertools
from types import SimpleNamespace

import numpy as np
import pytest

from satoffload.allocator import OffloadMatrix, Weights, allocate_all
from satoffload.baselines import (
    RandomXPolicy, WoaPolicy, WoaState, covering_servers, decode, random_x, slot_menus, woa_optimize,
    woa_schedule,
)
from satoffload.env import CNS_SLOT, CoverageIndex, OffloadEnv
from satoffload.model import SatelliteLayer


def rich_slot(scenario, ids, horizon=100):
    """Slot where the menus of ``ids`` offer the most joint choices."""
    env = OffloadEnv(scenario)
    best, best_n = 0, -1
    for slot in range(horizon):
        _, masks = slot_menus(scenario, ids, slot, env)
        n = int(np.prod(masks.sum(axis=1)))
        if n > best_n:
            best, best_n = slot, n
    return best


def exhaustive(scenario, ids, slot, w):
    menus, masks = slot_menus(scenario, ids, slot)
    cubes = {s.id for s in scenario.satellites if s.layer is SatelliteLayer.CUBESAT}
    best = np.inf
    for combo in itertools.product(*[np.flatnonzero(m) for m in masks]):
        servers = [menus[i][k] for i, k in enumerate(combo)]
        used = [s for s in servers if s in cubes]
        if len(used) != len(set(used)):
            continue
        best = min(best, allocate_all(scenario, OffloadMatrix(tuple(ids), tuple(servers)), w, check=False).objective)
    return best


class TestRandomX:
    def test_single_server(self):
        d = SimpleNamespace(agent_index=0, menu=(-1, -1, -1, -1, 9), mask=np.array([0, 0, 0, 0, 1], bool))
        env = SimpleNamespace(decisions=[d], layers=np.zeros(10, int))
        pol = RandomXPolicy(0)
        assert all(pol(env) == {0: CNS_SLOT} for _ in range(50))

    def test_uniform_chi_square(self):
        d = SimpleNamespace(agent_index=0, menu=(1, 2, -1, 4, 0), mask=np.array([1, 1, 0, 1, 1], bool))
        env = SimpleNamespace(decisions=[d], layers=np.array([0, 2, 2, 2, 1]))
        pol = RandomXPolicy(3)
        n = 100_000
        counts = np.bincount([pol(env)[0] for _ in range(n)], minlength=5)
        assert counts[2] == 0
        valid = counts[[0, 1, 3, 4]]
        p = 0.25
        sigma = np.sqrt(n * p * (1 - p))
        assert (np.abs(valid - n * p) <= 3 * sigma).all()

    def test_deterministic(self, toy_scenario_obj):
        a = random_x(toy_scenario_obj, 5)
        b = random_x(toy_scenario_obj, 5)
        assert a == b

    def test_matrix_invariants(self, toy_scenario_obj):
        cov = CoverageIndex(toy_scenario_obj)
        cubes = {s.id for s in toy_scenario_obj.satellites if s.layer is SatelliteLayer.CUBESAT}
        subs = toy_scenario_obj.subtasks
        for seed in range(20):
            slot = seed * 5
            ids = list(range(0, len(subs), 3))[:4]
            m = random_x(toy_scenario_obj, seed, ids, slot, cov)
            assert len(m.servers) == len(ids)
            used = [s for s in m.servers if s in cubes]
            assert len(used) == len(set(used))
            for sid, srv in zip(m.subtask_ids, m.servers):
                assert srv in covering_servers(toy_scenario_obj, subs[sid].owner, cov, slot)

    def test_policy_respects_occupancy(self, toy_env):
        pol = RandomXPolicy(1)
        for seed in range(5):
            toy_env.reset(seed)
            while not toy_env.done:
                choice = pol(toy_env)
                used = [d.menu[choice[d.agent_index]] for d in toy_env.decisions]
                cubes = [s for s in used if toy_env.layers[s] == 2]
                assert len(cubes) == len(set(cubes))
                for d in toy_env.decisions:
                    assert d.mask[choice[d.agent_index]]
                toy_env.step(choice)


class TestDecode:
    def test_argmax_masked(self):
        pos = np.array([[0.9, 0.1, 0.5, 0.2, 0.3]])
        mask = np.array([[False, True, True, True, True]])
        assert decode(pos, [(1, 2, 3, 4, 0)], mask, set()) == (2,)

    def test_tie_lowest_id(self):
        pos = np.array([[0.5, 0.5, 0.0, 0.0, 0.0]])
        assert decode(pos, [(7, 3, -1, 4, 0)], np.array([[1, 1, 0, 1, 1]], bool), set()) == (1,)

    def test_cubesat_taken(self):
        pos = np.array([[1.0, 0, 0, 0, 0.5], [1.0, 0, 0, 0, 0.5]])
        menus = [(5, -1, -1, -1, 0), (5, -1, -1, -1, 0)]
        mask = np.array([[1, 0, 0, 0, 1]] * 2, bool)
        assert decode(pos, menus, mask, {5}) == (0, 4)

    def test_no_option(self):
        with pytest.raises(ValueError):
            decode(np.ones((1, 5)), [(-1,) * 5], np.zeros((1, 5), bool), set())


class TestWoa:
    def test_budget_one_population_two(self):
        menus = [(1, 2, 3, 4, 0)]
        mask = np.ones((1, 5), bool)
        f = {0: 5.0, 1: 2.0, 2: 7.0, 3: 1.0, 4: 3.0}
        st = woa_optimize(lambda ch: f[ch[0]], menus, mask, set(), budget=1, seed=0, population=2)
        init = np.random.default_rng(0).random((2, 1, 5))
        cands = [decode(p, menus, mask, set())[0] for p in init]
        assert st.best_objective == min(f[c] for c in cands)
        assert st.iteration == 1

    def test_elitist(self, toy_scenario_obj):
        ids = list(range(4))
        slot = rich_slot(toy_scenario_obj, ids)
        menus, masks = slot_menus(toy_scenario_obj, ids, slot)
        w = Weights()

        def fit(ch):
            return allocate_all(toy_scenario_obj, OffloadMatrix(tuple(ids), tuple(menus[i][c] for i, c in enumerate(ch))),
                                w, check=False).objective

        cubes = {s.id for s in toy_scenario_obj.satellites if s.layer is SatelliteLayer.CUBESAT}
        st = woa_optimize(fit, menus, masks, cubes, budget=30, seed=2)
        assert len(st.history) == 30
        assert all(b <= a for a, b in zip(st.history, st.history[1:]))
        assert st.best_objective == pytest.approx(fit(st.best_choice))

    def test_population_guard(self):
        with pytest.raises(ValueError):
            WoaState(np.zeros((1, 1, 5)), 1, np.zeros((1, 5)), (0,), 0.0)
        with pytest.raises(ValueError):
            woa_optimize(lambda c: 0.0, [(0,) * 5], np.ones((1, 5), bool), set(), budget=0, seed=0)

    def test_near_exhaustive(self, toy_scenario_obj):
        ids = list(range(0, 20, 5))[:4]
        slot = rich_slot(toy_scenario_obj, ids)
        w = Weights()
        opt = exhaustive(toy_scenario_obj, ids, slot, w)
        m = woa_schedule(toy_scenario_obj, 2000, 0, ids, slot, w)
        got = allocate_all(toy_scenario_obj, m, w, check=False).objective
        assert got <= opt * 1.05 + 1e-12

    def test_schedule_deterministic(self, toy_scenario_obj):
        ids = [0, 1, 2]
        assert woa_schedule(toy_scenario_obj, 5, 3, ids, 10) == woa_schedule(toy_scenario_obj, 5, 3, ids, 10)

    def test_policy_feasible_and_deterministic(self, toy_scenario_obj):
        def play(seed):
            env = OffloadEnv(toy_scenario_obj)
            env.reset(0)
            pol = WoaPolicy(budget=3, population=4, seed=seed)
            picks = []
            while not env.done:
                choice = pol(env)
                used = [d.menu[choice[d.agent_index]] for d in env.decisions]
                cubes = [s for s in used if env.layers[s] == 2]
                assert len(cubes) == len(set(cubes))
                picks.append(tuple(sorted(choice.items())))
                env.step(choice)
            return picks

        assert play(1) == play(1)
