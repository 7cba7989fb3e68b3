import csv
import math

import numpy as np
import pytest

import v2xmeta as vx


def test_v2i_path_loss_values():
    assert vx.path_loss_v2i_db(0.1) == pytest.approx(90.5, abs=1e-3)
    assert vx.path_loss_v2i_db(0.5) == pytest.approx(116.7813, abs=1e-3)


def test_rayleigh_mean_power():
    p = np.asarray(vx.sample_fading_power(0.0, 3, 200_000))
    assert p.mean() == pytest.approx(1.0, abs=0.02)


def test_environment_episode():
    task = vx.TaskConfig(upsilon=1.0)
    env = vx.Environment(task, 5)
    obs = env.reset(5)
    assert obs.shape == (env.agents, task.observation_size)
    assert task.observation_size == 18 and task.action_count == 16
    done = False
    steps = 0
    while not done:
        r = env.step([0] * env.agents)
        done = r["done"]
        steps += 1
    assert steps == task.slots
    assert len(r["v2i_rate_bps"]) == task.bands
    assert all(isinstance(s, bool) for s in r["success"])


def test_gae_lambda_zero_is_td_error():
    a = vx.compute_gae([1.0, 2.0, 3.0], [0.5, 0.1, -0.2], [0, 0, 1], 0.9, 0.0)
    assert a["advantages"] == a["td_errors"]


def test_clip_cases():
    assert vx.clipped_surrogate(1.5, 1.0, 0.2) == 1.2
    assert vx.clipped_surrogate(0.5, -1.0, 0.2) == -0.8


def test_reptile_numeric_case():
    arch = vx.Architecture(1, [], 1)
    psi = vx.ParameterSet(arch)
    moved = vx.reptile_update(psi, [vx.ParameterSet(arch, [0.6, 0.6])], 3e-4, 1e-4)
    assert moved.values[0] == pytest.approx(0.2, rel=1e-15)
    assert vx.reptile_update(psi, [psi, psi], 3e-4, 1e-4) == psi


def test_forward_shape():
    arch = vx.Architecture(18, [8, 4], 16)
    p = vx.initialize(arch, 1)
    assert len(p) == arch.parameter_count
    y = vx.forward(p, np.zeros((5, 18)))
    assert y.shape == (5, 16)


def test_baselines():
    task = vx.TaskConfig(upsilon=1.0)
    r = vx.evaluate_baseline("random", task, 1, 9)
    assert r["episodes"] == 1 and r["v2i_sum_rate_bps"] > 0
    with pytest.raises(vx.BudgetExceeded):
        vx.evaluate_baseline("maxV2V", task, 1, 9, budget=10)


def test_config_errors():
    with pytest.raises(vx.ConfigError, match="learning_rate"):
        vx.resolve_config("learning_rte = 1")
    assert "outer_loops = 60" in vx.resolve_config(desk=True)


def test_calibrate_run(tmp_path):
    files = vx.run(f"mode = calibrate\nout = {tmp_path}\ncalibration_episodes = 1\n"
                   "task_set = desk\n")
    assert "calibration.csv" in files
    with open(tmp_path / "calibration.csv") as f:
        rows = list(csv.DictReader(f))
    assert rows and all(math.isfinite(float(r["upsilon"])) for r in rows)
