import math

import numpy as np
import pytest

import pyvtt


def test_config_round_trip_and_errors():
    cfg = pyvtt.Config()
    cfg.set("seed", "5")
    cfg.set("fusion", "poe")
    back = pyvtt.Config.parse(cfg.to_text())
    assert back.to_text() == cfg.to_text()
    assert back.seed == 5 and back.fusion == "poe"
    with pytest.raises(ValueError):
        pyvtt.Config.parse("no.such.key = 1\n")
    with pytest.raises(ValueError):
        cfg.set("vtt.heads", "7")


def test_env_reset_step_and_scripted_push():
    cfg = pyvtt.Config()
    env = pyvtt.Env(cfg, 0)
    obs = env.reset()
    assert obs["image"].shape == (24, 24, 3)
    assert np.all(obs["wrench"] == 0)
    total, contact_seen = 0.0, False
    for _ in range(100):
        r = env.step(*env.scripted_action())
        total += r["reward"]
        contact_seen |= r["contact"]
        assert r["contact"] == bool(np.any(r["wrench"] != 0))
        if r["done"]:
            break
    assert contact_seen
    assert r["success"]
    with pytest.raises(ValueError):
        pyvtt.Env(cfg, 0).step(2.0, 0.0)


def test_agent_encode_attention_is_row_stochastic(tmp_path):
    cfg = pyvtt.Config()
    agent = pyvtt.Agent(cfg)
    rng = np.random.default_rng(0)
    image = rng.uniform(0, 1, (24, 24, 3)).astype(np.float32)
    wrench = rng.normal(0, 2, 6).astype(np.float32)
    out = agent.encode(image, wrench)
    assert out["z"].shape == (64,)
    att = out["attention"]
    assert att.shape == (1, 4, 40, 40)
    assert np.allclose(att.sum(-1), 1.0, atol=1e-6)
    assert math.isclose(out["visual"] + out["tactile"], 1.0, abs_tol=1e-12)
    a = agent.act(image, wrench)
    assert all(-1 < x < 1 for x in a)

    path = tmp_path / "agent.vttc"
    agent.save(str(path))
    other = pyvtt.Config()
    other.set("seed", "9")
    clone = pyvtt.Agent(other)
    clone.load(str(path))
    assert clone.act(image, wrench) == a

    concat = pyvtt.Config()
    concat.set("fusion", "concat")
    with pytest.raises(ValueError):
        pyvtt.Agent(concat).load(str(path))


def test_archive_round_trip_and_corruption(tmp_path):
    path = tmp_path / "t.vttc"
    w = np.arange(6, dtype=np.float32).reshape(2, 3)
    pyvtt.write_archive(str(path), {"w": w, "s": np.array(1.5, dtype=np.float32)})
    back = pyvtt.read_archive(str(path))
    assert np.array_equal(back["w"], w)
    raw = bytearray(path.read_bytes())
    assert raw[:4] == b"VTTC"
    raw[20] ^= 0x01
    path.write_bytes(bytes(raw))
    with pytest.raises(OSError):
        pyvtt.read_archive(str(path))


def test_dataset_and_short_training(tmp_path):
    cfg = pyvtt.Config()
    cfg.set("data.episodes", "5")
    cfg.set("repr.steps", "20")
    info = pyvtt.generate_dataset(cfg, str(tmp_path / "d.vttc"))
    assert info["episodes"] == 5 and info["steps"] <= 500
    res = pyvtt.train_repr(pyvtt.Agent(cfg), str(tmp_path / "d.vttc"))
    assert len(res["loss"]) == 20
    assert all(math.isfinite(x) for x in res["loss"])


def test_gradcheck_and_parameter_ratio():
    errs = pyvtt.gradcheck(0)
    assert set(errs) >= {"vtt_encoder", "concat", "poe", "latent_model", "sac_critic", "sac_actor"}
    assert max(errs.values()) < 1e-3
    p = pyvtt.full_scale_parameter_counts()
    assert 3 <= p["vtt"] / p["concat"] <= 8
