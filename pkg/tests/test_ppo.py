import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import gradsuite
from helpers import gae_direct
from hdrl_ris.neural import Categorical
from hdrl_ris.ppo import (BufferNotFullError, OpAgent, PPOSettings, RpAgentHppo, RpAgentSeq,
                          TrainingDivergenceError, clip_u, critic_loss, gae, head_parameter_count,
                          sequential_input, sub_transitions, surrogate)
from hdrl_ris.smdp import OPTransition, RPTransition, decode_goal


# GAE / clipping / losses ------------------------------------------------

def test_gae_lambda_zero_is_td():
    r, v = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.1, -0.4, 2.0])
    np.testing.assert_allclose(gae(r, v, 0.9, 0.0), r + 0.9 * v[1:] - v[:-1], rtol=0, atol=1e-15)


def test_gae_hand_sum():
    np.testing.assert_array_equal(gae([1.0, 1.0], [0.0, 0.0, 0.0], 1.0, 1.0), [2.0, 1.0])


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.integers(1, 64))
def test_gae_matches_direct_sum(seed, n):
    rng = np.random.default_rng(seed)
    r, v = rng.normal(size=n), rng.normal(size=n + 1)
    gamma, lam = rng.uniform(0, 1), rng.uniform(0, 1)
    np.testing.assert_allclose(gae(r, v, gamma, lam), gae_direct(r, v, gamma, lam), atol=1e-10)


def test_gae_length_mismatch():
    with pytest.raises(ValueError):
        gae([1.0, 2.0], [0.0, 0.0], 0.9, 0.9)


def test_clip_u_examples():
    assert clip_u(2.0, 0.2) == pytest.approx(2.4)
    assert clip_u(-1.0, 0.2) == pytest.approx(-0.8)
    assert clip_u(0.0, 0.2) == 0.0


def test_surrogate_ratio_one():
    adv = np.array([0.5, 1.0, 2.0])
    lp = np.log([0.2, 0.3, 0.5])
    assert surrogate(lp, lp, adv, 0.2)[0] == pytest.approx(adv.mean())


def test_surrogate_clipped_contribution():
    value, grad = surrogate(np.array([np.log(2.0)]), np.array([0.0]), np.array([1.0]), 0.2)
    assert value == pytest.approx(1.2)
    assert grad[0] == 0.0


@settings(max_examples=200)
@given(st.floats(-3, 3), st.floats(-5, 5), st.floats(0.01, 0.5))
def test_surrogate_branch_property(logratio, adv, eps):
    value, _ = surrogate(np.array([logratio]), np.array([0.0]), np.array([adv]), eps)
    branches = (np.exp(logratio) * adv, clip_u(adv, eps))
    assert value <= max(branches) + 1e-12
    assert min(abs(value - b) for b in branches) <= 1e-12


def test_surrogate_non_finite_ratio():
    with pytest.raises(TrainingDivergenceError):
        surrogate(np.array([1000.0]), np.array([0.0]), np.array([1.0]), 0.2)


def test_critic_loss_examples():
    assert critic_loss([1.0, 2.0], [1.0, 2.0])[0] == 0.0
    # constant reward r, V = 0, gamma = 0: squared residual is r^2
    assert critic_loss(np.zeros(4), np.full(4, 3.0))[0] == pytest.approx(9.0)


def test_loss_gradients():
    for case in ("op_actor_loss", "rp_actor_loss", "seq_actor_loss", "op_critic_loss",
                 "rp_critic_loss"):
        assert max(gradsuite.CASES[case](s) for s in range(3)) <= 1e-4, case


# OP agent ---------------------------------------------------------------

def op_agent(seed=0, buffer=4, **kw):
    return OpAgent(5, 3, 8, PPOSettings(buffer_size=buffer, **kw), np.random.default_rng(seed))


def fill(agent, rng, n):
    out = None
    for _ in range(n):
        obs = rng.normal(size=agent.obs_width)
        a, lp = agent.act(obs)
        out = agent.observe(OPTransition(obs, a, float(rng.normal()), rng.normal(size=agent.obs_width), lp))
    return out


def test_op_update_cadence_and_clear():
    agent = op_agent(buffer=4)
    rng = np.random.default_rng(1)
    assert fill(agent, rng, 3) is None and agent.updates == 0
    stats = fill(agent, rng, 1)
    assert agent.updates == 1 and len(agent.buffer) == 0
    assert {"actor_loss", "critic_loss", "update_time"} <= set(stats)
    fill(agent, rng, 8)
    assert agent.updates == 3


def test_update_requires_full_buffer():
    agent = op_agent(buffer=4)
    with pytest.raises(BufferNotFullError):
        agent.update()


def test_zero_advantage_leaves_actor():
    agent = op_agent()
    rng = np.random.default_rng(2)
    obs = rng.normal(size=(4, 5))
    acts = rng.uniform(0.1, 0.9, size=(4, 3))
    lp = agent.policy(obs).log_prob(acts)
    before = [p.copy() for p in agent.actor.parameters()]
    agent.actor.zero_grad()
    agent.actor_objective(obs, acts, lp, np.zeros(4))
    agent.actor_opt.step()
    for a, b in zip(before, agent.actor.parameters()):
        np.testing.assert_array_equal(a, b)


def test_op_update_deterministic():
    def run():
        agent = op_agent(seed=5)
        fill(agent, np.random.default_rng(9), 4)
        return [p.copy() for p in agent.actor.parameters()]
    for a, b in zip(run(), run()):
        np.testing.assert_array_equal(a, b)


def test_op_widths():
    agent = OpAgent(208, 224, 500, PPOSettings(), np.random.default_rng(0))
    assert agent.actor.widths() == [208, 500, 500, 500, 448]
    assert agent.critic.widths() == [208, 500, 500, 500, 1]


def test_act_inside_unit_cube():
    agent = op_agent()
    a, lp = agent.act(np.ones(5))
    assert a.shape == (3,) and np.all((a > 0) & (a < 1)) and np.isfinite(lp)


# RP agents --------------------------------------------------------------

def rp_fill(agent, rng, n, state_shape=(3, 4)):
    stats = None
    for _ in range(n):
        s = rng.normal(size=state_shape)
        g, info = agent.select(s)
        extra = {k: v for k, v in info.items() if k != "log_prob"}
        tr = RPTransition(s, g, float(rng.normal()), rng.normal(size=state_shape), info["log_prob"], extra)
        stats = agent.observe(tr) or stats
    return stats


def test_rp_update_advantage_length():
    agent = RpAgentHppo(4, 2, 2, 6, PPOSettings(buffer_size=5), np.random.default_rng(0))
    stats = rp_fill(agent, np.random.default_rng(1), 5)
    assert stats["advantages"].shape == (5,)
    assert len(agent.buffer) == 0 and agent.updates == 1


def test_rp_stored_log_prob_matches_logits():
    agent = RpAgentHppo(4, 2, 2, 6, PPOSettings(), np.random.default_rng(0))
    s = np.random.default_rng(3).normal(size=(3, 4))
    g, info = agent.select(s)
    logits = agent.actor.forward(s[None])
    ref = logits[0, g] - np.log(np.exp(logits[0]).sum())
    assert info["log_prob"] == pytest.approx(ref, abs=1e-12)


def test_hppo_head_width():
    agent = RpAgentHppo(100, 2, 4, 16, PPOSettings(), np.random.default_rng(0))
    assert agent.actor.widths() == [100, 16, 16, 16, 16]
    assert agent.critic.widths()[-1] == 1


def test_shppo_first_actor_sees_bare_state():
    s = np.random.default_rng(0).normal(size=(3, 4))
    np.testing.assert_array_equal(sequential_input(s, np.zeros((1, 0)), 2)[0], s)
    ext = sequential_input(s, np.array([[2, 1]]), 2)[0]
    assert ext.shape == (3, 6)
    np.testing.assert_array_equal(ext[:, 4:], np.broadcast_to([1.0, 0.5], (3, 2)))


def test_shppo_act_valid():
    agent = RpAgentSeq(4, 3, 5, 6, PPOSettings(), np.random.default_rng(0))
    s = np.random.default_rng(1).normal(size=(3, 4))
    g, sub, lps = agent.act(s)
    assert len(sub) == 5 and np.all((sub >= 1) & (sub <= 3))
    np.testing.assert_array_equal(decode_goal(g, 3, 5), sub)
    assert len(lps) == 5 and np.all(np.array(lps) <= 0)
    gd = agent.greedy(s)
    b = decode_goal(gd, 3, 5)
    assert np.all((b >= 1) & (b <= 3))
    assert [a.widths()[0] for a in agent.actors] == [4, 5, 6, 7, 8]


def test_shppo_sub_log_probs_recomputable():
    agent = RpAgentSeq(4, 2, 3, 6, PPOSettings(), np.random.default_rng(0))
    s = np.random.default_rng(1).normal(size=(3, 4))
    g, info = agent.select(s)
    b = np.array(info["sub_goals"])
    for l, actor in enumerate(agent.actors):
        pi = Categorical(actor.forward(sequential_input(s, b[None, :l], 2)))
        assert pi.log_prob([b[l] - 1])[0] == pytest.approx(info["sub_log_probs"][l], abs=1e-12)
    assert info["log_prob"] == pytest.approx(sum(info["sub_log_probs"]))


def test_sub_transitions_reward_only_last():
    tr = RPTransition(np.zeros((2, 3)), 5, 7.5, np.zeros((2, 3)), 0.0)
    steps = sub_transitions(tr, 2, 3)
    assert [r for _, _, r in steps] == [0.0, 0.0, 7.5]
    assert [b for _, b, _ in steps] == list(decode_goal(5, 2, 3))
    assert [o.shape[1] for o, _, _ in steps] == [3, 4, 5]


def test_shppo_actors_share_advantage(monkeypatch):
    agent = RpAgentSeq(4, 2, 3, 6, PPOSettings(buffer_size=4), np.random.default_rng(0))
    seen = []
    orig = RpAgentSeq.actor_objective

    def spy(self, l, states, subgoals, old, adv):
        seen.append(np.array(adv))
        return orig(self, l, states, subgoals, old, adv)
    monkeypatch.setattr(RpAgentSeq, "actor_objective", spy)
    stats = rp_fill(agent, np.random.default_rng(2), 4)
    assert len(seen) == 3
    for adv in seen:
        np.testing.assert_array_equal(adv, stats["advantages"])


def test_head_parameter_scaling():
    S, L, H = 3, 9, 8
    hppo = RpAgentHppo(4, S, L, H, PPOSettings(), np.random.default_rng(0))
    seq = RpAgentSeq(4, S, L, H, PPOSettings(), np.random.default_rng(0))
    assert head_parameter_count(hppo) == H * S ** L + S ** L
    assert head_parameter_count(seq) == L * (H * S + S)


def test_state_dict_roundtrip():
    a = RpAgentSeq(4, 2, 2, 6, PPOSettings(), np.random.default_rng(0))
    b = RpAgentSeq(4, 2, 2, 6, PPOSettings(), np.random.default_rng(1))
    b.load_state_dict(a.state_dict())
    s = np.ones((3, 4))
    assert a.greedy(s) == b.greedy(s)
    for k, v in a.state_dict().items():
        np.testing.assert_array_equal(v, b.state_dict()[k])
