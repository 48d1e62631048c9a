import numpy as np
import pytest

from modules.agent import (AdamState, AgentSpec, PolicyHeads, StepRecord, Trajectory, adam_step, episode_loss,
                           init_agent_params, load_checkpoint, log_prob_and_entropy, policy_heads, policy_value,
                           save_checkpoint)
from modules.base import MaskKind, NumericalError, UsageError
from modules.diffcore import GradientTable, Parameter, Tape, backward, elementwise, grad_check, hadamard, scale
from modules.masks import MaskSpec, apply_mask, init_mask_params
from modules.reservoir import ReservoirSpec, ReservoirState, advance, build_reservoir


def _state(values, tape):
    return ReservoirState(tape.constant(values))


def _trajectory(probs, values, actions, rewards, tape):
    steps = [StepRecord(None, a, r) for a, r in zip(actions, rewards)]
    heads = PolicyHeads(tape.constant(np.log(probs)), tape.constant(values))
    return Trajectory(steps=steps, heads=heads)


def test_init_shapes_and_determinism():
    spec = AgentSpec()
    params = init_agent_params(spec, 760, 2, seed=0)
    assert [W.shape for W, _ in params.actor] == [(256, 760), (256, 256), (2, 256)]
    assert [W.shape for W, _ in params.critic] == [(256, 760), (256, 256), (1, 256)]
    assert all(not np.any(b.value) for _, b in params.actor + params.critic)
    bound = 1.0 / np.sqrt(760)
    assert np.max(np.abs(params.actor[0][0].value)) <= bound

    again = init_agent_params(spec, 760, 2, seed=0)
    for a, b in zip(params.trainable(), again.trainable()):
        assert a.name == b.name and np.array_equal(a.value, b.value)


def test_initial_policy_is_uniform():
    params = init_agent_params(AgentSpec(n_hidden=16), 30, 2, seed=1)
    tape = Tape()
    for values in (np.zeros(30), np.random.default_rng(0).uniform(-1, 1, 30)):
        probs, value = policy_value(params, _state(values, tape), tape)
        assert np.array_equal(probs.value, [0.5, 0.5])
        assert value.item() == 0.0


def test_probabilities_sum_to_one():
    params = init_agent_params(AgentSpec(n_hidden=8, output_init="uniform"), 12, 3, seed=2)
    rng = np.random.default_rng(5)
    tape = Tape()
    for _ in range(1000):
        probs, _ = policy_value(params, _state(rng.uniform(-1, 1, 12), tape), tape)
        assert abs(np.sum(probs.value) - 1.0) < 1e-12
        assert np.all(probs.value > 0)


def test_closed_form_softmax_logits():
    params = init_agent_params(AgentSpec(n_hidden=4, k_layers=1), 6, 2, seed=0)
    params.actor[-1][1].value[:] = [2.0, 0.0]
    tape = Tape()
    probs, _ = policy_value(params, _state(np.zeros(6), tape), tape)
    assert np.allclose(probs.value, [0.8808, 0.1192], atol=1e-4)


def test_episode_heads_match_single_state_policy():
    params = init_agent_params(AgentSpec(n_hidden=8, output_init="uniform"), 12, 3, seed=4)
    rng = np.random.default_rng(8)
    tape = Tape()
    states = [_state(rng.uniform(-1, 1, 12), tape) for _ in range(6)]
    heads = policy_heads(params, states, tape)
    assert heads.log_probs.shape == (6, 3)
    assert heads.values.shape == (6,)
    for t, state in enumerate(states):
        probs, value = policy_value(params, state, tape)
        assert np.allclose(np.exp(heads.log_probs.value[t]), probs.value, rtol=0, atol=1e-12)
        assert abs(heads.values.value[t] - value.item()) < 1e-12
    with pytest.raises(UsageError):
        policy_heads(params, [], tape)


def test_extreme_logits_stay_finite():
    tape = Tape()
    log_prob, entropy = log_prob_and_entropy(tape.constant([0.0, -1000.0]), 1, tape)
    assert log_prob.item() == -1000.0
    assert entropy.item() == 0.0

    params = init_agent_params(AgentSpec(n_hidden=4, k_layers=1), 6, 2, seed=0)
    params.actor[-1][1].value[:] = [1000.0, 0.0]
    heads = policy_heads(params, [_state(np.zeros(6), tape)], tape)
    assert np.all(np.isfinite(heads.log_probs.value))
    traj = Trajectory(steps=[StepRecord(None, 1, 1.0)], heads=heads)
    loss = episode_loss(traj, AgentSpec(), None, tape)
    assert np.isfinite(loss.item())
    assert backward(loss, tape).is_finite()


def test_returns_and_advantages():
    tape = Tape()
    traj = _trajectory(np.full((3, 2), 0.5), [0.2, 0.1, 0.0], [0, 0, 0], [1.0, 0.0, 1.0], tape)
    assert np.allclose(traj.returns(0.9), [1.81, 0.9, 1.0], rtol=0, atol=1e-12)
    assert np.allclose(traj.advantages(0.9), [1.61, 0.8, 1.0], rtol=0, atol=1e-12)
    assert traj.total_reward == 2.0


def test_zero_episode_loss():
    tape = Tape()
    traj = _trajectory(np.full((3, 2), 0.5), np.zeros(3), [0, 1, 0], np.zeros(3), tape)
    loss = episode_loss(traj, AgentSpec(beta_e=0.0), tape.constant(0.0), tape)
    assert loss.item() == 0.0


def test_single_step_loss():
    spec = AgentSpec(beta_e=0.0, discount=1.0)
    tape = Tape()
    traj = _trajectory([[0.5, 0.5]], [0.0], [1], [1.0], tape)
    loss = episode_loss(traj, spec, None, tape)
    assert abs(loss.item() - (-np.log(0.5) + spec.value_coef)) < 1e-12


def test_entropy_coefficient_lowers_loss():
    tape = Tape()
    traj = _trajectory(np.tile([0.3, 0.7], (3, 1)), np.full(3, 0.4), [1, 1, 1], np.ones(3), tape)
    low = episode_loss(traj, AgentSpec(beta_e=0.0), None, tape).item()
    high = episode_loss(traj, AgentSpec(beta_e=0.1), None, tape).item()
    assert high < low


def test_empty_trajectory_rejected():
    with pytest.raises(UsageError):
        episode_loss(Trajectory(), AgentSpec(), None, Tape())
    with pytest.raises(UsageError):
        episode_loss(Trajectory(steps=[StepRecord(None, 0, 1.0)]), AgentSpec(), None, Tape())


def test_loss_ignores_storage_order_of_states():
    spec = AgentSpec(n_hidden=6, output_init="uniform", beta_e=0.01)
    params = init_agent_params(spec, 10, 2, seed=9)
    gain = Parameter("gain", np.random.default_rng(11).uniform(0.5, 1.5, 10))
    inputs = np.random.default_rng(10).uniform(-1, 1, (5, 10))
    actions = [1, 0, 0, 1, 1]
    rewards = [0.0, 1.0, 1.0, 0.0, 1.0]

    def loss_and_grads(order):
        tape = Tape()
        recorded = {}
        for t in order:
            h = elementwise("tanh", hadamard(tape.watch(gain), tape.constant(inputs[t]), tape), tape)
            recorded[t] = ReservoirState(h)
        steps = [StepRecord(recorded[t], actions[t], rewards[t]) for t in range(5)]
        traj = Trajectory(steps=steps, heads=policy_heads(params, [s.state for s in steps], tape))
        loss = episode_loss(traj, spec, None, tape)
        return loss.item(), backward(loss, tape)

    in_order, in_order_grads = loss_and_grads([0, 1, 2, 3, 4])
    shuffled, shuffled_grads = loss_and_grads([3, 0, 4, 2, 1])
    assert in_order == shuffled
    for p in params.trainable() + [gain]:
        assert np.allclose(in_order_grads[p], shuffled_grads[p], rtol=1e-12, atol=1e-15)


def _full_episode(tape, mask, mask_spec, reservoir, agent, inputs, actions, rewards):
    state = ReservoirState.zeros(reservoir.size, tape)
    traj = Trajectory()
    for x, action, reward in zip(inputs, actions, rewards):
        out = apply_mask(mask, mask_spec, tape.constant(x), tape)
        state = advance(state, out.masked_input, reservoir, tape)
        traj.steps.append(StepRecord(state, action, reward))
        traj.mask_penalty = out.penalty
    traj.heads = policy_heads(agent, [step.state for step in traj.steps], tape)
    return traj


def test_full_loss_matches_finite_differences():
    rng = np.random.default_rng(21)
    mask_spec = MaskSpec(kind=MaskKind.EPIC, epic_init="scaled_normal")
    agent_spec = AgentSpec(n_hidden=6, k_layers=2, output_init="uniform", beta_e=0.01)
    reservoir = build_reservoir(ReservoirSpec(n_unique=30, n_shared=20), 4, seed=3)
    assert reservoir.size == 60
    mask = init_mask_params(mask_spec, 4, seed=4)
    agent = init_agent_params(agent_spec, reservoir.size, 2, seed=5)
    inputs = rng.standard_normal((5, 4))
    actions = [0, 1, 1, 0, 1]
    rewards = [1.0, 0.0, 1.0, 1.0, 0.0]

    tape = Tape()
    first = _full_episode(tape, mask, mask_spec, reservoir, agent, inputs, actions, rewards)
    frozen = first.advantages(agent_spec.discount)

    def f(tape):
        traj = _full_episode(tape, mask, mask_spec, reservoir, agent, inputs, actions, rewards)
        return episode_loss(traj, agent_spec, traj.mask_penalty, tape, advantages=frozen)

    params = mask.trainable() + agent.trainable()
    assert grad_check(f, params, step=1e-5, max_coords=15, floor=1e-6) < 1e-4

    tape = Tape()
    grads = backward(f(tape), tape)
    assert {name for name, _ in grads.items()} == {p.name for p in params}


def test_adam_zero_gradient_and_first_step():
    params = init_agent_params(AgentSpec(n_hidden=4, k_layers=1, output_init="uniform"), 3, 2, seed=0)
    trainable = params.trainable()
    before = [p.value.copy() for p in trainable]
    adam_step(trainable, GradientTable(trainable), AdamState(), lr=1e-3)
    for p, old in zip(trainable, before):
        assert np.array_equal(p.value, old)

    grads = GradientTable(trainable)
    rng = np.random.default_rng(1)
    for p in trainable:
        grads.accumulate(p, rng.standard_normal(p.shape))
    before = [p.value.copy() for p in trainable]
    adam_step(trainable, grads, AdamState(), lr=1e-3)
    for p, old in zip(trainable, before):
        g = grads[p]
        assert np.allclose(p.value - old, -1e-3 * g / (np.abs(g) + 1e-8), rtol=1e-9, atol=1e-15)


def test_adam_rejects_nan():
    params = init_agent_params(AgentSpec(n_hidden=4, k_layers=1), 3, 2, seed=0)
    trainable = params.trainable()
    grads = GradientTable(trainable)
    grads.accumulate(trainable[0], np.full(trainable[0].shape, np.nan))
    before = trainable[1].value.copy()
    with pytest.raises(NumericalError) as info:
        adam_step(trainable, grads, AdamState(), lr=1e-3)
    assert trainable[0].name in info.value.diagnostics["parameters"]
    assert np.array_equal(trainable[1].value, before)


def test_adam_determinism():
    results = []
    for _ in range(2):
        params = init_agent_params(AgentSpec(n_hidden=4, k_layers=1, output_init="uniform"), 3, 2, seed=7)
        trainable = params.trainable()
        state = AdamState()
        rng = np.random.default_rng(2)
        for _ in range(100):
            grads = GradientTable(trainable)
            for p in trainable:
                grads.accumulate(p, rng.standard_normal(p.shape))
            adam_step(trainable, grads, state, lr=1e-3)
        results.append([p.value.copy() for p in trainable])
    for a, b in zip(*results):
        assert np.array_equal(a, b)


def test_entropy_step_increases_entropy():
    spec = AgentSpec(n_hidden=8, k_layers=1, output_init="uniform")
    params = init_agent_params(spec, 10, 3, seed=3)
    params.actor[-1][1].value[:] = [1.0, -0.5, 0.0]
    h = np.random.default_rng(6).uniform(-1, 1, 10)

    def entropy(tape):
        heads = policy_heads(params, [_state(h, tape)], tape)
        return log_prob_and_entropy(heads.log_probs, [0], tape)[1]

    tape = Tape()
    start = entropy(tape)
    grads = backward(scale(start, -1.0, tape), tape)
    adam_step(params.trainable(), grads, AdamState(), lr=1e-4)
    assert entropy(Tape()).item() > start.item()


def test_checkpoint_restore(tmp_path):
    params = init_agent_params(AgentSpec(n_hidden=4, k_layers=1, output_init="uniform"), 3, 2, seed=0)
    trainable = params.trainable()
    path = tmp_path / "agent.npz"
    save_checkpoint(path, trainable)
    saved = [p.value.copy() for p in trainable]
    for p in trainable:
        p.value += 1.0
    load_checkpoint(path, trainable)
    for p, old in zip(trainable, saved):
        assert np.array_equal(p.value, old)


def main():
    import tempfile
    from pathlib import Path

    test_init_shapes_and_determinism()
    test_initial_policy_is_uniform()
    test_probabilities_sum_to_one()
    test_closed_form_softmax_logits()
    test_episode_heads_match_single_state_policy()
    test_extreme_logits_stay_finite()
    print("Agent forward checks successful.")
    test_returns_and_advantages()
    test_zero_episode_loss()
    test_single_step_loss()
    test_entropy_coefficient_lowers_loss()
    test_empty_trajectory_rejected()
    test_loss_ignores_storage_order_of_states()
    test_full_loss_matches_finite_differences()
    print("Agent loss checks successful.")
    test_adam_zero_gradient_and_first_step()
    test_adam_rejects_nan()
    test_adam_determinism()
    test_entropy_step_increases_entropy()
    print("Optimizer checks successful.")
    with tempfile.TemporaryDirectory() as tmp:
        test_checkpoint_restore(Path(tmp))
    print("Checkpoint check successful.")


if __name__ == "__main__":
    main()
