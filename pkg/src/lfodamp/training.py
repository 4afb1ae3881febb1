"""Episode loops: DDPG training, greedy/baseline evaluation and PID tuning scores."""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .baselines import PidController
from .ddpg import AgentConfig, DdpgAgent, save_checkpoint
from .delay import ZERO_DELAY
from .environment import DampingEnv, EpisodeConfig, RewardWeights
from .metrics import EpisodeRecord, damping_report, success_rate


def episode_seed(base: int, episode: int) -> tuple:
    """Seed entropy for one episode's environment draws."""
    return (int(base), int(episode))


@dataclass
class TrainResult:
    agent: DdpgAgent
    records: list
    timings: list


def train(env: DampingEnv, agent_cfg: AgentConfig, episodes: int, seed: int = 0,
          updates: bool = True, checkpoint_dir=None, checkpoint_every: int = 50,
          success_window: int = 100, progress=None) -> TrainResult:
    """Run ``episodes`` training episodes; returns the agent and per-episode records.

    Before the first delayed measurement arrives the harness applies zero action
    and no transition is stored. Only loss of synchronism marks a transition
    terminal; reaching the horizon does not.
    """
    agent = DdpgAgent(replace(agent_cfg, seed=seed))
    scale = env.cfg.speed_scale
    rscale = agent.cfg.reward_scale
    zero = np.zeros(env.action_dim)
    records, timings = [], []
    best = -1.0
    for ep in range(episodes):
        t0 = time.perf_counter()
        obs = env.reset(seed=episode_seed(seed, ep))
        agent.begin_episode()
        s = obs.vector(scale)
        q0 = agent.q_value(s, agent.act(s))
        ret = 0.0
        steps = 0
        while True:
            a = agent.select_action(s, ep, explore=True) if obs.valid else zero
            res = env.step(a)
            s2 = res.observation.vector(scale)
            if obs.valid:
                agent.buffer.push(s, a, res.reward * rscale, s2, res.info["sync_lost"])
            steps += 1
            if updates and steps % agent.cfg.update_every == 0:
                agent.train_step()
            ret += res.reward
            if res.done:
                break
            obs, s = res.observation, s2
        wall = time.perf_counter() - t0
        records.append(EpisodeRecord(ep, ret, not env.sync_lost, q0, 0.0))
        timings.append(wall)
        if progress is not None:
            progress(records[-1])
        if checkpoint_dir is not None:
            if (ep + 1) % checkpoint_every == 0:
                save_checkpoint(agent, f"{checkpoint_dir}/checkpoint_ep{ep + 1:05d}.lfo")
            window = min(success_window, len(records))
            rate = success_rate(records, window)
            if window == success_window and rate > best:
                best = rate
                save_checkpoint(agent, f"{checkpoint_dir}/checkpoint_best.lfo")
    if checkpoint_dir is not None:
        save_checkpoint(agent, f"{checkpoint_dir}/checkpoint_final.lfo")
    return TrainResult(agent, records, timings)


def run_episode(env: DampingEnv, policy, seed) -> dict:
    """One episode under ``policy(obs, env) -> action``; returns trace arrays and outcome.

    ``policy`` is consulted only when the observation is valid; otherwise the
    previous action is held (zero before the first arrival). Policies flagged
    ``local`` use undelayed local signals and run every step.
    """
    local = getattr(policy, "local", False)
    obs = env.reset(seed=seed)
    a = np.zeros(env.action_dim)
    ret = 0.0
    while True:
        if obs.valid or local:
            a = policy(obs, env)
        res = env.step(a)
        ret += res.reward
        obs = res.observation
        if res.done:
            break
    times, omega = env.trace_omega() if env.record_trace else (None, None)
    return {"return": ret, "sync_lost": env.sync_lost, "times": times, "omega": omega}


def rl_policy(agent: DdpgAgent):
    def policy(obs, env):
        return agent.act(obs.vector(env.cfg.speed_scale))
    return policy


def pid_policy(n: int, kp: float, ki: float, kd: float, dt: float, v=-0.2, u=0.2):
    """Per-generator PID on delayed ``1 - omega``.

    The delayed speed is rebuilt from the delivered packets, so the PID sees the
    same channel as the agent.
    """
    ctrl = PidController(n, kp, ki, kd, v, u)

    def policy(obs, env):
        omega = env.delivered_payload[0][env.controlled]
        return ctrl(omega, dt)
    policy.reset = ctrl.reset
    return policy


def zero_policy(obs, env):
    return np.zeros(env.action_dim)


def evaluate(env: DampingEnv, policy, seeds, clear_time: float, threshold=1e-3, tail_window=5.0):
    """Greedy evaluation over ``seeds``; returns a list of (seed, outcome dict, DampingReport)."""
    if not env.record_trace:
        raise ValueError("evaluation needs an environment with record_trace=True")
    out = []
    for sd in seeds:
        if hasattr(policy, "reset"):
            policy.reset()
        ep = run_episode(env, policy, episode_seed(10_000 + sd, 0))
        rep = damping_report(ep["times"], ep["omega"], clear_time, threshold, tail_window,
                             ep["sync_lost"])
        out.append((sd, ep, rep))
    return out


def pid_score(case, env_cfg: EpisodeConfig, weights: RewardWeights, kp, ki, kd) -> float:
    """Integral of sum_g |1 - omega_g| on the delay-free fault scenario (inf on sync loss)."""
    cfg = replace(env_cfg, channel=ZERO_DELAY, pv_share=0.0)
    env = DampingEnv(case, cfg, weights, record_trace=True)
    pol = pid_policy(env.action_dim, kp, ki, kd, cfg.dt_control, weights.v, weights.u)
    ep = run_episode(env, pol, episode_seed(0, 0))
    if ep["sync_lost"]:
        return float("inf")
    dev = np.abs(ep["omega"] - 1.0).sum(axis=1)
    return float(np.sum(0.5 * (dev[1:] + dev[:-1]) * np.diff(ep["times"])))
