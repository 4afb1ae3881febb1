"""Deterministic policy-gradient actor-critic with replay and target networks."""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .nn import Adam, Mlp

MAGIC = b"LFO1"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, corrupt or incompatible checkpoint file."""


@dataclass
class AgentConfig:
    obs_dim: int
    action_dim: int
    gamma: float = 0.95
    buffer_capacity: int = 100_000
    batch_size: int = 64
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    hidden: tuple = (64, 64)
    target_mode: str = "soft"          # soft | hard_periodic
    tau: float = 0.005
    period: int = 1
    noise_type: str = "ou"             # ou | gaussian
    ou_theta: float = 0.15
    sigma_start: float = 0.02
    sigma_end: float = 0.002
    decay_episodes: int = 150
    action_low: float = -0.2
    action_high: float = 0.2
    warmup: int = 1000
    update_every: int = 1
    reward_scale: float = 0.01
    preact_penalty: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must be in [0, 1]")
        if self.target_mode == "soft" and not 0 < self.tau <= 1:
            raise ValueError("tau must be in (0, 1] for soft updates")
        if self.target_mode == "hard_periodic" and self.period < 1:
            raise ValueError("period must be >= 1 for hard updates")
        if self.target_mode not in ("soft", "hard_periodic"):
            raise ValueError(f"unknown target_mode {self.target_mode!r}")
        if self.noise_type not in ("ou", "gaussian"):
            raise ValueError(f"unknown noise_type {self.noise_type!r}")
        if not self.action_low < self.action_high:
            raise ValueError("action bounds need low < high")
        if self.batch_size < 1 or self.buffer_capacity < 1:
            raise ValueError("batch_size and buffer_capacity must be positive")

    def sigma(self, episode: int) -> float:
        frac = min(episode / self.decay_episodes, 1.0) if self.decay_episodes > 0 else 1.0
        return self.sigma_start + (self.sigma_end - self.sigma_start) * frac


class ReplayBuffer:
    """Ring storage of transitions in preallocated arrays."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        self.capacity = capacity
        self.s = np.zeros((capacity, obs_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.cursor = 0
        self.count = 0

    def __len__(self) -> int:
        return self.count

    def push(self, s, a, r, s2, done) -> None:
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(a)) and np.isfinite(r)
                and np.all(np.isfinite(s2))):
            raise ValueError("experience has non-finite components")
        i = self.cursor
        self.s[i], self.a[i], self.r[i], self.s2[i], self.done[i] = s, a, r, s2, float(done)
        self.cursor = (i + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)

    def sample_indices(self, m: int, rng: np.random.Generator) -> np.ndarray:
        if self.count < m:
            raise ValueError(f"buffer holds {self.count} experiences, need {m}")
        return rng.integers(0, self.count, size=m)

    def sample(self, m: int, rng: np.random.Generator):
        idx = self.sample_indices(m, rng)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx]


class OUNoise:
    """Ornstein-Uhlenbeck process with unit time step, mean zero."""

    def __init__(self, dim: int, theta: float = 0.15):
        self.theta = theta
        self.x = np.zeros(dim)

    def reset(self) -> None:
        self.x[:] = 0.0

    def sample(self, sigma: float, rng: np.random.Generator) -> np.ndarray:
        self.x += -self.theta * self.x + sigma * rng.standard_normal(self.x.shape)
        return self.x.copy()


class DdpgAgent:
    def __init__(self, config: AgentConfig):
        self.cfg = c = config
        self.rng = np.random.default_rng(c.seed)
        bounds = (c.action_low, c.action_high)
        self.actor = Mlp.init([c.obs_dim, *c.hidden, c.action_dim], self.rng, bounds)
        self.critic = Mlp.init([c.obs_dim + c.action_dim, *c.hidden, 1], self.rng,
                               final_scale=3e-3)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam([self.actor.flat], c.lr_actor)
        self.critic_opt = Adam([self.critic.flat], c.lr_critic)
        self.buffer = ReplayBuffer(c.buffer_capacity, c.obs_dim, c.action_dim)
        self.noise = OUNoise(c.action_dim, c.ou_theta)
        self.n_updates = 0

    # acting -----------------------------------------------------------
    def act(self, obs) -> np.ndarray:
        return self.actor.forward(obs)

    def q_value(self, obs, action) -> float:
        return float(self.critic.forward(np.concatenate([obs, action]))[0])

    def select_action(self, obs, episode: int, explore: bool = True) -> np.ndarray:
        a = self.act(obs)
        if not explore:
            return a
        c = self.cfg
        sigma = c.sigma(episode)
        if c.noise_type == "ou":
            n = self.noise.sample(sigma, self.rng)
        else:
            n = sigma * self.rng.standard_normal(c.action_dim)
        return np.clip(a + n, c.action_low, c.action_high)

    def begin_episode(self) -> None:
        self.noise.reset()

    # learning ---------------------------------------------------------
    def critic_targets(self, r, s2, done) -> np.ndarray:
        a2 = self.actor_target.forward(s2)
        q2 = self.critic_target.forward(np.hstack([s2, a2]))[:, 0]
        return r + self.cfg.gamma * (1.0 - done) * q2

    def critic_loss_and_grads(self, s, a, y):
        q, acts = self.critic.forward(np.hstack([s, a]), keep=True)
        err = q[:, 0] - y
        m = len(y)
        grads, _ = self.critic.backward(acts, (2.0 / m) * err[:, None])
        return float(np.mean(err * err)), grads

    def critic_update(self, batch) -> float:
        s, a, r, s2, done = batch
        if len(r) < 1:
            raise ValueError("empty batch")
        y = self.critic_targets(r, s2, done)
        loss, grads = self.critic_loss_and_grads(s, a, y)
        self.critic_opt.step([self.critic.flat], [Mlp.flatten(grads)])
        return loss

    def actor_objective_grads(self, s):
        """Gradients of ``-(1/M) sum Q(s, mu(s))`` with respect to actor parameters.

        With ``preact_penalty = lam > 0`` the loss gains ``lam * mean(z**2)`` on the
        pre-tanh actor output ``z``, which keeps the policy out of saturation.
        """
        m = len(s)
        a, a_acts = self.actor.forward(s, keep=True)
        q, c_acts = self.critic.forward(np.hstack([s, a]), keep=True)
        _, gin = self.critic.backward(c_acts, np.full((m, 1), 1.0 / m))
        dq_da = gin[:, s.shape[1]:]
        lam = self.cfg.preact_penalty
        extra = None
        if lam > 0:
            z = a_acts[-2]
            extra = (2.0 * lam / z.size) * z
        grads, _ = self.actor.backward(a_acts, -dq_da, extra)
        return float(q.mean()), grads

    def actor_update(self, batch) -> float:
        s = batch[0]
        if len(s) < 1:
            raise ValueError("empty batch")
        _, grads = self.actor_objective_grads(s)
        g = Mlp.flatten(grads)
        norm = float(np.sqrt(g @ g))
        self.actor_opt.step([self.actor.flat], [g])
        return norm

    def update_targets(self) -> None:
        c = self.cfg
        if c.target_mode == "soft":
            for net, tgt in ((self.actor, self.actor_target), (self.critic, self.critic_target)):
                tgt.flat *= 1.0 - c.tau
                tgt.flat += c.tau * net.flat
        elif self.n_updates % c.period == 0:
            for net, tgt in ((self.actor, self.actor_target), (self.critic, self.critic_target)):
                tgt.flat[...] = net.flat

    def train_step(self):
        """One minibatch critic + actor update and a target update; ``None`` if not warm."""
        c = self.cfg
        if len(self.buffer) < max(c.warmup, c.batch_size):
            return None
        batch = self.buffer.sample(c.batch_size, self.rng)
        loss = self.critic_update(batch)
        if not np.isfinite(loss):
            raise FloatingPointError(f"critic loss became non-finite after {self.n_updates} updates")
        self.actor_update(batch)
        self.n_updates += 1
        self.update_targets()
        return loss

    # persistence ------------------------------------------------------
    def save(self, path) -> None:
        save_checkpoint(self, path)


def _nets(agent):
    return [agent.actor, agent.critic, agent.actor_target, agent.critic_target]


def save_checkpoint(agent: DdpgAgent, path) -> None:
    """Write the binary checkpoint described in ``docs/checkpoint_format.md``."""
    cfg = json.dumps(asdict(agent.cfg), sort_keys=True).encode()
    parts = [struct.pack("<I", CHECKPOINT_VERSION), struct.pack("<I", len(cfg)), cfg]
    nets = _nets(agent)
    parts.append(struct.pack("<I", len(nets)))
    for net in nets:
        sizes = net.sizes
        parts.append(struct.pack("<I", len(sizes) - 1))
        parts.append(struct.pack(f"<{len(sizes)}I", *sizes))
    parts.append(struct.pack("<QQQ", agent.actor_opt.t, agent.critic_opt.t, agent.n_updates))
    arrays = [p for net in nets for p in net.params()]
    for opt in (agent.actor_opt, agent.critic_opt):
        arrays += opt.m + opt.v
    for arr in arrays:
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    payload = b"".join(parts)
    with open(path, "wb") as f:
        f.write(MAGIC + payload + struct.pack("<I", zlib.crc32(payload)))


class _Reader:
    def __init__(self, buf):
        self.buf, self.pos = buf, 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointError("checkpoint is truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, obs_dim: int | None = None, action_dim: int | None = None) -> DdpgAgent:
    """Read a checkpoint; optional dims are checked against the stored networks."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    payload, crc = raw[4:-4], struct.unpack("<I", raw[-4:])[0]
    rd = _Reader(payload)
    (version,) = rd.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    if zlib.crc32(payload) != crc:
        raise CheckpointError("checkpoint checksum mismatch (corrupt or truncated file)")
    (n_cfg,) = rd.unpack("<I")
    cfg_dict = json.loads(rd.take(n_cfg).decode())
    cfg = AgentConfig(**cfg_dict)
    if obs_dim is not None and cfg.obs_dim != obs_dim:
        raise CheckpointError(f"checkpoint observation size {cfg.obs_dim}, environment has {obs_dim}")
    if action_dim is not None and cfg.action_dim != action_dim:
        raise CheckpointError(f"checkpoint action size {cfg.action_dim}, environment has {action_dim}")
    agent = DdpgAgent(cfg)
    (n_nets,) = rd.unpack("<I")
    nets = _nets(agent)
    if n_nets != len(nets):
        raise CheckpointError("unexpected network count")
    for net in nets:
        (n_layers,) = rd.unpack("<I")
        sizes = list(rd.unpack(f"<{n_layers + 1}I"))
        if sizes != net.sizes:
            raise CheckpointError(f"stored layer sizes {sizes} do not match config {net.sizes}")
    agent.actor_opt.t, agent.critic_opt.t, agent.n_updates = rd.unpack("<QQQ")
    targets = [p for net in nets for p in net.params()]
    for opt in (agent.actor_opt, agent.critic_opt):
        targets += opt.m + opt.v
    for arr in targets:
        arr[...] = np.frombuffer(rd.take(arr.size * 8), dtype="<f8").reshape(arr.shape)
    if rd.pos != len(payload):
        raise CheckpointError("trailing bytes in checkpoint")
    return agent
