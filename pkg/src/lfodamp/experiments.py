"""Orchestration behind the CLI verbs: train, eval, sweep and plot data."""
from __future__ import annotations

import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .baselines import PssBank, tune_pid, write_tuning_csv
from .case import load_case
from .config import ConfigError, ExperimentConfig, with_overrides
from .ddpg import load_checkpoint
from .environment import DampingEnv, write_trace_csv
from .metrics import (moving_average_return, read_training_log, smoothed_success, success_rate,
                      write_eval_report, write_training_log)
from .network import solve_power_flow, tie_transfer_mw
from .training import evaluate, pid_policy, pid_score, rl_policy, train, zero_policy


def worker_count(n_jobs: int) -> int:
    cap = os.environ.get("LFO_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_jobs))


def _map(fn, jobs):
    n = worker_count(len(jobs))
    if n == 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, *zip(*jobs)))


# ---------------------------------------------------------------- power flow

def powerflow_report(cfg: ExperimentConfig) -> dict:
    case = load_case(cfg.case)
    pf = solve_power_flow(case)
    rep = {"case": case.name, "iterations": pf.iterations, "mismatch": pf.mismatch_norm}
    if case.meta.get("tie_lines"):
        rep["tie_transfer_mw"] = tie_transfer_mw(case, pf)
    return rep


# ---------------------------------------------------------------- training

def make_env(cfg: ExperimentConfig, channel=None, record_trace=False, case=None):
    case = case if case is not None else load_case(cfg.case)
    return DampingEnv(case, cfg.episode_config(channel), cfg.reward_weights(), record_trace)


def train_seed(cfg: ExperimentConfig, seed: int, out_dir, paper_scale: bool = False,
               write_timing: bool = True):
    """Train one seed; writes ``training_log.csv``, ``timing.csv`` and checkpoints."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    env = make_env(cfg)
    agent_cfg = cfg.agent_config(env.obs_dim, env.action_dim, seed)
    episodes = cfg.paper_episodes if paper_scale else cfg.episodes
    res = train(env, agent_cfg, episodes, seed=seed, checkpoint_dir=str(out),
                checkpoint_every=cfg.checkpoint_every, success_window=cfg.success_window)
    write_training_log(out / "training_log.csv", res.records)
    if write_timing:
        with open(out / "timing.csv", "w") as f:
            f.write("episode,wall_time_s\n")
            for k, t in enumerate(res.timings):
                f.write(f"{k},{t:.6f}\n")
    return res.records


def run_train(cfg: ExperimentConfig, out, paper_scale: bool = False) -> dict:
    jobs = [(cfg, s, Path(out) / f"seed_{s}", paper_scale) for s in cfg.seeds]
    return dict(zip(cfg.seeds, _map(train_seed, jobs)))


# ---------------------------------------------------------------- evaluation

def pss_policy(n: int, dt: float, v=-0.2, u=0.2):
    """Local PSS on the controlled generators (undelayed local speed)."""
    bank = PssBank(n, v=v, u=u)

    def policy(obs, env):
        return bank(env.state.omega[env.controlled], dt)
    policy.reset = bank.reset
    policy.local = True
    return policy


def tuned_pid_gains(cfg: ExperimentConfig, out=None, case=None):
    """Configured gains, or a delay-free grid search (logged to ``pid_tuning.csv``)."""
    gains = cfg.pid_gains()
    if gains is not None:
        return gains
    case = case if case is not None else load_case(cfg.case)
    env_cfg = cfg.episode_config()
    w = cfg.reward_weights()
    res = tune_pid(lambda kp, ki, kd: pid_score(case, env_cfg, w, kp, ki, kd), *cfg.pid_grids())
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        write_tuning_csv(Path(out) / "pid_tuning.csv", res)
    return res.kp, res.ki, res.kd


def make_policy(controller: str, cfg: ExperimentConfig, env, agent=None, pid_gains=None):
    w = cfg.reward_weights()
    dt = env.cfg.dt_control
    if controller == "rl":
        if agent is None:
            raise ConfigError("controller rl needs a checkpoint")
        return rl_policy(agent)
    if controller == "pid":
        return pid_policy(env.action_dim, *pid_gains, dt, w.v, w.u)
    if controller == "pss_only":
        return pss_policy(env.action_dim, dt, w.v, w.u)
    return zero_policy


def scenario_name(cfg: ExperimentConfig) -> str:
    sc = cfg.episode_config()
    return f"{cfg.case}_pv{sc.pv_share:g}"


def run_eval(cfg: ExperimentConfig, out, checkpoint=None, seeds=None, channels=None,
             controllers=None, write_traces: bool = True) -> list:
    """Greedy evaluation grid; writes ``eval_report.csv`` and per-run traces."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.episode_config().horizon < 5.0:
        raise ConfigError("eval needs scenario.horizon >= 5 s to measure the tail window")
    seeds = list(seeds) if seeds is not None else list(range(cfg.eval_episodes))
    channels = channels or cfg.eval_channels
    controllers = controllers or cfg.eval_controllers
    case = load_case(cfg.case)
    agent = None
    if "rl" in controllers:
        if checkpoint is None:
            raise ConfigError("eval with controller rl needs --checkpoint")
        probe = make_env(cfg, case=case)
        agent = load_checkpoint(checkpoint, probe.obs_dim, probe.action_dim)
    gains = tuned_pid_gains(cfg, out, case) if "pid" in controllers else None
    rows = []
    clear = cfg.episode_config().fault_time + cfg.episode_config().fault_duration
    scen = scenario_name(cfg)
    for chan in channels:
        env = make_env(cfg, chan, record_trace=True, case=case)
        for ctrl in controllers:
            pol = make_policy(ctrl, cfg, env, agent, gains)
            for sd, ep, rep in evaluate(env, pol, seeds, clear):
                rows.append((scen, chan, ctrl, sd, not ep["sync_lost"], rep.peak_deviation,
                             rep.settling_time, rep.tail_energy))
                if write_traces:
                    tdir = out / "traces"
                    tdir.mkdir(exist_ok=True)
                    write_trace_csv(tdir / f"trace-{ctrl}-{chan}-seed{sd}.csv", env.trace,
                                    env.action_dim)
    write_eval_report(out / "eval_report.csv", rows)
    return rows


# ---------------------------------------------------------------- sweep

def sweep_grid(cfg: ExperimentConfig) -> list:
    if not cfg.sweep:
        raise ConfigError("[sweep] grid is empty")
    keys = sorted(cfg.sweep)
    values = [[v.strip() for v in str(cfg.sweep[k]).split(",") if v.strip()] for k in keys]
    if any(not v for v in values):
        raise ConfigError("[sweep] every key needs at least one value")
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def _sweep_point(cfg, point, seed, episodes):
    c = with_overrides(cfg, point)
    env = make_env(c)
    res = train(env, c.agent_config(env.obs_dim, env.action_dim, seed), episodes, seed=seed)
    window = min(c.success_window, len(res.records))
    tail = res.records[-window:]
    return success_rate(res.records, window), float(np.mean([r.ret for r in tail]))


def run_sweep(cfg: ExperimentConfig, out) -> list:
    """Short training per grid point, ranked by trailing success then return."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    points = sweep_grid(cfg)
    jobs = [(cfg, p, s, cfg.sweep_episodes) for p in points for s in cfg.seeds]
    results = _map(_sweep_point, jobs)
    rows = []
    k = 0
    for p in points:
        per = results[k:k + len(cfg.seeds)]
        k += len(cfg.seeds)
        rows.append((p, float(np.mean([r[0] for r in per])), float(np.mean([r[1] for r in per]))))
    order = sorted(range(len(rows)), key=lambda i: (-rows[i][1], -rows[i][2], i))
    keys = sorted(points[0])
    with open(out / "sweep_results.csv", "w") as f:
        f.write("rank," + ",".join(keys) + ",trailing_success,trailing_return\n")
        for rank, i in enumerate(order):
            p, sr, rt = rows[i]
            f.write(f"{rank}," + ",".join(p[key] for key in keys) + f",{float(sr)!r},{float(rt)!r}\n")
    best = rows[order[0]][0]
    with open(out / "best_config.cfg", "w") as f:
        for sec in ("reward", "agent", "scenario"):
            items = {k.split(".", 1)[1]: v for k, v in best.items() if k.startswith(sec + ".")}
            if items:
                f.write(f"[{sec}]\n" + "".join(f"{k} = {v}\n" for k, v in items.items()) + "\n")
    return [rows[i] for i in order]


# ---------------------------------------------------------------- plot data

def _svg_lines(path, series, title, xlabel, ylabel) -> None:
    """Minimal line plot; ``series`` maps label -> (x, y)."""
    w, h, pad = 640, 400, 50
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    ys = ys[np.isfinite(ys)]
    x0, x1 = float(xs.min()), float(xs.max()) or 1.0
    y0, y1 = (float(ys.min()), float(ys.max())) if len(ys) else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
             f'<text x="{w / 2}" y="20" text-anchor="middle">{escape(title)}</text>',
             f'<text x="{w / 2}" y="{h - 8}" text-anchor="middle">{escape(xlabel)}</text>',
             f'<text x="12" y="{h / 2}" transform="rotate(-90 12 {h / 2})" '
             f'text-anchor="middle">{escape(ylabel)}</text>',
             f'<rect x="{pad}" y="{pad}" width="{w - 2 * pad}" height="{h - 2 * pad}" '
             'fill="none" stroke="black"/>']
    for k, (label, (x, y)) in enumerate(series.items()):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        ok = np.isfinite(y)
        px = pad + (x[ok] - x0) / (x1 - x0) * (w - 2 * pad)
        py = h - pad - (y[ok] - y0) / (y1 - y0) * (h - 2 * pad)
        pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(px, py))
        c = colors[k % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{c}" points="{pts}"/>')
        parts.append(f'<text x="{w - pad - 5}" y="{pad + 15 + 15 * k}" text-anchor="end" '
                     f'fill="{c}">{escape(label)}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def run_plotdata(src, out, svg: bool = False, window: int = 50) -> list:
    """Figure CSVs from training logs and eval traces found under ``src``."""
    src, out = Path(src), Path(out)
    out.mkdir(parents=True, exist_ok=True)
    logs = sorted(src.rglob("training_log.csv"))
    traces = sorted(src.rglob("trace-*.csv"))
    if not logs and not traces:
        raise FileNotFoundError(f"no training logs or traces under {src}")
    written = []
    if logs:
        lc, ls = out / "learning_curve.csv", out / "learning_speed.csv"
        curves, speeds = {}, {}
        with open(lc, "w") as f, open(ls, "w") as g:
            f.write("run,episode,return,moving_avg,initial_q\n")
            g.write("run,episode,smoothed_success\n")
            for p in logs:
                run = str(p.parent.relative_to(src)) or "."
                recs = read_training_log(p)
                ma = moving_average_return(recs, 5)
                sm = smoothed_success(recs, window)
                for r, m, s in zip(recs, ma, sm):
                    f.write(f"{run},{r.episode},{float(r.ret)!r},{float(m)!r},{float(r.initial_q)!r}\n")
                    g.write(f"{run},{r.episode},{float(s)!r}\n")
                ep = [r.episode for r in recs]
                curves[run] = (ep, ma)
                speeds[run] = (ep, sm)
        written += [lc, ls]
        if svg:
            _svg_lines(out / "learning_curve.svg", curves, "Learning curve", "episode",
                       "return (5-episode mean)")
            _svg_lines(out / "learning_speed.svg", speeds, "Learning speed", "episode",
                       "smoothed success rate")
            written += [out / "learning_curve.svg", out / "learning_speed.svg"]
    if traces:
        cc = out / "channel_comparison.csv"
        series = {}
        with open(cc, "w") as f:
            f.write("controller,channel,seed,t,gen_id,omega_pu\n")
            for p in traces:
                _, ctrl, chan, seed = p.stem.split("-")
                seed = seed[len("seed"):]
                data = np.genfromtxt(p, delimiter=",", names=True, ndmin=1)
                for t, g, w in zip(data["t"], data["gen_id"], data["omega_pu"]):
                    f.write(f"{ctrl},{chan},{seed},{t:.6f},{int(g)},{float(w)!r}\n")
                if seed == "0":
                    g0 = data["gen_id"] == 0
                    series[f"{ctrl}/{chan}"] = (data["t"][g0], data["omega_pu"][g0])
        written.append(cc)
        if svg and series:
            _svg_lines(out / "channel_comparison.svg", series, "Generator 0 speed", "t (s)",
                       "omega (pu)")
            written.append(out / "channel_comparison.svg")
    return written
