"""Preference-conditioned multi-objective Q-learning over per-node halt/wait.

One shared Q-network maps (state, preference) to a 2x2 block of values: two
actions (wait, halt) by two objectives (accuracy, timeliness). Action
selection scalarizes with the episode preference; training uses envelope
Bellman targets, where the bootstrap takes the vector value of the
action/preference pair that maximizes the current scalarization, and a
squared-error / scalarized-absolute-error loss pair blended by an annealed
weight. Rewards are vector-valued and terminal-only: a node halting at step
t earns (-|forecast error|, -rho * t) on that transition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import MLP, Adam, Tape, Tensor, constant
from .config import ExperimentConfig
from .dtw import DtwTables, build_similarity_stack
from .embedding import EmbeddingTable, WalkConfig, init_embeddings, sample_walks, train_embeddings
from .graph import SpatialAdjacency
from .predictor import Predictor, actions_from_halt_times, commit_forecast, mae_loss

WAIT, HALT = 0, 1

# Column layout of the Q head: actions major, objectives minor.
_FOLD = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])


def sample_preference(rng: np.random.Generator) -> np.ndarray:
    u = rng.random()
    return np.array([u, 1.0 - u])


def check_preference(omega: np.ndarray):
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != (2,) or np.any(omega < 0) or abs(omega.sum() - 1.0) > 1e-9:
        raise ValueError(f"preference must lie on the 2-simplex, got {omega}")
    return omega


class QNetwork:
    """MLP from (state || preference) to per-action vector values."""

    def __init__(self, state_dim: int, rng: np.random.Generator, hidden: int = 64):
        self.state_dim = state_dim
        self.mlp = MLP([state_dim + 2, hidden, hidden, 4], rng)

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        """Plain forward pass outside any tape; x is (B, state_dim + 2)."""
        return _mlp_np([(l.w.values, l.b.values) for l in self.mlp.layers], x)

    def values(self, states: np.ndarray, omega: np.ndarray) -> np.ndarray:
        """(B, 2 actions, 2 objectives) for one preference, no gradients."""
        b = states.shape[0]
        x = np.concatenate([states, np.broadcast_to(omega, (b, 2))], axis=1)
        return self.forward_np(x).reshape(b, 2, 2)

    def snapshot(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(l.w.values.copy(), l.b.values.copy()) for l in self.mlp.layers]

    def params(self) -> dict[str, Tensor]:
        return self.mlp.params()


def _mlp_np(layers: list[tuple[np.ndarray, np.ndarray]], x: np.ndarray) -> np.ndarray:
    h = x
    for w, b in layers[:-1]:
        h = np.tanh(h @ w + b)
    w, b = layers[-1]
    return h @ w + b


def select_actions(qnet: QNetwork, states: np.ndarray, omega: np.ndarray,
                   eps: float, rng: np.random.Generator | None) -> np.ndarray:
    """Epsilon-greedy over the scalarized Q-values, per state row."""
    q = qnet.values(states, omega)              # (m, 2, 2)
    scal = q @ omega                             # (m, 2)
    greedy = scal.argmax(axis=1)
    if eps <= 0.0 or rng is None:
        return greedy
    m = states.shape[0]
    explore = rng.random(m) < eps
    randoms = rng.integers(0, 2, size=m)
    return np.where(explore, randoms, greedy)


def compute_rewards(halt_times: np.ndarray, committed: np.ndarray,
                    truth: np.ndarray, rho: float) -> np.ndarray:
    """Per-node (accuracy, timeliness) reward at the halt transition."""
    err = np.abs(np.asarray(committed, dtype=float) - np.asarray(truth, dtype=float))
    return np.stack([-err, -rho * np.asarray(halt_times, dtype=float)], axis=1)


# ---------------------------------------------------------------------------
# Replay and schedules
# ---------------------------------------------------------------------------


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros((capacity, 2))
        self.next_states = np.zeros((capacity, state_dim))
        self.terminal = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.pos = 0

    def push(self, state, action, reward, next_state, terminal):
        i = self.pos
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        if next_state is not None:
            self.next_states[i] = next_state
        self.terminal[i] = terminal
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        idx = rng.integers(0, self.size, size=batch)
        return {
            "states": self.states[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_states": self.next_states[idx],
            "terminal": self.terminal[idx],
        }

    def __len__(self):
        return self.size


@dataclass
class Schedules:
    """Exploration decay, loss-blend path and target-sync cadence."""

    total_env_steps: int
    total_updates: int
    eps_floor: float = 0.05
    lambda_frac: float = 0.6
    target_sync: int = 200

    def epsilon(self, env_step: int) -> float:
        tau = max(1.0, self.total_env_steps / 5.0)
        return max(self.eps_floor, float(np.exp(-env_step / tau)))

    def lam(self, update_idx: int) -> float:
        ramp = max(1.0, self.lambda_frac * self.total_updates)
        return min(1.0, update_idx / ramp)


# ---------------------------------------------------------------------------
# Envelope targets and the Q update
# ---------------------------------------------------------------------------


def envelope_targets(batch: dict[str, np.ndarray], outer_prefs: np.ndarray,
                     cand_prefs: np.ndarray, gamma: float,
                     target_net: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Bellman targets y, shape (K, B, 2), one row of preferences per K.

    Non-terminal rows bootstrap with the vector value of the (action,
    candidate preference) pair maximizing the outer preference's
    scalarization under the frozen target net; terminal rows are the reward.
    """
    outer = np.atleast_2d(outer_prefs)
    k = outer.shape[0]
    rewards = batch["rewards"]
    b = rewards.shape[0]
    y = np.broadcast_to(rewards, (k, b, 2)).copy()
    alive = ~batch["terminal"]
    m = int(alive.sum())
    if m == 0:
        return y
    nxt = batch["next_states"][alive]
    n_cand = cand_prefs.shape[0]
    x = np.concatenate(
        [np.repeat(nxt, n_cand, axis=0), np.tile(cand_prefs, (m, 1))], axis=1)
    q = _mlp_np(target_net, x).reshape(m, n_cand, 2, 2)
    scores = np.einsum("ko,mnao->kmna", outer, q)
    flat_idx = scores.reshape(k, m, n_cand * 2).argmax(axis=2)
    qflat = q.reshape(m, n_cand * 2, 2)
    qvec = qflat[np.arange(m)[None, :], flat_idx]  # (k, m, 2)
    y[:, alive, :] += gamma * qvec
    return y


def envelope_target(batch: dict[str, np.ndarray], omega: np.ndarray,
                    cand_prefs: np.ndarray, gamma: float,
                    target_net: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Single-preference envelope target, shape (B, 2)."""
    if cand_prefs.shape[0] < 1:
        raise ValueError("need at least one candidate preference")
    return envelope_targets(batch, omega[None, :], cand_prefs, gamma, target_net)[0]


def q_update(qnet: QNetwork, opt: Adam, batch: dict[str, np.ndarray],
             outer_prefs: np.ndarray, y: np.ndarray, lam: float) -> float:
    """One Adam step on (1 - lam) * mse(y, Q) + lam * |w'y - w'Q|, means over rows."""
    outer = np.atleast_2d(outer_prefs)
    k = outer.shape[0]
    b = batch["states"].shape[0]
    pref_rows = np.repeat(outer, b, axis=0)  # (K*B, 2) preference per row
    x = np.concatenate([np.tile(batch["states"], (k, 1)), pref_rows], axis=1)
    actions = np.tile(batch["actions"], k)
    mask = np.zeros((k * b, 4))
    cols = 2 * actions
    rows = np.arange(k * b)
    mask[rows, cols] = 1.0
    mask[rows, cols + 1] = 1.0
    y_flat = y.reshape(k * b, 2)
    with Tape() as tape:
        out = qnet.mlp(constant(x))                                   # (K*B, 4)
        q_taken = ad.matmul(ad.mul(out, constant(mask)), constant(_FOLD))  # (K*B, 2)
        diff = ad.sub(constant(y_flat), q_taken)
        loss_a = ad.scale(ad.total(ad.square(diff)), 1.0 / (k * b))
        proj = ad.matmul(ad.mul(diff, constant(pref_rows)), constant(np.ones((2, 1))))
        loss_b = ad.scale(ad.total(ad.absolute(proj)), 1.0 / (k * b))
        loss = ad.add(ad.scale(loss_a, 1.0 - lam), ad.scale(loss_b, lam))
        tape.backward(loss)
    opt.step()
    opt.zero_grad()
    return loss.item()


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------


@dataclass
class EpisodeTrace:
    halt_times: np.ndarray          # (n,) committed step per node
    committed: np.ndarray           # (n,) committed forecasts (model units)
    truth: np.ndarray               # (n,) final frame (model units)
    rewards: np.ndarray             # (n, 2) terminal vector rewards
    used_time_pct: float
    mae: float

    def returns(self) -> np.ndarray:
        """Mean vector return across nodes (terminal-only rewards)."""
        return self.rewards.mean(axis=0)


@dataclass
class _PendingTransition:
    node: int
    state: np.ndarray
    action: int
    terminal: bool
    next_state: np.ndarray | None = None
    reward: np.ndarray | None = None


class StemoModel:
    """Predictor, Q-network and embedding table with shared dimensions."""

    def __init__(self, n: int, cfg: ExperimentConfig, rng: np.random.Generator):
        self.n = n
        self.horizon = cfg.T
        self.hidden = cfg.h
        self.embed_dim = cfg.e
        self.kappa = cfg.kappa
        self.state_dim = cfg.h + cfg.e
        self.predictor = Predictor(cfg.T, cfg.h, rng)
        self.qnet = QNetwork(self.state_dim, rng)
        self.embed = init_embeddings(n, cfg.e, rng)
        self.walk_cfg = WalkConfig(
            p=cfg.p, q=cfg.q, walk_length=cfg.walk_length,
            walks_per_node=cfg.walks_per_node, window=cfg.sg_window)

    def params(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.predictor.params())
        out.update(ad.namespaced("qnet", self.qnet.params()))
        return out

    def save(self, path):
        arrays = {k: v.values for k, v in self.params().items()}
        arrays["embed.vectors"] = self.embed.vectors
        arrays["embed.context"] = self.embed.context
        ad.save_checkpoint(path, arrays)

    def load(self, path):
        arrays = ad.load_checkpoint(path)
        ad.load_into(self.params(), {k: v for k, v in arrays.items() if not k.startswith("embed.")})
        self.embed.vectors[...] = arrays["embed.vectors"]
        self.embed.context[...] = arrays["embed.context"]


def run_episode(model: StemoModel, window: np.ndarray, omega: np.ndarray | None,
                adj: SpatialAdjacency, cfg: ExperimentConfig, *,
                train: bool, eps: float = 0.0,
                rng: np.random.Generator | None = None,
                predictor_opt: Adam | None = None,
                on_step=None,
                fixed_tau: int | None = None) -> tuple[EpisodeTrace, list[_PendingTransition]]:
    """Roll one episode window through encoder, policy and decoder.

    In training mode every candidate is decoded on one tape and the MAE
    through the committed forecasts is stepped at the end; in eval mode
    decoding happens only at halt times. ``fixed_tau`` bypasses the policy
    (the fixed-time / "without policy" variant) and freezes every node's
    halt at that step.
    """
    n, horizon = window.shape
    learned_policy = fixed_tau is None
    use_embed = learned_policy and not cfg.no_embedding
    use_sim = not cfg.no_similarity
    tape = Tape() if train else None
    tables = DtwTables(n, horizon, band=cfg.dtw_band if cfg.dtw_band >= 0 else None) if use_sim else None
    embed = model.embed if train else (model.embed.copy() if use_embed else model.embed)

    halted = np.zeros(n, dtype=bool)
    halt_times = np.full(n, -1, dtype=np.int64)
    candidates: dict[int, Tensor] = {}
    transitions: list[_PendingTransition] = []
    open_waits: dict[int, _PendingTransition] = {}
    state = model.predictor.initial_state(n)

    def step_all(t: int):
        nonlocal state, embed
        x_t = window[:, t]
        sim = None
        if use_sim:
            tables.extend(x_t)
            sim = build_similarity_stack(tables, t, model.kappa)
        state = model.predictor.encode_step(window[:, : t + 1], state, sim, adj)
        states_t = None
        if learned_policy:
            if use_embed:
                min_sim = sim.min_over_lags() if sim is not None else np.zeros((n, n))
                walks = sample_walks(min_sim, halted, model.walk_cfg, rng)
                embed = train_embeddings(walks, embed, model.walk_cfg, rng, t)
                emb = embed.vectors
            else:
                emb = np.zeros((n, model.embed_dim))
            states_t = np.concatenate([state.h.values, emb], axis=1)
            # waiting transitions from t-1 observe this step's state
            for node, pend in list(open_waits.items()):
                pend.next_state = states_t[node].copy()
                del open_waits[node]
        if train:
            candidates[t] = model.predictor.decode(state, adj)
        live = np.where(~halted)[0]
        if live.size == 0:
            return
        if learned_policy:
            acts = select_actions(model.qnet, states_t[live], omega, eps, rng)
        else:
            acts = np.full(live.size, HALT if t == fixed_tau else WAIT, dtype=np.int64)
        if not train and ((t == horizon - 1) or bool(np.any(acts == HALT))):
            candidates[t] = model.predictor.decode(state, adj)
        for node, a in zip(live, acts):
            terminal = (a == HALT) or (t == horizon - 1)
            if a == HALT:
                halted[node] = True
                halt_times[node] = t
            elif t == horizon - 1:
                halt_times[node] = t  # forced fallback halt
            if learned_policy:
                pend = _PendingTransition(node=node, state=states_t[node].copy(),
                                          action=int(a), terminal=terminal)
                transitions.append(pend)
                if not terminal:
                    open_waits[node] = pend

    if tape is not None:
        with tape:
            for t in range(horizon):
                step_all(t)
                if on_step is not None:
                    on_step()
            acts_matrix = actions_from_halt_times(halt_times, horizon)
            committed_t = commit_forecast([candidates[t] for t in range(horizon)], acts_matrix)
            truth = window[:, horizon - 1]
            loss = mae_loss(committed_t, truth)
            tape.backward(loss)
        if predictor_opt is not None:
            predictor_opt.step()
            predictor_opt.zero_grad()
        if use_embed:
            model.embed = embed
        committed = committed_t.values[:, 0].copy()
        mae_val = loss.item()
    else:
        for t in range(horizon):
            step_all(t)
            if halted.all():
                break
        committed = np.array([candidates[halt_times[i]].values[i, 0] for i in range(n)])
        truth = window[:, horizon - 1]
        mae_val = float(np.mean(np.abs(committed - truth)))

    rewards = compute_rewards(halt_times, committed, truth, cfg.rho)
    for pend in transitions:
        if pend.terminal:
            pend.reward = rewards[pend.node]
        else:
            pend.reward = np.zeros(2)
    used = float(100.0 / n * np.sum(halt_times / horizon))
    trace = EpisodeTrace(halt_times=halt_times, committed=committed, truth=truth,
                         rewards=rewards, used_time_pct=used, mae=mae_val)
    return trace, transitions


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class LogRow:
    episode: int
    omega_acc: float
    omega_time: float
    mae: float
    used_time_pct: float
    eps: float
    lam: float
    loss: float


class Trainer:
    """Joint training of predictor, embeddings and the Q-network."""

    def __init__(self, model: StemoModel, adj: SpatialAdjacency,
                 train_windows: list[np.ndarray], val_windows: list[np.ndarray],
                 cfg: ExperimentConfig):
        self.model = model
        self.adj = adj
        self.train_windows = train_windows
        self.val_windows = val_windows
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.pred_opt = Adam(model.predictor.params(), lr=cfg.lr)
        self.learned = cfg.fixed_policy < 0
        if self.learned:
            self.q_opt = Adam(model.qnet.params(), lr=cfg.lr)
            self.replay = ReplayBuffer(cfg.replay_capacity, model.state_dim)
            self.target = model.qnet.snapshot()
        total_steps = cfg.max_episodes * cfg.T
        self.schedules = Schedules(
            total_env_steps=total_steps,
            total_updates=max(1, total_steps // cfg.update_every),
            eps_floor=cfg.eps_floor,
            target_sync=cfg.target_sync)
        self.env_step = 0
        self.update_idx = 0
        self.last_q_loss = 0.0
        self.min_replay = max(cfg.batch_size * 4, 128)

    def _on_step(self):
        self.env_step += 1
        if not self.learned:
            return
        if self.env_step % self.cfg.update_every != 0 or len(self.replay) < self.min_replay:
            return
        batch = self.replay.sample(self.cfg.batch_size, self.rng)
        prefs = np.array([sample_preference(self.rng) for _ in range(self.cfg.n_pref)])
        lam = self.schedules.lam(self.update_idx)
        y = envelope_targets(batch, prefs, prefs, self.cfg.gamma, self.target)
        self.last_q_loss = q_update(self.model.qnet, self.q_opt, batch, prefs, y, lam)
        self.update_idx += 1
        if self.update_idx % self.schedules.target_sync == 0:
            self.target = self.model.qnet.snapshot()

    def train(self) -> list[LogRow]:
        cfg = self.cfg
        log: list[LogRow] = []
        best_val = -np.inf
        stale = 0
        for ep in range(cfg.max_episodes):
            window = self.train_windows[self.rng.integers(len(self.train_windows))]
            if self.learned:
                omega = sample_preference(self.rng)
                eps = self.schedules.epsilon(self.env_step)
                trace, transitions = run_episode(
                    self.model, window, omega, self.adj, cfg, train=True, eps=eps,
                    rng=self.rng, predictor_opt=self.pred_opt, on_step=self._on_step)
                for tr in transitions:
                    self.replay.push(tr.state, tr.action, tr.reward, tr.next_state, tr.terminal)
            else:
                omega = np.array([0.5, 0.5])
                eps = 0.0
                trace, _ = run_episode(
                    self.model, window, None, self.adj, cfg, train=True,
                    rng=self.rng, predictor_opt=self.pred_opt, on_step=self._on_step,
                    fixed_tau=cfg.fixed_policy)
            log.append(LogRow(
                episode=ep, omega_acc=float(omega[0]), omega_time=float(omega[1]),
                mae=trace.mae, used_time_pct=trace.used_time_pct,
                eps=eps, lam=self.schedules.lam(self.update_idx), loss=self.last_q_loss))
            if cfg.early_stop and self.learned and cfg.eval_every > 0 \
                    and (ep + 1) % cfg.eval_every == 0 and self.val_windows:
                score = self.validation_return()
                if score > best_val + 1e-9:
                    best_val = score
                    stale = 0
                else:
                    stale += 1
                    if stale >= cfg.patience:
                        break
        return log

    def validation_return(self) -> float:
        """Preference-averaged scalarized return on a fixed validation slice."""
        omegas = [np.array([0.1, 0.9]), np.array([0.5, 0.5]), np.array([0.9, 0.1])]
        windows = self.val_windows[: min(8, len(self.val_windows))]
        total = 0.0
        count = 0
        for omega in omegas:
            rng = np.random.default_rng(self.cfg.seed + 7919)
            for window in windows:
                trace, _ = run_episode(self.model, window, omega, self.adj, self.cfg,
                                       train=False, rng=rng)
                total += float(omega @ trace.returns())
                count += 1
        return total / max(count, 1)


# ---------------------------------------------------------------------------
# Hidden-preference discovery
# ---------------------------------------------------------------------------


def discover_preference(score_fn, budget: int, rng: np.random.Generator,
                        candidates_per_iter: int = 10, elite_frac: float = 0.2,
                        smoothing: float = 0.7) -> np.ndarray:
    """Cross-entropy search over the 2-simplex against scalar-only feedback.

    ``score_fn(omega)`` rolls out the policy conditioned on a candidate
    preference and returns the environment's (hidden-weighted) scalar
    return. A Beta proposal over the accuracy weight is refit on the top
    quantile each iteration; the proposal mean is returned once the episode
    budget is spent.
    """
    if budget < 10:
        raise ValueError(f"discovery budget must be at least 10 episodes, got {budget}")
    a, b = 1.0, 1.0
    used = 0
    while used + candidates_per_iter <= budget:
        w_acc = rng.beta(a, b, size=candidates_per_iter)
        scores = np.array([score_fn(np.array([w, 1.0 - w])) for w in w_acc])
        used += candidates_per_iter
        n_elite = max(2, int(round(candidates_per_iter * elite_frac)))
        elite = w_acc[np.argsort(scores)[-n_elite:]]
        m = float(np.clip(elite.mean(), 0.02, 0.98))
        v = float(max(elite.var(), 1e-4))
        # Cap the concentration, not a and b separately: the mean must survive.
        nu = float(np.clip(m * (1 - m) / v - 1.0, 2.0, 50.0))
        a = smoothing * (m * nu) + (1 - smoothing) * a
        b = smoothing * ((1 - m) * nu) + (1 - smoothing) * b
    w = a / (a + b)
    return np.array([w, 1.0 - w])
