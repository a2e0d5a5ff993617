"""Multi-graph convolution + GRU encoder-decoder producing candidate forecasts.

At each observed time t the encoder folds the frame through a graph
convolution that mixes the normalized spatial adjacency with the stack of
DTW similarity slices over all lags, then a shared GRU cell. The decoder
unrolls the remaining T-t-1 steps from the hidden state, feeding a learned
"go" input first and afterwards its own projected output passed through one
spatial graph convolution, and reads the final hidden state out affinely.

Candidate forecasts predict the window's last frame; the committed forecast
picks, per node, the candidate issued at that node's halt time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import GRUCell, Linear, ShapeError, Tensor, constant, parameter
from .dtw import SimilarityStack
from .graph import SpatialAdjacency


class DtwSliceError(ValueError):
    pass


class MgcnLayer:
    """Per-lag 1 -> h weight matrices, indexed by absolute time in the window."""

    def __init__(self, horizon: int, hidden: int, rng: np.random.Generator):
        self.horizon = horizon
        self.hidden = hidden
        self.weights = [parameter(ad.glorot_uniform(rng, (1, hidden))) for _ in range(horizon)]

    def params(self) -> dict[str, Tensor]:
        return {f"w{t}": w for t, w in enumerate(self.weights)}


def mgcn_forward(frames: np.ndarray, sim: SimilarityStack | None,
                 adj: SpatialAdjacency, layer: MgcnLayer) -> Tensor:
    """Graph convolution over all observed frames, sigmoid-activated.

    ``frames`` is (n, t+1): columns are the observations through time t.
    Lag t' < t uses the similarity slice alone; the current frame uses the
    average of the normalized spatial adjacency and the t'=t slice. With
    ``sim=None`` (similarity ablation) only the spatial half of the current
    frame's term remains.
    """
    n, upto = frames.shape
    t = upto - 1
    if t >= layer.horizon:
        raise ShapeError(f"mgcn: time {t} outside horizon {layer.horizon}")
    if sim is not None and (sim.t != t or sim.slices.shape[0] != t + 1):
        raise DtwSliceError(f"mgcn: similarity extended through {sim.t}, need {t}")
    terms = []
    if sim is not None:
        for lag in range(t):
            mixed = sim.slices[lag] @ frames[:, lag:lag + 1]
            terms.append(ad.matmul(constant(mixed), layer.weights[lag]))
        current = 0.5 * (adj.a_s_norm + sim.slices[t])
    else:
        current = 0.5 * adj.a_s_norm
    terms.append(ad.matmul(constant(current @ frames[:, t:t + 1]), layer.weights[t]))
    summed = terms[0] if len(terms) == 1 else ad.add_n(terms)
    return ad.sigmoid(summed)


@dataclass
class EncoderState:
    h: Tensor  # (n, hidden)
    t: int


class Predictor:
    """Encoder-decoder over one episode window."""

    def __init__(self, horizon: int, hidden: int, rng: np.random.Generator):
        self.horizon = horizon
        self.hidden = hidden
        self.mgcn = MgcnLayer(horizon, hidden, rng)
        self.encoder_cell = GRUCell(hidden, hidden, rng)
        self.decoder_cell = GRUCell(1, hidden, rng)
        # Carry-biased update gate: candidates are decoded at every unroll
        # depth with one shared cell, and a near-identity start keeps deep
        # unrolls close to the affine readout until training shapes them.
        self.decoder_cell.bz.values[...] = -2.0
        self.go = parameter(np.zeros((1, 1)))
        self.readout = Linear(hidden, 1, rng)

    def initial_state(self, n: int) -> EncoderState:
        return EncoderState(h=constant(np.zeros((n, self.hidden))), t=-1)

    def encode_step(self, frames: np.ndarray, prev: EncoderState,
                    sim: SimilarityStack | None, adj: SpatialAdjacency) -> EncoderState:
        t = frames.shape[1] - 1
        if prev.t != t - 1:
            raise ShapeError(f"encode_step: state at t={prev.t}, frame at t={t}")
        x = mgcn_forward(frames, sim, adj, self.mgcn)
        return EncoderState(h=self.encoder_cell(x, prev.h), t=t)

    def decode(self, state: EncoderState, adj: SpatialAdjacency) -> Tensor:
        """Candidate forecast (n, 1) issued at the state's time."""
        t = state.t
        if not 0 <= t < self.horizon:
            raise ShapeError(f"decode: t={t} outside [0, {self.horizon - 1}]")
        steps = self.horizon - 1 - t
        h = state.h
        if steps == 0:
            return self.readout(h)
        n = h.values.shape[0]
        u = ad.matmul(constant(np.ones((n, 1))), self.go)
        for k in range(steps):
            h = self.decoder_cell(u, h)
            if k < steps - 1:
                u = ad.matmul(constant(adj.a_s_norm), self.readout(h))
        return self.readout(h)

    def params(self) -> dict[str, Tensor]:
        out = {}
        out.update(ad.namespaced("encoder.mgcn", self.mgcn.params()))
        out.update(ad.namespaced("encoder.gru", self.encoder_cell.params()))
        out.update(ad.namespaced("decoder.gru", self.decoder_cell.params()))
        out["decoder.go"] = self.go
        out.update(ad.namespaced("decoder.readout", self.readout.params()))
        return out


def actions_from_halt_times(halt_times: np.ndarray, horizon: int) -> np.ndarray:
    """One-hot (T, n) action matrix from per-node halt steps."""
    halt_times = np.asarray(halt_times)
    n = halt_times.size
    acts = np.zeros((horizon, n))
    acts[halt_times, np.arange(n)] = 1.0
    return acts


def commit_forecast(candidates: list[Tensor], actions: np.ndarray) -> Tensor:
    """Per-node selection of the candidate issued at the halt time.

    ``actions`` is the (T, n) one-hot halt matrix; a node halting zero or
    multiple times indicates a policy-masking bug and raises.
    """
    actions = np.asarray(actions, dtype=np.float64)
    horizon, n = actions.shape
    if len(candidates) != horizon:
        raise ShapeError(f"commit: {len(candidates)} candidates for horizon {horizon}")
    per_node = actions.sum(axis=0)
    if np.any(per_node != 1.0):
        bad = np.where(per_node != 1.0)[0]
        raise ValueError(f"commit: nodes with zero or multiple halts: {bad.tolist()}")
    parts = []
    for t in range(horizon):
        if actions[t].any():
            parts.append(ad.mul(constant(actions[t][:, None]), candidates[t]))
    return parts[0] if len(parts) == 1 else ad.add_n(parts)


def mae_loss(committed: Tensor, truth: np.ndarray) -> Tensor:
    """Mean absolute error against the window's final frame."""
    return ad.mean(ad.absolute(ad.sub(committed, constant(truth.reshape(-1, 1)))))
