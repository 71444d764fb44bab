"""Greedy deep stacking of recurrent layers.

Each trained layer is frozen and its deterministic hidden activation
sequences (conditional probabilities, not samples, so the construction
is reproducible) become the training sequences for the next layer.  The
stack reuses the static gate: accumulated gradient-variance and energy
totals decide whether another layer is worth adding.

Prediction runs bottom-up then top-down: the prefix is lifted through
the lower layers as activation sequences, the top layer predicts its own
next frame, and each layer below converts the prediction above it into
visible marginals with a single conditional pass using its own temporal
bias for the next step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adapt import AdaptConfig, ForgettingConfig
from .dbn import LayerGenConfig, LayerTotals, should_generate_layer
from .errors import NumericError
from .log import TrainLog, format_layer_event
from .numerics import RngStream, sample_bernoulli, sigmoid
from .rbm import CdConfig, Rbm
from .rnn_rbm import (RnnRbm, _mean_field_marginals, mean_sequence_energy,
                      predict_next, temporal_biases, train_adaptive_rnn_rbm,
                      unroll)


@dataclass
class RnnDbn:
    """Stack of recurrent layers, bottom first."""

    layers: list = field(default_factory=list)
    totals: list = field(default_factory=list)

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def n_visible(self) -> int:
        return self.layers[0].n_visible

    def validate(self):
        for lower, upper in zip(self.layers, self.layers[1:]):
            if upper.n_visible != lower.n_hidden:
                raise NumericError(
                    f"layer chain broken: {upper.n_visible} visible units "
                    f"over {lower.n_hidden} hidden units")
        for layer in self.layers:
            layer.validate()


def deterministic_hidden_sequence(model: RnnRbm, seq) -> np.ndarray:
    """Per-frame hidden conditionals ``p(h | v_t)`` under the temporal bias.

    Deterministic by construction; this is what upper layers train on.
    """
    seq = np.asarray(seq, dtype=np.float64)
    _, _, C = unroll(model, seq)
    return sigmoid(C + seq @ model.rbm.W)


def _inherit_layer(parent: RnnRbm, rng: RngStream) -> RnnRbm:
    """Untrained next layer sized to the parent's hidden output.

    Both bias vectors copy the parent's hidden bias (the new layer sees
    data whose statistics those biases already describe); all weight
    matrices start small and the state starts uniform.
    """
    j = parent.n_hidden
    rbm = Rbm(b=parent.rbm.c.copy(), c=parent.rbm.c.copy(),
              W=rng.normal(sd=0.01, size=(j, j)))
    from .rnn_rbm import U0_MARGIN

    return RnnRbm(
        rbm=rbm,
        u_bias=np.zeros(j),
        w_uv=rng.normal(sd=0.01, size=(j, j)),
        w_uh=rng.normal(sd=0.01, size=(j, j)),
        w_vu=rng.normal(sd=0.01, size=(j, j)),
        w_uu=rng.normal(sd=0.01, size=(j, j)),
        u0=np.clip(rng.uniform(size=j), U0_MARGIN, 1.0 - U0_MARGIN),
    )


def train_adaptive_rnn_dbn(sequences, n_hidden: int, cd: CdConfig,
                           epochs_per_layer: int, rng: RngStream,
                           layer_cfg: LayerGenConfig,
                           adapt: AdaptConfig | None = None,
                           forget: ForgettingConfig | None = None,
                           u_dim: int | None = None,
                           gate_layers: bool = True,
                           log: TrainLog | None = None):
    """Greedy bottom-up training of the recurrent stack.

    Layer ``l`` trains from the root stream's ``split(l)``, exactly as a
    standalone run would, so the first layer of a stack equals a
    single-layer run with the same seed.  Returns ``(model, log)``.
    """
    log = log if log is not None else TrainLog()
    stack = RnnDbn()
    inputs = [np.asarray(s, dtype=np.float64) for s in sequences]
    layer_idx = 1
    init = None
    first_event = None
    while True:
        model, stats, _ = train_adaptive_rnn_rbm(
            inputs, n_hidden, cd, epochs_per_layer, rng.split(layer_idx),
            adapt=adapt, forget=forget, u_dim=u_dim, init_model=init,
            layer=layer_idx, n_layers=layer_idx, log=log,
            first_event=first_event)
        stack = RnnDbn(
            layers=stack.layers + [model],
            totals=stack.totals + [LayerTotals(
                wd=float(stats.var_c().sum() + stats.var_w().sum()),
                energy=abs(mean_sequence_energy(model, inputs)))])
        stack.validate()

        if gate_layers:
            grow = should_generate_layer(stack, layer_cfg)
        else:
            grow = stack.n_layers < layer_cfg.max_layers
        if not grow:
            break
        layer_idx += 1
        init = _inherit_layer(model, rng.split(layer_idx).split(0))
        inputs = [deterministic_hidden_sequence(model, s) for s in inputs]
        first_event = format_layer_event(layer_idx)

    return stack, log


def _lift_prefix(stack: RnnDbn, prefix: np.ndarray) -> list:
    """Prefix as seen by every layer, bottom first."""
    views = [prefix]
    for layer in stack.layers[:-1]:
        views.append(deterministic_hidden_sequence(layer, views[-1]))
    return views


def predict_next_deep(stack: RnnDbn, prefix) -> np.ndarray:
    """Marginal prediction for the frame after ``prefix`` using the whole
    stack: top-layer prediction, then one conditional pass per layer down.
    """
    prefix = np.asarray(prefix, dtype=np.float64)
    if prefix.size == 0:
        prefix = np.zeros((0, stack.n_visible))
    views = _lift_prefix(stack, prefix)
    signal = predict_next(stack.layers[-1], views[-1])
    for layer, view in zip(reversed(stack.layers[:-1]), reversed(views[:-1])):
        u_last = unroll(layer, view)[0][-1]
        b_next, _ = temporal_biases(layer, u_last)
        signal = sigmoid(b_next + signal @ layer.rbm.W.T)
    return signal


def next_frame_predictions_deep(stack: RnnDbn, seq) -> np.ndarray:
    """Stack predictions for frames ``2..T``; rows align with ``seq[1:]``.

    Vectorised over prefixes: every layer's state trajectory is computed
    once, the top layer runs mean-field for all steps at once, and the
    down passes reuse the stored trajectories.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.shape[0] < 2:
        return np.zeros((0, stack.n_visible))
    views = _lift_prefix(stack, seq)
    top = stack.layers[-1]
    _, B, C = unroll(top, views[-1])
    signal = _mean_field_marginals(top.rbm.W, B[1:], C[1:])
    for layer, view in zip(reversed(stack.layers[:-1]), reversed(views[:-1])):
        states = unroll(layer, view)[0]
        b_next = layer.rbm.b + states[1:-1] @ layer.w_uv
        signal = sigmoid(b_next + signal @ layer.rbm.W.T)
    return signal


def prediction_error_deep(stack: RnnDbn, sequences) -> float:
    """Pooled next-frame cross-entropy per bit for the stack."""
    from .metrics import PooledMetrics

    pool = PooledMetrics()
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.float64)
        if seq.shape[0] >= 2:
            pool.add(next_frame_predictions_deep(stack, seq), seq[1:])
    return float("nan") if pool.empty else pool.cross_entropy()


def sample_sequence_deep(stack: RnnDbn, length: int,
                         rng: RngStream) -> np.ndarray:
    """Generate frames from the stack.

    Each step predicts marginals through the full stack for the current
    prefix, samples a frame, and appends it.  States are recomputed from
    the prefix for clarity rather than speed; generation length stays
    small in practice.
    """
    if length < 0:
        raise ValueError("length must be >= 0")
    frames = np.zeros((length, stack.n_visible))
    for t in range(length):
        p = predict_next_deep(stack, frames[:t])
        frames[t] = sample_bernoulli(p, rng)
    return frames
