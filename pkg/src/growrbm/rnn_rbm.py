"""Recurrent conditional RBM for sequences.

A deterministic recurrent state ``u`` summarises the past.  At each
frame the state shifts the biases of an otherwise shared RBM:

* visible bias ``b_t = b + u_(t-1) @ w_uv``
* hidden bias  ``c_t = c + u_(t-1) @ w_uh``
* state update ``u_t = sigmoid(u_bias + u_(t-1) @ w_uu + v_t @ w_vu)``

so the sequence likelihood factorises into per-frame conditional RBM
terms.  Training backpropagates per-frame gradient estimates (CD at
scale, exact enumeration in the oracles) through the state recursion.

The hidden layer can grow and shrink during training exactly like the
static model; ``w_uh`` is resized in lockstep so the temporal bias keeps
one column per hidden unit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .adapt import (AdaptConfig, ForgettingConfig, GradientStats,
                    StructureController, forgetting_gradient,
                    generation_scores, insert_columns, mask_from_activations,
                    maybe_generate)
from .errors import CapacityError, DimensionError, NumericError
from .log import (LogRow, TrainLog, format_annihilation_event,
                  format_generation_event, join_events)
from .metrics import PooledMetrics
from .numerics import RngStream, sample_bernoulli, sigmoid
from .rbm import CdConfig, Rbm, all_states, cd_step

SEQ_ENUM_LIMIT = 20
MEAN_FIELD_PASSES = 10
GRAD_CLIP = 5.0
U0_MARGIN = 1e-6


@dataclass
class RnnRbm:
    """Shared RBM plus the recurrent state machinery.

    ``rbm`` holds the static biases and weights; the five recurrent
    arrays follow the shape convention (state in rows): ``w_uv (K, I)``,
    ``w_uh (K, J)``, ``w_vu (I, K)``, ``w_uu (K, K)``, with ``u_bias``
    and the learned initial state ``u0`` of length ``K``.
    """

    rbm: Rbm
    u_bias: np.ndarray
    w_uv: np.ndarray
    w_uh: np.ndarray
    w_vu: np.ndarray
    w_uu: np.ndarray
    u0: np.ndarray

    @property
    def n_visible(self) -> int:
        return self.rbm.n_visible

    @property
    def n_hidden(self) -> int:
        return self.rbm.n_hidden

    @property
    def u_dim(self) -> int:
        return self.u_bias.shape[0]

    @staticmethod
    def random(n_visible: int, n_hidden: int, rng: RngStream,
               u_dim: int | None = None, weight_sd: float = 0.01) -> "RnnRbm":
        """Small Gaussian weights, zero biases, uniform initial state."""
        k = n_hidden if u_dim is None else u_dim
        if k < 1:
            raise ValueError("state dimension must be >= 1")
        rbm = Rbm.random(n_visible, n_hidden, rng, weight_sd)
        model = RnnRbm(
            rbm=rbm,
            u_bias=np.zeros(k),
            w_uv=rng.normal(sd=weight_sd, size=(k, n_visible)),
            w_uh=rng.normal(sd=weight_sd, size=(k, n_hidden)),
            w_vu=rng.normal(sd=weight_sd, size=(n_visible, k)),
            w_uu=rng.normal(sd=weight_sd, size=(k, k)),
            u0=np.clip(rng.uniform(size=k), U0_MARGIN, 1.0 - U0_MARGIN),
        )
        return model

    @staticmethod
    def zeros(n_visible: int, n_hidden: int, u_dim: int | None = None) -> "RnnRbm":
        k = n_hidden if u_dim is None else u_dim
        return RnnRbm(Rbm.zeros(n_visible, n_hidden), np.zeros(k),
                      np.zeros((k, n_visible)), np.zeros((k, n_hidden)),
                      np.zeros((n_visible, k)), np.zeros((k, k)),
                      np.full(k, 0.5))

    def copy(self) -> "RnnRbm":
        return RnnRbm(self.rbm.copy(), self.u_bias.copy(), self.w_uv.copy(),
                      self.w_uh.copy(), self.w_vu.copy(), self.w_uu.copy(),
                      self.u0.copy())

    def validate(self):
        self.rbm.validate()
        i, j, k = self.n_visible, self.n_hidden, self.u_dim
        expected = {"w_uv": (k, i), "w_uh": (k, j), "w_vu": (i, k),
                    "w_uu": (k, k), "u0": (k,)}
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise DimensionError(
                    f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"non-finite values in {name}")
        if not np.all(np.isfinite(self.u_bias)):
            raise FloatingPointError("non-finite values in u_bias")
        if self.u0.min() <= 0.0 or self.u0.max() >= 1.0:
            raise FloatingPointError("initial state left the open unit interval")

    def arrays(self) -> dict:
        return {"b": self.rbm.b, "c": self.rbm.c, "W": self.rbm.W,
                "u_bias": self.u_bias, "w_uv": self.w_uv, "w_uh": self.w_uh,
                "w_vu": self.w_vu, "w_uu": self.w_uu, "u0": self.u0}


@dataclass
class RnnRbmGradient:
    """One gradient entry per parameter group, ascent direction."""

    db: np.ndarray
    dc: np.ndarray
    dW: np.ndarray
    du: np.ndarray
    dw_uv: np.ndarray
    dw_uh: np.ndarray
    dw_vu: np.ndarray
    dw_uu: np.ndarray
    du0: np.ndarray

    _FIELDS = ("db", "dc", "dW", "du", "dw_uv", "dw_uh", "dw_vu", "dw_uu", "du0")

    @staticmethod
    def zeros(model: RnnRbm) -> "RnnRbmGradient":
        return RnnRbmGradient(
            np.zeros_like(model.rbm.b), np.zeros_like(model.rbm.c),
            np.zeros_like(model.rbm.W), np.zeros_like(model.u_bias),
            np.zeros_like(model.w_uv), np.zeros_like(model.w_uh),
            np.zeros_like(model.w_vu), np.zeros_like(model.w_uu),
            np.zeros_like(model.u0))

    def add_(self, other: "RnnRbmGradient") -> "RnnRbmGradient":
        for f in self._FIELDS:
            getattr(self, f).__iadd__(getattr(other, f))
        return self

    def scale_(self, s: float) -> "RnnRbmGradient":
        for f in self._FIELDS:
            getattr(self, f).__imul__(s)
        return self

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(getattr(self, f) ** 2)
                                 for f in self._FIELDS)))

    def clip_(self, max_norm: float) -> "RnnRbmGradient":
        n = self.norm()
        if n > max_norm:
            self.scale_(max_norm / n)
        return self


def _as_sequence(seq) -> np.ndarray:
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2:
        raise DimensionError(f"sequence must be (frames, dim), got {seq.shape}")
    return seq


def temporal_biases(model: RnnRbm, u_prev: np.ndarray):
    """Frame biases induced by the previous state."""
    u_prev = np.asarray(u_prev, dtype=np.float64)
    if u_prev.shape[-1] != model.u_dim:
        raise DimensionError(
            f"state has dimension {u_prev.shape[-1]}, expected {model.u_dim}")
    return model.rbm.b + u_prev @ model.w_uv, model.rbm.c + u_prev @ model.w_uh


def state_update(model: RnnRbm, u_prev: np.ndarray, v_t: np.ndarray) -> np.ndarray:
    """Next deterministic state after observing frame ``v_t``."""
    u_prev = np.asarray(u_prev, dtype=np.float64)
    v_t = np.asarray(v_t, dtype=np.float64)
    if v_t.shape[-1] != model.n_visible:
        raise DimensionError(
            f"frame has dimension {v_t.shape[-1]}, expected {model.n_visible}")
    return sigmoid(model.u_bias + u_prev @ model.w_uu + v_t @ model.w_vu)


def unroll(model: RnnRbm, seq):
    """States and per-frame biases along a sequence.

    Returns ``(U, B, C)`` where ``U[t]`` is the state after ``t`` frames
    (``U[0]`` is the learned initial state, so ``U`` has ``T + 1`` rows)
    and ``B[t] / C[t]`` are the biases used for frame ``t``.
    """
    seq = _as_sequence(seq)
    t_len = seq.shape[0]
    k = model.u_dim
    U = np.empty((t_len + 1, k))
    B = np.empty((t_len, model.n_visible))
    C = np.empty((t_len, model.n_hidden))
    U[0] = model.u0
    for t in range(t_len):
        B[t], C[t] = temporal_biases(model, U[t])
        U[t + 1] = state_update(model, U[t], seq[t])
    return U, B, C


def _guard_seq_exact(model: RnnRbm):
    if model.n_visible + model.n_hidden > SEQ_ENUM_LIMIT:
        raise CapacityError(
            f"exact sequence computations limited to {SEQ_ENUM_LIMIT} total "
            f"units, model has {model.n_visible + model.n_hidden}")


def sequence_cost_exact(model: RnnRbm, seq) -> float:
    """Exact negative log-likelihood of one sequence (tiny models only)."""
    _guard_seq_exact(model)
    seq = _as_sequence(seq)
    _, B, C = unroll(model, seq)
    states = all_states(model.n_visible)
    sw = states @ model.rbm.W
    cost = 0.0
    for t in range(seq.shape[0]):
        log_unnorm = states @ B[t] + np.sum(np.logaddexp(0.0, sw + C[t]), axis=1)
        log_z = logsumexp(log_unnorm)
        data_term = seq[t] @ B[t] + np.sum(
            np.logaddexp(0.0, seq[t] @ model.rbm.W + C[t]))
        cost -= data_term - log_z
    return float(cost)


def _chain_through_state(model: RnnRbm, seq: np.ndarray, U: np.ndarray,
                         DB: np.ndarray, DC: np.ndarray,
                         dW_sum: np.ndarray) -> RnnRbmGradient:
    """Push per-frame bias/weight partials through the state recursion.

    Orientation-agnostic: feeds ascent partials in, gets ascent out, and
    likewise for descent.  ``DB[t] / DC[t]`` are the partials wrt the
    frame-``t`` biases; ``dW_sum`` is the summed weight partial.
    """
    g = RnnRbmGradient.zeros(model)
    g.db = DB.sum(axis=0)
    g.dc = DC.sum(axis=0)
    g.dW = dW_sum
    g.dw_uv = U[:-1].T @ DB
    g.dw_uh = U[:-1].T @ DC
    gu = np.zeros(model.u_dim)
    for t in range(seq.shape[0] - 1, -1, -1):
        u_next = U[t + 1]
        ga = gu * u_next * (1.0 - u_next)
        g.du += ga
        g.dw_uu += np.outer(U[t], ga)
        g.dw_vu += np.outer(seq[t], ga)
        gu = DB[t] @ model.w_uv.T + DC[t] @ model.w_uh.T + ga @ model.w_uu.T
    g.du0 = gu
    return g


def sequence_cost_gradient_exact(model: RnnRbm, seq) -> RnnRbmGradient:
    """Exact gradient of :func:`sequence_cost_exact` (descent direction).

    Per-frame partials come from full enumeration of the conditional
    RBM at each step; the recursion chaining is shared with the
    stochastic estimator, so finite-difference agreement here validates
    both.
    """
    _guard_seq_exact(model)
    seq = _as_sequence(seq)
    t_len = seq.shape[0]
    U, B, C = unroll(model, seq)
    states = all_states(model.n_visible)
    sw = states @ model.rbm.W
    DB = np.empty((t_len, model.n_visible))
    DC = np.empty((t_len, model.n_hidden))
    dW = np.zeros_like(model.rbm.W)
    for t in range(t_len):
        log_unnorm = states @ B[t] + np.sum(np.logaddexp(0.0, sw + C[t]), axis=1)
        p = np.exp(log_unnorm - logsumexp(log_unnorm))
        cond = sigmoid(sw + C[t])
        h_data = sigmoid(seq[t] @ model.rbm.W + C[t])
        DB[t] = p @ states - seq[t]
        DC[t] = p @ cond - h_data
        dW += states.T @ (cond * p[:, None]) - np.outer(seq[t], h_data)
    return _chain_through_state(model, seq, U, DB, DC, dW)


def _sequence_bptt_cd(model: RnnRbm, seq: np.ndarray, cfg: CdConfig,
                      rng: RngStream) -> RnnRbmGradient:
    """CD-based ascent gradient for one sequence, chained through time."""
    t_len = seq.shape[0]
    U, B, C = unroll(model, seq)
    DB = np.empty((t_len, model.n_visible))
    DC = np.empty((t_len, model.n_hidden))
    dW = np.zeros_like(model.rbm.W)
    for t in range(t_len):
        frame_rbm = Rbm(B[t], C[t], model.rbm.W)
        g = cd_step(frame_rbm, seq[t][None, :], cfg, rng.split(t))
        DB[t] = g.db
        DC[t] = g.dc
        dW += g.dW
    return _chain_through_state(model, seq, U, DB, DC, dW)


def bptt_gradients(model: RnnRbm, batch, cfg: CdConfig,
                   rng: RngStream) -> RnnRbmGradient:
    """Mean ascent gradient over a batch of sequences.

    Sequence ``s`` draws from ``rng.split(s)`` and frame ``t`` within it
    from a further ``split(t)``, so a given batch is reproducible from
    its stream alone.  Normalised by the total number of frames.
    """
    if len(batch) == 0:
        raise ValueError("empty sequence batch")
    total = RnnRbmGradient.zeros(model)
    frames = 0
    for s, seq in enumerate(batch):
        seq = _as_sequence(seq)
        if seq.shape[0] < 1:
            raise ValueError("sequences must have at least one frame")
        if seq.shape[1] != model.n_visible:
            raise DimensionError(
                f"sequence dimension {seq.shape[1]} does not match model "
                f"visible size {model.n_visible}")
        total.add_(_sequence_bptt_cd(model, seq, cfg, rng.split(s)))
        frames += seq.shape[0]
    return total.scale_(1.0 / frames)


def _mean_field_marginals(W: np.ndarray, b_next: np.ndarray,
                          c_next: np.ndarray) -> np.ndarray:
    """Alternating mean-field passes from the uninformative 1/2 start."""
    v = np.full(b_next.shape, 0.5)
    for _ in range(MEAN_FIELD_PASSES):
        h = sigmoid(c_next + v @ W)
        v = sigmoid(b_next + h @ W.T)
    return v


def predict_next(model: RnnRbm, prefix) -> np.ndarray:
    """Marginal prediction for the frame after ``prefix``.

    An empty prefix predicts from the learned initial state.  The
    conditional RBM at the next step is summarised by mean-field
    marginals, which for a zero-parameter model is exactly 1/2 per bit.
    """
    prefix = np.asarray(prefix, dtype=np.float64)
    if prefix.size == 0:
        prefix = np.zeros((0, model.n_visible))
    U, _, _ = unroll(model, prefix)
    b_next, c_next = temporal_biases(model, U[-1])
    return _mean_field_marginals(model.rbm.W, b_next, c_next)


def next_frame_predictions(model: RnnRbm, seq) -> np.ndarray:
    """Marginal predictions for frames ``2..T`` of one sequence.

    Vectorised equivalent of calling :func:`predict_next` on every
    proper prefix; rows align with ``seq[1:]``.
    """
    seq = _as_sequence(seq)
    if seq.shape[0] < 2:
        return np.zeros((0, model.n_visible))
    U, B, C = unroll(model, seq)
    return _mean_field_marginals(model.rbm.W, B[1:], C[1:])


def sample_sequence(model: RnnRbm, length: int, rng: RngStream) -> np.ndarray:
    """Generate ``length`` frames by sampling each predicted marginal and
    feeding the sample back through the state update."""
    if length < 0:
        raise ValueError("length must be >= 0")
    frames = np.zeros((length, model.n_visible))
    u = model.u0
    for t in range(length):
        b_next, c_next = temporal_biases(model, u)
        p = _mean_field_marginals(model.rbm.W, b_next, c_next)
        frames[t] = sample_bernoulli(p, rng)
        u = state_update(model, u, frames[t])
    return frames


def mean_sequence_energy(model: RnnRbm, sequences) -> float:
    """Mean conditional expected frame energy with temporal biases."""
    total = 0.0
    frames = 0
    for seq in sequences:
        seq = _as_sequence(seq)
        _, B, C = unroll(model, seq)
        pre = C + seq @ model.rbm.W
        h = sigmoid(pre)
        e = -np.sum(seq * B, axis=1) - np.sum(h * pre, axis=1)
        total += float(e.sum())
        frames += seq.shape[0]
    return total / frames


def mean_hidden_activation(model: RnnRbm, sequences) -> np.ndarray:
    """Per-unit mean of ``p(h_j = 1 | v_t)`` over all frames."""
    acc = np.zeros(model.n_hidden)
    frames = 0
    for seq in sequences:
        seq = _as_sequence(seq)
        _, _, C = unroll(model, seq)
        acc += sigmoid(C + seq @ model.rbm.W).sum(axis=0)
        frames += seq.shape[0]
    return acc / frames


def prediction_error(model: RnnRbm, sequences) -> float:
    """Pooled next-frame cross-entropy per bit over frames ``2..T``."""
    pool = PooledMetrics()
    for seq in sequences:
        seq = _as_sequence(seq)
        if seq.shape[0] >= 2:
            pool.add(next_frame_predictions(model, seq), seq[1:])
    return float("nan") if pool.empty else pool.cross_entropy()


def grow_hidden(model: RnnRbm, stats: GradientStats, cfg: AdaptConfig,
                rng: RngStream):
    """Growth sweep that keeps ``w_uh`` aligned with the hidden layer.

    Columns for fresh units are drawn small rather than copied: the new
    unit inherits the parent's detector but starts with its own weak
    temporal preferences.  Returns ``(model, stats, parents)``.
    """
    rbm2, stats2, parents = maybe_generate(model.rbm, stats, cfg, rng)
    if not parents:
        return model, stats, []
    # w_uh is (K, J), so hidden units are columns here as well
    new_cols = [rng.normal(sd=0.01, size=model.u_dim) for _ in parents]
    grown = RnnRbm(rbm=rbm2, u_bias=model.u_bias.copy(),
                   w_uv=model.w_uv.copy(),
                   w_uh=insert_columns(model.w_uh, parents, new_cols),
                   w_vu=model.w_vu.copy(), w_uu=model.w_uu.copy(),
                   u0=model.u0.copy())
    return grown, stats2, parents


def shrink_hidden(model: RnnRbm, stats: GradientStats, mask: np.ndarray):
    """Remove masked hidden units from the RBM and ``w_uh`` together."""
    from .adapt import apply_annihilation

    rbm2, stats2 = apply_annihilation(model.rbm, stats, mask)
    keep = ~np.asarray(mask, dtype=bool)
    return RnnRbm(rbm=rbm2, u_bias=model.u_bias.copy(),
                  w_uv=model.w_uv.copy(), w_uh=model.w_uh[:, keep],
                  w_vu=model.w_vu.copy(), w_uu=model.w_uu.copy(),
                  u0=model.u0.copy()), stats2


@dataclass
class RnnTrainState:
    """Resume point captured at an epoch boundary."""

    epoch_done: int
    model: RnnRbm
    stats: GradientStats
    controller: dict


def _apply_update(model: RnnRbm, g: RnnRbmGradient, lr: float):
    model.rbm.b += lr * g.db
    model.rbm.c += lr * g.dc
    model.rbm.W += lr * g.dW
    model.u_bias += lr * g.du
    model.w_uv += lr * g.dw_uv
    model.w_uh += lr * g.dw_uh
    model.w_vu += lr * g.dw_vu
    model.w_uu += lr * g.dw_uu
    model.u0 += lr * g.du0
    np.clip(model.u0, U0_MARGIN, 1.0 - U0_MARGIN, out=model.u0)


def _check_finite_rnn(model: RnnRbm):
    try:
        model.validate()
    except FloatingPointError as exc:
        raise NumericError(str(exc)) from exc


def train_adaptive_rnn_rbm(sequences, n_hidden: int, cd: CdConfig,
                           epochs: int, rng: RngStream,
                           adapt: AdaptConfig | None = None,
                           forget: ForgettingConfig | None = None,
                           u_dim: int | None = None,
                           init_model: RnnRbm | None = None,
                           layer: int = 1, n_layers: int = 1,
                           log: TrainLog | None = None,
                           first_event: str | None = None,
                           resume: RnnTrainState | None = None,
                           epoch_callback=None):
    """Adaptive training loop for one recurrent layer.

    Structure of an epoch: shuffled sequence batches with clipped SGD
    updates (plus any active forgetting penalties), then at the epoch
    boundary one growth or pruning sweep, then metrics over the training
    set.  ``rng`` is the layer root stream; see the static trainer for
    the split layout, which this mirrors so resumed runs are
    bit-identical with uninterrupted ones.

    Returns ``(model, stats, log)``.
    """
    sequences = [_as_sequence(s) for s in sequences]
    if not sequences:
        raise ValueError("no training sequences")
    for s in sequences:
        if s.shape[0] < 1:
            raise ValueError("sequences must have at least one frame")
        if s.shape[1] != sequences[0].shape[1]:
            raise DimensionError("sequences disagree on frame dimension")
    log = log if log is not None else TrainLog()
    decay = adapt.stats_decay if adapt is not None else 0.9

    if resume is not None:
        model = resume.model.copy()
        stats = resume.stats.copy()
        controller = StructureController(adapt, forget, epochs)
        controller.restore(resume.controller)
        start_epoch = resume.epoch_done + 1
    else:
        if init_model is not None:
            model = init_model.copy()
        else:
            model = RnnRbm.random(sequences[0].shape[1], n_hidden,
                                  rng.split(0), u_dim=u_dim)
        stats = GradientStats.zeros(model.n_visible, model.n_hidden, decay)
        controller = StructureController(adapt, forget, epochs)
        start_epoch = 0

    for epoch in range(start_epoch, epochs):
        ep = rng.split(epoch + 1)
        order = ep.permutation(len(sequences))
        modes = controller.forgetting_modes(epoch)
        for bi in range(0, len(order), cd.batch_size):
            idx = order[bi:bi + cd.batch_size]
            batch = [sequences[i] for i in idx]
            g = bptt_gradients(model, batch, cd, ep.split(bi // cd.batch_size + 1))
            if modes:
                acts = mean_hidden_activation(model, batch)
                for mode in modes:
                    pen = forgetting_gradient(model.rbm, mode, forget, acts)
                    g.db += pen.db
                    g.dc += pen.dc
                    g.dW += pen.dW
            stats.update(g.dc, g.dW)
            g.clip_(GRAD_CLIP)
            _apply_update(model, g, cd.learning_rate)

        events = []
        if first_event and epoch == 0:
            events.append(first_event)
        phase = controller.structure_phase(epoch)
        if phase == "generate" and adapt is not None:
            scores = generation_scores(stats, adapt)
            model2, stats2, parents = grow_hidden(model, stats, adapt,
                                                  ep.split(0))
            for j in parents:
                events.append(format_generation_event(j, scores[j]))
            controller.record_generation(len(parents))
            model, stats = model2, stats2
        elif phase == "annihilate" and adapt is not None:
            mean_act = mean_hidden_activation(model, sequences)
            mask = mask_from_activations(mean_act, adapt)
            if mask.any():
                for j in np.flatnonzero(mask):
                    events.append(format_annihilation_event(int(j),
                                                            mean_act[j]))
                model, stats = shrink_hidden(model, stats, mask)

        _check_finite_rnn(model)
        log.append(LogRow(
            epoch=epoch + 1, layer=layer,
            energy=mean_sequence_energy(model, sequences),
            error=prediction_error(model, sequences),
            wd_c=float(stats.var_c().sum()), wd_w=float(stats.var_w().sum()),
            n_hidden=model.n_hidden, n_layers=n_layers,
            event=join_events(events)))
        if epoch_callback is not None:
            epoch_callback(RnnTrainState(epoch, model.copy(), stats.copy(),
                                         controller.snapshot()))

    return model, stats, log
