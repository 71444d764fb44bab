"""Structure adaptation: hidden-unit growth, pruning, and forgetting.

Growth is driven by the *variance* of recent gradients.  A hidden unit
whose bias gradient and incoming weight gradients keep fluctuating after
the optimizer has had time to settle is treated as overloaded: it is
trying to represent more than one feature.  Such a unit is split into
two near-copies, halving its load.  Pruning removes units whose mean
activation over the data has collapsed toward zero, since a unit that
never switches on contributes nothing the visible bias could not.

Forgetting penalties sparsify a trained model: a constant-magnitude pull
toward zero on the weights (optionally only on weights that are already
large) and a push on the hidden biases that drives each unit's
activation away from the undecided region around 1/2.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StructureError
from .numerics import RngStream
from .rbm import Rbm, RbmGradient


@dataclass
class AdaptConfig:
    """Hidden-unit growth and pruning hyperparameters.

    ``c_gain`` and ``w_gain`` scale the two variance factors of the
    growth score; ``gen_threshold`` is the score a unit must exceed to be
    split, and ``ann_threshold`` is the mean activation below which a
    unit is removed.  ``generation_phase_epochs`` bounds how long growth
    checks run; pruning checks start once growth has finished.
    """

    generation_phase_epochs: int
    max_hidden: int
    c_gain: float = 1.0
    w_gain: float = 1.0
    gen_threshold: float = 0.001
    ann_threshold: float = 0.1
    min_hidden: int = 1
    split_noise_sd: float = 0.01
    stats_decay: float = 0.9

    def __post_init__(self):
        if self.generation_phase_epochs < 0:
            raise ValueError("generation_phase_epochs must be >= 0")
        if self.c_gain <= 0 or self.w_gain <= 0:
            raise ValueError("variance gains must be positive")
        if self.gen_threshold <= 0:
            raise ValueError("gen_threshold must be positive")
        if not 0.0 < self.ann_threshold < 1.0:
            raise ValueError("ann_threshold must lie in (0, 1)")
        if self.min_hidden < 1:
            raise ValueError("min_hidden must be >= 1")
        if self.max_hidden < self.min_hidden:
            raise ValueError("max_hidden must be >= min_hidden")
        if self.split_noise_sd < 0:
            raise ValueError("split_noise_sd must be >= 0")
        if not 0.0 < self.stats_decay < 1.0:
            raise ValueError("stats_decay must lie in (0, 1)")


@dataclass
class ForgettingConfig:
    """Sparsification penalty strengths and schedule.

    The three strengths are deliberately capped at 0.01: these penalties
    are meant to be weak nudges applied alongside the data gradient, not
    competing objectives.
    """

    decay_strength: float = 0.001
    clarify_strength: float = 0.001
    selective_strength: float = 0.001
    selective_cutoff: float = 0.1
    forgetting_epochs: int = 0
    selective_epochs: int = 0

    _CAP = 0.01

    def __post_init__(self):
        for name in ("decay_strength", "clarify_strength", "selective_strength"):
            val = getattr(self, name)
            if not 0.0 <= val <= self._CAP:
                raise ValueError(f"{name} must lie in [0, {self._CAP}]")
        if self.selective_cutoff <= 0:
            raise ValueError("selective_cutoff must be positive")
        if self.forgetting_epochs < 0 or self.selective_epochs < 0:
            raise ValueError("epoch counts must be >= 0")


@dataclass
class GradientStats:
    """Exponential moving first and second moments of recent gradients.

    Tracks the hidden-bias gradient per unit and the weight gradient per
    connection.  ``var_*`` return the centred second moment, the
    fluctuation measure the growth score is built on.
    """

    mean_c: np.ndarray
    sq_c: np.ndarray
    mean_w: np.ndarray
    sq_w: np.ndarray
    decay: float = 0.9
    count: int = 0

    @staticmethod
    def zeros(n_visible: int, n_hidden: int, decay: float = 0.9) -> "GradientStats":
        return GradientStats(
            mean_c=np.zeros(n_hidden),
            sq_c=np.zeros(n_hidden),
            mean_w=np.zeros((n_visible, n_hidden)),
            sq_w=np.zeros((n_visible, n_hidden)),
            decay=decay,
        )

    def update(self, dc: np.ndarray, dW: np.ndarray):
        if dc.shape != self.mean_c.shape or dW.shape != self.mean_w.shape:
            raise ValueError("gradient shape does not match tracked statistics")
        lam = self.decay
        self.mean_c = lam * self.mean_c + (1 - lam) * dc
        self.sq_c = lam * self.sq_c + (1 - lam) * dc ** 2
        self.mean_w = lam * self.mean_w + (1 - lam) * dW
        self.sq_w = lam * self.sq_w + (1 - lam) * dW ** 2
        self.count += 1

    def var_c(self) -> np.ndarray:
        return np.maximum(self.sq_c - self.mean_c ** 2, 0.0)

    def var_w(self) -> np.ndarray:
        return np.maximum(self.sq_w - self.mean_w ** 2, 0.0)

    def copy(self) -> "GradientStats":
        return GradientStats(self.mean_c.copy(), self.sq_c.copy(),
                             self.mean_w.copy(), self.sq_w.copy(),
                             self.decay, self.count)

    def insert_hidden(self, parents) -> "GradientStats":
        """Zero-initialised slots for freshly split units, parent order."""
        return GradientStats(
            mean_c=insert_entries(self.mean_c, parents, 0.0),
            sq_c=insert_entries(self.sq_c, parents, 0.0),
            mean_w=insert_columns(self.mean_w, parents, None),
            sq_w=insert_columns(self.sq_w, parents, None),
            decay=self.decay,
            count=self.count,
        )

    def remove_hidden(self, mask: np.ndarray) -> "GradientStats":
        keep = ~np.asarray(mask, dtype=bool)
        return GradientStats(self.mean_c[keep], self.sq_c[keep],
                             self.mean_w[:, keep], self.sq_w[:, keep],
                             self.decay, self.count)


def generation_scores(stats: GradientStats, cfg: AdaptConfig) -> np.ndarray:
    """Per-unit growth score: scaled bias-gradient variance times the
    mean scaled variance of the unit's incoming weight gradients."""
    vc = cfg.c_gain * stats.var_c()
    vw = np.mean(cfg.w_gain * stats.var_w(), axis=0)
    return vc * vw


def generation_score(stats: GradientStats, cfg: AdaptConfig, j: int) -> float:
    return float(generation_scores(stats, cfg)[j])


def insert_entries(vec: np.ndarray, parents, child_values) -> np.ndarray:
    """Insert one entry directly after each parent index.

    ``child_values`` is a sequence aligned with ``parents``, or a scalar
    used for every child.
    """
    parents = list(parents)
    scalar = np.isscalar(child_values) or child_values is None
    out = []
    for j in range(vec.shape[0]):
        out.append(vec[j])
        if j in parents:
            if scalar:
                out.append(0.0 if child_values is None else child_values)
            else:
                out.append(child_values[parents.index(j)])
    return np.asarray(out, dtype=np.float64)


def insert_columns(mat: np.ndarray, parents, child_columns) -> np.ndarray:
    """Column counterpart of :func:`insert_entries`.

    ``child_columns`` is a list aligned with ``parents``; ``None`` means
    zero columns.  Used to keep every per-hidden-unit array in the model
    laid out identically after a split.
    """
    parents = list(parents)
    cols = []
    for j in range(mat.shape[1]):
        cols.append(mat[:, j])
        if j in parents:
            if child_columns is None:
                cols.append(np.zeros(mat.shape[0]))
            else:
                cols.append(np.asarray(child_columns[parents.index(j)],
                                       dtype=np.float64))
    return np.column_stack(cols)


def maybe_generate(rbm: Rbm, stats: GradientStats, cfg: AdaptConfig,
                   rng: RngStream):
    """One growth sweep.  Returns ``(rbm, stats, parent_indices)``.

    Scores are computed on the pre-edit structure; each triggered unit
    gets a child inserted directly after it whose bias and weight column
    copy the parent plus Gaussian noise.  Children never trigger within
    the sweep that created them, and the sweep stops adding children once
    ``max_hidden`` is reached.  With no triggers the inputs are returned
    unchanged and no randomness is consumed.
    """
    scores = generation_scores(stats, cfg)
    triggered = [j for j in range(rbm.n_hidden) if scores[j] > cfg.gen_threshold]
    room = cfg.max_hidden - rbm.n_hidden
    parents = triggered[:max(0, room)]
    if not parents:
        return rbm, stats, []

    child_c = []
    child_cols = []
    for j in parents:
        child_c.append(rbm.c[j] + rng.normal(sd=cfg.split_noise_sd))
        child_cols.append(rbm.W[:, j]
                          + rng.normal(sd=cfg.split_noise_sd, size=rbm.n_visible))

    grown = Rbm(
        b=rbm.b.copy(),
        c=insert_entries(rbm.c, parents, child_c),
        W=insert_columns(rbm.W, parents, child_cols),
    )
    return grown, stats.insert_hidden(parents), parents


def mask_from_activations(mean_act: np.ndarray, cfg: AdaptConfig) -> np.ndarray:
    """Pruning mask from per-unit mean activations.

    Marks units strictly below ``ann_threshold``; if that would leave
    fewer than ``min_hidden`` units, the most active marked units are
    retained (ties keep the lower index).
    """
    mean_act = np.asarray(mean_act, dtype=np.float64)
    mask = mean_act < cfg.ann_threshold
    keep = mean_act.shape[0] - int(mask.sum())
    if keep < cfg.min_hidden:
        need = cfg.min_hidden - keep
        marked = np.flatnonzero(mask)
        order = marked[np.argsort(-mean_act[marked], kind="stable")]
        mask[order[:need]] = False
    return mask


def annihilation_mask(rbm: Rbm, sample: np.ndarray, cfg: AdaptConfig) -> np.ndarray:
    """Pruning mask for a static model, activations averaged over ``sample``."""
    from .rbm import hidden_conditional

    sample = np.atleast_2d(np.asarray(sample, dtype=np.float64))
    if sample.shape[0] == 0:
        raise ValueError("empty activation sample")
    mean_act = hidden_conditional(rbm, sample).mean(axis=0)
    return mask_from_activations(mean_act, cfg)


def apply_annihilation(rbm: Rbm, stats: GradientStats, mask: np.ndarray):
    """Drop the masked hidden units from the model and its statistics."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[0] != rbm.n_hidden:
        raise ValueError("mask length does not match hidden layer size")
    if mask.all():
        raise StructureError("refusing to remove every hidden unit; "
                             "raise min_hidden instead")
    keep = ~mask
    pruned = Rbm(rbm.b.copy(), rbm.c[keep], rbm.W[:, keep])
    return pruned, stats.remove_hidden(mask)


def forgetting_gradient(rbm: Rbm, mode: str, cfg: ForgettingConfig,
                        hidden_activations=None) -> RbmGradient:
    """Ascent-direction contribution of one forgetting penalty.

    ``decay``     constant pull of every weight toward zero.
    ``clarify``   pushes each unit's mean activation away from 1/2;
                  needs ``hidden_activations`` (per-unit means in (0,1)).
    ``selective`` decay applied only to weights at or above
                  ``selective_cutoff`` in magnitude, sparing weights that
                  are already small.
    """
    g = RbmGradient.zeros(rbm)
    if mode == "decay":
        g.dW = -cfg.decay_strength * np.sign(rbm.W)
    elif mode == "clarify":
        if hidden_activations is None:
            raise ValueError("clarify mode needs hidden activations")
        h = np.asarray(hidden_activations, dtype=np.float64)
        if h.shape != rbm.c.shape:
            raise ValueError("activation vector must have one entry per hidden unit")
        # derivative of min(h, 1-h) wrt the pre-activation, sign chosen to
        # shrink the penalty; steepest exactly at h = 1/2
        slope = np.where(h <= 0.5, 1.0, -1.0)
        g.dc = -cfg.clarify_strength * slope * h * (1.0 - h)
    elif mode == "selective":
        large = np.abs(rbm.W) >= cfg.selective_cutoff
        g.dW = np.where(large, -cfg.selective_strength * np.sign(rbm.W), 0.0)
    else:
        raise ValueError(f"unknown forgetting mode: {mode!r}")
    return g


class StructureController:
    """Epoch-boundary schedule shared by all adaptive trainers.

    Growth checks run first and finish when the phase budget is spent or
    when no unit has triggered for ``STALL_LIMIT`` consecutive epochs;
    pruning checks run every epoch after that.  Forgetting penalties
    occupy the tail of the run: plain decay plus clarify first, then
    selective decay plus clarify for the final epochs.
    """

    STALL_LIMIT = 5

    def __init__(self, adapt: AdaptConfig | None,
                 forget: ForgettingConfig | None, total_epochs: int):
        self.adapt = adapt
        self.forget = forget
        self.total_epochs = total_epochs
        self.generation_done = adapt is None
        self.stall = 0

    def structure_phase(self, epoch: int) -> str:
        """``'generate'``, ``'annihilate'`` or ``'static'`` for this epoch."""
        if self.adapt is None:
            return "static"
        if not self.generation_done and epoch >= self.adapt.generation_phase_epochs:
            self.generation_done = True
        return "annihilate" if self.generation_done else "generate"

    def record_generation(self, n_new: int):
        if n_new > 0:
            self.stall = 0
        else:
            self.stall += 1
            if self.stall >= self.STALL_LIMIT:
                self.generation_done = True

    def forgetting_modes(self, epoch: int) -> tuple:
        """Penalty modes active at this epoch, possibly empty."""
        if self.forget is None:
            return ()
        f, s = self.forget.forgetting_epochs, self.forget.selective_epochs
        sel_start = max(0, self.total_epochs - s)
        dec_start = max(0, self.total_epochs - s - f)
        if s > 0 and epoch >= sel_start:
            return ("selective", "clarify")
        if f > 0 and epoch >= dec_start:
            return ("decay", "clarify")
        return ()

    def snapshot(self) -> dict:
        return {"generation_done": self.generation_done, "stall": self.stall}

    def restore(self, state: dict):
        self.generation_done = bool(state["generation_done"])
        self.stall = int(state["stall"])
