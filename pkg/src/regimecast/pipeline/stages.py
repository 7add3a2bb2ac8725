"""Four-stage training pipeline, ablation variants, and evaluation.

Stage 1 trains the autoencoder on stable (low-VIX) training days; stage 2
trains the pathway transformers on their routed subsets with the composite
loss; stage 3 trains the SAC controller against the frozen prediction stack;
stage 4 fine-tunes everything at reduced learning rates.  Evaluation replays
a split day by day with all weights frozen, letting the policy's
state-dependent outputs move (tau, alpha).
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator

from ..control import (
    SacController,
    apply_action,
    build_state,
    compute_reward,
    run_controller_training,
)
from ..errors import CheckpointError, ConfigError, DataError, OrderingError
from ..evalsuite import (
    EvalReport,
    PredictionSet,
    attach_baselines,
    compute_metrics,
    regime_breakdown,
)
from ..marketdata.indicators import CLOSE_INDEX, compute_indicators
from ..marketdata.normalize import normalize_panel
from ..marketdata.panel import OhlcvPanel, impute
from ..nodeformer import (
    EventContextBuilder,
    PathwayConfig,
    PathwayModel,
    composite_loss,
    gated_blend,
    init_edges,
    true_direction,
)
from ..numcore import AdamState, Tape, Tensor, adam_step, backward
from ..regime import RegimeAutoencoder, percentile, route, stable_day_mask
from ..rng import RngHub
from ..synthgen import generate
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, config_hash
from .splits import split_chronological

VARIANT_STAGES = {
    "full": (1, 2, 3, 4),
    "no-sac": (1, 2),
    "no-dual": (1, 2, 3, 4),
    "no-ae": (2,),
}
EVAL_BURNIN = 6


def configure_ablation(config: RunConfig, variant: str) -> RunConfig:
    if variant not in VARIANT_STAGES:
        raise ConfigError(f"unknown ablation variant {variant!r}")
    cfg = config.copy()
    cfg.ablation = variant
    return cfg.validate()


def _slice_panel(panel: OhlcvPanel, end: int) -> OhlcvPanel:
    return replace(
        panel, dates=list(panel.dates[:end]), open=panel.open[:end],
        high=panel.high[:end], low=panel.low[:end], close=panel.close[:end],
        volume=panel.volume[:end], present=panel.present[:end],
        vix=None if panel.vix is None else panel.vix[:end],
        sentiment=None if panel.sentiment is None else panel.sentiment[:end],
        post_velocity=(None if panel.post_velocity is None
                       else panel.post_velocity[:end]),
        regimes=None if panel.regimes is None else panel.regimes[:end],
        event_flags=None if panel.event_flags is None else panel.event_flags[:end],
    )


def impute_split(panel: OhlcvPanel, train_end: int) -> OhlcvPanel:
    """Train-mode imputation inside the training split, forward-fill after."""
    filled = impute(panel, "eval")
    head = impute(_slice_panel(panel, train_end), "train")
    for name in ("open", "high", "low", "close", "volume"):
        getattr(filled, name)[:train_end] = getattr(head, name)
    return filled


def _trailing_close_stats(close: np.ndarray, window: int = 20):
    """Trailing-window mean/std of each stock's close, per day (causal)."""
    n_days, n_stocks = close.shape
    mean = np.full_like(close, np.nan)
    std = np.ones_like(close)
    for t in range(n_days):
        lo = max(0, t - window + 1)
        seg = close[lo:t + 1]
        with np.errstate(invalid="ignore"):
            mean[t] = np.nanmean(seg, axis=0)
            s = np.nanstd(seg, axis=0)
        std[t] = np.where(np.isnan(s) | (s < 1e-8), 1.0, s)
    mean = np.where(np.isnan(mean), 0.0, mean)
    return mean, std


class ForecastSystem(BaseEstimator):
    """End-to-end system: fit() runs the staged protocol, predict() scores
    a split with frozen weights."""

    def __init__(self, config: RunConfig, log=None):
        self.config = config.validate()
        self.log = log if log is not None else (lambda msg: None)
        self.hub = RngHub(config.seed)
        self.stage_completed = 0
        self.stage_losses: dict = {}

    # ------------------------------------------------------------- data prep

    def prepare_data(self, panel: OhlcvPanel | None = None):
        cfg = self.config
        if panel is None:
            synth_cfg = replace(cfg.synth, seed=cfg.synth.seed + cfg.seed * 1000)
            synth = generate(synth_cfg)
            panel = synth.panel
        if panel.vix is None:
            raise DataError("pipeline needs the market series (vix, sentiment)")
        self.splits = split_chronological(
            panel.n_days, (cfg.train_fraction, cfg.valid_fraction,
                           cfg.test_fraction))
        panel = impute_split(panel, self.splits.train_end)
        feats = compute_indicators(panel)
        normalize_panel(feats, self.splits.train_end)
        self.panel = panel
        self.feats = feats
        self.normalized = feats.normalized
        self.sample_valid = feats.sample_valid()
        self.n_days, self.n_stocks = self.sample_valid.shape
        self.horizons = tuple(cfg.horizons)
        self.close_prices = feats.features[:, :, CLOSE_INDEX]
        # targets and metric units: per-stock z-scores anchored to a trailing
        # 20-day window (causal at prediction time, exactly invertible)
        self.close_mean, self.close_std = _trailing_close_stats(
            self.close_prices, window=20)

        self.stable_mask, self.vix_cutoff = stable_day_mask(
            panel.vix, self.splits.train_end, cfg.stable_vix_percentile)
        # market-level volatility feature for the controller state
        vol20_col = feats.router_names.index("vol_20")
        self.market_vol = feats.router_normalized[:, vol20_col]

        first_complete = int(np.argmax(self.sample_valid.all(axis=1)))
        if not self.sample_valid.all(axis=1)[first_complete]:
            raise DataError("no day with every stock valid; panel too short")
        logret = np.zeros((self.n_days, self.n_stocks))
        logret[1:] = np.log(self.close_prices[1:] / self.close_prices[:-1])
        train_rows = np.arange(first_complete, self.splits.train_end)
        self.edge_init = init_edges(panel.sector_codes(), logret[train_rows],
                                    train_rows, self.splits.train_end)
        self.first_usable_day = max(first_complete, cfg.pathway.seq_len - 1)
        self.errors = np.full((self.n_days, self.n_stocks), np.nan)
        self.tau_series = np.full(self.n_days, np.nan)
        return self

    # ----------------------------------------------------------- components

    def _pathway_config(self, variant: str, extra_dim: int = 0) -> PathwayConfig:
        p = self.config.pathway
        return PathwayConfig(
            variant=variant, n_stocks=self.n_stocks, feature_dim=17,
            extra_dim=extra_dim, d_model=p.d_model, n_layers=p.n_layers,
            n_heads=p.n_heads, d_ff=p.d_ff, dropout=p.dropout,
            stock_embed_dim=p.stock_embed_dim, horizons=self.horizons,
            seq_len=p.seq_len)

    def _ae_inputs(self) -> np.ndarray:
        router = np.repeat(self.feats.router_normalized[:, None, :],
                           self.n_stocks, axis=1)
        return np.concatenate([self.normalized, router], axis=2)

    def _detector_config(self):
        a = self.config.autoencoder
        return dict(input_dim=17 + 6, hidden_dim=a.hidden_dim,
                    latent_dim=a.latent_dim, lr=a.lr, batch_size=a.batch_size,
                    max_epochs=a.epochs, patience=a.patience,
                    val_fraction=a.val_fraction)

    # -------------------------------------------------------------- stage 1

    def stage1_autoencoder(self):
        cfg = self.config
        if cfg.ablation == "no-ae":
            raise OrderingError("the no-ae variant has no autoencoder stage")
        inputs = self._ae_inputs()
        train_end = self.splits.train_end
        row_mask = (self.sample_valid & self.stable_mask[:, None])
        row_mask[train_end:] = False
        days, stocks = np.nonzero(row_mask)
        if days.size == 0:
            raise DataError("empty stable training subset for the autoencoder")
        stable_rows = inputs[days, stocks]

        self.detector = RegimeAutoencoder(**self._detector_config())
        self.detector.fit(stable_rows, rng=self.hub.stream("ae"),
                          log=self.log)

        # reconstruction errors for every valid row, all splits
        all_days, all_stocks = np.nonzero(self.sample_valid)
        scores = self.detector.score_samples(inputs[all_days, all_stocks])
        self.errors = np.full((self.n_days, self.n_stocks), np.nan)
        self.errors[all_days, all_stocks] = scores

        train_sel = all_days < train_end
        train_errors = scores[train_sel]
        self.detector.training_errors_ = np.sort(train_errors)
        self.tau0 = percentile(train_errors, cfg.threshold_percentile)
        self.detector.threshold_ = self.tau0
        self.error_bounds = (percentile(train_errors, 1.0),
                             percentile(train_errors, 99.0))
        self.error_scale = self.tau0 if self.tau0 > 0 else 1.0
        self.normal_cut = percentile(train_errors, cfg.pathway.normal_percentile)
        self.event_cut = percentile(train_errors, cfg.pathway.event_percentile)
        self.tau = self.tau0
        self.alpha = 0.5
        self.tau_series[:] = self.tau0
        self.stage_losses["stage1"] = list(self.detector.train_losses_)
        self.stage_completed = max(self.stage_completed, 1)
        self.log(f"stage1 done: tau0={self.tau0:.5f} "
                 f"bounds=({self.error_bounds[0]:.5f}, {self.error_bounds[1]:.5f})")
        return self

    # -------------------------------------------------------------- stage 2

    def _context_arrays(self):
        builder = EventContextBuilder(self.panel, self.splits.train_end,
                                      error_scale=self.error_scale)
        cont = np.zeros((self.n_days, self.n_stocks, 8))
        for t in range(self.n_days):
            errors_today = self.errors[t]
            errors_today = np.where(np.isnan(errors_today), 0.0, errors_today)
            cont[t] = builder.build(t, errors_today).continuous
        self.context_builder = builder
        self.context_cont = cont
        self.context_labels = builder.labels.copy()

    def _training_days(self) -> np.ndarray:
        horizon = max(self.horizons)
        start = self.first_usable_day
        stop = self.splits.train_end - horizon
        days = [t for t in range(start, stop, self.config.pathway.window_stride)
                if self.sample_valid[t].any()]
        if not days:
            raise DataError("no usable training windows; panel too short")
        return np.asarray(days)

    def _window_indices(self, days) -> np.ndarray:
        seq = self.config.pathway.seq_len
        days = np.asarray(days)
        return days[:, None] + np.arange(-seq + 1, 1)[None, :]

    def _base_features(self, variant_extra: bool = False) -> np.ndarray:
        if not variant_extra:
            return self.normalized
        scaled = np.where(np.isnan(self.errors), 0.0,
                          self.errors / self.error_scale)
        flags = np.zeros_like(scaled)
        known = ~np.isnan(self.errors)
        tau_by_day = np.where(np.isnan(self.tau_series), self.tau0,
                              self.tau_series)
        flags[known] = (self.errors[known]
                        >= np.broadcast_to(tau_by_day[:, None],
                                           self.errors.shape)[known])
        return np.concatenate([self.normalized, scaled[..., None],
                               flags[..., None]], axis=2)

    def _targets_for(self, days):
        days = np.asarray(days)
        b, n = days.shape[0], self.n_stocks
        h = len(self.horizons)
        target_norm = np.zeros((b, n, h))
        target_price = np.zeros((b, n, h))
        directions = np.zeros((b, n, h))
        valid = np.zeros((b, n, h), dtype=bool)
        for j, horizon in enumerate(self.horizons):
            future = days + horizon
            ok = future < self.n_days
            fut = np.clip(future, 0, self.n_days - 1)
            price = self.close_prices[fut]                      # (B, N)
            target_price[:, :, j] = price
            target_norm[:, :, j] = ((price - self.close_mean[days])
                                    / self.close_std[days])
            directions[:, :, j] = true_direction(self.close_prices[days], price)
            valid[:, :, j] = ok[:, None] & self.sample_valid[days]
        return target_norm, target_price, directions, valid

    def _forward_batch(self, model, days, train=False, rng=None,
                       keep_tensors=False, extra: bool = False):
        idx = self._window_indices(days)
        base = self._base_features(variant_extra=extra)
        feats = base[idx]                                       # (B, T, N, F)
        kwargs = {}
        if model.config.variant == "event":
            kwargs["context"] = self.context_cont[idx]
            kwargs["regime_labels"] = self.context_labels[idx]
        return model.forward(feats, self.edge_init, train=train,
                             dropout_rng=rng, keep_tensors=keep_tensors,
                             **kwargs)

    def _train_pathway(self, name, model, days, mask_by_day, epochs, lr,
                       extra=False):
        cfg = self.config.pathway
        opt = AdamState(model.params, lr=lr)
        shuffle_rng = self.hub.stream(f"{name}.shuffle")
        drop_rng = self.hub.stream(f"{name}.dropout")
        epoch_losses = []
        days = np.asarray(days)
        supervised = np.array([mask_by_day[t].any() for t in days])
        days = days[supervised]
        if days.size == 0:
            raise DataError(f"{name}: no supervised windows")
        for epoch in range(epochs):
            order = shuffle_rng.permutation(days.size)
            total, count = 0.0, 0
            for start in range(0, days.size, cfg.batch_size):
                batch_days = days[order[start:start + cfg.batch_size]]
                target_norm, _, directions, valid = self._targets_for(batch_days)
                mask = np.stack([mask_by_day[t] for t in batch_days])
                mask = mask & valid.all(axis=2)
                if not mask.any():
                    continue
                with Tape() as tape:
                    out = self._forward_batch(model, batch_days, train=True,
                                              rng=drop_rng, keep_tensors=True,
                                              extra=extra)
                    loss = composite_loss(out.price_t, out.direction_t,
                                          target_norm, directions, mask,
                                          model.params)
                grads = backward(tape, loss, params=model.params.values())
                adam_step(model.params,
                          {k: grads[p] for k, p in model.params.items()}, opt)
                total += float(loss.data) * len(batch_days)
                count += len(batch_days)
            epoch_losses.append(total / max(count, 1))
            self.log(f"{name} epoch {epoch + 1}/{epochs} "
                     f"loss={epoch_losses[-1]:.6f}")
        return epoch_losses

    def stage2_pathways(self):
        cfg = self.config
        if cfg.ablation != "no-ae" and self.stage_completed < 1:
            raise OrderingError("stage 2 requires stage 1 (resume or rerun)")
        rng_init = self.hub.stream("init.pathways")
        days = self._training_days()
        epochs = cfg.pathway.epochs
        if cfg.ablation == "no-ae":
            self.single = PathwayModel(self._pathway_config("normal"), rng_init)
            mask = {t: self.sample_valid[t] for t in days}
            losses = self._train_pathway("stage2.single", self.single, days,
                                         mask, epochs, cfg.pathway.lr)
            self.stage_losses["stage2"] = losses
        elif cfg.ablation == "no-dual":
            self._context_arrays()
            self.single = PathwayModel(
                self._pathway_config("normal", extra_dim=2), rng_init)
            mask = {t: self.sample_valid[t] for t in days}
            losses = self._train_pathway("stage2.single", self.single, days,
                                         mask, epochs, cfg.pathway.lr,
                                         extra=True)
            self.stage_losses["stage2"] = losses
        else:
            self._context_arrays()
            self.normal = PathwayModel(self._pathway_config("normal"), rng_init)
            self.event = PathwayModel(self._pathway_config("event"), rng_init)
            normal_mask = {
                t: self.sample_valid[t] & (self.errors[t] < self.normal_cut)
                for t in days}
            event_mask = {
                t: self.sample_valid[t] & (self.errors[t] >= self.event_cut)
                for t in days}
            losses_n = self._train_pathway("stage2.normal", self.normal, days,
                                           normal_mask, epochs, cfg.pathway.lr)
            losses_e = self._train_pathway("stage2.event", self.event, days,
                                           event_mask, epochs, cfg.pathway.lr)
            self.stage_losses["stage2"] = losses_n
            self.stage_losses["stage2.event"] = losses_e
        self.stage_completed = max(self.stage_completed, 2)
        return self

    # -------------------------------------------------------------- stage 3

    def _precompute_outputs(self, days, batch_size=None):
        """Frozen pathway outputs for a day list: normalized price preds."""
        batch = batch_size or max(self.config.pathway.batch_size, 8)
        days = np.asarray(days)
        h = len(self.horizons)
        if self.config.ablation in ("no-ae", "no-dual"):
            single = np.zeros((days.size, self.n_stocks, h))
            for start in range(0, days.size, batch):
                chunk = days[start:start + batch]
                out = self._forward_batch(
                    self.single, chunk, extra=self.config.ablation == "no-dual")
                single[start:start + batch] = out.price
            return {"single": single}
        y_n = np.zeros((days.size, self.n_stocks, h))
        y_e = np.zeros_like(y_n)
        for start in range(0, days.size, batch):
            chunk = days[start:start + batch]
            y_n[start:start + batch] = self._forward_batch(
                self.normal, chunk).price
            y_e[start:start + batch] = self._forward_batch(
                self.event, chunk).price
        return {"normal": y_n, "event": y_e}

    def _stream_days(self, split_name="train"):
        horizon = 1
        rng = self.splits.of(split_name)
        start = max(self.first_usable_day, rng.start)
        days = [t for t in range(start, rng.stop - horizon)
                if self.sample_valid[t].any()
                and not np.isnan(self.errors[t][self.sample_valid[t]]).any()]
        return np.asarray(days)

    def _mean_errors(self):
        with np.errstate(invalid="ignore"):
            masked = np.where(self.sample_valid, self.errors, np.nan)
            sums = np.nansum(masked, axis=1)
            counts = (~np.isnan(masked)).sum(axis=1)
        out = np.full(self.n_days, np.nan)
        has = counts > 0
        out[has] = sums[has] / counts[has]
        return out

    def stage3_controller(self, diagnostics_path=None):
        cfg = self.config
        if cfg.ablation in ("no-sac", "no-ae"):
            raise OrderingError(f"{cfg.ablation} has no controller stage")
        if self.stage_completed < 2:
            raise OrderingError("stage 3 requires stage 2 (resume or rerun)")
        action_dim = 1 if cfg.ablation == "no-dual" else 2
        self.controller = SacController(
            state_dim=11, action_dim=action_dim, hidden_dim=cfg.sac.hidden_dim,
            lr=cfg.sac.lr, gamma=cfg.sac.gamma, tau_soft=cfg.sac.tau_soft,
            buffer_capacity=cfg.sac.buffer_capacity,
            batch_size=cfg.sac.batch_size,
            target_entropy=-float(action_dim),
            rng=self.hub.stream("sac.noise"))
        env = _ControlEnv(self, self._stream_days("train"),
                          self.hub.stream("env.offsets"))
        result = run_controller_training(
            self.controller, env, epochs=cfg.sac.epochs,
            steps_per_epoch=cfg.sac.steps_per_epoch,
            warmup=min(cfg.sac.batch_size, cfg.sac.steps_per_epoch),
            diagnostics_path=diagnostics_path, log=self.log)
        self.tau, self.alpha = env.tau, env.alpha
        self.stage_losses["stage3"] = result["epoch_mean_reward"]
        self.stage_losses["stage3_steps"] = [result["steps"]]
        self.stage_completed = max(self.stage_completed, 3)
        return self

    # -------------------------------------------------------------- stage 4

    def stage4_finetune(self):
        cfg = self.config
        if cfg.ablation in ("no-sac", "no-ae"):
            raise OrderingError(f"{cfg.ablation} has no fine-tuning stage")
        if self.stage_completed < 3:
            raise OrderingError("stage 4 requires stage 3 (resume or rerun)")
        days = self._training_days()
        inputs = self._ae_inputs()
        train_end = self.splits.train_end
        ae_opt = AdamState(self.detector.params_, lr=cfg.finetune.ae_lr)
        losses = []
        for epoch in range(cfg.finetune.epochs):
            # routing is recomputed per epoch as autoencoder weights drift
            all_days, all_stocks = np.nonzero(self.sample_valid)
            scores = self.detector.score_samples(inputs[all_days, all_stocks])
            self.errors = np.full((self.n_days, self.n_stocks), np.nan)
            self.errors[all_days, all_stocks] = scores

            stable_rows = inputs[
                np.nonzero((self.sample_valid & self.stable_mask[:, None])
                           & (np.arange(self.n_days) < train_end)[:, None])]
            shuffle = self.hub.stream("stage4.ae.shuffle")
            order = shuffle.permutation(stable_rows.shape[0])
            from ..numcore import square, sub, tmean, tsum
            batch_size = cfg.autoencoder.batch_size
            for start in range(0, len(order), batch_size):
                rows = stable_rows[order[start:start + batch_size]]
                with Tape() as tape:
                    recon = self.detector.decode_t(
                        self.detector.encode_t(Tensor(rows)))
                    loss = tmean(tsum(square(sub(recon, Tensor(rows))), axis=1))
                grads = backward(tape, loss,
                                 params=self.detector.params_.values())
                adam_step(self.detector.params_,
                          {k: grads[p]
                           for k, p in self.detector.params_.items()}, ae_opt)

            if cfg.ablation == "no-dual":
                mask = {t: self.sample_valid[t] for t in days}
                l_epoch = self._train_pathway("stage4.single", self.single,
                                              days, mask, 1,
                                              cfg.finetune.pathway_lr,
                                              extra=True)
            else:
                normal_mask = {
                    t: self.sample_valid[t] & (self.errors[t] < self.normal_cut)
                    for t in days}
                event_mask = {
                    t: self.sample_valid[t] & (self.errors[t] >= self.event_cut)
                    for t in days}
                l_epoch = self._train_pathway("stage4.normal", self.normal,
                                              days, normal_mask, 1,
                                              cfg.finetune.pathway_lr)
                self._train_pathway("stage4.event", self.event, days,
                                    event_mask, 1, cfg.finetune.pathway_lr)
            losses.extend(l_epoch)

            self.controller.set_learning_rate(cfg.finetune.sac_lr)
            env = _ControlEnv(self, self._stream_days("train"),
                              self.hub.stream("env.offsets"))
            env.tau, env.alpha = self.tau, self.alpha
            run_controller_training(
                self.controller, env, epochs=1,
                steps_per_epoch=max(50, cfg.sac.steps_per_epoch // 5),
                warmup=self.controller.batch_size, log=None)
            self.tau, self.alpha = env.tau, env.alpha
        self.stage_losses["stage4"] = losses
        self.stage_completed = 4
        return self

    # ------------------------------------------------------------ inference

    def fit(self, stages=None, panel=None, diagnostics_path=None):
        if not hasattr(self, "splits"):
            self.prepare_data(panel)
        allowed = VARIANT_STAGES[self.config.ablation]
        stages = tuple(stages) if stages is not None else allowed
        for stage in stages:
            if stage not in allowed:
                raise OrderingError(
                    f"stage {stage} does not exist for {self.config.ablation}")
            position = allowed.index(stage)
            done = allowed.index(self._last_stage()) + 1 \
                if self.stage_completed else 0
            if position > done:
                raise OrderingError(
                    f"cannot run stage {stage}: previous stage not complete")
            if position < done:
                continue
            if stage == 1:
                self.stage1_autoencoder()
            elif stage == 2:
                self.stage2_pathways()
            elif stage == 3:
                self.stage3_controller(diagnostics_path)
            else:
                self.stage4_finetune()
        return self

    def _last_stage(self) -> int:
        return self.stage_completed

    def predict(self, split: str = "test"):
        report, pred = self.evaluate(split)
        return pred

    def evaluate(self, split: str = "test") -> tuple[EvalReport, PredictionSet]:
        cfg = self.config
        split_days = self.splits.of(split)
        if len(split_days) == 0:
            raise ConfigError(f"{split} split is empty")
        if self.stage_completed < min(VARIANT_STAGES[cfg.ablation]):
            raise OrderingError("evaluate requires a trained system")

        candidate = [t for t in range(max(self.first_usable_day,
                                          split_days.start - EVAL_BURNIN),
                                      split_days.stop)
                     if self.sample_valid[t].any()]
        has_detector = cfg.ablation != "no-ae"
        if has_detector:
            candidate = [t for t in candidate
                         if not np.isnan(self.errors[t][self.sample_valid[t]]).any()]
        days = np.asarray(candidate)
        if days.size == 0:
            raise DataError(f"no evaluable days in split {split!r}")

        outputs = self._precompute_outputs(days)
        mean_err = self._mean_errors() if has_detector else np.zeros(self.n_days)

        tau = self.tau0 if has_detector else float("nan")
        alpha = self.alpha if cfg.ablation == "full" else 0.5
        if cfg.ablation == "full" and self.stage_completed >= 3:
            tau = self.tau
        controller = getattr(self, "controller", None)
        use_controller = (cfg.ablation in ("full", "no-dual")
                          and self.stage_completed >= 3)

        h1 = self.horizons.index(1) if 1 in self.horizons else 0
        rmse_prev, da_prev = 0.0, 0.5
        day_index = {int(t): i for i, t in enumerate(days)}
        rows = []
        trajectory = []
        for i, t in enumerate(days):
            if use_controller:
                history_days = np.arange(t - 5, t)
                history = mean_err[history_days]
                if np.isnan(history).any() or np.isnan(mean_err[t]):
                    pass  # warm-up day: hold settings, skip the action
                else:
                    state = build_state(
                        mean_err[t] / self.error_scale,
                        history / self.error_scale,
                        self.market_vol[t], rmse_prev, da_prev, alpha,
                        (tau - self.error_bounds[0])
                        / max(self.error_bounds[1] - self.error_bounds[0], 1e-12))
                    action, _ = controller.sample_action(state,
                                                         mode="deterministic")
                    tau, alpha = apply_action(tau, alpha, action,
                                              self.error_bounds)
            if has_detector:
                self.tau_series[t] = tau

            routed = (route(np.where(np.isnan(self.errors[t]), -np.inf,
                                     self.errors[t]), tau)
                      if has_detector else np.zeros(self.n_stocks, dtype=bool))
            if cfg.ablation in ("no-ae", "no-dual"):
                y_norm = outputs["single"][i]
                y_n_norm = y_norm
                y_e_norm = y_norm
            else:
                y_n_norm = outputs["normal"][i]
                y_e_norm = outputs["event"][i]
                y_norm = gated_blend(y_n_norm, y_e_norm, routed, alpha)

            target_norm, target_price, directions, valid = self._targets_for(
                np.array([t]))
            rows.append((t, y_norm, y_n_norm, y_e_norm, target_norm[0],
                         target_price[0], valid[0]))
            if t in split_days:
                trajectory.append((self.panel.dates[t],
                                   tau if has_detector else float("nan"),
                                   alpha,
                                   mean_err[t] if has_detector else float("nan")))

            # realized previous-day metrics for the next state
            v = valid[0, :, h1] if 1 in self.horizons else valid[0, :, 0]
            if v.any():
                err = y_norm[v, h1] - target_norm[0, v, h1]
                rmse_prev = float(np.sqrt(np.mean(err ** 2)))
                prior_n = ((self.close_prices[t, v] - self.close_mean[t, v])
                           / self.close_std[t, v])
                da_prev = float(np.mean(
                    np.sign(y_norm[v, h1] - prior_n)
                    == np.sign(target_norm[0, v, h1] - prior_n)))

        keep = [j for j, (t, *_rest) in enumerate(rows) if t in split_days]
        if not keep:
            raise DataError(f"no rows inside split {split!r}")
        sel_days = np.array([rows[j][0] for j in keep])
        stack = lambda k: np.stack([rows[j][k] for j in keep])
        y_norm_all = stack(1)
        y_n_all = stack(2)
        y_e_all = stack(3)
        target_norm_all = stack(4)
        target_price_all = stack(5)
        valid_all = stack(6)
        scale = self.close_std[sel_days]
        shift = self.close_mean[sel_days]
        pred = PredictionSet(
            days=sel_days, tickers=list(self.panel.tickers),
            horizons=self.horizons,
            y_price=y_norm_all * scale[:, :, None] + shift[:, :, None],
            target_price=target_price_all,
            y_norm=y_norm_all, target_norm=target_norm_all,
            y_normal_norm=y_n_all, y_event_norm=y_e_all,
            prior_close=self.close_prices[sel_days],
            prior_norm=(self.close_prices[sel_days] - shift) / scale,
            valid=valid_all)
        report = attach_baselines(compute_metrics(pred), pred)
        report.trajectory = trajectory
        if self.panel.regimes is not None:
            report.regime_rows = regime_breakdown(
                pred, self.panel.regimes[sel_days], {0: "calm", 1: "crisis"})
        report.meta["split"] = split
        report.meta["ablation"] = cfg.ablation
        report.meta["tau_final"] = tau
        report.meta["alpha_final"] = alpha
        return report, pred

    # ----------------------------------------------------------- persistence

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        if hasattr(self, "detector") and hasattr(self.detector, "params_"):
            out.update({f"ae.{k}": p for k, p in self.detector.params_.items()})
        for attr in ("normal", "event", "single"):
            model = getattr(self, attr, None)
            if model is not None:
                out.update({f"{attr}.{k}": p for k, p in model.params.items()})
        controller = getattr(self, "controller", None)
        if controller is not None:
            out.update({f"sac.{k}": p for k, p in controller.parameters().items()})
        return out

    def parameter_hash(self) -> str:
        digest = hashlib.sha256()
        params = self.named_parameters()
        for name in sorted(params):
            digest.update(name.encode())
            digest.update(params[name].data.tobytes())
        return digest.hexdigest()

    def state_tensors(self) -> dict:
        tensors = {name: p.data for name, p in self.named_parameters().items()}
        tensors["meta.edge_init"] = self.edge_init
        if hasattr(self, "tau0"):
            tensors["meta.tau_alpha"] = np.array([self.tau, self.alpha])
            tensors["meta.tau0"] = np.array([self.tau0])
            tensors["meta.error_bounds"] = np.array(self.error_bounds)
            tensors["meta.cuts"] = np.array([self.normal_cut, self.event_cut,
                                             self.error_scale])
            tensors["meta.training_errors"] = self.detector.training_errors_
        return tensors

    def save(self, path) -> str:
        return save_checkpoint(path, self.state_tensors(),
                               config_hash(self.config), self.stage_completed,
                               rng_state=self.hub.state())

    def restore(self, path, allow_hash_mismatch: bool = False):
        manifest, tensors, rng_state = load_checkpoint(
            path, config_hash(self.config),
            allow_hash_mismatch=allow_hash_mismatch)
        if not hasattr(self, "splits"):
            self.prepare_data()
        stage = manifest["stage_completed"]
        cfg = self.config
        if cfg.ablation != "no-ae" and any(k.startswith("ae.") for k in tensors):
            self.detector = RegimeAutoencoder(**self._detector_config())
            self.detector.init_params(self.hub.fresh("ae"))
            for k, p in self.detector.params_.items():
                p.data = tensors[f"ae.{k}"].copy()
            inputs = self._ae_inputs()
            all_days, all_stocks = np.nonzero(self.sample_valid)
            scores = self.detector.score_samples(inputs[all_days, all_stocks])
            self.errors = np.full((self.n_days, self.n_stocks), np.nan)
            self.errors[all_days, all_stocks] = scores
            self.detector.training_errors_ = tensors["meta.training_errors"]
            self.tau, self.alpha = tensors["meta.tau_alpha"]
            self.tau0 = float(tensors["meta.tau0"][0])
            self.error_bounds = tuple(tensors["meta.error_bounds"])
            self.normal_cut, self.event_cut, self.error_scale = \
                tensors["meta.cuts"]
            self.tau_series[:] = self.tau0
        rng_init = self.hub.fresh("init.pathways")
        if any(k.startswith("normal.") for k in tensors):
            self._context_arrays()
            self.normal = PathwayModel(self._pathway_config("normal"), rng_init)
            self.event = PathwayModel(self._pathway_config("event"), rng_init)
            for attr in ("normal", "event"):
                model = getattr(self, attr)
                for k, p in model.params.items():
                    p.data = tensors[f"{attr}.{k}"].copy()
        if any(k.startswith("single.") for k in tensors):
            extra = 2 if cfg.ablation == "no-dual" else 0
            if cfg.ablation == "no-dual":
                self._context_arrays()
            self.single = PathwayModel(
                self._pathway_config("normal", extra_dim=extra), rng_init)
            for k, p in self.single.params.items():
                p.data = tensors[f"single.{k}"].copy()
        if any(k.startswith("sac.") for k in tensors):
            action_dim = 1 if cfg.ablation == "no-dual" else 2
            self.controller = SacController(
                state_dim=11, action_dim=action_dim,
                hidden_dim=cfg.sac.hidden_dim, lr=cfg.sac.lr,
                gamma=cfg.sac.gamma, tau_soft=cfg.sac.tau_soft,
                buffer_capacity=cfg.sac.buffer_capacity,
                batch_size=cfg.sac.batch_size,
                target_entropy=-float(action_dim),
                rng=self.hub.stream("sac.noise"))
            for k, p in self.controller.parameters().items():
                p.data = tensors[f"sac.{k}"].copy()
        if rng_state:
            self.hub.set_state(rng_state)
        self.stage_completed = stage
        return self


class _ControlEnv:
    """Training-stream environment for the controller.

    Pathway outputs are precomputed once (the prediction stack is frozen
    during stage 3); for the no-dual variant the regime-flag input depends
    on the live threshold, so each step runs one forward pass instead.
    """

    def __init__(self, system: ForecastSystem, days: np.ndarray,
                 offset_rng: np.random.Generator):
        if days.size < 10:
            raise DataError("controller training stream is too short")
        self.system = system
        self.days = days
        self.offset_rng = offset_rng
        self.pos = int(offset_rng.integers(days.size))
        self.no_dual = system.config.ablation == "no-dual"
        if not self.no_dual:
            outs = system._precompute_outputs(days)
            self.y_n = outs["normal"]
            self.y_e = outs["event"]
        self.mean_err = system._mean_errors()
        self.tau = system.tau
        self.alpha = system.alpha
        self.rmse_prev, self.da_prev = 0.0, 0.5
        self.h1 = (system.horizons.index(1) if 1 in system.horizons else 0)
        target_norm, _, _, valid = system._targets_for(days)
        self.targets = target_norm[:, :, self.h1]
        self.valid = valid[:, :, self.h1]
        self.prior_norm = ((system.close_prices[days]
                            - system.close_mean[days])
                           / system.close_std[days])

    def _tau_norm(self) -> float:
        lo, hi = self.system.error_bounds
        return (self.tau - lo) / max(hi - lo, 1e-12)

    def state(self) -> np.ndarray:
        system = self.system
        t = self.days[self.pos]
        history = self.mean_err[np.arange(t - 5, t)]
        history = np.where(np.isnan(history), self.mean_err[t], history)
        return build_state(self.mean_err[t] / system.error_scale,
                           history / system.error_scale,
                           system.market_vol[t], self.rmse_prev, self.da_prev,
                           self.alpha, self._tau_norm())

    def step(self, action):
        system = self.system
        i = self.pos
        t = self.days[i]
        self.tau, self.alpha = apply_action(self.tau, self.alpha, action,
                                            system.error_bounds)
        system.tau_series[t] = self.tau
        routed = route(np.where(np.isnan(system.errors[t]), -np.inf,
                                system.errors[t]), self.tau)
        if self.no_dual:
            out = system._forward_batch(system.single, np.array([t]),
                                        extra=True)
            y = out.price[0, :, self.h1]
        else:
            y = gated_blend(self.y_n[i, :, self.h1], self.y_e[i, :, self.h1],
                            routed, self.alpha)
        v = self.valid[i]
        if v.any():
            err = y[v] - self.targets[i, v]
            rmse = float(np.sqrt(np.mean(err ** 2)))
            da = float(np.mean(np.sign(y[v] - self.prior_norm[i, v])
                               == np.sign(self.targets[i, v]
                                          - self.prior_norm[i, v])))
        else:
            rmse, da = 0.0, 0.5
        reward = compute_reward(rmse, da, float(action[0]))
        self.rmse_prev, self.da_prev = rmse, da
        self.pos += 1
        if self.pos >= self.days.size:
            self.pos = int(self.offset_rng.integers(self.days.size))
        return reward, self.state()


def run_pipeline(config: RunConfig, stages=None, out_dir=None, resume=None,
                 panel=None, log=None):
    """Run (a contiguous range of) stages, checkpointing after each one."""
    system = ForecastSystem(config, log=log)
    system.prepare_data(panel)
    if resume is not None:
        if not os.path.exists(os.path.join(resume, "manifest.json")):
            raise CheckpointError(f"cannot resume: no checkpoint at {resume}")
        system.restore(resume)
    allowed = VARIANT_STAGES[config.ablation]
    stages = tuple(stages) if stages is not None else allowed
    diagnostics = (os.path.join(out_dir, "sac_diagnostics.csv")
                   if out_dir is not None and 3 in stages else None)
    for stage in stages:
        system.fit(stages=(stage,), diagnostics_path=diagnostics)
        if out_dir is not None:
            system.save(os.path.join(out_dir, f"checkpoint_stage{stage}"))
    if out_dir is not None:
        from .config import config_to_text
        with open(os.path.join(out_dir, "resolved_config.txt"), "w") as fh:
            fh.write(config_to_text(config))
    return system
