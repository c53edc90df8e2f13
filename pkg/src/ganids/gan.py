"""WGAN-GP with a transfer-pretraining phase for minority-class synthesis.

The critic trains on mean D(fake) - mean D(real) plus the gradient penalty;
the generator on -mean D(G(z)). Pretraining runs this loop on normal traffic;
fine-tuning copies the pretrained weights (optimizer state reset) and
continues on a single minority class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import nn
from .data import Dataset, EmptyDataset, PreprocessPlan, inverse_transform


class InvalidDimension(ValueError):
    pass


class WrongPhase(RuntimeError):
    pass


@dataclass
class GanConfig:
    lam: float = 10.0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    batch_size: int = 64
    critic_steps: int = 5          # critic updates per generator update
    noise_dim: int = 0             # 0 -> feature_dim
    stop_delta: float = 0.02
    finetune_stop_delta: float = 0.01
    stop_window: int = 50
    max_steps: int = 20000
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0 or self.batch_size < 1 or self.critic_steps < 1 \
                or self.max_steps < 0:
            raise ValueError("invalid GAN configuration")

    def to_dict(self):
        return dict(vars(self))

    @staticmethod
    def from_dict(d):
        return GanConfig(**d)


@dataclass
class StepRecord:
    step: int
    loss_d: float
    loss_g: float
    wasserstein: float
    gp: float


@dataclass
class TrainTrace:
    records: list = field(default_factory=list)
    stop_reason: str = ""
    steps_to_stop: int = 0

    def rows(self):
        return [(r.step, r.loss_d, r.loss_g, r.wasserstein, r.gp)
                for r in self.records]


class GanModel:
    def __init__(self, g_spec, g_params, d_spec, d_params, feature_dim, cfg,
                 phase="fresh"):
        self.g_spec = g_spec
        self.g_params = g_params
        self.d_spec = d_spec
        self.d_params = d_params
        self.feature_dim = feature_dim
        self.cfg = cfg
        self.phase = phase
        self.g_opt = nn.AdamState(g_params, cfg.lr, cfg.beta1, cfg.beta2,
                                  weight_decay=cfg.weight_decay)
        self.d_opt = nn.AdamState(d_params, cfg.lr, cfg.beta1, cfg.beta2,
                                  weight_decay=cfg.weight_decay)

    @property
    def noise_dim(self):
        return self.cfg.noise_dim or self.feature_dim

    def reset_optimizers(self):
        cfg = self.cfg
        self.g_opt = nn.AdamState(self.g_params, cfg.lr, cfg.beta1, cfg.beta2,
                                  weight_decay=cfg.weight_decay)
        self.d_opt = nn.AdamState(self.d_params, cfg.lr, cfg.beta1, cfg.beta2,
                                  weight_decay=cfg.weight_decay)

    def copy(self):
        m = GanModel(self.g_spec, self.g_params.copy(), self.d_spec,
                     self.d_params.copy(), self.feature_dim, self.cfg,
                     self.phase)
        return m


def generator_spec(feature_dim, noise_dim=None):
    return nn.NetworkSpec(noise_dim or feature_dim, (
        nn.FullyConnected(feature_dim), nn.LeakyRelu(0.2),
        nn.Conv1d(64, 3), nn.LeakyRelu(0.2),
        nn.Conv1d(32, 3), nn.LeakyRelu(0.2),
        nn.Conv1d(1, 1),
    ))


def critic_spec(feature_dim):
    return nn.NetworkSpec(feature_dim, (
        nn.Conv1d(32, 3), nn.LeakyRelu(0.2),
        nn.FullyConnected(64), nn.LeakyRelu(0.2),
        nn.Dropout(0.4),
        nn.FullyConnected(1), nn.Tanh(),
    ))


def build_gan(feature_dim, cfg: GanConfig) -> GanModel:
    if feature_dim < 1:
        raise InvalidDimension(f"feature_dim must be >= 1, got {feature_dim}")
    g_spec = generator_spec(feature_dim, cfg.noise_dim or feature_dim)
    d_spec = critic_spec(feature_dim)
    g_params = nn.init_params(g_spec, cfg.seed)
    d_params = nn.init_params(d_spec, cfg.seed + 1)
    return GanModel(g_spec, g_params, d_spec, d_params, feature_dim, cfg)


def _generate(model, n, rng):
    """Sample noise and run G; returns (output Var, G param Vars)."""
    z = rng.standard_normal((n, model.noise_dim))
    g_vars = {k: ad.leaf(v) for k, v in model.g_params.tensors.items()}
    out, _ = nn.forward_var(model.g_spec, g_vars, ad.Var(z), train=True)
    return out, g_vars


def critic_step(model: GanModel, real_batch, rng, fake_batch=None):
    """One critic update. Returns (loss_d, wasserstein_estimate, gp_value).

    `fake_batch` overrides the generator's samples (test harness hook)."""
    cfg = model.cfg
    real = np.asarray(real_batch, dtype=np.float64)
    n = real.shape[0]
    if fake_batch is None:
        fake = _generate(model, n, rng)[0].data
    else:
        fake = np.asarray(fake_batch, dtype=np.float64)

    eps = rng.random((n, 1))
    x_hat = eps * real + (1.0 - eps) * fake

    # one dropout mask per critic step, shared by all three passes so the
    # penalty differentiates a fixed function
    masks = nn.dropout_masks(model.d_spec, n, rng)
    out_f, tape_f = nn.forward(model.d_spec, model.d_params, fake,
                               train=True, masks=masks)
    out_r, tape_r = nn.forward(model.d_spec, model.d_params, real,
                               train=True, masks=masks)
    gp_val, gp_grads = nn.gradient_penalty(model.d_spec, model.d_params, x_hat,
                                           cfg.lam, masks=masks, train=True)
    mean_f = float(out_f.data.mean())
    mean_r = float(out_r.data.mean())
    loss_d = mean_f - mean_r + gp_val

    g_f = nn.grad_params(ad.mean(out_f), tape_f)
    g_r = nn.grad_params(ad.mean(out_r), tape_r)
    grads = {name: g_f[name].data - g_r[name].data + gp_grads[name]
             for name in model.d_params.tensors}
    model.d_params = nn.adam_step(model.d_params, grads, model.d_opt)
    ad.check_finite([loss_d], "critic loss")
    return loss_d, mean_r - mean_f, gp_val


def generator_step(model: GanModel, rng):
    """One generator update on -mean D(G(z)); the critic is left untouched."""
    n = model.cfg.batch_size
    fake, g_vars = _generate(model, n, rng)
    masks = nn.dropout_masks(model.d_spec, n, rng)
    d_const = {k: ad.asvar(v) for k, v in model.d_params.tensors.items()}
    out, _ = nn.forward_var(model.d_spec, d_const, fake, train=True, masks=masks)
    loss_g = -ad.mean(out)
    names = list(g_vars)
    gs = ad.grad(loss_g, [g_vars[k] for k in names])
    grads = {k: g.data for k, g in zip(names, gs)}
    model.g_params = nn.adam_step(model.g_params, grads, model.g_opt)
    ad.check_finite([loss_g.data], "generator loss")
    return loss_g.item()


class _StopRule:
    """EMA of |Wasserstein estimate| must stay <= delta for `window`
    consecutive critic steps. The EMA starts at 1.0 so an untrained pair
    cannot trigger the rule before it has actually converged."""

    def __init__(self, delta, window, decay=0.99):
        self.delta = delta
        self.window = window
        self.decay = decay
        self.ema = 1.0
        self.run = 0

    def update(self, w_estimate):
        self.ema = self.decay * self.ema + (1 - self.decay) * abs(w_estimate)
        self.run = self.run + 1 if self.ema <= self.delta else 0
        return self.run >= self.window


def _train_loop(model: GanModel, data: Dataset, cfg: GanConfig, stop_delta):
    if len(data) == 0:
        raise EmptyDataset("GAN training needs a non-empty dataset")
    if not data.encoded:
        raise ValueError("GAN training expects an encoded dataset")
    rng = np.random.default_rng(cfg.seed)
    matrix = np.asarray(data.features, dtype=np.float64)
    trace = TrainTrace()
    stop = _StopRule(stop_delta, cfg.stop_window)
    step = 0
    loss_g = float("nan")
    order = rng.permutation(len(matrix))
    pos = 0
    stopped = False
    while step < cfg.max_steps and not stopped:
        for _ in range(cfg.critic_steps):
            if step >= cfg.max_steps or stopped:
                break
            if pos + cfg.batch_size > len(order):
                order = rng.permutation(len(matrix))
                pos = 0
            batch = matrix[order[pos:pos + cfg.batch_size]]
            pos += cfg.batch_size
            loss_d, w_est, gp = critic_step(model, batch, rng)
            step += 1
            trace.records.append(StepRecord(step, loss_d, loss_g, w_est, gp))
            if stop.update(w_est):
                stopped = True
        if not stopped and step < cfg.max_steps:
            loss_g = generator_step(model, rng)
    trace.stop_reason = "criterion" if stopped else "max_steps"
    trace.steps_to_stop = step
    return trace


def pretrain(model: GanModel, normal_data: Dataset, cfg: GanConfig = None):
    """Train on normal traffic until the stop rule fires; phase -> pretrained."""
    if model.phase != "fresh":
        raise WrongPhase(f"pretrain expects a fresh model, got {model.phase}")
    cfg = cfg or model.cfg
    trace = _train_loop(model, normal_data, cfg, cfg.stop_delta)
    model.phase = "pretrained"
    return model, trace


def finetune(pretrained: GanModel, minority_data: Dataset, cfg: GanConfig = None,
             class_name="minority", fresh_init=False):
    """Continue training on one minority class from the pretrained weights.

    Weights are copied exactly; Adam accumulators start from zero. With
    fresh_init=True the weights are re-initialized instead (ablation arm).
    """
    if pretrained.phase != "pretrained":
        raise WrongPhase(f"finetune expects a pretrained model, got {pretrained.phase}")
    cfg = cfg or pretrained.cfg
    model = pretrained.copy()
    model.cfg = cfg
    if fresh_init:
        model.g_params = nn.init_params(model.g_spec, cfg.seed + 101)
        model.d_params = nn.init_params(model.d_spec, cfg.seed + 102)
    model.reset_optimizers()
    trace = _train_loop(model, minority_data, cfg, cfg.finetune_stop_delta)
    model.phase = f"finetuned:{class_name}"
    return model, trace


def synthesize(generator: GanModel, n, plan: PreprocessPlan, seed,
               schema=None, class_name=None) -> Dataset:
    """Draw n rows from a fine-tuned generator, decoded into raw space."""
    if not generator.phase.startswith("finetuned"):
        raise WrongPhase(f"synthesize expects a finetuned model, got {generator.phase}")
    if class_name is None:
        class_name = generator.phase.split(":", 1)[1]
    rng = np.random.default_rng(seed)
    outs = []
    remaining = n
    while remaining > 0:
        k = min(remaining, 512)
        z = rng.standard_normal((k, generator.noise_dim))
        out, _ = nn.forward(generator.g_spec, generator.g_params, z)
        outs.append(np.clip(out.data, 0.0, 1.0))
        remaining -= k
    matrix = np.vstack(outs) if outs else np.zeros((0, generator.feature_dim))
    raw = inverse_transform(matrix, plan)
    labels = np.full(n, schema.class_id(class_name), dtype=np.int64)
    return Dataset(raw, labels, schema, encoded=False,
                   feature_names=[t[0] for t in plan.transforms],
                   provenance=f"synthesized:{class_name}",
                   synthetic=np.ones(n, dtype=bool))
