"""Alternating discriminator / generator updates and the checkpointed training loop."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff import ops
from ..autodiff.rng import Rng
from ..autodiff.tensor import Tensor, no_grad
from ..discriminator import Discriminator, DiscriminatorConfig
from ..errors import ConfigError, NonFiniteLossError, PreconditionError
from ..generator import Generator, GeneratorConfig
from ..io.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from ..io.dataset import ImagePair, crop_pair
from ..io.resample import upscale
from .losses import adversarial_loss_d, generator_adversarial_loss, reconstruction_loss
from .optim import Adam

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "d_loss", "g_adv_loss", "g_rec_loss", "g_total", "d_real", "d_fake")


@dataclass
class TrainConfig:
    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lambda_adv: float = 0.001
    lambda_rec: float = 1.0
    batch_size: int = 1
    steps: int = 1000
    d_steps_per_g_step: int = 1
    seed: int = 0
    lr_crop: int | None = 32
    scale: int = 2
    log_every: int = 1
    checkpoint_every: int = 100

    def __post_init__(self):
        if self.learning_rate <= 0 or self.adam_eps <= 0:
            raise ConfigError("train.learning_rate and train.adam_eps must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.lambda_adv < 0 or self.lambda_rec < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.batch_size < 1 or self.steps < 0 or self.d_steps_per_g_step < 1:
            raise ConfigError("batch_size and d_steps_per_g_step must be >= 1, steps >= 0")
        if self.scale not in (2, 4):
            raise ConfigError(f"train.scale must be 2 or 4, got {self.scale}")
        if self.log_every < 1 or self.checkpoint_every < 1:
            raise ConfigError("log_every and checkpoint_every must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainLogRecord:
    step: int
    d_loss: float
    g_adv_loss: float
    g_rec_loss: float
    g_total: float
    d_real: float
    d_fake: float
    wall_time: float = field(default=0.0, compare=False)

    def values(self) -> tuple:
        return tuple(getattr(self, c) for c in LOG_COLUMNS)

    def to_line(self) -> str:
        return "\t".join([str(self.step)] + [f"{v:.9e}" for v in self.values()[1:]])

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.values()[1:])


def stack_batch(pairs: list[ImagePair], dtype=np.float32) -> tuple[Tensor, Tensor]:
    lr = np.stack([p.lr for p in pairs]).astype(dtype)
    hr = np.stack([p.hr for p in pairs]).astype(dtype)
    return Tensor(lr), Tensor(hr)


class Trainer:
    """Owns both networks, their optimizers and the data-order RNG."""

    def __init__(self, gen_cfg: GeneratorConfig, disc_cfg: DiscriminatorConfig, cfg: TrainConfig):
        self.cfg = cfg
        init_g, init_d, data = Rng(cfg.seed).spawn(3)
        self.gen = Generator(gen_cfg, init_g)
        self.disc = Discriminator(disc_cfg, init_d)
        self.rng = data
        self.opt_g = self._adam(self.gen)
        self.opt_d = self._adam(self.disc)
        self.step = 0
        self._order: list[int] = []
        self._cursor = 0

    def _adam(self, net) -> Adam:
        c = self.cfg
        return Adam(dict(net.named_parameters()), c.learning_rate, (c.beta1, c.beta2), c.adam_eps)

    # ------------------------------------------------------------------ steps

    def _super_resolve(self, lr: Tensor) -> Tensor:
        return self.gen.forward(lr, clamp=False) if self.cfg.scale == 2 else self.gen.generate_4x(lr, clamp=False)

    def train_step(self, lr: Tensor, hr: Tensor) -> TrainLogRecord:
        """One round: ``d_steps_per_g_step`` discriminator updates, then one generator update."""
        cfg = self.cfg
        start = time.perf_counter()
        self.gen.train()
        self.disc.train()
        with no_grad():
            condition = upscale(lr, cfg.scale)

        # discriminator phase: generator output is a constant
        with no_grad():
            sr_fixed = self._super_resolve(lr)
        self.gen.zero_grad()
        for _ in range(cfg.d_steps_per_g_step):
            self.opt_d.zero_grad()
            real_logit = self.disc.logits(hr, condition)
            fake_logit = self.disc.logits(sr_fixed, condition)
            d_loss = adversarial_loss_d(real_logit, fake_logit)
            self._check_finite(d_loss, "discriminator loss")
            d_loss.backward()
            self.opt_d.step()

        # generator phase: discriminator frozen
        self.opt_g.zero_grad()
        self.disc.requires_grad_(False)
        try:
            sr = self._super_resolve(lr)
            rec = reconstruction_loss(hr, sr)
            if cfg.lambda_adv > 0:
                adv = generator_adversarial_loss(self.disc.logits(sr, condition))
                total = ops.add(ops.scale(adv, cfg.lambda_adv), ops.scale(rec, cfg.lambda_rec))
            else:
                with no_grad():
                    adv = generator_adversarial_loss(self.disc.logits(Tensor(sr.data), condition))
                total = ops.scale(rec, cfg.lambda_rec)
            self._check_finite(total, "generator loss")
            total.backward()
        finally:
            self.disc.requires_grad_(True)
        self.opt_g.step()
        self.step += 1

        return TrainLogRecord(
            step=self.step,
            d_loss=float(d_loss.data),
            g_adv_loss=float(adv.data),
            g_rec_loss=float(rec.data),
            g_total=float(total.data),
            d_real=float(ops._stable_sigmoid(real_logit.data).mean()),
            d_fake=float(ops._stable_sigmoid(fake_logit.data).mean()),
            wall_time=time.perf_counter() - start,
        )

    def _check_finite(self, loss: Tensor, what: str) -> None:
        value = float(loss.data)
        if not math.isfinite(value):
            raise NonFiniteLossError(f"step {self.step + 1}: {what} is {value}")

    # ------------------------------------------------------------------ data

    def next_batch(self, pairs: list[ImagePair]) -> tuple[Tensor, Tensor]:
        """Draw ``batch_size`` pairs in seeded epoch order, cropping when configured."""
        if not pairs:
            raise PreconditionError("dataset is empty")
        chosen = []
        for _ in range(self.cfg.batch_size):
            if self._cursor >= len(self._order):
                self._order = [int(i) for i in self.rng.permutation(len(pairs))]
                self._cursor = 0
            pair = pairs[self._order[self._cursor]]
            self._cursor += 1
            if self.cfg.lr_crop:
                pair = crop_pair(pair, self.cfg.lr_crop, self.rng, self.gen.config.multiple)
            chosen.append(pair)
        return stack_batch(chosen, self.gen.embed.weight.dtype)

    # ------------------------------------------------------------------ persistence

    def checkpoint(self) -> Checkpoint:
        tensors = {}
        for prefix, net in (("generator.", self.gen), ("discriminator.", self.disc)):
            tensors.update({prefix + k: v for k, v in net.state_dict().items()})
        for prefix, opt in (("opt_g.", self.opt_g), ("opt_d.", self.opt_d)):
            tensors.update({f"{prefix}m.{k}": v for k, v in opt.state.m.items()})
            tensors.update({f"{prefix}v.{k}": v for k, v in opt.state.v.items()})
        meta = {
            "generator": self.gen.config.to_dict(),
            "discriminator": self.disc.config.to_dict(),
            "train": self.cfg.to_dict(),
            "step": self.step,
            "opt_steps": {"g": self.opt_g.state.step, "d": self.opt_d.state.step},
            "rng": {"data": self.rng.get_state(), "dropout": self.disc._dropout_rng.get_state()},
            "data_order": {"order": self._order, "cursor": self._cursor},
        }
        return Checkpoint(meta, tensors)

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint, cfg: TrainConfig | None = None) -> "Trainer":
        meta = ckpt.meta
        cfg = cfg or TrainConfig(**meta["train"])
        trainer = cls(GeneratorConfig(**meta["generator"]), DiscriminatorConfig(**meta["discriminator"]), cfg)
        trainer.gen.load_state_dict(ckpt.subset("generator."))
        trainer.disc.load_state_dict(ckpt.subset("discriminator."))
        for key, opt in (("g", trainer.opt_g), ("d", trainer.opt_d)):
            opt.load_state(ckpt.subset(f"opt_{key}.m."), ckpt.subset(f"opt_{key}.v."), meta["opt_steps"][key])
        trainer.step = int(meta["step"])
        trainer.rng.set_state(meta["rng"]["data"])
        trainer.disc._dropout_rng.set_state(meta["rng"]["dropout"])
        trainer._order = list(meta["data_order"]["order"])
        trainer._cursor = int(meta["data_order"]["cursor"])
        return trainer


def load_generator(path_or_ckpt) -> Generator:
    """Rebuild only the generator from a checkpoint file or object."""
    ckpt = path_or_ckpt if isinstance(path_or_ckpt, Checkpoint) else load_checkpoint(path_or_ckpt)
    gen = Generator(GeneratorConfig(**ckpt.meta["generator"]), Rng(0))
    gen.load_state_dict(ckpt.subset("generator."))
    return gen


def checkpoint_path(out_dir: Path, step: int) -> Path:
    return Path(out_dir) / "checkpoints" / f"step_{step:06d}.srtg"


def train_loop(pairs: list[ImagePair], trainer: Trainer, out_dir, steps: int | None = None) -> Path:
    """Run until ``trainer.step`` reaches ``steps`` (default ``cfg.steps``).

    Appends records to ``train_log.tsv`` (deterministic columns) and
    ``timing.tsv`` (wall-clock seconds), writes a checkpoint at the starting
    step if none exists, every ``checkpoint_every`` steps, and at the end.
    Returns the path of the final checkpoint.
    """
    if not pairs:
        raise PreconditionError("dataset is empty")
    cfg = trainer.cfg
    target = cfg.steps if steps is None else steps
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path, timing_path = out_dir / "train_log.tsv", out_dir / "timing.tsv"

    path = checkpoint_path(out_dir, trainer.step)
    if not path.exists():
        save_checkpoint(trainer.checkpoint(), path)
    try:
        log_file = _open_log(log_path, LOG_COLUMNS)
        timing_file = _open_log(timing_path, ("step", "wall_time"))
    except OSError as exc:
        raise OSError(f"{out_dir}: cannot open log files ({exc.strerror})") from exc
    with log_file, timing_file:
        while trainer.step < target:
            lr, hr = trainer.next_batch(pairs)
            record = trainer.train_step(lr, hr)
            if not record.is_finite():
                raise NonFiniteLossError(f"non-finite values at step {record.step}", record)
            if record.step % cfg.log_every == 0 or record.step == target:
                log_file.write(record.to_line() + "\n")
                timing_file.write(f"{record.step}\t{record.wall_time:.6f}\n")
                log_file.flush()
                timing_file.flush()
                log.info("step %d  d=%.4f  g_adv=%.4f  g_rec=%.5f", record.step, record.d_loss,
                         record.g_adv_loss, record.g_rec_loss)
            if record.step % cfg.checkpoint_every == 0 or record.step == target:
                path = checkpoint_path(out_dir, record.step)
                save_checkpoint(trainer.checkpoint(), path)
    return path


def _open_log(path: Path, columns):
    fresh = not path.exists() or path.stat().st_size == 0
    f = open(path, "a", encoding="utf-8", newline="\n")
    if fresh:
        f.write("\t".join(columns) + "\n")
    return f


def read_log(path) -> list[TrainLogRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split("\t")
    if tuple(header) != LOG_COLUMNS:
        raise ValueError(f"{path}: unexpected log header {header}")
    out = []
    for line in lines[1:]:
        parts = line.split("\t")
        out.append(TrainLogRecord(int(parts[0]), *(float(p) for p in parts[1:])))
    return out

